"""Exact reference solutions: complex-P, Fock-space master equation, brute-force Chernoff."""

import numpy as np
import pytest

from qnpchain import nvk, oracles
from qnpchain.oracles import KerrParams, OracleError

from conftest import weakly_squeezed_linear_chain


def _classical_kerr_mean(p: KerrParams) -> complex:
    """Fixed point of db/dt = (i D - g/2) b + i L |b|^2 b - i eta e^{-i phi}."""
    # |b|^2 ((D + L n)^2 + g^2/4) = eta^2 is a cubic in n
    D, L, g, eta = p.delta, p.kerr, p.gamma, p.eta
    coeffs = [L**2, 2 * D * L, D**2 + g**2 / 4, -eta**2]
    ns = [r.real for r in np.roots(coeffs) if abs(r.imag) < 1e-9 and r.real > 0]
    assert len(ns) == 1, "expected a monostable point"
    n = ns[0]
    return 1j * eta * np.exp(-1j * p.phase) / (1j * D - g / 2 + 1j * L * n)


def _fock_moment(rho, j, i):
    N = rho.shape[0]
    b = oracles.destroy(N).toarray()
    op = np.linalg.matrix_power(b.conj().T, j) @ np.linalg.matrix_power(b, i)
    return np.trace(op @ rho)


# -- complex-P -------------------------------------------------------------

def test_kerr_params_invariants():
    with pytest.raises(ValueError):
        KerrParams(delta=-1, kerr=0.0, gamma=1, eta=1)
    with pytest.raises(ValueError):
        KerrParams(delta=-1, kerr=0.01, gamma=0.0, eta=1)
    p = KerrParams(delta=-1.0, kerr=0.01, gamma=1.0, eta=1.0)
    assert p.c == pytest.approx((1j + 0.5) / (-0.01j))


def test_complexp_normalization():
    p = KerrParams.from_effective_drive(0.385, -1.0, 0.005)
    assert oracles.complexp_moment(p, 0, 0) == 1.0


def test_complexp_mean_close_to_classical_root_at_weak_kerr():
    p = KerrParams.from_effective_drive(0.385, -1.0, 0.005)
    b = oracles.complexp_moment(p, 0, 1)
    bc = _classical_kerr_mean(p)
    assert abs(abs(b) - abs(bc)) / abs(bc) < 0.02


def test_complexp_drive_phase_rotation():
    p0 = KerrParams.from_effective_drive(0.385, -1.0, 0.02)
    theta = 0.9
    p1 = KerrParams.from_effective_drive(0.385, -1.0, 0.02, phase=theta)
    for j, i in [(0, 1), (1, 1), (0, 2), (1, 3), (2, 0)]:
        expected = oracles.complexp_moment(p0, j, i) * np.exp(-1j * theta * (i - j))
        assert oracles.complexp_moment(p1, j, i) == pytest.approx(expected, rel=1e-12)


def test_complexp_hermiticity_of_moments():
    p = KerrParams.from_effective_drive(0.385, -0.5, 0.03, phase=0.3)
    for j, i in [(0, 1), (1, 2), (0, 2)]:
        a = oracles.complexp_moment(p, j, i)
        b = oracles.complexp_moment(p, i, j)
        assert a == pytest.approx(np.conj(b), rel=1e-12)


def test_complexp_rejects_negative_order():
    p = KerrParams.from_effective_drive(0.385, -1.0, 0.02)
    with pytest.raises(ValueError):
        oracles.complexp_moment(p, -1, 0)


def test_complexp_series_cap_reports_partial_sum():
    with pytest.raises(OracleError, match="partial sum"):
        oracles._hyp0f2_log(1.0 + 0j, 1.0 + 0j, 1e12, cap=10)


# -- Fock single mode ------------------------------------------------------

@pytest.mark.parametrize("kerr,delta", [(0.05, -1.0), (0.1, 0.5)])
def test_fock_kerr_matches_complexp(kerr, delta):
    p = KerrParams.from_effective_drive(0.385, delta, kerr, phase=0.4)
    rho = oracles.fock_kerr_steady_state(p, 40)
    for j, i in [(0, 1), (1, 1), (0, 2), (1, 2), (2, 2)]:
        assert _fock_moment(rho, j, i) == pytest.approx(oracles.complexp_moment(p, j, i),
                                                        abs=1e-6, rel=1e-6)


def test_fock_state_is_physical():
    p = KerrParams.from_effective_drive(0.385, -1.0, 0.05)
    rho = oracles.fock_kerr_steady_state(p, 30)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.eigvalsh(rho).min() >= -1e-10
    assert np.allclose(rho, rho.conj().T)


def test_fock_kerr_cutoff_violation_raises():
    p = KerrParams.from_effective_drive(0.385, -1.0, 0.005)
    with pytest.raises(OracleError, match="cutoff"):
        oracles.fock_kerr_steady_state(p, 8)


# -- Fock chain ------------------------------------------------------------

def test_fock_chain_linear_closure():
    spec = weakly_squeezed_linear_chain(0.05)
    s = nvk.solve(spec, "7")
    r = oracles.fock_me_steady_state(spec, "7", cutoffs=(10, 6))
    assert max(r.tail.values()) < 1e-6
    means = np.concatenate([s.expansion.a, s.expansion.b])
    assert np.max(np.abs(r.means - means)) < 1e-8
    assert np.max(np.abs(r.C - s.C)) < 1e-8


def test_fock_chain_coherent_limit_is_exact():
    # no squeezing, zero temperature: displaced vacuum at any cutoff
    spec = weakly_squeezed_linear_chain(0.0)
    s = nvk.solve(spec, "7")
    r = oracles.fock_me_steady_state(spec, "7", cutoffs=(4, 4))
    assert np.max(np.abs(r.C)) < 1e-12
    assert np.max(np.abs(r.means - np.concatenate([s.expansion.a, s.expansion.b]))) < 1e-12


def test_fock_chain_frames_agree():
    spec = weakly_squeezed_linear_chain(0.05)
    r0 = oracles.fock_me_steady_state(spec, "7", cutoffs=(10, 8), displace=False)
    r1 = oracles.fock_me_steady_state(spec, "7", cutoffs=(10, 6), displace=True)
    assert np.max(np.abs(r0.means - r1.means)) < 1e-8
    assert np.max(np.abs(r0.C - r1.C)) < 1e-8


def test_fock_chain_state_is_physical():
    spec = weakly_squeezed_linear_chain(0.05)
    r = oracles.fock_me_steady_state(spec, "7", cutoffs=(8, 6))
    assert np.trace(r.rho).real == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.eigvalsh(r.rho).min() >= -1e-10


def test_fock_chain_tail_guard():
    spec = weakly_squeezed_linear_chain(0.3)
    with pytest.raises(OracleError, match="cutoff"):
        oracles.fock_me_steady_state(spec, "7", cutoffs=(4, 4))


def test_fock_chain_rejects_large_chains(task2):
    with pytest.raises(OracleError, match="at most one"):
        oracles.fock_me_steady_state(task2, "3", cutoffs=(4, 4))


# -- brute-force Chernoff exponent -----------------------------------------

def test_fock_qcb_identical_states():
    rho = oracles.gaussian_fock_state(20, alpha=0.7, n_th=0.3)
    assert oracles.fock_qcb(rho, rho) == pytest.approx(0.0, abs=1e-10)


def test_fock_qcb_orthogonal_states_flagged():
    a = np.zeros((6, 6), complex)
    b = np.zeros((6, 6), complex)
    a[0, 0] = 1.0
    b[1, 1] = 1.0
    zeta, _, capped = oracles.fock_qcb(a, b, full_output=True)
    assert capped
    assert np.isfinite(zeta) and zeta > 100


def test_fock_qcb_coherent_pair():
    alpha, beta = 0.6 + 0.2j, -0.3 + 0.5j
    ra = oracles.gaussian_fock_state(40, alpha=alpha)
    rb = oracles.gaussian_fock_state(40, alpha=beta)
    d = np.sqrt(2.0) * np.array([(alpha - beta).real, (alpha - beta).imag])
    zeta = oracles.fock_qcb(ra, rb)
    assert zeta == pytest.approx(d @ d / 2, abs=1e-8)


def test_fock_qcb_rejects_non_hermitian():
    a = np.eye(3, dtype=complex) / 3
    b = a.copy()
    b[0, 1] = 0.1
    with pytest.raises(OracleError, match="Hermitian"):
        oracles.fock_qcb(a, b)


def test_fock_qcb_rejects_negative():
    a = np.diag([1.2, -0.2, 0.0]).astype(complex)
    with pytest.raises(OracleError, match="positive"):
        oracles.fock_qcb(a, a)
