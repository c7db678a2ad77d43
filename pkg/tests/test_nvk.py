import numpy as np
import pytest

from qnpchain import chain_model as cm
from qnpchain import nvk, tasks
from qnpchain.chain_model import ChainSpec, QNPConfig, QSConfig, QSLabel

ALL_TASKS = ["I", "II", "III", "IV"]


def _coherent_chain(kerr=0.0, detuning=0.0, eta=1.0, gamma_h=1.0, coupling=0.5):
    """Unsqueezed zero-temperature source: no diffusion anywhere when linear."""
    return ChainSpec(qs=QSConfig(kappa=(0.5,)),
                     qnp=QNPConfig(detuning=(detuning,), kerr=kerr, gamma_h=gamma_h),
                     coupling=(coupling,), labels={"x": QSLabel(eta=(eta,))})


# -- expansion point -------------------------------------------------------

def test_linear_source_mean_is_exact(task1):
    for label in task1.labels:
        lin = cm.build_linear_system(task1, label)
        ep = nvk.solve_expansion_point(lin)
        assert np.allclose(ep.a, -np.linalg.solve(lin.L_a, lin.eta), atol=1e-13)


def test_task1_source_mean_modulus(task1):
    A = tasks.OPERATING_POINTS["I"]["amplitude"]
    for label in task1.labels:
        ep = nvk.solve_expansion_point(cm.build_linear_system(task1, label))
        assert abs(ep.a[0]) == pytest.approx(A, rel=1e-12)


def test_linear_processor_closed_form(task1_linear):
    lin = cm.build_linear_system(task1_linear, "1")
    ep = nvk.solve_expansion_point(lin)
    expected = np.linalg.solve(lin.L_b, lin.Gamma @ ep.a)
    assert np.allclose(ep.b, expected, atol=1e-13)
    assert ep.branch == "linear"


def test_single_kerr_amplitude_matches_cubic():
    spec = _coherent_chain(kerr=0.01, detuning=-0.5, eta=2.0)
    lin = cm.build_linear_system(spec, "x")
    ep = nvk.solve_expansion_point(lin)
    F = abs((lin.Gamma @ ep.a)[0])
    g, D, L = spec.gamma_total()[0], spec.qnp.detuning[0], spec.qnp.kerr
    roots = np.roots([L**2, 2 * D * L, D**2 + g**2 / 4, -F**2])
    n = [r.real for r in roots if abs(r.imag) < 1e-9 and r.real > 0]
    assert len(n) == 1
    assert abs(ep.b[0]) ** 2 == pytest.approx(n[0], rel=1e-10)
    assert ep.residual < 1e-12 and ep.stable


def test_bistable_region_returns_lower_branch():
    spec = _coherent_chain(kerr=0.05, detuning=-3.0, eta=7.0)
    lin = cm.build_linear_system(spec, "x")
    ep = nvk.solve_expansion_point(lin)
    assert "bistable-lower" in ep.branch
    F = abs((lin.Gamma @ ep.a)[0])
    g, D, L = spec.gamma_total()[0], spec.qnp.detuning[0], spec.qnp.kerr
    roots = sorted(r.real for r in np.roots([L**2, 2 * D * L, D**2 + g**2 / 4, -F**2])
                   if abs(r.imag) < 1e-9 and r.real > 0)
    assert len(roots) == 3
    assert abs(ep.b[0]) ** 2 == pytest.approx(roots[0], rel=1e-8)


# -- Lyapunov --------------------------------------------------------------

@pytest.mark.parametrize("task", ALL_TASKS)
def test_lyapunov_residual(task):
    spec = tasks.default_spec(task)
    for label in spec.labels:
        s = nvk.solve(spec, label)
        assert nvk.lyapunov_residual(s.drift(), s.C, s.diffusion()) < 1e-10


def test_no_diffusion_gives_zero_covariance():
    s = nvk.solve(_coherent_chain(), "x")
    assert np.allclose(s.C, 0)


def test_task1_source_covariance_closed_form(task1):
    s = nvk.solve(task1, "1")
    G = task1.labels["1"].squeeze[0]
    k = task1.kappa_total()[0]
    Ca = s.C_a
    assert abs(Ca[0, 0]) == pytest.approx(k * G / (k**2 - 4 * G**2), rel=1e-12)
    assert Ca[0, 1].real == pytest.approx(2 * G**2 / (k**2 - 4 * G**2), rel=1e-12)


def test_source_covariance_independent_of_processor(task1):
    s0 = nvk.solve(task1, "1")
    s1 = nvk.solve(task1.replace(**{"qnp.kerr": 2e-3, "qnp.detuning": (-0.3,)}), "1")
    assert np.allclose(s0.C_a, s1.C_a, atol=1e-14)


def test_singular_sylvester_operator_raises():
    J = np.diag([1j, -1j])
    with pytest.raises(nvk.NVKError, match="singular"):
        nvk.lyapunov(J, np.eye(2))


# -- mean shift ------------------------------------------------------------

def test_linear_processor_has_no_mean_shift(task1_linear):
    for label in task1_linear.labels:
        assert not np.any(nvk.solve(task1_linear, label).delta_b)


def test_zero_covariance_has_no_mean_shift():
    spec = _coherent_chain(kerr=0.01, detuning=-0.5, eta=2.0)
    lin = cm.build_linear_system(spec, "x")
    ep = nvk.solve_expansion_point(lin)
    n = lin.ordering.size
    assert np.allclose(nvk.mean_shift(lin, np.zeros((n, n)), ep), 0)


def test_nonlinear_mean_shift_differs_between_labels(task1):
    s1, s2 = nvk.solve(task1, "1"), nvk.solve(task1, "2")
    assert np.allclose(s1.expansion.b, s2.expansion.b, atol=1e-9)
    assert np.linalg.norm(s1.delta_b - s2.delta_b) > 1e-3


# -- measured statistics ---------------------------------------------------

def test_measured_mean_scaling(task1):
    s1, s2 = nvk.solve(task1, "1"), nvk.solve(task1, "2")
    d = lambda T: nvk.measured_mean(s1, T) - nvk.measured_mean(s2, T)
    assert np.allclose(nvk.measured_mean(s1, 0.0), 0)
    assert np.linalg.norm(d(1000.0)) == pytest.approx(np.sqrt(2) * np.linalg.norm(d(500.0)),
                                                      rel=1e-12)


def test_measured_mean_difference_formula(task1):
    # with identical expansion points the separation is carried by delta<b> alone
    T = 500.0
    s1, s2 = nvk.solve(task1, "1"), nvk.solve(task1, "2")
    lin = s1.linsys
    pre = np.sqrt(lin.gamma_h * T / 2)
    expected = pre * (cm.U_QUAD @ (s1.delta_b - s2.delta_b)).real
    got = nvk.measured_mean(s1, T) - nvk.measured_mean(s2, T)
    assert np.allclose(got, expected, atol=1e-8)


@pytest.mark.parametrize("mode", nvk.COVARIANCE_MODES)
def test_vacuum_only_without_diffusion(mode):
    s = nvk.solve(_coherent_chain(), "x")
    for n_cl in (0.0, 3.0):
        S = nvk.measured_covariance(s, 100.0, mode=mode, n_cl=n_cl)
        assert np.allclose(S, 0.5 * (n_cl + 1) * np.eye(2))


def test_short_filter_form(task1):
    s = nvk.solve(task1, "1")
    T = 0.01
    Mm = s.linsys.measurement_matrix()
    expected = 0.5 * np.eye(2) + (0.5 * T * Mm @ s.C @ Mm.T).real
    assert np.allclose(nvk.measured_covariance(s, T, mode="short"), expected)


@pytest.mark.parametrize("task", ALL_TASKS)
def test_long_filter_dual_route(task):
    spec = tasks.default_spec(task)
    for label in spec.labels:
        s = nvk.solve(spec, label)
        a = nvk.measured_covariance(s, 500.0, mode="long-leading", n_cl=2.0)
        b = nvk.long_filter_covariance_from_diffusion(s, n_cl=2.0)
        assert np.max(np.abs(a - b)) < 1e-10 * max(1.0, np.max(np.abs(a)))


def test_general_filter_limits(task1):
    s = nvk.solve(task1, "1")
    T = 1e5
    g = nvk.measured_covariance(s, T, mode="general")
    n = nvk.measured_covariance(s, T, mode="long-next")
    assert np.max(np.abs(g - n)) < 1e-8 * np.max(np.abs(n))
    t = 1e-4
    g0 = nvk.measured_covariance(s, t, mode="general") - 0.5 * np.eye(2)
    s0 = nvk.measured_covariance(s, t, mode="short") - 0.5 * np.eye(2)
    assert np.max(np.abs(g0 - s0)) < 1e-3 * np.max(np.abs(s0))


def test_unknown_covariance_mode(task1):
    with pytest.raises(ValueError):
        nvk.measured_covariance(nvk.solve(task1, "1"), 10.0, mode="bogus")


@pytest.mark.parametrize("task", ALL_TASKS)
def test_measured_covariance_floor(task):
    spec = tasks.default_spec(task)
    n_cl = 1.5
    for label in spec.labels:
        S = nvk.measured_covariance(nvk.solve(spec, label), 500.0, n_cl=n_cl)
        assert np.allclose(S, S.T)
        assert np.linalg.eigvalsh(S).min() >= 0.5 * n_cl - 1e-12


# -- susceptibility --------------------------------------------------------

def test_linear_resonant_susceptibility():
    lin = cm.build_linear_system(_coherent_chain(), "x")
    assert nvk.susceptibility(lin) == pytest.approx(2.0, rel=1e-12)


@pytest.mark.parametrize("kerr", [2e-3, 5e-3, 1e-2])
@pytest.mark.parametrize("detuning", [-1.0, -0.5, 0.3])
def test_susceptibility_closed_form(kerr, detuning):
    spec = _coherent_chain(kerr=kerr, detuning=detuning, eta=3.0)
    s = nvk.solve(spec, "x")
    g = spec.gamma_total()[0]
    nbar = kerr * abs(s.expansion.b[0]) ** 2 / 2
    closed = nvk.susceptibility_closed_form(g, detuning, nbar)
    assert nvk.susceptibility(s.linsys) == pytest.approx(closed, rel=1e-8)


def test_effective_drive_invariance():
    base = dict(detuning=(-0.67,), gamma_h=0.5)
    s0 = nvk.solve(tasks.task_spec("I", 10.0, kerr=5.5e-3, **base), "1")
    s1 = nvk.solve(tasks.task_spec("I", 5.0, kerr=4 * 5.5e-3, **base), "1")
    assert nvk.susceptibility(s0.linsys) == pytest.approx(nvk.susceptibility(s1.linsys), rel=1e-9)
    assert np.allclose(s0.linsys.J_b, s1.linsys.J_b, atol=1e-9)
    e0 = nvk.effective_drive(5.5e-3, 1.0, 10.0, 0.5)
    assert nvk.effective_drive(4 * 5.5e-3, 1.0, 5.0, 0.5) == pytest.approx(e0)
