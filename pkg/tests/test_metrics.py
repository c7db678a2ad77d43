import numpy as np
import pytest
from scipy.special import erf

from qnpchain import metrics, oracles
from qnpchain.metrics import MetricError
from qnpchain.readout import GaussianSummary


def _pair(mu1, mu2, S1, S2=None):
    S2 = S1 if S2 is None else S2
    return GaussianSummary(np.asarray(mu1, float), np.asarray(S1, float)), \
        GaussianSummary(np.asarray(mu2, float), np.asarray(S2, float))


# -- Fisher discriminant and accuracy -------------------------------------

def test_equal_means_give_zero_discriminant():
    s1, s2 = _pair([1.0, 2.0], [1.0, 2.0], np.eye(2))
    assert metrics.fisher_discriminant(s1, s2)[0] == 0.0


def test_isotropic_discriminant():
    s1, s2 = _pair([1.0, 2.0], [0.0, 0.0], 0.7 * np.eye(2))
    assert metrics.fisher_discriminant(s1, s2)[0] == pytest.approx(5.0 / 0.7)


def test_discriminant_invariant_under_linear_maps(rng):
    A = rng.normal(size=(3, 3))
    S1, S2 = A @ A.T + np.eye(3), np.diag([1.0, 2.0, 0.5])
    s1, s2 = _pair(rng.normal(size=3), rng.normal(size=3), S1, S2)
    L = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    t1 = GaussianSummary(L @ s1.mu, L @ s1.Sigma @ L.T)
    t2 = GaussianSummary(L @ s2.mu, L @ s2.Sigma @ L.T)
    D0 = metrics.fisher_discriminant(s1, s2)[0]
    assert metrics.fisher_discriminant(t1, t2)[0] == pytest.approx(D0, rel=1e-10)


def test_dimension_mismatch():
    a = GaussianSummary(np.zeros(2), np.eye(2))
    b = GaussianSummary(np.zeros(3), np.eye(3))
    with pytest.raises(MetricError):
        metrics.fisher_discriminant(a, b)


def test_near_singular_pooled_covariance_warns():
    s1, s2 = _pair([1.0, 0.0], [0.0, 0.0], np.diag([1.0, 1e-16]))
    with pytest.warns(RuntimeWarning):
        D, _ = metrics.fisher_discriminant(s1, s2)
    assert np.isfinite(D)


def test_gaussian_accuracy_examples():
    assert metrics.gaussian_accuracy(0.0) == 0.5
    assert metrics.gaussian_accuracy(1e6) == pytest.approx(1.0)
    assert metrics.gaussian_accuracy(2 * np.sqrt(2)) == pytest.approx(0.5 * (1 + erf(1.0)))
    assert metrics.gaussian_accuracy(2 * np.sqrt(2)) == pytest.approx(0.9214, abs=1e-4)


def test_accuracy_formulas_coincide_at_unit_discriminant():
    assert metrics.gaussian_accuracy(1.0) == pytest.approx(metrics.mahalanobis_accuracy(1.0))
    assert metrics.mahalanobis_accuracy(4.0) < metrics.gaussian_accuracy(4.0)


# -- empirical LDA ---------------------------------------------------------

def test_lda_separated_clusters(rng):
    X1 = rng.normal(size=(200, 2)) + [20, 0]
    X2 = rng.normal(size=(200, 2))
    acc, bnd = metrics.lda_classify((X1, X2), (X1, X2))
    assert acc == 1.0 and bnd.kind == "fisher"


def test_lda_identical_distributions_near_chance(rng):
    X = [rng.normal(size=(4000, 2)) for _ in range(4)]
    acc, _ = metrics.lda_classify((X[0], X[1]), (X[2], X[3]))
    n = 8000
    assert abs(acc - 0.5) < 3 * np.sqrt(0.25 / n) + 0.01


def test_lda_degenerate_training_set():
    X = np.ones((5, 2))
    with pytest.raises(MetricError):
        metrics.lda_fit(X, X)
    with pytest.raises(MetricError):
        metrics.lda_fit(X[:1], X)


def test_lda_accuracy_matches_bayes_rate(rng):
    # the Fisher rule on equal-covariance Gaussians attains Phi(sqrt(D_F)/2)
    S = np.array([[1.0, 0.4], [0.4, 0.6]])
    mu1, mu2 = np.array([0.6, 0.2]), np.zeros(2)
    n_train, n_test = 20_000, 20_000
    draw = lambda mu, n: rng.multivariate_normal(mu, S, size=n)
    acc, _ = metrics.lda_classify((draw(mu1, n_train), draw(mu2, n_train)),
                                  (draw(mu1, n_test), draw(mu2, n_test)))
    D = metrics.fisher_discriminant(*_pair(mu1, mu2, S))[0]
    p = metrics.mahalanobis_accuracy(D)
    assert abs(acc - p) < 3 * np.sqrt(p * (1 - p) / (2 * n_test)) + 2e-3


def test_bisector_boundary():
    X1 = np.array([[2.0, 0.0], [2.0, 1.0], [2.0, -1.0]])
    X2 = -X1
    bnd = metrics.lda_fit(X1, X2, bisector=True)
    assert bnd.b == pytest.approx(0.0) and bnd.kind == "bisector"
    assert np.allclose(bnd.w, [4.0, 0.0])


# -- projected noise -------------------------------------------------------

def test_projection_along_minimum_noise_direction():
    S = np.diag([0.2, 3.0])
    g = metrics.projection_geometry(*_pair([0.5, 0.0], [0.0, 0.0], S))
    assert g.sigma2_dmu == pytest.approx((0.2, 0.2))
    assert g.sigma2_min == pytest.approx((0.2, 0.2))
    assert abs(abs(g.v_par @ g.v_min[0]) - 1) < 1e-12
    assert g.norm_dmu == pytest.approx(0.5)


def test_projection_bounds_and_rotation():
    th = 0.6
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    S = R @ np.diag([0.3, 2.0]) @ R.T
    g = metrics.projection_geometry(*_pair([1.0, 0.0], [0.0, 0.0], S))
    expected = np.cos(th) ** 2 * 0.3 + np.sin(th) ** 2 * 2.0
    assert g.sigma2_dmu[0] == pytest.approx(expected)
    assert g.sigma2_min[0] <= g.sigma2_dmu[0] <= g.sigma2_max[0]
    assert abs(g.v_par @ g.v_perp) < 1e-12
    P, Rp = metrics.project_features(np.array([[1.0, 2.0]]), g)
    assert P[0] == pytest.approx(1.0) and abs(Rp[0]) == pytest.approx(2.0)


def test_projection_requires_separation():
    with pytest.raises(MetricError):
        metrics.projection_geometry(*_pair([0.0, 0.0], [0.0, 0.0], np.eye(2)))


def test_report_fields():
    r = metrics.discrimination_report(*_pair([1.0, 0.0], [0.0, 0.0], np.eye(2)))
    assert r.D_F == pytest.approx(1.0)
    assert 0.5 <= r.C_max <= 1.0
    flat = r.to_flat()
    assert flat["sigma2_dmu_l"] == pytest.approx(1.0)
    assert "C_mahalanobis" in flat


def test_to_quadrature_vacuum_and_coherent():
    mu, S = metrics.to_quadrature(np.array([1 + 2j, 1 - 2j]), np.zeros((2, 2)))
    assert np.allclose(mu, np.sqrt(2) * np.array([1, 2]))
    assert np.allclose(S, 0.5 * np.eye(2))


# -- log negativity --------------------------------------------------------

def _tmsv(r):
    c, s = np.cosh(2 * r), np.sinh(2 * r)
    Z = np.diag([1.0, -1.0])
    return 0.5 * np.block([[c * np.eye(2), s * Z], [s * Z, c * np.eye(2)]])


def _brute_log_negativity(S):
    # partial transpose flips the second momentum
    F = np.diag([1.0, 1.0, 1.0, -1.0])
    nu = metrics.symplectic_eigenvalues(F @ S @ F)
    return float(np.sum(np.maximum(0.0, -np.log(2 * nu))))


def test_vacuum_and_product_states_unentangled():
    assert metrics.log_negativity(0.5 * np.eye(4)) == 0.0
    S = np.zeros((4, 4))
    S[:2, :2] = 0.5 * np.diag([0.2, 5.0])
    S[2:, 2:] = 0.5 * np.diag([3.0, 1 / 3.0])
    assert metrics.log_negativity(S) == 0.0


@pytest.mark.parametrize("r", [0.1, 0.4, 1.0])
def test_two_mode_squeezed_vacuum(r):
    S = _tmsv(r)
    assert metrics.log_negativity(S) == pytest.approx(2 * r, rel=1e-10)
    assert metrics.log_negativity(S) == pytest.approx(_brute_log_negativity(S), rel=1e-10)


def test_log_negativity_with_thermal_noise_matches_brute_force():
    S = _tmsv(0.5) + 0.2 * np.eye(4)
    assert metrics.log_negativity(S) == pytest.approx(_brute_log_negativity(S), rel=1e-10)
    S = _tmsv(0.1) + 0.3 * np.eye(4)
    assert metrics.log_negativity(S) == 0.0 == _brute_log_negativity(S)


def test_log_negativity_local_rotation_invariance():
    S = _tmsv(0.6) + 0.05 * np.eye(4)
    R = lambda t: np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    O = np.block([[R(0.3), np.zeros((2, 2))], [np.zeros((2, 2)), R(-1.1)]])
    assert metrics.log_negativity(O @ S @ O.T) == pytest.approx(metrics.log_negativity(S))


def test_log_negativity_shape_check():
    with pytest.raises(MetricError):
        metrics.log_negativity(np.eye(2))


# -- Chernoff exponent vs density matrices --------------------------------

def _fock_gaussian_moments(rho):
    N = rho.shape[0]
    a = oracles.destroy(N).toarray()
    x = (a + a.conj().T) / np.sqrt(2)
    p = (a - a.conj().T) / (1j * np.sqrt(2))
    ops = (x, p)
    mu = np.array([np.trace(o @ rho).real for o in ops])
    S = np.array([[np.trace(0.5 * (o1 @ o2 + o2 @ o1) @ rho).real for o2 in ops] for o1 in ops])
    return mu, S - np.outer(mu, mu)


@pytest.mark.parametrize("sa,sb", [
    (dict(alpha=0.6 + 0.2j), dict(alpha=-0.3 + 0.5j)),
    (dict(n_th=0.1), dict(n_th=0.8)),
    (dict(r=0.3), dict(r=0.3, theta=np.pi / 2)),
    (dict(alpha=0.4, n_th=0.2, r=0.2), dict(n_th=0.3)),
])
def test_gaussian_qcb_matches_fock(sa, sb):
    N = 40
    ra, rb = oracles.gaussian_fock_state(N, **sa), oracles.gaussian_fock_state(N, **sb)
    mu_a, S_a = _fock_gaussian_moments(ra)
    mu_b, S_b = _fock_gaussian_moments(rb)
    z = metrics.qcb(mu_a, S_a, mu_b, S_b)
    zf = oracles.fock_qcb(ra, rb)
    assert z >= 0
    assert z == pytest.approx(zf, abs=1e-4)


def test_qcb_identical_states_vanish():
    S = np.array([[0.7, 0.1], [0.1, 0.6]])
    assert metrics.qcb(np.zeros(2), S, np.zeros(2), S) == pytest.approx(0.0, abs=1e-10)


def test_qcb_rejects_unphysical_covariance():
    with pytest.raises(MetricError, match="non-physical"):
        metrics.qcb(np.zeros(2), 0.2 * np.eye(2), np.zeros(2), 0.5 * np.eye(2))
