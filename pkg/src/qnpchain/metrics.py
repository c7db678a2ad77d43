"""Binary discrimination and correlation metrics on Gaussian summaries.

Conventions: features and quadratures are real; covariances are vacuum
inclusive with vacuum variance ``1/2`` per quadrature.  The single conversion
from normal-ordered complex cumulants is :func:`to_quadrature`.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import erf

from .chain_model import quadrature_block
from .readout import GaussianSummary

__all__ = [
    "MetricError", "to_quadrature", "fisher_discriminant", "gaussian_accuracy",
    "mahalanobis_accuracy", "LinearBoundary", "lda_fit", "lda_classify",
    "ProjectionGeometry", "projection_geometry", "project_features",
    "log_negativity", "symplectic_eigenvalues", "qcb", "DiscriminationReport",
    "discrimination_report", "symplectic_form",
]

SIGMA_VAC = 0.5


class MetricError(ValueError):
    pass


def to_quadrature(m: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature mean ``U m`` and covariance ``1/2 I + U C U^T``.

    ``m``/``C`` are normal-ordered first and second order cumulants of some
    set of modes in conjugate-pair ordering.
    """
    U = quadrature_block(m.size // 2)
    mu = (U @ m).real
    S = SIGMA_VAC * np.eye(m.size) + (U @ C @ U.T).real
    return mu, 0.5 * (S + S.T)


# ---------------------------------------------------------------------------
# Fisher discriminant and accuracies

def _pooled(s1: GaussianSummary, s2: GaussianSummary):
    if s1.mu.shape != s2.mu.shape or s1.Sigma.shape != s2.Sigma.shape:
        raise MetricError(f"dimension mismatch: {s1.mu.shape} vs {s2.mu.shape}")
    return s1.mu - s2.mu, 0.5 * (s1.Sigma + s2.Sigma)


def fisher_discriminant(s1: GaussianSummary, s2: GaussianSummary) -> tuple[float, np.ndarray]:
    """``D_F = dmu^T V^{-1} dmu`` with the pooled covariance ``V``.

    Near-singular ``V`` is regularized by ``1e-12 tr(V)/dim`` and flagged
    with a :class:`RuntimeWarning`.
    """
    dmu, V = _pooled(s1, s2)
    if dmu.size == 0:
        return 0.0, V
    if np.linalg.cond(V) > 1e12:
        warnings.warn("pooled covariance near singular; regularizing", RuntimeWarning, stacklevel=2)
        V = V + 1e-12 * np.trace(V) / V.shape[0] * np.eye(V.shape[0])
    D = float(dmu @ np.linalg.solve(V, dmu))
    return max(D, 0.0), V


def gaussian_accuracy(D_F: float) -> float:
    """Accuracy ``1/2 (1 + erf(D_F / (2 sqrt 2)))`` attached to ``D_F``."""
    return float(0.5 * (1.0 + erf(np.asarray(D_F) / (2.0 * np.sqrt(2.0)))))


def mahalanobis_accuracy(D_F: float) -> float:
    """Bayes accuracy of the Fisher rule for equal-covariance Gaussians.

    ``Phi(sqrt(D_F)/2)``: the midpoint threshold sits ``sqrt(D_F)/2`` pooled
    standard deviations from each projected mean.
    """
    return float(0.5 * (1.0 + erf(np.sqrt(max(D_F, 0.0)) / (2.0 * np.sqrt(2.0)))))


@dataclass(frozen=True)
class LinearBoundary:
    """Decision rule: label A if ``w . y > b``."""

    w: np.ndarray
    b: float
    kind: str


def lda_fit(X1: np.ndarray, X2: np.ndarray, bisector: bool = False) -> LinearBoundary:
    """Fisher LDA (or the naive mean bisector) from two training sets."""
    X1, X2 = np.atleast_2d(X1), np.atleast_2d(X2)
    if len(X1) < 2 or len(X2) < 2:
        raise MetricError("each class needs at least two training samples")
    m1, m2 = X1.mean(0), X2.mean(0)
    dmu = m1 - m2
    if not np.any(dmu) and not bisector:
        raise MetricError("degenerate training set: identical class means")
    if bisector:
        w = dmu
    else:
        V = 0.5 * (np.cov(X1, rowvar=False) + np.cov(X2, rowvar=False))
        V = np.atleast_2d(V)
        try:
            w = np.linalg.solve(V, dmu)
        except np.linalg.LinAlgError as exc:
            raise MetricError("degenerate training set: singular covariance") from exc
    b = float(w @ (0.5 * (m1 + m2)))
    return LinearBoundary(w=w, b=b, kind="bisector" if bisector else "fisher")


def lda_classify(train: tuple[np.ndarray, np.ndarray], test: tuple[np.ndarray, np.ndarray],
                 bisector: bool = False) -> tuple[float, LinearBoundary]:
    """Empirical accuracy of the linear rule trained on ``train``."""
    bnd = lda_fit(*train, bisector=bisector)
    T1, T2 = (np.atleast_2d(t) for t in test)
    correct = np.sum(T1 @ bnd.w > bnd.b) + np.sum(T2 @ bnd.w <= bnd.b)
    return float(correct / (len(T1) + len(T2))), bnd


# ---------------------------------------------------------------------------
# projected noise

@dataclass(frozen=True)
class ProjectionGeometry:
    v_par: np.ndarray
    v_perp: np.ndarray
    sigma2_dmu: tuple[float, float]
    sigma2_min: tuple[float, float]
    sigma2_max: tuple[float, float]
    v_min: tuple[np.ndarray, np.ndarray]
    v_max: tuple[np.ndarray, np.ndarray]
    norm_dmu: float


def projection_geometry(s1: GaussianSummary, s2: GaussianSummary) -> ProjectionGeometry:
    """Noise projected on ``v_par = dmu/|dmu|`` and extreme eigenpairs per label."""
    dmu, V = _pooled(s1, s2)
    nrm = float(np.linalg.norm(dmu))
    if nrm == 0:
        raise MetricError("mean separation vanishes; projection direction undefined")
    v = dmu / nrm
    # orthogonal direction carrying the most pooled variance
    P = np.eye(v.size) - np.outer(v, v)
    if v.size > 1:
        w, U = np.linalg.eigh(P @ V @ P)
        v_perp = U[:, -1]
    else:
        v_perp = np.zeros_like(v)
    s_dmu, s_min, s_max, v_min, v_max = [], [], [], [], []
    for s in (s1, s2):
        w, U = np.linalg.eigh(s.Sigma)
        s_dmu.append(float(v @ s.Sigma @ v))
        s_min.append(float(w[0]))
        s_max.append(float(w[-1]))
        v_min.append(U[:, 0])
        v_max.append(U[:, -1])
    return ProjectionGeometry(v, v_perp, tuple(s_dmu), tuple(s_min), tuple(s_max),
                              tuple(v_min), tuple(v_max), nrm)


def project_features(Y: np.ndarray, geom: ProjectionGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Coordinates ``(P_dmu, R_perp)`` of feature rows."""
    Y = np.atleast_2d(Y)
    return Y @ geom.v_par, Y @ geom.v_perp


# ---------------------------------------------------------------------------
# entanglement

def symplectic_form(n: int) -> np.ndarray:
    return np.kron(np.eye(n), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def symplectic_eigenvalues(S: np.ndarray) -> np.ndarray:
    """Symplectic spectrum of a ``2n x 2n`` covariance (ordering x1,p1,...)."""
    n = S.shape[0] // 2
    ev = np.linalg.eigvals(1j * symplectic_form(n) @ S)
    return np.sort(np.abs(ev.real))[::2]


def log_negativity(S: np.ndarray) -> float:
    """Two-mode logarithmic negativity ``max(0, -ln 2 nu_-)``.

    Uses ``d = det S11 + det S22 - 2 det S12`` and
    ``nu_-^2 = (d - sqrt(d^2 - 4 det S)) / 2``.
    """
    S = np.asarray(S, float)
    if S.shape != (4, 4):
        raise MetricError("log_negativity expects a 4x4 two-mode covariance")
    A, B, Cx = S[:2, :2], S[2:, 2:], S[:2, 2:]
    d = np.linalg.det(A) + np.linalg.det(B) - 2 * np.linalg.det(Cx)
    det = np.linalg.det(S)
    disc = d * d - 4 * det
    if disc < -1e-12 * max(1.0, d * d):
        raise MetricError(f"invalid covariance: d^2 - 4 det = {disc:.3e} < 0")
    nu2 = 0.5 * (d - np.sqrt(max(disc, 0.0)))
    if nu2 <= 0:
        raise MetricError("invalid covariance: non-positive partially transposed eigenvalue")
    return float(max(0.0, -np.log(2.0 * np.sqrt(nu2))))


# ---------------------------------------------------------------------------
# Chernoff exponent

def _lambda_s(x, s):
    x = np.maximum(x, 1.0)
    p, m = (x + 1.0) ** s, (x - 1.0) ** s
    return (p + m) / (p - m)


def _g_s(x, s):
    x = np.maximum(x, 1.0)
    return 2.0 ** s / ((x + 1.0) ** s - (x - 1.0) ** s)


def _power_cov(S, s, iOm):
    """``V_s``: symplectic spectrum of ``S`` mapped through ``Lambda_s``."""
    lam, W = np.linalg.eig(2.0 * S @ iOm)
    g = np.sign(lam.real) * _lambda_s(np.abs(lam.real), s)
    Vs = 0.5 * ((W * g) @ np.linalg.inv(W)) @ iOm
    return (0.5 * (Vs + Vs.T)).real


def _check_physical(S, tol=1e-9):
    nu = symplectic_eigenvalues(S)
    if np.min(nu) < 0.5 - tol:
        raise MetricError(f"non-physical covariance: symplectic eigenvalue {np.min(nu):.6f} < 1/2")
    return nu


def qcb(mu_a: np.ndarray, S_a: np.ndarray, mu_b: np.ndarray, S_b: np.ndarray,
        full_output: bool = False):
    """Quantum Chernoff exponent ``-min_s log tr(rho_a^s rho_b^{1-s})`` for Gaussians.

    Parameters
    ----------
    mu_a, S_a, mu_b, S_b
        Quadrature means and vacuum-inclusive covariances (vacuum = 1/2).

    Returns
    -------
    zeta, or ``(zeta, s_opt)`` with ``full_output``.
    """
    S_a, S_b = np.asarray(S_a, float), np.asarray(S_b, float)
    n = S_a.shape[0] // 2
    nu_a = 2.0 * _check_physical(S_a)
    nu_b = 2.0 * _check_physical(S_b)
    d = np.asarray(mu_a, float) - np.asarray(mu_b, float)
    iOm = 1j * symplectic_form(n)

    def logq(s):
        Va = _power_cov(S_a, s, iOm)
        Vb = _power_cov(S_b, 1.0 - s, iOm)
        Msum = Va + Vb
        sign, logdet = np.linalg.slogdet(Msum)
        val = (np.sum(np.log(_g_s(nu_a, s))) + np.sum(np.log(_g_s(nu_b, 1.0 - s)))
               - 0.5 * logdet - 0.5 * d @ np.linalg.solve(Msum, d))
        return float(val)

    eps = 1e-9
    res = minimize_scalar(logq, bounds=(eps, 1 - eps), method="bounded",
                          options={"xatol": 1e-8})
    zeta = max(-float(res.fun), 0.0)
    return (zeta, float(res.x)) if full_output else zeta


# ---------------------------------------------------------------------------
# report

@dataclass
class DiscriminationReport:
    dmu: np.ndarray
    V: np.ndarray
    D_F: float
    C_max: float
    C_mahalanobis: float
    geometry: ProjectionGeometry | None
    accuracy: float | None = None
    boundary: LinearBoundary | None = None
    extra: dict = field(default_factory=dict)

    def to_flat(self) -> dict:
        """Flat key/value view for CLI summaries."""
        out = {"norm_dmu": float(np.linalg.norm(self.dmu)), "D_F": self.D_F,
               "C_max": self.C_max, "C_mahalanobis": self.C_mahalanobis}
        for i, x in enumerate(self.dmu):
            out[f"dmu_{i}"] = float(x)
        if self.geometry is not None:
            g = self.geometry
            for k, lab in enumerate(("l", "p")):
                out[f"sigma2_dmu_{lab}"] = g.sigma2_dmu[k]
                out[f"sigma2_min_{lab}"] = g.sigma2_min[k]
                out[f"sigma2_max_{lab}"] = g.sigma2_max[k]
            for i, x in enumerate(g.v_par):
                out[f"v_par_{i}"] = float(x)
        if self.accuracy is not None:
            out["accuracy"] = self.accuracy
        if self.boundary is not None:
            out["boundary_b"] = self.boundary.b
            for i, x in enumerate(self.boundary.w):
                out[f"boundary_w_{i}"] = float(x)
        out.update(self.extra)
        return out


def discrimination_report(s1: GaussianSummary, s2: GaussianSummary,
                          accuracy: float | None = None,
                          boundary: LinearBoundary | None = None) -> DiscriminationReport:
    D, V = fisher_discriminant(s1, s2)
    dmu = s1.mu - s2.mu
    geom = projection_geometry(s1, s2) if np.linalg.norm(dmu) > 0 else None
    return DiscriminationReport(dmu=dmu, V=V, D_F=D, C_max=gaussian_accuracy(D),
                                C_mahalanobis=mahalanobis_accuracy(D), geometry=geom,
                                accuracy=accuracy, boundary=boundary)
