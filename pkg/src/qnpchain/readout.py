"""From heterodyne records to features: boxcar filtering, classical readout
noise, Gaussian summaries and quadratic post-processing."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

__all__ = [
    "ReadoutError", "GaussianSummary", "FeatureSet", "feature_names",
    "boxcar_filter", "filter_records", "add_classical_noise", "empirical_summary",
    "nonlinear_features", "nonlinear_feature_names", "gaussian_nonlinear_summary",
    "write_features_csv", "SIGMA_VAC",
]

SIGMA_VAC = 0.5
KINDS = ("local-squares", "cross-products", "quadratic")


class ReadoutError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianSummary:
    """Mean and covariance of a feature vector (sampled or analytic)."""

    mu: np.ndarray
    Sigma: np.ndarray
    n_samples: int = 0
    analytic: bool = False

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, float))
        S = np.atleast_2d(np.asarray(self.Sigma, float))
        if S.shape != (mu.size, mu.size):
            raise ReadoutError(f"covariance shape {S.shape} does not match mean length {mu.size}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Sigma", 0.5 * (S + S.T))


@dataclass
class FeatureSet:
    label: str
    values: np.ndarray
    names: tuple[str, ...]
    filter_T: float
    t0: float


def feature_names(n_modes: int) -> tuple[str, ...]:
    return tuple(f"{q}{k + 1}" for k in range(n_modes) for q in ("I", "Q"))


def filter_records(increments: np.ndarray, dt: float, T: float, t0: float) -> np.ndarray:
    """Boxcar filter ``(1/sqrt(2T)) sum dY`` over ``[t0, t0 + T)``.

    ``increments`` has one row per time bin of width ``dt``.
    """
    inc = np.atleast_2d(increments)
    i0 = int(round(t0 / dt))
    n = int(round(T / dt))
    if n <= 0 or i0 < 0 or i0 + n > inc.shape[0]:
        raise ReadoutError(f"window [{t0}, {t0 + T}) outside record span {inc.shape[0] * dt}")
    return inc[i0:i0 + n].sum(axis=0) / np.sqrt(2.0 * n * dt)


def boxcar_filter(trajectory, T: float, t0: float) -> np.ndarray:
    """Filtered features of a stored trajectory (records binned by ``record_stride``)."""
    rec = trajectory.records
    if rec.size == 0:
        raise ReadoutError("trajectory carries no stored records (record_stride = 0)")
    bin_dt = trajectory.dt * trajectory.record_stride
    return filter_records(rec, bin_dt, T, t0)


def add_classical_noise(features: np.ndarray, n_cl: float, rng: np.random.Generator) -> np.ndarray:
    """Add independent ``N(0, n_cl/2)`` readout noise to every feature."""
    if n_cl < 0:
        raise ReadoutError("n_cl must be non-negative")
    X = np.asarray(features, float)
    if n_cl == 0:
        return X.copy()
    return X + rng.normal(0.0, np.sqrt(n_cl * SIGMA_VAC), size=X.shape)


def empirical_summary(X: np.ndarray) -> GaussianSummary:
    X = np.atleast_2d(np.asarray(X, float))
    if X.shape[0] < 2:
        raise ReadoutError("need at least two samples for a covariance")
    return GaussianSummary(X.mean(axis=0), np.atleast_2d(np.cov(X, rowvar=False)), X.shape[0])


# ---------------------------------------------------------------------------
# quadratic features

def _monomials(d: int, kind: str) -> tuple[list[int], list[tuple[int, int]]]:
    """Linear indices and product index pairs defining a feature kind."""
    K = d // 2
    if kind == "local-squares":
        return [], [(i, i) for i in range(d)]
    if kind == "cross-products":
        if K < 2:
            raise ReadoutError("cross-products need at least two monitored modes")
        pairs = []
        for k, l in combinations(range(K), 2):
            pairs += [(2 * k, 2 * l), (2 * k + 1, 2 * l + 1)]
        return [], pairs
    if kind == "quadratic":
        lin, pairs = [], []
        for k in range(K):
            i, q = 2 * k, 2 * k + 1
            lin += [i, q]
            pairs += [(i, i), (q, q), (i, q)]
        return lin, pairs
    raise ReadoutError(f"unknown feature kind {kind!r}; choose from {KINDS}")


def nonlinear_feature_names(n_modes: int, kind: str) -> tuple[str, ...]:
    base = feature_names(n_modes)
    lin, pairs = _monomials(2 * n_modes, kind)
    return tuple(base[i] for i in lin) + tuple(
        f"{base[i]}^2" if i == j else f"{base[i]}*{base[j]}" for i, j in pairs)


def nonlinear_features(X: np.ndarray, kind: str, S: int, center=None) -> np.ndarray:
    """Averages over groups of ``S`` shots of quadratic monomials.

    ``center`` (a feature-space point, typically the common mean of both
    labels) is subtracted before forming products; linear entries are kept
    uncentered.
    """
    if S <= 0:
        raise ReadoutError("group size S must be positive")
    X = np.atleast_2d(np.asarray(X, float))
    if X.shape[0] % S:
        raise ReadoutError(f"S = {S} does not divide the sample count {X.shape[0]}")
    lin, pairs = _monomials(X.shape[1], kind)
    Y = X - (0.0 if center is None else np.asarray(center, float))
    cols = [X[:, i] for i in lin] + [Y[:, i] * Y[:, j] for i, j in pairs]
    F = np.column_stack(cols)
    return F.reshape(-1, S, F.shape[1]).mean(axis=1)


def gaussian_nonlinear_summary(s: GaussianSummary, kind: str, S: int = 1,
                               center=None) -> GaussianSummary:
    """Exact mean/covariance of :func:`nonlinear_features` for Gaussian input."""
    mu, Sig = s.mu, s.Sigma
    m = mu - (0.0 if center is None else np.asarray(center, float))
    lin, pairs = _monomials(mu.size, kind)
    mean = [mu[i] for i in lin] + [Sig[i, j] + m[i] * m[j] for i, j in pairs]
    items = [("l", i) for i in lin] + [("q", p) for p in pairs]
    n = len(items)
    cov = np.empty((n, n))
    for a, (ta, xa) in enumerate(items):
        for b, (tb, xb) in enumerate(items):
            if ta == "l" and tb == "l":
                v = Sig[xa, xb]
            elif ta == "l" or tb == "l":
                i = xa if ta == "l" else xb
                k, l = xb if ta == "l" else xa
                v = m[k] * Sig[i, l] + m[l] * Sig[i, k]
            else:
                i, j = xa
                k, l = xb
                v = (Sig[i, k] * Sig[j, l] + Sig[i, l] * Sig[j, k]
                     + m[i] * m[k] * Sig[j, l] + m[i] * m[l] * Sig[j, k]
                     + m[j] * m[k] * Sig[i, l] + m[j] * m[l] * Sig[i, k])
            cov[a, b] = v
    return GaussianSummary(np.array(mean), cov / S, analytic=True)


def write_features_csv(path, sets: list[FeatureSet]) -> None:
    """One row per shot with a leading label column; fixed float formatting."""
    if not sets:
        raise ReadoutError("no feature sets to write")
    names = sets[0].names
    with open(path, "w", newline="\n") as fh:
        fh.write("label,shot," + ",".join(names) + "\n")
        for fs in sets:
            for i, row in enumerate(fs.values):
                fh.write(f"{fs.label},{i}," + ",".join(f"{x:.17g}" for x in row) + "\n")
