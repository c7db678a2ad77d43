"""Nonlinear van Kampen (NVK) solver for the measurement chain.

The Kerr processor is expanded around the classical fixed point of the
mean-field equations.  Second-order cumulants follow from a Lyapunov
equation with the linearized drift, and the leading nonlinear correction to
the means is the Hessian transduction ``delta<b> = -sqrt(L) J_b^{-1} h_b``.

Rescaled processor amplitudes ``bbar = sqrt(Lambda) <b>`` are used for the
expansion point, so that the Jacobian and Kerr diffusion do not depend on
``Lambda`` explicitly.  All rates are in the units of the spec.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla

from .chain_model import (
    ChainSpec, LinearizedSystem, U_QUAD, build_linear_system, kerr_hessian_contract,
    kerr_jacobian, kerr_linearized_diffusion, quadrature_block,
)

__all__ = [
    "NVKError", "ExpansionPoint", "NVKSolution", "solve_expansion_point",
    "linearize", "solve_lyapunov", "lyapunov_residual", "mean_shift",
    "measured_mean", "measured_covariance", "susceptibility",
    "susceptibility_closed_form", "susceptibility_db", "effective_drive",
    "solve", "SIGMA_VAC", "COVARIANCE_MODES",
]

SIGMA_VAC = 0.5
COVARIANCE_MODES = ("short", "long-leading", "long-next", "general")


class NVKError(RuntimeError):
    """Numerical failure of the NVK pipeline."""


@dataclass(frozen=True)
class ExpansionPoint:
    """Classical fixed point of the chain.

    Attributes
    ----------
    a : source means ``<a>`` (2M, conjugate pairs).
    b : processor means ``<b>`` in physical units (2K).
    bbar : rescaled amplitudes ``sqrt(Lambda) <b>`` (zero when ``Lambda = 0``).
    residual : infinity norm of the fixed-point residual (rescaled units).
    stable : all eigenvalues of the linearized processor drift in the open LHP.
    branch : continuation history tag.
    """

    a: np.ndarray
    b: np.ndarray
    bbar: np.ndarray
    residual: float
    stable: bool
    branch: str


@dataclass(frozen=True)
class NVKSolution:
    linsys: LinearizedSystem
    expansion: ExpansionPoint
    C: np.ndarray
    delta_b: np.ndarray

    @property
    def label(self) -> str:
        return self.linsys.label

    @property
    def C_b(self) -> np.ndarray:
        s = self.linsys.ordering.b_slice()
        return self.C[s, s]

    @property
    def C_a(self) -> np.ndarray:
        n = 2 * self.linsys.M
        return self.C[:n, :n]

    def drift(self) -> np.ndarray:
        return self.linsys.drift(self.linsys.J_b)

    def diffusion(self) -> np.ndarray:
        return self.linsys.diffusion(self.linsys.D_b_kerr)


# ---------------------------------------------------------------------------
# expansion point

def _kerr_force(beta: np.ndarray) -> np.ndarray:
    """Rescaled Kerr mean-field term ``(i |b|^2 b, -i |b|^2 b*)`` per mode."""
    out = np.empty_like(beta)
    out[0::2] = 1j * beta[1::2] * beta[0::2] ** 2
    out[1::2] = -1j * beta[0::2] * beta[1::2] ** 2
    return out


def _pair(v: np.ndarray) -> np.ndarray:
    v = v.copy()
    v[1::2] = np.conj(v[0::2])
    return v


def _count_cubic_roots(linsys: LinearizedSystem, drive: np.ndarray) -> int:
    """Number of positive roots of the K=1 intensity cubic (no parametric terms)."""
    Lb = linsys.L_b
    if linsys.K != 1 or abs(Lb[0, 1]) > 0:
        return 1
    g2 = -Lb[0, 0].real
    d = Lb[0, 0].imag
    F2 = abs(drive[0]) ** 2
    # n ((n + d)^2 + g2^2) = |F|^2
    roots = np.roots([1.0, 2 * d, d * d + g2 * g2, -F2])
    return int(np.sum((np.abs(roots.imag) < 1e-9 * max(1.0, F2)) & (roots.real > 0)))


def _newton(linsys, drive, beta0, tol, max_iter):
    """Damped Newton solve of ``L_b beta + N(beta) = drive`` from ``beta0``."""
    Lb = linsys.L_b
    beta = beta0.astype(complex)

    def resid(x):
        return Lb @ x + _kerr_force(x) - drive

    r = resid(beta)
    rn = np.max(np.abs(r))
    scale = max(1.0, float(np.max(np.abs(drive))))
    for _ in range(max_iter):
        if rn < tol * scale:
            return beta, rn, True
        step = np.linalg.solve(kerr_jacobian(linsys, beta), -r)
        lam = 1.0
        while lam > 1e-10:
            trial = _pair(beta + lam * step)
            rt = resid(trial)
            rtn = np.max(np.abs(rt))
            if rtn < rn:
                break
            lam *= 0.5
        else:
            return beta, rn, False
        beta, r, rn = trial, rt, rtn
    return beta, rn, rn < tol * scale


def solve_expansion_point(linsys: LinearizedSystem, *, steps: int = 20,
                          tol: float = 1e-12, max_iter: int = 200) -> ExpansionPoint:
    """Solve the mean-field fixed point by continuation in the drive amplitude.

    The source is linear, so ``a = -L_a^{-1} eta`` exactly.  The processor is
    driven by ``Gamma a``; continuation from zero drive over ``steps``
    geometric increments selects the low-amplitude branch in bistable regions.

    Raises
    ------
    NVKError
        If Newton fails to converge even after refining the continuation.
    """
    a = -np.linalg.solve(linsys.L_a, linsys.eta)
    a = _pair(a)
    flow = linsys.Gamma @ a
    if linsys.kerr == 0.0:
        b = _pair(np.linalg.solve(linsys.L_b, flow))
        eig = np.linalg.eigvals(linsys.L_b)
        return ExpansionPoint(a=a, b=b, bbar=np.zeros_like(b), residual=0.0,
                              stable=bool(np.max(eig.real) < 0), branch="linear")

    sq = np.sqrt(linsys.kerr)
    drive = sq * flow
    beta = np.zeros_like(drive)
    rn = 0.0
    fractions = np.geomspace(1.0 / steps, 1.0, steps) if np.any(drive) else np.array([1.0])
    refinements = 0
    k = 0
    prev = 0.0
    while k < len(fractions):
        s = fractions[k]
        guess = beta if k else _pair(np.linalg.solve(linsys.L_b, s * drive))
        trial, rn, ok = _newton(linsys, s * drive, guess, tol, max_iter)
        if not ok:
            if refinements >= 8:
                raise NVKError(f"expansion point did not converge (residual {rn:.3e} "
                               f"at drive fraction {s:.4f})")
            refinements += 1
            # insert a midpoint and retry
            fractions = np.insert(fractions, k, 0.5 * (prev + s))
            continue
        beta, prev = trial, s
        k += 1

    J = kerr_jacobian(linsys, beta)
    stable = bool(np.max(np.linalg.eigvals(J).real) < 0)
    branch = "continuation"
    if _count_cubic_roots(linsys, drive[0::2]) > 1:
        branch = "continuation:bistable-lower"
    if refinements:
        branch += f":refined{refinements}"
    return ExpansionPoint(a=a, b=beta / sq, bbar=beta, residual=float(rn),
                          stable=stable, branch=branch)


def linearize(linsys: LinearizedSystem, expansion: ExpansionPoint) -> LinearizedSystem:
    """Attach ``J_b`` and the Kerr diffusion evaluated at the expansion point."""
    if linsys.kerr == 0.0:
        return replace(linsys, J_b=linsys.L_b.copy(),
                       D_b_kerr=np.zeros_like(linsys.L_b))
    return replace(linsys, J_b=kerr_jacobian(linsys, expansion.bbar),
                   D_b_kerr=kerr_linearized_diffusion(expansion.bbar))


# ---------------------------------------------------------------------------
# Lyapunov covariance

def _sylvester_gap(J: np.ndarray) -> tuple[float, tuple[complex, complex]]:
    lam = np.linalg.eigvals(J)
    S = lam[:, None] + lam[None, :]
    idx = np.unravel_index(np.argmin(np.abs(S)), S.shape)
    return float(np.abs(S[idx])), (lam[idx[0]], lam[idx[1]])


def lyapunov(J: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``J C + C J^T + B = 0`` (plain transpose) for complex matrices."""
    gap, pair = _sylvester_gap(J)
    scale = max(1.0, float(np.max(np.abs(J))))
    if gap < 1e-12 * scale:
        raise NVKError(f"singular Lyapunov operator: eigenvalues {pair[0]:.3e} and "
                       f"{pair[1]:.3e} sum to {gap:.3e}")
    C = sla.solve_sylvester(J, J.T, -B)
    return 0.5 * (C + C.T)


def lyapunov_residual(J: np.ndarray, C: np.ndarray, B: np.ndarray) -> float:
    """Relative Frobenius residual ``|J C + C J^T + B| / |B|``."""
    nb = np.linalg.norm(B)
    r = np.linalg.norm(J @ C + C @ J.T + B)
    return float(r / nb) if nb > 0 else float(r)


def solve_lyapunov(linsys: LinearizedSystem, expansion: ExpansionPoint | None = None) -> np.ndarray:
    """Steady-state normal-ordered covariance of the linearized chain.

    ``linsys`` should already carry ``J_b`` and the Kerr diffusion (see
    :func:`linearize`); passing ``expansion`` linearizes on the fly.
    """
    if expansion is not None:
        linsys = linearize(linsys, expansion)
        if not expansion.stable:
            raise NVKError("expansion point is unstable; no stationary covariance")
    J = linsys.drift(linsys.J_b)
    B = linsys.diffusion(linsys.D_b_kerr)
    return lyapunov(J, B)


def mean_shift(linsys: LinearizedSystem, C: np.ndarray,
               expansion: ExpansionPoint | None = None) -> np.ndarray:
    """Hessian-driven correction ``delta<b> = -sqrt(Lambda) J_b^{-1} h(bbar, C_b)``."""
    if linsys.kerr == 0.0:
        return np.zeros(2 * linsys.K, complex)
    if expansion is not None:
        linsys = linearize(linsys, expansion)
        bbar = expansion.bbar
    else:
        raise ValueError("mean_shift needs the expansion point for Lambda > 0")
    s = linsys.ordering.b_slice()
    h = kerr_hessian_contract(bbar, C[s, s])
    try:
        x = np.linalg.solve(linsys.J_b, h)
    except np.linalg.LinAlgError as exc:
        raise NVKError("processor Jacobian is singular (operating on an instability)") from exc
    return _pair(-np.sqrt(linsys.kerr) * x)


def solve(spec: ChainSpec, label) -> NVKSolution:
    """Run the full NVK pipeline for one label."""
    lin = build_linear_system(spec, label)
    ep = solve_expansion_point(lin)
    if not ep.stable:
        raise NVKError(f"label {label}: expansion point unstable ({ep.branch})")
    lin = linearize(lin, ep)
    C = solve_lyapunov(lin)
    db = mean_shift(lin, C, ep)
    return NVKSolution(linsys=lin, expansion=ep, C=C, delta_b=db)


# ---------------------------------------------------------------------------
# measured statistics

def measured_mean(solution: NVKSolution, T: float) -> np.ndarray:
    """Mean of the filtered features ``(I_1, Q_1, ...)`` over monitored modes."""
    lin = solution.linsys
    b = solution.expansion.b + solution.delta_b
    out = []
    for k in lin.monitored:
        blk = U_QUAD @ b[2 * k:2 * k + 2]
        out.append(blk.real)
    if not out:
        return np.zeros(0)
    return np.sqrt(lin.gamma_h * T / 2.0) * np.concatenate(out)


def _expm_eig(J: np.ndarray, T: float, cond_max: float = 1e12):
    lam, V = np.linalg.eig(J)
    if np.linalg.cond(V) > cond_max:
        warnings.warn("drift matrix is nearly defective; using scaling-and-squaring "
                      "matrix exponential", RuntimeWarning, stacklevel=3)
        return sla.expm(J * T), True
    return (V * np.exp(lam * T)) @ np.linalg.inv(V), False


def measured_covariance(solution: NVKSolution, T: float, mode: str = "long-leading",
                        n_cl: float = 0.0) -> np.ndarray:
    """Covariance of the boxcar-filtered features (vacuum inclusive).

    Parameters
    ----------
    solution : NVKSolution
    T : float
        Filter window.
    mode : {'short', 'long-leading', 'long-next', 'general'}
        Filter regime.  ``general`` is exact for any ``T``.
    n_cl : float
        Classical readout noise in vacuum units.
    """
    if mode not in COVARIANCE_MODES:
        raise ValueError(f"unknown covariance mode {mode!r}; choose from {COVARIANCE_MODES}")
    lin = solution.linsys
    Mm = lin.measurement_matrix()
    n = Mm.shape[0]
    vac = SIGMA_VAC * (n_cl + 1.0) * np.eye(n)
    C = solution.C
    J = solution.drift()
    if mode == "short":
        Q = 0.5 * T * (Mm @ C @ Mm.T)
    else:
        Ji = np.linalg.inv(J)
        lead = Ji @ C + C @ Ji.T
        Q = -0.5 * (Mm @ lead @ Mm.T)
        if mode in ("long-next", "general"):
            Ji2 = Ji @ Ji
            if mode == "long-next":
                corr = -(Ji2 @ C + C @ Ji2.T)
            else:
                E, _ = _expm_eig(J, T)
                I = np.eye(J.shape[0])
                corr = Ji2 @ (E - I) @ C + C @ (E.T - I) @ Ji2.T
            Q = Q + (Mm @ corr @ Mm.T) / (2.0 * T)
    Q = 0.5 * (Q + Q.T)
    if np.max(np.abs(Q.imag), initial=0.0) > 1e-8 * max(1.0, np.max(np.abs(Q.real), initial=0.0)):
        raise NVKError("measured covariance has a non-negligible imaginary part")
    return vac + Q.real


def long_filter_covariance_from_diffusion(solution: NVKSolution, n_cl: float = 0.0) -> np.ndarray:
    """Leading long-filter covariance via ``1/2 M J^{-1} B J^{-T} M^T``.

    Algebraically identical to ``measured_covariance(mode='long-leading')``;
    kept as an independent route for checking.
    """
    lin = solution.linsys
    Mm = lin.measurement_matrix()
    J = solution.drift()
    B = solution.diffusion()
    X = np.linalg.solve(J, B)
    X = np.linalg.solve(J, X.T).T
    Q = 0.5 * (Mm @ X @ Mm.T)
    Q = 0.5 * (Q + Q.T).real
    return SIGMA_VAC * (n_cl + 1.0) * np.eye(Mm.shape[0]) + Q


# ---------------------------------------------------------------------------
# susceptibility and scaling

def susceptibility(linsys: LinearizedSystem, mode: int = 0) -> float:
    """Peak susceptibility ``|chi_b|`` in units of the total loss of ``mode``.

    Computed as ``gamma * max |eig J_b^{-1}|``; returns ``inf`` exactly on an
    instability.
    """
    lam = np.linalg.eigvals(linsys.J_b)
    m = float(np.min(np.abs(lam)))
    gamma = float(linsys.gamma[mode])
    return np.inf if m == 0.0 else gamma / m


def susceptibility_closed_form(gamma: float, detuning: float, nbar: float) -> float:
    """Single-mode closed form ``gamma / |gamma/2 - sqrt((2n)^2 - (D + 4n)^2)|``.

    ``nbar = Lambda |<b>|^2 / 2`` in rate units.
    """
    root = np.sqrt(complex((2 * nbar) ** 2 - (detuning + 4 * nbar) ** 2))
    den = abs(gamma / 2 - root)
    return np.inf if den == 0 else gamma / den


def susceptibility_db(chi: float) -> float:
    return 20.0 * np.log10(chi)


def effective_drive(kerr: float, gamma: float, amplitude: float, coupling: float) -> float:
    """Dimensionless drive ``sqrt(Lambda/gamma) * A * Gamma / gamma``.

    Chains sharing this value (and ``Delta/gamma``) have identical rescaled
    expansion points, Jacobians and susceptibilities.
    """
    return float(np.sqrt(kerr / gamma) * amplitude * coupling / gamma)


def quadrature_means(solution: NVKSolution) -> np.ndarray:
    """Processor quadrature means ``U_K (<b> + delta<b>)`` (all modes, real)."""
    b = solution.expansion.b + solution.delta_b
    return (quadrature_block(solution.linsys.K) @ b).real
