"""Exact reference solutions used to validate the cumulant and NVK machinery.

* Steady-state moments of a coherently driven Kerr oscillator from the
  complex-P representation (closed-form hypergeometric series).
* Dense/sparse Fock-space master-equation steady states for chains with at
  most one source and one processor mode.
* Brute-force Chernoff exponent between two density matrices.

The single Kerr oscillator is

    H = -D b^dag b - (L/2) b^dag b^dag b b + eta (e^{-i phi} b + e^{i phi} b^dag)

with amplitude damping at total rate ``gamma``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar
from scipy.special import loggamma

from .chain_model import ChainSpec, Ordering, build_linear_system

__all__ = [
    "OracleError", "KerrParams", "complexp_moment", "complexp_cumulants",
    "fock_kerr_steady_state", "FockResult", "fock_me_steady_state",
    "fock_moments", "fock_qcb", "gaussian_fock_state", "destroy",
]


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class KerrParams:
    """Driven Kerr oscillator; all rates in a common unit."""

    delta: float
    kerr: float
    gamma: float
    eta: float
    phase: float = 0.0

    def __post_init__(self):
        if self.kerr <= 0:
            raise ValueError("complex-P solution requires Lambda > 0")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    @property
    def c(self) -> complex:
        return (-1j * self.delta + self.gamma / 2) / (-1j * self.kerr)

    @classmethod
    def from_effective_drive(cls, E: float, delta: float, kerr: float,
                             gamma: float = 1.0, phase: float = 0.0) -> "KerrParams":
        """Build from ``E = (eta/gamma) sqrt(Lambda/gamma)``."""
        eta = E * gamma / np.sqrt(kerr / gamma)
        return cls(delta=delta, kerr=kerr, gamma=gamma, eta=eta, phase=phase)


# ---------------------------------------------------------------------------
# complex-P

def _hyp0f2_log(x: complex, y: complex, z: float, rtol=1e-15, cap=100_000):
    """Return ``log`` of ``sum_n z^n / (n! (x)_n (y)_n)`` and the term count."""
    total = 1.0 + 0j
    term = 1.0 + 0j
    # terms can be enormous before they shrink; rescale on the fly
    log_scale = 0.0
    for n in range(cap):
        term = term * z / ((n + 1) * (x + n) * (y + n))
        total = total + term
        if abs(total) > 1e250:
            total /= 1e250
            term /= 1e250
            log_scale += np.log(1e250)
        if n > 4 and abs(term) < rtol * abs(total) and abs(z) < abs((n + 1) * (x + n) * (y + n)):
            return np.log(total) + log_scale, n + 1
    raise OracleError(f"0F2 series not converged after {cap} terms "
                      f"(last term {abs(term):.3e}, partial sum {abs(total):.3e})")


def complexp_moment(params: KerrParams, j: int, i: int) -> complex:
    """Steady-state normal-ordered moment ``<b^dag^j b^i>``.

    Parameters
    ----------
    params : KerrParams
    j, i : int
        Powers of ``b^dag`` and ``b``.
    """
    if i < 0 or j < 0:
        raise ValueError("moment orders must be non-negative")
    if i == 0 and j == 0:
        return 1.0 + 0j
    x = 2.0 * params.c
    xs = np.conj(x)
    eps = 2.0 * params.eta / params.kerr
    z = 2.0 * abs(eps) ** 2
    log_norm, _ = _hyp0f2_log(x, xs, z)
    log_num, _ = _hyp0f2_log(x + i, xs + j, z)
    log_poch = (loggamma(x + i) - loggamma(x)) + (loggamma(xs + j) - loggamma(xs))
    # the drive phase enters as e^{-i phi} per power of b
    amp = (np.exp(-1j * params.phase) * eps) ** i * (np.exp(1j * params.phase) * eps) ** j
    return complex(amp * np.exp(log_num - log_norm - log_poch))


def complexp_cumulants(params: KerrParams) -> dict:
    """First and second order steady-state cumulants of the Kerr oscillator."""
    b = complexp_moment(params, 0, 1)
    bb = complexp_moment(params, 0, 2)
    bdb = complexp_moment(params, 1, 1)
    return {"b": b, "C_bb": bb - b * b, "C_bdb": (bdb - abs(b) ** 2).real}


# ---------------------------------------------------------------------------
# Fock space

def destroy(N: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, N)), 1, format="csr", dtype=complex)


def _spre(A):
    # vec(A rho) = (I kron A) vec(rho), column stacking
    return sp.kron(sp.identity(A.shape[0], format="csr"), A, format="csr")


def _spost(A):
    # vec(rho A) = (A^T kron I) vec(rho)
    return sp.kron(A.T, sp.identity(A.shape[0], format="csr"), format="csr")


def liouvillian(H, jumps) -> sp.csr_matrix:
    L = -1j * (_spre(H) - _spost(H))
    for c in jumps:
        cd = c.conj().T
        cdc = cd @ c
        L = L + sp.kron(c.conj(), c, format="csr") - 0.5 * _spre(cdc) - 0.5 * _spost(cdc)
    return L.tocsr()


def steady_state(L: sp.spmatrix, dim: int, direct_max: int = 6000,
                 rtol: float = 1e-12) -> np.ndarray:
    """Null vector of ``L`` with unit trace from a bordered linear system.

    The first equation is replaced by the trace condition.  Systems up to
    ``direct_max`` unknowns use sparse LU; larger ones (where LU fill-in
    becomes nearly dense) use GMRES preconditioned by an incomplete LU.
    """
    n = dim * dim
    tr = sp.csr_matrix((np.ones(dim), (np.zeros(dim, int), np.arange(dim) * (dim + 1))),
                       shape=(1, n))
    A = sp.vstack([tr, L[1:, :]]).tocsc()
    rhs = np.zeros(n, complex)
    rhs[0] = 1.0
    try:
        if n <= direct_max:
            v = spla.spsolve(A, rhs)
        else:
            ilu = spla.spilu(A, drop_tol=1e-3, fill_factor=10)
            prec = spla.LinearOperator(A.shape, ilu.solve, dtype=complex)
            v, info = spla.gmres(A, rhs, M=prec, rtol=rtol, atol=0.0, restart=200, maxiter=50)
            if info != 0:
                res = np.linalg.norm(A @ v - rhs)
                raise OracleError(f"steady-state GMRES did not converge (residual {res:.2e})")
    except RuntimeError as exc:
        if isinstance(exc, OracleError):
            raise
        raise OracleError(f"steady-state solve failed: {exc}") from exc
    if not np.all(np.isfinite(v)):
        raise OracleError("steady state is degenerate (singular bordered Liouvillian)")
    rho = v.reshape(dim, dim, order="F")
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def _check_state(rho: np.ndarray, tol: float = 1e-10) -> None:
    w = np.linalg.eigvalsh(rho)
    if w[0] < -tol:
        raise OracleError(f"steady state not positive (min eigenvalue {w[0]:.3e})")


def fock_kerr_steady_state(params: KerrParams, N: int, tail_tol: float = 1e-6) -> np.ndarray:
    """Steady-state density matrix of the driven Kerr oscillator at cutoff ``N``."""
    b = destroy(N)
    bd = b.conj().T
    num = bd @ b
    H = (-params.delta * num - 0.5 * params.kerr * (bd @ bd @ b @ b)
         + params.eta * (np.exp(1j * params.phase) * b + np.exp(-1j * params.phase) * bd))
    L = liouvillian(H, [np.sqrt(params.gamma) * b])
    rho = steady_state(L, N)
    tail = rho[-1, -1].real
    if tail > tail_tol:
        raise OracleError(f"Fock cutoff {N} too small: top-level population {tail:.2e}")
    _check_state(rho)
    return rho


def fock_moments(rho: np.ndarray, ops: dict[str, sp.spmatrix]) -> dict[str, complex]:
    return {k: complex(np.trace(op @ rho)) for k, op in ops.items()}


@dataclass(frozen=True)
class FockResult:
    """Steady state of a small chain and its first/second order cumulants."""

    rho: np.ndarray
    means: np.ndarray
    C: np.ndarray
    ordering: Ordering
    tail: dict

    def moment(self, op) -> complex:
        return complex(np.trace(op @ self.rho))


def _chain_operators(M: int, K: int, cut_a: int, cut_b: int, shifts=None):
    """Mode operators on the truncated product space, optionally displaced.

    With ``shifts`` the returned operators are ``z + s I``: writing the master
    equation with them describes the displaced state ``D^dag rho D``, which
    sits near vacuum when ``s`` is close to the true mean.
    """
    ops = []
    dims = [cut_a] * M + [cut_b] * K
    shifts = [0.0] * (M + K) if shifts is None else list(shifts)
    n = int(np.prod(dims))
    for r in range(M + K):
        mats = [sp.identity(d, format="csr", dtype=complex) for d in dims]
        mats[r] = destroy(dims[r])
        op = mats[0]
        for m in mats[1:]:
            op = sp.kron(op, m, format="csr")
        ops.append((op + shifts[r] * sp.identity(n, format="csr", dtype=complex)).tocsr())
    return ops, dims


def _auto_shifts(spec: ChainSpec, label) -> tuple[complex, complex]:
    """Linear source mean and the classical processor fixed point."""
    from . import nvk  # local import: only the frame choice depends on it
    from .chain_model import build_linear_system
    lin = build_linear_system(spec, label)
    ep = nvk.solve_expansion_point(lin)
    return complex(ep.a[0]), complex(ep.b[0])


def fock_me_steady_state(spec: ChainSpec, label, cutoffs=(20, 20),
                         tail_tol: float = 1e-6, displace: bool = True) -> FockResult:
    """Exact master-equation steady state for a chain with ``M, K <= 1``.

    The cascaded source-to-processor link is modelled by the Hamiltonian
    ``(i Gamma/2)(a^dag b - b^dag a)`` together with the collective jump
    ``sqrt(Gamma)(a + b)``; the remaining source loss ``kappa`` goes into a
    bath of occupation ``n_th`` and the processor decays at ``gamma_H``.

    With ``displace`` the equation is solved in a frame displaced by the
    classical means, so the cutoffs only need to hold the fluctuations; the
    cutoff check then applies to the displaced populations.
    """
    M, K = spec.M, spec.K
    if M > 1 or K > 1:
        raise OracleError("Fock oracle supports at most one source and one processor mode")
    lab = spec.label(label)
    q = spec.qnp
    shifts = _auto_shifts(spec, label) if displace else None
    (a, b), dims = _chain_operators(M, K, *cutoffs, shifts=shifts)
    ad, bd = a.conj().T.tocsr(), b.conj().T.tocsr()
    G, ph = lab.squeeze[0], lab.squeeze_phase[0]
    H = 0.5 * (G * np.exp(-1j * ph) * (a @ a) + G * np.exp(1j * ph) * (ad @ ad))
    H = H + lab.eta[0] * (-1j * a + 1j * ad)
    H = H - q.detuning[0] * (bd @ b) - 0.5 * q.kerr * (bd @ bd @ b @ b)
    if q.squeeze:
        Gb = q.squeeze[0]
        pb = q.squeeze_phase[0] if q.squeeze_phase else 0.0
        H = H + 0.5 * (Gb * np.exp(-1j * pb) * (b @ b) + Gb * np.exp(1j * pb) * (bd @ bd))
    Gam = spec.gamma_coupling()[0]
    kap = spec.qs.kappa[0]
    nth = lab.n_th[0]
    jumps = []
    if Gam > 0:
        H = H + 0.5j * Gam * (ad @ b - bd @ a)
        jumps.append(np.sqrt(Gam) * (a + b))
    if kap > 0:
        jumps.append(np.sqrt(kap * (nth + 1)) * a)
        if nth > 0:
            jumps.append(np.sqrt(kap * nth) * ad)
    if q.gamma_h > 0:
        jumps.append(np.sqrt(q.gamma_h) * b)
    if q.loss and q.loss[0] > 0:
        jumps.append(np.sqrt(q.loss[0]) * b)
    dim = int(np.prod(dims))
    rho = steady_state(liouvillian(H.tocsr(), jumps), dim)
    _check_state(rho)

    # marginal top-level populations
    r4 = rho.reshape(dims + dims)
    pa = np.real(np.einsum("ijij->i", r4))
    pb = np.real(np.einsum("ijij->j", r4))
    tail = {"a": float(pa[-1]), "b": float(pb[-1])}
    if max(tail.values()) > tail_tol:
        raise OracleError(f"Fock cutoff too small: top-level populations {tail}")

    o = Ordering(M, K)
    zs = [a, ad, b, bd]
    means = np.array([np.trace(z @ rho) for z in zs])
    C = np.empty((4, 4), complex)
    for r in range(4):
        for s in range(4):
            zr, zs_ = zs[r], zs[s]
            # normal order: creation operators to the left
            same_mode = r // 2 == s // 2
            if same_mode and r % 2 == 0 and s % 2 == 1:
                prod = zs_ @ zr
            else:
                prod = zr @ zs_
            C[r, s] = np.trace(prod @ rho) - means[r] * means[s]
    return FockResult(rho=rho, means=means, C=C, ordering=o, tail=tail)


# ---------------------------------------------------------------------------
# Gaussian states in Fock space and the Chernoff exponent

def gaussian_fock_state(N: int, alpha: complex = 0.0, n_th: float = 0.0,
                        r: float = 0.0, theta: float = 0.0, pad: int = 40) -> np.ndarray:
    """Displaced squeezed thermal state ``D S rho_th S^dag D^dag`` at cutoff ``N``.

    Built at a padded cutoff and cropped, so ``N`` must comfortably exceed
    the occupation.
    """
    Np = N + pad
    a = destroy(Np).toarray()
    ad = a.conj().T
    k = np.arange(Np)
    p = (n_th / (1 + n_th)) ** k / (1 + n_th) if n_th > 0 else (k == 0).astype(float)
    rho = np.diag(p).astype(complex)
    if r:
        xi = r * np.exp(1j * theta)
        S = sla.expm(0.5 * (np.conj(xi) * a @ a - xi * ad @ ad))
        rho = S @ rho @ S.conj().T
    if alpha:
        D = sla.expm(alpha * ad - np.conj(alpha) * a)
        rho = D @ rho @ D.conj().T
    rho = rho[:N, :N]
    return rho / np.trace(rho).real


def _mat_power(w, V, s):
    ws = np.where(w > 0, np.abs(w) ** s, 0.0)
    return (V * ws) @ V.conj().T


def fock_qcb(rho_a: np.ndarray, rho_b: np.ndarray, n_grid: int = 101,
             full_output: bool = False, tol: float = 1e-10):
    """Chernoff exponent ``-min_s log tr(rho_a^s rho_b^{1-s})`` by brute force.

    Returns ``zeta`` or, with ``full_output``, ``(zeta, s_opt, capped)`` where
    ``capped`` flags (numerically) orthogonal supports.
    """
    for rho in (rho_a, rho_b):
        if np.max(np.abs(rho - rho.conj().T)) > tol:
            raise OracleError("density matrix is not Hermitian")
    wa, Va = np.linalg.eigh(rho_a)
    wb, Vb = np.linalg.eigh(rho_b)
    if min(wa[0], wb[0]) < -tol:
        raise OracleError("density matrix is not positive semidefinite")
    wa = np.clip(wa, 0, None)
    wb = np.clip(wb, 0, None)

    def q(s):
        # eigenvalues below 1e-300 behave as zero for s > 0
        val = np.trace(_mat_power(wa, Va, s) @ _mat_power(wb, Vb, 1 - s)).real
        return val

    grid = np.linspace(0, 1, n_grid)
    vals = np.array([q(s) if 0 < s < 1 else 1.0 for s in grid])
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, n_grid - 1)]
    best_s, best = grid[k], vals[k]
    if hi > lo:
        res = minimize_scalar(q, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10})
        if res.fun < best:
            best_s, best = res.x, res.fun
    capped = best <= 1e-300
    zeta = -np.log(max(best, 1e-300))
    zeta = max(zeta, 0.0)
    return (zeta, best_s, capped) if full_output else zeta
