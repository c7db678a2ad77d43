"""Truncated cumulant dynamics: unconditional TEOMs and heterodyne STEOMs.

The state is a first-order cumulant vector ``m`` (length ``2R``) and a
normal-ordered covariance ``C`` (``2R x 2R``) in the conjugate-pair ordering
of :mod:`qnpchain.chain_model`.  Closure at second order treats the state
as Gaussian, so the Kerr terms contribute

* to the means:  ``i L (b^* b^2 + b^* C_bb + 2 b C_{b^dag b})``,
* an effective Jacobian ``J(m, C)`` entering ``dC = J C + C J^T + D``,
* a state-dependent diffusion ``diag(i L (b^2 + C_bb), c.c.)``.

Heterodyne monitoring of processor mode ``k`` at rate ``gamma_H`` kicks the
means by ``sqrt(gamma_H/2) (v dW_I + w dW_Q)`` with
``v = C[:, b] + C[:, b^dag]``, ``w = -i C[:, b] + i C[:, b^dag]`` and removes
``(gamma_H/2)(v v^T + w w^T) dt`` from the covariance.

A numpy reference implementation (used for testing and steady states) sits
next to a compiled Euler-Maruyama kernel used for ensembles.
"""

from __future__ import annotations

import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import root

from .chain_model import ChainSpec, FullSystem, Ordering, build_full_system
from . import nvk

__all__ = [
    "IntegrationError", "CumulantState", "SDEConfig", "Trajectory",
    "deterministic_drift", "measurement_update", "project", "teom_rhs",
    "teom_steady_state", "kerr_oscillator_system", "integrate_trajectory",
    "ensemble_run", "trajectory_rng", "default_t0", "label_key",
]


class IntegrationError(RuntimeError):
    """A trajectory diverged; carries the step index and seed."""

    def __init__(self, msg, step=None, seed=None):
        super().__init__(msg)
        self.step = step
        self.seed = seed


@dataclass
class CumulantState:
    t: float
    m: np.ndarray
    C: np.ndarray

    def copy(self) -> "CumulantState":
        return CumulantState(self.t, self.m.copy(), self.C.copy())


@dataclass(frozen=True)
class SDEConfig:
    """Fixed-step integration settings.

    ``t0`` and ``filter_T`` define the boxcar window; the run stops at
    ``t0 + filter_T``.  ``record_stride`` bins record increments (0 keeps
    none) and ``state_stride`` samples the cumulant state (0 keeps none).
    """

    dt: float = 1e-3
    filter_T: float = 500.0
    t0: float | None = None
    seed: int = 0
    record_stride: int = 0
    state_stride: int = 0
    block: int = 65536

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.filter_T > 0:
            raise ValueError("filter_T must be positive")


@dataclass
class Trajectory:
    """Output of one conditional run.

    ``features`` holds ``(I_1, Q_1, ...)`` for the boxcar window.
    ``records`` holds record increments summed over ``record_stride`` steps.
    """

    label: str
    index: int
    seed: int
    dt: float
    t0: float
    filter_T: float
    features: np.ndarray
    record_stride: int = 0
    records: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    m_hist: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), complex))
    C_hist: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0), complex))
    final: CumulantState | None = None


# ---------------------------------------------------------------------------
# reference (numpy) equations

def _kerr_terms(m, C, sys: FullSystem):
    """Kerr additions to the mean drift, Jacobian and diffusion."""
    n = m.size
    dm = np.zeros(n, complex)
    dJ = np.zeros((n, n), complex)
    dD = np.zeros((n, n), complex)
    L = sys.kerr
    for i in sys.kerr_idx:
        j = i + 1
        b, bc = m[i], m[j]
        nn, cbb, cdd = C[j, i], C[i, i], C[j, j]
        dm[i] += 1j * L * (bc * b * b + bc * cbb + 2 * b * nn)
        dm[j] += -1j * L * (b * bc * bc + b * cdd + 2 * bc * nn)
        occ = b * bc + nn
        dJ[i, i] += 2j * L * occ
        dJ[i, j] += 1j * L * (b * b + cbb)
        dJ[j, j] += -2j * L * occ
        dJ[j, i] += -1j * L * (bc * bc + cdd)
        dD[i, i] += 1j * L * (b * b + cbb)
        dD[j, j] += -1j * L * (bc * bc + cdd)
    return dm, dJ, dD


def deterministic_drift(state: CumulantState, sys: FullSystem):
    """Unconditional TEOM right-hand side ``(dm/dt, dC/dt)``."""
    m, C = state.m, state.C
    dmk, dJ, dD = _kerr_terms(m, C, sys)
    J = sys.A + dJ
    dm = sys.A @ m + sys.f + dmk
    JC = J @ C
    dC = JC + JC.T + sys.D + dD
    return dm, dC


def measurement_update(state: CumulantState, dW_I, dW_Q, sys: FullSystem, dt: float):
    """Conditioning increments for one Euler-Maruyama step.

    Returns
    -------
    dm : ndarray
        Stochastic kick of the means.
    dC : ndarray
        Deterministic Ito backaction on the covariance (already times ``dt``).
    dY : ndarray
        Record increments ``(dI_1, dQ_1, ...)`` of monitored modes.
    """
    m, C = np.asarray(state.m, complex), np.asarray(state.C, complex)
    dW_I = np.atleast_1d(dW_I)
    dW_Q = np.atleast_1d(dW_Q)
    g = sys.gamma_h
    dm = np.zeros_like(m)
    dC = np.zeros_like(C)
    dY = np.zeros(2 * len(sys.mon_idx))
    for r, i in enumerate(sys.mon_idx):
        j = i + 1
        v = C[:, i] + C[:, j]
        w = -1j * C[:, i] + 1j * C[:, j]
        dm += np.sqrt(g / 2) * (v * dW_I[r] + w * dW_Q[r])
        dC -= 0.5 * g * (np.outer(v, v) + np.outer(w, w)) * dt
        dY[2 * r] = np.sqrt(g) * ((m[i] + m[j]) / np.sqrt(2)).real * dt + dW_I[r]
        dY[2 * r + 1] = np.sqrt(g) * ((-1j * m[i] + 1j * m[j]) / np.sqrt(2)).real * dt + dW_Q[r]
    return dm, dC, dY


def project(m: np.ndarray, C: np.ndarray):
    """Restore conjugate pairing of ``m`` and symmetry/pairing of ``C``."""
    p = np.arange(m.size) ^ 1
    m = m.copy()
    m[1::2] = np.conj(m[0::2])
    C = 0.5 * (C + np.conj(C[np.ix_(p, p)]))
    C = 0.5 * (C + C.T)
    return m, C


# ---------------------------------------------------------------------------
# systems

def kerr_oscillator_system(delta: float, kerr: float, gamma: float, eta: float,
                           phase: float = 0.0, gamma_h: float | None = None) -> FullSystem:
    """Bare Kerr mode with direct coherent drive (no source modes).

    Matches ``H = -D b^dag b - L/2 b^dag^2 b^2 + eta(e^{i phi} b + h.c.)``
    with total loss ``gamma``; ``gamma_h`` (default ``gamma``) is monitored.
    """
    A = np.diag([1j * delta - gamma / 2, -1j * delta - gamma / 2]).astype(complex)
    f = np.array([-1j * eta * np.exp(-1j * phase), 1j * eta * np.exp(1j * phase)])
    return FullSystem(A=A, f=f, D=np.zeros((2, 2), complex), kerr=float(kerr),
                      kerr_idx=np.array([0] if kerr else [], dtype=np.int64),
                      mon_idx=np.array([0], dtype=np.int64),
                      gamma_h=float(gamma if gamma_h is None else gamma_h),
                      ordering=Ordering(0, 1))


# ---------------------------------------------------------------------------
# unconditional steady state

def _pack(m, C):
    iu = np.triu_indices(m.size)
    z = np.concatenate([m, C[iu]])
    return np.concatenate([z.real, z.imag])


def _unpack(x, n):
    iu = np.triu_indices(n)
    k = x.size // 2
    z = x[:k] + 1j * x[k:]
    m = z[:n].copy()
    C = np.zeros((n, n), complex)
    C[iu] = z[n:]
    C = C + C.T - np.diag(np.diag(C))
    return m, C


def teom_rhs(sys: FullSystem):
    n = sys.A.shape[0]

    def rhs(t, x):
        m, C = _unpack(x, n)
        dm, dC = deterministic_drift(CumulantState(t, m, C), sys)
        return _pack(dm, dC)

    return rhs


def teom_steady_state(sys: FullSystem, m0=None, C0=None, t_max: float | None = None,
                      tol: float = 1e-11) -> CumulantState:
    """Stationary point of the unconditional TEOMs.

    Relaxes the equations from ``(m0, C0)`` with an implicit integrator, then
    polishes with a root finder.  Without a guess, starts from vacuum.
    """
    n = sys.A.shape[0]
    m0 = np.zeros(n, complex) if m0 is None else np.asarray(m0, complex)
    C0 = np.zeros((n, n), complex) if C0 is None else np.asarray(C0, complex)
    rhs = teom_rhs(sys)
    x0 = _pack(m0, C0)
    sol = root(lambda x: rhs(0.0, x), x0, method="hybr", tol=1e-14)
    if not (sol.success and np.max(np.abs(sol.fun)) < tol * max(1.0, np.max(np.abs(sol.x)))):
        if t_max is None:
            rate = np.min(np.abs(np.linalg.eigvals(sys.A).real))
            t_max = 200.0 / max(rate, 1e-3)
        ivp = solve_ivp(rhs, (0.0, t_max), x0, method="LSODA", rtol=1e-10, atol=1e-12)
        if not ivp.success:
            raise IntegrationError(f"TEOM relaxation failed: {ivp.message}")
        sol = root(lambda x: rhs(0.0, x), ivp.y[:, -1], method="hybr", tol=1e-14)
        if np.max(np.abs(sol.fun)) > 1e-8 * max(1.0, np.max(np.abs(sol.x))):
            raise IntegrationError("TEOM steady state not found "
                                   f"(residual {np.max(np.abs(sol.fun)):.2e})")
    m, C = _unpack(sol.x, n)
    m, C = project(m, C)
    return CumulantState(np.inf, m, C)


def nvk_initial_guess(spec: ChainSpec, label):
    """NVK means and covariance as a starting point for the TEOMs."""
    s = nvk.solve(spec, label)
    o = s.linsys.ordering
    m = np.concatenate([s.expansion.a, s.expansion.b + s.delta_b])
    return m, s.C, s


def default_t0(spec: ChainSpec, label, nvk_solution=None) -> float:
    """Ten relaxation times of the slowest linearized mode."""
    if spec.readout.t0 is not None:
        return float(spec.readout.t0)
    s = nvk_solution if nvk_solution is not None else nvk.solve(spec, label)
    rate = float(np.min(np.abs(np.linalg.eigvals(s.drift()).real)))
    return 10.0 / rate


# ---------------------------------------------------------------------------
# compiled kernel

@numba.njit(cache=True, fastmath=False)
def _em_block(m, C, A, f, D, kerr, kerr_idx, mon_idx, gamma_h, dt, noise,
              step0, win_start, win_stop, acc, rec_stride, rec, state_stride, m_hist, C_hist):
    n = m.shape[0]
    nmon = mon_idx.shape[0]
    J = np.empty((n, n), np.complex128)
    Dk = np.empty((n, n), np.complex128)
    JC = np.empty((n, n), np.complex128)
    Cn = np.empty((n, n), np.complex128)
    dm = np.empty(n, np.complex128)
    v = np.empty(n, np.complex128)
    w = np.empty(n, np.complex128)
    sq_half = np.sqrt(gamma_h / 2.0)
    sq_g = np.sqrt(gamma_h)
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    nsteps = noise.shape[0]
    for s in range(nsteps):
        step = step0 + s
        if state_stride > 0 and step % state_stride == 0:
            k = step // state_stride
            if k < m_hist.shape[0]:
                for a in range(n):
                    m_hist[k, a] = m[a]
                    for b in range(n):
                        C_hist[k, a, b] = C[a, b]
        # drift
        for a in range(n):
            acc_m = f[a]
            for b in range(n):
                acc_m += A[a, b] * m[b]
                J[a, b] = A[a, b]
                Dk[a, b] = D[a, b]
            dm[a] = acc_m
        for q in range(kerr_idx.shape[0]):
            i = kerr_idx[q]
            j = i + 1
            b_ = m[i]
            bc = m[j]
            nn = C[j, i]
            cbb = C[i, i]
            cdd = C[j, j]
            dm[i] += 1j * kerr * (bc * b_ * b_ + bc * cbb + 2.0 * b_ * nn)
            dm[j] += -1j * kerr * (b_ * bc * bc + b_ * cdd + 2.0 * bc * nn)
            occ = b_ * bc + nn
            J[i, i] += 2j * kerr * occ
            J[i, j] += 1j * kerr * (b_ * b_ + cbb)
            J[j, j] += -2j * kerr * occ
            J[j, i] += -1j * kerr * (bc * bc + cdd)
            Dk[i, i] += 1j * kerr * (b_ * b_ + cbb)
            Dk[j, j] += -1j * kerr * (bc * bc + cdd)
        for a in range(n):
            for b in range(n):
                t = 0j
                for c in range(n):
                    t += J[a, c] * C[c, b]
                JC[a, b] = t
        for a in range(n):
            for b in range(n):
                Cn[a, b] = C[a, b] + dt * (JC[a, b] + JC[b, a] + Dk[a, b])
        for a in range(n):
            dm[a] *= dt
        # measurement
        for r in range(nmon):
            i = mon_idx[r]
            j = i + 1
            dWI = noise[s, 2 * r]
            dWQ = noise[s, 2 * r + 1]
            for a in range(n):
                v[a] = C[a, i] + C[a, j]
                w[a] = -1j * C[a, i] + 1j * C[a, j]
                dm[a] += sq_half * (v[a] * dWI + w[a] * dWQ)
            for a in range(n):
                for b in range(n):
                    Cn[a, b] -= 0.5 * gamma_h * dt * (v[a] * v[b] + w[a] * w[b])
            dyI = sq_g * ((m[i] + m[j]) * inv_sqrt2).real * dt + dWI
            dyQ = sq_g * ((-1j * m[i] + 1j * m[j]) * inv_sqrt2).real * dt + dWQ
            if step >= win_start and step < win_stop:
                acc[2 * r] += dyI
                acc[2 * r + 1] += dyQ
            if rec_stride > 0:
                k = step // rec_stride
                if k < rec.shape[0]:
                    rec[k, 2 * r] += dyI
                    rec[k, 2 * r + 1] += dyQ
        # update and project onto the conjugate-pair manifold
        bad = False
        for a in range(0, n, 2):
            z = m[a] + dm[a]
            zc = m[a + 1] + dm[a + 1]
            z = 0.5 * (z + np.conj(zc))
            m[a] = z
            m[a + 1] = np.conj(z)
            if not (np.isfinite(z.real) and np.isfinite(z.imag)):
                bad = True
        for a in range(n):
            for b in range(a, n):
                val = 0.25 * (Cn[a, b] + Cn[b, a] + np.conj(Cn[a ^ 1, b ^ 1]) + np.conj(Cn[b ^ 1, a ^ 1]))
                C[a, b] = val
                C[b, a] = val
        if bad or not np.isfinite(C[0, 0].real):
            return step
    return -1


# ---------------------------------------------------------------------------
# trajectories

def label_key(label) -> int:
    return zlib.crc32(str(label).encode())


def trajectory_rng(seed: int, label, index: int, stream: int = 0) -> np.random.Generator:
    """Independent, counter-addressed generator for trajectory ``index``."""
    ss = np.random.SeedSequence([int(seed), label_key(label), int(index), int(stream)])
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class _Prepared:
    sys: FullSystem
    m0: np.ndarray
    C0: np.ndarray
    t0: float


def prepare(spec: ChainSpec, label, config: SDEConfig) -> _Prepared:
    """System matrices, initial TEOM steady state and window start."""
    sys = build_full_system(spec, label)
    m_guess, C_guess, sol = nvk_initial_guess(spec, label)
    ss = teom_steady_state(sys, m_guess, C_guess)
    t0 = config.t0 if config.t0 is not None else default_t0(spec, label, sol)
    return _Prepared(sys, ss.m, ss.C, float(t0))


def _run(prep: _Prepared, label, index: int, config: SDEConfig, keep: bool) -> Trajectory:
    sys = prep.sys
    dt = config.dt
    win_start = int(round(prep.t0 / dt))
    nT = int(round(config.filter_T / dt))
    total = win_start + nT
    nmon = len(sys.mon_idx)
    rng = trajectory_rng(config.seed, label, index)
    m = prep.m0.copy()
    C = prep.C0.copy()
    acc = np.zeros(2 * nmon)
    rec_stride = config.record_stride if keep else 0
    state_stride = config.state_stride if keep else 0
    rec = np.zeros(((total + rec_stride - 1) // rec_stride if rec_stride else 0, 2 * nmon))
    ns = (total + state_stride - 1) // state_stride if state_stride else 0
    m_hist = np.zeros((ns, m.size), complex)
    C_hist = np.zeros((ns, m.size, m.size), complex)
    sdt = np.sqrt(dt)
    step = 0
    while step < total:
        nb = min(config.block, total - step)
        noise = rng.standard_normal((nb, 2 * nmon)) * sdt
        bad = _em_block(m, C, sys.A, sys.f, sys.D, sys.kerr, sys.kerr_idx, sys.mon_idx,
                        sys.gamma_h, dt, noise, step, win_start, total, acc,
                        rec_stride, rec, state_stride, m_hist, C_hist)
        if bad >= 0:
            raise IntegrationError(f"trajectory {index} (label {label}) diverged at step {bad}; "
                                   "reduce dt or check stability", step=int(bad), seed=config.seed)
        step += nb
    feats = acc / np.sqrt(2.0 * nT * dt)
    traj = Trajectory(label=str(label), index=index, seed=config.seed, dt=dt, t0=prep.t0,
                      filter_T=nT * dt, features=feats,
                      final=CumulantState(total * dt, m, C))
    if keep:
        traj.record_stride = rec_stride
        traj.records = rec
        traj.m_hist = m_hist
        traj.C_hist = C_hist
        traj.times = np.arange(ns) * state_stride * dt if ns else np.zeros(0)
    return traj


def integrate_trajectory(spec: ChainSpec, label, config: SDEConfig, index: int = 0,
                         prepared: _Prepared | None = None) -> Trajectory:
    """Integrate one conditional trajectory from the TEOM steady state."""
    prep = prepared if prepared is not None else prepare(spec, label, config)
    return _run(prep, label, index, config, keep=True)


def _worker(args):
    prep, label, indices, config = args
    return [_run(prep, label, i, config, keep=False).features for i in indices]


def ensemble_run(spec: ChainSpec, labels, config: SDEConfig, n_traj: int,
                 jobs: int = 1) -> dict[str, np.ndarray]:
    """Filtered features ``(n_traj, 2 * n_monitored)`` for each label.

    Results depend only on ``(spec, label, config.seed, index)``, never on
    ``jobs`` or scheduling order.
    """
    out: dict[str, np.ndarray] = {}
    for label in labels:
        label = str(label)
        prep = prepare(spec, label, config)
        nfeat = 2 * len(prep.sys.mon_idx)
        if n_traj <= 0:
            out[label] = np.zeros((0, nfeat))
            continue
        idx = list(range(n_traj))
        if jobs <= 1:
            rows = _worker((prep, label, idx, config))
        else:
            chunks = [idx[k::jobs] for k in range(jobs)]
            rows = [None] * n_traj
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                for chunk, res in zip(chunks, ex.map(_worker, [(prep, label, c, config) for c in chunks])):
                    for i, r in zip(chunk, res):
                        rows[i] = r
        out[label] = np.asarray(rows, float).reshape(n_traj, nfeat)
    return out


def cpu_jobs(requested: int | None) -> int:
    if requested is None or requested <= 0:
        return os.cpu_count() or 1
    return requested
