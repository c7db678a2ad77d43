"""Benchmark discrimination tasks, linear-amplifier baselines and sweeps.

Source parameters are tabulated in units of the total source loss ``kappa``
(bath plus coupling), so squeeze strengths and drives are multiplied by
``kappa`` when a chain is built.  Drive ratios are chosen so that the
monitored source modes of both labels share the mean amplitude ``A``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import metrics, nvk
from .chain_model import (
    ChainSpec, PairTerm, QNPConfig, QSConfig, QSLabel, Readout, SpecError,
    build_linear_system, validate,
)
from .readout import GaussianSummary

__all__ = [
    "TaskDef", "task_library", "get_task", "task_spec", "default_spec", "OPERATING_POINTS", "calibrate_drive",
    "check_equal_means", "amplifier_baseline", "pp_gain", "pp_noise_calibration",
    "nvk_summaries", "operating_point_metrics", "susceptibility_contour",
    "isogain_and_optimal_noise_sweep", "constant_separation_curve",
    "reduced_gaussian", "qcb_ratio", "TaskError",
]

HALF_PI = np.pi / 2


class TaskError(RuntimeError):
    pass


@dataclass(frozen=True)
class TaskDef:
    """One benchmark task.

    ``ratios`` maps each label to ``(squeeze, squeeze_phase, pair_squeeze,
    pair_phase, eta_over_A, n_th)`` with per-mode tuples; ``readout_modes``
    lists the source modes feeding the processor (``Gamma_m > 0``).
    """

    task_id: str
    labels: tuple[str, str]
    M: int
    ratios: dict
    readout_modes: tuple[int, ...]
    kappa_bath: tuple[float, ...]
    coupling: tuple[float, ...]
    description: str = ""


def task_library() -> dict[str, TaskDef]:
    """Tasks I-IV with their default chain geometry (rates in ``kappa`` units)."""
    return {
        "I": TaskDef(
            "I", ("1", "2"), 2,
            {"1": dict(squeeze=(0.3, 0.0), squeeze_phase=(HALF_PI, 0.0), eta=(0.20, 0.0)),
             "2": dict(pair=(0.3, 0.0), eta=(0.32, 0.0))},
            (0,), (0.5, 1.0), (0.5, 0.0),
            "single-mode vs two-mode squeezed source, read out through mode 1"),
        "II": TaskDef(
            "II", ("3", "4"), 2,
            {"3": dict(pair=(0.3, -HALF_PI), eta=(0.8, 0.8)),
             "4": dict(pair=(0.3, HALF_PI), eta=(0.2, 0.2))},
            (0, 1), (0.5, 0.5), (0.5, 0.5),
            "two-mode squeezed states with orthogonal squeezed quadratures"),
        "III": TaskDef(
            "III", ("5", "6"), 1,
            {"5": dict(eta=(0.5,), n_th=(0.1,)),
             "6": dict(eta=(0.5,), n_th=(0.8,))},
            (0,), (0.5,), (0.5,),
            "thermal states of different temperature with equal displacement"),
        "IV": TaskDef(
            "IV", ("7", "8"), 1,
            {"7": dict(squeeze=(0.3,), squeeze_phase=(HALF_PI,), eta=(0.2,)),
             "8": dict(squeeze=(0.3,), squeeze_phase=(-HALF_PI,), eta=(0.8,))},
            (0,), (0.5,), (0.5,),
            "amplitude- vs phase-squeezed single-mode source"),
    }


def get_task(task_id: str) -> TaskDef:
    lib = task_library()
    key = str(task_id).upper()
    if key not in lib:
        raise TaskError(f"unknown task {task_id!r}; choose from {sorted(lib)}")
    return lib[key]


# Default operating points (rates in units of kappa).  Task II sits on the
# |chi_b| = 9 optimal-noise trajectory at g12 = 2.5; Task III reuses the
# Task I processor.
OPERATING_POINTS = {
    "I": dict(amplitude=10.0, detuning=(-0.67,), kerr=5.5e-3, gamma_h=0.5, hopping=0.0),
    "II": dict(amplitude=80.0, detuning=(0.8041, -1.6082), kerr=7.777e-3, gamma_h=4.0, hopping=2.5),
    "III": dict(amplitude=10.0, detuning=(-0.67,), kerr=5.5e-3, gamma_h=0.5, hopping=0.0),
    "IV": dict(amplitude=4.5, detuning=(-1.0,), kerr=0.1005, gamma_h=1.0, hopping=0.0),
}


def default_spec(task_id: str, **overrides) -> ChainSpec:
    """Task chain at its default operating point; keyword overrides win."""
    task = get_task(task_id)
    kw = {**OPERATING_POINTS[task.task_id], **overrides}
    amplitude = kw.pop("amplitude")
    return task_spec(task, amplitude, **kw)


def _label_from_ratios(r: dict, M: int, kappa: np.ndarray, A: float) -> QSLabel:
    pad = lambda v: tuple(v) + (0.0,) * (M - len(v))
    squeeze = np.array(pad(r.get("squeeze", ()))) * kappa
    pair = ()
    if "pair" in r:
        G, ph = r["pair"]
        pair = (PairTerm((0, 1), float(G * kappa[0]), float(ph)),)
    eta = np.array(pad(r.get("eta", ()))) * kappa * A
    return QSLabel(eta=tuple(float(x) for x in eta),
                   squeeze=tuple(float(x) for x in squeeze),
                   squeeze_phase=tuple(float(x) for x in pad(r.get("squeeze_phase", ()))),
                   n_th=tuple(float(x) for x in pad(r.get("n_th", ()))),
                   pair_squeeze=pair)


def calibrate_drive(task: TaskDef | str, amplitude: float,
                    kappa_total: Sequence[float] | None = None) -> dict[str, tuple[float, ...]]:
    """Per-label drive amplitudes ``eta`` giving monitored means equal to ``A``."""
    task = get_task(task) if isinstance(task, str) else task
    kappa = (np.asarray(task.kappa_bath) + np.asarray(task.coupling)
             if kappa_total is None else np.asarray(kappa_total, float))
    return {l: _label_from_ratios(task.ratios[l], task.M, kappa, amplitude).eta
            for l in task.labels}


def task_spec(task: TaskDef | str, amplitude: float, *, detuning=(-0.67,), kerr=5.5e-3,
              gamma_h=0.5, hopping: float = 0.0, readout: Readout | None = None,
              check: bool = True) -> ChainSpec:
    """Chain for ``task`` with a Kerr processor (one mode per read-out source mode)."""
    task = get_task(task) if isinstance(task, str) else task
    kappa = np.asarray(task.kappa_bath) + np.asarray(task.coupling)
    K = len(task.readout_modes)
    detuning = tuple(float(x) for x in np.broadcast_to(np.asarray(detuning, float), (K,)))
    hop = (PairTerm((0, 1), float(hopping)),) if K > 1 and hopping else ()
    labels = {l: _label_from_ratios(task.ratios[l], task.M, kappa, amplitude)
              for l in task.labels}
    spec = ChainSpec(
        qs=QSConfig(tuple(float(x) for x in task.kappa_bath)),
        qnp=QNPConfig(detuning=detuning, kerr=float(kerr), gamma_h=float(gamma_h), hopping=hop),
        coupling=tuple(float(x) for x in task.coupling[:max(task.readout_modes) + 1]),
        labels=labels, readout=readout or Readout(), name=f"task-{task.task_id}")
    errs = validate(spec)
    if errs:
        raise SpecError(errs)
    if check:
        check_equal_means(spec, task, amplitude)
    return spec


def check_equal_means(spec: ChainSpec, task: TaskDef, amplitude: float, tol: float = 1e-8):
    """Verify ``<a_m> = A`` for the read-out source modes of every label."""
    for l in task.labels:
        lin = build_linear_system(spec, l)
        a = -np.linalg.solve(lin.L_a, lin.eta)
        for m in task.readout_modes:
            if abs(a[2 * m] - amplitude) > tol * max(1.0, abs(amplitude)):
                raise TaskError(f"task {task.task_id} label {l}: <a_{m + 1}> = {a[2 * m]:.6g}, "
                                f"expected {amplitude}")


# ---------------------------------------------------------------------------
# linear amplifiers

def pp_gain(G: float, gamma_d: float) -> float:
    """Phase-preserving power gain with ``sqrt(gain) = (g^2 + 4G^2)/(g^2 - 4G^2)``."""
    if 2 * G >= gamma_d:
        raise TaskError("phase-preserving amplifier unstable (2G >= gamma_d)")
    r = (gamma_d ** 2 + 4 * G ** 2) / (gamma_d ** 2 - 4 * G ** 2)
    return float(r * r)


def pp_coupling_for_gain(gain: float, gamma_d: float) -> float:
    """Inverse of :func:`pp_gain`."""
    if gain < 1:
        raise TaskError("gain must be >= 1")
    r = np.sqrt(gain)
    return float(gamma_d / 2 * np.sqrt((r - 1) / (r + 1)))


def amplifier_baseline(kind: str, G: float, base: ChainSpec | None = None, *,
                       phase: float = 0.0, detuning: float = 0.0) -> ChainSpec:
    """Replace the processor of ``base`` (default Task I chain) by a linear amplifier.

    ``PP``: signal mode ``b1`` (monitored) and idler ``b2`` (unmonitored)
    with ``G (-i b1 b2 + h.c.)``; the idler gets internal loss so both modes
    share the total damping ``gamma_d``.
    ``PS``: single mode with ``G (-i e^{i theta} b1^2 + h.c.)``; ``phase`` is
    the amplification phase ``theta``.
    """
    base = base if base is not None else task_spec("I", 10.0, kerr=0.0)
    gam = float(base.gamma_total()[0])
    kind = kind.upper()
    if kind == "PP":
        if 2 * G >= gam:
            raise TaskError(f"PP gain beyond instability threshold (2G = {2 * G} >= {gam})")
        qnp = QNPConfig(detuning=(detuning, detuning), kerr=0.0, gamma_h=base.qnp.gamma_h,
                        pair_squeeze=(PairTerm((0, 1), float(G), HALF_PI + phase),),
                        monitored=(True, False),
                        loss=(0.0, gam - base.qnp.gamma_h))
    elif kind == "PS":
        if 2 * G >= gam:
            raise TaskError(f"PS gain beyond instability threshold (2G = {2 * G} >= {gam})")
        qnp = QNPConfig(detuning=(detuning,), kerr=0.0, gamma_h=base.qnp.gamma_h,
                        squeeze=(2.0 * G,), squeeze_phase=(HALF_PI + phase,))
    else:
        raise TaskError(f"unknown amplifier kind {kind!r} (PP or PS)")
    spec = dataclasses.replace(base, qnp=qnp, name=f"{base.name}-{kind}")
    errs = validate(spec)
    if errs:
        raise SpecError(errs)
    return spec


def pp_noise_calibration(gain: float, n_cl: float, omega: float | None = None) -> dict:
    """Added noise, quantum efficiency and effective noise temperature.

    ``n_add = 1/2 [n_cl/G + (1 - 1/G)]`` and ``eps = n_add(G, 0)/n_add(G, n_cl)``.
    ``T_eff = n_cl hbar omega / k_B`` when a reference angular frequency is given.
    """
    if gain < 1 or n_cl < 0:
        raise TaskError("need gain >= 1 and n_cl >= 0")
    n_add = 0.5 * (n_cl / gain + (1 - 1 / gain))
    n0 = 0.5 * (1 - 1 / gain)
    out = {"gain": gain, "n_cl": n_cl, "n_add": n_add,
           "efficiency": (n0 / n_add) if n_add > 0 else 1.0}
    if omega is not None:
        from scipy.constants import hbar, k
        out["T_eff"] = n_cl * hbar * omega / k
    return out


# ---------------------------------------------------------------------------
# NVK summaries of a label pair

def nvk_summaries(spec: ChainSpec, labels: Sequence[str] | None = None, T: float | None = None,
                  mode: str = "long-leading", n_cl: float | None = None):
    """NVK solutions and feature summaries for each label."""
    labels = list(labels if labels is not None else spec.labels)
    T = spec.readout.filter_T if T is None else T
    n_cl = spec.readout.n_cl if n_cl is None else n_cl
    sols, sums = {}, {}
    for l in labels:
        s = nvk.solve(spec, l)
        sols[l] = s
        sums[l] = GaussianSummary(nvk.measured_mean(s, T),
                                  nvk.measured_covariance(s, T, mode, n_cl), analytic=True)
    return sols, sums


def reduced_gaussian(sol: nvk.NVKSolution, which: str = "b", mode: int = 0):
    """Quadrature mean and covariance of one source (``a``) or processor (``b``) mode."""
    o = sol.linsys.ordering
    if which == "a":
        i = o.a(mode)
        m = sol.expansion.a
    else:
        i = o.b(mode)
        m = np.concatenate([sol.expansion.a, sol.expansion.b + sol.delta_b])
    mm = m[i:i + 2]
    C = sol.C[i:i + 2, i:i + 2]
    return metrics.to_quadrature(mm, C)


def _teom_reduced(spec: ChainSpec, label) -> dict:
    from . import steoms
    m0, C0, _ = steoms.nvk_initial_guess(spec, label)
    sys_ = steoms.build_full_system(spec, label)
    st = steoms.teom_steady_state(sys_, m0, C0)
    o = sys_.ordering
    return {w: metrics.to_quadrature(st.m[i:i + 2], st.C[i:i + 2, i:i + 2])
            for w, i in (("a", o.a(0)), ("b", o.b(0)))}


def qcb_ratio(spec: ChainSpec, labels=None, method: str = "nvk") -> dict:
    """``zeta`` of the monitored processor mode relative to the source mode.

    ``method`` selects the reduced Gaussian states: ``"nvk"`` (expansion
    point plus mean shift and Lyapunov covariance) or ``"teom"`` (steady
    state of the unconditional truncated equations).
    """
    labels = list(labels if labels is not None else spec.labels)
    if method == "nvk":
        s1, s2 = (nvk.solve(spec, l) for l in labels[:2])
        g1 = {w: reduced_gaussian(s1, w) for w in "ab"}
        g2 = {w: reduced_gaussian(s2, w) for w in "ab"}
    elif method == "teom":
        g1, g2 = (_teom_reduced(spec, l) for l in labels[:2])
    else:
        raise ValueError(f"unknown method {method!r} (nvk or teom)")
    zq = metrics.qcb(*g1["a"], *g2["a"])
    z = metrics.qcb(*g1["b"], *g2["b"])
    return {"zeta": z, "zeta_qs": zq, "ratio": z / zq if zq > 0 else np.inf}


def operating_point_metrics(spec: ChainSpec, labels=None, T: float | None = None,
                            mode: str = "long-leading", n_cl: float | None = None) -> dict:
    """Flat metrics of one operating point (first label is the reference)."""
    labels = list(labels if labels is not None else spec.labels)
    sols, sums = nvk_summaries(spec, labels, T, mode, n_cl)
    l, p = labels[:2]
    rep = metrics.discrimination_report(sums[l], sums[p])
    out = {"norm_dmu": float(np.linalg.norm(rep.dmu)), "D_F": rep.D_F, "C_max": rep.C_max,
           "chi_b": nvk.susceptibility(sols[l].linsys)}
    if rep.geometry is not None:
        g = rep.geometry
        out.update(sigma2_dmu=g.sigma2_dmu[0], sigma2_min=g.sigma2_min[0],
                   sigma2_max=g.sigma2_max[0])
    else:
        out.update(sigma2_dmu=np.nan, sigma2_min=float(np.linalg.eigvalsh(sums[l].Sigma)[0]),
                   sigma2_max=float(np.linalg.eigvalsh(sums[l].Sigma)[-1]))
    if sums[l].mu.size == 4:
        # which label's covariance carries the entanglement is task dependent,
        # so both are reported
        out["E_N"] = metrics.log_negativity(sums[l].Sigma)
        out["E_N_p"] = metrics.log_negativity(sums[p].Sigma)
    return out


# ---------------------------------------------------------------------------
# sweeps

def _chi_at(spec: ChainSpec, label: str) -> float:
    lin = build_linear_system(spec, label)
    ep = nvk.solve_expansion_point(lin)
    if not ep.stable:
        return np.inf
    return nvk.susceptibility(nvk.linearize(lin, ep))


def susceptibility_contour(make_spec: Callable[[float, float], ChainSpec], target: float,
                           xs: Sequence[float], y_bracket: tuple[float, float],
                           n_scan: int = 60, tol: float = 1e-10, label: str | None = None):
    """Points ``(x, y)`` with ``|chi_b|(x, y) = target``.

    For each ``x`` the interval ``y_bracket`` is scanned on ``n_scan`` points
    and every crossing is refined with Brent's method.  Sign changes caused by
    an instability (where ``|chi_b|`` is infinite) are skipped.
    """
    pts = []
    for x in xs:
        def f(y):
            spec = make_spec(x, y)
            lab = label or next(iter(spec.labels))
            try:
                c = _chi_at(spec, lab)
            except nvk.NVKError:
                return np.nan
            return c - target if np.isfinite(c) else np.nan
        ys = np.linspace(*y_bracket, n_scan)
        vals = np.array([f(y) for y in ys])
        ok = np.isfinite(vals[:-1]) & np.isfinite(vals[1:]) & (np.sign(vals[:-1]) != np.sign(vals[1:]))
        for k in np.where(ok)[0]:
            try:
                y = brentq(f, ys[k], ys[k + 1], xtol=tol)
            except ValueError:
                continue  # an instability pocket inside the bracket
            pts.append((float(x), float(y)))
    return pts


def _branches(pts):
    """Group contour points into branches by their order along ``y`` at each ``x``."""
    by_x: dict[float, list[float]] = {}
    for x, y in pts:
        by_x.setdefault(x, []).append(y)
    branches: dict[tuple[int, int], list[tuple[float, float]]] = {}
    for x in sorted(by_x):
        ys = sorted(by_x[x])
        for i, y in enumerate(ys):
            branches.setdefault((len(ys), i), []).append((x, y))
    return list(branches.values())


def _contour_y(f_chi, x, y_lo, y_hi, tol=1e-10):
    g = lambda y: f_chi(x, y)
    a, b = g(y_lo), g(y_hi)
    if not (np.isfinite(a) and np.isfinite(b)) or np.sign(a) == np.sign(b):
        return None
    return brentq(g, y_lo, y_hi, xtol=tol)


def isogain_and_optimal_noise_sweep(make_spec: Callable[[float, float, float], ChainSpec],
                                    target: float, couplings: Sequence[float],
                                    xs: Sequence[float], y_bracket: tuple[float, float],
                                    labels=None, T: float | None = None,
                                    mode: str = "long-leading", n_scan: int = 40,
                                    refine: bool = True) -> list[dict]:
    """Optimal-noise trajectory along ``|chi_b| = target`` contours.

    ``make_spec(g, x, y)`` builds the chain at coupling ``g`` and contour
    coordinates ``(x, y)`` (e.g. ``Lambda`` and a detuning).  For each
    coupling the contour is traced over the ``xs`` grid with root finds in
    ``y``.  On every contour branch the grid point of least projected noise
    (first label) is then refined by bounded minimization in ``x``, staying
    on the contour.
    """
    rows = []
    for g in couplings:
        def chi_minus(x, y, g=g):
            spec = make_spec(g, x, y)
            try:
                c = _chi_at(spec, labels[0] if labels else next(iter(spec.labels)))
            except nvk.NVKError:
                return np.nan
            return c - target if np.isfinite(c) else np.nan

        def noise(x, y, g=g):
            try:
                met = operating_point_metrics(make_spec(g, x, y), labels, T, mode)
            except (nvk.NVKError, metrics.MetricError):
                return None
            return met

        pts = susceptibility_contour(lambda x, y: make_spec(g, x, y), target, xs, y_bracket,
                                     n_scan=n_scan)
        best = None
        for br in _branches(pts):
            mets = [noise(x, y) for x, y in br]
            vals = np.array([m["sigma2_dmu"] if m is not None else np.nan for m in mets])
            if not np.any(np.isfinite(vals)):
                continue
            k = int(np.nanargmin(vals))
            x_best, y_best, m_best = br[k][0], br[k][1], mets[k]
            if refine and len(br) > 1:
                lo, hi = br[max(k - 1, 0)], br[min(k + 1, len(br) - 1)]
                span = max(abs(hi[1] - br[k][1]), abs(br[k][1] - lo[1])) * 2 + 1e-3

                def y_of(x):
                    y_est = np.interp(x, [lo[0], br[k][0], hi[0]], [lo[1], br[k][1], hi[1]])
                    return _contour_y(chi_minus, x, y_est - span, y_est + span)

                def obj(x):
                    y = y_of(x)
                    m = noise(x, y) if y is not None else None
                    return 1e12 if m is None or not np.isfinite(m["sigma2_dmu"]) else m["sigma2_dmu"]

                res = minimize_scalar(obj, bounds=(lo[0], hi[0]), method="bounded",
                                      options={"xatol": 1e-6 * max(abs(hi[0] - lo[0]), 1e-300)})
                if np.isfinite(res.fun) and res.fun < vals[k]:
                    y = y_of(res.x)
                    if y is not None:
                        x_best, y_best, m_best = float(res.x), float(y), noise(res.x, y)
            row = {"coupling": float(g), "x": x_best, "y": y_best, **m_best}
            if best is None or row["sigma2_dmu"] < best["sigma2_dmu"]:
                best = row
        if best is None:
            raise TaskError(f"|chi_b| = {target} contour not found at coupling {g}")
        rows.append(best)
    return rows


def constant_separation_curve(make_spec: Callable[[float, float], ChainSpec], target: float,
                              xs: Sequence[float], y_bracket: tuple[float, float],
                              labels=None, T: float | None = None, mode: str = "long-leading",
                              n_scan: int = 40) -> list[dict]:
    """Operating points ``(x, y)`` with ``||dmu|| = target`` and their noise metrics."""
    rows = []
    for x in xs:
        def f(y):
            try:
                return operating_point_metrics(make_spec(x, y), labels, T, mode)["norm_dmu"] - target
            except (nvk.NVKError, metrics.MetricError):
                return np.nan
        ys = np.linspace(*y_bracket, n_scan)
        vals = np.array([f(y) for y in ys])
        ok = np.isfinite(vals[:-1]) & np.isfinite(vals[1:]) & (np.sign(vals[:-1]) != np.sign(vals[1:]))
        idx = np.where(ok)[0]
        if idx.size == 0:
            continue
        k = idx[0]
        y = brentq(f, ys[k], ys[k + 1], xtol=1e-12)
        met = operating_point_metrics(make_spec(x, y), labels, T, mode)
        rows.append({"x": float(x), "y": float(y), **met})
    return rows
