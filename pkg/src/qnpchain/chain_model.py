"""Measurement-chain specification and the matrices built from it.

The chain consists of ``M`` linear source modes ``a_m`` feeding ``K`` Kerr
processor modes ``b_k`` through one-way (circulator) links, with heterodyne
monitoring of the processor modes.  Every matrix uses the operator ordering

    z = (a_1, a_1^dag, ..., a_M, a_M^dag, b_1, b_1^dag, ..., b_K, b_K^dag)

and first/second order cumulants are normal ordered.  Rates are stored as
plain numbers in units of ``ChainSpec.rate_unit``.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

__all__ = [
    "SCHEMA_VERSION", "SpecError", "PairTerm", "QSLabel", "QSConfig",
    "QNPConfig", "Readout", "ChainSpec", "Ordering", "LinearizedSystem",
    "FullSystem", "U_QUAD", "quadrature_block", "validate",
    "build_linear_system", "build_full_system", "kerr_jacobian",
    "kerr_hessian_contract", "kerr_linearized_diffusion", "linear_block",
    "sigma_involution", "load_spec", "save_spec", "spec_to_dict",
    "spec_from_dict", "spec_hash",
]

SCHEMA_VERSION = 1

#: change of basis from (b, b^dag) cumulants to (X, P) quadratures
U_QUAD = np.array([[1.0, 1.0], [-1.0j, 1.0j]]) / np.sqrt(2.0)


class SpecError(ValueError):
    """Raised for invalid chain specifications; carries every violation."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class PairTerm:
    """Bilinear two-mode term between modes ``i < j`` (0-based)."""

    modes: tuple[int, int]
    strength: float
    phase: float = 0.0


@dataclass(frozen=True)
class QSLabel:
    """Source parameters for one state label.

    Attributes
    ----------
    eta : drive amplitude per source mode.
    squeeze, squeeze_phase : single-mode squeeze strength ``G_m`` and phase.
    n_th : thermal occupation of the unmonitored bath of each mode.
    pair_squeeze : two-mode squeezing terms ``G_nm e^{-i phi} a_n a_m + h.c.``.
    """

    eta: tuple[float, ...]
    squeeze: tuple[float, ...] = ()
    squeeze_phase: tuple[float, ...] = ()
    n_th: tuple[float, ...] = ()
    pair_squeeze: tuple[PairTerm, ...] = ()

    def padded(self, M: int) -> "QSLabel":
        def pad(v):
            v = tuple(float(x) for x in v)
            return v + (0.0,) * (M - len(v))
        return dataclasses.replace(
            self, eta=pad(self.eta), squeeze=pad(self.squeeze),
            squeeze_phase=pad(self.squeeze_phase), n_th=pad(self.n_th))


@dataclass(frozen=True)
class QSConfig:
    """Source modes: ``kappa`` is the unmonitored (bath) loss of each mode."""

    kappa: tuple[float, ...]

    @property
    def M(self) -> int:
        return len(self.kappa)


@dataclass(frozen=True)
class QNPConfig:
    """Processor modes.

    ``squeeze``/``pair_squeeze`` are linear parametric terms used only by the
    linear-amplifier baselines; ``monitored`` selects the heterodyned modes
    (an unmonitored mode still decays at ``gamma_h`` into an unread port).
    ``loss`` adds optional zero-temperature internal loss per mode.
    """

    detuning: tuple[float, ...]
    kerr: float = 0.0
    gamma_h: float = 1.0
    hopping: tuple[PairTerm, ...] = ()
    squeeze: tuple[float, ...] = ()
    squeeze_phase: tuple[float, ...] = ()
    pair_squeeze: tuple[PairTerm, ...] = ()
    monitored: tuple[bool, ...] = ()
    loss: tuple[float, ...] = ()

    @property
    def K(self) -> int:
        return len(self.detuning)

    def monitored_modes(self) -> tuple[int, ...]:
        if not self.monitored:
            return tuple(range(self.K))
        return tuple(k for k, on in enumerate(self.monitored) if on)


@dataclass(frozen=True)
class Readout:
    """Classical noise ``n_cl`` (vacuum units), filter length and start.

    ``t0 = None`` selects ten relaxation times of the linearized chain.
    """

    n_cl: float = 0.0
    filter_T: float = 500.0
    t0: float | None = None


@dataclass(frozen=True)
class ChainSpec:
    """Complete, serializable description of a measurement chain."""

    qs: QSConfig
    qnp: QNPConfig
    coupling: tuple[float, ...]
    labels: Mapping[str, QSLabel]
    readout: Readout = field(default_factory=Readout)
    rate_unit: str = "kappa"
    name: str = ""

    @property
    def M(self) -> int:
        return self.qs.M

    @property
    def K(self) -> int:
        return self.qnp.K

    @property
    def R(self) -> int:
        return self.M + self.K

    def gamma_coupling(self) -> np.ndarray:
        g = np.zeros(self.M)
        g[: len(self.coupling)] = self.coupling[: self.M]
        return g

    def kappa_total(self) -> np.ndarray:
        """Total source loss ``kappa_m + Gamma_m``."""
        return np.asarray(self.qs.kappa, float) + self.gamma_coupling()

    def gamma_total(self) -> np.ndarray:
        """Total processor loss ``gamma_H + Gamma_k`` (plus any internal loss)."""
        g = np.full(self.K, float(self.qnp.gamma_h))
        g[: len(self.qnp.loss)] += self.qnp.loss[: self.K]
        gc = self.gamma_coupling()
        for k in range(min(self.K, self.M)):
            g[k] += gc[k]
        return g

    def label(self, name) -> QSLabel:
        try:
            return self.labels[str(name)].padded(self.M)
        except KeyError:
            raise SpecError([f"unknown label {name!r}"]) from None

    def replace(self, **changes) -> "ChainSpec":
        """Return a copy with top level or dotted ``section.field`` changes."""
        spec = self
        for key, value in changes.items():
            if "." in key:
                section, attr = key.split(".", 1)
                sub = getattr(spec, section)
                spec = dataclasses.replace(
                    spec, **{section: dataclasses.replace(sub, **{attr: value})})
            else:
                spec = dataclasses.replace(spec, **{key: value})
        return spec


@dataclass(frozen=True)
class Ordering:
    """Index map for the conjugate-pair operator vector."""

    M: int
    K: int

    @property
    def size(self) -> int:
        return 2 * (self.M + self.K)

    def a(self, m: int, dag: bool = False) -> int:
        return 2 * m + int(dag)

    def b(self, k: int, dag: bool = False) -> int:
        return 2 * (self.M + k) + int(dag)

    def lookup(self, index: int) -> tuple[str, int, bool]:
        mode, dag = divmod(index, 2)
        if mode < self.M:
            return "a", mode, bool(dag)
        return "b", mode - self.M, bool(dag)

    def b_slice(self) -> slice:
        return slice(2 * self.M, self.size)

    def partner(self) -> np.ndarray:
        """Permutation realizing the swap ``z <-> z^dag``."""
        idx = np.arange(self.size)
        return idx ^ 1


def quadrature_block(K: int) -> np.ndarray:
    """Block-diagonal ``U_K`` acting on ``K`` conjugate pairs."""
    return np.kron(np.eye(K), U_QUAD)


def sigma_involution(X: np.ndarray) -> np.ndarray:
    """Apply the pair swap with complex conjugation to a vector or matrix."""
    p = np.arange(X.shape[0]) ^ 1
    if X.ndim == 1:
        return np.conj(X[p])
    return np.conj(X[np.ix_(p, p)])


# ---------------------------------------------------------------------------
# linear blocks

def linear_block(loss, detuning=None, squeeze=None, squeeze_phase=None,
                 pair_squeeze=(), hopping=(), n_th=None, bath_rate=None):
    """Drift and normal-ordered diffusion of a block of linear modes.

    The block Hamiltonian is
    ``-sum D a^dag a + sum G/2 (e^{-i phi} a^2 + h.c.)
    + sum G_nm (e^{-i phi} a_n a_m + h.c.) + sum g (a_j a_k^dag + h.c.)``
    with amplitude damping ``loss`` and thermal baths of rate ``bath_rate``.

    Returns
    -------
    L, D : ndarray
        ``2n x 2n`` complex drift and symmetric diffusion matrices.
    """
    loss = np.asarray(loss, float)
    n = loss.size
    zeros = np.zeros(n)
    detuning = zeros if detuning is None else np.asarray(detuning, float)
    squeeze = zeros if squeeze is None or len(squeeze) == 0 else np.asarray(squeeze, float)
    squeeze_phase = (zeros if squeeze_phase is None or len(squeeze_phase) == 0
                     else np.asarray(squeeze_phase, float))
    n_th = zeros if n_th is None or len(n_th) == 0 else np.asarray(n_th, float)
    bath_rate = loss if bath_rate is None else np.asarray(bath_rate, float)

    L = np.zeros((2 * n, 2 * n), complex)
    D = np.zeros((2 * n, 2 * n), complex)
    for m in range(n):
        i, j = 2 * m, 2 * m + 1
        L[i, i] = 1j * detuning[m] - loss[m] / 2
        L[j, j] = np.conj(L[i, i])
        s = -1j * squeeze[m] * np.exp(1j * squeeze_phase[m])
        L[i, j] += s
        L[j, i] += np.conj(s)
        D[i, i] += s
        D[j, j] += np.conj(s)
        D[i, j] += bath_rate[m] * n_th[m]
        D[j, i] += bath_rate[m] * n_th[m]
    for term in pair_squeeze:
        p, q = term.modes
        s = -1j * term.strength * np.exp(1j * term.phase)
        L[2 * p, 2 * q + 1] += s
        L[2 * q, 2 * p + 1] += s
        L[2 * p + 1, 2 * q] += np.conj(s)
        L[2 * q + 1, 2 * p] += np.conj(s)
        D[2 * p, 2 * q] += s
        D[2 * q, 2 * p] += s
        D[2 * p + 1, 2 * q + 1] += np.conj(s)
        D[2 * q + 1, 2 * p + 1] += np.conj(s)
    for term in hopping:
        p, q = term.modes
        L[2 * p, 2 * q] += -1j * term.strength
        L[2 * q, 2 * p] += -1j * term.strength
        L[2 * p + 1, 2 * q + 1] += 1j * term.strength
        L[2 * q + 1, 2 * p + 1] += 1j * term.strength
    return L, D


# ---------------------------------------------------------------------------
# validation

def _is_hurwitz(L: np.ndarray) -> bool:
    return L.size == 0 or float(np.max(np.linalg.eigvals(L).real)) < 0.0


def validate(spec: ChainSpec) -> list[str]:
    """Return every violated invariant (empty list means valid)."""
    errors: list[str] = []
    if spec.M < 1:
        errors.append("need at least one source mode (M >= 1)")
    if spec.K < 1:
        errors.append("need at least one processor mode (K >= 1)")
    for m, k in enumerate(spec.qs.kappa):
        if k < 0:
            errors.append(f"negative source loss kappa[{m}] = {k}")
    if len(spec.coupling) > spec.M:
        errors.append(f"coupling has {len(spec.coupling)} entries for M = {spec.M}")
    for m, g in enumerate(spec.coupling):
        if g < 0:
            errors.append(f"negative coupling Gamma[{m}] = {g}")
        elif g > 0 and m >= spec.K:
            errors.append(f"Gamma[{m}] > 0 but processor mode {m} does not exist (K = {spec.K})")
    if spec.qnp.gamma_h < 0:
        errors.append(f"negative monitoring rate gamma_h = {spec.qnp.gamma_h}")
    if spec.qnp.kerr < 0:
        errors.append(f"negative Kerr strength {spec.qnp.kerr}")
    if len(spec.qnp.loss) > spec.K or any(x < 0 for x in spec.qnp.loss):
        errors.append("internal processor loss must be non-negative, one entry per mode")
    if spec.qnp.monitored and len(spec.qnp.monitored) != spec.K:
        errors.append("monitored flags must have one entry per processor mode")
    if spec.readout.n_cl < 0:
        errors.append("negative classical noise n_cl")
    if spec.readout.filter_T <= 0:
        errors.append("filter window must be positive")
    if spec.readout.t0 is not None and spec.readout.t0 < 0:
        errors.append("filter start t0 must be >= 0")
    for term in spec.qnp.hopping + spec.qnp.pair_squeeze:
        if not all(0 <= q < spec.K for q in term.modes) or term.modes[0] == term.modes[1]:
            errors.append(f"processor pair term on invalid modes {term.modes}")
    if not spec.labels:
        errors.append("no labels defined")
    if errors:
        return errors
    for name in spec.labels:
        lab = spec.labels[name]
        for attr in ("eta", "squeeze", "squeeze_phase", "n_th"):
            if len(getattr(lab, attr)) > spec.M:
                errors.append(f"label {name}: {attr} longer than M = {spec.M}")
        lab = lab.padded(spec.M)
        if any(x < 0 for x in lab.squeeze):
            errors.append(f"label {name}: negative squeeze strength")
        if any(x < 0 for x in lab.n_th):
            errors.append(f"label {name}: negative thermal occupation")
        for term in lab.pair_squeeze:
            if not all(0 <= q < spec.M for q in term.modes) or term.modes[0] == term.modes[1]:
                errors.append(f"label {name}: pair term on invalid modes {term.modes}")
            elif term.strength < 0:
                errors.append(f"label {name}: negative pair squeeze strength")
        if errors:
            continue
        L_a, _ = _source_block(spec, lab)
        if not _is_hurwitz(L_a):
            lam = np.max(np.linalg.eigvals(L_a).real)
            errors.append(f"label {name}: source drift not Hurwitz (QS unstable, max Re eig = {lam:.3g})")
    return errors


def _source_block(spec: ChainSpec, lab: QSLabel):
    return linear_block(
        spec.kappa_total(), squeeze=lab.squeeze, squeeze_phase=lab.squeeze_phase,
        pair_squeeze=lab.pair_squeeze, n_th=lab.n_th,
        bath_rate=np.asarray(spec.qs.kappa, float))


# ---------------------------------------------------------------------------
# linearized system

@dataclass(frozen=True)
class LinearizedSystem:
    """Linear part of the chain for one label, plus the Kerr strength.

    ``J_b``, ``D_b_kerr`` are filled by :func:`nvk.linearize` once the
    expansion point is known; before that ``J_b`` equals ``L_b``.
    """

    label: str
    ordering: Ordering
    L_a: np.ndarray
    D_a: np.ndarray
    eta: np.ndarray
    Gamma: np.ndarray
    L_b: np.ndarray
    D_b: np.ndarray
    kerr: float
    gamma: np.ndarray
    gamma_h: float
    monitored: tuple[int, ...]
    J_b: np.ndarray | None = None
    D_b_kerr: np.ndarray | None = None

    @property
    def M(self) -> int:
        return self.ordering.M

    @property
    def K(self) -> int:
        return self.ordering.K

    def drift(self, J_b: np.ndarray | None = None) -> np.ndarray:
        """Full block drift ``[[L_a, 0], [-Gamma, J_b]]``."""
        J_b = self.L_b if J_b is None else J_b
        nA = 2 * self.M
        J = np.zeros((self.ordering.size,) * 2, complex)
        J[:nA, :nA] = self.L_a
        J[nA:, :nA] = -self.Gamma
        J[nA:, nA:] = J_b
        return J

    def diffusion(self, D_b_kerr: np.ndarray | None = None) -> np.ndarray:
        nA = 2 * self.M
        B = np.zeros((self.ordering.size,) * 2, complex)
        B[:nA, :nA] = self.D_a
        B[nA:, nA:] = self.D_b if D_b_kerr is None else self.D_b + D_b_kerr
        return B

    def measurement_matrix(self) -> np.ndarray:
        """Heterodyne matrix (rows I_k, Q_k of monitored modes) on ``z``."""
        Mm = np.zeros((2 * len(self.monitored), self.ordering.size), complex)
        for r, k in enumerate(self.monitored):
            c = self.ordering.b(k)
            Mm[2 * r:2 * r + 2, c:c + 2] = np.sqrt(self.gamma_h) * U_QUAD
        return Mm


def build_linear_system(spec: ChainSpec, label) -> LinearizedSystem:
    """Build ``L_a, D_a, eta, Gamma, L_b`` for one label (spec must be valid)."""
    lab = spec.label(label)
    M, K = spec.M, spec.K
    L_a, D_a = _source_block(spec, lab)
    eta = np.zeros(2 * M, complex)
    eta[0::2] = lab.eta
    eta[1::2] = np.conj(eta[0::2])
    Gamma = np.zeros((2 * K, 2 * M))
    gc = spec.gamma_coupling()
    for m in range(min(M, K)):
        Gamma[2 * m, 2 * m] = Gamma[2 * m + 1, 2 * m + 1] = gc[m]
    q = spec.qnp
    L_b, D_b = linear_block(
        spec.gamma_total(), detuning=q.detuning, squeeze=q.squeeze,
        squeeze_phase=q.squeeze_phase, pair_squeeze=q.pair_squeeze,
        hopping=q.hopping)
    return LinearizedSystem(
        label=str(label), ordering=Ordering(M, K), L_a=L_a, D_a=D_a, eta=eta,
        Gamma=Gamma, L_b=L_b, D_b=D_b, kerr=float(q.kerr),
        gamma=spec.gamma_total(), gamma_h=float(q.gamma_h),
        monitored=q.monitored_modes(), J_b=L_b.copy(),
        D_b_kerr=np.zeros_like(L_b))


@dataclass(frozen=True)
class FullSystem:
    """Everything the cumulant integrators need for one label."""

    A: np.ndarray
    f: np.ndarray
    D: np.ndarray
    kerr: float
    kerr_idx: np.ndarray
    mon_idx: np.ndarray
    gamma_h: float
    ordering: Ordering


def build_full_system(spec: ChainSpec, label) -> FullSystem:
    lin = build_linear_system(spec, label)
    o = lin.ordering
    f = np.zeros(o.size, complex)
    f[: 2 * o.M] = lin.eta
    kerr_idx = np.array([o.b(k) for k in range(o.K)] if lin.kerr != 0 else [], dtype=np.int64)
    mon_idx = np.array([o.b(k) for k in lin.monitored] if lin.gamma_h > 0 else [], dtype=np.int64)
    return FullSystem(A=lin.drift(), f=f, D=lin.diffusion(), kerr=lin.kerr,
                      kerr_idx=kerr_idx, mon_idx=mon_idx, gamma_h=lin.gamma_h,
                      ordering=o)


# ---------------------------------------------------------------------------
# Kerr tensors (rescaled amplitudes bbar = sqrt(Lambda) <b>)

def _check_pairs(v: np.ndarray, tol: float = 1e-9) -> None:
    v = np.asarray(v)
    if v.ndim != 1 or v.size % 2:
        raise ValueError("expected a conjugate-pair vector of even length")
    scale = max(1.0, float(np.max(np.abs(v)))) if v.size else 1.0
    if np.max(np.abs(v[1::2] - np.conj(v[0::2])), initial=0.0) > tol * scale:
        raise ValueError("vector entries (2k, 2k+1) are not complex conjugates")


def kerr_jacobian(linsys: LinearizedSystem, bbar: np.ndarray) -> np.ndarray:
    """Linearized processor drift ``J_b`` at rescaled amplitudes ``bbar``.

    Adds ``[[2i|b|^2, i b^2], [-i b*^2, -2i|b|^2]]`` to each mode block of
    ``L_b`` (which already carries the linear couplings).
    """
    bbar = np.asarray(bbar, complex)
    _check_pairs(bbar)
    J = linsys.L_b.astype(complex).copy()
    for k in range(bbar.size // 2):
        b = bbar[2 * k]
        i, j = 2 * k, 2 * k + 1
        J[i, i] += 2j * abs(b) ** 2
        J[i, j] += 1j * b ** 2
        J[j, i] += -1j * np.conj(b) ** 2
        J[j, j] += -2j * abs(b) ** 2
    return J


def kerr_hessian_contract(bbar: np.ndarray, C_b: np.ndarray) -> np.ndarray:
    """Contract the mode-local Kerr Hessian with the local 2x2 covariances.

    For mode ``k`` with block ``[[C_bb, n], [n, C_b'b']]`` this gives
    ``h_k = i b* C_bb + 2 i b n`` and ``h_k' = -i b C_b'b' - 2 i b* n``.
    """
    bbar = np.asarray(bbar, complex)
    h = np.zeros(bbar.size, complex)
    for k in range(bbar.size // 2):
        i, j = 2 * k, 2 * k + 1
        b, bc = bbar[i], bbar[j]
        H_b = np.array([[1j * bc, 1j * b], [1j * b, 0.0]])
        H_bd = np.array([[0.0, -1j * bc], [-1j * bc, -1j * b]])
        blk = C_b[i:j + 1, i:j + 1]
        h[i] = np.sum(H_b * blk)
        h[j] = np.sum(H_bd * blk)
    return h


def kerr_linearized_diffusion(bbar: np.ndarray) -> np.ndarray:
    """Diagonal Kerr diffusion ``diag(i b_k^2, -i b_k*^2)``."""
    bbar = np.asarray(bbar, complex)
    d = np.empty(bbar.size, complex)
    d[0::2] = 1j * bbar[0::2] ** 2
    d[1::2] = -1j * bbar[1::2] ** 2
    return np.diag(d)


# ---------------------------------------------------------------------------
# serialization

def _pair_to_dict(p: PairTerm) -> dict:
    return {"modes": [int(p.modes[0]), int(p.modes[1])],
            "strength": float(p.strength), "phase": float(p.phase)}


def _pair_from_dict(d: Mapping) -> PairTerm:
    return PairTerm(tuple(int(x) for x in d["modes"]), float(d["strength"]),
                    float(d.get("phase", 0.0)))


def spec_to_dict(spec: ChainSpec) -> dict:
    q = spec.qnp
    return {
        "schema_version": SCHEMA_VERSION,
        "name": spec.name,
        "rate_unit": spec.rate_unit,
        "qs": {"kappa": [float(x) for x in spec.qs.kappa]},
        "qnp": {
            "detuning": [float(x) for x in q.detuning],
            "kerr": float(q.kerr),
            "gamma_h": float(q.gamma_h),
            "hopping": [_pair_to_dict(p) for p in q.hopping],
            "squeeze": [float(x) for x in q.squeeze],
            "squeeze_phase": [float(x) for x in q.squeeze_phase],
            "pair_squeeze": [_pair_to_dict(p) for p in q.pair_squeeze],
            "monitored": [bool(x) for x in q.monitored],
            "loss": [float(x) for x in q.loss],
        },
        "coupling": {"Gamma": [float(x) for x in spec.coupling]},
        "readout": {"n_cl": float(spec.readout.n_cl),
                    "filter_T": float(spec.readout.filter_T),
                    "t0": None if spec.readout.t0 is None else float(spec.readout.t0)},
        "labels": {
            str(name): {
                "eta": [float(x) for x in lab.eta],
                "squeeze": [float(x) for x in lab.squeeze],
                "squeeze_phase": [float(x) for x in lab.squeeze_phase],
                "n_th": [float(x) for x in lab.n_th],
                "pair_squeeze": [_pair_to_dict(p) for p in lab.pair_squeeze],
            }
            for name, lab in spec.labels.items()
        },
    }


def spec_from_dict(d: Mapping) -> ChainSpec:
    """Inverse of :func:`spec_to_dict`; raises :class:`SpecError` on bad input."""
    try:
        version = int(d.get("schema_version", SCHEMA_VERSION))
        if version != SCHEMA_VERSION:
            raise SpecError([f"unsupported schema_version {version}"])
        q = d["qnp"]
        qnp = QNPConfig(
            detuning=tuple(float(x) for x in q["detuning"]),
            kerr=float(q.get("kerr", 0.0)),
            gamma_h=float(q.get("gamma_h", 1.0)),
            hopping=tuple(_pair_from_dict(p) for p in q.get("hopping", []) or []),
            squeeze=tuple(float(x) for x in q.get("squeeze", []) or []),
            squeeze_phase=tuple(float(x) for x in q.get("squeeze_phase", []) or []),
            pair_squeeze=tuple(_pair_from_dict(p) for p in q.get("pair_squeeze", []) or []),
            monitored=tuple(bool(x) for x in q.get("monitored", []) or []),
            loss=tuple(float(x) for x in q.get("loss", []) or []),
        )
        labels = {}
        for name, lab in d["labels"].items():
            labels[str(name)] = QSLabel(
                eta=tuple(float(x) for x in lab["eta"]),
                squeeze=tuple(float(x) for x in lab.get("squeeze", []) or []),
                squeeze_phase=tuple(float(x) for x in lab.get("squeeze_phase", []) or []),
                n_th=tuple(float(x) for x in lab.get("n_th", []) or []),
                pair_squeeze=tuple(_pair_from_dict(p) for p in lab.get("pair_squeeze", []) or []),
            )
        r = d.get("readout", {}) or {}
        t0 = r.get("t0")
        coupling = d.get("coupling", {}) or {}
        return ChainSpec(
            qs=QSConfig(tuple(float(x) for x in d["qs"]["kappa"])),
            qnp=qnp,
            coupling=tuple(float(x) for x in coupling.get("Gamma", [])),
            labels=labels,
            readout=Readout(float(r.get("n_cl", 0.0)), float(r.get("filter_T", 500.0)),
                            None if t0 is None else float(t0)),
            rate_unit=str(d.get("rate_unit", "kappa")),
            name=str(d.get("name", "")),
        )
    except SpecError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise SpecError([f"malformed spec document: {exc!r}"]) from exc


def dump_spec(spec: ChainSpec) -> str:
    return yaml.safe_dump(spec_to_dict(spec), sort_keys=False, default_flow_style=None)


def save_spec(spec: ChainSpec, path) -> None:
    Path(path).write_text(dump_spec(spec))


def load_spec(path) -> ChainSpec:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise SpecError([f"cannot parse {path}{where}: {exc}"]) from exc
    if not isinstance(data, Mapping):
        raise SpecError([f"{path}: top level must be a mapping"])
    return spec_from_dict(data)


def spec_hash(spec: ChainSpec, extra: Mapping | None = None) -> str:
    """Short content hash of the spec plus run parameters."""
    payload = spec_to_dict(spec)
    if extra:
        payload = {"spec": payload, "run": dict(extra)}
    text = yaml.safe_dump(payload, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def copy_spec(spec: ChainSpec) -> ChainSpec:
    return copy.deepcopy(spec)
