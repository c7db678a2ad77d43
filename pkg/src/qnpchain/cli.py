"""Command-line front end.

Every run writes into an output directory (``--out``, else ``$QNPCHAIN_OUT``,
else ``./qnpchain_out``): CSV tables, a ``summary.txt`` of ``key=value``
lines carrying the config hash, and a ``meta.json`` sidecar holding the only
non-deterministic data (timestamps, argv, versions).

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import itertools
import json
import logging
import os
import platform
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__, metrics, nvk, oracles, readout, steoms, tasks
from .chain_model import ChainSpec, SpecError, load_spec, save_spec, spec_hash, validate

log = logging.getLogger("qnpchain")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
OUT_ENV = "QNPCHAIN_OUT"


class ConfigError(ValueError):
    pass


NUMERIC_ERRORS = (nvk.NVKError, steoms.IntegrationError, oracles.OracleError,
                  metrics.MetricError, tasks.TaskError, readout.ReadoutError,
                  np.linalg.LinAlgError, FloatingPointError)


# ---------------------------------------------------------------------------
# helpers

def _parse_range(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"range {text!r} must be start:stop:steps")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"bad range {text!r}: {exc}") from None
    if n < 1:
        raise ConfigError(f"range {text!r} needs at least one step")
    return np.linspace(a, b, n)


def parse_sweep(items: list[str] | None) -> list[tuple[str, np.ndarray]]:
    out = []
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--sweep {item!r} must look like param=start:stop:steps")
        k, v = item.split("=", 1)
        out.append((k.strip(), _parse_range(v)))
    return out


_INDEXED = re.compile(r"^(?P<path>[a-z_]+\.[a-z_]+)(\[(?P<idx>\d+)\])?$")
TASK_KEYS = ("amplitude", "kerr", "detuning", "gamma_h", "hopping")


def set_param(spec: ChainSpec, key: str, value: float) -> ChainSpec:
    """Set ``section.field`` or ``section.field[i]`` on a spec."""
    m = _INDEXED.match(key)
    if not m:
        raise ConfigError(f"unknown sweep parameter {key!r}")
    path, idx = m.group("path"), m.group("idx")
    section, attr = path.split(".")
    try:
        cur = getattr(getattr(spec, section), attr)
    except AttributeError:
        raise ConfigError(f"unknown sweep parameter {key!r}") from None
    if isinstance(cur, tuple):
        vals = list(cur)
        if idx is None:
            vals = [float(value)] * len(vals)
        else:
            i = int(idx)
            if i >= len(vals):
                raise ConfigError(f"{key}: index out of range (length {len(vals)})")
            vals[i] = float(value)
        value = tuple(vals)
    elif idx is not None:
        raise ConfigError(f"{path} is scalar and takes no index")
    return spec.replace(**{path: value})


def resolve_spec(args, overrides: dict | None = None) -> ChainSpec:
    overrides = overrides or {}
    if args.spec:
        if not Path(args.spec).exists():
            raise ConfigError(f"spec file {args.spec} not found")
        if any(k in TASK_KEYS for k in overrides):
            raise ConfigError(f"parameters {TASK_KEYS} apply to --task only")
        spec = load_spec(args.spec)
        for k, v in overrides.items():
            spec = set_param(spec, k, v)
    elif args.task:
        task_kw = {k: v for k, v in overrides.items() if k in TASK_KEYS}
        spec = tasks.default_spec(args.task, **task_kw)
        for k, v in overrides.items():
            if k not in TASK_KEYS:
                spec = set_param(spec, k, v)
    else:
        raise ConfigError("one of --spec or --task is required")
    rd = spec.readout
    if getattr(args, "filter_T", None) is not None:
        rd = rd.__class__(n_cl=rd.n_cl, filter_T=float(args.filter_T), t0=rd.t0)
    if getattr(args, "ncl", None) is not None:
        rd = rd.__class__(n_cl=float(args.ncl), filter_T=rd.filter_T, t0=rd.t0)
    spec = spec.replace(readout=rd)
    errs = validate(spec)
    if errs:
        raise SpecError(errs)
    return spec


def label_pair(spec: ChainSpec, args) -> list[str]:
    labels = list(spec.labels)
    if getattr(args, "labels", None):
        labels = [s.strip() for s in args.labels.split(",")]
        missing = [l for l in labels if l not in spec.labels]
        if missing:
            raise ConfigError(f"unknown labels {missing}; spec has {list(spec.labels)}")
    if len(labels) < 2:
        raise ConfigError("discrimination needs two labels")
    return labels[:2]


def out_dir(args) -> Path:
    p = Path(args.out or os.environ.get(OUT_ENV) or "qnpchain_out")
    p.mkdir(parents=True, exist_ok=True)
    return p


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_summary(path: Path, items: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        for k, v in items.items():
            fh.write(f"{k}={_fmt(v)}\n")


def write_rows(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    keys: list[str] = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([_fmt(r.get(k, "")) for k in keys])


def write_meta(path: Path, args, config_hash: str) -> None:
    meta = {"timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "argv": sys.argv, "version": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "config_hash": config_hash, "command": args.command}
    path.write_text(json.dumps(meta, indent=2) + "\n")


def run_config(args, **extra) -> dict:
    keys = ("command", "method", "ntraj", "seed", "dt", "jobs", "mode", "labels", "t0")
    d = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    d.pop("jobs", None)  # never affects results
    d.update(extra)
    return d


def _sde_config(args, spec: ChainSpec) -> steoms.SDEConfig:
    if args.seed is None:
        raise ConfigError("--seed is required for trajectory runs")
    return steoms.SDEConfig(dt=args.dt, filter_T=spec.readout.filter_T,
                            t0=args.t0 if args.t0 is not None else spec.readout.t0,
                            seed=int(args.seed))


def _ensemble(args, spec: ChainSpec, labels):
    cfg = _sde_config(args, spec)
    feats = steoms.ensemble_run(spec, labels, cfg, args.ntraj, jobs=steoms.cpu_jobs(args.jobs))
    noisy = {}
    for l in labels:
        rng = steoms.trajectory_rng(cfg.seed, l, 0, stream=1)
        noisy[l] = readout.add_classical_noise(feats[l], spec.readout.n_cl, rng)
    return cfg, noisy


def _maybe_plot(args, kind: str, out: Path, **data) -> None:
    if not getattr(args, "plot", False):
        return
    try:
        from . import figures
    except ImportError as exc:
        raise ConfigError(f"--plot needs matplotlib ({exc}); install qnpchain[plot]") from None
    path = figures.plot(kind, out, **data)
    log.info("wrote %s", path)


# ---------------------------------------------------------------------------
# subcommands

def cmd_validate(args) -> int:
    spec = resolve_spec(args)
    out = out_dir(args)
    h = spec_hash(spec)
    save_spec(spec, out / "spec.yaml")
    write_summary(out / "summary.txt", {"config_hash": h, "status": "ok", "M": spec.M,
                                        "K": spec.K, "labels": ",".join(spec.labels)})
    write_meta(out / "meta.json", args, h)
    print(f"ok config_hash={h}")
    return EXIT_OK


def cmd_nvk(args) -> int:
    spec = resolve_spec(args)
    labels = label_pair(spec, args)
    out = out_dir(args)
    T = spec.readout.filter_T
    sols, sums = tasks.nvk_summaries(spec, labels, T, args.mode, spec.readout.n_cl)
    rep = metrics.discrimination_report(sums[labels[0]], sums[labels[1]])
    h = spec_hash(spec, run_config(args))
    flat = {"config_hash": h, "labels": ",".join(labels), "filter_T": T,
            "n_cl": spec.readout.n_cl, "mode": args.mode}
    for l in labels:
        s = sols[l]
        flat[f"chi_b_{l}"] = nvk.susceptibility(s.linsys)
        flat[f"branch_{l}"] = s.expansion.branch
        flat[f"stable_{l}"] = s.expansion.stable
        for i, x in enumerate(sums[l].mu):
            flat[f"mu_{l}_{i}"] = x
    flat.update(rep.to_flat())
    if sums[labels[0]].mu.size == 4:
        for l in labels:
            flat[f"E_N_{l}"] = metrics.log_negativity(sums[l].Sigma)
    write_summary(out / "summary.txt", flat)
    rows = []
    for l in labels:
        S = sums[l]
        for i in range(S.mu.size):
            rows.append({"label": l, "index": i, "mu": S.mu[i],
                         **{f"Sigma_{j}": S.Sigma[i, j] for j in range(S.mu.size)}})
    write_rows(out / "nvk_summary.csv", rows)
    write_meta(out / "meta.json", args, h)
    print(f"D_F={rep.D_F:.6g} C_max={rep.C_max:.6g} config_hash={h}")
    _maybe_plot(args, "summary", out, summaries=sums, labels=labels)
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = resolve_spec(args)
    labels = list(spec.labels) if not args.labels else label_pair(spec, args)
    out = out_dir(args)
    cfg, feats = _ensemble(args, spec, labels)
    h = spec_hash(spec, run_config(args, dt=cfg.dt))
    names = readout.feature_names(feats[labels[0]].shape[1] // 2)
    sets = [readout.FeatureSet(l, feats[l], names, spec.readout.filter_T,
                               cfg.t0 if cfg.t0 is not None else float("nan")) for l in labels]
    readout.write_features_csv(out / "features.csv", sets)
    summ = {"config_hash": h, "ntraj": args.ntraj, "seed": cfg.seed, "dt": cfg.dt,
            "filter_T": spec.readout.filter_T, "n_cl": spec.readout.n_cl}
    if args.ntraj >= 2:
        emp = {l: readout.empirical_summary(feats[l]) for l in labels}
        for l in labels:
            for i, x in enumerate(emp[l].mu):
                summ[f"mu_{l}_{i}"] = x
        if len(labels) >= 2:
            summ.update(metrics.discrimination_report(emp[labels[0]], emp[labels[1]]).to_flat())
    write_summary(out / "summary.txt", summ)
    write_meta(out / "meta.json", args, h)
    print(f"wrote {out / 'features.csv'} config_hash={h}")
    _maybe_plot(args, "features", out, features=feats, labels=labels)
    return EXIT_OK


def cmd_classify(args) -> int:
    spec = resolve_spec(args)
    labels = label_pair(spec, args)
    out = out_dir(args)
    if args.method == "nvk":
        _, sums = tasks.nvk_summaries(spec, labels, spec.readout.filter_T, args.mode)
        rep = metrics.discrimination_report(sums[labels[0]], sums[labels[1]])
        h = spec_hash(spec, run_config(args))
        flat = {"config_hash": h, "method": "nvk", **rep.to_flat()}
    elif args.method == "steom":
        if args.ntraj < 4:
            raise ConfigError("steom classification needs --ntraj >= 4")
        cfg, feats = _ensemble(args, spec, labels)
        h = spec_hash(spec, run_config(args, dt=cfg.dt))
        half = args.ntraj // 2
        X1, X2 = feats[labels[0]], feats[labels[1]]
        acc, bnd = metrics.lda_classify((X1[:half], X2[:half]), (X1[half:], X2[half:]),
                                        bisector=args.bisector)
        emp = [readout.empirical_summary(X[:half]) for X in (X1, X2)]
        rep = metrics.discrimination_report(*emp, accuracy=acc, boundary=bnd)
        n_test = (args.ntraj - half) * 2
        flat = {"config_hash": h, "method": "steom", "n_train": 2 * half, "n_test": n_test,
                "accuracy_binomial_sigma": float(np.sqrt(acc * (1 - acc) / n_test)),
                **rep.to_flat()}
    else:
        raise ConfigError("classify supports --method nvk or steom")
    write_summary(out / "summary.txt", flat)
    write_meta(out / "meta.json", args, h)
    print(" ".join(f"{k}={_fmt(flat[k])}" for k in ("D_F", "C_max", "accuracy") if k in flat))
    return EXIT_OK


def _grid_rows(args, sweeps, labels):
    rows = []
    keys = [k for k, _ in sweeps]
    for combo in itertools.product(*[v for _, v in sweeps]):
        point = dict(zip(keys, combo))
        spec = resolve_spec(args, point)
        try:
            met = tasks.operating_point_metrics(spec, labels, spec.readout.filter_T, args.mode)
            met["status"] = "ok"
        except NUMERIC_ERRORS as exc:
            met = {"status": f"failed: {exc}".replace(",", ";")}
        if args.qcb and "status" in met and met["status"] == "ok":
            q = tasks.qcb_ratio(spec, labels)
            met.update(zeta=q["zeta"], zeta_qs=q["zeta_qs"])
        rows.append({**point, **met})
    return rows


def cmd_sweep(args) -> int:
    if args.method != "nvk":
        raise ConfigError("sweeps are evaluated with --method nvk")
    sweeps = parse_sweep(args.sweep)
    base = resolve_spec(args)
    labels = label_pair(base, args)
    out = out_dir(args)
    if args.kind == "grid":
        if not sweeps:
            raise ConfigError("grid sweep needs at least one --sweep")
        rows = _grid_rows(args, sweeps, labels)
    else:
        if args.target is None:
            raise ConfigError(f"--kind {args.kind} needs --target")
        x_grid = _parse_range(args.x_range)
        y_lo, y_hi = (float(v) for v in args.y_bracket.split(":"))
        if args.kind == "optimal-noise":
            if base.K != 2:
                raise ConfigError("optimal-noise sweeps need a two-mode processor")
            cpl = dict(sweeps).get("qnp.hopping")
            if cpl is None:
                raise ConfigError("optimal-noise sweep needs --sweep qnp.hopping=a:b:n")

            def make(g, lam, d1):
                s = set_param(base, "qnp.hopping", g)
                s = s.replace(**{"qnp.kerr": float(lam),
                                 "qnp.detuning": (float(d1), args.detuning_ratio * float(d1))})
                return s
            rows = tasks.isogain_and_optimal_noise_sweep(make, args.target, cpl, x_grid,
                                                         (y_lo, y_hi), labels,
                                                         base.readout.filter_T, args.mode)
            for r in rows:
                r["kerr"], r["detuning_1"] = r.pop("x"), r.pop("y")
        else:
            def make(lam, d):
                return base.replace(**{"qnp.kerr": float(lam),
                                       "qnp.detuning": (float(d),) + base.qnp.detuning[1:]})
            rows = tasks.constant_separation_curve(make, args.target, x_grid, (y_lo, y_hi),
                                                   labels, base.readout.filter_T, args.mode)
            for r in rows:
                r["kerr"], r["detuning_1"] = r.pop("x"), r.pop("y")
    h = spec_hash(base, run_config(args, kind=args.kind, sweep=args.sweep or [],
                                   target=args.target, x_range=args.x_range,
                                   y_bracket=args.y_bracket, qcb=args.qcb))
    write_rows(out / "sweep.csv", rows)
    write_summary(out / "summary.txt", {"config_hash": h, "kind": args.kind, "points": len(rows)})
    write_meta(out / "meta.json", args, h)
    print(f"wrote {len(rows)} rows to {out / 'sweep.csv'} config_hash={h}")
    _maybe_plot(args, "sweep", out, rows=rows)
    return EXIT_OK


def cmd_oracle(args) -> int:
    out = out_dir(args)
    rows = []
    if args.kind == "complexp":
        p = oracles.KerrParams.from_effective_drive(args.drive, args.detuning, args.kerr,
                                                    args.gamma, args.phase)
        for j in range(args.order + 1):
            for i in range(args.order + 1):
                v = oracles.complexp_moment(p, j, i)
                rows.append({"j": j, "i": i, "re": v.real, "im": v.imag})
        h = spec_hash_free({"kind": "complexp", "E": args.drive, "delta": args.detuning,
                            "kerr": args.kerr, "gamma": args.gamma, "phase": args.phase,
                            "order": args.order})
    else:
        spec = resolve_spec(args)
        cut = tuple(int(c) for c in args.cutoffs.split(","))
        for l in spec.labels:
            res = oracles.fock_me_steady_state(spec, l, cutoffs=cut, tail_tol=args.tail_tol)
            n = res.means.size
            for i in range(n):
                rows.append({"label": l, "quantity": f"m{i}", "re": res.means[i].real,
                             "im": res.means[i].imag})
            for i in range(n):
                for j in range(i, n):
                    rows.append({"label": l, "quantity": f"C{i}{j}", "re": res.C[i, j].real,
                                 "im": res.C[i, j].imag})
            for mode, t in res.tail.items():
                rows.append({"label": l, "quantity": f"tail_{mode}", "re": t, "im": 0.0})
        h = spec_hash(spec, {"kind": "fock", "cutoffs": list(cut)})
    write_rows(out / "oracle.csv", rows)
    write_summary(out / "summary.txt", {"config_hash": h, "kind": args.kind, "rows": len(rows)})
    write_meta(out / "meta.json", args, h)
    print(f"wrote {out / 'oracle.csv'} config_hash={h}")
    return EXIT_OK


def spec_hash_free(d: dict) -> str:
    import hashlib
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def cmd_compare(args) -> int:
    spec = resolve_spec(args)
    out = out_dir(args)
    rows = []
    labels = list(spec.labels)
    T = spec.readout.filter_T
    use_oracle = args.oracle and spec.M <= 1 and spec.K <= 1
    if args.oracle and not use_oracle:
        raise ConfigError("Fock oracle comparison needs M <= 1 and K <= 1")
    cut = tuple(int(c) for c in args.cutoffs.split(","))
    emp = {}
    if args.ntraj:
        _, feats = _ensemble(args, spec, labels)
        emp = {l: readout.empirical_summary(feats[l]) for l in labels}
    for l in labels:
        s = nvk.solve(spec, l)
        sys_ = steoms.build_full_system(spec, l)
        m0, C0, _ = steoms.nvk_initial_guess(spec, l)
        te = steoms.teom_steady_state(sys_, m0, C0)
        o = s.linsys.ordering
        ib = o.b(0)
        m_nvk = np.concatenate([s.expansion.a, s.expansion.b + s.delta_b])
        orc = (oracles.fock_me_steady_state(spec, l, cutoffs=cut, tail_tol=args.tail_tol)
               if use_oracle else None)
        quantities = {"<b1>": (m_nvk[ib], te.m[ib], orc.means[ib] if orc else None),
                      "C_b1b1": (s.C[ib, ib], te.C[ib, ib], orc.C[ib, ib] if orc else None),
                      "C_b1db1": (s.C[ib + 1, ib], te.C[ib + 1, ib],
                                  orc.C[ib + 1, ib] if orc else None)}
        for q, (a, b, c) in quantities.items():
            row = {"label": l, "quantity": q, "nvk_re": a.real, "nvk_im": a.imag,
                   "teom_re": b.real, "teom_im": b.imag, "nvk_minus_teom": abs(a - b)}
            if c is not None:
                row.update(oracle_re=c.real, oracle_im=c.imag, teom_minus_oracle=abs(b - c))
            rows.append(row)
        if l in emp:
            mu = nvk.measured_mean(s, T)
            for i, x in enumerate(mu):
                rows.append({"label": l, "quantity": f"mu_{i}", "nvk_re": x, "nvk_im": 0.0,
                             "steom_re": emp[l].mu[i],
                             "steom_stderr": float(np.sqrt(emp[l].Sigma[i, i] / emp[l].n_samples))})
    h = spec_hash(spec, run_config(args, oracle=use_oracle, cutoffs=list(cut)))
    write_rows(out / "compare.csv", rows)
    write_summary(out / "summary.txt", {"config_hash": h, "rows": len(rows), "oracle": use_oracle})
    write_meta(out / "meta.json", args, h)
    print(f"wrote {out / 'compare.csv'} config_hash={h}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qnpchain", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, sim=False):
        sp.add_argument("--spec", help="chain spec (YAML)")
        sp.add_argument("--task", choices=["I", "II", "III", "IV"], help="built-in task at its default point")
        sp.add_argument("--labels", help="comma-separated label pair")
        sp.add_argument("--filter-T", dest="filter_T", type=float, help="filter window")
        sp.add_argument("--ncl", type=float, help="classical readout noise (vacuum units)")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./qnpchain_out)")
        sp.add_argument("--mode", default="long-leading", choices=nvk.COVARIANCE_MODES,
                        help="NVK covariance mode")
        sp.add_argument("--plot", action="store_true", help="also write figures (needs matplotlib)")
        if sim:
            sp.add_argument("--ntraj", type=int, default=100)
            sp.add_argument("--seed", type=int)
            sp.add_argument("--dt", type=float, default=steoms.SDEConfig.dt)
            sp.add_argument("--t0", type=float, help="filter start (default: ten relaxation times)")
            sp.add_argument("--jobs", type=int, default=1, help="worker processes (0 = all cores)")

    common(sub.add_parser("validate", help="check a spec"))
    common(sub.add_parser("nvk", help="NVK discrimination report"))
    common(sub.add_parser("simulate", help="STEOM trajectories and feature CSV"), sim=True)
    sp = sub.add_parser("classify", help="train/test LDA or analytic accuracy")
    common(sp, sim=True)
    sp.add_argument("--method", default="steom", choices=["nvk", "steom"])
    sp.add_argument("--bisector", action="store_true", help="use the naive bisector boundary")
    sp = sub.add_parser("sweep", help="parameter sweeps")
    common(sp)
    sp.add_argument("--method", default="nvk", choices=["nvk", "steom", "oracle"])
    sp.add_argument("--sweep", action="append", help="param=start:stop:steps (repeatable)")
    sp.add_argument("--kind", default="grid", choices=["grid", "optimal-noise", "constant-separation"])
    sp.add_argument("--target", type=float, help="|chi_b| or ||dmu|| target")
    sp.add_argument("--x-range", dest="x_range", default="0.005:0.01:21", help="Lambda grid")
    sp.add_argument("--y-bracket", dest="y_bracket", default="0.3:2.5", help="detuning search interval")
    sp.add_argument("--detuning-ratio", dest="detuning_ratio", type=float, default=-2.0,
                    help="Delta_2 / Delta_1 for optimal-noise sweeps")
    sp.add_argument("--qcb", action="store_true", help="add zeta and zeta_QS columns")
    sp = sub.add_parser("oracle", help="exact moment tables")
    common(sp)
    sp.add_argument("--kind", default="complexp", choices=["complexp", "fock"])
    sp.add_argument("--drive", type=float, default=0.385, help="effective drive E")
    sp.add_argument("--detuning", type=float, default=-1.0)
    sp.add_argument("--kerr", type=float, default=0.005)
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.add_argument("--phase", type=float, default=0.0)
    sp.add_argument("--order", type=int, default=2)
    sp.add_argument("--cutoffs", default="12,8", help="source,processor Fock cutoffs")
    sp.add_argument("--tail-tol", dest="tail_tol", type=float, default=1e-6,
                    help="largest allowed top-level population")
    sp = sub.add_parser("compare", help="NVK vs TEOM vs oracle vs STEOM table")
    common(sp, sim=True)
    sp.set_defaults(ntraj=0)
    sp.add_argument("--oracle", action="store_true", help="include the Fock-space oracle")
    sp.add_argument("--cutoffs", default="12,8", help="source,processor Fock cutoffs")
    sp.add_argument("--tail-tol", dest="tail_tol", type=float, default=1e-6,
                    help="largest allowed top-level population")
    return p


COMMANDS = {"validate": cmd_validate, "nvk": cmd_nvk, "simulate": cmd_simulate,
            "classify": cmd_classify, "sweep": cmd_sweep, "oracle": cmd_oracle,
            "compare": cmd_compare}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, SpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
