import csv
import importlib.util
import json

import pytest

from qnpchain import chain_model as cm
from qnpchain import cli

from conftest import weakly_squeezed_linear_chain


def _summary(path):
    out = {}
    for line in (path / "summary.txt").read_text().splitlines():
        k, _, v = line.partition("=")
        out[k.strip()] = v.strip()
    return out


def _run(args, tmp_path, name="out"):
    out = tmp_path / name
    rc = cli.main(args + ["--out", str(out)])
    return rc, out


def test_validate(tmp_path):
    rc, out = _run(["validate", "--task", "I"], tmp_path)
    assert rc == cli.EXIT_OK
    assert (out / "spec.yaml").exists()
    meta = json.loads((out / "meta.json").read_text())
    assert meta["config_hash"] == _summary(out)["config_hash"]


def test_validate_spec_file_round_trip(tmp_path):
    _, out = _run(["validate", "--task", "II"], tmp_path)
    rc, out2 = _run(["validate", "--spec", str(out / "spec.yaml")], tmp_path, "again")
    assert rc == 0
    assert _summary(out)["config_hash"] == _summary(out2)["config_hash"]


def test_invalid_spec_is_config_error(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("qs: {kappa: [-1.0]}\nqnp: {detuning: [0.0]}\ncoupling: {Gamma: [0.5]}\n"
                 "labels: {x: {eta: [1.0]}}\n")
    rc, _ = _run(["validate", "--spec", str(p)], tmp_path)
    assert rc == cli.EXIT_CONFIG
    # wrong section shape
    p.write_text("qs: {kappa: [1.0]}\nqnp: {detuning: [0.0]}\ncoupling: [0.5]\n"
                 "labels: {x: {eta: [1.0]}}\n")
    rc, _ = _run(["validate", "--spec", str(p)], tmp_path, "shape")
    assert rc == cli.EXIT_CONFIG


def test_missing_spec_and_bad_option(tmp_path):
    assert _run(["nvk"], tmp_path)[0] == cli.EXIT_CONFIG
    assert cli.main(["nvk", "--task", "I", "--mode", "nope"]) == cli.EXIT_CONFIG


def test_nvk_report(tmp_path):
    rc, out = _run(["nvk", "--task", "I", "--filter-T", "500"], tmp_path)
    assert rc == 0
    s = _summary(out)
    assert float(s["D_F"]) > 0
    assert 0.5 <= float(s["C_max"]) <= 1
    with open(out / "nvk_summary.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 4


def test_nvk_two_mode_reports_negativity(tmp_path):
    rc, out = _run(["nvk", "--task", "II"], tmp_path)
    assert rc == 0
    assert any(k.startswith("E_N_") for k in _summary(out))


def test_simulate_is_reproducible(tmp_path):
    args = ["simulate", "--task", "I", "--ntraj", "4", "--seed", "9", "--dt", "5e-3",
            "--filter-T", "5", "--t0", "1"]
    rc1, o1 = _run(args, tmp_path, "a")
    rc2, o2 = _run(args + ["--jobs", "2"], tmp_path, "b")
    assert rc1 == rc2 == 0
    assert (o1 / "features.csv").read_bytes() == (o2 / "features.csv").read_bytes()
    assert _summary(o1)["config_hash"] == _summary(o2)["config_hash"]


def test_simulate_requires_seed(tmp_path):
    rc, _ = _run(["simulate", "--task", "I", "--ntraj", "2"], tmp_path)
    assert rc == cli.EXIT_CONFIG


def test_classify_nvk_and_steom(tmp_path):
    rc, out = _run(["classify", "--task", "I", "--method", "nvk"], tmp_path, "n")
    assert rc == 0 and float(_summary(out)["D_F"]) > 0
    rc, out = _run(["classify", "--task", "I", "--method", "steom", "--ntraj", "8", "--seed", "1",
                    "--dt", "5e-3", "--filter-T", "5", "--t0", "1"], tmp_path, "s")
    assert rc == 0
    s = _summary(out)
    assert 0 <= float(s["accuracy"]) <= 1 and int(s["n_test"]) == 8


def test_grid_sweep(tmp_path):
    rc, out = _run(["sweep", "--task", "I", "--sweep", "qnp.kerr=0.004:0.006:3"], tmp_path)
    assert rc == 0
    with open(out / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 and all(r["status"] == "ok" for r in rows)


def test_sweep_needs_axes(tmp_path):
    assert _run(["sweep", "--task", "I"], tmp_path)[0] == cli.EXIT_CONFIG
    assert _run(["sweep", "--task", "I", "--kind", "constant-separation"],
                tmp_path)[0] == cli.EXIT_CONFIG


def test_oracle_complexp(tmp_path):
    rc, out = _run(["oracle", "--kind", "complexp", "--order", "1"], tmp_path)
    assert rc == 0
    with open(out / "oracle.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert float(rows[0]["re"]) == pytest.approx(1.0)


def test_oracle_fock_and_compare(tmp_path):
    p = tmp_path / "chain.yaml"
    spec = weakly_squeezed_linear_chain(0.05)
    cm.save_spec(spec.replace(labels={"7": spec.labels["7"]}), p)
    rc, out = _run(["oracle", "--kind", "fock", "--spec", str(p), "--cutoffs", "10,6"],
                   tmp_path, "o")
    assert rc == 0
    with open(out / "oracle.csv") as fh:
        q = {r["quantity"] for r in csv.DictReader(fh)}
    assert {"tail_a", "tail_b", "m0"} <= q
    rc, out = _run(["compare", "--spec", str(p), "--oracle", "--cutoffs", "10,6"], tmp_path, "c")
    assert rc == 0
    with open(out / "compare.csv") as fh:
        rows = list(csv.DictReader(fh))
    # linear chain: all three routes coincide
    assert max(float(r["teom_minus_oracle"]) for r in rows) < 1e-8


def test_fock_cutoff_too_small_is_numeric_failure(tmp_path):
    p = tmp_path / "chain.yaml"
    cm.save_spec(weakly_squeezed_linear_chain(0.3), p)
    rc, _ = _run(["oracle", "--kind", "fock", "--spec", str(p), "--cutoffs", "4,4"], tmp_path)
    assert rc == cli.EXIT_NUMERIC


def test_compare_oracle_rejects_large_chain(tmp_path):
    rc, _ = _run(["compare", "--task", "II", "--oracle"], tmp_path)
    assert rc == cli.EXIT_CONFIG


@pytest.mark.skipif(importlib.util.find_spec("matplotlib") is None, reason="matplotlib absent")
def test_plot_flag(tmp_path):
    rc, out = _run(["nvk", "--task", "I", "--plot"], tmp_path)
    assert rc == 0
    assert list(out.glob("*.png"))
