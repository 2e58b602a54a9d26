import json

import numpy as np
import pytest

from conftest import tiny_config
from gradreweight.cli import ablation_variants, main
from gradreweight.config import dump_config
from gradreweight.metrics import read_metrics_csv


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(dump_config(tiny_config(output={"directory": str(tmp_path / "default")})))
    return path


def _files(root):
    return sorted(p.relative_to(root).as_posix() for p in root.rglob("*") if p.is_file())


def test_run_writes_outputs_under_out(tmp_path, cfg_path):
    out = tmp_path / "runs" / "a"
    assert main(["run", "--config", str(cfg_path), "--out", str(out), "--trace"]) == 0
    assert _files(out) == ["manifest.json", "metrics.csv", "trace.csv"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["a_seen"]) == 2 and 0 <= manifest["ACC"] <= 1
    assert manifest["config"]["output"]["directory"] == str(out)
    assert not (tmp_path / "default").exists()


def test_run_is_byte_deterministic(tmp_path, cfg_path):
    for name in ("a", "b"):
        assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_seed_override_changes_run(tmp_path, cfg_path):
    main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "a")])
    main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "b"), "--seed", "5"])
    assert (tmp_path / "a" / "metrics.csv").read_bytes() != (tmp_path / "b" / "metrics.csv").read_bytes()


def test_bad_rho_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("dataset:\n  rho: 0.5\n")
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "dataset.rho" in capsys.readouterr().err


def test_divergence_exits_3(tmp_path):
    path = tmp_path / "div.yaml"
    path.write_text(dump_config(tiny_config(train={"lr_init": 1e300, "method": "finetune"})))
    out = tmp_path / "o"
    assert main(["run", "--config", str(path), "--out", str(out)]) == 3
    assert "state" in json.loads((out / "divergence.json").read_text())


def test_gen_data_feeds_npz_source(tmp_path, cfg_path):
    data_dir = tmp_path / "data"
    assert main(["gen-data", "--config", str(cfg_path), "--out", str(data_dir)]) == 0
    counts = json.loads((data_dir / "counts.json").read_text())
    assert counts["train"] == [60, 28, 13, 6]
    path = tmp_path / "npz.yaml"
    path.write_text(dump_config(tiny_config(dataset={"source": "npz", "npz_dir": str(data_dir)})))
    main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "syn")])
    main(["run", "--config", str(path), "--out", str(tmp_path / "npz")])
    assert (tmp_path / "syn" / "metrics.csv").read_bytes() == (tmp_path / "npz" / "metrics.csv").read_bytes()


def test_ablation_variant_contract():
    variants = dict(ablation_variants(tiny_config(), ["dakd", "dgr"]))
    assert set(variants) == {"finetune", "kd_only", "ours[dakd=on,dgr=on]", "ours[dakd=on,dgr=off]",
                             "ours[dakd=off,dgr=on]", "ours[dakd=off,dgr=off]"}
    assert variants["ours[dakd=off,dgr=on]"].train.use_dakd is False
    assert variants["ours[dakd=on,dgr=off]"].train.use_dgr is False
    assert variants["kd_only"].train.method == "kd_only"


def test_ablate_toggle_effects(tmp_path, cfg_path):
    out = tmp_path / "abl"
    assert main(["ablate", "--config", str(cfg_path), "--out", str(out), "--toggles", "dakd,dgr", "--trace"]) == 0
    table = (out / "ablation.csv").read_text().splitlines()
    assert table[0] == "variant,ACC,forgetting,n_seeds" and len(table) == 7
    # dakd off: sigma is pinned to 1, i.e. plain distillation
    log = read_metrics_csv(out / "ours_dakd_off_dgr_on" / "seed0" / "metrics.csv")
    assert {r[3] for r in log.select("sigma")} == {1.0}
    # dgr off: one global alpha group and no task ratio
    with open(out / "ours_dakd_on_dgr_off" / "seed0" / "trace.csv") as fh:
        r_col = {float(line.split(",")[6]) for line in list(fh)[1:]}
    assert r_col == {1.0}


def test_ablate_unknown_toggle(tmp_path, cfg_path):
    assert main(["ablate", "--config", str(cfg_path), "--out", str(tmp_path), "--toggles", "warp"]) == 2


def test_plot_outputs(tmp_path, cfg_path):
    for name, method in (("a", "ours"), ("b", "finetune")):
        path = tmp_path / f"{name}.yaml"
        path.write_text(dump_config(tiny_config(train={"method": method}, output={"label": f"run-{method}"})))
        main(["run", "--config", str(path), "--out", str(tmp_path / name)])
    assert main(["plot", str(tmp_path / "a" / "metrics.csv"), "--out", str(tmp_path / "p1")]) == 0
    svg = (tmp_path / "p1" / "accuracy.svg").read_text()
    assert "run-ours" in svg and "run-finetune" not in svg
    assert main(["plot", str(tmp_path / "a"), str(tmp_path / "b"), "--out", str(tmp_path / "p2")]) == 0
    assert main(["plot", str(tmp_path / "a"), str(tmp_path / "b"), "--out", str(tmp_path / "p3")]) == 0
    assert _files(tmp_path / "p2") == ["accuracy.svg", "forgetting.svg", "grad_mag.svg", "weight_norm.svg"]
    for f in _files(tmp_path / "p2"):
        assert (tmp_path / "p2" / f).read_bytes() == (tmp_path / "p3" / f).read_bytes()
    svg = (tmp_path / "p2" / "accuracy.svg").read_text()
    assert "run-ours" in svg and "run-finetune" in svg


def test_plot_errors(tmp_path, capsys):
    assert main(["plot", "--out", str(tmp_path)]) == 2
    bad = tmp_path / "m.csv"
    bad.write_text("phase,metric,key,value\n0,acc_seen,all,0.5\n1,acc_seen,all\n")
    assert main(["plot", str(bad), "--out", str(tmp_path / "p")]) == 2
    assert "row 3" in capsys.readouterr().err
