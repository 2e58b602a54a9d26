import pytest
from hypothesis import given, strategies as st

from gradreweight.config import ExperimentConfig, dump_config, load_config, reference_config
from gradreweight.errors import ParameterError
from gradreweight.trainer import lr_at


def test_defaults_follow_training_recipe():
    t = ExperimentConfig().train
    assert (t.batch_size, t.lr_init, t.gamma, t.lambda_b, t.tau) == (128, 0.1, 1.0, 1.0, 2.0)


def test_lr_schedule():
    cfg = ExperimentConfig().replace(train={"lr_drops": [[80, 10.0], [120, 10.0]]}).train
    assert lr_at(cfg, 100) == pytest.approx(0.01)
    assert lr_at(cfg, 0) == 0.1
    assert lr_at(cfg, 130) == pytest.approx(0.001)
    flat = ExperimentConfig().replace(train={"lr_drops": []}).train
    assert {lr_at(flat, e) for e in range(50)} == {0.1}


def test_unknown_keys_rejected():
    with pytest.raises(ParameterError, match="unknown key"):
        ExperimentConfig.from_dict({"train": {"learning_rate": 1}})
    with pytest.raises(ParameterError, match="unknown config section"):
        ExperimentConfig.from_dict({"optim": {}})


def test_errors_name_the_field():
    with pytest.raises(ParameterError, match="dataset.rho"):
        ExperimentConfig().replace(dataset={"rho": 0.5})
    with pytest.raises(ParameterError, match="protocol.n_tasks"):
        ExperimentConfig().replace(protocol={"n_tasks": 3})
    with pytest.raises(ParameterError, match="memory.budget"):
        ExperimentConfig().replace(memory={"regime": "fixed"})


def test_load_config_errors(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("train: [unclosed\n")
    with pytest.raises(ParameterError, match="YAML"):
        load_config(bad)
    with pytest.raises(ParameterError):
        load_config(tmp_path / "missing.yaml")


@given(
    st.floats(1, 200), st.integers(1, 1000), st.sampled_from([2, 4, 6, 8, 10]), st.sampled_from(["LFS", "LFH"]),
    st.sampled_from(["growing", "fixed"]), st.integers(1, 50), st.sampled_from(["ours", "finetune", "kd_only"]),
    st.one_of(st.none(), st.integers(1, 64)), st.booleans(),
)
def test_yaml_roundtrip(rho, n_max, c, protocol, regime, mem, method, hidden, trace):
    n_tasks = 1
    mem_cfg = {"regime": regime, "n_eps": mem} if regime == "growing" else {"regime": regime, "budget": mem}
    cfg = ExperimentConfig().replace(
        dataset={"rho": rho, "n_max": n_max, "num_classes": c},
        protocol={"protocol": protocol, "n_tasks": n_tasks},
        memory=mem_cfg,
        train={"method": method, "hidden_dim": hidden},
        output={"trace": trace},
    )
    import yaml

    again = ExperimentConfig.from_dict(yaml.safe_load(dump_config(cfg)))
    assert again == cfg
    assert dump_config(again) == dump_config(cfg)


def test_reference_file_matches_helper():
    import pathlib

    path = pathlib.Path(__file__).resolve().parents[1] / "configs" / "reference.yaml"
    cfg = load_config(path)
    assert cfg.replace(output={"directory": "x"}) == reference_config(output={"directory": "x"})
