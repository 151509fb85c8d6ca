import json

import numpy as np
import pytest

import mowe


def small_config(**trainer):
    cfg = mowe.default_config("desk")
    cfg["data"]["samples_per_task"] = 8
    cfg["trainer"]["epochs"] = 1
    cfg["trainer"].update(trainer)
    return cfg


def test_config_round_trips_through_yaml():
    cfg = mowe.default_config("paper")
    assert mowe.config_from_yaml(mowe.config_to_yaml(cfg)) == cfg
    assert mowe.default_config("desk")["routing"]["setup"] == "indep-dep"


def test_unknown_key_is_a_config_error():
    with pytest.raises(mowe.ConfigError, match="bogus"):
        mowe.config_from_yaml("trainer:\n  bogus: 1\n")


def test_softmax_and_keep_top1():
    p = mowe.softmax(np.array([1000.0, 0.0, 1000.0]))
    assert np.isclose(p.sum(), 1.0)
    np.testing.assert_array_equal(mowe.keep_top1(p), [p[0], 0.0, 0.0])


def test_route_dep_smoothing_only_in_training():
    w = np.zeros((4, 4))
    z = np.ones((5, 4))  # [T x d_base], pooled over T inside
    train = mowe.route_dep(w, z, training=True)
    held = mowe.route_dep(w, z, training=False)
    assert train["smoothed"] and not held["smoothed"]
    assert np.count_nonzero(held["gate"]) == 1
    assert np.isclose(train["gate"][0], 0.9 * 0.25 + 0.1 * train["epsilon"])


def test_loss_values():
    assert mowe.loss_indep_entropy(np.eye(4)[1]) == 0.0
    assert np.isclose(mowe.loss_indep_entropy(np.array([0.0, 0.4, 0.0, 0.0])), -0.4 * np.log(0.4))
    one_hot = np.eye(4)
    assert np.isclose(mowe.loss_dep_entropy(one_hot), 0.0)
    assert np.isclose(mowe.loss_dep_diversity(one_hot), -np.log(4))


def test_dataset_split_and_persistence(tmp_path):
    data = mowe.generate_dataset(small_config())
    assert len(data) == 8 * len(data.tasks)
    train, held = data.split(0.75, 0)
    assert len(train) + len(held) == len(data)
    data.save(tmp_path / "d")
    again = mowe.load_dataset(tmp_path / "d")
    np.testing.assert_array_equal(again[3]["features"], data[3]["features"])
    assert again[3]["features"].shape == (data.seq_len, data.d_in)


def test_train_evaluate_checkpoint(tmp_path):
    cfg = small_config()
    train, held = mowe.generate_dataset(cfg).split(0.75, cfg["seed"])
    model, report = mowe.train(cfg, train, held)
    assert np.isfinite(report["final_eval"]["next_token_loss"])
    assert report["config"]["trainer"]["epochs"] == 1
    assert model.mixture_kinds == ["dep", "indep"]
    assert model.encoder_params()["min_ratio"] >= 10

    metrics = model.evaluate(held)
    assert metrics["next_token_loss"] == report["final_eval"]["next_token_loss"]
    model.save(tmp_path / "ck.bin", cfg)
    loaded, loaded_cfg = mowe.load_checkpoint(tmp_path / "ck.bin")
    assert loaded_cfg == mowe.normalize_config(cfg)
    assert loaded.evaluate(held, threads=2) == metrics

    out = loaded.forward(held, 0)
    assert out["logits"].shape[0] == len(out["labels"])
    assert len(out["decisions"]) == 2


def test_bad_checkpoint_is_a_format_error(tmp_path):
    bad = tmp_path / "x.bin"
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(mowe.FormatError):
        mowe.load_checkpoint(bad)


def test_grad_check_passes():
    rows = mowe.grad_check()
    assert rows and all(r["passed"] for r in rows)
    json.dumps(rows)


def test_cosine_schedule_endpoints():
    assert mowe.cosine_lr(1.0, 0, 10) == 1.0
    assert mowe.cosine_lr(1.0, 10, 10) == pytest.approx(0.0)
