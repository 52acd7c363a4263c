"""Config surface, persistence round-trips, ablation policies, CLI verbs."""

import json
import os

import numpy as np
import pytest

from degm.cli import (
    ablation_edge_policy,
    build_stream,
    cmd_diagnose,
    cmd_eval,
    cmd_export_v,
    cmd_train,
    config_hash,
    main,
    parse_config,
    run_ablation,
    serialize_config,
)
from degm.errors import ConfigError, FormatError
from degm.graph import GraphModel
from degm.nnkit import Rng
from degm.persist import load_checkpoint, save_graph, save_single
from degm.select_eval import eval_nll
from degm.vae import VaeComponent

DIM = 16


def minimal_config(mode="gr", **extra):
    cfg = {
        "mode": mode,
        "tasks": [{"name": "bars", "source": "synthetic", "kind": "bars",
                   "n_train": 60, "n_test": 30, "dim": DIM}],
        "train": {"epochs": 2, "batch": 16, "lr": 2e-3, "tau": 1.0,
                  "probe_size": 30, "latent_dim": 3, "hidden_dim": 8},
    }
    cfg.update(extra)
    return cfg


def two_task_config(mode="degm", **extra):
    cfg = minimal_config(mode, **extra)
    cfg["tasks"].append({"name": "stripes", "source": "synthetic", "kind": "stripes",
                         "n_train": 60, "n_test": 30, "dim": DIM})
    return cfg


# --- parsing ------------------------------------------------------------------

def test_parse_minimal_fills_defaults():
    cfg = parse_config(json.dumps({"mode": "gr", "tasks": minimal_config()["tasks"]}))
    assert cfg.train.epochs == 500
    assert cfg.train.batch == 64
    assert cfg.train.lr == pytest.approx(1e-4)
    assert cfg.train.probe_size == 1000
    assert cfg.eval_kprime == 1
    assert cfg.out_dir == "runs"


def test_parse_rejects_negative_tau():
    raw = minimal_config("degm")
    raw["train"]["tau"] = -1.0
    with pytest.raises(ConfigError, match="tau"):
        parse_config(json.dumps(raw))


def test_parse_rejects_unknown_keys_with_path():
    raw = minimal_config()
    raw["train"]["lrr"] = 0.1
    with pytest.raises(ConfigError, match=r"train\.'lrr'"):
        parse_config(json.dumps(raw))
    raw = minimal_config()
    raw["tasks"][0]["knd"] = "bars"
    with pytest.raises(ConfigError, match=r"tasks\[0\]\.'knd'"):
        parse_config(json.dumps(raw))


def test_parse_mode_and_ablation_validation():
    with pytest.raises(ConfigError, match="mode"):
        parse_config(json.dumps({"mode": "warp", "tasks": []}))
    raw = minimal_config("ablation")
    with pytest.raises(ConfigError, match="ablation"):
        parse_config(json.dumps(raw))
    raw["ablation"] = "degm-6"
    assert parse_config(json.dumps(raw)).ablation == "degm-6"


def test_parse_round_trip():
    cfg = parse_config(json.dumps(two_task_config()))
    again = parse_config(serialize_config(cfg))
    assert again.raw == cfg.raw
    assert config_hash(again) == config_hash(cfg)


def test_config_hash_sensitivity():
    a = parse_config(json.dumps(minimal_config()))
    changed = minimal_config()
    changed["train"]["lr"] = 5e-4
    b = parse_config(json.dumps(changed))
    assert config_hash(a) != config_hash(b)
    relocated = minimal_config(out_dir="elsewhere")
    c = parse_config(json.dumps(relocated))
    assert config_hash(a) == config_hash(c)  # out_dir is not semantic


def test_build_stream_desk_scale():
    raw = minimal_config()
    raw["desk_scale"] = True
    stream = build_stream(parse_config(json.dumps(raw)))
    assert stream.input_dim == DIM // 4


# --- persistence -------------------------------------------------------------------

def trained_graph(seed=0):
    g = GraphModel(DIM, 3, 8, tau=1.0)
    rng = Rng(seed)
    for i in range(2):
        g.add_basic_node(task_id=i, rng=rng.spawn(f"i:{i}"))
        g.basics[i].reference_elbo = -5.0 - i
    g.add_specific_node(np.array([0.25, 0.75]), task_id=2, rng=rng.spawn("s"))
    return g


def test_graph_checkpoint_round_trip_bit_identical(tmp_path):
    g = trained_graph(1)
    x = (Rng(2).uniform(0, 1, (40, DIM)) < 0.4).astype(np.float64)
    before = eval_nll(g, x, kprime=3, seed=4)
    ckpt = tmp_path / "checkpoint"
    save_graph(str(ckpt), g)
    kind, loaded, manifest = load_checkpoint(str(ckpt))
    assert kind == "graph"
    assert eval_nll(loaded, x, kprime=3, seed=4) == before  # bitwise, not approx
    assert loaded.basics[0].reference_elbo == -5.0
    np.testing.assert_array_equal(loaded.specifics[0].weights, [0.25, 0.75])


def test_single_checkpoint_round_trip(tmp_path):
    model = VaeComponent(DIM, 3, 8, rng=Rng(5), name="gr")
    save_single(str(tmp_path / "c"), model)
    kind, loaded, _ = load_checkpoint(str(tmp_path / "c"))
    assert kind == "single"
    x = (Rng(6).uniform(0, 1, (10, DIM)) < 0.4).astype(np.float64)
    np.testing.assert_array_equal(loaded.reconstruct(x), model.reconstruct(x))


def test_load_checkpoint_missing_manifest(tmp_path):
    with pytest.raises(FormatError):
        load_checkpoint(str(tmp_path / "nope"))


# --- ablation policies -----------------------------------------------------------------

def test_policy_degm6_uniform():
    g = trained_graph(7)
    pi = ablation_edge_policy("degm-6")(np.array([3.0, 9.0]), g)
    np.testing.assert_array_equal(pi, [0.5, 0.5])


def test_policy_degm7_one_hot_at_argmin():
    g = trained_graph(8)
    pi = ablation_edge_policy("degm-7")(np.array([3.0, 9.0]), g)
    np.testing.assert_array_equal(pi, [1.0, 0.0])


def test_policy_degm5_mask_and_degeneration():
    g = trained_graph(9)  # tau = 1.0
    below = ablation_edge_policy("degm-5")(np.array([0.2, 0.4]), g)
    uniform = ablation_edge_policy("degm-6")(np.array([0.2, 0.4]), g)
    np.testing.assert_array_equal(below, uniform)
    mixed = ablation_edge_policy("degm-5")(np.array([0.2, 5.0]), g)
    np.testing.assert_array_equal(mixed, [1.0, 0.0])


def test_policy_degm4_resolves_specifics_onto_basics():
    g = trained_graph(10)  # two basics and one specific with [0.25, 0.75]
    pi = ablation_edge_policy("degm-4")(np.array([1.0, 1.0]), g)
    np.testing.assert_allclose(pi, [(1.0 + 0.25) / 3.0, (1.0 + 0.75) / 3.0])
    assert pi.sum() == pytest.approx(1.0, abs=1e-9)


def test_all_policies_emit_simplex():
    g = trained_graph(11)
    scores = np.array([0.3, 2.5])
    for name in ("degm-4", "degm-5", "degm-6", "degm-7"):
        pi = ablation_edge_policy(name)(scores, g)
        assert pi.sum() == pytest.approx(1.0, abs=1e-9)
        assert (pi >= 0.0).all()


def test_run_ablation_table(tmp_path):
    raw = two_task_config("ablation", ablation="degm-6")
    raw["train"]["tau"] = 50.0  # force the second node to be specific
    cfg = parse_config(json.dumps(raw))
    table, graphs, _ = run_ablation(cfg, Rng(0))
    assert {r["task"] for r in table} == {"bars", "stripes"}
    assert set(table[0]) == {"task", "sl_degm", "sl_degm-6"}
    variant = graphs["degm-6"]
    assert len(variant.specifics) == 1
    np.testing.assert_array_equal(variant.specifics[0].weights, [1.0])


# --- commands ------------------------------------------------------------------------------

def test_cmd_train_degm_outputs(tmp_path):
    raw = two_task_config("degm", out_dir=str(tmp_path / "runs"))
    cfg = parse_config(json.dumps(raw))
    run_dir = cmd_train(cfg)
    for name in ("config.json", "metrics.csv", "v_matrix.csv", "summary.json",
                 "eval_metrics.csv", "checkpoint/manifest.json"):
        assert os.path.exists(os.path.join(run_dir, name)), name
    summary = json.load(open(os.path.join(run_dir, "summary.json")))
    assert summary["config_hash"] == config_hash(cfg)
    assert summary["node_counts"]["basic"] >= 1
    header = open(os.path.join(run_dir, "v_matrix.csv")).readline().strip().split(",")
    assert header[0] == "task_id" and header[1] == "C1"


def test_cmd_train_idempotent(tmp_path):
    raw = minimal_config("gr", out_dir=str(tmp_path / "runs"))
    cfg = parse_config(json.dumps(raw))
    run_dir = cmd_train(cfg)
    first = open(os.path.join(run_dir, "metrics.csv")).read()
    run_dir2 = cmd_train(cfg)
    assert run_dir2 == run_dir
    assert open(os.path.join(run_dir, "metrics.csv")).read() == first


def test_cmd_eval_on_checkpoint(tmp_path):
    raw = two_task_config("degm", out_dir=str(tmp_path / "runs"))
    cfg = parse_config(json.dumps(raw))
    run_dir = cmd_train(cfg)
    rows = cmd_eval(os.path.join(run_dir, "checkpoint"), cfg, kprime=2,
                    out_path=str(tmp_path / "eval.csv"))
    assert len(rows) == 2
    again = cmd_eval(os.path.join(run_dir, "checkpoint"), cfg, kprime=2)
    assert rows == again  # deterministic under the same seed path


def test_cmd_export_v_after_mixed_run(tmp_path):
    g = trained_graph(12)
    g.add_basic_node(task_id=3, rng=Rng(13))
    save_graph(str(tmp_path / "c"), g)
    out = tmp_path / "v.csv"
    cmd_export_v(str(tmp_path / "c"), str(out))
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "task_id,C1,C2,C3"
    rows = [line.split(",") for line in lines[1:]]
    specific_row = [float(v) for v in rows[2][1:]]
    assert sum(specific_row) == pytest.approx(1.0, abs=1e-9)
    for r in (0, 1, 3):
        assert all(float(v) == 0.0 for v in rows[r][1:])


def test_cmd_train_bounds_and_diagnose(tmp_path):
    raw = two_task_config("bounds", out_dir=str(tmp_path / "runs"))
    raw["train"]["likelihood"] = "gaussian"
    raw["bounds"] = {"sample_size": 80, "aux_epochs": 1}
    cfg = parse_config(json.dumps(raw))
    run_dir = cmd_train(cfg)
    for name in ("bounds_report.csv", "bound_check.csv", "accumulated_error.csv", "curves.csv"):
        assert os.path.exists(os.path.join(run_dir, name)), name
    # diagnose recomputes the report from stored snapshots
    out_path = cmd_diagnose(run_dir)
    lines = open(out_path).read().strip().splitlines()
    assert len(lines) == 1 + 2  # header + one task-end row per task


def test_cmd_train_order_study(tmp_path):
    raw = two_task_config("order-study", out_dir=str(tmp_path / "runs"))
    raw["orders"] = [["bars", "stripes"], ["stripes", "bars"]]
    cfg = parse_config(json.dumps(raw))
    run_dir = cmd_train(cfg)
    lines = open(os.path.join(run_dir, "order_report.csv")).read().strip().splitlines()
    assert len(lines) == 3


def test_main_cli_round_trip(tmp_path, capsys):
    config_path = tmp_path / "cfg.json"
    config_path.write_text(json.dumps(minimal_config("gr", out_dir=str(tmp_path / "runs"))))
    assert main(["train", "--config", str(config_path)]) == 0
    run_dir = capsys.readouterr().out.strip().splitlines()[-1]
    assert os.path.isdir(run_dir)
    assert main(["eval", "--checkpoint", os.path.join(run_dir, "checkpoint"),
                 "--config", str(config_path), "--kprime", "2"]) == 0


def test_main_gen_synthetic(tmp_path):
    prefix = str(tmp_path / "toy")
    assert main(["gen-synthetic", "--kind", "bars", "--n", "12", "--dim", "16",
                 "--seed", "3", "--out", prefix]) == 0
    from degm.data import load_idx
    d = load_idx(prefix + "-images.idx")
    assert d.data.shape == (12, 16)


def test_main_reports_config_errors(tmp_path, capsys):
    config_path = tmp_path / "bad.json"
    config_path.write_text(json.dumps({"mode": "warp", "tasks": []}))
    assert main(["train", "--config", str(config_path)]) == 2
    assert "error:" in capsys.readouterr().err
