"""Experiment configuration and the command-line entry point.

Verbs: train, eval, diagnose, export-v, ablate, gen-synthetic. A run writes
into <out_dir>/<config-hash>/ so identical configs land in identical places;
every table carries the config hash. Config files are JSON; unknown keys are
rejected with their dotted path so typos fail loudly.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import bounds as bounds_mod
from .data import (
    attach_labels,
    downsample,
    load_idx,
    save_idx_images,
    save_idx_labels,
    split_by_labels,
    synthetic_task,
    transform_chain,
)
from .errors import ConfigError, ContractError, FormatError
from .graph import GraphModel
from .lifelong import (
    Task,
    TaskStream,
    TrainConfig,
    accumulated_final_risk,
    order_experiment,
    run_degm,
    run_gr_hier,
    run_gr_single,
)
from .nnkit import Rng
from .persist import load_checkpoint, save_graph, save_single
from .select_eval import task_metric_table
from .vae import HierVae

MODES = ("degm", "gr", "gr-hier", "bounds", "order-study", "ablation")
ABLATIONS = ("degm-1", "degm-4", "degm-5", "degm-6", "degm-7")

TRAIN_DEFAULTS = {
    "epochs": 500, "batch": 64, "lr": 1e-4, "objective": "elbo", "kprime": 1,
    "tau": 40.0, "probe_size": 1000, "seed": 0, "specific_epochs": None,
    "latent_dim": 100, "hidden_dim": 200, "likelihood": "bernoulli",
    "hier_latent_dims": [100, 50], "hier_two_layers": True,
}
TASK_KEYS = {"name", "source", "kind", "n_train", "n_test", "dim", "center", "seed",
             "transforms", "train_images", "train_labels", "test_images", "test_labels",
             "labels", "split_groups"}
EVAL_DEFAULTS = {"kprime": 1, "k_eval": 1}
BOUNDS_DEFAULTS = {"sample_size": 10000, "aux_epochs": None}
TOP_KEYS = {"mode", "out_dir", "desk_scale", "ablation", "orders", "tasks", "train",
            "eval", "bounds"}


@dataclass
class ExperimentConfig:
    mode: str
    tasks: list[dict]
    train: TrainConfig
    out_dir: str
    ablation: str | None
    orders: list[list[str]] | None
    eval_kprime: int
    eval_k: int
    bounds_sample_size: int
    bounds_aux_epochs: int | None
    desk_scale: bool
    raw: dict  # validated dict with defaults filled; hashing happens on this


def _reject_unknown(obj: dict, allowed: set, path: str) -> None:
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown key {path}{key!r}")


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(raw, TOP_KEYS, "")

    mode = raw.get("mode")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")

    train_raw = dict(TRAIN_DEFAULTS)
    user_train = raw.get("train", {})
    if not isinstance(user_train, dict):
        raise ConfigError("train must be an object")
    _reject_unknown(user_train, set(TRAIN_DEFAULTS), "train.")
    train_raw.update(user_train)
    try:
        train = TrainConfig(**{**train_raw,
                               "hier_latent_dims": tuple(train_raw["hier_latent_dims"])})
    except ConfigError as err:
        raise ConfigError(f"train: {err}") from err
    except TypeError as err:
        raise ConfigError(f"train: {err}") from err

    tasks = raw.get("tasks")
    if not isinstance(tasks, list) or not tasks:
        raise ConfigError("tasks must be a nonempty list")
    for i, spec in enumerate(tasks):
        if not isinstance(spec, dict):
            raise ConfigError(f"tasks[{i}] must be an object")
        _reject_unknown(spec, TASK_KEYS, f"tasks[{i}].")
        source = spec.get("source", "synthetic")
        if source not in ("synthetic", "idx"):
            raise ConfigError(f"tasks[{i}].source must be 'synthetic' or 'idx'")
        if source == "synthetic":
            for key in ("kind", "dim"):
                if key not in spec:
                    raise ConfigError(f"tasks[{i}].{key} is required for synthetic tasks")
        else:
            for key in ("train_images", "test_images"):
                if key not in spec:
                    raise ConfigError(f"tasks[{i}].{key} is required for idx tasks")

    ablation = raw.get("ablation")
    if mode == "ablation":
        if ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}, got {ablation!r}")
    elif ablation is not None:
        raise ConfigError("ablation is only valid with mode 'ablation'")

    orders = raw.get("orders")
    if mode == "order-study":
        if not isinstance(orders, list) or len(orders) < 2:
            raise ConfigError("order-study needs an 'orders' list with at least two orderings")
    elif orders is not None:
        raise ConfigError("orders is only valid with mode 'order-study'")

    eval_raw = dict(EVAL_DEFAULTS)
    user_eval = raw.get("eval", {})
    _reject_unknown(user_eval, set(EVAL_DEFAULTS), "eval.")
    eval_raw.update(user_eval)
    if eval_raw["kprime"] < 1 or eval_raw["k_eval"] < 1:
        raise ConfigError("eval.kprime and eval.k_eval must be positive")

    bounds_raw = dict(BOUNDS_DEFAULTS)
    user_bounds = raw.get("bounds", {})
    _reject_unknown(user_bounds, set(BOUNDS_DEFAULTS), "bounds.")
    bounds_raw.update(user_bounds)

    filled = {
        "mode": mode, "out_dir": raw.get("out_dir", "runs"),
        "desk_scale": bool(raw.get("desk_scale", False)),
        "ablation": ablation, "orders": orders, "tasks": tasks,
        "train": train_raw, "eval": eval_raw, "bounds": bounds_raw,
    }
    return ExperimentConfig(
        mode=mode, tasks=tasks, train=train, out_dir=filled["out_dir"],
        ablation=ablation, orders=orders, eval_kprime=eval_raw["kprime"],
        eval_k=eval_raw["k_eval"], bounds_sample_size=bounds_raw["sample_size"],
        bounds_aux_epochs=bounds_raw["aux_epochs"], desk_scale=filled["desk_scale"],
        raw=filled,
    )


def serialize_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.raw, sort_keys=True, indent=1)


def config_hash(cfg: ExperimentConfig) -> str:
    """Digest of every semantically meaningful field (out_dir excluded)."""
    material = copy.deepcopy(cfg.raw)
    material.pop("out_dir")
    blob = json.dumps(material, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


# -- stream construction ------------------------------------------------------------

def _task_data_rng(spec: dict, which: str) -> Rng:
    return Rng(int(spec.get("seed", 0))).spawn(f"data:{spec.get('name', 'task')}:{which}")


def _build_one(spec: dict, desk_scale: bool) -> list[Task]:
    name = spec.get("name", spec.get("kind", "task"))
    transforms = spec.get("transforms", [])
    if spec.get("source", "synthetic") == "synthetic":
        center = tuple(spec["center"]) if "center" in spec else None
        n_train = int(spec.get("n_train", 1000))
        n_test = int(spec.get("n_test", max(1, n_train // 5)))
        train = synthetic_task(spec["kind"], n_train, int(spec["dim"]),
                               _task_data_rng(spec, "train"), center=center)
        test = synthetic_task(spec["kind"], n_test, int(spec["dim"]),
                              _task_data_rng(spec, "test"), center=center)
        pairs = [(name, train, test)]
    else:
        train = load_idx(spec["train_images"])
        test = load_idx(spec["test_images"])
        if "train_labels" in spec:
            train = attach_labels(train, load_idx(spec["train_labels"]))
        if "test_labels" in spec:
            test = attach_labels(test, load_idx(spec["test_labels"]))
        if "split_groups" in spec:
            groups = [set(g) for g in spec["split_groups"]]
            pairs = [(f"{name}-{gname}", tr, te)
                     for gname, tr, te in split_by_labels(train, test, groups)]
        elif "labels" in spec:
            keep = sorted(int(v) for v in spec["labels"])
            tr_mask = np.isin(train.labels, keep)
            te_mask = np.isin(test.labels, keep)
            if not tr_mask.any() or not te_mask.any():
                raise ConfigError(f"task {name!r}: label filter {keep} matches nothing")
            pairs = [(name, train.subset(tr_mask), test.subset(te_mask))]
        else:
            pairs = [(name, train, test)]

    tasks = []
    for task_name, tr, te in pairs:
        tr = transform_chain(tr, transforms)
        te = transform_chain(te, transforms)
        if desk_scale:
            tr, te = downsample(tr), downsample(te)
        tasks.append(Task(task_name, tr, te))
    return tasks


def build_stream(cfg: ExperimentConfig) -> TaskStream:
    tasks = []
    for spec in cfg.tasks:
        tasks.extend(_build_one(spec, cfg.desk_scale))
    return TaskStream(tasks)


# -- ablation edge policies --------------------------------------------------------------

def ablation_edge_policy(name: str):
    """Alternative weight rules; the expand-or-reuse decision is untouched."""
    if name == "degm-4":
        def policy(scores: np.ndarray, graph: GraphModel) -> np.ndarray:
            # every learned node feeds the new one equally; a specific node's
            # share resolves onto the basic sub-modules it already blends
            k = len(graph.basics)
            acc = np.zeros(k)
            for e in graph.entries:
                if e.kind == "basic":
                    acc[e.index] += 1.0
                else:
                    w = graph.specifics[e.index].weights
                    acc[:w.size] += w
            return acc / len(graph.entries)
        return policy
    if name == "degm-5":
        def policy(scores: np.ndarray, graph: GraphModel) -> np.ndarray:
            mask = (scores < graph.tau).astype(np.float64)
            if mask.sum() == 0.0:  # only possible at exact ks == tau
                mask[int(np.argmin(scores))] = 1.0
            return mask / mask.sum()
        return policy
    if name == "degm-6":
        def policy(scores: np.ndarray, graph: GraphModel) -> np.ndarray:
            return np.full(scores.size, 1.0 / scores.size)
        return policy
    if name == "degm-7":
        def policy(scores: np.ndarray, graph: GraphModel) -> np.ndarray:
            one_hot = np.zeros(scores.size)
            one_hot[int(np.argmin(scores))] = 1.0
            return one_hot
        return policy
    if name == "degm-1":
        return None  # shortened specific training, not a weight rule
    raise ConfigError(f"unknown ablation {name!r}")


def run_ablation(cfg: ExperimentConfig, rng: Rng) -> tuple[list[dict], dict, dict]:
    """Baseline run plus the selected variant; side-by-side square-loss table."""
    stream = build_stream(cfg)
    base_graph, base_log = run_degm(stream, cfg.train, rng, run_id="degm")
    name = cfg.ablation
    if name == "degm-1":
        variant_cfg = TrainConfig(**{**cfg.train.__dict__, "specific_epochs": 5})
        variant_graph, variant_log = run_degm(stream, variant_cfg, rng, run_id=name)
    else:
        variant_graph, variant_log = run_degm(stream, cfg.train, rng, run_id=name,
                                              edge_policy=ablation_edge_policy(name))
    table = []
    last = len(stream)
    for t in range(1, last + 1):
        base_sl = base_log.query(task_index=last, eval_task=t)[-1]["square_loss"]
        var_sl = variant_log.query(task_index=last, eval_task=t)[-1]["square_loss"]
        table.append({"task": stream.tasks[t - 1].name, "sl_degm": base_sl,
                      f"sl_{name}": var_sl})
    graphs = {"degm": base_graph, name: variant_graph}
    logs = {"degm": base_log, name: variant_log}
    return table, graphs, logs


# -- commands -----------------------------------------------------------------------------

def _run_dir(cfg: ExperimentConfig) -> str:
    path = os.path.join(cfg.out_dir, config_hash(cfg))
    os.makedirs(path, exist_ok=True)
    return path


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)


def _write_table(path: str, rows: list[dict], config_hash: str | None = None) -> None:
    import csv as _csv
    if not rows:
        raise ContractError(f"refusing to write empty table {path}")
    if config_hash is not None:
        rows = [{**r, "config_hash": config_hash} for r in rows]
    with open(path, "w", newline="") as fh:
        writer = _csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def export_v_csv(graph: GraphModel, path: str) -> None:
    v = graph.v_matrix()
    header = ["task_id"] + [f"C{k + 1}" for k in range(v.shape[1])]
    lines = [",".join(header)]
    for row, entry in zip(v, graph.entries):
        lines.append(",".join([str(entry.task_id)] + [repr(float(val)) for val in row]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_train(cfg: ExperimentConfig) -> str:
    """Run the configured experiment; returns the run directory."""
    run_dir = _run_dir(cfg)
    digest = config_hash(cfg)
    with open(os.path.join(run_dir, "config.json"), "w") as fh:
        fh.write(serialize_config(cfg))
    rng = Rng(cfg.train.seed)
    stream = build_stream(cfg)
    summary: dict = {"config_hash": digest, "mode": cfg.mode, "seed": cfg.train.seed,
                     "tasks": [t.name for t in stream.tasks]}

    if cfg.mode in ("degm", "ablation"):
        if cfg.mode == "degm":
            graph, log = run_degm(stream, cfg.train, rng, run_id=digest)
        else:
            table, graphs, logs = run_ablation(cfg, rng)
            _write_table(os.path.join(run_dir, "ablation_table.csv"), table, digest)
            graph, log = graphs[cfg.ablation], logs[cfg.ablation]
        log.to_csv(os.path.join(run_dir, "metrics.csv"))
        save_graph(os.path.join(run_dir, "checkpoint"), graph,
                   extra={"config_hash": digest})
        export_v_csv(graph, os.path.join(run_dir, "v_matrix.csv"))
        metric_rows = task_metric_table(graph, stream, kprime=cfg.eval_kprime)
        _write_table(os.path.join(run_dir, "eval_metrics.csv"), metric_rows, digest)
        summary["node_counts"] = {
            "basic": len(graph.basics), "specific": len(graph.specifics)}
        summary["mean_nll"] = float(np.mean([r["nll"] for r in metric_rows]))
        summary["mean_sl"] = float(np.mean([r["sl"] for r in metric_rows]))
    elif cfg.mode in ("gr", "gr-hier"):
        runner = run_gr_hier if cfg.mode == "gr-hier" else run_gr_single
        model, log, artifacts = runner(stream, cfg.train, rng, run_id=digest)
        log.to_csv(os.path.join(run_dir, "metrics.csv"))
        save_single(os.path.join(run_dir, "checkpoint"), model,
                    extra={"config_hash": digest})
        for i, snap in enumerate(artifacts.snapshots):
            save_single(os.path.join(run_dir, "checkpoint", f"task_{i + 1}"), snap,
                        extra={"config_hash": digest, "task_index": i + 1})
        summary["final_accumulated_risk"] = accumulated_final_risk(log, stream)
    elif cfg.mode == "bounds":
        out = bounds_mod.bounds_run(stream, cfg.train, rng,
                                    sample_size=cfg.bounds_sample_size,
                                    aux_epochs=cfg.bounds_aux_epochs, run_id=digest)
        out.metrics_log.to_csv(os.path.join(run_dir, "metrics.csv"))
        bounds_mod.write_bounds_csv(out.rows, os.path.join(run_dir, "bounds_report.csv"),
                                    n_tasks=len(stream), config_hash=digest)
        _write_table(os.path.join(run_dir, "bound_check.csv"), bounds_mod.bound_check_report(out), digest)
        proxy_rows = bounds_mod.accumulated_error_proxy(
            out.gr_artifacts.snapshots, stream, out.gr_model, rng.spawn("accum"))
        _write_table(os.path.join(run_dir, "accumulated_error.csv"), proxy_rows, digest)
        curves = bounds_mod.forgetting_curves(None, out.metrics_log, stream.input_dim)
        curves = [{**r, "config_hash": digest} for r in curves]
        bounds_mod.write_curves_csv(curves, os.path.join(run_dir, "curves.csv"))
        save_single(os.path.join(run_dir, "checkpoint"), out.gr_model,
                    extra={"config_hash": digest})
        for i, snap in enumerate(out.gr_artifacts.snapshots):
            save_single(os.path.join(run_dir, "checkpoint", f"task_{i + 1}"), snap,
                        extra={"config_hash": digest, "task_index": i + 1})
        summary["final_slack"] = out.rows[-1].slack
    elif cfg.mode == "order-study":
        orders = _order_streams(cfg, stream)
        report = order_experiment(orders, cfg.train, rng)
        _write_table(os.path.join(run_dir, "order_report.csv"), report, digest)
        summary["orders"] = [r["order"] for r in report]
    _write_json(os.path.join(run_dir, "summary.json"), summary)
    return run_dir


def _order_streams(cfg: ExperimentConfig, stream: TaskStream) -> list[TaskStream]:
    by_name = {t.name: t for t in stream.tasks}
    orders = []
    for i, names in enumerate(cfg.orders):
        missing = [n for n in names if n not in by_name]
        if missing:
            raise ConfigError(f"orders[{i}] references unknown tasks {missing}")
        orders.append(TaskStream([by_name[n] for n in names]))
    return orders


def cmd_eval(checkpoint_dir: str, cfg: ExperimentConfig, kprime: int,
             out_path: str | None = None) -> list[dict]:
    """Metric table for a stored model on the configured stream."""
    kind, model, _ = load_checkpoint(checkpoint_dir)
    stream = build_stream(cfg)
    if kind == "graph":
        rows = task_metric_table(model, stream, kprime=kprime)
    else:
        from .select_eval import eval_nll_single, reconstruction_metrics
        rows = []
        for task in stream.tasks:
            data = task.test.data
            base = model.base if isinstance(model, HierVae) else model
            recon = model.reconstruct(data)
            sl, ps, ss = reconstruction_metrics(data, recon)
            rows.append({"task": task.name,
                         "nll": eval_nll_single(base, data, kprime=kprime),
                         "sl": sl, "psnr": ps, "ssim": ss, "chosen_hist": "1"})
    if out_path:
        _write_table(out_path, rows)
    return rows


def cmd_diagnose(run_dir: str) -> str:
    """Recompute bound diagnostics at task-end granularity from stored snapshots."""
    config_path = os.path.join(run_dir, "config.json")
    if not os.path.exists(config_path):
        raise FormatError(f"no config.json in {run_dir}")
    with open(config_path) as fh:
        cfg = parse_config(fh.read())
    stream = build_stream(cfg)
    rng = Rng(cfg.train.seed)
    snapshots = []
    for i in range(len(stream)):
        snap_dir = os.path.join(run_dir, "checkpoint", f"task_{i + 1}")
        if not os.path.isdir(snap_dir):
            raise FormatError(f"missing snapshot {snap_dir}; diagnose needs a gr/bounds run")
        _, snap, _ = load_checkpoint(snap_dir)
        snapshots.append(snap)

    rows = []
    refs = {}
    aux_epochs = cfg.bounds_aux_epochs or cfg.train.epochs
    for i, task in enumerate(stream.tasks):
        refs[i] = bounds_mod._train_plain(task.train.data, cfg.train,
                                          rng.spawn(f"bounds:ref:{task.name}"),
                                          aux_epochs, name=f"ref{i}")
    eval_eps = rng.spawn("bounds:eval").normal((1, cfg.train.latent_dim))
    mixtures, aux_models, gen_samples, transition_ra = [], {}, {}, {}
    for t, task in enumerate(stream.tasks):
        model = snapshots[t]
        if t == 0:
            mixture = task.train.data
            aux = model
        else:
            # the training mixture is reproducible from the previous snapshot
            replay = snapshots[t - 1].generate(t * task.train.n, rng.spawn(f"gr:replay:{t}"))
            mixture = np.concatenate([task.train.data, replay])
            aux = bounds_mod._train_plain(mixture, cfg.train, rng.spawn(f"bounds:aux:{t}"),
                                          aux_epochs, name=f"aux{t}")
            aux_models[t] = aux
        mixtures.append(mixture)
        if t > 0:
            gen_samples[t - 1] = snapshots[t - 1].generate(
                min(cfg.bounds_sample_size, 512), rng.spawn(f"bounds:gen:{t - 1}"))
        hset = bounds_mod.HypothesisSet()
        hset.register("current", model)
        hset.register("aux", aux)
        for k in range(t + 1):
            hset.register(f"ref{k}", refs[k])
        target_sets = [stream.tasks[k].test.data for k in range(t + 1)]
        union = np.concatenate(target_sets)
        disc = bounds_mod.estimate_discrepancy(union, mixture, hset)
        gap = bounds_mod.estimate_kl_gap(model, target_sets, mixture,
                                         cfg.bounds_sample_size, rng.spawn(f"bounds:kl:{t}"))
        target_risks = [bounds_mod.risk(model, ts) for ts in target_sets]
        eps_proxy = bounds_mod.risk(aux, mixture) + bounds_mod.risk(aux, union)
        ra_now = disc + eps_proxy
        err_a = sum(transition_ra[j] for j in range(t)) + ra_now
        transition_ra[t] = ra_now
        err_d = bounds_mod.replay_risk_differences(model, snapshots, aux_models,
                                                   mixtures, gen_samples, t)
        lhs = float(np.mean([bounds_mod._neg_elbo_mean(model, ts, eval_eps)
                             for ts in target_sets]))
        rhs_source = bounds_mod._neg_elbo_mean(model, mixture, eval_eps)
        rows.append(bounds_mod.BoundsRow(
            task_t=t + 1, epoch=cfg.train.epochs,
            source_risk=bounds_mod.risk(model, mixture),
            target_risks=target_risks, target_risk_avg=float(np.mean(target_risks)),
            kl_gap=gap, disc_lower_bound=disc, lhs_target_neg_elbo=lhs,
            rhs_source_neg_elbo=rhs_source, eps_proxy=eps_proxy,
            slack=rhs_source + gap + disc + eps_proxy - lhs,
            err_a_proxy=err_a, err_d_proxy=err_d))
    out_path = os.path.join(run_dir, "bounds_report.csv")
    bounds_mod.write_bounds_csv(rows, out_path, n_tasks=len(stream),
                                config_hash=config_hash(cfg))
    return out_path


def cmd_export_v(checkpoint_dir: str, out_path: str) -> None:
    kind, model, _ = load_checkpoint(checkpoint_dir)
    if kind != "graph":
        raise ContractError("export-v needs a graph checkpoint")
    export_v_csv(model, out_path)


def cmd_gen_synthetic(kind: str, n: int, dim: int, seed: int, out_prefix: str) -> None:
    data = synthetic_task(kind, n, dim, Rng(seed).spawn(f"data:{kind}"))
    side = int(round(np.sqrt(dim)))
    if side * side != dim:
        raise ConfigError("gen-synthetic writes IDX images and needs a square dim")
    save_idx_images(out_prefix + "-images.idx", data.data, side, side)
    save_idx_labels(out_prefix + "-labels.idx", np.zeros(n, dtype=np.int64))


def _load_config_file(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="degm", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p_train = sub.add_parser("train", help="run the configured experiment")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--out", default=None)
    p_train.add_argument("--desk-scale", action="store_true")

    p_eval = sub.add_parser("eval", help="metric table for a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--kprime", type=int, default=None)
    p_eval.add_argument("--out", default=None)

    p_diag = sub.add_parser("diagnose", help="bound diagnostics for a stored run")
    p_diag.add_argument("run_dir")

    p_export = sub.add_parser("export-v", help="write the task-by-node weight matrix")
    p_export.add_argument("--checkpoint", required=True)
    p_export.add_argument("--out", required=True)

    p_ablate = sub.add_parser("ablate", help="train with an alternative edge policy")
    p_ablate.add_argument("--config", required=True)
    p_ablate.add_argument("--seed", type=int, default=None)
    p_ablate.add_argument("--out", default=None)

    p_gen = sub.add_parser("gen-synthetic", help="write a synthetic task as IDX files")
    p_gen.add_argument("--kind", required=True)
    p_gen.add_argument("--n", type=int, default=1000)
    p_gen.add_argument("--dim", type=int, default=64)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True, help="output path prefix")

    args = parser.parse_args(argv)
    try:
        if args.verb in ("train", "ablate"):
            cfg = _load_config_file(args.config)
            if args.verb == "ablate" and cfg.mode != "ablation":
                raise ConfigError("ablate needs a config with mode 'ablation'")
            if args.seed is not None:
                cfg.raw["train"]["seed"] = args.seed
                cfg = parse_config(json.dumps(cfg.raw))
            if args.out is not None:
                cfg.out_dir = args.out
                cfg.raw["out_dir"] = args.out
            if getattr(args, "desk_scale", False):
                cfg.raw["desk_scale"] = True
                cfg = parse_config(json.dumps(cfg.raw))
            run_dir = cmd_train(cfg)
            print(run_dir)
        elif args.verb == "eval":
            cfg = _load_config_file(args.config)
            kprime = args.kprime if args.kprime is not None else cfg.eval_kprime
            out = args.out or os.path.join(os.path.dirname(args.checkpoint.rstrip("/")),
                                           "eval_metrics.csv")
            rows = cmd_eval(args.checkpoint, cfg, kprime, out)
            for row in rows:
                print(row)
        elif args.verb == "diagnose":
            print(cmd_diagnose(args.run_dir))
        elif args.verb == "export-v":
            cmd_export_v(args.checkpoint, args.out)
            print(args.out)
        elif args.verb == "gen-synthetic":
            cmd_gen_synthetic(args.kind, args.n, args.dim, args.seed, args.out)
            print(args.out)
    except (ConfigError, ContractError, FormatError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
