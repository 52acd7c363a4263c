"""Task-sequence training loops.

Two families live here: the expanding-graph run (one new node per task, old
nodes frozen) and the single-model generative-replay baselines (one parameter
set retrained on its own generations plus the new task).

Randomness is keyed by (seed, task name), never by stream position, so the
same task trains identically wherever it appears in the order. Evaluation
draws inside the metrics loop are fixed per task, which keeps the logged
numbers of a frozen node exactly constant across later epochs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import Dataset
from .errors import ConfigError
from .graph import GraphModel, NodeEntry, edge_weights, expansion_decide
from .nnkit import DEFAULT_SIGMA, AdamState, Rng, adam_step, backprop, no_grad
from .vae import HierVae, VaeComponent

METRICS_COLUMNS = ("run_id", "task_index", "epoch", "eval_task", "objective_value", "square_loss")


@dataclass
class Task:
    name: str
    train: Dataset
    test: Dataset

    def __post_init__(self):
        if self.train.dim != self.test.dim:
            raise ConfigError(f"task {self.name!r}: train dim {self.train.dim} != test dim {self.test.dim}")


@dataclass
class TaskStream:
    tasks: list[Task]

    def __post_init__(self):
        if not self.tasks:
            raise ConfigError("task stream is empty")
        dims = {t.train.dim for t in self.tasks}
        if len(dims) != 1:
            raise ConfigError(f"tasks disagree on input_dim: {sorted(dims)}")

    @property
    def input_dim(self) -> int:
        return self.tasks[0].train.dim

    def __len__(self) -> int:
        return len(self.tasks)


@dataclass
class TrainConfig:
    epochs: int = 500
    batch: int = 64
    lr: float = 1e-4
    objective: str = "elbo"  # elbo | iwelbo | auto (auto is an elbo alias)
    kprime: int = 1
    tau: float = 40.0
    probe_size: int = 1000
    seed: int = 0
    specific_epochs: int | None = None
    latent_dim: int = 100
    hidden_dim: int = 200
    likelihood: str = "bernoulli"
    sigma: float = DEFAULT_SIGMA
    hier_latent_dims: tuple[int, int] = (100, 50)
    hier_two_layers: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch < 1 or self.probe_size < 1 or self.kprime < 1:
            raise ConfigError("epochs, batch, probe_size and kprime must be positive")
        if self.specific_epochs is not None and self.specific_epochs < 1:
            raise ConfigError("specific_epochs must be positive when set")
        if self.lr <= 0.0:
            raise ConfigError("lr must be positive")
        if self.tau < 0.0:
            raise ConfigError("tau must be nonnegative")
        if self.objective not in ("elbo", "iwelbo", "auto"):
            raise ConfigError(f"unknown objective {self.objective!r}")
        if self.likelihood not in ("bernoulli", "gaussian"):
            raise ConfigError(f"unknown likelihood {self.likelihood!r}")

    @property
    def uses_iw(self) -> bool:
        return self.objective == "iwelbo"


@dataclass
class MetricsLog:
    rows: list[dict] = field(default_factory=list)

    def add(self, **row) -> None:
        self.rows.append(row)

    def query(self, **match) -> list[dict]:
        return [r for r in self.rows if all(r[k] == v for k, v in match.items())]

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=METRICS_COLUMNS)
            writer.writeheader()
            writer.writerows(self.rows)


def _minibatches(n: int, batch: int, rng: Rng):
    perm = rng.permutation(n)
    for start in range(0, n, batch):
        yield perm[start:start + batch]


def _eval_eps(rng: Rng, task: Task, latent_dim: int) -> np.ndarray:
    # one fixed broadcast draw per task: frozen nodes then log constant values
    return rng.spawn(f"eval:{task.name}").normal((1, latent_dim))


def mean_square_loss(x: np.ndarray, recon: np.ndarray) -> float:
    """Mean over samples of the per-sample summed squared error."""
    return float(((x - recon) ** 2).sum(axis=1).mean())


# -- expanding graph -------------------------------------------------------------

EdgePolicy = Callable[[np.ndarray, GraphModel], np.ndarray]


def adaptive_edge_policy(scores: np.ndarray, graph: GraphModel) -> np.ndarray:
    return edge_weights(scores)


def run_degm(stream: TaskStream, cfg: TrainConfig, rng: Rng, run_id: str = "degm",
             edge_policy: EdgePolicy | None = None) -> tuple[GraphModel, MetricsLog]:
    """One new node per task; probe the next task, score the basic nodes, and
    expand with either a fresh basic node or a weighted specific node."""
    graph = GraphModel(stream.input_dim, cfg.latent_dim, cfg.hidden_dim,
                       cfg.likelihood, cfg.sigma, cfg.tau)
    log = MetricsLog()
    policy = edge_policy or adaptive_edge_policy
    eval_eps = [_eval_eps(rng, t, cfg.latent_dim) for t in stream.tasks]

    pending: tuple[str, np.ndarray | None] = ("basic", None)
    for i, task in enumerate(stream.tasks):
        init_rng = rng.spawn(f"init:{task.name}")
        if pending[0] == "basic":
            node_idx = graph.add_basic_node(task_id=i, rng=init_rng)
        else:
            node_idx = graph.add_specific_node(pending[1], task_id=i, rng=init_rng)
        entry = graph.entries[node_idx]

        epochs = cfg.epochs
        if entry.kind == "specific" and cfg.specific_epochs is not None:
            epochs = cfg.specific_epochs
        _train_node(graph, entry, task, cfg, epochs, rng, log, run_id, i, stream, eval_eps)

        if i + 1 < len(stream):
            nxt = stream.tasks[i + 1]
            probe = _draw_probe(nxt, cfg.probe_size, rng.spawn(f"probe:{nxt.name}"))
            scores = graph.knowledge_scores(probe, rng.spawn(f"ks:{nxt.name}"))
            kind, _ = expansion_decide(scores, cfg.tau)
            pending = (kind, policy(scores, graph) if kind == "specific" else None)
    return graph, log


def _draw_probe(task: Task, probe_size: int, rng: Rng) -> np.ndarray:
    idx = rng.choice_without_replacement(task.train.n, probe_size)
    return task.train.data[idx]


def _node_objective(graph: GraphModel, entry: NodeEntry, x: np.ndarray, cfg: TrainConfig, rng: Rng):
    kprime = cfg.kprime if cfg.uses_iw else 1
    if entry.kind == "basic":
        vae = graph.basics[entry.index].vae
        return vae.iwelbo(x, kprime, rng=rng) if kprime > 1 else vae.elbo(x, rng=rng)
    s = graph.specifics[entry.index]
    return graph.melbo_iw(s, x, kprime, rng=rng) if kprime > 1 else graph.melbo(s, x, rng=rng)


def _train_node(graph, entry, task, cfg, epochs, rng, log, run_id, task_i, stream, eval_eps):
    state = AdamState(lr=cfg.lr)
    params = graph.trainable_params(entry)
    train_rng = rng.spawn(f"train:{task.name}")
    ref_rng = rng.spawn(f"ref:{task.name}")
    data = task.train.data
    ref_sum, ref_count = 0.0, 0
    for epoch in range(epochs):
        final = epoch == epochs - 1
        for idx in _minibatches(data.shape[0], cfg.batch, train_rng):
            x = data[idx]
            values = _node_objective(graph, entry, x, cfg, train_rng)
            adam_step(state, params, backprop(-values.mean()))
            if final and entry.kind == "basic":
                with no_grad():
                    batch_elbo = graph.basics[entry.index].vae.elbo(x, rng=ref_rng).data
                ref_sum += float(batch_elbo.sum())
                ref_count += batch_elbo.size
        _log_epoch(graph, stream, task_i, epoch, log, run_id, eval_eps)
    if entry.kind == "basic":
        graph.basics[entry.index].reference_elbo = ref_sum / ref_count


def _log_epoch(graph, stream, task_i, epoch, log, run_id, eval_eps):
    for t in range(task_i + 1):
        entry = graph.owner_entry(t)
        test = stream.tasks[t].test.data
        with no_grad():
            values = graph.node_values(entry, test, kprime=1, eps_list=[eval_eps[t]]).data
        recon = graph.reconstruct_node(entry, test)
        log.add(run_id=run_id, task_index=task_i + 1, epoch=epoch + 1, eval_task=t + 1,
                objective_value=float(values.mean()), square_loss=mean_square_loss(test, recon))


# -- generative replay ----------------------------------------------------------------

@dataclass
class GrArtifacts:
    """Everything the bound diagnostics need from a replay run."""

    snapshots: list = field(default_factory=list)  # model copy after each task
    mixtures: list[np.ndarray] = field(default_factory=list)  # evolved-source sample sets
    replay_sets: list[np.ndarray] = field(default_factory=list)  # generated part only
    source_log: list[dict] = field(default_factory=list)  # per-epoch source-side numbers


def _copy_model(model):
    if isinstance(model, VaeComponent):
        return model.copy()
    # HierVae: rebuild with empty init, then overwrite buffers
    dup = HierVae(model.input_dim, model.latent_dims, model.base.hidden_dim,
                  model.base.likelihood, model.base.sigma, model.two_layers,
                  rng=None, name=model.name)
    for mine, theirs in zip(dup.params(), model.params()):
        mine.data[:] = theirs.data
    return dup


def run_gr_single(stream: TaskStream, cfg: TrainConfig, rng: Rng, run_id: str = "gr",
                  model=None, objective=None, epoch_hook=None) -> tuple:
    """Single model; from the second task on it trains on its own generations
    mixed uniformly with the new task's data (replay count (i-1) x |train_i|)."""
    if model is None:
        model = VaeComponent(stream.input_dim, cfg.latent_dim, cfg.hidden_dim,
                             cfg.likelihood, cfg.sigma, rng.spawn("gr:init"), name="gr")
    if objective is None:
        def objective(m, x, train_rng):
            if cfg.uses_iw:
                return m.iwelbo(x, cfg.kprime, rng=train_rng)
            return m.elbo(x, rng=train_rng)

    log = MetricsLog()
    artifacts = GrArtifacts()
    state = AdamState(lr=cfg.lr)
    eval_eps = [_eval_eps(rng, t, cfg.latent_dim) for t in stream.tasks]

    for i, task in enumerate(stream.tasks):
        if i == 0:
            mixture = task.train.data
        else:
            replay = artifacts.snapshots[-1].generate(i * task.train.n, rng.spawn(f"gr:replay:{i}"))
            artifacts.replay_sets.append(replay)
            mixture = np.concatenate([task.train.data, replay])
            mixture = mixture[rng.spawn(f"gr:mix:{i}").permutation(mixture.shape[0])]
        artifacts.mixtures.append(mixture)

        train_rng = rng.spawn(f"gr:train:{task.name}:{i}")
        for epoch in range(cfg.epochs):
            for idx in _minibatches(mixture.shape[0], cfg.batch, train_rng):
                values = objective(model, mixture[idx], train_rng)
                adam_step(state, model.params(), backprop(-values.mean()))
            _log_gr_epoch(model, stream, i, epoch, log, run_id, eval_eps, cfg)
            _log_gr_source(model, mixture, i, epoch, artifacts, cfg, rng)
            if epoch_hook is not None:
                epoch_hook(task_index=i, epoch=epoch, model=model, mixture=mixture,
                           artifacts=artifacts)
        artifacts.snapshots.append(_copy_model(model))
    return model, log, artifacts


def _model_elbo_values(model, x: np.ndarray, eps: np.ndarray) -> np.ndarray:
    with no_grad():
        if isinstance(model, HierVae):
            eps2 = np.zeros((1, model.latent_dims[1]))
            return model.hier_elbo(x, eps=eps, eps2=eps2).data
        return model.elbo(x, eps=eps).data


def _log_gr_epoch(model, stream, task_i, epoch, log, run_id, eval_eps, cfg):
    for t in range(task_i + 1):
        test = stream.tasks[t].test.data
        values = _model_elbo_values(model, test, eval_eps[t])
        recon = model.reconstruct(test)
        log.add(run_id=run_id, task_index=task_i + 1, epoch=epoch + 1, eval_task=t + 1,
                objective_value=float(values.mean()), square_loss=mean_square_loss(test, recon))


def _log_gr_source(model, mixture, task_i, epoch, artifacts, cfg, rng):
    eps = rng.spawn(f"eval:source:{task_i}").normal((1, cfg.latent_dim))
    values = _model_elbo_values(model, mixture, eps)
    recon = model.reconstruct(mixture)
    artifacts.source_log.append({
        "task_index": task_i + 1, "epoch": epoch + 1,
        "objective_value": float(values.mean()),
        "square_loss": mean_square_loss(mixture, recon),
    })


def run_gr_hier(stream: TaskStream, cfg: TrainConfig, rng: Rng, run_id: str = "gr-hier") -> tuple:
    """Replay baseline with the two-stochastic-layer model."""
    latent_dims = cfg.hier_latent_dims
    if latent_dims[0] != cfg.latent_dim:
        latent_dims = (cfg.latent_dim, latent_dims[1])
    model = HierVae(stream.input_dim, latent_dims, cfg.hidden_dim, cfg.likelihood,
                    cfg.sigma, cfg.hier_two_layers, rng.spawn("gr:init"), name="gr")

    def objective(m, x, train_rng):
        return m.hier_elbo(x, rng=train_rng)

    return run_gr_single(stream, cfg, rng, run_id=run_id, model=model, objective=objective)


# -- order study ------------------------------------------------------------------------

def order_experiment(orders: list[TaskStream], cfg: TrainConfig, rng: Rng) -> list[dict]:
    """Run the graph model and the replay baseline on each ordering; report the
    accumulated (summed) final per-task test risk for both."""
    if not orders:
        raise ConfigError("order study needs at least one ordering")
    reference = sorted(t.name for t in orders[0].tasks)
    for stream in orders[1:]:
        if sorted(t.name for t in stream.tasks) != reference:
            raise ConfigError("orderings must be permutations of the same task set")
    report = []
    for k, stream in enumerate(orders):
        _, degm_log = run_degm(stream, cfg, rng, run_id=f"degm-order{k}")
        _, gr_log, _ = run_gr_single(stream, cfg, rng, run_id=f"gr-order{k}")
        report.append({
            "order_index": k,
            "order": ",".join(t.name for t in stream.tasks),
            "degm_accumulated_risk": accumulated_final_risk(degm_log, stream),
            "gr_accumulated_risk": accumulated_final_risk(gr_log, stream),
        })
    return report


def accumulated_final_risk(log: MetricsLog, stream: TaskStream) -> float:
    """Sum over tasks of the dimension-normalised final-epoch test risk."""
    total = 0.0
    last_task = len(stream)
    d = stream.input_dim
    for t in range(1, last_task + 1):
        rows = log.query(task_index=last_task, eval_task=t)
        total += rows[-1]["square_loss"] / d
    return total
