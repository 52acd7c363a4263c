"""Empirical estimators for the generalization-bound quantities.

The true discrepancy distance takes a sup over all hypothesis pairs, which is
not computable; everything here evaluates a finite family of trained snapshots
(current model, an auxiliary model fitted to the evolved source, and per-task
reference models) and is therefore a *lower bound*. Output columns say so.

Losses follow the encode-decode-as-identity reading: the per-sample loss
between two hypotheses is the dimension-normalised squared distance of their
reconstructions, and the risk of a model is that loss against the input.
"""

from __future__ import annotations

import copy
import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .lifelong import TaskStream, TrainConfig, _minibatches, run_gr_single
from .nnkit import AdamState, Rng, adam_step, backprop, kl_diag_gaussian_to_standard, no_grad
from .vae import HierVae, VaeComponent


class HypothesisSet:
    """Named, frozen model snapshots standing in for the hypothesis space."""

    def __init__(self):
        self._models: dict[str, object] = {}

    def register(self, name: str, model) -> None:
        if name in self._models:
            raise ContractError(f"hypothesis {name!r} already registered")
        self._models[name] = copy.deepcopy(model)

    def names(self) -> list[str]:
        return list(self._models)

    def reconstruct(self, name: str, x: np.ndarray) -> np.ndarray:
        return self._models[name].reconstruct(x)

    def __len__(self) -> int:
        return len(self._models)


def risk(model, data: np.ndarray) -> float:
    """Mean squared reconstruction error, normalised by the input dimension."""
    data = np.asarray(data, dtype=np.float64)
    if data.shape[0] == 0:
        raise ContractError("risk needs a nonempty dataset")
    recon = model.reconstruct(data)
    return float(((data - recon) ** 2).sum(axis=1).mean()) / data.shape[1]


def pair_loss(model_a, model_b, data: np.ndarray) -> float:
    """Mean dimension-normalised squared distance between two hypotheses."""
    data = np.asarray(data, dtype=np.float64)
    ra, rb = model_a.reconstruct(data), model_b.reconstruct(data)
    return float(((ra - rb) ** 2).sum(axis=1).mean()) / data.shape[1]


def replay_risk_differences(model, snapshots, aux_models, mixtures, gen_samples,
                            upto: int) -> float:
    """Sum over past transitions of (loss vs the snapshot on its own
    generations) minus (loss vs the auxiliary model on the mixture it
    bridged); the empirical stand-in for the risk-difference chain."""
    total = 0.0
    for j in range(1, upto):
        total += (pair_loss(model, snapshots[j], gen_samples[j])
                  - pair_loss(model, aux_models[j], mixtures[j][:gen_samples[j].shape[0]]))
    return total


def estimate_discrepancy(p_samples: np.ndarray, q_samples: np.ndarray,
                         hypotheses: HypothesisSet) -> float:
    """max over ordered pairs (h, h') of |E_P loss(h, h') - E_Q loss(h, h')|.

    A lower bound on the true sup; 0 exactly when the two sample sets coincide
    and symmetric in (P, Q) by construction.
    """
    if len(hypotheses) < 2:
        raise ContractError("discrepancy needs at least two hypotheses")
    p = np.asarray(p_samples, dtype=np.float64)
    q = np.asarray(q_samples, dtype=np.float64)
    if p.shape[0] == 0 or q.shape[0] == 0:
        raise ContractError("discrepancy needs nonempty sample sets")
    d = p.shape[1]
    recon_p = {name: hypotheses.reconstruct(name, p) for name in hypotheses.names()}
    recon_q = {name: hypotheses.reconstruct(name, q) for name in hypotheses.names()}
    best = 0.0
    for a in hypotheses.names():
        for b in hypotheses.names():
            if a == b:
                continue  # loss(h, h) is identically zero on both sides
            mean_p = float(((recon_p[a] - recon_p[b]) ** 2).sum(axis=1).mean()) / d
            mean_q = float(((recon_q[a] - recon_q[b]) ** 2).sum(axis=1).mean()) / d
            best = max(best, abs(mean_p - mean_q))
    return best


def encoder_kl_values(model, data: np.ndarray) -> np.ndarray:
    """Closed-form posterior-to-prior KL per sample (no sampling involved)."""
    base = model.base if isinstance(model, HierVae) else model
    with no_grad():
        mu, lv = base.encode(data)
        return kl_diag_gaussian_to_standard(mu, lv).data


def estimate_kl_gap(model, target_sets: list[np.ndarray], source: np.ndarray,
                    sample_size: int = 10_000, rng: Rng | None = None) -> float:
    """|mean encoder-KL over the evolved source - task-average over targets|."""
    source = np.asarray(source, dtype=np.float64)
    if source.shape[0] == 0 or not target_sets or any(np.shape(t)[0] == 0 for t in target_sets):
        raise ContractError("kl gap needs nonempty source and target sets")
    rng = rng or Rng(0)

    def subsample(x, key):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] <= sample_size:
            return x
        return x[rng.spawn(key).choice_without_replacement(x.shape[0], sample_size)]

    source_mean = float(encoder_kl_values(model, subsample(source, "klgap:source")).mean())
    target_means = [float(encoder_kl_values(model, subsample(t, f"klgap:target:{i}")).mean())
                    for i, t in enumerate(target_sets)]
    return abs(source_mean - float(np.mean(target_means)))


# -- diagnostics over a replay run -----------------------------------------------------

@dataclass
class BoundsRow:
    task_t: int  # 1-based task being learned
    epoch: int  # 1-based within the task
    source_risk: float
    target_risks: list[float]  # one per task seen so far
    target_risk_avg: float
    kl_gap: float
    disc_lower_bound: float
    lhs_target_neg_elbo: float
    rhs_source_neg_elbo: float
    eps_proxy: float
    slack: float  # RHS - LHS of the per-epoch bound check
    err_a_proxy: float = 0.0  # accumulated bridging terms across replay rounds
    err_d_proxy: float = 0.0  # generator-vs-mixture risk differences (can dip negative)


@dataclass
class BoundsArtifacts:
    rows: list[BoundsRow] = field(default_factory=list)
    aux_models: dict = field(default_factory=dict)
    reference_models: dict = field(default_factory=dict)
    gr_model: object = None
    gr_artifacts: object = None
    metrics_log: object = None


def _train_plain(data: np.ndarray, cfg: TrainConfig, rng: Rng, epochs: int,
                 name: str) -> VaeComponent:
    model = VaeComponent(data.shape[1], cfg.latent_dim, cfg.hidden_dim,
                         cfg.likelihood, cfg.sigma, rng.spawn("init"), name=name)
    state = AdamState(lr=cfg.lr)
    train_rng = rng.spawn("train")
    for _ in range(epochs):
        for idx in _minibatches(data.shape[0], cfg.batch, train_rng):
            values = model.elbo(data[idx], rng=train_rng)
            adam_step(state, model.params(), backprop(-values.mean()))
    return model


def _neg_elbo_mean(model, data: np.ndarray, eps: np.ndarray) -> float:
    with no_grad():
        if isinstance(model, HierVae):
            return float(-model.hier_elbo(data, eps=eps,
                                          eps2=np.zeros((1, model.latent_dims[1]))).data.mean())
        return float(-model.elbo(data, eps=eps).data.mean())


def bounds_run(stream: TaskStream, cfg: TrainConfig, rng: Rng,
               sample_size: int = 10_000, aux_epochs: int | None = None,
               run_id: str = "bounds") -> BoundsArtifacts:
    """Replay run instrumented per epoch with risk, KL-gap, discrepancy lower
    bound, and the slack of the target-vs-evolved-source inequality.

    The auxiliary model for task t is fitted once, on the same evolved-source
    mixture the main model trains on; for the first task the auxiliary model
    *is* the current model (nothing has evolved yet).
    """
    out = BoundsArtifacts()
    aux_epochs = aux_epochs or cfg.epochs
    for i, task in enumerate(stream.tasks):
        out.reference_models[i] = _train_plain(task.train.data, cfg,
                                               rng.spawn(f"bounds:ref:{task.name}"),
                                               aux_epochs, name=f"ref{i}")

    eval_eps = rng.spawn("bounds:eval").normal((1, cfg.latent_dim))

    def subsample(x, key):
        if x.shape[0] <= sample_size:
            return x
        return x[rng.spawn(key).choice_without_replacement(x.shape[0], sample_size)]

    gen_samples: dict[int, np.ndarray] = {}
    transition_ra: dict[int, float] = {}

    def hook(task_index: int, epoch: int, model, mixture: np.ndarray, artifacts):
        t = task_index
        if t not in out.aux_models:
            out.aux_models[t] = None if t == 0 else _train_plain(
                mixture, cfg, rng.spawn(f"bounds:aux:{t}"), aux_epochs, name=f"aux{t}")
        aux = out.aux_models[t] if out.aux_models[t] is not None else model
        for k in range(len(artifacts.snapshots)):
            if k not in gen_samples:
                gen_samples[k] = artifacts.snapshots[k].generate(
                    min(sample_size, 512), rng.spawn(f"bounds:gen:{k}"))

        source = subsample(mixture, f"bounds:src:{t}")
        target_sets = [subsample(stream.tasks[k].test.data, f"bounds:tgt:{t}:{k}")
                       for k in range(t + 1)]
        union = np.concatenate(target_sets)

        hset = HypothesisSet()
        hset.register("current", model)
        hset.register("aux", aux)
        for k in range(t + 1):
            hset.register(f"ref{k}", out.reference_models[k])

        target_risks = [risk(model, ts) for ts in target_sets]
        disc = estimate_discrepancy(union, source, hset)
        gap = estimate_kl_gap(model, target_sets, source, sample_size, rng.spawn(f"bounds:kl:{t}"))
        eps_proxy = risk(aux, source) + risk(aux, union)
        ra_now = disc + eps_proxy
        transition_ra[t] = ra_now  # overwritten each epoch; final epoch wins
        err_a = sum(transition_ra[j] for j in range(t)) + ra_now
        aux_for_chain = {j: out.aux_models[j] for j in out.aux_models if out.aux_models[j]}
        err_d = replay_risk_differences(model, artifacts.snapshots, aux_for_chain,
                                        artifacts.mixtures, gen_samples, t)
        lhs = float(np.mean([_neg_elbo_mean(model, ts, eval_eps) for ts in target_sets]))
        rhs_source = _neg_elbo_mean(model, source, eval_eps)
        slack = rhs_source + gap + disc + eps_proxy - lhs
        out.rows.append(BoundsRow(
            task_t=t + 1, epoch=epoch + 1,
            source_risk=risk(model, source),
            target_risks=target_risks,
            target_risk_avg=float(np.mean(target_risks)),
            kl_gap=gap, disc_lower_bound=disc,
            lhs_target_neg_elbo=lhs, rhs_source_neg_elbo=rhs_source,
            eps_proxy=eps_proxy, slack=slack,
            err_a_proxy=err_a, err_d_proxy=err_d,
        ))

    model, log, artifacts = run_gr_single(stream, cfg, rng, run_id=run_id, epoch_hook=hook)
    out.gr_model, out.gr_artifacts, out.metrics_log = model, artifacts, log
    return out


def bound_check_report(artifacts: BoundsArtifacts) -> list[dict]:
    """Per-epoch view of the bound check: LHS, each RHS term, and the slack."""
    rows = []
    for r in artifacts.rows:
        rows.append({
            "task_t": r.task_t, "epoch": r.epoch,
            "lhs_target_neg_elbo": r.lhs_target_neg_elbo,
            "rhs_source_neg_elbo": r.rhs_source_neg_elbo,
            "rhs_kl_gap": r.kl_gap,
            "rhs_ra_lower_bound": r.disc_lower_bound + r.eps_proxy,
            "slack": r.slack,
        })
    return rows


def write_bounds_csv(rows: list[BoundsRow], path: str, n_tasks: int,
                     config_hash: str | None = None) -> None:
    task_cols = [f"target_risk_task_{k + 1}" for k in range(n_tasks)]
    header = ["epoch", "task_t", "source_risk", "target_risk_avg", *task_cols,
              "kl_gap", "disc_lower_bound", "slack"]
    if config_hash is not None:
        header.append("config_hash")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in rows:
            per_task = list(r.target_risks) + [""] * (n_tasks - len(r.target_risks))
            record = [r.epoch, r.task_t, r.source_risk, r.target_risk_avg,
                      *per_task, r.kl_gap, r.disc_lower_bound, r.slack]
            if config_hash is not None:
                record.append(config_hash)
            writer.writerow(record)


# -- curves and generation chains ----------------------------------------------------------

def forgetting_curves(degm_log, gr_log, input_dim: int) -> list[dict]:
    """Tidy per-epoch risk rows for the mixture model and the single model."""
    rows = []
    for label, log in (("mixture", degm_log), ("single", gr_log)):
        if log is None:
            continue
        for r in log.rows:
            rows.append({
                "model": label, "task_index": r["task_index"], "epoch": r["epoch"],
                "eval_task": r["eval_task"], "risk": r["square_loss"] / input_dim,
            })
    return rows


def write_curves_csv(rows: list[dict], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def accumulated_error_proxy(snapshots: list, stream: TaskStream, final_model,
                            rng: Rng) -> list[dict]:
    """Per-task generation chains evaluated under the final model.

    Generation 0 of task i is its real training set. Generation k is the
    previous generation pushed through the snapshot taken after task i+k-1
    (reconstruct, then Bernoulli-resample for binary data): the lineage proxy
    for what the k-th replay round did to that task's data. The deltas across
    generations are the empirical counterpart of the per-generation
    discrepancy chain, and only a proxy for it.
    """
    if len(snapshots) != len(stream.tasks):
        raise ContractError("need one snapshot per task")
    rows = []
    for i, task in enumerate(stream.tasks):
        lineage = task.train.data
        rows.append({"task_index": i + 1, "generation": 0,
                     "risk_under_final": risk(final_model, lineage), "delta": 0.0})
        for k in range(1, len(stream.tasks) - i):
            snap = snapshots[i + k - 1]
            recon = snap.reconstruct(lineage)
            if getattr(snap, "likelihood", "bernoulli") == "bernoulli":
                lineage = rng.spawn(f"accum:{i}:{k}").bernoulli(recon)
            else:
                lineage = recon
            prev = rows[-1]["risk_under_final"]
            value = risk(final_model, lineage)
            rows.append({"task_index": i + 1, "generation": k,
                         "risk_under_final": value, "delta": value - prev})
    return rows
