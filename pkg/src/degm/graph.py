"""The expansion graph: basic nodes, specific nodes, edge weights, mixture bound.

A basic node is a complete component, frozen once its task ends. A specific
node owns only a fresh lower encoder and upper decoder; everything between
them is borrowed, frozen, from the basic nodes it connects to, blended by its
edge weights. Task-to-node assignment is recorded in the V matrix: the row of
a specific node is its edge-weight vector, the row of a basic node is zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError
from .nnkit import (
    DEFAULT_SIGMA,
    DenseLayer,
    Rng,
    Tensor,
    kl_diag_gaussian_to_standard,
    logmeanexp,
    no_grad,
    reparameterize,
)
from .vae import BasicNode, VaeComponent

SIMPLEX_TOL = 1e-9


def edge_weights(scores: np.ndarray) -> np.ndarray:
    """Adaptive weights: pi_i = (w* - ks_i) / sum_j (w* - ks_j), w* = sum_j ks_j.

    A node dissimilar to the new task (large ks) gets a small weight. The
    K=1 case is 0/0 by the formula and pins to [1]; all-zero scores mean all
    nodes fit equally and pin to uniform.
    """
    ks = np.asarray(scores, dtype=np.float64)
    if ks.ndim != 1 or ks.size == 0:
        raise ContractError("scores must be a nonempty vector")
    if (ks < 0.0).any():
        raise ContractError("knowledge scores must be nonnegative")
    k = ks.size
    if k == 1:
        return np.array([1.0])
    total = ks.sum()
    if total == 0.0:
        return np.full(k, 1.0 / k)
    return (total - ks) / ((k - 1) * total)


def expansion_decide(scores: np.ndarray, tau: float) -> tuple[str, np.ndarray | None]:
    """min(ks) > tau means nothing transfers: build a basic node. Otherwise a
    specific node with adaptive weights. tau = 0 therefore forces per-task
    basic nodes whenever every score is strictly positive."""
    ks = np.asarray(scores, dtype=np.float64)
    if ks.size == 0:
        raise ContractError("expansion decision needs at least one score")
    if tau < 0.0:
        raise ContractError("tau must be nonnegative")
    if ks.min() > tau:
        return "basic", None
    return "specific", edge_weights(ks)


def knowledge_similarity(node: BasicNode, probe: np.ndarray, rng: Rng) -> float:
    """|reference ELBO - mean probe ELBO| under one shared evaluation draw."""
    if node.reference_elbo is None:
        raise ContractError("basic node has no reference ELBO yet (untrained)")
    probe = np.asarray(probe, dtype=np.float64)
    if probe.ndim != 2 or probe.shape[0] == 0:
        raise ContractError("probe must be a nonempty [n, dim] array")
    eps = rng.normal((1, node.vae.latent_dim))
    with no_grad():
        mean = float(node.vae.elbo(probe, eps=eps).data.mean())
    return abs(node.reference_elbo - mean)


class SpecificNode:
    """New lower encoder and upper decoder around frozen basic sub-modules."""

    def __init__(self, input_dim: int, hidden_dim: int, weights: np.ndarray, task_id: int,
                 likelihood: str = "bernoulli", rng: Rng | None = None, name: str = "s"):
        w = np.asarray(weights, dtype=np.float64)
        if (w < 0.0).any() or abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise ContractError(f"edge weights must form a simplex, got sum {w.sum()}")
        out_act = "sigmoid" if likelihood == "bernoulli" else "identity"
        self.enc_lower_new = DenseLayer(input_dim, hidden_dim, "leaky-relu", rng, f"{name}.enc_lower_new")
        self.dec_upper_new = DenseLayer(hidden_dim, input_dim, out_act, rng, f"{name}.dec_upper_new")
        self.weights = w
        self.task_id = int(task_id)
        self.name = name

    def params(self) -> list[Tensor]:
        return self.enc_lower_new.params() + self.dec_upper_new.params()


@dataclass
class NodeEntry:
    kind: str  # "basic" | "specific"
    index: int  # position within basics / specifics
    task_id: int


class GraphModel:
    def __init__(self, input_dim: int, latent_dim: int, hidden_dim: int = 200,
                 likelihood: str = "bernoulli", sigma: float = DEFAULT_SIGMA,
                 tau: float = 1.0):
        if tau < 0.0:
            raise ContractError("tau must be nonnegative")
        self.input_dim = int(input_dim)
        self.latent_dim = int(latent_dim)
        self.hidden_dim = int(hidden_dim)
        self.likelihood = likelihood
        self.sigma = float(sigma)
        self.tau = float(tau)
        self.basics: list[BasicNode] = []
        self.specifics: list[SpecificNode] = []
        self.entries: list[NodeEntry] = []

    # -- structure ---------------------------------------------------------

    @property
    def node_count(self) -> int:
        return len(self.entries)

    def _check_task_free(self, task_id: int) -> None:
        if any(e.task_id == task_id for e in self.entries):
            raise ContractError(f"task id {task_id} already owned by a node")

    def add_basic_node(self, task_id: int, rng: Rng) -> int:
        self._check_task_free(task_id)
        vae = VaeComponent(self.input_dim, self.latent_dim, self.hidden_dim,
                           self.likelihood, self.sigma, rng, name=f"b{len(self.basics)}")
        self.basics.append(BasicNode(vae=vae, task_id=task_id))
        self.entries.append(NodeEntry("basic", len(self.basics) - 1, task_id))
        return len(self.entries) - 1

    def add_specific_node(self, weights: np.ndarray, task_id: int, rng: Rng) -> int:
        self._check_task_free(task_id)
        w = np.asarray(weights, dtype=np.float64)
        if w.size != len(self.basics):
            raise ContractError(f"{w.size} weights for {len(self.basics)} basic nodes")
        node = SpecificNode(self.input_dim, self.hidden_dim, w, task_id,
                            self.likelihood, rng, name=f"s{len(self.specifics)}")
        self.specifics.append(node)
        self.entries.append(NodeEntry("specific", len(self.specifics) - 1, task_id))
        return len(self.entries) - 1

    def owner_entry(self, task_id: int) -> NodeEntry:
        for e in self.entries:
            if e.task_id == task_id:
                return e
        raise ContractError(f"no node owns task id {task_id}")

    def v_matrix(self) -> np.ndarray:
        """Task-by-basic weight matrix in node creation order; basic rows are zero."""
        k = len(self.basics)
        rows = np.zeros((len(self.entries), k))
        for r, e in enumerate(self.entries):
            if e.kind == "specific":
                w = self.specifics[e.index].weights
                rows[r, :w.size] = w
        return rows

    def knowledge_scores(self, probe: np.ndarray, rng: Rng) -> np.ndarray:
        """One ks per basic node against the probe, shared evaluation draw."""
        return np.array([knowledge_similarity(b, probe, rng.spawn(f"ks:{i}"))
                         for i, b in enumerate(self.basics)])

    # -- specific-node forward passes ------------------------------------------

    def _basic_stats(self, s: SpecificNode, x) -> tuple[Tensor, list[tuple[Tensor, Tensor]]]:
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.shape[1] != self.input_dim:
            raise DimensionError(f"expected width {self.input_dim}, got {x.shape}")
        h = s.enc_lower_new(x)
        stats = []
        for j in range(s.weights.size):
            vae = self.basics[j].vae
            if vae.latent_dim != self.latent_dim:
                raise DimensionError("basic nodes must share the latent dimension")
            stats.append((vae.enc_mu(h, frozen=True), vae.enc_logvar(h, frozen=True)))
        return h, stats

    def _mix_latent(self, s: SpecificNode, stats, rng=None, eps=None) -> Tensor:
        if eps is None:
            if rng is None:
                raise ContractError("latent mixing needs an rng or explicit eps")
            eps = rng.normal((stats[0][0].shape[0], self.latent_dim))
        z = None
        for pi, (mu, lv) in zip(s.weights, stats):
            zj = reparameterize(mu, lv, eps=eps)  # one shared draw across basics
            z = zj * pi if z is None else z + zj * pi
        return z

    def specific_encode(self, s: SpecificNode, x, rng: Rng | None = None,
                        eps: np.ndarray | None = None):
        """Blend the per-basic posteriors: z = sum_j pi_j z_j. Gradients reach
        only the node's new lower encoder; basic sub-modules stay frozen."""
        _, stats = self._basic_stats(s, x)
        z = self._mix_latent(s, stats, rng=rng, eps=eps)
        return z, stats

    def specific_decode(self, s: SpecificNode, z) -> Tensor:
        """Blend the frozen lower decoders, then the node's new output layer."""
        z = z if isinstance(z, Tensor) else Tensor(z)
        mixed = None
        for j, pi in enumerate(s.weights):
            part = self.basics[j].vae.dec_lower(z, frozen=True) * pi
            mixed = part if mixed is None else mixed + part
        return s.dec_upper_new(mixed)

    def _log_likelihood(self, x, decoded: Tensor) -> Tensor:
        probe = self.basics[0].vae if self.basics else None
        if probe is not None:
            return probe.log_likelihood(x, decoded)
        raise ContractError("graph has no basic nodes")

    def _mixture_kl(self, s: SpecificNode, stats) -> Tensor:
        kl = None
        for pi, (mu, lv) in zip(s.weights, stats):
            term = kl_diag_gaussian_to_standard(mu, lv) * pi
            kl = term if kl is None else kl + term
        return kl

    def melbo(self, s: SpecificNode, x, rng: Rng | None = None,
              eps: np.ndarray | None = None) -> Tensor:
        """Reconstruction through the blended pass minus the weighted KL sum."""
        _, stats = self._basic_stats(s, x)
        z = self._mix_latent(s, stats, rng=rng, eps=eps)
        recon = self._log_likelihood(x, self.specific_decode(s, z))
        return recon - self._mixture_kl(s, stats)

    def melbo_iw(self, s: SpecificNode, x, kprime: int, rng: Rng | None = None,
                 eps_list: list[np.ndarray] | None = None) -> Tensor:
        """K'-draw weighted form of melbo; K'=1 coincides on the same draw."""
        if kprime < 1:
            raise ContractError(f"kprime must be >= 1, got {kprime}")
        _, stats = self._basic_stats(s, x)
        recons = []
        for i in range(kprime):
            eps = eps_list[i] if eps_list is not None else None
            z = self._mix_latent(s, stats, rng=rng, eps=eps)
            recons.append(self._log_likelihood(x, self.specific_decode(s, z)))
        return logmeanexp(recons) - self._mixture_kl(s, stats)

    def composite_component(self, s: SpecificNode, basic_index: int) -> VaeComponent:
        """The plain component a one-hot specific node degenerates to."""
        b = self.basics[basic_index].vae
        return VaeComponent.from_layers(s.enc_lower_new, b.enc_mu, b.enc_logvar,
                                        b.dec_lower, s.dec_upper_new,
                                        self.likelihood, self.sigma,
                                        name=f"{s.name}+b{basic_index}")

    # -- per-node evaluation ------------------------------------------------------

    def node_values(self, entry: NodeEntry, x, kprime: int = 1, rng: Rng | None = None,
                    eps_list: list[np.ndarray] | None = None) -> Tensor:
        """Per-sample bound for one node: elbo family for basics, melbo for specifics."""
        if entry.kind == "basic":
            return self.basics[entry.index].vae.iwelbo(x, kprime, rng=rng, eps_list=eps_list)
        return self.melbo_iw(self.specifics[entry.index], x, kprime, rng=rng, eps_list=eps_list)

    def reconstruct_node(self, entry: NodeEntry, x) -> np.ndarray:
        """Deterministic encode-decode via posterior means for one node."""
        if entry.kind == "basic":
            return self.basics[entry.index].vae.reconstruct(x)
        s = self.specifics[entry.index]
        with no_grad():
            _, stats = self._basic_stats(s, x)
            z = None
            for pi, (mu, _) in zip(s.weights, stats):
                z = mu * pi if z is None else z + mu * pi
            return self.specific_decode(s, z).data

    def trainable_params(self, entry: NodeEntry) -> list[Tensor]:
        if entry.kind == "basic":
            return self.basics[entry.index].vae.params()
        return self.specifics[entry.index].params()

    def all_params(self) -> list[Tensor]:
        out = []
        for b in self.basics:
            out.extend(b.vae.params())
        for s in self.specifics:
            out.extend(s.params())
        return out
