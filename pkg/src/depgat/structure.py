"""Learned dependency graphs via masked feature reconstruction.

A structure learner holds one (or one-per-class) matrix of edge logits. The
sigmoid of a logit is the probability of a directed edge; relaxed binary
graphs are sampled with the binary-concrete trick and used as soft input
masks for per-feature reconstruction networks. Column ``i`` of a sampled
graph gates which other features may be seen when reconstructing feature
``i``; the diagonal is structurally zero, so no feature ever reconstructs
itself from itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .dataio import CATEGORICAL, REAL, ConfigError, DataError, FeatureSpec


@dataclass
class BinaryGraph:
    """A relaxed adjacency sample in [0, 1] with a structurally zero diagonal."""

    z: ad.Tensor
    tau: float

    @property
    def n_nodes(self) -> int:
        return self.z.shape[0]


def edge_probabilities(gamma: np.ndarray) -> np.ndarray:
    """Elementwise sigmoid of the logits with the diagonal forced to zero."""
    gamma = np.asarray(gamma, dtype=np.float64)
    probs = np.where(gamma >= 0,
                     1.0 / (1.0 + np.exp(-np.abs(gamma))),
                     np.exp(-np.abs(gamma)) / (1.0 + np.exp(-np.abs(gamma))))
    np.fill_diagonal(probs, 0.0)
    return probs


def undirected_scores(probs: np.ndarray) -> np.ndarray:
    """Symmetric interaction strengths: max of the two directed edge probabilities."""
    return np.maximum(probs, probs.T)


def sample_binary_concrete(gamma: ad.Tensor, tau: float, rng: np.random.Generator,
                           offdiag: ad.Tensor) -> ad.Tensor:
    """Differentiable relaxed Bernoulli sample per edge.

    The log-odds of sigmoid(gamma) is gamma itself, so the concrete sample
    sigmoid((log p - log(1-p) + g1 - g2) / tau) reduces to adding the
    difference of two Gumbel draws to the raw logit.
    """
    if tau <= 0:
        raise ConfigError(f"temperature must be positive, got {tau}")
    noise = rng.gumbel(size=gamma.shape) - rng.gumbel(size=gamma.shape)
    z = ad.sigmoid(ad.scalar_mul(1.0 / tau, ad.add(gamma, ad.constant(noise))))
    return ad.mul(z, offdiag)


class ReconNet:
    """One-hidden-layer MLP that rebuilds a single feature from masked inputs."""

    def __init__(self, in_width: int, out_width: int, hidden: int,
                 categorical: bool, rng: np.random.Generator):
        self.categorical = categorical
        self.w1 = ad.parameter(rng.normal(scale=in_width ** -0.5, size=(in_width, hidden)))
        self.b1 = ad.parameter(np.zeros(hidden))
        self.w2 = ad.parameter(rng.normal(scale=hidden ** -0.5, size=(hidden, out_width)))
        self.b2 = ad.parameter(np.zeros(out_width))

    def forward(self, x: ad.Tensor, dropout_mask: np.ndarray | None = None) -> ad.Tensor:
        h = ad.elu(ad.add(ad.matmul(x, self.w1), self.b1))
        if dropout_mask is not None:
            h = ad.mul(h, ad.constant(dropout_mask))
        out = ad.add(ad.matmul(h, self.w2), self.b2)
        return ad.log_softmax(out, axis=1) if self.categorical else out

    @property
    def params(self) -> list[ad.Tensor]:
        return [self.w1, self.b1, self.w2, self.b2]


class StructureLearner:
    """Edge logits plus reconstruction networks, optionally one set per class.

    When a label node is enabled the graph gains one extra node whose encoded
    block is the (one-hot) label; it participates in reconstruction exactly
    like a feature, but only inside this module.
    """

    def __init__(self, spec: FeatureSpec, hidden: int = 32, n_graphs: int = 1,
                 label_node: tuple[str, int] | None = None,
                 rng: np.random.Generator | None = None, dropout: float = 0.0):
        if n_graphs < 1:
            raise ConfigError(f"need at least one graph, got {n_graphs}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.spec = spec
        self.n_graphs = n_graphs
        self.hidden = hidden
        self.dropout = float(dropout)
        self.label_node = label_node

        self.node_kinds = list(spec.kinds)
        self.node_widths = [spec.feature_width(i) for i in range(spec.n_features)]
        if label_node is not None:
            kind, levels = label_node
            if kind == CATEGORICAL and levels < 2:
                raise ConfigError("categorical label node needs at least 2 levels")
            self.node_kinds.append(kind)
            self.node_widths.append(levels if kind == CATEGORICAL else 1)
        self.n_nodes = len(self.node_kinds)
        self.enc_width = sum(self.node_widths)

        offsets, start = [], 0
        for w in self.node_widths:
            offsets.append((start, start + w))
            start += w
        self.node_offsets = offsets

        # expansion matrix: encoded column -> owning node
        expand = np.zeros((self.enc_width, self.n_nodes))
        for j, (a, b) in enumerate(offsets):
            expand[a:b, j] = 1.0
        self._expand = ad.constant(expand)
        self._offdiag = ad.constant(np.ones((self.n_nodes, self.n_nodes)) - np.eye(self.n_nodes))

        self.gamma = [ad.parameter(np.zeros((self.n_nodes, self.n_nodes)))
                      for _ in range(n_graphs)]
        self.recon: list[list[ReconNet]] = []
        for _ in range(n_graphs):
            nets = [ReconNet(self.enc_width, self.node_widths[j], hidden,
                             self.node_kinds[j] == CATEGORICAL, rng)
                    for j in range(self.n_nodes)]
            self.recon.append(nets)

    # ------------------------------------------------------------------ graphs

    def sample_graph(self, tau: float, rng: np.random.Generator, graph: int = 0) -> BinaryGraph:
        return BinaryGraph(z=sample_binary_concrete(self.gamma[graph], tau, rng, self._offdiag),
                           tau=tau)

    def mean_graph(self, graph: int = 0) -> BinaryGraph:
        """Deterministic graph whose entries are the edge probabilities (evaluation path)."""
        return BinaryGraph(z=ad.constant(self.edge_probs(graph)), tau=0.0)

    def full_graph(self) -> BinaryGraph:
        """Fully connected off-diagonal mask used for pretraining."""
        return BinaryGraph(z=ad.constant(self._offdiag.values.copy()), tau=0.0)

    def edge_probs(self, graph: int = 0) -> np.ndarray:
        return edge_probabilities(self.gamma[graph].values)

    def hard_graph(self, graph: int = 0, threshold: float = 0.5) -> np.ndarray:
        return (self.edge_probs(graph) >= threshold).astype(np.float64)

    # --------------------------------------------------------------- encoding

    def struct_input(self, X: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
        """Append the encoded label block when a label node is configured."""
        if self.label_node is None:
            return X
        if y is None:
            raise DataError("label node enabled but no labels supplied")
        kind, levels = self.label_node
        if kind == CATEGORICAL:
            block = np.zeros((X.shape[0], levels))
            codes = np.asarray(y, dtype=np.int64)
            if codes.min() < 0 or codes.max() >= levels:
                raise DataError(f"label outside [0, {levels})")
            block[np.arange(X.shape[0]), codes] = 1.0
        else:
            block = np.asarray(y, dtype=np.float64).reshape(-1, 1)
        return np.hstack([X, block])

    # ------------------------------------------------------------ reconstruction

    def reconstruct(self, x_enc: np.ndarray, graph: BinaryGraph, graph_idx: int = 0,
                    dropout_rng: np.random.Generator | None = None) -> list[ad.Tensor]:
        """Per-node reconstructions from column-masked inputs.

        Node ``i`` sees ``x * (expand @ z[:, i])``: every encoded column is
        scaled by the sampled edge weight of its owning node into ``i``.
        """
        if graph.n_nodes != self.n_nodes:
            raise ad.DimensionError(
                f"graph has {graph.n_nodes} nodes, structure learner has {self.n_nodes}")
        if x_enc.shape[1] != self.enc_width:
            raise ad.DimensionError(
                f"encoded width {x_enc.shape[1]} does not match learner width {self.enc_width}")
        x = ad.constant(x_enc)
        masks = ad.matmul(self._expand, graph.z)            # (enc_width, n_nodes)
        outputs = []
        for j in range(self.n_nodes):
            col = ad.transpose(ad.slice_axis(masks, 1, j, j + 1))   # (1, enc_width)
            masked = ad.mul(x, col)
            dmask = None
            if dropout_rng is not None and self.dropout > 0.0:
                keep = 1.0 - self.dropout
                dmask = dropout_rng.binomial(1, keep, size=(x_enc.shape[0], self.hidden)) / keep
            outputs.append(self.recon[graph_idx][j].forward(masked, dmask))
        return outputs

    def struct_loss(self, x_enc: np.ndarray, recon: list[ad.Tensor]) -> ad.Tensor:
        """Reconstruction loss summed over nodes, averaged over the batch.

        Real nodes contribute squared error; categorical nodes contribute the
        negative log-likelihood of the observed level.
        """
        n = x_enc.shape[0]
        total = None
        for j, (a, b) in enumerate(self.node_offsets):
            target = x_enc[:, a:b]
            if self.node_kinds[j] == REAL:
                diff = ad.sub(recon[j], ad.constant(target))
                term = ad.tmean(ad.tsum(ad.mul(diff, diff), axis=1))
            else:
                onehot = target
                if not np.array_equal(onehot.sum(axis=1), np.ones(n)):
                    raise DataError(f"node {j}: categorical block is not one-hot")
                picked = ad.tsum(ad.mul(recon[j], ad.constant(onehot)), axis=1)
                term = ad.scalar_mul(-1.0, ad.tmean(picked))
            total = term if total is None else ad.add(total, term)
        return total

    def batch_struct_loss(self, X: np.ndarray, y: np.ndarray | None,
                          graphs: list[BinaryGraph],
                          dropout_rng: np.random.Generator | None = None) -> ad.Tensor:
        """Single-graph loss, or the label-routed per-class sum for multi-graph mode.

        With one graph every sample flows through it. With C graphs each
        sample contributes only through the graph and networks of its own
        class, and the class terms are batch-size weighted so the total stays
        the mean per-sample loss.
        """
        x_enc = self.struct_input(X, y)
        if self.n_graphs == 1:
            recon = self.reconstruct(x_enc, graphs[0], 0, dropout_rng)
            return self.struct_loss(x_enc, recon)
        if y is None:
            raise DataError("multi-graph structure loss needs labels")
        codes = np.asarray(y, dtype=np.int64)
        if codes.min() < 0 or codes.max() >= self.n_graphs:
            raise DataError(f"label outside [0, {self.n_graphs})")
        total = None
        n = x_enc.shape[0]
        for c in range(self.n_graphs):
            mask = codes == c
            if not mask.any():
                continue
            recon = self.reconstruct(x_enc[mask], graphs[c], c, dropout_rng)
            term = ad.scalar_mul(mask.sum() / n, self.struct_loss(x_enc[mask], recon))
            total = term if total is None else ad.add(total, term)
        return total

    # ---------------------------------------------------------------- penalties

    def sparsity_loss(self) -> ad.Tensor:
        """Sum of off-diagonal edge probabilities across every graph."""
        total = None
        for gamma in self.gamma:
            term = ad.tsum(ad.mul(ad.sigmoid(gamma), self._offdiag))
            total = term if total is None else ad.add(total, term)
        return total

    def dag_penalty(self) -> ad.Tensor:
        """Sum over ordered pairs i != j of cosh of the two directed edge probabilities."""
        total = None
        for gamma in self.gamma:
            probs = ad.mul(ad.sigmoid(gamma), self._offdiag)
            pairs = ad.mul(probs, ad.transpose(probs))
            term = ad.tsum(ad.mul(ad.cosh(pairs), self._offdiag))
            total = term if total is None else ad.add(total, term)
        return total

    # ------------------------------------------------------------------ params

    def named_parameters(self) -> dict[str, ad.Tensor]:
        out = {}
        for g, gamma in enumerate(self.gamma):
            out[f"structure.gamma{g}"] = gamma
        for g, nets in enumerate(self.recon):
            for j, net in enumerate(nets):
                for name, p in zip(("w1", "b1", "w2", "b2"), net.params):
                    out[f"structure.recon{g}.node{j}.{name}"] = p
        return out

    def graph_parameters(self) -> list[ad.Tensor]:
        return list(self.gamma)

    def recon_parameters(self) -> list[ad.Tensor]:
        return [p for nets in self.recon for net in nets for p in net.params]
