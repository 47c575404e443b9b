"""Graph-attention prediction over sampled dependency graphs.

Each sample becomes a graph of p feature nodes plus one pooling node. Node i
attends over the nodes selected by column i of the (relaxed) adjacency
sample; soft edge weights enter the attention logits additively as
``log(z + eps)`` so a vanishing edge smoothly leaves the softmax. Every node
always attends to itself, the pooling node attends to all nodes, and no
feature node attends to the pooling node. The pooling node's final embedding
feeds a linear head; the multi-graph variant runs one encoder per class and
fuses the per-class pooled embeddings with a learned context vector.

Because pooling is one-directional, a single-layer encoder reads only raw
input projections and its output carries no dependence on the graph; at
least two layers are needed for edge weights to influence the prediction.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .dataio import CLASSIFICATION, REGRESSION, ConfigError, DataError, FeatureSpec
from .structure import BinaryGraph

MASK_EPS = 1e-8
LEAKY_SLOPE = 0.2


def one_hot(codes: np.ndarray, n_classes: int) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    if codes.size and (codes.min() < 0 or codes.max() >= n_classes):
        raise DataError(f"label outside [0, {n_classes})")
    out = np.zeros((codes.shape[0], n_classes))
    out[np.arange(codes.shape[0]), codes] = 1.0
    return out


def nll_loss(log_probs: ad.Tensor, y: np.ndarray) -> ad.Tensor:
    """Mean negative log-likelihood of integer labels under (B, C) log-probabilities."""
    targets = one_hot(y, log_probs.shape[1])
    picked = ad.tsum(ad.mul(log_probs, ad.constant(targets)), axis=1)
    return ad.scalar_mul(-1.0, ad.tmean(picked))


def mse_loss(pred: ad.Tensor, y: np.ndarray) -> ad.Tensor:
    diff = ad.sub(pred, ad.constant(np.asarray(y, dtype=np.float64)))
    return ad.tmean(ad.mul(diff, diff))


def task_loss(pred: ad.Tensor, y: np.ndarray, task: str) -> ad.Tensor:
    if task == CLASSIFICATION:
        return nll_loss(pred, y)
    if task == REGRESSION:
        return mse_loss(pred, y)
    raise ConfigError(f"unknown task {task!r}")


class GraphAttentionNet:
    """Masked multi-head attention encoder producing the pooled CLS embedding."""

    def __init__(self, spec: FeatureSpec, d_pos: int = 16, hidden: int = 32,
                 layers: int = 2, heads: int = 4, include_full_x: bool = True,
                 rng: np.random.Generator | None = None):
        if layers < 1:
            raise ConfigError(f"need at least one attention layer, got {layers}")
        if hidden % heads:
            raise ConfigError(f"hidden width {hidden} not divisible by {heads} heads")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.spec = spec
        self.d_pos = int(d_pos)
        self.hidden = int(hidden)
        self.layers = int(layers)
        self.heads = int(heads)
        self.head_width = hidden // heads
        self.include_full_x = bool(include_full_x)

        p = spec.n_features
        self.p = p
        self.n_nodes = p + 1                      # CLS node sits at index p
        self.block_width = max(spec.feature_width(i) for i in range(p))
        self.width0 = self.block_width + self.d_pos + (spec.width if include_full_x else 0)

        self.w_pos = (ad.parameter(rng.normal(scale=0.5, size=(p, self.d_pos)))
                      if self.d_pos else None)
        self.cls = ad.parameter(rng.normal(scale=0.5, size=(1, self.width0)))

        self.w: list[list[ad.Tensor]] = []
        self.a_src: list[list[ad.Tensor]] = []
        self.a_dst: list[list[ad.Tensor]] = []
        in_width = self.width0
        for _ in range(layers):
            self.w.append([ad.parameter(rng.normal(scale=in_width ** -0.5,
                                                   size=(in_width, self.head_width)))
                           for _ in range(heads)])
            self.a_src.append([ad.parameter(rng.normal(scale=self.head_width ** -0.5,
                                                       size=(self.head_width, 1)))
                               for _ in range(heads)])
            self.a_dst.append([ad.parameter(rng.normal(scale=self.head_width ** -0.5,
                                                       size=(self.head_width, 1)))
                               for _ in range(heads)])
            in_width = hidden

        self._identity = ad.constant(np.eye(p))
        self._no_cls_col = ad.constant(np.zeros((p, 1)))
        self._cls_row = ad.constant(np.ones((1, self.n_nodes)))
        self._cls_selector = ad.constant(np.eye(self.n_nodes)[p:p + 1])

    # -------------------------------------------------------------- embeddings

    def base_features(self, X: np.ndarray) -> np.ndarray:
        """Data-dependent part of the initial node embeddings (CLS row zero)."""
        if X.shape[1] != self.spec.width:
            raise ad.DimensionError(
                f"sample width {X.shape[1]} does not match spec width {self.spec.width}")
        base = np.zeros((X.shape[0], self.n_nodes, self.width0))
        for i, (a, b) in enumerate(self.spec.offsets):
            base[:, i, :b - a] = X[:, a:b]
            if self.include_full_x:
                base[:, i, self.block_width + self.d_pos:] = X
        return base

    def initial_embeddings(self, X: np.ndarray) -> ad.Tensor:
        """p+1 equal-width node embeddings: value block, positional row, optional full sample."""
        if self.d_pos:
            pad_left = ad.constant(np.zeros((self.p, self.block_width)))
            parts = [pad_left, self.w_pos]
            fx = self.width0 - self.block_width - self.d_pos
            if fx:
                parts.append(ad.constant(np.zeros((self.p, fx))))
            learned_rows = ad.concat(parts, axis=1)
        else:
            learned_rows = ad.constant(np.zeros((self.p, self.width0)))
        learned = ad.concat([learned_rows, self.cls], axis=0)
        return ad.add(ad.constant(self.base_features(X)), learned)

    def attention_log_mask(self, z: ad.Tensor) -> ad.Tensor:
        """Row i lists, in log space, whom node i may attend to.

        Feature rows come from the transposed adjacency sample (column
        convention) plus a fixed self loop; the CLS row is all ones and the
        CLS column is zero for feature nodes.
        """
        feat = ad.add(ad.transpose(z), self._identity)
        top = ad.concat([feat, self._no_cls_col], axis=1)
        mask = ad.concat([top, self._cls_row], axis=0)
        return ad.log(ad.add(mask, MASK_EPS))

    # ------------------------------------------------------------------ layers

    def _head_attention(self, h: ad.Tensor, log_mask: ad.Tensor,
                        layer: int, head: int) -> tuple[ad.Tensor, ad.Tensor]:
        wh = ad.matmul(h, self.w[layer][head])
        src = ad.matmul(wh, self.a_src[layer][head])
        dst = ad.matmul(wh, self.a_dst[layer][head])
        logits = ad.leaky_relu(ad.add(src, ad.transpose(dst)), LEAKY_SLOPE)
        alpha = ad.softmax(ad.add(logits, log_mask), axis=-1)
        return alpha, wh

    def layer_forward(self, h: ad.Tensor, log_mask: ad.Tensor, layer: int) -> ad.Tensor:
        outs = []
        for k in range(self.heads):
            alpha, wh = self._head_attention(h, log_mask, layer, k)
            outs.append(ad.matmul(alpha, wh))
        return ad.elu(ad.concat(outs, axis=-1))

    def cls_embedding(self, X: np.ndarray, graph: BinaryGraph,
                      dropout: float = 0.0,
                      dropout_rng: np.random.Generator | None = None) -> ad.Tensor:
        h = self.initial_embeddings(X)
        log_mask = self.attention_log_mask(graph.z)
        for layer in range(self.layers):
            h = self.layer_forward(h, log_mask, layer)
            if dropout_rng is not None and dropout > 0.0:
                keep = 1.0 - dropout
                mask = dropout_rng.binomial(1, keep, size=h.shape) / keep
                h = ad.mul(h, ad.constant(mask))
        pooled = ad.matmul(self._cls_selector, h)          # (B, 1, hidden)
        return ad.reshape(pooled, (X.shape[0], self.hidden))

    def attention_scores(self, X: np.ndarray, graph: BinaryGraph,
                         layer: int = 0, head: int = 0) -> np.ndarray:
        """Attention rows (B, p+1, p+1) of one head at one layer, for inspection."""
        h = self.initial_embeddings(X)
        log_mask = self.attention_log_mask(graph.z)
        for l in range(layer):
            h = self.layer_forward(h, log_mask, l)
        alpha, _ = self._head_attention(h, log_mask, layer, head)
        return alpha.values

    def named_parameters(self, prefix: str = "encoder") -> dict[str, ad.Tensor]:
        out = {f"{prefix}.cls": self.cls}
        if self.w_pos is not None:
            out[f"{prefix}.w_pos"] = self.w_pos
        for l in range(self.layers):
            for k in range(self.heads):
                out[f"{prefix}.layer{l}.head{k}.w"] = self.w[l][k]
                out[f"{prefix}.layer{l}.head{k}.a_src"] = self.a_src[l][k]
                out[f"{prefix}.layer{l}.head{k}.a_dst"] = self.a_dst[l][k]
        return out


class TaskLearner:
    """Encoder(s) plus the shared linear output head and class fusion."""

    def __init__(self, spec: FeatureSpec, task: str, n_classes: int = 0,
                 d_pos: int = 16, hidden: int = 32, layers: int = 2, heads: int = 4,
                 include_full_x: bool = True, n_graphs: int = 1,
                 dropout: float = 0.0, rng: np.random.Generator | None = None):
        if task == CLASSIFICATION and n_classes < 2:
            raise ConfigError(f"classification needs >= 2 classes, got {n_classes}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.task = task
        self.n_classes = n_classes
        self.n_graphs = int(n_graphs)
        self.dropout = float(dropout)
        self.encoders = [GraphAttentionNet(spec, d_pos=d_pos, hidden=hidden, layers=layers,
                                           heads=heads, include_full_x=include_full_x, rng=rng)
                         for _ in range(n_graphs)]
        self.context = (ad.parameter(rng.normal(scale=hidden ** -0.5, size=(hidden, 1)))
                        if n_graphs > 1 else None)
        out_dim = n_classes if task == CLASSIFICATION else 1
        self.w_out = ad.parameter(rng.normal(scale=hidden ** -0.5, size=(hidden, out_dim)))
        self.b_out = ad.parameter(np.zeros(out_dim))

    def fused_cls(self, pooled: list[ad.Tensor]) -> tuple[ad.Tensor, ad.Tensor]:
        """Context-vector attention over per-class pooled embeddings.

        Returns the fused embedding and the (B, n_graphs) fusion weights,
        which are a softmax over the per-class inner products with the
        context vector.
        """
        scores = ad.concat([ad.matmul(h, self.context) for h in pooled], axis=1)
        beta = ad.softmax(scores, axis=1)
        fused = None
        for c, h in enumerate(pooled):
            term = ad.mul(ad.slice_axis(beta, 1, c, c + 1), h)
            fused = term if fused is None else ad.add(fused, term)
        return fused, beta

    def forward(self, X: np.ndarray, graphs: list[BinaryGraph],
                dropout_rng: np.random.Generator | None = None) -> ad.Tensor:
        if len(graphs) != self.n_graphs:
            raise ad.DimensionError(f"expected {self.n_graphs} graphs, got {len(graphs)}")
        pooled = [enc.cls_embedding(X, g, self.dropout, dropout_rng)
                  for enc, g in zip(self.encoders, graphs)]
        h = pooled[0] if self.n_graphs == 1 else self.fused_cls(pooled)[0]
        out = ad.add(ad.matmul(h, self.w_out), self.b_out)
        if self.task == CLASSIFICATION:
            return ad.log_softmax(out, axis=1)
        return ad.reshape(out, (X.shape[0],))

    def predict(self, X: np.ndarray, graphs: list[BinaryGraph]) -> np.ndarray:
        """Deterministic forward pass: (B, C) log-probabilities or (B,) values."""
        return self.forward(X, graphs).values

    def positive_scores(self, X: np.ndarray, graphs: list[BinaryGraph]) -> np.ndarray:
        """Probability of class 1 for binary classifiers."""
        if self.task != CLASSIFICATION or self.n_classes != 2:
            raise ConfigError("positive scores only defined for binary classification")
        return np.exp(self.predict(X, graphs)[:, 1])

    def named_parameters(self) -> dict[str, ad.Tensor]:
        out: dict[str, ad.Tensor] = {}
        for c, enc in enumerate(self.encoders):
            out.update(enc.named_parameters(prefix=f"task.enc{c}"))
        if self.context is not None:
            out["task.context"] = self.context
        out["task.w_out"] = self.w_out
        out["task.b_out"] = self.b_out
        return out

    @property
    def params(self) -> list[ad.Tensor]:
        return list(self.named_parameters().values())
