"""Loss composition, pretraining, and the joint structure/task training loop.

A run is single-threaded and mutates only its own model and generator, so
seed sweeps can execute in parallel with independent states.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .dataio import CLASSIFICATION, REGRESSION, ConfigError, Dataset, FeatureSpec
from .metrics import accuracy, rmse, roc_auc
from .structure import BinaryGraph, StructureLearner
from .taskgat import TaskLearner, task_loss

EVAL_CHUNK = 4096
CHECKPOINT_FORMAT = "depgat-checkpoint"


class TrainingDivergence(RuntimeError):
    """A loss component went non-finite during optimization."""


@dataclass
class HyperParams:
    lambda_struct: float = 1.0
    lambda_sparse: float = 0.005
    lambda_dag: float = 0.0
    tau: float = 0.5
    lr: float = 0.001
    epochs: int = 40
    pretrain_epochs: int = 5
    batch_size: int = 128
    struct_H: int = 32
    task_H: int = 32
    task_L: int = 2
    d_pos: int = 16
    nheads: int = 4
    struct_dropout: float = 0.3
    task_dropout: float = 0.0
    grad_clip: float = 5.0
    seed: int = 0
    multi_graph: bool = False
    y_node: bool = False
    include_full_x: bool = True

    def __post_init__(self):
        for name in ("lambda_struct", "lambda_sparse", "lambda_dag"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.epochs < 0 or self.pretrain_epochs < 0:
            raise ConfigError("epoch counts must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigError(f"unknown hyperparameter(s): {sorted(unknown)}")
        return cls(**known)


class JointModel:
    """Structure learner plus task learner sharing one sampled graph per step."""

    def __init__(self, spec: FeatureSpec, task: str, n_classes: int, hp: HyperParams,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(hp.seed)
        if hp.multi_graph and task != CLASSIFICATION:
            raise ConfigError("multi-graph mode requires a classification task")
        self.spec = spec
        self.task_kind = task
        self.n_classes = n_classes
        self.hp = hp
        self.n_graphs = n_classes if (hp.multi_graph and task == CLASSIFICATION) else 1

        label_node = None
        if hp.y_node:
            label_node = (("categorical", n_classes) if task == CLASSIFICATION
                          else ("real", 1))
        self.structure = StructureLearner(spec, hidden=hp.struct_H, n_graphs=self.n_graphs,
                                          label_node=label_node, rng=rng,
                                          dropout=hp.struct_dropout)
        self.task = TaskLearner(spec, task=task, n_classes=n_classes, d_pos=hp.d_pos,
                                hidden=hp.task_H, layers=hp.task_L, heads=hp.nheads,
                                include_full_x=hp.include_full_x, n_graphs=self.n_graphs,
                                dropout=hp.task_dropout, rng=rng)

    # ------------------------------------------------------------------ graphs

    def sample_graphs(self, rng: np.random.Generator) -> list[BinaryGraph]:
        return [self.structure.sample_graph(self.hp.tau, rng, c)
                for c in range(self.n_graphs)]

    def eval_graphs(self) -> list[BinaryGraph]:
        """Deterministic graphs (edge probabilities) for validation and test."""
        return [self.structure.mean_graph(c) for c in range(self.n_graphs)]

    def full_graphs(self) -> list[BinaryGraph]:
        return [self.structure.full_graph() for _ in range(self.n_graphs)]

    def task_view(self, graph: BinaryGraph) -> BinaryGraph:
        """Feature-node block of a structure graph; drops the label node if present."""
        p = self.spec.n_features
        if self.structure.n_nodes == p:
            return graph
        z = ad.slice_axis(ad.slice_axis(graph.z, 0, 0, p), 1, 0, p)
        return BinaryGraph(z=z, tau=graph.tau)

    # ------------------------------------------------------------- predictions

    def predict(self, X: np.ndarray, graphs: list[BinaryGraph] | None = None) -> np.ndarray:
        graphs = graphs if graphs is not None else self.eval_graphs()
        views = [self.task_view(g) for g in graphs]
        chunks = [self.task.predict(X[i:i + EVAL_CHUNK], views)
                  for i in range(0, X.shape[0], EVAL_CHUNK)]
        return np.concatenate(chunks, axis=0)

    def scores(self, X: np.ndarray) -> np.ndarray:
        """Binary positive-class probabilities, multiclass argmax, or regression values."""
        pred = self.predict(X)
        if self.task_kind == CLASSIFICATION and self.n_classes == 2:
            return np.exp(pred[:, 1])
        if self.task_kind == CLASSIFICATION:
            return pred.argmax(axis=1).astype(np.float64)
        return pred

    # ------------------------------------------------------------------ params

    def named_parameters(self) -> dict[str, ad.Tensor]:
        out = dict(self.structure.named_parameters())
        out.update(self.task.named_parameters())
        return out

    @property
    def params(self) -> list[ad.Tensor]:
        return list(self.named_parameters().values())


def build_model(ds: Dataset, hp: HyperParams,
                rng: np.random.Generator | None = None) -> JointModel:
    return JointModel(ds.spec, ds.task, ds.n_classes, hp, rng=rng)


# --------------------------------------------------------------------- losses


def total_loss(model: JointModel, X: np.ndarray, y: np.ndarray,
               graphs: list[BinaryGraph], hp: HyperParams,
               dropout_rng: np.random.Generator | None = None,
               pretraining: bool = False) -> tuple[ad.Tensor, dict[str, float]]:
    """Weighted sum of the task, reconstruction, sparsity, and 2-cycle terms.

    Components with a zero weight are skipped entirely (and reported as 0),
    so ablation runs never build the corresponding subgraph of the tape.
    While pretraining, the graph penalties are disabled along with the frozen
    logits, and reconstruction dropout is active.
    """
    views = [model.task_view(g) for g in graphs]
    pred = model.task.forward(X, views, dropout_rng)
    loss = task_loss(pred, y, model.task_kind)
    breakdown = {"task": loss.item(), "struct": 0.0, "sparse": 0.0, "dag": 0.0}

    if hp.lambda_struct > 0:
        struct = model.structure.batch_struct_loss(
            X, y, graphs, dropout_rng if pretraining else None)
        breakdown["struct"] = struct.item()
        loss = ad.add(loss, ad.scalar_mul(hp.lambda_struct, struct))
    if not pretraining:
        if hp.lambda_sparse > 0:
            sparse = model.structure.sparsity_loss()
            breakdown["sparse"] = sparse.item()
            loss = ad.add(loss, ad.scalar_mul(hp.lambda_sparse, sparse))
        if hp.lambda_dag > 0:
            dag = model.structure.dag_penalty()
            breakdown["dag"] = dag.item()
            loss = ad.add(loss, ad.scalar_mul(hp.lambda_dag, dag))
    breakdown["total"] = loss.item()
    return loss, breakdown


def _check_finite(breakdown: dict[str, float], where: str) -> None:
    for name, value in breakdown.items():
        if not np.isfinite(value):
            raise TrainingDivergence(f"{where}: component {name!r} became {value}")


# ------------------------------------------------------------------ training


@dataclass
class TrainState:
    epoch: int = 0
    best_metric: float | None = None
    metric_name: str = ""
    best_params: dict[str, np.ndarray] = field(default_factory=dict)
    history: dict[str, list[float]] = field(default_factory=dict)
    valid_history: list[float] = field(default_factory=list)
    edge_prob_history: list[list[np.ndarray]] = field(default_factory=list)

    def record(self, breakdown: dict[str, float]) -> None:
        for name, value in breakdown.items():
            self.history.setdefault(name, []).append(value)


def validation_metric(model: JointModel, ds: Dataset, split: str = "valid") -> tuple[str, float]:
    X, y = ds.rows(split)
    if model.task_kind == REGRESSION:
        return "rmse", rmse(y, model.predict(X))
    if model.n_classes == 2:
        return "auc", roc_auc(model.scores(X), y)
    return "accuracy", accuracy(y, model.predict(X).argmax(axis=1))


def _improved(name: str, value: float, best: float | None) -> bool:
    if best is None:
        return True
    return value < best if name == "rmse" else value > best


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def trainable_params(model: JointModel, hp: HyperParams,
                     pretraining: bool = False) -> list[ad.Tensor]:
    """Parameters that actually receive gradients under the given weights.

    Reconstruction networks only matter when the self-supervision term is on;
    the edge logits are frozen while pretraining.
    """
    params = list(model.task.params)
    if hp.lambda_struct > 0:
        params.extend(model.structure.recon_parameters())
    if not pretraining:
        params.extend(model.structure.graph_parameters())
    return params


def snapshot(model: JointModel) -> dict[str, np.ndarray]:
    return {name: p.values.copy() for name, p in model.named_parameters().items()}


def restore(model: JointModel, params: dict[str, np.ndarray]) -> None:
    for name, p in model.named_parameters().items():
        p.values[...] = params[name]


def pretrain(model: JointModel, ds: Dataset, hp: HyperParams,
             rng: np.random.Generator) -> None:
    """Train reconstruction and task weights through a fully connected graph.

    The edge logits stay frozen: they are excluded from the optimizer and the
    constant all-ones graph never touches them, so their gradients are
    identically absent.
    """
    if hp.pretrain_epochs == 0:
        return
    opt = ad.Adam(trainable_params(model, hp, pretraining=True), lr=hp.lr)
    X_train, y_train = ds.rows("train")
    graphs = model.full_graphs()
    for epoch in range(hp.pretrain_epochs):
        for idx in _batches(X_train.shape[0], hp.batch_size, rng):
            loss, breakdown = total_loss(model, X_train[idx], y_train[idx], graphs, hp,
                                         dropout_rng=rng, pretraining=True)
            _check_finite(breakdown, f"pretrain epoch {epoch}")
            grads = ad.backward(loss)
            ad.clip_gradients(grads, opt.params, hp.grad_clip)
            opt.step(grads)


def train(model: JointModel, ds: Dataset, hp: HyperParams,
          rng: np.random.Generator | None = None) -> TrainState:
    """Joint loop: one fresh graph sample per minibatch, all parameters updated.

    Keeps per-batch loss components, a per-epoch edge-probability snapshot,
    and the best-validation parameter set, which is restored on the model
    before returning.
    """
    rng = rng if rng is not None else np.random.default_rng(hp.seed)
    state = TrainState()
    X_train, y_train = ds.rows("train")
    opt = ad.Adam(trainable_params(model, hp), lr=hp.lr)
    task_rng_needed = hp.task_dropout > 0.0

    for epoch in range(hp.epochs):
        for idx in _batches(X_train.shape[0], hp.batch_size, rng):
            graphs = model.sample_graphs(rng)
            loss, breakdown = total_loss(model, X_train[idx], y_train[idx], graphs, hp,
                                         dropout_rng=rng if task_rng_needed else None)
            _check_finite(breakdown, f"epoch {epoch}")
            grads = ad.backward(loss)
            ad.clip_gradients(grads, opt.params, hp.grad_clip)
            opt.step(grads)
            state.record(breakdown)

        state.epoch = epoch + 1
        state.edge_prob_history.append([model.structure.edge_probs(c)
                                        for c in range(model.n_graphs)])
        name, value = validation_metric(model, ds)
        state.metric_name = name
        state.valid_history.append(value)
        if _improved(name, value, state.best_metric):
            state.best_metric = value
            state.best_params = snapshot(model)

    if state.best_params:
        restore(model, state.best_params)
    return state


def run_training(ds: Dataset, hp: HyperParams) -> tuple[JointModel, TrainState]:
    """Build, pretrain, and jointly train a model; fully determined by hp.seed."""
    rng = np.random.default_rng(hp.seed)
    model = build_model(ds, hp, rng)
    pretrain(model, ds, hp, rng)
    state = train(model, ds, hp, rng)
    return model, state


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(path, model: JointModel, hp: HyperParams, epoch: int,
                    extra: dict | None = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "epoch": epoch,
        "hyperparams": hp.to_dict(),
        "task": model.task_kind,
        "n_classes": model.n_classes,
        "feature_spec": model.spec.to_dict(),
        "params": {name: {"shape": list(p.shape), "values": p.values.ravel().tolist()}
                   for name, p in model.named_parameters().items()},
        "extra": extra or {},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f)
        f.write("\n")


def load_checkpoint(path) -> tuple[JointModel, HyperParams, dict]:
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)
    if payload.get("format") != CHECKPOINT_FORMAT or payload.get("version") != 1:
        raise ConfigError(f"{path}: not a version-1 checkpoint")
    hp = HyperParams.from_dict(payload["hyperparams"])
    spec = FeatureSpec.from_dict(payload["feature_spec"])
    model = JointModel(spec, payload["task"], payload["n_classes"], hp)
    named = model.named_parameters()
    stored = payload["params"]
    if set(named) != set(stored):
        raise ConfigError(f"{path}: parameter names do not match the rebuilt model")
    for name, p in named.items():
        entry = stored[name]
        values = np.asarray(entry["values"]).reshape(entry["shape"])
        if tuple(values.shape) != p.shape:
            raise ConfigError(f"{path}: shape mismatch for {name}: "
                              f"{values.shape} vs {p.shape}")
        p.values[...] = values
    return model, hp, payload.get("extra", {})
