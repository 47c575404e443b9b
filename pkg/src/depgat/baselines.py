"""Reference predictors: closed-form QDA and a plain MLP on the same splits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .dataio import CLASSIFICATION, ConfigError, Dataset
from .metrics import accuracy, rmse, roc_auc
from .taskgat import task_loss


class NumericError(RuntimeError):
    """A covariance stayed singular after ridge escalation."""


RIDGE_START = 1e-6
RIDGE_LIMIT = 1e2


@dataclass
class QdaModel:
    means: np.ndarray        # (C, p)
    precisions: np.ndarray   # (C, p, p)
    log_dets: np.ndarray     # (C,) log determinant of each covariance
    log_priors: np.ndarray   # (C,)

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]


def _ridged_covariance(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Covariance with an escalating ridge until the Cholesky succeeds."""
    cov = np.cov(x.T, bias=False)
    cov = np.atleast_2d(cov)
    ridge = RIDGE_START
    while ridge <= RIDGE_LIMIT:
        attempt = cov + ridge * np.eye(cov.shape[0])
        try:
            chol = np.linalg.cholesky(attempt)
        except np.linalg.LinAlgError:
            ridge *= 10
            continue
        log_det = 2.0 * float(np.log(np.diag(chol)).sum())
        return attempt, np.linalg.inv(attempt), log_det
    raise NumericError(f"covariance singular even at ridge {RIDGE_LIMIT}")


def qda_fit(X: np.ndarray, y: np.ndarray, n_classes: int) -> QdaModel:
    means, precisions, log_dets, log_priors = [], [], [], []
    for c in range(n_classes):
        rows = X[y == c]
        if rows.shape[0] < 2:
            raise ConfigError(f"class {c} has fewer than 2 training samples")
        means.append(rows.mean(axis=0))
        _, prec, log_det = _ridged_covariance(rows)
        precisions.append(prec)
        log_dets.append(log_det)
        log_priors.append(np.log(rows.shape[0] / X.shape[0]))
    return QdaModel(means=np.array(means), precisions=np.array(precisions),
                    log_dets=np.array(log_dets), log_priors=np.array(log_priors))


def qda_log_densities(model: QdaModel, X: np.ndarray) -> np.ndarray:
    """Per-class discriminants: -log|Sigma|/2 - Mahalanobis/2 + log prior."""
    out = np.empty((X.shape[0], model.n_classes))
    for c in range(model.n_classes):
        d = X - model.means[c]
        maha = np.einsum("ij,jk,ik->i", d, model.precisions[c], d)
        out[:, c] = -0.5 * model.log_dets[c] - 0.5 * maha + model.log_priors[c]
    return out


def qda_posteriors(model: QdaModel, X: np.ndarray) -> np.ndarray:
    log_d = qda_log_densities(model, X)
    shifted = log_d - log_d.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    return probs / probs.sum(axis=1, keepdims=True)


def qda_fit_predict(X_train: np.ndarray, y_train: np.ndarray,
                    X_test: np.ndarray, n_classes: int = 2) -> np.ndarray:
    """Posterior of class 1 on the test rows (binary); argmax column otherwise."""
    model = qda_fit(X_train, y_train, n_classes)
    post = qda_posteriors(model, X_test)
    return post[:, 1] if n_classes == 2 else post


# ----------------------------------------------------------------------- MLP


class Mlp:
    """Fully connected ELU network with a linear or log-softmax head."""

    def __init__(self, in_width: int, hidden: int, layers: int, out_width: int,
                 classification: bool, rng: np.random.Generator):
        self.classification = classification
        self.weights: list[ad.Tensor] = []
        self.biases: list[ad.Tensor] = []
        widths = [in_width] + [hidden] * layers + [out_width]
        for a, b in zip(widths[:-1], widths[1:]):
            self.weights.append(ad.parameter(rng.normal(scale=a ** -0.5, size=(a, b))))
            self.biases.append(ad.parameter(np.zeros(b)))

    def forward(self, X: np.ndarray) -> ad.Tensor:
        h: ad.Tensor = ad.constant(X)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = ad.add(ad.matmul(h, w), b)
            if i < last:
                h = ad.elu(h)
        if self.classification:
            return ad.log_softmax(h, axis=1)
        return ad.reshape(h, (X.shape[0],))

    @property
    def params(self) -> list[ad.Tensor]:
        return self.weights + self.biases


@dataclass
class MlpResult:
    metric_name: str
    valid_metric: float
    test_metric: float
    test_scores: np.ndarray


def mlp_baseline(ds: Dataset, hidden: int = 32, layers: int = 2, lr: float = 1e-3,
                 epochs: int = 30, batch_size: int = 128, seed: int = 0) -> MlpResult:
    """Adam-trained MLP on the dataset's own splits with best-validation selection."""
    rng = np.random.default_rng(seed)
    classification = ds.task == CLASSIFICATION
    out_width = ds.n_classes if classification else 1
    model = Mlp(ds.spec.width, hidden, layers, out_width, classification, rng)
    opt = ad.Adam(model.params, lr=lr)
    X_train, y_train = ds.rows("train")

    def evaluate(split: str) -> tuple[float, np.ndarray]:
        X, y = ds.rows(split)
        pred = model.forward(X).values
        if not classification:
            return rmse(y, pred), pred
        if ds.n_classes == 2:
            scores = np.exp(pred[:, 1])
            return roc_auc(scores, y), scores
        labels = pred.argmax(axis=1)
        return accuracy(y, labels), labels.astype(np.float64)

    name = "rmse" if not classification else ("auc" if ds.n_classes == 2 else "accuracy")
    best, best_params = None, None
    for _ in range(epochs):
        order = rng.permutation(X_train.shape[0])
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            loss = task_loss(model.forward(X_train[idx]), y_train[idx], ds.task)
            value = loss.item()
            if not np.isfinite(value):
                raise ArithmeticError(f"mlp baseline diverged: loss {value}")
            opt.step(ad.backward(loss))
        metric, _ = evaluate("valid")
        if best is None or (metric < best if name == "rmse" else metric > best):
            best = metric
            best_params = [p.values.copy() for p in model.params]

    for p, values in zip(model.params, best_params):
        p.values[...] = values
    test_metric, test_scores = evaluate("test")
    return MlpResult(metric_name=name, valid_metric=best, test_metric=test_metric,
                     test_scores=test_scores)
