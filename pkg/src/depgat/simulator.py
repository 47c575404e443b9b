"""Binary-classification data from a pair of Gaussian Markov random fields.

Two precision matrices share a common random edge set; class A carries extra
differential edges. Samples are drawn exactly from N(0, precision^-1) via a
Cholesky solve, so the zero pattern of each precision matrix is the ground
truth conditional-dependency graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import CLASSIFICATION, ConfigError, Dataset, FeatureSpec


class PositiveDefiniteError(ValueError):
    """A precision matrix failed its Cholesky factorization."""


# explicit 5-node default: a shared chain plus two differential edges
P5_SHARED_EDGES = [(0, 1), (1, 2), (2, 3)]
P5_DIFF_EDGES = [(0, 4), (3, 4)]

PRESETS = {
    "p5": dict(p=5, p_d=0.0, p_i=0.0, explicit=True),
    "p10": dict(p=10, p_d=0.3, p_i=0.2, explicit=False),
    "p20": dict(p=20, p_d=0.3, p_i=0.1, explicit=False),
    # two features with near-perfect positive (class A) / negative (class B) coupling
    "2d": dict(p=2, p_d=0.0, p_i=0.0, explicit=False),
}


@dataclass
class SimConfig:
    p: int = 10
    p_d: float = 0.3                 # edge probability of the differential graph
    p_i: float = 0.2                 # edge probability of the shared graph
    edge_weight: float = 0.5
    delta_d: float | None = None     # diagonal shift; None picks one with a 0.1 PD margin
    n_train: int = 8000
    n_valid: int = 1600
    n_test: int = 1600
    seed: int = 0
    noise_features: int = 0          # standard-normal columns appended after the real ones
    preset: str | None = None
    explicit_shared: list[tuple[int, int]] | None = None
    explicit_diff: list[tuple[int, int]] | None = None

    def to_dict(self) -> dict:
        return {
            "p": self.p, "p_d": self.p_d, "p_i": self.p_i,
            "edge_weight": self.edge_weight, "delta_d": self.delta_d,
            "n_train": self.n_train, "n_valid": self.n_valid, "n_test": self.n_test,
            "seed": self.seed, "noise_features": self.noise_features,
            "preset": self.preset,
            "explicit_shared": self.explicit_shared, "explicit_diff": self.explicit_diff,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        cfg = cls(**{k: d[k] for k in d if k in cls.__dataclass_fields__})
        for name in ("explicit_shared", "explicit_diff"):
            edges = getattr(cfg, name)
            if edges is not None:
                setattr(cfg, name, [tuple(e) for e in edges])
        return cfg

    @classmethod
    def preset_config(cls, name: str, **overrides) -> "SimConfig":
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        preset = PRESETS[name]
        cfg = cls(p=preset["p"], p_d=preset["p_d"], p_i=preset["p_i"], preset=name)
        if preset["explicit"]:
            cfg.explicit_shared = list(P5_SHARED_EDGES)
            cfg.explicit_diff = list(P5_DIFF_EDGES)
        if name == "2d":
            # one shared edge whose weight flips sign between classes
            cfg.explicit_shared = [(0, 1)]
            cfg.explicit_diff = []
            cfg.edge_weight = 0.99
            cfg.delta_d = 1.0
        for key, value in overrides.items():
            if not hasattr(cfg, key):
                raise ConfigError(f"unknown simulation option {key!r}")
            setattr(cfg, key, value)
        return cfg


@dataclass
class PrecisionPair:
    omega_a: np.ndarray
    omega_b: np.ndarray
    true_graph_a: np.ndarray   # binary off-diagonal support of omega_a
    true_graph_b: np.ndarray
    delta_d: float

    @property
    def union_graph(self) -> np.ndarray:
        return np.maximum(self.true_graph_a, self.true_graph_b)

    def to_dict(self) -> dict:
        return {
            "omega_a": self.omega_a.tolist(), "omega_b": self.omega_b.tolist(),
            "true_graph_a": self.true_graph_a.tolist(),
            "true_graph_b": self.true_graph_b.tolist(),
            "delta_d": self.delta_d,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PrecisionPair":
        return cls(omega_a=np.array(d["omega_a"]), omega_b=np.array(d["omega_b"]),
                   true_graph_a=np.array(d["true_graph_a"]),
                   true_graph_b=np.array(d["true_graph_b"]), delta_d=d["delta_d"])


def sample_er_matrix(p: int, prob: float, weight: float, rng: np.random.Generator) -> np.ndarray:
    """Symmetric weighted adjacency with each unordered pair drawn independently."""
    if not 0.0 <= prob <= 1.0:
        raise ConfigError(f"edge probability {prob} outside [0, 1]")
    m = np.zeros((p, p))
    for i in range(p):
        for j in range(i + 1, p):
            if rng.random() < prob:
                m[i, j] = m[j, i] = weight
    return m


def edges_to_matrix(p: int, edges, weight: float) -> np.ndarray:
    m = np.zeros((p, p))
    for i, j in edges:
        if i == j:
            raise ConfigError(f"self edge ({i},{j}) not allowed")
        m[i, j] = m[j, i] = weight
    return m


def build_precisions(delta_mat: np.ndarray, ri_mat: np.ndarray,
                     delta_d: float | None = None) -> PrecisionPair:
    """Form the class precisions (shared + differential + shifted diagonal).

    With ``delta_d=None`` the shift is 0.1 above the most negative eigenvalue
    of either unshifted matrix, so both classes keep a positive-definite margin.
    """
    for name, m in (("differential", delta_mat), ("shared", ri_mat)):
        if not np.array_equal(m, m.T):
            raise ConfigError(f"{name} matrix must be symmetric")
        if np.any(np.diag(m) != 0):
            raise ConfigError(f"{name} matrix must have a zero diagonal")
    both = delta_mat + ri_mat
    if delta_d is None:
        low = min(np.linalg.eigvalsh(both).min(), np.linalg.eigvalsh(ri_mat).min())
        delta_d = 0.1 + max(0.0, -float(low))
    eye = delta_d * np.eye(delta_mat.shape[0])
    omega_a = both + eye
    omega_b = ri_mat + eye
    for name, omega in (("class A", omega_a), ("class B", omega_b)):
        try:
            np.linalg.cholesky(omega)
        except np.linalg.LinAlgError:
            raise PositiveDefiniteError(
                f"{name} precision is not positive definite; increase delta_d (got {delta_d})")
    off = ~np.eye(delta_mat.shape[0], dtype=bool)
    return PrecisionPair(
        omega_a=omega_a, omega_b=omega_b,
        true_graph_a=((omega_a != 0) & off).astype(np.int64),
        true_graph_b=((omega_b != 0) & off).astype(np.int64),
        delta_d=float(delta_d),
    )


def sample_gaussian(omega: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n rows from N(0, omega^-1) by solving L^T x = z with omega = L L^T."""
    try:
        chol = np.linalg.cholesky(omega)
    except np.linalg.LinAlgError:
        raise PositiveDefiniteError("precision matrix is not positive definite")
    z = rng.standard_normal((omega.shape[0], n))
    return np.linalg.solve(chol.T, z).T


def make_precisions(cfg: SimConfig, rng: np.random.Generator) -> PrecisionPair:
    if cfg.explicit_shared is not None or cfg.explicit_diff is not None:
        ri = edges_to_matrix(cfg.p, cfg.explicit_shared or [], cfg.edge_weight)
        delta = edges_to_matrix(cfg.p, cfg.explicit_diff or [], cfg.edge_weight)
    else:
        delta = sample_er_matrix(cfg.p, cfg.p_d, cfg.edge_weight, rng)
        ri = sample_er_matrix(cfg.p, cfg.p_i, cfg.edge_weight, rng)
    if cfg.preset == "2d":
        # class B precision flips the interaction sign instead of dropping edges
        pair = build_precisions(delta, ri, cfg.delta_d)
        omega_b = -ri + pair.delta_d * np.eye(cfg.p)
        np.linalg.cholesky(omega_b)
        off = ~np.eye(cfg.p, dtype=bool)
        return PrecisionPair(pair.omega_a, omega_b, pair.true_graph_a,
                             ((omega_b != 0) & off).astype(np.int64), pair.delta_d)
    return build_precisions(delta, ri, cfg.delta_d)


def make_dataset(cfg: SimConfig) -> tuple[Dataset, PrecisionPair]:
    """Balanced, labeled, split dataset plus its ground-truth graphs."""
    for name in ("n_train", "n_valid", "n_test"):
        count = getattr(cfg, name)
        if count <= 0 or count % 2:
            raise ConfigError(f"{name}={count} must be positive and even for balanced classes")
    rng = np.random.default_rng(cfg.seed)
    pair = make_precisions(cfg, rng)

    blocks, labels, tags = [], [], []
    for split, count in (("train", cfg.n_train), ("valid", cfg.n_valid), ("test", cfg.n_test)):
        half = count // 2
        xa = sample_gaussian(pair.omega_a, half, rng)
        xb = sample_gaussian(pair.omega_b, half, rng)
        x = np.vstack([xa, xb])
        y = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(half, dtype=np.int64)])
        order = rng.permutation(count)
        blocks.append(x[order])
        labels.append(y[order])
        tags.extend([split] * count)

    X = np.vstack(blocks)
    y = np.concatenate(labels)
    if cfg.noise_features:
        X = np.hstack([X, rng.standard_normal((X.shape[0], cfg.noise_features))])

    names = [f"x{i}" for i in range(cfg.p)]
    names += [f"noise{i}" for i in range(cfg.noise_features)]
    spec = FeatureSpec(names=names, kinds=["real"] * len(names), levels=[None] * len(names))
    ds = Dataset(X=X, y=y, task=CLASSIFICATION, n_classes=2, spec=spec,
                 split=np.array(tags), target_levels=["A", "B"],
                 extras={"sim_config": cfg.to_dict(), "precisions": pair.to_dict()})
    return ds, pair
