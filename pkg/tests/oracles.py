"""Independent numerical oracles shared by the test modules.

These deliberately avoid the library's own backward pass and kernels so they
can serve as ground truth for it.
"""

import numpy as np


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar-valued ``f()`` wrt array ``x``.

    ``f`` must re-read ``x`` on every call; entries are perturbed in place.
    """
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + h
        fp = f()
        x[i] = orig - h
        fm = f()
        x[i] = orig
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(float(np.abs(b).max()), 1e-12)
    return float(np.abs(a - b).max()) / denom


def adam_trajectory_on_square(x0: float, lr: float, steps: int,
                              beta1: float = 0.9, beta2: float = 0.999,
                              eps: float = 1e-8) -> list[float]:
    """Run the Adam recurrences on f(x) = x^2 with plain Python floats."""
    x, m, v = x0, 0.0, 0.0
    out = [x]
    for t in range(1, steps + 1):
        g = 2.0 * x
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        x = x - lr * m_hat / (v_hat ** 0.5 + eps)
        out.append(x)
    return out


def pairwise_auc(scores, labels) -> float:
    """AUC by brute-force enumeration of positive/negative pairs, ties count 1/2."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                wins += 1.0
            elif sp == sn:
                wins += 0.5
    return wins / (len(pos) * len(neg))
