"""Small dense-matrix helpers shared by the graph networks.

Matrices are plain 2-D ``float64`` numpy arrays. Randomness comes from
numpy's PCG64 bit generator so that a seed pins every draw on every platform.
"""

import numpy as np


def as_matrix(x):
    m = np.asarray(x, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a, b):
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply {a.shape} by {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("matmul produced non-finite values")
    return out


def relu(m):
    return np.maximum(m, 0.0)


def sigmoid(z):
    """Logistic function, evaluated without overflow for large ``|z|``."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def make_rng(seed):
    """Seeded generator (PCG64). Passing an existing Generator returns it."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def grad_check(f, analytic_grad, point, step=1e-6):
    """Compare an analytic gradient against central finite differences.

    ``f`` is called with a perturbed copy of ``point`` and must return a
    scalar. The result is the largest entrywise
    ``|analytic - numeric| / max(1, |numeric|)``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    point = np.array(point, dtype=np.float64)
    analytic_grad = np.asarray(analytic_grad, dtype=np.float64)
    if analytic_grad.shape != point.shape:
        raise ValueError(
            f"gradient shape {analytic_grad.shape} != point shape {point.shape}"
        )

    def evaluate(p):
        v = float(f(p))
        if not np.isfinite(v):
            raise FloatingPointError("function value is not finite")
        return v

    worst = 0.0
    flat = point.reshape(-1)
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + step
        fp = evaluate(point)
        flat[idx] = orig - step
        fm = evaluate(point)
        flat[idx] = orig
        numeric = (fp - fm) / (2.0 * step)
        err = abs(analytic_grad.reshape(-1)[idx] - numeric) / max(1.0, abs(numeric))
        worst = max(worst, err)
    return worst
