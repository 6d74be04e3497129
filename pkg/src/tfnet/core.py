"""Dense float64 numerical primitives on which every other layer builds.

Conventions used throughout the package:

* vectors are 1-d ``float64`` arrays,
* matrices are 2-d row-major ``float64`` arrays,
* order-3 operating tensors are ``(m, d, d)`` arrays, i.e. ``m`` contiguous
  ``d x d`` slices, with slice ``k`` addressable as ``t[k]``.

All kernels run through numpy's default (non-BLAS) einsum path, which
iterates summation axes in a fixed ascending order, so results are
bit-reproducible run to run for identical inputs.  Everything here is a
pure function; nothing is mutated except explicit ``*_accumulate`` targets.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError

__all__ = [
    "bilinear",
    "softmax",
    "relu",
    "relu_deriv",
    "sigmoid",
    "sigmoid_deriv",
    "matvec",
    "matvec_transpose",
    "outer_accumulate",
    "transpose_slices",
]

# Smallest/largest probabilities a stable sigmoid is allowed to emit; keeps
# outputs strictly inside (0, 1) even for saturating logits.
_P_LO = np.finfo(np.float64).tiny
_P_HI = np.nextafter(1.0, 0.0)


def _f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def bilinear(v, tensor, u) -> np.ndarray:
    """Multi-slice bilinear form of two vectors through an order-3 tensor.

    ``out[k] = sum_{a,b} v[a] * tensor[k, a, b] * u[b]``, one scalar per
    slice, so the result has length ``m`` for a ``(m, d, d)`` tensor.
    """
    v, u, tensor = _f64(v), _f64(u), _f64(tensor)
    if tensor.ndim != 3 or tensor.shape[1] != tensor.shape[2]:
        raise DimensionError(
            f"operating tensor must have shape (m, d, d), got {tensor.shape}"
        )
    d = tensor.shape[1]
    if v.shape != (d,) or u.shape != (d,):
        raise DimensionError(
            f"bilinear expects vectors of length {d} matching the tensor "
            f"slices, got {v.shape} and {u.shape}"
        )
    out = np.einsum("a,kab,b->k", v, tensor, u)
    assert np.isfinite(out).all(), "bilinear produced a non-finite value"
    return out


def softmax(x) -> np.ndarray:
    """Numerically stable softmax over the last axis.

    The running maximum is subtracted before exponentiation, so the kernel
    is total on finite input: components are strictly positive and sum to 1.
    """
    x = _f64(x)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def relu(x) -> np.ndarray:
    return np.maximum(_f64(x), 0.0)


def relu_deriv(x) -> np.ndarray:
    """Derivative of relu; the kink at 0 uses the left value 0."""
    return (_f64(x) > 0.0).astype(np.float64)


def sigmoid(x) -> np.ndarray:
    """Stable logistic function, computed branch-wise so exp never overflows.

    Outputs are clamped to the largest open interval representable in
    float64, so callers can take ``log(p)`` and ``log(1 - p)`` safely.
    """
    x = _f64(x)
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return np.clip(out, _P_LO, _P_HI)


def sigmoid_deriv(x) -> np.ndarray:
    s = sigmoid(x)
    return s * (1.0 - s)


def matvec(a, x) -> np.ndarray:
    """``a @ x`` with explicit shape checking and ascending accumulation."""
    a, x = _f64(a), _f64(x)
    if a.ndim != 2 or x.ndim != 1 or a.shape[1] != x.shape[0]:
        raise DimensionError(
            f"matvec expects (r, c) by (c,), got {a.shape} and {x.shape}"
        )
    return np.einsum("ij,j->i", a, x)


def matvec_transpose(a, y) -> np.ndarray:
    """``a.T @ y`` without materializing the transpose."""
    a, y = _f64(a), _f64(y)
    if a.ndim != 2 or y.ndim != 1 or a.shape[0] != y.shape[0]:
        raise DimensionError(
            f"matvec_transpose expects (r, c) by (r,), got {a.shape} and {y.shape}"
        )
    return np.einsum("ij,i->j", a, y)


def outer_accumulate(out, x, y) -> np.ndarray:
    """Accumulate the outer product ``x y^T`` into ``out`` in place."""
    x, y = _f64(x), _f64(y)
    if out.shape != (x.shape[0], y.shape[0]):
        raise DimensionError(
            f"outer_accumulate target must be {(x.shape[0], y.shape[0])}, "
            f"got {out.shape}"
        )
    out += x[:, None] * y[None, :]
    return out


def transpose_slices(tensor) -> np.ndarray:
    """Transpose every d x d slice of an (m, d, d) tensor."""
    tensor = _f64(tensor)
    if tensor.ndim != 3 or tensor.shape[1] != tensor.shape[2]:
        raise DimensionError(
            f"expected an (m, d, d) tensor, got shape {tensor.shape}"
        )
    return tensor.transpose(0, 2, 1).copy()
