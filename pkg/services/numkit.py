# -*- coding: utf-8 -*-
"""
Numeric kit - dense vector/matrix helpers, probability utilities and seeding

Matrices are 2-d float64 numpy arrays (rows x cols, C order), vectors are 1-d
float64 arrays. Every function here is pure.
"""

import hashlib

import numpy as np

from services.errors import DomainError

DTYPE = np.float64


def as_vector(values, name="vector"):
    """Coerce to a 1-d float64 array"""
    arr = np.asarray(values, dtype=DTYPE)
    if arr.ndim != 1:
        raise DomainError(f"{name} must be 1-d, got shape {arr.shape}")
    return arr


def as_matrix(values, name="matrix", cols=None):
    """Coerce to a 2-d float64 array; an empty sequence becomes a 0 x cols matrix"""
    arr = np.asarray(values, dtype=DTYPE)
    if arr.size == 0 and arr.ndim < 2:
        arr = arr.reshape(0, cols or 0)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DomainError(f"{name} must be 2-d, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


def check_finite(arr, name):
    """Raise DomainError if any entry is NaN or infinite"""
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr


def cosine_similarity(a, b):
    """aᵀb / (‖a‖·‖b‖)"""
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    if a.shape != b.shape:
        raise DomainError(f"dimension mismatch: a has {a.size}, b has {b.size}")
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0.0:
        raise DomainError("cosine similarity undefined: argument 'a' has zero norm")
    if norm_b == 0.0:
        raise DomainError("cosine similarity undefined: argument 'b' has zero norm")
    return float(np.dot(a, b) / (norm_a * norm_b))


def cosine_matrix(rows, cols):
    """Pairwise cosine similarity between the rows of two matrices"""
    rows = as_matrix(rows, "rows")
    cols = as_matrix(cols, "cols")
    if rows.shape[1] != cols.shape[1]:
        raise DomainError(f"dimension mismatch: {rows.shape[1]} vs {cols.shape[1]}")
    row_norms = np.linalg.norm(rows, axis=1)
    col_norms = np.linalg.norm(cols, axis=1)
    if np.any(row_norms == 0.0) or np.any(col_norms == 0.0):
        raise DomainError("cosine similarity undefined for zero-norm prototypes")
    return (rows @ cols.T) / np.outer(row_norms, col_norms)


def softmax(z, temperature=1.0, axis=-1):
    """Temperature softmax along `axis` with max-subtraction"""
    if not temperature > 0:
        raise DomainError(f"temperature must be positive, got {temperature}")
    scaled = np.asarray(z, dtype=DTYPE) / temperature
    if scaled.size == 0:
        return scaled.copy()
    shifted = scaled - np.max(scaled, axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=axis, keepdims=True)


def log_softmax(z, axis=-1):
    """log softmax(z) computed through log-sum-exp"""
    z = np.asarray(z, dtype=DTYPE)
    if z.size == 0:
        return z.copy()
    shifted = z - np.max(z, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def entropy(p):
    """-Σ p_i ln p_i with 0·ln 0 = 0"""
    p = as_vector(p, "p")
    if np.any(p < 0):
        raise DomainError("probability vector has negative entries")
    total = float(np.sum(p))
    if abs(total - 1.0) > 1e-6:
        raise DomainError(f"probability vector is not normalized: sum = {total!r}")
    return float(-np.sum(_xlogx(p)))


def row_entropy(probs):
    """Entropy of every row of a row-stochastic matrix"""
    probs = as_matrix(probs, "probs")
    return -np.sum(_xlogx(probs), axis=1)


def _xlogx(p):
    logs = np.zeros_like(p)
    np.log(p, out=logs, where=p > 0)
    return p * logs


def squared_distance(a, b):
    """‖a − b‖²₂"""
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    if a.shape != b.shape:
        raise DomainError(f"dimension mismatch: a has {a.size}, b has {b.size}")
    diff = a - b
    return float(np.dot(diff, diff))


def pairwise_squared_distances(points, centers):
    """n x k matrix of squared distances between rows of `points` and `centers`"""
    points = as_matrix(points, "points")
    centers = as_matrix(centers, "centers")
    if points.shape[1] != centers.shape[1]:
        raise DomainError(f"dimension mismatch: {points.shape[1]} vs {centers.shape[1]}")
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _key_to_int(key):
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def derive_seed(seed, *keys):
    """Stable 32-bit seed derived from a base seed and a path of keys"""
    sequence = np.random.SeedSequence([_key_to_int(seed)] + [_key_to_int(k) for k in keys])
    return int(sequence.generate_state(1)[0])


def make_rng(seed, *keys):
    """Seeded generator; every stochastic routine draws from one of these"""
    return np.random.default_rng(derive_seed(seed, *keys))
