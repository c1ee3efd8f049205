"""Hadamard matrices and matrix-free fast Walsh-Hadamard transforms.

Three row orderings are supported:

* ``natural``  -- Sylvester/Kronecker order, ``H_{2^k} = H_2 (x) H_{2^{k-1}}``.
* ``sequency`` -- Walsh order, row ``s`` has exactly ``s`` sign changes.
* ``dyadic``   -- Paley order, natural rows taken in bit-reversed index order.

All transforms are unnormalized (``H``, not ``H / sqrt(N)``).  Every ordered
matrix is symmetric, so applying the transform twice returns ``N * v`` and
row ``r`` equals the transform of the unit vector ``e_r``.
"""
from __future__ import annotations

from enum import Enum
from functools import lru_cache

import numpy as np

MAX_DENSE_ORDER = 14


class TransformOrdering(str, Enum):
    NATURAL = "natural"
    SEQUENCY = "sequency"
    DYADIC = "dyadic"


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def log2_exact(n: int) -> int:
    if not is_power_of_two(n):
        raise ValueError(f"length {n} is not a power of two")
    return n.bit_length() - 1


def dense_hadamard(k: int) -> np.ndarray:
    """Natural-ordered Hadamard matrix of order ``2**k`` via the Kronecker recursion.

    Intended as a test oracle; orders above ``2**14`` are refused.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k > MAX_DENSE_ORDER:
        raise MemoryError(f"dense Hadamard of order 2**{k} exceeds the 2**{MAX_DENSE_ORDER} guard")
    h2 = np.array([[1, 1], [1, -1]], dtype=np.int64)
    h = np.ones((1, 1), dtype=np.int64)
    for _ in range(k):
        h = np.kron(h2, h)
    return h


def fwht_natural(v) -> np.ndarray:
    """Natural-ordered fast Walsh-Hadamard transform along the last axis.

    Butterfly layers run with group length ``t = N/2, N/4, ..., 1``; in each
    layer every pair ``(b[index], b[index + t])`` becomes
    ``(b[index] + b[index + t], b[index] - b[index + t])``.  Each layer is one
    vectorized update over all groups.  Integer input stays integer (exact).
    """
    b = np.array(v, copy=True)
    if b.dtype.kind not in "iuf":
        b = b.astype(np.float64)
    elif b.dtype.kind == "u" or (b.dtype.kind == "i" and b.dtype != np.int64):
        b = b.astype(np.int64)
    elif b.dtype.kind == "f" and b.dtype != np.float64:
        b = b.astype(np.float64)
    n = b.shape[-1] if b.ndim else 0
    if b.ndim == 0 or not is_power_of_two(n):
        raise ValueError(f"transform length must be a power of two, got shape {b.shape}")
    lead = b.shape[:-1]
    t = n // 2
    while t >= 1:
        groups = b.reshape(*lead, n // (2 * t), 2, t)
        temp = groups[..., 0, :].copy()
        groups[..., 0, :] += groups[..., 1, :]
        groups[..., 1, :] *= -1
        groups[..., 1, :] += temp
        t //= 2
    return b


@lru_cache(maxsize=32)
def _bit_reversal(n: int) -> np.ndarray:
    bits = log2_exact(n)
    idx = np.arange(n, dtype=np.int64)
    rev = np.zeros(n, dtype=np.int64)
    for k in range(bits):
        rev |= ((idx >> k) & 1) << (bits - 1 - k)
    rev.flags.writeable = False
    return rev


def bit_reversal_permutation(n: int) -> np.ndarray:
    return _bit_reversal(n).copy()


@lru_cache(maxsize=32)
def _walsh_permutation(n: int) -> np.ndarray:
    s = np.arange(n, dtype=np.int64)
    gray = s ^ (s >> 1)
    perm = _bit_reversal(n)[gray]
    perm.flags.writeable = False
    return perm


def walsh_permutation(n: int) -> np.ndarray:
    """Map sequency index ``s`` to the natural row with ``s`` sign changes.

    ``natural_index = bit_reverse(gray(s))`` with ``gray(s) = s ^ (s >> 1)``.
    """
    return _walsh_permutation(n).copy()


def _ordering_permutation(n: int, ordering: TransformOrdering) -> np.ndarray | None:
    ordering = TransformOrdering(ordering)
    if ordering is TransformOrdering.NATURAL:
        return None
    if ordering is TransformOrdering.SEQUENCY:
        return _walsh_permutation(n)
    return _bit_reversal(n)


def fwht(v, ordering: TransformOrdering | str = TransformOrdering.SEQUENCY) -> np.ndarray:
    """Ordered fast Walsh-Hadamard transform along the last axis.

    The natural transform is computed first and its outputs are rearranged
    into the requested row order.
    """
    out = fwht_natural(v)
    perm = _ordering_permutation(out.shape[-1], ordering)
    if perm is None:
        return out
    return out[..., perm]


def ordered_hadamard(k: int, ordering: TransformOrdering | str) -> np.ndarray:
    """Dense ordered matrix (oracle), rows rearranged from :func:`dense_hadamard`."""
    h = dense_hadamard(k)
    perm = _ordering_permutation(1 << k, ordering)
    return h if perm is None else h[perm]


def extract_row(r: int, n: int, ordering: TransformOrdering | str = TransformOrdering.SEQUENCY) -> np.ndarray:
    """Row ``r`` of the ordered ``H_n`` as an int8 +-1 vector, without forming the matrix."""
    log2_exact(n)
    if not 0 <= r < n:
        raise IndexError(f"row {r} out of range for order {n}")
    e = np.zeros(n, dtype=np.int64)
    e[r] = 1
    return fwht(e, ordering).astype(np.int8)


def sign_changes(row) -> int:
    """Number of adjacent sign flips in a +-1 vector."""
    row = np.asarray(row)
    if row.size and not np.all((row == 1) | (row == -1)):
        raise ValueError("entries must be +1 or -1")
    return int(np.count_nonzero(row[1:] != row[:-1]))
