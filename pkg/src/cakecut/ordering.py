"""Measurement orderings of the sequency-ordered 2D Hadamard basis.

Each basis pattern is a row of the sequency-ordered ``H_N`` reshaped row-major
into a ``p x q`` raster.  The cake-cutting order sorts patterns by their piece
count: the number of 4-connected regions of ``+1`` plus those of ``-1``.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .hadamard import TransformOrdering, fwht, is_power_of_two

METHODS = ("cc_ascending", "cc_descending", "random", "oracle_sorted", "russian_dolls", "natural")


class UnsupportedShapeError(ValueError):
    """The closed-form piece-count rule only covers square power-of-two shapes."""


@dataclass(frozen=True)
class PatternShape:
    p: int
    q: int

    def __post_init__(self):
        if not (is_power_of_two(self.p) and is_power_of_two(self.q)):
            raise ValueError(f"pattern shape {self.p}x{self.q} must have power-of-two sides")

    @property
    def n(self) -> int:
        return self.p * self.q

    @property
    def is_square(self) -> bool:
        return self.p == self.q

    def __str__(self) -> str:
        return f"{self.p}x{self.q}"

    @classmethod
    def parse(cls, text: str) -> "PatternShape":
        p, _, q = text.lower().partition("x")
        return cls(int(p), int(q or p))


@dataclass
class OrderSequence:
    """A measurement schedule: ``indices[t]`` is the sequency row measured at time ``t``."""

    indices: np.ndarray
    method: str
    shape: PatternShape
    pixel_permutation: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.method not in METHODS:
            raise ValueError(f"unknown order method {self.method!r}")
        if self.indices.shape != (self.shape.n,):
            raise ValueError("order length does not match the pattern count")
        if self.pixel_permutation is not None:
            self.pixel_permutation = np.asarray(self.pixel_permutation, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.indices)

    def is_bijection(self) -> bool:
        return bool(np.array_equal(np.sort(self.indices), np.arange(self.shape.n)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# method={self.method}\n# shape={self.shape}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerows([int(i)] for i in self.indices)
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "OrderSequence":
        lines = text.splitlines()
        if len(lines) < 2 or not lines[0].startswith("# method=") or not lines[1].startswith("# shape="):
            raise ValueError("order CSV needs '# method=' and '# shape=' header lines")
        method = lines[0].split("=", 1)[1].strip()
        shape = PatternShape.parse(lines[1].split("=", 1)[1].strip())
        indices = [int(row[0]) for row in csv.reader(lines[2:]) if row]
        return cls(np.array(indices, dtype=np.int64), method, shape)

    @classmethod
    def load(cls, path) -> "OrderSequence":
        return cls.from_csv(Path(path).read_text())


# --- piece counting -------------------------------------------------------


@numba.njit(cache=True)
def _count_regions(img):
    p, q = img.shape
    seen = np.zeros((p, q), dtype=np.bool_)
    stack = np.empty(p * q, dtype=np.int64)
    regions = 0
    for i0 in range(p):
        for j0 in range(q):
            if seen[i0, j0]:
                continue
            regions += 1
            value = img[i0, j0]
            seen[i0, j0] = True
            top = 0
            stack[0] = i0 * q + j0
            top = 1
            while top > 0:
                top -= 1
                k = stack[top]
                i = k // q
                j = k - i * q
                if i > 0 and not seen[i - 1, j] and img[i - 1, j] == value:
                    seen[i - 1, j] = True
                    stack[top] = k - q
                    top += 1
                if i < p - 1 and not seen[i + 1, j] and img[i + 1, j] == value:
                    seen[i + 1, j] = True
                    stack[top] = k + q
                    top += 1
                if j > 0 and not seen[i, j - 1] and img[i, j - 1] == value:
                    seen[i, j - 1] = True
                    stack[top] = k - 1
                    top += 1
                if j < q - 1 and not seen[i, j + 1] and img[i, j + 1] == value:
                    seen[i, j + 1] = True
                    stack[top] = k + 1
                    top += 1
    return regions


@numba.njit(cache=True)
def _count_regions_batch(batch, out):
    for b in range(batch.shape[0]):
        out[b] = _count_regions(batch[b])


def count_pieces(pattern) -> int:
    """Number of 4-connected constant-sign regions in a +-1 raster.

    Iterative flood fill with an explicit stack; diagonal neighbours are not
    connected.
    """
    pattern = np.asarray(pattern)
    if pattern.ndim != 2 or pattern.size == 0:
        raise ValueError("pattern must be a non-empty 2D raster")
    if not np.all((pattern == 1) | (pattern == -1)):
        raise ValueError("pattern entries must be +1 or -1")
    return int(_count_regions(np.ascontiguousarray(pattern, dtype=np.int8)))


def sequency_patterns(shape: PatternShape, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Sequency basis patterns ``start..stop-1`` as an int8 array ``(k, p, q)``."""
    n = shape.n
    stop = n if stop is None else stop
    eye = np.zeros((stop - start, n), dtype=np.int64)
    eye[np.arange(stop - start), np.arange(start, stop)] = 1
    rows = fwht(eye, TransformOrdering.SEQUENCY)
    return rows.astype(np.int8).reshape(stop - start, shape.p, shape.q)


def piece_counts_by_region(shape: PatternShape, chunk: int = 1024) -> np.ndarray:
    """Piece count of every sequency pattern, by flood fill over the materialized patterns."""
    n = shape.n
    counts = np.empty(n, dtype=np.int64)
    chunk = max(1, min(chunk, max(1, (1 << 22) // n)))
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        _count_regions_batch(sequency_patterns(shape, start, stop), counts[start:stop])
    return counts


def piece_counts_walsh_rule(shape: PatternShape) -> np.ndarray:
    """Closed-form piece counts of the square sequency basis.

    Block ``i = 1..q`` (length ``p``) holds the progression ``i, 2i, ..., ip``
    for odd ``i`` and ``ip, ..., 2i, i`` for even ``i``.
    """
    if not shape.is_square:
        raise UnsupportedShapeError(f"closed-form piece counts need a square shape, got {shape}")
    p = shape.p
    i = np.arange(1, shape.q + 1, dtype=np.int64)[:, None]
    j = np.arange(1, p + 1, dtype=np.int64)[None, :]
    odd = (i % 2) == 1
    return np.where(odd, i * j, i * (p + 1 - j)).reshape(-1)


def piece_counts(shape: PatternShape, counter: str = "rule") -> np.ndarray:
    if counter == "rule":
        return piece_counts_walsh_rule(shape)
    if counter == "region_count":
        return piece_counts_by_region(shape)
    raise ValueError(f"unknown piece counter {counter!r}")


def separable_indices(shape: PatternShape) -> tuple[np.ndarray, np.ndarray]:
    """Per sequency pattern, the sign-change counts down a column and along a row.

    Square shapes only.  Pattern ``s`` is the outer product of a vertical Walsh
    function and a horizontal one; with ``block = s // p`` the horizontal
    sequency is ``block`` and the vertical one runs forward on even blocks and
    backward on odd ones.
    """
    if not shape.is_square:
        raise UnsupportedShapeError(f"separable indexing needs a square shape, got {shape}")
    p = shape.p
    s = np.arange(shape.n, dtype=np.int64)
    block, offset = np.divmod(s, p)
    vertical = np.where(block % 2 == 0, offset, p - 1 - offset)
    return vertical, block


def sequency_index(vertical, horizontal, p: int):
    vertical = np.asarray(vertical)
    horizontal = np.asarray(horizontal)
    return horizontal * p + np.where(horizontal % 2 == 0, vertical, p - 1 - vertical)


# --- orderings ------------------------------------------------------------


def _stable_sort(keys: np.ndarray, descending: bool) -> np.ndarray:
    keys = np.asarray(keys)
    return np.argsort(-keys if descending else keys, kind="stable")


def cc_order(shape: PatternShape, direction: str = "ascending", counter: str = "rule") -> OrderSequence:
    """Cake-cutting order: sequency patterns stably sorted by piece count."""
    if direction not in ("ascending", "descending"):
        raise ValueError(f"direction must be ascending or descending, got {direction!r}")
    counts = piece_counts(shape, counter)
    indices = _stable_sort(counts, direction == "descending")
    return OrderSequence(indices, f"cc_{direction}", shape)


def natural_order(shape: PatternShape) -> OrderSequence:
    return OrderSequence(np.arange(shape.n), "natural", shape)


def random_order(shape: PatternShape, seed: int, scramble_pixels: bool = True) -> OrderSequence:
    """Seeded random row order, with a companion pixel scramble of the pattern layout."""
    rows_seed, pixels_seed = np.random.SeedSequence(seed).spawn(2)
    indices = np.random.default_rng(rows_seed).permutation(shape.n)
    pixels = np.random.default_rng(pixels_seed).permutation(shape.n) if scramble_pixels else None
    return OrderSequence(indices, "random", shape, pixel_permutation=pixels)


def oracle_sorted_order(y_full, shape: PatternShape, criterion: str = "abs_descending") -> OrderSequence:
    """Order patterns by the size of their (fully sampled) bucket values."""
    y_full = np.asarray(y_full, dtype=np.float64)
    if y_full.shape != (shape.n,):
        raise ValueError(f"expected {shape.n} bucket values, got {y_full.shape}")
    if criterion == "abs_descending":
        keys = np.abs(y_full)
    elif criterion == "signed_descending":
        keys = y_full
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    return OrderSequence(_stable_sort(keys, True), "oracle_sorted", shape)


def _russian_dolls_2d(p: int) -> list[tuple[int, int]]:
    if p == 1:
        return [(0, 0)]
    half = p // 2
    first = _russian_dolls_2d(half)

    def by_pieces(cells):
        return sorted(cells, key=lambda c: (c[0] + 1) * (c[1] + 1))

    second = by_pieces([(a, b) for a in range(half) for b in range(half, p)])
    third = [(b, a) for a, b in second]
    fourth = by_pieces([(a, b) for a in range(half, p) for b in range(half, p)])
    return first + second + third + fourth


def russian_dolls_order(shape: PatternShape) -> OrderSequence:
    """Simplified Russian-Dolls order of the square sequency basis.

    The first quarter is the order for the half-resolution basis (each of
    those patterns upscaled by 2), the second quarter holds patterns fine
    horizontally and coarse vertically, the third is its transpose in the same
    order, and the fourth takes the rest.  Quarters two and four are sorted by
    ascending piece count (stable).
    """
    if not shape.is_square:
        raise UnsupportedShapeError(f"Russian-Dolls order needs a square shape, got {shape}")
    cells = np.array(_russian_dolls_2d(shape.p), dtype=np.int64)
    indices = sequency_index(cells[:, 0], cells[:, 1], shape.p)
    return OrderSequence(indices, "russian_dolls", shape)


def make_order(shape: PatternShape, method: str, *, counter: str = "rule", seed: int = 0,
               y_full=None, criterion: str = "abs_descending") -> OrderSequence:
    """Build an order by method tag (see ``METHODS``)."""
    if method in ("cc_ascending", "cc_descending"):
        return cc_order(shape, method.removeprefix("cc_"), counter)
    if method == "random":
        return random_order(shape, seed)
    if method == "russian_dolls":
        return russian_dolls_order(shape)
    if method == "natural":
        return natural_order(shape)
    if method == "oracle_sorted":
        if y_full is None:
            raise ValueError("oracle_sorted order needs the full bucket signal")
        return oracle_sorted_order(y_full, shape, criterion)
    raise ValueError(f"unknown order method {method!r}")


def order_benchmark(sides, repeats: int = 3, region_count_max_side: int = 64) -> list[dict]:
    """Time cake-cutting order generation with region counting and with the closed-form rule.

    Region counting is skipped above ``region_count_max_side`` (its cost grows
    as ``N**2``).  Each entry is the best of ``repeats`` runs.
    """
    _count_regions(np.ones((2, 2), dtype=np.int8))  # JIT warm-up
    rows = []
    for side in sides:
        shape = PatternShape(side, side)
        runs = [("CC", "region_count")] if side <= region_count_max_side else []
        runs.append(("CC_rule", "rule"))
        for label, counter in runs:
            best = float("inf")
            for _ in range(repeats):
                t0 = time.perf_counter()
                cc_order(shape, "ascending", counter)
                best = min(best, time.perf_counter() - t0)
            rows.append({"n": shape.n, "method": label, "seconds": best})
    return rows


def benchmark_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["n", "method", "seconds"], lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({"n": row["n"], "method": row["method"], "seconds": f"{row['seconds']:.6g}"})
    return buf.getvalue()
