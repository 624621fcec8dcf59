"""Partitions, interlacing arrays, and the discrete-to-continuous rescaling maps.

Young diagrams are stored dense (a tuple of non-increasing row lengths with
trailing zeros trimmed).  Rows and columns are 1-based throughout, matching
the usual (i, j) box coordinates.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

__all__ = [
    "Partition",
    "Cell",
    "ArmLeg",
    "InterlacingArray",
    "WeylPoint",
    "ConePoint",
    "ScalingParams",
    "arm_leg",
    "addable_cells",
    "interlaces",
    "interlaces_real",
    "rescale_level",
    "rescale_array",
    "partitions_with_size",
    "all_partitions_up_to",
    "interlacing_predecessors",
]


class Cell(NamedTuple):
    """A box (i, j) of a Young diagram; row and col are 1-based."""

    row: int
    col: int


class ArmLeg(NamedTuple):
    arm: int
    leg: int
    co_arm: int
    co_leg: int


@dataclass(frozen=True)
class Partition:
    """A Young diagram: non-increasing nonnegative integer row lengths."""

    rows: tuple[int, ...] = ()

    def __post_init__(self):
        rows = tuple(int(r) for r in self.rows)
        if any(r < 0 for r in rows):
            raise ValueError(f"negative row length in {rows}")
        if any(rows[i] < rows[i + 1] for i in range(len(rows) - 1)):
            raise ValueError(f"row lengths must be non-increasing: {rows}")
        while rows and rows[-1] == 0:
            rows = rows[:-1]
        object.__setattr__(self, "rows", rows)

    def size(self) -> int:
        return sum(self.rows)

    def length(self) -> int:
        """Number of strictly positive rows."""
        return len(self.rows)

    def row(self, i: int) -> int:
        """Row length lambda_i (1-based); 0 beyond the diagram."""
        if i < 1:
            raise IndexError("rows are 1-based")
        return self.rows[i - 1] if i <= len(self.rows) else 0

    def conjugate_row(self, j: int) -> int:
        """Column length lambda'_j = #{i : lambda_i >= j}."""
        if j < 1:
            raise IndexError("columns are 1-based")
        return sum(1 for r in self.rows if r >= j)

    def transpose(self) -> "Partition":
        if not self.rows:
            return Partition()
        width = self.rows[0]
        cols = [0] * width
        for r in self.rows:
            for j in range(r):
                cols[j] += 1
        return Partition(tuple(cols))

    def contains(self, cell: Cell) -> bool:
        return cell.row >= 1 and cell.col >= 1 and self.row(cell.row) >= cell.col

    def cells(self) -> Iterator[Cell]:
        for i, r in enumerate(self.rows, start=1):
            for j in range(1, r + 1):
                yield Cell(i, j)

    def add_box(self, cell: Cell) -> "Partition":
        """Return the diagram with one box added at ``cell`` (must be addable)."""
        if cell.col != self.row(cell.row) + 1:
            raise ValueError(f"cell {cell} is not at the end of row {cell.row}")
        if cell.row > 1 and self.row(cell.row - 1) < cell.col:
            raise ValueError(f"adding {cell} would break monotonicity")
        rows = list(self.rows) + [0] * max(0, cell.row - len(self.rows))
        rows[cell.row - 1] += 1
        return Partition(tuple(rows))

    def padded(self, n: int) -> tuple[int, ...]:
        if self.length() > n:
            raise ValueError(f"partition has {self.length()} rows > {n}")
        return self.rows + (0,) * (n - len(self.rows))

    def to_string(self) -> str:
        return ",".join(str(r) for r in self.rows) if self.rows else ""

    @classmethod
    def from_string(cls, text: str) -> "Partition":
        text = text.strip()
        if not text:
            return cls()
        return cls(tuple(int(tok) for tok in text.split(",")))


def arm_leg(lam: Partition, cell: Cell) -> ArmLeg:
    """Arm, leg, co-arm and co-leg lengths of a box inside ``lam``.

    arm = lambda_i - j, leg = lambda'_j - i, co-arm = j - 1, co-leg = i - 1.
    """
    if not lam.contains(cell):
        raise ValueError(f"cell {cell} is not a box of {lam.rows}")
    i, j = cell
    return ArmLeg(lam.row(i) - j, lam.conjugate_row(j) - i, j - 1, i - 1)


def addable_cells(lam: Partition, max_rows: int) -> list[Cell]:
    """Cells whose addition keeps a valid diagram with at most ``max_rows`` rows."""
    if max_rows < 1:
        raise ValueError("max_rows must be >= 1")
    out = []
    for i in range(1, min(lam.length() + 1, max_rows) + 1):
        if i == 1 or lam.row(i - 1) > lam.row(i):
            out.append(Cell(i, lam.row(i) + 1))
    return out


def interlaces(mu: Partition, lam: Partition) -> bool:
    """True iff lambda_i >= mu_i >= lambda_{i+1} for every i."""
    top = max(mu.length(), lam.length()) + 1
    for i in range(1, top + 1):
        if not (lam.row(i) >= mu.row(i) >= lam.row(i + 1)):
            return False
    return True


def interlaces_real(u: Sequence[float], v: Sequence[float], tol: float = 0.0) -> bool:
    """Continuous interlacing v_1 <= u_1 <= v_2 <= ... <= v_k, with slack ``tol``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if len(u) != len(v) - 1:
        return False
    return bool(np.all(u - v[:-1] >= -tol) and np.all(v[1:] - u >= -tol))


@dataclass(frozen=True)
class InterlacingArray:
    """A Gelfand-Tsetlin pattern of Young diagrams lambda^1 < lambda^2 < ..."""

    levels: tuple[Partition, ...]

    def __post_init__(self):
        levels = tuple(self.levels)
        for k, lam in enumerate(levels, start=1):
            if lam.length() > k:
                raise ValueError(f"level {k} has {lam.length()} rows > {k}")
        for k in range(len(levels) - 1):
            if not interlaces(levels[k], levels[k + 1]):
                raise ValueError(
                    f"levels {k + 1} and {k + 2} do not interlace: "
                    f"{levels[k].rows} vs {levels[k + 1].rows}"
                )
        object.__setattr__(self, "levels", levels)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def level(self, k: int) -> Partition:
        return self.levels[k - 1]

    def top(self) -> Partition:
        return self.levels[-1]

    def to_string(self) -> str:
        return ";".join(lev.to_string() for lev in self.levels)

    @classmethod
    def from_string(cls, text: str) -> "InterlacingArray":
        parts = text.split(";")
        return cls(tuple(Partition.from_string(p) for p in parts))

    @classmethod
    def empty(cls, n: int) -> "InterlacingArray":
        return cls(tuple(Partition() for _ in range(n)))


@dataclass(frozen=True)
class WeylPoint:
    """A nondecreasing real vector y_1 <= ... <= y_N."""

    coords: tuple[float, ...]

    def __post_init__(self):
        coords = tuple(float(c) for c in self.coords)
        if any(not np.isfinite(c) for c in coords):
            raise ValueError("coordinates must be finite")
        if any(coords[i] > coords[i + 1] for i in range(len(coords) - 1)):
            raise ValueError(f"coordinates must be nondecreasing: {coords}")
        object.__setattr__(self, "coords", coords)

    def __len__(self) -> int:
        return len(self.coords)

    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)


@dataclass(frozen=True)
class ConePoint:
    """A real Gelfand-Tsetlin pattern: level k holds k interlaced values."""

    levels: tuple[tuple[float, ...], ...]
    tol: float = 0.0

    def __post_init__(self):
        levels = tuple(tuple(float(x) for x in lev) for lev in self.levels)
        for k, lev in enumerate(levels, start=1):
            if len(lev) != k:
                raise ValueError(f"level {k} must hold {k} values, got {len(lev)}")
        for k in range(1, len(levels)):
            if not interlaces_real(levels[k - 1], levels[k], tol=self.tol):
                raise ValueError(
                    f"levels {k} and {k + 1} do not interlace: "
                    f"{levels[k - 1]} vs {levels[k]}"
                )
        object.__setattr__(self, "levels", levels)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def level(self, k: int) -> np.ndarray:
        return np.asarray(self.levels[k - 1], dtype=float)

    def top(self) -> np.ndarray:
        return self.level(self.n_levels)


@dataclass(frozen=True)
class ScalingParams:
    """Diffusive rescaling: chain time s = t / (theta * epsilon), shift t/epsilon,
    space scale sqrt(epsilon)."""

    epsilon: float
    time: float
    theta: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if self.time < 0:
            raise ValueError("time must be nonnegative")

    @property
    def shift(self) -> float:
        return self.time / self.epsilon

    @property
    def space_scale(self) -> float:
        return self.epsilon ** 0.5

    @property
    def chain_time(self) -> float:
        return self.time / (self.epsilon * self.theta)


def rescale_level(lam: Partition, params: ScalingParams, level: int) -> np.ndarray:
    """Map row lengths to continuum coordinates y_i = sqrt(eps) * (lambda_{level+1-i} - t/eps).

    Rows are padded with zeros up to ``level``; the output is nondecreasing.
    """
    if lam.length() > level:
        raise ValueError(f"partition has {lam.length()} rows > level {level}")
    rows = np.array(lam.padded(level), dtype=float)
    return params.space_scale * (rows[::-1] - params.shift)


def rescale_array(arr: InterlacingArray, params: ScalingParams, tol: float = 1e-9) -> ConePoint:
    """Apply the rescaling map level by level, producing a cone point."""
    levels = tuple(
        tuple(rescale_level(arr.level(k), params, k)) for k in range(1, arr.n_levels + 1)
    )
    return ConePoint(levels, tol=tol)


def partitions_with_size(size: int, max_rows: int | None = None) -> Iterator[Partition]:
    """All partitions of ``size`` with at most ``max_rows`` rows."""

    def gen(remaining: int, max_part: int, rows_left: int) -> Iterator[tuple[int, ...]]:
        if remaining == 0:
            yield ()
            return
        if rows_left == 0:
            return
        for first in range(min(remaining, max_part), 0, -1):
            for rest in gen(remaining - first, first, rows_left - 1):
                yield (first,) + rest

    rows_cap = size if max_rows is None else max_rows
    for shape in gen(size, size, rows_cap):
        yield Partition(shape)


def all_partitions_up_to(max_size: int, max_rows: int | None = None) -> Iterator[Partition]:
    for m in range(max_size + 1):
        yield from partitions_with_size(m, max_rows)


def interlacing_predecessors(lam: Partition) -> Iterator[Partition]:
    """All mu with mu < lam (one level down in a Gelfand-Tsetlin pattern)."""
    n = lam.length()
    if n == 0:
        yield Partition()
        return
    ranges = [range(lam.row(i + 1), lam.row(i) + 1) for i in range(1, n + 1)]
    for choice in itertools.product(*ranges):
        # choice is automatically non-increasing since the ranges interleave
        yield Partition(choice)
