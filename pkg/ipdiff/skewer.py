"""Interval partitions, the aggregate-mass and skewer maps, and the d_H metric."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .config import TOP_K_BLOCKS
from .models import ParameterDomainError
from .utils import write_csv

logger = logging.getLogger(__name__)

# Relative slack allowed between the block sum and the declared total mass
MASS_TOLERANCE = 1e-9


@dataclass(frozen=True)
class IntervalPartition:
    """Ordered block lengths of an interval partition of [0, total_mass].

    Blocks are listed left to right. Mass not covered by any block (for
    example blocks dropped by truncation) is the deficit.
    """
    blocks: np.ndarray
    total_mass: float

    def __post_init__(self):
        blocks = np.asarray(self.blocks, dtype=float).reshape(-1)
        if np.any(blocks <= 0) or not np.all(np.isfinite(blocks)):
            raise ParameterDomainError("blocks must be positive and finite")
        total = float(self.total_mass)
        covered = float(blocks.sum())
        if not np.isfinite(total) or total < covered - MASS_TOLERANCE * max(1.0, covered):
            raise ParameterDomainError(f"total mass {total} is below the block sum {covered}")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "total_mass", max(total, covered))

    @classmethod
    def from_blocks(cls, blocks: Iterable[float], total_mass: Optional[float] = None) -> "IntervalPartition":
        arr = np.asarray(list(blocks) if not isinstance(blocks, np.ndarray) else blocks, dtype=float)
        return cls(arr, float(arr.sum()) if total_mass is None else total_mass)

    @classmethod
    def empty(cls) -> "IntervalPartition":
        return cls(np.zeros(0), 0.0)

    @property
    def mass(self) -> float:
        return self.total_mass

    @property
    def count(self) -> int:
        return int(self.blocks.size)

    @property
    def deficit(self) -> float:
        return self.total_mass - float(self.blocks.sum())

    def __len__(self) -> int:
        return self.count

    def boundaries(self) -> np.ndarray:
        """The complement with endpoints: 0, every block boundary, and the total mass."""
        return np.concatenate(([0.0], np.cumsum(self.blocks), [self.total_mass]))

    def normalized(self) -> "IntervalPartition":
        if self.total_mass <= 0:
            raise ParameterDomainError("cannot normalize an empty partition")
        return IntervalPartition(self.blocks / self.total_mass, 1.0)

    def ranked(self) -> np.ndarray:
        return np.sort(self.blocks)[::-1]

    def top(self, k: int) -> np.ndarray:
        return self.ranked()[:k]

    def phi(self) -> np.ndarray:
        """Atoms of the point measure sum of delta(Leb(V)/2), in block order."""
        return self.blocks / 2.0

    def truncate(self, eps_block: float) -> "IntervalPartition":
        """Drop blocks below eps_block; their mass stays in the deficit."""
        return IntervalPartition(self.blocks[self.blocks >= eps_block], self.total_mass)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IntervalPartition):
            return NotImplemented
        return self.total_mass == other.total_mass and np.array_equal(self.blocks, other.blocks)

    def __repr__(self) -> str:
        return f"IntervalPartition(count={self.count}, total_mass={self.total_mass:.6g})"


def _straddling_widths(X: Any, y: float, s: Optional[float] = None) -> np.ndarray:
    """Widths at level y of the spindles whose jumps straddle y, in scaffolding-time order."""
    pre = X.spindle_pre
    zeta = X.spindle_zeta
    mask = (pre <= y) & (y < pre + zeta)
    if s is not None:
        mask &= X.spindle_times <= s
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        return np.zeros(0)
    widths = X.spindle_width(rows, y - pre[rows])
    return widths[widths > 0]


def aggregate_mass(X: Any, y: float, s: float) -> float:
    """M^y(s): total width at level y of spindles marking jumps up to time s."""
    return float(_straddling_widths(X, y, s).sum())


def skewer(X: Any, y: float) -> IntervalPartition:
    widths = _straddling_widths(X, y)
    return IntervalPartition(widths, float(widths.sum()))


def skewer_levels(X: Any, levels: Sequence[float]) -> List[IntervalPartition]:
    return [skewer(X, float(y)) for y in levels]


def _directed_hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """max over a of the distance to the sorted set b (b has at least two points)."""
    idx = np.clip(np.searchsorted(b, a), 1, b.size - 1)
    nearest = np.minimum(np.abs(a - b[idx - 1]), np.abs(a - b[idx]))
    return float(nearest.max())


def dH(beta: IntervalPartition, gamma: IntervalPartition) -> float:
    """Hausdorff distance between the complements (endpoints included) on a shared real line."""
    a = beta.boundaries()
    b = gamma.boundaries()
    return max(_directed_hausdorff(a, b), _directed_hausdorff(b, a))


def concatenate(parts: Sequence[IntervalPartition]) -> IntervalPartition:
    """Place partitions side by side, in order.

    Each part's deficit sits at its right end, so a deficit is kept as the
    total mass grows but no gap block is invented.
    """
    if not parts:
        return IntervalPartition.empty()
    if len(parts) == 1:
        return parts[0]
    blocks = np.concatenate([p.blocks for p in parts])
    return IntervalPartition(blocks, float(sum(p.total_mass for p in parts)))


def path_continuity_stat(skewers: Sequence[IntervalPartition]) -> float:
    """Largest d_H between consecutive levels."""
    if len(skewers) < 2:
        return 0.0
    return max(dH(a, b) for a, b in zip(skewers[:-1], skewers[1:]))


def level_rows(levels: Sequence[float], partitions: Sequence[IntervalPartition],
               top_k: int = TOP_K_BLOCKS, replicate: Optional[int] = None) -> List[List[Any]]:
    rows = []
    for y, part in zip(levels, partitions):
        top = part.top(top_k)
        padded = list(top) + [0.0] * (top_k - top.size)
        head = [replicate] if replicate is not None else []
        rows.append(head + [float(y), part.total_mass, part.count] + padded)
    return rows


def level_header(top_k: int = TOP_K_BLOCKS, with_replicate: bool = False) -> List[str]:
    head = ["replicate"] if with_replicate else []
    return head + ["level", "total_mass", "block_count"] + [f"block_{i + 1}" for i in range(top_k)]


def write_level_csv(path: Path, levels: Sequence[float], partitions: Sequence[IntervalPartition],
                    top_k: int = TOP_K_BLOCKS, meta: Optional[Dict[str, Any]] = None) -> Path:
    """One row per level: level, total mass, block count and the top-k blocks (zero padded)."""
    return write_csv(path, level_header(top_k), level_rows(levels, partitions, top_k), meta=meta)
