"""Labels, the gradient table, and per-byte shadow memory.

Every byte of machine memory and every register carries a 16-bit label. The
label indexes a :class:`DerivativePair` in a :class:`GradientTable`; label 0 is
reserved for the zero pair and is what constants and untouched bytes carry.
"""

from __future__ import annotations

import math
from array import array
from dataclasses import dataclass

MAX_LABEL = 0xFFFF


@dataclass(frozen=True)
class DerivativePair:
    pos: float  # chained derivative along the +1 source direction
    neg: float  # ... along the -1 source direction

    def __post_init__(self):
        if not (math.isfinite(self.pos) and math.isfinite(self.neg)):
            raise ValueError(f"non-finite derivative pair ({self.pos}, {self.neg})")

    @property
    def is_zero(self) -> bool:
        return self.pos == 0.0 and self.neg == 0.0

    @property
    def magnitude(self) -> float:
        return max(abs(self.pos), abs(self.neg))


ZERO = DerivativePair(0.0, 0.0)
SEED = DerivativePair(1.0, -1.0)


class LabelExhausted(Exception):
    """Raised when a run needs more distinct derivative pairs than labels exist."""

    def __init__(self, site: str | None, allocated: int):
        super().__init__(f"label space exhausted at {site} after {allocated} labels")
        self.site = site
        self.allocated = allocated


class GradientTable:
    def __init__(self, max_label: int = MAX_LABEL):
        self.max_label = max_label
        self._pairs: list[DerivativePair] = [ZERO]

    def __len__(self) -> int:
        """Number of allocated labels, excluding the reserved label 0."""
        return len(self._pairs) - 1

    @property
    def next_free(self) -> int:
        return len(self._pairs)

    def lookup(self, label: int) -> DerivativePair:
        return self._pairs[label]

    def intern(self, d: DerivativePair, input_labels=(), site: str | None = None) -> int:
        """Label for ``d``: 0 for the zero pair, an input's label if it already
        holds ``d``, otherwise a freshly allocated label."""
        if d.is_zero:
            return 0
        for label in input_labels:
            if label and self._pairs[label] == d:
                return label
        if self.next_free > self.max_label:
            raise LabelExhausted(site, len(self))
        self._pairs.append(d)
        return len(self._pairs) - 1


class ShadowMemory:
    def __init__(self, size: int):
        self.labels = array("H", bytes(2 * size))
        self.registers: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self.labels)

    def _check(self, addr: int, width: int) -> None:
        if width < 0 or addr < 0 or addr + width > len(self.labels):
            # mirrors the vm's out-of-bounds trap
            raise IndexError(f"shadow access [{addr}, {addr + width}) out of bounds")

    def reg(self, reg_id: int) -> int:
        return self.registers.get(reg_id, 0)

    def set_reg(self, reg_id: int, label: int) -> None:
        self.registers[reg_id] = label

    def store_shadow(self, addr: int, width: int, label: int) -> None:
        self._check(addr, width)
        self.labels[addr:addr + width] = array("H", [label]) * width

    def load_shadow(self, table: GradientTable, addr: int, width: int) -> int:
        """Single label of the range, or the label with the largest pair magnitude
        when the bytes disagree (earliest byte wins ties)."""
        self._check(addr, width)
        span = self.labels[addr:addr + width]
        first = span[0]
        if all(lb == first for lb in span):
            return first
        best, best_mag = 0, -1.0
        for lb in span:
            mag = table.lookup(lb).magnitude
            if mag > best_mag:
                best, best_mag = lb, mag
        return best

    def clear(self, addr: int, length: int) -> None:
        self.store_shadow(addr, length, 0)

    def copy_range(self, dst: int, src: int, length: int) -> None:
        self._check(dst, length)
        self._check(src, length)
        self.labels[dst:dst + length] = self.labels[src:src + length]
