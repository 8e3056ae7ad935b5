from __future__ import annotations

import numpy as np


class SweepSeed:
    """
    This class represents the seed of one randomized step in a sweep.
    It takes the master seed of the run, the index of the anchor and the index
    of the grid cell (or contrast value) being falsified and packs them into a
    single integer.

    The master seed sits above bit 40, the anchor index takes the next 20 bits
    and the cell index the last 20 bits. Anchor and cell indices are limited to
    1048575 which is far more than a desk-scale sweep will ever see.
    Seeds derived this way do not depend on worker scheduling, which keeps
    parallel runs identical to sequential ones.
    """

    MASTER_SHIFT = 40
    ANCHOR_SHIFT = MASTER_SHIFT - 20
    # Whatever is left below the anchor bits belongs to the cell
    CELL_MASK = (1 << ANCHOR_SHIFT) - 1
    ANCHOR_MASK = (1 << (MASTER_SHIFT - ANCHOR_SHIFT)) - 1

    def __init__(self, master: int, anchor: int = 0, cell: int = 0):
        if master < 0 or anchor < 0 or cell < 0:
            raise ValueError("seed components must be non-negative")
        self.master = master
        self.anchor = anchor
        self.cell = cell

    def __int__(self):
        ret = self.master << self.MASTER_SHIFT
        ret += (self.anchor & self.ANCHOR_MASK) << self.ANCHOR_SHIFT
        ret += self.cell & self.CELL_MASK
        return ret

    def __index__(self):
        return int(self)

    def __repr__(self):
        return f"SweepSeed(master={self.master}, anchor={self.anchor}, cell={self.cell})"

    def for_cell(self, cell: int) -> SweepSeed:
        return SweepSeed(self.master, self.anchor, cell)

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(int(self))

    @classmethod
    def from_int(cls, number: int) -> SweepSeed:
        master = number >> cls.MASTER_SHIFT
        # strip the master seed to get anchor and cell
        number ^= master << cls.MASTER_SHIFT
        anchor = number >> cls.ANCHOR_SHIFT
        number ^= anchor << cls.ANCHOR_SHIFT
        return cls(master, anchor, number)
