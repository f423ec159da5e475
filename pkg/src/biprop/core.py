"""Shared domain types: frame sequences, labelings, energy fields, scribbles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Scribble mark encoding, shared with the grayscale PNG wire format.
SCRIBBLE_NONE = 0
SCRIBBLE_BG = 128
SCRIBBLE_FG = 255

# Output mask encoding.
MASK_BG = 0
MASK_FG = 255


@dataclass
class FrameSequence:
    """Ordered RGB frames as a (count, H, W, 3) float array, channels in [0, 255]."""

    frames: np.ndarray

    def __post_init__(self):
        f = np.ascontiguousarray(np.asarray(self.frames, dtype=np.float64))
        if f.ndim != 4 or f.shape[3] != 3:
            raise ValueError("frames must have shape (count, H, W, 3)")
        if f.shape[0] < 1:
            raise ValueError("a sequence needs at least one frame")
        if f.min() < 0.0 or f.max() > 255.0:
            raise ValueError("channel values must lie in [0, 255]")
        self.frames = f

    @property
    def count(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    def __getitem__(self, t: int) -> np.ndarray:
        return self.frames[t]


@dataclass
class UnaryField:
    """Per-node label costs. cost_fg[i] is paid when node i is foreground."""

    cost_fg: np.ndarray
    cost_bg: np.ndarray

    def __post_init__(self):
        self.cost_fg = np.asarray(self.cost_fg, dtype=np.float64)
        self.cost_bg = np.asarray(self.cost_bg, dtype=np.float64)
        if self.cost_fg.shape != self.cost_bg.shape or self.cost_fg.ndim != 1:
            raise ValueError("cost_fg and cost_bg must be 1-D arrays of equal length")
        for a in (self.cost_fg, self.cost_bg):
            if not np.all(np.isfinite(a)) or np.any(a < 0):
                raise ValueError("unary costs must be finite and nonnegative")

    @property
    def node_count(self) -> int:
        return self.cost_fg.shape[0]


@dataclass
class BinaryField:
    """Directed coherence penalties on adjacent node pairs.

    pairs holds (i, j) with i < j; w_fwd is the i->j weight and w_bwd the
    j->i weight.  Full energies are symmetric (w_fwd == w_bwd); residuals
    after a solve generally are not.
    """

    pairs: np.ndarray
    w_fwd: np.ndarray
    w_bwd: np.ndarray

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        self.w_fwd = np.asarray(self.w_fwd, dtype=np.float64)
        self.w_bwd = np.asarray(self.w_bwd, dtype=np.float64)
        m = self.pairs.shape[0]
        if self.w_fwd.shape != (m,) or self.w_bwd.shape != (m,):
            raise ValueError("weight arrays must match the pair count")
        if m and np.any(self.pairs[:, 0] >= self.pairs[:, 1]):
            raise ValueError("pairs must be stored as (i, j) with i < j")
        for a in (self.w_fwd, self.w_bwd):
            if not np.all(np.isfinite(a)) or np.any(a < 0):
                raise ValueError("binary weights must be finite and nonnegative")

    @property
    def pair_count(self) -> int:
        return self.pairs.shape[0]

    @staticmethod
    def symmetric(pairs: np.ndarray, weights: np.ndarray) -> "BinaryField":
        w = np.asarray(weights, dtype=np.float64)
        return BinaryField(pairs, w, w.copy())


def color_distance(a, b):
    """L1 distance between RGB colors; broadcasts over leading axes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.sum(np.abs(a - b), axis=-1)


def energy_of(labeling: np.ndarray, unary: UnaryField, binary: BinaryField) -> float:
    """MRF energy of a labeling: sum of unaries plus all cut directed weights.

    A directed weight i->j is paid exactly when i is FG and j is BG, so a
    symmetric field reproduces the undirected Potts energy once per
    differing pair.
    """
    lab = np.asarray(labeling, dtype=bool)
    if lab.shape != (unary.node_count,):
        raise ValueError("labeling and unary field cover different node sets")
    if binary.pair_count and binary.pairs.max() >= unary.node_count:
        raise ValueError("binary field references nodes outside the unary field")
    total = float(np.sum(np.where(lab, unary.cost_fg, unary.cost_bg)))
    if binary.pair_count:
        li = lab[binary.pairs[:, 0]]
        lj = lab[binary.pairs[:, 1]]
        total += float(np.sum(binary.w_fwd[li & ~lj]))
        total += float(np.sum(binary.w_bwd[lj & ~li]))
    return total
