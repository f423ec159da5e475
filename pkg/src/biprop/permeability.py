"""Edge-aware dual-scan recursive filter over a two-frame volume.

The filter smooths a value plane with weights derived from guide colors:
each 1-D scan carries signal between neighbors scaled by a permeability
exp(-|color step| / lambda).  Separable passes over horizontal, vertical
and temporal axes give every output position full-frame support at linear
cost; the implied source-to-target weight is the cost of a step-like path
with one segment per axis.

Values and the normalization masses go through identical scans, so the
division at the very end turns the raw sums into a convex combination of
the sources.  Keeping normalization last keeps the whole operator linear
in the values, which the residual-recycling scheme depends on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import color_distance

# Guard for mass underflow before the final division; permeabilities are
# strictly positive so true zeros cannot occur, only accumulated underflow.
EPS_MASS = 1e-12

AXIS_H = "H"
AXIS_V = "V"
AXIS_T = "T"


@dataclass
class PermeabilityParams:
    """lam is the denominator of the color-step exponent (default 30)."""

    lam: float = 30.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")


def permeability(a, b, p: PermeabilityParams):
    """Per-step transmission weight exp(-|a-b|_1 / lam), in (0, 1]."""
    return np.exp(-color_distance(a, b) / p.lam)


def scan_1d(values: np.ndarray, perms: np.ndarray) -> np.ndarray:
    """Dual one-tap recursive scan of a sequence; returns forward + backward
    accumulators (each position's own value is counted twice; dividing by
    the identically scanned mass sequence cancels that)."""
    values = np.asarray(values, dtype=np.float64)
    perms = np.asarray(perms, dtype=np.float64)
    if values.ndim != 1 or perms.shape != (max(values.shape[0] - 1, 0),):
        raise ValueError("perms must have length len(values) - 1")
    return _scan_lines(values, perms)


def _scan_lines(values: np.ndarray, perms: np.ndarray) -> np.ndarray:
    """Dual scan along the last axis; perms broadcast over leading axes."""
    n = values.shape[-1]
    fwd = values.astype(np.float64, copy=True)
    for k in range(1, n):
        fwd[..., k] += fwd[..., k - 1] * perms[..., k - 1]
    bwd = values.astype(np.float64, copy=True)
    for k in range(n - 2, -1, -1):
        bwd[..., k] += bwd[..., k + 1] * perms[..., k]
    return fwd + bwd


@dataclass
class CrossFilterState:
    """Joint value/mass volumes over a 2-frame guide window.

    values: (channels, 2, H, W); masses: (2, H, W), shared by all channels;
    guide: (2, H, W, 3) colors, never modified by passes.
    """

    values: np.ndarray
    masses: np.ndarray
    guide: np.ndarray
    perms: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.ndim != 4 or self.guide.ndim != 4 or self.guide.shape[3] != 3:
            raise ValueError("values must be (C, 2, H, W) and guide (2, H, W, 3)")
        if self.values.shape[1:] != self.guide.shape[:3]:
            raise ValueError("values and guide window shapes disagree")
        if self.masses.shape != self.guide.shape[:3]:
            raise ValueError("masses and guide window shapes disagree")
        if np.any(self.masses < 0):
            raise ValueError("masses must be nonnegative")


def _guide_perms(guide: np.ndarray, axis: str, p: PermeabilityParams) -> np.ndarray:
    if axis == AXIS_H:
        return permeability(guide[:, :, 1:, :], guide[:, :, :-1, :], p)
    if axis == AXIS_V:
        return permeability(guide[:, 1:, :, :], guide[:, :-1, :, :], p)
    if axis == AXIS_T:
        return permeability(guide[1:, :, :, :], guide[:-1, :, :, :], p)
    raise ValueError(f"unknown axis {axis!r}")


def filter_pass(state: CrossFilterState, axis: str, p: PermeabilityParams) -> CrossFilterState:
    """Apply the dual scan along one axis to every line of values and masses."""
    if axis not in state.perms:
        state.perms[axis] = _guide_perms(state.guide, axis, p)
    perms = state.perms[axis]
    # values axes are (C, T, H, W); guide axes are (T, H, W).
    vals_axis = {AXIS_T: 1, AXIS_V: 2, AXIS_H: 3}[axis]
    guide_axis = vals_axis - 1
    v = np.moveaxis(state.values, vals_axis, -1)
    m = np.moveaxis(state.masses, guide_axis, -1)
    pr = np.moveaxis(perms, guide_axis, -1)
    new_values = np.moveaxis(_scan_lines(v, pr), -1, vals_axis)
    new_masses = np.moveaxis(_scan_lines(m, pr), -1, guide_axis)
    return CrossFilterState(new_values, new_masses, state.guide, state.perms)


# The two separable orders whose results are averaged.  The temporal pass
# runs first: each source is discounted by how much its own pixel changed
# between the frames, and the spatial walking then happens in the current
# frame's color structure.  Running it last instead would cancel the
# temporal weight in normalization and pin the output to the previous
# frame's geometry, which cannot follow a moving object.
PASS_ORDERS = ((AXIS_T, AXIS_H, AXIS_V), (AXIS_T, AXIS_V, AXIS_H))


def cross_filter(
    values_src: np.ndarray,
    guide_prev: np.ndarray,
    guide_cur: np.ndarray,
    p: PermeabilityParams,
    masses_src: np.ndarray | None = None,
) -> np.ndarray:
    """Propagate value plane(s) from the previous frame onto the current one.

    Builds a 2-frame volume (sources and their masses at t-1, zeros at t),
    runs the temporal pass followed by the separable spatial passes in both
    orders, normalizes each run's t-plane by its mass plane, and returns
    the average of the two runs.  masses_src defaults to ones; positions
    given zero mass neither contribute nor absorb weight.
    """
    values_src = np.asarray(values_src, dtype=np.float64)
    single = values_src.ndim == 2
    planes = values_src[None] if single else values_src
    h, w = planes.shape[1:]
    guide_prev = np.asarray(guide_prev, dtype=np.float64)
    guide_cur = np.asarray(guide_cur, dtype=np.float64)
    if guide_prev.shape != (h, w, 3) or guide_cur.shape != (h, w, 3):
        raise ValueError("guides must match the plane shape")
    if masses_src is None:
        masses_src = np.ones((h, w))
    masses_src = np.asarray(masses_src, dtype=np.float64)
    if masses_src.shape != (h, w):
        raise ValueError("masses_src must match the plane shape")

    guide = np.stack([guide_prev, guide_cur])
    c = planes.shape[0]
    values = np.zeros((c, 2, h, w))
    values[:, 0] = planes
    masses = np.zeros((2, h, w))
    masses[0] = masses_src

    perms: dict = {}
    runs = []
    with np.errstate(under="ignore"):
        for order in PASS_ORDERS:
            state = CrossFilterState(values.copy(), masses.copy(), guide, perms)
            for axis in order:
                state = filter_pass(state, axis, p)
            denom = np.maximum(state.masses[1], EPS_MASS)
            runs.append(state.values[:, 1] / denom)
    out = 0.5 * (runs[0] + runs[1])
    return out[0] if single else out


def _axis_weight_matrix(line_colors: np.ndarray, p: PermeabilityParams) -> np.ndarray:
    """Dual-scan weight matrix of one guide line: diagonal 2, off-diagonal
    the product of permeabilities along the segment between the positions."""
    n = line_colors.shape[0]
    if n == 1:
        return np.full((1, 1), 2.0)
    logs = -color_distance(line_colors[1:], line_colors[:-1]) / p.lam
    cum = np.concatenate([[0.0], np.cumsum(logs)])
    with np.errstate(under="ignore"):
        mat = np.exp(-np.abs(cum[:, None] - cum[None, :]))
    np.fill_diagonal(mat, 2.0)
    return mat


def oracle_cross_filter(
    values_src: np.ndarray,
    guide_prev: np.ndarray,
    guide_cur: np.ndarray,
    p: PermeabilityParams,
    masses_src: np.ndarray | None = None,
) -> np.ndarray:
    """Quadratic-cost reference for cross_filter.

    For each pass order, composes the per-axis dual-scan weight functions
    into an explicit source->target weight (step-like path: one temporal
    step at the source pixel, then spatial segments walked in the current
    frame), applies them to values and masses identically, normalizes, and
    averages the orders.  Intended for small inputs only.
    """
    values_src = np.asarray(values_src, dtype=np.float64)
    single = values_src.ndim == 2
    planes = values_src[None] if single else values_src
    h, w = planes.shape[1:]
    guide_prev = np.asarray(guide_prev, dtype=np.float64)
    guide_cur = np.asarray(guide_cur, dtype=np.float64)
    if masses_src is None:
        masses_src = np.ones((h, w))
    masses_src = np.asarray(masses_src, dtype=np.float64)

    # Per-row horizontal and per-column vertical weight matrices of the
    # current frame, where all spatial walking happens.
    wh = np.stack([_axis_weight_matrix(guide_cur[y], p) for y in range(h)])
    wv = np.stack([_axis_weight_matrix(guide_cur[:, x], p) for x in range(w)])
    t_perm = permeability(guide_prev, guide_cur, p)

    vals = planes.reshape(planes.shape[0], -1)
    mass = masses_src.reshape(-1)
    runs = []
    with np.errstate(under="ignore"):
        for order in PASS_ORDERS:
            weight = np.empty((h * w, h * w))
            for y in range(h):
                for x in range(w):
                    if order[1] == AXIS_H:
                        # row y' from x' to x, then column x from y' to y
                        wmat = wh[:, :, x] * wv[x, :, y][:, None]
                    else:
                        # column x' from y' to y, then row y from x' to x
                        wmat = wv[:, :, y].T * wh[y, :, x][None, :]
                    weight[y * w + x] = (wmat * t_perm).reshape(-1)
            num = vals @ weight.T
            den = np.maximum(weight @ mass, EPS_MASS)
            runs.append((num / den).reshape(planes.shape))
    out = 0.5 * (runs[0] + runs[1])
    return out[0] if single else out
