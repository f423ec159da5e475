"""Frame-to-frame MRF energy propagation.

Unary costs are rasterized to per-pixel planes, pushed through the
cross filter, and aggregated back to regions.  Binary costs live on the
dual lattice (one position per 4-adjacent pixel pair) and go through the
same machinery with the edge position's guide color taken as the mean of
its two endpoint pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BinaryField, UnaryField, color_distance
from .overseg import RegionAdjacency, RegionMap
from .permeability import (
    AXIS_H,
    AXIS_T,
    AXIS_V,
    EPS_MASS,
    CrossFilterState,
    PermeabilityParams,
    PASS_ORDERS,
    cross_filter,
    filter_pass,
)


@dataclass
class UnaryPlanes:
    cost_fg: np.ndarray
    cost_bg: np.ndarray


@dataclass
class EdgePlanes:
    """Directed weights on lattice edges: h planes are H x (W-1), v planes
    (H-1) x W.  fwd runs left-to-right / top-to-bottom.  h_mass / v_mass
    mark positions that carry weight (None means all of them)."""

    h_fwd: np.ndarray
    h_bwd: np.ndarray
    v_fwd: np.ndarray
    v_bwd: np.ndarray
    h_mass: np.ndarray | None = None
    v_mass: np.ndarray | None = None


def rasterize_plane(values: np.ndarray, rmap: RegionMap) -> np.ndarray:
    """Per-node values spread onto the pixel grid (any sign)."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (rmap.region_count,):
        raise ValueError("values do not cover the region map")
    return values[rmap.ids]


def aggregate_plane(plane: np.ndarray, rmap: RegionMap) -> np.ndarray:
    """Per-region arithmetic mean of a pixel plane."""
    return np.bincount(
        rmap.ids.ravel(), weights=np.asarray(plane, dtype=np.float64).ravel(),
        minlength=rmap.region_count,
    ) / rmap.sizes


def rasterize_unary(unary: UnaryField, rmap: RegionMap) -> UnaryPlanes:
    """Every pixel carries its region's costs."""
    return UnaryPlanes(rasterize_plane(unary.cost_fg, rmap), rasterize_plane(unary.cost_bg, rmap))


def aggregate_unary(planes: UnaryPlanes, rmap: RegionMap) -> UnaryField:
    """Per-region arithmetic mean of each plane."""
    return UnaryField(aggregate_plane(planes.cost_fg, rmap), aggregate_plane(planes.cost_bg, rmap))


def propagate_unary(
    prev: UnaryPlanes,
    guide_prev: np.ndarray,
    guide_cur: np.ndarray,
    p: PermeabilityParams,
) -> UnaryPlanes:
    """Estimate the current frame's unary planes as the filtered previous
    ones; outputs are convex combinations, hence bounded by the inputs."""
    stacked = np.stack([prev.cost_fg, prev.cost_bg])
    out = cross_filter(stacked, guide_prev, guide_cur, p)
    return UnaryPlanes(out[0], out[1])


def edge_guides(frame: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Guide colors for the dual lattice: endpoint means per edge."""
    frame = np.asarray(frame, dtype=np.float64)
    h_guide = 0.5 * (frame[:, :-1, :] + frame[:, 1:, :])
    v_guide = 0.5 * (frame[:-1, :, :] + frame[1:, :, :])
    return h_guide, v_guide


def binary_to_edge_planes(binary: BinaryField, adj: RegionAdjacency, rmap: RegionMap) -> EdgePlanes:
    """Place each directed pair weight onto its boundary lattice edges.

    Lattice edges interior to a region carry zero value and zero mass, so
    they pass signal through without contributing or absorbing any.
    """
    if binary.pair_count != adj.pair_count:
        raise ValueError("binary field does not cover the adjacency")
    h, w = rmap.ids.shape

    def planes_for(pair_idx, first, shape):
        fwd = np.zeros(shape)
        bwd = np.zeros(shape)
        mask = pair_idx >= 0
        idx = pair_idx[mask]
        fw = np.where(first[mask], binary.w_fwd[idx], binary.w_bwd[idx])
        bw = np.where(first[mask], binary.w_bwd[idx], binary.w_fwd[idx])
        fwd[mask] = fw
        bwd[mask] = bw
        return fwd, bwd, mask.astype(np.float64)

    h_fwd, h_bwd, h_mass = planes_for(adj.h_pair, adj.h_first, (h, max(w - 1, 0)))
    v_fwd, v_bwd, v_mass = planes_for(adj.v_pair, adj.v_first, (max(h - 1, 0), w))
    return EdgePlanes(h_fwd, h_bwd, v_fwd, v_bwd, h_mass, v_mass)


def aggregate_binary(planes: EdgePlanes, adj: RegionAdjacency) -> BinaryField:
    """Per pair and direction, the mean plane value over its boundary edges."""
    m = adj.pair_count
    acc_fwd = np.zeros(m)
    acc_bwd = np.zeros(m)
    count = np.zeros(m)

    for pair_idx, first, fwd, bwd in (
        (adj.h_pair, adj.h_first, planes.h_fwd, planes.h_bwd),
        (adj.v_pair, adj.v_first, planes.v_fwd, planes.v_bwd),
    ):
        mask = pair_idx >= 0
        idx = pair_idx[mask]
        f = first[mask]
        val_fwd = np.where(f, fwd[mask], bwd[mask])
        val_bwd = np.where(f, bwd[mask], fwd[mask])
        np.add.at(acc_fwd, idx, val_fwd)
        np.add.at(acc_bwd, idx, val_bwd)
        np.add.at(count, idx, 1.0)

    count = np.maximum(count, 1.0)
    return BinaryField(adj.pairs, acc_fwd / count, acc_bwd / count)


def propagate_binary(
    prev: EdgePlanes,
    guide_prev: np.ndarray,
    guide_cur: np.ndarray,
    p: PermeabilityParams,
) -> EdgePlanes:
    """Filter the four directed edge planes on their dual lattices."""
    hg_prev, vg_prev = edge_guides(guide_prev)
    hg_cur, vg_cur = edge_guides(guide_cur)
    h_out = cross_filter(
        np.stack([prev.h_fwd, prev.h_bwd]), hg_prev, hg_cur, p, masses_src=prev.h_mass
    )
    v_out = cross_filter(
        np.stack([prev.v_fwd, prev.v_bwd]), vg_prev, vg_cur, p, masses_src=prev.v_mass
    )
    return EdgePlanes(h_out[0], h_out[1], v_out[0], v_out[1])


def smoothed_colors(guide_prev: np.ndarray, guide_cur: np.ndarray, p: PermeabilityParams) -> np.ndarray:
    """Self-guided spatio-temporal smoothing of the current frame's colors
    over the two-frame window (all positions carry unit mass)."""
    guide_prev = np.asarray(guide_prev, dtype=np.float64)
    guide_cur = np.asarray(guide_cur, dtype=np.float64)
    guide = np.stack([guide_prev, guide_cur])
    values = np.moveaxis(guide, 3, 0).copy()  # (3, 2, H, W)
    masses = np.ones(guide.shape[:3])
    perms: dict = {}
    runs = []
    with np.errstate(under="ignore"):
        for order in PASS_ORDERS:
            state = CrossFilterState(values.copy(), masses.copy(), guide, perms)
            for axis in order:
                state = filter_pass(state, axis, p)
            denom = np.maximum(state.masses[1], EPS_MASS)
            runs.append(state.values[:, 1] / denom)
    return np.moveaxis(0.5 * (runs[0] + runs[1]), 0, 2)


def smoothed_potts_binary(
    guide_prev: np.ndarray,
    guide_cur: np.ndarray,
    p: PermeabilityParams,
    beta_scale: float | None = None,
) -> EdgePlanes:
    """Alternative binary path: smooth the current frame's colors, then take
    contrast-sensitive weights exp(-|dz|/beta) per lattice edge.

    beta_scale defaults to the mean adjacent-pair distance of the smoothed
    frame (1.0 when every pair is identical)."""
    smoothed = smoothed_colors(guide_prev, guide_cur, p)
    h_d = color_distance(smoothed[:, :-1, :], smoothed[:, 1:, :])
    v_d = color_distance(smoothed[:-1, :, :], smoothed[1:, :, :])
    if beta_scale is None:
        dists = np.concatenate([h_d.ravel(), v_d.ravel()])
        beta_scale = float(dists.mean()) if dists.size else 1.0
        if beta_scale <= 0.0:
            beta_scale = 1.0
    if beta_scale <= 0.0:
        raise ValueError("beta_scale must be positive")
    h_w = np.exp(-h_d / beta_scale)
    v_w = np.exp(-v_d / beta_scale)
    return EdgePlanes(h_w, h_w.copy(), v_w, v_w.copy())
