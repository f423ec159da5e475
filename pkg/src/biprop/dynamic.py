"""Residual-graph recycling across frames.

After a frame is solved, the leftover residual capacities are pushed
through the same linear filter that propagates full energies, and the
next frame's graph is rebuilt from them, so the solver only has to push
whatever flow the frame change introduced.

Filtering the residual is equivalent to filtering the full energy and
then pushing the filtered flows of the previous solve.  Those filtered
flows do not conserve mass exactly (terminal flows filter through the
node operator, edge flows through the edge operator, and the two do not
commute with divergence), which would silently shift the minimizer.  The
dynamic step therefore carries the previous solve's net terminal flow as
one extra filtered channel and adds the conservation defect back to the
terminal capacities; the repaired graph induces exactly the same energy
landscape (up to a constant) as the filtered full energy, so the recycled
solve is exactly equivalent while still skipping the recycled flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BinaryField, UnaryField, energy_of
from .graphcut import ResidualGraph, build_graph, max_flow, min_cut_labeling
from .overseg import RegionAdjacency, RegionMap
from .permeability import PermeabilityParams, cross_filter
from .propagate import (
    aggregate_binary,
    aggregate_plane,
    aggregate_unary,
    binary_to_edge_planes,
    propagate_binary,
    propagate_unary,
    rasterize_plane,
    rasterize_unary,
)


@dataclass
class ResidualFields:
    """Residual capacities expressed as energy fields.

    res_src / res_snk are the leftover terminal capacities per node and
    binary the leftover directed pair capacities.  delta is the net
    terminal flow (into sink minus out of source) each node carried in the
    solve that produced the residual; it rides along so the recycled graph
    can be conservation-repaired after filtering."""

    res_src: np.ndarray
    res_snk: np.ndarray
    binary: BinaryField
    delta: np.ndarray | None = None

    def as_unary(self) -> UnaryField:
        # build_graph maps cost_bg -> source arcs and cost_fg -> sink arcs.
        return UnaryField(cost_fg=self.res_snk, cost_bg=self.res_src)


@dataclass
class DynState:
    """Carrier of recycled state between consecutive frames."""

    frame_index: int
    residual: ResidualFields
    region_map: RegionMap
    adjacency: RegionAdjacency
    full_unary: UnaryField | None = None
    full_binary: BinaryField | None = None


def extract_residual(rg: ResidualGraph, adj: RegionAdjacency) -> ResidualFields:
    """Copy the terminal and directed pair residuals out of a solve."""
    g = rg.graph
    if adj.pair_count != g.pairs.shape[0] or adj.region_count != g.node_count:
        raise ValueError("adjacency does not match the solved graph")
    binary = BinaryField(g.pairs.copy(), rg.res_fwd.copy(), rg.res_bwd.copy())
    flow_snk = g.cap_snk - rg.res_snk
    flow_src = g.cap_src - rg.res_src
    return ResidualFields(
        res_src=rg.res_src.copy(),
        res_snk=rg.res_snk.copy(),
        binary=binary,
        delta=flow_snk - flow_src,
    )


def propagate_fields(
    unary: UnaryField,
    binary: BinaryField,
    rmap_prev: RegionMap,
    adj_prev: RegionAdjacency,
    rmap_cur: RegionMap,
    adj_cur: RegionAdjacency,
    guide_prev: np.ndarray,
    guide_cur: np.ndarray,
    p: PermeabilityParams,
) -> tuple[UnaryField, BinaryField]:
    """Rasterize -> cross filter -> aggregate, for node and pair channels."""
    planes = rasterize_unary(unary, rmap_prev)
    out_planes = propagate_unary(planes, guide_prev, guide_cur, p)
    unary_out = aggregate_unary(out_planes, rmap_cur)

    edges = binary_to_edge_planes(binary, adj_prev, rmap_prev)
    out_edges = propagate_binary(edges, guide_prev, guide_cur, p)
    binary_out = aggregate_binary(out_edges, adj_cur)
    return unary_out, binary_out


def propagate_residual(
    fields: ResidualFields,
    rmap_prev: RegionMap,
    adj_prev: RegionAdjacency,
    rmap_cur: RegionMap,
    adj_cur: RegionAdjacency,
    guide_prev: np.ndarray,
    guide_cur: np.ndarray,
    p: PermeabilityParams,
) -> ResidualFields:
    """Filter the four residual channels exactly like full energies; the
    outputs are convex combinations of nonnegative inputs, hence nonnegative
    (asserted, since the solver requires it).  The delta channel, when
    present, rides through the node operator."""
    unary_out, binary_out = propagate_fields(
        fields.as_unary(), fields.binary,
        rmap_prev, adj_prev, rmap_cur, adj_cur,
        guide_prev, guide_cur, p,
    )
    delta_out = None
    if fields.delta is not None:
        plane = rasterize_plane(fields.delta, rmap_prev)
        delta_out = aggregate_plane(cross_filter(plane, guide_prev, guide_cur, p), rmap_cur)
    out = ResidualFields(
        res_src=unary_out.cost_bg, res_snk=unary_out.cost_fg,
        binary=binary_out, delta=delta_out,
    )
    if (
        np.any(out.res_src < 0)
        or np.any(out.res_snk < 0)
        or np.any(out.binary.w_fwd < 0)
        or np.any(out.binary.w_bwd < 0)
    ):
        raise AssertionError("propagated residual went negative")
    return out


def conservation_repair(fields: ResidualFields) -> ResidualFields:
    """Make a filtered residual exactly consistent with the filtered full
    energy by absorbing the flow-conservation defect into the terminals.

    The defect at a node is the filtered net terminal flow (delta) minus
    the net flow implied by the filtered directed edge residuals; adding
    its positive part to the sink capacity and its negative part to the
    source capacity restores the energy landscape of the filtered full
    graph up to a constant.  A zero-flow residual repairs to itself.

    The per-node common mode min(res_src, res_snk) is then dropped: both
    terminals shrink by the same amount, which shifts every cut equally,
    and the solver is spared one length-2 augmentation per node.  Handing
    over a graph with nothing trivially pushable left is the point of
    recycling."""
    if fields.delta is None:
        raise ValueError("conservation repair needs the delta channel")
    b = fields.binary
    asym = 0.5 * (b.w_fwd - b.w_bwd)
    n = fields.res_src.shape[0]
    implied = np.zeros(n)
    np.add.at(implied, b.pairs[:, 0], asym)
    np.add.at(implied, b.pairs[:, 1], -asym)
    defect = fields.delta - implied
    res_src = fields.res_src + np.maximum(-defect, 0.0)
    res_snk = fields.res_snk + np.maximum(defect, 0.0)
    common = np.minimum(res_src, res_snk)
    return ResidualFields(
        res_src=res_src - common,
        res_snk=res_snk - common,
        binary=b,
        delta=fields.delta,
    )


def dynamic_step(
    state: DynState,
    frame_prev: np.ndarray,
    frame_cur: np.ndarray,
    p: PermeabilityParams,
    rmap_cur: RegionMap | None = None,
    adj_cur: RegionAdjacency | None = None,
) -> tuple[np.ndarray, DynState, ResidualGraph]:
    """Advance one frame by solving the recycled residual graph.

    Returns the labeling, the new state and the solve's residual graph
    (whose stats carry the augmentation counts)."""
    if rmap_cur is None:
        rmap_cur = state.region_map
    if adj_cur is None:
        adj_cur = state.adjacency

    propagated = propagate_residual(
        state.residual,
        state.region_map, state.adjacency,
        rmap_cur, adj_cur,
        frame_prev, frame_cur, p,
    )
    repaired = conservation_repair(propagated)
    graph = build_graph(repaired.as_unary(), repaired.binary)
    _, rg = max_flow(graph)
    labels = min_cut_labeling(rg)
    new_state = DynState(
        frame_index=state.frame_index + 1,
        residual=extract_residual(rg, adj_cur),
        region_map=rmap_cur,
        adjacency=adj_cur,
    )
    return labels, new_state, rg


def verify_step(
    state: DynState,
    frame_prev: np.ndarray,
    frame_cur: np.ndarray,
    p: PermeabilityParams,
    rmap_cur: RegionMap | None = None,
    adj_cur: RegionAdjacency | None = None,
    eps: float = 1e-12,
) -> tuple[float, np.ndarray, DynState, tuple[UnaryField, BinaryField, np.ndarray]]:
    """Run the dynamic step and, independently, the full-energy propagation
    with a from-scratch solve; return the relative gap between the filtered
    full energies of the two labelings (labelings themselves may differ on
    degenerate cuts).

    Requires the state to carry the previous frame's full energy fields.
    """
    if state.full_unary is None or state.full_binary is None:
        raise ValueError("verification requires full energy fields in the state")
    if rmap_cur is None:
        rmap_cur = state.region_map
    if adj_cur is None:
        adj_cur = state.adjacency

    labels_dyn, new_state, rg_dyn = dynamic_step(state, frame_prev, frame_cur, p, rmap_cur, adj_cur)

    full_unary, full_binary = propagate_fields(
        state.full_unary, state.full_binary,
        state.region_map, state.adjacency,
        rmap_cur, adj_cur,
        frame_prev, frame_cur, p,
    )
    graph = build_graph(full_unary, full_binary)
    _, rg_scratch = max_flow(graph)
    labels_scratch = min_cut_labeling(rg_scratch)

    e_dyn = energy_of(labels_dyn, full_unary, full_binary)
    e_scratch = energy_of(labels_scratch, full_unary, full_binary)
    discrepancy = abs(e_dyn - e_scratch) / max(e_scratch, eps)

    new_state.full_unary = full_unary
    new_state.full_binary = full_binary
    return discrepancy, labels_dyn, new_state, (full_unary, full_binary, labels_scratch)
