"""Two-terminal graph construction, max-flow, min-cut labeling, residuals.

The solver is a shortest-augmenting-path method (breadth-first level
phases with blocking flow) over a CSR arc list; every stored arc has its
opposite-direction twin, so pushing flow automatically opens reverse
residual capacity.  Terminals are embedded as ordinary nodes at indices
n and n+1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .core import BinaryField, UnaryField
from .overseg import RegionAdjacency


@dataclass
class FlowGraph:
    """Capacities of a two-terminal cut problem in CSR arc form.

    Arc k and twin[k] connect the same node pair in opposite directions.
    src_arc[i]/snk_arc[i] index the source->i and i->sink arcs; fwd_arc[e]
    and bwd_arc[e] index the two directions of adjacency pair e.
    """

    node_count: int
    cap_src: np.ndarray
    cap_snk: np.ndarray
    pairs: np.ndarray
    indptr: np.ndarray
    heads: np.ndarray
    twin: np.ndarray
    cap: np.ndarray
    src_arc: np.ndarray
    snk_arc: np.ndarray
    fwd_arc: np.ndarray
    bwd_arc: np.ndarray
    scratch: tuple = None  # search workspace, shared by solves of this graph
    res_buf: np.ndarray = None  # residual buffer; see max_flow

    def __post_init__(self):
        if self.scratch is None:
            n_all = self.indptr.shape[0] - 1
            # zero-filled so the pages are touched here, not inside a solve
            self.scratch = (
                np.zeros(n_all, np.int32),
                np.zeros(n_all, np.int64),
                np.zeros(n_all, np.int32),
                np.zeros(n_all + 1, np.int64),
            )
        if self.res_buf is None:
            self.res_buf = np.zeros_like(self.cap)

    @property
    def source(self) -> int:
        return self.node_count

    @property
    def sink(self) -> int:
        return self.node_count + 1


@dataclass
class SolveStats:
    augmentations: int = 0
    bfs_passes: int = 0


@dataclass
class ResidualGraph:
    """Residual capacities left by a completed (or zero) flow."""

    graph: FlowGraph
    res: np.ndarray
    flow_value: float = 0.0
    stats: SolveStats = field(default_factory=SolveStats)
    reachable: np.ndarray | None = None  # source side of the final BFS

    @property
    def res_src(self) -> np.ndarray:
        return self.res[self.graph.src_arc]

    @property
    def res_snk(self) -> np.ndarray:
        return self.res[self.graph.snk_arc]

    @property
    def res_fwd(self) -> np.ndarray:
        return self.res[self.graph.fwd_arc]

    @property
    def res_bwd(self) -> np.ndarray:
        return self.res[self.graph.bwd_arc]


def build_graph(unary: UnaryField, binary: BinaryField, adj: RegionAdjacency | None = None) -> FlowGraph:
    """Map energies onto capacities: cap_src = cost_bg, cap_snk = cost_fg,
    edge capacity i->j = w(i->j).  The cost of any s/t cut then equals the
    energy of the induced labeling (source side = FG)."""
    n = unary.node_count
    if binary.pair_count and binary.pairs.max() >= n:
        raise ValueError("binary field references nodes outside the unary field")
    if adj is not None and adj.region_count != n:
        raise ValueError("adjacency and unary field cover different node sets")
    m = binary.pair_count
    s, t = n, n + 1

    # Arc list in twin pairs: (2k, 2k+1) are opposite directions.
    tails = np.empty(2 * (2 * n + m), dtype=np.int64)
    heads = np.empty_like(tails)
    caps = np.empty(tails.shape[0], dtype=np.float64)
    ids = np.arange(n, dtype=np.int64)

    tails[0 : 2 * n : 2] = s
    heads[0 : 2 * n : 2] = ids
    caps[0 : 2 * n : 2] = unary.cost_bg
    tails[1 : 2 * n : 2] = ids
    heads[1 : 2 * n : 2] = s
    caps[1 : 2 * n : 2] = 0.0

    tails[2 * n : 4 * n : 2] = ids
    heads[2 * n : 4 * n : 2] = t
    caps[2 * n : 4 * n : 2] = unary.cost_fg
    tails[2 * n + 1 : 4 * n : 2] = t
    heads[2 * n + 1 : 4 * n : 2] = ids
    caps[2 * n + 1 : 4 * n : 2] = 0.0

    if m:
        tails[4 * n :: 2] = binary.pairs[:, 0]
        heads[4 * n :: 2] = binary.pairs[:, 1]
        caps[4 * n :: 2] = binary.w_fwd
        tails[4 * n + 1 :: 2] = binary.pairs[:, 1]
        heads[4 * n + 1 :: 2] = binary.pairs[:, 0]
        caps[4 * n + 1 :: 2] = binary.w_bwd

    order = np.argsort(tails, kind="stable")
    inv = np.empty_like(order)
    inv[order] = np.arange(order.shape[0])
    twin_flat = np.arange(order.shape[0]) ^ 1
    counts = np.bincount(tails, minlength=n + 2)
    indptr = np.zeros(n + 3, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])

    src_arc = inv[0 : 2 * n : 2]
    snk_arc = inv[2 * n : 4 * n : 2]
    fwd_arc = inv[4 * n :: 2]
    bwd_arc = inv[4 * n + 1 :: 2]

    return FlowGraph(
        node_count=n,
        cap_src=unary.cost_bg.copy(),
        cap_snk=unary.cost_fg.copy(),
        pairs=binary.pairs.copy(),
        indptr=indptr,
        heads=heads[order].astype(np.int32),
        twin=inv[twin_flat[order]],
        cap=caps[order],
        src_arc=src_arc,
        snk_arc=snk_arc,
        fwd_arc=fwd_arc,
        bwd_arc=bwd_arc,
    )


@njit(cache=True)
def _solve(indptr, heads, twin, res, s, t, level, it, queue, path):  # pragma: no cover - jitted
    total = 0.0
    paths = 0
    passes = 0
    while True:
        # BFS level graph over unsaturated arcs; the sink is never expanded.
        level[:] = -1
        level[s] = 0
        queue[0] = s
        head, tail = 0, 1
        while head < tail:
            u = queue[head]
            head += 1
            for a in range(indptr[u], indptr[u + 1]):
                v = heads[a]
                if res[a] > 0.0 and level[v] < 0:
                    level[v] = level[u] + 1
                    if v != t:
                        queue[tail] = v
                        tail += 1
        passes += 1
        if level[t] < 0:
            break
        # Blocking flow: depth-first over admissible arcs with a path stack.
        it[:] = indptr[:-1]
        depth = 0
        u = s
        while True:
            if u == t:
                bottleneck = np.inf
                for d in range(depth):
                    a = path[d]
                    if res[a] < bottleneck:
                        bottleneck = res[a]
                for d in range(depth):
                    a = path[d]
                    res[a] -= bottleneck
                    res[twin[a]] += bottleneck
                total += bottleneck
                paths += 1
                # retreat to the tail of the first saturated arc
                depth2 = 0
                u = s
                for d in range(depth):
                    a = path[d]
                    if res[a] <= 0.0:
                        break
                    depth2 += 1
                    u = heads[a]
                depth = depth2
                continue
            advanced = False
            while it[u] < indptr[u + 1]:
                a = it[u]
                v = heads[a]
                if res[a] > 0.0 and level[v] == level[u] + 1:
                    path[depth] = a
                    depth += 1
                    u = v
                    advanced = True
                    break
                it[u] += 1
            if advanced:
                continue
            level[u] = -1  # dead end in this phase
            if depth == 0:
                break
            depth -= 1
            a = path[depth]
            u = s if depth == 0 else heads[path[depth - 1]]
            it[u] += 1
    # the final failed BFS doubles as the min-cut reachability
    return total, paths, passes, level >= 0


@njit(cache=True)
def _reachable(indptr, heads, res, s):  # pragma: no cover - jitted
    n_all = indptr.shape[0] - 1
    seen = np.zeros(n_all, np.bool_)
    queue = np.empty(n_all, np.int64)
    seen[s] = True
    queue[0] = s
    head, tail = 0, 1
    while head < tail:
        u = queue[head]
        head += 1
        for a in range(indptr[u], indptr[u + 1]):
            v = heads[a]
            if res[a] > 0.0 and not seen[v]:
                seen[v] = True
                queue[tail] = v
                tail += 1
    return seen


def max_flow(g: FlowGraph) -> tuple[float, ResidualGraph]:
    """Push flow until no augmenting path remains; returns the min-cut value
    and the residual graph it leaves behind.

    Everything goes through the path search, including the trivial
    source->i->sink flows (the first phase pushes those as length-2 paths),
    so the augmentation count is comparable across warm and cold starts;
    skipping re-pushed flow is exactly what residual recycling buys.

    The residuals live in the graph's own buffer: solving the same
    FlowGraph again reuses it and invalidates earlier ResidualGraph views.
    """
    res = g.res_buf
    np.copyto(res, g.cap)
    total, paths, passes, reach = _solve(
        g.indptr, g.heads, g.twin, res, g.source, g.sink, *g.scratch
    )
    rg = ResidualGraph(
        graph=g,
        res=res,
        flow_value=float(total),
        stats=SolveStats(int(paths), int(passes)),
        reachable=reach,
    )
    return rg.flow_value, rg


def resolve(rg: ResidualGraph) -> tuple[float, ResidualGraph]:
    """Continue pushing flow on an existing residual graph, in place.

    Returns the additional flow pushed; statistics accumulate on rg."""
    g = rg.graph
    total, paths, passes, reach = _solve(
        g.indptr, g.heads, g.twin, rg.res, g.source, g.sink, *g.scratch
    )
    rg.flow_value += float(total)
    rg.stats.augmentations += int(paths)
    rg.stats.bfs_passes += int(passes)
    rg.reachable = reach
    return float(total), rg


def min_cut_labeling(rg: ResidualGraph) -> np.ndarray:
    """Canonical min-cut labeling: FG = reachable from the source through
    unsaturated residual arcs.  Raises if an augmenting path still exists.

    A solve's final failed search already computed the reachable set, so
    this is a read-off unless the residual was modified since."""
    g = rg.graph
    seen = rg.reachable
    if seen is None:
        seen = _reachable(g.indptr, g.heads, rg.res, g.source)
    if seen[g.sink]:
        raise ValueError("residual graph still admits an augmenting path")
    return seen[: g.node_count].copy()


def oracle_min_energy(unary: UnaryField, binary: BinaryField) -> tuple[np.ndarray, float]:
    """Exhaustive minimum over all 2^n labelings (n <= 16); ties broken by
    the lexicographically smallest labeling with FG ordered before BG."""
    n = unary.node_count
    if n > 16:
        raise ValueError("exhaustive oracle limited to 16 nodes")
    count = 1 << n
    # bit i of the row index gives node i's label; 0 = FG so that ascending
    # row order is lexicographic order with FG < BG.
    rows = np.arange(count, dtype=np.uint32)
    labels_bg = (rows[:, None] >> np.arange(n, dtype=np.uint32)[None, :]) & 1
    is_fg = labels_bg == 0
    energy = np.where(is_fg, unary.cost_fg[None, :], unary.cost_bg[None, :]).sum(axis=1)
    if binary.pair_count:
        fi = is_fg[:, binary.pairs[:, 0]]
        fj = is_fg[:, binary.pairs[:, 1]]
        energy = energy + (fi & ~fj) @ binary.w_fwd + (fj & ~fi) @ binary.w_bwd
    best = np.flatnonzero(energy == energy.min())
    # Lexicographic tie-break with node 0 most significant and FG < BG.
    lex_key = labels_bg[best] @ (1 << np.arange(n - 1, -1, -1, dtype=np.uint64))
    best_row = int(best[np.argmin(lex_key)])
    return is_fg[best_row].copy(), float(energy[best_row])


def dump_graph(g: FlowGraph, rg: ResidualGraph | None = None) -> str:
    """Textual debug dump mirroring the energy seed file, with flow columns."""
    lines = ["GRAPH v1", f"nodes {g.node_count} edges {g.pairs.shape[0]}"]
    res_src = rg.res_src if rg is not None else g.cap_src
    res_snk = rg.res_snk if rg is not None else g.cap_snk
    res_fwd = rg.res_fwd if rg is not None else g.cap[g.fwd_arc]
    res_bwd = rg.res_bwd if rg is not None else g.cap[g.bwd_arc]
    for i in range(g.node_count):
        lines.append(
            f"{i} {g.cap_src[i]:.17g} {g.cap_snk[i]:.17g} {res_src[i]:.17g} {res_snk[i]:.17g}"
        )
    for e in range(g.pairs.shape[0]):
        i, j = g.pairs[e]
        lines.append(
            f"{i} {j} {g.cap[g.fwd_arc[e]]:.17g} {g.cap[g.bwd_arc[e]]:.17g} "
            f"{res_fwd[e]:.17g} {res_bwd[e]:.17g}"
        )
    return "\n".join(lines) + "\n"
