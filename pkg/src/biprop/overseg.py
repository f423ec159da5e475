"""Over-segmentation: region maps, adjacency with boundary pixel pairs,
region features, and a SLIC-style superpixel clustering.

Regions are the graph nodes of superpixel mode.  Pixel mode uses the
identity map (one region per pixel), which is what all small-scale
reference computations run on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import FrameSequence


@dataclass
class RegionMap:
    """Per-pixel region ids partitioning the frame; ids are 0..region_count-1
    and every region is 4-connected."""

    ids: np.ndarray
    region_count: int
    sizes: np.ndarray

    @staticmethod
    def from_ids(ids: np.ndarray) -> "RegionMap":
        ids = np.ascontiguousarray(ids, dtype=np.int32)
        count = int(ids.max()) + 1 if ids.size else 0
        sizes = np.bincount(ids.ravel(), minlength=count).astype(np.int64)
        if np.any(sizes == 0):
            raise ValueError("region ids must be contiguous from 0")
        return RegionMap(ids, count, sizes)

    @property
    def shape(self) -> tuple[int, int]:
        return self.ids.shape

    @property
    def is_identity(self) -> bool:
        h, w = self.ids.shape
        return self.region_count == h * w


def identity_map(height: int, width: int) -> RegionMap:
    """One region per pixel, row-major ids."""
    ids = np.arange(height * width, dtype=np.int32).reshape(height, width)
    return RegionMap(ids, height * width, np.ones(height * width, dtype=np.int64))


@dataclass
class RegionFeatures:
    mean_color: np.ndarray
    centroid: np.ndarray
    sizes: np.ndarray


@dataclass
class RegionAdjacency:
    """Adjacent region pairs plus the lattice edges straddling them.

    pairs holds (i, j) with i < j.  h_pair[y, x] is the pair index of the
    horizontal lattice edge (y, x)-(y, x+1), or -1 when both pixels share a
    region; h_first[y, x] says whether the left pixel belongs to pairs[k, 0].
    v_pair / v_first mirror this for vertical edges (y, x)-(y+1, x).
    """

    region_count: int
    pairs: np.ndarray
    h_pair: np.ndarray
    h_first: np.ndarray
    v_pair: np.ndarray
    v_first: np.ndarray

    @property
    def pair_count(self) -> int:
        return self.pairs.shape[0]

    def neighbors(self, i: int) -> list[int]:
        out = [int(j) for a, j in self.pairs if a == i]
        out += [int(a) for a, j in self.pairs if j == i]
        return sorted(out)

    def boundary_pixel_pairs(self, i: int, j: int) -> list[tuple[tuple[int, int], tuple[int, int]]]:
        """All 4-adjacent pixel pairs (p, q) with p in region i and q in j."""
        i, j = (i, j) if i < j else (j, i)
        k = np.flatnonzero((self.pairs[:, 0] == i) & (self.pairs[:, 1] == j))
        if k.size == 0:
            return []
        k = int(k[0])
        out = []
        ys, xs = np.nonzero(self.h_pair == k)
        for y, x, first in zip(ys, xs, self.h_first[ys, xs]):
            p, q = ((y, x), (y, x + 1)) if first else ((y, x + 1), (y, x))
            out.append((tuple(map(int, p)), tuple(map(int, q))))
        ys, xs = np.nonzero(self.v_pair == k)
        for y, x, first in zip(ys, xs, self.v_first[ys, xs]):
            p, q = ((y, x), (y + 1, x)) if first else ((y + 1, x), (y, x))
            out.append((tuple(map(int, p)), tuple(map(int, q))))
        return out


def region_adjacency(rmap: RegionMap) -> RegionAdjacency:
    """Pairs (i, j) listed exactly when some 4-adjacent pixel pair straddles
    the two regions."""
    ids = rmap.ids
    h_a, h_b = ids[:, :-1], ids[:, 1:]
    v_a, v_b = ids[:-1, :], ids[1:, :]
    h_lo = np.minimum(h_a, h_b).astype(np.int64)
    h_hi = np.maximum(h_a, h_b).astype(np.int64)
    v_lo = np.minimum(v_a, v_b).astype(np.int64)
    v_hi = np.maximum(v_a, v_b).astype(np.int64)
    r = int(rmap.region_count)
    h_key = np.where(h_lo != h_hi, h_lo * r + h_hi, -1)
    v_key = np.where(v_lo != v_hi, v_lo * r + v_hi, -1)
    keys = np.concatenate([h_key[h_key >= 0].ravel(), v_key[v_key >= 0].ravel()])
    uniq = np.unique(keys)
    pairs = np.stack([uniq // r, uniq % r], axis=1).astype(np.int64)

    h_pair = np.full(h_key.shape, -1, dtype=np.int64)
    mask = h_key >= 0
    h_pair[mask] = np.searchsorted(uniq, h_key[mask])
    v_pair = np.full(v_key.shape, -1, dtype=np.int64)
    mask = v_key >= 0
    v_pair[mask] = np.searchsorted(uniq, v_key[mask])

    return RegionAdjacency(
        region_count=r,
        pairs=pairs,
        h_pair=h_pair,
        h_first=h_a == h_lo,
        v_pair=v_pair,
        v_first=v_a == v_lo,
    )


def region_features(frame: np.ndarray, rmap: RegionMap) -> RegionFeatures:
    """Per-region mean color, centroid (x, y) and pixel count."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[:2] != rmap.ids.shape:
        raise ValueError("frame and region map dimensions disagree")
    flat = rmap.ids.ravel()
    r = rmap.region_count
    sizes = rmap.sizes.astype(np.float64)
    mean_color = np.stack(
        [np.bincount(flat, weights=frame[..., c].ravel(), minlength=r) for c in range(3)], axis=1
    ) / sizes[:, None]
    ys, xs = np.indices(rmap.ids.shape)
    cx = np.bincount(flat, weights=xs.ravel(), minlength=r) / sizes
    cy = np.bincount(flat, weights=ys.ravel(), minlength=r) / sizes
    return RegionFeatures(mean_color=mean_color, centroid=np.stack([cx, cy], axis=1), sizes=rmap.sizes.copy())


@njit(cache=True)
def _assign_slic(pixels, centers, labels, dist, step, compact2):  # pragma: no cover
    h, w = pixels.shape[0], pixels.shape[1]
    reach = 2 * step
    for c in range(centers.shape[0]):
        cy = centers[c, 3]
        cx = centers[c, 4]
        y0 = max(0, int(cy - reach))
        y1 = min(h, int(cy + reach) + 1)
        x0 = max(0, int(cx - reach))
        x1 = min(w, int(cx + reach) + 1)
        for y in range(y0, y1):
            for x in range(x0, x1):
                dc = 0.0
                for ch in range(3):
                    d = pixels[y, x, ch] - centers[c, ch]
                    dc += d * d
                ds = (y - cy) * (y - cy) + (x - cx) * (x - cx)
                dtot = dc + compact2 * ds
                if dtot < dist[y, x]:
                    dist[y, x] = dtot
                    labels[y, x] = c
    return labels


@njit(cache=True)
def _components(ids):  # pragma: no cover
    """4-connected component labels of a region-id map, row-major discovery."""
    h, w = ids.shape
    comp = np.full(ids.shape, -1, np.int64)
    stack = np.empty(h * w, np.int64)
    next_comp = 0
    for sy in range(h):
        for sx in range(w):
            if comp[sy, sx] >= 0:
                continue
            rid = ids[sy, sx]
            comp[sy, sx] = next_comp
            stack[0] = sy * w + sx
            top = 1
            while top > 0:
                top -= 1
                p = stack[top]
                y = p // w
                x = p % w
                if y > 0 and comp[y - 1, x] < 0 and ids[y - 1, x] == rid:
                    comp[y - 1, x] = next_comp
                    stack[top] = p - w
                    top += 1
                if y + 1 < h and comp[y + 1, x] < 0 and ids[y + 1, x] == rid:
                    comp[y + 1, x] = next_comp
                    stack[top] = p + w
                    top += 1
                if x > 0 and comp[y, x - 1] < 0 and ids[y, x - 1] == rid:
                    comp[y, x - 1] = next_comp
                    stack[top] = p - 1
                    top += 1
                if x + 1 < w and comp[y, x + 1] < 0 and ids[y, x + 1] == rid:
                    comp[y, x + 1] = next_comp
                    stack[top] = p + 1
                    top += 1
            next_comp += 1
    return comp, next_comp


def _enforce_connectivity(labels: np.ndarray, k_regions: int) -> np.ndarray:
    """Split disconnected assignments into components, then merge components
    smaller than a quarter of the mean region size into their largest
    neighbor."""
    h, w = labels.shape
    comp, n_comp = _components(labels)
    sizes = np.bincount(comp.ravel(), minlength=n_comp).astype(np.int64)
    threshold = max(1, (h * w // max(k_regions, 1)) // 4)

    # Component adjacency from straddling lattice edges.
    edges = set()
    a, b = comp[:, :-1], comp[:, 1:]
    for p, q in zip(a[a != b].ravel(), b[a != b].ravel()):
        edges.add((int(p), int(q)))
    a, b = comp[:-1, :], comp[1:, :]
    for p, q in zip(a[a != b].ravel(), b[a != b].ravel()):
        edges.add((int(p), int(q)))
    neigh: list[set[int]] = [set() for _ in range(n_comp)]
    for p, q in edges:
        neigh[p].add(q)
        neigh[q].add(p)

    parent = np.arange(n_comp)

    def find(c: int) -> int:
        while parent[c] != c:
            parent[c] = parent[parent[c]]
            c = parent[c]
        return c

    merged_sizes = sizes.copy()
    for c in np.argsort(sizes, kind="stable"):
        c = int(c)
        if merged_sizes[find(c)] >= threshold:
            continue
        candidates = {find(q) for q in neigh[c]} - {find(c)}
        if not candidates:
            continue
        target = max(candidates, key=lambda q: (merged_sizes[q], -q))
        root = find(c)
        merged_sizes[target] += merged_sizes[root]
        parent[root] = target

    roots = np.array([find(c) for c in range(n_comp)])
    uniq, compact = np.unique(roots, return_inverse=True)
    return compact[comp].astype(np.int32)


def slic_segment(frame: np.ndarray, k_regions: int, compactness: float = 10.0, max_iters: int = 10) -> RegionMap:
    """SLIC-style clustering into roughly k_regions 4-connected superpixels.

    Grid-seeded, RGB color distance, deterministic for fixed inputs.
    """
    frame = np.asarray(frame, dtype=np.float64)
    h, w = frame.shape[:2]
    if not 1 <= k_regions <= h * w:
        raise ValueError("k_regions out of range")
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    if k_regions == 1:
        return RegionMap(np.zeros((h, w), dtype=np.int32), 1, np.array([h * w], dtype=np.int64))

    step = float(np.sqrt(h * w / k_regions))
    ny = max(1, round(h / step))
    nx = max(1, round(w / step))
    cy = (np.arange(ny) + 0.5) * (h / ny)
    cx = (np.arange(nx) + 0.5) * (w / nx)
    centers = np.empty((ny * nx, 5))
    gy, gx = np.meshgrid(cy, cx, indexing="ij")
    centers[:, 3] = gy.ravel()
    centers[:, 4] = gx.ravel()
    iy = np.clip(gy.ravel().astype(np.int64), 0, h - 1)
    ix = np.clip(gx.ravel().astype(np.int64), 0, w - 1)
    centers[:, :3] = frame[iy, ix]

    compact2 = (compactness / step) ** 2
    labels = np.zeros((h, w), dtype=np.int64)
    for _ in range(max_iters):
        dist = np.full((h, w), np.inf)
        _assign_slic(frame, centers, labels, dist, step, compact2)
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=centers.shape[0]).astype(np.float64)
        alive = counts > 0
        for ch in range(3):
            sums = np.bincount(flat, weights=frame[..., ch].ravel(), minlength=centers.shape[0])
            centers[alive, ch] = sums[alive] / counts[alive]
        ys, xs = np.indices((h, w))
        sy = np.bincount(flat, weights=ys.ravel(), minlength=centers.shape[0])
        sx = np.bincount(flat, weights=xs.ravel(), minlength=centers.shape[0])
        centers[alive, 3] = sy[alive] / counts[alive]
        centers[alive, 4] = sx[alive] / counts[alive]

    ids = _enforce_connectivity(labels, k_regions)
    rmap = RegionMap.from_ids(ids)

    # Rare over-fragmentation guard: fold the smallest regions into their
    # largest neighbor until within the contract bound.
    while rmap.region_count > 2 * k_regions:
        adj = region_adjacency(rmap)
        smallest = int(np.argmin(rmap.sizes))
        neigh = adj.neighbors(smallest)
        target = max(neigh, key=lambda q: rmap.sizes[q])
        ids = rmap.ids.copy()
        ids[ids == smallest] = target
        ids[ids > smallest] -= 1
        rmap = RegionMap.from_ids(ids)
    return rmap
