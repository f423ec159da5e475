"""Per-frame orchestration: seed, over-segment, propagate, solve, emit masks.

The loop runs in one of two modes.  With dynamic recycling off, the full
energy of each frame is filtered forward and solved from scratch; with it
on, only the previous solve's residual fields are filtered and the solver
warm-starts from them.  Verification re-solves sampled frames both ways
and compares the energies of the two labelings.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .core import SCRIBBLE_BG, SCRIBBLE_FG, BinaryField, FrameSequence, UnaryField, energy_of
from .dynamic import (
    DynState,
    ResidualFields,
    conservation_repair,
    extract_residual,
    propagate_fields,
    propagate_residual,
)
from .graphcut import build_graph, max_flow, min_cut_labeling
from .overseg import RegionAdjacency, RegionMap, identity_map, region_adjacency, slic_segment
from .permeability import PermeabilityParams
from .propagate import aggregate_binary, smoothed_potts_binary
from .seeding import ColorModels, SeedConfig, fit_color_models_multi, potts_binary, scribble_unary

VERIFY_TOLERANCE = 1e-6


@dataclass
class RunConfig:
    mode: str = "superpixel"  # pixel | superpixel
    dynamic: bool = False
    verify: str = "off"  # off | sample:<k> | all
    lam: float = 30.0
    k_regions: int = 1000
    compactness: float = 10.0
    slic_iters: int = 10
    binary_path: str = "propagated"  # propagated | smoothed
    seed_source: str = "scribbles"  # scribbles | energy_file
    gamma_smooth: float = 50.0  # also scales aggregated smoothed-potts weights
    n_comp: int = 5
    k_hard: float = 1e6
    variance_floor: float = 1.0
    em_iters: int = 10
    output_dir: str | None = None
    dump_energy: bool = False

    def __post_init__(self):
        if self.mode not in ("pixel", "superpixel"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.binary_path not in ("propagated", "smoothed"):
            raise ValueError(f"unknown binary path {self.binary_path!r}")
        if self.seed_source not in ("scribbles", "energy_file"):
            raise ValueError(f"unknown seed source {self.seed_source!r}")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.k_regions < 1:
            raise ValueError("k_regions must be at least 1")
        if self.binary_path == "smoothed" and self.dynamic:
            raise ValueError("the smoothed binary path cannot be combined with dynamic recycling")
        self._verify_frames(10)  # validate the verify spec eagerly

    def _verify_frames(self, frame_count: int) -> set[int]:
        if self.verify == "off":
            return set()
        if self.verify == "all":
            return set(range(1, frame_count))
        if self.verify.startswith("sample:"):
            k = int(self.verify.split(":", 1)[1])
            if k < 1:
                raise ValueError("verify sample count must be positive")
            if frame_count <= 1:
                return set()
            picks = np.linspace(1, frame_count - 1, min(k, frame_count - 1))
            return {int(round(v)) for v in picks}
        raise ValueError(f"unknown verify spec {self.verify!r}")

    def seed_config(self) -> SeedConfig:
        return SeedConfig(
            n_comp=self.n_comp,
            k_hard=self.k_hard,
            variance_floor=self.variance_floor,
            em_iters=self.em_iters,
        )


@dataclass
class FrameReport:
    frame: int
    overseg_s: float = 0.0
    propagate_s: float = 0.0
    solve_s: float = 0.0
    wall_s: float = 0.0
    augmentations: int = 0
    discrepancy: float | None = None
    fallback: bool | None = None


@dataclass
class RunReport:
    mode: str
    dynamic: bool
    frames: list[FrameReport] = field(default_factory=list)

    def totals(self) -> dict:
        keys = ("overseg_s", "propagate_s", "solve_s", "wall_s", "augmentations")
        out = {k: sum(getattr(f, k) for f in self.frames) for k in keys}
        out["frame_count"] = len(self.frames)
        if self.frames:
            out["per_frame_wall_s"] = out["wall_s"] / len(self.frames)
        return out

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "dynamic": self.dynamic,
            "frames": [vars(f) for f in self.frames],
            "totals": self.totals(),
        }

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def labeling_to_mask(labeling: np.ndarray, rmap: RegionMap) -> np.ndarray:
    """255 where the pixel's region is FG, 0 elsewhere."""
    labeling = np.asarray(labeling, dtype=bool)
    if labeling.shape != (rmap.region_count,):
        raise ValueError("labeling does not cover the region map")
    return np.where(labeling[rmap.ids], 255, 0).astype(np.uint8)


class SegmentationRun:
    """Stateful run over one frame sequence; supports forward re-runs from
    corrective keyframe scribbles."""

    def __init__(self, frames: FrameSequence, cfg: RunConfig):
        self.frames = frames
        self.cfg = cfg
        self.params = PermeabilityParams(cfg.lam)
        self.seed_cfg = cfg.seed_config()
        t = frames.count
        self.scribbles: dict[int, np.ndarray] = {}
        self.models: ColorModels | None = None
        self.energy_seed: tuple[UnaryField, BinaryField] | None = None
        self.maps: list[RegionMap | None] = [None] * t
        self.adjs: list[RegionAdjacency | None] = [None] * t
        self.full_unary: list[UnaryField | None] = [None] * t
        self.full_binary: list[BinaryField | None] = [None] * t
        self.residuals: list[ResidualFields | None] = [None] * t
        self.labelings: list[np.ndarray | None] = [None] * t
        self.masks = np.zeros((t, frames.height, frames.width), dtype=np.uint8)
        self.report = RunReport(mode=cfg.mode, dynamic=cfg.dynamic)
        self.verify_log: list[dict] = []
        self._identity: RegionMap | None = None
        self._executed_through = -1

    # ---- seeding -------------------------------------------------------

    def set_scribbles(self, frame_index: int, mask: np.ndarray) -> None:
        mask = np.asarray(mask, dtype=np.uint8)
        if mask.shape != (self.frames.height, self.frames.width):
            raise ValueError("scribble dimensions do not match the frames")
        if frame_index in self.scribbles:
            merged = self.scribbles[frame_index].copy()
            touched = mask != 0
            merged[touched] = mask[touched]
            self.scribbles[frame_index] = merged
        else:
            self.scribbles[frame_index] = mask.copy()

    def set_energy_seed(self, unary: UnaryField, binary: BinaryField, rmap: RegionMap) -> None:
        if rmap.shape != (self.frames.height, self.frames.width):
            raise ValueError("seed region map dimensions do not match the frames")
        self.energy_seed = (unary, binary)
        self.maps[0] = rmap
        self.adjs[0] = region_adjacency(rmap)

    # ---- per-frame structures -----------------------------------------

    def region_map(self, t: int) -> tuple[RegionMap, RegionAdjacency, float]:
        if self.maps[t] is not None:
            return self.maps[t], self.adjs[t], 0.0
        t0 = time.perf_counter()
        if self.cfg.mode == "pixel":
            if self._identity is None:
                self._identity = identity_map(self.frames.height, self.frames.width)
                self._identity_adj = region_adjacency(self._identity)
            rmap, adj = self._identity, self._identity_adj
        else:
            rmap = slic_segment(
                self.frames[t], self.cfg.k_regions, self.cfg.compactness, self.cfg.slic_iters
            )
            adj = region_adjacency(rmap)
        self.maps[t] = rmap
        self.adjs[t] = adj
        return rmap, adj, time.perf_counter() - t0

    # ---- energies ------------------------------------------------------

    def _refit_models(self) -> None:
        samples = [(self.frames[i], s) for i, s in sorted(self.scribbles.items())]
        has_fg = any((s == SCRIBBLE_FG).any() for _, s in samples)
        has_bg = any((s == SCRIBBLE_BG).any() for _, s in samples)
        if has_fg and has_bg:
            self.models = fit_color_models_multi(samples, self.seed_cfg)
        elif self.models is None:
            raise ValueError("scribbles must mark both labels before the first run")

    def _seed_energy(self) -> tuple[UnaryField, BinaryField]:
        rmap, adj, _ = self.region_map(0)
        if self.cfg.seed_source == "energy_file":
            if self.energy_seed is None:
                raise ValueError("energy seed not provided")
            unary, binary = self.energy_seed
            if unary.node_count != rmap.region_count:
                raise ValueError("energy seed does not cover the seed region map")
            return unary, binary
        if 0 not in self.scribbles:
            raise ValueError("frame 0 scribbles are required")
        self._refit_models()
        unary = scribble_unary(self.frames[0], self.models, self.scribbles[0], rmap, self.seed_cfg)
        binary = potts_binary(self.frames[0], adj, rmap, self.cfg.gamma_smooth)
        return unary, binary

    def _ensure_full(self, t: int) -> tuple[UnaryField, BinaryField]:
        """Full (non-residual) energy fields at frame t, filling the chain
        lazily; in dynamic mode these are only materialized on demand."""
        if self.full_unary[t] is not None:
            return self.full_unary[t], self.full_binary[t]
        if t == 0:
            unary, binary = self._seed_energy()
        else:
            prev_u, prev_b = self._ensure_full(t - 1)
            rmap_p, adj_p, _ = self.region_map(t - 1)
            rmap_c, adj_c, _ = self.region_map(t)
            unary, binary = propagate_fields(
                prev_u, prev_b, rmap_p, adj_p, rmap_c, adj_c,
                self.frames[t - 1], self.frames[t], self.params,
            )
            if self.cfg.binary_path == "smoothed":
                planes = smoothed_potts_binary(self.frames[t - 1], self.frames[t], self.params)
                binary = aggregate_binary(planes, adj_c)
                binary = BinaryField(
                    binary.pairs,
                    self.cfg.gamma_smooth * binary.w_fwd,
                    self.cfg.gamma_smooth * binary.w_bwd,
                )
        self.full_unary[t] = unary
        self.full_binary[t] = binary
        return unary, binary

    # ---- solving -------------------------------------------------------

    def _solve(self, unary: UnaryField, binary: BinaryField, rep: FrameReport):
        """Graph assembly is charged to propagate time; solve time covers the
        flow search and the cut labeling, which is what recycling speeds up."""
        t0 = time.perf_counter()
        graph = build_graph(unary, binary)
        rep.propagate_s += time.perf_counter() - t0
        t0 = time.perf_counter()
        _, rg = max_flow(graph)
        labels = min_cut_labeling(rg)
        rep.solve_s += time.perf_counter() - t0
        rep.augmentations += rg.stats.augmentations
        return labels, rg

    def _run_frame(self, t: int, verify_frames: set[int]) -> FrameReport:
        rep = FrameReport(frame=t)
        wall0 = time.perf_counter()
        rmap, adj, overseg_s = self.region_map(t)
        rep.overseg_s = overseg_s

        if t == 0:
            unary, binary = self._ensure_full(0)
            labels, rg = self._solve(unary, binary, rep)
        elif not self.cfg.dynamic:
            p0 = time.perf_counter()
            unary, binary = self._ensure_full(t)
            rep.propagate_s = time.perf_counter() - p0
            labels, rg = self._solve(unary, binary, rep)
        else:
            rmap_p, adj_p, _ = self.region_map(t - 1)
            p0 = time.perf_counter()
            propagated = propagate_residual(
                self.residuals[t - 1],
                rmap_p, adj_p, rmap, adj,
                self.frames[t - 1], self.frames[t], self.params,
            )
            recycled = conservation_repair(propagated)
            rep.propagate_s = time.perf_counter() - p0
            labels, rg = self._solve(recycled.as_unary(), recycled.binary, rep)
            if t in verify_frames:
                full_u, full_b = self._ensure_full(t)
                graph = build_graph(full_u, full_b)
                _, rg_scratch = max_flow(graph)
                scratch_labels = min_cut_labeling(rg_scratch)
                e_dyn = energy_of(labels, full_u, full_b)
                e_scr = energy_of(scratch_labels, full_u, full_b)
                rep.discrepancy = abs(e_dyn - e_scr) / max(e_scr, 1e-12)
                rep.fallback = rep.discrepancy > VERIFY_TOLERANCE
                self.verify_log.append(
                    {"frame": t, "discrepancy": rep.discrepancy, "fallback": rep.fallback}
                )
                if rep.fallback:
                    labels, rg = scratch_labels, rg_scratch

        self.residuals[t] = extract_residual(rg, adj)
        self.labelings[t] = labels
        self.masks[t] = labeling_to_mask(labels, rmap)
        rep.wall_s = time.perf_counter() - wall0
        return rep

    def execute(self, start: int = 0, progress=None) -> None:
        total = self.frames.count
        verify_frames = self.cfg._verify_frames(total)
        self.report.frames = [f for f in self.report.frames if f.frame < start]
        for t in range(start, total):
            self.report.frames.append(self._run_frame(t, verify_frames))
            self._executed_through = t
            if progress is not None:
                progress(t + 1, total)

    # ---- corrections ----------------------------------------------------

    @property
    def frames_completed(self) -> int:
        """Index of the last frame solved so far, -1 before any."""
        return self._executed_through

    def correct(self, frame_index: int, scribbles: np.ndarray, progress=None) -> None:
        """Re-seed frame k from corrective scribbles and re-run forward.

        The frame's propagated unary keeps its values except on regions the
        user marked, which take the refit scribble energy (with its hard
        pins); frames before k are untouched."""
        if not 0 <= frame_index < self.frames.count:
            raise ValueError("correction frame out of range")
        scribbles = np.asarray(scribbles, dtype=np.uint8)
        if not (scribbles != 0).any():
            return
        if frame_index > self._executed_through:
            raise ValueError("cannot correct a frame that has not been segmented yet")
        self.set_scribbles(frame_index, scribbles)
        self._refit_models()

        k = frame_index
        rmap, adj, _ = self.region_map(k)
        full_u, full_b = self._ensure_full(k)
        merged = self.scribbles[k]
        scrib_u = scribble_unary(self.frames[k], self.models, merged, rmap, self.seed_cfg)
        marked_regions = np.unique(rmap.ids[merged != 0])
        cost_fg = full_u.cost_fg.copy()
        cost_bg = full_u.cost_bg.copy()
        cost_fg[marked_regions] = scrib_u.cost_fg[marked_regions]
        cost_bg[marked_regions] = scrib_u.cost_bg[marked_regions]
        unary = UnaryField(cost_fg, cost_bg)
        self.full_unary[k] = unary
        # downstream full fields are stale now
        for t in range(k + 1, self.frames.count):
            self.full_unary[t] = None
            self.full_binary[t] = None

        rep = FrameReport(frame=k)
        wall0 = time.perf_counter()
        labels, rg = self._solve(unary, full_b, rep)
        self.residuals[k] = extract_residual(rg, adj)
        self.labelings[k] = labels
        self.masks[k] = labeling_to_mask(labels, rmap)
        rep.wall_s = time.perf_counter() - wall0
        self.report.frames = [f for f in self.report.frames if f.frame < k]
        self.report.frames.append(rep)
        if k + 1 < self.frames.count:
            self.execute(start=k + 1, progress=progress)
        elif progress is not None:
            progress(self.frames.count, self.frames.count)


def segment_video(
    frames: FrameSequence,
    seed,
    cfg: RunConfig,
    progress=None,
) -> tuple[np.ndarray, RunReport]:
    """One-shot run: seed is a scribble mask for frame 0, or a tuple
    (unary, binary, region_map) when cfg.seed_source == 'energy_file'."""
    run = SegmentationRun(frames, cfg)
    if cfg.seed_source == "energy_file":
        unary, binary, rmap = seed
        run.set_energy_seed(unary, binary, rmap)
    else:
        run.set_scribbles(0, seed)
    run.execute(progress=progress)
    return run.masks, run.report
