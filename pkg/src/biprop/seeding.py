"""First-frame energy construction from user scribbles.

Foreground/background color mixtures give the unary costs; a contrast-
sensitive exponential penalty on adjacent regions gives the binary costs;
scribbled regions are pinned with a large finite terminal cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import SCRIBBLE_BG, SCRIBBLE_FG, BinaryField, UnaryField, color_distance
from .overseg import RegionAdjacency, RegionMap, region_features

# All model fitting is seeded so repeated runs are bit-identical.
_FIT_SEED = 0xB1920


@dataclass
class SeedConfig:
    n_comp: int = 5
    k_hard: float = 1e6
    variance_floor: float = 1.0
    em_iters: int = 10

    def __post_init__(self):
        if min(self.n_comp, self.k_hard, self.variance_floor, self.em_iters) <= 0:
            raise ValueError("all seed parameters must be positive")


@dataclass
class GaussianMixture:
    """Diagonal-covariance mixture over RGB."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    ll_history: list = field(default_factory=list)

    def log_density(self, colors: np.ndarray) -> np.ndarray:
        colors = np.atleast_2d(np.asarray(colors, dtype=np.float64))
        # (n, K) component log densities
        diff2 = (colors[:, None, :] - self.means[None, :, :]) ** 2
        comp = -0.5 * np.sum(
            diff2 / self.variances[None] + np.log(2.0 * np.pi * self.variances[None]), axis=2
        )
        comp = comp + np.log(self.weights)[None, :]
        peak = comp.max(axis=1)
        return peak + np.log(np.sum(np.exp(comp - peak[:, None]), axis=1))


@dataclass
class ColorModels:
    fg: GaussianMixture
    bg: GaussianMixture


def _kmeans_init(colors: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding plus a few Lloyd rounds."""
    centers = [colors[int(rng.integers(colors.shape[0]))]]
    for _ in range(1, k):
        d2 = np.min(
            np.sum((colors[:, None, :] - np.asarray(centers)[None]) ** 2, axis=2), axis=1
        )
        total = d2.sum()
        if total <= 0:
            centers.append(colors[int(rng.integers(colors.shape[0]))])
            continue
        centers.append(colors[int(rng.choice(colors.shape[0], p=d2 / total))])
    centers = np.asarray(centers, dtype=np.float64)
    for _ in range(5):
        assign = np.argmin(np.sum((colors[:, None, :] - centers[None]) ** 2, axis=2), axis=1)
        for c in range(k):
            members = colors[assign == c]
            if members.shape[0]:
                centers[c] = members.mean(axis=0)
    return centers


def fit_gmm(colors: np.ndarray, cfg: SeedConfig) -> GaussianMixture:
    """Deterministic EM with floored diagonal covariances.

    The per-round mean log-likelihood is recorded; EM guarantees it never
    decreases, which the tests assert."""
    colors = np.atleast_2d(np.asarray(colors, dtype=np.float64))
    n = colors.shape[0]
    if n == 0:
        raise ValueError("cannot fit a color model to zero pixels")
    k = min(cfg.n_comp, n)
    rng = np.random.default_rng(_FIT_SEED)
    means = _kmeans_init(colors, k, rng)
    variances = np.full((k, 3), max(colors.var(axis=0).mean(), cfg.variance_floor))
    weights = np.full(k, 1.0 / k)
    model = GaussianMixture(weights, means, variances)

    for _ in range(cfg.em_iters):
        diff2 = (colors[:, None, :] - model.means[None]) ** 2
        comp = -0.5 * np.sum(
            diff2 / model.variances[None] + np.log(2.0 * np.pi * model.variances[None]), axis=2
        ) + np.log(model.weights)[None, :]
        peak = comp.max(axis=1, keepdims=True)
        post = np.exp(comp - peak)
        norm = post.sum(axis=1, keepdims=True)
        model.ll_history.append(float(np.mean(peak[:, 0] + np.log(norm[:, 0]))))
        post /= norm

        mass = post.sum(axis=0)
        alive = mass > 1e-12
        if not alive.all():
            post = post[:, alive]
            mass = mass[alive]
        means = (post.T @ colors) / mass[:, None]
        var = np.einsum("nk,nkc->kc", post, (colors[:, None, :] - means[None]) ** 2) / mass[:, None]
        model = GaussianMixture(
            weights=mass / n,
            means=means,
            variances=np.maximum(var, cfg.variance_floor),
            ll_history=model.ll_history,
        )
    return model


def fit_color_models(frame: np.ndarray, scribbles: np.ndarray, cfg: SeedConfig) -> ColorModels:
    frame = np.asarray(frame, dtype=np.float64)
    scribbles = np.asarray(scribbles)
    if scribbles.shape != frame.shape[:2]:
        raise ValueError("scribble mask dimensions do not match the frame")
    fg_px = frame[scribbles == SCRIBBLE_FG]
    bg_px = frame[scribbles == SCRIBBLE_BG]
    if fg_px.shape[0] == 0 or bg_px.shape[0] == 0:
        raise ValueError("scribbles must mark at least one FG and one BG pixel")
    return ColorModels(fg=fit_gmm(fg_px, cfg), bg=fit_gmm(bg_px, cfg))


def fit_color_models_multi(samples: list[tuple[np.ndarray, np.ndarray]], cfg: SeedConfig) -> ColorModels:
    """Fit on the union of (frame, scribbles) pairs, e.g. after corrections."""
    fg_parts = []
    bg_parts = []
    for frame, scribbles in samples:
        frame = np.asarray(frame, dtype=np.float64)
        scribbles = np.asarray(scribbles)
        fg_parts.append(frame[scribbles == SCRIBBLE_FG])
        bg_parts.append(frame[scribbles == SCRIBBLE_BG])
    fg_px = np.concatenate(fg_parts) if fg_parts else np.empty((0, 3))
    bg_px = np.concatenate(bg_parts) if bg_parts else np.empty((0, 3))
    if fg_px.shape[0] == 0 or bg_px.shape[0] == 0:
        raise ValueError("scribbles must mark at least one FG and one BG pixel")
    return ColorModels(fg=fit_gmm(fg_px, cfg), bg=fit_gmm(bg_px, cfg))


def scribble_unary(
    frame: np.ndarray,
    models: ColorModels,
    scribbles: np.ndarray,
    rmap: RegionMap,
    cfg: SeedConfig,
) -> UnaryField:
    """Region costs: mean negative log density of member pixels under each
    model (shifted to be nonnegative), with scribbled regions pinned by
    k_hard on the opposing label.  Regions holding both marks follow the
    majority; exact ties get no pin."""
    frame = np.asarray(frame, dtype=np.float64)
    flat_ids = rmap.ids.ravel()
    pixels = frame.reshape(-1, 3)
    r = rmap.region_count
    sizes = rmap.sizes.astype(np.float64)

    nll_fg = -models.fg.log_density(pixels)
    nll_bg = -models.bg.log_density(pixels)
    cost_fg = np.bincount(flat_ids, weights=nll_fg, minlength=r) / sizes
    cost_bg = np.bincount(flat_ids, weights=nll_bg, minlength=r) / sizes
    low = min(cost_fg.min(), cost_bg.min())
    if low < 0:
        cost_fg = cost_fg - low
        cost_bg = cost_bg - low

    marks = np.asarray(scribbles).ravel()
    fg_marks = np.bincount(flat_ids[marks == SCRIBBLE_FG], minlength=r)
    bg_marks = np.bincount(flat_ids[marks == SCRIBBLE_BG], minlength=r)
    cost_bg[fg_marks > bg_marks] = cfg.k_hard
    cost_fg[bg_marks > fg_marks] = cfg.k_hard
    return UnaryField(cost_fg, cost_bg)


def potts_binary(
    frame: np.ndarray,
    adj: RegionAdjacency,
    rmap: RegionMap,
    gamma_smooth: float = 50.0,
) -> BinaryField:
    """Symmetric contrast weights gamma * exp(-d_ij / beta) on adjacent
    regions, with d_ij the L1 distance of mean colors and beta their mean
    over the frame (1 when every pair is identical)."""
    if gamma_smooth <= 0:
        raise ValueError("gamma_smooth must be positive")
    if adj.pair_count == 0:
        return BinaryField(np.empty((0, 2), dtype=np.int64), np.empty(0), np.empty(0))
    feats = region_features(frame, rmap)
    d = color_distance(feats.mean_color[adj.pairs[:, 0]], feats.mean_color[adj.pairs[:, 1]])
    beta = float(d.mean())
    if beta <= 0.0:
        beta = 1.0
    w = gamma_smooth * np.exp(-d / beta)
    return BinaryField.symmetric(adj.pairs, w)
