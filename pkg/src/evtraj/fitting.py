"""Two-stage robust weighting, model-count selection, and event association.

Per window: voxel-to-line residuals against the representative hypotheses are
column-normalized, thresholded at the inlier noise scale to select inliers,
and surviving hypotheses are weighted twice -- first by temporal dispersion
of their inliers, then by the contrast of the event image warped along the
hypothesis. The model count comes from the elbow of the sorted weights, and
every event is finally assigned to the instance (via its parallel hypothesis
family) with the smallest sub-threshold residual, or marked as noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy import stats

from .grouping import EventWindow
from .hypotheses import (
    HypothesisSet,
    LineHypothesis,
    LineSet,
    time_scale,
    window_voxels,
)
from .io import NOISE_ID

DEFAULT_TAU = 0.01
DEFAULT_IKOSE_K = 0.01
DEFAULT_MIN_INLIERS = 3

_TAU_EPS = 1e-12


class FitError(RuntimeError):
    pass


class NoSurvivingModelError(FitError):
    """Every hypothesis lost its inliers; the window carries no structure."""


@dataclass(frozen=True)
class NoiseScale:
    """Inlier threshold on normalized residuals."""

    tau: float
    source: str = "fixed"  # fixed | estimated

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ValueError("tau must be positive")


@dataclass(frozen=True)
class ResidualMatrix:
    """Column-normalized voxel-to-line residuals (events x representatives)."""

    values: np.ndarray
    column_norms: np.ndarray


@dataclass(frozen=True)
class WeightedModel:
    """A surviving hypothesis with its inliers and both weighting stages."""

    hypothesis: LineHypothesis
    rep_index: int
    inliers: np.ndarray
    w_stage1: float
    w_final: float


@dataclass(frozen=True)
class AssociationResult:
    """Selected model instances plus the per-event trajectory assignment."""

    window: EventWindow
    instances: List[WeightedModel]
    assignment: np.ndarray
    failed: bool = False

    @property
    def num_models(self) -> int:
        return len(self.instances)


def point_line_distances(voxels: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Perpendicular distances from (n, 3) voxels to the m infinite lines."""
    voxels = np.asarray(voxels, dtype=np.float64).reshape(-1, 3)
    starts = np.asarray(starts, dtype=np.float64).reshape(-1, 3)
    ends = np.asarray(ends, dtype=np.float64).reshape(-1, 3)
    d = ends - starts
    lengths = np.linalg.norm(d, axis=1)
    diff = voxels[:, None, :] - starts[None, :, :]
    cross = np.cross(diff, d[None, :, :])
    return np.linalg.norm(cross, axis=2) / lengths


def residual(voxel: np.ndarray, hyp: LineHypothesis) -> float:
    """Raw (pre-normalization) distance from one voxel to one hypothesis line."""
    return float(point_line_distances(np.asarray(voxel), hyp.start, hyp.end)[0, 0])


def residual_matrix(window: EventWindow, reps: HypothesisSet) -> ResidualMatrix:
    rep_lines = reps.representatives
    if len(rep_lines) == 0:
        raise FitError("no representative hypotheses")
    raw = point_line_distances(window_voxels(window), rep_lines.starts, rep_lines.ends)
    norms = np.linalg.norm(raw, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    return ResidualMatrix(raw / safe, norms)


def estimate_tau_ikose(column: np.ndarray, k_ratio: float = DEFAULT_IKOSE_K) -> NoiseScale:
    """K-th ordered residual scale estimate, with one trimming iteration.

    tau = r_(K) / q, K = ceil(k_ratio * n), q the standard normal quantile at
    (1 + k_ratio) / 2; then recomputed over residuals <= 2.5 tau.
    """
    if not 0 < k_ratio < 1:
        raise ValueError("k_ratio must lie in (0, 1)")
    r = np.sort(np.asarray(column, dtype=np.float64))
    if r.size == 0:
        raise ValueError("empty residual column")
    q = float(stats.norm.ppf((1 + k_ratio) / 2))

    def kth_scale(res: np.ndarray) -> float:
        k = max(1, math.ceil(k_ratio * res.size))
        return float(res[k - 1]) / q

    tau = kth_scale(r)
    if tau <= 0:
        return NoiseScale(_TAU_EPS, "estimated")
    kept = r[r <= 2.5 * tau]
    tau = kth_scale(kept) if kept.size else tau
    if tau <= 0:
        tau = _TAU_EPS
    return NoiseScale(tau, "estimated")


def select_inliers(
    matrix: ResidualMatrix,
    scale: NoiseScale,
    min_inliers: int = DEFAULT_MIN_INLIERS,
) -> List[tuple[int, np.ndarray]]:
    """Per-representative inlier index sets; hypotheses below the floor are dropped."""
    mask = matrix.values < scale.tau
    survivors = []
    for j in range(mask.shape[1]):
        idx = np.flatnonzero(mask[:, j])
        if idx.size >= min_inliers:
            survivors.append((j, idx))
    if not survivors:
        raise NoSurvivingModelError("all hypotheses dropped at the inlier floor")
    return survivors


def stage1_weight(inlier_times: np.ndarray, s_t: float) -> float:
    """Mean squared deviation of inlier (normalized) timestamps from mid-window."""
    t = np.asarray(inlier_times, dtype=np.float64)
    return float(np.mean((t - s_t / 2.0) ** 2))


def warp_and_contrast(
    voxels: np.ndarray,
    inliers: np.ndarray,
    hyp: LineHypothesis,
) -> float:
    """Contrast of the inlier image warped along the hypothesis to the t=0 plane.

    Inliers translate along the hypothesis direction, land on integer pixels,
    and accumulate into a count image cropped to the non-zero extent. Counts
    are normalized by their maximum so the variance (the returned contrast)
    stays in [0, 1].
    """
    pts = np.asarray(voxels, dtype=np.float64)[np.asarray(inliers)]
    d = hyp.direction
    plane = pts[:, :2] - (d[:2] / d[2]) * pts[:, 2:3]
    ij = np.rint(plane).astype(np.int64)
    ij -= ij.min(axis=0)
    w = int(ij[:, 0].max()) + 1
    h = int(ij[:, 1].max()) + 1
    counts = np.zeros((h, w))
    np.add.at(counts, (ij[:, 1], ij[:, 0]), 1.0)
    norm = counts / counts.max()
    return float(np.mean((norm - norm.mean()) ** 2))


def stage2_weight(w: float, contrast: float) -> float:
    return w * (1.0 - contrast)


def select_model_count(weights: Sequence[float]) -> int:
    """Elbow position in the ascending sorted weights; 1 if no elbow exists.

    The model count is the first k whose adjacent-difference d_k strictly
    exceeds its up-to-four neighboring differences (missing neighbors are
    skipped).
    """
    w = np.sort(np.asarray(weights, dtype=np.float64))
    diffs = np.diff(w)
    for i in range(diffs.size):
        neighbors = np.concatenate([diffs[max(0, i - 2):i], diffs[i + 1:i + 3]])
        if neighbors.size and np.all(diffs[i] > neighbors):
            return i + 1
    return 1


def weigh_models(
    window: EventWindow,
    reps: HypothesisSet,
    survivors: Sequence[tuple[int, np.ndarray]],
) -> List[WeightedModel]:
    """Apply both weighting stages to the surviving representatives."""
    vox = window_voxels(window)
    s_t = time_scale(window.geometry)
    rep_lines = reps.representatives
    models = []
    for j, inliers in survivors:
        hyp = rep_lines[j]
        w1 = stage1_weight(vox[inliers, 2], s_t)
        contrast = warp_and_contrast(vox, inliers, hyp)
        models.append(
            WeightedModel(
                hypothesis=hyp,
                rep_index=int(reps.rep_indices[j]),
                inliers=inliers,
                w_stage1=w1,
                w_final=stage2_weight(w1, contrast),
            )
        )
    return models


def associate(
    window: EventWindow,
    hyps: HypothesisSet,
    instances: Sequence[WeightedModel],
    parallel_tol: float,
    scale: NoiseScale,
) -> AssociationResult:
    """Assign each event to the instance with its minimum sub-tau family residual.

    Each instance's family is the set of generated hypotheses parallel to it
    (cosine distance <= parallel_tol); residuals against the family columns
    are normalized like the representative columns. Events below tau for no
    family are labeled noise.
    """
    if not instances:
        raise FitError("no instances to associate against")
    vox = window_voxels(window)
    n = vox.shape[0]
    units = hyps.all.unit_directions()
    best = np.full(n, np.inf)
    label = np.full(n, NOISE_ID, dtype=np.int64)
    for idx, inst in enumerate(instances):
        d = inst.hypothesis.direction
        ud = d / np.linalg.norm(d)
        fam = np.flatnonzero(1.0 - units @ ud <= parallel_tol)
        if fam.size == 0:
            continue
        fam_min = np.full(n, np.inf)
        chunk = max(1, 4_000_000 // max(n, 1))
        for lo in range(0, fam.size, chunk):
            sub = fam[lo:lo + chunk]
            raw = point_line_distances(vox, hyps.all.starts[sub], hyps.all.ends[sub])
            norms = np.linalg.norm(raw, axis=0)
            vals = raw / np.where(norms > 0, norms, 1.0)
            fam_min = np.minimum(fam_min, vals.min(axis=1))
        better = (fam_min < scale.tau) & (fam_min < best)
        label[better] = idx
        best[better] = fam_min[better]
    return AssociationResult(window=window, instances=list(instances), assignment=label)


def _all_noise(window: EventWindow) -> AssociationResult:
    return AssociationResult(
        window=window,
        instances=[],
        assignment=np.full(len(window), NOISE_ID, dtype=np.int64),
        failed=True,
    )


def fit_window(window: EventWindow, config) -> AssociationResult:
    """Run hypothesis generation through association for one window.

    Failures (no usable slices, no surviving model) degrade to a flagged
    all-noise result instead of raising.
    """
    from .hypotheses import HypothesisError, generate, select_representatives

    try:
        lines = generate(window, config.num_slices, config.max_pairs)
        reps = select_representatives(lines, config.parallel_tol)
        matrix = residual_matrix(window, reps)
        if config.scale_mode == "fixed":
            scale = NoiseScale(config.tau, "fixed")
        elif config.scale_mode == "ikose":
            taus = [estimate_tau_ikose(matrix.values[:, j], config.ikose_k).tau
                    for j in range(matrix.values.shape[1])]
            scale = NoiseScale(float(np.median(taus)), "estimated")
        else:
            raise ValueError(f"unknown scale_mode {config.scale_mode!r}")
        survivors = select_inliers(matrix, scale, config.min_inliers)
        models = weigh_models(window, reps, survivors)
        finals = [m.w_final for m in models]
        num_models = 1 if len(models) < 2 else select_model_count(finals)
        order = np.argsort(finals, kind="stable")[:num_models]
        instances = [models[int(i)] for i in order]
        return associate(window, reps, instances, config.parallel_tol, scale)
    except (HypothesisError, NoSurvivingModelError):
        return _all_noise(window)


def run_eda(stream, config) -> List[AssociationResult]:
    """Cut the stream into windows and fit each one, in stream order.

    ``config.workers > 1`` fits windows on a thread pool; results keep window
    order, so the output is identical to the sequential run.
    """
    from .grouping import EntropyInterval, cut_windows

    interval = EntropyInterval(config.entropy_alpha, config.entropy_beta)
    windows = cut_windows(stream, interval, config.entropy_grid, config.max_window_s)
    workers = getattr(config, "workers", 1)
    if workers and workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda w: fit_window(w, config), windows))
    return [fit_window(w, config) for w in windows]
