"""Shot-boundary detection between consecutive frames.

Two cues per frame pair, combined with OR so recall stays high:

- Manhattan distance between concatenated per-channel color histograms
  (L1-normalized jointly over the three channels);
- the fraction of corner points from the first frame that survive into
  the second, where a corner survives if its best patch-SSD match within
  a search radius stays below a threshold. Corners come from the
  structure-tensor minimum-eigenvalue response.

A boundary index i means a cut between frames i-1 and i.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter, uniform_filter

from .numerics import FLOAT

DEFAULT_BINS = 32
DEFAULT_PATCH = 9
DEFAULT_RADIUS = 16
DEFAULT_MAX_CORNERS = 200
DEFAULT_SSD_THRESHOLD = 0.004  # mean squared gray difference, [0,1] scale
CORNER_EPS = 1e-10


@dataclass
class FrameSignature:
    histogram: np.ndarray        # length 3*bins, sums to 1
    corners: np.ndarray          # (K, 2) integer (row, col)
    corner_scores: np.ndarray    # (K,) min-eigenvalue responses


def _as_float_rgb(frame):
    f = np.asarray(frame)
    if f.ndim != 3 or f.shape[2] != 3 or f.shape[0] == 0 or f.shape[1] == 0:
        raise ValueError("frame must be a nonempty (H, W, 3) array")
    f = f.astype(FLOAT)
    if f.max() > 1.0:
        f = f / 255.0
    return np.clip(f, 0.0, 1.0)


def _grayscale(frame01):
    return frame01.mean(axis=2)


def min_eig_response(gray, window=5):
    """Smaller eigenvalue of the windowed structure tensor, per pixel."""
    gy, gx = np.gradient(gray)
    a = uniform_filter(gx * gx, size=window)
    b = uniform_filter(gx * gy, size=window)
    c = uniform_filter(gy * gy, size=window)
    half = np.sqrt((a - c) ** 2 + 4.0 * b * b)
    return (a + c - half) / 2.0


def frame_signature(frame, bins=DEFAULT_BINS, max_corners=DEFAULT_MAX_CORNERS):
    """Color histogram plus top-K minimum-eigenvalue corners.

    A degenerate (uniform) frame yields an empty corner list but still a
    valid histogram.
    """
    if bins < 2:
        raise ValueError("bins must be >= 2")
    f = _as_float_rgb(frame)
    hist = np.concatenate([
        np.histogram(f[:, :, ch], bins=bins, range=(0.0, 1.0))[0]
        for ch in range(3)
    ]).astype(FLOAT)
    hist /= hist.sum()

    resp = min_eig_response(_grayscale(f))
    local_max = resp == maximum_filter(resp, size=3)
    cand = np.argwhere(local_max & (resp > CORNER_EPS))
    if cand.size == 0:
        return FrameSignature(hist, np.zeros((0, 2), dtype=int), np.zeros(0))
    scores = resp[cand[:, 0], cand[:, 1]]
    order = np.lexsort((cand[:, 1], cand[:, 0], -scores))[:max_corners]
    return FrameSignature(hist, cand[order], scores[order])


def hist_distance(sig_a: FrameSignature, sig_b: FrameSignature):
    return float(np.abs(sig_a.histogram - sig_b.histogram).sum())


def survival_ratio(frame_a, frame_b, corners,
                   patch_size=DEFAULT_PATCH, search_radius=DEFAULT_RADIUS,
                   ssd_threshold=DEFAULT_SSD_THRESHOLD):
    """Fraction of corners whose best block match stays under the SSD
    threshold. Without corners the ratio is 1 (nothing was lost)."""
    if len(corners) == 0:
        return 1.0
    ga = _grayscale(_as_float_rgb(frame_a))
    gb = _grayscale(_as_float_rgb(frame_b))
    h, w = ga.shape
    r = search_radius
    gb_pad = np.pad(gb, r, mode="edge")
    rows = corners[:, 0]
    cols = corners[:, 1]
    best = np.full(len(corners), np.inf)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            shifted = gb_pad[r + dy:r + dy + h, r + dx:r + dx + w]
            ssd = uniform_filter((ga - shifted) ** 2, size=patch_size)
            np.minimum(best, ssd[rows, cols], out=best)
    return float(np.mean(best <= ssd_threshold))


def pair_features(frames, bins=DEFAULT_BINS, patch_size=DEFAULT_PATCH,
                  search_radius=DEFAULT_RADIUS, max_corners=DEFAULT_MAX_CORNERS,
                  ssd_threshold=DEFAULT_SSD_THRESHOLD):
    """(histogram distance, survival ratio) for every consecutive pair."""
    if len(frames) < 2:
        raise ValueError("need at least 2 frames")
    sigs = [frame_signature(f, bins=bins, max_corners=max_corners) for f in frames]
    dists = np.empty(len(frames) - 1)
    survs = np.empty(len(frames) - 1)
    for i in range(len(frames) - 1):
        dists[i] = hist_distance(sigs[i], sigs[i + 1])
        survs[i] = survival_ratio(frames[i], frames[i + 1], sigs[i].corners,
                                  patch_size=patch_size,
                                  search_radius=search_radius,
                                  ssd_threshold=ssd_threshold)
    return dists, survs


def detect_boundaries(frames, theta_hist, theta_survive, **feature_kw):
    """Boundary between i-1 and i iff the histogram distance exceeds
    theta_hist OR the survival ratio falls below theta_survive."""
    if theta_hist < 0:
        raise ValueError("theta_hist must be >= 0")
    if not 0.0 <= theta_survive <= 1.0:
        raise ValueError("theta_survive must be in [0, 1]")
    dists, survs = pair_features(frames, **feature_kw)
    fired = (dists > theta_hist) | (survs < theta_survive)
    return [i + 1 for i in np.flatnonzero(fired)]


@dataclass
class ShotThresholds:
    theta_hist: float
    theta_survive: float
    f_score: float  # pooled F1 on the fitting set


def boundary_f_score(predicted, actual):
    pred = set(predicted)
    act = set(actual)
    tp = len(pred & act)
    fp = len(pred - act)
    fn = len(act - pred)
    return 2.0 * tp / (2.0 * tp + fp + fn) if (2 * tp + fp + fn) else 1.0


def _candidates(values, limit=60):
    vals = np.unique(values)
    mids = (vals[:-1] + vals[1:]) / 2.0 if len(vals) > 1 else np.empty(0)
    cand = np.concatenate([mids, [vals.min() - 1e-6, vals.max() + 1e-6]])
    cand = np.unique(cand)
    if len(cand) > limit:
        idx = np.linspace(0, len(cand) - 1, limit).round().astype(int)
        cand = cand[idx]
    return cand


def fit_thresholds(videos, **feature_kw):
    """Grid-search (theta_hist, theta_survive) maximizing pooled boundary
    F1 over labeled videos: list of (frames, boundary index list)."""
    dists, survs, labels = [], [], []
    for frames, gt in videos:
        d, s = pair_features(frames, **feature_kw)
        dists.append(d)
        survs.append(s)
        lab = np.zeros(len(frames) - 1, dtype=bool)
        for b in gt:
            lab[b - 1] = True
        labels.append(lab)
    dists = np.concatenate(dists)
    survs = np.concatenate(survs)
    labels = np.concatenate(labels)

    hist_cand = _candidates(dists)
    surv_cand = np.clip(_candidates(survs), 0.0, 1.0)
    surv_cand = np.unique(np.concatenate([surv_cand, [0.0]]))  # 0 disables the cue
    best = None
    for th in hist_cand:
        fired_h = dists > th
        for ts in surv_cand:
            fired = fired_h | (survs < ts)
            tp = int(np.sum(fired & labels))
            fp = int(np.sum(fired & ~labels))
            fn = int(np.sum(~fired & labels))
            f1 = 2.0 * tp / (2.0 * tp + fp + fn) if (2 * tp + fp + fn) else 1.0
            if best is None or f1 > best[0] + 1e-12:
                best = (f1, float(th), float(ts))
    f1, th, ts = best
    return ShotThresholds(theta_hist=th, theta_survive=ts, f_score=f1)


def synthetic_cut_video(rng, n_frames, n_cuts, height=24, width=32,
                        color_spread=40.0, jitter=2.0):
    """Piecewise test video: each segment drifts a colored noise pattern
    around a segment-specific mean color; cuts switch patterns. Returns
    (frames, boundary indices)."""
    n_cuts = min(n_cuts, max(0, n_frames - 1))
    if n_cuts > 0:
        cuts = sorted(rng.choice(np.arange(1, n_frames), size=n_cuts,
                                 replace=False).tolist())
    else:
        cuts = []
    frames = []
    for s, e in zip([0] + cuts, cuts + [n_frames]):
        mean = rng.uniform(40.0, 215.0, size=3)
        base = mean[None, None, :] + rng.uniform(-color_spread, color_spread,
                                                 size=(height, width, 3))
        dx = int(rng.integers(-1, 2))
        for i in range(e - s):
            img = np.roll(base, shift=dx * i, axis=1)
            img = img + rng.normal(0.0, jitter, size=img.shape)
            frames.append(np.clip(img, 0, 255).astype(np.uint8))
    return frames, cuts
