"""Repeated-pattern discovery in a single RGB-D frame.

An input frame is scanned for corner-like local features; descriptors are
matched within the image (excluding spatial self-neighborhoods) so that
features occurring on several identical objects pair up; RANSAC over the
back-projected 3D points finds the rigid transforms relating the instances;
the surviving inlier matches are split into per-instance feature clusters and
the clusters connected by transforms are associated into object groups.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import cv2
import numpy as np

from .geometry import (
    DegenerateTransformError,
    RigidTransform,
    backproject,
    estimate_rigid_transform,
)

__all__ = [
    "DiscoveryConfig",
    "Keypoint",
    "Feature",
    "FeatureMatch",
    "TransformHypothesis",
    "InstanceCluster",
    "ObjectGroup",
    "DiscoveryResult",
    "ImageTooSmallError",
    "detect_features",
    "match_intra_image",
    "hypothesize_transforms",
    "extract_clusters",
    "discover",
]


class ImageTooSmallError(ValueError):
    """Frame is smaller than the descriptor patch."""


@dataclass(frozen=True)
class DiscoveryConfig:
    """Tunables for the discovery stage; tests pin these defaults.

    descriptor picks the patch summary: "brief" is a rotation-steered binary
    pair-test descriptor, "patch" a rotation-aligned normalized intensity
    patch. Both are repeatable under in-plane rotation and mild scale change,
    which is all the pipeline requires of them.
    """

    max_features: int = 2000
    descriptor: str = "brief"
    descriptor_bits: int = 256
    descriptor_seed: int = 42
    patch_radius: int = 12
    orientation_radius: int = 8
    grid_cell: int = 16
    per_cell: int = 3
    response_rel_threshold: float = 0.005
    knn: int = 4
    ratio: float = 0.9
    min_spatial_separation: float = 30.0
    ransac_iters: int = 2000
    inlier_epsilon: float = 0.01
    # Guided sampling: after the first match of a minimal sample, companions
    # are drawn from matches whose endpoints lie within this pixel radius of
    # the first match's endpoints (and are oriented to agree). Concentrates
    # samples on a single instance pair, so keep it near one object's pixel
    # span; <= 0 falls back to uniform sampling.
    ransac_locality_px: float = 180.0
    min_inliers: int = 8
    min_cluster_size: int = 8
    merge_overlap: float = 0.5
    # Endpoint sets are trimmed to their largest single-linkage component at
    # this pixel radius: a transform between two instances also maps the whole
    # table plane onto itself, so distant coincidental matches can pass the 3D
    # residual test and must be rejected spatially. Keep below the instance
    # separation so components never bridge objects.
    cluster_link_radius_px: float = 40.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.descriptor not in ("brief", "patch"):
            raise ValueError(f"unknown descriptor {self.descriptor!r}")
        if self.knn < 1:
            raise ValueError("knn must be >= 1")
        if not 0 < self.ratio <= 1:
            raise ValueError("ratio must be in (0, 1]")


@dataclass(frozen=True)
class Keypoint:
    u: float
    v: float
    response: float
    orientation: float
    scale: float


@dataclass(eq=False)
class Feature:
    keypoint: Keypoint
    descriptor: np.ndarray
    point3d: np.ndarray | None = None


@dataclass(frozen=True)
class FeatureMatch:
    """Undirected pair of features in the same frame, i < j."""

    i: int
    j: int
    distance: float


@dataclass(eq=False)
class TransformHypothesis:
    """A rigid transform plus the matches it explains."""

    transform: RigidTransform
    matches: list[FeatureMatch]

    @property
    def support(self) -> int:
        return len(self.matches)


@dataclass(frozen=True)
class InstanceCluster:
    """Features forming one object instance."""

    instance_id: int
    feature_indices: frozenset[int]
    group_id: int | None = None
    support: int = 0


@dataclass(frozen=True)
class ObjectGroup:
    """Instance clusters identified as repetitions of the same object."""

    group_id: int
    instance_ids: frozenset[int]
    pairwise_transforms: dict = field(default_factory=dict, hash=False, compare=False)


@dataclass(eq=False)
class DiscoveryResult:
    features: list[Feature]
    matches: list[FeatureMatch]
    clusters: list[InstanceCluster]
    groups: list[ObjectGroup]


# ---------------------------------------------------------------------------
# Feature detection
# ---------------------------------------------------------------------------

_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


def _grayscale(color: np.ndarray) -> np.ndarray:
    return (color.astype(np.float32) @ _LUMA) / 255.0


def _harris_response(gray: np.ndarray) -> np.ndarray:
    ix = cv2.Sobel(gray, cv2.CV_32F, 1, 0, ksize=3)
    iy = cv2.Sobel(gray, cv2.CV_32F, 0, 1, ksize=3)
    sxx = cv2.GaussianBlur(ix * ix, (0, 0), 1.5)
    syy = cv2.GaussianBlur(iy * iy, (0, 0), 1.5)
    sxy = cv2.GaussianBlur(ix * iy, (0, 0), 1.5)
    return sxx * syy - sxy * sxy - 0.04 * (sxx + syy) ** 2


def _disc_offsets(radius: int) -> tuple[np.ndarray, np.ndarray]:
    span = np.arange(-radius, radius + 1)
    dy, dx = np.meshgrid(span, span, indexing="ij")
    mask = dx * dx + dy * dy <= radius * radius
    return dx[mask].astype(np.int64), dy[mask].astype(np.int64)


def _brief_pattern(cfg: DiscoveryConfig) -> np.ndarray:
    """(bits, 2, 2) sampling-point pairs inside the patch disc."""
    rng = np.random.default_rng(cfg.descriptor_seed)
    pts = rng.normal(scale=cfg.patch_radius / 2.0, size=(cfg.descriptor_bits, 2, 2))
    norm = np.linalg.norm(pts, axis=2, keepdims=True)
    overflow = norm > cfg.patch_radius
    pts = np.where(overflow, pts * (cfg.patch_radius / np.maximum(norm, 1e-9)), pts)
    return pts.astype(np.float64)


def _orientations(blurred, xs, ys, radius):
    dx, dy = _disc_offsets(radius)
    patch = blurred[ys[:, None] + dy[None, :], xs[:, None] + dx[None, :]]
    m10 = patch @ dx.astype(np.float32)
    m01 = patch @ dy.astype(np.float32)
    return np.arctan2(m01, m10)


def _brief_descriptors(blurred, xs, ys, thetas, pattern):
    n = xs.size
    cos, sin = np.cos(thetas), np.sin(thetas)
    # pattern: (bits, 2, 2) -> rotated coords per keypoint: (n, bits, 2, 2)
    px, py = pattern[..., 0], pattern[..., 1]
    rx = cos[:, None, None] * px[None] - sin[:, None, None] * py[None]
    ry = sin[:, None, None] * px[None] + cos[:, None, None] * py[None]
    sx = np.rint(rx + xs[:, None, None]).astype(np.int64)
    sy = np.rint(ry + ys[:, None, None]).astype(np.int64)
    np.clip(sx, 0, blurred.shape[1] - 1, out=sx)
    np.clip(sy, 0, blurred.shape[0] - 1, out=sy)
    vals = blurred[sy, sx]  # (n, bits, 2)
    bits = vals[..., 0] < vals[..., 1]
    return np.packbits(bits, axis=1) if n else np.zeros((0, pattern.shape[0] // 8), np.uint8)


def _patch_descriptors(blurred, xs, ys, thetas, radius, side=12):
    grid = np.linspace(-radius, radius, side)
    gx, gy = np.meshgrid(grid, grid)
    base = np.stack([gx.ravel(), gy.ravel()], axis=1)  # (side*side, 2)
    cos, sin = np.cos(thetas), np.sin(thetas)
    rx = cos[:, None] * base[None, :, 0] - sin[:, None] * base[None, :, 1] + xs[:, None]
    ry = sin[:, None] * base[None, :, 0] + cos[:, None] * base[None, :, 1] + ys[:, None]
    x0 = np.floor(rx).astype(np.int64)
    y0 = np.floor(ry).astype(np.int64)
    np.clip(x0, 0, blurred.shape[1] - 2, out=x0)
    np.clip(y0, 0, blurred.shape[0] - 2, out=y0)
    fx = np.clip(rx - x0, 0.0, 1.0)
    fy = np.clip(ry - y0, 0.0, 1.0)
    v00 = blurred[y0, x0]
    v01 = blurred[y0, x0 + 1]
    v10 = blurred[y0 + 1, x0]
    v11 = blurred[y0 + 1, x0 + 1]
    vals = (
        v00 * (1 - fx) * (1 - fy)
        + v01 * fx * (1 - fy)
        + v10 * (1 - fx) * fy
        + v11 * fx * fy
    )
    vals = vals - vals.mean(axis=1, keepdims=True)
    norm = np.linalg.norm(vals, axis=1, keepdims=True)
    return (vals / np.maximum(norm, 1e-9)).astype(np.float32)


def detect_features(frame, cfg: DiscoveryConfig) -> list[Feature]:
    """Corner-like keypoints with rotation-aware descriptors and 3D points.

    Keypoints are local maxima of a Harris-style response, spread spatially by
    a per-cell quota, sorted by response descending, and capped at
    cfg.max_features. point3d is filled by back-projection wherever the depth
    map is valid at the keypoint.
    """
    color, depth, intr = frame.color, frame.depth, frame.intrinsics
    h, w = color.shape[:2]
    margin = int(np.ceil(cfg.patch_radius * 1.5)) + 1
    if h < 2 * margin + 1 or w < 2 * margin + 1:
        raise ImageTooSmallError(f"image {w}x{h} smaller than descriptor patch")

    gray = _grayscale(color)
    blurred = cv2.GaussianBlur(gray, (0, 0), 2.0)
    response = _harris_response(gray)
    response[:margin, :] = -np.inf
    response[-margin:, :] = -np.inf
    response[:, :margin] = -np.inf
    response[:, -margin:] = -np.inf

    peak = float(response.max())
    if not np.isfinite(peak) or peak <= 0:
        return []
    local_max = response >= cv2.dilate(response, np.ones((3, 3), np.uint8))
    candidates = local_max & (response > cfg.response_rel_threshold * peak)
    ys, xs = np.nonzero(candidates)
    if ys.size == 0:
        return []
    resp = response[ys, xs]
    order = np.lexsort((xs, ys, -resp))

    cells: dict[tuple[int, int], int] = {}
    keep: list[int] = []
    for idx in order:
        cell = (int(ys[idx]) // cfg.grid_cell, int(xs[idx]) // cfg.grid_cell)
        if cells.get(cell, 0) >= cfg.per_cell:
            continue
        cells[cell] = cells.get(cell, 0) + 1
        keep.append(int(idx))
        if len(keep) >= cfg.max_features:
            break
    xs, ys, resp = xs[keep], ys[keep], resp[keep]

    thetas = _orientations(blurred, xs, ys, cfg.orientation_radius)
    if cfg.descriptor == "brief":
        descs = _brief_descriptors(blurred, xs, ys, thetas, _brief_pattern(cfg))
    else:
        descs = _patch_descriptors(blurred, xs, ys, thetas, cfg.patch_radius)

    features = []
    for n in range(xs.size):
        u, v = float(xs[n]), float(ys[n])
        kp = Keypoint(
            u=u,
            v=v,
            response=float(resp[n]),
            orientation=float(thetas[n]),
            scale=float(cfg.patch_radius),
        )
        features.append(
            Feature(
                keypoint=kp,
                descriptor=descs[n],
                point3d=backproject(u, v, float(depth[int(v), int(u)]), intr),
            )
        )
    return features


# ---------------------------------------------------------------------------
# Intra-image matching
# ---------------------------------------------------------------------------

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint16)


def _descriptor_distances(features: list[Feature], cfg: DiscoveryConfig) -> np.ndarray:
    descs = np.stack([f.descriptor for f in features])
    if cfg.descriptor == "brief":
        n = descs.shape[0]
        out = np.empty((n, n), dtype=np.float32)
        step = 256
        for start in range(0, n, step):
            stop = min(start + step, n)
            xored = descs[start:stop, None, :] ^ descs[None, :, :]
            out[start:stop] = _POPCOUNT[xored].sum(axis=2)
        return out
    gram = descs @ descs.T
    sq = np.clip(2.0 - 2.0 * gram, 0.0, None)  # unit-norm vectors
    return np.sqrt(sq, dtype=np.float32)


def match_intra_image(
    features: list[Feature], cfg: DiscoveryConfig
) -> list[FeatureMatch]:
    """Pair features with their nearest non-local descriptor neighbors.

    For each feature the k = cfg.knn nearest neighbors at pixel distance
    >= cfg.min_spatial_separation are candidates; a candidate at rank r
    survives the ratio test when d_r <= cfg.ratio * d_{k+1}, the first
    spatially-admissible distance excluded from the neighbor set (all pass
    when no such candidate exists; for k = 1 this is the classic first-to-
    second ratio). Surviving pairs are deduplicated so (i, j) and (j, i)
    appear once.
    """
    n = len(features)
    if n < 2:
        return []
    dist = _descriptor_distances(features, cfg)
    pos = np.array([[f.keypoint.u, f.keypoint.v] for f in features], dtype=np.float32)
    diff = pos[:, None, :] - pos[None, :, :]
    sq_sep = (diff**2).sum(axis=2)
    admissible = sq_sep >= cfg.min_spatial_separation**2

    pairs: dict[tuple[int, int], float] = {}
    for i in range(n):
        cand = np.nonzero(admissible[i])[0]
        if cand.size == 0:
            continue
        d = dist[i, cand]
        order = np.argsort(d, kind="stable")
        k = min(cfg.knn, cand.size)
        cutoff = np.inf if cand.size <= k else cfg.ratio * float(d[order[k]])
        for r in range(k):
            dr = float(d[order[r]])
            if dr > cutoff:
                continue
            j = int(cand[order[r]])
            key = (min(i, j), max(i, j))
            if key not in pairs or dr < pairs[key]:
                pairs[key] = dr
    return [FeatureMatch(i, j, pairs[(i, j)]) for i, j in sorted(pairs)]


# ---------------------------------------------------------------------------
# RANSAC transform hypotheses
# ---------------------------------------------------------------------------


def _guided_sample(rng, pix_i, pix_j, radius):
    """Pick a seed match plus two companions local to (and oriented with) it.

    A companion keeps its stored orientation when both endpoints lie within
    `radius` pixels of the seed's respective endpoints, and is flipped when
    its endpoints match the seed's endpoints crosswise.
    """
    v = pix_i.shape[0]
    seed = int(rng.integers(v))
    d_ii = np.linalg.norm(pix_i - pix_i[seed], axis=1)
    d_jj = np.linalg.norm(pix_j - pix_j[seed], axis=1)
    d_ij = np.linalg.norm(pix_i - pix_j[seed], axis=1)
    d_ji = np.linalg.norm(pix_j - pix_i[seed], axis=1)
    keep = (d_ii <= radius) & (d_jj <= radius)
    flip = (d_ij <= radius) & (d_ji <= radius) & ~keep
    cand = np.nonzero(keep | flip)[0]
    cand = cand[cand != seed]
    if cand.size < 2:
        return None
    others = rng.choice(cand.size, size=2, replace=False)
    sample = np.array([seed, cand[others[0]], cand[others[1]]])
    flips = np.array([False, flip[sample[1]], flip[sample[2]]])
    return sample, flips


def hypothesize_transforms(
    features: list[Feature], matches: list[FeatureMatch], cfg: DiscoveryConfig
) -> list[TransformHypothesis]:
    """RANSAC rigid transforms over the matches' back-projected 3D points.

    Matches lacking depth on either endpoint are ignored. Each iteration
    samples 3 matches and fits a transform; a match is an inlier when either
    of its orientations lands within cfg.inlier_epsilon (pairs are undirected
    after dedup, so the stored direction is arbitrary). Hypotheses with at
    least cfg.min_inliers inliers are greedily extracted in descending
    support, consuming their matches; sampling rounds repeat over the
    unconsumed remainder until no hypothesis emerges.
    """
    valid_idx = [
        k
        for k, m in enumerate(matches)
        if features[m.i].point3d is not None and features[m.j].point3d is not None
    ]
    if len(valid_idx) < 3:
        return []
    p = np.stack([features[matches[k].i].point3d for k in valid_idx])
    q = np.stack([features[matches[k].j].point3d for k in valid_idx])
    pix_i = np.array(
        [
            (features[matches[k].i].keypoint.u, features[matches[k].i].keypoint.v)
            for k in valid_idx
        ]
    )
    pix_j = np.array(
        [
            (features[matches[k].j].keypoint.u, features[matches[k].j].keypoint.v)
            for k in valid_idx
        ]
    )
    v = len(valid_idx)

    rng = np.random.default_rng(cfg.rng_seed)
    active = np.ones(v, dtype=bool)
    out: list[TransformHypothesis] = []
    while int(active.sum()) >= max(3, cfg.min_inliers):
        pool = np.nonzero(active)[0]
        pp, qq = p[pool], q[pool]
        pxi, pxj = pix_i[pool], pix_j[pool]
        candidates: list[tuple[int, int, RigidTransform, np.ndarray]] = []
        for it in range(cfg.ransac_iters):
            if cfg.ransac_locality_px > 0:
                picked = _guided_sample(rng, pxi, pxj, cfg.ransac_locality_px)
                if picked is None:
                    continue
                sample, flips = picked
                src = np.where(flips[:, None], qq[sample], pp[sample])
                dst = np.where(flips[:, None], pp[sample], qq[sample])
            else:
                sample = rng.choice(pool.size, size=3, replace=False)
                src, dst = pp[sample], qq[sample]
            try:
                t = estimate_rigid_transform(src, dst)
            except (DegenerateTransformError, ValueError):
                continue
            fwd = np.linalg.norm(pp @ t.rotation.T + t.translation - qq, axis=1)
            bwd = np.linalg.norm(qq @ t.rotation.T + t.translation - pp, axis=1)
            inliers = np.minimum(fwd, bwd) <= cfg.inlier_epsilon
            count = int(inliers.sum())
            if count >= cfg.min_inliers:
                candidates.append((count, it, t, inliers))
        if not candidates:
            break

        # Greedy disjoint extraction from this round's candidate pool. Each
        # winner is trimmed to its dominant instance pair before consuming:
        # a plane-to-plane transform also explains coincidental matches
        # elsewhere, which must stay available to their own hypotheses.
        masks = np.stack([c[3] for c in candidates])
        iters = np.array([c[1] for c in candidates])
        consumed = np.zeros(pool.size, dtype=bool)
        alive = np.ones(len(candidates), dtype=bool)
        extracted = 0
        while alive.any():
            effective = masks & ~consumed
            counts = effective.sum(axis=1)
            counts[~alive] = -1
            best = int(np.lexsort((iters, -counts))[0])
            if counts[best] < cfg.min_inliers:
                break
            alive[best] = False
            chosen = np.nonzero(effective[best])[0]
            chosen_matches = [matches[valid_idx[pool[k]]] for k in chosen]
            kept = _dominant_pair_matches(
                features, candidates[best][2], chosen_matches, cfg.cluster_link_radius_px
            )
            if len(kept) < cfg.min_inliers:
                continue
            kept_keys = {(m.i, m.j) for m in kept}
            consumed[[k for k, m in zip(chosen, chosen_matches) if (m.i, m.j) in kept_keys]] = True
            out.append(
                TransformHypothesis(transform=candidates[best][2], matches=kept)
            )
            extracted += 1
        if not extracted:
            break
        active[pool[consumed]] = False
    return out


# ---------------------------------------------------------------------------
# Cluster extraction and grouping
# ---------------------------------------------------------------------------


def _orient_matches(
    features, transform: RigidTransform, matches: list[FeatureMatch]
) -> list[tuple[int, int]]:
    """Resolve each undirected inlier pair into (source, target) endpoints.

    Initial orientation prefers the direction with the smaller transform
    residual; a centroid-coherence refinement then fixes pairs near 180-degree
    rotations, where the transform is an involution and both directions fit.
    """
    t = transform
    oriented = []
    for m in matches:
        pi, pj = features[m.i].point3d, features[m.j].point3d
        if pi is None or pj is None:
            oriented.append((m.i, m.j))
            continue
        fwd = np.linalg.norm(t.apply(pi) - pj)
        bwd = np.linalg.norm(t.apply(pj) - pi)
        oriented.append((m.i, m.j) if fwd <= bwd else (m.j, m.i))

    px = {k: np.array([features[k].keypoint.u, features[k].keypoint.v]) for pair in oriented for k in pair}
    for _ in range(10):
        src_c = np.mean([px[a] for a, _ in oriented], axis=0)
        dst_c = np.mean([px[b] for _, b in oriented], axis=0)
        flipped = False
        for idx, (a, b) in enumerate(oriented):
            keep = np.linalg.norm(px[a] - src_c) + np.linalg.norm(px[b] - dst_c)
            flip = np.linalg.norm(px[b] - src_c) + np.linalg.norm(px[a] - dst_c)
            if flip < keep:
                oriented[idx] = (b, a)
                flipped = True
        if not flipped:
            break
    return oriented


def _largest_spatial_component(features, ids: set[int], radius: float) -> set[int]:
    """Largest single-linkage component of the features at the given pixel radius."""
    ordered = sorted(ids)
    if len(ordered) <= 1:
        return set(ordered)
    pts = np.array([(features[k].keypoint.u, features[k].keypoint.v) for k in ordered])
    n = len(ordered)
    visited = np.zeros(n, dtype=bool)
    best: list[int] = []
    for start in range(n):
        if visited[start]:
            continue
        stack, comp = [start], []
        visited[start] = True
        while stack:
            cur = stack.pop()
            comp.append(cur)
            near = np.nonzero(
                ~visited & (np.linalg.norm(pts - pts[cur], axis=1) <= radius)
            )[0]
            visited[near] = True
            stack.extend(int(k) for k in near)
        if len(comp) > len(best):
            best = comp
    return {ordered[k] for k in best}


def _dominant_pair_matches(
    features,
    transform: RigidTransform,
    match_list: list[FeatureMatch],
    radius: float,
) -> list[FeatureMatch]:
    """Restrict a hypothesis's matches to its dominant instance pair.

    Source endpoints are trimmed to their largest spatial component, then the
    target endpoints of the survivors likewise; coincidental matches elsewhere
    on the scene plane are removed.
    """
    oriented = _orient_matches(features, transform, match_list)
    src = _largest_spatial_component(features, {a for a, _ in oriented}, radius)
    kept = [(m, (a, b)) for m, (a, b) in zip(match_list, oriented) if a in src]
    dst = _largest_spatial_component(features, {b for _, (_, b) in kept}, radius)
    return [m for m, (_, b) in kept if b in dst]


def extract_clusters(
    features: list[Feature],
    hypotheses: list[TransformHypothesis],
    cfg: DiscoveryConfig,
) -> tuple[list[InstanceCluster], list[ObjectGroup]]:
    """Split hypotheses into per-instance clusters and associate them into groups.

    Each hypothesis contributes its source and target endpoint sets, trimmed
    to their dominant spatial component; sets sharing at least
    cfg.merge_overlap of their smaller set are merged, shared features are
    uniquely assigned, undersized clusters are dropped, and the connected
    components of the cluster/transform graph of size >= 2 become object
    groups (singletons are discarded).
    """
    endpoint_sets: list[set[int]] = []
    hyp_endpoints: list[tuple[int, int]] = []  # indices into endpoint_sets
    for hyp in hypotheses:
        trimmed = _dominant_pair_matches(
            features, hyp.transform, hyp.matches, cfg.cluster_link_radius_px
        )
        oriented = _orient_matches(features, hyp.transform, trimmed)
        src = {a for a, _ in oriented}
        dst = {b for _, b in oriented}
        endpoint_sets.extend([src, dst])
        hyp_endpoints.append((len(endpoint_sets) - 2, len(endpoint_sets) - 1))

    # Merge endpoint sets by overlap until a fixpoint.
    owner = list(range(len(endpoint_sets)))
    merged: list[set[int] | None] = [set(s) for s in endpoint_sets]
    changed = True
    while changed:
        changed = False
        for a in range(len(merged)):
            if merged[a] is None:
                continue
            for b in range(a + 1, len(merged)):
                if merged[b] is None:
                    continue
                inter = len(merged[a] & merged[b])
                if inter == 0:
                    continue
                if inter / min(len(merged[a]), len(merged[b])) >= cfg.merge_overlap:
                    merged[a] |= merged[b]
                    merged[b] = None
                    for k in range(len(owner)):
                        if owner[k] == b:
                            owner[k] = a
                    changed = True

    slots = [k for k, s in enumerate(merged) if s is not None]
    # Unique feature assignment: contested features go to the larger cluster.
    claimed: dict[int, int] = {}
    for slot in sorted(slots, key=lambda k: (-len(merged[k]), k)):
        for f in sorted(merged[slot]):
            claimed.setdefault(f, slot)
    for slot in slots:
        merged[slot] = {f for f in merged[slot] if claimed[f] == slot}

    support: dict[int, int] = {s: 0 for s in slots}
    for hyp, (ea, eb) in zip(hypotheses, hyp_endpoints):
        for e in (owner[ea], owner[eb]):
            if e in support:
                support[e] += hyp.support

    surviving = [s for s in slots if len(merged[s]) >= cfg.min_cluster_size]
    slot_to_cluster = {s: n for n, s in enumerate(surviving)}

    # Association graph: hypotheses are edges between the clusters their
    # endpoint sets landed in.
    parent = list(range(len(surviving)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges: list[tuple[int, int, RigidTransform]] = []
    for hyp, (ea, eb) in zip(hypotheses, hyp_endpoints):
        ca = slot_to_cluster.get(owner[ea])
        cb = slot_to_cluster.get(owner[eb])
        if ca is None or cb is None or ca == cb:
            continue
        edges.append((ca, cb, hyp.transform))
        ra, rb = find(ca), find(cb)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    components: dict[int, list[int]] = {}
    for c in range(len(surviving)):
        components.setdefault(find(c), []).append(c)

    group_of: dict[int, int] = {}
    groups: list[ObjectGroup] = []
    for root in sorted(components):
        members = components[root]
        if len(members) < 2:
            continue  # singleton clusters are discarded
        gid = len(groups)
        for c in members:
            group_of[c] = gid
        transforms = {}
        for ca, cb, t in edges:
            key = (min(ca, cb), max(ca, cb))
            if group_of.get(ca) == gid and key not in transforms:
                transforms[key] = t
        groups.append(
            ObjectGroup(
                group_id=gid,
                instance_ids=frozenset(members),
                pairwise_transforms=transforms,
            )
        )

    clusters = [
        InstanceCluster(
            instance_id=c,
            feature_indices=frozenset(merged[s]),
            group_id=group_of[c],
            support=support[s],
        )
        for c, s in enumerate(surviving)
        if c in group_of
    ]
    return clusters, groups


def discover(frame, cfg: DiscoveryConfig | None = None) -> DiscoveryResult:
    """Full discovery: detect, match, hypothesize, cluster, and group.

    Deterministic given the frame and cfg.rng_seed.
    """
    cfg = cfg or DiscoveryConfig()
    features = detect_features(frame, cfg)
    matches = match_intra_image(features, cfg) if features else []
    hypotheses = hypothesize_transforms(features, matches, cfg)
    clusters, groups = extract_clusters(features, hypotheses, cfg)
    return DiscoveryResult(
        features=features, matches=matches, clusters=clusters, groups=groups
    )
