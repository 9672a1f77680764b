"""Planar ray casting against typed circles and segments.

Each ray reports a one-hot over object types plus a hit distance normalized
to [0, 1]; a miss is all-zero one-hot with distance 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_EPS = 1e-9


@dataclass(frozen=True)
class RayCastSpec:
    """Ray fan geometry: ``n_rays`` spread evenly over ``fov_deg`` centered on
    the caster's heading."""

    n_rays: int = 14
    fov_deg: float = 180.0
    max_range: float = 5.0
    n_types: int = 7

    @property
    def entries(self) -> int:
        return self.n_rays * (self.n_types + 1)


def ray_circle_distance(origin, direction, center, radius) -> float | None:
    """Distance along a unit-direction ray to a circle, or None."""
    oc = np.asarray(center, dtype=float) - np.asarray(origin, dtype=float)
    b = float(np.dot(direction, oc))
    disc = b * b - float(np.dot(oc, oc)) + radius * radius
    if disc < 0.0:
        return None
    root = np.sqrt(disc)
    t = b - root
    if t < _EPS:
        t = b + root
    return t if t >= _EPS else None


def ray_segment_distance(origin, direction, p1, p2) -> float | None:
    """Distance along a unit-direction ray to a segment, or None."""
    e = np.asarray(p2, dtype=float) - np.asarray(p1, dtype=float)
    w = np.asarray(p1, dtype=float) - np.asarray(origin, dtype=float)
    denom = direction[0] * e[1] - direction[1] * e[0]
    if abs(denom) < 1e-12:
        return None
    t = (w[0] * e[1] - w[1] * e[0]) / denom
    s = (w[0] * direction[1] - w[1] * direction[0]) / denom
    if t >= _EPS and 0.0 <= s <= 1.0:
        return float(t)
    return None


def cast_rays(
    origin,
    heading: float,
    spec: RayCastSpec,
    circles: list[tuple[int, np.ndarray, float]],
    segments: list[tuple[int, np.ndarray, np.ndarray]],
) -> np.ndarray:
    """Observation vector for a fan of rays.

    ``circles`` entries are (type, center, radius); ``segments`` are
    (type, endpoint, endpoint). Types index into the one-hot block. All rays
    are intersected against all objects in one vectorized pass.
    """
    origin = np.asarray(origin, dtype=float)
    angles = heading + np.linspace(-np.pi / 2, np.pi / 2, spec.n_rays) * (
        spec.fov_deg / 180.0
    )
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)  # (R, 2)
    best_t = np.full(spec.n_rays, spec.max_range)
    best_type = np.full(spec.n_rays, -1, dtype=int)

    if circles:
        types = np.array([c[0] for c in circles], dtype=int)
        centers = np.array([c[1] for c in circles], dtype=float)
        radii = np.array([c[2] for c in circles], dtype=float)
        oc = centers - origin  # (C, 2)
        b = dirs @ oc.T  # (R, C)
        disc = b * b - ((oc * oc).sum(axis=1) - radii * radii)[None, :]
        root = np.sqrt(np.maximum(disc, 0.0))
        near, far = b - root, b + root
        t = np.where(near >= _EPS, near, far)
        t = np.where((disc >= 0.0) & (t >= _EPS), t, np.inf)
        _take_nearest(best_t, best_type, t, types)

    if segments:
        types = np.array([s[0] for s in segments], dtype=int)
        p1 = np.array([s[1] for s in segments], dtype=float)
        p2 = np.array([s[2] for s in segments], dtype=float)
        e = p2 - p1  # (S, 2)
        w = p1 - origin  # (S, 2)
        denom = np.outer(dirs[:, 0], e[:, 1]) - np.outer(dirs[:, 1], e[:, 0])
        w_cross_e = w[:, 0] * e[:, 1] - w[:, 1] * e[:, 0]  # (S,)
        w_cross_d = np.outer(dirs[:, 1], w[:, 0]) - np.outer(dirs[:, 0], w[:, 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            t = w_cross_e[None, :] / denom
            s = w_cross_d / denom
        ok = (np.abs(denom) >= 1e-12) & (t >= _EPS) & (s >= 0.0) & (s <= 1.0)
        t = np.where(ok, t, np.inf)
        _take_nearest(best_t, best_type, t, types)

    out = np.zeros(spec.entries)
    width = spec.n_types + 1
    hit = best_type >= 0
    rows = np.arange(spec.n_rays)
    out[rows * width + spec.n_types] = np.where(hit, best_t / spec.max_range, 1.0)
    hit_rows = rows[hit]
    out[hit_rows * width + best_type[hit]] = 1.0
    return out


def _take_nearest(best_t, best_type, t_matrix, types):
    """Fold (rays x objects) hit distances into per-ray running minima."""
    idx = np.argmin(t_matrix, axis=1)
    t_min = t_matrix[np.arange(t_matrix.shape[0]), idx]
    closer = t_min < best_t
    best_t[closer] = t_min[closer]
    best_type[closer] = types[idx[closer]]
