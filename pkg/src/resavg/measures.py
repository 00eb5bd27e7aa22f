"""Empirical measures and distances that metrize weak convergence.

The theoretical yardstick is the dual-Lipschitz distance

    ||mu1 - mu2||*_L = sup { |<f, mu1> - <f, mu2>| : Lip f + sup |f| <= 1 },

which is bounded by 2 and dominated by the Kantorovich (1-Wasserstein)
distance. Computing it exactly is an infinite-dimensional optimization,
so it is *bracketed*: a dictionary of admissible test functions gives a
certified lower bound, and an empirical W1 (exact assignment for small
clouds, sliced for large ones) caps it from above. Convergence of the
upper bound to zero therefore implies convergence in the true metric.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .complexcore import actions, to_real
from .errors import DimensionMismatchError

logger = logging.getLogger(__name__)

#: hard cap of the dual-Lipschitz distance
DUAL_LIPSCHITZ_CAP = 2.0
#: largest per-side sample count for exact-assignment W1 (O(m^3) beyond)
EXACT_ASSIGNMENT_LIMIT = 2000
#: sliced directions used by the upper bound on large clouds
UPPER_SLICED_DIRECTIONS = 128


@dataclass(frozen=True)
class EmpiricalMeasure:
    """A uniformly weighted sample cloud in R^d."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        object.__setattr__(self, "points", pts)
        if pts.shape[0] == 0:
            raise ValueError("empirical measure needs at least one sample")
        if not np.all(np.isfinite(pts)):
            raise ValueError("samples must be finite")

    @property
    def n_samples(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @staticmethod
    def from_complex(states: np.ndarray) -> "EmpiricalMeasure":
        """Flatten C^n samples to R^2n, interleaved (x1, y1, ..., xn, yn)."""
        return EmpiricalMeasure(to_real(np.asarray(states, dtype=np.complex128)))

    def complex_view(self) -> np.ndarray:
        from .complexcore import to_complex

        return to_complex(self.points)


@dataclass(frozen=True)
class DistanceBracket:
    """Certified lower / practical upper estimates of the dual-Lipschitz distance."""

    lower: float
    upper: float
    lower_method: str = "dictionary"
    upper_method: str = "w1"
    n_samples: int = 0
    notes: tuple = field(default=())

    def __post_init__(self):
        if self.lower < 0 or self.upper < 0:
            raise ValueError("distances are nonnegative")
        if self.lower > self.upper + 1e-12:
            raise ValueError("bracket lower exceeds upper")
        if self.upper > DUAL_LIPSCHITZ_CAP + 1e-12:
            raise ValueError("dual-Lipschitz distances are capped at 2")


def wasserstein1_1d(x, y, rng: np.random.Generator | None = None) -> float:
    """Exact 1-Wasserstein distance between two 1-d sample sets.

    With equal counts this is the mean absolute difference of the sorted
    samples. Unequal counts are resampled with replacement down to the
    smaller count (deterministically unless an rng is supplied); the
    resampling is logged because it adds Monte Carlo error.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size == 0 or y.size == 0:
        raise ValueError("empty sample set")
    if x.size != y.size:
        m = min(x.size, y.size)
        if rng is None:
            rng = np.random.default_rng(m)
        logger.info(
            "wasserstein1_1d: resampling %d/%d samples to %d", x.size, y.size, m
        )
        if x.size > m:
            x = x[rng.integers(0, x.size, m)]
        else:
            y = y[rng.integers(0, y.size, m)]
    return float(np.mean(np.abs(np.sort(x) - np.sort(y))))


def _unit_directions(d: int, n_dirs: int, rng: np.random.Generator) -> np.ndarray:
    dirs = rng.standard_normal((n_dirs, d))
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    small = norms[:, 0] < 1e-12
    if np.any(small):
        dirs[small] = np.eye(d)[0]
        norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs / norms


def sliced_w1(
    x: EmpiricalMeasure,
    y: EmpiricalMeasure,
    n_dirs: int,
    rng: np.random.Generator,
) -> float:
    """Sliced 1-Wasserstein: average 1-d W1 over random unit directions.

    A practical surrogate for weak convergence in high dimension;
    deterministic given the rng state. Note it underestimates the full
    W1 by the mean projection factor.
    """
    if x.dim != y.dim:
        raise DimensionMismatchError("clouds live in different dimensions")
    dirs = _unit_directions(x.dim, int(n_dirs), rng)
    px = x.points @ dirs.T
    py = y.points @ dirs.T
    m = min(x.n_samples, y.n_samples)
    if x.n_samples != y.n_samples:
        sub = np.random.default_rng(m)
        px = px[sub.integers(0, x.n_samples, m)]
        py = py[sub.integers(0, y.n_samples, m)]
        logger.info("sliced_w1: unequal clouds resampled to %d", m)
    px.sort(axis=0)
    py.sort(axis=0)
    return float(np.mean(np.abs(px - py)))


def exact_w1(x: EmpiricalMeasure, y: EmpiricalMeasure,
             rng: np.random.Generator | None = None) -> float:
    """Exact empirical W1 by optimal assignment (equal counts enforced)."""
    if x.dim != y.dim:
        raise DimensionMismatchError("clouds live in different dimensions")
    xp, yp = x.points, y.points
    if xp.shape[0] != yp.shape[0]:
        m = min(xp.shape[0], yp.shape[0])
        if rng is None:
            rng = np.random.default_rng(m)
        if xp.shape[0] > m:
            xp = xp[rng.integers(0, xp.shape[0], m)]
        else:
            yp = yp[rng.integers(0, yp.shape[0], m)]
    cost = np.sqrt(
        np.maximum(
            np.sum(xp**2, axis=1)[:, None]
            + np.sum(yp**2, axis=1)[None, :]
            - 2.0 * xp @ yp.T,
            0.0,
        )
    )
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def _dictionary_lower(x: EmpiricalMeasure, y: EmpiricalMeasure,
                      dict_size: int, rng: np.random.Generator) -> float:
    """Best witness among admissible test functions (Lip f + sup |f| <= 1).

    The dictionary mixes cosine ridges f(v) = cos(<w, v> + b) / (2 (1 +
    |w|)) at frequency scales {1/4, 1, 4} with clipped distance cones
    max(0, 1 - |v - c|) / 2 planted at centroids of a random partition of
    the pooled cloud. Both families satisfy the admissibility bound by
    construction, so the max witness value is a certified lower bound.
    """
    d = x.dim
    pooled = np.concatenate([x.points, y.points], axis=0)
    n_cones = min(8, dict_size)
    perm = rng.permutation(pooled.shape[0])
    centers = np.array(
        [pooled[chunk].mean(axis=0) for chunk in np.array_split(perm, n_cones)]
    )
    best = 0.0
    for c in centers:
        fx = np.maximum(0.0, 1.0 - np.linalg.norm(x.points - c, axis=1)) * 0.5
        fy = np.maximum(0.0, 1.0 - np.linalg.norm(y.points - c, axis=1)) * 0.5
        best = max(best, abs(fx.mean() - fy.mean()))
    scales = (0.25, 1.0, 4.0)
    n_ridges = max(0, dict_size - n_cones)
    for i in range(n_ridges):
        w = scales[i % len(scales)] * rng.standard_normal(d)
        b = rng.uniform(0.0, 2.0 * np.pi)
        norm_w = float(np.linalg.norm(w))
        fx = np.cos(x.points @ w + b) / (2.0 * (1.0 + norm_w))
        fy = np.cos(y.points @ w + b) / (2.0 * (1.0 + norm_w))
        best = max(best, abs(fx.mean() - fy.mean()))
    return best


def dual_lipschitz_bracket(
    x: EmpiricalMeasure,
    y: EmpiricalMeasure,
    dict_size: int = 64,
    rng: np.random.Generator | None = None,
) -> DistanceBracket:
    """Bracket the dual-Lipschitz distance between two sample clouds.

    lower: max dictionary witness (certified lower bound).
    upper: min(2, empirical W1), exact assignment up to 2000 samples per
    side, sliced W1 with 128 directions beyond. The sliced route is a
    surrogate rather than a certified upper bound; if it ever falls
    below the certified lower bound the bracket is clamped and tagged.
    """
    if x.dim != y.dim:
        raise DimensionMismatchError("clouds live in different dimensions")
    if rng is None:
        rng = np.random.default_rng(0)
    lower = _dictionary_lower(x, y, int(dict_size), rng)
    notes = []
    if max(x.n_samples, y.n_samples) <= EXACT_ASSIGNMENT_LIMIT:
        w1 = exact_w1(x, y, rng)
        upper_method = "assignment_w1"
    else:
        w1 = sliced_w1(x, y, UPPER_SLICED_DIRECTIONS, rng)
        upper_method = "sliced_w1"
    upper = min(DUAL_LIPSCHITZ_CAP, w1)
    if upper < lower:
        notes.append("upper_clamped_to_lower")
        upper = lower
    return DistanceBracket(
        lower=lower,
        upper=upper,
        lower_method=f"dictionary[{dict_size}]",
        upper_method=upper_method,
        n_samples=min(x.n_samples, y.n_samples),
        notes=tuple(notes),
    )


def ks_distance_1d(x, y) -> float:
    """Two-sample Kolmogorov-Smirnov statistic: sup |ECDF_x - ECDF_y|."""
    x = np.sort(np.asarray(x, dtype=np.float64).ravel())
    y = np.sort(np.asarray(y, dtype=np.float64).ravel())
    if x.size == 0 or y.size == 0:
        raise ValueError("empty sample set")
    pooled = np.concatenate([x, y])
    cdf_x = np.searchsorted(x, pooled, side="right") / x.size
    cdf_y = np.searchsorted(y, pooled, side="right") / y.size
    return float(np.max(np.abs(cdf_x - cdf_y)))


def ks_two_sample_band(m: int, n: int | None = None, alpha: float = 0.05) -> float:
    """Critical value c(alpha) sqrt((m + n) / (m n)) of the two-sample KS test."""
    if n is None:
        n = m
    coeff = np.sqrt(-0.5 * np.log(alpha / 2.0))
    return float(coeff * np.sqrt((m + n) / (m * n)))


def action_pushforward(ensemble, tau: float) -> EmpiricalMeasure:
    """Image of an ensemble's time-tau marginal under the action map.

    For complex-state ensembles applies I_k = |z_k|^2 / 2 per trajectory;
    action ensembles are already in action coordinates and pass through.
    """
    states = ensemble.states_at(tau)
    if np.iscomplexobj(states):
        return EmpiricalMeasure(actions(states))
    return EmpiricalMeasure(np.asarray(states, dtype=np.float64))
