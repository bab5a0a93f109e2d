import json
import math
import warnings
import numpy as np
import pandas as pd
from .utils import NpEncoder, as_rng

# heights are processed in blocks of this many steps
BLOCK = 1 << 20
DEFAULT_RATIO = 10


def _balls_intersect(c1, c2, radius):
    lo, hi = min(c1, c2), max(c1, c2)
    return math.floor(lo + radius) >= math.ceil(hi - radius)


def _greedy_cover(points, radius):
    """Leftmost-first cover of sorted integer points by balls of `radius`"""
    width = 2 * math.floor(radius)
    centers, i = [], 0
    while i < len(points):
        j = i
        while j + 1 < len(points) and points[j + 1] - points[i] <= width:
            j += 1
        centers.append((points[i] + points[j]) // 2)
        i = j + 1
    return centers


def cover_points(points, a, b):
    """Cover integer points by balls of a common radius ``p`` such that the
    balls of radius ``b p`` are disjoint, trying ``p = b^(2m) a`` for
    m = 0, 1, ... and merging when inflated balls overlap

    Parameters
    ----------
    points : list of int

    a : float
        smallest radius, at least 1

    b : float
        inflation factor, at least 2

    Raises
    ------
    ValueError
        When `points` is empty, `a` < 1 or `b` < 2

    Returns
    -------
    tuple
        (list of centers, radius p) with at most ``len(points)`` centers
    """
    if len(points) == 0:
        raise ValueError("Cannot cover an empty set of points")
    if a < 1 or b < 2:
        raise ValueError(f"Need a >= 1 and b >= 2, got a={a}, b={b}")
    points = sorted(set(int(z) for z in points))
    for m in range(len(points) + 1):
        radius = b ** (2 * m) * a
        centers = _greedy_cover(points, radius)
        inflated = b * radius
        if all(
            not _balls_intersect(c1, c2, inflated)
            for c1, c2 in zip(centers[:-1], centers[1:])
        ):
            return centers, radius
    raise RuntimeError("Cover did not converge")


class GridSpec:
    """Points ``z*_l`` with radii ``d <= h`` defining the grid of heights
    ``G* ∪ G0``, where ``G0`` holds the multiples of ``2h`` at distance at
    least ``2h`` from every ``z*_l``. ``C`` and ``O`` are the grid thickened
    by ``[-d, d]`` and ``(-h, h)``.

    Attributes
    ----------
    z_star : numpy.ndarray
        sorted points

    d, h : int

    targets : list of int

    flags : dict
        s1 band membership, s2, s3 and whether the radius ratio was overridden
    """

    def __init__(self, z_star, d, h, targets=(), flags=None, params=None):
        if not 1 <= d <= h:
            raise ValueError(f"Need 1 <= d <= h, got d={d}, h={h}")
        self.z_star = np.sort(np.asarray(z_star, dtype=np.int64))
        self.d = int(d)
        self.h = int(h)
        self.targets = [int(z) for z in targets]
        self.flags = {} if flags is None else flags
        self.params = {} if params is None else params

    def __repr__(self):
        return (
            f"<cylinder_walks.grid.GridSpec z_star:{self.z_star.tolist()} "
            f"d:{self.d} h:{self.h} flags:{self.flags}>\n"
        )

    def distance(self, z):
        """Distance from heights `z` to the grid"""
        z = np.asarray(z, dtype=np.int64)
        step = 2 * self.h
        g0 = np.round(z / step).astype(np.int64) * step
        to_star = np.abs(z[..., None] - self.z_star).min(axis=-1)
        g0_star = np.abs(g0[..., None] - self.z_star).min(axis=-1)
        # other multiples of 2h are at distance >= h, which never matters below
        to_g0 = np.where(g0_star >= step, np.abs(z - g0), np.iinfo(np.int64).max)
        return np.minimum(to_star, to_g0)

    def in_C(self, z):
        return self.distance(z) <= self.d

    def in_O(self, z):
        return self.distance(z) < self.h

    def interval_of(self, z):
        """Index l with ``|z - z*_l| <= d``, -1 when there is none"""
        z = np.asarray(z, dtype=np.int64)
        gaps = np.abs(z[..., None] - self.z_star)
        nearest = gaps.argmin(axis=-1)
        return np.where(gaps.min(axis=-1) <= self.d, nearest, -1)

    def check(self):
        """Evaluate the hard constraints on spacing and target coverage"""
        spacing = np.diff(self.z_star)
        s2 = bool(len(spacing) == 0 or spacing.min() >= 100 * self.h)
        half = self.d // 2
        s3 = all(np.abs(self.z_star - z).min() <= half for z in self.targets)
        return s2, s3

    def to_dict(self):
        return {
            "z_star": self.z_star.tolist(),
            "d": self.d,
            "h": self.h,
            "targets": self.targets,
            "flags": self.flags,
            "params": self.params,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), cls=NpEncoder, sort_keys=True)


def _extra_points(z_star, count, h):
    """Place `count` additional points at multiples of 2h to the left"""
    points = list(z_star)
    step = 2 * h
    for _ in range(count):
        candidate = ((min(points) - 100 * h) // step) * step
        points.append(candidate)
    return points


def build_grid(
    targets, size, lambda_, eps, M=None, ratio=DEFAULT_RATIO, verbose=False
):
    """Choose grid points and radii for the target heights following the
    covering construction with ``a = ceil(lambda^-1/2 |G|^(eps/8))`` and
    ``b = [(|G|^(eps/8))^(1/(2M+1))]``, ``d = [2p]`` and ``h = [bp/100]``.
    When ``h < ratio * d`` the cover is recomputed with ``b`` raised to
    ``100 ratio + 1`` and ``h`` set to ``ratio * d``; the override is flagged.

    Parameters
    ----------
    targets : list of int
        heights ``z_1, ..., z_M``

    size : int
        ``|G|``, at least 2

    lambda_ : float
        spectral gap, positive

    eps : float
        in (0, 1)

    M : int
        number of grid points. Default is the number of targets

    ratio : int
        smallest accepted ``h/d``. Default is 10

    verbose : bool
        Default is False

    Raises
    ------
    ValueError
        When the parameters are out of range or the spacing and coverage
        constraints cannot be met

    Returns
    -------
    GridSpec
    """
    if size < 2 or lambda_ <= 0 or not 0 < eps < 1:
        raise ValueError(
            f"Need |G| >= 2, lambda > 0 and 0 < eps < 1, "
            f"got {size}, {lambda_}, {eps}"
        )
    targets = [int(z) for z in targets]
    M = len(set(targets)) if M is None else int(M)
    scale = lambda_**-0.5
    a = math.ceil(scale * size ** (eps / 8))
    b = max(2, math.floor((size ** (eps / 8)) ** (1.0 / (2 * M + 1))))
    centers, p = cover_points(targets, a, b)
    d, h = math.floor(2 * p), math.floor(b * p / 100)
    override = h < ratio * d
    if override:
        b = max(b, 100 * ratio + 1)
        centers, p = cover_points(targets, a, b)
        d = math.floor(2 * p)
        h = ratio * d
        warnings.warn(
            f"Radius ratio h/d below {ratio} at |G|={size}; "
            f"using b={b}, d={d}, h={h}"
        )
    z_star = _extra_points(centers, max(0, M - len(centers)), h)
    s1 = bool(scale * size ** (eps / 8) <= d and h <= scale * size ** (eps / 4))
    grid = GridSpec(
        z_star,
        d,
        h,
        targets=targets,
        params={"a": a, "b": b, "p": p, "size": size, "lambda": lambda_, "eps": eps},
    )
    s2, s3 = grid.check()
    grid.flags = {"s1": s1, "s2": s2, "s3": s3, "override": override}
    if not (s2 and s3):
        raise ValueError(
            f"Grid violates {'spacing' if not s2 else 'coverage'}: {grid.to_dict()}"
        )
    if verbose:
        print(f"grid for |G|={size}: z*={grid.z_star.tolist()} d={d} h={h}")
    return grid


def excursion_constants(d, h, alpha, size):
    """``t = (h-d)^2 + h^2 - d^2``, ``sigma = [alpha |G|^2 / t]`` and
    ``k_* = sigma - [sigma^3/4]``, ``k^* = sigma + [sigma^3/4]``"""
    t = (h - d) ** 2 + h**2 - d**2
    sigma = int(alpha * size**2 // t)
    spread = int(math.floor(sigma**0.75))
    return t, sigma, sigma - spread, sigma + spread


class ExcursionTracker:
    """Streaming extraction of the return indices ``R_k`` into C and the
    departure indices ``D_k`` from O. Heights are fed in consecutive blocks."""

    OUTSIDE, INSIDE = 2, 1

    def __init__(self, grid):
        self.grid = grid
        self.returns = []
        self.departures = []
        self.entries = []
        self.offset = 0
        # a walk that starts outside C has no departure to record yet
        self._last = self.OUTSIDE

    def feed(self, heights):
        heights = np.asarray(heights, dtype=np.int64)
        dist = self.grid.distance(heights)
        kinds = np.where(dist <= self.grid.d, self.INSIDE, 0)
        kinds = np.where(dist >= self.grid.h, self.OUTSIDE, kinds)
        positions = np.flatnonzero(kinds)
        kinds = kinds[positions]
        if len(kinds):
            starts = np.ones(len(kinds), dtype=bool)
            starts[1:] = kinds[1:] != kinds[:-1]
            starts[0] = kinds[0] != self._last
            r = positions[starts & (kinds == self.INSIDE)]
            self.returns.extend((r + self.offset).tolist())
            self.entries.extend(heights[r].tolist())
            dep = positions[starts & (kinds == self.OUTSIDE)]
            self.departures.extend((dep + self.offset).tolist())
            self._last = kinds[-1]
        self.offset += len(heights)

    def result(self, alpha, size, times=None):
        return ExcursionDecomposition(
            self.returns,
            self.departures,
            self.entries,
            self.grid,
            alpha,
            size,
            length=self.offset,
            times=times,
        )


class ExcursionDecomposition:
    """Returns ``R_1 < D_1 < R_2 < ...`` of a height skeleton with the
    excursion constants and per-interval entry counts

    Attributes
    ----------
    returns, departures : numpy.ndarray

    entries : numpy.ndarray
        heights ``Z_{R_k}``

    t, sigma, k_lower, k_upper : int
        ``t_N``, ``sigma_N``, ``k_*`` and ``k^*``

    truncated : bool
        the skeleton ended before ``D_{k^*}``

    empty : bool
        the skeleton never entered C

    interval_counts : numpy.ndarray
        ``sum_{k <= k_*} 1{Z_{R_k} in I_l}`` for every grid point
    """

    def __init__(
        self, returns, departures, entries, grid, alpha, size, length, times=None
    ):
        self.returns = np.asarray(returns, dtype=np.int64)
        self.departures = np.asarray(departures, dtype=np.int64)
        self.entries = np.asarray(entries, dtype=np.int64)
        self.grid = grid
        self.length = length
        self.t, self.sigma, self.k_lower, self.k_upper = excursion_constants(
            grid.d, grid.h, alpha, size
        )
        self.empty = len(self.returns) == 0
        self.truncated = len(self.departures) < self.k_upper
        if self.empty:
            warnings.warn("Height skeleton never entered C")
        intervals = grid.interval_of(self.entries[: self.k_lower])
        self.interval_counts = np.bincount(
            intervals[intervals >= 0], minlength=len(grid.z_star)
        )
        self.times = None if times is None else np.asarray(times, dtype=float)

    def __repr__(self):
        return (
            f"<cylinder_walks.grid.ExcursionDecomposition excursions:"
            f"{len(self.departures)} sigma:{self.sigma} truncated:{self.truncated}>\n"
        )

    def departure(self, k):
        """``D_k`` (1-based), None when it lies beyond the skeleton"""
        return int(self.departures[k - 1]) if 0 < k <= len(self.departures) else None

    def brackets(self, time):
        """Whether ``D_{k_*} <= time <= D_{k^*}``"""
        lower = self.departure(self.k_lower)
        upper = self.departure(self.k_upper)
        if lower is None or lower > time:
            return False
        return upper is None or upper >= time

    def continuous_images(self):
        """Continuous times of ``R_k`` and ``D_k``, given the jump times of the
        height process (entry k is the time of the k-th jump, entry 0 is 0)"""
        if self.times is None:
            raise ValueError("Jump times were not recorded")
        return self.times[self.returns], self.times[self.departures]

    def to_frame(self):
        n = len(self.departures)
        return pd.DataFrame(
            {
                "k": np.arange(1, len(self.returns) + 1),
                "R": self.returns,
                "D": np.concatenate(
                    [self.departures, np.full(len(self.returns) - n, -1)]
                ),
                "interval": self.grid.interval_of(self.entries),
            }
        )

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False)


def decompose_excursions(z_skeleton, grid, alpha, size, times=None):
    """Extract the excursions between C and the complement of O

    Parameters
    ----------
    z_skeleton : array_like
        heights of the height component in the order of its own jumps

    grid : GridSpec

    alpha : float

    size : int
        ``|G|``

    times : array_like
        jump times of the height component for continuous images.
        Default is None

    Returns
    -------
    ExcursionDecomposition
    """
    tracker = ExcursionTracker(grid)
    z_skeleton = np.asarray(z_skeleton, dtype=np.int64)
    for start in range(0, max(len(z_skeleton), 1), BLOCK):
        tracker.feed(z_skeleton[start : start + BLOCK])
    return tracker.result(alpha, size, times=times)


def synthetic_excursion_run(grid, alpha, size, trials, seed=0):
    """Simple random walks on Z from 0 for ``[alpha |G|^2]`` steps, reporting
    for each run whether ``D_{k_*} <= alpha |G|^2 <= D_{k^*}`` together with
    the scaled skeleton local times at the targets

    Returns
    -------
    pandas.DataFrame
        one row per trial
    """
    horizon = int(alpha * size**2)
    rows = []
    for trial in range(trials):
        rng = as_rng(seed, "grid", "synthetic", trial)
        tracker = ExcursionTracker(grid)
        position, done = 0, 0
        local = {z: 0 for z in grid.targets}
        while done <= horizon:
            n = min(BLOCK, horizon + 1 - done)
            steps = rng.integers(0, 2, size=n, dtype=np.int8) * 2 - 1
            heights = position + np.concatenate([[0], np.cumsum(steps[:-1])])
            tracker.feed(heights)
            # local times count the positions l < horizon
            counted = heights[: horizon - done]
            for z in local:
                local[z] += int(np.sum(counted == z))
            position = int(heights[-1] + steps[-1])
            done += n
        result = tracker.result(alpha, size)
        row = {"trial": trial, "brackets": result.brackets(horizon)}
        row["excursions"] = len(result.departures)
        row["D_lower"] = result.departure(result.k_lower) or -1
        row["k_lower"] = result.k_lower
        row["k_upper"] = result.k_upper
        for l, count in enumerate(result.interval_counts.tolist()):
            row[f"entries_{l}"] = count
        for z, value in local.items():
            row[f"local_{z}"] = value / size
        rows.append(row)
    return pd.DataFrame(rows)
