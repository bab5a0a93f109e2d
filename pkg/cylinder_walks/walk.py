import json
import struct
from bisect import bisect_right
import numpy as np
from .zoo import CylinderView
from .utils import NpEncoder, as_rng

TRAJECTORY_MAGIC = b"CWTJ"
TRAJECTORY_VERSION = 1

# number of steps drawn at a time when the stopping index is not known
CHUNK = 4096


class Trajectory:
    """Path of a random walk on a graph or on a cylinder

    Parameters
    ----------
    space : WeightedGraph or CylinderView
        The graph the walk lives on

    vertices : numpy.ndarray
        Base vertex ids ``X_0, ..., X_n`` (the base component on a cylinder)

    heights : numpy.ndarray
        Heights of the skeleton on a cylinder, None on a plain graph

    exponentials : numpy.ndarray
        Standard exponential draws ``e_1, ..., e_{n+1}`` of a continuous run,
        None for a discrete run. The last draw belongs to the holding time
        that straddles the horizon

    seed : int
        Reproducibility token. Default is None

    horizon : float
        Time horizon of a continuous run. Default is None

    Attributes
    ----------
    space, vertices, heights, exponentials, seed, horizon
        as above
    """

    def __init__(
        self, space, vertices, heights=None, exponentials=None, seed=None, horizon=None
    ):
        self.space = space
        self.vertices = np.asarray(vertices, dtype=np.int64)
        self.heights = None if heights is None else np.asarray(heights, dtype=np.int64)
        self.exponentials = (
            None if exponentials is None else np.asarray(exponentials, dtype=float)
        )
        self.seed = seed
        self.horizon = horizon

    def __repr__(self):
        kind = "continuous" if self.is_continuous else "discrete"
        return (
            f"<cylinder_walks.walk.Trajectory {kind} steps:{self.steps} "
            f"seed:{self.seed}>\n"
        )

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return False

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return np.array_equal(a, b)

        return (
            same(self.vertices, other.vertices)
            and same(self.heights, other.heights)
            and same(self.exponentials, other.exponentials)
            and self.horizon == other.horizon
        )

    def __hash__(self):
        return hash((self.steps, self.seed))

    @property
    def steps(self):
        return len(self.vertices) - 1

    @property
    def is_cylinder(self):
        return self.heights is not None

    @property
    def is_continuous(self):
        return self.exponentials is not None

    def vertex(self, k):
        """Vertex ``X_k``, a pair (y, z) on a cylinder"""
        if self.is_cylinder:
            return int(self.vertices[k]), int(self.heights[k])
        return int(self.vertices[k])

    def keys(self):
        if self.is_cylinder:
            return list(zip(self.vertices.tolist(), self.heights.tolist()))
        return self.vertices.tolist()

    def rates(self):
        """Jump rate ``w_X`` at every skeleton vertex"""
        base = self.space.base if self.is_cylinder else self.space
        rates = base.vertex_weights[self.vertices]
        return rates + 1.0 if self.is_cylinder else rates

    @property
    def holding_times(self):
        """``e_{k+1} / w_{X_k}`` for k = 0..n"""
        if not self.is_continuous:
            return None
        return self.exponentials / self.rates()[: len(self.exponentials)]

    @property
    def jump_times(self):
        """Times ``sigma_1 <= ... <= sigma_n`` of the jumps within the horizon"""
        if not self.is_continuous:
            return None
        return np.cumsum(self.holding_times)[: self.steps]

    def eta(self, t):
        """Number of jumps up to time `t`

        Raises
        ------
        ValueError
            When `t` is negative or beyond the horizon
        """
        if t < 0 or (self.horizon is not None and t > self.horizon):
            raise ValueError(f"Time {t} outside [0, {self.horizon}]")
        return int(np.searchsorted(self.jump_times, t, side="right"))

    @property
    def height_moves(self):
        """Boolean array marking the steps that change the height"""
        if not self.is_cylinder:
            return np.zeros(self.steps, dtype=bool)
        return self.heights[1:] != self.heights[:-1]

    def eta_split(self, t):
        """Jumps up to time `t` split into (base jumps, height jumps)"""
        n = self.eta(t)
        height = int(self.height_moves[:n].sum())
        return n - height, height

    def z_skeleton(self):
        """Heights visited by the height component, in the order of its own
        jumps, together with the step index of each height move"""
        moves = np.flatnonzero(self.height_moves) + 1
        return self.heights[np.concatenate([[0], moves])], moves

    def summary(self, passages=None, local_times=None):
        """JSON-ready record of the run and the requested functionals"""
        return {
            "seed": self.seed,
            "steps": self.steps,
            "horizon": self.horizon,
            "passages": {k: v.to_dict() for k, v in (passages or {}).items()},
            "local_times": {
                str(k): v.to_dict() for k, v in (local_times or {}).items()
            },
        }

    def to_json(self, passages=None, local_times=None):
        return json.dumps(self.summary(passages, local_times), cls=NpEncoder)


class _Stepper:
    """One discrete step from a vertex given a uniform draw ``u``.
    On a cylinder the walk moves in the base with probability
    ``w_y / (w_y + 1)`` and otherwise up or down with equal probability."""

    def __init__(self, space):
        self.cylinder = isinstance(space, CylinderView)
        base = space.base if self.cylinder else space
        indptr, indices, keys = base.step_table()
        self.base = base
        self.indptr = indptr.tolist()
        self.indices = indices.tolist()
        self.keys = keys.tolist()
        weights = base.vertex_weights
        self.rates = (weights + 1.0 if self.cylinder else weights).tolist()
        self.base_share = (weights / (weights + 1.0)).tolist()

    def check_start(self, start):
        if self.cylinder:
            y, z = start
            return self.base.check_vertex(y), int(z)
        return self.base.check_vertex(start), 0

    def base_step(self, y, u):
        k = bisect_right(self.keys, y + u)
        return self.indices[min(k, self.indptr[y + 1] - 1)]

    def step(self, y, z, u):
        if not self.cylinder:
            return self.base_step(y, u), z
        q = self.base_share[y]
        if u < q:
            return self.base_step(y, u / q), z
        return y, z + 1 if (u - q) < 0.5 * (1.0 - q) else z - 1


def run_discrete(space, start, steps, seed=0):
    """Run the discrete-time walk with ``p(y, y') = w(y, y') / w_y``

    Parameters
    ----------
    space : WeightedGraph or CylinderView

    start : int or tuple
        vertex id, or (y, z) on a cylinder

    steps : int
        number of steps, at least 0

    seed : int or numpy.random.Generator
        Default is 0

    Raises
    ------
    ValueError
        When `steps` is negative

    IndexError
        When `start` is not a vertex

    Returns
    -------
    Trajectory
    """
    if steps < 0:
        raise ValueError(f"Number of steps must be non-negative, got {steps}")
    stepper = _Stepper(space)
    y, z = stepper.check_start(start)
    rng = as_rng(seed, "walk", "discrete")
    vertices, heights = [y], [z]
    for u in rng.random(steps).tolist():
        y, z = stepper.step(y, z, u)
        vertices.append(y)
        heights.append(z)
    return Trajectory(
        space,
        vertices,
        heights if stepper.cylinder else None,
        seed=None if isinstance(seed, np.random.Generator) else seed,
    )


def run_continuous(space, start, horizon, seed=0):
    """Run the continuous-time walk with jump rate ``w_y`` up to `horizon`.
    The holding time at ``X_k`` is ``e_{k+1} / w_{X_k}`` for stored standard
    exponential draws, so the skeleton has the law of `run_discrete`

    Parameters
    ----------
    space : WeightedGraph or CylinderView

    start : int or tuple

    horizon : float
        non-negative time horizon

    seed : int or numpy.random.Generator
        Default is 0

    Raises
    ------
    ValueError
        When `horizon` is negative

    Returns
    -------
    Trajectory
    """
    if horizon < 0:
        raise ValueError(f"Horizon must be non-negative, got {horizon}")
    stepper = _Stepper(space)
    y, z = stepper.check_start(start)
    rng = as_rng(seed, "walk", "continuous")
    vertices, heights, draws = [y], [z], []
    clock = 0.0
    while True:
        uniforms = rng.random(CHUNK).tolist()
        exponentials = rng.standard_exponential(CHUNK).tolist()
        for u, e in zip(uniforms, exponentials):
            draws.append(e)
            clock += e / stepper.rates[y]
            if clock > horizon:
                return Trajectory(
                    space,
                    vertices,
                    heights if stepper.cylinder else None,
                    exponentials=draws,
                    seed=None if isinstance(seed, np.random.Generator) else seed,
                    horizon=float(horizon),
                )
            y, z = stepper.step(y, z, u)
            vertices.append(y)
            heights.append(z)


class SandwichCount:
    """Jump counts ``eta^{c0}_t <= eta_t <= eta^{c1}_t`` of one coupled path"""

    def __init__(self, t, lower, middle, upper):
        self.t = t
        self.lower = lower
        self.middle = middle
        self.upper = upper

    def __repr__(self):
        return (
            f"<cylinder_walks.walk.SandwichCount t:{self.t} lower:{self.lower} "
            f"middle:{self.middle} upper:{self.upper}>\n"
        )

    @property
    def holds(self):
        return self.lower <= self.middle <= self.upper


def rate_bounds(space):
    """(c0, c1): smallest and largest jump rate of `space`"""
    if isinstance(space, CylinderView):
        rates = space.base_weights + 1.0
    else:
        rates = space.vertex_weights
    return float(rates.min()), float(rates.max())


def poisson_sandwich(space, start, t, seed=0):
    """Couple the walk's jump process with two Poisson processes through
    the same exponential draws. A Poisson process of rate c counts
    ``sup{n : e_1 + ... + e_n <= c t}``; with ``c0 <= w_y <= c1`` the walk's
    count lies in between on every path

    Returns
    -------
    SandwichCount
    """
    c0, c1 = rate_bounds(space)
    # long enough for the rate-c1 count to be complete at time t
    traj = run_continuous(space, start, t * c1 / c0, seed=seed)
    sums = np.cumsum(traj.exponentials)
    lower = int(np.searchsorted(sums, c0 * t, side="right"))
    upper = int(np.searchsorted(sums, c1 * t, side="right"))
    return SandwichCount(t, lower, traj.eta(t), upper)


class PassageReport:
    """Entrance, exit and return of a trajectory for one target set.
    Indices refer to the skeleton, times to the continuous clock; None means
    not reached within the run

    Attributes
    ----------
    entrance, exit, return_ : int or None
        ``H_A``, ``T_A`` and ``H~_A`` as step indices

    entrance_time, exit_time, return_time : float or None
        continuous-time images, None for discrete runs
    """

    def __init__(self, name, entrance, exit, return_, times=None):
        self.name = name
        self.entrance = entrance
        self.exit = exit
        self.return_ = return_
        times = times or {}
        self.entrance_time = times.get("entrance")
        self.exit_time = times.get("exit")
        self.return_time = times.get("return")

    def __repr__(self):
        return (
            f"<cylinder_walks.walk.PassageReport name:{self.name} "
            f"entrance:{self.entrance} exit:{self.exit} return:{self.return_}>\n"
        )

    def to_dict(self):
        return {
            "entrance": self.entrance,
            "exit": self.exit,
            "return": self.return_,
            "entrance_time": self.entrance_time,
            "exit_time": self.exit_time,
            "return_time": self.return_time,
        }


class LocalTimeRecord:
    """Local times of the height component at one site

    Attributes
    ----------
    site : int

    L : int
        steps ``l < n`` of the full skeleton spent at the site

    L_hat : int
        steps of the height skeleton spent at the site

    L_cont : float or None
        occupation time of the site up to the n-th jump, by default up to
        the horizon
    """

    def __init__(self, site, L, L_hat, L_cont=None):
        self.site = site
        self.L = L
        self.L_hat = L_hat
        self.L_cont = L_cont

    def __repr__(self):
        return (
            f"<cylinder_walks.walk.LocalTimeRecord site:{self.site} L:{self.L} "
            f"L_hat:{self.L_hat} L_cont:{self.L_cont}>\n"
        )

    def to_dict(self):
        return {"L": self.L, "L_hat": self.L_hat, "L_cont": self.L_cont}


def _first(indices):
    return int(indices[0]) if len(indices) else None


def passage_and_local_times(traj, targets=None, sites=None, n=None):
    """Passage indices for each target set and local times for each height

    Parameters
    ----------
    traj : Trajectory

    targets : dict
        name -> iterable of vertices (pairs (y, z) on a cylinder).
        Default is None

    sites : list of int
        heights at which local times are taken. Default is None

    n : int
        number of skeleton steps to account for. Default is all steps

    Raises
    ------
    ValueError
        When sites are requested for a walk that is not on a cylinder

    Returns
    -------
    tuple
        (dict of PassageReport, dict of LocalTimeRecord)
    """
    n = traj.steps if n is None else int(n)
    keys = traj.keys()[: n + 1]
    times = None
    if traj.is_continuous:
        times = np.concatenate([[0.0], traj.jump_times])

    passages = {}
    for name, target in (targets or {}).items():
        target = set(target)
        inside = np.fromiter((k in target for k in keys), dtype=bool, count=len(keys))
        entrance = _first(np.flatnonzero(inside))
        exit = _first(np.flatnonzero(~inside))
        return_ = _first(np.flatnonzero(inside[1:]) + 1)
        stamps = None
        if times is not None:
            stamps = {
                label: None if idx is None else float(times[idx])
                for label, idx in (
                    ("entrance", entrance),
                    ("exit", exit),
                    ("return", return_),
                )
            }
        passages[name] = PassageReport(name, entrance, exit, return_, stamps)

    records = {}
    if sites:
        if not traj.is_cylinder:
            raise ValueError("Local times need a walk on a cylinder")
        heights = traj.heights[: n + 1]
        z_skeleton, moves = traj.z_skeleton()
        n_z = int(np.sum(moves <= n))
        # continuous local times run to the n-th jump, or to the horizon
        t_n = None
        if traj.is_continuous and n < traj.steps:
            t_n = float(times[n])
        for z in sites:
            L_cont = None
            if traj.is_continuous:
                L_cont = occupation_time(traj, z, t_n)
            records[z] = LocalTimeRecord(
                z,
                int(np.sum(heights[:n] == z)),
                int(np.sum(z_skeleton[:n_z] == z)),
                L_cont,
            )
    return passages, records


def occupation_time(traj, z, t=None):
    """Time spent at height `z` during ``[0, t]``, by default up to the horizon"""
    t = traj.horizon if t is None else t
    n = traj.eta(t)
    starts = np.concatenate([[0.0], traj.jump_times[:n]])
    ends = np.concatenate([traj.jump_times[:n], [t]])
    return float(np.sum((ends - starts)[traj.heights[: n + 1] == z]))


def local_time_by_blocks(traj, z, n=None):
    """Local time at `z` rebuilt from the height skeleton alone:
    each height ``Z_k`` is held for one step plus the ``m_k`` base moves that
    follow the k-th height move, and the last block is cut at step `n`

    Returns
    -------
    int
        equals ``L^z_n`` on every path
    """
    n = traj.steps if n is None else int(n)
    z_skeleton, moves = traj.z_skeleton()
    moves = moves[moves <= n]
    starts = np.concatenate([[0], moves])
    ends = np.concatenate([moves, [n]])
    base_moves = ends - starts - 1
    base_moves[-1] = n - starts[-1]
    held = z_skeleton[: len(starts)] == z
    complete = np.sum(held[:-1] * (1 + base_moves[:-1]))
    return int(complete + held[-1] * base_moves[-1])


def ruin_probability(z, low, high):
    """Probability that the height walk started at `z` leaves ``(low, high)``
    at `high`"""
    return (z - low) / (high - low)


def conditioned_excursion(
    base, interval, z, z_exit, inner=None, seed=0, max_attempts=100000
):
    """Sample a cylinder trajectory started at a uniform base vertex and
    height `z`, run until the height leaves the open `interval`, conditioned
    on leaving at `z_exit`. Sampling is by rejection.

    Parameters
    ----------
    base : WeightedGraph

    interval : tuple
        (low, high), the open interval the height must leave

    z : int
        starting height, inside the interval

    z_exit : int
        required exit height, `low` or `high`

    inner : tuple
        (a, b), the closed interval of entry heights inside `interval`.
        When given, `z` must be `a` or `b`, the heights of the inner interval
        next to its complement. Default is None

    seed : int or numpy.random.Generator
        Default is 0

    max_attempts : int
        Default is 100000

    Raises
    ------
    ValueError
        "unreachable exit" when `z_exit` cannot be the exit height from `z`;
        also when `inner` does not fit in `interval` or `z` is not one of its
        ends

    RuntimeError
        When no attempt is accepted within `max_attempts`

    Returns
    -------
    tuple
        (Trajectory, number of attempts)
    """
    low, high = interval
    if inner is not None:
        a, b = inner
        if not (low < a <= b < high):
            raise ValueError(f"inner interval {inner} is not inside {interval}")
        if z not in (a, b):
            raise ValueError(f"entry height {z} is not on the boundary of {inner}")
    if not (low < z < high) or z_exit not in (low, high):
        raise ValueError("unreachable exit")
    view = CylinderView(base)
    stepper = _Stepper(view)
    rng = as_rng(seed, "walk", "excursion")
    for attempt in range(1, max_attempts + 1):
        y = int(rng.integers(base.n))
        vertices, heights = excursion_path(stepper, y, z, low, high, rng)
        if heights[-1] == z_exit:
            return Trajectory(view, vertices, heights), attempt
    raise RuntimeError(f"No accepted excursion in {max_attempts} attempts")


def excursion_path(stepper, y, z, low, high, rng):
    """Run from (`y`, `z`) until the height hits `low` or `high`"""
    vertices, heights = [y], [z]
    while True:
        for u in rng.random(CHUNK).tolist():
            y, z = stepper.step(y, z, u)
            vertices.append(y)
            heights.append(z)
            if z <= low or z >= high:
                return vertices, heights


class WalkEnsemble:
    """Many independent walkers on one cylinder, stepped synchronously with
    vectorized draws. Observers are called after every step and accumulate
    functionals, so long runs never store paths.

    Parameters
    ----------
    view : CylinderView

    y, z : numpy.ndarray
        starting base ids and heights

    rng : numpy.random.Generator

    horizon : float
        When given, every walker carries its own continuous clock and stops
        moving once its next jump would exceed the horizon. Default is None

    Attributes
    ----------
    y, z : numpy.ndarray
        current positions

    clock : numpy.ndarray or None
        continuous clocks

    active : numpy.ndarray
        walkers still moving

    jumps, height_jumps : numpy.ndarray
        jump counters
    """

    def __init__(self, view, y, z, rng, horizon=None):
        self.view = view
        self.y = np.array(y, dtype=np.int64)
        self.z = np.array(z, dtype=np.int64)
        self.rng = rng
        self.horizon = horizon
        self.indptr, self.indices, self.keys = view.base.step_table()
        weights = view.base_weights
        self.base_share = weights / (weights + 1.0)
        self.rates = weights + 1.0
        self.active = np.ones(len(self.y), dtype=bool)
        self.jumps = np.zeros(len(self.y), dtype=np.int64)
        self.height_jumps = np.zeros(len(self.y), dtype=np.int64)
        self.clock = None
        self.pending = None
        if horizon is not None:
            self.clock = np.zeros(len(self.y))
            # first holding times
            self.pending = rng.standard_exponential(len(self.y)) / self.rates[self.y]
            self.active = self.pending <= horizon

    def __len__(self):
        return len(self.y)

    def step(self):
        """Move every active walker once

        Returns
        -------
        tuple
            (mask of walkers that moved, mask of walkers that changed height)
        """
        moving = self.active.copy()
        idx = np.flatnonzero(moving)
        u = self.rng.random(len(idx))
        y = self.y[idx]
        q = self.base_share[y]
        in_base = u < q
        new_y = y.copy()
        b = np.flatnonzero(in_base)
        if len(b):
            yb = y[b]
            k = np.searchsorted(self.keys, yb + u[b] / q[b], side="right")
            new_y[b] = self.indices[np.minimum(k, self.indptr[yb + 1] - 1)]
        up = (u - q) < 0.5 * (1.0 - q)
        self.y[idx] = new_y
        self.z[idx] += np.where(in_base, 0, np.where(up, 1, -1))
        self.jumps[idx] += 1
        height = np.zeros(len(self.y), dtype=bool)
        height[idx] = ~in_base
        self.height_jumps += height
        if self.horizon is not None:
            self.clock[idx] += self.pending[idx]
            self.pending[idx] = (
                self.rng.standard_exponential(len(idx)) / self.rates[self.y[idx]]
            )
            self.active = self.clock + self.pending <= self.horizon
        return moving, height

    def run(self, steps=None, observers=()):
        """Step `steps` times, or until every clock has passed the horizon,
        calling ``observer.observe(ensemble, moved, height_moved)`` after
        every step"""
        for observer in observers:
            observer.start(self)
        count = 0
        while (steps is None or count < steps) and self.active.any():
            moved, height_moved = self.step()
            for observer in observers:
                observer.observe(self, moved, height_moved)
            count += 1
        return count


class LocalTimeObserver:
    """Streaming step-count local times ``L^z`` for a list of heights.
    The position before each step is counted, as in ``l < n``."""

    def __init__(self, sites):
        self.sites = np.asarray(sites, dtype=np.int64)
        self.counts = None

    def start(self, ensemble):
        self.counts = np.zeros((len(ensemble), len(self.sites)), dtype=np.int64)
        self._previous = ensemble.z.copy()

    def observe(self, ensemble, moved, height_moved):
        self.counts[moved] += self._previous[moved, None] == self.sites[None, :]
        self._previous = ensemble.z.copy()


class SkeletonLocalTimeObserver:
    """Streaming local times ``L^z`` of the height skeleton: the height left
    by every height move is counted"""

    def __init__(self, sites):
        self.sites = np.asarray(sites, dtype=np.int64)
        self.counts = None

    def start(self, ensemble):
        self.counts = np.zeros((len(ensemble), len(self.sites)), dtype=np.int64)
        self._previous = ensemble.z.copy()

    def observe(self, ensemble, moved, height_moved):
        self.counts[height_moved] += (
            self._previous[height_moved, None] == self.sites[None, :]
        )
        self._previous = ensemble.z.copy()


class JumpClockObserver:
    """Base jumps made up to each of a list of times, for continuous runs"""

    def __init__(self, times):
        self.times = np.asarray(times, dtype=float)
        self.counts = None

    def start(self, ensemble):
        if ensemble.clock is None:
            raise ValueError("Jump clocks need a continuous ensemble")
        self.counts = np.zeros((len(ensemble), len(self.times)), dtype=np.int64)

    def observe(self, ensemble, moved, height_moved):
        base = moved & ~height_moved
        self.counts[base] += ensemble.clock[base, None] <= self.times[None, :]


class HitObserver:
    """Streaming indicator of visits to a finite set of cylinder vertices,
    start included. ``hits[walker, j]`` refers to ``vertices[j]``."""

    def __init__(self, vertices):
        self.vertices = [(int(y), int(z)) for y, z in vertices]
        self.hits = None

    def start(self, ensemble):
        self.hits = np.zeros((len(ensemble), len(self.vertices)), dtype=bool)
        n_base = ensemble.view.base.n
        if self.vertices:
            heights = [z for _, z in self.vertices]
            self._low, self._high = min(heights), max(heights)
            # -1 marks (height, base vertex) cells outside the set
            self._table = np.full((self._high - self._low + 1, n_base), -1)
            for j, (y, z) in enumerate(self.vertices):
                self._table[z - self._low, y] = j
        self._mark(ensemble, np.ones(len(ensemble), dtype=bool))

    def _mark(self, ensemble, mask):
        if not self.vertices:
            return
        z = ensemble.z
        near = np.flatnonzero(mask & (z >= self._low) & (z <= self._high))
        j = self._table[z[near] - self._low, ensemble.y[near]]
        hit = j >= 0
        self.hits[near[hit], j[hit]] = True

    def observe(self, ensemble, moved, height_moved):
        self._mark(ensemble, moved)


def z_visit_probability(z, target, s, t, trials, seed=0):
    """Monte Carlo estimate of ``P_z[target in Z_[s, t]]`` for the
    continuous-time simple random walk on Z with jump rate 1

    Returns
    -------
    tuple
        (estimate, standard error)
    """
    rng = as_rng(seed, "walk", "z-visit")
    jumps_s = rng.poisson(s, trials)
    jumps_t = jumps_s + rng.poisson(t - s, trials)
    hits = 0
    for a, b in zip(jumps_s.tolist(), jumps_t.tolist()):
        path = z + np.concatenate([[0], np.cumsum(rng.choice((-1, 1), size=b))])
        hits += bool(np.any(path[a : b + 1] == target))
    p = hits / trials
    return p, float(np.sqrt(max(p * (1 - p), 1e-12) / trials))


def _write_varint(out, value):
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return


def _read_varint(data, pos):
    shift, value = 0, 0
    while True:
        byte = data[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, pos
        shift += 7


def dump_trajectory(traj, path):
    """Write `traj` as binary frames: a varint vertex id, a zigzag varint
    height on cylinders and a float64 exponential draw on continuous runs"""
    out = bytearray(TRAJECTORY_MAGIC)
    flags = int(traj.is_cylinder) | (int(traj.is_continuous) << 1)
    out += struct.pack(
        "<BBqd",
        TRAJECTORY_VERSION,
        flags,
        -1 if traj.seed is None else int(traj.seed),
        -1.0 if traj.horizon is None else float(traj.horizon),
    )
    n_draws = 0 if traj.exponentials is None else len(traj.exponentials)
    _write_varint(out, len(traj.vertices))
    _write_varint(out, n_draws)
    for k, y in enumerate(traj.vertices.tolist()):
        _write_varint(out, y)
        if traj.is_cylinder:
            z = int(traj.heights[k])
            _write_varint(out, (z << 1) ^ (z >> 63))
    if n_draws:
        out += traj.exponentials.astype("<f8").tobytes()
    with open(path, "wb") as file:
        file.write(bytes(out))


def load_trajectory(path, space):
    """Read a trajectory written by `dump_trajectory`

    Raises
    ------
    ValueError
        When the file is not a trajectory dump
    """
    with open(path, "rb") as file:
        data = file.read()
    if data[:4] != TRAJECTORY_MAGIC:
        raise ValueError(f"{path} is not a trajectory file")
    version, flags, seed, horizon = struct.unpack_from("<BBqd", data, 4)
    if version != TRAJECTORY_VERSION:
        raise ValueError(f"Unsupported trajectory version {version}")
    pos = 4 + struct.calcsize("<BBqd")
    n_frames, pos = _read_varint(data, pos)
    n_draws, pos = _read_varint(data, pos)
    vertices, heights = [], []
    for _ in range(n_frames):
        y, pos = _read_varint(data, pos)
        vertices.append(y)
        if flags & 1:
            z, pos = _read_varint(data, pos)
            heights.append((z >> 1) ^ -(z & 1))
    draws = None
    if flags & 2:
        draws = np.frombuffer(data, dtype="<f8", count=n_draws, offset=pos).copy()
    return Trajectory(
        space,
        vertices,
        heights if flags & 1 else None,
        exponentials=draws,
        seed=None if seed == -1 else seed,
        horizon=None if horizon < 0 else horizon,
    )
