"""Escape probabilities, equilibrium measures and capacities of finite sets in
limit cylinders and in finite boxes, and the vacant set of random
interlacements on a finite window.

The capacity of ``V`` is ``sum_x P_x[no return to V] w_x`` with ``w_x = w_y + 1``
the cylinder weight. Limit cylinders are infinite, so they are handled through
a `CylinderWindow` of outer radius ``2 rho`` and a truncation radius ``rho``.
"""
import json
import warnings
import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse import linalg as splinalg
from .graph import WeightedGraph
from .utils import NpEncoder, Provenance, SolveMethod, as_rng, parse_enum
from .zoo import EDGE_WEIGHT, CylinderWindow

# direct factorization up to this many unknowns, conjugate gradients above
DIRECT_LIMIT = 200000
CG_TOL = 1e-10
MC_TRIALS = 20000
MAX_RELATIVE_WIDTH = 0.05
# decay exponents of the truncated resistance treated as non-summable or as
# immediate convergence
GAMMA_MIN = 0.25
GAMMA_MAX = 50.0
# factor on the extrapolated resistance beyond the outer frontier
TAIL_MARGIN = 2.0


class CapacityEstimate:
    """Capacity of a finite set with its bracket

    Attributes
    ----------
    value, lower, upper : float

    method : SolveMethod

    rho : int or None
        truncation radius, None for finite boxes

    outer : int or None
        radius of the window the value refers to

    se : float or None
        Monte Carlo standard error

    size : int
        number of vertices of the set
    """

    def __init__(
        self, value, lower, upper, method, rho=None, outer=None, se=None, size=0
    ):
        self.value = float(value)
        self.lower = float(lower)
        self.upper = float(upper)
        self.method = method
        self.rho = rho
        self.outer = outer
        self.se = se
        self.size = size

    def __repr__(self):
        return (
            f"<cylinder_walks.potential.CapacityEstimate value:{self.value:.6g} "
            f"bracket:[{self.lower:.6g}, {self.upper:.6g}] method:{self.method.name} "
            f"rho:{self.rho}>\n"
        )

    @property
    def width(self):
        return self.upper - self.lower

    @property
    def relative_width(self):
        return self.width / self.value if self.value > 0 else 0.0

    def to_dict(self):
        out = {
            "value": self.value,
            "lower": self.lower,
            "upper": self.upper,
            "rho": self.rho,
            "method": self.method.name,
        }
        if self.se is not None:
            out["se"] = self.se
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), cls=NpEncoder, sort_keys=True)


class EquilibriumMeasure:
    """Masses ``e(x) = P_x[no return] w_x`` on a finite set

    Attributes
    ----------
    ids : numpy.ndarray
        vertex ids of the set in the graph it was computed on

    mass : numpy.ndarray

    weights : numpy.ndarray
        vertex weights ``w_x``
    """

    def __init__(self, ids, mass, weights):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.mass = np.asarray(mass, dtype=float)
        self.weights = np.asarray(weights, dtype=float)

    def __repr__(self):
        return (
            f"<cylinder_walks.potential.EquilibriumMeasure size:{len(self.ids)} "
            f"total:{self.total:.6g}>\n"
        )

    def __len__(self):
        return len(self.ids)

    @property
    def total(self):
        return float(self.mass.sum())

    @property
    def normalized(self):
        if self.total <= 0:
            raise ValueError("Equilibrium measure has no mass")
        return self.mass / self.total


class EscapeProfile:
    """Per-vertex escape probabilities with bracket"""

    def __init__(self, ids, value, lower, upper, method, rho=None, se=None):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.method = method
        self.rho = rho
        self.se = None if se is None else np.asarray(se, dtype=float)

    def __repr__(self):
        return (
            f"<cylinder_walks.potential.EscapeProfile size:{len(self.ids)} "
            f"method:{self.method.name} rho:{self.rho}>\n"
        )


class VacantWindow:
    """0/1 configuration on a finite window, 1 meaning vacant

    Attributes
    ----------
    keys : list
        vertex keys of the window, e.g. (base label, height)

    indicator : numpy.ndarray
        uint8 array aligned with `keys`

    provenance : Provenance

    flags : dict
    """

    def __init__(self, keys, indicator, provenance, flags=None):
        indicator = np.asarray(indicator, dtype=np.uint8)
        if len(keys) != len(indicator):
            raise ValueError(
                f"{len(keys)} keys but {len(indicator)} indicators in vacant window"
            )
        if np.any(indicator > 1):
            raise ValueError("Vacancy indicators must be 0 or 1")
        self.keys = list(keys)
        self.indicator = indicator
        self.provenance = provenance
        self.flags = {} if flags is None else flags

    def __repr__(self):
        return (
            f"<cylinder_walks.potential.VacantWindow size:{len(self.keys)} "
            f"vacant:{int(self.indicator.sum())} "
            f"provenance:{self.provenance.name}>\n"
        )

    def __eq__(self, other):
        if not isinstance(other, self.__class__):
            return False
        return self.keys == other.keys and np.array_equal(
            self.indicator, other.indicator
        )

    def __len__(self):
        return len(self.keys)

    def is_vacant(self, positions=None):
        """Whether every listed position of the window is vacant"""
        if positions is None:
            return bool(self.indicator.all())
        return bool(np.all(self.indicator[np.asarray(positions, dtype=np.int64)]))

    def bits(self):
        return "".join(str(int(b)) for b in self.indicator)

    def to_dict(self):
        return {
            "keys": self.keys,
            "bits": self.bits(),
            "provenance": self.provenance,
            "flags": self.flags,
        }


def capacity_window(base, rho):
    """Cylinder window of outer radius ``2 rho`` over a limit window"""
    if rho < 3:
        raise ValueError(f"Truncation radius must be at least 3, got {rho}")
    return CylinderWindow(base, 2 * int(rho))


def window_ids(window, vertices):
    """Window ids for a list of vertices given either as ids or as
    (base label, height) keys"""
    ids = []
    for v in vertices:
        if isinstance(v, (tuple, list)) and len(v) == 2:
            ids.append(window.index_of(window.base.index_of(v[0]), v[1]))
        else:
            ids.append(int(v))
    ids = np.asarray(ids, dtype=np.int64)
    if len(np.unique(ids)) != len(ids):
        raise ValueError("Repeated vertices in target set")
    return ids


def _solve(matrix, rhs):
    """Solve an SPD system, directly or by conjugate gradients"""
    if matrix.shape[0] == 0:
        return np.zeros(0)
    if matrix.shape[0] <= DIRECT_LIMIT:
        return splinalg.spsolve(matrix.tocsc(), rhs)
    solution, info = splinalg.cg(matrix, rhs, rtol=CG_TOL, atol=0.0)
    if info != 0:
        raise RuntimeError(f"Conjugate gradients did not converge (info={info})")
    return solution


def hitting_probability(graph, targets, free):
    """``g(x) = P_x[hit targets before leaving free]``, with ``g = 1`` on
    `targets` and 0 outside ``targets | free``

    Parameters
    ----------
    graph : WeightedGraph

    targets, free : numpy.ndarray
        disjoint boolean masks

    Returns
    -------
    numpy.ndarray
    """
    laplacian = (sp.diags(graph.vertex_weights) - graph.adjacency).tocsr()
    inner = np.flatnonzero(free)
    rhs = graph.adjacency[inner][:, np.flatnonzero(targets)].sum(axis=1)
    g = targets.astype(float)
    g[inner] = _solve(laplacian[inner][:, inner], np.asarray(rhs).ravel())
    return g


def _escape_mass(graph, ids, g):
    """``sum_y A(x, y) (1 - g(y))`` for every x in `ids`"""
    rows = graph.adjacency[ids]
    return np.asarray(rows @ (1.0 - g)).ravel()


def _run_walkers(graph, starts, stop, rng, visit=None, max_steps=None):
    """Step walkers at least once and until each stands on a `stop` vertex

    Returns
    -------
    tuple
        (final positions, mask of walkers stopped by `max_steps`)
    """
    indptr, indices, keys = graph.step_table()
    pos = np.array(starts, dtype=np.int64)
    alive = np.ones(len(pos), dtype=bool)
    steps = 0
    while alive.any():
        idx = np.flatnonzero(alive)
        y = pos[idx]
        k = np.searchsorted(keys, y + rng.random(len(idx)), side="right")
        pos[idx] = indices[np.minimum(k, indptr[y + 1] - 1)]
        if visit is not None:
            visit(idx, pos[idx])
        alive[idx] = ~stop[pos[idx]]
        steps += 1
        if max_steps is not None and steps >= max_steps:
            break
    return pos, alive


def _truncated_escape(window, targets, ids, radius):
    """``P_x[T_radius < H~_V]`` for every x in `ids`"""
    free = ~targets & (window.distance < radius)
    g = hitting_probability(window.graph, targets, free)
    return _escape_mass(window.graph, ids, g) / window.graph.vertex_weights[ids]


def resistance_tail(radii, resistances):
    """Resistance from the last of three truncation radii to infinity, from
    the fit ``R(r) = R_inf - B r^-gamma`` through the truncated resistances

    Parameters
    ----------
    radii : tuple
        three increasing radii

    resistances : list
        ``1 / cap_r(V)`` at each radius

    Returns
    -------
    float
        ``numpy.inf`` when the fitted exponent is below ``GAMMA_MIN``
    """
    r0, r1, r2 = radii
    first = resistances[1] - resistances[0]
    second = resistances[2] - resistances[1]
    if second <= 0:
        return 0.0
    if first <= 0:
        return np.inf
    observed = second / first

    def ratio(gamma):
        a, b = (r1 / r0) ** -gamma, (r2 / r0) ** -gamma
        return (a - b) / (1.0 - a)

    if observed >= ratio(GAMMA_MIN):
        return np.inf
    gamma = GAMMA_MAX
    if observed > ratio(GAMMA_MAX):
        gamma = brentq(lambda g: ratio(g) - observed, GAMMA_MIN, GAMMA_MAX)
    a, b = (r1 / r0) ** -gamma, (r2 / r0) ** -gamma
    return second * b / (a - b)


def _check_truncation(window, ids, rho):
    if len(ids) and window.distance[ids].max() > rho - 2:
        raise ValueError(
            f"truncation too small: set reaches distance "
            f"{int(window.distance[ids].max())} with rho={rho}"
        )
    if rho >= window.radius:
        raise ValueError(
            f"truncation too small: rho={rho} must be below the window radius "
            f"{window.radius}"
        )


def escape_probability(
    window,
    vertices,
    rho,
    mode=SolveMethod.Exact,
    trials=MC_TRIALS,
    seed=0,
    verbose=False,
):
    """Probability of never returning to a finite set of a limit cylinder

    Exact mode solves ``P[H_V < T_r]`` on the ``r``-ball for ``r`` equal to
    ``rho``, the outer radius and their geometric mean. The value is the
    escape to the outer frontier and the upper bound the escape to the
    ``rho``-frontier; both only over-count escapes. The lower bound adds
    ``TAIL_MARGIN`` times the extrapolated resistance beyond the outer frontier
    (see `resistance_tail`) and is 0 when the truncated resistance keeps
    growing, as in recurrent cylinders. Monte Carlo mode runs walks to the
    outer frontier.

    Parameters
    ----------
    window : CylinderWindow

    vertices : list
        window ids or (base label, height) keys

    rho : int

    mode : SolveMethod or str
        Default is exact

    trials : int
        walks per vertex in Monte Carlo mode. Default is 20000

    seed : int or numpy.random.Generator
        Default is 0

    verbose : bool
        Default is False

    Raises
    ------
    ValueError
        "truncation too small" when the set comes within distance 2 of the
        ``rho``-frontier

    Returns
    -------
    EscapeProfile
    """
    mode = parse_enum(SolveMethod, mode)
    ids = window_ids(window, vertices)
    _check_truncation(window, ids, rho)
    graph = window.graph
    targets = np.zeros(graph.n, dtype=bool)
    targets[ids] = True
    weights = graph.vertex_weights[ids]
    if mode == SolveMethod.Exact:
        value = _truncated_escape(window, targets, ids, window.radius)
        upper = _truncated_escape(window, targets, ids, rho)
        lower = np.zeros(len(ids))
        middle = int(round(np.sqrt(rho * window.radius)))
        if rho < middle < window.radius:
            escapes = [
                upper,
                _truncated_escape(window, targets, ids, middle),
                value,
            ]
            resistances = [1.0 / np.sum(e * weights) for e in escapes]
            tail = resistance_tail((rho, middle, window.radius), resistances)
            if np.isfinite(tail):
                lower = value * resistances[2] / (resistances[2] + TAIL_MARGIN * tail)
        if not lower.any():
            warnings.warn(
                f"Escape bracket does not close at rho={rho} on "
                f"{graph.name}: lower bound set to 0"
            )
        se = None
    else:
        rng = as_rng(seed, "potential", "escape")
        stop = targets | window.frontier()
        value, se = np.zeros(len(ids)), np.zeros(len(ids))
        for j, x in enumerate(ids):
            pos, _ = _run_walkers(graph, np.full(trials, x), stop, rng)
            p = float(np.mean(~targets[pos]))
            value[j] = p
            se[j] = np.sqrt(max(p * (1.0 - p), 1.0 / trials) / trials)
        lower = np.clip(value - 3 * se, 0.0, 1.0)
        upper = np.clip(value + 3 * se, 0.0, 1.0)
    if verbose:
        print(f"escape on {window.graph.name} rho={rho}: {np.round(value, 6)}")
    return EscapeProfile(ids, value, lower, upper, mode, rho=rho, se=se)


def capacity(
    window,
    vertices,
    rho,
    mode=SolveMethod.Exact,
    trials=MC_TRIALS,
    seed=0,
    verbose=False,
):
    """``cap(V) = sum_x P_x[no return to V] w_x`` in a limit cylinder

    Parameters
    ----------
    window : CylinderWindow

    vertices : list
        window ids or (base label, height) keys; may be empty

    rho : int

    mode : SolveMethod or str
        Default is exact

    Returns
    -------
    tuple
        (CapacityEstimate, EquilibriumMeasure)
    """
    mode = parse_enum(SolveMethod, mode)
    if len(vertices) == 0:
        empty = EquilibriumMeasure([], [], [])
        return CapacityEstimate(0.0, 0.0, 0.0, mode, rho, window.radius), empty
    profile = escape_probability(
        window, vertices, rho, mode=mode, trials=trials, seed=seed
    )
    weights = window.graph.vertex_weights[profile.ids]
    se = None
    if profile.se is not None:
        se = float(np.sqrt(np.sum((profile.se * weights) ** 2)))
    estimate = CapacityEstimate(
        np.sum(profile.value * weights),
        np.sum(profile.lower * weights),
        np.sum(profile.upper * weights),
        mode,
        rho=rho,
        outer=window.radius,
        se=se,
        size=len(profile.ids),
    )
    if verbose:
        print(f"capacity of {len(profile.ids)} vertices: {estimate.to_json()}")
    return estimate, EquilibriumMeasure(profile.ids, profile.value * weights, weights)


def box_graph(base, low, high):
    """The finite cylinder piece ``G x {low, ..., high}`` as a graph with ids
    ``(z - low) |G| + y``"""
    n_z = high - low + 1
    path = sp.diags(
        [np.full(n_z - 1, EDGE_WEIGHT), np.full(n_z - 1, EDGE_WEIGHT)],
        [-1, 1],
        shape=(n_z, n_z),
    )
    adjacency = (
        sp.kron(sp.identity(n_z), base.adjacency)
        + sp.kron(path, sp.identity(base.n))
    ).tocsr()
    # sp.kron may return BSR blocks holding explicit zeros; those are not edges
    adjacency.eliminate_zeros()
    return WeightedGraph.from_adjacency(
        adjacency, name=f"{base.name} x [{low}, {high}]"
    )


def box_capacity(
    base, interval, vertices, mode=SolveMethod.Exact, trials=MC_TRIALS, seed=0
):
    """``cap_B(V) = sum_x P_x[T_B < H~_V] w_x`` for the box ``B = G x I~`` with
    ``I~`` the open interval ``(low, high)`` of heights

    Parameters
    ----------
    base : WeightedGraph

    interval : tuple
        (low, high), heights strictly between them belong to the box

    vertices : list of tuple
        (base id, height) pairs

    mode : SolveMethod or str
        Default is exact

    Raises
    ------
    ValueError
        When a vertex lies outside the box

    Returns
    -------
    tuple
        (CapacityEstimate, EquilibriumMeasure)
    """
    mode = parse_enum(SolveMethod, mode)
    low, high = int(interval[0]), int(interval[1])
    if high - low < 2:
        raise ValueError(f"Empty box interval ({low}, {high})")
    for y, z in vertices:
        base.check_vertex(y)
        if not low < z < high:
            raise ValueError(f"Vertex ({y}, {z}) is outside the box ({low}, {high})")
    if len(vertices) == 0:
        return CapacityEstimate(0.0, 0.0, 0.0, mode), EquilibriumMeasure([], [], [])
    graph = box_graph(base, low, high)
    ids = np.array([(z - low) * base.n + y for y, z in vertices], dtype=np.int64)
    if len(np.unique(ids)) != len(ids):
        raise ValueError("Repeated vertices in target set")
    targets = np.zeros(graph.n, dtype=bool)
    targets[ids] = True
    heights = np.repeat(np.arange(low, high + 1), base.n)
    outside = (heights == low) | (heights == high)
    weights = graph.vertex_weights[ids]
    se = None
    if mode == SolveMethod.Exact:
        g = hitting_probability(graph, targets, ~targets & ~outside)
        mass = _escape_mass(graph, ids, g)
        value = lower = upper = float(mass.sum())
    else:
        rng = as_rng(seed, "potential", "box")
        escape = np.zeros(len(ids))
        variance = 0.0
        for j, x in enumerate(ids):
            pos, _ = _run_walkers(graph, np.full(trials, x), targets | outside, rng)
            escape[j] = np.mean(outside[pos])
            variance += weights[j] ** 2 * escape[j] * (1 - escape[j]) / trials
        mass = escape * weights
        value = float(mass.sum())
        se = float(np.sqrt(variance))
        lower, upper = max(0.0, value - 3 * se), value + 3 * se
    estimate = CapacityEstimate(value, lower, upper, mode, se=se, size=len(ids))
    return estimate, EquilibriumMeasure(ids, mass, weights)


def capacity_gap(box_estimate, limit_estimates):
    """Difference between a box capacity and the sum of limit capacities of
    the pieces of the set, with the bracket of the sum

    Returns
    -------
    dict
    """
    total = sum(est.value for est in limit_estimates)
    return {
        "box": box_estimate.value,
        "limit_sum": total,
        "difference": box_estimate.value - total,
        "lower": box_estimate.value - sum(est.upper for est in limit_estimates),
        "upper": box_estimate.value - sum(est.lower for est in limit_estimates),
    }


def vacant_probability(u, capacity):
    """``exp(-u cap)`` with the interval implied by the capacity bracket

    Raises
    ------
    ValueError
        When `u` is negative

    Returns
    -------
    tuple
        (value, lower, upper)
    """
    if u < 0:
        raise ValueError(f"Level u must be non-negative, got {u}")
    return (
        float(np.exp(-u * capacity.value)),
        float(np.exp(-u * capacity.upper)),
        float(np.exp(-u * capacity.lower)),
    )


class InterlacementSampler:
    """Draws the trace of random interlacements at level u on a finite set K
    of a limit cylinder: ``Poisson(u cap(K))`` walks started from the
    normalized equilibrium measure of K, each run until the outer frontier
    of the window, where the escape probabilities behind cap(K) are taken

    Parameters
    ----------
    window : CylinderWindow

    vertices : list
        window ids or (base label, height) keys of K

    rho : int

    max_relative_width : float
        largest accepted ``(upper - lower) / value`` of cap(K). Default is 0.05

    Raises
    ------
    ValueError
        "increase truncation" when the capacity bracket is too wide
    """

    def __init__(
        self, window, vertices, rho, max_relative_width=MAX_RELATIVE_WIDTH
    ):
        self.window = window
        self.rho = int(rho)
        self.ids = window_ids(window, vertices)
        self.keys = [window.key(i) for i in self.ids]
        self.capacity, self.equilibrium = capacity(window, self.ids, self.rho)
        if self.capacity.relative_width >= max_relative_width:
            raise ValueError(
                f"increase truncation: capacity bracket width "
                f"{self.capacity.relative_width:.3%} at rho={rho}"
            )
        self._position = np.full(window.graph.n, -1, dtype=np.int64)
        self._position[self.ids] = np.arange(len(self.ids))
        self._stop = window.frontier()
        warnings.warn(
            f"Interlacement walks stop at the radius {window.radius} frontier; "
            f"returns from beyond it are dropped"
        )

    def __repr__(self):
        return (
            f"<cylinder_walks.potential.InterlacementSampler size:{len(self.ids)} "
            f"rho:{self.rho} cap:{self.capacity.value:.6g}>\n"
        )

    def sample_many(self, u, n_samples, seed=0):
        """Vacancy indicators of `n_samples` independent draws

        Returns
        -------
        numpy.ndarray
            boolean array of shape (n_samples, |K|), True meaning vacant
        """
        if u < 0:
            raise ValueError(f"Level u must be non-negative, got {u}")
        rng = as_rng(seed, "potential", "interlacement", repr(float(u)))
        size = len(self.ids)
        visited = np.zeros(n_samples * size, dtype=bool)
        counts = rng.poisson(u * self.capacity.value, n_samples)
        if counts.sum() == 0:
            return np.ones((n_samples, size), dtype=bool)
        owner = np.repeat(np.arange(n_samples), counts)
        choice = rng.choice(size, size=len(owner), p=self.equilibrium.normalized)
        visited[owner * size + choice] = True

        def visit(walkers, positions):
            j = self._position[positions]
            hit = j >= 0
            visited[owner[walkers[hit]] * size + j[hit]] = True

        _run_walkers(
            self.window.graph, self.ids[choice], self._stop, rng, visit=visit
        )
        return ~visited.reshape(n_samples, size)

    def sample(self, u, seed=0):
        vacant = self.sample_many(u, 1, seed=seed)[0]
        return VacantWindow(
            self.keys,
            vacant.astype(np.uint8),
            Provenance.InterlacementSample,
            flags={"frontier_truncated": True, "rho": self.rho},
        )

    def vacancy_frequency(self, u, positions, n_samples, seed=0):
        """Empirical ``P[positions all vacant]`` with its standard error"""
        vacant = self.sample_many(u, n_samples, seed=seed)
        hits = vacant[:, np.asarray(positions, dtype=np.int64)].all(axis=1)
        p = float(hits.mean())
        return p, float(np.sqrt(max(p * (1 - p), 1.0 / n_samples) / n_samples))


def sample_interlacement_window(u, window, vertices, rho, seed=0):
    """One draw of the vacant configuration of random interlacements at level
    `u` on the set `vertices` of a limit cylinder window

    Returns
    -------
    VacantWindow
    """
    return InterlacementSampler(window, vertices, rho).sample(u, seed=seed)
