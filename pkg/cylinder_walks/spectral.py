"""Spectral gaps, Dirichlet forms, heat kernels and the mixing certificate.

The continuous-time walk jumps from ``y`` to ``y'`` at rate ``w(y, y')``, so
its generator is ``-(W - A)`` with ``W`` the diagonal of vertex weights and
``A`` the weight matrix. The uniform measure is reversible and the gap is the
smallest nonzero eigenvalue of the combinatorial Laplacian ``W - A``.
"""
import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy import linalg
from scipy.sparse import linalg as splinalg
from .utils import EigenMethod, as_rng
from .zoo import make_sierpinski, make_tree

DENSE_LIMIT = 5000
EXPM_LIMIT = 2000
# shift for shift-invert Lanczos, keeps the factorization nonsingular
SHIFT = -1e-6


class SpectralReport:
    """Continuous and discrete spectral gaps of a graph

    Attributes
    ----------
    lambda_ : float
        continuous-time gap

    lambda_d : float
        gap of ``I - P``

    method : EigenMethod

    n : int
        number of vertices

    fiedler : numpy.ndarray or None
        eigenvector of the continuous gap, dense method only
    """

    def __init__(self, lambda_, lambda_d, method, n, fiedler=None):
        self.lambda_ = float(lambda_)
        self.lambda_d = float(lambda_d)
        self.method = method
        self.n = n
        self.fiedler = fiedler

    def __repr__(self):
        return (
            f"<cylinder_walks.spectral.SpectralReport lambda:{self.lambda_:.6g} "
            f"lambda_d:{self.lambda_d:.6g} method:{self.method.name}>\n"
        )

    @property
    def relaxation_time(self):
        return 1.0 / self.lambda_

    def to_dict(self):
        return {
            "lambda": self.lambda_,
            "lambda_d": self.lambda_d,
            "relaxation_time": self.relaxation_time,
            "method": self.method.name,
            "vertices": self.n,
        }


def laplacian(graph):
    """Combinatorial Laplacian ``W - A`` as a sparse matrix"""
    return (sp.diags(graph.vertex_weights) - graph.adjacency).tocsr()


def normalized_laplacian(graph):
    """``I - W^(-1/2) A W^(-1/2)``, similar to ``I - P``"""
    scale = sp.diags(1.0 / np.sqrt(graph.vertex_weights))
    return (sp.identity(graph.n) - scale @ graph.adjacency @ scale).tocsr()


def dirichlet_form(graph, f):
    """``D(f, f) = sum over edges of w (f(y) - f(y'))^2 / |G|``"""
    f = np.asarray(f, dtype=float)
    u, v, w = graph.edge_list()
    return float(np.sum(w * (f[u] - f[v]) ** 2) / graph.n)


def variance(f):
    """Variance of `f` under the uniform measure"""
    f = np.asarray(f, dtype=float)
    return float(np.mean((f - f.mean()) ** 2))


def _second_smallest(matrix, method):
    if method == EigenMethod.Dense:
        values, vectors = linalg.eigh(matrix.toarray(), subset_by_index=[0, 1])
        return values[1], vectors[:, 1]
    values = splinalg.eigsh(
        matrix, k=2, sigma=SHIFT, which="LM", return_eigenvectors=False
    )
    return np.sort(values)[1], None


def spectral_gap(graph, method=None, dense_limit=DENSE_LIMIT, verbose=False):
    """Compute the continuous-time gap ``lambda`` and the discrete gap
    ``lambda_d`` of `graph`

    Parameters
    ----------
    graph : WeightedGraph

    method : EigenMethod
        Dense eigensolve or shift-invert Lanczos. Default is dense up to
        `dense_limit` vertices and iterative above

    dense_limit : int
        Default is 5000

    verbose : bool
        Print the gaps. Default is False

    Raises
    ------
    ValueError
        "disconnected graph" when `graph` has several components

    Returns
    -------
    SpectralReport
    """
    if not graph.is_connected():
        raise ValueError("disconnected graph")
    if graph.n < 2:
        raise ValueError("A spectral gap needs at least two vertices")
    if method is None:
        method = EigenMethod.Dense if graph.n <= dense_limit else EigenMethod.Iterative
    lambda_, fiedler = _second_smallest(laplacian(graph), method)
    lambda_d, _ = _second_smallest(normalized_laplacian(graph), method)
    report = SpectralReport(lambda_, lambda_d, method, graph.n, fiedler)
    if verbose:
        print(
            f"{graph.name}: lambda={report.lambda_:.6g} "
            f"lambda_d={report.lambda_d:.6g}"
        )
    return report


def rayleigh_check(graph, report, trials=100, seed=0, tol=1e-9):
    """Validate the gap against Rayleigh quotients ``D(f)/var(f)`` of random
    test functions, which can never fall below it, and of the eigenvector,
    which attains it

    Returns
    -------
    dict
        smallest random quotient, eigenvector quotient and the verdict
    """
    rng = as_rng(seed, "spectral", "rayleigh")
    quotients = []
    for _ in range(trials):
        f = rng.standard_normal(graph.n)
        quotients.append(dirichlet_form(graph, f) / variance(f))
    smallest = float(np.min(quotients))
    attained = None
    if report.fiedler is not None:
        attained = dirichlet_form(graph, report.fiedler) / variance(report.fiedler)
    attained_ok = attained is None or abs(attained - report.lambda_) <= 1e-8 * max(
        1.0, report.lambda_
    )
    holds = smallest >= report.lambda_ - tol and attained_ok
    return {"min_quotient": smallest, "eigenvector_quotient": attained, "holds": holds}


def gap_comparison(graph, report):
    """Compare the gaps through ``c0 lambda_d <= lambda <= c1 lambda_d`` with
    ``c0``, ``c1`` the smallest and largest vertex weight"""
    weights = graph.vertex_weights
    c0, c1 = float(weights.min()), float(weights.max())
    tol = 1e-10 * max(1.0, report.lambda_)
    return {
        "c0": c0,
        "c1": c1,
        "lower": c0 * report.lambda_d,
        "upper": c1 * report.lambda_d,
        "holds": c0 * report.lambda_d - tol
        <= report.lambda_
        <= c1 * report.lambda_d + tol,
    }


def a2_holds(report, eps):
    """Whether ``lambda^-1 <= |G|^(2 - eps)``"""
    return report.relaxation_time <= report.n ** (2.0 - eps)


class MixingRow:
    """One time of the mixing certificate"""

    def __init__(self, t, sup, bound):
        self.t = t
        self.sup = sup
        self.bound = bound

    def __repr__(self):
        return (
            f"<cylinder_walks.spectral.MixingRow t:{self.t} sup:{self.sup:.6g} "
            f"bound:{self.bound:.6g}>\n"
        )

    @property
    def holds(self):
        return self.sup <= self.bound + 1e-9

    def to_dict(self):
        return {"t": self.t, "sup": self.sup, "bound": self.bound, "holds": self.holds}


def mixing_certificate(graph, times, report=None):
    """Compare ``sup |q_t(y, y') - 1/|G||`` with ``exp(-lambda t)`` where
    ``q_t = exp(-t (W - A))`` is the continuous-time kernel

    Parameters
    ----------
    graph : WeightedGraph

    times : list of float

    report : SpectralReport
        Default is None, in which case the gap is computed

    Raises
    ------
    ValueError
        When a time is negative or the graph exceeds 2000 vertices

    Returns
    -------
    list of MixingRow
    """
    if graph.n > EXPM_LIMIT:
        raise ValueError(f"Matrix exponential limited to {EXPM_LIMIT} vertices")
    if any(t < 0 for t in times):
        raise ValueError("Times must be non-negative")
    report = spectral_gap(graph) if report is None else report
    generator = laplacian(graph).toarray()
    rows = []
    for t in times:
        kernel = linalg.expm(-t * generator)
        sup = float(np.abs(kernel - 1.0 / graph.n).max())
        rows.append(MixingRow(t, sup, float(np.exp(-report.lambda_ * t))))
    return rows


def heat_kernel(graph, steps, start):
    """Distributions ``p_n(start, .)`` for n = 0..steps of the discrete walk

    Returns
    -------
    numpy.ndarray
        array of shape (steps + 1, |G|)
    """
    transition = graph.transition_matrix().T.tocsr()
    out = np.zeros((steps + 1, graph.n))
    out[0, graph.check_vertex(start)] = 1.0
    for n in range(steps):
        out[n + 1] = transition @ out[n]
    return out


def kernel_sum(graph, sources, targets, report, eps, max_terms=None):
    """``sum_{1 <= n <= lambda^-1 |G|^eps} sup p_n(y0, y) / sqrt(n)`` with the
    supremum over `sources` and `targets`, a numeric surrogate for the
    assumption that the walk started far away does not reach the targets
    before the base has mixed

    Returns
    -------
    tuple
        (sum, number of terms)
    """
    terms = int(report.relaxation_time * graph.n**eps)
    if max_terms is not None:
        terms = min(terms, max_terms)
    sources = np.asarray(list(sources), dtype=np.int64)
    targets = np.asarray(list(targets), dtype=np.int64)
    transition = graph.transition_matrix().T.tocsr()
    mass = np.zeros((graph.n, len(sources)))
    mass[sources, np.arange(len(sources))] = 1.0
    total = 0.0
    for n in range(1, terms + 1):
        mass = transition @ mass
        total += mass[targets].max() / np.sqrt(n)
    return float(total), terms


def sierpinski_gap_table(depths):
    """Discrete gaps of Sierpinski graphs with ``lambda_d 5^N``"""
    rows = []
    for depth in depths:
        graph = make_sierpinski(depth)
        report = spectral_gap(graph)
        rows.append(
            {
                "N": depth,
                "vertices": graph.n,
                "lambda_d": report.lambda_d,
                "scaled": report.lambda_d * 5**depth,
            }
        )
    return pd.DataFrame(rows)


def tree_gap_constants(arity, depths):
    """Fit ``c(d)`` in ``lambda_N >= c(d) / |G_N|`` over several depths

    Returns
    -------
    tuple
        (pandas.DataFrame of ``lambda |G|`` per depth, relative spread of c)
    """
    rows = []
    for depth in depths:
        graph = make_tree(arity, depth)
        report = spectral_gap(graph)
        rows.append(
            {
                "N": depth,
                "vertices": graph.n,
                "lambda": report.lambda_,
                "c": report.lambda_ * graph.n,
            }
        )
    table = pd.DataFrame(rows)
    spread = (table["c"].max() - table["c"].min()) / table["c"].mean()
    return table, float(spread)
