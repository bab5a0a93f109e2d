import json
import numpy as np
import networkx as nx
import scipy.sparse as sp
from scipy.sparse import csgraph

# tolerance used when comparing edge weights of two graphs
WEIGHT_TOL = 1e-12


class WeightedGraph:
    """A finite connected graph with symmetric positive edge weights.
    Vertices are the dense integer ids ``0..n-1``; optional `labels` carry
    geometry such as lattice coordinates or tree paths.

    Parameters
    ----------
    n_vertices : int
        Number of vertices

    edges : array_like
        Array of shape (m, 2) with one row per unordered vertex pair

    weights : float or array_like
        Weight of each edge. A scalar applies to every edge. Default is 1/2,
        the weight used by all generated families

    labels : list
        Optional per-vertex payload. Default is None

    name : str
        Human readable name, e.g. "box(N=3, d=2)". Default is ""

    check_connected : bool
        Whether to reject disconnected graphs. Windows of infinite graphs
        are always connected, so this is only turned off for intermediate
        constructions. Default is True

    Attributes
    ----------
    n : int
        Number of vertices

    adjacency : scipy.sparse.csr_matrix
        Symmetric weight matrix with ``adjacency[y, y'] = w(y, y')``

    labels : list or None
        Per-vertex payload

    name : str
        Human readable name

    Raises
    ------
    ValueError
        When weights are not positive, an edge is a loop or repeated, or the
        graph is disconnected and `check_connected` is True

    IndexError
        When an edge refers to a vertex outside ``0..n-1``
    """

    def __init__(
        self, n_vertices, edges, weights=0.5, labels=None, name="", check_connected=True
    ):
        self.n = int(n_vertices)
        self.name = name
        if self.n < 1:
            raise ValueError("A graph needs at least one vertex")
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        weights = np.broadcast_to(np.asarray(weights, dtype=float), (len(edges),))
        if len(edges) and (edges.min() < 0 or edges.max() >= self.n):
            raise IndexError(f"Edge endpoint outside 0..{self.n - 1}")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("Loops are not allowed")
        if np.any(weights <= 0):
            raise ValueError("Edge weights must be positive")
        lo = np.minimum(edges[:, 0], edges[:, 1])
        hi = np.maximum(edges[:, 0], edges[:, 1])
        if len(np.unique(lo * self.n + hi)) != len(edges):
            raise ValueError("Repeated edge")

        rows = np.concatenate([lo, hi])
        cols = np.concatenate([hi, lo])
        data = np.concatenate([weights, weights])
        adjacency = sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))
        adjacency.sort_indices()
        self.adjacency = adjacency
        if labels is not None and len(labels) != self.n:
            raise ValueError(f"Expected {self.n} labels, got {len(labels)}")
        self.labels = None if labels is None else list(labels)
        self._label_index = None
        self._step_table = None

        if self.n > 1 and np.any(self.vertex_weights <= 0):
            raise ValueError("Every vertex needs positive weight")
        if check_connected and not self.is_connected():
            raise ValueError("disconnected graph")

    def __repr__(self):
        return (
            f"<cylinder_walks.graph.WeightedGraph name:{self.name} "
            f"vertices:{self.n} edges:{self.n_edges}>\n"
        )

    def __eq__(self, other):
        # don't attempt to compare against unrelated types
        if not isinstance(other, WeightedGraph):
            return False
        if self.n != other.n or self.labels != other.labels:
            return False
        return (self.adjacency != other.adjacency).nnz == 0

    def __hash__(self):
        return hash((self.n, self.n_edges, self.total_weight))

    @property
    def n_edges(self):
        return self.adjacency.nnz // 2

    @property
    def degrees(self):
        return np.diff(self.adjacency.indptr)

    @property
    def vertex_weights(self):
        """numpy.ndarray : ``w_y = sum_y' w(y, y')`` for every vertex"""
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    @property
    def total_weight(self):
        """float : ``w(G)``, the sum of all vertex weights"""
        return float(self.vertex_weights.sum())

    def check_vertex(self, y):
        """Raise IndexError when `y` is not a vertex id of this graph"""
        if not (0 <= int(y) < self.n):
            raise IndexError(f"Vertex {y} is not in {self.name or 'graph'}")
        return int(y)

    def weight(self, y, y2):
        """Weight of the pair (`y`, `y2`), zero for non-edges"""
        return float(self.adjacency[self.check_vertex(y), self.check_vertex(y2)])

    def neighbors(self, y):
        """Return the neighbor ids of `y` and the corresponding edge weights

        Parameters
        ----------
        y : int
            vertex id

        Returns
        -------
        tuple
            (numpy.ndarray of ids, numpy.ndarray of weights)
        """
        y = self.check_vertex(y)
        start, stop = self.adjacency.indptr[y], self.adjacency.indptr[y + 1]
        return self.adjacency.indices[start:stop], self.adjacency.data[start:stop]

    def edge_list(self):
        """Return arrays (u, v, w) with one entry per edge and u < v"""
        upper = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return upper.row[order], upper.col[order], upper.data[order]

    def is_connected(self):
        n_components, _ = csgraph.connected_components(self.adjacency, directed=False)
        return n_components == 1

    def transition_matrix(self):
        """Return the sparse matrix ``p(y, y') = w(y, y') / w_y``"""
        return sp.diags(1.0 / self.vertex_weights) @ self.adjacency

    def step_table(self):
        """Lookup table to sample the next vertex of the discrete walk.
        The next vertex from ``y`` given a uniform ``U`` in [0, 1) is
        ``indices[searchsorted(keys, y + U, side="right")]`` where ``keys``
        holds ``y`` plus the cumulative transition probabilities of row ``y``

        Returns
        -------
        tuple
            (indptr, indices, keys) as numpy arrays
        """
        if self._step_table is None:
            a = self.adjacency
            rows = np.repeat(np.arange(self.n), np.diff(a.indptr))
            probs = a.data / self.vertex_weights[rows]
            cumulative = np.cumsum(probs)
            row_start = np.concatenate([[0.0], cumulative])[a.indptr[:-1]]
            within = cumulative - row_start[rows]
            # last entry of each non-empty row must be exactly 1
            ends = a.indptr[1:][np.diff(a.indptr) > 0]
            within[ends - 1] = 1.0
            self._step_table = (a.indptr.copy(), a.indices.copy(), rows + within)
        return self._step_table

    def index_of(self, label):
        """Vertex id carrying `label`

        Raises
        ------
        KeyError
            When no vertex has this label
        """
        if self.labels is None:
            raise KeyError(f"{self.name or 'graph'} has no labels")
        if self._label_index is None:
            self._label_index = {lab: i for i, lab in enumerate(self.labels)}
        return self._label_index[label]

    def label(self, y):
        return y if self.labels is None else self.labels[self.check_vertex(y)]

    @classmethod
    def from_adjacency(cls, adjacency, labels=None, name="", check_connected=False):
        """Build a graph from a symmetric sparse weight matrix"""
        upper = sp.triu(sp.csr_matrix(adjacency), k=1).tocoo()
        return cls(
            adjacency.shape[0],
            np.column_stack([upper.row, upper.col]),
            upper.data,
            labels=labels,
            name=name,
            check_connected=check_connected,
        )

    def induced(self, vertices, name=None, check_connected=False):
        """Return the subgraph induced by `vertices` (renumbered in the given
        order) together with the array of original ids

        Parameters
        ----------
        vertices : array_like
            ids to keep

        name : str
            Name of the new graph. Default is the current name

        check_connected : bool
            Whether the induced graph has to be connected. Default is False

        Returns
        -------
        tuple
            (WeightedGraph, numpy.ndarray)
        """
        vertices = np.asarray(vertices, dtype=np.int64)
        sub = self.adjacency[vertices][:, vertices]
        upper = sp.triu(sub, k=1).tocoo()
        labels = None if self.labels is None else [self.labels[v] for v in vertices]
        graph = WeightedGraph(
            len(vertices),
            np.column_stack([upper.row, upper.col]),
            upper.data,
            labels=labels,
            name=self.name if name is None else name,
            check_connected=check_connected,
        )
        return graph, vertices

    def to_networkx(self):
        """Convert to a `networkx.Graph` with `weight` edge attributes and a
        `label` node attribute"""
        graph = nx.Graph(name=self.name)
        for y in range(self.n):
            graph.add_node(y, label=self.label(y))
        u, v, w = self.edge_list()
        graph.add_weighted_edges_from(zip(u.tolist(), v.tolist(), w.tolist()))
        return graph

    @classmethod
    def from_networkx(cls, graph, weight="weight", default_weight=0.5, name=None):
        """Build a `WeightedGraph` from a `networkx.Graph`. Nodes are numbered
        in iteration order and kept as labels

        Parameters
        ----------
        graph : networkx.Graph

        weight : str
            edge attribute holding the weight. Default is "weight"

        default_weight : float
            weight of edges without the attribute. Default is 1/2

        name : str
            Default is the networkx graph name

        Returns
        -------
        WeightedGraph
        """
        nodes = list(graph.nodes())
        index = {node: i for i, node in enumerate(nodes)}
        edges, weights = [], []
        for a, b, data in graph.edges(data=True):
            edges.append((index[a], index[b]))
            weights.append(data.get(weight, default_weight))
        return cls(
            len(nodes),
            np.array(edges, dtype=np.int64).reshape(-1, 2),
            np.array(weights, dtype=float),
            labels=nodes,
            name=graph.name if name is None else name,
        )


class VertexSet:
    """A sorted set of vertex ids of one `WeightedGraph`

    Parameters
    ----------
    graph : WeightedGraph
        The graph the ids refer to

    ids : iterable of int
        Vertex ids

    Attributes
    ----------
    graph : WeightedGraph

    ids : numpy.ndarray
        Sorted unique ids

    Raises
    ------
    IndexError
        When an id is not a vertex of `graph`

    ValueError
        When an id is repeated
    """

    def __init__(self, graph, ids):
        self.graph = graph
        ids = np.asarray(list(ids), dtype=np.int64)
        if len(ids) and (ids.min() < 0 or ids.max() >= graph.n):
            raise IndexError(f"Vertex ids must lie in 0..{graph.n - 1}")
        unique = np.unique(ids)
        if len(unique) != len(ids):
            raise ValueError("Repeated vertex in vertex set")
        self.ids = unique

    def __repr__(self):
        return f"<cylinder_walks.graph.VertexSet ids:{self.ids.tolist()}>\n"

    def __eq__(self, other):
        if not isinstance(other, VertexSet):
            return False
        return self.graph is other.graph and np.array_equal(self.ids, other.ids)

    def __hash__(self):
        return hash(tuple(self.ids.tolist()))

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids.tolist())

    def __contains__(self, y):
        i = np.searchsorted(self.ids, y)
        return i < len(self.ids) and self.ids[i] == y

    def mask(self):
        """Boolean indicator array over all vertices of the graph"""
        out = np.zeros(self.graph.n, dtype=bool)
        out[self.ids] = True
        return out

    def union(self, other):
        return VertexSet(self.graph, np.union1d(self.ids, other.ids))

    def labels(self):
        return [self.graph.label(y) for y in self.ids]


def as_vertex_set(graph, vertices):
    """Return `vertices` as a `VertexSet` of `graph`"""
    if isinstance(vertices, VertexSet):
        return vertices
    return VertexSet(graph, vertices)


def measures(graph, vertices):
    """Compute ``w(A)``, the reversible probability ``pi`` and the uniform
    probability ``mu``

    Parameters
    ----------
    graph : WeightedGraph

    vertices : VertexSet or iterable of int
        The set A

    Raises
    ------
    ValueError
        When `vertices` is empty

    Returns
    -------
    tuple
        (w_A, pi, mu) with ``pi(y) = w_y / w(G)`` and ``mu(y) = 1/|G|``
    """
    vertices = as_vertex_set(graph, vertices)
    if len(vertices) == 0:
        raise ValueError("empty vertex set")
    weights = graph.vertex_weights
    w_a = float(weights[vertices.ids].sum())
    pi = weights / weights.sum()
    mu = np.full(graph.n, 1.0 / graph.n)
    return w_a, pi, mu


def distances_from(graph, center):
    """Graph distance from `center` to every vertex (-1 when unreachable)"""
    center = graph.check_vertex(center)
    dist = csgraph.shortest_path(
        graph.adjacency, directed=False, unweighted=True, indices=center
    )
    return np.where(np.isinf(dist), -1, dist).astype(np.int64)


def distance(graph, y, y2):
    """Graph distance between `y` and `y2` over positive-weight edges"""
    graph.check_vertex(y2)
    return int(distances_from(graph, y)[y2])


def metric(graph, center, radius):
    """Closed ball of `radius` around `center`, its exterior boundary and
    their union

    Parameters
    ----------
    graph : WeightedGraph

    center : int
        vertex id

    radius : int
        non-negative radius

    Raises
    ------
    ValueError
        When `radius` is negative

    IndexError
        When `center` is not a vertex

    Returns
    -------
    tuple
        (ball, boundary, closure) as VertexSets
    """
    if radius < 0:
        raise ValueError(f"Radius must be non-negative, got {radius}")
    dist = distances_from(graph, center)
    reached = dist >= 0
    ball = np.flatnonzero(reached & (dist <= radius))
    boundary = np.flatnonzero(dist == radius + 1)
    return (
        VertexSet(graph, ball),
        VertexSet(graph, boundary),
        VertexSet(graph, np.union1d(ball, boundary)),
    )


class IsomorphismMap:
    """An injective vertex map from a subset of `source` into `target`

    Parameters
    ----------
    source : WeightedGraph
        Graph containing the domain

    target : WeightedGraph
        Graph containing the image

    mapping : dict
        Dictionary of the form { `int` : `int` } from source ids to target ids

    height_offset : int
        Shift applied to heights when the map is lifted to cylinders, i.e.
        ``(y, z) -> (phi(y), z - height_offset)``. Default is 0

    name : str
        Default is ""

    Attributes
    ----------
    source, target, mapping, height_offset, name
        as above
    """

    def __init__(self, source, target, mapping, height_offset=0, name=""):
        self.source = source
        self.target = target
        self.mapping = {int(k): int(v) for k, v in mapping.items()}
        self.height_offset = int(height_offset)
        self.name = name

    def __repr__(self):
        return (
            f"<cylinder_walks.graph.IsomorphismMap name:{self.name} "
            f"domain:{len(self.mapping)} height_offset:{self.height_offset}>\n"
        )

    def __call__(self, y):
        return self.mapping[int(y)]

    def __len__(self):
        return len(self.mapping)

    @property
    def domain(self):
        return np.array(sorted(self.mapping), dtype=np.int64)

    def lift(self, y, z):
        """Image of the cylinder vertex (`y`, `z`)"""
        return self(y), int(z) - self.height_offset

    def inverse(self):
        """Return the inverse map from the image back into `source`"""
        return IsomorphismMap(
            self.target,
            self.source,
            {v: k for k, v in self.mapping.items()},
            height_offset=-self.height_offset,
            name=f"inverse of {self.name}",
        )


def verify_isomorphism(iso_map):
    """Check that `iso_map` preserves weights on its domain, i.e.
    ``w(phi(y), phi(y')) = w(y, y')`` for all domain pairs, non-edges included.
    Comparing neighbor lists is enough since weights vanish off edges

    Parameters
    ----------
    iso_map : IsomorphismMap

    Raises
    ------
    IndexError
        When an image vertex is missing in the target graph

    Returns
    -------
    tuple
        (bool, str or None) with a description of the first violation
    """
    source, target = iso_map.source, iso_map.target
    inverse = {}
    for y, image in iso_map.mapping.items():
        source.check_vertex(y)
        if not (0 <= image < target.n):
            raise IndexError(f"Image {image} of vertex {y} is missing in target")
        if image in inverse:
            return False, f"vertices {inverse[image]} and {y} share image {image}"
        inverse[image] = y

    for y, image in sorted(iso_map.mapping.items()):
        nbrs, weights = source.neighbors(y)
        for y2, w in zip(nbrs.tolist(), weights.tolist()):
            if y2 not in iso_map.mapping:
                continue
            w_image = target.weight(image, iso_map.mapping[y2])
            if abs(w_image - w) > WEIGHT_TOL:
                return False, (
                    f"w({source.label(y)}, {source.label(y2)}) = {w} but image "
                    f"weight is {w_image}"
                )
        t_nbrs, t_weights = target.neighbors(image)
        for t2, w_image in zip(t_nbrs.tolist(), t_weights.tolist()):
            if t2 not in inverse:
                continue
            w = source.weight(y, inverse[t2])
            if abs(w_image - w) > WEIGHT_TOL:
                return False, (
                    f"w({source.label(y)}, {source.label(inverse[t2])}) = {w} but "
                    f"image weight is {w_image}"
                )
    return True, None


def _decode_label(label):
    # JSON turns tuples into lists
    if isinstance(label, list):
        return tuple(_decode_label(item) for item in label)
    return label


def dump_graph(graph, path):
    """Write `graph` in the line-oriented text format: a header ``|V| |E|``,
    one ``u v w`` line per edge and one ``label id json`` line per labelled
    vertex. Weights are written with `repr`, so loading is bit-exact

    Parameters
    ----------
    graph : WeightedGraph

    path : str
        Output file
    """
    u, v, w = graph.edge_list()
    with open(path, "w") as file:
        file.write(f"{graph.n} {len(u)}\n")
        for a, b, weight in zip(u.tolist(), v.tolist(), w.tolist()):
            file.write(f"{a} {b} {weight!r}\n")
        if graph.labels is not None:
            for y, label in enumerate(graph.labels):
                file.write(f"label {y} {json.dumps(label)}\n")


def load_graph(path, name=None):
    """Read a graph written by `dump_graph`

    Parameters
    ----------
    path : str

    name : str
        Name of the graph. Default is the file path

    Raises
    ------
    ValueError
        When the header does not match the number of edge lines

    Returns
    -------
    WeightedGraph
    """
    with open(path, "r") as file:
        lines = [line.strip() for line in file if line.strip()]
    n_vertices, n_edges = (int(x) for x in lines[0].split())
    edge_lines = lines[1 : 1 + n_edges]
    if len(edge_lines) != n_edges or any(
        line.startswith("label") for line in edge_lines
    ):
        raise ValueError(f"{path} declares {n_edges} edges but lists fewer")
    edges = np.array([[int(x) for x in line.split()[:2]] for line in edge_lines])
    weights = np.array([float(line.split()[2]) for line in edge_lines])
    labels = None
    label_lines = lines[1 + n_edges :]
    if label_lines:
        labels = [None] * n_vertices
        for line in label_lines:
            _, y, payload = line.split(" ", 2)
            labels[int(y)] = _decode_label(json.loads(payload))
    return WeightedGraph(
        n_vertices,
        edges.reshape(-1, 2),
        weights,
        labels=labels,
        name=path if name is None else name,
    )
