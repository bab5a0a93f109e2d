"""Base graphs of the three example families, finite windows of their
infinite limit models, the maps between them and the cylinder product."""
import itertools
import numpy as np
import scipy.sparse as sp
from .graph import (
    WeightedGraph,
    IsomorphismMap,
    distances_from,
    metric,
)
from .utils import GraphFamily, LimitModel

EDGE_WEIGHT = 0.5

# rotations of the triangular lattice in the basis (s1, s2)
ROTATIONS = {
    60: lambda i, j: (-j, i + j),
    120: lambda i, j: (-i - j, i),
    240: lambda i, j: (j, -i - j),
}


def _lattice_edges(ids):
    """Edges between axis neighbors of a D-dimensional array of vertex ids,
    where -1 marks lattice points that are not vertices"""
    edges = []
    for axis in range(ids.ndim):
        lower = np.take(ids, np.arange(ids.shape[axis] - 1), axis=axis).ravel()
        upper = np.take(ids, np.arange(1, ids.shape[axis]), axis=axis).ravel()
        keep = (lower >= 0) & (upper >= 0)
        edges.append(np.column_stack([lower[keep], upper[keep]]))
    if not edges:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate(edges)


def _index_array(mask):
    ids = np.full(mask.shape, -1, dtype=np.int64)
    ids[mask] = np.arange(int(mask.sum()))
    return ids


class BoxGraph(WeightedGraph):
    """The box ``Z^d ∩ [0, N-1]^d`` with lattice coordinates as labels"""

    family = GraphFamily.Box

    def __init__(self, side, dim):
        if dim < 2:
            raise ValueError(f"Box dimension must be at least 2, got d={dim}")
        if side < 2:
            raise ValueError(f"Box side must be at least 2, got N={side}")
        self.side = int(side)
        self.dim = int(dim)
        shape = (self.side,) * self.dim
        ids = np.arange(self.side**self.dim).reshape(shape)
        coords = np.indices(shape).reshape(self.dim, -1).T
        super().__init__(
            ids.size,
            _lattice_edges(ids),
            EDGE_WEIGHT,
            labels=[tuple(c) for c in coords.tolist()],
            name=f"box(N={side}, d={dim})",
        )


def make_box(side, dim):
    """Generate the box of side `side` in dimension `dim` with weights 1/2

    Parameters
    ----------
    side : int
        Number of points per axis, at least 2

    dim : int
        Dimension, at least 2 so that the limit cylinders are transient

    Raises
    ------
    ValueError
        When `side` < 2 or `dim` < 2

    Returns
    -------
    BoxGraph
    """
    return BoxGraph(side, dim)


class LimitWindow:
    """The ball of `radius` around `origin` in an infinite limit graph,
    materialized as a finite graph. Vertices at distance `radius` form the
    frontier, where the infinite graph continues.

    Parameters
    ----------
    graph : WeightedGraph
        Finite graph of the ball

    origin : int
        Id of the center vertex in `graph`

    radius : int
        Radius of the ball

    model : LimitModel
        Which infinite graph the ball lives in

    params : dict
        Parameters of the infinite graph, e.g. ``{"a": 1, "b": 1}``

    Attributes
    ----------
    graph, origin, radius, model, params
        as above

    distance : numpy.ndarray
        graph distance from the origin
    """

    def __init__(self, graph, origin, radius, model, params=None):
        self.graph = graph
        self.origin = int(origin)
        self.radius = int(radius)
        self.model = model
        self.params = {} if params is None else params
        self.distance = distances_from(graph, self.origin)

    def __repr__(self):
        return (
            f"<cylinder_walks.zoo.LimitWindow model:{self.model.name} "
            f"params:{self.params} radius:{self.radius} vertices:{self.graph.n}>\n"
        )

    @property
    def frontier(self):
        return self.distance == self.radius

    @property
    def interior(self):
        return self.distance < self.radius

    def index_of(self, label):
        return self.graph.index_of(label)


def _ball_window(graph, origin, radius, model, params, name):
    if radius < 1:
        raise ValueError(f"Window radius must be at least 1, got {radius}")
    ball, _, _ = metric(graph, origin, radius)
    sub, kept = graph.induced(ball.ids, name=name, check_connected=True)
    return LimitWindow(
        sub, int(np.searchsorted(kept, origin)), radius, model, params=params
    )


def make_box_limit_window(a, b, radius, origin=None):
    """Ball of `radius` in ``Z_+^a x Z^b`` with edge weights 1/2.
    Labels are integer coordinate tuples, the first `a` of them non-negative

    Parameters
    ----------
    a : int
        Number of half-line coordinates

    b : int
        Number of full-line coordinates

    radius : int
        Ball radius, at least 1

    origin : tuple
        Center of the ball. Default is the zero vector

    Raises
    ------
    ValueError
        When ``a + b < 1``, `radius` < 1 or `origin` lies outside ``Z_+^a x Z^b``

    Returns
    -------
    LimitWindow
    """
    dim = a + b
    if dim < 1:
        raise ValueError("Limit lattice needs at least one coordinate")
    if radius < 1:
        raise ValueError(f"Window radius must be at least 1, got {radius}")
    origin = np.zeros(dim, dtype=np.int64) if origin is None else np.asarray(origin)
    if len(origin) != dim or np.any(origin[:a] < 0):
        raise ValueError(f"Origin {tuple(origin)} is not a point of Z_+^{a} x Z^{b}")
    low = origin - radius
    low[:a] = np.maximum(low[:a], 0)
    high = origin + radius
    shape = tuple(int(x) for x in high - low + 1)
    coords = np.indices(shape) + low.reshape((-1,) + (1,) * dim)
    l1 = np.abs(coords - origin.reshape((-1,) + (1,) * dim)).sum(axis=0)
    mask = l1 <= radius
    ids = _index_array(mask)
    labels = [tuple(c) for c in coords.reshape(dim, -1).T[mask.ravel()].tolist()]
    graph = WeightedGraph(
        len(labels),
        _lattice_edges(ids),
        EDGE_WEIGHT,
        labels=labels,
        name=f"Z_+^{a} x Z^{b} ball(r={radius})",
    )
    return LimitWindow(
        graph,
        graph.index_of(tuple(int(x) for x in origin)),
        radius,
        LimitModel.Lattice,
        params={"a": a, "b": b},
    )


def box_fold(box, site, radius):
    """Folding coordinates of the ball around `site` in a box. Coordinates
    whose face lies within `radius` become distances to that face, the
    others are centered at the site. Constrained coordinates come first.

    Parameters
    ----------
    box : BoxGraph

    site : int or tuple
        vertex id or lattice coordinates

    radius : int

    Raises
    ------
    ValueError
        When the ball touches two opposite faces

    Returns
    -------
    tuple
        (callable mapping box coordinates to limit coordinates, a, b)
    """
    y = box.label(site) if not isinstance(site, tuple) else site
    last = box.side - 1
    constrained, free = [], []
    for i, yi in enumerate(y):
        near_low, near_high = yi <= radius, last - yi <= radius
        if near_low and near_high:
            raise ValueError(f"Ball of radius {radius} touches opposite faces")
        if near_low:
            constrained.append((i, lambda x: x))
        elif near_high:
            constrained.append((i, lambda x, last=last: last - x))
        else:
            free.append((i, lambda x, yi=yi: x - yi))
    axes = constrained + free

    def fold(x):
        return tuple(int(f(x[i])) for i, f in axes)

    return fold, len(constrained), len(free)


def box_site_map(box, site, radius):
    """Map the ball of `radius` around `site` in a box onto the matching
    ``Z_+^a x Z^b`` window

    Returns
    -------
    tuple
        (LimitWindow, IsomorphismMap)
    """
    site_id = site if not isinstance(site, tuple) else box.index_of(site)
    fold, a, b = box_fold(box, box.label(site_id), radius)
    window = make_box_limit_window(a, b, radius, origin=fold(box.label(site_id)))
    ball, _, _ = metric(box, site_id, radius)
    mapping = {y: window.index_of(fold(box.label(y))) for y in ball}
    return window, IsomorphismMap(
        box, window.graph, mapping, name=f"fold of {box.label(site_id)}"
    )


def _rotate(point, center, turn):
    di, dj = ROTATIONS[turn](point[0] - center[0], point[1] - center[1])
    return (center[0] + di, center[1] + dj)


def _sierpinski_sets(depth):
    vertices = {(0, 0), (1, 0), (0, 1)}
    edges = {
        frozenset(pair) for pair in itertools.combinations(sorted(vertices), 2)
    }
    for n in range(depth):
        s = 2**n
        copies = [
            lambda p, s=s: _rotate(p, (s, 0), 240),
            lambda p, s=s: _rotate(p, (0, s), 120),
        ]
        new_vertices, new_edges = set(vertices), set(edges)
        for move in copies:
            new_vertices |= {move(p) for p in vertices}
            new_edges |= {frozenset(move(p) for p in e) for e in edges}
        vertices, edges = new_vertices, new_edges
    return vertices, edges


def _graph_from_sets(vertices, edges):
    labels = sorted(vertices)
    index = {lab: i for i, lab in enumerate(labels)}
    pairs = np.array([[index[p] for p in sorted(e)] for e in edges], dtype=np.int64)
    return labels, pairs.reshape(-1, 2)


class SierpinskiGraph(WeightedGraph):
    """Sierpinski gasket graph of depth N with vertices keyed by integer
    coordinates ``(i, j)`` for the point ``i*s1 + j*s2`` of the triangular
    lattice

    Attributes
    ----------
    depth : int

    corners : list
        The three corner labels ``2^N * (0, s1, s2)``
    """

    family = GraphFamily.Sierpinski

    def __init__(self, depth):
        if depth < 0:
            raise ValueError(f"Sierpinski depth must be non-negative, got {depth}")
        self.depth = int(depth)
        scale = 2**self.depth
        self.corners = [(0, 0), (scale, 0), (0, scale)]
        labels, edges = _graph_from_sets(*_sierpinski_sets(self.depth))
        super().__init__(
            len(labels),
            edges,
            EDGE_WEIGHT,
            labels=labels,
            name=f"sierpinski(N={depth})",
        )

    @staticmethod
    def cartesian(label):
        i, j = label
        return i + j / 2, j * np.sqrt(3) / 2


def make_sierpinski(depth):
    """Generate the Sierpinski graph ``G_N`` by gluing three rotated copies
    of ``G_{N-1}`` at their corners"""
    return SierpinskiGraph(depth)


def is_sierpinski_vertex(label, depth):
    """Whether lattice point `label` is a vertex of the depth-`depth` gasket"""
    i, j = label
    if i < 0 or j < 0 or i + j > 2**depth:
        return False
    if depth == 0:
        return True
    half = 2 ** (depth - 1)
    return (
        is_sierpinski_vertex((i, j), depth - 1)
        or is_sierpinski_vertex((i - half, j), depth - 1)
        or is_sierpinski_vertex((i, j - half), depth - 1)
    )


def sierpinski_step(label, level):
    """The surjection ``s_level`` from ``G_{level+1}`` onto ``G_level``"""
    i, j = label
    half = 2**level
    if i + j <= half:
        return (i, j)
    if i >= half:
        return _rotate((i, j), (half, 0), 120)
    if j >= half:
        return _rotate((i, j), (0, half), 240)
    raise ValueError(f"{label} is not a vertex of the Sierpinski graph")


def sierpinski_project(depth, label, source=None):
    """Project a vertex of a deeper Sierpinski graph onto ``G_depth`` by
    composing the surjections ``s_k``

    Parameters
    ----------
    depth : int
        Target depth N

    label : tuple
        Lattice coordinates of the vertex to project

    source : SierpinskiGraph
        Graph the vertex is taken from. Default is None, in which case
        membership is checked against the gasket of the smallest fitting depth

    Raises
    ------
    ValueError
        When `label` is not a vertex of the source graph

    Returns
    -------
    tuple
        Lattice coordinates in ``G_depth``
    """
    label = tuple(int(x) for x in label)
    top = depth
    while label[0] + label[1] > 2**top:
        top += 1
    if source is not None:
        member = _has_label(source, label)
    else:
        member = is_sierpinski_vertex(label, top)
    if not member:
        raise ValueError(f"{label} is not a vertex of the source graph")
    for level in range(top - 1, depth - 1, -1):
        label = sierpinski_step(label, level)
    return label


def _has_label(graph, label):
    try:
        graph.index_of(label)
    except KeyError:
        return False
    return True


def sierpinski_fibers(depth, source):
    """Number of vertices of `source` projecting onto each vertex of ``G_depth``"""
    fibers = {}
    for label in source.labels:
        image = sierpinski_project(depth, label, source)
        fibers[image] = fibers.get(image, 0) + 1
    return fibers


def check_projection_kernel(depth, source_depth):
    """Check exhaustively that one step of the walk on ``G_source_depth``
    projects onto one step of the walk on ``G_depth``: for every vertex
    ``y`` of the source and every ``y'`` of the target,
    ``p(pi(y), y') = sum of p(y, y1) over neighbors y1 with pi(y1) = y'``

    Returns
    -------
    tuple
        (bool, largest absolute deviation)
    """
    low = make_sierpinski(depth)
    high = make_sierpinski(source_depth)
    p_low = low.transition_matrix().tocsr()
    p_high = high.transition_matrix().tocsr()
    images = np.array(
        [low.index_of(sierpinski_project(depth, lab, high)) for lab in high.labels]
    )
    worst = 0.0
    for y in range(high.n):
        start, stop = p_high.indptr[y], p_high.indptr[y + 1]
        projected = np.zeros(low.n)
        targets = images[p_high.indices[start:stop]]
        np.add.at(projected, targets, p_high.data[start:stop])
        expected = p_low[images[y]].toarray().ravel()
        worst = max(worst, float(np.abs(projected - expected).max()))
    return worst <= 1e-12, worst


def mirror(label):
    """Reflection of the lattice about the vertical axis through the origin"""
    i, j = label
    return (-i - j, j)


def make_sierpinski_window(radius, two_sided=False):
    """Ball of `radius` around the origin in the half-plane gasket, or in the
    two-sided gasket made of the half-plane and its mirror image glued at the
    origin

    Returns
    -------
    LimitWindow
    """
    depth = 0
    while 2**depth <= radius:
        depth += 1
    vertices, edges = _sierpinski_sets(depth)
    model = LimitModel.SierpinskiHalf
    if two_sided:
        model = LimitModel.SierpinskiFull
        vertices = vertices | {mirror(p) for p in vertices}
        edges = edges | {frozenset(mirror(p) for p in e) for e in edges}
    labels, pairs = _graph_from_sets(vertices, edges)
    graph = WeightedGraph(len(labels), pairs, EDGE_WEIGHT, labels=labels)
    return _ball_window(
        graph,
        graph.index_of((0, 0)),
        radius,
        model,
        {"two_sided": two_sided},
        f"{model.name} ball(r={radius})",
    )


def sierpinski_site_map(graph, site, radius):
    """Map a ball around the corner ``(0, 0)`` or the bottom midpoint
    ``(2^(N-1), 0)`` of ``G_N`` into the matching limit window.
    The corner ball embeds by the identity into the half-plane gasket, the
    midpoint ball by translation into the two-sided gasket.

    Parameters
    ----------
    graph : SierpinskiGraph

    site : str
        "corner" or "midpoint"

    radius : int

    Raises
    ------
    ValueError
        When the ball reaches another corner of the copy it sits in

    Returns
    -------
    tuple
        (LimitWindow, IsomorphismMap)
    """
    if site == "corner":
        if radius >= 2**graph.depth:
            raise ValueError(f"Radius {radius} too large for depth {graph.depth}")
        shift = (0, 0)
        window = make_sierpinski_window(radius)
    elif site == "midpoint":
        if graph.depth < 1 or radius >= 2 ** (graph.depth - 1):
            raise ValueError(f"Radius {radius} too large for depth {graph.depth}")
        shift = (2 ** (graph.depth - 1), 0)
        window = make_sierpinski_window(radius, two_sided=True)
    else:
        raise ValueError(f"Unknown Sierpinski site '{site}'")
    center = graph.index_of(shift)
    ball, _, _ = metric(graph, center, radius)
    mapping = {}
    for y in ball:
        i, j = graph.label(y)
        mapping[y] = window.index_of((i - shift[0], j - shift[1]))
    return window, IsomorphismMap(graph, window.graph, mapping, name=f"{site} map")


class TreeGraph(WeightedGraph):
    """Ball of radius N around a root in the (d+1)-regular tree.
    Labels are child-index paths from the root; the height of a vertex is
    ``N - dist(root, y)``, so leaves have height 0.

    Attributes
    ----------
    arity : int
        d, the number of children of a non-root vertex

    depth : int
        N

    heights : numpy.ndarray

    root : int
    """

    family = GraphFamily.Tree

    def __init__(self, arity, depth, name=None):
        if arity < 2:
            raise ValueError(f"Tree arity must be at least 2, got d={arity}")
        if depth < 1:
            raise ValueError(f"Tree depth must be at least 1, got N={depth}")
        self.arity = int(arity)
        self.depth = int(depth)
        labels = [()]
        edges = []
        level = [0]
        for n in range(self.depth):
            next_level = []
            for parent in level:
                n_children = self.arity + 1 if n == 0 else self.arity
                for c in range(n_children):
                    edges.append((parent, len(labels)))
                    next_level.append(len(labels))
                    labels.append(labels[parent] + (c,))
            level = next_level
        self.root = 0
        self.heights = np.array([self.depth - len(p) for p in labels], dtype=np.int64)
        super().__init__(
            len(labels),
            np.array(edges, dtype=np.int64),
            EDGE_WEIGHT,
            labels=labels,
            name=f"tree(d={arity}, N={depth})" if name is None else name,
        )

    def height(self, y):
        return int(self.heights[self.check_vertex(y)])


def make_tree(arity, depth):
    """Generate the ball of radius `depth` in the (`arity`+1)-regular tree"""
    return TreeGraph(arity, depth)


def make_regular_tree_window(arity, radius):
    """Ball of `radius` around a vertex of the infinite (d+1)-regular tree"""
    tree = TreeGraph(arity, radius, name=f"regular tree ball(d={arity}, r={radius})")
    return LimitWindow(
        tree, tree.root, radius, LimitModel.RegularTree, params={"d": arity}
    )


def _match_balls(source, s0, target, t0, radius):
    # both balls must be trees
    mapping = {s0: t0}
    queue = [(s0, t0, -1, -1, 0)]
    while queue:
        s, t, s_parent, t_parent, dist = queue.pop()
        if dist == radius:
            continue
        s_next = sorted(int(n) for n in source.neighbors(s)[0] if n != s_parent)
        t_next = sorted(int(n) for n in target.neighbors(t)[0] if n != t_parent)
        if len(s_next) != len(t_next):
            raise ValueError(
                f"Vertex {source.label(s)} has {len(s_next)} children, "
                f"its image has {len(t_next)}"
            )
        for a, b in zip(s_next, t_next):
            mapping[a] = b
            queue.append((a, b, s, t, dist + 1))
    return mapping


def regular_tree_site_map(tree, center, radius):
    """Map the ball of `radius` around `center` onto the regular-tree window.
    The ball must stay above the leaves

    Returns
    -------
    tuple
        (LimitWindow, IsomorphismMap)
    """
    if tree.height(center) <= radius:
        raise ValueError(
            f"Ball of radius {radius} around height {tree.height(center)} "
            "reaches the leaves"
        )
    window = make_regular_tree_window(tree.arity, radius)
    mapping = _match_balls(tree, int(center), window.graph, window.origin, radius)
    return window, IsomorphismMap(tree, window.graph, mapping, name="regular ball map")


class BoundaryTreeWindow(WeightedGraph):
    """Descendants of the vertex ``(cap; 1, 1, ...)`` in the boundary tree.
    A vertex ``(k; s)`` is keyed by ``(k, (s_1, ..., s_{cap-k}))``, the
    remaining label entries being 1. Its parent is ``(k+1; s_2, s_3, ...)``.
    The top vertex is the frontier: its parent lies outside the window.

    Attributes
    ----------
    arity : int

    cap : int
        Height of the top vertex

    heights : numpy.ndarray

    top : int
        Id of the top vertex
    """

    def __init__(self, arity, cap):
        if arity < 2:
            raise ValueError(f"Tree arity must be at least 2, got d={arity}")
        if cap < 0:
            raise ValueError(f"Height cap must be non-negative, got {cap}")
        self.arity = int(arity)
        self.cap = int(cap)
        labels = []
        for k in range(self.cap, -1, -1):
            for s in itertools.product(range(1, self.arity + 1), repeat=self.cap - k):
                labels.append((k, s))
        index = {lab: i for i, lab in enumerate(labels)}
        edges = [
            (index[(k + 1, s[1:])], i)
            for i, (k, s) in enumerate(labels)
            if k < self.cap
        ]
        self.heights = np.array([k for k, _ in labels], dtype=np.int64)
        self.top = 0
        super().__init__(
            len(labels),
            np.array(edges, dtype=np.int64).reshape(-1, 2),
            EDGE_WEIGHT,
            labels=labels,
            name=f"boundary tree(d={arity}, K={cap})",
        )
        self._label_index = index

    @property
    def frontier(self):
        mask = np.zeros(self.n, dtype=bool)
        mask[self.top] = True
        return mask


def make_boundary_tree_window(arity, height, radius):
    """Ball of `radius` around ``(height; 1, 1, ...)`` in the boundary tree

    Returns
    -------
    LimitWindow
    """
    cap = height + radius
    tree = BoundaryTreeWindow(arity, cap)
    origin = tree.index_of((height, (1,) * radius))
    return _ball_window(
        tree,
        origin,
        radius,
        LimitModel.BoundaryTree,
        {"d": arity, "height": height},
        f"boundary tree ball(d={arity}, k={height}, r={radius})",
    )


def tree_boundary_embed(tree, center, radius):
    """Embed the ball of `radius` around `center` into the boundary tree by
    ``y -> (|y|; s(y), 1, 1, ...)``. Children on the path towards `center`
    carry label 1, their siblings 2..d in order; below the path all children
    are labelled 1..d.

    Parameters
    ----------
    tree : TreeGraph

    center : int

    radius : int

    Raises
    ------
    ValueError
        "no common ancestor" when the ball contains the root

    Returns
    -------
    tuple
        (LimitWindow, IsomorphismMap)
    """
    path = tree.label(center)
    if len(path) <= radius:
        raise ValueError("no common ancestor")
    top_depth = len(path) - radius

    def child_label(vertex_path):
        parent, c = vertex_path[:-1], vertex_path[-1]
        if path[: len(parent)] == parent and len(parent) < len(path):
            on_path = path[len(parent)]
            if c == on_path:
                return 1
            others = [x for x in range(tree.arity) if x != on_path]
            return 2 + others.index(c)
        return c + 1

    window = make_boundary_tree_window(tree.arity, tree.height(center), radius)
    ball, _, _ = metric(tree, center, radius)
    mapping = {}
    for y in ball:
        vertex_path = tree.label(y)
        labels = tuple(
            child_label(vertex_path[:n])
            for n in range(len(vertex_path), top_depth, -1)
        )
        mapping[y] = window.index_of((tree.height(y), labels))
    return window, IsomorphismMap(tree, window.graph, mapping, name="boundary embed")


class CylinderView:
    """Implicit view of the cylinder ``G x Z``: a base edge keeps its weight at
    every height and each vertex ``(y, z)`` is joined to ``(y, z +- 1)`` with
    weight 1/2, so ``w_(y, z) = w_y + 1``

    Parameters
    ----------
    base : WeightedGraph
    """

    def __init__(self, base):
        if not base.is_connected():
            raise ValueError("disconnected graph")
        self.base = base
        self.base_weights = base.vertex_weights

    def __repr__(self):
        return f"<cylinder_walks.zoo.CylinderView base:{self.base.name}>\n"

    def vertex_weight(self, vertex):
        y, _ = vertex
        return float(self.base_weights[self.base.check_vertex(y)] + 1.0)

    def neighbors(self, vertex):
        """List of ((y', z'), weight) pairs, base neighbors first"""
        y, z = int(vertex[0]), int(vertex[1])
        ids, weights = self.base.neighbors(y)
        out = [((int(n), z), float(w)) for n, w in zip(ids, weights)]
        out.append(((y, z + 1), EDGE_WEIGHT))
        out.append(((y, z - 1), EDGE_WEIGHT))
        return out

    def weight(self, v1, v2):
        (y1, z1), (y2, z2) = v1, v2
        if z1 == z2:
            return self.base.weight(y1, y2)
        if y1 == y2 and abs(z1 - z2) == 1:
            self.base.check_vertex(y1)
            return EDGE_WEIGHT
        return 0.0

    def base_move_probability(self, y):
        """Probability that a step from ``(y, z)`` moves in the base"""
        w = self.base_weights[y]
        return w / (w + 1.0)


def cylinder_view(base):
    return CylinderView(base)


class CylinderWindow:
    """Ball of `radius` around ``(origin, 0)`` in a limit cylinder
    ``G_m x Z``, materialized as a sparse product of a base window and a
    path. Vertex ``(y, z)`` has distance ``dist(y) + |z|`` from the origin.

    Parameters
    ----------
    base : LimitWindow
        Base window of radius at least `radius`

    radius : int
        Radius of the cylinder ball. Default is the base window radius

    Attributes
    ----------
    graph : WeightedGraph
        Cylinder ball; the weights of interior vertices equal the weights of
        the infinite cylinder

    base_ids, heights, distance : numpy.ndarray
        Base vertex, height and distance of every window vertex

    origin : int
        Id of ``(base origin, 0)``
    """

    def __init__(self, base, radius=None):
        radius = base.radius if radius is None else int(radius)
        if radius > base.radius:
            raise ValueError(
                f"Cylinder radius {radius} exceeds base window radius {base.radius}"
            )
        self.base = base
        self.radius = radius
        n_base, n_z = base.graph.n, 2 * radius + 1
        path = sp.diags(
            [np.full(n_z - 1, EDGE_WEIGHT), np.full(n_z - 1, EDGE_WEIGHT)],
            [-1, 1],
            shape=(n_z, n_z),
        )
        full = sp.kron(sp.identity(n_z), base.graph.adjacency) + sp.kron(
            path, sp.identity(n_base)
        )
        heights = np.repeat(np.arange(-radius, radius + 1), n_base)
        base_ids = np.tile(np.arange(n_base), n_z)
        distance = base.distance[base_ids] + np.abs(heights)
        keep = np.flatnonzero(distance <= radius)
        full = full.tocsr()
        self.graph = WeightedGraph.from_adjacency(
            full[keep][:, keep], name=f"{base.graph.name} x Z ball(r={radius})"
        )
        self.base_ids = base_ids[keep]
        self.heights = heights[keep]
        self.distance = distance[keep]
        self._lookup = np.full(n_base * n_z, -1, dtype=np.int64)
        self._lookup[keep] = np.arange(len(keep))
        self.origin = self.index_of(base.origin, 0)

    def __repr__(self):
        return (
            f"<cylinder_walks.zoo.CylinderWindow base:{self.base.graph.name} "
            f"radius:{self.radius} vertices:{self.graph.n}>\n"
        )

    def index_of(self, y, z):
        """Window id of the cylinder vertex (`y`, `z`) with `y` a base id"""
        if abs(z) > self.radius or not (0 <= y < self.base.graph.n):
            raise KeyError(f"({y}, {z}) is outside the window")
        idx = self._lookup[(int(z) + self.radius) * self.base.graph.n + int(y)]
        if idx < 0:
            raise KeyError(f"({y}, {z}) is outside the window")
        return int(idx)

    def key(self, idx):
        """(base label, height) of window vertex `idx`"""
        return self.base.graph.label(int(self.base_ids[idx])), int(self.heights[idx])

    def frontier(self, radius=None):
        return self.distance == (self.radius if radius is None else radius)

    def cylinder_weights(self):
        """Vertex weights ``w_y + 1`` of the infinite cylinder, exact on the
        base interior"""
        return self.base.graph.vertex_weights[self.base_ids] + 1.0


def beta_ratio(graph):
    """The finite-size ratio ``w(G)/|G|``"""
    return graph.total_weight / graph.n


def limit_beta(graph):
    """Limit of ``w(G_N)/|G_N|`` for the family of `graph`, None if unknown"""
    if isinstance(graph, BoxGraph):
        return float(graph.dim)
    if isinstance(graph, SierpinskiGraph):
        return 2.0
    if isinstance(graph, TreeGraph):
        return 1.0
    return None


def check_family_invariants(graph):
    """Evaluate the count, degree and weight-ratio invariants of a generated
    graph against their closed forms

    Returns
    -------
    dict
        check name -> bool, plus the exact and limit ratios
    """
    degrees = graph.degrees
    pi = graph.vertex_weights / graph.total_weight
    checks = {
        "connected": bool(graph.is_connected()),
        "pi_sums_to_one": bool(abs(pi.sum() - 1.0) < 1e-12),
    }
    if isinstance(graph, BoxGraph):
        n, d = graph.side, graph.dim
        expected = d * (n - 1) / n
        checks["vertex_count"] = graph.n == n**d
        checks["edge_count"] = graph.n_edges == d * n ** (d - 1) * (n - 1)
    elif isinstance(graph, SierpinskiGraph):
        n = graph.depth
        size = 3 + sum(3**k for k in range(1, n + 1))
        expected = 2.0 - 3.0 / size
        checks["vertex_count"] = graph.n == size
        checks["degrees"] = bool(
            np.sum(degrees == 2) == 3 and np.all((degrees == 2) | (degrees == 4))
        )
    elif isinstance(graph, TreeGraph):
        d, n = graph.arity, graph.depth
        size = 1 + (d + 1) * (d**n - 1) // (d - 1)
        expected = 1.0 - 1.0 / size
        leaves = graph.heights == 0
        checks["vertex_count"] = graph.n == size
        checks["degrees"] = bool(
            np.all(degrees[leaves] == 1) and np.all(degrees[~leaves] == d + 1)
        )
    else:
        expected = beta_ratio(graph)
    checks["beta_ratio"] = bool(abs(beta_ratio(graph) - expected) < 1e-12)
    return {
        "checks": checks,
        "beta_ratio": beta_ratio(graph),
        "beta_limit": limit_beta(graph),
    }
