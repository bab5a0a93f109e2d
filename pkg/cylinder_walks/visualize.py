import numpy as np
import networkx as nx
import matplotlib.pyplot as plt
from pyvis.network import Network
from matplotlib.lines import Line2D

# vertex role to (node color, font color) mapping
color_map = {
    "vertex": ("lightgray", "black"),
    "site": ("red", "white"),
    "frontier": ("cornflowerblue", "black"),
    "target": ("orange", "black"),
}


def vertex_roles(graph, sites=(), frontier=None, targets=()):
    """Role of every vertex of `graph` for coloring

    Parameters
    ----------
    graph : WeightedGraph

    sites : list of int
        site (or window origin) ids

    frontier : numpy.ndarray
        boolean mask of frontier vertices. Default is None

    targets : list of int
        ids of target-set vertices

    Returns
    -------
    list of str
    """
    roles = ["vertex"] * graph.n
    if frontier is not None:
        for y in np.flatnonzero(frontier):
            roles[y] = "frontier"
    for y in targets:
        roles[y] = "target"
    for y in sites:
        roles[y] = "site"
    return roles


def draw_graph(graph, roles=None, pyvis=False, output_file=None):
    """Draw a base graph or a limit window with vertices colored by role

    Parameters
    ----------
    graph : WeightedGraph

    roles : list of str
        one key of `color_map` per vertex. Default is None, all plain

    pyvis : bool
        Whether to draw the graph with PyVis or Networkx.
        False (networkx) by default

    output_file : str
        Path to the desired output.
        Default is None, meaning the file is named after the graph
    """
    g = graph.to_networkx()
    roles = ["vertex"] * graph.n if roles is None else roles
    if len(roles) != graph.n:
        raise ValueError(f"Expected {graph.n} roles, got {len(roles)}")
    stem = graph.name.replace(" ", "_") or "graph"
    present = sorted(set(roles), key=list(color_map).index)
    if pyvis:
        nt = Network("500px", "500px", directed=False, notebook=False)
        for y in g.nodes():
            color, font = color_map[roles[y]]
            nt.add_node(
                y,
                label=str(g.nodes[y]["label"]),
                color=color,
                title=roles[y],
                font={"color": font},
            )
        for a, b, data in g.edges(data=True):
            nt.add_edge(a, b, value=data["weight"], title=f"w={data['weight']:g}")
        nt.show(output_file or stem + ".html", notebook=False)
    else:
        fig, ax = plt.subplots()
        custom_lines = [
            Line2D([0], [0], marker="o", lw=0, color=color_map[role][0])
            for role in present
        ]
        ax.legend(custom_lines, present)
        positions = _positions(graph, g)
        nx.draw(
            g,
            pos=positions,
            ax=ax,
            node_size=40 if graph.n > 100 else 200,
            node_color=[color_map[role][0] for role in roles],
            with_labels=graph.n <= 30,
        )
        ax.set_title(graph.name)
        plt.axis("off")
        plt.tight_layout()
        fig.savefig(output_file or stem + ".png")
        plt.close(fig)


def _positions(graph, g):
    """Planar coordinates from integer-tuple labels when there are two of
    them, a spring layout otherwise"""
    labels = [graph.label(y) for y in range(graph.n)]
    if all(isinstance(x, tuple) and len(x) == 2 for x in labels):
        coords = [(float(a), float(b)) for a, b in labels]
        if len(set(coords)) == graph.n:
            return dict(enumerate(coords))
    return nx.spring_layout(g, seed=0)


def plot_vacancy_curve(report, output_file=None):
    """Plot binned vacancy frequencies against ``U`` with the predicted
    ``exp(-U cap / (1 + beta))`` curve

    Parameters
    ----------
    report : dict
        output of `conditional_vacant_law_test`

    output_file : str
        Default is None, meaning "vacancy_curve.png"
    """
    bins = report["bins"]
    u = np.array([row["U"] for row in bins])
    frequency = np.array([row["frequency"] for row in bins])
    n = np.array([row["n"] for row in bins])
    spread = np.sqrt(np.maximum(frequency * (1 - frequency), 1.0 / n) / n)
    grid = np.linspace(0, max(u.max(), 1e-9) * 1.1, 200)
    fig, ax = plt.subplots()
    ax.errorbar(u, frequency, yerr=3 * spread, fmt="o", color="black", label="binned")
    ax.plot(
        grid,
        np.exp(-grid * report["expected_slope"]),
        color="red",
        label="predicted",
    )
    ax.plot(
        grid,
        np.exp(-grid * report["slope"]),
        color="cornflowerblue",
        ls="--",
        label="fitted",
    )
    ax.set_xlabel("U")
    ax.set_ylabel("vacancy frequency")
    ax.set_yscale("log")
    ax.legend()
    plt.tight_layout()
    fig.savefig(output_file or "vacancy_curve.png")
    plt.close(fig)
