import os
import pytest
from cylinder_walks import experiments
from cylinder_walks.potential import CapacityEstimate
from cylinder_walks.tests.test_experiments import synthetic_records
from cylinder_walks.utils import SolveMethod
from cylinder_walks.visualize import draw_graph, plot_vacancy_curve, vertex_roles
from cylinder_walks.zoo import make_box, make_box_limit_window, make_sierpinski

os.chdir(os.path.dirname(os.path.abspath(__file__)))

# set skip_all_tests = True to focus on single test
skip_all_tests = False


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_vertex_roles():
    window = make_box_limit_window(0, 2, 2)
    roles = vertex_roles(
        window.graph, sites=[window.origin], frontier=window.frontier, targets=[1]
    )
    assert roles[window.origin] == "site"
    assert roles.count("frontier") == int(window.frontier.sum()) - (
        1 if window.frontier[1] else 0
    )
    assert len(roles) == window.graph.n


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
@pytest.mark.parametrize(
    "graph, pyvis, outname",
    [
        (make_box(4, 2), False, "box.png"),
        (make_sierpinski(2), False, "sierpinski.png"),
        (make_box(3, 2), True, "box.html"),
    ],
)
def test_draw_graph(tmp_path, graph, pyvis, outname):
    outpath = str(tmp_path / outname)
    draw_graph(graph, vertex_roles(graph, sites=[0]), pyvis=pyvis, output_file=outpath)
    assert os.path.exists(outpath)


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_draw_graph_checks_roles(tmp_path):
    with pytest.raises(ValueError):
        draw_graph(make_box(3, 2), ["vertex"], output_file=str(tmp_path / "x.png"))


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_plot_vacancy_curve(tmp_path):
    estimate = CapacityEstimate(2.0, 2.0, 2.0, SolveMethod.Exact)
    report = experiments.conditional_vacant_law_test(
        synthetic_records(12000, 1.0, seed=1), 0, estimate, 1.0
    )
    outpath = str(tmp_path / "curve.png")
    plot_vacancy_curve(report, output_file=outpath)
    assert os.path.exists(outpath)
