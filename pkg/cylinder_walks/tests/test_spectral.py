import os
import pytest
import numpy as np
from cylinder_walks import spectral
from cylinder_walks.graph import WeightedGraph
from cylinder_walks.utils import EigenMethod
from cylinder_walks.zoo import make_box, make_sierpinski, make_tree

os.chdir(os.path.dirname(os.path.abspath(__file__)))

# set skip_all_tests = True to focus on single test
skip_all_tests = False


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
@pytest.mark.parametrize(
    "graph, expected",
    [
        (WeightedGraph(2, [(0, 1)]), (1.0, 2.0)),
        (make_sierpinski(0), (1.5, 1.5)),
        (make_box(4, 2), (1.0 - np.cos(np.pi / 4), None)),
        (WeightedGraph(1, []), "ValueError"),
        (WeightedGraph(4, [(0, 1), (2, 3)], check_connected=False), "ValueError"),
    ],
)
def test_spectral_gap(graph, expected):
    try:
        report = spectral.spectral_gap(graph)
        result = (report.lambda_, report.lambda_d)
    except Exception as err:
        result = type(err).__name__
    if isinstance(expected, str):
        assert result == expected
    else:
        assert result[0] == pytest.approx(expected[0])
        if expected[1] is not None:
            assert result[1] == pytest.approx(expected[1])


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_disconnected_message():
    graph = WeightedGraph(4, [(0, 1), (2, 3)], check_connected=False)
    with pytest.raises(ValueError, match="disconnected graph"):
        spectral.spectral_gap(graph)


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
@pytest.mark.parametrize(
    "graph", [make_box(10, 2), make_sierpinski(3), make_tree(2, 4)]
)
def test_dense_and_iterative_agree(graph):
    dense = spectral.spectral_gap(graph, method=EigenMethod.Dense)
    iterative = spectral.spectral_gap(graph, method=EigenMethod.Iterative)
    assert iterative.lambda_ == pytest.approx(dense.lambda_, rel=1e-6)
    assert iterative.lambda_d == pytest.approx(dense.lambda_d, rel=1e-6)
    assert iterative.fiedler is None
    assert dense.to_dict()["relaxation_time"] == pytest.approx(1.0 / dense.lambda_)


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
@pytest.mark.parametrize(
    "graph", [make_box(5, 2), make_sierpinski(2), make_tree(2, 3)]
)
def test_rayleigh_and_gap_comparison(graph):
    report = spectral.spectral_gap(graph)
    rayleigh = spectral.rayleigh_check(graph, report, trials=50, seed=1)
    assert rayleigh["holds"]
    assert rayleigh["eigenvector_quotient"] == pytest.approx(report.lambda_)
    comparison = spectral.gap_comparison(graph, report)
    assert comparison["holds"]
    assert comparison["lower"] <= comparison["upper"]


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_dirichlet_form_and_variance():
    graph = WeightedGraph(3, [(0, 1), (1, 2)], [0.5, 2.0])
    f = [0.0, 1.0, 3.0]
    assert spectral.dirichlet_form(graph, f) == pytest.approx((0.5 + 8.0) / 3)
    assert spectral.variance(f) == pytest.approx(np.var(f))
    assert spectral.dirichlet_form(graph, np.ones(3)) == 0.0


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
@pytest.mark.parametrize(
    "lambda_, n, eps, expected",
    [
        (1.0, 2, 0.5, True),
        (1e-6, 100, 0.5, False),
        (2e-3, 100, 0.5, True),
    ],
)
def test_a2_holds(lambda_, n, eps, expected):
    report = spectral.SpectralReport(lambda_, lambda_, EigenMethod.Dense, n)
    assert spectral.a2_holds(report, eps) == expected


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
@pytest.mark.parametrize(
    "graph", [make_box(4, 2), make_sierpinski(2), make_tree(2, 3)]
)
def test_mixing_certificate(graph):
    rows = spectral.mixing_certificate(graph, [0.0, 0.5, 2.0, 10.0])
    assert all(row.holds for row in rows)
    assert rows[0].bound == 1.0
    assert rows[0].sup == pytest.approx(1.0 - 1.0 / graph.n)
    assert rows[-1].sup < rows[0].sup


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
@pytest.mark.parametrize(
    "times, side, expected",
    [([-1.0], 3, "ValueError"), ([1.0], 50, "ValueError")],
)
def test_mixing_certificate_errors(times, side, expected):
    try:
        result = spectral.mixing_certificate(make_box(side, 2), times)
    except Exception as err:
        result = type(err).__name__
    assert result == expected


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_heat_kernel():
    graph = WeightedGraph(3, [(0, 1), (1, 2)])
    kernel = spectral.heat_kernel(graph, 3, 0)
    np.testing.assert_allclose(kernel.sum(axis=1), 1.0)
    np.testing.assert_allclose(kernel[1], [0.0, 1.0, 0.0])
    np.testing.assert_allclose(kernel[2], [0.5, 0.0, 0.5])


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_kernel_sum():
    graph = WeightedGraph(3, [(0, 1), (1, 2)])
    report = spectral.spectral_gap(graph)
    total, terms = spectral.kernel_sum(graph, [0], [1], report, 0.5, max_terms=2)
    # p_1(0, 1) = 1 and p_2(0, 1) = 0
    assert terms == 2
    assert total == pytest.approx(1.0)


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_sierpinski_gap_scaling():
    table = spectral.sierpinski_gap_table([1, 2, 3, 4])
    assert table["vertices"].tolist() == [6, 15, 42, 123]
    assert np.all(np.diff(table["lambda_d"]) < 0)
    assert table["scaled"].between(0.5, 6.0).all()


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_tree_gap_constants():
    table, spread = spectral.tree_gap_constants(2, [3, 4, 5])
    assert table["N"].tolist() == [3, 4, 5]
    assert (table["c"] > 0).all()
    assert np.isfinite(spread)
