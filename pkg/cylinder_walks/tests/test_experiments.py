import os
import math
import pytest
import numpy as np
from cylinder_walks import experiments
from cylinder_walks.experiments import (
    BrownianLocalTimeRef,
    SitePlan,
    SiteSpec,
    TrialRecord,
)
from cylinder_walks.graph import WeightedGraph
from cylinder_walks.logbook import Logbook, LogCode
from cylinder_walks.potential import CapacityEstimate
from cylinder_walks.utils import LimitModel, SolveMethod
from cylinder_walks.walk import HitObserver, run_discrete
from cylinder_walks.zoo import cylinder_view, make_box

os.chdir(os.path.dirname(os.path.abspath(__file__)))

# set skip_all_tests = True to focus on single test
skip_all_tests = False


def center_plan(shape="single", alpha=1.0):
    return SitePlan([SiteSpec("center", 0.0, shape, radius=1)], alpha=alpha)


def synthetic_records(n, slope, seed=0):
    rng = np.random.default_rng(seed)
    U = rng.uniform(0.0, 2.0, size=n)
    vacant = rng.random(n) < np.exp(-slope * U)
    return [
        TrialRecord(25, i, seed, [vacant[i]], [U[i]]) for i in range(n)
    ]


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
@pytest.mark.parametrize(
    "family, size, expected",
    [
        ("box", 4, 16),
        ("sierpinski", 2, 15),
        ("tree", 3, 22),
        ("file", 3, "ValueError"),
    ],
)
def test_build_graph(family, size, expected):
    try:
        result = experiments.build_graph(family, size).n
    except Exception as err:
        result = type(err).__name__
    assert result == expected


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
@pytest.mark.parametrize(
    "kwargs, expected",
    [
        ({"position": "center"}, "single"),
        ({"position": "center", "shape": "triple"}, "triple"),
        ({"position": "center", "shape": "ring"}, "ValueError"),
        ({"position": "center", "radius": 0}, "ValueError"),
    ],
)
def test_site_spec(kwargs, expected):
    try:
        result = SiteSpec(**kwargs).shape
    except Exception as err:
        result = type(err).__name__
    assert result == expected


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
@pytest.mark.parametrize("alpha, eps", [(-0.1, 0.5), (1.0, 0.0), (1.0, 1.0)])
def test_site_plan_errors(alpha, eps):
    with pytest.raises(ValueError):
        SitePlan([SiteSpec("center")], alpha=alpha, eps=eps)


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_resolve_box_site():
    plan = SitePlan(
        [SiteSpec("center", 0.0, "pair", 1), SiteSpec("corner", 0.4, "triple", 1)]
    )
    center, corner = plan.resolve(make_box(5, 2))
    assert (center.y, center.z) == (12, 0)
    assert (corner.y, corner.z) == (0, 10)
    assert center.window.model == LimitModel.Lattice
    # distance 0 at three heights plus four neighbors at height 0
    assert len(center.ball_keys) == 7
    assert center.target_vertices == [(12, 0), (12, 1)]
    assert len(corner.target_vertices) == 3
    assert plan.to_dict()["sites"][1]["shape"] == "triple"


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_resolve_empty_shape():
    (site,) = center_plan("empty").resolve(make_box(5, 2))
    assert site.target_keys == []
    assert site.target_vertices == []


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
@pytest.mark.parametrize(
    "graph, sites, expected",
    [
        (make_box(5, 2), [SiteSpec("apex")], "Unknown site position"),
        (make_box(5, 2), [SiteSpec("center", radius=2)], "window exceeds"),
        (
            make_box(5, 2),
            [SiteSpec("center", radius=1), SiteSpec("center", radius=1)],
            "only 0 apart",
        ),
        (WeightedGraph(2, [(0, 1)]), [SiteSpec("center")], "no site family"),
    ],
)
def test_resolve_errors(graph, sites, expected):
    with pytest.raises(ValueError, match=expected):
        SitePlan(sites).resolve(graph)


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_resolve_tree_sites():
    tree = experiments.build_graph("tree", 5)
    plan = SitePlan([SiteSpec("interior", 0.0), SiteSpec("boundary", 0.5)])
    interior, boundary = plan.resolve(tree)
    assert interior.y == tree.root
    assert interior.window.model == LimitModel.RegularTree
    assert boundary.window.model == LimitModel.BoundaryTree


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_vacant_configuration():
    box = make_box(5, 2)
    (site,) = center_plan().resolve(box)
    view = cylinder_view(box)
    traj = run_discrete(view, (site.y, 0), 100, seed=7)
    window = experiments.vacant_configuration(traj, site, 0)
    assert window.bits().count("0") == 1
    assert not window.is_vacant(site.target_positions)
    for t in (0, 10, 100):
        assert experiments.dual_accounting(traj, site, t)
    with pytest.raises(ValueError):
        experiments.vacant_configuration(traj, site, 101)

    far = run_discrete(view, (0, 5), 100, seed=7)
    assert experiments.vacant_configuration(far, site, 0).is_vacant()
    assert experiments.first_visit(traj, site.target_vertices) == 0


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_trial_record():
    record = TrialRecord(25, 3, 0, [True], [0.5], eta=40, eta_base=12)
    assert record.to_dict()["vacant"] == [1]
    assert '"eta_base": 12' in record.to_json()
    frame = experiments.records_frame([record])
    assert frame.loc[0, "U"] == 0.5


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_run_theorem_experiment():
    plan = center_plan()
    records, report = experiments.run_theorem_experiment(
        "box", [5, 7], plan, 16, seed=3, batch_size=8
    )
    assert len(records) == 32
    assert [r.trial for r in records[:16]] == list(range(16))
    assert [a["trials"] for a in report["sizes"]] == [16, 16]
    assert all(a["failed"] == 0 for a in report["sizes"])
    assert report["mode"] == "Discrete"
    assert "jump_rate_trend" not in report
    site = report["sizes"][0]["sites"][0]
    assert 0.0 <= site["vacancy"] <= 1.0
    assert site["U_mean"] > 0.0
    again, _ = experiments.run_theorem_experiment(
        "box", [5, 7], plan, 16, seed=3, batch_size=8
    )
    assert [r.to_json() for r in again] == [r.to_json() for r in records]


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_run_theorem_experiment_continuous():
    records, report = experiments.run_theorem_experiment(
        "box", [5, 7], center_plan(), 12, mode="continuous", seed=1, batch_size=6
    )
    assert all(r.eta >= r.eta_base >= 0 for r in records)
    assert "base_jump_rate" in report["sizes"][0]
    assert report["jump_rate_trend"] in ("Pass", "Fail", "Inconclusive")


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_failed_trials_are_logged(monkeypatch):
    def broken(targets):
        raise RuntimeError("observer failed")

    monkeypatch.setattr(experiments, "HitObserver", broken)
    logbook = Logbook()
    records, report = experiments.run_theorem_experiment(
        "box", [5], center_plan(), 10, batch_size=4, logbook=logbook
    )
    assert records == []
    assert report["sizes"][0]["failed"] == 10
    errors = logbook.query(code=LogCode.Error, stage="simulate")
    assert len(errors) == 10
    assert all("RuntimeError" in e.text for e in errors.values())
    trials = {e.text.split(" at ")[0] for e in errors.values()}
    assert trials == {f"trial {k}" for k in range(10)}


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_failing_trial_spares_its_batch(monkeypatch):
    singles = []

    class FlakyHits(HitObserver):
        # whole batches fail, and so does the third walker run on its own
        def start(self, ensemble):
            if len(ensemble) > 1:
                raise RuntimeError("batch failed")
            singles.append(ensemble)
            if len(singles) == 3:
                raise RuntimeError("walker left the window")
            super().start(ensemble)

    monkeypatch.setattr(experiments, "HitObserver", FlakyHits)
    logbook = Logbook()
    records, report = experiments.run_theorem_experiment(
        "box", [5], center_plan(), 10, batch_size=4, logbook=logbook
    )
    assert [r.trial for r in records] == [0, 1, 3, 4, 5, 6, 7, 8, 9]
    assert report["sizes"][0]["failed"] == 1
    errors = list(logbook.query(code=LogCode.Error, stage="simulate").values())
    assert len(errors) == 1
    assert errors[0].text.startswith("trial 2 at |G|=25: RuntimeError")


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_conditional_vacant_law():
    estimate = CapacityEstimate(2.0, 2.0, 2.0, SolveMethod.Exact)
    records = synthetic_records(12000, 1.0, seed=5)
    result = experiments.conditional_vacant_law_test(records, 0, estimate, 1.0)
    assert result["expected_slope"] == pytest.approx(1.0)
    assert result["relative_error"] < 0.1
    assert result["max_abs_z"] < 5.0
    assert len(result["bins"]) == 8


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
@pytest.mark.parametrize(
    "n, bracket, expected",
    [
        (500, (2.0, 2.0), "insufficient records per bin"),
        (12000, (1.0, 3.0), "bracket too wide"),
    ],
)
def test_conditional_vacant_law_errors(n, bracket, expected):
    estimate = CapacityEstimate(2.0, *bracket, SolveMethod.Exact)
    with pytest.raises(ValueError, match=expected):
        experiments.conditional_vacant_law_test(
            synthetic_records(n, 1.0), 0, estimate, 1.0
        )


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_vacancy_independence():
    rng = np.random.default_rng(2)
    n = 4000
    U = rng.uniform(0.0, 1.0, size=(n, 2))
    vacant = rng.random((n, 2)) < 0.5
    records = [TrialRecord(25, i, 0, vacant[i], U[i]) for i in range(n)]
    assert experiments.vacancy_independence(records, 0, 1) < 5.0


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_brownian_local_time_mean():
    ref = BrownianLocalTimeRef(K=400, seed=1)
    draws = ref.sample(0.0, 1.0, 4000)
    assert draws.mean() == pytest.approx(math.sqrt(2.0 / math.pi), abs=0.05)
    assert np.all(draws >= 1.0 / 20)
    np.testing.assert_array_equal(draws, ref.sample(0.0, 1.0, 4000))
    check = ref.scaling_check(0.0, 4.0, 500)
    assert 0.0 <= check["pvalue"] <= 1.0


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_brownian_local_time_errors():
    with pytest.raises(ValueError):
        BrownianLocalTimeRef(K=0)
    with pytest.raises(ValueError):
        BrownianLocalTimeRef().sample(0.0, -1.0, 10)


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_local_time_marginal():
    ref = BrownianLocalTimeRef(K=100, seed=0)
    U = 2.0 * ref.sample(0.0, 0.5, 2000, key=9)
    records = [TrialRecord(25, i, 0, [1], [u]) for i, u in enumerate(U)]
    result = experiments.local_time_marginal_test(
        records, 0, 1.0, 1.0, 0.0, ref, n_ref=2000
    )
    assert result["U_mean"] == pytest.approx(result["reference_mean"], rel=0.1)
    assert result["pvalue"] > 1e-3


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_site_capacity():
    (site,) = center_plan().resolve(make_box(11, 2))
    estimate = experiments.site_capacity(site, 3)
    assert estimate.lower <= estimate.value <= estimate.upper
    assert estimate.value > 0.0


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_capacity_comparison_without_targets():
    gap = experiments.capacity_comparison(make_box(5, 2), center_plan("empty"), 3)
    assert gap == {"box": 0.0, "limit_sum": 0.0, "difference": 0.0}
