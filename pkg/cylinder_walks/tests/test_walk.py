import os
import pytest
import numpy as np
from hypothesis import given, settings, strategies as st
from cylinder_walks import walk
from cylinder_walks.graph import WeightedGraph
from cylinder_walks.utils import derive_rng
from cylinder_walks.zoo import cylinder_view, make_box

os.chdir(os.path.dirname(os.path.abspath(__file__)))

# set skip_all_tests = True to focus on single test
skip_all_tests = False


def path_graph(n):
    return WeightedGraph(n, [(i, i + 1) for i in range(n - 1)])


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
@pytest.mark.parametrize(
    "start, steps, expected",
    [
        (0, 0, 0),
        (2, 50, 50),
        (0, -1, "ValueError"),
        (9, 10, "IndexError"),
    ],
)
def test_run_discrete(start, steps, expected):
    graph = path_graph(5)
    try:
        traj = walk.run_discrete(graph, start, steps, seed=3)
        assert traj.vertex(0) == start
        result = traj.steps
    except Exception as err:
        result = type(err).__name__
    assert result == expected


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_run_discrete_moves_along_edges():
    graph = path_graph(6)
    traj = walk.run_discrete(graph, 0, 200, seed=1)
    assert np.all(np.abs(np.diff(traj.vertices)) == 1)
    assert traj == walk.run_discrete(graph, 0, 200, seed=1)
    assert traj != walk.run_discrete(graph, 0, 200, seed=2)


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_cylinder_step_is_base_or_height():
    view = cylinder_view(make_box(3, 2))
    traj = walk.run_discrete(view, (4, 0), 500, seed=0)
    assert traj.is_cylinder
    base_moved = traj.vertices[1:] != traj.vertices[:-1]
    assert np.all(base_moved ^ traj.height_moves)
    assert np.all(np.abs(np.diff(traj.heights)) <= 1)


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_cylinder_base_share():
    # every vertex of the two-vertex base has weight 1/2, so a step moves in
    # the base with probability 1/3
    view = cylinder_view(path_graph(2))
    traj = walk.run_discrete(view, (0, 0), 30000, seed=11)
    share = 1.0 - traj.height_moves.mean()
    assert share == pytest.approx(1.0 / 3.0, abs=0.015)


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_run_continuous():
    view = cylinder_view(make_box(3, 2))
    traj = walk.run_continuous(view, (0, 0), 25.0, seed=4)
    assert traj.is_continuous
    assert len(traj.exponentials) == traj.steps + 1
    assert np.all(np.diff(traj.jump_times) >= 0)
    assert traj.jump_times[-1] <= 25.0
    assert traj.eta(25.0) == traj.steps
    assert traj.eta(0.0) == 0
    base, height = traj.eta_split(25.0)
    assert base + height == traj.steps
    with pytest.raises(ValueError):
        traj.eta(26.0)
    with pytest.raises(ValueError):
        walk.run_continuous(view, (0, 0), -1.0)


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_occupation_time_adds_up():
    view = cylinder_view(path_graph(3))
    traj = walk.run_continuous(view, (1, 0), 40.0, seed=5)
    heights = set(traj.heights.tolist())
    total = sum(walk.occupation_time(traj, z) for z in heights)
    assert total == pytest.approx(40.0)


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_poisson_sandwich(seed):
    view = cylinder_view(WeightedGraph(3, [(0, 1), (1, 2)], [0.5, 2.0]))
    assert walk.rate_bounds(view) == (1.5, 3.5)
    count = walk.poisson_sandwich(view, (0, 0), 10.0, seed=seed)
    assert count.holds


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_passage_times():
    graph = path_graph(4)
    traj = walk.Trajectory(graph, [1, 2, 1, 0, 1, 2, 3])
    passages, records = walk.passage_and_local_times(
        traj, targets={"A": [2, 3], "start": [1]}
    )
    assert (passages["A"].entrance, passages["A"].exit, passages["A"].return_) == (
        1,
        0,
        1,
    )
    start = passages["start"]
    assert (start.entrance, start.exit, start.return_) == (0, 1, 2)
    assert records == {}
    assert passages["A"].to_dict()["entrance_time"] is None


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_passage_never_reached():
    traj = walk.Trajectory(path_graph(4), [0, 1, 0])
    passages, _ = walk.passage_and_local_times(traj, targets={"far": [3]})
    assert passages["far"].entrance is None
    assert passages["far"].return_ is None


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_local_times():
    view = cylinder_view(path_graph(2))
    # heights 0 0 1 1 0 with base moves at steps 1 and 3
    traj = walk.Trajectory(view, [0, 1, 1, 0, 0], [0, 0, 1, 1, 0])
    _, records = walk.passage_and_local_times(traj, sites=[0, 1])
    assert (records[0].L, records[0].L_hat) == (2, 1)
    assert (records[1].L, records[1].L_hat) == (2, 1)
    assert walk.local_time_by_blocks(traj, 0) == 2
    assert walk.local_time_by_blocks(traj, 1) == 2


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_local_times_need_cylinder():
    traj = walk.Trajectory(path_graph(2), [0, 1])
    with pytest.raises(ValueError):
        walk.passage_and_local_times(traj, sites=[0])


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_continuous_local_times_stop_at_nth_jump():
    view = cylinder_view(make_box(3, 2))
    traj = walk.run_continuous(view, (0, 0), 40.0, seed=3)
    sites = list(range(-traj.steps, traj.steps + 1))
    n = traj.steps // 2
    # the sites cover every height, so the occupation times add up to the
    # time of the n-th jump
    _, records = walk.passage_and_local_times(traj, sites=sites, n=n)
    total = sum(record.L_cont for record in records.values())
    assert total == pytest.approx(traj.jump_times[n - 1])
    _, records = walk.passage_and_local_times(traj, sites=sites)
    total = sum(record.L_cont for record in records.values())
    assert total == pytest.approx(traj.horizon)


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=10**6),
    n=st.integers(min_value=1, max_value=300),
)
def test_local_time_from_height_skeleton(seed, n):
    view = cylinder_view(make_box(3, 2))
    traj = walk.run_discrete(view, (0, 0), 300, seed=seed)
    _, records = walk.passage_and_local_times(traj, sites=[-2, -1, 0, 1, 2], n=n)
    for z, record in records.items():
        assert walk.local_time_by_blocks(traj, z, n=n) == record.L


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
@pytest.mark.parametrize(
    "z, low, high, expected",
    [(1, 0, 4, 0.25), (3, 0, 4, 0.75), (0, -5, 5, 0.5)],
)
def test_ruin_probability(z, low, high, expected):
    assert walk.ruin_probability(z, low, high) == pytest.approx(expected)


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
@pytest.mark.parametrize(
    "interval, z, z_exit, expected",
    [
        ((-3, 3), 0, 3, 3),
        ((-3, 3), 0, -3, -3),
        ((-3, 3), 0, 2, "unreachable exit"),
        ((-3, 3), 3, 3, "unreachable exit"),
    ],
)
def test_conditioned_excursion(interval, z, z_exit, expected):
    base = make_box(3, 2)
    try:
        traj, attempts = walk.conditioned_excursion(base, interval, z, z_exit, seed=2)
        assert attempts >= 1
        assert np.all((traj.heights[:-1] > interval[0]) & (traj.heights[:-1] < 3))
        result = int(traj.heights[-1])
    except ValueError as err:
        result = str(err)
    assert result == expected


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
@pytest.mark.parametrize(
    "inner, z, expected",
    [
        ((-1, 1), 1, 3),
        ((-1, 1), -1, 3),
        ((-1, 1), 0, "entry height 0 is not on the boundary of (-1, 1)"),
        ((-3, 1), 1, "inner interval (-3, 1) is not inside (-3, 3)"),
    ],
)
def test_conditioned_excursion_entry_heights(inner, z, expected):
    try:
        traj, _ = walk.conditioned_excursion(
            make_box(3, 2), (-3, 3), z, 3, inner=inner, seed=2
        )
        assert traj.heights[0] == z
        result = int(traj.heights[-1])
    except ValueError as err:
        result = str(err)
    assert result == expected


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_ensemble_on_single_vertex_base():
    view = cylinder_view(WeightedGraph(1, []))
    ensemble = walk.WalkEnsemble(view, np.zeros(8), np.zeros(8), derive_rng(0, "test"))
    for _ in range(5):
        _, height_moved = ensemble.step()
        assert height_moved.all()
    assert (ensemble.y == 0).all()
    assert (ensemble.z % 2 == 1).all()
    assert (np.abs(ensemble.z) <= 5).all()


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_ensemble_observers():
    view = cylinder_view(make_box(3, 2))
    walkers = 64
    ensemble = walk.WalkEnsemble(
        view, np.zeros(walkers), np.zeros(walkers), derive_rng(0, "test")
    )
    heights = np.arange(-40, 41)
    local = walk.LocalTimeObserver(heights)
    skeleton = walk.SkeletonLocalTimeObserver(heights)
    hits = walk.HitObserver([(0, 0), (8, 0)])
    assert ensemble.run(steps=40, observers=(local, skeleton, hits)) == 40
    np.testing.assert_array_equal(local.counts.sum(axis=1), np.full(walkers, 40))
    np.testing.assert_array_equal(skeleton.counts.sum(axis=1), ensemble.height_jumps)
    assert hits.hits[:, 0].all()


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_continuous_ensemble_stops_at_horizon():
    view = cylinder_view(make_box(3, 2))
    walkers = 32
    ensemble = walk.WalkEnsemble(
        view, np.zeros(walkers), np.zeros(walkers), derive_rng(1, "test"), horizon=5.0
    )
    clocks = walk.JumpClockObserver([1.0, 5.0])
    ensemble.run(observers=(clocks,))
    assert not ensemble.active.any()
    assert np.all(ensemble.clock <= 5.0)
    np.testing.assert_array_equal(
        clocks.counts[:, 1], ensemble.jumps - ensemble.height_jumps
    )
    assert np.all(clocks.counts[:, 0] <= clocks.counts[:, 1])


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_jump_clock_needs_horizon():
    view = cylinder_view(path_graph(2))
    ensemble = walk.WalkEnsemble(view, [0], [0], derive_rng(0, "test"))
    with pytest.raises(ValueError):
        ensemble.run(steps=1, observers=(walk.JumpClockObserver([1.0]),))


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_z_visit_probability_at_start():
    p, se = walk.z_visit_probability(0, 0, 0.0, 5.0, 200, seed=1)
    assert p == 1.0
    assert se < 1e-3


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
@pytest.mark.parametrize("continuous", [False, True])
def test_dump_load_trajectory(tmp_path, continuous):
    view = cylinder_view(make_box(3, 2))
    if continuous:
        traj = walk.run_continuous(view, (2, -3), 20.0, seed=9)
    else:
        traj = walk.run_discrete(view, (2, -3), 400, seed=9)
    path = str(tmp_path / "walk.bin")
    walk.dump_trajectory(traj, path)
    loaded = walk.load_trajectory(path, view)
    assert loaded == traj
    assert loaded.seed == 9


@pytest.mark.skipif(skip_all_tests, reason="Exclude all tests")
def test_load_trajectory_rejects_other_files(tmp_path):
    path = tmp_path / "walk.bin"
    path.write_bytes(b"not a walk")
    with pytest.raises(ValueError):
        walk.load_trajectory(str(path), None)
