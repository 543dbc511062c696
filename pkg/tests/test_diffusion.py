import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dysuse.diffusion import DiffusionModelSpec, init_state, run_dynamic, run_snapshot, step_ic, step_lt, step_tr
from dysuse.errors import ValidationError
from dysuse.rng import SimulationStreams
from toy import graph, random_small_graph, static

IC, LT, TR = (DiffusionModelSpec(k) for k in ("IC", "LT", "TR"))


def streams(n=1, seed=0):
    return SimulationStreams(seed, np.arange(n))


def test_spec_validation():
    with pytest.raises(ValidationError):
        DiffusionModelSpec("SIR")
    with pytest.raises(ValidationError):
        DiffusionModelSpec("IC", hop_cap=0)
    with pytest.raises(ValidationError):
        DiffusionModelSpec("IC", attempt_policy="sometimes")


def test_init_state_seeds_only():
    g = static(3, [(0, 1), (1, 2)])
    st_ = init_state(g, IC, [0], streams(4))
    assert st_.influenced.tolist() == [[True, False, False]] * 4
    empty = init_state(g, IC, [], streams(2))
    assert not empty.influenced.any()


def test_empty_seeds_never_spread():
    g = static(3, [(0, 1), (1, 2)], T=2)
    for spec in (IC, LT, TR):
        assert not run_dynamic(g, spec, [], streams(20)).any()


def test_lt_thresholds_reproducible():
    g = static(4, [(0, 1)])
    a = init_state(g, LT, [0], streams(5, seed=8)).lt_thresholds
    b = init_state(g, LT, [0], streams(5, seed=8)).lt_thresholds
    assert np.array_equal(a, b)


def test_step_ic_certain_and_impossible():
    g = static(3, [(0, 1, 1.0), (0, 2, 0.0)])
    st_ = init_state(g, IC, [0], streams(100))
    newly = step_ic(g[0], st_, st_.influenced.copy())
    assert newly[:, 1].all() and not newly[:, 2].any()


def test_step_ic_half():
    g = static(2, [(0, 1, 0.5)])
    st_ = init_state(g, IC, [0], streams(20_000, seed=1))
    newly = step_ic(g[0], st_, st_.influenced.copy())
    assert 0.48 <= newly[:, 1].mean() <= 0.52


def test_step_lt_threshold():
    g = static(3, [(0, 2, 0.5), (1, 2, 0.5)])
    st_ = init_state(g, LT, [0], streams(1))
    st_.lt_thresholds[:] = 0.4
    assert step_lt(g[0], st_)[0, 2]
    st_ = init_state(g, LT, [0], streams(1))
    st_.lt_thresholds[:] = 0.6
    assert not step_lt(g[0], st_)[0, 2]
    st_.influenced[0, 1] = True
    assert step_lt(g[0], st_)[0, 2]


def test_step_lt_zero_mass():
    g = static(3, [(0, 1, 1.0)])
    st_ = init_state(g, LT, [], streams(1))
    st_.lt_thresholds[:] = 1e-9
    assert not step_lt(g[0], st_).any()


def test_step_tr_trigger_sets():
    g = static(2, [(0, 1, 1.0)])
    st_ = init_state(g, TR, [0], streams(3))
    assert step_tr(g[0], st_)[:, 1].all()
    g0 = static(2, [(0, 1, 0.0)])
    st_ = init_state(g0, TR, [0], streams(50))
    assert not step_tr(g0[0], st_).any()


def test_hop_cap():
    g = static(3, [(0, 1), (1, 2)])
    capped = run_dynamic(g, DiffusionModelSpec("IC", hop_cap=1), [0], streams(1))
    assert capped[-1, 0].tolist() == [True, True, False]
    full = run_dynamic(g, IC, [0], streams(1))
    assert full[-1, 0].tolist() == [True, True, True]


def test_unreachable_node():
    g = static(4, [(0, 1), (1, 2)], T=2)
    for spec in (IC, LT, TR):
        assert not run_dynamic(g, spec, [0], streams(30))[:, :, 3].any()


def test_edge_appears_later():
    g = graph(2, ([0, 1], []), ([0, 1], [(0, 1)]))
    traj = run_dynamic(g, IC, [0], streams(1))
    assert traj[0, 0].tolist() == [True, False]
    assert traj[1, 0].tolist() == [True, True]


def test_absent_node_keeps_status_and_resumes():
    g = graph(3, ([0, 1], [(0, 1)]), ([0, 2], []), ([0, 1, 2], [(1, 2)]))
    traj = run_dynamic(g, IC, [0], streams(1))
    assert traj[:, 0, 1].tolist() == [True, True, True]
    assert traj[:, 0, 2].tolist() == [False, False, True]


def test_absent_node_is_inert():
    # node 1 is influenced at t=0 but absent at t=1, so the edge is not usable
    g = graph(3, ([0, 1], [(0, 1)]), ([0, 2], []), ([0, 1, 2], []))
    traj = run_dynamic(g, IC, [0], streams(1))
    assert not traj[:, 0, 2].any()


def test_once_ever_constant_on_static_graph():
    g = static(4, [(0, 1, 0.5), (1, 2, 0.5), (2, 3, 0.5), (0, 3, 0.3)], T=4)
    for kind in ("IC", "TR"):
        traj = run_dynamic(g, DiffusionModelSpec(kind, attempt_policy="once-ever"), [0], streams(200, seed=2))
        assert (traj == traj[0]).all()


def test_per_snapshot_keeps_growing():
    g = static(2, [(0, 1, 0.5)], T=2)
    traj = run_dynamic(g, IC, [0], streams(4000, seed=5))
    assert traj[1, :, 1].mean() > traj[0, :, 1].mean() + 0.15


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["IC", "LT", "TR"]), st.sampled_from(["per-snapshot", "once-ever"]))
def test_monotone_and_seeds_kept(seed, kind, policy):
    rng = np.random.default_rng(seed)
    g = random_small_graph(rng, max_nodes=6, max_edges=8, max_T=4)
    seeds = [0]
    traj = run_dynamic(g, DiffusionModelSpec(kind, attempt_policy=policy), seeds, streams(16, seed))
    assert (traj[1:] >= traj[:-1]).all()
    assert traj[:, :, 0].all()
    again = run_dynamic(g, DiffusionModelSpec(kind, attempt_policy=policy), seeds, streams(16, seed))
    assert np.array_equal(traj, again)


def test_run_snapshot_respects_presence():
    g = graph(3, ([0, 1, 2], [(0, 1, 1.0)]))
    st_ = init_state(g, IC, [0], streams(2))
    run_snapshot(g[0], st_)
    assert st_.influenced[:, 1].all() and not st_.influenced[:, 2].any()
