import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mwopinion.analysis import predict
from mwopinion.core import CouplingSpec, FeedbackConfig, Topology
from mwopinion.scenarios import builtin
from mwopinion.sim import (
    DivergenceError,
    compare,
    conservation_check,
    detect_clusters,
    group_values,
    integrate,
    lyapunov_trace,
    rk4_step,
)

from conftest import random_psd, random_topology


def two_agents(k=1.5):
    return Topology.from_edges(2, 1, [(1, 2)]), CouplingSpec.from_matrices([[[k]]])


def closed_form(x0, k, t):
    m = x0.mean()
    return m + (x0 - m) * np.exp(-2 * k * t)


def test_rk4_step_exponential():
    # one step of RK4 on x' = -x is the degree-4 Taylor polynomial of e^{-h}
    h = 0.1
    expected = 1 - h + h**2 / 2 - h**3 / 6 + h**4 / 24
    assert rk4_step(lambda x: -x, np.array([1.0]), h)[0] == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("smoothing", ["exact", "sigmoid"])
def test_two_agent_closed_form(smoothing):
    topo, spec = two_agents()
    x0 = np.array([1.0, -2.0])
    traj = integrate(x0, topo, spec, FeedbackConfig(smoothing=smoothing), h=1e-3, t_f=3.0)
    expected = np.array([closed_form(x0, 1.5, t) for t in traj.times])
    assert np.max(np.abs(traj.states - expected)) < 1e-8


def test_step_halving_fourth_order():
    topo, spec = two_agents()
    x0 = np.array([1.0, -2.0])
    cfg = FeedbackConfig(smoothing="exact")

    def err(h):
        return np.max(np.abs(integrate(x0, topo, spec, cfg, h=h, t_f=2.0).final - closed_form(x0, 1.5, 2.0)))

    for h in (0.05, 0.025):
        assert 12 <= err(h) / err(h / 2) <= 20


def test_consensus_state_is_fixed(ref_topology, fig5_spec):
    x0 = np.tile([2.0, -1.0, 0.5], 5)
    for cfg in (FeedbackConfig(), FeedbackConfig(mode="proportional"), FeedbackConfig(smoothing="exact")):
        traj = integrate(x0, ref_topology, fig5_spec, cfg, h=1e-2, t_f=1.0)
        np.testing.assert_array_equal(traj.final, x0)


def test_single_agent_stays_constant():
    topo = Topology.from_edges(1, 2, [])
    traj = integrate([[3.0, -1.0]], topo, CouplingSpec.from_matrices([]), h=0.1, t_f=1.0)
    np.testing.assert_array_equal(traj.states, np.tile([3.0, -1.0], (11, 1)))


def test_horizon_rounding_and_shapes(ref_topology, fig5_spec, ref_x0):
    traj = integrate(ref_x0, ref_topology, fig5_spec, h=0.01, t_f=0.1)
    assert traj.states.shape == (11, 15)
    assert traj.times[-1] == pytest.approx(0.1)
    assert traj.opinions(0).shape == (5, 3)


def test_integrate_rejects_bad_inputs(ref_topology, fig5_spec, ref_x0):
    with pytest.raises(ValueError):
        integrate(ref_x0, ref_topology, fig5_spec, h=0.0)
    with pytest.raises(ValueError):
        integrate(ref_x0[:-1], ref_topology, fig5_spec)


def test_anti_coupled_requires_opt_in_and_diverges():
    topo, _ = two_agents()
    spec = CouplingSpec.from_matrices([[[1.0]]], [[[True]]])
    with pytest.raises(ValueError):
        integrate([1.0, -1.0], topo, spec)
    with pytest.raises(DivergenceError):
        integrate([1.0, -1.0], topo, spec, h=1e-2, t_f=20.0, allow_unstable=True)


def test_conservation_and_lyapunov_fig5():
    s = builtin("fig5")
    traj = integrate(s.initial, s.topology, s.spec, s.config, h=1e-2, t_f=5.0)
    assert conservation_check(traj) < 1e-10
    assert lyapunov_trace(traj).monotone
    np.testing.assert_allclose(traj.V_dot, -(traj.phi + traj.psi))
    assert np.all(traj.V_dot <= 1e-12)


def test_lyapunov_derivative_matches_finite_difference():
    s = builtin("fig6")
    traj = integrate(s.initial, s.topology, s.spec, s.config, h=1e-3, t_f=0.5)
    fd = np.gradient(traj.V, traj.h)
    np.testing.assert_allclose(fd[5:-5], traj.V_dot[5:-5], rtol=1e-4, atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), mode=st.sampled_from(["inverse", "proportional"]))
def test_random_psd_runs_conserve_and_decrease(seed, mode):
    rng = np.random.default_rng(seed)
    topo = random_topology(rng, n_max=5, d_max=3)
    spec = CouplingSpec.from_matrices(random_psd(rng, topo.d) for _ in topo.edges)
    x0 = rng.normal(size=topo.n * topo.d) * 2
    traj = integrate(x0, topo, spec, FeedbackConfig(mode=mode), h=1e-2, t_f=2.0)
    assert conservation_check(traj) < 1e-9 * max(1.0, np.abs(x0).sum())
    assert lyapunov_trace(traj).monotone


def test_group_values_chaining():
    assert group_values([0.0, 0.0005, 0.001, 5.0], 1e-3) == ((1, 2, 3), (4,))
    assert group_values([3.0, 1.0, 2.0], 0.5) == ((1,), (2,), (3,))
    assert group_values([1.0], 1e-3) == ((1,),)


def test_detect_clusters_fig6():
    s = builtin("fig6")
    traj = integrate(s.initial, s.topology, s.spec, s.config, h=s.h, t_f=s.t_f)
    out = detect_clusters(traj)
    assert out.settled
    assert out.topic_components[0] == ((1, 2, 3), (4, 5))
    assert out.consensus == (False, True, True)
    assert out.clusters == ((1, 2, 3), (4, 5))
    doc = out.to_dict()
    assert doc["topics"][0]["verdict"] == "clustered"
    assert compare(predict(s.topology, s.spec), out).status == "PASS"


def test_compare_complete_fail_on_short_run():
    s = builtin("fig5")
    traj = integrate(s.initial, s.topology, s.spec, s.config, h=1e-2, t_f=0.5)
    rec = compare(predict(s.topology, s.spec), detect_clusters(traj))
    assert rec.status == "FAIL" and not rec.passed
    assert any("not settled" in n for n in rec.notes)


def test_compare_partial_mismatch_fails():
    s = builtin("fig6")
    traj = integrate(s.initial, s.topology, s.spec, s.config, h=1e-2, t_f=0.5)
    rec = compare(predict(s.topology, s.spec), detect_clusters(traj))
    assert rec.status == "FAIL"
    assert any(n.startswith("topic") for n in rec.notes)


def test_compare_no_guarantee_is_informational():
    s = builtin("fig8")
    traj = integrate(s.initial, s.topology, s.spec, s.config, h=s.h, t_f=s.t_f)
    rec = compare(predict(s.topology, s.spec), detect_clusters(traj))
    assert rec.status == "INFO" and rec.passed
    assert "topic 2: consensus" in rec.notes


def test_exact_mode_speed_uses_window():
    topo, spec = two_agents()
    traj = integrate([1.0, -1.0], topo, spec, FeedbackConfig(smoothing="exact"), h=1e-2, t_f=15.0)
    out = detect_clusters(traj)
    assert out.settled and out.consensus == (True,)
