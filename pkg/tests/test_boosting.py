from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import tsboost.boosting as boosting
from helpers import cycle4, grid_graph, instances, path_graph, random_instance
from tsboost.boosting import (
    DUAL_ONLY,
    PRIMAL_DUAL,
    DualCertificate,
    FlowCertificate,
    binary_search_solve,
    boost_fixed_guess,
    full_solve,
    reduce_residual,
    residual_iterations,
    round_bound,
    route_on_tree_repair,
)
from tsboost.errors import NonPositiveGuess, PreconditionerContractViolation
from tsboost.exact import exact_preconditioner, opt_cost, residual_norm, solve_demand
from tsboost.graph import (
    WeightedGraph,
    apply_incidence,
    dual_infeasibility,
    flow_cost,
    minimum_spanning_tree,
    validate_instance,
)
from tsboost.handles import PreconditionerHandle, PreconditionerOutput
from tsboost.preconditioners import SpanningTree, grid_preconditioner, tree_preconditioner


def check_sandwich(inst, report, eps, primal_factor):
    opt = opt_cost(inst)
    g = inst.graph
    assert np.allclose(apply_incidence(g, report.flow), inst.demand, atol=1e-6 * max(1, np.abs(inst.demand).max()))
    assert dual_infeasibility(g, report.potentials) <= 1 + 1e-9
    assert report.dual_value <= opt * (1 + 1e-6)
    assert report.dual_value >= opt / (1 + eps) * (1 - 1e-6)
    assert report.primal_cost <= primal_factor * opt * (1 + 1e-6)
    assert report.primal_cost >= opt * (1 - 1e-6)


class TestFixedGuess:
    def test_large_guess_gives_flow(self):
        inst = random_instance(12, 24, 1)
        opt = opt_cost(inst)
        out = boost_fixed_guess(inst, exact_preconditioner(inst.graph), 10 * opt, 0.5)
        assert isinstance(out, FlowCertificate)
        assert out.rounds == 1
        assert np.allclose(apply_incidence(inst.graph, out.flow), inst.demand)
        assert out.cost <= 1.5 * 10 * opt

    @pytest.mark.parametrize("mode", [PRIMAL_DUAL, DUAL_ONLY])
    def test_small_guess_gives_dual(self, mode):
        inst = random_instance(12, 24, 2)
        opt = opt_cost(inst)
        g = opt / 1.6
        out = boost_fixed_guess(inst, exact_preconditioner(inst.graph), g, 0.5, mode)
        assert isinstance(out, DualCertificate)
        assert dual_infeasibility(inst.graph, out.phi) <= 1 + 1e-9
        assert out.value >= g * (1 - 1e-9)
        assert out.value <= opt * (1 + 1e-9)

    def test_without_early_stop_runs_every_round(self):
        inst = random_instance(6, 8, 3)
        h = exact_preconditioner(inst.graph)
        g = opt_cost(inst) / 2
        out = boost_fixed_guess(inst, h, g, 0.5, early_stop=False)
        assert isinstance(out, DualCertificate)
        assert out.rounds == round_bound(0.5, 1.0, inst.m)
        assert out.value >= g * (1 - 1e-9)
        assert dual_infeasibility(inst.graph, out.phi) <= 1 + 1e-9

    def test_zero_demand(self):
        inst = validate_instance(path_graph(3), [0, 0, 0])
        out = boost_fixed_guess(inst, exact_preconditioner(inst.graph), 1.0, 0.5)
        assert isinstance(out, FlowCertificate)
        assert not out.flow.any() and out.rounds == 0

    @pytest.mark.parametrize("g", [0.0, -1.0])
    def test_nonpositive_guess(self, p3, g):
        with pytest.raises(NonPositiveGuess):
            boost_fixed_guess(p3, exact_preconditioner(p3.graph), g, 0.5)

    def test_epsilon_range(self, p3):
        with pytest.raises(ValueError):
            boost_fixed_guess(p3, exact_preconditioner(p3.graph), 1.0, 1.5)

    def test_contract_violation_is_reported(self, p3):
        bad = PreconditionerHandle(lambda d: PreconditionerOutput(np.array([5.0, 0.0, 0.0])), 1.0, True, "bad")
        with pytest.raises(PreconditionerContractViolation):
            boost_fixed_guess(p3, bad, 1.0, 0.5, DUAL_ONLY)

    def test_primal_dual_mode_needs_a_flow(self, p3):
        handle = PreconditionerHandle(lambda d: PreconditionerOutput(np.zeros(3)), 1.0, True, "dual")
        with pytest.raises(ValueError):
            boost_fixed_guess(p3, handle, 1.0, 0.5, PRIMAL_DUAL)

    @pytest.mark.parametrize("mode", [PRIMAL_DUAL, DUAL_ONLY])
    def test_per_round_invariants(self, monkeypatch, mode):
        inst = random_instance(10, 20, 5)
        graph = inst.graph
        base = tree_preconditioner(graph)
        flows, demands = [], []
        real = boosting.apply_incidence

        def spy(g, f):
            flows.append(np.array(f, dtype=float))
            return real(g, f)

        def query(d):
            demands.append((len(flows), np.array(d)))
            return base(d)

        monkeypatch.setattr(boosting, "apply_incidence", spy)
        handle = PreconditionerHandle(query, base.alpha, False, "spy")
        g = opt_cost(inst) * 1.05
        boost_fixed_guess(inst, handle, g, 0.2, mode, early_stop=False)
        assert demands
        for k, d_res in demands:
            f_t = flows[k - 1]
            assert flow_cost(graph, f_t) <= g * (1 + 1e-12)
            assert np.allclose(d_res + real(graph, f_t), inst.demand, atol=1e-9)


@settings(max_examples=40)
@given(instances(max_n=10), st.floats(0.3, 3.0), st.sampled_from([0.5, 0.25]), st.sampled_from(["exact", "tree"]))
def test_certificates_are_sound(inst, factor, eps, kind):
    opt = opt_cost(inst)
    if opt == 0:
        return
    h = exact_preconditioner(inst.graph) if kind == "exact" else tree_preconditioner(inst.graph)
    g = factor * opt
    for mode in (PRIMAL_DUAL, DUAL_ONLY):
        out = boost_fixed_guess(inst, h, g, eps, mode)
        assert out.rounds <= round_bound(eps, h.alpha, inst.m)
        if isinstance(out, DualCertificate):
            assert dual_infeasibility(inst.graph, out.phi) <= 1 + 1e-9
            assert out.value >= g * (1 - 1e-9)
            assert out.value <= opt * (1 + 1e-9)
        elif mode == PRIMAL_DUAL:
            assert np.allclose(apply_incidence(inst.graph, out.flow), inst.demand, atol=1e-6)
            assert opt * (1 - 1e-9) <= out.cost <= (1 + eps) * g * (1 + 1e-9)
        else:
            assert out.cost <= g * (1 + 1e-9)
            assert np.allclose(out.residual, inst.demand - apply_incidence(inst.graph, out.flow))
            assert residual_norm(inst.graph, inst.demand, out.flow) <= out.residual_bound * (1 + 1e-9) + 1e-9
            assert out.residual_bound <= eps * g * (1 + 1e-9)
            assert out.upper_bound >= opt * (1 - 1e-9)


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("factor", [0.6, 0.95, 1.05, 1.6])
@pytest.mark.parametrize("mode", [PRIMAL_DUAL, DUAL_ONLY])
@pytest.mark.parametrize("early_stop", [True, False])
def test_compiled_tree_loop_matches_generic(seed, factor, mode, early_stop):
    inst = random_instance(10, 18, seed)
    h = tree_preconditioner(inst.graph)
    g = factor * opt_cost(inst)
    fast = boost_fixed_guess(inst, h, g, 0.5, mode, early_stop=early_stop)
    slow = boost_fixed_guess(inst, h, g, 0.5, mode, early_stop=early_stop, compiled=False)
    assert type(fast) is type(slow) and fast.rounds == slow.rounds
    if isinstance(fast, DualCertificate):
        assert fast.value == pytest.approx(slow.value, rel=1e-6)
        assert np.allclose(fast.phi, slow.phi, rtol=1e-6, atol=1e-9)
    else:
        assert fast.cost == pytest.approx(slow.cost, rel=1e-6)
        assert np.allclose(fast.flow, slow.flow, rtol=1e-6, atol=1e-9)


class TestBinarySearch:
    def test_single_edge(self):
        inst = validate_instance(WeightedGraph(2, [(0, 1, 5)]), [1, -1])
        r = binary_search_solve(inst, exact_preconditioner(inst.graph), 0.5, PRIMAL_DUAL)
        assert r.primal_cost == 5
        assert r.dual_value >= 10 / 3

    @pytest.mark.parametrize("seed", range(30))
    def test_exact_handle_random(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 51))
        inst = random_instance(n, min(n * (n - 1) // 2, int(rng.integers(n - 1, 3 * n))), 1000 + seed)
        r = binary_search_solve(inst, exact_preconditioner(inst.graph), 0.1, PRIMAL_DUAL)
        check_sandwich(inst, r, 0.1, 1.1)
        assert len(r.guesses_tried) <= math.ceil(math.log(n) / math.log(1.1)) + 2

    @pytest.mark.parametrize("seed", range(6))
    def test_tree_handle_primal_dual(self, seed):
        inst = random_instance(15, 30, 50 + seed)
        h = tree_preconditioner(inst.graph)
        r = binary_search_solve(inst, h, 0.25, PRIMAL_DUAL)
        check_sandwich(inst, r, 0.25, 1.25)
        for rounds in r.rounds_per_guess:
            assert rounds <= round_bound(0.8 * 0.25, h.alpha, inst.m)
        assert r.preconditioner_calls == sum(r.rounds_per_guess)

    @pytest.mark.parametrize("seed", range(6))
    def test_dual_only_contract(self, seed):
        inst = random_instance(15, 30, 70 + seed)
        eps = 0.25
        r = binary_search_solve(inst, tree_preconditioner(inst.graph), eps, DUAL_ONLY)
        opt = opt_cost(inst)
        assert r.primal_cost <= opt * (1 + 1e-9)
        assert residual_norm(inst.graph, inst.demand, r.flow) <= eps * opt * (1 + 1e-9)
        assert np.allclose(r.residual, inst.demand - apply_incidence(inst.graph, r.flow))
        assert opt / (1 + eps) * (1 - 1e-9) <= r.dual_value <= opt * (1 + 1e-9)

    def test_stop_hook_sees_the_returned_flow(self):
        inst = random_instance(20, 40, 9)
        seen = []

        def stop(phi, flow):
            seen.append((phi, flow))
            return len(seen) == 2

        r = binary_search_solve(inst, tree_preconditioner(inst.graph), 0.05, DUAL_ONLY, stop=stop)
        assert len(r.guesses_tried) == 2
        assert np.array_equal(seen[-1][1], r.flow) and np.array_equal(seen[-1][0], r.potentials)
        assert r.primal_cost <= opt_cost(inst) * (1 + 1e-9)

    def test_bracket_shrinks_every_step(self):
        inst = random_instance(20, 40, 9)
        r = binary_search_solve(inst, tree_preconditioner(inst.graph), 0.1, PRIMAL_DUAL)
        ratios = [u / l for l, u in r.brackets]
        assert len(ratios) == len(r.guesses_tried) + 1
        assert all(b < a for a, b in zip(ratios, ratios[1:]))
        assert ratios[-1] <= 1.1 * (1 + 1e-12)
        opt = opt_cost(inst)
        assert all(l <= opt * (1 + 1e-9) and u >= opt * (1 - 1e-9) for l, u in r.brackets)

    def test_initial_bracket_from_the_tree(self):
        inst = random_instance(20, 40, 10)
        r = binary_search_solve(inst, exact_preconditioner(inst.graph), 0.1, PRIMAL_DUAL)
        lower, upper = r.brackets[0]
        assert upper / lower <= inst.n - 1

    def test_zero_demand(self):
        inst = validate_instance(cycle4(), np.zeros(4))
        r = binary_search_solve(inst, exact_preconditioner(inst.graph), 0.1)
        assert r.primal_cost == 0 and r.dual_value == 0 and not r.guesses_tried

    def test_dual_only_handle_rejected_in_primal_dual_mode(self, p3):
        handle = PreconditionerHandle(lambda d: PreconditionerOutput(np.zeros(3)), 1.0, True)
        with pytest.raises(ValueError):
            binary_search_solve(p3, handle, 0.1, PRIMAL_DUAL)


class TestResidual:
    def test_iteration_count(self):
        assert residual_iterations(20, 0.5, 2.0) == math.ceil(2 * math.log(20) / math.log(4)) + 1

    @pytest.mark.parametrize("kind", ["exact", "tree"])
    def test_twenty_vertices(self, kind):
        inst = random_instance(20, 40, 11)
        h = exact_preconditioner(inst.graph) if kind == "exact" else tree_preconditioner(inst.graph)
        f, phi = reduce_residual(inst, h, 0.5, C=2.0)
        opt = opt_cost(inst)
        assert residual_norm(inst.graph, inst.demand, f) <= opt / 20**2 * (1 + 1e-9) + 1e-9
        assert flow_cost(inst.graph, f) <= 1.5 * opt * (1 + 1e-9)
        assert dual_infeasibility(inst.graph, phi) <= 1 + 1e-9

    def test_zero(self):
        inst = validate_instance(cycle4(), np.zeros(4))
        f, phi = reduce_residual(inst, exact_preconditioner(inst.graph), 0.5)
        assert not f.any() and not phi.any()

    def test_epsilon_above_half_rejected(self, p3):
        with pytest.raises(ValueError):
            reduce_residual(p3, exact_preconditioner(p3.graph), 0.75)


class TestRepair:
    def test_zero(self):
        g = cycle4()
        assert not route_on_tree_repair(g, minimum_spanning_tree(g), np.zeros(4)).any()

    def test_star(self):
        # leaves 0 and 1 around the center 2
        g = WeightedGraph(3, [(0, 2, 1), (1, 2, 1)])
        f = route_on_tree_repair(g, [0, 1], [2, -2, 0])
        assert f.tolist() == [2, -2]
        assert flow_cost(g, f) == 4

    def test_improper_residual(self):
        g = cycle4()
        with pytest.raises(ValueError):
            route_on_tree_repair(g, [0, 1, 2], [1, 0, 0, 0])


class TestFullSolve:
    @pytest.mark.parametrize("seed", range(30))
    def test_exact_handle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 41))
        inst = random_instance(n, min(n * (n - 1) // 2, 2 * n), 2000 + seed)
        for eps in (0.5, 0.1):
            check_sandwich(inst, full_solve(inst, exact_preconditioner(inst.graph), eps), eps, 1 + 2 * eps)

    @pytest.mark.parametrize("eps", [0.5, 0.25, 0.1])
    def test_tree_on_four_cycle(self, eps):
        g = cycle4()
        inst = validate_instance(g, [3, -1, 2, -4])
        h = tree_preconditioner(g, SpanningTree(g, [0, 1, 2]))
        r = full_solve(inst, h, eps)
        check_sandwich(inst, r, eps, 1 + 2 * eps)
        assert r.preconditioner_calls <= len(r.guesses_tried) * round_bound(eps, 3.0, 4)

    def test_zero(self):
        inst = validate_instance(cycle4(), np.zeros(4))
        r = full_solve(inst, tree_preconditioner(inst.graph), 0.1)
        assert not r.flow.any() and not r.potentials.any() and r.primal_cost == 0

    def test_single_vertex(self):
        inst = validate_instance(WeightedGraph(1, []), [0.0])
        assert full_solve(inst, exact_preconditioner(inst.graph), 0.25).primal_cost == 0

    def test_grid_handle(self):
        g, coords = grid_graph(3)
        inst = validate_instance(g, [2, 0, -1, 0, 0, 3, -4, 0, 0])
        h = grid_preconditioner(g, coords, seed=0)
        r = full_solve(inst, h, 0.5)
        check_sandwich(inst, r, 0.5, 2.0)

    def test_without_early_stop(self):
        inst = random_instance(6, 8, 12)
        r = full_solve(inst, exact_preconditioner(inst.graph), 0.5, early_stop=False)
        check_sandwich(inst, r, 0.5, 2.0)

    def test_dual_is_exact_when_the_handle_is(self):
        inst = random_instance(25, 60, 13)
        r = full_solve(inst, exact_preconditioner(inst.graph), 0.1)
        assert r.primal_cost == pytest.approx(solve_demand(inst.graph, inst.demand).opt_cost, rel=1e-9)
