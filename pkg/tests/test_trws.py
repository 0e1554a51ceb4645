import numpy as np
import pytest

from persistency.lp_oracle import all_labelings, brute_force_minimum, support_sets
from persistency.model import (
    GraphicalModel,
    Reparametrization,
    dual_lower_bound,
    energies,
    grid_edges,
    random_model,
    reparametrized,
    reparametrized_pairwise,
    reparametrized_unary,
)
from persistency.substitution import SubsetToOne
from persistency.trws import (
    TRWS,
    AccessCounter,
    active_labels,
    arc_consistency_check,
    build_chains,
    chain_lower_bound,
    dual_correct,
    margin,
    message,
    spread_inactive,
)
from persistency.verification import reduce

from conftest import chain_edges, random_labeling, random_subset_to_one, tiny_instance, zero_model


def converge(f, sweeps=100):
    s = TRWS(f)
    for _ in range(sweeps):
        s.sweep()
    return s


def random_phi(f, rng, scale=3.0):
    phi = Reparametrization.zeros(f)
    for e, (u, v) in enumerate(f.edges):
        phi.tail[e][:] = rng.normal(0, scale, f.labels[u])
        phi.head[e][:] = rng.normal(0, scale, f.labels[v])
    phi.offset[:] = rng.normal(0, scale, f.n_nodes)
    return phi


def make_feasible(f, phi):
    g = reparametrized(f, phi)
    for e in range(f.n_edges):
        phi.tail[e] += g.pairwise[e].min()
    g = reparametrized(f, phi)
    phi.offset += np.array([t.min() for t in g.unary])
    return phi


def tree_instance(rng, n=None):
    n = n or int(rng.integers(2, 7))
    edges = [(int(rng.integers(v)), v) for v in range(1, n)]
    labels = [int(rng.integers(2, 4)) for _ in range(n)]
    return random_model(labels, edges, "full", (-10, 10), rng)


class TestChains:
    def test_path(self):
        dec = build_chains(zero_model((2,) * 4, chain_edges(4)))
        assert dec.chains == ((0, 1, 2, 3),) and dec.n_chains == (1, 1, 1, 1)

    def test_grid_rows_and_columns(self):
        dec = build_chains(zero_model((2,) * 4, grid_edges(2, 2)))
        assert sorted(dec.chains) == [(0, 1), (0, 2), (1, 3), (2, 3)]
        assert dec.n_chains == (2, 2, 2, 2)

    def test_grid_3x3_straight(self):
        dec = build_chains(zero_model((2,) * 9, grid_edges(3, 3)))
        assert sorted(dec.chains) == [(0, 1, 2), (0, 3, 6), (1, 4, 7), (2, 5, 8), (3, 4, 5), (6, 7, 8)]

    def test_isolated_node(self):
        dec = build_chains(zero_model((2,) * 3, [(0, 1)]))
        assert dec.isolated == (False, False, True) and dec.n_chains[2] == 1

    def test_edges_covered_once(self, rng):
        for _ in range(20):
            f = tiny_instance(rng)
            dec = build_chains(f)
            flat = sorted(e for c in dec.chain_edges for e in c)
            assert flat == list(range(f.n_edges))


class TestPasses:
    def test_zero_model(self):
        f = zero_model((2, 3), [(0, 1)])
        s = TRWS(f)
        r = s.sweep()
        assert r.lower_bound == 0
        assert all(np.all(a == 0) for a in s.phi.tail + s.phi.head)

    def test_single_edge_one_pass(self, rng):
        for _ in range(10):
            f = tiny_instance(rng, "chain")
            f = random_model(f.labels[:2], [(0, 1)], "full", (-10, 10), rng)
            assert TRWS(f).forward().lower_bound == pytest.approx(brute_force_minimum(f)[0])

    def test_lower_bound_monotone(self, rng):
        for _ in range(100):
            f = tiny_instance(rng)
            s = TRWS(f)
            lbs = [s.sweep().lower_bound for _ in range(15)]
            assert all(b >= a - 1e-9 for a, b in zip(lbs, lbs[1:]))
            assert lbs[-1] <= brute_force_minimum(f)[0] + 1e-9

    def test_pass_bound_is_valid_chain_bound(self, rng):
        for _ in range(20):
            f = tiny_instance(rng)
            s = TRWS(f)
            for _ in range(5):
                r = s.sweep()
            assert r.lower_bound <= chain_lower_bound(f, s.phi) + 1e-9

    def test_tree_convergence(self, rng):
        for _ in range(30):
            f = tree_instance(rng)
            s = TRWS(f)
            lb = max(s.sweep().lower_bound for _ in range(100))
            assert lb == pytest.approx(brute_force_minimum(f)[0], abs=1e-6)

    def test_energies_preserved(self, rng):
        for _ in range(30):
            f = tiny_instance(rng)
            s = converge(f, 10)
            g = reparametrized(f, s.phi)
            X = next(all_labelings(f.labels))
            assert np.allclose(energies(g, X), energies(f, X), rtol=0, atol=1e-9)


class TestAveragedDualPoint:
    def test_feasible_after_correction_with_chain_bound(self, rng):
        for _ in range(30):
            f = tree_instance(rng)
            s = converge(f)
            phi = dual_correct(s.averaged_dual_point(), f)
            b = dual_lower_bound(f, phi)
            assert b.feasible
            assert b.value == pytest.approx(brute_force_minimum(f)[0], abs=1e-6)


def random_input(r, u_side, rng):
    """Message input constant on the sender's immovable labels."""
    mask = r.masks[u_side]
    a = rng.normal(0, 5, mask.size)
    a[~mask] = rng.normal(0, 5)
    return a


class TestMessage:
    def test_empty_y_is_broadcast_min(self, rng):
        f = tiny_instance(rng, "chain")
        r = reduce(f, SubsetToOne.identity((0,) * f.n_nodes))
        a = np.full(f.labels[0], 2.5)
        out = message(a, r, 0)
        assert np.array_equal(out, np.full(f.labels[1], 2.5))

    @pytest.mark.parametrize("family", ["potts", "full", "truncated_linear"])
    def test_reduced_equals_naive(self, rng, family):
        for _ in range(300):
            f = tiny_instance(rng, family="full" if family == "truncated_linear" else family, labels=(2, 5))
            if family == "truncated_linear":
                tables = []
                for u, v in f.edges:
                    i, j = np.meshgrid(np.arange(f.labels[u]), np.arange(f.labels[v]), indexing="ij")
                    tables.append(float(rng.integers(1, 5)) * np.minimum(np.abs(i - j), float(rng.integers(1, 4))))
                f = f.replace(pairwise=tables)
            if not f.n_edges:
                continue
            y = random_labeling(f, rng)
            r = reduce(f, random_subset_to_one(f, y, rng, density=rng.random()))
            e = int(rng.integers(f.n_edges))
            reverse = bool(rng.integers(2))
            u, v = f.edges[e]
            a = random_input(r, v if reverse else u, rng)
            fast = message(a, r, e, reverse, reduced=True)
            naive = message(a, r, e, reverse, reduced=False)
            assert np.allclose(fast, naive, rtol=0, atol=1e-9)

    def test_potts_single_labels_reads_four_entries(self):
        f = GraphicalModel((4, 4), [(0, 1)], [np.zeros(4)] * 2, [3.0 * (1 - np.eye(4))])
        r = reduce(f, SubsetToOne((0, 0), ((2,), (3,))))
        counter = AccessCounter()
        message(np.array([1.0, 1.0, -2.0, 1.0]), r, 0, counter=counter)
        assert counter.count == 4

    def test_access_count_bound(self, rng):
        for _ in range(200):
            f = tiny_instance(rng, "chain", labels=(2, 5))
            r = reduce(f, random_subset_to_one(f, random_labeling(f, rng), rng, density=rng.random()))
            u, v = f.edges[0]
            counter = AccessCounter()
            message(random_input(r, u, rng), r, 0, counter=counter)
            nu, nv = int(r.masks[u].sum()), int(r.masks[v].sum())
            assert counter.count <= 2 * (nu + nv) + nu * nv

    def test_rejects_nonconstant_input(self):
        f = GraphicalModel((3, 2), [(0, 1)], [np.zeros(3), np.zeros(2)], [np.zeros((3, 2))])
        r = reduce(f, SubsetToOne((0, 0), ((1,), ())))
        with pytest.raises(ValueError):
            message(np.array([0.0, 1.0, 2.0]), r, 0)


def check_post_conditions(g, phi, tol=1e-9):
    for u in range(g.n_nodes):
        assert abs(reparametrized_unary(g, phi, u).min()) <= tol
    for e in range(g.n_edges):
        t = reparametrized_pairwise(g, phi, e)
        assert np.all(np.abs(t.min(axis=1)) <= tol)
        assert np.all(np.abs(t.min(axis=0)) <= tol)


class TestDualCorrect:
    def test_zero_unchanged(self):
        f = zero_model((2, 2), [(0, 1)])
        phi = dual_correct(Reparametrization.zeros(f), f)
        assert all(np.all(a == 0) for a in phi.tail + phi.head) and np.all(phi.offset == 0)

    def test_feasible_input(self, rng):
        for _ in range(200):
            f = tiny_instance(rng)
            phi = make_feasible(f, random_phi(f, rng))
            before = dual_lower_bound(f, phi)
            assert before.feasible
            out = dual_correct(phi, f)
            check_post_conditions(f, out)
            assert dual_lower_bound(f, out).value >= before.value - 1e-9

    def test_infeasible_input(self, rng):
        for _ in range(200):
            f = tiny_instance(rng)
            out = dual_correct(random_phi(f, rng), f)
            check_post_conditions(f, out)
            assert dual_lower_bound(f, out, tol=1e-9).feasible


class TestActiveAndMargin:
    def test_zero_all_active(self):
        f = zero_model((2, 3), [(0, 1)])
        assert active_labels(f, Reparametrization.zeros(f)) == [[0, 1], [0, 1, 2]]

    def test_strict_minimizer(self):
        f = GraphicalModel((3,), (), [np.array([2.0, 0.0, 1.0])], [])
        assert active_labels(f, Reparametrization.zeros(f)) == [[1]]

    def test_contains_lp_support_at_optimum(self, rng):
        for _ in range(15):
            f = tree_instance(rng, 4)
            phi = dual_correct(converge(f).averaged_dual_point(), f)
            for act, opt in zip(active_labels(f, phi), support_sets(f)):
                assert set(opt) <= set(act)

    def test_margins(self):
        f = GraphicalModel((3, 2), (), [np.array([2.0, 0.0, 1.0]), np.array([0.0, 3.0])], [])
        phi = Reparametrization.zeros(f)
        assert margin(f, phi, (1, 0)).node == [0.0, 0.0]
        m = margin(f, phi, (0, 1))
        assert m.node == [-2.0, -3.0] and m.problem == -3.0


class TestArcConsistency:
    def test_zero(self):
        f = zero_model((2, 2), [(0, 1)])
        assert arc_consistency_check(f, Reparametrization.zeros(f))

    def test_active_pair_with_inactive_endpoint(self):
        f = GraphicalModel((2, 2), [(0, 1)], [np.array([0.0, 5.0]), np.zeros(2)],
                           [np.array([[1.0, 1.0], [0.0, 1.0]])])
        ac = arc_consistency_check(f, Reparametrization.zeros(f))
        assert not ac and ("pair", 0, 1, 0) in ac.violations

    def test_tree_after_convergence(self, rng):
        for _ in range(20):
            f = tree_instance(rng)
            phi = spread_inactive(f, dual_correct(converge(f).averaged_dual_point(), f), 1e-6)
            assert arc_consistency_check(f, phi, tol=1e-6)

    def test_spread_keeps_bound_and_active_sets(self, rng):
        for _ in range(30):
            f = tiny_instance(rng)
            phi = dual_correct(converge(f, 10).averaged_dual_point(), f)
            out = spread_inactive(f, phi)
            assert dual_lower_bound(f, out).feasible
            assert dual_lower_bound(f, out).value == pytest.approx(dual_lower_bound(f, phi).value)
            assert active_labels(f, out) == active_labels(f, phi)
