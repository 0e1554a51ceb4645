import numpy as np

from persistency.lp_oracle import brute_force_minimum
from persistency.model import GraphicalModel, energies, energy
from persistency.substitution import SubsetToOne, apply_many
from persistency.verification import (
    contract,
    expand_labeling,
    reduce,
    reduce_from_verification,
    verification_costs,
)

from conftest import check_reduced_structure, random_labeling, random_subset_to_one, tiny_instance, zero_model


def worked_example():
    f = GraphicalModel((2, 2), [(0, 1)], [np.zeros(2), np.zeros(2)], [np.array([[0.0, 4], [3, 10]])])
    return f, SubsetToOne((0, 0), ((1,), (1,)))


class TestVerificationCosts:
    def test_identity_is_zero(self, rng):
        f = tiny_instance(rng)
        g = verification_costs(f, SubsetToOne.identity(random_labeling(f, rng)))
        assert all(np.all(t == 0) for t in g.unary + g.pairwise)

    def test_immovable_block_zero(self, rng):
        for _ in range(30):
            f = tiny_instance(rng)
            p = random_subset_to_one(f, random_labeling(f, rng), rng)
            g = verification_costs(f, p)
            masks = p.masks(f.labels)
            for (u, v), t in zip(f.edges, g.pairwise):
                assert np.all(t[np.ix_(~masks[u], ~masks[v])] == 0)

    def test_energy_identity(self, rng):
        for _ in range(30):
            f = tiny_instance(rng)
            p = random_subset_to_one(f, random_labeling(f, rng), rng)
            g = verification_costs(f, p)
            X = np.array([random_labeling(f, rng) for _ in range(20)])
            assert np.array_equal(energies(g, X), energies(f, X) - energies(f, apply_many(p, f.labels, X)))


class TestReduce:
    def test_empty_y_is_zero(self, rng):
        f = tiny_instance(rng)
        r = reduce(f, SubsetToOne.identity(random_labeling(f, rng)))
        assert all(np.all(t == 0) for t in r.base.unary + r.base.pairwise)

    def test_worked_example(self):
        f, p = worked_example()
        r = reduce(f, p)
        assert r.delta_tail[0][1] == 3 and r.delta_head[0][1] == 4
        assert np.array_equal(r.base.pairwise[0], [[0, 4], [3, 7]])

    def test_structure_on_random_pairs(self, rng):
        for _ in range(200):
            f = tiny_instance(rng)
            p = random_subset_to_one(f, random_labeling(f, rng), rng, density=rng.random())
            check_reduced_structure(reduce(f, p))

    def test_matches_truncation_of_verification_costs(self, rng):
        for _ in range(100):
            f = tiny_instance(rng)
            p = random_subset_to_one(f, random_labeling(f, rng), rng)
            assert reduce(f, p).base == reduce_from_verification(verification_costs(f, p), p)

    def test_bounded_by_verification_costs(self, rng):
        # only the pairwise tables are lowered, and energies never increase
        for _ in range(50):
            f = tiny_instance(rng)
            p = random_subset_to_one(f, random_labeling(f, rng), rng)
            g, gb = verification_costs(f, p), reduce(f, p).base
            X = np.array([random_labeling(f, rng) for _ in range(30)])
            assert np.all(energies(gb, X) <= energies(g, X))


class TestContract:
    def test_full_substitution_keeps_label_count(self):
        f = tiny_instance(np.random.default_rng(0), "chain")
        y = (0,) * f.n_nodes
        model, maps = contract(reduce(f, SubsetToOne.full(f.labels, y)))
        assert model.labels == f.labels
        assert all(sorted(m) == list(range(k)) for m, k in zip(maps, f.labels))

    def test_node_size(self):
        f = zero_model((5,), [])
        model, maps = contract(reduce(f, SubsetToOne((2,), ((4,),))))
        assert model.labels == (2,) and list(maps[0]) == [2, 4]

    def test_minimum_preserved(self, rng):
        for _ in range(40):
            f = tiny_instance(rng)
            p = random_subset_to_one(f, random_labeling(f, rng), rng)
            r = reduce(f, p)
            model, maps = contract(r)
            lo, x = brute_force_minimum(model)
            assert lo == brute_force_minimum(r.base)[0]
            assert energy(r.base, expand_labeling(x, maps)) == lo
