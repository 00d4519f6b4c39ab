import numpy as np
import pytest

from cimsim.ising import (brute_force_ground, builtin_instances, cut_value,
                          energy, eq23_instance, ferro_weighted_instance,
                          make_instance, maxcut5_instance, maxcut_to_ising,
                          ring_instance)


class TestEnergy:
    def test_ordered_double_sum(self):
        j = np.array([[0.0, 1.0], [1.0, 0.0]])
        # each unordered pair counts twice
        assert energy(j, (1, 1)) == pytest.approx(-2.0)
        assert energy(j, (1, -1)) == pytest.approx(2.0)

    def test_field_term(self):
        j = np.zeros((2, 2))
        assert energy(j, (1, -1), field_h=[0.5, 0.25]) == pytest.approx(-0.25)

    def test_ring3_example(self):
        inst = ring_instance(3)
        assert energy(inst.coupling, (1, 1, -1)) == pytest.approx(-6.0)


class TestBruteForce:
    def test_ground_closed_under_flip(self):
        rng = np.random.default_rng(0)
        j = rng.normal(size=(5, 5))
        j = np.triu(j, 1)
        j = j + j.T
        _e0, ground = brute_force_ground(j)
        flipped = {tuple(-s for s in g) for g in ground}
        assert flipped == set(ground)

    def test_every_winner_is_minimal(self):
        inst = eq23_instance()
        energies = [energy(inst.coupling, cfg) for cfg in inst.ground_set]
        assert all(e == pytest.approx(inst.ground_energy) for e in energies)

    def test_size_limit(self):
        with pytest.raises(ValueError):
            brute_force_ground(np.zeros((25, 25)))

    def test_validation(self):
        with pytest.raises(ValueError, match="symmetric"):
            make_instance("bad", [[0.0, 1.0], [0.5, 0.0]])
        with pytest.raises(ValueError, match="diagonal"):
            make_instance("bad", [[1.0, 0.0], [0.0, 0.0]])


class TestBuiltins:
    def test_ring3_degeneracy(self):
        inst = ring_instance(3)
        assert inst.ground_set == ((1, 1, -1), (-1, -1, 1))
        assert inst.ground_energy == pytest.approx(-6.0)

    def test_ring4_and_ring5(self):
        assert ring_instance(4).size == 4
        inst5 = ring_instance(5)
        assert len(inst5.ground_set) >= 2

    def test_eq23(self):
        inst = eq23_instance()
        assert inst.ground_set == ((1, 1, -1, -1), (-1, -1, 1, 1))
        assert inst.ground_energy == pytest.approx(-2.19)

    def test_ferro_weighted_degeneracies(self):
        # degeneracy 4 at the tie point, 2 slightly off it
        tie = ferro_weighted_instance(j12=-0.3)
        assert len(tie.ground_set) == 4
        off = ferro_weighted_instance(j12=-0.295)
        assert off.ground_set == ((1, 1, 1, 1), (-1, -1, -1, -1))

    def test_maxcut5(self):
        inst = maxcut5_instance()
        assert len(inst.ground_set) == 2
        assert (1, -1, -1, 1, -1) in inst.ground_set
        # max cut 5 through the partition {1, 4}
        w = -inst.coupling
        assert cut_value(w, (1, -1, -1, 1, -1)) == pytest.approx(5.0)

    def test_registry(self):
        reg = builtin_instances()
        assert set(reg) == {"ring3", "ring4", "ring5", "eq23",
                            "ferro_weighted", "maxcut5"}
        for build in reg.values():
            inst = build()
            assert len(inst.ground_set) >= 1


class TestMaxCut:
    def test_mapping_consistency(self):
        rng = np.random.default_rng(3)
        w = np.abs(rng.normal(size=(6, 6)))
        w = np.triu(w, 1)
        w = w + w.T
        inst = maxcut_to_ising(w)
        best_cut = max(cut_value(w, cfg) for cfg in
                       [tuple(1 if (k >> i) & 1 else -1 for i in range(6))
                        for k in range(64)])
        for cfg in inst.ground_set:
            assert cut_value(w, cfg) == pytest.approx(best_cut)

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError):
            maxcut_to_ising(np.array([[0.0, 1.0], [0.5, 0.0]]))
