import numpy as np
import pytest

from nnsr.measures import AtomicMeasure
from nnsr.transport import (
    UnequalMassError,
    gen_wasserstein,
    gw_bruteforce,
    wasserstein,
)

from conftest import random_measure


class TestWasserstein:
    def test_identity(self):
        x = AtomicMeasure.from_atoms([(0.2, 0.3, 1.0), (0.6, 0.6, 0.5)])
        d, plan = wasserstein(x, x)
        assert d == pytest.approx(0.0, abs=1e-12)
        assert plan.check_feasible(x, x)

    def test_single_pair(self):
        c = 0.5
        d, _ = wasserstein(
            AtomicMeasure.single(0.2, c), AtomicMeasure.single(0.5, c)
        )
        assert d == pytest.approx(0.3, abs=1e-12)

    def test_tied_permutations(self):
        x1 = AtomicMeasure.from_atoms([(0.0, 0.0, 1.0), (1.0, 1.0, 1.0)])
        x2 = AtomicMeasure.from_atoms([(1.0, 0.0, 1.0), (0.0, 1.0, 1.0)])
        d, plan = wasserstein(x1, x2)
        assert d == pytest.approx(2.0, abs=1e-9)
        assert plan.check_feasible(x1, x2)

    def test_unequal_mass_redirects(self):
        with pytest.raises(UnequalMassError, match="gen_wasserstein"):
            wasserstein(AtomicMeasure.single(0.5, 0.5, 1.0),
                        AtomicMeasure.single(0.5, 0.5, 2.0))


class TestGenWasserstein:
    def test_identity(self, rng):
        x = random_measure(rng, 4)
        d, _ = gen_wasserstein(x, x)
        assert d == pytest.approx(0.0, abs=1e-9)

    def test_pure_destruction(self):
        x = AtomicMeasure.single(0.3, 0.8, 1.7)
        d, plan = gen_wasserstein(x, AtomicMeasure.empty())
        assert d == pytest.approx(1.7)
        assert plan.destroyed.sum() == pytest.approx(1.7)

    def test_worked_value(self):
        c = 0.5
        x1 = AtomicMeasure.from_atoms([(0.5, c, 1.0), (0.51, c, 1.0)])
        x2 = AtomicMeasure.from_atoms([(0.405, c, 1.0), (0.605, c, 1.0)])
        d, _ = gen_wasserstein(x1, x2)
        assert d == pytest.approx(0.19, abs=1e-9)

    def test_symmetry(self, rng):
        for _ in range(25):
            a = random_measure(rng, int(rng.integers(1, 5)))
            b = random_measure(rng, int(rng.integers(1, 5)))
            d1, _ = gen_wasserstein(a, b)
            d2, _ = gen_wasserstein(b, a)
            assert d1 == pytest.approx(d2, abs=1e-9)

    def test_triangle_inequality(self, rng):
        for _ in range(25):
            a = random_measure(rng, int(rng.integers(1, 6)))
            b = random_measure(rng, int(rng.integers(1, 6)))
            c = random_measure(rng, int(rng.integers(1, 6)))
            dab, _ = gen_wasserstein(a, b)
            dbc, _ = gen_wasserstein(b, c)
            dac, _ = gen_wasserstein(a, c)
            assert dac <= dab + dbc + 1e-8

    def test_upper_bounds(self, rng):
        for _ in range(15):
            a = random_measure(rng, 3)
            b = random_measure(rng, 3)
            d, _ = gen_wasserstein(a, b)
            assert d <= a.tv() + b.tv() + 1e-9
        for _ in range(15):
            a = random_measure(rng, 3)
            b = AtomicMeasure(rng.uniform(0, 1, (3, 2)), a.weights.copy())
            d, _ = gen_wasserstein(a, b)
            dw, _ = wasserstein(a, b)
            assert d <= dw + 1e-9

    def test_plan_feasibility(self, rng):
        for _ in range(20):
            a = random_measure(rng, int(rng.integers(1, 5)))
            b = random_measure(rng, int(rng.integers(1, 5)))
            d, plan = gen_wasserstein(a, b)
            assert plan.check_feasible(a, b)
            assert plan.objective == pytest.approx(d)

    def test_ground_norm_switch(self):
        a = AtomicMeasure.single(0.2, 0.2)
        b = AtomicMeasure.single(0.5, 0.6)
        d2, _ = gen_wasserstein(a, b, ground_norm="l2")
        d1, _ = gen_wasserstein(a, b, ground_norm="l1")
        di, _ = gen_wasserstein(a, b, ground_norm="linf")
        assert d2 == pytest.approx(0.5)
        assert d1 == pytest.approx(0.7)
        assert di == pytest.approx(0.4)


class TestBruteforce:
    def test_empty_pair(self):
        assert gw_bruteforce(AtomicMeasure.empty(), AtomicMeasure.empty()) == 0.0

    def test_single_atom_decision(self, rng):
        for _ in range(10):
            a = random_measure(rng, 1)
            b = AtomicMeasure(rng.uniform(0, 1, (1, 2)), a.weights.copy())
            c = float(np.linalg.norm(a.points[0] - b.points[0]))
            expect = min(c, 2.0) * a.tv()
            assert gw_bruteforce(a, b) == pytest.approx(expect, abs=1e-12)

    def test_matches_lp(self, rng):
        for _ in range(60):
            a = random_measure(rng, int(rng.integers(1, 4)))
            b = random_measure(rng, int(rng.integers(1, 4)))
            d_lp, _ = gen_wasserstein(a, b)
            assert gw_bruteforce(a, b) == pytest.approx(d_lp, abs=1e-3)

    def test_size_cap(self, rng):
        big = random_measure(rng, 5)
        with pytest.raises(ValueError):
            gw_bruteforce(big, big)
