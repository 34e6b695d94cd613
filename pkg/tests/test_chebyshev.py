import numpy as np
import pytest

from nnsr.certificates import PlateauTarget
from nnsr.chebyshev import check_tstar, check_tsystem, make_admissible
from nnsr.imaging import Window


class TestCheckTsystem:
    def test_monomials_pass(self):
        rep = check_tsystem(Window.monomial(3), trials=300, seed=1)
        assert rep["passed"]
        assert rep["signs"] == [1]

    def test_gaussian_passes(self):
        w = Window.gaussian(np.linspace(0, 1, 6), 0.2)
        rep = check_tsystem(w, trials=300, seed=1)
        assert rep["passed"]

    def test_duplicate_function_fails(self):
        ts = np.linspace(0, 1, 101)
        w = Window.tabulated(ts, np.vstack([ts, ts, ts**2]))
        rep = check_tsystem(w, trials=50, seed=1)
        assert not rep["passed"]
        assert rep["n_failures"] == 50

    def test_verdict_scale_invariant(self):
        ts = np.linspace(0, 1, 201)
        base = np.vstack([np.ones_like(ts), ts, np.exp(ts)])
        w1 = Window.tabulated(ts, base)
        w2 = Window.tabulated(ts, base * np.array([[3.0], [0.2], [11.0]]))
        r1 = check_tsystem(w1, trials=100, seed=2)
        r2 = check_tsystem(w2, trials=100, seed=2)
        assert r1["passed"] == r2["passed"]
        assert r1["signs"] == r2["signs"]

    @pytest.mark.parametrize("sigma", [0.1, 0.2, 0.5])
    def test_gaussian_sweep_passes(self, sigma):
        for M in range(3, 10):
            w = Window.gaussian(np.linspace(0, 1, M), sigma)
            rep = check_tsystem(w, trials=1000, seed=M)
            assert rep["passed"], (M, sigma, rep["worst_magnitude"])


class TestMakeAdmissible:
    def test_example_sequence(self):
        seq = make_admissible([(0.5, 2), (0.8, 1)], singleton=1, M=4, h0=1e-3)
        n = 2
        h = 1e-3 / n
        assert np.allclose(seq.nodes(n), [0.0, 0.5, 0.5 + h, 0.8, 1.0])
        assert seq.singleton_row(n) == 3

    def test_lengths_and_monotonicity(self):
        seq = make_admissible(
            [(0.2, 2), (0.5, 2), (0.8, 1)], singleton=2, M=6, h0=5e-4
        )
        for n in (1, 4, 16, 64):
            nodes = seq.nodes(n)
            assert nodes.size == 7
            assert np.all(np.diff(nodes) > 0)
            assert nodes[0] == 0.0 and nodes[-1] == 1.0

    def test_two_singletons_rejected(self):
        with pytest.raises(ValueError):
            make_admissible([(0.3, 1), (0.7, 1), (0.5, 2)], singleton=0, M=6)

    def test_bad_sum_rejected(self):
        with pytest.raises(ValueError):
            make_admissible([(0.5, 2), (0.8, 1)], singleton=1, M=6)

    def test_odd_multiplicity_above_one_rejected(self):
        with pytest.raises(ValueError):
            make_admissible([(0.5, 3), (0.8, 2)], singleton=0, M=6)

    def test_odd_m_rejected(self):
        with pytest.raises(ValueError):
            make_admissible([(0.5, 2)], singleton=0, M=3)


@pytest.fixture(scope="module")
def gauss6():
    return Window.gaussian(np.linspace(0, 1, 6), 0.2)


@pytest.fixture(scope="module")
def seq6():
    return make_admissible(
        [(0.3, 2), (0.7, 2), (0.5, 1)], singleton=2, M=6, h0=1e-3
    )


class TestCheckTstar:

    def test_gaussian_off_support_target_passes(self, gauss6, seq6):
        target = PlateauTarget.off_support(np.array([0.3, 0.7]), 0.1)
        rep = check_tstar(target, gauss6, seq6, n_values=(64, 128, 256, 512))
        assert rep["passed"]
        assert rep["part1"] and rep["part2"]
        assert rep["part2_applicable"]

    def test_slope_agreement_on_smooth_case(self, gauss6, seq6):
        target = PlateauTarget.off_support(np.array([0.3, 0.7]), 0.1)
        rep = check_tstar(target, gauss6, seq6, n_values=(4, 8, 16, 32))
        assert rep["part2"]
        assert rep["slope_spread"] <= 0.1

    def test_zero_target_flagged_inapplicable(self, gauss6, seq6):
        rep = check_tstar(
            lambda t: np.zeros_like(np.atleast_1d(t)), gauss6, seq6
        )
        assert not rep["part2_applicable"]

    def test_needs_four_n_values(self, gauss6, seq6):
        target = PlateauTarget.off_support(np.array([0.3, 0.7]), 0.1)
        with pytest.raises(ValueError):
            check_tstar(target, gauss6, seq6, n_values=(4, 8))

    def test_report_carries_tolerance_note(self, gauss6, seq6):
        target = PlateauTarget.off_support(np.array([0.3, 0.7]), 0.1)
        rep = check_tstar(target, gauss6, seq6, n_values=(64, 128, 256, 512))
        assert "part1_tolerance_note" in rep

    def test_verdict_invariant_under_function_rescaling(self, seq6):
        ts = np.linspace(0, 1, 4097)
        base = np.exp(-((ts[None, :] - np.linspace(0, 1, 6)[:, None]) / 0.2) ** 2)
        w1 = Window.tabulated(ts, base)
        scale = np.array([[2.0], [0.5], [7.0], [1.0], [3.0], [0.1]])
        w2 = Window.tabulated(ts, base * scale)
        target = PlateauTarget.off_support(np.array([0.3, 0.7]), 0.1)
        r1 = check_tstar(target, w1, seq6, n_values=(4, 8, 16, 32))
        r2 = check_tstar(target, w2, seq6, n_values=(4, 8, 16, 32))
        assert r1["passed"] == r2["passed"]
        assert r1["part1"] == r2["part1"]
        assert r1["part2"] == r2["part2"]
