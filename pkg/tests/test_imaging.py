import numpy as np
import pytest

from nnsr.imaging import (
    ImageObservation,
    Window,
    add_noise,
    basis_deriv,
    basis_eval,
    collocation,
    design_matrix,
    forward,
    lipschitz_constant,
)
from nnsr.measures import AtomicMeasure


class TestWindow:
    def test_gaussian_validation(self):
        with pytest.raises(ValueError):
            Window.gaussian([0.5, 0.5], 0.2)  # duplicate centers
        with pytest.raises(ValueError):
            Window.gaussian([0.0, 1.0], -0.1)

    def test_json_roundtrip(self, tmp_path):
        for w in (
            Window.gaussian([0.0, 0.25, 0.5, 0.75, 1.0], 0.2),
            Window.monomial(4),
            Window.tabulated(np.linspace(0, 1, 11), np.ones((2, 11))),
        ):
            p = tmp_path / "w.json"
            w.save(p)
            w2 = Window.load(p)
            ts = np.linspace(0, 1, 7)
            assert np.allclose(collocation(w, ts), collocation(w2, ts))


class TestBasisEval:
    def test_gaussian_center_value(self, gauss3):
        assert basis_eval(gauss3, 2, 0.5) == pytest.approx(1.0)

    def test_gaussian_one_sigma(self):
        w = Window.gaussian([0.0, 0.3, 1.0], 0.2)
        # t - center = 0.2 = sigma -> e^{-1}
        assert basis_eval(w, 2, 0.5) == pytest.approx(np.exp(-1.0), abs=1e-15)

    def test_monomial(self):
        w = Window.monomial(3)
        assert basis_eval(w, 3, 0.5) == pytest.approx(0.25)
        assert basis_deriv(w, 3, 0.5) == pytest.approx(1.0)
        assert basis_deriv(w, 1, 0.3) == 0.0

    def test_index_out_of_range(self, gauss3):
        with pytest.raises(IndexError):
            basis_eval(gauss3, 0, 0.5)
        with pytest.raises(IndexError):
            basis_eval(gauss3, 4, 0.5)

    def test_gaussian_derivative_matches_fd(self, gauss3):
        for t in (0.21, 0.5, 0.77):
            h = 1e-7
            fd = (basis_eval(gauss3, 1, t + h) - basis_eval(gauss3, 1, t - h)) / (2 * h)
            assert basis_deriv(gauss3, 1, t) == pytest.approx(fd, rel=1e-6)

    def test_tabulated_interpolation(self):
        ts = np.linspace(0, 1, 101)
        w = Window.tabulated(ts, np.vstack([ts**2]))
        assert basis_eval(w, 1, 0.5) == pytest.approx(0.25, abs=1e-4)


class TestForward:
    def test_empty_measure(self, gauss3):
        assert np.all(forward(gauss3, AtomicMeasure.empty()) == 0.0)

    def test_atom_at_center_pair(self, gauss3):
        y = forward(gauss3, AtomicMeasure.single(0.5, 0.0, weight := 0.7))
        assert y[1, 0] == pytest.approx(weight)

    def test_closed_form_example(self, gauss3):
        y = forward(gauss3, AtomicMeasure.single(0.5, 0.5))
        assert y[1, 1] == pytest.approx(1.0)
        assert y[0, 1] == pytest.approx(np.exp(-6.25), abs=1e-18)
        assert y[1, 0] == pytest.approx(np.exp(-6.25), abs=1e-18)
        assert y[0, 0] == pytest.approx(np.exp(-12.5), abs=1e-20)
        assert np.allclose(y, y.T)

    def test_linearity(self, gauss5, rng):
        a = AtomicMeasure(rng.uniform(0, 1, (3, 2)), rng.uniform(0.1, 1, 3))
        b = AtomicMeasure(rng.uniform(0, 1, (2, 2)), rng.uniform(0.1, 1, 2))
        assert np.allclose(
            forward(gauss5, a + b), forward(gauss5, a) + forward(gauss5, b), atol=1e-12
        )

    def test_sampling_identity(self, gauss5, rng):
        # tensor evaluation equals the 2-D kernel sampled at center pairs
        x = AtomicMeasure(rng.uniform(0, 1, (3, 2)), rng.uniform(0.1, 1, 3))
        y = forward(gauss5, x)
        c = gauss5.centers
        for m in range(5):
            for n in range(5):
                val = sum(
                    wk * np.exp(-((tk - c[m]) ** 2 + (sk - c[n]) ** 2) / gauss5.sigma**2)
                    for (tk, sk), wk in zip(x.points, x.weights)
                )
                assert y[m, n] == pytest.approx(val, abs=1e-12)

    def test_symmetry_for_symmetric_measure(self, gauss5):
        x = AtomicMeasure.from_atoms([(0.3, 0.7, 1.0), (0.7, 0.3, 1.0)])
        y = forward(gauss5, x)
        assert np.allclose(y, y.T, atol=1e-12)


class TestAddNoise:
    def test_zero_delta(self, gauss3):
        y = forward(gauss3, AtomicMeasure.single(0.4, 0.6))
        obs = add_noise(y, 0.0, 7)
        assert np.array_equal(obs.y, y)
        assert obs.delta == 0.0

    def test_exact_norm(self, gauss3):
        y = forward(gauss3, AtomicMeasure.single(0.4, 0.6))
        obs = add_noise(y, 0.1, 7)
        assert np.linalg.norm(obs.y - y) == pytest.approx(0.1, abs=1e-12)

    def test_deterministic(self, gauss3):
        y = forward(gauss3, AtomicMeasure.single(0.4, 0.6))
        a = add_noise(y, 0.05, 11)
        b = add_noise(y, 0.05, 11)
        assert np.array_equal(a.y, b.y)

    def test_same_direction_across_levels(self, gauss3):
        y = forward(gauss3, AtomicMeasure.single(0.4, 0.6))
        e1 = add_noise(y, 0.05, 11).y - y
        e2 = add_noise(y, 0.10, 11).y - y
        assert np.allclose(2 * e1, e2, atol=1e-15)


class TestLipschitz:
    def test_gaussian_closed_form(self):
        w = Window.gaussian(np.linspace(0, 1, 8), 0.2)
        assert lipschitz_constant(w) == pytest.approx(
            np.sqrt(2 * 8 / (0.2**2 * np.e))
        )
        assert lipschitz_constant(w) == pytest.approx(12.13, abs=0.01)

    def test_sigma_doubling_halves(self):
        w1 = Window.gaussian(np.linspace(0, 1, 6), 0.1)
        w2 = Window.gaussian(np.linspace(0, 1, 6), 0.2)
        assert lipschitz_constant(w1) == pytest.approx(2 * lipschitz_constant(w2))

    def test_constant_tabulated_window(self):
        ts = np.linspace(0, 1, 11)
        w = Window.tabulated(ts, np.ones((1, 11)))
        assert lipschitz_constant(w) >= 1.0 - 1e-12


class TestDesignMatrix:
    def test_kronecker_identity(self, gauss5, rng):
        pts = rng.uniform(0, 1, (6, 2))
        A = design_matrix(gauss5, pts)
        for j, (t, s) in enumerate(pts):
            col_t = collocation(gauss5, [t])[:, 0]
            col_s = collocation(gauss5, [s])[:, 0]
            assert np.allclose(A[:, j], np.kron(col_t, col_s), atol=1e-12)

    def test_full_rank_at_separated_support(self, gauss5):
        pts = np.array([[0.2, 0.3], [0.5, 0.7], [0.8, 0.45]])
        A = design_matrix(gauss5, pts)
        assert np.linalg.matrix_rank(A) == 3

    def test_single_point_rank_one(self, gauss5):
        A = design_matrix(gauss5, [[0.4, 0.6]])
        assert A.shape == (25, 1)
        assert np.linalg.matrix_rank(A) == 1

    def test_duplicate_point_rank_deficient(self, gauss5):
        A = design_matrix(gauss5, [[0.4, 0.6], [0.4, 0.6]])
        assert np.linalg.matrix_rank(A) == 1

    def test_empty_grid_rejected(self, gauss5):
        with pytest.raises(ValueError):
            design_matrix(gauss5, np.zeros((0, 2)))


class TestObservationIO:
    def test_roundtrip(self, tmp_path, gauss3):
        y = forward(gauss3, AtomicMeasure.single(0.4, 0.6))
        obs = add_noise(y, 0.02, 3)
        p = tmp_path / "y.csv"
        obs.save(p)
        back = ImageObservation.load(p)
        assert np.allclose(back.y, obs.y)
        assert back.delta == obs.delta
