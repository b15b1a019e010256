import warnings

import numpy as np
import pytest

from pcfield.extrapolate import solve_channel, solve_noiseless
from pcfield.minimax import (
    ClassModeError,
    DensityClassSpec,
    InfeasibleClassError,
    NoiseClass,
    SignalClass,
    band_pair,
    build_anchor,
    contamination_pair,
    evaluate_robust_objective,
    feasibility_gap,
    find_least_favorable,
    minimax_characteristic,
    project_onto_class,
    saddle_point_residual,
    sample_feasible,
)
from pcfield.spectral import RationalDensity, SpectralDensityGrid, as_grid

N = 512


def fixed_power_class(p, n_lambda=N, variant="trace", K=1):
    """Signal class with only the power constraint (degenerate mixture)."""
    upper = SpectralDensityGrid.white(K, 1.0, n_lambda)
    return DensityClassSpec(signal=SignalClass(
        kind="contamination", variant=variant, upper=upper, epsilon=1.0, power=p))


@pytest.fixture(autouse=True)
def quiet_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


class TestRobustObjective:
    def test_reproduces_anchor_error(self):
        F = as_grid(RationalDensity.ar1(0.4), N)
        G = SpectralDensityGrid.white(1, 0.5, N)
        anchor = build_anchor(F, G, {(0, 1): np.array([[1.0], [0.5]])}, window=48)
        obj = evaluate_robust_objective(F, G, anchor)
        assert obj == pytest.approx(anchor.delta, abs=1e-8)

    def test_affine_in_each_argument(self):
        F = as_grid(RationalDensity.ar1(0.4), N)
        G = SpectralDensityGrid.white(1, 0.5, N)
        anchor = build_anchor(F, G, {(0, 1): np.array([[1.0], [0.5]])}, window=48)
        F1 = SpectralDensityGrid.white(1, 1.3, N)
        F2 = as_grid(RationalDensity.ma([1.0, 0.3]), N)
        o1 = evaluate_robust_objective(F1, G, anchor)
        o2 = evaluate_robust_objective(F2, G, anchor)
        mix = SpectralDensityGrid(0.25 * F1.values + 0.75 * F2.values)
        omix = evaluate_robust_objective(mix, G, anchor)
        assert omix == pytest.approx(0.25 * o1 + 0.75 * o2, abs=1e-10)

    def test_white_anchor_hand_value(self):
        # anchor F = 1, G = 0, a = (1): the anchored error under density f
        # is the mean of f; for f = 1 + cos the value is exactly 1
        anchor = build_anchor(SpectralDensityGrid.white(1, 1.0, N), None,
                              {(0, 1): np.array([[1.0]])}, window=32)
        f = SpectralDensityGrid.from_scalar_function(lambda lam: 1.0 + np.cos(lam), N)
        assert evaluate_robust_objective(f, None, anchor) == pytest.approx(1.0,
                                                                           abs=1e-12)


class TestProjection:
    def test_power_normalization_shifts(self):
        spec = fixed_power_class(1.0)
        F = SpectralDensityGrid.white(1, 2.0, N)
        Fp, _ = project_onto_class((F, None), spec)
        assert np.max(np.abs(Fp.values - 1.0)) < 1e-12

    def test_band_clipping(self):
        spec = DensityClassSpec(signal=SignalClass(
            kind="band", variant="trace",
            lower=SpectralDensityGrid.white(1, 0.5, N),
            upper=SpectralDensityGrid.white(1, 2.0, N)))
        Fp, _ = project_onto_class((SpectralDensityGrid.white(1, 3.0, N), None), spec)
        assert np.max(np.abs(Fp.values - 2.0)) < 1e-12

    def test_feasible_point_unchanged(self):
        U = as_grid(RationalDensity.ar1(0.3), N)
        spec = contamination_pair("trace", upper=U, epsilon=0.4,
                                  signal_power=1.2 * U.trace_integral(),
                                  noise_power=0.5)
        rng = np.random.default_rng(0)
        F, G = sample_feasible(spec, rng, N)
        F2, G2 = project_onto_class((F, G), spec)
        assert np.max(np.abs(F2.values - F.values)) < 1e-10
        assert np.max(np.abs(G2.values - G.values)) < 1e-10

    @pytest.mark.parametrize("variant", ["trace", "component", "weighted", "matrix"])
    def test_contamination_projection_feasible_all_variants(self, variant):
        rng = np.random.default_rng(42)
        K = 2
        U = as_grid(RationalDensity(
            0.4 * (rng.normal(size=(2, K, K)) + 1j * rng.normal(size=(2, K, K)))
            + np.concatenate([np.eye(K)[None] * 2, np.zeros((1, K, K))])), N)
        B = np.array([[2.0, 0.3], [0.3, 1.0]], dtype=complex)
        if variant == "trace":
            power = 1.1 * U.trace_integral()
        elif variant == "component":
            power = 1.1 * np.mean(np.diagonal(U.values, axis1=1, axis2=2).real, axis=0)
        elif variant == "weighted":
            power = 1.1 * float(np.mean(np.einsum(
                "kn,tnk->t", B, U.values).real))
        else:
            power = 1.1 * np.mean(U.values, axis=0)
        spec = contamination_pair(variant, upper=U, epsilon=0.3,
                                  signal_power=power,
                                  noise_power=power if variant != "weighted" else power,
                                  weight_signal=B if variant == "weighted" else None,
                                  weight_noise=B if variant == "weighted" else None)
        F, G = sample_feasible(spec, rng, N)
        assert feasibility_gap((F, G), spec) < 1e-6

    @pytest.mark.parametrize("variant", ["trace", "component", "weighted", "matrix"])
    def test_band_projection_feasible_all_variants(self, variant):
        rng = np.random.default_rng(24)
        K = 2
        V = SpectralDensityGrid.white(K, 0.4, N)
        U = SpectralDensityGrid.white(K, 2.5, N)
        G1 = SpectralDensityGrid.white(K, 0.3, N)
        B = np.array([[1.5, 0.2], [0.2, 1.0]], dtype=complex)
        if variant == "trace":
            power, radius = 1.5 * K, 0.2
        elif variant == "component":
            power, radius = np.full(K, 1.5), np.full(K, 0.2)
        elif variant == "weighted":
            power = 1.5 * float(np.real(np.trace(B)))
            radius = 0.2
        else:
            power, radius = 1.5 * np.eye(K), np.full((K, K), 0.2)
        spec = band_pair(variant, lower=V, upper=U, signal_power=power,
                         noise_nominal=G1, noise_radius=radius,
                         weight_signal=B if variant == "weighted" else None,
                         weight_noise=B if variant == "weighted" else None)
        F, G = sample_feasible(spec, rng, N)
        assert feasibility_gap((F, G), spec) < 1e-6

    def test_infeasible_power_target_raises(self):
        spec = DensityClassSpec(signal=SignalClass(
            kind="band", variant="trace",
            lower=SpectralDensityGrid.white(1, 1.0, N),
            upper=SpectralDensityGrid.white(1, 2.0, N),
            power=5.0))
        with pytest.raises(InfeasibleClassError):
            project_onto_class((SpectralDensityGrid.white(1, 1.5, N), None), spec)


class TestLeastFavorable:
    def test_fixed_power_benchmark_constant_density(self):
        # maximizing the one-step error under a power budget flattens the
        # density (arithmetic-geometric mean inequality); grid search over
        # a cosine family provides the independent confirmation
        p = 1.5
        spec = fixed_power_class(p)
        init = SpectralDensityGrid.from_scalar_function(
            lambda lam: p * (1.0 + 0.6 * np.cos(lam)), N)
        res = find_least_favorable(spec, np.array([[1.0]]), (init, None),
                                   max_iter=300, tol=1e-10, window=48, n_lambda=N)
        assert res.converged
        f0 = res.F0.values[:, 0, 0].real
        assert np.max(np.abs(f0 - p)) <= 1e-3 * p
        assert res.objective_history[-1] == pytest.approx(p, abs=1e-3)
        assert res.report.residual_F <= 1e-3

        thetas = np.linspace(-0.9, 0.9, 19)
        values = []
        for theta in thetas:
            f = SpectralDensityGrid.from_scalar_function(
                lambda lam: p * (1.0 + theta * np.cos(lam)), N)
            values.append(solve_noiseless(f, np.array([[1.0]]), window=48).delta)
        assert np.argmax(values) == 9  # theta = 0
        assert max(values) <= res.objective_history[-1] + 1e-6

    def test_objective_history_non_decreasing(self):
        spec = fixed_power_class(1.0)
        init = SpectralDensityGrid.from_scalar_function(
            lambda lam: 1.0 + 0.8 * np.cos(2 * lam), N)
        res = find_least_favorable(spec, np.array([[1.0]]), (init, None),
                                   max_iter=100, tol=1e-9, window=48, n_lambda=N)
        hist = np.array(res.objective_history)
        assert np.all(np.diff(hist) >= -1e-12)

    def test_point_class_returns_input(self):
        U = as_grid(RationalDensity.ar1(0.3), N)
        spec = band_pair("trace", lower=U, upper=U,
                         signal_power=U.trace_integral(),
                         noise_nominal=SpectralDensityGrid.white(1, 0.2, N),
                         noise_radius=0.0)
        res = find_least_favorable(spec, np.array([[1.0]]),
                                   (SpectralDensityGrid.white(1, 1.0, N),
                                    SpectralDensityGrid.white(1, 0.2, N)),
                                   max_iter=60, tol=1e-8, window=48, n_lambda=N)
        assert np.max(np.abs(res.F0.values - U.values)) < 1e-9
        assert np.max(np.abs(res.G0.values - 0.2)) < 1e-9

    def test_degenerate_mixture_pins_scalar_density(self):
        U = as_grid(RationalDensity.ar1(0.3), N)
        spec = contamination_pair("trace", upper=U, epsilon=0.0,
                                  signal_power=U.trace_integral(),
                                  noise_power=0.3)
        F, _ = project_onto_class((SpectralDensityGrid.white(1, 1.0, N),
                                   SpectralDensityGrid.white(1, 0.3, N)), spec)
        assert np.max(np.abs(F.values - U.values)) < 1e-10


class TestSaddleResidual:
    def test_small_at_optimum_large_elsewhere(self):
        U = as_grid(RationalDensity.ar1(0.3), N)
        spec = contamination_pair("trace", upper=U, epsilon=0.3,
                                  signal_power=1.2 * U.trace_integral(),
                                  noise_power=0.4)
        a = np.array([[1.0], [0.5]])
        init = (SpectralDensityGrid.white(1, 1.2 * U.trace_integral(), N),
                SpectralDensityGrid.white(1, 0.4, N))
        res = find_least_favorable(spec, a, init, max_iter=500, tol=1e-10,
                                   window=48, n_lambda=N)
        assert res.report.residual_F <= 1e-3
        assert res.report.residual_G <= 1e-3

        rng = np.random.default_rng(5)
        Fs, Gs = sample_feasible(spec, rng, N)
        rep = saddle_point_residual(Fs, Gs, spec, a, mode="noisy", window=48)
        assert rep.residual_F > 0.1
        assert rep.residual_G > 0.1

    def test_complementary_slackness_and_signs(self):
        U = as_grid(RationalDensity.ar1(0.3), N)
        spec = contamination_pair("trace", upper=U, epsilon=0.3,
                                  signal_power=1.2 * U.trace_integral(),
                                  noise_power=0.4)
        a = np.array([[1.0], [0.5]])
        init = (SpectralDensityGrid.white(1, 1.2 * U.trace_integral(), N),
                SpectralDensityGrid.white(1, 0.4, N))
        res = find_least_favorable(spec, a, init, max_iter=500, tol=1e-10,
                                   window=48, n_lambda=N)
        mult = res.report.multipliers["F"]
        assert mult["alpha_sq"] >= 0
        gamma = mult["gamma"]
        assert np.all(gamma <= 1e-12)
        # slackness: wherever the contamination bound is inactive the
        # fitted pointwise multiplier vanishes
        f0 = res.F0.values[:, 0, 0].real
        bound = (1 - 0.3) * U.values[:, 0, 0].real
        inactive = f0 > bound + 1e-6 * f0.max()
        assert np.max(np.abs(gamma[inactive])) <= 1e-6
        assert res.report.multipliers["G"]["beta_sq"] >= 0

    def test_band_pair_sign_constraints(self):
        V = SpectralDensityGrid.white(1, 0.5, N)
        U = SpectralDensityGrid.white(1, 2.0, N)
        G1 = SpectralDensityGrid.white(1, 0.2, N)
        spec = band_pair("trace", lower=V, upper=U, signal_power=1.1,
                         noise_nominal=G1, noise_radius=0.1)
        a = np.array([[1.0], [0.5]])
        res = find_least_favorable(spec, a,
                                   (SpectralDensityGrid.white(1, 1.1, N), G1),
                                   max_iter=400, tol=1e-10, window=48, n_lambda=N)
        mult = res.report.multipliers["F"]
        assert np.all(mult["gamma"] <= 1e-12)
        assert np.all(mult["gamma_upper"] >= -1e-12)
        assert res.report.residual_F <= 1e-3
        assert res.report.residual_G <= 5e-3

    def test_noiseless_and_factorized_modes_agree(self):
        p = 1.5
        spec = fixed_power_class(p)
        init = SpectralDensityGrid.from_scalar_function(
            lambda lam: p * (1.0 + 0.5 * np.cos(lam)), N)
        res = find_least_favorable(spec, np.array([[1.0]]), (init, None),
                                   max_iter=300, tol=1e-10, window=48, n_lambda=N)
        rep_nl = saddle_point_residual(res.F0, None, spec, np.array([[1.0]]),
                                       mode="noiseless", window=48)
        rep_fc = saddle_point_residual(res.F0, None, spec, np.array([[1.0]]),
                                       mode="factorized", window=48)
        assert rep_nl.residual_F <= 1e-3
        assert rep_fc.residual_F <= 1e-3
        assert rep_fc.objective == pytest.approx(rep_nl.objective, rel=1e-6)

    def test_mode_class_mismatch_rejected(self):
        U = as_grid(RationalDensity.ar1(0.3), N)
        spec = contamination_pair("trace", upper=U, epsilon=0.3,
                                  signal_power=1.2 * U.trace_integral(),
                                  noise_power=0.4)
        F0 = SpectralDensityGrid.white(1, 1.0, N)
        G0 = SpectralDensityGrid.white(1, 0.4, N)
        with pytest.raises(ClassModeError):
            saddle_point_residual(F0, G0, spec, np.array([[1.0]]), mode="factorized")
        with pytest.raises(ClassModeError):
            saddle_point_residual(F0, None, fixed_power_class(1.0),
                                  np.array([[1.0]]), mode="noisy")


class TestDominance:
    def test_sampled_saddle_dominance_contamination(self):
        U = as_grid(RationalDensity.ar1(0.3), N)
        spec = contamination_pair("trace", upper=U, epsilon=0.3,
                                  signal_power=1.2 * U.trace_integral(),
                                  noise_power=0.4)
        a = np.array([[1.0], [0.5]])
        init = (SpectralDensityGrid.white(1, 1.2 * U.trace_integral(), N),
                SpectralDensityGrid.white(1, 0.4, N))
        res = find_least_favorable(spec, a, init, max_iter=500, tol=1e-10,
                                   window=48, n_lambda=N)
        anchor = build_anchor(res.F0, res.G0, {(0, 1): a}, window=48)
        rng = np.random.default_rng(7)
        for _ in range(15):
            Fs, Gs = sample_feasible(spec, rng, N)
            val = evaluate_robust_objective(Fs, Gs, anchor)
            assert val <= anchor.delta * (1 + 1e-3)

    def test_minimax_characteristic_tagged(self):
        F0 = as_grid(RationalDensity.ar1(0.4), N)
        G0 = SpectralDensityGrid.white(1, 0.3, N)
        sol = minimax_characteristic(F0, G0, np.array([[1.0]]), window=48)
        assert sol.diagnostics["minimax"] is True
        direct = solve_channel(F0, G0, np.array([[1.0]]), window=48)
        assert sol.delta == pytest.approx(direct.delta, rel=1e-12)


class TestStructuredVariants:
    """The non-scalar constraint variants: correctness on decoupled
    instances, behavioral guarantees on coupled ones."""

    def test_component_variant_matches_scalar_on_decoupled_instance(self):
        # diagonal bounds with the functional on component 1 only: the
        # component-variant search must reproduce the scalar solution
        K = 2
        U = as_grid(RationalDensity(
            np.stack([np.diag([1.0, 0.8]), np.diag([0.3, -0.2])]), [1.0]), N)
        pk = 1.15 * np.mean(np.diagonal(U.values, axis1=1, axis2=2).real, axis=0)
        spec = contamination_pair("component", upper=U, epsilon=0.35,
                                  signal_power=pk,
                                  noise_power=np.array([0.3, 0.25]))
        a = np.array([[1.0, 0.0], [0.5, 0.0]], dtype=complex)
        init = (SpectralDensityGrid.constant(np.diag(pk), N),
                SpectralDensityGrid.constant(np.diag([0.3, 0.25]), N))
        res = find_least_favorable(spec, a, init, max_iter=250, tol=1e-9,
                                   window=32, n_lambda=N)
        U1 = SpectralDensityGrid(U.values[:, :1, :1])
        spec1 = contamination_pair("trace", upper=U1, epsilon=0.35,
                                   signal_power=float(pk[0]), noise_power=0.3)
        res1 = find_least_favorable(
            spec1, np.array([[1.0], [0.5]]),
            (SpectralDensityGrid.white(1, float(pk[0]), N),
             SpectralDensityGrid.white(1, 0.3, N)),
            max_iter=400, tol=1e-10, window=32, n_lambda=N)
        assert res.objective_history[-1] == pytest.approx(
            res1.objective_history[-1], rel=1e-5)
        assert res.report.residual_F <= 1e-2
        assert res.report.residual_G <= 1e-2

    def test_coupled_variants_monotone_feasible_dominant(self):
        # coupled matrix-valued instances converge slowly in the
        # off-diagonal directions; assert the structural guarantees that
        # hold at every iterate: monotone objective, feasibility, and
        # dominance of the anchored estimate over sampled class members
        K = 2
        U = as_grid(RationalDensity(
            np.stack([np.diag([1.0, 0.8]), np.diag([0.3, -0.2])]), [1.0]), N)
        a = np.array([[1.0, 0.2], [0.3, -0.4]], dtype=complex)
        B1 = np.array([[1.5, 0.2], [0.2, 1.0]], dtype=complex)
        pw = 1.2 * float(np.mean(np.einsum("kn,tnk->t", B1, U.values).real))
        spec_w = contamination_pair("weighted", upper=U, epsilon=0.3,
                                    signal_power=pw, noise_power=0.5,
                                    weight_signal=B1, weight_noise=B1)
        V = SpectralDensityGrid.constant(0.3 * np.eye(K), N)
        Um = SpectralDensityGrid.constant(
            2.0 * np.eye(K) + 0.2 * np.array([[0, 1], [1, 0]]), N)
        G1 = SpectralDensityGrid.constant(0.25 * np.eye(K), N)
        spec_m = band_pair("matrix", lower=V, upper=Um,
                           signal_power=1.0 * np.eye(K),
                           noise_nominal=G1,
                           noise_radius=np.full((K, K), 0.15))
        init = (SpectralDensityGrid.constant(np.eye(K), N), G1)
        rng = np.random.default_rng(6)
        for spec in (spec_w, spec_m):
            res = find_least_favorable(spec, a, init, max_iter=40, tol=1e-9,
                                       window=32, n_lambda=N)
            hist = np.array(res.objective_history)
            assert np.all(np.diff(hist) >= -1e-12)
            assert feasibility_gap((res.F0, res.G0), spec) < 1e-6
            anchor = build_anchor(res.F0, res.G0, {(0, 1): a}, window=32)
            for _ in range(5):
                Fs, Gs = sample_feasible(spec, rng, N)
                val = evaluate_robust_objective(Fs, Gs, anchor)
                assert val <= anchor.delta * (1 + 1e-3)


class TestBandNoiselessFactorized:
    def test_band_class_flat_optimum_all_modes(self):
        # two-sided bounds around the power level: the constant density is
        # feasible and maximizes the one-step error, with both bounds slack
        # everywhere, so every residual mode must agree and be small
        p = 1.2
        spec = DensityClassSpec(signal=SignalClass(
            kind="band", variant="trace",
            lower=SpectralDensityGrid.white(1, 0.5, N),
            upper=SpectralDensityGrid.white(1, 2.0, N),
            power=p))
        init = SpectralDensityGrid.from_scalar_function(
            lambda lam: p * (1.0 + 0.4 * np.cos(lam)), N)
        res = find_least_favorable(spec, np.array([[1.0]]), (init, None),
                                   max_iter=300, tol=1e-10, window=48,
                                   n_lambda=N)
        assert np.max(np.abs(res.F0.values[:, 0, 0].real - p)) <= 1e-3 * p
        rep_nl = saddle_point_residual(res.F0, None, spec, np.array([[1.0]]),
                                       mode="noiseless", window=48)
        rep_fc = saddle_point_residual(res.F0, None, spec, np.array([[1.0]]),
                                       mode="factorized", window=48)
        assert rep_nl.residual_F <= 1e-3
        assert rep_fc.residual_F <= 1e-3
        # interior optimum: both slack profiles vanish identically
        assert np.max(np.abs(rep_nl.multipliers["F"]["gamma"])) <= 1e-9
        assert np.max(np.abs(rep_nl.multipliers["F"]["gamma_upper"])) <= 1e-9
