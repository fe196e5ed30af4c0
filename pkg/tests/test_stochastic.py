import math

import numpy as np
import pytest

from bsdegame import kernels, riccati, stochastic, verification
from bsdegame.errors import GridMismatch, PatternMismatch
from bsdegame.model import TimeGrid
from bsdegame.stochastic import (AffineState, backward_bsde_affine, forward_sde,
                                 propagate_affine, sample_brownian)
from conftest import DETERMINISTIC, GENERIC, SYMMETRIC_F2, TANH, ZERO, build_model


class TestSampleBrownian:
    GRID = TimeGrid(1.0, 250)

    def test_bit_reproducible(self):
        a = sample_brownian(self.GRID, 42, 12)
        b = sample_brownian(self.GRID, 42, 12)
        assert np.array_equal(a.dw1, b.dw1)
        assert np.array_equal(a.dw2, b.dw2)

    def test_substreams_do_not_depend_on_count(self):
        small = sample_brownian(self.GRID, 42, 10)
        large = sample_brownian(self.GRID, 42, 100)
        assert np.array_equal(small.dw1, large.dw1[:10])
        assert np.array_equal(small.dw2, large.dw2[:10])

    def test_seed_changes_output(self):
        assert not np.array_equal(sample_brownian(self.GRID, 1, 4).dw1,
                                  sample_brownian(self.GRID, 2, 4).dw1)

    def test_moments(self):
        grid = TimeGrid(1.0, 1000)   # dt = 1e-3
        batch = sample_brownian(grid, 7, 10)
        incs = np.concatenate([batch.dw1.ravel(), batch.dw2.ravel()])
        n = incs.size
        mean_se = math.sqrt(grid.dt / n)
        assert abs(incs.mean()) <= 3.0 * mean_se
        var_se = grid.dt * math.sqrt(2.0 / (n - 1))
        assert abs(incs.var(ddof=1) - grid.dt) <= 3.0 * var_se

    def test_count_must_be_positive(self):
        with pytest.raises(ValueError):
            sample_brownian(self.GRID, 42, 0)

    def test_coarsening_aggregates_increments(self):
        batch = sample_brownian(self.GRID, 3, 5)
        coarse = batch.coarsened(5)
        assert coarse.grid.steps == 50
        assert np.allclose(coarse.dw1[:, 0], batch.dw1[:, :5].sum(axis=1))
        assert np.allclose(coarse.w2()[:, -1], batch.w2()[:, -1])
        with pytest.raises(GridMismatch):
            batch.coarsened(7)


class TestForwardSde:
    def test_zero_stays_zero(self):
        model = build_model(ZERO, steps=100)
        batch = sample_brownian(model.grid, 5, 20)
        y = np.zeros((20, 101))
        x = forward_sde(model, batch, y, "x1")
        assert np.all(x == 0.0)

    def test_geometric_closed_form_under_refinement(self):
        # with y pinned at the tracking target the state is a geometric
        # Brownian motion; the strong error against the closed form drops by
        # at least 1.5x per 4x refinement
        values = dict(ZERO, a=0.3, f2=0.6, b1=1.0, b2=1.0, k1=0.5,
                      r1=1.0, r2=1.0)
        errors = []
        fine = None
        for steps in (2048, 512, 128):
            model = build_model(values, steps=steps)
            if fine is None:
                fine = sample_brownian(model.grid, 11, 200)
                batch = fine
            else:
                batch = fine.coarsened(2048 // steps)
            y = np.full((200, steps + 1), 0.5)
            x = forward_sde(model, batch, y, "x1")
            w2 = batch.w2()
            exact = -0.5 * np.exp((0.3 - 0.18) * 1.0 + 0.6 * w2[:, -1])
            errors.append(np.median(np.abs(x[:, -1] - exact)))
        assert errors[1] / errors[0] >= 1.5    # 512 -> 2048 is 4x finer
        assert errors[2] / errors[1] >= 1.5

    def test_initial_value_reads_y(self):
        model = build_model(GENERIC, steps=64, xi=(0.5, 0.6, 0.8))
        batch = sample_brownian(model.grid, 9, 8)
        y = np.linspace(0.0, 1.0, 8)[:, None] * np.ones(65)[None, :]
        x2 = forward_sde(model, batch, y, "x2")
        assert np.allclose(x2[:, 0], -0.9 * (y[:, 0] + 0.3))

    def test_shape_checks(self):
        model = build_model(ZERO, steps=64)
        batch = sample_brownian(model.grid, 1, 4)
        with pytest.raises(GridMismatch):
            forward_sde(model, batch, np.zeros((4, 99)), "x1")
        with pytest.raises(ValueError):
            forward_sde(model, batch, np.zeros((4, 65)), "x3")


class TestBackwardAffine:
    GRID = TimeGrid(1.0, 200)

    def zeros(self):
        return np.zeros(self.GRID.steps + 1)

    def test_flat_solution(self):
        dw2 = sample_brownian(self.GRID, 17, 16).dw2
        values, z2 = backward_bsde_affine(self.GRID, dw2, 5.0, self.zeros(),
                                          self.zeros(), self.zeros(), self.zeros())
        assert np.all(values == 5.0)
        assert np.all(z2 == 0.0)

    def test_terminal_values_bit_exact(self):
        dw2 = sample_brownian(self.GRID, 23, 32).dw2
        terminal = np.linspace(-2.0, 2.0, 32)
        slope = np.full(self.GRID.steps + 1, -0.8)
        values, _ = backward_bsde_affine(self.GRID, dw2, terminal, slope,
                                         self.zeros(), self.zeros(), self.zeros())
        assert np.array_equal(values[:, -1], terminal)

    def test_linear_drift_matches_exponential(self):
        grid = TimeGrid(1.0, 1000)
        dw2 = np.zeros((1, grid.steps))
        slope = np.full(grid.steps + 1, -1.0)   # drift(v) = -v
        zeros = np.zeros(grid.steps + 1)
        values, _ = backward_bsde_affine(grid, dw2, 1.0, slope, zeros, zeros, zeros)
        assert abs(values[0, 0] - math.exp(-1.0)) <= 1e-3

    def test_tanh_scenario_matches_conditional_expectation_formula(self):
        # deterministic-kernel closed form: E value(0) = c0 * K(0, T) with
        # K(0, T) = exp(-log cosh(sqrt 2 T)) = 1 / cosh(sqrt 2)
        model = build_model(TANH, steps=1024, xi=(0.7, 0.0, 1.0))
        ric = riccati.solve(model)
        tab = model.tab.node
        slope = tab["a"] + tab["rho1"] * ric.alpha
        forcing = tab["rho1"] * ric.beta + tab["s"]
        batch = sample_brownian(model.grid, 7, 40_000)
        terminal = 0.7 + batch.w2()[:, -1]
        zeros = np.zeros(model.grid.steps + 1)
        values, _ = backward_bsde_affine(model.grid, batch.dw2, terminal,
                                         slope, forcing, zeros, zeros)
        v0 = values[:, 0]
        se = v0.std(ddof=1) / math.sqrt(len(v0))
        closed = 0.7 / math.cosh(math.sqrt(2.0))
        assert abs(v0.mean() - closed) <= 3.0 * se

    def test_strong_refinement_against_fine_reference(self):
        # genuinely stochastic recursion (f2 != 0): quadrupling the steps
        # shrinks the endpoint gap to a 64x-finer reference by >= 1.5x
        model_fine = build_model(SYMMETRIC_F2, steps=16384, xi=(0.4, 0.0, 0.7))
        ric_fine = riccati.solve(model_fine)
        fine_batch = sample_brownian(model_fine.grid, 13, 128)

        def run(model, batch, ric):
            tab = model.tab.node
            f2 = tab["f2"]
            ratio = f2 * ric.beta1 / ric.alpha1
            slope = tab["a"] + tab["rho1"] * ric.alpha + f2 * f2
            forcing = tab["rho1"] * ric.beta + tab["s"] + f2 * ratio
            terminal = 0.4 + 0.7 * batch.w2()[:, -1]
            values, _ = backward_bsde_affine(model.grid, batch.dw2, terminal,
                                             slope, forcing, f2, ratio)
            return values[:, 0]

        reference = run(model_fine, fine_batch, ric_fine)
        errors = []
        for steps in (1024, 256):
            model = build_model(SYMMETRIC_F2, steps=steps, xi=(0.4, 0.0, 0.7))
            coarse = fine_batch.coarsened(16384 // steps)
            errors.append(np.median(np.abs(run(model, coarse, riccati.solve(model))
                                           - reference)))
        assert errors[1] / errors[0] >= 1.5

    def test_shape_checks(self):
        dw2 = np.zeros((2, self.GRID.steps))
        with pytest.raises(GridMismatch):
            backward_bsde_affine(self.GRID, dw2, 0.0, np.zeros(11), self.zeros(),
                                 self.zeros(), self.zeros())
        with pytest.raises(GridMismatch):
            backward_bsde_affine(self.GRID, dw2, 0.0, self.zeros(), np.zeros((3, 7)),
                                 self.zeros(), self.zeros())


class TestPropagateAffine:
    def test_requires_independent_pattern(self):
        model = build_model(GENERIC, pattern="SymmetricW2", steps=64)
        with pytest.raises(PatternMismatch):
            propagate_affine(model, riccati.solve(model))

    def test_constant_terminal_is_a_flat_martingale(self):
        model = build_model(ZERO, pattern="W1VsW2", steps=128, xi=(0.9, 0.0, 0.0))
        states = propagate_affine(model, riccati.solve(model))
        for name in ("ymean", "yhat", "ytilde", "y"):
            assert np.allclose(states[name].p, 0.9, atol=1e-12)
            assert np.all(states[name].q1 == 0.0) or name == "yhat"
        assert np.allclose(states["yhat"].q1, 0.0)

    def test_pure_w1_terminal(self):
        model = build_model(ZERO, pattern="W1VsW2", steps=128, xi=(0.0, 0.8, 0.0))
        states = propagate_affine(model, riccati.solve(model))
        batch = sample_brownian(model.grid, 3, 6)
        w1, w2 = batch.w1(), batch.w2()
        assert np.allclose(states["yhat"].evaluate(w1, w2), 0.8 * w1, atol=1e-12)
        assert np.allclose(states["ytilde"].evaluate(w1, w2), 0.0, atol=1e-12)

    def test_affine_exactness_against_direct_formulas(self):
        from bsdegame.model import ConditioningMode, conditional_terminal
        model = build_model(GENERIC, pattern="W1VsW2", steps=256, xi=(0.5, 0.6, 0.8))
        sol = riccati.solve(model)
        states = propagate_affine(model, sol)
        batch = sample_brownian(model.grid, 21, 32)
        w1, w2 = batch.w1(), batch.w2()
        tab = model.tab.node

        # direct w1-filter formula: kernel times the conditioned terminal
        # plus the accumulated forcing
        kern_xi = kernels.build("xi", model, sol)
        g3 = (tab["rho2"] * sol.alpha2 + tab["rho1"] * sol.gamma2) * states["ymean"].p \
            + tab["rho1"] * sol.gamma3 + tab["rho2"] * sol.beta2 + tab["s"]
        conditioned = conditional_terminal(model.terminal, w1, ConditioningMode.GIVEN_W1)
        direct = kern_xi.terminal_factors()[None, :] * conditioned \
            + kern_xi.integrate_forcing(g3)[None, :]
        assert np.max(np.abs(states["yhat"].evaluate(w1, w2) - direct)) <= 1e-10

        kern_psi = kernels.build("psi", model, sol)
        g4 = (tab["rho2"] * sol.tau2 + tab["rho1"] * sol.alpha1) * states["ymean"].p \
            + tab["rho1"] * sol.beta1 + tab["rho2"] * sol.tau3 + tab["s"]
        conditioned2 = conditional_terminal(model.terminal, w2, ConditioningMode.GIVEN_W2)
        direct2 = kern_psi.terminal_factors()[None, :] * conditioned2 \
            + kern_psi.integrate_forcing(g4)[None, :]
        assert np.max(np.abs(states["ytilde"].evaluate(w1, w2) - direct2)) <= 1e-10

    def test_mean_profile_solves_the_expectation_system(self):
        # the kernel quadrature and a direct fourth-order solve of the mean
        # backward equation agree
        from bsdegame.ode import solve_linear_backward
        model = build_model(GENERIC, pattern="W1VsW2", steps=512, xi=(0.5, 0.6, 0.8))
        sol = riccati.solve(model)
        states = propagate_affine(model, sol)
        tab = model.tab.node
        rate = tab["a"] + tab["rho1"] * sol.alpha
        forcing = tab["rho1"] * sol.beta + tab["s"]
        ode_mean = solve_linear_backward(rate, forcing, 0.5, model.grid.dt)
        # trapezoid quadrature vs fourth-order solve: O(dt^2) agreement
        assert np.max(np.abs(states["ymean"].p - ode_mean)) <= 1e-6

    def test_deterministic_limit_matches_discrete_nash_oracle(self):
        model = build_model(DETERMINISTIC, pattern="W1VsW2", steps=400,
                            horizon=0.5, xi=(0.6, 0.0, 0.0))
        states = propagate_affine(model, riccati.solve(model))
        oracle = verification.deterministic_oracle(model)
        assert abs(states["y"].p[0] - oracle.y[0]) <= 1e-3
