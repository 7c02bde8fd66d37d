import math

import numpy as np
import pytest

from pbsens.linalg import frobenius_norm, mat_exp, solve_linear
from pbsens.models import make_chua, make_const_linear, make_scalar_decay
from pbsens.ode import integrate, uniform_grid
from pbsens.reference import (
    augment_state,
    finite_difference_sensitivity,
    relative_error,
    run_forward_sensitivity,
    split_state,
)
from pbsens.sensitivity import SensitivityTrajectory


class TestAugmentedState:
    def test_round_trip_exact(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(3)
        s = rng.standard_normal((3, 4))
        z = augment_state(x, s)
        assert z.shape == (3 * 5,)
        x2, s2 = split_state(z, 3, 4)
        assert np.array_equal(x, x2)
        assert np.array_equal(s, s2)

    def test_column_per_parameter_layout(self):
        s = np.array([[1.0, 3.0], [2.0, 4.0]])
        z = augment_state(np.zeros(2), s)
        assert np.array_equal(z[2:], [1.0, 2.0, 3.0, 4.0])

    def test_bad_length_rejected(self):
        with pytest.raises(ValueError, match="length"):
            split_state(np.zeros(7), 2, 2)


class TestForwardSensitivity:
    def test_scalar_decay_closed_form(self):
        m = make_scalar_decay()
        grid = uniform_grid(0.0, 1.0, 100)
        _, sens = run_forward_sensitivity(m.system, m.p, m.x0, grid)
        assert sens.matrices[-1, 0, 0] == pytest.approx(-math.exp(-1.0), abs=1e-6)
        assert sens.method == "FS"

    def test_no_parameter_dependence_gives_zero(self):
        from pbsens.ode import OdeSystem
        system = OdeSystem(n_x=2, n_u=0, n_p=3,
                           f=lambda x, u, p: -x,
                           jac_x=lambda x, u, p: -np.eye(2),
                           jac_p=lambda x, u, p: np.zeros((2, 3)))
        _, sens = run_forward_sensitivity(system, np.ones(3), np.ones(2), uniform_grid(0.0, 2.0, 20))
        assert np.array_equal(sens.matrices, np.zeros((21, 2, 3)))

    def test_constant_coefficient_closed_form(self):
        m = make_const_linear(n_x=3, n_p=2, seed=3)
        grid = uniform_grid(0.0, 1.0, 50)
        _, sens = run_forward_sensitivity(m.system, m.p, m.x0, grid)
        for k in (10, 25, 50):
            exact = m.sensitivity(grid[k])
            assert frobenius_norm(sens.matrices[k] - exact) <= 1e-6

    def test_state_component_identical_to_plain_integration(self):
        m = make_chua()
        grid = uniform_grid(0.0, 2.0, 40)
        traj_plain = integrate(m.system, m.p, m.x0, grid)
        traj_fs, _ = run_forward_sensitivity(m.system, m.p, m.x0, grid)
        # one-way coupling: the state block evolves bit-identically
        assert np.array_equal(traj_plain.states, traj_fs.states)


class TestFiniteDifference:
    def test_scalar_decay_closed_form(self):
        m = make_scalar_decay()
        grid = uniform_grid(0.0, 1.0, 100)
        sens = finite_difference_sensitivity(m.system, m.p, m.x0, grid)
        assert sens.matrices[-1, 0, 0] == pytest.approx(-math.exp(-1.0), abs=1e-6)
        assert sens.method == "FD"

    def test_linear_in_p_forcing_h_independent(self):
        from pbsens.ode import OdeSystem
        system = OdeSystem(n_x=1, n_u=0, n_p=1,
                           f=lambda x, u, p: -x + p,
                           jac_x=lambda x, u, p: np.array([[-1.0]]),
                           jac_p=lambda x, u, p: np.array([[1.0]]))
        grid = uniform_grid(0.0, 1.0, 20)
        s1 = finite_difference_sensitivity(system, np.ones(1), np.zeros(1), grid, h=1e-5)
        s2 = finite_difference_sensitivity(system, np.ones(1), np.zeros(1), grid, h=5e-6)
        assert np.max(np.abs(s1.matrices - s2.matrices)) < 1e-8

    def test_agrees_with_forward_on_chua(self):
        m = make_chua()
        grid = uniform_grid(0.0, 10.0, 500)
        _, fs = run_forward_sensitivity(m.system, m.p, m.x0, grid)
        fd = finite_difference_sensitivity(m.system, m.p, m.x0, grid)
        re = relative_error(fd, fs)
        assert re[grid >= 0.1].max() <= 1e-3

    def test_rejects_nonpositive_h(self):
        m = make_scalar_decay()
        with pytest.raises(ValueError, match="positive"):
            finite_difference_sensitivity(m.system, m.p, m.x0, np.array([0.0, 1.0]), h=0.0)


class TestRelativeError:
    def make_sens(self, mats):
        mats = np.asarray(mats, dtype=float)
        return SensitivityTrajectory(
            times=np.arange(mats.shape[0], dtype=float),
            matrices=mats,
            method="FS",
            equilibrium_flags=np.zeros(mats.shape[0], dtype=bool),
        )

    def test_identical_gives_zero(self):
        mats = np.zeros((3, 2, 2))
        mats[1] = [[1.0, 2.0], [3.0, 4.0]]
        mats[2] = [[2.0, 0.0], [0.0, 2.0]]
        s = self.make_sens(mats)
        assert np.array_equal(relative_error(s, s), np.zeros(3))

    def test_double_gives_one(self):
        mats = np.zeros((3, 1, 1))
        mats[1], mats[2] = 2.0, -3.0
        ref = self.make_sens(mats)
        cand = self.make_sens(2.0 * mats)
        re = relative_error(cand, ref)
        assert re[0] == 0.0
        assert re[1] == pytest.approx(1.0, rel=1e-15)
        assert re[2] == pytest.approx(1.0, rel=1e-15)

    def test_zero_reference_uses_absolute(self):
        ref = self.make_sens(np.zeros((2, 1, 1)))
        mats = np.zeros((2, 1, 1))
        mats[1] = 0.25
        cand = self.make_sens(mats)
        re = relative_error(cand, ref)
        assert re[0] == 0.0
        assert re[1] == 0.25

    def test_grid_mismatch_rejected(self):
        a = self.make_sens(np.zeros((2, 1, 1)))
        b = self.make_sens(np.zeros((3, 1, 1)))
        with pytest.raises(ValueError, match="grid"):
            relative_error(a, b)


class TestCrossOracleConsistency:
    def test_fs_and_fd_agree_on_all_builtin_models(self):
        from pbsens.models import make_random_linear
        cases = [make_scalar_decay(), make_const_linear(seed=2), make_chua(),
                 make_random_linear(n=6, seed=1)]
        for m in cases:
            t0, t1 = m.tspan
            grid = uniform_grid(t0, min(t1, 2.0), 100)
            _, fs = run_forward_sensitivity(m.system, m.p, m.x0, grid)
            fd = finite_difference_sensitivity(m.system, m.p, m.x0, grid)
            re = relative_error(fd, fs)
            # skip the earliest steps where the reference is still near zero
            assert re[5:].max() <= 1e-3, m.name

    def test_solve_linear_mat_exp_consistency(self):
        # the closed-form route used by const_linear: A^{-1}(e^{tA} - I)B
        m = make_const_linear(n_x=4, n_p=2, seed=11)
        a = m.system.jac_x(m.x0, np.zeros(0), m.p)
        b = m.system.jac_p(m.x0, np.zeros(0), m.p)
        t = 0.8
        direct = solve_linear(a, mat_exp(t * a) - np.eye(4)) @ b
        assert frobenius_norm(a @ direct - (mat_exp(t * a) - np.eye(4)) @ b) <= 1e-10
