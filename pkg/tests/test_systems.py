"""Plant simulation tests: equilibria, damping, noise, reproducibility."""

import numpy as np
import pytest

from gpexplore.systems import available_systems, make_system

ALL_SYSTEMS = available_systems()


@pytest.fixture(params=ALL_SYSTEMS)
def system(request):
    return make_system(request.param)


class TestEquilibrium:
    def test_initial_state_is_fixed_point(self, system):
        x = system.spec.initial_state
        u = np.zeros(system.spec.control_dim)
        x_next = system.true_step(x, u)
        np.testing.assert_allclose(x_next, x, atol=1e-12)

    def test_stays_at_equilibrium_for_1000_steps(self, system):
        x = system.spec.initial_state.copy()
        u = np.zeros(system.spec.control_dim)
        for _ in range(1000):
            x = system.true_step(x, u)
        assert np.linalg.norm(x - system.spec.initial_state) < 1e-6

    def test_twolink_rest_is_fixed_point_anywhere(self):
        # horizontal plane: no gravity, so any resting configuration holds
        system = make_system("twolink")
        x = np.array([0.7, -1.2, 0.0, 0.0])
        x_next = system.true_step(x, np.zeros(2))
        np.testing.assert_allclose(x_next, x, atol=1e-12)


class TestPendulumPhysics:
    def test_energy_decreases_under_damping(self):
        system = make_system("pendulum")
        x = np.array([0.3, 0.0])
        energy = system.energy(x)
        for _ in range(100):
            x = system.true_step(x, np.zeros(1))
            new_energy = system.energy(x)
            assert new_energy < energy
            energy = new_energy

    def test_torque_accelerates(self):
        system = make_system("pendulum")
        x_next = system.true_step(np.zeros(2), np.array([1.5]))
        assert x_next[1] > 0


class TestObserve:
    def test_zero_noise_is_identity(self):
        from dataclasses import replace

        system = make_system("pendulum")
        system.spec = replace(system.spec, noise_variance=0.0)
        x = np.array([0.4, -0.2])
        rng = np.random.default_rng(0)
        np.testing.assert_array_equal(system.observe(x, rng), x)

    def test_empirical_variance(self):
        system = make_system("pendulum")  # noise variance 0.05
        rng = np.random.default_rng(1)
        x = np.zeros(2)
        draws = np.array([system.observe(x, rng) for _ in range(100_000)])
        emp = draws.var(axis=0)
        np.testing.assert_allclose(emp, 0.05, rtol=0.05)

    def test_seed_determinism(self, system):
        x = system.spec.initial_state
        a = system.observe(x, np.random.default_rng(42))
        b = system.observe(x, np.random.default_rng(42))
        np.testing.assert_array_equal(a, b)


class TestRollout:
    def test_empty_sequence(self, system):
        rng = np.random.default_rng(0)
        traj = system.rollout(system.spec.initial_state, np.zeros((0, system.spec.control_dim)), rng)
        assert len(traj) == 0
        assert traj.states.shape == (1, system.spec.state_dim)

    def test_single_step_composition(self, system):
        u = 0.5 * system.spec.control_upper
        x0 = system.spec.initial_state
        traj = system.rollout(x0, u[None, :], np.random.default_rng(7))
        x1 = system.true_step(x0, u)
        y1 = system.observe(x1, np.random.default_rng(7))
        np.testing.assert_allclose(traj.states[1], x1)
        np.testing.assert_allclose(traj.observations[0], y1)

    def test_matches_manual_composition(self, system):
        rng_controls = np.random.default_rng(3)
        controls = rng_controls.uniform(
            system.spec.control_lower, system.spec.control_upper, size=(10, system.spec.control_dim)
        )
        traj = system.rollout(system.spec.initial_state, controls, np.random.default_rng(11))
        rng = np.random.default_rng(11)
        x = system.spec.initial_state
        for k, (step, state, control, obs) in enumerate(traj.records()):
            assert step == k
            np.testing.assert_allclose(state, x)
            x = system.true_step(x, controls[k])
            np.testing.assert_allclose(traj.states[k + 1], x)
            np.testing.assert_allclose(obs, system.observe(x, rng))

    def test_bit_reproducible(self, system):
        controls = np.zeros((5, system.spec.control_dim))
        a = system.rollout(system.spec.initial_state, controls, np.random.default_rng(9))
        b = system.rollout(system.spec.initial_state, controls, np.random.default_rng(9))
        np.testing.assert_array_equal(a.observations, b.observations)


class TestBoundedness:
    @pytest.mark.parametrize("name", ["pendulum", "twolink"])
    def test_random_bounded_inputs_keep_state_finite(self, name):
        system = make_system(name)
        for seed in range(20):
            rng = np.random.default_rng(seed)
            controls = rng.uniform(
                system.spec.control_lower,
                system.spec.control_upper,
                size=(500, system.spec.control_dim),
            )
            traj = system.rollout(system.spec.initial_state, controls, rng)
            assert np.all(np.isfinite(traj.states))


class TestValidation:
    def test_out_of_bounds_control_rejected(self, system):
        u = system.spec.control_upper * 1.5
        with pytest.raises(ValueError):
            system.true_step(system.spec.initial_state, u)

    def test_non_finite_state_rejected(self, system):
        x = system.spec.initial_state.copy()
        x[0] = np.nan
        with pytest.raises(ValueError):
            system.true_step(x, np.zeros(system.spec.control_dim))

    def test_unknown_system_name(self):
        with pytest.raises(ValueError):
            make_system("halfcheetah")

    def test_table_schema(self):
        from gpexplore.systems import load_system_table

        table = load_system_table()
        for name, params in table.items():
            assert {"dt", "noise_variance", "control_bounds", "region_of_interest", "initial_state"} <= set(params)
            roi = np.asarray(params["region_of_interest"], dtype=float)
            assert np.all(roi[:, 0] < roi[:, 1]), name
