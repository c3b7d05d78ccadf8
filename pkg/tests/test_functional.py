import math

import numpy as np
import pytest

import src.oracle
from src.analytic import evolve_nonmarkov
from src.core import (
    BathSpec, CutoffInsufficient, InvalidParam, ModelParams, QubitDensityMatrix, StepTooCoarse, TimeGrid,
)
from src.functional import (
    amplitude_recursion, assemble_density_matrix, closed_form_functionals, closed_form_series,
    continuum_line_sums, hierarchy_sources, integrate_functionals, line_sums,
)
from src.oracle import ExactOracle, FockConfig, ThermalEnsemble, discretize_bath, enumerate_thermal_configs


@pytest.fixture
def small_bath(params):
    return discretize_bath(params, 0.4, 5)


def test_ground_vacuum_amplitude_is_constant(params, small_bath, grid):
    series = integrate_functionals(params, small_bath, grid, 2)
    vacuum = FockConfig.vacuum()
    assert np.allclose(series.amplitude((0, vacuum), (0, vacuum)), 1.0, atol=1e-14)
    assert not np.any(series.amplitude((0, vacuum), (1, vacuum)))


def test_functional_engine_matches_the_oracle(params, small_bath):
    ensemble = enumerate_thermal_configs(small_bath, 2)
    grid = TimeGrid.uniform(1.0, 0.1)
    sigmax = QubitDensityMatrix.sigmax()
    oracle = ExactOracle(params, small_bath).evolve(sigmax, grid, ensemble)
    series = integrate_functionals(params, small_bath, grid, 2, ensemble=ensemble)
    functional = assemble_density_matrix(series, small_bath, sigmax)
    assert np.allclose(functional.rho11, oracle.rho11, atol=1e-6)
    assert np.allclose(functional.rho10, oracle.rho10, atol=1e-6)
    assert np.allclose(functional.rho00 + functional.rho11, 1.0, atol=1e-6)


def test_hierarchy_couplings_carry_the_occupation(small_bath):
    config = FockConfig.from_dict({1: 2})
    lam = small_bath.couplings[1]
    down = dict(hierarchy_sources(small_bath, (0, config)))
    assert down == {(1, FockConfig.from_dict({1: 1})): pytest.approx(2 * lam)}
    up = dict(hierarchy_sources(small_bath, (1, FockConfig.from_dict({1: 1}))))
    assert len(up) == small_bath.n_modes
    assert up[(0, config)] == pytest.approx(lam)


def test_broken_oracle_coupling_shows_up_against_the_hierarchy(zero_t_params, single_mode_bath, monkeypatch):
    def unstimulated(bath, state):
        qubit, config = state
        if qubit == 1:
            for k in range(bath.n_modes):
                yield (0, config.shifted(k, 1)), bath.couplings[k]
        else:
            for k, _ in config.occupations:
                yield (1, config.shifted(k, -1)), bath.couplings[k]

    monkeypatch.setattr(src.oracle, 'coupled_states', unstimulated)
    ensemble = ThermalEnsemble(((FockConfig.from_modes([0]), 1.0),), 0.0)
    grid = TimeGrid(np.array([0.0, 0.1]))
    excited = QubitDensityMatrix.excited()
    broken = ExactOracle(zero_t_params, single_mode_bath).evolve(excited, grid, ensemble)
    series = integrate_functionals(zero_t_params, single_mode_bath, grid, 1, ensemble=ensemble)
    functional = assemble_density_matrix(series, single_mode_bath, excited)

    t = 10.0
    assert functional.rho11[-1] == pytest.approx(math.cos(math.sqrt(2) * 0.05 * t) ** 2, abs=1e-8)
    assert abs(functional.rho11[-1] - broken.rho11[-1]) > 0.1


def test_assembly_is_linear_in_the_initial_state(params, small_bath):
    grid = TimeGrid.uniform(1.0, 0.25)
    series = integrate_functionals(params, small_bath, grid, 2)
    excited = assemble_density_matrix(series, small_bath, QubitDensityMatrix.excited())
    ground = assemble_density_matrix(series, small_bath, QubitDensityMatrix.ground())
    mixed = assemble_density_matrix(series, small_bath, QubitDensityMatrix.mixed())
    assert np.allclose(mixed.rho11, 0.5 * (excited.rho11 + ground.rho11), atol=1e-14)
    assert not np.any(mixed.rho10)


def test_named_functionals_at_start(params, small_bath, grid):
    config = FockConfig.from_modes([2])
    series = integrate_functionals(params, small_bath, grid, 2)
    state = series.state(config, 0)
    assert state.f == pytest.approx(1.0)
    assert state.psi_f == pytest.approx(1.0)
    assert not np.any(state.g) and not np.any(state.phi_f) and not np.any(state.psi_g)


def test_zero_temperature_keeps_only_the_vacuum(zero_t_params, grid):
    bath = discretize_bath(zero_t_params, 0.4, 5)
    series = integrate_functionals(zero_t_params, bath, grid, 2)
    assert series.members == ((FockConfig.vacuum(), 1.0),)
    assert series.missing_weight == 0.0


def test_coarse_step_is_rejected(params, small_bath, grid):
    with pytest.raises(StepTooCoarse):
        integrate_functionals(params, small_bath, grid, 1, step=1.0)
    with pytest.raises(InvalidParam):
        integrate_functionals(params, small_bath, grid, 1, step=0.0)


def test_insufficient_cutoff_is_rejected(grid):
    hot = ModelParams.from_x(0.5, 0.01)
    bath = discretize_bath(hot, 0.4, 5)
    with pytest.raises(CutoffInsufficient):
        integrate_functionals(hot, bath, grid, 0)


def test_single_seed_series_cannot_be_assembled(params, small_bath, grid):
    series = integrate_functionals(params, small_bath, grid, 2, qubits=(1,))
    with pytest.raises(InvalidParam):
        assemble_density_matrix(series, small_bath, QubitDensityMatrix.excited())


def test_assembly_rejects_a_foreign_bath(params, small_bath, grid):
    series = integrate_functionals(params, small_bath, grid, 2)
    with pytest.raises(InvalidParam):
        assemble_density_matrix(series, discretize_bath(params, 0.4, 7), QubitDensityMatrix.excited())


def test_closed_form_functionals_start_from_the_seed(params, small_bath):
    state = closed_form_functionals(params, small_bath, FockConfig.from_modes([2]), 0.0)
    assert state.f == pytest.approx(1.0)
    assert state.psi_f == pytest.approx(1.0)
    for values in (state.g, state.psi_g, state.phi_f, state.phi_g):
        assert np.allclose(values, 0.0)


def test_closed_form_resonant_absorption(params, small_bath):
    t = 150.0
    state = closed_form_functionals(params, small_bath, FockConfig.from_modes([2]), t)
    rate = 0.5 * params.gamma0
    lam = small_bath.couplings[2]
    assert abs(state.g[2]) == pytest.approx(lam * (1.0 - math.exp(-rate * t)) / rate, rel=1e-12)
    assert abs(state.f) == pytest.approx(math.exp(-rate * t), rel=1e-12)
    assert abs(state.psi_f) == pytest.approx(math.exp(-params.gamma0 * t), rel=1e-12)
    with pytest.raises(InvalidParam):
        closed_form_functionals(params, small_bath, FockConfig.vacuum(), -1.0)


@pytest.mark.parametrize("rho0", [
    QubitDensityMatrix.excited(), QubitDensityMatrix.ground(), QubitDensityMatrix.sigmax(),
])
def test_closed_form_series_resums_to_the_nonmarkov_evolution(params, small_bath, grid, rho0):
    series = closed_form_series(params, small_bath, grid, 3)
    assembled = assemble_density_matrix(series, small_bath, rho0)
    reference = evolve_nonmarkov(params, rho0, grid)
    assert np.allclose(assembled.rho11, reference.rho11, atol=1e-9)
    assert np.allclose(assembled.rho10, reference.rho10, atol=1e-9)


def test_closed_form_series_is_built_from_the_functionals(params, small_bath, grid):
    series = closed_form_series(params, small_bath, grid, 3, continuum=False)
    channels = series.channels()
    for j, (config, _) in enumerate(series.members[:3]):
        m_o = config.total
        state = series.state(config, 40)
        assert channels['down_from_down'][j, 40] == pytest.approx(abs(state.f) ** 2, rel=1e-12)
        absorbed = m_o * np.sum(np.abs(state.g) ** 2)
        emitted = (m_o + 1) * np.sum(np.abs(state.phi_f) ** 2)
        assert channels['up_from_down'][j, 40] == pytest.approx(absorbed, rel=1e-12, abs=1e-15)
        assert channels['down_from_up'][j, 40] == pytest.approx(emitted, rel=1e-12)
        assert channels['coherence'][j, 40] == pytest.approx(state.psi_f * np.conj(state.f), rel=1e-12)


@pytest.mark.parametrize("m_o", [0, 1, 2])
def test_bath_line_sums_approach_the_flat_band_limit(params, m_o):
    t = np.array([0.5, 1.0, 3.0]) / params.gamma0
    errors = []
    for band, n_modes in ((0.4, 81), (1.6, 321)):
        bath = discretize_bath(params, band, n_modes)
        r = int(bath.resonant_modes(params.omega0)[0])
        config = FockConfig.from_dict({r: m_o})
        absorbed, emitted = line_sums(params, bath, config, t)
        limit_absorbed, limit_emitted = line_sums(params, bath, config, t, continuum=True)
        errors.append(max(np.max(np.abs(absorbed - limit_absorbed)), np.max(np.abs(emitted - limit_emitted))))
    assert errors[1] < 2.5e-3
    assert errors[1] < errors[0]


def test_vacuum_emission_over_the_reference_bath(params):
    bath = discretize_bath(params, 1.6, 321)
    t = np.array([0.5, 1.0, 3.0]) / params.gamma0
    _, emitted = line_sums(params, bath, FockConfig.vacuum(), t)
    assert emitted == pytest.approx([0.39247, 0.63166, 0.94970], abs=2e-5)
    _, limit = continuum_line_sums(params.gamma0 * t, 0)
    assert np.allclose(limit, 1.0 - np.exp(-params.gamma0 * t), atol=1e-15)


def test_closed_form_series_over_the_bath_modes(params, grid):
    bath = discretize_bath(params, 1.6, 321)
    series = closed_form_series(params, bath, grid, 3, continuum=False)
    for rho0 in (QubitDensityMatrix.excited(), QubitDensityMatrix.ground()):
        assembled = assemble_density_matrix(series, bath, rho0)
        gap = np.max(np.abs(assembled.rho11 - evolve_nonmarkov(params, rho0, grid).rho11))
        assert 1e-5 < gap < 5e-3
    sigmax = QubitDensityMatrix.sigmax()
    coherence = assemble_density_matrix(series, bath, sigmax).rho10
    assert np.allclose(coherence, evolve_nonmarkov(params, sigmax, grid).rho10, atol=1e-9)


def test_closed_form_series_needs_a_resonant_mode(params, grid):
    bath = BathSpec(np.array([0.9, 1.1]), np.array([0.01, 0.01]), params.beta)
    with pytest.raises(InvalidParam):
        closed_form_series(params, bath, grid, 2)


def test_uncoupled_recursion_is_a_pure_phase():
    bath = BathSpec(np.array([0.9, 1.1]), np.zeros(2), math.inf)
    seed = np.array([1.0, 0.5j])
    out = amplitude_recursion(bath, 10, 0.01, omega0=1.0, field_seed=seed)
    assert out.psi[-1] == pytest.approx((1.0 - 0.01j) ** 10)
    assert np.allclose(out.f[-1], seed * (1.0 - 0.01j * bath.omegas) ** 10)
    assert not np.any(out.phi) and not np.any(out.g)
    rotating = amplitude_recursion(bath, 10, 0.01, omega0=1.0, frame_frequency=1.0)
    assert np.allclose(rotating.psi, 1.0)
    assert rotating.lab_psi()[-1] == pytest.approx(np.exp(-0.1j))


def test_recursion_rejects_coarse_steps(small_bath):
    with pytest.raises(StepTooCoarse):
        amplitude_recursion(small_bath, 10, 1.0, omega0=1.0)
    with pytest.raises(InvalidParam):
        amplitude_recursion(small_bath, 0, 0.01, omega0=1.0)


def test_recursion_converges_at_first_order(small_bath):
    finals = []
    for epsilon in (0.01, 0.005, 0.0025):
        steps = int(round(20.0 / epsilon))
        out = amplitude_recursion(small_bath, steps, epsilon, omega0=1.0, sample_every=steps)
        assert out.times[-1] == pytest.approx(20.0)
        finals.append(out.psi[-1])
    ratio = abs(finals[0] - finals[1]) / abs(finals[1] - finals[2])
    assert 1.8 < ratio < 2.2


def test_absorption_amplitude_follows_its_closed_form(params):
    bath = discretize_bath(params, 1.6, 321)
    r = int(bath.resonant_modes(params.omega0)[0])
    vacuum, one = FockConfig.vacuum(), FockConfig.from_dict({r: 1})
    grid = TimeGrid(0.1 * np.arange(1, 31))
    series = integrate_functionals(params, bath, grid, 1, ensemble=ThermalEnsemble(((one, 1.0),), 0.0), qubits=(0,))
    g = np.abs(series.amplitude((0, one), (1, vacuum)))
    closed = np.array([abs(closed_form_functionals(params, bath, one, s).g[r]) for s in grid.absolute(params.gamma0)])
    assert np.max(np.abs(g / closed - 1.0)) < 0.05
