"""
Acceptance checks run by `validate`.
Every check yields a CheckResult; the process passes iff every gating check passes.
Checks that rely on the low-temperature, weak-coupling closed forms are skipped, with the
reason recorded, when the configured parameters fall outside that window.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .analytic import ClosedFormDynamics
from .core import Method, ModelParams, NotAState, QubitDensityMatrix, TimeGrid
from .data_pipeline import DynamicsPipeline
from .data_validation import TraceValidator, parse_table
from .export_report import render_csv
from .functional import (
    amplitude_recursion, assemble_density_matrix, closed_form_functionals, closed_form_series,
    integrate_functionals,
)
from .observables import (
    binary_entropy, decoherence_rate, entropy_series, fidelity_vs_free, sigmax_fidelity_closed_form,
)
from .oracle import ExactOracle, FockConfig, ThermalEnsemble, discretize_bath, enumerate_thermal_configs
from .qubit_config import CODE_VERSION, PROPERTY_CHECKS, REFERENCE

logger = logging.getLogger(__name__)


def _num(value):
    value = float(value)
    return value if math.isfinite(value) else None


@dataclass
class CheckResult:
    name: str
    expected: object
    actual: object
    tolerance: float
    passed: bool
    gating: bool = True
    skipped: bool = False
    reason: str = ''

    @classmethod
    def skip(cls, name, reason, gating=True):
        return cls(name, None, None, None, True, gating, True, reason)

    @classmethod
    def within(cls, name, expected, actual, tolerance, gating=True, reason=''):
        passed = math.isfinite(actual) and abs(actual - expected) <= tolerance
        return cls(name, _num(expected), _num(actual), tolerance, bool(passed), gating, False, reason)

    @classmethod
    def at_most(cls, name, actual, tolerance, gating=True, reason=''):
        """actual is an error measure that must not exceed tolerance."""
        passed = math.isfinite(actual) and actual <= tolerance
        return cls(name, 0.0, _num(actual), tolerance, bool(passed), gating, False, reason)

    def as_dict(self):
        return {
            'name': self.name,
            'expected': self.expected,
            'actual': self.actual,
            'tolerance': self.tolerance,
            'pass': self.passed,
            'gating': self.gating,
            'skipped': self.skipped,
            'reason': self.reason,
        }


def _window(grid, start):
    return grid.times >= start - 1e-12


class ValidationSuite:
    """
    Runs the acceptance checks for one RunConfig.
    The oracle resolution (n_modes, band) comes from the config; the thermal-oracle and
    engine-equivalence checks use their own small reference baths.
    """

    LOW_T_CHECKS = (
        'thermal_asymptotes', 'decoherence_crossover', 'rate_ratio', 'relaxation_ordering',
        'fidelity', 'entropy', 'oracle_thermal', 'engine_equivalence', 'closed_form_resummation',
        'table_audit',
    )

    def __init__(self, config):
        self.config = config.validate()
        self.params = config.model_params()
        self.closed_form = ClosedFormDynamics(self.params)
        self.warnings = self.params.validity_warnings()
        self.logger = logging.getLogger(__name__)

    def run(self):
        results = []
        for name in (
            'thermal_asymptotes', 'decoherence_crossover', 'rate_ratio', 'relaxation_ordering',
            'fidelity', 'entropy', 'oracle_zero_temperature', 'oracle_thermal', 'engine_equivalence',
            'closed_form_resummation', 'functional_closed_forms', 'amplitude_recursion', 'properties',
            'table_audit',
        ):
            if name in self.LOW_T_CHECKS and self.warnings:
                results.append(CheckResult.skip(name, "outside the low-temperature window: " + "; ".join(self.warnings)))
                continue
            self.logger.info(f"Running check '{name}'")
            results.extend(getattr(self, f"check_{name}")())

        for r in results:
            if not r.passed:
                level = logging.ERROR if r.gating else logging.WARNING
                self.logger.log(level, f"Check '{r.name}' failed: expected {r.expected}, got {r.actual} (tol {r.tolerance})")
        passed = all(r.passed for r in results if r.gating)
        return {
            'code_version': CODE_VERSION,
            'config': self.config.as_dict(),
            'warnings': list(self.warnings),
            'passed': passed,
            'checks': [r.as_dict() for r in results],
        }

    # closed forms

    def check_thermal_asymptotes(self):
        grid = TimeGrid(np.array([0.0, 40.0]))
        x = self.params.x
        excited = QubitDensityMatrix.excited()
        nm = self.closed_form.nonmarkov(excited, grid).rho11[-1]
        markov = self.closed_form.markov(excited, grid).rho11[-1]
        return [
            CheckResult.within('nonmarkov_asymptote', x, nm, 1e-6),
            CheckResult.within('markov_asymptote', x / (1.0 + x), markov, 1e-6),
        ]

    def check_decoherence_crossover(self):
        grid = TimeGrid.uniform(8.0, 0.05)
        t = grid.absolute(self.params.gamma0)
        rate = self.closed_form.decoherence_rate(Method.NONMARKOV, t) / (0.5 * self.params.gamma0)
        x = self.params.x
        return [
            CheckResult.within('decoherence_rate_initial', (1.0 + x) / (1.0 - x), rate[0], 1e-9),
            CheckResult.within('decoherence_rate_late', 1.0, rate[-1], 0.01),
            CheckResult.at_most('decoherence_rate_monotone', max(0.0, float(np.max(np.diff(rate)))), 1e-15),
        ]

    def check_rate_ratio(self):
        grid = TimeGrid(0.1 + 0.05 * np.arange(99))
        t = grid.absolute(self.params.gamma0)
        dec = self.closed_form.decoherence_rate(Method.NONMARKOV, t)
        rel = self.closed_form.relaxation_rate(Method.NONMARKOV, t)
        return [CheckResult.at_most('rate_ratio_near_half', float(np.max(np.abs(dec / rel - 0.5))), 0.06)]

    def check_relaxation_ordering(self):
        grid = TimeGrid.uniform(6.0, 0.05)
        excited = QubitDensityMatrix.excited()
        diff = self.closed_form.nonmarkov(excited, grid).rho11 - self.closed_form.markov(excited, grid).rho11

        x, e = self.params.x, math.exp(-1.0)
        coth = (1.0 + x) / (1.0 - x)
        nm_at_1 = 1.0 - (1.0 - e) * (1.0 - x) / (1.0 - x * e) ** 2
        markov_at_1 = math.exp(-coth) + x / (1.0 + x) * (1.0 - math.exp(-coth))
        at_1 = int(np.argmin(np.abs(grid.times - 1.0)))
        return [
            CheckResult.at_most('relaxation_nm_above_markov', max(0.0, -float(np.min(diff))), 1e-12),
            CheckResult.within('relaxation_difference_initial', 0.0, diff[0], 1e-12),
            CheckResult.within('relaxation_difference_at_1', nm_at_1 - markov_at_1, diff[at_1], 1e-9),
        ]

    def check_fidelity(self):
        grid = TimeGrid.uniform(40.0, 0.05)
        sigmax = QubitDensityMatrix.sigmax()
        nm = fidelity_vs_free(self.closed_form.nonmarkov(sigmax, grid), sigmax)
        markov = fidelity_vs_free(self.closed_form.markov(sigmax, grid), sigmax)
        closed = sigmax_fidelity_closed_form(self.params, grid.absolute(self.params.gamma0))
        return [
            CheckResult.at_most('fidelity_closed_form', float(np.max(np.abs(nm - closed))), 1e-9),
            CheckResult.at_most('fidelity_nm_above_markov', max(0.0, -float(np.min(nm - markov))), 1e-12),
            CheckResult.within('fidelity_nm_tail', 0.5, nm[-1], 1e-4),
            CheckResult.within('fidelity_markov_tail', 0.5, markov[-1], 1e-4),
        ]

    def check_entropy(self):
        x = self.params.x
        if x == 0.0:
            return [CheckResult.skip('entropy_sign_pattern', "no thermal difference at x = 0")]
        grid = TimeGrid.uniform(40.0, 0.05)
        excited = QubitDensityMatrix.excited()
        nm = entropy_series(self.closed_form.nonmarkov(excited, grid))
        markov = entropy_series(self.closed_form.markov(excited, grid))
        diff = nm - markov

        signs = np.sign(diff[np.abs(diff) > 1e-12])
        changes = np.flatnonzero(np.diff(signs))
        pattern_ok = signs.size > 0 and signs[0] < 0 and signs[-1] > 0 and changes.size == 1
        tail_expected = binary_entropy(x) - binary_entropy(x / (1.0 + x))
        h = -x * math.log(x) - (1.0 - x) * math.log1p(-x)
        return [
            CheckResult('entropy_sign_pattern', 'negative then positive', f"{changes.size} sign changes",
                        None, bool(pattern_ok)),
            CheckResult.within('entropy_difference_tail', tail_expected, diff[-1], 1e-3),
            CheckResult.within('entropy_nm_tail', h, nm[-1], 1e-6),
        ]

    # exact engines

    def _zero_temperature_rho11(self, n_modes, grid):
        params = ModelParams(self.params.omega0, self.params.gamma0, math.inf)
        bath = discretize_bath(params, self.config.band, n_modes)
        ensemble = enumerate_thermal_configs(bath, 0)
        oracle = ExactOracle(params, bath, n_jobs=self.config.n_jobs, checkpoint_dir=self.config.checkpoint_dir)
        return oracle, ensemble, oracle.evolve(QubitDensityMatrix.excited(), grid, ensemble).rho11

    def check_oracle_zero_temperature(self):
        n = self.config.n_modes
        grid = TimeGrid.uniform(3.0, 0.05)
        window = _window(grid, 0.1)
        exact = np.exp(-grid.times)

        oracle, ensemble, rho11 = self._zero_temperature_rho11(n, grid)
        error = float(np.max(np.abs(rho11 - exact)[window]))

        zeno_grid = TimeGrid(5e-4 * np.arange(11))
        early = oracle.evolve(QubitDensityMatrix.excited(), zeno_grid, ensemble).rho11
        slope = float(np.gradient(early, zeno_grid.times, edge_order=2)[0])

        _, _, rho11_2 = self._zero_temperature_rho11(2 * n - 1, grid)
        _, _, rho11_4 = self._zero_temperature_rho11(4 * n - 3, grid)
        d1 = float(np.max(np.abs(rho11 - rho11_2)[window]))
        d2 = float(np.max(np.abs(rho11_2 - rho11_4)[window]))
        converged = error <= 0.01 and d2 <= max(0.5 * d1, 1e-3)
        return [
            CheckResult.at_most('oracle_zero_temperature', error, 0.01),
            CheckResult.at_most('oracle_zeno_slope', abs(slope), 0.01),
            CheckResult(
                'oracle_convergence', "error <= 0.01 and refinement differences shrinking",
                {'error': _num(error), f'd_{n}_{2 * n - 1}': _num(d1), f'd_{2 * n - 1}_{4 * n - 3}': _num(d2)},
                0.01, bool(converged), True, False,
                '' if converged else f"n_modes={n} over band {self.config.band} is too coarse",
            ),
        ]

    def check_oracle_thermal(self):
        """
        Oracle against NM on a windowed ensemble, directly and as the thermal correction
        oracle(x) - oracle(0) against NM - ZeroT.
        Reported only: one photon near resonance under-represents absorption.
        """
        n, band = REFERENCE['thermal_n_modes'], REFERENCE['thermal_band']
        grid = TimeGrid.uniform(3.0, 0.1)
        window = _window(grid, 0.1)
        sigmax = QubitDensityMatrix.sigmax()

        bath = discretize_bath(self.params, band, n)
        active = bath.window(self.params.omega0, REFERENCE['thermal_window'] * self.params.gamma0)
        ensemble = enumerate_thermal_configs(bath, REFERENCE['thermal_mmax'], active_modes=active)
        thermal = ExactOracle(self.params, bath, n_jobs=self.config.n_jobs).evolve(sigmax, grid, ensemble)

        params0 = ModelParams(self.params.omega0, self.params.gamma0, math.inf)
        bath0 = discretize_bath(params0, band, n)
        vacuum = ExactOracle(params0, bath0, n_jobs=self.config.n_jobs).evolve(
            sigmax, grid, enumerate_thermal_configs(bath0, 0))

        nm = self.closed_form.nonmarkov(sigmax, grid)
        zero = self.closed_form.zero_temperature(sigmax, grid)
        d_rho11 = (thermal.rho11 - vacuum.rho11) - (nm.rho11 - zero.rho11)
        d_coh = (np.abs(thermal.rho10) - np.abs(vacuum.rho10)) - (np.abs(nm.rho10) - np.abs(zero.rho10))
        results = []
        for name, deviation in (
            ('oracle_nonmarkov_rho11', thermal.rho11 - nm.rho11),
            ('oracle_nonmarkov_coherence', np.abs(thermal.rho10) - np.abs(nm.rho10)),
            ('oracle_thermal_rho11', d_rho11),
            ('oracle_thermal_coherence', d_coh),
        ):
            worst = float(np.max(np.abs(deviation)[window]))
            reason = (f"max deviation {worst:.4f} against tolerance 0.02 on a {n}-mode bath over {band}; "
                      "the windowed ensemble holds one photon near resonance")
            results.append(CheckResult.at_most(name, worst, 0.02, False, reason))
        return results

    def check_engine_equivalence(self):
        bath = discretize_bath(self.params, REFERENCE['equivalence_band'], REFERENCE['equivalence_n_modes'])
        ensemble = enumerate_thermal_configs(bath, REFERENCE['equivalence_mmax'])
        grid = TimeGrid.uniform(3.0, 0.1)
        sigmax = QubitDensityMatrix.sigmax()
        oracle = ExactOracle(self.params, bath).evolve(sigmax, grid, ensemble)
        series = integrate_functionals(self.params, bath, grid, REFERENCE['equivalence_mmax'], ensemble=ensemble)
        functional = assemble_density_matrix(series, bath, sigmax)
        return [
            CheckResult.at_most('engine_equivalence_rho11', float(np.max(np.abs(functional.rho11 - oracle.rho11))), 1e-3),
            CheckResult.at_most(
                'engine_equivalence_coherence', float(np.max(np.abs(functional.rho10 - oracle.rho10))), 1e-3),
        ]

    def check_closed_form_resummation(self):
        """
        Flat-band line sums resum to the non-Markovian closed forms exactly; line sums over
        the configured bath modes only up to the band and spacing error.
        """
        bath = discretize_bath(self.params, self.config.band, self.config.n_modes)
        grid = TimeGrid.uniform(6.0, 0.05)
        cutoff = max(self.config.mmax, 3)
        results = []
        for name, continuum, tolerance in (('closed_form_resummation', True, 1e-9),
                                           ('closed_form_bath_sums', False, 0.01)):
            series = closed_form_series(self.params, bath, grid, cutoff, continuum=continuum)
            worst = 0.0
            for rho0 in (QubitDensityMatrix.excited(), QubitDensityMatrix.ground(), QubitDensityMatrix.sigmax()):
                assembled = assemble_density_matrix(series, bath, rho0)
                reference = self.closed_form.nonmarkov(rho0, grid)
                worst = max(
                    worst,
                    float(np.max(np.abs(assembled.rho11 - reference.rho11))),
                    float(np.max(np.abs(assembled.rho10 - reference.rho10))),
                )
            results.append(CheckResult.at_most(name, worst, tolerance))
        return results

    # functional engine

    def check_functional_closed_forms(self):
        """One resonant photon: |G| against its closed form; vacuum: |Psi^f| against exp(-gamma0 t/2)."""
        bath = discretize_bath(self.params, self.config.band, self.config.n_modes)
        r = int(bath.resonant_modes(self.params.omega0)[0])
        vacuum, one = FockConfig.vacuum(), FockConfig.from_dict({r: 1})
        grid = TimeGrid(0.02 * np.arange(1, 151))
        # one seed each: the doubly excited sectors of a 321-mode bath are out of budget
        lowered = integrate_functionals(self.params, bath, grid, 1, ensemble=ThermalEnsemble(((one, 1.0),), 0.0),
                                        step=self.config.step, qubits=(0,))
        raised = integrate_functionals(self.params, bath, grid, 0, ensemble=ThermalEnsemble(((vacuum, 1.0),), 0.0),
                                       step=self.config.step, qubits=(1,))

        g = np.abs(lowered.amplitude((0, one), (1, vacuum)))
        t = grid.absolute(self.params.gamma0)
        g_closed = np.array([abs(closed_form_functionals(self.params, bath, one, s).g[r]) for s in t])
        psi = np.abs(raised.amplitude((1, vacuum), (1, vacuum)))
        return [
            CheckResult.at_most('functional_g_closed_form', float(np.max(np.abs(g / g_closed - 1.0))), 0.05),
            CheckResult.at_most('functional_vacuum_decay', float(np.max(np.abs(psi - np.exp(-0.5 * grid.times)))), 0.02),
        ]

    def check_amplitude_recursion(self):
        bath = discretize_bath(self.params, self.config.band, self.config.n_modes)
        epsilon = 0.05 / self.params.omega0
        steps = int(round(1.0 / (self.params.gamma0 * epsilon)))
        series = amplitude_recursion(bath, steps, epsilon, omega0=self.params.omega0,
                                     frame_frequency=self.params.omega0, sample_every=steps)
        expected = math.exp(-0.5 * self.params.gamma0 * steps * epsilon)
        return [CheckResult.within('recursion_vacuum_decay', 1.0, abs(series.psi[-1]) / expected, 0.02)]

    # properties

    def check_properties(self):
        rng = np.random.default_rng(PROPERTY_CHECKS['seed'])
        n = PROPERTY_CHECKS['samples']
        xs = rng.uniform(0.0, PROPERTY_CHECKS['max_x'], n)
        ts = rng.uniform(0.0, PROPERTY_CHECKS['max_gamma_t'], n)
        p11 = rng.uniform(0.0, 1.0, n)
        radius = np.sqrt(p11 * (1.0 - p11)) * rng.uniform(0.0, 1.0, n)
        phase = rng.uniform(0.0, 2.0 * math.pi, n)

        trace_error = slack = entropy_violation = 0.0
        rejected = 0
        for x, t, p, r, phi in zip(xs, ts, p11, radius, phase):
            params = ModelParams.from_x(float(x), REFERENCE['gamma0_over_omega0'])
            rho0 = QubitDensityMatrix.from_entries(float(p), complex(r * math.cos(phi), r * math.sin(phi)))
            grid = TimeGrid(np.array([float(t)]))
            dynamics = ClosedFormDynamics(params)
            for method in (Method.NONMARKOV, Method.ZERO_T, Method.MARKOV):
                try:
                    trace = dynamics.evolve(method, rho0, grid)
                except NotAState:
                    rejected += 1
                    continue
                trace_error = max(trace_error, abs(trace.rho00[0] + trace.rho11[0] - 1.0))
                slack = max(slack, abs(trace.rho10[0]) ** 2 - trace.rho00[0] * trace.rho11[0])
                s = entropy_series(trace)[0]
                entropy_violation = max(entropy_violation, -s, s - math.log(2.0))

        coarse, fine = TimeGrid.uniform(6.0, 0.1), TimeGrid.uniform(6.0, 0.05)
        errors = []
        for grid in (coarse, fine):
            trace = self.closed_form.nonmarkov(QubitDensityMatrix.sigmax(), grid)
            numeric = decoherence_rate(trace).values
            exact = self.closed_form.decoherence_rate(Method.NONMARKOV, grid.absolute(self.params.gamma0))
            errors.append(np.abs(numeric - exact))
        order = float(np.max(errors[0]) / np.max(errors[1][::2]))

        return [
            CheckResult.at_most('property_rejected_states', float(rejected), 0.0),
            CheckResult.at_most('property_trace', trace_error, 1e-10),
            CheckResult.at_most('property_positivity', max(0.0, slack), 1e-10),
            CheckResult.at_most('property_entropy_bounds', max(0.0, entropy_violation), 1e-12),
            CheckResult.within('rate_convergence_order', 4.0, order, 1.0),
        ]

    def check_table_audit(self):
        """Closed-form evolve table written as CSV, read back and audited."""
        config = replace(self.config, method=['nm', 'zeroT', 'markov'])
        try:
            df = DynamicsPipeline(config).evolve_frame()
        except NotAState as exc:
            return [CheckResult('evolve_table_audit', True, False, None, False, reason=str(exc))]
        valid, report = TraceValidator().check_trace(parse_table(render_csv(df, config)))
        return [CheckResult('evolve_table_audit', True, bool(valid), None, bool(valid), reason='' if valid else report)]


def run_validation(config):
    return ValidationSuite(config).run()
