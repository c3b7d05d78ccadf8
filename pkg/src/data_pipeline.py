"""
Builds the tabular datasets behind the CLI commands.
One DynamicsPipeline per RunConfig: engines are built lazily and traces cached per
(method, initial state), so commands that need several views of a run pay once.
"""
from __future__ import annotations

import logging

import pandas as pd

from .analytic import ClosedFormDynamics
from .core import CutoffInsufficient, Method, QubitDensityMatrix, SectorTooLarge, TruncationTooLossy
from .data_validation import AuditFailed, TraceValidator
from .functional import assemble_density_matrix, integrate_functionals
from .observables import (
    decoherence_rate, decoherence_rate_closed_form, entropy_series, fidelity_vs_free,
    rate_ratio, relaxation_rate, relaxation_rate_closed_form,
)
from .oracle import ExactOracle, ThermalEnsemble, discretize_bath, enumerate_thermal_configs, thermal_members
from .qubit_config import PROXY_COLUMNS, RATES_COLUMNS
from .run_config import ConfigError

RATE_METHODS = ('nm', 'markov', 'oracle')


class DynamicsPipeline:
    """
    Evolves the configured initial state with every requested method and lays the results
    out as DataFrames. Rows are ordered by method (as requested), then time.
    """

    def __init__(self, config):
        self.config = config.validate()
        self.params = config.model_params()
        self.grid = config.time_grid()
        self.closed_form = ClosedFormDynamics(self.params)
        self.logger = logging.getLogger(__name__)
        self._resolution = None
        self._bath = None
        self._oracle = None
        self._traces = {}

    @property
    def methods(self):
        return [Method(m) for m in self.config.method]

    @property
    def resolution(self):
        if self._resolution is None:
            self._resolution = self.config.engine_resolution()
        return self._resolution

    @property
    def bath(self):
        if self._bath is None:
            self._bath = discretize_bath(self.params, self.resolution.band, self.resolution.n_modes)
            self.logger.info(
                f"Discrete bath: {self._bath.n_modes} modes over {self.resolution.band} omega0, "
                f"coupling {self._bath.couplings[0]:.4g}"
            )
        return self._bath

    def active_modes(self):
        if self.resolution.thermal_window is None:
            return None
        return self.bath.window(self.params.omega0, self.resolution.thermal_window * self.params.gamma0)

    def oracle(self):
        if self._oracle is None:
            self._oracle = ExactOracle(
                self.params, self.bath, n_jobs=self.config.n_jobs, checkpoint_dir=self.config.checkpoint_dir
            )
        return self._oracle

    def trace(self, method, rho0=None):
        method = Method(method)
        rho0 = self.config.initial_state() if rho0 is None else rho0
        key = (method, rho0)
        if key in self._traces:
            return self._traces[key]

        if method.is_closed_form:
            trace = self.closed_form.evolve(method, rho0, self.grid)
        else:
            try:
                trace = self._engine_trace(method, rho0)
            except (TruncationTooLossy, CutoffInsufficient, SectorTooLarge) as exc:
                raise ConfigError('mmax', f"{exc} (set --mmax, --thermal-window or --n-modes)") from None
        self._traces[key] = trace
        return trace

    def _engine_trace(self, method, rho0):
        mmax = self.resolution.mmax
        if method is Method.ORACLE:
            ensemble = enumerate_thermal_configs(self.bath, mmax, active_modes=self.active_modes())
            trace = self.oracle().evolve(rho0, self.grid, ensemble)
            self.logger.info(f"Oracle diagnostics: {self.oracle().diagnostics}")
            return trace
        members, missing, modes = thermal_members(self.bath, mmax, active_modes=self.active_modes())
        series = integrate_functionals(
            self.params, self.bath, self.grid, mmax,
            ensemble=ThermalEnsemble(members, missing, modes), step=self.config.step,
        )
        return assemble_density_matrix(series, self.bath, rho0)

    def evolve_frame(self):
        frames = [self.trace(m).to_frame(self.config.absolute_time) for m in self.methods]
        df = pd.concat(frames, ignore_index=True)
        self.logger.info(f"Evolution table: {len(df)} rows for {[m.value for m in self.methods]}")
        return df

    def audit(self, df):
        """Audits an evolve table before it is written; raises AuditFailed with the report."""
        valid, report = TraceValidator().check_trace(df)
        if not valid:
            self.logger.error(f"Evolution table failed the audit: {report}")
            raise AuditFailed(report)
        self.logger.info(f"Evolution table passed the audit ({report.splitlines()[-1]})")
        return df

    def _time_columns(self, method):
        cols = {'t_gamma': self.grid.times, 'method': method.value}
        if self.config.absolute_time:
            cols['t'] = self.grid.absolute(self.params.gamma0)
        return cols

    def _layout(self, data, columns):
        df = pd.DataFrame(data)
        if self.config.absolute_time:
            columns = columns[:1] + ['t'] + columns[1:]
        return df[columns]

    def rates_frame(self):
        """
        Closed-form methods use their closed-form rates; engines are differenced on the grid,
        the decoherence rate from sigma_x and the relaxation rate from the excited state.
        """
        methods = self.methods
        if not any(m.value in RATE_METHODS for m in methods):
            raise ValueError(f"rates needs at least one of {list(RATE_METHODS)}, got {self.config.method}")
        half_gamma = 0.5 * self.params.gamma0
        frames = []
        for method in methods:
            if method.is_closed_form:
                dec = decoherence_rate_closed_form(self.params, method, self.grid)
                rel = relaxation_rate_closed_form(self.params, method, self.grid)
            else:
                dec = decoherence_rate(self.trace(method, QubitDensityMatrix.sigmax()))
                target = self.closed_form.asymptote(Method.NONMARKOV).state
                rel = relaxation_rate(self.trace(method, QubitDensityMatrix.excited()), target)
            ratio = rate_ratio(dec, rel)
            data = self._time_columns(method)
            data.update({
                'gamma_dec_over_half_gamma0': dec.values / half_gamma,
                'gamma_rel_over_gamma0': rel.values / self.params.gamma0,
                'ratio': ratio.values,
            })
            frames.append(self._layout(data, RATES_COLUMNS))
        return pd.concat(frames, ignore_index=True)

    def proxies_frame(self):
        """Fidelity against free evolution and von Neumann entropy, plus the NM - Markov insets."""
        fid_state = self.config.state(self.config.fidelity_initial)
        ent_state = self.config.state(self.config.entropy_initial)

        def proxies(method):
            fidelity = fidelity_vs_free(self.trace(method, fid_state), fid_state)
            entropy = entropy_series(self.trace(method, ent_state))
            return fidelity, entropy

        nm_fid, nm_ent = proxies(Method.NONMARKOV)
        mk_fid, mk_ent = proxies(Method.MARKOV)
        frames = []
        for method in self.methods:
            fidelity, entropy = proxies(method)
            data = self._time_columns(method)
            data.update({
                'fidelity': fidelity,
                'entropy_nats': entropy,
                'fidelity_nm_minus_markov': nm_fid - mk_fid,
                'entropy_nm_minus_markov': nm_ent - mk_ent,
            })
            frames.append(self._layout(data, PROXY_COLUMNS))
        return pd.concat(frames, ignore_index=True)


def build_dataset(config, command):
    pipeline = DynamicsPipeline(config)
    builders = {
        'evolve': lambda: pipeline.audit(pipeline.evolve_frame()),
        'rates': pipeline.rates_frame,
        'entanglement-proxies': pipeline.proxies_frame,
    }
    if command not in builders:
        raise ValueError(f"Unknown dataset '{command}'. Pick: {list(builders)}")
    return builders[command]()
