import numpy as np
import pandas as pd
import pytest

from src.data_pipeline import DynamicsPipeline, build_dataset
from src.data_validation import AuditFailed, TraceValidator, parse_table, read_table
from src.export_report import export_csv, render_csv
from src.qubit_config import EVOLVE_COLUMNS, PROXY_COLUMNS, RATES_COLUMNS, REFERENCE
from src.run_config import ConfigError, RunConfig


@pytest.fixture
def config():
    return RunConfig(method=['nm', 'markov'], tmax=2.0, dt=0.1, initial='excited')


def test_evolve_frame_layout(config):
    df = build_dataset(config, 'evolve')
    assert list(df.columns) == EVOLVE_COLUMNS
    assert list(df['method'].unique()) == ['nm', 'markov']
    assert len(df) == 2 * 21
    nm = df[df['method'] == 'nm']
    assert nm['rho11'].iloc[10] == pytest.approx(0.376768942683, abs=1e-11)


def test_absolute_time_column(config):
    config.absolute_time = True
    df = build_dataset(config, 'evolve')
    assert list(df.columns[:3]) == ['t_gamma', 't', 'method']
    assert np.allclose(df['t'], df['t_gamma'] / 0.01)


def test_rates_frame(config):
    df = build_dataset(config, 'rates')
    assert list(df.columns) == RATES_COLUMNS
    nm = df[df['method'] == 'nm']
    assert nm['gamma_dec_over_half_gamma0'].iloc[0] == pytest.approx(1.105263, abs=1e-6)
    markov = df[df['method'] == 'markov']
    assert np.allclose(markov['ratio'], 0.5)


def test_rates_need_a_rate_method():
    with pytest.raises(ValueError):
        build_dataset(RunConfig(method=['zeroT'], tmax=1.0, dt=0.1), 'rates')


def test_proxies_frame(config):
    df = build_dataset(config, 'entanglement-proxies')
    assert list(df.columns) == PROXY_COLUMNS
    nm = df[df['method'] == 'nm']
    assert nm['fidelity'].iloc[0] == pytest.approx(1.0)
    assert nm['fidelity'].iloc[10] == pytest.approx(0.793500707170, abs=1e-11)
    assert np.all(nm['fidelity_nm_minus_markov'] >= -1e-15)


def test_traces_are_cached(config):
    pipeline = DynamicsPipeline(config)
    assert pipeline.trace('nm') is pipeline.trace('nm')


def test_unknown_dataset(config):
    with pytest.raises(ValueError):
        build_dataset(config, 'spectrum')


def test_export_is_deterministic(config, tmp_path):
    out = tmp_path / "data" / "evolve.csv"
    text, path = export_csv(build_dataset(config, 'evolve'), config, out)
    assert path == out
    assert out.read_text(encoding="utf-8") == text
    assert render_csv(build_dataset(config, 'evolve'), config) == text
    assert text.startswith('# code_version = "1.0.0"\n')


def test_exported_table_passes_the_audit(config, tmp_path):
    out = tmp_path / "evolve.csv"
    text, _ = export_csv(build_dataset(config, 'evolve'), config, out)
    table = read_table(out)
    assert list(table.columns) == EVOLVE_COLUMNS
    assert table.equals(parse_table(text))
    valid, report = TraceValidator().check_trace(table)
    assert valid, report


@pytest.fixture
def broken_table():
    return pd.DataFrame({
        't_gamma': [0.0, 0.1], 'method': ['nm', 'nm'], 'rho11': [0.5, 0.9], 'rho00': [0.5, 0.3],
        're_rho10': [0.5, 0.0], 'im_rho10': [0.0, 0.0], 'abs_rho10': [0.5, 0.1],
    })


def test_audit_flags_broken_tables(broken_table):
    valid, report = TraceValidator().check_trace(broken_table)
    assert not valid
    assert "Trace off" in report
    assert "abs_rho10" in report

    valid, report = TraceValidator().check_trace(broken_table.drop(columns=['rho00']))
    assert not valid and "Missing columns: rho00" in report


def test_evolve_tables_are_audited_before_export(config, broken_table, monkeypatch):
    monkeypatch.setattr(DynamicsPipeline, 'evolve_frame', lambda self: broken_table)
    with pytest.raises(AuditFailed, match="Trace off"):
        build_dataset(config, 'evolve')


def test_thermal_engines_default_to_the_reference_bath():
    resolution = RunConfig(method=['oracle']).validate().engine_resolution()
    assert resolution.n_modes == REFERENCE['thermal_n_modes']
    assert resolution.band == REFERENCE['thermal_band']
    assert resolution.mmax == REFERENCE['thermal_mmax']
    assert resolution.thermal_window == REFERENCE['thermal_window']

    cold = RunConfig(method=['oracle'], x=0.0).validate().engine_resolution()
    assert (cold.n_modes, cold.band, cold.mmax, cold.thermal_window) == (321, 1.6, 2, None)
    windowed = RunConfig(method=['oracle'], thermal_window=2.0, n_modes=41, band=0.2).validate()
    assert windowed.engine_resolution().n_modes == 41


def test_lossy_thermal_ensemble_names_the_flags():
    config = RunConfig(method=['oracle'], x=0.5, thermal_window=1.0, mmax=0, n_modes=81, band=0.4,
                       tmax=1.0, dt=0.5)
    with pytest.raises(ConfigError, match="--mmax"):
        build_dataset(config, 'evolve')
