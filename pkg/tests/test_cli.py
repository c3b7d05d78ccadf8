import json

import numpy as np
import pytest
from click.testing import CliRunner

import src.cli
from src.cli import main
from src.data_validation import AuditFailed, read_table
from src.run_config import RunConfig


@pytest.fixture
def runner():
    return CliRunner()


def test_evolve_zero_temperature_decay(runner, tmp_path):
    out = tmp_path / "evolve.csv"
    result = runner.invoke(main, ['evolve', '--method', 'zeroT', '--initial', 'excited',
                                  '--tmax', '2', '--dt', '0.1', '--out', str(out)])
    assert result.exit_code == 0, result.output
    df = read_table(out)
    assert np.allclose(df['rho11'], np.exp(-df['t_gamma']), atol=1e-12)
    restored = RunConfig.from_header(out.read_text(encoding="utf-8"))
    assert restored.method == ['zeroT']
    assert restored.initial == 'excited'


def test_evolve_is_reproducible(runner, tmp_path):
    args = ['evolve', '--method', 'nm', '--method', 'markov', '--tmax', '1', '--dt', '0.25']
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    assert runner.invoke(main, args + ['--out', str(first)]).exit_code == 0
    assert runner.invoke(main, args + ['--out', str(second)]).exit_code == 0
    assert first.read_bytes() == second.read_bytes()


def test_config_file_with_flag_override(runner, tmp_path):
    config = tmp_path / "run.toml"
    config.write_text('method = ["markov"]\ntmax = 1.0\ndt = 0.5\n')
    out = tmp_path / "evolve.csv"
    result = runner.invoke(main, ['evolve', '--config', str(config), '--dt', '0.25', '--out', str(out)])
    assert result.exit_code == 0, result.output
    df = read_table(out)
    assert list(df['t_gamma']) == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert set(df['method']) == {'markov'}


def test_rates_start_at_the_thermal_value(runner, tmp_path):
    out = tmp_path / "rates.csv"
    result = runner.invoke(main, ['rates', '--tmax', '1', '--dt', '0.1', '--out', str(out)])
    assert result.exit_code == 0, result.output
    df = read_table(out)
    assert df['gamma_dec_over_half_gamma0'].iloc[0] == pytest.approx(1.105263, abs=1e-6)


def test_thermal_oracle_runs_with_default_settings(runner, tmp_path):
    out = tmp_path / "evolve.csv"
    result = runner.invoke(main, ['evolve', '--method', 'nm', '--method', 'oracle', '--method', 'functional',
                                  '--tmax', '3', '--dt', '0.1', '--out', str(out)])
    assert result.exit_code == 0, result.output
    df = read_table(out)
    nm, oracle, functional = (df[df['method'] == m].reset_index(drop=True) for m in ('nm', 'oracle', 'functional'))
    window = nm['t_gamma'] >= 0.1 - 1e-12
    assert np.max(np.abs(oracle['rho11'] - nm['rho11'])[window]) < 0.03
    assert np.max(np.abs(oracle['abs_rho10'] - nm['abs_rho10'])[window]) < 0.02
    assert np.allclose(functional['rho11'], oracle['rho11'], atol=1e-4)
    assert np.allclose(functional['abs_rho10'], oracle['abs_rho10'], atol=1e-4)


def test_grid_step_must_divide_tmax(runner):
    result = runner.invoke(main, ['evolve', '--tmax', '1', '--dt', '0.3'])
    assert result.exit_code == 2
    assert '--dt' in result.output


def test_failed_audit_writes_nothing(runner, tmp_path, monkeypatch):
    def broken(config, command):
        raise AuditFailed("Trace off by up to 0.2 in 1 rows")

    monkeypatch.setattr(src.cli, 'build_dataset', broken)
    out = tmp_path / "evolve.csv"
    result = runner.invoke(main, ['evolve', '--out', str(out)])
    assert result.exit_code == 1
    assert not out.exists()


def test_unknown_config_key_is_a_usage_error(runner, tmp_path):
    config = tmp_path / "run.toml"
    config.write_text('temperature = 0.1\n')
    result = runner.invoke(main, ['evolve', '--config', str(config)])
    assert result.exit_code == 2
    assert '--temperature' in result.output


def test_x_and_beta_together_is_a_usage_error(runner):
    result = runner.invoke(main, ['evolve', '--x', '0.1', '--beta-omega0', '2'])
    assert result.exit_code == 2
    assert '--beta-omega0' in result.output


def test_unknown_method_is_a_usage_error(runner):
    result = runner.invoke(main, ['evolve', '--method', 'lindblad'])
    assert result.exit_code == 2


def test_validate_passes_with_default_settings(runner, tmp_path):
    out = tmp_path / "validation.json"
    result = runner.invoke(main, ['--quiet', 'validate', '--out', str(out)])
    assert result.exit_code == 0, result.output
    report = json.loads(out.read_text(encoding="utf-8"))
    checks = {c['name']: c for c in report['checks']}
    assert report['passed'] is True
    for name in ('closed_form_resummation', 'closed_form_bath_sums', 'engine_equivalence_rho11',
                 'oracle_zero_temperature', 'evolve_table_audit'):
        assert checks[name]['pass'] is True, name
    thermal = checks['oracle_nonmarkov_rho11']
    assert thermal['gating'] is False
    assert 'against tolerance 0.02' in thermal['reason']
    assert 0.0 < thermal['actual'] < 0.03


def test_validate_fails_on_a_coarse_bath(runner, tmp_path):
    out = tmp_path / "validation.json"
    result = runner.invoke(main, ['validate', '--n-modes', '11', '--out', str(out)])
    assert result.exit_code == 1
    report = json.loads(out.read_text(encoding="utf-8"))
    checks = {c['name']: c for c in report['checks']}
    assert report['passed'] is False
    assert checks['oracle_zero_temperature']['pass'] is False
    assert checks['oracle_convergence']['pass'] is False
    assert 'too coarse' in checks['oracle_convergence']['reason']
    assert checks['nonmarkov_asymptote']['pass'] is True
    assert checks['closed_form_resummation']['pass'] is True
    assert report['config']['n_modes'] == 11


def test_validate_skips_closed_form_checks_when_hot(runner, tmp_path):
    out = tmp_path / "validation.json"
    runner.invoke(main, ['--quiet', 'validate', '--x', '0.5', '--n-modes', '11', '--out', str(out)])
    report = json.loads(out.read_text(encoding="utf-8"))
    checks = {c['name']: c for c in report['checks']}
    assert report['warnings']
    for name in ('thermal_asymptotes', 'entropy', 'engine_equivalence'):
        assert checks[name]['skipped'] is True
        assert 'low-temperature' in checks[name]['reason']
