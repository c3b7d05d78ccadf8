import math

import pytest

from src.core import InvalidParam
from src.run_config import ConfigError, RunConfig


def test_defaults_resolve_to_the_reference_point():
    config = RunConfig().validate()
    params = config.model_params()
    assert config.resolved_x == 0.05
    assert params.x == pytest.approx(0.05)
    assert params.gamma0 == pytest.approx(0.01)
    assert len(config.time_grid()) == 121


def test_beta_omega0_replaces_x():
    config = RunConfig(beta_omega0=math.log(20.0)).validate()
    assert config.resolved_x == pytest.approx(0.05)
    assert config.model_params().x == pytest.approx(0.05)


def test_flags_override_the_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('method = ["nm", "markov"]\nx = 0.1\ntmax = 2.0\n')
    config = RunConfig.load(path).merged({'tmax': 3.0, 'dt': None, 'method': ()})
    assert config.method == ['nm', 'markov']
    assert config.x == 0.1
    assert config.tmax == 3.0


def test_x_flag_clears_beta_from_the_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('beta_omega0 = 2.0\n')
    config = RunConfig.load(path).merged({'x': 0.1}).validate()
    assert config.beta_omega0 is None
    assert config.resolved_x == 0.1


def test_x_and_beta_together_are_rejected():
    with pytest.raises(ConfigError, match="--beta-omega0"):
        RunConfig().merged({'x': 0.1, 'beta_omega0': 2.0}).validate()


def test_unknown_file_key_names_the_key(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('temperature = 0.3\n')
    with pytest.raises(ConfigError) as exc:
        RunConfig.load(path)
    assert exc.value.flag == '--temperature'
    assert isinstance(exc.value, InvalidParam)


def test_unreadable_file_is_a_config_error(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text('x = = 1\n')
    with pytest.raises(ConfigError, match="--config"):
        RunConfig.load(path)


@pytest.mark.parametrize("overrides, flag", [
    ({'method': ['lindblad']}, '--method'),
    ({'x': 1.5}, '--x'),
    ({'dt': 10.0}, '--dt'),
    ({'tmax': 1.0, 'dt': 0.3}, '--dt'),
    ({'n_modes': 10}, '--n-modes'),
    ({'band': 2.5}, '--band'),
    ({'initial': 'custom'}, '--rho11'),
    ({'initial': 'custom', 'rho11': 0.5, 'rho10_re': 0.6}, '--rho11'),
    ({'n_jobs': 0}, '--n-jobs'),
])
def test_validation_names_the_flag(overrides, flag):
    with pytest.raises(ConfigError, match=flag):
        RunConfig().merged(overrides).validate()


def test_integer_options_reject_fractions():
    with pytest.raises(ConfigError, match="--mmax"):
        RunConfig(mmax=1.5)


def test_custom_initial_state():
    config = RunConfig(initial='custom', rho11=0.7, rho10_re=0.1, rho10_im=-0.2).validate()
    rho = config.initial_state()
    assert rho.rho11 == pytest.approx(0.7)
    assert rho.rho10 == pytest.approx(0.1 - 0.2j)


def test_header_carries_the_whole_config():
    config = RunConfig(method=['nm', 'oracle'], x=0.1, n_modes=41, checkpoint_dir='cache').validate()
    lines = config.header_lines()
    assert lines[0] == '# code_version = "1.0.0"'
    assert all(line.startswith('# ') for line in lines)
    restored = RunConfig.from_header("\n".join(lines) + "\nt_gamma,method\n")
    assert restored == config
