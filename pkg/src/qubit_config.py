"""
Settings for the qubit thermal-bath dynamics tool.
Tolerances, validity limits, reference resolutions and output columns.
Units: hbar = k_B = 1, frequencies in units of omega0 unless stated.
"""

CODE_VERSION = "1.0.0"

# Density-matrix tolerances
TOLERANCES = {
    'hard': 1e-8,            # NotAState beyond this (trace, positivity, imaginary diagonal)
    'positivity': 1e-10,     # |rho10|^2 <= rho00*rho11 + this
    'hermiticity': 1e-12,    # rho01 vs conj(rho10) after construction
    'trace': 1e-10,          # rho00 + rho11 - 1 after construction
    'cross_check': 1e-12,    # independent rho11 and rho00 closed forms must agree
    'degenerate_coherence': 1e-12,  # |rho10| below this -> decoherence rate absent
    'degenerate_population': 1e-10, # |rho11 - rho11(inf)| below this -> relaxation rate absent
    'eigenvalue_clamp': 1e-10,      # entropy eigenvalues clamped into [0, 1] within this
    'unitarity': 1e-10,      # per-seed norm drift in the exact oracle
}

# Validity window of the low-temperature, weak-coupling closed forms
VALIDITY_LIMITS = {
    'max_x': 0.2,                 # warn when exp(-beta*omega0) >= 0.2
    'max_gamma_over_omega': 0.1,  # warn when gamma0/omega0 >= 0.1
    'max_gamma_t': 20.0,          # branch-cut contribution ignored beyond this
}

# Exact oracle settings
ORACLE = {
    'max_sector_dim': 20000,       # abort with SectorTooLarge beyond this
    'max_truncation_loss': 0.05,   # TruncationTooLossy beyond this
    'checkpoint_version': 1,       # bump when the checkpoint payload changes
    'n_jobs': 1,
}

# Functional engine settings
FUNCTIONAL = {
    'default_step_factor': 0.1,    # RK4 step = factor / omega_max unless given
    'max_step_factor': 0.5,        # StepTooCoarse when step*omega_max > this
    'euler_warn_factor': 0.1,      # recursion warns when epsilon*omega_max > this
    'max_missing_weight': 0.05,    # CutoffInsufficient beyond this
    'series_tail': 1e-17,          # resonant closed-form series summed until tail < this
    'max_series_terms': 2000,
}

# Reference resolutions used by the validation suite
REFERENCE = {
    'gamma0_over_omega0': 0.01,
    'n_modes': 321,                # zero-temperature reference: delta_omega = 0.005
    'band': 1.6,
    'mmax': 2,
    'thermal_n_modes': 81,         # thermal oracle: N=2 sector fits the budget
    'thermal_band': 0.4,
    'thermal_window': 1.0,         # half-width in units of gamma0
    'thermal_mmax': 1,
    'equivalence_n_modes': 9,      # functional vs oracle on a small bath
    'equivalence_band': 0.4,
    'equivalence_mmax': 2,
}

# Defaults for a run (mirrors the CLI flags)
RUN_DEFAULTS = {
    'method': ['nm'],
    'x': None,                 # 0.05 when neither x nor beta_omega0 is given
    'beta_omega0': None,
    'gamma0_over_omega0': 0.01,
    'tmax': 6.0,               # in units of 1/gamma0
    'dt': 0.05,
    'initial': 'sigmax',
    'rho11': None,             # custom initial state entries (initial = 'custom')
    'rho10_re': 0.0,
    'rho10_im': 0.0,
    'fidelity_initial': 'sigmax',
    'entropy_initial': 'excited',
    'n_modes': 321,
    'band': 1.6,
    'mmax': 2,
    'step': None,
    'thermal_window': None,    # half-width in units of gamma0; None = every mode
    'n_jobs': 1,
    'checkpoint_dir': None,
    'absolute_time': False,
}

METHODS = ['nm', 'zeroT', 'markov', 'oracle', 'functional']
INITIAL_STATES = ['excited', 'ground', 'sigmax', 'mixed', 'custom']
DEFAULT_X = 0.05

# CSV layouts
EVOLVE_COLUMNS = ['t_gamma', 'method', 'rho11', 'rho00', 're_rho10', 'im_rho10', 'abs_rho10']
RATES_COLUMNS = ['t_gamma', 'method', 'gamma_dec_over_half_gamma0', 'gamma_rel_over_gamma0', 'ratio']
PROXY_COLUMNS = ['t_gamma', 'method', 'fidelity', 'entropy_nats',
                 'fidelity_nm_minus_markov', 'entropy_nm_minus_markov']
FLOAT_FORMAT = '%.12g'

# Randomized property checks in the validation suite
PROPERTY_CHECKS = {
    'samples': 10000,
    'seed': 20240917,
    'max_x': 0.2,
    'max_gamma_t': 20.0,
}
