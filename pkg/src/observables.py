"""
Derived quantities of a reduced qubit trace.
Decoherence and relaxation rates, their ratio, fidelity against free evolution
and von Neumann entropy.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import entr

from .analytic import ClosedFormDynamics, ThermalAsymptote
from .core import (
    DegeneratePoint, GridMismatch, InvalidParam, Method, QubitDensityMatrix, TimeGrid,
    validate_density_matrix,
)
from .qubit_config import TOLERANCES

logger = logging.getLogger(__name__)


class RateKind(str, Enum):
    DECOHERENCE = 'decoherence'
    RELAXATION = 'relaxation'
    RATIO = 'ratio'


@dataclass(frozen=True, eq=False)
class RateSeries:
    """
    Rate values on a grid, absolute units (1/time) except for ratios.
    NaN marks points where the defining quotient is degenerate.
    """
    grid: TimeGrid
    values: np.ndarray
    definition: RateKind
    method: Method

    def __post_init__(self):
        values = np.array(self.values, dtype=float, ndmin=1)
        if values.size != len(self.grid):
            raise GridMismatch(f"{values.size} rate values for {len(self.grid)} grid points")
        values[~np.isfinite(values)] = np.nan
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'definition', RateKind(self.definition))
        object.__setattr__(self, 'method', Method(self.method))

    @property
    def present(self):
        return ~np.isnan(self.values)

    def scaled(self, factor):
        return RateSeries(self.grid, self.values * factor, self.definition, self.method)


def _time_derivative(y, t):
    # second-order central differences inside, second-order one-sided stencils at the ends
    if len(t) < 3:
        raise InvalidParam(f"Finite-difference rates need at least 3 grid points, got {len(t)}")
    return np.gradient(y, t, edge_order=2)


def _degenerate(trace, mask, what, strict):
    count = int(np.count_nonzero(mask))
    if count and strict:
        logger.error(f"{trace.method.value}: {count} points with {what}")
        raise DegeneratePoint(f"{count} grid points of '{trace.method.value}' have {what}")


def decoherence_rate(trace, strict=False):
    """
    -d/dt ln|rho10|, the real part of -rho10'/rho10.
    The oscillating phase only enters the imaginary part, so the modulus is differenced.
    Points with vanished coherence are NaN, or raise DegeneratePoint when strict.
    """
    tol = TOLERANCES['degenerate_coherence']
    modulus = np.abs(trace.rho10)
    alive = modulus > tol
    _degenerate(trace, ~alive, "vanished coherence", strict)
    if not np.all(alive):
        logger.info(f"{trace.method.value}: {np.count_nonzero(~alive)} points with vanished coherence flagged absent")
    log_modulus = np.full(modulus.shape, np.nan)
    log_modulus[alive] = np.log(modulus[alive])
    rate = -_time_derivative(log_modulus, trace.absolute_times())
    rate[~alive] = np.nan
    return RateSeries(trace.grid, rate, RateKind.DECOHERENCE, trace.method)


def relaxation_rate(trace, rho_inf, strict=False):
    """
    -rho11'/(rho11 - rho11(inf)). rho_inf is either a ThermalAsymptote, whose method must
    match the trace, or a bare QubitDensityMatrix for engines without a closed-form asymptote.
    Settled points are NaN, or raise DegeneratePoint when strict.
    """
    if isinstance(rho_inf, ThermalAsymptote):
        if rho_inf.method is not trace.method:
            raise InvalidParam(
                f"Asymptote belongs to '{rho_inf.method.value}' but the trace is '{trace.method.value}'"
            )
        rho_inf = rho_inf.state
    target = float(np.real(rho_inf.rho11))

    gap = trace.rho11 - target
    settled = np.abs(gap) <= TOLERANCES['degenerate_population']
    _degenerate(trace, settled, "a settled population", strict)
    derivative = _time_derivative(trace.rho11, trace.absolute_times())
    rate = np.full(gap.shape, np.nan)
    rate[~settled] = -derivative[~settled] / gap[~settled]
    return RateSeries(trace.grid, rate, RateKind.RELAXATION, trace.method)


def rate_ratio(dec, rel):
    if not dec.grid.same_as(rel.grid):
        raise GridMismatch("Decoherence and relaxation rates are on different grids")
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = dec.values / rel.values
    return RateSeries(dec.grid, ratio, RateKind.RATIO, dec.method)


def decoherence_rate_closed_form(params, method, grid):
    t = grid.absolute(params.gamma0)
    values = ClosedFormDynamics(params).decoherence_rate(method, t)
    return RateSeries(grid, values, RateKind.DECOHERENCE, method)


def relaxation_rate_closed_form(params, method, grid):
    t = grid.absolute(params.gamma0)
    values = ClosedFormDynamics(params).relaxation_rate(method, t)
    return RateSeries(grid, values, RateKind.RELAXATION, method)


def fidelity_vs_free(trace, rho0):
    """
    Tr[rho(t) U0(t) rho(0) U0(t)^dagger] with U0 generated by omega0 S+S- alone.
    This is the plain overlap, not the Uhlmann fidelity.
    """
    rho0 = validate_density_matrix(rho0)
    t = trace.absolute_times()
    free_coherence = rho0.rho10 * np.exp(-1j * trace.params.omega0 * t)
    overlap = (
        trace.rho00 * np.real(rho0.rho00)
        + trace.rho11 * np.real(rho0.rho11)
        + 2.0 * np.real(trace.rho10 * np.conj(free_coherence))
    )
    return overlap


def sigmax_fidelity_closed_form(params, t):
    """Non-Markovian fidelity of the sigma_x eigenstate: 1/2 + 1/2 exp(-gamma0 t/2) upsilon(t)."""
    t = np.asarray(t, dtype=float)
    return 0.5 + 0.5 * np.exp(-0.5 * params.gamma0 * t) * ClosedFormDynamics(params).upsilon(t)


def _eigenvalues(rho00, rho11, rho10):
    spread = np.sqrt((rho11 - rho00) ** 2 + 4.0 * np.abs(rho10) ** 2)
    lam = np.stack([0.5 * (1.0 + spread), 0.5 * (1.0 - spread)])
    return np.clip(lam, 0.0, 1.0)


def von_neumann_entropy(rho):
    """-Tr rho ln rho in nats, with 0 ln 0 = 0."""
    lam = _eigenvalues(np.real(rho.rho00), np.real(rho.rho11), rho.rho10)
    return float(np.sum(entr(lam)))


def entropy_series(trace):
    lam = _eigenvalues(trace.rho00, trace.rho11, trace.rho10)
    return np.sum(entr(lam), axis=0)


def binary_entropy(p):
    """Entropy of diag(p, 1-p)."""
    return von_neumann_entropy(QubitDensityMatrix(1.0 - p, 0j, 0j, p))
