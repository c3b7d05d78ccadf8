"""
Closed-form reduced dynamics of a qubit in a thermal multimode bath.
Non-Markovian low-temperature result, its zero-temperature limit and the Markov baseline.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import (
    EvolutionTrace, InvalidParam, Method, NotAState, QubitDensityMatrix,
    validate_density_matrix,
)
from .qubit_config import TOLERANCES

logger = logging.getLogger(__name__)

CLOSED_FORM_METHODS = (Method.NONMARKOV, Method.ZERO_T, Method.MARKOV)


@dataclass(frozen=True)
class ThermalAsymptote:
    """Long-time state of a closed-form method, tagged with the method it belongs to."""
    method: Method
    state: QubitDensityMatrix


def _closed_form_method(method):
    method = Method(method)
    if method not in CLOSED_FORM_METHODS:
        raise InvalidParam(f"No closed form for method '{method.value}'. Pick: {[m.value for m in CLOSED_FORM_METHODS]}")
    return method


class ClosedFormDynamics:
    """
    Closed-form evolutions bound to one set of ModelParams.
    Validity warnings are logged once, when the object is built.
    """

    def __init__(self, params):
        self.params = params
        self.logger = logging.getLogger(__name__)
        for warning in params.validity_warnings():
            self.logger.warning(warning)

    def upsilon(self, t):
        """Thermal suppression factor (1 - x)/(1 - x exp(-gamma0 t)); t is absolute time."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise InvalidParam("upsilon needs t >= 0")
        x = self.params.x
        return (1.0 - x) / (1.0 - x * np.exp(-self.params.gamma0 * t))

    def nonmarkov(self, rho0, grid):
        p = self.params
        rho0 = validate_density_matrix(rho0)
        t = grid.absolute(p.gamma0)
        decay = np.exp(-p.gamma0 * t)
        denom = 1.0 - p.x * decay
        ups = (1.0 - p.x) / denom
        emitted = (1.0 - decay) / denom

        r00, r11 = np.real(rho0.rho00), np.real(rho0.rho11)
        rho11 = (1.0 - ups) * r00 + (1.0 - emitted * ups) * r11
        rho00 = ups * r00 + emitted * ups * r11
        mismatch = np.max(np.abs(rho00 + rho11 - 1.0))
        if mismatch > TOLERANCES['cross_check']:
            self.logger.error(f"Population closed forms disagree by {mismatch:.3g}")
            raise NotAState(f"rho00 and rho11 closed forms disagree by {mismatch:.3g}")

        rho10 = np.exp(-0.5 * p.gamma0 * t - 1j * p.omega0 * t) * ups * rho0.rho10
        return EvolutionTrace(Method.NONMARKOV, p, grid, rho00, rho11, rho10)

    def zero_temperature(self, rho0, grid):
        p = self.params
        rho0 = validate_density_matrix(rho0)
        t = grid.absolute(p.gamma0)
        decay = np.exp(-p.gamma0 * t)
        r00, r11 = np.real(rho0.rho00), np.real(rho0.rho11)
        rho11 = r11 * decay
        rho00 = r00 + r11 * (1.0 - decay)
        rho10 = rho0.rho10 * np.exp(-0.5 * p.gamma0 * t - 1j * p.omega0 * t)
        return EvolutionTrace(Method.ZERO_T, p, grid, rho00, rho11, rho10)

    def markov(self, rho0, grid):
        p = self.params
        rho0 = validate_density_matrix(rho0)
        t = grid.absolute(p.gamma0)
        # (1+x)/(1-x) stays finite at beta = inf, where it reduces to the zero-temperature result
        coth = p.coth_half
        decay = np.exp(-p.gamma0 * coth * t)
        excited_inf = p.x / (1.0 + p.x)
        rho11 = np.real(rho0.rho11) * decay + excited_inf * (1.0 - decay)
        rho00 = np.real(rho0.rho00) * decay + (1.0 - excited_inf) * (1.0 - decay)
        rho10 = rho0.rho10 * np.exp(-1j * p.omega0 * t - 0.5 * p.gamma0 * coth * t)
        return EvolutionTrace(Method.MARKOV, p, grid, rho00, rho11, rho10)

    def evolve(self, method, rho0, grid):
        method = _closed_form_method(method)
        if method is Method.NONMARKOV:
            return self.nonmarkov(rho0, grid)
        if method is Method.ZERO_T:
            return self.zero_temperature(rho0, grid)
        return self.markov(rho0, grid)

    def asymptote(self, method):
        method = _closed_form_method(method)
        x = self.params.x
        if method is Method.NONMARKOV:
            excited = x
        elif method is Method.MARKOV:
            excited = x / (1.0 + x)
        else:
            excited = 0.0
        return ThermalAsymptote(method, QubitDensityMatrix(1.0 - excited, 0j, 0j, excited))

    def decoherence_rate(self, method, t):
        """Closed-form -d/dt ln|rho10| in absolute units."""
        method = _closed_form_method(method)
        p = self.params
        t = np.asarray(t, dtype=float)
        if method is Method.NONMARKOV:
            decay = np.exp(-p.gamma0 * t)
            return 0.5 * p.gamma0 + p.gamma0 * p.x * decay / (1.0 - p.x * decay)
        if method is Method.MARKOV:
            return np.full_like(t, 0.5 * p.gamma0 * p.coth_half)
        return np.full_like(t, 0.5 * p.gamma0)

    def relaxation_rate(self, method, t):
        """
        Closed-form -d/dt rho11 / (rho11 - rho11(inf)) for an excited initial state.
        The non-Markovian expression has no dependence on omega0.
        """
        method = _closed_form_method(method)
        p = self.params
        t = np.asarray(t, dtype=float)
        if method is Method.NONMARKOV:
            x, decay = p.x, np.exp(-p.gamma0 * t)
            return p.gamma0 * (
                1.0
                + x ** 2 * decay / (1.0 - 2.0 * x + x ** 2 * decay)
                + 2.0 * x * decay / (1.0 - x * decay)
            )
        if method is Method.MARKOV:
            return np.full_like(t, p.gamma0 * p.coth_half)
        return np.full_like(t, p.gamma0)


def upsilon(params, t):
    return ClosedFormDynamics(params).upsilon(t)


def evolve_nonmarkov(params, rho0, grid):
    return ClosedFormDynamics(params).nonmarkov(rho0, grid)


def evolve_zero_temperature(params, rho0, grid):
    return ClosedFormDynamics(params).zero_temperature(rho0, grid)


def evolve_markov(params, rho0, grid):
    return ClosedFormDynamics(params).markov(rho0, grid)


def asymptotic_state(params, method):
    return ClosedFormDynamics(params).asymptote(method)
