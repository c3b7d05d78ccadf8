"""
Core types shared by the closed-form, exact and functional engines.
Qubit density matrices, model parameters, discrete baths, time grids and traces.
Units: hbar = k_B = 1. Grid times are in units of 1/gamma0.
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd

from .qubit_config import TOLERANCES, VALIDITY_LIMITS, EVOLVE_COLUMNS

logger = logging.getLogger(__name__)


class NotAState(ValueError):
    """Entries do not describe a qubit density matrix."""


class InvalidParam(ValueError):
    """A physical or numerical parameter is out of range."""


class DegeneratePoint(ValueError):
    """A rate quotient has a vanishing denominator."""


class GridMismatch(ValueError):
    """Two series were sampled on different time grids."""


class TruncationTooLossy(ValueError):
    """The truncated thermal ensemble misses too much weight."""


class SectorTooLarge(ValueError):
    """An excitation sector exceeds the memory budget."""

    def __init__(self, seed, dim, budget):
        self.seed = seed
        self.dim = dim
        self.budget = budget
        super().__init__(
            f"Sector seeded by {seed} grew past {budget} states (reached {dim}); "
            "lower the cutoff, narrow the thermal window or use fewer modes"
        )


class StepTooCoarse(ValueError):
    """Integration step does not resolve the fastest bath frequency."""


class CutoffInsufficient(ValueError):
    """Truncated distribution set misses too much of the partition sum."""


class Method(str, Enum):
    """Provenance label of an evolution trace."""
    NONMARKOV = 'nm'
    ZERO_T = 'zeroT'
    MARKOV = 'markov'
    ORACLE = 'oracle'
    FUNCTIONAL = 'functional'

    @property
    def is_closed_form(self):
        return self in (Method.NONMARKOV, Method.ZERO_T, Method.MARKOV)


@dataclass(frozen=True)
class QubitDensityMatrix:
    """
    2x2 reduced qubit state in the (|0>, |1>) basis.
    Build through the factories or validate_density_matrix; the raw constructor does not check.
    """
    rho00: complex
    rho01: complex
    rho10: complex
    rho11: complex

    @classmethod
    def from_entries(cls, rho11, rho10=0j, rho00=None):
        rho00 = 1.0 - rho11 if rho00 is None else rho00
        return validate_density_matrix(cls(rho00, np.conj(rho10), rho10, rho11))

    @classmethod
    def excited(cls):
        return cls(0.0, 0j, 0j, 1.0)

    @classmethod
    def ground(cls):
        return cls(1.0, 0j, 0j, 0.0)

    @classmethod
    def sigmax(cls):
        # (|0> + |1>)/sqrt(2)
        return cls(0.5, 0.5 + 0j, 0.5 + 0j, 0.5)

    @classmethod
    def mixed(cls):
        return cls(0.5, 0j, 0j, 0.5)

    @classmethod
    def named(cls, name):
        factories = {
            'excited': cls.excited,
            'ground': cls.ground,
            'sigmax': cls.sigmax,
            'mixed': cls.mixed,
        }
        if name not in factories:
            raise InvalidParam(f"Unknown initial state '{name}'. Pick: {list(factories)}")
        return factories[name]()

    @classmethod
    def from_matrix(cls, matrix):
        m = np.asarray(matrix, dtype=complex)
        if m.shape != (2, 2):
            raise NotAState(f"Expected a 2x2 matrix, got shape {m.shape}")
        return validate_density_matrix(cls(m[0, 0], m[0, 1], m[1, 0], m[1, 1]))

    def as_matrix(self):
        return np.array([[self.rho00, self.rho01], [self.rho10, self.rho11]], dtype=complex)

    def purity(self):
        return float(np.real(self.rho00) ** 2 + np.real(self.rho11) ** 2 + 2 * abs(self.rho10) ** 2)


def validate_density_matrix(rho):
    """
    Returns a hermitized copy of rho with the state invariants enforced.
    The trace is renormalized only when it is already within the hard tolerance.
    Raises NotAState otherwise.
    """
    hard = TOLERANCES['hard']
    entries = np.array([rho.rho00, rho.rho01, rho.rho10, rho.rho11], dtype=complex)
    if not np.all(np.isfinite(entries)):
        raise NotAState(f"Non-finite entries: {entries}")
    r00, r01, r10, r11 = entries

    if abs(r00.imag) > hard or abs(r11.imag) > hard:
        raise NotAState(f"Populations must be real, got rho00={r00}, rho11={r11}")

    p00, p11 = float(r00.real), float(r11.real)
    coherence = complex((r10 + np.conj(r01)) / 2)

    trace = p00 + p11
    if abs(trace - 1.0) > hard:
        raise NotAState(f"Trace is {trace!r}, deviates from 1 by more than {hard}")
    if trace != 1.0:
        p11 = p11 / trace
        p00 = 1.0 - p11
        coherence = coherence / trace

    if p00 < -hard or p11 < -hard:
        raise NotAState(f"Negative population: rho00={p00}, rho11={p11}")
    if abs(coherence) ** 2 > p00 * p11 + hard:
        raise NotAState(
            f"Positivity violated: |rho10|^2={abs(coherence) ** 2:.6g} > rho00*rho11={p00 * p11:.6g}"
        )
    return QubitDensityMatrix(p00, coherence.conjugate(), coherence, p11)


def derive_x(omega0, beta):
    """Boltzmann factor x = exp(-beta*omega0); zero at infinite beta."""
    if not (math.isfinite(omega0) and omega0 > 0):
        raise InvalidParam(f"omega0 must be positive and finite, got {omega0}")
    if math.isnan(beta) or beta <= 0:
        raise InvalidParam(f"beta must be positive or +inf, got {beta}")
    if math.isinf(beta):
        return 0.0
    return math.exp(-beta * omega0)


@dataclass(frozen=True)
class ModelParams:
    """
    Physical parameters: qubit frequency omega0, zero-temperature decay rate gamma0
    and inverse temperature beta. The coupling strength lives in the bath, not here.
    """
    omega0: float
    gamma0: float
    beta: float
    x: float = field(init=False)

    def __post_init__(self):
        if not (math.isfinite(self.gamma0) and self.gamma0 > 0):
            raise InvalidParam(f"gamma0 must be positive and finite, got {self.gamma0}")
        object.__setattr__(self, 'x', derive_x(self.omega0, self.beta))

    @classmethod
    def from_x(cls, x, gamma0_over_omega0, omega0=1.0):
        if not 0.0 <= x < 1.0:
            raise InvalidParam(f"x must lie in [0, 1), got {x}")
        beta = math.inf if x == 0.0 else -math.log(x) / omega0
        return cls(omega0, gamma0_over_omega0 * omega0, beta)

    @classmethod
    def from_beta_omega0(cls, beta_omega0, gamma0_over_omega0, omega0=1.0):
        return cls(omega0, gamma0_over_omega0 * omega0, beta_omega0 / omega0)

    @property
    def coth_half(self):
        """coth(beta*omega0/2) written as (1+x)/(1-x)."""
        return (1.0 + self.x) / (1.0 - self.x)

    def validity_warnings(self):
        warnings = []
        if self.x >= VALIDITY_LIMITS['max_x']:
            warnings.append(
                f"x={self.x:.4g} >= {VALIDITY_LIMITS['max_x']}: outside the low-temperature window"
            )
        if self.gamma0 / self.omega0 >= VALIDITY_LIMITS['max_gamma_over_omega']:
            warnings.append(
                f"gamma0/omega0={self.gamma0 / self.omega0:.4g} >= "
                f"{VALIDITY_LIMITS['max_gamma_over_omega']}: outside the weak-coupling window"
            )
        return warnings

    def as_dict(self):
        return {'omega0': self.omega0, 'gamma0': self.gamma0, 'beta': self.beta, 'x': self.x}


@dataclass(frozen=True, eq=False)
class BathSpec:
    """Discrete bath: ascending mode frequencies with real non-negative couplings."""
    omegas: np.ndarray
    couplings: np.ndarray
    beta: float

    def __post_init__(self):
        omegas = np.array(self.omegas, dtype=float, ndmin=1)
        couplings = np.array(self.couplings, dtype=float, ndmin=1)
        if omegas.ndim != 1 or omegas.shape != couplings.shape or omegas.size == 0:
            raise InvalidParam(
                f"Need matching 1-D frequency and coupling lists, got {omegas.shape} and {couplings.shape}"
            )
        if not (np.all(np.isfinite(omegas)) and np.all(np.isfinite(couplings))):
            raise InvalidParam("Bath frequencies and couplings must be finite")
        if np.any(omegas <= 0):
            raise InvalidParam("Bath frequencies must be positive")
        if np.any(np.diff(omegas) <= 0):
            raise InvalidParam("Bath frequencies must be strictly ascending with no duplicates")
        if np.any(couplings < 0):
            raise InvalidParam("Couplings must be non-negative (phases are absorbed into the modes)")
        if math.isnan(self.beta) or self.beta <= 0:
            raise InvalidParam(f"beta must be positive or +inf, got {self.beta}")
        omegas.setflags(write=False)
        couplings.setflags(write=False)
        object.__setattr__(self, 'omegas', omegas)
        object.__setattr__(self, 'couplings', couplings)

    @property
    def n_modes(self):
        return self.omegas.size

    @property
    def omega_max(self):
        return float(self.omegas[-1])

    def mode_x(self):
        """Per-mode Boltzmann factors exp(-beta*omega_k)."""
        if math.isinf(self.beta):
            return np.zeros_like(self.omegas)
        return np.exp(-self.beta * self.omegas)

    def resonant_modes(self, omega0, rtol=1e-12):
        return np.flatnonzero(np.abs(self.omegas - omega0) <= rtol * omega0)

    def window(self, omega0, half_width):
        """Indices of modes with |omega_k - omega0| <= half_width."""
        return np.flatnonzero(np.abs(self.omegas - omega0) <= half_width * (1 + 1e-12))

    def fingerprint(self):
        digest = hashlib.sha256()
        digest.update(self.omegas.tobytes())
        digest.update(self.couplings.tobytes())
        digest.update(repr(float(self.beta)).encode())
        return digest.hexdigest()


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing non-negative sample times in units of 1/gamma0."""
    times: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float, ndmin=1)
        if times.ndim != 1 or times.size == 0:
            raise InvalidParam("Time grid must be a non-empty 1-D list")
        if not np.all(np.isfinite(times)):
            raise InvalidParam("Time grid must be finite")
        if times[0] < 0:
            raise InvalidParam(f"Time grid must start at t >= 0, got {times[0]}")
        if np.any(np.diff(times) <= 0):
            raise InvalidParam("Time grid must be strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, 'times', times)

    @classmethod
    def uniform(cls, tmax, dt):
        """0, dt, ..., tmax; dt must divide tmax."""
        if not (dt > 0 and tmax > 0):
            raise InvalidParam(f"Need tmax > 0 and dt > 0, got tmax={tmax}, dt={dt}")
        n_steps = int(round(tmax / dt))
        if n_steps < 1:
            raise InvalidParam(f"dt={dt} is larger than tmax={tmax}")
        if abs(n_steps * dt - tmax) > 1e-9 * tmax:
            raise InvalidParam(f"dt={dt} does not divide tmax={tmax}; the grid would end at {n_steps * dt:.6g}")
        return cls(dt * np.arange(n_steps + 1))

    def __len__(self):
        return self.times.size

    def absolute(self, gamma0):
        return self.times / gamma0

    def same_as(self, other):
        return np.array_equal(self.times, other.times)


@dataclass(frozen=True, eq=False)
class EvolutionTrace:
    """Reduced-state time series with its provenance; one state per grid point."""
    method: Method
    params: ModelParams
    grid: TimeGrid
    rho00: np.ndarray
    rho11: np.ndarray
    rho10: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'method', Method(self.method))
        rho00 = np.array(self.rho00, dtype=float, ndmin=1)
        rho11 = np.array(self.rho11, dtype=float, ndmin=1)
        rho10 = np.array(self.rho10, dtype=complex, ndmin=1)
        n = len(self.grid)
        if not (rho00.size == rho11.size == rho10.size == n):
            raise GridMismatch(
                f"{self.method.value} trace has {rho00.size}/{rho11.size}/{rho10.size} entries for {n} grid points"
            )
        hard = TOLERANCES['hard']
        trace_error = np.max(np.abs(rho00 + rho11 - 1.0))
        if trace_error > hard:
            raise NotAState(f"{self.method.value} trace: trace deviates by {trace_error:.3g}")
        slack = np.max(np.abs(rho10) ** 2 - rho00 * rho11)
        if slack > hard:
            raise NotAState(f"{self.method.value} trace: positivity violated by {slack:.3g}")
        for arr in (rho00, rho11, rho10):
            arr.setflags(write=False)
        object.__setattr__(self, 'rho00', rho00)
        object.__setattr__(self, 'rho11', rho11)
        object.__setattr__(self, 'rho10', rho10)

    @classmethod
    def from_states(cls, method, params, grid, states):
        return cls(
            method, params, grid,
            np.array([np.real(s.rho00) for s in states]),
            np.array([np.real(s.rho11) for s in states]),
            np.array([s.rho10 for s in states], dtype=complex),
        )

    def __len__(self):
        return len(self.grid)

    def state(self, i):
        c = complex(self.rho10[i])
        return QubitDensityMatrix(float(self.rho00[i]), c.conjugate(), c, float(self.rho11[i]))

    @property
    def states(self):
        return [self.state(i) for i in range(len(self))]

    def absolute_times(self):
        return self.grid.absolute(self.params.gamma0)

    def to_frame(self, absolute_time=False):
        df = pd.DataFrame({
            't_gamma': self.grid.times,
            'method': self.method.value,
            'rho11': self.rho11,
            'rho00': self.rho00,
            're_rho10': self.rho10.real,
            'im_rho10': self.rho10.imag,
            'abs_rho10': np.abs(self.rho10),
        })[EVOLVE_COLUMNS]
        if absolute_time:
            df.insert(1, 't', self.absolute_times())
        return df
