"""
Exact reference engine for the multimode Jaynes-Cummings model (rotating-wave form).

The bath is discretized on a flat band around omega0, the thermal state is expanded in a
truncated Fock ensemble, and each ensemble member is evolved inside its excitation-number
sector with one dense eigendecomposition per sector. The qubit state follows from a
partial trace over the photon configurations.
"""
from __future__ import annotations

import hashlib
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from pathlib import Path

import joblib
import numpy as np
from scipy import linalg

from .core import (
    EvolutionTrace, InvalidParam, Method, SectorTooLarge, TruncationTooLossy,
    BathSpec, validate_density_matrix,
)
from .qubit_config import ORACLE, TOLERANCES

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FockConfig:
    """Sparse photon occupations: sorted (mode, count) pairs with count > 0."""
    occupations: tuple = ()

    def __post_init__(self):
        occ = tuple((int(k), int(c)) for k, c in self.occupations)
        modes = [k for k, _ in occ]
        if any(c <= 0 for _, c in occ) or any(k < 0 for k in modes):
            raise InvalidParam(f"Occupations must be positive counts on non-negative modes, got {occ}")
        if modes != sorted(set(modes)):
            raise InvalidParam(f"Occupations must be sorted by mode without repeats, got {occ}")
        object.__setattr__(self, 'occupations', occ)

    @classmethod
    def vacuum(cls):
        return cls(())

    @classmethod
    def from_dict(cls, mapping):
        return cls(tuple(sorted((k, c) for k, c in mapping.items() if c)))

    @classmethod
    def from_modes(cls, modes):
        """One photon per listed mode index; repeats add photons."""
        counts = {}
        for k in modes:
            counts[k] = counts.get(k, 0) + 1
        return cls.from_dict(counts)

    @property
    def total(self):
        return sum(c for _, c in self.occupations)

    def count(self, mode):
        for k, c in self.occupations:
            if k == mode:
                return c
        return 0

    def shifted(self, mode, delta):
        """Adds delta photons to one mode; None when that would go negative."""
        counts = dict(self.occupations)
        new = counts.get(mode, 0) + delta
        if new < 0:
            return None
        counts[mode] = new
        return FockConfig.from_dict(counts)

    def energy(self, omegas):
        return sum(c * float(omegas[k]) for k, c in self.occupations)

    def factorial_weight(self):
        return math.prod(math.factorial(c) for _, c in self.occupations)

    def __str__(self):
        if not self.occupations:
            return "vacuum"
        return "{" + ", ".join(f"{k}:{c}" for k, c in self.occupations) + "}"


@dataclass(frozen=True)
class ThermalEnsemble:
    """Truncated thermal Fock ensemble: (config, probability) members plus the dropped weight."""
    members: tuple
    truncation_loss: float
    active_modes: tuple = ()

    @property
    def total_weight(self):
        return math.fsum(w for _, w in self.members)


def discretize_bath(params, band_width, n_modes):
    """
    Uniform flat band of n_modes (odd, so one mode sits at omega0) with golden-rule couplings
    lambda_k = sqrt(gamma0 * delta_omega / (2 pi)).
    """
    if n_modes < 3 or n_modes % 2 == 0:
        raise InvalidParam(f"n_modes must be odd and >= 3, got {n_modes}")
    if not 0 < band_width < 2 * params.omega0:
        raise InvalidParam(f"band_width must lie in (0, {2 * params.omega0}), got {band_width}")
    spacing = band_width / (n_modes - 1)
    offsets = np.arange(n_modes) - (n_modes - 1) // 2
    omegas = params.omega0 + spacing * offsets
    couplings = np.full(n_modes, math.sqrt(params.gamma0 * spacing / (2 * math.pi)))
    return BathSpec(omegas, couplings, params.beta)


def thermal_members(bath, cutoff, weight_floor=0.0, active_modes=None):
    """
    (members, missing_weight, active_modes) for every configuration with at most `cutoff`
    photons on the active modes (default: every mode). Weights are exp(-beta sum m omega)/Z
    with Z the full product of geometric series over the active modes; inactive modes stay
    in vacuum. No loss check.
    """
    if cutoff < 0 or int(cutoff) != cutoff:
        raise InvalidParam(f"cutoff must be a non-negative integer, got {cutoff}")
    if not 0.0 <= weight_floor < 1.0:
        raise InvalidParam(f"weight_floor must lie in [0, 1), got {weight_floor}")

    if math.isinf(bath.beta):
        return ((FockConfig.vacuum(), 1.0),), 0.0, ()

    modes = tuple(range(bath.n_modes)) if active_modes is None else tuple(sorted(set(int(k) for k in active_modes)))
    if any(k < 0 or k >= bath.n_modes for k in modes):
        raise InvalidParam(f"Active modes {modes} fall outside the {bath.n_modes}-mode bath")
    log_x = -bath.beta * bath.omegas
    log_inv_z = math.fsum(math.log1p(-math.exp(log_x[k])) for k in modes)

    members = []
    for total in range(int(cutoff) + 1):
        for combo in combinations_with_replacement(modes, total):
            weight = math.exp(log_inv_z + math.fsum(log_x[k] for k in combo))
            if weight <= 0.0 or weight < weight_floor:
                continue
            members.append((FockConfig.from_modes(combo), weight))
    missing = max(0.0, 1.0 - math.fsum(w for _, w in members))
    return tuple(members), missing, modes


def enumerate_thermal_configs(bath, cutoff, weight_floor=0.0, active_modes=None):
    """Truncated thermal ensemble; configs below weight_floor count towards the loss."""
    members, loss, modes = thermal_members(bath, cutoff, weight_floor, active_modes)
    if loss > ORACLE['max_truncation_loss']:
        logger.error(f"Thermal truncation loses {loss:.4f} of the weight at cutoff {cutoff}")
        raise TruncationTooLossy(
            f"Truncation loss {loss:.4f} exceeds {ORACLE['max_truncation_loss']}: "
            "raise the cutoff, narrow the thermal window or lower the temperature"
        )
    logger.info(f"Thermal ensemble: {len(members)} members, loss {loss:.3e}")
    return ThermalEnsemble(members, loss, modes)


def coupled_states(bath, state):
    """States connected to `state` by the coupling, with matrix elements."""
    qubit, config = state
    if qubit == 1:
        for k in range(bath.n_modes):
            lam = bath.couplings[k]
            if lam > 0:
                yield (0, config.shifted(k, 1)), lam * math.sqrt(config.count(k) + 1)
    else:
        for k, c in config.occupations:
            lam = bath.couplings[k]
            if lam > 0:
                yield (1, config.shifted(k, -1)), lam * math.sqrt(c)


def _canonical_key(state):
    qubit, config = state
    return (config.total, config.occupations, qubit)


def sector_closure(bath, seed, max_dim):
    """Breadth-first closure of `seed` under the coupling, in canonical order."""
    seen = {seed}
    queue = deque([seed])
    while queue:
        state = queue.popleft()
        for neighbour, _ in coupled_states(bath, state):
            if neighbour not in seen:
                seen.add(neighbour)
                if len(seen) > max_dim:
                    raise SectorTooLarge(f"|{seed[0]}, {seed[1]}>", len(seen), max_dim)
                queue.append(neighbour)
    return sorted(seen, key=_canonical_key)


@dataclass(eq=False)
class SectorBasis:
    """Closed basis of one excitation-number sector with its (real symmetric) Hamiltonian."""
    excitation: int
    states: list
    index: dict = field(repr=False)
    hamiltonian: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, bath, omega0, seed, max_dim=ORACLE['max_sector_dim']):
        states = sector_closure(bath, seed, max_dim)
        index = {s: i for i, s in enumerate(states)}
        dim = len(states)
        h = np.zeros((dim, dim))
        for i, state in enumerate(states):
            qubit, config = state
            h[i, i] = qubit * omega0 + config.energy(bath.omegas)
            for neighbour, element in coupled_states(bath, state):
                h[index[neighbour], i] = element
        return cls(seed[0] + seed[1].total, states, index, h)

    @property
    def dim(self):
        return len(self.states)

    @property
    def upper_mask(self):
        return np.array([q == 1 for q, _ in self.states])

    def is_hermitian(self, tol=TOLERANCES['hermiticity']):
        return bool(np.max(np.abs(self.hamiltonian - self.hamiltonian.T.conj()), initial=0.0) <= tol)

    def fingerprint(self, bath, omega0):
        digest = hashlib.sha256()
        digest.update(bath.fingerprint().encode())
        digest.update(repr(float(omega0)).encode())
        for qubit, config in self.states:
            digest.update(f"{qubit}{config.occupations}".encode())
        return digest.hexdigest()


def _propagate(hamiltonian, eig, seed_indices, times):
    """
    Amplitudes of each seed on the sector basis at every time, shape (T, dim, n_seeds).
    U(t) = V exp(-i Lambda t) V^T, decomposed once and reused for all times.
    """
    if eig is None:
        eig = linalg.eigh(hamiltonian)
    eigenvalues, eigenvectors = eig
    coefficients = eigenvectors[seed_indices, :].T
    phases = np.exp(-1j * np.outer(times, eigenvalues))
    amplitudes = eigenvectors @ (phases[:, :, None] * coefficients[None, :, :])
    return eigenvalues, eigenvectors, amplitudes


class ExactOracle:
    """
    Sector-exact evolution of a qubit in a discrete thermal bath.
    Sectors are cached across calls; eigendecompositions can be checkpointed to disk.
    """

    def __init__(self, params, bath, max_sector_dim=ORACLE['max_sector_dim'],
                 n_jobs=ORACLE['n_jobs'], checkpoint_dir=None):
        self.params = params
        self.bath = bath
        self.max_sector_dim = max_sector_dim
        self.n_jobs = n_jobs
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
        self.logger = logging.getLogger(__name__)
        self.sectors = []
        self._locator = {}
        self._eig = {}
        self.diagnostics = {}

    def sector_for(self, state):
        if state in self._locator:
            return self._locator[state]
        sector = SectorBasis.build(self.bath, self.params.omega0, state, self.max_sector_dim)
        sid = len(self.sectors)
        self.sectors.append(sector)
        for s in sector.states:
            self._locator[s] = sid
        self.logger.info(f"Sector N={sector.excitation} seeded by |{state[0]}, {state[1]}>: {sector.dim} states")
        return sid

    def _checkpoint_path(self, sid):
        key = self.sectors[sid].fingerprint(self.bath, self.params.omega0)
        return key, self.checkpoint_dir / f"sector_{key[:32]}.joblib"

    def _load_checkpoint(self, sid):
        if self.checkpoint_dir is None:
            return None
        key, path = self._checkpoint_path(sid)
        if not path.exists():
            return None
        payload = joblib.load(path)
        if payload.get('version') != ORACLE['checkpoint_version'] or payload.get('key') != key:
            self.logger.warning(f"Ignoring stale checkpoint {path.name}")
            return None
        return payload['eigenvalues'], payload['eigenvectors']

    def _save_checkpoint(self, sid, eigenvalues, eigenvectors):
        key, path = self._checkpoint_path(sid)
        self.checkpoint_dir.mkdir(parents=True, exist_ok=True)
        joblib.dump({
            'version': ORACLE['checkpoint_version'],
            'key': key,
            'dim': self.sectors[sid].dim,
            'eigenvalues': eigenvalues,
            'eigenvectors': eigenvectors,
        }, path)

    def evolve(self, rho0, grid, ensemble):
        rho0 = validate_density_matrix(rho0)
        r00, r11, r10 = float(np.real(rho0.rho00)), float(np.real(rho0.rho11)), complex(rho0.rho10)
        need_up = r11 != 0.0 or r10 != 0.0
        need_down = r00 != 0.0 or r10 != 0.0
        times = grid.absolute(self.params.gamma0)

        # seeds grouped by sector, in order of first appearance
        plan = {}
        for config, _ in ensemble.members:
            for qubit, needed in ((1, need_up), (0, need_down)):
                if needed:
                    seed = (qubit, config)
                    plan.setdefault(self.sector_for(seed), []).append(seed)

        order = list(plan)
        for sid in order:
            if sid not in self._eig:
                cached = self._load_checkpoint(sid)
                if cached is not None:
                    self._eig[sid] = cached
        results = joblib.Parallel(n_jobs=self.n_jobs)(
            joblib.delayed(_propagate)(
                self.sectors[sid].hamiltonian,
                self._eig.get(sid),
                [self.sectors[sid].index[s] for s in plan[sid]],
                times,
            )
            for sid in order
        )

        amplitudes = {}
        drift = 0.0
        for sid, (eigenvalues, eigenvectors, amps) in zip(order, results):
            if sid not in self._eig:
                self._eig[sid] = (eigenvalues, eigenvectors)
                if self.checkpoint_dir is not None:
                    self._save_checkpoint(sid, eigenvalues, eigenvectors)
            for col, seed in enumerate(plan[sid]):
                amplitudes[seed] = (sid, amps[:, :, col])
                drift = max(drift, float(np.max(np.abs(np.sum(np.abs(amps[:, :, col]) ** 2, axis=1) - 1.0))))

        n = len(times)
        rho11 = np.zeros(n)
        rho00 = np.zeros(n)
        rho10 = np.zeros(n, dtype=complex)
        # fixed reduction order: ensemble order
        for config, weight in ensemble.members:
            if need_up:
                sid, amp = amplitudes[(1, config)]
                upper = self.sectors[sid].upper_mask
                prob = np.abs(amp) ** 2
                rho11 += weight * r11 * prob[:, upper].sum(axis=1)
                rho00 += weight * r11 * prob[:, ~upper].sum(axis=1)
            if need_down:
                sid, amp = amplitudes[(0, config)]
                upper = self.sectors[sid].upper_mask
                prob = np.abs(amp) ** 2
                rho11 += weight * r00 * prob[:, upper].sum(axis=1)
                rho00 += weight * r00 * prob[:, ~upper].sum(axis=1)
            if r10 != 0.0:
                rho10 += weight * r10 * self._coherence(amplitudes[(1, config)], amplitudes[(0, config)])

        total = ensemble.total_weight
        self.diagnostics = {
            'sector_dims': [self.sectors[sid].dim for sid in order],
            'max_norm_drift': drift,
            'truncation_loss': ensemble.truncation_loss,
        }
        if drift > TOLERANCES['unitarity']:
            self.logger.warning(f"Norm drift {drift:.3g} exceeds {TOLERANCES['unitarity']}")
        self.logger.info(
            f"Exact evolution over {len(ensemble.members)} members in {len(order)} sectors, "
            f"largest {max(self.diagnostics['sector_dims'], default=0)} states"
        )
        return EvolutionTrace(Method.ORACLE, self.params, grid, rho00 / total, rho11 / total, rho10 / total)

    def _coherence(self, up, down):
        """Partial trace of |psi_up><psi_down| onto |1><0|: sum over shared photon configurations."""
        up_sid, up_amp = up
        down_sid, down_amp = down
        up_sector, down_sector = self.sectors[up_sid], self.sectors[down_sid]
        pairs = [
            (i, down_sector.index[(0, config)])
            for i, (qubit, config) in enumerate(up_sector.states)
            if qubit == 1 and (0, config) in down_sector.index
        ]
        if not pairs:
            return np.zeros(up_amp.shape[0], dtype=complex)
        i_up, i_down = map(list, zip(*pairs))
        return np.sum(up_amp[:, i_up] * np.conj(down_amp[:, i_down]), axis=1)


def evolve_exact(bath, rho0, grid, ensemble, *, params, max_sector_dim=ORACLE['max_sector_dim'],
                 n_jobs=ORACLE['n_jobs'], checkpoint_dir=None):
    oracle = ExactOracle(params, bath, max_sector_dim, n_jobs, checkpoint_dir)
    return oracle.evolve(rho0, grid, ensemble)
