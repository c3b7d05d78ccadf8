"""
Functional engine: the amplitude hierarchy of the multimode Jaynes-Cummings model.

Amplitudes are stored dual-normalized, a(n) = sqrt(prod n!) * <n|psi>, seeded with a = 1 on the
initial configuration. In that normalization the hierarchy reads

    da(0, m)/dt  = -i E(m) a(0, m)        + i sum_l m_l lambda_l a(1, m - d_l)
    da(1, m')/dt = -i (omega0 + E(m')) a(1, m') + i sum_k lambda_k a(0, m' + d_k)

and the named functionals are plain views on it (F = a(0, m), G_l = a(1, m - d_l), ...).
Each excitation sector is integrated with fixed-step RK4 in a frame rotating at N*omega0.

Also here: the closed-form low-temperature functionals, their resonant thermal series,
the thermal-sum assembly and the discrete Euler recursion for single-excitation amplitudes.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .core import (
    CutoffInsufficient, EvolutionTrace, InvalidParam, Method, SectorTooLarge, StepTooCoarse,
    validate_density_matrix,
)
from .oracle import FockConfig, thermal_members
from .qubit_config import FUNCTIONAL, ORACLE, VALIDITY_LIMITS

logger = logging.getLogger(__name__)

CHANNELS = ('up_from_up', 'down_from_up', 'up_from_down', 'down_from_down', 'coherence')


@dataclass(frozen=True, eq=False)
class FunctionalState:
    """
    Functionals of one configuration at one time.
    g[l] pairs with the photon removed from mode l, phi_g[l, p] with l added and p removed.
    psi_g stays zero in the exact hierarchy: the doubly raised qubit channel does not exist.
    """
    config: FockConfig
    t: float
    f: complex
    g: np.ndarray
    psi_f: complex
    psi_g: np.ndarray
    phi_f: np.ndarray
    phi_g: np.ndarray


@dataclass(frozen=True, eq=False)
class AmplitudeCoefficients:
    """Euler-recursion amplitudes sampled at `steps`; psi has shape (S,), the rest (S, n_modes)."""
    steps: np.ndarray
    epsilon: float
    frame_frequency: float
    psi: np.ndarray
    phi: np.ndarray
    g: np.ndarray
    f: np.ndarray

    @property
    def times(self):
        return self.steps * self.epsilon

    def lab_psi(self):
        """psi with the rotating-frame phase put back."""
        return self.psi * np.exp(-1j * self.frame_frequency * self.times)


def _check_step(step, omega_max, name='step'):
    if not step > 0:
        raise InvalidParam(f"{name} must be positive, got {step}")
    if step * omega_max > FUNCTIONAL['max_step_factor']:
        logger.error(f"{name}={step} is too coarse for omega_max={omega_max}")
        raise StepTooCoarse(
            f"{name}*omega_max = {step * omega_max:.3g} exceeds {FUNCTIONAL['max_step_factor']}"
        )


def _check_missing(missing, cutoff):
    if missing > FUNCTIONAL['max_missing_weight']:
        logger.error(f"Truncated partition sum misses {missing:.4f} of Z at cutoff {cutoff}")
        raise CutoffInsufficient(
            f"Configurations up to {cutoff} photons miss {missing:.4f} of the partition sum "
            f"(limit {FUNCTIONAL['max_missing_weight']}): raise the cutoff or restrict the thermal window"
        )


def integrate_rk4(y, h, generator):
    """One classical RK4 step of dy/dt = generator @ y; y may hold several columns."""
    k1 = generator @ y
    k2 = generator @ (y + 0.5 * h * k1)
    k3 = generator @ (y + 0.5 * h * k2)
    k4 = generator @ (y + h * k3)
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def hierarchy_sources(bath, state):
    """
    Amplitudes feeding d a(state)/dt with their dual-normalized couplings:
    a(0, m) is fed by a(1, m - d_l) with m_l lambda_l, a(1, m) by a(0, m + d_k) with lambda_k.
    """
    qubit, config = state
    if qubit == 0:
        for l, m_l in config.occupations:
            if bath.couplings[l] > 0:
                yield (1, config.shifted(l, -1)), m_l * float(bath.couplings[l])
    else:
        for k in range(bath.n_modes):
            if bath.couplings[k] > 0:
                yield (0, config.shifted(k, 1)), float(bath.couplings[k])


def hierarchy_closure(bath, seed, max_dim):
    """Amplitudes reachable from `seed` through the hierarchy, ordered by (photons, occupations, qubit)."""
    reached = {seed}
    frontier = [seed]
    while frontier:
        following = []
        for state in frontier:
            for source, _ in hierarchy_sources(bath, state):
                if source in reached:
                    continue
                reached.add(source)
                if len(reached) > max_dim:
                    logger.error(f"Hierarchy of |{seed[0]}, {seed[1]}> exceeds {max_dim} amplitudes")
                    raise SectorTooLarge(f"|{seed[0]}, {seed[1]}>", len(reached), max_dim)
                following.append(source)
        frontier = following
    return sorted(reached, key=lambda s: (s[1].total, s[1].occupations, s[0]))


@dataclass(eq=False)
class _Sector:
    excitation: int
    states: list
    index: dict = field(repr=False)
    factorials: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, bath, seed, max_dim):
        states = hierarchy_closure(bath, seed, max_dim)
        index = {s: i for i, s in enumerate(states)}
        factorials = np.array([float(config.factorial_weight()) for _, config in states])
        return cls(seed[0] + seed[1].total, states, index, factorials)

    @property
    def upper_mask(self):
        return np.array([q == 1 for q, _ in self.states])

    def generator(self, bath, omega0, frame):
        """Sparse right-hand side of the hierarchy, rotating at `frame`."""
        rows, cols, values = [], [], []
        for i, state in enumerate(self.states):
            qubit, config = state
            rows.append(i)
            cols.append(i)
            values.append(-1j * (qubit * omega0 + config.energy(bath.omegas) - frame))
            for source, coupling in hierarchy_sources(bath, state):
                rows.append(i)
                cols.append(self.index[source])
                values.append(1j * coupling)
        dim = len(self.states)
        return sparse.csr_matrix((values, (rows, cols)), shape=(dim, dim), dtype=complex)


@dataclass(eq=False)
class FunctionalSeries:
    """
    Integrated hierarchy: lab-frame dual amplitudes of every seed (qubit, config) on its
    sector, shape (T, dim), plus the thermal weights used by the assembly.
    """
    params: object
    bath: object
    grid: object
    members: tuple
    missing_weight: float
    cutoff: int
    sectors: list = field(repr=False)
    amplitudes: dict = field(repr=False)

    def _amp(self, seed):
        if seed not in self.amplitudes:
            raise InvalidParam(f"No amplitudes were integrated for |{seed[0]}, {seed[1]}>")
        sid, amp = self.amplitudes[seed]
        return self.sectors[sid], amp

    def amplitude(self, seed, state):
        """Time series of one dual amplitude of `seed`; zero where `state` is unreachable."""
        sector, amp = self._amp(seed)
        j = sector.index.get(state)
        if j is None:
            return np.zeros(amp.shape[0], dtype=complex)
        return amp[:, j]

    def channels(self):
        """Transition probabilities and the coherence kernel per member, each (n_members, T)."""
        out = {name: [] for name in CHANNELS}
        for config, _ in self.members:
            seed_weight = float(config.factorial_weight())
            for qubit, up_key, down_key in ((1, 'up_from_up', 'down_from_up'), (0, 'up_from_down', 'down_from_down')):
                sector, amp = self._amp((qubit, config))
                prob = np.abs(amp) ** 2 * (seed_weight / sector.factorials)
                upper = sector.upper_mask
                out[up_key].append(prob[:, upper].sum(axis=1))
                out[down_key].append(prob[:, ~upper].sum(axis=1))
            out['coherence'].append(self._coherence(config, seed_weight))
        return {name: np.array(rows) for name, rows in out.items()}

    def _coherence(self, config, seed_weight):
        up_sector, up = self._amp((1, config))
        down_sector, down = self._amp((0, config))
        total = np.zeros(up.shape[0], dtype=complex)
        for i, (qubit, photons) in enumerate(up_sector.states):
            j = down_sector.index.get((0, photons)) if qubit == 1 else None
            if j is not None:
                total += up[:, i] * np.conj(down[:, j]) * (seed_weight / up_sector.factorials[i])
        return total

    def state(self, config, i):
        """Named functionals of one member at grid index i."""
        k = self.bath.n_modes
        down_sector, down = self._amp((0, config))
        up_sector, up = self._amp((1, config))

        def lookup(sector, amp, key):
            j = sector.index.get(key) if key[1] is not None else None
            return amp[i, j] if j is not None else 0j

        g = np.array([lookup(down_sector, down, (1, config.shifted(l, -1))) for l in range(k)])
        phi_f = np.array([lookup(up_sector, up, (0, config.shifted(p, 1))) for p in range(k)])
        phi_g = np.zeros((k, k), dtype=complex)
        for p, _ in config.occupations:
            removed = config.shifted(p, -1)
            for l in range(k):
                if l != p:
                    phi_g[l, p] = lookup(up_sector, up, (1, removed.shifted(l, 1)))
        return FunctionalState(
            config=config,
            t=float(self.grid.absolute(self.params.gamma0)[i]),
            f=complex(down[i, down_sector.index[(0, config)]]),
            g=g,
            psi_f=complex(up[i, up_sector.index[(1, config)]]),
            psi_g=np.zeros(k, dtype=complex),
            phi_f=phi_f,
            phi_g=phi_g,
        )


def integrate_functionals(params, bath, grid, cutoff, *, ensemble=None, step=None,
                          max_dim=ORACLE['max_sector_dim'], active_modes=None, qubits=(1, 0)):
    """
    Integrates the hierarchy for every configuration with at most `cutoff` photons (or the
    members of `ensemble`), seeding the listed qubit states of each. Shifted configurations
    are generated by the sector closure, so no headroom truncation is needed.
    The thermal assembly needs both qubit seeds; a single one is enough for amplitude().
    """
    if not qubits or set(qubits) - {0, 1}:
        raise InvalidParam(f"qubits must be a non-empty subset of (1, 0), got {qubits}")
    omega_max = max(bath.omega_max, params.omega0)
    if step is None:
        step = FUNCTIONAL['default_step_factor'] / omega_max
    _check_step(step, omega_max)

    if ensemble is None:
        members, missing, _ = thermal_members(bath, cutoff, active_modes=active_modes)
    else:
        members, missing = ensemble.members, ensemble.truncation_loss
    _check_missing(missing, cutoff)

    sectors, locator, plan = [], {}, {}
    for config, _ in members:
        for qubit in qubits:
            seed = (qubit, config)
            if seed not in locator:
                sector = _Sector.build(bath, seed, max_dim)
                sid = len(sectors)
                sectors.append(sector)
                for s in sector.states:
                    locator[s] = sid
            plan.setdefault(locator[seed], []).append(seed)

    times = grid.absolute(params.gamma0)
    amplitudes = {}
    n_steps = 0
    for sid, seeds in plan.items():
        sector = sectors[sid]
        frame = sector.excitation * params.omega0
        generator = sector.generator(bath, params.omega0, frame)
        y = np.zeros((len(sector.states), len(seeds)), dtype=complex)
        for col, seed in enumerate(seeds):
            y[sector.index[seed], col] = 1.0
        out = np.empty((len(times),) + y.shape, dtype=complex)
        t_now = 0.0
        for n, t_next in enumerate(times):
            span = t_next - t_now
            if span > 0:
                n_sub = max(1, math.ceil(span / step - 1e-9))
                h = span / n_sub
                for _ in range(n_sub):
                    y = integrate_rk4(y, h, generator)
                n_steps += n_sub
            t_now = t_next
            out[n] = y * np.exp(-1j * frame * t_next)
        for col, seed in enumerate(seeds):
            amplitudes[seed] = (sid, out[:, :, col])

    logger.info(
        f"Functional hierarchy: {len(members)} configurations, {len(plan)} sectors, "
        f"largest {max(len(s.states) for s in sectors)} states, {n_steps} RK4 steps"
    )
    return FunctionalSeries(params, bath, grid, tuple(members), missing, int(cutoff), sectors, amplitudes)


def _phi1(z):
    """(exp(z) - 1)/z, finite at z = 0."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + 0.5 * z, np.expm1(safe) / safe)


def calibrated_couplings(bath, omega0):
    """lambda_l = lambda/sqrt(omega_l), with lambda fixed by the coupling of the mode nearest omega0."""
    k = int(np.argmin(np.abs(bath.omegas - omega0)))
    lam = bath.couplings[k] * math.sqrt(bath.omegas[k])
    return lam / np.sqrt(bath.omegas)


def resonant_occupation(bath, omega0, config):
    return sum(config.count(k) for k in bath.resonant_modes(omega0))


def _closed_form_amplitudes(params, bath, config, t):
    """
    F and Psi^f with the shape of t; G_l, Psi^g_p and Phi^f_p with a mode axis appended.
    t is absolute time, scalar or array.
    """
    t = np.asarray(t, dtype=float)
    omega0, gam = params.omega0, params.gamma0
    omegas = bath.omegas
    lam = calibrated_couplings(bath, omega0)
    m_o = resonant_occupation(bath, omega0, config)
    energy = config.energy(omegas)
    detune = omegas - omega0
    a = 0.5 * gam * m_o
    tm = t[..., None]

    f = np.exp(-a * t - 1j * energy * t)
    psi_f = np.exp(-0.5 * gam * (m_o + 1) * t - 1j * (omega0 + energy) * t)

    # G_l[m - d_l]: (1 - exp(-z t))/z = t * phi1(-z t), z = a + i detune
    z = a + 1j * detune
    g = 1j * lam * np.exp(-1j * (omega0 + energy - omegas) * tm) * tm * _phi1(-z * tm)

    # (exp(i d t) - exp(-a t))/(d - i a) = i t exp(-a t) phi1(i (d - i a) t)
    w = detune - 1j * a
    psi_g = lam * np.exp(-0.5 * gam * tm - 1j * (omega0 + energy) * tm) * 1j * tm * np.exp(-a * tm) * _phi1(1j * w * tm)

    phi_f = (
        lam * np.exp(-a * tm - 1j * (omega0 + energy) * tm) / (detune - 0.5j * gam)
        * (np.exp(-0.5 * gam * tm) - np.exp(1j * detune * tm))
    )
    return f, g, psi_f, psi_g, phi_f


def closed_form_functionals(params, bath, config, t):
    """
    Low-temperature closed forms of all functionals of `config` at absolute time t.
    g and phi_f are evaluated for every mode; entries of unoccupied modes in g carry zero
    weight in the thermal sums.
    """
    t = float(t)
    if t < 0:
        raise InvalidParam(f"t must be non-negative, got {t}")
    if params.gamma0 * t > VALIDITY_LIMITS['max_gamma_t']:
        logger.warning(f"gamma0*t = {params.gamma0 * t:.3g} is past the pole-dominated window")
    f, g, psi_f, psi_g, phi_f = _closed_form_amplitudes(params, bath, config, t)

    omega0, gam = params.omega0, params.gamma0
    lam = calibrated_couplings(bath, omega0)
    a = 0.5 * gam * resonant_occupation(bath, omega0, config)
    energy = config.energy(bath.omegas)
    detune = bath.omegas - omega0
    w = detune - 1j * a

    # (1 - exp(-(a + i d) t))/(d - i a) = i t phi1(-i (d - i a) t)
    emit = (np.exp((-0.5 * gam + 1j * detune) * t) - 1.0) / (detune + 0.5j * gam)
    absorb = 1j * t * _phi1(-1j * w * t)
    phase = np.exp(-1j * (omega0 + energy + detune[:, None] - detune[None, :]) * t)
    phi_g = (lam[:, None] * lam[None, :]) * phase * emit[:, None] * absorb[None, :]
    np.fill_diagonal(phi_g, 0.0)

    return FunctionalState(config, t, complex(f), g, complex(psi_f), psi_g, phi_f, phi_g)


def continuum_line_sums(gamma_t, m_o):
    """
    Flat-band limits of the absorbed and emitted weights, m_o sum_l |G_l|^2 and
    (m_o + 1) sum_p |Phi^f_p|^2, at gamma0*t.
    """
    decay = np.exp(-np.asarray(gamma_t, dtype=float))
    kept = decay ** m_o
    return 1.0 - kept, (m_o + 1) * kept * (1.0 - decay)


def line_sums(params, bath, config, t, continuum=False):
    """
    (absorbed, emitted) weights of `config` at absolute times t, from the closed-form G and
    Phi^f. The resonant occupation m_o is carried by the whole line: absorption weighs every
    mode with m_o, emission with m_o + 1. continuum=True gives the flat-band limit instead
    of the sum over the discrete modes.
    """
    m_o = resonant_occupation(bath, params.omega0, config)
    if continuum:
        return continuum_line_sums(params.gamma0 * np.asarray(t, dtype=float), m_o)
    _, g, _, _, phi_f = _closed_form_amplitudes(params, bath, config, t)
    absorbed = m_o * np.sum(np.abs(g) ** 2, axis=-1) if m_o else np.zeros(np.shape(t))
    return absorbed, (m_o + 1) * np.sum(np.abs(phi_f) ** 2, axis=-1)


@dataclass(eq=False)
class ClosedFormSeries:
    """
    Closed-form thermal series over the resonant occupation m_o. After normalization the
    off-resonant occupations drop out, so one member per m_o carries weight x^m_o (1 - x).
    Line sums are the flat-band limits unless continuum is False.
    """
    params: object
    bath: object
    grid: object
    members: tuple
    missing_weight: float
    cutoff: int
    continuum: bool = True

    def channels(self):
        t = self.grid.absolute(self.params.gamma0)
        out = {name: [] for name in CHANNELS}
        for config, _ in self.members:
            f, _, psi_f, _, _ = _closed_form_amplitudes(self.params, self.bath, config, t)
            absorbed, emitted = line_sums(self.params, self.bath, config, t, self.continuum)
            out['down_from_down'].append(np.abs(f) ** 2)
            out['up_from_down'].append(absorbed)
            out['down_from_up'].append(emitted)
            # the low-temperature Phi^g does not close the upper-seed budget; closure does
            out['up_from_up'].append(1.0 - emitted)
            out['coherence'].append(psi_f * np.conj(f))
        return {name: np.array(rows) for name, rows in out.items()}

    def state(self, config, i):
        return closed_form_functionals(self.params, self.bath, config, self.grid.absolute(self.params.gamma0)[i])


def _series_terms(x, cutoff):
    if x == 0.0:
        return int(cutoff)
    k = int(cutoff)
    while x ** (k + 1) * (k + 2) >= FUNCTIONAL['series_tail']:
        k += 1
        if k >= FUNCTIONAL['max_series_terms']:
            logger.warning(f"Resonant series capped at {k} terms for x={x}")
            break
    return k


def closed_form_series(params, bath, grid, cutoff, *, continuum=True):
    """
    Closed-form functionals summed over resonant occupations 0..K, K >= cutoff set by the tail.
    continuum=False takes the line sums over the bath modes.
    """
    resonant = bath.resonant_modes(params.omega0)
    if resonant.size == 0:
        raise InvalidParam("The closed-form series needs a bath mode at omega0")
    if params.gamma0 * grid.absolute(params.gamma0)[-1] > VALIDITY_LIMITS['max_gamma_t']:
        logger.warning(f"Grid reaches gamma0*t = {grid.times[-1]:.3g}, past the pole-dominated window")
    x = params.x
    n_terms = _series_terms(x, cutoff)
    r = int(resonant[0])
    members = tuple(
        (FockConfig.from_dict({r: m}), (x ** m) * (1.0 - x))
        for m in range(n_terms + 1)
    )
    missing = x ** (n_terms + 1)
    logger.info(f"Closed-form resonant series: {len(members)} terms, tail {missing:.3e}")
    return ClosedFormSeries(params, bath, grid, members, missing, int(cutoff), bool(continuum))


def assemble_density_matrix(functionals, bath, rho0):
    """
    Thermal sums of the transition channels, normalized by the truncated partition sum.
    Works on FunctionalSeries and ClosedFormSeries alike.
    """
    if bath.fingerprint() != functionals.bath.fingerprint():
        raise InvalidParam("Functionals were computed for a different bath")
    _check_missing(functionals.missing_weight, functionals.cutoff)
    rho0 = validate_density_matrix(rho0)
    r00, r11, r10 = float(np.real(rho0.rho00)), float(np.real(rho0.rho11)), complex(rho0.rho10)

    weights = np.array([w for _, w in functionals.members])
    ch = functionals.channels()
    norm = math.fsum(weights)
    rho11 = weights @ (r11 * ch['up_from_up'] + r00 * ch['up_from_down']) / norm
    rho00 = weights @ (r11 * ch['down_from_up'] + r00 * ch['down_from_down']) / norm
    rho10 = r10 * (weights @ ch['coherence']) / norm
    return EvolutionTrace(Method.FUNCTIONAL, functionals.params, functionals.grid, rho00, rho11, rho10)


def amplitude_recursion(bath, steps, epsilon, *, omega0, field_seed=None, frame_frequency=0.0, sample_every=1):
    """
    Forward-Euler recursion for the single-excitation amplitudes psi, phi_k and the
    field-label amplitudes g_k, f_k, in a frame rotating at frame_frequency.
    """
    if steps < 1 or int(steps) != steps:
        raise InvalidParam(f"steps must be a positive integer, got {steps}")
    if sample_every < 1:
        raise InvalidParam(f"sample_every must be >= 1, got {sample_every}")
    spread = max(float(np.max(np.abs(bath.omegas - frame_frequency))), abs(omega0 - frame_frequency))
    _check_step(epsilon, spread, name='epsilon')
    if epsilon * spread > FUNCTIONAL['euler_warn_factor']:
        logger.warning(f"epsilon*omega = {epsilon * spread:.3g}: Euler amplitudes will drift")

    k = bath.n_modes
    lam = np.asarray(bath.couplings, dtype=float)
    a_qubit = 1.0 - 1j * (omega0 - frame_frequency) * epsilon
    a_modes = 1.0 - 1j * (bath.omegas - frame_frequency) * epsilon
    c = 1j * epsilon * lam

    psi = 1.0 + 0j
    phi = np.zeros(k, dtype=complex)
    g = np.zeros(k, dtype=complex)
    f = np.zeros(k, dtype=complex) if field_seed is None else np.asarray(field_seed, dtype=complex).copy()
    if f.shape != (k,):
        raise InvalidParam(f"field_seed needs {k} entries, got {f.shape}")

    sampled = [(0, psi, phi, g, f)]
    for n in range(1, int(steps) + 1):
        psi, phi = a_qubit * psi + c @ phi, c * psi + a_modes * phi
        g, f = a_qubit * g + c * f, c * g.sum() + a_modes * f
        if n % sample_every == 0 or n == steps:
            sampled.append((n, psi, phi, g, f))

    return AmplitudeCoefficients(
        steps=np.array([s[0] for s in sampled]),
        epsilon=float(epsilon),
        frame_frequency=float(frame_frequency),
        psi=np.array([s[1] for s in sampled]),
        phi=np.array([s[2] for s in sampled]),
        g=np.array([s[3] for s in sampled]),
        f=np.array([s[4] for s in sampled]),
    )
