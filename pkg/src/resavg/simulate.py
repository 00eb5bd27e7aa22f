"""SDE integrators for the original, interaction, effective, and action equations.

All integrators share the same skeleton: trajectories are independent
work units with private counter-derived noise streams, advanced by a
backend kernel in chunks and recorded at a thinned set of checkpoint
times. The stiff linear rotation of the oscillatory equations is applied
exactly (integrating-factor step), so the time step is limited by the
sampling of the perturbation's oscillatory arguments rather than by
stiffness; the default resolution is 20 steps per fastest period
2 pi eps / max |lambda|.

Noise conventions: complex kernels consume standard complex Gaussians
(independent N(0,1) real and imaginary parts, second moment 2), matching
the complex Wiener normalization E |beta^c(t)|^2 = 2t. The interaction
integrator draws its increments with the exact oscillatory covariance,
which removes the O(sqrt(h)) phase-averaging error of pointwise Euler
noise for additive dispersion.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .complexcore import FrequencySpectrum, SampledPath, as_state
from .errors import DimensionMismatchError
from .fields import PolynomialVectorField, RadialPolynomial
from .noisemodel import (
    DispersionSpec,
    EffectiveModel,
    StateDependentDispersion,
    hermitian_sqrt,
    noise_increment_covariance,
)

#: trajectories whose max component modulus exceeds this are aborted and flagged
BLOWUP_THRESHOLD = 1.0e6

#: golden-ratio increment and finalizer constants of the splitmix64 mix
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1


def trajectory_seed(master_seed: int, index: int) -> int:
    """Derive the stream seed for one trajectory.

    XORs the master seed with a golden-ratio multiple of the trajectory
    index and applies the splitmix64 finalizer, so streams are
    deterministic and order-independent.
    """
    x = (master_seed ^ ((index * _GOLDEN) & _MASK)) & _MASK
    x ^= x >> 30
    x = (x * _MIX1) & _MASK
    x ^= x >> 27
    x = (x * _MIX2) & _MASK
    x ^= x >> 31
    return x


@dataclass(frozen=True)
class SimulationConfig:
    """Discretization and ensemble parameters shared by the integrators."""

    epsilon: float
    t_end: float
    dt: float
    n_traj: int
    master_seed: int
    moment_order: int = 2
    osc_resolution: int = 20
    max_checkpoints: int = 512

    def __post_init__(self):
        if self.epsilon <= 0 or self.t_end <= 0 or self.dt <= 0:
            raise ValueError("epsilon, t_end and dt must be positive")
        if self.n_traj < 1:
            raise ValueError("need at least one trajectory")
        if self.moment_order < 1:
            raise ValueError("moment order must be a positive integer")
        if self.osc_resolution < 20:
            raise ValueError("oscillation resolution must be at least 20")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))

    @property
    def dt_effective(self) -> float:
        """Actual step: t_end / n_steps (dt rounded to divide the horizon)."""
        return self.t_end / self.n_steps

    def require_oscillation_resolved(self, freqs: FrequencySpectrum):
        """Check dt against the fastest oscillation period of the drift."""
        lam_max = float(np.max(np.abs(freqs.lambdas)))
        limit = self.epsilon * min(1.0, 2.0 * math.pi / lam_max) / self.osc_resolution
        if self.dt_effective > limit * (1.0 + 1e-12):
            raise ValueError(
                f"dt={self.dt_effective:.3g} does not resolve the oscillation; "
                f"need dt <= {limit:.3g} (= eps * min(1, 2 pi / max|lambda|) / "
                f"{self.osc_resolution})"
            )


@dataclass(frozen=True)
class SystemSpec:
    """The model quadruple: frequencies, drift, dispersion, initial state."""

    freqs: FrequencySpectrum
    drift: object  # PolynomialVectorField or OpaqueField
    psi: DispersionSpec | None
    v0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v0", as_state(self.v0, self.freqs.n))
        if self.drift.n != self.freqs.n:
            raise DimensionMismatchError("drift dimension != frequency count")
        if self.psi is not None and self.psi.n != self.freqs.n:
            raise DimensionMismatchError("dispersion rows != frequency count")

    @property
    def n(self) -> int:
        return self.freqs.n


@dataclass
class SdeEnsemble:
    """A bundle of simulated trajectories on a shared checkpoint grid.

    ``states`` has shape (n_traj, K, d): complex for the complex-state
    equations, real for the action and decomplexified general forms.
    Terminal states are always the exact final step, independent of
    checkpoint thinning.
    """

    config: SimulationConfig
    kind: str
    times: np.ndarray
    states: np.ndarray
    terminal_states: np.ndarray
    blowup_flags: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def n_traj(self) -> int:
        return self.states.shape[0]

    @property
    def n_flagged(self) -> int:
        return int(np.sum(self.blowup_flags != 0))

    def path(self, i: int) -> SampledPath:
        return SampledPath(self.times, np.asarray(self.states[i], dtype=np.complex128))

    def checkpoint_index(self, tau: float) -> int:
        idx = int(np.argmin(np.abs(self.times - tau)))
        if abs(self.times[idx] - tau) > 1e-9 * max(1.0, abs(tau)) + 1e-12:
            raise KeyError(f"no checkpoint at tau={tau}")
        return idx

    def states_at(self, tau: float) -> np.ndarray:
        """States of every trajectory at the checkpoint closest to tau."""
        return self.states[:, self.checkpoint_index(tau), :]


def _checkpoint_steps(cfg: SimulationConfig, checkpoints) -> np.ndarray:
    n_steps = cfg.n_steps
    if checkpoints is None:
        count = min(n_steps, cfg.max_checkpoints)
        steps = np.unique(np.round(np.linspace(0, n_steps, count + 1)).astype(np.int64))
    else:
        taus = np.asarray(checkpoints, dtype=np.float64)
        if np.any(taus < -1e-12) or np.any(taus > cfg.t_end * (1 + 1e-12)):
            raise ValueError("checkpoints must lie in [0, t_end]")
        steps = np.unique(np.round(taus / cfg.dt_effective).astype(np.int64))
        steps = np.clip(steps, 0, n_steps)
    if steps[-1] != n_steps:
        steps = np.append(steps, n_steps)
    return steps.astype(np.int64)


def _chunk_size(n_steps: int, n_traj: int) -> int:
    return max(1, min(n_traj, 1024, int(math.ceil(2**21 / max(n_steps, 1)))))


def _complex_noise(seed: int, n_steps: int, q: int) -> np.ndarray:
    g = np.random.Generator(np.random.PCG64(seed))
    raw = g.standard_normal((n_steps, 2, q))
    return raw[:, 0, :] + 1j * raw[:, 1, :]


def _real_noise(seed: int, n_steps: int, q: int) -> np.ndarray:
    g = np.random.Generator(np.random.PCG64(seed))
    return g.standard_normal((n_steps, q))


def _run_chunked(step_chunk, v0_row, cfg, ck_steps, q, complex_noise, d,
                 dtype, threads):
    """Drive a kernel over trajectory chunks, merging order-independently."""
    n_traj, n_steps = cfg.n_traj, cfg.n_steps
    k = ck_steps.size
    out = np.empty((n_traj, k, d), dtype=dtype)
    terminal = np.empty((n_traj, d), dtype=dtype)
    flags = np.zeros(n_traj, dtype=np.uint8)
    chunk = _chunk_size(n_steps, n_traj)
    spans = [(lo, min(lo + chunk, n_traj)) for lo in range(0, n_traj, chunk)]

    def work(span):
        lo, hi = span
        m = hi - lo
        noise = np.empty((n_steps, m, q), dtype=dtype)
        for i in range(m):
            seed = trajectory_seed(cfg.master_seed, lo + i)
            if complex_noise:
                noise[:, i, :] = _complex_noise(seed, n_steps, q)
            else:
                noise[:, i, :] = _real_noise(seed, n_steps, q)
        states = np.tile(v0_row, (m, 1)).astype(dtype)
        fl = np.zeros(m, dtype=np.uint8)
        block = np.empty((m, k, d), dtype=dtype)
        step_chunk(states, noise, block, fl)
        out[lo:hi] = block
        terminal[lo:hi] = states
        flags[lo:hi] = fl

    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, spans))
    else:
        for span in spans:
            work(span)
    return out, terminal, flags


def _packed_drift(drift):
    if isinstance(drift, PolynomialVectorField):
        return drift.packed()
    return None


def simulate_original(
    system: SystemSpec,
    cfg: SimulationConfig,
    checkpoints=None,
    threads: int = 1,
) -> SdeEnsemble:
    """Simulate the original oscillatory equation in complex coordinates.

    Exponential-Euler scheme: the exact rotation by -h lambda / eps wraps
    an Euler drift step and a pointwise noise kick sqrt(h) Psi xi.
    """
    cfg.require_oscillation_resolved(system.freqs)
    psi = system.psi if system.psi is not None else DispersionSpec(
        np.zeros((system.n, 1))
    )
    h = cfg.dt_effective
    lin_phase = np.exp(-1j * h * system.freqs.lambdas / cfg.epsilon)
    ck_steps = _checkpoint_steps(cfg, checkpoints)
    packed = _packed_drift(system.drift)
    psi_c = np.ascontiguousarray(psi.psi, dtype=np.complex128)

    if packed is not None:
        targets, alphas, betas, coeffs = packed

        def step_chunk(states, noise, block, fl):
            kernels.run_original(states, noise, targets, alphas, betas, coeffs,
                                 psi_c, lin_phase, h, ck_steps, block, fl,
                                 BLOWUP_THRESHOLD)
    else:
        drift_fn = system.drift.evaluate_batch

        def step_chunk(states, noise, block, fl):
            _callable_original(states, noise, drift_fn, psi_c, lin_phase, h,
                               ck_steps, block, fl)

    out, terminal, flags = _run_chunked(
        step_chunk, system.v0, cfg, ck_steps, psi.n_noise, True, system.n,
        np.complex128, threads,
    )
    return SdeEnsemble(cfg, "original", ck_steps * h, out, terminal, flags)


def simulate_interaction(
    system: SystemSpec,
    cfg: SimulationConfig,
    checkpoints=None,
    threads: int = 1,
) -> SdeEnsemble:
    """Simulate the interaction representation directly.

    Drift: the rotation-conjugated field at the step start. Noise: the
    exact Gaussian increment of the rotated noise integral; its
    covariance over [tau, tau+h] is Phi_tau C0 Phi_tau^*, so one
    Hermitian square root of C0 / 2 serves every step (the half accounts
    for the second moment 2 of the standard complex kernel noise).
    """
    cfg.require_oscillation_resolved(system.freqs)
    psi = system.psi if system.psi is not None else DispersionSpec(
        np.zeros((system.n, 1))
    )
    h = cfg.dt_effective
    lam = system.freqs.lambdas
    c0 = noise_increment_covariance(psi, system.freqs, cfg.epsilon, 0.0, h)
    root0 = hermitian_sqrt(0.5 * c0)
    n_steps = cfg.n_steps
    taus = h * np.arange(n_steps)
    phases = np.exp(1j * np.outer(taus / cfg.epsilon, lam))
    ck_steps = _checkpoint_steps(cfg, checkpoints)
    packed = _packed_drift(system.drift)

    if packed is not None:
        targets, alphas, betas, coeffs = packed

        def step_chunk(states, noise, block, fl):
            kernels.run_interaction(states, noise, targets, alphas, betas,
                                    coeffs, root0, phases, h, ck_steps, block,
                                    fl, BLOWUP_THRESHOLD)
    else:
        drift_fn = system.drift.evaluate_batch

        def step_chunk(states, noise, block, fl):
            _callable_interaction(states, noise, drift_fn, root0, phases, h,
                                  ck_steps, block, fl)

    out, terminal, flags = _run_chunked(
        step_chunk, system.v0, cfg, ck_steps, system.n, True, system.n,
        np.complex128, threads,
    )
    return SdeEnsemble(cfg, "interaction", ck_steps * h, out, terminal, flags)


def simulate_effective(
    model: EffectiveModel,
    v0,
    cfg: SimulationConfig,
    checkpoints=None,
    threads: int = 1,
) -> SdeEnsemble:
    """Euler-Maruyama for the effective equation.

    No oscillation remains, so dt is limited only by drift stability; the
    oscillation-resolution constraint does not apply.
    """
    v0 = as_state(v0, model.n)
    h = cfg.dt_effective
    ck_steps = _checkpoint_steps(cfg, checkpoints)
    disp_b = np.ascontiguousarray(model.dispersion_b, dtype=np.complex128)
    packed = _packed_drift(model.drift)

    if packed is not None:
        targets, alphas, betas, coeffs = packed

        def step_chunk(states, noise, block, fl):
            kernels.run_effective(states, noise, targets, alphas, betas,
                                  coeffs, disp_b, h, ck_steps, block, fl,
                                  BLOWUP_THRESHOLD)
    else:
        drift_fn = model.drift.evaluate_batch

        def step_chunk(states, noise, block, fl):
            _callable_effective(states, noise, drift_fn, disp_b, h, ck_steps,
                                block, fl)

    out, terminal, flags = _run_chunked(
        step_chunk, v0, cfg, ck_steps, model.n, True, model.n,
        np.complex128, threads,
    )
    return SdeEnsemble(cfg, "effective", ck_steps * h, out, terminal, flags)


def simulate_action_sde(
    radial: list[RadialPolynomial],
    b,
    i0,
    cfg: SimulationConfig,
    checkpoints=None,
    threads: int = 1,
) -> SdeEnsemble:
    """Truncated Euler for the reduced action system (non-resonant limit).

    dI_j = (2 I_j Re R_j(2I) + b_j^2) dtau + b_j sqrt(2 I_j) dW_j, with
    negative excursions clamped to the absorbing boundary I = 0. The
    clamp is a known weak-order bias source near the square-root
    singularity, acceptable at desk scale.
    """
    n = len(radial)
    b = np.asarray(b, dtype=np.float64)
    i0 = np.asarray(i0, dtype=np.float64)
    if b.shape != (n,) or i0.shape != (n,):
        raise DimensionMismatchError("b and i0 must have one entry per action")
    if np.any(i0 < 0) or np.any(b < 0):
        raise ValueError("actions and noise amplitudes must be nonnegative")
    offsets = np.zeros(n + 1, dtype=np.int32)
    powers_list, coeffs_list = [], []
    for j, r in enumerate(radial):
        p, c = r.packed_real()
        offsets[j + 1] = offsets[j] + p.shape[0]
        powers_list.append(p)
        coeffs_list.append(c)
    powers = (
        np.concatenate(powers_list, axis=0)
        if powers_list
        else np.zeros((0, n), dtype=np.int32)
    )
    powers = np.ascontiguousarray(powers, dtype=np.int32)
    coeffs_re = (
        np.concatenate(coeffs_list) if coeffs_list else np.zeros(0)
    )
    h = cfg.dt_effective
    ck_steps = _checkpoint_steps(cfg, checkpoints)

    def step_chunk(states, noise, block, fl):
        kernels.run_action(states, noise, offsets, powers, coeffs_re, b, h,
                           ck_steps, block, fl, BLOWUP_THRESHOLD)

    out, terminal, flags = _run_chunked(
        step_chunk, i0, cfg, ck_steps, n, False, n, np.float64, threads,
    )
    return SdeEnsemble(cfg, "action", ck_steps * h, out, terminal, flags)


def simulate_general(
    drift_real,
    disp: StateDependentDispersion,
    freqs: FrequencySpectrum,
    v0_real,
    cfg: SimulationConfig,
    checkpoints=None,
    threads: int = 1,
) -> SdeEnsemble:
    """Decomplexified general-noise equation with state-dependent dispersion.

    Exponential-Euler with the exact block-rotation linear step and a
    pointwise noise kick sqrt(h) B(v) xi (no closed covariance integral
    exists for state-dependent B). ``drift_real`` maps (m, 2n) batches
    to (m, 2n) batches; real standard normals drive the n2 noise
    channels. Always runs on the numpy backend.
    """
    cfg.require_oscillation_resolved(freqs)
    n = freqs.n
    v0_real = np.asarray(v0_real, dtype=np.float64)
    if v0_real.shape != (2 * n,):
        raise DimensionMismatchError("initial state must be the real 2n vector")
    h = cfg.dt_effective
    w = -h * freqs.lambdas / cfg.epsilon
    rot_cos, rot_sin = np.cos(w), np.sin(w)
    ck_steps = _checkpoint_steps(cfg, checkpoints)

    def step_chunk(states, noise, block, fl):
        kernels.run_general(states, noise, drift_real, disp.evaluate_batch,
                            rot_cos, rot_sin, h, ck_steps, block, fl,
                            BLOWUP_THRESHOLD)

    out, terminal, flags = _run_chunked(
        step_chunk, v0_real, cfg, ck_steps, disp.n_noise, False, 2 * n,
        np.float64, threads,
    )
    return SdeEnsemble(cfg, "general", ck_steps * h, out, terminal, flags)


# Callable-drift fallbacks (opaque fields cannot enter the compiled loops).

def _callable_original(states, noise, drift_fn, psi, lin_phase, h, ck_steps,
                       block, fl):
    from . import _kernels_py as kp

    n_steps = noise.shape[0]
    sqrt_h = math.sqrt(h)
    frozen = states.copy()
    plan = kp._checkpoint_plan(ck_steps)
    for idx in plan.get(0, []):
        block[:, idx, :] = states
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(n_steps):
            new = lin_phase * (states + h * drift_fn(states) + sqrt_h * (noise[s] @ psi.T))
            alive = fl == 0
            states[alive] = new[alive]
            kp._mark_blowups(states, fl, frozen, BLOWUP_THRESHOLD)
            for idx in plan.get(s + 1, []):
                block[:, idx, :] = states


def _callable_interaction(states, noise, drift_fn, root0, phases, h, ck_steps,
                          block, fl):
    from . import _kernels_py as kp

    n_steps = noise.shape[0]
    frozen = states.copy()
    plan = kp._checkpoint_plan(ck_steps)
    for idx in plan.get(0, []):
        block[:, idx, :] = states
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(n_steps):
            ph = phases[s]
            drift = ph * drift_fn(np.conj(ph) * states)
            incr = ph * ((np.conj(ph) * noise[s]) @ root0.T)
            new = states + h * drift + incr
            alive = fl == 0
            states[alive] = new[alive]
            kp._mark_blowups(states, fl, frozen, BLOWUP_THRESHOLD)
            for idx in plan.get(s + 1, []):
                block[:, idx, :] = states


def _callable_effective(states, noise, drift_fn, disp_b, h, ck_steps, block, fl):
    from . import _kernels_py as kp

    n_steps = noise.shape[0]
    sqrt_h = math.sqrt(h)
    frozen = states.copy()
    plan = kp._checkpoint_plan(ck_steps)
    for idx in plan.get(0, []):
        block[:, idx, :] = states
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(n_steps):
            new = states + h * drift_fn(states) + sqrt_h * (noise[s] @ disp_b.T)
            alive = fl == 0
            states[alive] = new[alive]
            kp._mark_blowups(states, fl, frozen, BLOWUP_THRESHOLD)
            for idx in plan.get(s + 1, []):
                block[:, idx, :] = states
