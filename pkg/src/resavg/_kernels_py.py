"""Pure-numpy stepping kernels (fallback backend).

Mirrors the compiled API in ``_kernels.pyx``; each ``run_*`` routine
advances a chunk of trajectories in lockstep, vectorized across the
chunk, with noise supplied as a pregenerated array so results are
bit-reproducible per trajectory stream regardless of chunking.

Conventions shared by both backends:

* complex noise entries are standard complex Gaussians with independent
  N(0, 1) real and imaginary parts (second moment 2);
* ``checkpoint_steps`` are step indices in [0, n_steps], 0 meaning the
  initial state; trajectories whose max component modulus exceeds the
  blow-up threshold are frozen at the offending value and flagged.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def _poly_eval(targets, alphas, betas, coeffs, states, maxdeg):
    """Evaluate a packed polynomial field on a (m, n) batch."""
    out = np.zeros_like(states)
    if targets.size == 0:
        return out
    conj = np.conj(states)
    pow_a = [np.ones_like(states)]
    pow_c = [pow_a[0]]
    for _ in range(maxdeg):
        pow_a.append(pow_a[-1] * states)
        pow_c.append(pow_c[-1] * conj)
    for i in range(targets.size):
        term = np.full(states.shape[0], coeffs[i], dtype=np.complex128)
        for k in range(states.shape[1]):
            e = alphas[i, k]
            if e:
                term = term * pow_a[e][:, k]
            e = betas[i, k]
            if e:
                term = term * pow_c[e][:, k]
        out[:, targets[i]] += term
    return out


def _mark_blowups(states, flags, frozen, threshold):
    """Flag newly exploded trajectories and freeze flagged ones."""
    over = np.max(np.abs(states), axis=1) > threshold
    newly = over & (flags == 0)
    if np.any(newly):
        flags[newly] = 1
        frozen[newly] = states[newly]
    dead = flags != 0
    if np.any(dead):
        states[dead] = frozen[dead]


def _checkpoint_plan(checkpoint_steps):
    lookup = {}
    for idx, step in enumerate(checkpoint_steps):
        lookup.setdefault(int(step), []).append(idx)
    return lookup


def run_original(states, noise, targets, alphas, betas, coeffs, psi,
                 lin_phase, h, checkpoint_steps, out_states, flags, threshold):
    """Exponential-Euler for the original oscillatory equation.

    Per step: v <- lin_phase * (v + h P(v) + sqrt(h) Psi xi), with the
    stiff linear rotation applied exactly.
    """
    n_steps = noise.shape[0]
    maxdeg = int(alphas.sum(axis=1).max() + betas.sum(axis=1).max()) if targets.size else 0
    sqrt_h = np.sqrt(h)
    frozen = states.copy()
    plan = _checkpoint_plan(checkpoint_steps)
    for idx in plan.get(0, []):
        out_states[:, idx, :] = states
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(n_steps):
            drift = _poly_eval(targets, alphas, betas, coeffs, states, maxdeg)
            new = lin_phase * (states + h * drift + sqrt_h * (noise[s] @ psi.T))
            alive = flags == 0
            states[alive] = new[alive]
            _mark_blowups(states, flags, frozen, threshold)
            for idx in plan.get(s + 1, []):
                out_states[:, idx, :] = states


def run_interaction(states, noise, targets, alphas, betas, coeffs, root0,
                    phases, h, checkpoint_steps, out_states, flags, threshold):
    """Euler for the interaction representation with exact noise increments.

    The drift is the rotation-conjugated field evaluated at the step
    start; the noise increment is Phi_s root0 Phi_s^* xi, where root0 is
    the (halved-convention) square root of the increment covariance at
    tau = 0, so each increment carries the exact oscillatory covariance.
    """
    n_steps = noise.shape[0]
    maxdeg = int(alphas.sum(axis=1).max() + betas.sum(axis=1).max()) if targets.size else 0
    frozen = states.copy()
    plan = _checkpoint_plan(checkpoint_steps)
    for idx in plan.get(0, []):
        out_states[:, idx, :] = states
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(n_steps):
            ph = phases[s]
            rotated = np.conj(ph) * states
            drift = ph * _poly_eval(targets, alphas, betas, coeffs, rotated, maxdeg)
            incr = ph * ((np.conj(ph) * noise[s]) @ root0.T)
            new = states + h * drift + incr
            alive = flags == 0
            states[alive] = new[alive]
            _mark_blowups(states, flags, frozen, threshold)
            for idx in plan.get(s + 1, []):
                out_states[:, idx, :] = states


def run_effective(states, noise, targets, alphas, betas, coeffs, disp_b,
                  h, checkpoint_steps, out_states, flags, threshold):
    """Euler-Maruyama for the effective equation (no oscillation)."""
    n_steps = noise.shape[0]
    maxdeg = int(alphas.sum(axis=1).max() + betas.sum(axis=1).max()) if targets.size else 0
    sqrt_h = np.sqrt(h)
    frozen = states.copy()
    plan = _checkpoint_plan(checkpoint_steps)
    for idx in plan.get(0, []):
        out_states[:, idx, :] = states
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(n_steps):
            drift = _poly_eval(targets, alphas, betas, coeffs, states, maxdeg)
            new = states + h * drift + sqrt_h * (noise[s] @ disp_b.T)
            alive = flags == 0
            states[alive] = new[alive]
            _mark_blowups(states, flags, frozen, threshold)
            for idx in plan.get(s + 1, []):
                out_states[:, idx, :] = states


def _radial_re_eval(offsets, powers, coeffs_re, u):
    """Re R_j(u) for each j, on a (m, n) batch of u = 2I."""
    m, n = u.shape
    out = np.zeros((m, n))
    for j in range(n):
        lo, hi = offsets[j], offsets[j + 1]
        for t in range(lo, hi):
            term = np.full(m, coeffs_re[t])
            for k in range(n):
                e = powers[t, k]
                if e:
                    term = term * u[:, k] ** e
            out[:, j] += term
    return out


def run_action(actions_, noise, offsets, powers, coeffs_re, b, h,
               checkpoint_steps, out_states, flags, threshold):
    """Truncated Euler for the reduced action system.

    I_j <- max(0, I_j + h (2 I_j Re R_j(2I) + b_j^2)
                 + sqrt(h) b_j sqrt(2 I_j) xi_j),
    clamping at the absorbing boundary I = 0.
    """
    n_steps = noise.shape[0]
    sqrt_h = np.sqrt(h)
    b2 = b * b
    frozen = actions_.copy()
    plan = _checkpoint_plan(checkpoint_steps)
    for idx in plan.get(0, []):
        out_states[:, idx, :] = actions_
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(n_steps):
            u = 2.0 * actions_
            re_r = _radial_re_eval(offsets, powers, coeffs_re, u)
            drift = u * re_r + b2
            diff = b * np.sqrt(u)
            new = np.maximum(0.0, actions_ + h * drift + sqrt_h * diff * noise[s])
            alive = flags == 0
            actions_[alive] = new[alive]
            _mark_blowups(actions_, flags, frozen, threshold)
            for idx in plan.get(s + 1, []):
                out_states[:, idx, :] = actions_


def run_general(states, noise, drift_fn, disp_fn, rot_cos, rot_sin, h,
                checkpoint_steps, out_states, flags, threshold):
    """Exponential-Euler for the decomplexified general-noise equation.

    ``states`` is the (m, 2n) real bundle; ``drift_fn``/``disp_fn`` take
    (m, 2n) batches. The linear step is the exact per-block rotation
    given by (rot_cos, rot_sin) of length n. Python backend only: the
    state-dependent coefficients are opaque callables.
    """
    n_steps = noise.shape[0]
    sqrt_h = np.sqrt(h)
    frozen = states.copy()
    plan = _checkpoint_plan(checkpoint_steps)
    for idx in plan.get(0, []):
        out_states[:, idx, :] = states
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(n_steps):
            bmat = disp_fn(states)  # (m, 2n, n2)
            kick = np.einsum("mij,mj->mi", bmat, noise[s])
            mid = states + h * drift_fn(states) + sqrt_h * kick
            x, y = mid[:, 0::2], mid[:, 1::2]
            new = np.empty_like(mid)
            new[:, 0::2] = rot_cos * x - rot_sin * y
            new[:, 1::2] = rot_sin * x + rot_cos * y
            alive = flags == 0
            states[alive] = new[alive]
            _mark_blowups(states, flags, frozen, threshold)
            for idx in plan.get(s + 1, []):
                out_states[:, idx, :] = states


def holder_seminorm(times, states, alpha):
    """Max over sample pairs of |u(t') - u(t)| / (t' - t)^alpha, per path.

    ``states`` is (m, K, n) complex on the shared grid ``times``.
    """
    times = np.asarray(times, dtype=np.float64)
    k = times.size
    dt_pow = np.abs(times[None, :] - times[:, None]) ** alpha
    iu = np.triu_indices(k, 1)
    denom = dt_pow[iu]
    out = np.empty(states.shape[0])
    for i in range(states.shape[0]):
        diff = states[i][None, :, :] - states[i][:, None, :]
        dist = np.sqrt(np.sum(diff.real**2 + diff.imag**2, axis=2))
        out[i] = np.max(dist[iu] / denom) if denom.size else 0.0
    return out
