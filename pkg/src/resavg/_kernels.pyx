# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled stepping kernels (hot inner loops).

Same contracts as ``_kernels_py``: chunked trajectory bundles with
pregenerated per-trajectory noise, checkpoint recording by step index,
and blow-up freezing. Trajectories are advanced one at a time in plain C
loops with the GIL released.
"""

import numpy as np

cimport cython
from libc.math cimport sqrt, fmax, pow

cdef extern from "complex.h" nogil:
    double complex conj(double complex z)
    double cabs(double complex z)

BACKEND_NAME = "cython"


cdef inline void _poly_eval_one(
    const int[::1] targets, const int[:, ::1] alphas, const int[:, ::1] betas,
    const double complex[::1] coeffs, int n,
    const double complex* a, double complex* out) noexcept nogil:
    cdef Py_ssize_t i, k
    cdef int e
    cdef double complex term
    for k in range(n):
        out[k] = 0
    for i in range(targets.shape[0]):
        term = coeffs[i]
        for k in range(n):
            for e in range(alphas[i, k]):
                term = term * a[k]
            for e in range(betas[i, k]):
                term = term * conj(a[k])
        out[targets[i]] = out[targets[i]] + term


cdef inline double _max_abs(const double complex* a, int n) noexcept nogil:
    cdef double best = 0.0
    cdef int k
    for k in range(n):
        if cabs(a[k]) > best:
            best = cabs(a[k])
    return best


def run_original(double complex[:, ::1] states, double complex[:, :, ::1] noise,
                 int[::1] targets, int[:, ::1] alphas, int[:, ::1] betas,
                 double complex[::1] coeffs, double complex[:, ::1] psi,
                 double complex[::1] lin_phase, double h,
                 long long[::1] checkpoint_steps,
                 double complex[:, :, ::1] out_states,
                 unsigned char[::1] flags, double threshold):
    cdef Py_ssize_t m = states.shape[0]
    cdef int n = states.shape[1]
    cdef int q = psi.shape[1]
    cdef Py_ssize_t n_steps = noise.shape[0]
    cdef Py_ssize_t n_ck = checkpoint_steps.shape[0]
    cdef double sqrt_h = sqrt(h)
    cdef double complex[::1] v = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] drift = np.empty(n, dtype=np.complex128)
    cdef Py_ssize_t i, s, ck
    cdef int k, l
    cdef double complex acc
    with nogil:
        for i in range(m):
            for k in range(n):
                v[k] = states[i, k]
            ck = 0
            while ck < n_ck and checkpoint_steps[ck] == 0:
                for k in range(n):
                    out_states[i, ck, k] = v[k]
                ck += 1
            for s in range(n_steps):
                _poly_eval_one(targets, alphas, betas, coeffs, n, &v[0], &drift[0])
                for k in range(n):
                    acc = 0
                    for l in range(q):
                        acc = acc + psi[k, l] * noise[s, i, l]
                    v[k] = lin_phase[k] * (v[k] + h * drift[k] + sqrt_h * acc)
                if _max_abs(&v[0], n) > threshold:
                    flags[i] = 1
                while ck < n_ck and checkpoint_steps[ck] == s + 1:
                    for k in range(n):
                        out_states[i, ck, k] = v[k]
                    ck += 1
                if flags[i]:
                    while ck < n_ck:
                        for k in range(n):
                            out_states[i, ck, k] = v[k]
                        ck += 1
                    break
            for k in range(n):
                states[i, k] = v[k]


def run_interaction(double complex[:, ::1] states, double complex[:, :, ::1] noise,
                    int[::1] targets, int[:, ::1] alphas, int[:, ::1] betas,
                    double complex[::1] coeffs, double complex[:, ::1] root0,
                    double complex[:, ::1] phases, double h,
                    long long[::1] checkpoint_steps,
                    double complex[:, :, ::1] out_states,
                    unsigned char[::1] flags, double threshold):
    cdef Py_ssize_t m = states.shape[0]
    cdef int n = states.shape[1]
    cdef Py_ssize_t n_steps = noise.shape[0]
    cdef Py_ssize_t n_ck = checkpoint_steps.shape[0]
    cdef double complex[::1] v = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] rot = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] drift = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] xi = np.empty(n, dtype=np.complex128)
    cdef Py_ssize_t i, s, ck
    cdef int k, l
    cdef double complex acc, ph
    with nogil:
        for i in range(m):
            for k in range(n):
                v[k] = states[i, k]
            ck = 0
            while ck < n_ck and checkpoint_steps[ck] == 0:
                for k in range(n):
                    out_states[i, ck, k] = v[k]
                ck += 1
            for s in range(n_steps):
                for k in range(n):
                    rot[k] = conj(phases[s, k]) * v[k]
                    xi[k] = conj(phases[s, k]) * noise[s, i, k]
                _poly_eval_one(targets, alphas, betas, coeffs, n, &rot[0], &drift[0])
                for k in range(n):
                    acc = 0
                    for l in range(n):
                        acc = acc + root0[k, l] * xi[l]
                    ph = phases[s, k]
                    v[k] = v[k] + h * (ph * drift[k]) + ph * acc
                if _max_abs(&v[0], n) > threshold:
                    flags[i] = 1
                while ck < n_ck and checkpoint_steps[ck] == s + 1:
                    for k in range(n):
                        out_states[i, ck, k] = v[k]
                    ck += 1
                if flags[i]:
                    while ck < n_ck:
                        for k in range(n):
                            out_states[i, ck, k] = v[k]
                        ck += 1
                    break
            for k in range(n):
                states[i, k] = v[k]


def run_effective(double complex[:, ::1] states, double complex[:, :, ::1] noise,
                  int[::1] targets, int[:, ::1] alphas, int[:, ::1] betas,
                  double complex[::1] coeffs, double complex[:, ::1] disp_b,
                  double h, long long[::1] checkpoint_steps,
                  double complex[:, :, ::1] out_states,
                  unsigned char[::1] flags, double threshold):
    cdef Py_ssize_t m = states.shape[0]
    cdef int n = states.shape[1]
    cdef Py_ssize_t n_steps = noise.shape[0]
    cdef Py_ssize_t n_ck = checkpoint_steps.shape[0]
    cdef double sqrt_h = sqrt(h)
    cdef double complex[::1] v = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] drift = np.empty(n, dtype=np.complex128)
    cdef Py_ssize_t i, s, ck
    cdef int k, l
    cdef double complex acc
    with nogil:
        for i in range(m):
            for k in range(n):
                v[k] = states[i, k]
            ck = 0
            while ck < n_ck and checkpoint_steps[ck] == 0:
                for k in range(n):
                    out_states[i, ck, k] = v[k]
                ck += 1
            for s in range(n_steps):
                _poly_eval_one(targets, alphas, betas, coeffs, n, &v[0], &drift[0])
                for k in range(n):
                    acc = 0
                    for l in range(n):
                        acc = acc + disp_b[k, l] * noise[s, i, l]
                    v[k] = v[k] + h * drift[k] + sqrt_h * acc
                if _max_abs(&v[0], n) > threshold:
                    flags[i] = 1
                while ck < n_ck and checkpoint_steps[ck] == s + 1:
                    for k in range(n):
                        out_states[i, ck, k] = v[k]
                    ck += 1
                if flags[i]:
                    while ck < n_ck:
                        for k in range(n):
                            out_states[i, ck, k] = v[k]
                        ck += 1
                    break
            for k in range(n):
                states[i, k] = v[k]


def run_action(double[:, ::1] actions_, double[:, :, ::1] noise,
               int[::1] offsets, int[:, ::1] powers, double[::1] coeffs_re,
               double[::1] b, double h, long long[::1] checkpoint_steps,
               double[:, :, ::1] out_states, unsigned char[::1] flags,
               double threshold):
    cdef Py_ssize_t m = actions_.shape[0]
    cdef int n = actions_.shape[1]
    cdef Py_ssize_t n_steps = noise.shape[0]
    cdef Py_ssize_t n_ck = checkpoint_steps.shape[0]
    cdef double sqrt_h = sqrt(h)
    cdef double[::1] cur = np.empty(n, dtype=np.float64)
    cdef double[::1] u = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i, s, ck, t
    cdef int j, k, e
    cdef double term, re_r, drift, nxt, worst
    with nogil:
        for i in range(m):
            for j in range(n):
                cur[j] = actions_[i, j]
            ck = 0
            while ck < n_ck and checkpoint_steps[ck] == 0:
                for j in range(n):
                    out_states[i, ck, j] = cur[j]
                ck += 1
            for s in range(n_steps):
                for j in range(n):
                    u[j] = 2.0 * cur[j]
                for j in range(n):
                    re_r = 0.0
                    for t in range(offsets[j], offsets[j + 1]):
                        term = coeffs_re[t]
                        for k in range(n):
                            for e in range(powers[t, k]):
                                term = term * u[k]
                        re_r = re_r + term
                    drift = u[j] * re_r + b[j] * b[j]
                    nxt = cur[j] + h * drift + sqrt_h * b[j] * sqrt(u[j]) * noise[s, i, j]
                    cur[j] = fmax(0.0, nxt)
                worst = 0.0
                for j in range(n):
                    if cur[j] > worst:
                        worst = cur[j]
                if worst > threshold:
                    flags[i] = 1
                while ck < n_ck and checkpoint_steps[ck] == s + 1:
                    for j in range(n):
                        out_states[i, ck, j] = cur[j]
                    ck += 1
                if flags[i]:
                    while ck < n_ck:
                        for j in range(n):
                            out_states[i, ck, j] = cur[j]
                        ck += 1
                    break
            for j in range(n):
                actions_[i, j] = cur[j]


def holder_seminorm(double[::1] times, double complex[:, :, ::1] states,
                    double alpha):
    cdef Py_ssize_t m = states.shape[0]
    cdef Py_ssize_t kk = states.shape[1]
    cdef int n = states.shape[2]
    out_arr = np.zeros(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, p, q
    cdef int c
    cdef double dist2, best, d
    cdef double complex diff
    with nogil:
        for i in range(m):
            best = 0.0
            for p in range(kk - 1):
                for q in range(p + 1, kk):
                    dist2 = 0.0
                    for c in range(n):
                        diff = states[i, q, c] - states[i, p, c]
                        dist2 = dist2 + diff.real * diff.real + diff.imag * diff.imag
                    d = sqrt(dist2) / pow(times[q] - times[p], alpha)
                    if d > best:
                        best = d
            out[i] = best
    return out_arr
