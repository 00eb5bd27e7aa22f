"""Polynomial vector fields on C^n and their frequency averages.

A field is a sum of complex monomials acting on one target coordinate,

    P_j(a) = sum over (alpha, beta) of C_j^{alpha,beta} a^alpha conj(a)^beta,

with multi-indices alpha, beta in Z_+^n. Conjugating by the rotation flow
Phi_{t*Lambda} multiplies each monomial by exp(i t (lambda_j - Lambda.(alpha
- beta))), so time-averaging kills every monomial except the resonant ones
with Lambda.(alpha - beta) = lambda_j. Four averaging routes are provided:

* ``partial_average``    -- finite-horizon quadrature of the conjugated field;
* ``average_numeric``    -- horizon-doubling limit of the partial averages;
* ``resonant_average_symbolic`` -- the exact monomial projection;
* ``torus_average``      -- the full-torus average, valid for non-resonant
  frequency vectors (exact monomial rule for polynomials, rank-1 lattice
  quadrature for opaque fields).

The symbolic and numeric routes are deliberately independent of each other
so either can serve as an oracle for the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .complexcore import (
    COMPLETELY_RESONANT,
    NON_RESONANT,
    FrequencySpectrum,
    rotate,
)
from .errors import (
    ConvergenceError,
    DimensionMismatchError,
    NonRadialMonomialError,
)

#: tolerance for the resonance test Lambda.(alpha - beta) = lambda_j;
#: small divisors below this would stall numeric averaging anyway
RESONANCE_TOL = 1e-9

#: averaging horizon cap; exceeding it raises ConvergenceError
_AVERAGING_T_MAX = 1.0e7
#: initial averaging horizon (doubled until convergence)
_AVERAGING_T0 = 2.0 * math.pi
#: node budget per invocation of a vectorized integrand
_NODE_CHUNK = 1 << 16


@dataclass(frozen=True)
class Monomial:
    """One term C * a^alpha * conj(a)^beta feeding component ``target``."""

    target: int
    alpha: tuple
    beta: tuple
    coeff: complex

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(int(e) for e in self.alpha))
        object.__setattr__(self, "beta", tuple(int(e) for e in self.beta))
        object.__setattr__(self, "coeff", complex(self.coeff))
        if len(self.alpha) != len(self.beta):
            raise DimensionMismatchError("alpha and beta must have equal length")
        if any(e < 0 for e in self.alpha + self.beta):
            raise ValueError("exponents must be nonnegative")
        if not (0 <= self.target < len(self.alpha)):
            raise ValueError("target index out of range")

    @property
    def degree(self) -> int:
        return sum(self.alpha) + sum(self.beta)

    def key(self):
        return (self.target, self.alpha, self.beta)


def _canonicalize(n: int, monomials) -> tuple:
    merged: dict = {}
    for m in monomials:
        if len(m.alpha) != n:
            raise DimensionMismatchError(
                f"monomial multi-index length {len(m.alpha)} != dimension {n}"
            )
        k = m.key()
        merged[k] = merged.get(k, 0.0) + m.coeff
    out = [
        Monomial(t, a, b, c)
        for (t, a, b), c in merged.items()
        if c != 0.0
    ]
    out.sort(key=Monomial.key)
    return tuple(out)


@dataclass(frozen=True)
class PolynomialVectorField:
    """Canonical polynomial vector field on C^n.

    Monomials are sorted by (target, alpha, beta) with duplicates merged
    and zero coefficients dropped, so equal fields compare equal. The
    growth metadata (order m0 and constant) certifies the polynomial
    bound |P(a)| <= C (1 + |a|)^m0; it is spot-checked on a fixed random
    sample at construction.
    """

    n: int
    monomials: tuple = field(default=())
    growth_order: int | None = None
    growth_constant: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be >= 1")
        object.__setattr__(
            self, "monomials", _canonicalize(self.n, self.monomials)
        )
        if self.growth_order is None:
            object.__setattr__(self, "growth_order", self.degree)
        if self.growth_constant is None:
            object.__setattr__(self, "growth_constant", self._default_growth())
        if self.growth_order < 0 or self.growth_constant <= 0:
            raise ValueError("growth metadata must be nonnegative order, positive constant")
        self._check_growth_on_sample()

    @property
    def degree(self) -> int:
        return max((m.degree for m in self.monomials), default=0)

    def _default_growth(self) -> float:
        # per-component sum of |coeff| bounds |P_j(a)| by sum|C| (1+|a|)^deg
        per_target = np.zeros(self.n)
        for m in self.monomials:
            per_target[m.target] += abs(m.coeff)
        return float(max(np.linalg.norm(per_target), 1e-300)) or 1.0

    def _check_growth_on_sample(self):
        if not self.monomials:
            return
        rng = np.random.default_rng(0x5EED)
        pts = rng.normal(size=(1000, self.n)) + 1j * rng.normal(size=(1000, self.n))
        pts *= rng.uniform(0.1, 3.0, size=(1000, 1))
        vals = np.linalg.norm(self.evaluate_batch(pts), axis=1)
        bound = self.growth_constant * (1.0 + np.linalg.norm(pts, axis=1)) ** self.growth_order
        if np.any(vals > bound * (1.0 + 1e-9)):
            raise ValueError(
                "declared growth bound violated on verification sample"
            )

    def packed(self):
        """Flat arrays (targets, alphas, betas, coeffs) for the kernels."""
        nm = len(self.monomials)
        targets = np.fromiter((m.target for m in self.monomials), np.int32, nm)
        alphas = np.zeros((nm, self.n), dtype=np.int32)
        betas = np.zeros((nm, self.n), dtype=np.int32)
        coeffs = np.fromiter((m.coeff for m in self.monomials), np.complex128, nm)
        for i, m in enumerate(self.monomials):
            alphas[i] = m.alpha
            betas[i] = m.beta
        return targets, alphas, betas, coeffs

    def evaluate(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=np.complex128)
        if a.shape[-1] != self.n:
            raise DimensionMismatchError(
                f"state dimension {a.shape[-1]} != field dimension {self.n}"
            )
        return self.evaluate_batch(a.reshape(1, -1))[0] if a.ndim == 1 else self.evaluate_batch(a)

    def evaluate_batch(self, a: np.ndarray) -> np.ndarray:
        """Evaluate on a (m, n) batch of states, returning (m, n)."""
        a = np.asarray(a, dtype=np.complex128)
        if a.shape[-1] != self.n:
            raise DimensionMismatchError(
                f"state dimension {a.shape[-1]} != field dimension {self.n}"
            )
        out = np.zeros_like(a)
        if not self.monomials:
            return out
        conj = np.conj(a)
        maxdeg = self.degree
        # cache small integer powers per coordinate
        pow_a = [None] * (maxdeg + 1)
        pow_c = [None] * (maxdeg + 1)
        pow_a[0] = np.ones_like(a)
        pow_c[0] = pow_a[0]
        for e in range(1, maxdeg + 1):
            pow_a[e] = pow_a[e - 1] * a
            pow_c[e] = pow_c[e - 1] * conj
        for m in self.monomials:
            term = np.full(a.shape[:-1], m.coeff, dtype=np.complex128)
            for k, e in enumerate(m.alpha):
                if e:
                    term = term * pow_a[e][..., k]
            for k, e in enumerate(m.beta):
                if e:
                    term = term * pow_c[e][..., k]
            out[..., m.target] += term
        return out

    def __add__(self, other: "PolynomialVectorField") -> "PolynomialVectorField":
        if self.n != other.n:
            raise DimensionMismatchError("cannot add fields of different dimension")
        return PolynomialVectorField(self.n, self.monomials + other.monomials)

    def scale(self, c: complex) -> "PolynomialVectorField":
        return PolynomialVectorField(
            self.n,
            tuple(replace(m, coeff=m.coeff * c) for m in self.monomials),
        )

    @staticmethod
    def identity(n: int) -> "PolynomialVectorField":
        """The field P(a) = a."""
        mono = [
            Monomial(j, tuple(int(k == j) for k in range(n)), (0,) * n, 1.0)
            for j in range(n)
        ]
        return PolynomialVectorField(n, mono)

    @staticmethod
    def linear_damping(n: int, rate: float = 1.0) -> "PolynomialVectorField":
        """The coercive field P(a) = -rate * a."""
        return PolynomialVectorField.identity(n).scale(-rate)


class OpaqueField:
    """A vector field given only by an evaluation routine.

    The routine must accept a (m, n) complex batch and return a (m, n)
    batch. Growth metadata is declared, not inferred; it is spot-checked
    on a fixed random sample like the polynomial case. Only the numeric
    averaging routes apply to opaque fields.
    """

    def __init__(self, fn, n: int, growth_order: int, growth_constant: float):
        self.fn = fn
        self.n = int(n)
        self.growth_order = int(growth_order)
        self.growth_constant = float(growth_constant)
        if self.n < 1 or self.growth_order < 0 or self.growth_constant <= 0:
            raise ValueError("invalid opaque field metadata")
        self._check_growth_on_sample()

    def _check_growth_on_sample(self):
        rng = np.random.default_rng(0x5EED)
        pts = rng.normal(size=(1000, self.n)) + 1j * rng.normal(size=(1000, self.n))
        pts *= rng.uniform(0.1, 3.0, size=(1000, 1))
        vals = np.linalg.norm(self.evaluate_batch(pts), axis=1)
        bound = self.growth_constant * (1.0 + np.linalg.norm(pts, axis=1)) ** self.growth_order
        if np.any(vals > bound * (1.0 + 1e-9)):
            raise ValueError("declared growth bound violated on verification sample")

    def evaluate(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=np.complex128)
        if a.ndim == 1:
            return self.evaluate_batch(a.reshape(1, -1))[0]
        return self.evaluate_batch(a)

    def evaluate_batch(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=np.complex128)
        if a.shape[-1] != self.n:
            raise DimensionMismatchError(
                f"state dimension {a.shape[-1]} != field dimension {self.n}"
            )
        out = np.asarray(self.fn(a), dtype=np.complex128)
        if out.shape != a.shape:
            raise ValueError("opaque field routine returned a wrong shape")
        return out


def evaluate(field_, a: np.ndarray) -> np.ndarray:
    """Evaluate a polynomial or opaque field at a state (or batch)."""
    return field_.evaluate(a)


def pushforward(field_, freqs: FrequencySpectrum, t: float, a: np.ndarray) -> np.ndarray:
    """The rotated field Y(a; t) = Phi_{t Lambda} P(Phi_{-t Lambda} a)."""
    lam = freqs.lambdas
    if lam.size != field_.n:
        raise DimensionMismatchError("frequency vector and field dimension differ")
    w = t * lam
    return rotate(w, field_.evaluate(rotate(-w, a)))


def _conjugated_values(field_, freqs, points, ts):
    """Y(points; t) for all t in ts: shape (len(ts), m, n)."""
    lam = freqs.lambdas
    phases = np.exp(1j * np.outer(ts, lam))  # (q, n)
    rotated = np.conj(phases)[:, None, :] * points[None, :, :]  # Phi_{-t} a
    q, m = ts.size, points.shape[0]
    vals = field_.evaluate_batch(rotated.reshape(q * m, -1)).reshape(q, m, -1)
    return phases[:, None, :] * vals


def partial_average(
    field_,
    freqs: FrequencySpectrum,
    a: np.ndarray,
    t_prime: float,
    steps: int,
) -> np.ndarray:
    """Finite-horizon average (1/T') int_0^T' Y(a; t) dt, composite trapezoid.

    Args:
        field_: polynomial or opaque field.
        freqs: frequency vector.
        a: state (n,) or batch (m, n).
        t_prime: averaging horizon, > 0.
        steps: number of trapezoid panels, >= 16.
    """
    if t_prime <= 0:
        raise ValueError("averaging horizon must be positive")
    steps = int(steps)
    if steps < 16:
        raise ValueError("need at least 16 quadrature panels")
    a = np.asarray(a, dtype=np.complex128)
    single = a.ndim == 1
    points = a.reshape(1, -1) if single else a
    ts = np.linspace(0.0, t_prime, steps + 1)
    vals = _conjugated_values(field_, freqs, points, ts)
    out = np.trapezoid(vals, ts, axis=0) / t_prime
    return out[0] if single else out


@dataclass(frozen=True)
class AveragingResult:
    """Outcome of a horizon-doubling time average."""

    value: np.ndarray
    t_final: float
    iterations: int


def _doubling_average(integrand, value_shape, tol, max_frequency):
    """Shared limit loop: trapezoid accumulation over doubling horizons.

    ``integrand(ts)`` must return an array of shape (len(ts),) + value_shape.
    The step is fixed from ``max_frequency`` so panels stay proportional to
    the horizon; successive horizon doublings reuse all previous work.
    """
    omega = max(max_frequency, 1e-6)
    nodes0 = max(64, int(math.ceil(_AVERAGING_T0 * omega * 8.0 / (2.0 * math.pi))))
    h = _AVERAGING_T0 / nodes0

    total = np.zeros(value_shape, dtype=np.complex128)
    t_lo = 0.0
    f_lo = integrand(np.array([0.0]))[0]
    prev_avg = None
    t_hi = _AVERAGING_T0
    iterations = 0
    while t_hi <= _AVERAGING_T_MAX:
        iterations += 1
        n_new = int(round((t_hi - t_lo) / h))
        # accumulate int_{t_lo}^{t_hi} in node chunks
        seg = np.zeros(value_shape, dtype=np.complex128)
        done = 0
        f_last = f_lo
        while done < n_new:
            take = min(_NODE_CHUNK, n_new - done)
            ts = t_lo + h * (done + np.arange(1, take + 1))
            vals = integrand(ts)
            seg = seg + h * (vals.sum(axis=0) - 0.5 * vals[-1] + 0.5 * f_last)
            f_last = vals[-1]
            done += take
        total = total + seg
        f_lo, t_lo = f_last, t_hi
        avg = total / t_hi
        if prev_avg is not None and np.max(np.abs(avg - prev_avg)) < tol:
            return AveragingResult(avg, t_hi, iterations)
        prev_avg = avg
        t_hi *= 2.0
    raise ConvergenceError(
        f"time average did not settle below tol={tol} before horizon "
        f"{_AVERAGING_T_MAX:.0e}; the frequency vector likely has near-"
        "resonant small divisors"
    )


def _field_max_frequency(field_, freqs) -> float:
    lam_max = float(np.max(np.abs(freqs.lambdas)))
    deg = field_.degree if isinstance(field_, PolynomialVectorField) else field_.growth_order
    return lam_max * (deg + 2)


def average_numeric(
    field_,
    freqs: FrequencySpectrum,
    a: np.ndarray,
    tol: float,
) -> AveragingResult:
    """Numeric limit of the partial averages of Y(a; t).

    For a completely resonant spectrum the limit equals the average over
    one common period, evaluated by spectrally accurate periodic
    quadrature. Otherwise the horizon is doubled until two successive
    averages agree within ``tol`` in max norm.

    Returns:
        AveragingResult with the achieved horizon. ``value`` matches the
        shape of ``a`` (single state or batch).
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    a = np.asarray(a, dtype=np.complex128)
    single = a.ndim == 1
    points = a.reshape(1, -1) if single else a

    if freqs.resonance_class == COMPLETELY_RESONANT:
        deg = field_.degree if isinstance(field_, PolynomialVectorField) else 3
        steps = 256 * max(1, deg)
        val = partial_average(field_, freqs, points, freqs.period, steps)
        return AveragingResult(val[0] if single else val, freqs.period, 1)

    def integrand(ts):
        return _conjugated_values(field_, freqs, points, ts)

    res = _doubling_average(
        integrand, points.shape, tol, _field_max_frequency(field_, freqs)
    )
    value = res.value[0] if single else res.value
    return AveragingResult(value, res.t_final, res.iterations)


def resonant_average_symbolic(
    poly: PolynomialVectorField, freqs: FrequencySpectrum
) -> PolynomialVectorField:
    """Project onto the resonant monomials Lambda.(alpha - beta) = lambda_j.

    The growth metadata is inherited unchanged: averaging cannot increase
    the polynomial growth constant.
    """
    lam = freqs.lambdas
    if lam.size != poly.n:
        raise DimensionMismatchError("frequency vector and field dimension differ")
    kept = []
    for m in poly.monomials:
        divisor = float(
            np.dot(lam, np.array(m.alpha) - np.array(m.beta)) - lam[m.target]
        )
        if abs(divisor) <= RESONANCE_TOL:
            kept.append(m)
    return PolynomialVectorField(
        poly.n,
        tuple(kept),
        growth_order=poly.growth_order,
        growth_constant=poly.growth_constant,
    )


def _lattice_points(n: int, nodes: int) -> np.ndarray:
    """Rank-1 Korobov lattice on the torus [0, 2*pi)^n."""
    nodes = int(nodes)
    gen = np.ones(n, dtype=np.int64)
    for k in range(1, n):
        gen[k] = (gen[k - 1] * 1571) % nodes
    i = np.arange(nodes, dtype=np.int64)
    return (2.0 * math.pi) * ((i[:, None] * gen[None, :]) % nodes) / nodes


def torus_average(
    field_,
    freqs: FrequencySpectrum,
    a: np.ndarray,
    nodes: int = 4093,
) -> np.ndarray:
    """Average of (Phi_w)_* field over the full torus w in T^n.

    Valid only for non-resonant frequency vectors, where it coincides
    with the time average. Polynomial fields are averaged exactly (a
    monomial survives iff alpha - beta = e_target); opaque fields use a
    rank-1 lattice rule with ``nodes`` points.
    """
    if freqs.resonance_class != NON_RESONANT:
        raise ValueError("torus averaging requires a non-resonant frequency vector")
    a = np.asarray(a, dtype=np.complex128)
    if a.shape[-1] != field_.n:
        raise DimensionMismatchError("state and field dimension differ")
    if isinstance(field_, PolynomialVectorField):
        n = field_.n
        kept = [
            m
            for m in field_.monomials
            if all(
                m.alpha[k] - m.beta[k] == (1 if k == m.target else 0)
                for k in range(n)
            )
        ]
        return PolynomialVectorField(n, tuple(kept)).evaluate(a)
    single = a.ndim == 1
    points = a.reshape(1, -1) if single else a
    w = _lattice_points(field_.n, nodes)  # (q, n)
    phases = np.exp(1j * w)  # (q, n)
    rotated = np.conj(phases)[:, None, :] * points[None, :, :]
    q, m = w.shape[0], points.shape[0]
    vals = field_.evaluate_batch(rotated.reshape(q * m, -1)).reshape(q, m, -1)
    out = np.mean(phases[:, None, :] * vals, axis=0)
    return out[0] if single else out


def average_function(
    fn,
    freqs: FrequencySpectrum,
    a: np.ndarray,
    tol: float,
    growth_order: int = 2,
) -> complex:
    """Time average of a scalar observable along the rotation flow.

    ``fn`` must accept a (m, n) complex batch and return (m,) values.
    Uses the same horizon-doubling loop as :func:`average_numeric`; for a
    non-resonant spectrum the limit equals the average of ``fn`` in the
    angle variables.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    a = np.asarray(a, dtype=np.complex128)
    lam = freqs.lambdas
    if a.shape != lam.shape:
        raise DimensionMismatchError("state and frequency dimensions differ")

    if freqs.resonance_class == COMPLETELY_RESONANT:
        steps = 1024
        ts = np.linspace(0.0, freqs.period, steps + 1)
        states = np.exp(-1j * np.outer(ts, lam)) * a[None, :]
        vals = np.asarray(fn(states), dtype=np.complex128)
        return complex(np.trapezoid(vals, ts) / freqs.period)

    def integrand(ts):
        states = np.exp(-1j * np.outer(ts, lam)) * a[None, :]
        return np.asarray(fn(states), dtype=np.complex128)

    omega = float(np.max(np.abs(lam))) * (growth_order + 2)
    res = _doubling_average(integrand, (), tol, omega)
    return complex(res.value)


@dataclass(frozen=True)
class RadialPolynomial:
    """Scalar polynomial R(u_1, ..., u_n) in the squared moduli u_k = |a_k|^2."""

    n: int
    powers: np.ndarray  # (M, n) nonnegative ints
    coeffs: np.ndarray  # (M,) complex

    def __post_init__(self):
        object.__setattr__(self, "powers", np.asarray(self.powers, dtype=np.int32))
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=np.complex128))
        if self.powers.ndim != 2 or self.powers.shape[1] != self.n:
            raise DimensionMismatchError("powers must be (M, n)")
        if self.coeffs.shape != (self.powers.shape[0],):
            raise DimensionMismatchError("coeffs must match powers")

    def evaluate(self, u: np.ndarray) -> np.ndarray:
        """Evaluate at u = (|a_1|^2, ..., |a_n|^2); broadcasts over batches."""
        u = np.asarray(u, dtype=np.float64)
        if u.shape[-1] != self.n:
            raise DimensionMismatchError("argument dimension mismatch")
        if self.coeffs.size == 0:
            return np.zeros(u.shape[:-1], dtype=np.complex128)
        mono = np.prod(
            u[..., None, :] ** self.powers[None, :, :], axis=-1
        )  # (..., M)
        return mono @ self.coeffs

    def packed_real(self):
        """(powers, Re coeffs) for the action-SDE kernel drift 2 I Re R."""
        return self.powers, np.ascontiguousarray(self.coeffs.real)


def radial_decomposition(
    averaged: PolynomialVectorField, freqs: FrequencySpectrum
) -> list[RadialPolynomial]:
    """Factor a non-resonant average as <<P>>_j(a) = a_j R_j(|a_1|^2, ..).

    Every monomial of a correctly averaged field under a non-resonant
    spectrum satisfies alpha - beta = e_target, hence equals
    a_j * prod_k |a_k|^(2 beta_k). A monomial outside this form aborts
    loudly: it indicates the resonance class was misdeclared.
    """
    if freqs.resonance_class != NON_RESONANT:
        raise ValueError("radial decomposition requires a non-resonant spectrum")
    n = averaged.n
    out = []
    for j in range(n):
        powers, coeffs = [], []
        for m in averaged.monomials:
            if m.target != j:
                continue
            diff = tuple(m.alpha[k] - m.beta[k] for k in range(n))
            if diff != tuple(int(k == j) for k in range(n)):
                raise NonRadialMonomialError(
                    f"monomial alpha={m.alpha} beta={m.beta} on target {j + 1} "
                    "does not factor through a_j; was the spectrum really "
                    "non-resonant?"
                )
            powers.append(m.beta)
            coeffs.append(m.coeff)
        out.append(
            RadialPolynomial(
                n,
                np.asarray(powers, dtype=np.int32).reshape(len(powers), n),
                np.asarray(coeffs, dtype=np.complex128),
            )
        )
    return out
