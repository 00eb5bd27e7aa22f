"""Complex state space C^n = R^2n: rotations, action-angle maps, path norms.

The linear part of the systems handled by this package is diagonal in
complex coordinates, ``dz_k/dt = -i lambda_k z_k``, so states live in C^n
and the basic geometric operations are the diagonal rotation operators

    (Phi_w z)_k = exp(i w_k) z_k,   w in R^n,

which form a group (Phi_{w1} Phi_{w2} = Phi_{w1+w2}), are unitary for the
real inner product <z, z'> = Re sum z_k conj(z'_k), and preserve the
actions I_k = |z_k|^2 / 2.

States are plain ``complex128`` numpy arrays; the helpers here validate
them and convert between C^n and the interleaved real coordinates
(x_1, y_1, ..., x_n, y_n) with z_k = x_k + i y_k.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

from .errors import DimensionMismatchError, ResonanceWarning

COMPLETELY_RESONANT = "completely_resonant"
NON_RESONANT = "non_resonant"
GENERAL = "general"

_RESONANCE_CLASSES = (COMPLETELY_RESONANT, NON_RESONANT, GENERAL)

#: tolerance for "lambda_j / lambda is an integer" checks
_INTEGER_TOL = 1e-12
#: largest denominator tried when inferring a common base frequency
_MAX_DENOMINATOR = 10**6
#: integer-relation search bound for the non-resonance warning
_RELATION_BOUND = 20
_RELATION_TOL = 1e-9


def as_state(z, n: int | None = None) -> np.ndarray:
    """Validate and return a complex state vector.

    Args:
        z: array-like of complex entries.
        n: expected dimension, checked when given.

    Returns:
        A ``complex128`` array of shape (n,).

    Raises:
        DimensionMismatchError: wrong length.
        ValueError: empty or non-finite entries.
    """
    arr = np.asarray(z, dtype=np.complex128)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError("state must be a nonempty 1-d complex vector")
    if n is not None and arr.size != n:
        raise DimensionMismatchError(f"expected dimension {n}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("state contains non-finite entries")
    return arr


def to_real(z: np.ndarray) -> np.ndarray:
    """C^n -> R^2n, interleaved as (x_1, y_1, ..., x_n, y_n)."""
    z = np.asarray(z, dtype=np.complex128)
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],), dtype=np.float64)
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def to_complex(x: np.ndarray) -> np.ndarray:
    """R^2n -> C^n, inverse of :func:`to_real`."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] % 2:
        raise DimensionMismatchError("real vector length must be even")
    return x[..., 0::2] + 1j * x[..., 1::2]


def inner(x: np.ndarray, y: np.ndarray) -> float:
    """Real inner product on C^n viewed as R^2n: Re sum x_k conj(y_k)."""
    return float(np.real(np.sum(np.asarray(x) * np.conj(y), axis=-1)))


def rotate(w, z) -> np.ndarray:
    """Apply the rotation operator Phi_w: entry k becomes exp(i w_k) z_k.

    Broadcasts over leading axes of ``z`` so entire ensembles rotate in
    one call. Moduli are preserved exactly up to floating round-off.
    """
    w = np.asarray(w, dtype=np.float64)
    z = np.asarray(z, dtype=np.complex128)
    if w.shape[-1] != z.shape[-1]:
        raise DimensionMismatchError(
            f"rotation vector has dimension {w.shape[-1]}, state has {z.shape[-1]}"
        )
    return np.exp(1j * w) * z


def rotation_matrix_real(w) -> np.ndarray:
    """Phi_w as a real 2n x 2n block-diagonal rotation matrix.

    Block j is the 2x2 rotation by angle w_j acting on (x_j, y_j).
    Used by the decomplexified general-noise machinery.
    """
    w = np.asarray(w, dtype=np.float64)
    n = w.size
    out = np.zeros((2 * n, 2 * n))
    c, s = np.cos(w), np.sin(w)
    for j in range(n):
        out[2 * j, 2 * j] = c[j]
        out[2 * j, 2 * j + 1] = -s[j]
        out[2 * j + 1, 2 * j] = s[j]
        out[2 * j + 1, 2 * j + 1] = c[j]
    return out


def actions(z) -> np.ndarray:
    """Action coordinates I_k = |z_k|^2 / 2 (broadcasts over leading axes)."""
    z = np.asarray(z, dtype=np.complex128)
    return 0.5 * (z.real**2 + z.imag**2)


def angles(z) -> np.ndarray:
    """Angle coordinates arg z_k, reduced to [0, 2*pi); zero entries map to 0."""
    z = np.asarray(z, dtype=np.complex128)
    phi = np.mod(np.angle(z), 2.0 * np.pi)
    # mod can return 2*pi for angles within one ulp below zero
    return np.where(phi >= 2.0 * np.pi, 0.0, phi)


@dataclass(frozen=True)
class FrequencySpectrum:
    """The frequency vector of the unperturbed linear system.

    Attributes:
        lambdas: the n nonzero angular frequencies.
        resonance_class: one of ``completely_resonant``, ``non_resonant``,
            ``general``. The class is declared by the caller and verified
            as far as floating point allows (exact rational independence
            is undecidable numerically, so non-resonance is trusted; a
            warning is issued if a short integer relation nearly holds).
        base_frequency: for the completely resonant class, the positive
            frequency lambda with every lambda_j an integer multiple of
            it. Inferred by rational fit when not supplied.
        declared_by_user: marks the class as an external declaration.
    """

    lambdas: np.ndarray
    resonance_class: str = GENERAL
    base_frequency: float | None = None
    declared_by_user: bool = True

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=np.float64)
        object.__setattr__(self, "lambdas", lam)
        if lam.ndim != 1 or lam.size < 1:
            raise ValueError("frequency vector must be a nonempty 1-d array")
        if not np.all(np.isfinite(lam)):
            raise ValueError("frequencies must be finite")
        if np.any(lam == 0.0):
            raise ValueError("frequency must be nonzero")
        if self.resonance_class not in _RESONANCE_CLASSES:
            raise ValueError(f"unknown resonance class {self.resonance_class!r}")
        if self.resonance_class == COMPLETELY_RESONANT:
            base = self.base_frequency
            if base is None:
                base = _infer_base_frequency(lam)
                object.__setattr__(self, "base_frequency", base)
            if base <= 0:
                raise ValueError("base frequency must be positive")
            ratios = lam / base
            if np.max(np.abs(ratios - np.round(ratios))) > _INTEGER_TOL:
                raise ValueError(
                    "declared completely resonant but lambda_j / lambda is "
                    "not an integer within 1e-12"
                )
        elif self.resonance_class == NON_RESONANT:
            rel = _short_integer_relation(lam)
            if rel is not None:
                warnings.warn(
                    f"declared non-resonant but integer relation m={rel} gives "
                    f"|m . lambda| < {_RELATION_TOL}",
                    ResonanceWarning,
                    stacklevel=2,
                )

    @property
    def n(self) -> int:
        return self.lambdas.size

    @property
    def period(self) -> float:
        """Common period 2*pi / lambda of the completely resonant flow."""
        if self.resonance_class != COMPLETELY_RESONANT:
            raise ValueError("only completely resonant spectra have a period")
        return 2.0 * math.pi / self.base_frequency


def _infer_base_frequency(lam: np.ndarray) -> float:
    """Largest lambda > 0 with lambda_j / lambda integer, via rational fit."""
    ref = abs(float(lam[0]))
    denominators = []
    for lj in lam:
        frac = Fraction(float(lj) / ref).limit_denominator(_MAX_DENOMINATOR)
        if frac == 0:
            raise ValueError("cannot infer a base frequency from a zero ratio")
        denominators.append(frac.denominator)
    lcm = 1
    for d in denominators:
        lcm = lcm * d // math.gcd(lcm, d)
    return ref / lcm


def _short_integer_relation(lam: np.ndarray):
    """Search for m != 0, |m_j| <= 20, with |m . lambda| < 1e-9.

    Exhaustive for n <= 4; for larger n only relations supported on at
    most three coordinates are tried (the full box is astronomically
    large and short relations are the practically dangerous ones).
    """
    n = lam.size
    scale = np.max(np.abs(lam))
    tol = _RELATION_TOL * max(1.0, scale)
    rng = range(-_RELATION_BOUND, _RELATION_BOUND + 1)
    if n <= 4:
        coeffs = np.array(list(product(rng, repeat=n)), dtype=np.int64)
        vals = coeffs @ lam
        mask = (np.abs(vals) < tol) & np.any(coeffs != 0, axis=1)
        if np.any(mask):
            return tuple(int(c) for c in coeffs[np.argmax(mask)])
        return None
    idx_triples = [
        (i, j, k) for i in range(n) for j in range(i + 1, n) for k in range(j + 1, n)
    ]
    base = np.array(list(product(rng, repeat=3)), dtype=np.int64)
    base = base[np.any(base != 0, axis=1)]
    for (i, j, k) in idx_triples:
        vals = base[:, 0] * lam[i] + base[:, 1] * lam[j] + base[:, 2] * lam[k]
        hit = np.flatnonzero(np.abs(vals) < tol)
        if hit.size:
            m = [0] * n
            m[i], m[j], m[k] = (int(c) for c in base[hit[0]])
            return tuple(m)
    return None


@dataclass(frozen=True)
class SampledPath:
    """A path tau -> C^n sampled on a strictly increasing time grid.

    ``times[0]`` must be 0 and ``states`` has one row per sample.
    """

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        s = np.asarray(self.states, dtype=np.complex128)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", s)
        if t.ndim != 1 or s.ndim != 2 or t.size != s.shape[0]:
            raise ValueError("times and states must have matching lengths")
        if t.size < 1 or t[0] != 0.0:
            raise ValueError("time grid must start at 0")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing")

    @property
    def n(self) -> int:
        return self.states.shape[1]


def holder_norm(path: SampledPath, alpha: float) -> float:
    """Discrete Holder norm of a sampled path.

    Evaluates ``max over sample pairs |u(t') - u(t)| / (t' - t)^alpha``
    plus the sup norm, with the Euclidean norm on C^n. No interpolation
    is done between samples, so the value is a lower bound of the
    continuum Holder norm and it can only grow under refinement.

    Args:
        path: sampled path with at least two samples.
        alpha: Holder exponent in (0, 1].
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if path.times.size < 2:
        raise ValueError("holder_norm needs at least two samples")
    from . import kernels  # deferred: kernels imports are backend-selected

    semi = kernels.holder_seminorm(
        path.times, path.states[np.newaxis, :, :], float(alpha)
    )[0]
    sup = float(np.max(np.sqrt(np.sum(np.abs(path.states) ** 2, axis=1))))
    return float(semi) + sup


def holder_norms(times: np.ndarray, states: np.ndarray, alpha: float) -> np.ndarray:
    """Vectorized :func:`holder_norm` over a bundle of paths.

    Args:
        times: shared grid (K,), starting at 0.
        states: (m, K, n) complex path bundle.
        alpha: Holder exponent in (0, 1].

    Returns:
        (m,) array of discrete Holder norms.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    times = np.asarray(times, dtype=np.float64)
    states = np.asarray(states, dtype=np.complex128)
    if times.size < 2:
        raise ValueError("holder_norms needs at least two samples")
    from . import kernels

    semi = kernels.holder_seminorm(times, states, float(alpha))
    sup = np.max(np.sqrt(np.sum(np.abs(states) ** 2, axis=2)), axis=1)
    return semi + sup
