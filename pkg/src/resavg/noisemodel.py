"""Dispersion matrices, the effective diffusion and its principal root.

The oscillatory noise Phi_{tau/eps * Lambda} Psi d beta^c has the time-
averaged diffusion

    A_kj = sum_l Psi_kl conj(Psi_jl)   if lambda_k = lambda_j, else 0,

a Hermitian PSD matrix whose principal square root B (Hermitian PSD,
B^2 = A) is the constant dispersion of the effective equation. Complex
Wiener conventions follow beta^c = beta^+ + i beta^-, so E |beta^c(t)|^2
= 2t; every covariance matrix below is the plain second moment E z z^*
in that convention, and :func:`sample_complex_gaussian` documents its own
factor of two explicitly to keep the bookkeeping visible.

Eigenwork is done by a self-contained cyclic Jacobi sweep: dimensions
are small (n <= 16 in practice) and the dual numeric route keeps the
package's square roots independently testable against generic LAPACK.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .complexcore import FrequencySpectrum, rotation_matrix_real
from .errors import ConvergenceError, DimensionMismatchError
from .fields import RESONANCE_TOL, _doubling_average

logger = logging.getLogger(__name__)

#: Hermitian symmetry tolerance (max norm)
HERMITIAN_TOL = 1e-10
#: eigenvalues above this are clamped to zero; below it is an error
EIGENVALUE_CLAMP = -1e-10
#: off-diagonal mass target for the Jacobi sweep
_JACOBI_TOL = 1e-13
_JACOBI_MAX_SWEEPS = 64

CONSTANT = "constant"
NONDEGENERATE = "nondegenerate"
C2_SMOOTH = "c2_smooth"
_SMOOTHNESS_CLASSES = (CONSTANT, NONDEGENERATE, C2_SMOOTH)


@dataclass(frozen=True)
class DispersionSpec:
    """Constant complex dispersion matrix Psi (n x n1, possibly degenerate)."""

    psi: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.psi, dtype=np.complex128)
        object.__setattr__(self, "psi", p)
        if p.ndim != 2:
            raise ValueError("dispersion must be a matrix")
        if not np.all(np.isfinite(p)):
            raise ValueError("dispersion entries must be finite")

    @property
    def n(self) -> int:
        return self.psi.shape[0]

    @property
    def n_noise(self) -> int:
        return self.psi.shape[1]


class StateDependentDispersion:
    """State-dependent real dispersion v -> B(v), a 2n x n2 matrix.

    ``fn`` must accept a (m, 2n) real batch and return (m, 2n, n2).
    The declared smoothness class mirrors the three tractable options
    (constant, uniformly nondegenerate, C^2-smooth); it is recorded, not
    verified, except that ``constant`` is spot-checked.
    """

    def __init__(self, fn, n: int, n_noise: int, smoothness_class: str,
                 nondegeneracy: float | None = None):
        if smoothness_class not in _SMOOTHNESS_CLASSES:
            raise ValueError(f"unknown smoothness class {smoothness_class!r}")
        self.fn = fn
        self.n = int(n)
        self.n_noise = int(n_noise)
        self.smoothness_class = smoothness_class
        self.nondegeneracy = nondegeneracy
        if smoothness_class == NONDEGENERATE and not (nondegeneracy and nondegeneracy > 0):
            raise ValueError("nondegenerate class needs a positive lower bound")
        if smoothness_class == CONSTANT:
            probe = self.evaluate_batch(np.zeros((2, 2 * self.n)))
            alt = self.evaluate_batch(np.ones((1, 2 * self.n)))
            if not np.allclose(probe[0], alt[0]):
                raise ValueError("declared constant but evaluation varies with v")

    def evaluate_batch(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape[-1] != 2 * self.n:
            raise DimensionMismatchError("state dimension mismatch (expect 2n real)")
        out = np.asarray(self.fn(v), dtype=np.float64)
        if out.shape != v.shape[:-1] + (2 * self.n, self.n_noise):
            raise ValueError("dispersion routine returned a wrong shape")
        return out

    def evaluate(self, v: np.ndarray) -> np.ndarray:
        return self.evaluate_batch(np.asarray(v, dtype=np.float64).reshape(1, -1))[0]

    @staticmethod
    def constant(matrix: np.ndarray) -> "StateDependentDispersion":
        matrix = np.asarray(matrix, dtype=np.float64)
        two_n, n2 = matrix.shape
        return StateDependentDispersion(
            lambda v: np.broadcast_to(matrix, v.shape[:-1] + matrix.shape).copy(),
            two_n // 2, n2, CONSTANT,
        )


def _frequency_clusters(lam: np.ndarray, tol: float = RESONANCE_TOL):
    """Group indices whose frequencies agree within tol.

    Clustering (sort, split at gaps > tol) rather than a pairwise mask
    keeps the equality relation transitive, which is what makes the
    masked diffusion matrix block-diagonal and hence PSD.
    """
    order = np.argsort(lam)
    clusters = [[order[0]]]
    for idx in order[1:]:
        if lam[idx] - lam[clusters[-1][-1]] <= tol:
            clusters[-1].append(idx)
        else:
            clusters.append([idx])
    return clusters


def effective_diffusion(psi: DispersionSpec, freqs: FrequencySpectrum) -> np.ndarray:
    """The averaged diffusion matrix: Psi Psi^* with off-cluster entries zeroed.

    Entry (k, j) survives iff lambda_k = lambda_j (within the resonance
    tolerance); the result is Hermitian PSD by construction.
    """
    lam = freqs.lambdas
    if psi.n != lam.size:
        raise DimensionMismatchError("dispersion rows must match frequency count")
    gram = psi.psi @ psi.psi.conj().T
    out = np.zeros_like(gram)
    for cluster in _frequency_clusters(lam):
        ix = np.ix_(cluster, cluster)
        out[ix] = gram[ix]
    return out


def eigh_hermitian(a: np.ndarray):
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi sweeps.

    Returns (eigenvalues ascending, unitary eigenvector matrix V) with
    a = V diag(w) V^*. Off-diagonal mass is driven below 1e-13 relative
    to the Frobenius norm, at most 64 sweeps.
    """
    a = np.asarray(a, dtype=np.complex128)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if np.max(np.abs(a - a.conj().T), initial=0.0) > HERMITIAN_TOL * max(
        1.0, float(np.max(np.abs(a), initial=0.0))
    ):
        raise ValueError("matrix is not Hermitian within tolerance")
    w = a.copy()
    v = np.eye(n, dtype=np.complex128)
    scale = max(float(np.linalg.norm(a)), 1e-300)
    for _ in range(_JACOBI_MAX_SWEEPS):
        off = np.sqrt(max(np.sum(np.abs(w) ** 2) - np.sum(np.abs(np.diag(w)) ** 2), 0.0))
        if off <= _JACOBI_TOL * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                wpq = w[p, q]
                if abs(wpq) == 0.0:
                    continue
                phi = np.angle(wpq)
                app, aqq = w[p, p].real, w[q, q].real
                theta = 0.5 * np.arctan2(2.0 * abs(wpq), app - aqq)
                c, s = np.cos(theta), np.sin(theta)
                g = np.eye(n, dtype=np.complex128)
                g[p, p] = c
                g[p, q] = -s * np.exp(1j * phi)
                g[q, p] = s * np.exp(-1j * phi)
                g[q, q] = c
                # update only the touched rows/columns
                w[:, [p, q]] = w @ g[:, [p, q]]
                w[[p, q], :] = g[:, [p, q]].conj().T @ w
                v[:, [p, q]] = v @ g[:, [p, q]]
    eigvals = np.diag(w).real.copy()
    order = np.argsort(eigvals)
    return eigvals[order], v[:, order]


def hermitian_sqrt(a: np.ndarray) -> np.ndarray:
    """Principal square root of a Hermitian PSD matrix.

    Eigenvalues in [-1e-10, 0) are treated as round-off and clamped to
    zero; anything more negative is a modeling error and raises.
    """
    eigvals, vecs = eigh_hermitian(a)
    scale = max(float(np.max(np.abs(eigvals), initial=0.0)), 1.0)
    if eigvals[0] < EIGENVALUE_CLAMP * scale:
        raise ValueError(
            f"matrix has eigenvalue {eigvals[0]:.3e}, below the round-off clamp"
        )
    root = np.sqrt(np.clip(eigvals, 0.0, None))
    b = (vecs * root) @ vecs.conj().T
    return 0.5 * (b + b.conj().T)


def symmetric_sqrt(a: np.ndarray) -> np.ndarray:
    """Principal square root of a real symmetric PSD matrix."""
    return hermitian_sqrt(np.asarray(a, dtype=np.float64)).real


@dataclass(frozen=True)
class EffectiveModel:
    """Averaged drift plus effective dispersion, the data of the limit SDE.

    Invariants checked at construction: the diffusion is Hermitian with
    eigenvalues above the round-off clamp and B B^* reproduces it to
    1e-10 in max norm.
    """

    drift: object  # PolynomialVectorField or OpaqueField
    diffusion_a: np.ndarray
    dispersion_b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.diffusion_a, dtype=np.complex128)
        b = np.asarray(self.dispersion_b, dtype=np.complex128)
        object.__setattr__(self, "diffusion_a", a)
        object.__setattr__(self, "dispersion_b", b)
        if np.max(np.abs(a - a.conj().T), initial=0.0) > HERMITIAN_TOL:
            raise ValueError("effective diffusion must be Hermitian")
        resid = np.max(np.abs(b @ b.conj().T - a), initial=0.0)
        if resid > HERMITIAN_TOL:
            raise ValueError(f"dispersion root residual {resid:.2e} exceeds 1e-10")

    @property
    def n(self) -> int:
        return self.diffusion_a.shape[0]


def build_effective_model(drift_avg, psi: DispersionSpec,
                          freqs: FrequencySpectrum) -> EffectiveModel:
    """Assemble the effective model from an averaged drift and Psi."""
    a = effective_diffusion(psi, freqs)
    return EffectiveModel(drift_avg, a, hermitian_sqrt(a))


def noise_increment_covariance(
    psi: DispersionSpec,
    freqs: FrequencySpectrum,
    epsilon: float,
    tau: float,
    h: float,
) -> np.ndarray:
    """Exact covariance E zeta zeta^* of the oscillatory noise increment.

    The rotated noise integral over [tau, tau + h] is Gaussian with

        C_kj = 2 (sum_l Psi_kl conj(Psi_jl)) int_tau^{tau+h} e^{i (lambda_k
               - lambda_j) s / eps} ds,

    evaluated in closed form; the pseudo-covariance E zeta zeta^T is
    identically zero and is not represented. The factor 2 is the complex
    Wiener convention E |beta^c(t)|^2 = 2t.
    """
    if epsilon <= 0 or h <= 0:
        raise ValueError("epsilon and h must be positive")
    lam = freqs.lambdas
    if psi.n != lam.size:
        raise DimensionMismatchError("dispersion rows must match frequency count")
    gram = psi.psi @ psi.psi.conj().T
    delta = lam[:, None] - lam[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        osc = (
            (np.exp(1j * delta * (tau + h) / epsilon) - np.exp(1j * delta * tau / epsilon))
            * epsilon
            / (1j * delta)
        )
    integral = np.where(delta == 0.0, h, osc)
    c = 2.0 * gram * integral
    return 0.5 * (c + c.conj().T)


def sample_complex_gaussian(c: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw sqrt(C) xi with xi a standard complex Gaussian vector.

    Convention: each xi_k has independent N(0, 1) real and imaginary
    parts, so E xi_k conj(xi_k) = 2 and E xi xi^T = 0. The returned
    vector therefore has E z z^* = 2 C; callers that need a draw whose
    second moment is C itself (for example the exact noise increments of
    the interaction integrator) must pass C / 2.
    """
    root = hermitian_sqrt(np.asarray(c, dtype=np.complex128))
    n = root.shape[0]
    xi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return root @ xi


def averaged_state_diffusion(
    disp: StateDependentDispersion,
    freqs: FrequencySpectrum,
    a: np.ndarray,
    tol: float,
) -> np.ndarray:
    """Time-averaged real diffusion A0(a) for a state-dependent dispersion.

    Averages Phi_{t Lambda} B(Phi_{-t Lambda} a) (Phi_{t Lambda}
    B(Phi_{-t Lambda} a))^T over t with the same horizon-doubling loop as
    the drift averaging, the rotations realized as real 2x2 blocks.
    Raises ConvergenceError on small divisors.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    a = np.asarray(a, dtype=np.float64)
    two_n = 2 * disp.n
    if a.shape != (two_n,):
        raise DimensionMismatchError("state must be the real 2n vector")
    lam = freqs.lambdas

    def integrand(ts):
        out = np.empty((ts.size, two_n, two_n))
        for i, t in enumerate(ts):
            rot = rotation_matrix_real(t * lam)
            b = rot @ disp.evaluate(rot.T @ a)
            out[i] = b @ b.T
        return out

    omega = 2.0 * float(np.max(np.abs(lam)))
    res = _doubling_average(integrand, (two_n, two_n), tol, omega)
    a0 = res.value.real
    return 0.5 * (a0 + a0.T)


def state_dispersion_sqrt(a0_evaluator, a: np.ndarray,
                          probe_scale: float = 1e-4) -> np.ndarray:
    """Principal root B0(a) of a pointwise averaged diffusion.

    ``a0_evaluator`` maps a real 2n state to the symmetric PSD matrix
    A0(a). The empirical local Lipschitz constant of B0 is estimated on
    a probe pair around ``a`` and logged; degenerate dispersions outside
    the tractable smoothness classes have no Lipschitz guarantee, so the
    log line is the only diagnostic offered.
    """
    a = np.asarray(a, dtype=np.float64)
    b0 = symmetric_sqrt(a0_evaluator(a))
    step = probe_scale * (1.0 + float(np.linalg.norm(a)))
    probe = a.copy()
    probe[0] += step
    b_probe = symmetric_sqrt(a0_evaluator(probe))
    lip = float(np.linalg.norm(b_probe - b0) / step)
    logger.info("state_dispersion_sqrt: empirical local Lipschitz ~ %.3e", lip)
    return b0
