"""Metric-equipped operator algebra.

A quasi-Hermitian Hamiltonian satisfies ``H^dag = eta H eta^{-1}`` for a
Hermitian positive-definite metric ``eta``.  This module provides the adjoint
and trace of the metric inner-product space, verification of the
quasi-Hermiticity condition, the biorthogonal eigendecomposition (right
vectors ``|Psi_n>``, left rows ``<Phi_n|`` with ``<Phi_m|Psi_n> = delta_mn``),
matrix functions in that basis, and the principal Hermitian square root of
the metric.

Conventions
-----------
* Left vectors are fixed by the gauge ``<Phi_n| = (eta |Psi_n>)^dag``, which
  makes the right vectors orthonormal under the physical inner product.
* Each right vector's first nonzero component is made real positive, so
  decompositions are deterministic.
* Energies are sorted in descending order (index 0 = highest level).
* The trace of the physical Hilbert space is the biorthogonal trace
  ``sum_n <Phi_n|A|Psi_n>``.  Because ``sum_n |Psi_n><Phi_n| = 1`` this equals
  the ordinary matrix trace for every compatible biorthogonal system; the
  metric-weighted expression ``Tr(eta A)`` would double-count the metric
  (the right basis is eta-orthonormal, not Dirac-orthonormal).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegenerateSpectrumError,
    DimensionError,
    DomainError,
    NotPositiveDefiniteError,
    NotQuasiHermitianError,
)

#: construction tolerances (relative, Frobenius norm)
METRIC_TOL = 1e-12
BIORTHO_TOL = 1e-10
QH_RESIDUAL_TOL = 1e-8
DEGENERACY_REL_GAP = 1e-8
EIGENVALUE_IMAG_TOL = 1e-8

PHASE_CONVENTIONS = ("first-positive", "last-positive")


def as_square_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return a square complex matrix with finite entries."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a.view(float))):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def _norm(a) -> float:
    return float(np.linalg.norm(a))


@dataclass(frozen=True)
class MetricOperator:
    """Positive-definite Hermitian metric with cached square-root data.

    Attributes
    ----------
    eta : ndarray
        The metric itself.
    sqrt_s : ndarray
        Principal Hermitian root S with S = S^dag and S S = eta.
    inv_eta, inv_sqrt_s : ndarray
        Cached inverses of eta and S.
    """

    eta: np.ndarray
    sqrt_s: np.ndarray
    inv_eta: np.ndarray
    inv_sqrt_s: np.ndarray

    @property
    def dim(self) -> int:
        return self.eta.shape[0]

    @classmethod
    def from_matrix(cls, eta) -> "MetricOperator":
        eta = as_square_matrix(eta, "eta")
        w, v = _positive_eigh(eta)
        s = (v * np.sqrt(w)) @ v.conj().T
        inv_eta = (v * (1.0 / w)) @ v.conj().T
        inv_s = (v * (1.0 / np.sqrt(w))) @ v.conj().T
        m = cls(eta=eta, sqrt_s=s, inv_eta=inv_eta, inv_sqrt_s=inv_s)
        scale = _norm(eta)
        if _norm(s @ s - eta) > METRIC_TOL * scale:
            raise NotPositiveDefiniteError("square root construction lost accuracy")
        if _norm(eta @ inv_eta - np.eye(m.dim)) > METRIC_TOL * max(1.0, scale):
            raise NotPositiveDefiniteError("metric inverse construction lost accuracy")
        return m

    def __post_init__(self):
        object.__setattr__(self, "eta", np.asarray(self.eta, dtype=complex))


def _positive_eigh(eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian positive-definite matrix."""
    if _norm(eta - eta.conj().T) > METRIC_TOL * max(1.0, _norm(eta)):
        raise NotPositiveDefiniteError("metric must be Hermitian")
    w, v = np.linalg.eigh(eta)
    if w[0] <= 1e-12 * w[-1] or w[0] <= 0.0:
        raise NotPositiveDefiniteError(
            f"metric has a non-positive eigenvalue (min {w[0]:.3e}, max {w[-1]:.3e})"
        )
    return w, v


def metric_sqrt(eta) -> np.ndarray:
    """Principal Hermitian square root S of a positive-definite metric.

    S is Hermitian positive-definite and satisfies S S = eta to 1e-12
    (relative).  Raises NotPositiveDefiniteError otherwise.
    """
    eta = as_square_matrix(eta, "eta")
    w, v = _positive_eigh(eta)
    return (v * np.sqrt(w)) @ v.conj().T


def _check_dims(a: np.ndarray, m: MetricOperator):
    if a.shape[0] != m.dim:
        raise DimensionError(f"operand dim {a.shape[0]} != metric dim {m.dim}")


def eta_adjoint(a, m: MetricOperator) -> np.ndarray:
    """Adjoint with respect to the physical inner product: eta^{-1} a^dag eta."""
    a = as_square_matrix(a)
    _check_dims(a, m)
    return m.inv_eta @ a.conj().T @ m.eta


def eta_trace(a, m: MetricOperator) -> complex:
    """Trace of ``a`` in the metric inner-product space.

    Equals the biorthogonal trace ``sum_n <Phi_n|a|Psi_n>`` for any
    biorthogonal system compatible with the metric, hence the ordinary
    matrix trace (see module docstring).  The metric argument fixes the
    space and is used for dimension checking.
    """
    a = as_square_matrix(a)
    _check_dims(a, m)
    return complex(np.trace(a))


def verify_quasi_hermitian(h, m: MetricOperator) -> float:
    """Relative residual ||eta h - h^dag eta|| / ||eta h||.

    A value <= 1e-10 certifies quasi-Hermiticity; order-one values signal
    failure.
    """
    h = as_square_matrix(h, "h")
    _check_dims(h, m)
    num = _norm(m.eta @ h - h.conj().T @ m.eta)
    den = _norm(m.eta @ h)
    return num / den if den > 0.0 else num


@dataclass(frozen=True)
class BiorthogonalSystem:
    """Real energies with right vectors (columns) and left rows.

    ``left_vectors @ right_vectors = 1`` and
    ``right_vectors @ left_vectors = 1`` within 1e-10;
    ``left_vectors[n] = (eta @ right_vectors[:, n])^dag``.
    """

    energies: np.ndarray
    right_vectors: np.ndarray  # shape (N, N), column n = |Psi_n>
    left_vectors: np.ndarray   # shape (N, N), row n = <Phi_n|

    @property
    def dim(self) -> int:
        return self.energies.shape[0]

    def assemble(self, values: Sequence[float] | np.ndarray) -> np.ndarray:
        """sum_n values[n] |Psi_n><Phi_n|."""
        values = np.asarray(values, dtype=complex)
        if values.shape != self.energies.shape:
            raise DimensionError("one value per level required")
        return (self.right_vectors * values) @ self.left_vectors


def _fix_phase(v: np.ndarray, convention: str) -> np.ndarray:
    """Multiply by a unit phase so the first (or last) nonzero component is
    real positive."""
    idx = np.flatnonzero(np.abs(v) > 1e-12 * np.max(np.abs(v)))
    k = idx[0] if convention == "first-positive" else idx[-1]
    c = v[k]
    return v * (c.conjugate() / abs(c))


def biorthogonal_decompose(
    h, m: MetricOperator, phase_convention: str = "first-positive"
) -> BiorthogonalSystem:
    """Biorthogonal eigendecomposition of a quasi-Hermitian operator.

    Raises
    ------
    NotQuasiHermitianError
        If the quasi-Hermiticity residual exceeds 1e-8, or the spectrum has
        imaginary parts beyond 1e-8 * ||h|| (PT-broken regime).
    DegenerateSpectrumError
        If the minimal level spacing is below 1e-8 * ||h||.
    """
    h = as_square_matrix(h, "h")
    _check_dims(h, m)
    if phase_convention not in PHASE_CONVENTIONS:
        raise ValueError(f"unknown phase convention {phase_convention!r}")
    res = verify_quasi_hermitian(h, m)
    if res > QH_RESIDUAL_TOL:
        raise NotQuasiHermitianError(f"quasi-Hermiticity residual {res:.3e} > 1e-8")

    scale = max(_norm(h), 1e-300)
    energies, vecs = np.linalg.eig(h)
    if np.max(np.abs(energies.imag)) > EIGENVALUE_IMAG_TOL * scale:
        raise NotQuasiHermitianError(
            f"complex spectrum (max |Im E| = {np.max(np.abs(energies.imag)):.3e})"
        )
    energies = energies.real
    order = np.argsort(-energies)
    energies = energies[order]
    vecs = vecs[:, order]
    gaps = -np.diff(energies)
    if h.shape[0] > 1 and np.min(gaps) <= DEGENERACY_REL_GAP * scale:
        raise DegenerateSpectrumError(
            f"minimal gap {np.min(gaps):.3e} below threshold for ||h|| = {scale:.3e}"
        )

    n = h.shape[0]
    right = np.empty((n, n), dtype=complex)
    for k in range(n):
        v = vecs[:, k]
        norm2 = np.real(v.conj() @ m.eta @ v)
        v = v / np.sqrt(norm2)
        right[:, k] = _fix_phase(v, phase_convention)
    left = (m.eta @ right).conj().T

    sys = BiorthogonalSystem(energies=energies, right_vectors=right, left_vectors=left)
    _validate_system(sys, h)
    return sys


def _validate_system(sys: BiorthogonalSystem, h: np.ndarray):
    n = sys.dim
    eye = np.eye(n)
    if _norm(sys.left_vectors @ sys.right_vectors - eye) > BIORTHO_TOL:
        raise NotQuasiHermitianError("biorthonormality residual above 1e-10")
    if _norm(sys.right_vectors @ sys.left_vectors - eye) > BIORTHO_TOL:
        raise NotQuasiHermitianError("completeness residual above 1e-10")
    if _norm(sys.assemble(sys.energies) - h) > BIORTHO_TOL * max(1.0, _norm(h)):
        raise NotQuasiHermitianError("spectral reconstruction residual above 1e-10")


def matrix_function(sys: BiorthogonalSystem, f: Callable[[float], float]) -> np.ndarray:
    """sum_n f(E_n) |Psi_n><Phi_n| for a scalar function of the energies.

    Raises DomainError when f is undefined (raises, or returns a
    non-finite value) at an eigenvalue.
    """
    values = np.empty(sys.dim, dtype=complex)
    for k, e in enumerate(sys.energies):
        try:
            with np.errstate(invalid="raise", divide="raise"):
                values[k] = f(float(e))
        except (ValueError, ZeroDivisionError, FloatingPointError) as exc:
            raise DomainError(f"f undefined at eigenvalue {e!r}: {exc}") from exc
        if not np.isfinite(values[k]):
            raise DomainError(f"f({e!r}) is not finite")
    return sys.assemble(values)


# ---------------------------------------------------------------------------
# random instances (used by the property suites and the CLI check mode)
# ---------------------------------------------------------------------------

def random_metric(n: int, rng: np.random.Generator, spread: float = 4.0) -> MetricOperator:
    """Random positive-definite metric with condition number <= spread**2."""
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, _ = np.linalg.qr(g)
    w = np.exp(rng.uniform(-np.log(spread), np.log(spread), size=n))
    return MetricOperator.from_matrix((q * w) @ q.conj().T)


def random_quasi_hermitian(
    n: int, rng: np.random.Generator, min_gap: float = 0.05
) -> tuple[np.ndarray, MetricOperator]:
    """Random (H, metric) pair with a real, well-separated spectrum.

    H = S^{-1} h S for a random Hermitian h, hence exactly quasi-Hermitian
    with respect to eta = S^dag S.
    """
    m = random_metric(n, rng)
    while True:
        h0 = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        h0 = (h0 + h0.conj().T) / 2
        w = np.linalg.eigvalsh(h0)
        if n == 1 or np.min(np.diff(w)) > min_gap:
            break
    return m.inv_sqrt_s @ h0 @ m.sqrt_s, m


def random_eta_unitary(
    m: MetricOperator, rng: np.random.Generator, scale: float = 1.0
) -> np.ndarray:
    """Random quasi-unitary U with U^ddag U = 1 (exponential of a random
    anti-eta-self-adjoint generator)."""
    from scipy.linalg import expm

    n = m.dim
    b = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    b *= scale / max(_norm(b), 1e-300)
    a = (b - eta_adjoint(b, m)) / 2
    return expm(a)
