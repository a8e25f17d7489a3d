"""Similarity map to the Hermitian representation, the metric-induced
correction to the Uhlmann connection, and vectorized purifications.

With S the principal root of the metric, h = S H S^{-1} is Hermitian and
rho_h = S rho S^{-1} is a standard density matrix.  The Uhlmann connections
of the two representations differ by a term driven by dS S^{-1}:

    A_h = S A_eta S^{-1} - A_S,
    A_S = sum_mn (sqrt(p_m)-sqrt(p_n))^2 / (p_m+p_n) |m><m| dS S^{-1} |n><n|,

which vanishes whenever the metric is parameter-independent.

A purification W = sqrt(rho) U is vectorized row-major (system index major):
the ancilla factor carries the components of the row <Phi_n| U unconjugated.
Under the doubled-space weight eta (x) transpose(eta^{-1}) the vector-side
overlap equals the operator-side Hilbert-Schmidt product Tr(W1^ddag W2)
exactly, which for purifications of one state is Tr(rho U2 U1^ddag).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionError,
    GaugeError,
    MetricMismatchError,
    NotPositiveDefiniteError,
    NotQuasiHermitianError,
)
from .qh_core import MetricOperator, as_square_matrix, eta_adjoint
from .thermal import GibbsState

GAUGE_TOL = 1e-8
NORM_TOL = 1e-10


def similarity_map(m: MetricOperator) -> np.ndarray:
    """The Hermitian similarity operator S = eta^{1/2} (so eta = S^dag S)."""
    return m.sqrt_s.copy()


def to_hermitian(h, m: MetricOperator) -> np.ndarray:
    """S H S^{-1}; Hermitian to 1e-10 when H is quasi-Hermitian w.r.t. eta."""
    h = as_square_matrix(h, "h")
    if h.shape[0] != m.dim:
        raise DimensionError("operator dimension does not match the metric")
    out = m.sqrt_s @ h @ m.inv_sqrt_s
    if np.linalg.norm(out - out.conj().T) > 1e-10 * max(1.0, float(np.linalg.norm(out))):
        raise NotQuasiHermitianError("similarity transform did not produce a Hermitian matrix")
    return out


def _herm_eig(rho_h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rho_h = as_square_matrix(rho_h, "rho_h")
    if np.linalg.norm(rho_h - rho_h.conj().T) > 1e-10 * max(1.0, float(np.linalg.norm(rho_h))):
        raise NotPositiveDefiniteError("rho_h must be Hermitian")
    w, v = np.linalg.eigh(rho_h)
    if np.any(w < -1e-12):
        raise NotPositiveDefiniteError("rho_h has a negative eigenvalue")
    return w, v


def hermitian_connection(rho_h, dsr_h) -> np.ndarray:
    """Standard Uhlmann connection of a Hermitian density-matrix path sample.

    Solves rho_h A + A rho_h = -[dsr_h, sqrt(rho_h)] in the orthonormal
    eigenbasis; the identity-metric specialization of the quasi-Hermitian
    solve.  The result is anti-Hermitian.
    """
    from .uhlmann import _connection_stack

    w, v = _herm_eig(rho_h)
    dsr_h = as_square_matrix(dsr_h, "dsr_h")
    if dsr_h.shape != rho_h.shape:
        raise DimensionError("dsr_h shape does not match rho_h")
    srho = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
    return _connection_stack(
        dsr_h[None], srho[None], w[None], v[None], v.conj().T[None]
    )[0]


def correction_term(rho_h, k_matrix) -> np.ndarray:
    """Metric-variation term A_S built from K = dS S^{-1} in the eigenbasis
    of rho_h.  Vanishes when K = 0 and when all populations coincide; its
    diagonal vanishes identically."""
    w, v = _herm_eig(rho_h)
    k_matrix = as_square_matrix(k_matrix, "k_matrix")
    if k_matrix.shape != rho_h.shape:
        raise DimensionError("k_matrix shape does not match rho_h")
    den = w[:, None] + w[None, :]
    num = (np.sqrt(np.clip(w, 0.0, None))[:, None] - np.sqrt(np.clip(w, 0.0, None))[None, :]) ** 2
    coef = np.divide(num, den, out=np.zeros_like(den), where=den > 1e-300)
    kb = v.conj().T @ k_matrix @ v
    return v @ (coef * kb) @ v.conj().T


# ---------------------------------------------------------------------------
# purifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PurifiedState:
    """Vectorized purification |W> of a Gibbs state.

    ``vector`` holds W = sqrt(rho) U flattened row-major (system index
    major); ``operator`` is the same data in matrix form.  The metric-
    weighted norm <W|W> equals Tr_eta(rho) = 1.
    """

    vector: np.ndarray
    operator: np.ndarray
    source_state: GibbsState
    gauge: np.ndarray

    @property
    def metric(self) -> MetricOperator:
        return self.source_state.metric

    @property
    def dim(self) -> int:
        return self.operator.shape[0]


def purify(state: GibbsState, gauge) -> PurifiedState:
    """W = sqrt(rho) U for a quasi-unitary gauge U.

    Raises GaugeError unless ||U^ddag U - 1|| <= 1e-8.
    """
    gauge = as_square_matrix(gauge, "gauge")
    if gauge.shape[0] != state.dim:
        raise DimensionError("gauge dimension does not match the state")
    defect = np.linalg.norm(eta_adjoint(gauge, state.metric) @ gauge - np.eye(state.dim))
    if defect > GAUGE_TOL:
        raise GaugeError(f"gauge is not quasi-unitary: ||U^ddag U - 1|| = {defect:.3e}")
    w_op = state.sqrt_rho @ gauge
    ps = PurifiedState(vector=w_op.reshape(-1), operator=w_op,
                       source_state=state, gauge=gauge)
    norm = purified_overlap(ps, ps)
    if abs(norm - 1.0) > NORM_TOL:
        raise GaugeError(f"purification norm {norm!r} deviates from 1")
    return ps


def _check_compatible(w1: PurifiedState, w2: PurifiedState):
    if w1.dim != w2.dim:
        raise DimensionError("purifications have different dimensions")
    scale = max(1.0, float(np.linalg.norm(w1.metric.eta)))
    if np.linalg.norm(w1.metric.eta - w2.metric.eta) > 1e-10 * scale:
        raise MetricMismatchError("purifications carry different metrics")


def purified_overlap(w1: PurifiedState, w2: PurifiedState) -> complex:
    """Vector-side overlap <W1|W2> under the weight eta (x) transpose(eta^{-1}).

    Computed as the explicit doubled-space contraction (without
    materializing the Kronecker product); equals the operator-side
    Hilbert-Schmidt product Tr(W1^ddag W2) = Tr(rho U2 U1^ddag).
    """
    _check_compatible(w1, w2)
    m = w1.metric
    a = w1.operator
    b = w2.operator
    return complex(np.einsum("ij,ik,kl,lj->", a.conj(), m.eta, b, m.inv_eta))


def overlap_operator_side(w1: PurifiedState, w2: PurifiedState) -> complex:
    """Operator-side Hilbert-Schmidt product Tr(W1^ddag W2)."""
    _check_compatible(w1, w2)
    return complex(np.trace(eta_adjoint(w1.operator, w1.metric) @ w2.operator))


def interferometer_readout(w0: PurifiedState, wt: PurifiedState) -> tuple[float, float]:
    """Ideal control-qubit expectations (<sigma_x>, <sigma_y>) of the
    superposition (|0>|W0> + |1>|Wt>)/sqrt(2).

    Returns (Re G, Im G) for G = <W0|Wt>; with our basis convention
    <sigma_y> = +Im G, so arg G = arg(x + i y).
    """
    g = purified_overlap(w0, wt)
    return float(g.real), float(g.imag)
