"""Uhlmann connection, holonomy and mixed-state geometric phase.

The connection at a point solves the Sylvester equation

    rho A + A rho = -[d sqrt(rho), sqrt(rho)]

element-wise in the biorthogonal eigenbasis,

    A = - sum_ij |Psi_i> <Phi_i|[d sqrt(rho), sqrt(rho)]|Psi_j> / (p_i + p_j) <Phi_j|,

with d sqrt(rho) from fourth-order central differences.  The holonomy is the
ordered product of midpoint step propagators

    U(tau) = exp(A(l_{K-1}) dl) ... exp(A(l_0) dl),

whose sign convention (generator +A) is fixed by the closed-form two-level
holonomies this pipeline is validated against; for a loop with constant
metric it coincides with the standard Uhlmann holonomy of the reversed loop
and yields the identical amplitude for the real-amplitude models treated
here.  The parallel-transport verification integrates the transport equation
dU = -A U, the lift that satisfies W^ddag dW = dW^ddag W.

The amplitude is G = Tr(rho(0) U(tau)) (physical trace, see qh_core) and the
phase is arg G.  For loops whose metric varies along the path, the step
propagators are quasi-unitary with respect to their own per-point metrics;
the accumulated product then need not be quasi-unitary with respect to the
endpoint metric, and |G| may exceed one.  The measured defect is reported in
``HolonomyResult.eta_unitarity_defect``; for constant-metric loops it is at
roundoff level.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    ConvergenceError,
    DegenerateSpectrumError,
    DimensionError,
    GaugeJumpError,
    IllDefinedPhaseError,
    NearSingularError,
    NotQuasiHermitianError,
    NotRealAmplitudeError,
    ParamError,
)
from .qh_core import (
    DEGENERACY_REL_GAP,
    EIGENVALUE_IMAG_TOL,
    MetricOperator,
    as_square_matrix,
    eta_adjoint,
)
from .thermal import GibbsState, gibbs_state

#: relative FD step: h = FD_STEP_FRACTION * (path length)
FD_STEP_FRACTION = 1e-5
#: |G_K - G_2K| convergence target
G_TOL = 1e-8
MAX_STEPS = 2 ** 20
#: amplitude magnitude below which the phase is declared ill-defined
WELL_DEFINED_TOL = 1e-6
#: environment variable enabling fault injection (see _sylvester_rhs)
FAULT_ENV = "QHU_FAULT"

_CHUNK = 16384


def _sylvester_rhs(dsr: np.ndarray, srho: np.ndarray) -> np.ndarray:
    """Right-hand side -[d sqrt(rho), sqrt(rho)] of the connection equation.

    Setting QHU_FAULT=sylvester-rhs-sign flips the sign; the CLI check suite
    uses this mutation hook to prove its residual test can fail.
    """
    rhs = srho @ dsr - dsr @ srho
    if os.environ.get(FAULT_ENV) == "sylvester-rhs-sign":
        rhs = -rhs
    return rhs


# ---------------------------------------------------------------------------
# parameter loops
# ---------------------------------------------------------------------------

@dataclass
class ParameterLoop:
    """Closed discretized path lambda -> (H(lambda), eta(lambda)).

    ``model`` maps a float to a pair of (N, N) arrays; it may additionally
    accept a 1-d array of parameter values and return stacked (M, N, N)
    arrays, which the integrators exploit.  The base interval is
    [lambda_start, lambda_end]; ``winding`` traverses it that many times, so
    the model must be periodic with the base period.
    """

    model: Callable
    lambda_start: float
    lambda_end: float
    steps: int = 1024
    winding: int = 1
    dim: int = field(init=False, default=0)

    def __post_init__(self):
        if self.steps < 8:
            raise ParamError(f"steps must be >= 8, got {self.steps}")
        if int(self.winding) != self.winding or self.winding < 1:
            raise ParamError(f"winding must be a positive integer, got {self.winding}")
        if not (math.isfinite(self.lambda_start) and math.isfinite(self.lambda_end)):
            raise ParamError("loop endpoints must be finite")
        h0, eta0 = self._scalar(self.lambda_start)
        h1, eta1 = self._scalar(self.lambda_end)
        self.dim = h0.shape[0]
        scale = 1.0 + float(np.linalg.norm(h0))
        if np.linalg.norm(h0 - h1) > 1e-10 * scale:
            raise ParamError("loop is not closed: H(start) != H(end)")
        if np.linalg.norm(eta0 - eta1) > 1e-10 * (1.0 + float(np.linalg.norm(eta0))):
            raise ParamError("loop is not closed: eta(start) != eta(end)")

    def _scalar(self, lam: float) -> tuple[np.ndarray, np.ndarray]:
        h, eta = self.model(float(lam))
        return as_square_matrix(h, "H(lambda)"), as_square_matrix(eta, "eta(lambda)")

    @property
    def span(self) -> float:
        return (self.lambda_end - self.lambda_start) * self.winding

    def evaluate(self, lams: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Stacked (H, eta) at the given parameter values."""
        lams = np.atleast_1d(np.asarray(lams, dtype=float))
        want = (lams.size, self.dim, self.dim)
        try:
            h, eta = self.model(lams)
            h = np.asarray(h, dtype=complex)
            eta = np.asarray(eta, dtype=complex)
            if h.shape == want and eta.shape == want:
                return h, eta
        except Exception:
            pass
        h = np.empty(want, dtype=complex)
        eta = np.empty(want, dtype=complex)
        for i, lam in enumerate(lams):
            h[i], eta[i] = self._scalar(lam)
        return h, eta

    def metric_is_constant(self, probes: int = 17) -> bool:
        lams = self.lambda_start + np.linspace(0.0, 1.0, probes) * self.span
        _, etas = self.evaluate(lams)
        scale = 1.0 + float(np.linalg.norm(etas[0]))
        return float(np.max(np.abs(etas - etas[0]))) <= 1e-10 * scale


# ---------------------------------------------------------------------------
# stacked spectral machinery
# ---------------------------------------------------------------------------

def _decompose_stack(h: np.ndarray, eta: np.ndarray, convention: str
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized biorthogonal decomposition of a stack of matrices.

    Returns (energies (M,N) descending, right vectors (M,N,N) columns,
    left rows (M,N,N)).  Closed form for N = 2, LAPACK otherwise.
    """
    m, n = h.shape[0], h.shape[1]
    scale = np.maximum(np.linalg.norm(h, axis=(1, 2)), 1e-300)
    if n == 2:
        tr = h[:, 0, 0] + h[:, 1, 1]
        det = h[:, 0, 0] * h[:, 1, 1] - h[:, 0, 1] * h[:, 1, 0]
        sq = np.sqrt(tr * tr - 4.0 * det)
        energies = np.stack([(tr + sq) / 2.0, (tr - sq) / 2.0], axis=1)
        if np.any(np.abs(energies.imag) > EIGENVALUE_IMAG_TOL * scale[:, None]):
            raise NotQuasiHermitianError("complex spectrum along the path")
        energies = energies.real
        if np.any(energies[:, 0] - energies[:, 1] <= DEGENERACY_REL_GAP * scale):
            raise DegenerateSpectrumError("near-degenerate spectrum along the path")
        vecs = np.empty((m, 2, 2), dtype=complex)
        for k in range(2):
            e = energies[:, k]
            c1 = np.stack([h[:, 0, 1], e - h[:, 0, 0]], axis=1)
            c2 = np.stack([e - h[:, 1, 1], h[:, 1, 0]], axis=1)
            pick = (np.abs(c1) ** 2).sum(axis=1) >= (np.abs(c2) ** 2).sum(axis=1)
            vecs[:, :, k] = np.where(pick[:, None], c1, c2)
    else:
        energies = np.empty((m, n))
        vecs = np.empty((m, n, n), dtype=complex)
        for i in range(m):
            w, v = np.linalg.eig(h[i])
            if np.max(np.abs(w.imag)) > EIGENVALUE_IMAG_TOL * scale[i]:
                raise NotQuasiHermitianError("complex spectrum along the path")
            order = np.argsort(-w.real)
            energies[i] = w.real[order]
            vecs[i] = v[:, order]
        if np.any(-np.diff(energies, axis=1) <= DEGENERACY_REL_GAP * scale[:, None]):
            raise DegenerateSpectrumError("near-degenerate spectrum along the path")

    # eta-normalize columns and fix phases
    ev = eta @ vecs
    norms = np.sqrt(np.real(np.einsum("mik,mik->mk", vecs.conj(), ev)))
    vecs = vecs / norms[:, None, :]
    mags = np.abs(vecs)
    big = mags > 1e-12 * np.max(mags, axis=1, keepdims=True)
    if convention == "first-positive":
        idx = np.argmax(big, axis=1)
    else:
        idx = n - 1 - np.argmax(big[:, ::-1, :], axis=1)
    anchor = np.take_along_axis(vecs, idx[:, None, :], axis=1)[:, 0, :]
    vecs = vecs * (anchor.conj() / np.abs(anchor))[:, None, :]
    left = np.conj(np.swapaxes(eta @ vecs, 1, 2))
    return energies, vecs, left


def _populations(energies: np.ndarray, beta: float) -> np.ndarray:
    shifted = np.exp(-beta * (energies - energies.min(axis=1, keepdims=True)))
    return shifted / shifted.sum(axis=1, keepdims=True)


def _connection_stack(dsr, srho, p, vecs, left) -> np.ndarray:
    """Solve rho A + A rho = -[dsr, sqrt(rho)] on a stack (spectral form)."""
    rhs = _sylvester_rhs(dsr, srho)
    rb = left @ rhs @ vecs
    den = p[:, :, None] + p[:, None, :]
    n = p.shape[1]
    diag = np.arange(n)
    off = ~np.eye(n, dtype=bool)
    if np.any(den[:, off] < 1e-14):
        raise NearSingularError("population denominator p_i + p_j below 1e-14")
    # diagonal elements of the commutator vanish identically in this basis
    rb[:, diag, diag] = 0.0
    den[:, diag, diag] = 1.0
    return vecs @ (rb / den) @ left


def _expm_stack(a: np.ndarray) -> np.ndarray:
    """Matrix exponential of a stack; closed form for 2x2."""
    n = a.shape[-1]
    if n != 2:
        from scipy.linalg import expm

        return expm(a)
    q = (a[:, 0, 0] + a[:, 1, 1]) / 2.0
    d = a - q[:, None, None] * np.eye(2)
    s2 = -(d[:, 0, 0] * d[:, 1, 1] - d[:, 0, 1] * d[:, 1, 0])  # d @ d = s2 * I
    s = np.sqrt(s2)
    small = np.abs(s) < 1e-8
    sinhc = np.where(small, 1.0 + s2 / 6.0, np.sinh(np.where(small, 1.0, s)) / np.where(small, 1.0, s))
    return np.exp(q)[:, None, None] * (
        np.cosh(s)[:, None, None] * np.eye(2) + sinhc[:, None, None] * d
    )


def _ordered_product(mats: np.ndarray) -> np.ndarray:
    """mats[K-1] @ ... @ mats[0] by pairwise reduction (axis 0 ascending)."""
    n = mats.shape[-1]
    while mats.shape[0] > 1:
        if mats.shape[0] % 2:
            mats = np.concatenate([mats, np.eye(n, dtype=complex)[None]], axis=0)
        mats = np.matmul(mats[1::2], mats[0::2])
    return mats[0]


def _sqrt_rho_stack(loop: ParameterLoop, beta: float, lams: np.ndarray,
                    convention: str) -> tuple[np.ndarray, ...]:
    h, eta = loop.evaluate(lams)
    energies, vecs, left = _decompose_stack(h, eta, convention)
    p = _populations(energies, beta)
    srho = (vecs * np.sqrt(p)[:, None, :]) @ left
    return srho, p, vecs, left, eta


_STENCIL = np.array([-2.0, -1.0, 1.0, 2.0])


def _step_propagators(loop: ParameterLoop, beta: float, mids: np.ndarray,
                      dl: float, h_fd: float, sign: float, convention: str
                      ) -> np.ndarray:
    """Midpoint propagators exp(sign * A(mid) * dl) for a chunk of midpoints."""
    m = mids.size
    lams = np.concatenate([(mids[:, None] + h_fd * _STENCIL).ravel(), mids])
    srho, p, vecs, left, _ = _sqrt_rho_stack(loop, beta, lams, convention)
    sten = srho[: 4 * m].reshape(m, 4, *srho.shape[1:])
    s_mid, p_mid = srho[4 * m:], p[4 * m:]
    v_mid, l_mid = vecs[4 * m:], left[4 * m:]
    dsr = (8.0 * (sten[:, 2] - sten[:, 1]) - (sten[:, 3] - sten[:, 0])) / (12.0 * h_fd)
    fd_norm = np.linalg.norm(dsr, axis=(1, 2))
    typical = np.maximum(np.linalg.norm(s_mid, axis=(1, 2)), 1e-300)
    if np.any(fd_norm > 1e3 * typical):
        k = int(np.argmax(fd_norm / typical))
        raise GaugeJumpError(
            f"finite difference of sqrt(rho) blew up near lambda = {mids[k]:.6g}"
        )
    a = _connection_stack(dsr, s_mid, p_mid, v_mid, l_mid)
    return _expm_stack(sign * a * dl)


def _transport(loop: ParameterLoop, beta: float, k_steps: int, sign: float,
               convention: str, keep_steps: bool = False):
    """Ordered product over the whole loop; optionally keep per-step factors."""
    span = loop.span
    dl = span / k_steps
    h_fd = FD_STEP_FRACTION * abs(span)
    u = np.eye(loop.dim, dtype=complex)
    kept = [] if keep_steps else None
    for lo in range(0, k_steps, _CHUNK):
        hi = min(lo + _CHUNK, k_steps)
        mids = loop.lambda_start + (np.arange(lo, hi) + 0.5) * dl
        props = _step_propagators(loop, beta, mids, dl, h_fd, sign, convention)
        if keep_steps:
            kept.append(props)
        u = _ordered_product(props) @ u
    if keep_steps:
        return u, np.concatenate(kept, axis=0)
    return u


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def d_sqrt_rho(loop: ParameterLoop, beta: float, lam: float, h_step: float,
               phase_convention: str = "first-positive") -> np.ndarray:
    """d sqrt(rho)/d lambda by 4-point central differences (one Richardson
    level on the 2-point rule, fourth order).

    Raises GaugeJumpError when the finite difference exceeds 1e3 times the
    local scale of sqrt(rho), which indicates a discontinuity of the model
    along the path.
    """
    if not h_step > 0.0:
        raise ParamError(f"h_step must be positive, got {h_step}")
    lams = np.concatenate([lam + h_step * _STENCIL, [lam]])
    srho, *_ = _sqrt_rho_stack(loop, beta, lams, phase_convention)
    dsr = (8.0 * (srho[2] - srho[1]) - (srho[3] - srho[0])) / (12.0 * h_step)
    if np.linalg.norm(dsr) > 1e3 * max(float(np.linalg.norm(srho[4])), 1e-300):
        raise GaugeJumpError(f"finite difference of sqrt(rho) blew up at lambda = {lam:.6g}")
    return dsr


@dataclass(frozen=True)
class ConnectionSample:
    """Connection coefficient (of d lambda) at one path point."""

    a_matrix: np.ndarray
    lam: float = 0.0
    sylvester_residual: float = math.nan
    anti_self_adjoint_residual: float = math.nan


def connection_at(state: GibbsState, dsr, lam: float = 0.0) -> ConnectionSample:
    """Uhlmann connection at a path sample, from the Sylvester equation.

    The returned matrix solves rho A + A rho = -[dsr, sqrt(rho)]; the
    relative residual of that equation and the anti-quasi-self-adjointness
    residual are recorded on the sample.

    Raises NearSingularError when an off-diagonal denominator p_i + p_j is
    numerically zero.
    """
    dsr = as_square_matrix(dsr, "dsr")
    if dsr.shape[0] != state.dim:
        raise DimensionError("dsr dimension does not match the state")
    sys = state.system
    a = _connection_stack(
        dsr[None], state.sqrt_rho[None], state.populations[None],
        sys.right_vectors[None], sys.left_vectors[None],
    )[0]
    rhs = _sylvester_rhs(dsr, state.sqrt_rho)
    res = np.linalg.norm(state.rho @ a + a @ state.rho - rhs)
    res /= max(float(np.linalg.norm(rhs)), 1e-300)
    anti = np.linalg.norm(eta_adjoint(a, state.metric) + a)
    anti /= max(float(np.linalg.norm(a)), 1e-300)
    return ConnectionSample(a_matrix=a, lam=lam,
                            sylvester_residual=float(res),
                            anti_self_adjoint_residual=float(anti))


@dataclass(frozen=True)
class HolonomyResult:
    """Accumulated holonomy, amplitude and phase of a closed loop.

    ``phase`` is NaN when ``well_defined`` is False (|G| <= 1e-6, a critical
    point).  ``eta_unitarity_defect`` is ||U^ddag U - 1|| with the adjoint
    taken at the endpoint metric; it is at roundoff level for constant-metric
    loops and finite when the metric varies (see module docstring).
    """

    u_final: np.ndarray
    amplitude: complex
    phase: float
    gen_fn: float
    well_defined: bool
    steps_used: int
    eta_unitarity_defect: float
    metric_constant: bool


def _principal_phase(g: complex) -> float:
    if abs(g.imag) <= 1e-8 * max(1.0, abs(g.real)):
        return 0.0 if g.real > 0.0 else math.pi
    ang = float(np.angle(g))
    if ang <= -math.pi:
        ang += 2.0 * math.pi
    return ang


def holonomy(loop: ParameterLoop, beta: float, g_tol: float = G_TOL,
             max_steps: int = MAX_STEPS,
             phase_convention: str = "first-positive") -> HolonomyResult:
    """Path-ordered holonomy of a closed loop at inverse temperature beta.

    Starts from ``loop.steps`` midpoint propagators and doubles the count
    until |G_K - G_2K| < g_tol; raises ConvergenceError beyond ``max_steps``.
    The amplitude is G = Tr(rho(0) U(tau)) with U(0) = 1.
    """
    h0, eta0 = loop.evaluate(np.array([loop.lambda_start]))
    m0 = MetricOperator.from_matrix(eta0[0])
    state0 = gibbs_state(h0[0], m0, beta, phase_convention)
    metric_constant = loop.metric_is_constant()

    if loop.span == 0.0:
        u = np.eye(loop.dim, dtype=complex)
        return _finish(loop, state0, u, loop.steps, metric_constant)

    k = loop.steps
    u_k = _transport(loop, beta, k, +1.0, phase_convention)
    g_k = complex(np.trace(state0.rho @ u_k))
    while True:
        if 2 * k > max_steps:
            raise ConvergenceError(
                f"holonomy did not reach |dG| < {g_tol:g} within {max_steps} steps"
            )
        u_2k = _transport(loop, beta, 2 * k, +1.0, phase_convention)
        g_2k = complex(np.trace(state0.rho @ u_2k))
        k *= 2
        if abs(g_2k - g_k) < g_tol:
            return _finish(loop, state0, u_2k, k, metric_constant)
        u_k, g_k = u_2k, g_2k


def _finish(loop: ParameterLoop, state0: GibbsState, u: np.ndarray,
            steps_used: int, metric_constant: bool) -> HolonomyResult:
    tau = loop.lambda_start + loop.span
    _, eta_tau = loop.evaluate(np.array([tau]))
    m_tau = MetricOperator.from_matrix(eta_tau[0])
    defect = float(np.linalg.norm(eta_adjoint(u, m_tau) @ u - np.eye(loop.dim)))
    g = complex(np.trace(state0.rho @ u))
    well = abs(g) > WELL_DEFINED_TOL
    return HolonomyResult(
        u_final=u,
        amplitude=g,
        phase=_principal_phase(g) if well else math.nan,
        gen_fn=generating_function(g, 1),
        well_defined=well,
        steps_used=steps_used,
        eta_unitarity_defect=defect,
        metric_constant=metric_constant,
    )


def uhlmann_phase(result: HolonomyResult) -> float:
    """arg G in (-pi, pi]; 0 or pi for the real amplitudes of the catalog
    models.  Raises IllDefinedPhaseError at a critical point (|G| <= 1e-6)."""
    if not result.well_defined:
        raise IllDefinedPhaseError(
            f"|G| = {abs(result.amplitude):.3e} <= {WELL_DEFINED_TOL:g}: phase ill-defined"
        )
    return result.phase


def generating_function(amplitude: complex, system_size: int) -> float:
    """Geometrical generating function -ln|G|^2 / L (inf when G = 0)."""
    if system_size < 1:
        raise ParamError(f"system_size must be >= 1, got {system_size}")
    mag = abs(amplitude)
    if mag == 0.0:
        return math.inf
    return -2.0 * math.log(mag) / system_size


def geometric_factor(amplitude: complex) -> float:
    """arccos(Re G) in [0, pi] for a real amplitude.

    Re G is clipped to [-1, 1]; metric-varying loops legitimately produce
    |G| slightly above one (see module docstring), which maps to 0 or pi.
    Raises NotRealAmplitudeError when |Im G| > 1e-6.
    """
    g = complex(amplitude)
    if abs(g.imag) > 1e-6:
        raise NotRealAmplitudeError(f"Im G = {g.imag:.3e} exceeds 1e-6")
    return float(np.arccos(np.clip(g.real, -1.0, 1.0)))


def find_transitions(amplitude: Callable[[float], float], t_min: float,
                     t_max: float, grid: int = 64,
                     refine_tol: float = 1e-6) -> list[float]:
    """Critical temperatures where Re G(T) changes sign.

    Scans ``grid`` points in [t_min, t_max] and refines each sign change by
    bisection to |dT| < refine_tol.  Returns ascending temperatures; an empty
    list when no sign change is found.
    """
    if not t_min > 0.0:
        raise ParamError(f"t_min must be positive, got {t_min}")
    if grid < 16:
        raise ParamError(f"grid must be >= 16, got {grid}")
    ts = np.linspace(t_min, t_max, grid)
    vals = np.array([float(np.real(amplitude(float(t)))) for t in ts])
    roots: list[float] = []
    for i in range(grid - 1):
        a, b = float(ts[i]), float(ts[i + 1])
        fa, fb = vals[i], vals[i + 1]
        if fa == 0.0:
            if i == 0:
                roots.append(a)
            continue
        if fb == 0.0 or fa * fb > 0.0:
            if fb == 0.0:
                roots.append(b)
            continue
        while b - a > refine_tol:
            mid = (a + b) / 2.0
            fm = float(np.real(amplitude(mid)))
            if fm == 0.0:
                a = b = mid
                break
            if fa * fm < 0.0:
                b, fb = mid, fm
            else:
                a, fa = mid, fm
        roots.append((a + b) / 2.0)
    return sorted(roots)


def parallel_transport_residual(loop: ParameterLoop, beta: float, steps: int,
                                phase_convention: str = "first-positive") -> float:
    """max_k ||W^ddag dW - dW^ddag W|| along the horizontal lift dU = -A U.

    W(l_k) = sqrt(rho(l_k)) U(l_k) on the step grid, dW by forward
    differences, the adjoint at the metric of the left grid point.  The
    residual vanishes with step refinement wherever the parallel-transport
    condition is exactly satisfiable (constant-metric loops, and loops whose
    metric log-derivative commutes with H).
    """
    if steps < 8:
        raise ParamError(f"steps must be >= 8, got {steps}")
    span = loop.span
    if span == 0.0:
        return 0.0
    dl = span / steps
    _, props = _transport(loop, beta, steps, -1.0, phase_convention, keep_steps=True)
    prefixes = np.empty((steps + 1, loop.dim, loop.dim), dtype=complex)
    prefixes[0] = np.eye(loop.dim)
    for k in range(steps):
        prefixes[k + 1] = props[k] @ prefixes[k]
    grid = loop.lambda_start + np.arange(steps + 1) * dl
    srho, _, _, _, etas = _sqrt_rho_stack(loop, beta, grid, phase_convention)
    w = srho @ prefixes
    dw = (w[1:] - w[:-1]) / dl
    eta_l, w_l = etas[:-1], w[:-1]
    inv_eta_l = np.linalg.inv(eta_l)
    w_adj = inv_eta_l @ np.conj(np.swapaxes(w_l, 1, 2)) @ eta_l
    dw_adj = inv_eta_l @ np.conj(np.swapaxes(dw, 1, 2)) @ eta_l
    res = w_adj @ dw - dw_adj @ w_l
    return float(np.max(np.linalg.norm(res, axis=(1, 2))))
