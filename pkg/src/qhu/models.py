"""Closed-form catalog of solvable two-level models.

Two families:

* the two-level t-model, an isospectral family H(theta) with eigenvalues
  +-1 and the constant metric diag(1, t^2);
* the PT-symmetric Bloch model H(X) = eps + (a e_r + i b cos(delta) e_theta
  + i b sin(delta) e_phi) . sigma with the position-dependent metric
  eta(X) = |a|/sqrt(a^2-b^2) (1 + beta_vec . sigma).

Their analytic connections, holonomies, phases and limits serve as oracles
for the generic pipeline.  Two published coefficient sets exist for the
equatorial connection of the Bloch model ("main": 2a^2/Delta^2, 2ab/Delta^2;
"appendix": a^2/2Delta^2, ab/2Delta^2); the Sylvester pipeline selects
"main" (the "appendix" set also fails the Hermitian b = 0 reduction), which
is the default everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import ParamError, PTBrokenError
from .qh_core import MetricOperator
from .uhlmann import ConnectionSample, ParameterLoop, _expm_stack

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

#: |G| below this value is flagged as a critical point
CRITICAL_TOL = 1e-12


class ClosedFormPhase(NamedTuple):
    """Closed-form amplitude and phase; theta_u is NaN at a critical point."""

    amplitude: float
    theta_u: float
    is_critical: bool
    real_gamma: bool = True


def _phase_of(amplitude: float, real_gamma: bool = True) -> ClosedFormPhase:
    critical = abs(amplitude) < CRITICAL_TOL
    theta = math.nan if critical else (0.0 if amplitude > 0.0 else math.pi)
    return ClosedFormPhase(float(amplitude), theta, critical, real_gamma)


def _check_thermo(beta: float, omega: int):
    if not (isinstance(beta, (int, float)) and math.isfinite(beta)) or beta < 0:
        raise ParamError(f"beta must be finite and >= 0, got {beta!r}")
    if int(omega) != omega or omega < 1:
        raise ParamError(f"omega must be a positive integer, got {omega!r}")


# ---------------------------------------------------------------------------
# two-level t-model (parameter-independent metric)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TwoLevelTParams:
    """Deformation t > 0, loop angle theta, winding omega, inverse
    temperature beta."""

    t: float
    theta: float = 0.0
    omega: int = 1
    beta: float = 1.0

    def __post_init__(self):
        if not self.t > 0.0:
            raise ParamError(f"t must be positive, got {self.t}")
        _check_thermo(self.beta, self.omega)


def _t_model_pair(theta, t: float):
    theta = np.asarray(theta, dtype=float)
    h = np.empty(theta.shape + (2, 2), dtype=complex)
    h[..., 0, 0] = np.cos(theta)
    h[..., 0, 1] = t * np.sin(theta)
    h[..., 1, 0] = np.sin(theta) / t
    h[..., 1, 1] = -np.cos(theta)
    eta = np.zeros(theta.shape + (2, 2), dtype=complex)
    eta[..., 0, 0] = 1.0
    eta[..., 1, 1] = t * t
    return h, eta


def t_model_hamiltonian(p: TwoLevelTParams) -> np.ndarray:
    """[[cos(theta), t sin(theta)], [sin(theta)/t, -cos(theta)]]."""
    return _t_model_pair(p.theta, p.t)[0]


def t_model_metric(p: TwoLevelTParams) -> MetricOperator:
    """diag(1, t^2)."""
    return MetricOperator.from_matrix(np.diag([1.0, p.t * p.t]))


def t_model_loop(p: TwoLevelTParams, steps: int = 1024) -> ParameterLoop:
    """theta in [0, 2 pi], traversed omega times."""
    t = p.t
    return ParameterLoop(
        model=lambda theta: _t_model_pair(theta, t),
        lambda_start=0.0,
        lambda_end=2.0 * math.pi,
        steps=steps,
        winding=p.omega,
    )


def t_model_connection(p: TwoLevelTParams) -> ConnectionSample:
    """x [[0, -t/2], [1/(2t), 0]] with x = sech(beta) - 1 (theta-independent)."""
    x = 1.0 / math.cosh(p.beta) - 1.0
    a = x * np.array([[0.0, -p.t / 2.0], [1.0 / (2.0 * p.t), 0.0]], dtype=complex)
    return ConnectionSample(a_matrix=a, lam=p.theta)


def t_model_holonomy(p: TwoLevelTParams) -> np.ndarray:
    """Closed-form U(2 pi omega) = exp(2 pi omega x [[0,-t/2],[1/(2t),0]]).

    With w = pi omega x this is [[cos w, -t sin w], [sin(w)/t, cos w]]
    (unit determinant).
    """
    x = 1.0 / math.cosh(p.beta) - 1.0
    w = math.pi * p.omega * x
    return np.array(
        [[math.cos(w), -p.t * math.sin(w)],
         [math.sin(w) / p.t, math.cos(w)]],
        dtype=complex,
    )


def t_model_phase(p: TwoLevelTParams) -> ClosedFormPhase:
    """G = cos(pi omega (1 - sech beta)); t does not enter."""
    g = math.cos(math.pi * p.omega * (1.0 - 1.0 / math.cosh(p.beta)))
    return _phase_of(g)


def t_model_critical_temperatures(omega: int) -> list[float]:
    """All T where G changes sign: sech(beta_c) = 1 - (n + 1/2)/omega for
    n = 0 .. omega-1.  Returned descending; the count equals omega."""
    if int(omega) != omega or omega < 1:
        raise ParamError(f"omega must be a positive integer, got {omega!r}")
    out = []
    for n in range(omega):
        sech = 1.0 - (n + 0.5) / omega
        out.append(1.0 / math.acosh(1.0 / sech))
    return out


# ---------------------------------------------------------------------------
# PT-symmetric Bloch model (parameter-dependent metric)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PTParams:
    """Bloch-sphere parameters (eps, a, b, theta, phi, delta) plus winding
    and inverse temperature.  Quasi-Hermitian regime requires a^2 > b^2."""

    a: float
    b: float
    eps: float = 0.0
    theta: float = math.pi / 2.0
    phi: float = 0.0
    delta: float = 0.0
    omega: int = 1
    beta: float = 1.0

    def __post_init__(self):
        if not self.a * self.a > self.b * self.b:
            raise PTBrokenError(
                f"quasi-Hermitian regime requires a^2 > b^2, got a={self.a}, b={self.b}"
            )
        _check_thermo(self.beta, self.omega)

    @property
    def gap(self) -> float:
        """Energy gap Delta = 2 sqrt(a^2 - b^2)."""
        return 2.0 * math.sqrt(self.a * self.a - self.b * self.b)

    @property
    def kappa(self) -> float:
        """Thermal weight (sqrt(p+) - sqrt(p-))^2 = 1 - sech(beta Delta / 2)."""
        return 1.0 - 1.0 / np.cosh(self.beta * self.gap / 2.0)


def _bloch_frame(theta, phi):
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    e_r = (st * cp, st * sp, ct)
    e_t = (ct * cp, ct * sp, -st)
    e_p = (-sp, cp, np.zeros_like(np.asarray(phi, dtype=float)))
    return e_r, e_t, e_p


def _vec_to_matrix(shape, n0, nx, ny, nz):
    h = np.empty(shape + (2, 2), dtype=complex)
    h[..., 0, 0] = n0 + nz
    h[..., 0, 1] = nx - 1j * ny
    h[..., 1, 0] = nx + 1j * ny
    h[..., 1, 1] = n0 - nz
    return h


def _pt_pair(phi, a, b, theta, delta, eps):
    phi = np.asarray(phi, dtype=float)
    e_r, e_t, e_p = _bloch_frame(theta, phi)
    cd, sd = math.cos(delta), math.sin(delta)
    n = [a * e_r[i] + 1j * b * cd * e_t[i] + 1j * b * sd * e_p[i] for i in range(3)]
    h = _vec_to_matrix(phi.shape, eps * np.ones_like(phi), *n)
    w = [(b / a) * (sd * e_t[i] - cd * e_p[i]) for i in range(3)]
    pref = abs(a) / math.sqrt(a * a - b * b)
    eta = pref * _vec_to_matrix(phi.shape, np.ones_like(phi), *w)
    return h, eta


def pt_hamiltonian(p: PTParams) -> np.ndarray:
    """eps + (a e_r + i b cos(delta) e_theta + i b sin(delta) e_phi) . sigma."""
    return _pt_pair(p.phi, p.a, p.b, p.theta, p.delta, p.eps)[0]


def pt_metric(p: PTParams) -> MetricOperator:
    """|a|/sqrt(a^2-b^2) (1 + (b/a)(sin(delta) e_theta - cos(delta) e_phi) . sigma)."""
    return MetricOperator.from_matrix(_pt_pair(p.phi, p.a, p.b, p.theta, p.delta, p.eps)[1])


def pt_eigenstates(p: PTParams) -> tuple[np.ndarray, np.ndarray]:
    """Right eigenvectors (psi_plus, psi_minus) in their published form."""
    a, b, th, ph, d = p.a, p.b, p.theta, p.phi, p.delta
    root = math.sqrt(a * a - b * b)
    top = np.exp(-1j * ph) * (a * math.sin(th) + 1j * b * math.cos(d) * math.cos(th)
                              + b * math.sin(d))
    out = []
    for sign in (+1.0, -1.0):
        bottom = -a * math.cos(th) + 1j * b * math.cos(d) * math.sin(th) + sign * root
        norm2 = 2.0 * abs(a) * root * (
            1.0 + (b / a) * math.sin(d) * math.sin(th)
            - sign * (root / a) * math.cos(th)
        )
        if not norm2 > 0.0:
            raise ParamError("eigenstate normalization vanished at these parameters")
        out.append(np.array([top, bottom], dtype=complex) / math.sqrt(norm2))
    return out[0], out[1]


def pt_loop(p: PTParams, steps: int = 1024) -> ParameterLoop:
    """phi in [0, 2 pi] at fixed (theta, delta, eps), traversed omega times."""
    a, b, theta, delta, eps = p.a, p.b, p.theta, p.delta, p.eps
    return ParameterLoop(
        model=lambda phi: _pt_pair(phi, a, b, theta, delta, eps),
        lambda_start=0.0,
        lambda_end=2.0 * math.pi,
        steps=steps,
        winding=p.omega,
    )


def _require_equator(p: PTParams):
    if (abs(p.theta - math.pi / 2.0) > 1e-12 or abs(p.delta) > 1e-12
            or abs(p.eps) > 1e-12):
        raise ParamError(
            "closed forms hold on the equator only (theta = pi/2, delta = 0, eps = 0)"
        )


def _equator_coefficients(p: PTParams, coefficients: str) -> tuple[float, float]:
    d2 = p.gap ** 2
    if coefficients == "main":
        return 2.0 * p.a * p.a / d2, 2.0 * p.a * p.b / d2
    if coefficients == "appendix":
        return p.a * p.a / (2.0 * d2), p.a * p.b / (2.0 * d2)
    raise ParamError(f"coefficients must be 'main' or 'appendix', got {coefficients!r}")


def pt_equator_connection(p: PTParams, phi: float | None = None,
                          coefficients: str = "main") -> ConnectionSample:
    """kappa [c1 i sigma_z - c2 (cos(phi) sigma_x + sin(phi) sigma_y)] d phi."""
    _require_equator(p)
    c1, c2 = _equator_coefficients(p, coefficients)
    phi = p.phi if phi is None else float(phi)
    kap = p.kappa
    a = kap * (c1 * 1j * SIGMA_Z
               - c2 * (math.cos(phi) * SIGMA_X + math.sin(phi) * SIGMA_Y))
    return ConnectionSample(a_matrix=a, lam=phi)


def pt_equator_holonomy(p: PTParams, coefficients: str = "main") -> np.ndarray:
    """(-1)^omega exp(2 pi omega [i (c1 kappa + 1/2) sigma_z - c2 kappa sigma_x])."""
    _require_equator(p)
    c1, c2 = _equator_coefficients(p, coefficients)
    kap = p.kappa
    gen = 1j * (c1 * kap + 0.5) * SIGMA_Z - c2 * kap * SIGMA_X
    return (-1.0) ** p.omega * _expm_stack((2.0 * math.pi * p.omega * gen)[None])[0]


def pt_equator_phase(p: PTParams, coefficients: str = "main") -> ClosedFormPhase:
    """G = (-1)^omega [cos(Theta) - (b/Delta) tanh(beta Delta/2) sin(Theta)/gamma]
    with Theta = 2 pi omega gamma, gamma^2 = (c1 kappa + 1/2)^2 - (c2 kappa)^2.

    gamma is real throughout the quasi-Hermitian regime; should an extended
    parameter set drive gamma^2 negative, the hyperbolic continuation is
    used and flagged via real_gamma=False.
    """
    _require_equator(p)
    c1, c2 = _equator_coefficients(p, coefficients)
    kap = p.kappa
    gamma2 = (c1 * kap + 0.5) ** 2 - (c2 * kap) ** 2
    gamma = np.sqrt(complex(gamma2))  # |gamma| >= 1/2 whenever a^2 > b^2
    theta = 2.0 * math.pi * p.omega * gamma
    tanh = math.tanh(p.beta * p.gap / 2.0)
    g = (-1.0) ** p.omega * (np.cos(theta) - (p.b / p.gap) * tanh * np.sin(theta) / gamma)
    return _phase_of(float(np.real(g)), real_gamma=gamma2 > 0.0)


def pt_zero_t_amplitude(p: PTParams, coefficients: str = "main") -> float:
    """Zero-temperature limit (-1)^omega sqrt(1+A^2) cos(Theta_0 + phase_shift)
    with gamma_0 = gamma(kappa=1), A = b/(Delta gamma_0), phase_shift = arctan A."""
    _require_equator(p)
    c1, c2 = _equator_coefficients(p, coefficients)
    gamma0 = math.sqrt((c1 + 0.5) ** 2 - c2 ** 2)
    amp = p.b / (p.gap * gamma0)
    phase_shift = math.atan(amp)
    theta0 = 2.0 * math.pi * p.omega * gamma0
    return (-1.0) ** p.omega * math.sqrt(1.0 + amp * amp) * math.cos(theta0 + phase_shift)


def with_beta(p, beta: float):
    """Copy of a parameter record at a different inverse temperature."""
    return replace(p, beta=beta)
