from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.linalg import solve_sylvester
from scipy.optimize import brentq

from conftest import random_constant_metric_loop
from qhu import qh_core, uhlmann
from qhu.errors import (
    ConvergenceError,
    GaugeJumpError,
    IllDefinedPhaseError,
    NearSingularError,
    NotRealAmplitudeError,
    ParamError,
)
from qhu.models import (
    PTParams,
    TwoLevelTParams,
    _t_model_pair,
    pt_equator_connection,
    pt_equator_holonomy,
    pt_equator_phase,
    pt_hamiltonian,
    pt_loop,
    pt_metric,
    t_model_hamiltonian,
    t_model_holonomy,
    t_model_loop,
    t_model_metric,
    t_model_phase,
)
from qhu.thermal import gibbs_state


# ---------------------------------------------------------------------------
# ParameterLoop
# ---------------------------------------------------------------------------

def test_loop_rejects_open_path():
    with pytest.raises(ParamError):
        uhlmann.ParameterLoop(
            model=lambda lam: _t_model_pair(lam, 2.0),
            lambda_start=0.0, lambda_end=3.0,
        )


def test_loop_rejects_tiny_step_count():
    with pytest.raises(ParamError):
        uhlmann.ParameterLoop(
            model=lambda lam: _t_model_pair(lam, 2.0),
            lambda_start=0.0, lambda_end=2 * np.pi, steps=4,
        )


def test_loop_scalar_only_model_falls_back():
    def scalar_only(lam):
        if not isinstance(lam, float):
            raise TypeError("scalar parameter required")
        return _t_model_pair(lam, 2.0)

    loop = uhlmann.ParameterLoop(model=scalar_only, lambda_start=0.0,
                                 lambda_end=2 * np.pi, steps=32)
    ref = uhlmann.holonomy(t_model_loop(TwoLevelTParams(t=2.0), steps=32), 1.0)
    got = uhlmann.holonomy(loop, 1.0)
    assert abs(got.amplitude - ref.amplitude) <= 1e-10


# ---------------------------------------------------------------------------
# d_sqrt_rho
# ---------------------------------------------------------------------------

def test_d_sqrt_rho_vanishes_at_infinite_temperature():
    loop = t_model_loop(TwoLevelTParams(t=2.0), steps=32)
    dsr = uhlmann.d_sqrt_rho(loop, 0.0, 0.9, 1e-4)
    assert np.linalg.norm(dsr) <= 1e-8


def test_d_sqrt_rho_against_symbolic_derivative():
    # Hermitian point t = 1: differentiate sqrt(rho)(theta) symbolically
    sympy = pytest.importorskip("sympy")
    theta = sympy.symbols("theta", real=True)
    beta = sympy.Rational(1)
    c, s = sympy.cos(theta / 2), sympy.sin(theta / 2)
    psi_p = sympy.Matrix([c, s])
    psi_m = sympy.Matrix([s, -c])
    z = sympy.exp(-beta) + sympy.exp(beta)
    root = (sympy.sqrt(sympy.exp(-beta) / z) * psi_p * psi_p.T
            + sympy.sqrt(sympy.exp(beta) / z) * psi_m * psi_m.T)
    deriv = sympy.lambdify(theta, sympy.diff(root, theta), "numpy")
    expected = np.array(deriv(0.7), dtype=complex)

    loop = t_model_loop(TwoLevelTParams(t=1.0), steps=32)
    dsr = uhlmann.d_sqrt_rho(loop, 1.0, 0.7, 1e-4)
    np.testing.assert_allclose(dsr, expected, atol=1e-6)


def test_d_sqrt_rho_fourth_order_convergence():
    loop = t_model_loop(TwoLevelTParams(t=2.0), steps=32)
    ref = uhlmann.d_sqrt_rho(loop, 1.0, 0.7, 1e-5)
    errs = [np.linalg.norm(uhlmann.d_sqrt_rho(loop, 1.0, 0.7, h) - ref)
            for h in (0.08, 0.04)]
    ratio = errs[0] / errs[1]
    assert 8.0 <= ratio <= 40.0  # nominal 16 for a fourth-order formula


def test_d_sqrt_rho_detects_discontinuity():
    def jumpy(lam):
        # the loop angle jumps by 1 radian inside (0.9, 2.0): sqrt(rho) is
        # discontinuous there (a constant energy shift would not show)
        lam = np.asarray(lam, dtype=float)
        bump = np.where((lam > 0.9) & (lam < 2.0), 1.0, 0.0)
        return _t_model_pair(lam + bump, 1.0)

    loop = uhlmann.ParameterLoop(model=jumpy, lambda_start=0.0,
                                 lambda_end=2 * np.pi, steps=32)
    with pytest.raises(GaugeJumpError):
        uhlmann.d_sqrt_rho(loop, 1.0, 0.9, 1e-6)


# ---------------------------------------------------------------------------
# connection_at
# ---------------------------------------------------------------------------

def _t_state(t, beta, theta=0.3):
    p = TwoLevelTParams(t=t, theta=theta, beta=beta)
    return gibbs_state(t_model_hamiltonian(p), t_model_metric(p), beta)


def test_connection_vanishes_at_infinite_temperature():
    loop = t_model_loop(TwoLevelTParams(t=2.0), steps=32)
    state = _t_state(2.0, 0.0)
    dsr = uhlmann.d_sqrt_rho(loop, 0.0, 0.3, 1e-4)
    sample = uhlmann.connection_at(state, dsr)
    assert np.linalg.norm(sample.a_matrix) <= 1e-8


def test_connection_t_model_closed_form():
    beta, t = 1.0, 2.0
    loop = t_model_loop(TwoLevelTParams(t=t), steps=32)
    state = _t_state(t, beta)
    dsr = uhlmann.d_sqrt_rho(loop, beta, 0.3, 1e-5 * 2 * np.pi)
    sample = uhlmann.connection_at(state, dsr, lam=0.3)
    x = (2.0 - np.exp(beta) - np.exp(-beta)) / (np.exp(beta) + np.exp(-beta))
    expected = x * np.array([[0.0, -t / 2.0], [1.0 / (2.0 * t), 0.0]])
    np.testing.assert_allclose(sample.a_matrix, expected, atol=1e-6)
    assert sample.sylvester_residual <= 1e-9
    assert sample.anti_self_adjoint_residual <= 1e-9


def test_connection_matches_scipy_sylvester(rng):
    # independent oracle: Bartels-Stewart solver on the same equation
    for _ in range(20):
        n = int(rng.integers(2, 5))
        h, m = qh_core.random_quasi_hermitian(n, rng)
        state = gibbs_state(h, m, float(rng.uniform(0.2, 2.0)))
        raw = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        dsr = (raw + qh_core.eta_adjoint(raw, m)) / 2
        sample = uhlmann.connection_at(state, dsr)
        rhs = state.sqrt_rho @ dsr - dsr @ state.sqrt_rho
        oracle = solve_sylvester(state.rho, state.rho, rhs)
        np.testing.assert_allclose(sample.a_matrix, oracle, atol=1e-9)


def test_connection_pt_equator_adjudicates_coefficients():
    # The Sylvester solution selects the main-text coefficient set and
    # rejects the appendix set (they differ by a factor of four).
    p = PTParams(a=5.0, b=4.0, beta=1.0)
    loop = pt_loop(p, steps=32)
    phi = 0.7
    h, eta = loop.evaluate(np.array([phi]))
    state = gibbs_state(h[0], qh_core.MetricOperator.from_matrix(eta[0]), p.beta)
    dsr = uhlmann.d_sqrt_rho(loop, p.beta, phi, 1e-5 * 2 * np.pi)
    a_pipe = uhlmann.connection_at(state, dsr, lam=phi).a_matrix
    a_main = pt_equator_connection(p, phi=phi, coefficients="main").a_matrix
    a_app = pt_equator_connection(p, phi=phi, coefficients="appendix").a_matrix
    scale = np.linalg.norm(a_pipe)
    assert np.linalg.norm(a_pipe - a_main) <= 1e-8 * scale
    assert np.linalg.norm(a_pipe - a_app) >= 1e-2 * scale


def test_connection_pt_equator_eigenvector_form():
    # Same connection from the off-diagonal eigenvector expression
    # -sum_{i!=j} (sqrt(p_i)-sqrt(p_j))^2/(p_i+p_j) |Psi_i><Phi_i|dPsi_j><Phi_j|
    p = PTParams(a=5.0, b=4.0, beta=1.0)
    loop = pt_loop(p, steps=32)
    phi, h_fd = 0.7, 1e-6

    def system(at):
        h, eta = loop.evaluate(np.array([at]))
        m = qh_core.MetricOperator.from_matrix(eta[0])
        return qh_core.biorthogonal_decompose(h[0], m), m

    sys0, m0 = system(phi)
    sys_p, _ = system(phi + h_fd)
    sys_m, _ = system(phi - h_fd)
    dpsi = (sys_p.right_vectors - sys_m.right_vectors) / (2.0 * h_fd)
    state = gibbs_state(loop.evaluate(np.array([phi]))[0][0], m0, p.beta)
    pops = state.populations
    a_eig = np.zeros((2, 2), dtype=complex)
    for i in range(2):
        for j in range(2):
            if i == j:
                continue
            coef = (np.sqrt(pops[i]) - np.sqrt(pops[j])) ** 2 / (pops[i] + pops[j])
            ket = sys0.right_vectors[:, [i]]
            bra = sys0.left_vectors[[j], :]
            a_eig -= coef * (sys0.left_vectors[i] @ dpsi[:, j]) * (ket @ bra)
    dsr = uhlmann.d_sqrt_rho(loop, p.beta, phi, 1e-5 * 2 * np.pi)
    a_pipe = uhlmann.connection_at(state, dsr, lam=phi).a_matrix
    np.testing.assert_allclose(a_eig, a_pipe, atol=1e-8)


def test_connection_near_singular_populations():
    h = np.diag([51.0, 50.0, 0.0])
    m = qh_core.MetricOperator.from_matrix(np.eye(3))
    state = gibbs_state(h, m, 20.0)  # top two populations underflow to zero
    dsr = np.zeros((3, 3))
    dsr[0, 1] = dsr[1, 0] = 1.0
    with pytest.raises(NearSingularError):
        uhlmann.connection_at(state, dsr)


# ---------------------------------------------------------------------------
# holonomy and phase
# ---------------------------------------------------------------------------

def test_holonomy_t_model_entrywise():
    p = TwoLevelTParams(t=2.0, omega=1, beta=1.0)
    result = uhlmann.holonomy(t_model_loop(p, steps=64), p.beta)
    np.testing.assert_allclose(result.u_final, t_model_holonomy(p), atol=1e-6)
    assert result.eta_unitarity_defect <= 1e-8
    assert abs(result.amplitude) <= 1.0 + 1e-8
    assert result.metric_constant


def test_holonomy_zero_length_loop_is_identity():
    loop = uhlmann.ParameterLoop(
        model=lambda lam: _t_model_pair(np.asarray(lam, float) * 0.0 + 0.4, 2.0),
        lambda_start=0.4, lambda_end=0.4, steps=16,
    )
    result = uhlmann.holonomy(loop, 1.3)
    np.testing.assert_allclose(result.u_final, np.eye(2), atol=1e-14)
    assert result.amplitude == pytest.approx(1.0, abs=1e-12)
    assert uhlmann.uhlmann_phase(result) == 0.0


def test_holonomy_pt_equator_entrywise():
    p = PTParams(a=5.0, b=4.0, omega=1, beta=1.0)
    result = uhlmann.holonomy(pt_loop(p, steps=1024), p.beta)
    np.testing.assert_allclose(result.u_final, pt_equator_holonomy(p), atol=1e-6)
    assert not result.metric_constant


def test_holonomy_records_doubled_steps():
    p = TwoLevelTParams(t=2.0, beta=1.0)
    result = uhlmann.holonomy(t_model_loop(p, steps=64), p.beta)
    assert result.steps_used == 128  # constant connection converges immediately


def test_holonomy_step_halving_differences_decrease():
    p = PTParams(a=5.0, b=2.0, beta=1.0)
    loop = pt_loop(p, steps=256)
    h0, eta0 = loop.evaluate(np.array([0.0]))
    rho0 = gibbs_state(h0[0], qh_core.MetricOperator.from_matrix(eta0[0]), p.beta).rho
    amps = []
    for k in (256, 512, 1024, 2048):
        u = uhlmann._transport(loop, p.beta, k, +1.0, "first-positive")
        amps.append(complex(np.trace(rho0 @ u)))
    diffs = [abs(amps[i + 1] - amps[i]) for i in range(3)]
    assert diffs[0] > diffs[1] > diffs[2]


def test_holonomy_convergence_error_on_tiny_budget():
    p = PTParams(a=5.0, b=4.0, beta=1.0)
    with pytest.raises(ConvergenceError):
        uhlmann.holonomy(pt_loop(p, steps=1024), p.beta, g_tol=1e-14, max_steps=2048)


def test_holonomy_gauge_convention_invariance():
    p1 = TwoLevelTParams(t=2.0, beta=1.0)
    r_a = uhlmann.holonomy(t_model_loop(p1, steps=64), p1.beta)
    r_b = uhlmann.holonomy(t_model_loop(p1, steps=64), p1.beta,
                           phase_convention="last-positive")
    assert abs(r_a.amplitude - r_b.amplitude) <= 1e-6

    p2 = PTParams(a=5.0, b=4.0, beta=1.0)
    r_c = uhlmann.holonomy(pt_loop(p2, steps=1024), p2.beta, g_tol=1e-7)
    r_d = uhlmann.holonomy(pt_loop(p2, steps=1024), p2.beta, g_tol=1e-7,
                           phase_convention="last-positive")
    assert abs(r_c.amplitude - r_d.amplitude) <= 1e-6


def test_holonomy_hermitian_reduction_is_t_independent():
    for omega in (1, 2):
        amps = []
        for t in (0.5, 1.0, 2.0, 10.0):
            p = TwoLevelTParams(t=t, omega=omega, beta=1.0)
            amps.append(uhlmann.holonomy(t_model_loop(p, steps=64), p.beta).amplitude)
        assert max(abs(a - amps[0]) for a in amps) <= 1e-8


def test_uhlmann_phase_values():
    hot = TwoLevelTParams(t=2.0, beta=1e-4)
    assert uhlmann.uhlmann_phase(
        uhlmann.holonomy(t_model_loop(hot, steps=64), hot.beta)) == 0.0

    cold = TwoLevelTParams(t=2.0, beta=8.0)
    assert uhlmann.uhlmann_phase(
        uhlmann.holonomy(t_model_loop(cold, steps=64), cold.beta)) == math.pi

    mid = TwoLevelTParams(t=2.0, beta=1.0)
    result = uhlmann.holonomy(t_model_loop(mid, steps=64), mid.beta)
    expected = math.cos(math.pi * (1.0 - 1.0 / math.cosh(1.0)))
    assert expected == pytest.approx(0.4477, abs=2e-3)  # positive: trivial phase
    assert result.amplitude.real == pytest.approx(expected, abs=1e-9)
    assert uhlmann.uhlmann_phase(result) == 0.0


def test_uhlmann_phase_ill_defined_at_critical_point():
    critical = TwoLevelTParams(t=2.0, beta=math.acosh(2.0))
    result = uhlmann.holonomy(t_model_loop(critical, steps=64), critical.beta)
    assert not result.well_defined
    assert math.isnan(result.phase)
    with pytest.raises(IllDefinedPhaseError):
        uhlmann.uhlmann_phase(result)


# ---------------------------------------------------------------------------
# scalar reporting helpers
# ---------------------------------------------------------------------------

def test_generating_function_values():
    assert uhlmann.generating_function(1.0, 1) == 0.0
    assert uhlmann.generating_function(0.5, 1) == pytest.approx(2.0 * math.log(2.0))
    assert uhlmann.generating_function(0.5, 1) == pytest.approx(1.3862943611198906)
    assert math.isinf(uhlmann.generating_function(0.0, 4))
    with pytest.raises(ParamError):
        uhlmann.generating_function(0.5, 0)


def test_geometric_factor_values():
    assert uhlmann.geometric_factor(1.0) == 0.0
    assert uhlmann.geometric_factor(0.0) == pytest.approx(math.pi / 2.0)
    assert uhlmann.geometric_factor(-1.0) == pytest.approx(math.pi)
    assert uhlmann.geometric_factor(1.0 + 5e-9) == 0.0
    with pytest.raises(NotRealAmplitudeError):
        uhlmann.geometric_factor(0.5 + 1e-3j)


def test_find_transitions_counts_and_location():
    def amplitude_for(omega):
        return lambda temp: t_model_phase(
            TwoLevelTParams(t=1.0, omega=omega, beta=1.0 / temp)).amplitude

    tc = uhlmann.find_transitions(amplitude_for(1), 0.3, 1.5, grid=32)
    assert len(tc) == 1
    oracle = brentq(lambda temp: math.cos(
        math.pi * (1 - 1 / math.cosh(1 / temp))), 0.5, 1.0, xtol=1e-12)
    assert tc[0] == pytest.approx(oracle, abs=2e-6)
    assert tc[0] == pytest.approx(1.0 / math.acosh(2.0), abs=2e-6)

    assert len(uhlmann.find_transitions(amplitude_for(2), 0.35, 1.6, grid=48)) == 2
    assert len(uhlmann.find_transitions(amplitude_for(3), 0.3, 2.0, grid=64)) == 3
    assert uhlmann.find_transitions(lambda temp: 1.0, 0.3, 1.5, grid=16) == []
    with pytest.raises(ParamError):
        uhlmann.find_transitions(lambda temp: 1.0, -1.0, 1.5, grid=16)
    with pytest.raises(ParamError):
        uhlmann.find_transitions(lambda temp: 1.0, 0.1, 1.5, grid=8)


# ---------------------------------------------------------------------------
# parallel transport
# ---------------------------------------------------------------------------

def test_transport_residual_trivial_at_infinite_temperature():
    loop = t_model_loop(TwoLevelTParams(t=2.0), steps=64)
    assert uhlmann.parallel_transport_residual(loop, 0.0, 64) <= 1e-8


def test_transport_residual_decreases_with_refinement():
    loop = t_model_loop(TwoLevelTParams(t=2.0), steps=256)
    r1 = uhlmann.parallel_transport_residual(loop, 1.0, 256)
    r2 = uhlmann.parallel_transport_residual(loop, 1.0, 512)
    # second-order in practice; the requirement is at least first order
    assert r2 <= r1 / 1.6


def test_transport_residual_magnitude_catalog():
    p1 = TwoLevelTParams(t=2.0, beta=1.0)
    loop1 = t_model_loop(p1, steps=4096)
    h0, eta0 = loop1.evaluate(np.array([0.0]))
    scale1 = np.linalg.norm(gibbs_state(
        h0[0], qh_core.MetricOperator.from_matrix(eta0[0]), 1.0).sqrt_rho)
    assert uhlmann.parallel_transport_residual(loop1, 1.0, 4096) <= 1e-4 * scale1

    p2 = PTParams(a=5.0, b=4.0, beta=1.0)
    loop2 = pt_loop(p2, steps=8192)
    g0, geta0 = loop2.evaluate(np.array([0.0]))
    scale2 = np.linalg.norm(gibbs_state(
        g0[0], qh_core.MetricOperator.from_matrix(geta0[0]), 1.0).sqrt_rho)
    assert uhlmann.parallel_transport_residual(loop2, 1.0, 8192) <= 1e-4 * scale2


def test_constant_metric_loop_invariants(rng):
    for _ in range(5):
        loop = random_constant_metric_loop(rng, n=3, steps=64)
        result = uhlmann.holonomy(loop, float(rng.uniform(0.2, 2.0)))
        assert result.metric_constant
        assert result.eta_unitarity_defect <= 1e-8
        assert abs(result.amplitude) <= 1.0 + 1e-8
