"""Quasi-Hermitian Gibbs states.

``rho = exp(-beta H) / Z`` with ``Z = sum_n exp(-beta E_n)``, assembled in the
biorthogonal basis: ``rho = sum_n p_n |Psi_n><Phi_n|``.  Populations are
computed with a ground-state energy shift so large ``beta`` cannot overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParamError
from .qh_core import (
    BIORTHO_TOL,
    BiorthogonalSystem,
    MetricOperator,
    as_square_matrix,
    biorthogonal_decompose,
    eta_adjoint,
)


@dataclass(frozen=True)
class GibbsState:
    """Thermal state at inverse temperature beta, in biorthogonal form.

    ``populations`` follow the index order of ``system`` (energies
    descending, so the last entry is the dominant one at beta > 0).
    Populations can underflow to exactly zero around beta * gap ~ 745; they
    are validated as non-negative and summing to one.
    """

    beta: float
    populations: np.ndarray
    rho: np.ndarray
    sqrt_rho: np.ndarray
    system: BiorthogonalSystem
    metric: MetricOperator
    partition: float

    @property
    def dim(self) -> int:
        return self.system.dim


def gibbs_state(h, m: MetricOperator, beta: float,
                phase_convention: str = "first-positive") -> GibbsState:
    """Construct the Gibbs state of a quasi-Hermitian Hamiltonian.

    Propagates NotQuasiHermitianError / DegenerateSpectrumError from the
    decomposition; beta must be finite and >= 0.
    """
    h = as_square_matrix(h, "h")
    if not (isinstance(beta, (int, float)) and math.isfinite(beta)) or beta < 0:
        raise ParamError(f"beta must be finite and >= 0, got {beta!r}")
    sys = biorthogonal_decompose(h, m, phase_convention=phase_convention)
    e_min = float(np.min(sys.energies))
    shifted = np.exp(-beta * (sys.energies - e_min))
    z_shifted = float(np.sum(shifted))
    populations = shifted / z_shifted
    partition = math.exp(-beta * e_min) * z_shifted if beta * abs(e_min) < 700 else math.inf
    rho = sys.assemble(populations)
    sqrt_rho = sys.assemble(np.sqrt(populations))
    state = GibbsState(
        beta=float(beta),
        populations=populations,
        rho=rho,
        sqrt_rho=sqrt_rho,
        system=sys,
        metric=m,
        partition=partition,
    )
    _validate_state(state)
    return state


def _validate_state(state: GibbsState):
    p = state.populations
    if np.any(p < 0.0):
        raise ParamError("negative population")
    if abs(float(np.sum(p)) - 1.0) > 1e-12:
        raise ParamError("populations do not sum to one")
    scale = max(1.0, float(np.linalg.norm(state.rho)))
    if np.linalg.norm(eta_adjoint(state.rho, state.metric) - state.rho) > BIORTHO_TOL * scale:
        raise ParamError("rho is not self-adjoint under the physical inner product")
    if np.linalg.norm(state.sqrt_rho @ state.sqrt_rho - state.rho) > BIORTHO_TOL * scale:
        raise ParamError("sqrt(rho) squared does not reproduce rho")


def purity_weight(state: GibbsState) -> float:
    """(sqrt(p_+) - sqrt(p_-))^2 for a two-level state.

    Equals 1 - sech(beta * gap / 2); ranges from 0 (maximally mixed) to 1
    (pure).  Raises DimensionError unless the state has exactly two levels.
    """
    if state.dim != 2:
        raise DimensionError(f"purity_weight requires 2 levels, got {state.dim}")
    p = np.sqrt(state.populations)
    return float((p[0] - p[1]) ** 2)
