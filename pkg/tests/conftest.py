from __future__ import annotations

import numpy as np
import pytest

from qhu import qh_core
from qhu.uhlmann import ParameterLoop


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_constant_metric_loop(rng: np.random.Generator, n: int = 2,
                                steps: int = 64) -> ParameterLoop:
    """Random smooth quasi-Hermitian family with a fixed metric.

    h(lam) = D + 0.2 (C cos lam + S sin lam) in the Hermitian frame, with D
    gapped so the spectrum never degenerates, conjugated into a random
    constant-metric representation.
    """
    m = qh_core.random_metric(n, rng)

    def herm(scale):
        c = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        c = (c + c.conj().T) / 2
        return scale * c / max(np.linalg.norm(c), 1e-300)

    d = np.diag(np.arange(n, dtype=float) * 1.5)
    c1, s1 = herm(1.0), herm(1.0)
    a, b = m.inv_sqrt_s, m.sqrt_s

    def model(lam):
        lam = np.asarray(lam, dtype=float)
        cos = np.cos(lam)[..., None, None]
        sin = np.sin(lam)[..., None, None]
        h = d + 0.2 * (cos * c1 + sin * s1)
        h = a @ h @ b
        eta = np.broadcast_to(m.eta, h.shape).copy()
        return h, eta

    return ParameterLoop(model=model, lambda_start=0.0,
                         lambda_end=2.0 * np.pi, steps=steps)
