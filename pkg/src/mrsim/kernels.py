"""Numerical core of the travel-time filter, with backend selection.

The per-observation filter step (state-dependent transition build, predict,
measurement update) dominates the runtime of a full experiment, so it exists
twice: a numpy reference implementation in this module, and a compiled twin
(``mrsim._ckernels``, Cython) selected at import when available.  Set
``MRSIM_PURE_PYTHON=1`` to force the numpy path; ``ACTIVE_BACKEND`` reports
the selection.  ``benchmarks/bench_kernels.py`` compares the two.

State vector layout (dimension 2r+1 for regression number r):

    index 0        : the constant 1
    indices 1..r   : innovation window, oldest first (s[r] is the newest)
    indices r+1..2r: travel-cost window, oldest first (s[2r] is the newest)

The transition matrix routes the constant through row 0, shifts both windows
left by one slot, and computes the new newest travel cost in the last row::

    row 0      : (1, 0, ..., 0)
    rows 1..r-1: shift of the innovation window
    row r      : zeros (the fresh innovation enters through V)
    rows r+1..2r-1: shift of the cost window
    row 2r     : (mu*(1 + sum(phi)), psi_r, ..., psi_1, -phi_r, ..., -phi_1)

with psi_l = b_l + sum_{i=1..l} c[l,i] * X(k-i), X read most-recent-first
from the cost window.  The constant-column entry is the mean scaled by
(1 + sum(phi)) so the autoregression acts on deviations from the running
mean; with the random-walk default (phi_1 = -1, rest 0) it vanishes and the
predicted cost is exactly the previous cost plus the innovation.

V has ones at the newest-innovation and newest-cost slots; process noise is
q * V V^T.  The measurement row H has a single one at the newest-cost slot.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "ACTIVE_BACKEND",
    "HAVE_COMPILED",
    "psi_terms",
    "build_f_matrix",
    "predict_step",
    "predict_scalar",
    "measurement_step",
]


# -- numpy reference implementation ---------------------------------------


def psi_terms_py(b: np.ndarray, c: np.ndarray, s: np.ndarray) -> np.ndarray:
    """psi_l = b_l + sum_{i<=l} c[l,i] X(k-i); only the lower triangle of c
    (lags of X never newer than the innovation lag) participates."""
    r = b.shape[0]
    x_recent = s[r + 1 :][::-1]
    return b + np.tril(c) @ x_recent


def build_f_matrix_py(
    phi: np.ndarray, b: np.ndarray, c: np.ndarray, mu: float, s: np.ndarray
) -> np.ndarray:
    r = phi.shape[0]
    n = 2 * r + 1
    F = np.zeros((n, n))
    F[0, 0] = 1.0
    for i in range(1, r):
        F[i, i + 1] = 1.0
        F[r + i, r + i + 1] = 1.0
    psi = psi_terms_py(b, c, s)
    F[n - 1, 0] = mu * (1.0 + phi.sum())
    F[n - 1, 1 : r + 1] = psi[::-1]
    F[n - 1, r + 1 :] = -phi[::-1]
    return F


def predict_step_py(
    phi: np.ndarray,
    b: np.ndarray,
    c: np.ndarray,
    mu: float,
    q: float,
    s: np.ndarray,
    P: np.ndarray,
    xi_hat: float,
) -> tuple[np.ndarray, np.ndarray]:
    """One transition: s' = F(s) s + V xi_hat, P' = F P F^T + q V V^T."""
    r = phi.shape[0]
    n = 2 * r + 1
    F = build_f_matrix_py(phi, b, c, mu, s)
    s2 = F @ s
    s2[r] += xi_hat
    s2[n - 1] += xi_hat
    s2[0] = 1.0
    P2 = F @ P @ F.T
    P2[r, r] += q
    P2[r, n - 1] += q
    P2[n - 1, r] += q
    P2[n - 1, n - 1] += q
    P2 = 0.5 * (P2 + P2.T)
    return s2, P2


def predict_scalar_py(
    phi: np.ndarray, b: np.ndarray, c: np.ndarray, mu: float, s: np.ndarray, xi_hat: float
) -> float:
    """Newest-cost entry of the predicted state, without covariance work."""
    r = phi.shape[0]
    psi = psi_terms_py(b, c, s)
    xi_win = s[1 : r + 1]
    x_win = s[r + 1 :]
    return float(
        mu * (1.0 + phi.sum()) + psi[::-1] @ xi_win + (-phi[::-1]) @ x_win + xi_hat
    )


def measurement_step_py(
    s: np.ndarray, P: np.ndarray, r_var: float, y: float, xi_hat: float
) -> tuple[np.ndarray, np.ndarray]:
    """Joseph-form measurement update; the predicted measurement is the
    newest-cost slot plus the current innovation estimate."""
    n = s.shape[0]
    h = n - 1
    innov = y - (s[h] + xi_hat)
    S = P[h, h] + r_var
    if S <= 0.0:
        return s.copy(), P.copy()
    K = P[:, h] / S
    s2 = s + K * innov
    s2[0] = 1.0
    A = np.eye(n)
    A[:, h] -= K
    P2 = A @ P @ A.T + r_var * np.outer(K, K)
    P2 = 0.5 * (P2 + P2.T)
    return s2, P2


# -- backend selection ------------------------------------------------------

_ckernels = None
if os.environ.get("MRSIM_PURE_PYTHON", "").strip().lower() not in ("1", "true", "yes"):
    try:
        from mrsim import _ckernels  # type: ignore[no-redef]
    except ImportError:
        _ckernels = None

HAVE_COMPILED = _ckernels is not None
ACTIVE_BACKEND = "compiled" if HAVE_COMPILED else "python"

psi_terms = psi_terms_py
build_f_matrix = build_f_matrix_py

if HAVE_COMPILED:
    predict_step = _ckernels.predict_step
    predict_scalar = _ckernels.predict_scalar
    measurement_step = _ckernels.measurement_step
else:
    predict_step = predict_step_py
    predict_scalar = predict_scalar_py
    measurement_step = measurement_step_py
