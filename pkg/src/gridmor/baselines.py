"""Comparison bases: POD from state snapshots and structure-preserving QBT.

Str-QBT works on the standard-form lifted system ``x' = A x + H (x kron x)
+ B u`` obtained by scaling with ``E^{-1}`` (``E`` is block diagonal with a
diagonal mass block, so the tensor is row-scaled). Truncated Gramians are

    A P1 + P1 A^T + B B^T = 0,    A P2 + P2 A^T + H (P1 kron P1) H^T = 0,
    A^T Q1 + Q1 A + C^T C = 0,    A^T Q2 + Q2 A + H2 (P1 kron Q1) H2^T = 0,

and the basis comes from one ``n x n`` diagonal block of ``P = P1 + P2`` and
``Q = Q1 + Q2``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .lifting import QuadraticModel
from .linalg import lyapunov_residual, solve_gen_lyapunov
from .network import SecondOrderModel
from .simulate import integrate_second_order
from .strh2 import ReducedSecondOrderModel, reduce_petrov
from .tensor import SparseTensor3, mode1_apply_pairs, mode2_apply_pairs

logger = logging.getLogger(__name__)

__all__ = [
    "SnapshotMatrix",
    "QbtFactors",
    "collect_snapshots",
    "pod_basis",
    "str_qbt_basis",
    "reduce_with_petrov",
]


@dataclass(frozen=True, eq=False)
class SnapshotMatrix:
    Delta: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.Delta, dtype=float))
        t = np.asarray(self.times, dtype=float).ravel()
        if D.shape[1] < 1 or D.shape[1] != t.size:
            raise ValueError("snapshot count must match the number of sample times")
        object.__setattr__(self, "Delta", D)
        object.__setattr__(self, "times", t)


def collect_snapshots(model: SecondOrderModel, u=1.0, T: float = 10.0, dt: float = 1e-2) -> SnapshotMatrix:
    """Angle snapshots of the full model at every RK4 step on ``[0, T]``."""
    tr = integrate_second_order(model, u=u, T=T, dt=dt, keep_states=True)
    return SnapshotMatrix(Delta=tr.states[: model.n], times=tr.times)


def pod_basis(snapshots, r: int, *, tol: float | None = None) -> np.ndarray:
    """Leading ``r`` left singular vectors of the snapshot matrix.

    Each vector is signed so that its largest-magnitude entry is positive.
    Raises ``ValueError`` when ``r`` exceeds the numerical rank, the number
    of singular values above ``tol * sigma_1``. The default ``tol`` is
    ``max(n, L) * eps``, the usual LAPACK rank threshold.
    """
    D = snapshots.Delta if isinstance(snapshots, SnapshotMatrix) else np.asarray(snapshots, dtype=float)
    if r < 1:
        raise ValueError("r must be positive")
    U, s, _ = np.linalg.svd(D, full_matrices=False)
    if tol is None:
        tol = max(D.shape) * np.finfo(float).eps
    rank = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    if r > rank:
        raise ValueError(f"r={r} exceeds the numerical rank {rank} of the snapshot matrix")
    Q = U[:, :r]
    idx = np.argmax(np.abs(Q), axis=0)
    return Q * np.sign(Q[idx, np.arange(r)])


@dataclass(frozen=True, eq=False)
class QbtFactors:
    Rb: np.ndarray
    Sb: np.ndarray
    Uhat: np.ndarray
    Sighat: np.ndarray
    Vhat: np.ndarray
    Vb: np.ndarray
    Wb: np.ndarray
    block: str = "second"
    ordering: str = "PQ"
    residuals: dict = field(default_factory=dict)
    clipped: dict = field(default_factory=dict)


def _standard_form(model: QuadraticModel):
    E = np.asarray(model.E)
    if np.count_nonzero(E - np.diag(np.diag(E))):
        raise ValueError("Str-QBT expects a diagonal E")
    d = 1.0 / np.diag(E)
    H = model.H
    Hs = SparseTensor3(H.dim, H.i, H.j, H.k, H.vals * d[H.i])
    return d[:, None] * model.Amu, Hs, d[:, None] * model.Btil


def _psd_factor(P):
    w, U = np.linalg.eigh(0.5 * (P + P.T))
    keep = w > max(w.max(initial=0.0), 0.0) * 1e-14
    return U[:, keep] * np.sqrt(w[keep])


def _sym_sqrt(P):
    """``R`` with ``R^T R = P`` after clipping negative eigenvalues; returns ``(R, clipped mass)``."""
    w, U = np.linalg.eigh(0.5 * (P + P.T))
    neg = float(-w[w < 0].sum())
    w = np.clip(w, 0.0, None)
    return (U * np.sqrt(w)).T, neg


def _gramians(A, H, B, C, ordering, lyap_tol):
    I = np.eye(A.shape[0])
    res = {}
    P1 = solve_gen_lyapunov(I, A, B @ B.T, tol=lyap_tol)
    res["P1"] = lyapunov_residual(I, A, B @ B.T, P1)
    Lp = _psd_factor(P1)
    Gp = mode1_apply_pairs(H, Lp, Lp)
    P2 = solve_gen_lyapunov(I, A, Gp @ Gp.T, tol=lyap_tol)
    res["P2"] = lyapunov_residual(I, A, Gp @ Gp.T, P2)
    Q1 = solve_gen_lyapunov(I, A.T, C.T @ C, tol=lyap_tol)
    res["Q1"] = lyapunov_residual(I, A.T, C.T @ C, Q1)
    Lq = _psd_factor(Q1)
    # mode-2 unfolding: the first Kronecker factor meets tensor mode 3 and
    # the second meets mode 1 (the output mode).
    if ordering == "PQ":
        Gq = mode2_apply_pairs(H, Lq, Lp)
    else:
        Gq = mode2_apply_pairs(H, Lp, Lq)
    Q2 = solve_gen_lyapunov(I, A.T, Gq @ Gq.T, tol=lyap_tol)
    res["Q2"] = lyapunov_residual(I, A.T, Gq @ Gq.T, Q2)
    return P1 + P2, Q1 + Q2, res


def str_qbt_basis(model: QuadraticModel, r_q: int, block: str = "second", *, ordering: str = "PQ",
                  lyap_tol: float = 1e-8, rank_tol: float = 1e-12) -> QbtFactors:
    """Square-root balancing on one ``n x n`` block of the truncated Gramians.

    ``block="second"`` uses the velocity block (rows ``n..2n-1``) and
    ``block="first"`` the angle block. ``ordering`` selects ``P1 kron Q1``
    (``"PQ"``) or ``Q1 kron P1`` (``"QP"``) in the second observability stage.
    """
    if block not in ("first", "second"):
        raise ValueError("block must be 'first' or 'second'")
    if ordering not in ("PQ", "QP"):
        raise ValueError("ordering must be 'PQ' or 'QP'")
    n = model.n if model.n is not None else model.N // 4
    A, H, B = _standard_form(model)
    P, Q, res = _gramians(A, H, B, np.asarray(model.C), ordering, lyap_tol)
    sl = slice(0, n) if block == "first" else slice(n, 2 * n)
    P22, Q22 = P[sl, sl], Q[sl, sl]
    Rb, negp = _sym_sqrt(P22)
    Sb, negq = _sym_sqrt(Q22)
    U, s, Vt = np.linalg.svd(Rb @ Sb.T)
    rank = int(np.sum(s > rank_tol * s[0])) if s[0] > 0 else 0
    if r_q > rank:
        raise ValueError(f"r_q={r_q} exceeds the numerical rank {rank} of Rb Sb^T")
    scale = s[:r_q] ** -0.5
    Vb = Rb.T @ U[:, :r_q] * scale
    Wb = Sb.T @ Vt.T[:, :r_q] * scale
    return QbtFactors(Rb=Rb, Sb=Sb, Uhat=U, Sighat=s, Vhat=Vt.T, Vb=Vb, Wb=Wb, block=block,
                      ordering=ordering, residuals=res, clipped={"P": negp, "Q": negq})


def reduce_with_petrov(model: SecondOrderModel, Vb, Wb) -> ReducedSecondOrderModel:
    """Oblique projection with ``V = Vb``, ``W = Wb``; see :func:`gridmor.strh2.reduce_petrov`."""
    return reduce_petrov(model, Vb, Wb)
