"""Quadratic IRKA and the truncated H2 norm.

The iteration follows the two-sided scheme: from the reduced pencil
``A_r R = E_r R Lambda`` form ``Hhat = (E_r R)^{-1} H_r (R kron R)``,
``Bhat = (E_r R)^{-1} B_r``, ``Chat = C_r R`` and solve the column-decoupled
Sylvester equations

    -E V1 Lambda - A V1 = B Bhat^T
    -E V2 Lambda - A V2 = H (V1 kron V1) Hhat^T
    -E^T W1 Lambda - A^T W1 = C^T Chat
    -E^T W2 Lambda - A^T W2 = H2 (V1 kron W1) Hhat2^T

(``H2``/``Hhat2`` are mode-2 unfoldings whose column index runs fastest
over the first tensor mode, so ``W1`` contracts with the output mode of
``H`` and ``V1`` with its third mode). The one-sided variant sets
``W1 = V1`` and ``W2 = V2``.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .lifting import QuadraticModel
from .linalg import (
    DefectivePencilError,
    ShiftedSolver,
    SingularShiftError,
    orth,
    realify,
    solve_gen_lyapunov,
    spectral_decompose,
)
from .tensor import (
    mode1_apply_pairs,
    mode1_core_apply,
    mode2_core_apply,
    symmetrize,
)

logger = logging.getLogger(__name__)

__all__ = [
    "ReducedQuadratic",
    "QirkaResult",
    "QirkaWarning",
    "qirka",
    "reduce_quadratic",
    "initial_basis",
    "truncated_h2_norm",
    "truncated_gramians",
]


class QirkaWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class ReducedQuadratic:
    Er: np.ndarray
    Ar: np.ndarray
    Hr: np.ndarray  # r x r^2, column j*r + k
    Br: np.ndarray
    Cr: np.ndarray

    @property
    def r(self) -> int:
        return self.Er.shape[0]

    @property
    def H3(self) -> np.ndarray:
        r = self.r
        return self.Hr.reshape(r, r, r)


@dataclass(eq=False)
class QirkaResult:
    V: np.ndarray
    W: np.ndarray
    reduced: ReducedQuadratic
    iterations: int
    converged: bool
    eig_history: list = field(default_factory=list)
    change_history: list = field(default_factory=list)
    mode: str = "two_sided"
    # Data of the final Sylvester solves (complex, before realification).
    Lambda: np.ndarray | None = None
    Chat: np.ndarray | None = None
    V1: np.ndarray | None = None
    V2: np.ndarray | None = None
    W1: np.ndarray | None = None
    W2: np.ndarray | None = None
    residuals: dict = field(default_factory=dict)
    spectral_abscissa_reduced: float | None = None

    def write_log(self, path) -> None:
        """Iteration log as CSV: iter, max_rel_eig_change, spectral_abscissa_reduced."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "max_rel_eig_change", "spectral_abscissa_reduced"])
            for it, (lam, ch) in enumerate(zip(self.eig_history, self.change_history), start=1):
                w.writerow([it, repr(float(ch)), repr(float(np.max(lam.real)))])


def reduce_quadratic(model: QuadraticModel, V, W=None) -> ReducedQuadratic:
    """Petrov-Galerkin projection ``E_r = W^T E V`` etc.; ``H_r = W^T H (V kron V)``."""
    V = np.asarray(V, dtype=float)
    W = V if W is None else np.asarray(W, dtype=float)
    if V.shape != W.shape or V.shape[0] != model.N:
        raise ValueError("V and W must both be N x r")
    for X, name in ((V, "V"), (W, "W")):
        if np.linalg.matrix_rank(X) < X.shape[1]:
            raise ValueError(f"basis {name} is rank deficient")
    Er = W.T @ model.E @ V
    Ar = W.T @ model.Amu @ V
    Hr = W.T @ mode1_apply_pairs(model.H, V, V)
    Br = W.T @ model.Btil
    Cr = model.C @ V
    return ReducedQuadratic(Er=Er, Ar=Ar, Hr=Hr, Br=Br, Cr=Cr)


def initial_basis(model: QuadraticModel, r: int, *, lo: float = 1e-1, hi: float = 1e2) -> np.ndarray:
    """Orthonormal basis of real shifted solves ``(s E - A)^{-1} B 1``.

    Shifts are ``r`` log-spaced values in ``[lo, hi]`` times the magnitude of
    the spectral abscissa of ``(E, Amu)`` (or 1 if that is unavailable).
    Columns lost to rank deficiency are refilled with further shifts.
    """
    alpha = model.spectral_abscissa
    scale = abs(alpha) if alpha else 1.0
    b = model.Btil @ np.ones(model.m)
    count = r
    for _ in range(6):
        shifts = np.logspace(np.log10(lo), np.log10(hi), count) * scale
        cols = [ShiftedSolver(model.E, model.Amu, -s).solve(b) for s in shifts]
        X = np.column_stack(cols)
        X = X / np.linalg.norm(X, axis=0)
        Q = orth(X, tol=1e-8)
        if Q.shape[1] >= r:
            return Q[:, :r]
        count *= 2
        hi *= 10.0
    # pad deterministically with unit directions if the span stays too small
    Q = orth(np.column_stack([Q, np.eye(model.N)]), tol=1e-8)
    return Q[:, :r]


def _eig_change(lam, prev):
    if prev is None or len(prev) != len(lam):
        return np.inf
    return float(np.max(np.abs(lam - prev)) / max(np.max(np.abs(lam)), np.finfo(float).tiny))


def _jitter(red: ReducedQuadratic, seed: int) -> ReducedQuadratic:
    rng = np.random.default_rng(seed)
    Ar = red.Ar + 1e-8 * np.linalg.norm(red.Ar) * rng.standard_normal(red.Ar.shape)
    return ReducedQuadratic(red.Er, Ar, red.Hr, red.Br, red.Cr)


def _decompose(red: ReducedQuadratic, jitter_seed: int):
    try:
        return spectral_decompose(red.Er, red.Ar), red
    except DefectivePencilError as exc:
        logger.warning("reduced pencil defective (%s); retrying with 1e-8 jitter", exc)
        red = _jitter(red, jitter_seed)
        return spectral_decompose(red.Er, red.Ar, cond_max=np.inf), red


def _solve_columns(model, lam, rhs, transpose):
    out = np.zeros(rhs.shape, dtype=complex)
    t, r = 0, len(lam)
    while t < r:
        solver = ShiftedSolver(model.E, model.Amu, lam[t], transpose=transpose)
        out[:, t] = solver.solve(rhs[:, t])
        if np.imag(lam[t]) != 0.0 and t + 1 < r and lam[t + 1] == np.conj(lam[t]):
            out[:, t + 1] = np.conj(out[:, t])
            t += 2
        else:
            t += 1
    return out


def _basis(X):
    # Columns for shifts near the slow poles can be orders of magnitude
    # larger than the rest; equilibrate before the rank decision.
    nrm = np.linalg.norm(X, axis=0)
    nrm[nrm == 0] = 1.0
    return orth(X / nrm, tol=1e-12)


def _sylvester_residual(E, A, X, lam, rhs):
    R = -E @ X * lam[None, :] - A @ X - rhs
    nr = np.linalg.norm(rhs)
    return float(np.linalg.norm(R) / nr) if nr > 0 else float(np.linalg.norm(R))


def qirka(
    model: QuadraticModel,
    r: int,
    mode: str = "two_sided",
    *,
    tol: float = 1e-6,
    max_iter: int = 50,
    init=None,
) -> QirkaResult:
    """Run one- or two-sided Q-IRKA on ``model`` for reduced order ``r``.

    ``init`` may be an ``N x r`` initial basis, a :class:`ReducedQuadratic`,
    or ``None`` for :func:`initial_basis`. Convergence is declared when the
    sorted reduced eigenvalues change by less than ``tol`` relative to their
    largest magnitude. Non-convergence only warns; the last iterate is
    returned with ``converged=False``.
    """
    if mode not in ("two_sided", "one_sided"):
        raise ValueError(f"unknown mode {mode!r}")
    N = model.N
    if not 1 <= r < N:
        raise ValueError(f"reduced order must satisfy 1 <= r < {N}")
    H = symmetrize(model.H)
    E, A, B, C = model.E, model.Amu, model.Btil, model.C
    sym = QuadraticModel(E=E, Amu=A, H=H, Btil=B, C=C, q0=model.q0, mu=model.mu, n=model.n,
                         spectral_abscissa=model.spectral_abscissa)

    if isinstance(init, ReducedQuadratic):
        red = init
        V = W = None
    else:
        V0 = initial_basis(sym, r) if init is None else orth(np.asarray(init, dtype=float))
        if V0.shape[1] != r:
            raise ValueError("initial basis has wrong rank")
        V = W = V0
        red = reduce_quadratic(sym, V0, V0)

    res = QirkaResult(V=V, W=W, reduced=red, iterations=0, converged=False, mode=mode)
    prev = None
    retried = False
    for it in range(1, max_iter + 1):
        try:
            pair, red = _decompose(red, jitter_seed=it)
        except DefectivePencilError as exc:
            raise DefectivePencilError(f"iteration {it}: {exc}") from None
        lam, R = pair.Lambda, pair.R
        change = _eig_change(lam, prev)
        res.eig_history.append(lam)
        res.change_history.append(change)
        logger.debug("qirka iter %d: change %.3e, abscissa %.3e", it, change, lam.real.max())
        if change < tol:
            res.converged = True
            res.iterations = it - 1
            break
        ErR = red.Er @ R
        Hhat = np.linalg.solve(ErR, red.Hr @ np.kron(R, R)).reshape(r, r, r)
        Bhat = np.linalg.solve(ErR, red.Br)
        Chat = red.Cr @ R

        try:
            rhs1 = B @ Bhat.T
            V1 = _solve_columns(sym, lam, rhs1, transpose=False)
            rhs2 = mode1_core_apply(H, V1, Hhat, V1)
            V2 = _solve_columns(sym, lam, rhs2, transpose=False)
            if mode == "two_sided":
                rhs3 = C.T @ Chat
                W1 = _solve_columns(sym, lam, rhs3, transpose=True)
                # W1 pairs with mode 1, V1 with mode 3 (see module docstring)
                rhs4 = mode2_core_apply(H, W1, Hhat.transpose(1, 0, 2), V1)
                W2 = _solve_columns(sym, lam, rhs4, transpose=True)
            else:
                W1, W2 = V1, V2
        except SingularShiftError as exc:
            if retried:
                raise SingularShiftError(exc.lam, exc.rcond) from None
            logger.warning("%s; retrying once with 1e-8 jitter", exc)
            retried = True
            red = _jitter(red, it)
            continue

        Vn = _basis(realify(V1 + V2, lam))
        Wn = Vn if mode == "one_sided" else _basis(realify(W1 + W2, lam))
        if Vn.shape[1] < r or Wn.shape[1] < r:
            warnings.warn(f"Q-IRKA basis lost rank at iteration {it}; stopping", QirkaWarning, stacklevel=2)
            break
        V, W = Vn, Wn
        res.Lambda, res.Chat = lam, Chat
        res.V1, res.V2, res.W1, res.W2 = V1, V2, W1, W2
        res.residuals = {
            "V1": _sylvester_residual(E, A, V1, lam, rhs1),
            "V2": _sylvester_residual(E, A, V2, lam, rhs2),
        }
        if mode == "two_sided":
            res.residuals["W1"] = _sylvester_residual(E.T, A.T, W1, lam, rhs3)
            res.residuals["W2"] = _sylvester_residual(E.T, A.T, W2, lam, rhs4)
        red = reduce_quadratic(sym, V, W)
        res.iterations = it
        prev = lam

    res.V, res.W, res.reduced = V, W, red
    if res.eig_history:
        res.spectral_abscissa_reduced = float(np.max(res.eig_history[-1].real))
    if not res.converged:
        warnings.warn(
            f"Q-IRKA did not converge in {max_iter} iterations (last change "
            f"{res.change_history[-1]:.2e})", QirkaWarning, stacklevel=2)
    if res.spectral_abscissa_reduced is not None and res.spectral_abscissa_reduced >= 0:
        warnings.warn("final reduced pencil is not asymptotically stable", QirkaWarning, stacklevel=2)
    return res


def _psd_factor(P):
    w, U = np.linalg.eigh(0.5 * (P + P.T))
    keep = w > max(w.max(initial=0.0), 0.0) * 1e-14
    return U[:, keep] * np.sqrt(w[keep])


def truncated_gramians(model: QuadraticModel, *, lyap_tol: float = 1e-8):
    """Reachability Gramians ``(P1, P2)`` of the truncated Volterra series.

    ``A P1 E^T + E P1 A^T + B B^T = 0`` and
    ``A P2 E^T + E P2 A^T + H (P1 kron P1) H^T = 0``.
    """
    E, A = model.E, model.Amu
    P1 = solve_gen_lyapunov(E, A, model.Btil @ model.Btil.T, tol=lyap_tol)
    if model.H.nnz == 0:
        return P1, np.zeros_like(P1)
    L = _psd_factor(P1)
    if L.shape[1] == 0:
        return P1, np.zeros_like(P1)
    G = mode1_apply_pairs(model.H, L, L)
    P2 = solve_gen_lyapunov(E, A, G @ G.T, tol=lyap_tol)
    return P1, P2


def truncated_h2_norm(model: QuadraticModel) -> float:
    """``sqrt(tr(C (P1 + P2) C^T))`` from the first and third Volterra kernels."""
    if not np.any(model.Btil):
        return 0.0
    P1, P2 = truncated_gramians(model)
    val = float(np.trace(model.C @ (P1 + P2) @ model.C.T))
    return float(np.sqrt(max(val, 0.0)))

