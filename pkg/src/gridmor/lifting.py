"""Exact quadratic lifting of the swing model.

Lifted state ``q = [delta; delta'; sin(delta); cos(delta)]`` (length 4n)
gives

    E q' = A q + H (q kron q) + B u,    y = C q,

with ``E = blkdiag(I, M, I, I)``. The quadratic tensor is assembled directly
in standard Kronecker ordering and is symmetric in its last two modes by
construction (each bilinear term is split in half over both orderings).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as spla
import scipy.sparse as sp

from .linalg import UnstablePencilError
from .network import SecondOrderModel, eval_f
from .tensor import SparseTensor3, mode1_apply

logger = logging.getLogger(__name__)

__all__ = [
    "LiftedSystem",
    "QuadraticModel",
    "LiftError",
    "lift_state",
    "build_coupling_blocks",
    "assemble_quadratic",
    "shift_and_stabilize",
    "lift_equilibrium",
    "quadratic_rhs",
    "zero_angle_state",
    "lift_model",
]


class LiftError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LiftedSystem:
    """Unshifted lifted system (single input ``u``)."""

    E: np.ndarray
    A: np.ndarray
    H: SparseTensor3
    B: np.ndarray   # N x 1
    C: np.ndarray   # p x N
    n: int

    @property
    def N(self) -> int:
        return self.E.shape[0]


@dataclass(frozen=True, eq=False)
class QuadraticModel:
    """Quadratic system ``E x' = Amu x + H (x kron x) + Btil utilde``, ``y = C x``.

    For a lifted grid model ``x = q - q0``, ``utilde = [u, 1]`` and ``Amu`` is
    the shifted linear part stabilized by ``-mu E``. Generic quadratic test
    systems may leave ``q0``/``n`` unset.
    """

    E: np.ndarray
    Amu: np.ndarray
    H: SparseTensor3
    Btil: np.ndarray
    C: np.ndarray
    q0: np.ndarray | None = None
    mu: float = 0.0
    n: int | None = None
    spectral_abscissa: float | None = None

    @property
    def N(self) -> int:
        return self.E.shape[0]

    @property
    def m(self) -> int:
        return self.Btil.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]


def lift_state(delta, ddelta) -> np.ndarray:
    delta = np.asarray(delta, dtype=float).ravel()
    ddelta = np.asarray(ddelta, dtype=float).ravel()
    if delta.shape != ddelta.shape:
        raise ValueError("delta and ddelta must have the same length")
    return np.concatenate([delta, ddelta, np.sin(delta), np.cos(delta)])


def zero_angle_state(n: int) -> np.ndarray:
    return lift_state(np.zeros(n), np.zeros(n))


def build_coupling_blocks(model: SecondOrderModel):
    """Sparse ``n x n^2`` blocks ``(Z, Psi, Phi)`` with
    ``f(delta) = -(Z (s kron c) + Psi (c kron c) + Psi (s kron s))`` and
    ``Phi (u kron v) = u * v``, where ``s = sin(delta)``, ``c = cos(delta)``.

    Block ``k`` (columns ``k*n .. k*n+n-1``) multiplies ``x_k * y``.
    """
    n = model.n
    rows, cols, zv, pv = [], [], [], []
    for a, b, K, g in zip(model.ci, model.cj, model.K, model.gamma):
        kc, ks = K * np.cos(g), 0.5 * K * np.sin(g)
        for k, j in ((a, b), (b, a)):
            # Z_k(j, j) = K cos g,  Z_k(k, j) = -K cos g ; Psi_k likewise with +K sin g / 2
            rows += [j, k]
            cols += [k * n + j, k * n + j]
            zv += [kc, -kc]
            pv += [ks, ks]
    shape = (n, n * n)
    Z = sp.csr_matrix((zv, (rows, cols)), shape=shape)
    Psi = sp.csr_matrix((pv, (rows, cols)), shape=shape)
    idx = np.arange(n)
    Phi = sp.csr_matrix((np.ones(n), (idx, idx * n + idx)), shape=shape)
    return Z, Psi, Phi


def _tensor_entries(model: SecondOrderModel):
    n = model.n
    b2, b3, b4 = n, 2 * n, 3 * n
    idx = np.arange(n)
    I, Jx, Kx, V = [], [], [], []

    def sym(rows, x, y, v):
        # v * x*y split evenly between (x, y) and (y, x)
        I.extend([rows, rows])
        Jx.extend([x, y])
        Kx.extend([y, x])
        V.extend([0.5 * v, 0.5 * v])

    one = np.ones(n)
    # sin' = delta' * cos ; cos' = -delta' * sin
    sym(b3 + idx, b2 + idx, b4 + idx, one)
    sym(b4 + idx, b2 + idx, b3 + idx, -one)
    # M delta'' = ... - f(delta), expanded with the angle-sum identities
    a, b = np.asarray(model.ci), np.asarray(model.cj)
    kc = model.K * np.cos(model.gamma)
    ks = model.K * np.sin(model.gamma)
    for r, o in ((a, b), (b, a)):
        row = b2 + r
        sym(row, b3 + o, b4 + r, kc)      # +K cos g * s_o c_r
        sym(row, b3 + r, b4 + o, -kc)     # -K cos g * s_r c_o
        sym(row, b4 + r, b4 + o, ks)      # +K sin g * c_r c_o
        sym(row, b3 + r, b3 + o, ks)      # +K sin g * s_r s_o
    cat = np.concatenate
    return cat(I), cat(Jx), cat(Kx), cat(V)


def assemble_quadratic(model: SecondOrderModel) -> LiftedSystem:
    """Lifted matrices ``E, A, H, B, C`` of the unshifted quadratic system."""
    n = model.n
    N = 4 * n
    E = np.eye(N)
    E[n:2 * n, n:2 * n] = model.M
    A = np.zeros((N, N))
    A[:n, n:2 * n] = np.eye(n)
    A[n:2 * n, n:2 * n] = -np.asarray(model.Dmat)
    B = np.zeros((N, 1))
    B[n:2 * n, 0] = model.Bvec
    C = np.zeros((model.p, N))
    C[:, :n] = model.Cout
    H = SparseTensor3(N, *_tensor_entries(model))
    return LiftedSystem(E=E, A=A, H=H, B=B, C=C, n=n)


def quadratic_rhs(sys: LiftedSystem, q, u: float = 1.0) -> np.ndarray:
    """``A q + H (q kron q) + B u`` (i.e. ``E q'``)."""
    q = np.asarray(q, dtype=float)
    return sys.A @ q + mode1_apply(sys.H, q, q) + sys.B[:, 0] * u


def _kron_shift_matrix(H: SparseTensor3, q0) -> np.ndarray:
    """Dense ``H ((I kron q0) + (q0 kron I))``, built from the tensor support."""
    N = H.dim
    q0 = np.asarray(q0, dtype=float)
    out = np.zeros((N, N))
    np.add.at(out, (H.i, H.j), H.vals * q0[H.k])
    np.add.at(out, (H.i, H.k), H.vals * q0[H.j])
    return out


def shift_and_stabilize(sys: LiftedSystem, q0=None, mu: float = 1e-3, *, check: bool = True) -> QuadraticModel:
    """Shift to ``x = q - q0`` and stabilize with ``Amu = Atilde - mu E``.

    ``q0`` defaults to the lift of ``delta = 0, delta' = 0``. With
    ``check=True`` an :class:`~gridmor.linalg.UnstablePencilError` is raised
    when ``(E, Amu)`` has eigenvalues with nonnegative real part.
    """
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    n, N = sys.n, sys.N
    q0 = zero_angle_state(n) if q0 is None else np.asarray(q0, dtype=float)
    if q0.shape != (N,):
        raise ValueError(f"q0 must have length {N}")
    drift = np.abs(q0[2 * n:3 * n] ** 2 + q0[3 * n:] ** 2 - 1.0).max()
    if drift > 1e-10:
        raise LiftError(f"q0 is not on the lift manifold (sin^2 + cos^2 off by {drift:.2e})")
    Atil = sys.A + _kron_shift_matrix(sys.H, q0)
    Amu = Atil - mu * sys.E
    b2 = sys.A @ q0 + mode1_apply(sys.H, q0, q0)
    Btil = np.column_stack([sys.B[:, 0], b2])
    alpha = float(np.max(spla.eigvals(Amu, sys.E).real))
    if check and alpha >= 0:
        raise UnstablePencilError(
            f"(E, Amu) is not stable for mu={mu:g}: spectral abscissa {alpha:.3e}; increase mu"
        )
    return QuadraticModel(E=sys.E, Amu=Amu, H=sys.H, Btil=Btil, C=sys.C, q0=q0, mu=float(mu), n=n,
                          spectral_abscissa=alpha)


def lift_equilibrium(model: SecondOrderModel, deltastar, *, u: float = 1.0, tol: float = 1e-8,
                     system: LiftedSystem | None = None) -> np.ndarray:
    """Lift an equilibrium ``f(delta*) = B u`` to ``q* = [delta*; 0; sin; cos]``.

    Checks that the unshifted quadratic right-hand side vanishes at ``q*``.
    """
    deltastar = np.asarray(deltastar, dtype=float)
    res0 = np.max(np.abs(eval_f(model, deltastar) - u * np.asarray(model.Bvec)))
    if res0 > tol:
        raise LiftError(f"delta* is not an equilibrium: ||f(delta*) - B u|| = {res0:.2e}")
    qstar = lift_state(deltastar, np.zeros_like(deltastar))
    sys = assemble_quadratic(model) if system is None else system
    res = np.linalg.norm(quadratic_rhs(sys, qstar, u))
    if res > tol:
        raise LiftError(f"lifted equilibrium residual {res:.2e} exceeds {tol:.0e}")
    return qstar


def lift_model(model: SecondOrderModel, mu: float = 1e-3, q0=None, *, check: bool = True) -> QuadraticModel:
    """Assemble, shift and stabilize in one call."""
    return shift_and_stabilize(assemble_quadratic(model), q0=q0, mu=mu, check=check)
