"""Dense kernels: shifted solves, pencil eigendecomposition, Lyapunov, orth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as spla
from scipy.linalg import lapack

__all__ = [
    "SingularShiftError",
    "DefectivePencilError",
    "UnstablePencilError",
    "LyapunovError",
    "SpectralPair",
    "ShiftedSolver",
    "solve_shifted",
    "spectral_decompose",
    "solve_gen_lyapunov",
    "lyapunov_residual",
    "orth",
    "realify",
    "spectral_abscissa",
]

_EPS = np.finfo(float).eps


class SingularShiftError(np.linalg.LinAlgError):
    def __init__(self, lam, rcond):
        super().__init__(f"shifted matrix (-lambda E - A) is singular for lambda={lam!r} (rcond={rcond:.2e})")
        self.lam = lam
        self.rcond = rcond


class DefectivePencilError(np.linalg.LinAlgError):
    pass


class UnstablePencilError(np.linalg.LinAlgError):
    pass


class LyapunovError(np.linalg.LinAlgError):
    pass


class ShiftedSolver:
    """LU of ``-lam E - A`` reused for several right-hand sides."""

    def __init__(self, E, A, lam, *, transpose=False, rcond_min=1e3 * _EPS):
        lam = complex(lam)
        Mat = -lam * np.asarray(E) - np.asarray(A)
        if transpose:
            Mat = Mat.T
        if lam.imag == 0.0:
            Mat = Mat.real
        self.lam = lam
        self.mat = Mat
        self.lu, self.piv, info = (lapack.zgetrf if np.iscomplexobj(Mat) else lapack.dgetrf)(Mat)
        anorm = np.linalg.norm(Mat, 1)
        if info > 0:
            raise SingularShiftError(lam, 0.0)
        gecon = lapack.zgecon if np.iscomplexobj(Mat) else lapack.dgecon
        rcond, _ = gecon(self.lu, anorm)
        if rcond < rcond_min:
            raise SingularShiftError(lam, rcond)
        self.rcond = rcond

    def _lu_solve(self, rhs):
        if np.iscomplexobj(rhs) and not np.iscomplexobj(self.lu):
            return spla.lu_solve((self.lu, self.piv), rhs.real) + 1j * spla.lu_solve((self.lu, self.piv), rhs.imag)
        return spla.lu_solve((self.lu, self.piv), rhs)

    def solve(self, rhs, *, refine: int = 1):
        """Solve with ``refine`` steps of iterative refinement.

        Refinement makes the result componentwise backward stable, which
        keeps weakly coupled blocks of the solution accurate even when
        other blocks are several orders of magnitude larger.
        """
        rhs = np.asarray(rhs)
        x = self._lu_solve(rhs)
        for _ in range(refine):
            x = x + self._lu_solve(rhs - self.mat @ x)
        return x


def solve_shifted(E, A, lam, rhs, *, transpose=False):
    """Solve ``(-lam E - A) x = rhs`` (or the transposed system).

    Raises :class:`SingularShiftError` when ``-lam`` is (numerically) a
    generalized eigenvalue of ``(E, A)``.
    """
    return ShiftedSolver(E, A, lam, transpose=transpose).solve(rhs)


@dataclass(frozen=True)
class SpectralPair:
    """Right eigenvectors ``R`` and eigenvalues ``Lambda`` of ``(E_r, A_r)``."""

    R: np.ndarray
    Lambda: np.ndarray

    @property
    def cond(self) -> float:
        return float(np.linalg.cond(self.R))


def _order(lam, imag_tol):
    """Sort by (Re, |Im|, Im) after snapping near-real values to the real axis."""
    lam = np.array(lam, dtype=complex)
    scale = max(np.abs(lam).max(initial=0.0), 1.0)
    lam.imag[np.abs(lam.imag) <= imag_tol * scale] = 0.0
    idx = np.lexsort((lam.imag, np.abs(lam.imag), lam.real))
    return lam, idx


def spectral_decompose(Er, Ar, *, cond_max: float = 1e12) -> SpectralPair:
    """Eigendecomposition ``A_r R = E_r R Lambda`` of a real pencil.

    Eigenvalues are sorted by real part then imaginary part, with each
    conjugate pair adjacent (negative imaginary part first) and the second
    eigenvector set to the exact conjugate of the first. Columns of ``R``
    have unit 2-norm.
    """
    Er = np.atleast_2d(np.asarray(Er, dtype=float))
    Ar = np.atleast_2d(np.asarray(Ar, dtype=float))
    lam, R = spla.eig(Ar, Er)
    if not np.all(np.isfinite(lam)):
        raise DefectivePencilError("pencil has infinite eigenvalues (E_r singular)")
    lam, idx = _order(lam, imag_tol=1e-13)
    lam, R = lam[idx], R[:, idx].astype(complex)
    r = len(lam)
    t = 0
    while t < r:
        if lam[t].imag != 0.0:
            if t + 1 >= r or not np.isclose(lam[t + 1], np.conj(lam[t]), rtol=1e-8, atol=1e-12):
                raise DefectivePencilError(f"unpaired complex eigenvalue {lam[t]}")
            lam[t + 1] = np.conj(lam[t])
            R[:, t + 1] = np.conj(R[:, t])
            t += 2
        else:
            R[:, t] = R[:, t].real
            t += 1
    R /= np.linalg.norm(R, axis=0)
    pair = SpectralPair(R=R, Lambda=lam)
    c = pair.cond
    if not np.isfinite(c) or c > cond_max:
        raise DefectivePencilError(f"eigenvector matrix condition number {c:.2e} exceeds {cond_max:.0e}")
    return pair


def realify(X, lam):
    """Replace each conjugate-pair column couple by (Re, Im) of the first member.

    ``lam`` must be ordered as returned by :func:`spectral_decompose`.
    """
    X = np.asarray(X)
    out = np.empty(X.shape, dtype=float)
    t, r = 0, len(lam)
    while t < r:
        if np.imag(lam[t]) != 0.0:
            out[:, t] = X[:, t].real
            out[:, t + 1] = X[:, t].imag
            t += 2
        else:
            out[:, t] = X[:, t].real
            t += 1
    return out


def spectral_abscissa(E, A) -> float:
    return float(np.max(spla.eigvals(A, E).real))


def lyapunov_residual(E, A, Q, P) -> float:
    """Relative residual ``||A P E^T + E P A^T + Q|| / ||Q||`` (Frobenius)."""
    R = A @ P @ E.T + E @ P @ A.T + Q
    nq = np.linalg.norm(Q)
    scale = nq if nq > 0 else 1.0
    return float(np.linalg.norm(R) / scale)


def solve_gen_lyapunov(E, A, Q, *, tol: float = 1e-8, check_stability: bool = True,
                       refine: int = 2) -> np.ndarray:
    """Solve ``A P E^T + E P A^T + Q = 0`` for symmetric ``P``.

    The equation is transformed with ``E^{-1}`` and handed to the
    Bartels-Stewart solver in SciPy, followed by up to ``refine`` steps of
    iterative refinement on the residual (useful when the pencil has
    eigenvalues close to the imaginary axis).
    """
    E = np.asarray(E, dtype=float)
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    Q = 0.5 * (Q + Q.T)
    if E.ndim == 0:
        E, A, Q = (np.atleast_2d(x) for x in (E, A, Q))
    lu = spla.lu_factor(E)
    At = spla.lu_solve(lu, A)
    Qt = spla.lu_solve(lu, spla.lu_solve(lu, Q).T).T
    if check_stability:
        alpha = float(np.max(np.linalg.eigvals(At).real))
        if alpha >= 0:
            raise UnstablePencilError(f"pencil is not stable (spectral abscissa {alpha:.3e})")
    P = spla.solve_continuous_lyapunov(At, -Qt)
    P = 0.5 * (P + P.T)
    res = lyapunov_residual(E, A, Q, P)
    for _ in range(refine):
        if res <= 1e-3 * tol:
            break
        R = At @ P + P @ At.T + Qt
        Pn = P + spla.solve_continuous_lyapunov(At, -R)
        Pn = 0.5 * (Pn + Pn.T)
        rn = lyapunov_residual(E, A, Q, Pn)
        if not rn < res:
            break
        P, res = Pn, rn
    if not np.isfinite(res) or res > tol:
        raise LyapunovError(f"Lyapunov residual {res:.2e} exceeds {tol:.0e}")
    return P


def orth(X, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis for the numerical range of ``X``.

    Rank is the number of singular values above ``tol * sigma_max``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float).T).T
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("orth of an all-zero matrix")
    r = int(np.sum(s > tol * s[0]))
    Q = U[:, :r]
    # deterministic sign: largest-magnitude entry of each column positive
    idx = np.argmax(np.abs(Q), axis=0)
    Q = Q * np.sign(Q[idx, np.arange(r)])
    return Q
