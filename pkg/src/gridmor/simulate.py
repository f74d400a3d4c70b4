"""Fixed-step RK4 simulation of full, lifted and reduced models; error metric."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
import scipy.linalg as spla

from .lifting import LiftedSystem, QuadraticModel
from .network import SecondOrderModel
from .tensor import mode1_apply

__all__ = [
    "SimulationError",
    "Trajectory",
    "rk4",
    "integrate_second_order",
    "integrate_quadratic",
    "integrate_lifted",
    "linf_rel_error",
    "constant_input",
]


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled output trajectory (``outputs`` is ``p x steps``)."""

    times: np.ndarray
    outputs: np.ndarray
    states: np.ndarray | None = None

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def to_csv(self, header_lines=()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        p = self.outputs.shape[0]
        w.writerow(["t"] + [f"y{k + 1}" for k in range(p)])
        for t, row in zip(self.times, self.outputs.T):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        return buf.getvalue()


def constant_input(u):
    if callable(u):
        return u
    u = float(u)
    return lambda t: u


def rk4(rhs, x0, T: float, dt: float, output, *, keep_states: bool = False) -> Trajectory:
    """Classical RK4 with ``round(T/dt)`` steps; ``output(x)`` is sampled every step."""
    if dt <= 0 or T < 0:
        raise ValueError("need dt > 0 and T >= 0")
    steps = int(round(T / dt))
    x = np.array(x0, dtype=float)
    times = dt * np.arange(steps + 1)
    y0 = np.atleast_1d(output(x))
    Y = np.empty((len(y0), steps + 1))
    Y[:, 0] = y0
    X = np.empty((len(x), steps + 1)) if keep_states else None
    if keep_states:
        X[:, 0] = x
    for s in range(steps):
        t = times[s]
        k1 = rhs(t, x)
        k2 = rhs(t + 0.5 * dt, x + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, x + 0.5 * dt * k2)
        k4 = rhs(t + dt, x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise SimulationError(f"non-finite state at t={times[s + 1]:.6g}")
        Y[:, s + 1] = output(x)
        if keep_states:
            X[:, s + 1] = x
    return Trajectory(times=times, outputs=Y, states=X)


def _split(model):
    """(mass, damping, input vector, output matrix, nonlinearity) for full or reduced models."""
    if isinstance(model, SecondOrderModel):
        return model.M, model.Dmat, np.asarray(model.Bvec), model.Cout, model.f
    return model.Mr, model.Dr, model.Br, model.Cr, model.f_r


def integrate_second_order(model, u=1.0, T: float = 10.0, dt: float = 1e-3, ic=None,
                           *, keep_states: bool = False) -> Trajectory:
    """RK4 on ``[delta; delta']`` for a full or reduced second-order model.

    ``u`` is a constant or a callable ``u(t)``; ``ic = (delta0, ddelta0)``
    defaults to zeros.
    """
    M, D, B, C, f = _split(model)
    k = M.shape[0]
    try:
        if np.count_nonzero(M - np.diag(np.diag(M))) == 0:
            d = np.diag(M)
            if np.any(d == 0):
                raise np.linalg.LinAlgError("zero mass entry")
            Minv = np.diag(1.0 / d)
        else:
            Minv = spla.inv(M)
        if not np.all(np.isfinite(Minv)):
            raise np.linalg.LinAlgError("non-finite inverse")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SimulationError(f"mass matrix is singular: {exc}") from None
    MD = Minv @ D
    MB = Minv @ B
    uf = constant_input(u)
    if ic is None:
        x0 = np.zeros(2 * k)
    else:
        x0 = np.concatenate([np.asarray(ic[0], dtype=float), np.asarray(ic[1], dtype=float)])

    def rhs(t, x):
        pos, vel = x[:k], x[k:]
        acc = -MD @ vel - Minv @ f(pos) + MB * uf(t)
        return np.concatenate([vel, acc])

    return rk4(rhs, x0, T, dt, lambda x: C @ x[:k], keep_states=keep_states)


def _diag_or_lu(E):
    if np.count_nonzero(E - np.diag(np.diag(E))) == 0:
        inv = 1.0 / np.diag(E)
        return lambda v: inv * v
    lu = spla.lu_factor(E)
    return lambda v: spla.lu_solve(lu, v)


def integrate_quadratic(model: QuadraticModel, T: float = 10.0, dt: float = 1e-3, x0=None, u=1.0,
                        *, keep_states: bool = False) -> Trajectory:
    """RK4 for ``E x' = Amu x + H (x kron x) + Btil [u; 1]``; output ``C x``."""
    Einv = _diag_or_lu(model.E)
    uf = constant_input(u)
    x0 = np.zeros(model.N) if x0 is None else np.asarray(x0, dtype=float)
    A, H, B = model.Amu, model.H, model.Btil
    extra = B[:, 1:].sum(axis=1) if B.shape[1] > 1 else 0.0

    def rhs(t, x):
        return Einv(A @ x + mode1_apply(H, x, x) + B[:, 0] * uf(t) + extra)

    return rk4(rhs, x0, T, dt, lambda x: model.C @ x, keep_states=keep_states)


def integrate_lifted(sys: LiftedSystem, q0, T: float = 10.0, dt: float = 1e-3, u=1.0,
                     *, keep_states: bool = False) -> Trajectory:
    """RK4 for the unshifted lifted system ``E q' = A q + H (q kron q) + B u``."""
    Einv = _diag_or_lu(sys.E)
    uf = constant_input(u)
    A, H, b = sys.A, sys.H, sys.B[:, 0]

    def rhs(t, q):
        return Einv(A @ q + mode1_apply(H, q, q) + b * uf(t))

    return rk4(rhs, np.asarray(q0, dtype=float), T, dt, lambda q: sys.C @ q, keep_states=keep_states)


def linf_rel_error(y, yr) -> float:
    """``max_t |y - y_r| / max_t |y|`` per output, then the max over outputs."""
    Y = y.outputs if isinstance(y, Trajectory) else np.atleast_2d(np.asarray(y, dtype=float))
    Yr = yr.outputs if isinstance(yr, Trajectory) else np.atleast_2d(np.asarray(yr, dtype=float))
    if Y.shape != Yr.shape:
        raise ValueError(f"trajectories on different grids: {Y.shape} vs {Yr.shape}")
    den = np.max(np.abs(Y), axis=1)
    if np.any(den == 0):
        raise ZeroDivisionError("reference output is identically zero")
    return float(np.max(np.max(np.abs(Y - Yr), axis=1) / den))
