"""Swing-equation network model: ingestion, assembly, nonlinearity, equilibria.

The model is

    M delta'' + D delta' + f(delta) = B u,     y = C delta,

with ``f_i(delta) = sum_j K_ij sin(delta_i - delta_j - gamma_ij)``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as spla

logger = logging.getLogger(__name__)

__all__ = [
    "NetworkError",
    "EquilibriumError",
    "PowerNetwork",
    "SecondOrderModel",
    "parse_network",
    "network_from_dict",
    "network_to_dict",
    "synth_network",
    "assemble_second_order",
    "eval_f",
    "jacobian_f",
    "solve_equilibrium",
]


class NetworkError(ValueError):
    """Invalid network description."""


class EquilibriumError(RuntimeError):
    """Newton iteration for f(delta) = B failed."""


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PowerNetwork:
    """Raw oscillator-network parameters.

    Couplings are stored once per unordered pair with 0-based indices
    ``ci < cj``. ``output`` is ``None`` for the arithmetic-mean output or a
    ``p x n`` matrix.
    """

    omega_R: float
    J: np.ndarray
    D: np.ndarray
    B: np.ndarray
    ci: np.ndarray
    cj: np.ndarray
    K: np.ndarray
    gamma: np.ndarray
    output: np.ndarray | None = None

    def __post_init__(self):
        for name in ("J", "D", "B", "K", "gamma"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        for name in ("ci", "cj"):
            object.__setattr__(self, name, _frozen(getattr(self, name), dtype=np.intp))
        if self.output is not None:
            object.__setattr__(self, "output", _frozen(np.atleast_2d(self.output)))
        self._validate()

    @property
    def n(self) -> int:
        return len(self.J)

    @property
    def n_couplings(self) -> int:
        return len(self.K)

    def _validate(self):
        n = self.n
        if n < 1:
            raise NetworkError("network needs at least one node")
        if not (np.isfinite(self.omega_R) and self.omega_R > 0):
            raise NetworkError(f"omega_R must be positive, got {self.omega_R}")
        if len(self.D) != n or len(self.B) != n:
            raise NetworkError("J, D, B must have equal length")
        if np.any(self.J < 0):
            raise NetworkError("inertia J must be nonnegative")
        if np.any(self.D <= 0):
            raise NetworkError("damping D must be positive")
        m = len(self.K)
        if not (len(self.ci) == len(self.cj) == len(self.gamma) == m):
            raise NetworkError("coupling arrays must have equal length")
        if m:
            if self.ci.min() < 0 or self.cj.min() < 0 or max(self.ci.max(), self.cj.max()) >= n:
                raise NetworkError("coupling index out of range")
            if np.any(self.ci == self.cj):
                raise NetworkError("self-coupling is not allowed")
            if np.any(self.ci > self.cj):
                raise NetworkError("couplings must be stored with ci < cj")
            keys = self.ci * n + self.cj
            if len(np.unique(keys)) != m:
                raise NetworkError("duplicate coupling pair")
            if np.any(self.K < 0):
                raise NetworkError("coupling strength K must be nonnegative")
        if self.output is not None and self.output.shape[1] != n:
            raise NetworkError(f"output matrix must have {n} columns")


@dataclass(frozen=True)
class SecondOrderModel:
    """Assembled second-order model ``M, D, B, C`` plus the coupling table."""

    M: np.ndarray
    Dmat: np.ndarray
    Bvec: np.ndarray
    Cout: np.ndarray
    ci: np.ndarray
    cj: np.ndarray
    K: np.ndarray
    gamma: np.ndarray
    network: PowerNetwork | None = field(default=None, compare=False, repr=False)

    @property
    def n(self) -> int:
        return len(self.Bvec)

    @property
    def p(self) -> int:
        return self.Cout.shape[0]

    @property
    def mass_diag(self) -> np.ndarray:
        return np.diag(self.M)

    @property
    def damping_diag(self) -> np.ndarray:
        return np.diag(self.Dmat)

    def f(self, delta):
        return eval_f(self, delta)


# -- ingestion ---------------------------------------------------------------

def _require(d, key, where="network"):
    if key not in d:
        raise NetworkError(f"missing field {key}" + ("" if where == "network" else f" in {where}"))
    return d[key]


def network_from_dict(data: dict, *, rtol: float = 1e-12) -> PowerNetwork:
    """Build a validated :class:`PowerNetwork` from the JSON interchange dict.

    Both ``(i, j)`` and ``(j, i)`` may appear; they are merged after checking
    that ``K`` and ``gamma`` agree.
    """
    if not isinstance(data, dict):
        raise NetworkError("network description must be a JSON object")
    n = _require(data, "n")
    omega_R = _require(data, "omega_R")
    nodes = _require(data, "nodes")
    couplings = data.get("couplings", [])
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise NetworkError(f"n must be a positive integer, got {n!r}")
    if len(nodes) != n:
        raise NetworkError(f"expected {n} nodes, got {len(nodes)}")
    try:
        omega_R = float(omega_R)
        J = [float(_require(nd, "J", "node")) for nd in nodes]
        D = [float(_require(nd, "D", "node")) for nd in nodes]
        B = [float(_require(nd, "B", "node")) for nd in nodes]
    except (TypeError, AttributeError) as exc:
        raise NetworkError(f"malformed node record: {exc}") from None

    pairs: dict[tuple[int, int], tuple[float, float]] = {}
    for c in couplings:
        try:
            i, j = int(_require(c, "i", "coupling")), int(_require(c, "j", "coupling"))
            K, g = float(_require(c, "K", "coupling")), float(c.get("gamma", 0.0))
        except (TypeError, AttributeError) as exc:
            raise NetworkError(f"malformed coupling record: {exc}") from None
        if not (1 <= i <= n and 1 <= j <= n):
            raise NetworkError(f"coupling index out of range: ({i}, {j})")
        if i == j:
            raise NetworkError(f"self-coupling at node {i}")
        key = (min(i, j) - 1, max(i, j) - 1)
        if key in pairs:
            K0, g0 = pairs[key]
            if not (np.isclose(K, K0, rtol=rtol, atol=0) and np.isclose(g, g0, rtol=rtol, atol=0)):
                raise NetworkError(f"asymmetric coupling between nodes {i} and {j}")
            continue
        pairs[key] = (K, g)

    keys = sorted(pairs)
    output = data.get("output", "mean")
    if output == "mean" or output is None:
        C = None
    elif isinstance(output, dict) and "C" in output:
        C = np.asarray(output["C"], dtype=float)
        if C.ndim != 2 or C.shape[0] < 1:
            raise NetworkError("output C must be a nonempty matrix")
    else:
        raise NetworkError(f"unsupported output specification {output!r}")
    return PowerNetwork(
        omega_R=omega_R,
        J=J,
        D=D,
        B=B,
        ci=[k[0] for k in keys],
        cj=[k[1] for k in keys],
        K=[pairs[k][0] for k in keys],
        gamma=[pairs[k][1] for k in keys],
        output=C,
    )


def parse_network(path) -> PowerNetwork:
    """Read a network JSON file (see README for the schema)."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise NetworkError(f"cannot parse {path}: {exc}") from None
    return network_from_dict(data)


def network_to_dict(net: PowerNetwork) -> dict:
    out = {
        "n": net.n,
        "omega_R": float(net.omega_R),
        "nodes": [
            {"J": float(a), "D": float(b), "B": float(c)} for a, b, c in zip(net.J, net.D, net.B)
        ],
        "couplings": [
            {"i": int(i) + 1, "j": int(j) + 1, "K": float(K), "gamma": float(g)}
            for i, j, K, g in zip(net.ci, net.cj, net.K, net.gamma)
        ],
        "output": "mean" if net.output is None else {"C": net.output.tolist()},
    }
    return out


def _edges(n, topology, p_edge, rng):
    if topology == "ring":
        if n == 2:
            return [(0, 1)]
        return sorted((min(i, (i + 1) % n), max(i, (i + 1) % n)) for i in range(n))
    if topology == "complete":
        return [(i, j) for i in range(n) for j in range(i + 1, n)]
    if topology == "random":
        for _ in range(1000):
            mask = rng.random((n, n)) < p_edge
            edges = [(i, j) for i in range(n) for j in range(i + 1, n) if mask[i, j]]
            if _connected(n, edges):
                return edges
        raise NetworkError(f"could not draw a connected random graph with p={p_edge}")
    raise NetworkError(f"unknown topology {topology!r}")


def _connected(n, edges):
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        parent[find(i)] = find(j)
    return len({find(i) for i in range(n)}) == 1


def synth_network(
    n: int,
    topology: str = "ring",
    seed: int = 0,
    *,
    p_edge: float = 0.2,
    omega_R: float = 1.0,
) -> PowerNetwork:
    """Deterministic synthetic test network.

    ``topology`` is ``"ring"``, ``"complete"`` or ``"random"`` (Erdos-Renyi
    with edge probability ``p_edge``, redrawn until connected). Parameters
    are uniform: K in [0.5, 2], gamma in [0, 0.2], J in [0.5, 2],
    D in [0.5, 2]; injections B are drawn in [-1, 1] and centred so they
    sum to zero.
    """
    if n < 2:
        raise NetworkError("synthetic networks need n >= 2")
    rng = np.random.default_rng(seed)
    J = rng.uniform(0.5, 2.0, n)
    D = rng.uniform(0.5, 2.0, n)
    B = rng.uniform(-1.0, 1.0, n)
    B -= B.mean()
    edges = _edges(n, topology, p_edge, rng)
    m = len(edges)
    K = rng.uniform(0.5, 2.0, m)
    gamma = rng.uniform(0.0, 0.2, m)
    return PowerNetwork(
        omega_R=omega_R,
        J=J,
        D=D,
        B=B,
        ci=[e[0] for e in edges],
        cj=[e[1] for e in edges],
        K=K,
        gamma=gamma,
    )


# -- assembly and nonlinearity ---------------------------------------------

def assemble_second_order(net: PowerNetwork, output="mean") -> SecondOrderModel:
    """Form ``M = diag(2J/omega_R)``, ``D = diag(D/omega_R)``, ``B`` and ``C``.

    ``output`` may be ``"mean"`` (``C = 1^T / n``), ``"network"`` (use the
    network's own output spec) or an explicit ``p x n`` matrix.
    """
    n = net.n
    if isinstance(output, str) and output == "network":
        output = "mean" if net.output is None else net.output
    if isinstance(output, str):
        if output != "mean":
            raise NetworkError(f"unknown output {output!r}")
        C = np.full((1, n), 1.0 / n)
    else:
        C = np.atleast_2d(np.asarray(output, dtype=float))
        if C.shape[1] != n or C.shape[0] < 1:
            raise NetworkError(f"output matrix must be p x {n}")
    M = np.diag(2.0 * net.J / net.omega_R)
    Dm = np.diag(net.D / net.omega_R)
    return SecondOrderModel(
        M=_frozen(M),
        Dmat=_frozen(Dm),
        Bvec=_frozen(net.B),
        Cout=_frozen(C),
        ci=net.ci,
        cj=net.cj,
        K=net.K,
        gamma=net.gamma,
        network=net,
    )


def _check_len(model, delta):
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (model.n,):
        raise ValueError(f"delta must have shape ({model.n},), got {delta.shape}")
    return delta


def eval_f(model: SecondOrderModel, delta) -> np.ndarray:
    """Coupling nonlinearity ``f(delta)``; O(#couplings)."""
    delta = _check_len(model, delta)
    d = delta[model.ci] - delta[model.cj]
    fwd = model.K * np.sin(d - model.gamma)
    bwd = model.K * np.sin(-d - model.gamma)
    return np.bincount(model.ci, fwd, model.n) + np.bincount(model.cj, bwd, model.n)


def jacobian_f(model: SecondOrderModel, delta) -> np.ndarray:
    delta = _check_len(model, delta)
    n = model.n
    i, j = model.ci, model.cj
    d = delta[i] - delta[j]
    a = model.K * np.cos(d - model.gamma)   # d f_i / d delta_i
    b = model.K * np.cos(-d - model.gamma)  # d f_j / d delta_j
    Jf = np.zeros((n, n))
    np.add.at(Jf, (i, i), a)
    np.add.at(Jf, (i, j), -a)
    np.add.at(Jf, (j, j), b)
    np.add.at(Jf, (j, i), -b)
    return Jf


def solve_equilibrium(
    model: SecondOrderModel,
    gauge: int | None = None,
    *,
    u: float = 1.0,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> np.ndarray:
    """Solve ``f(delta) = B u`` with ``delta[gauge] = 0`` by damped Newton.

    ``gauge`` is 0-based and defaults to the last node. Newton runs on the
    gauge-fixed ``(n-1)``-dimensional system from a zero start; steps are
    halved until the residual decreases. The full residual
    ``||f(delta) - B u||_inf <= tol`` is checked on return, which catches
    injections that are inconsistent with the dropped equation.
    """
    n = model.n
    g = n - 1 if gauge is None else int(gauge)
    if not 0 <= g < n:
        raise ValueError(f"gauge index {g} out of range")
    target = u * np.asarray(model.Bvec)
    keep = np.delete(np.arange(n), g)
    delta = np.zeros(n)

    def resid(x):
        return eval_f(model, x) - target

    r = resid(delta)
    for it in range(max_iter):
        if np.max(np.abs(r)) <= tol:
            logger.debug("equilibrium converged in %d Newton steps", it)
            return delta
        Jr = jacobian_f(model, delta)[np.ix_(keep, keep)]
        try:
            lu = spla.lu_factor(Jr, check_finite=True)
        except (ValueError, spla.LinAlgError) as exc:
            raise EquilibriumError(f"gauge-fixed Jacobian unusable at iteration {it}: {exc}") from None
        if np.any(np.abs(np.diag(lu[0])) < 1e-14 * max(1.0, np.abs(Jr).max())):
            raise EquilibriumError(f"singular gauge-fixed Jacobian at iteration {it}")
        step = spla.lu_solve(lu, -r[keep])
        rn = np.linalg.norm(r[keep])
        t = 1.0
        for _ in range(40):
            trial = delta.copy()
            trial[keep] += t * step
            r_trial = resid(trial)
            if np.linalg.norm(r_trial[keep]) < rn:
                break
            t *= 0.5
        delta, r = trial, r_trial
        if np.max(np.abs(r[keep])) <= tol and np.max(np.abs(r)) > tol:
            raise EquilibriumError(
                "gauge-fixed system solved but the full residual is "
                f"{np.max(np.abs(r)):.3e}: injections admit no equilibrium"
            )
    if np.max(np.abs(r)) <= tol:
        return delta
    raise EquilibriumError(
        f"Newton did not converge in {max_iter} iterations "
        f"(residual {np.max(np.abs(r)):.3e}); injections may be infeasible"
    )
