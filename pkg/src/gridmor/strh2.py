"""Structure-preserving reduction of the swing model from Q-IRKA bases.

The final basis is ``orth([V_T, C^T])`` where ``V_T`` holds the leading n
rows (the angle block) of the Q-IRKA basis ``V``. The output directions
``C^T`` stand in for the ``W`` basis, whose angle block has the same range.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla

from .lifting import QuadraticModel, lift_model
from .linalg import orth, realify
from .network import SecondOrderModel, eval_f
from .qirka import QirkaResult, qirka

logger = logging.getLogger(__name__)

__all__ = [
    "ReductionBasis",
    "ReducedSecondOrderModel",
    "StrH2Result",
    "extract_VT",
    "build_final_basis",
    "reduce_second_order",
    "reduce_petrov",
    "eval_f_r",
    "strh2_pipeline",
    "theorem1_check",
    "export_rom",
]


@dataclass(frozen=True, eq=False)
class ReductionBasis:
    V_T: np.ndarray
    Vfinal: np.ndarray

    @property
    def r(self) -> int:
        return self.Vfinal.shape[1]


@dataclass(frozen=True, eq=False)
class ReducedSecondOrderModel:
    """``Mr dr'' + Dr dr' + W^T f(V dr) = Br u``, ``y_r = Cr dr``.

    ``Wfinal`` is ``None`` for Galerkin projections (``W = V``).
    """

    Mr: np.ndarray
    Dr: np.ndarray
    Br: np.ndarray
    Cr: np.ndarray
    Vfinal: np.ndarray
    source: SecondOrderModel = field(repr=False)
    Wfinal: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def r(self) -> int:
        return self.Mr.shape[0]

    @property
    def symmetric(self) -> bool:
        return self.Wfinal is None

    def f_r(self, delta_r):
        return eval_f_r(self, self.source, delta_r)


def extract_VT(V, n: int) -> np.ndarray:
    V = np.asarray(V)
    if V.ndim != 2 or V.shape[0] != 4 * n:
        raise ValueError(f"expected a {4 * n} x r basis, got {V.shape}")
    return V[:n].copy()


def build_final_basis(V_T, Cout, *, tol: float = 1e-10) -> ReductionBasis:
    """``orth([V_T, C^T])``; the reduced order is the numerical rank."""
    V_T = np.atleast_2d(np.asarray(V_T, dtype=float))
    Ct = np.atleast_2d(np.asarray(Cout, dtype=float)).T
    X = np.column_stack([V_T, Ct])
    if not np.any(X):
        raise ValueError("cannot build a basis from all-zero inputs")
    return ReductionBasis(V_T=V_T, Vfinal=orth(X, tol=tol))


def _sym(X):
    return 0.5 * (X + X.T)


def reduce_second_order(model: SecondOrderModel, basis) -> ReducedSecondOrderModel:
    """Galerkin projection with ``W = V``; symmetry of ``Mr``, ``Dr`` enforced."""
    V = basis.Vfinal if isinstance(basis, ReductionBasis) else np.asarray(basis, dtype=float)
    if V.shape[0] != model.n:
        raise ValueError("basis row count must equal n")
    return ReducedSecondOrderModel(
        Mr=_sym(V.T @ model.M @ V),
        Dr=_sym(V.T @ model.Dmat @ V),
        Br=V.T @ np.asarray(model.Bvec),
        Cr=model.Cout @ V,
        Vfinal=V,
        source=model,
    )


def reduce_petrov(model: SecondOrderModel, Vb, Wb, *, cond_max: float = 1e12) -> ReducedSecondOrderModel:
    """Oblique projection ``Mr = Wb^T M Vb`` etc.; symmetry is not guaranteed."""
    Vb = np.asarray(Vb, dtype=float)
    Wb = np.asarray(Wb, dtype=float)
    if Vb.shape != Wb.shape or Vb.shape[0] != model.n:
        raise ValueError("Vb and Wb must both be n x r")
    c = np.linalg.cond(Wb.T @ Vb)
    if not np.isfinite(c) or c > cond_max:
        raise np.linalg.LinAlgError(f"Wb^T Vb is near singular (cond {c:.2e})")
    return ReducedSecondOrderModel(
        Mr=Wb.T @ model.M @ Vb,
        Dr=Wb.T @ model.Dmat @ Vb,
        Br=Wb.T @ np.asarray(model.Bvec),
        Cr=model.Cout @ Vb,
        Vfinal=Vb,
        source=model,
        Wfinal=Wb,
        meta={"symmetric": False},
    )


def eval_f_r(rom: ReducedSecondOrderModel, model: SecondOrderModel, delta_r) -> np.ndarray:
    """``W^T f(V delta_r)`` evaluated through the full nonlinearity."""
    delta_r = np.asarray(delta_r, dtype=float)
    if delta_r.shape != (rom.r,):
        raise ValueError(f"delta_r must have shape ({rom.r},)")
    W = rom.Vfinal if rom.Wfinal is None else rom.Wfinal
    return W.T @ eval_f(model, rom.Vfinal @ delta_r)


@dataclass(eq=False)
class StrH2Result:
    rom: ReducedSecondOrderModel
    basis: ReductionBasis
    qirka: QirkaResult
    quad: QuadraticModel
    variant: str
    r_q: int
    diagnostics: dict = field(default_factory=dict)


def theorem1_check(res: QirkaResult, model: QuadraticModel, Cout, *, rank_tol: float = 1e-8) -> dict:
    """Compare the angle block of ``W = W1 + W2`` with ``C^T`` for a two-sided run.

    ``W_T`` is taken from the realified ``W1 + W2`` of the final Sylvester
    solves, before orthonormalization: after orthonormalization the angle
    block can be many orders of magnitude smaller than the rest of ``W`` and
    its rank is no longer resolvable. Returns the largest principal angle
    between ``Range(W_T)`` and ``Range(C^T)``, the numerical rank of ``W_T``
    and the relative mismatch between ``W_T`` and the realified
    ``C^T Chat (mu I - Lambda)^{-1}``.
    """
    if res.mode != "two_sided" or res.W1 is None:
        raise ValueError("needs the Sylvester data of a two-sided run")
    n = model.n
    Ct = np.atleast_2d(np.asarray(Cout, dtype=float)).T
    lam = res.Lambda
    W_T = realify(res.W1 + res.W2, lam)[:n]
    s = np.linalg.svd(W_T, compute_uv=False)
    rank = int(np.sum(s > rank_tol * s[0])) if s.size and s[0] > 0 else 0
    angle = float(np.max(spla.subspace_angles(W_T, Ct))) if rank else float("nan")
    predicted = realify((Ct @ res.Chat) / (model.mu - lam)[None, :], lam)
    mismatch = float(np.linalg.norm(predicted - W_T) / np.linalg.norm(predicted))
    return {"max_angle": angle, "rank_W_T": rank, "formula_mismatch": mismatch}


def strh2_pipeline(
    model: SecondOrderModel,
    r_q: int,
    mu: float = 1e-3,
    variant: str = "A",
    *,
    tol: float = 1e-6,
    max_iter: int = 50,
    quad: QuadraticModel | None = None,
    diagnostics: bool = False,
) -> StrH2Result:
    """Lift, run Q-IRKA (A: two-sided, B: one-sided), build ``orth([V_T, C^T])``
    and project the second-order model."""
    variant = variant.upper()
    if variant not in ("A", "B"):
        raise ValueError("variant must be 'A' (two-sided) or 'B' (one-sided)")
    quad = lift_model(model, mu=mu) if quad is None else quad
    mode = "two_sided" if variant == "A" else "one_sided"
    res = qirka(quad, r_q, mode, tol=tol, max_iter=max_iter)
    V_T = extract_VT(res.V, model.n)
    basis = build_final_basis(V_T, model.Cout)
    rom = reduce_second_order(model, basis)
    expected = min(r_q + model.p, model.n)
    if basis.r != expected:
        logger.info("final basis has rank %d (r_q + p capped at n gives %d)", basis.r, expected)
    meta = {
        "method": f"strh2-{variant.lower()}",
        "r_q": int(r_q),
        "r": int(basis.r),
        "mu": float(quad.mu),
        "variant": variant,
        "converged": bool(res.converged),
        "iterations": int(res.iterations),
    }
    object.__setattr__(rom, "meta", meta)
    out = StrH2Result(rom=rom, basis=basis, qirka=res, quad=quad, variant=variant, r_q=r_q)
    if diagnostics and variant == "A":
        out.diagnostics["theorem1"] = theorem1_check(res, quad, model.Cout)
    return out


def _listify(x):
    return np.asarray(x).tolist()


def export_rom(rom: ReducedSecondOrderModel, path=None, *, config: dict | None = None) -> str:
    """Reduced-model JSON ``{Mr, Dr, Br, Cr, Vfinal, [Wfinal], meta, config}``."""
    payload = {
        "Mr": _listify(rom.Mr),
        "Dr": _listify(rom.Dr),
        "Br": _listify(rom.Br),
        "Cr": _listify(rom.Cr),
        "Vfinal": _listify(rom.Vfinal),
        "meta": rom.meta,
    }
    if rom.Wfinal is not None:
        payload["Wfinal"] = _listify(rom.Wfinal)
    if config is not None:
        payload["config"] = config
    text = json.dumps(payload, sort_keys=True, indent=1)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text


def load_rom(path, model: SecondOrderModel) -> ReducedSecondOrderModel:
    with open(path) as fh:
        d = json.load(fh)
    W = np.asarray(d["Wfinal"]) if "Wfinal" in d else None
    return ReducedSecondOrderModel(
        Mr=np.asarray(d["Mr"]), Dr=np.asarray(d["Dr"]), Br=np.asarray(d["Br"]),
        Cr=np.asarray(d["Cr"]), Vfinal=np.asarray(d["Vfinal"]), source=model, Wfinal=W,
        meta=d.get("meta", {}),
    )
