"""Order sweeps: reduce with several methods over a range of orders and record
the relative L-infinity output error under nominal and perturbed inputs."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .baselines import collect_snapshots, pod_basis, reduce_with_petrov, str_qbt_basis
from .lifting import lift_model
from .network import SecondOrderModel
from .simulate import integrate_second_order, linf_rel_error
from .strh2 import build_final_basis, extract_VT, reduce_second_order
from .qirka import qirka

logger = logging.getLogger(__name__)

__all__ = ["METHODS", "SweepRecord", "sweep_orders", "build_rom", "records_to_csv", "SWEEP_HEADER"]

METHODS = ("strh2-a", "strh2-b", "pod", "strqbt")
SWEEP_HEADER = ["method", "r", "input", "rel_linf", "reduce_s", "sim_s", "converged"]


@dataclass
class SweepRecord:
    method: str
    r: int
    input: str
    rel_linf: float
    reduce_s: float = math.nan
    sim_s: float = math.nan
    converged: bool | None = None
    r_target: int | None = None
    reason: str = ""

    @property
    def wall_time_s(self) -> float:
        return self.reduce_s + self.sim_s


@dataclass(frozen=True)
class SweepSettings:
    mu: float = 1e-3
    T: float = 10.0
    dt: float = 1e-3
    T_train: float = 10.0
    dt_train: float = 1e-2
    qbt_block: str = "second"
    qbt_ordering: str = "PQ"
    tol: float = 1e-6
    max_iter: int = 50


class _Context:
    """Per-model data shared by all cells (lifted model, POD snapshots)."""

    def __init__(self, model: SecondOrderModel, settings: SweepSettings, methods):
        self.model = model
        self.settings = settings
        self._quad = None
        self._snap = None
        self.methods = methods

    @property
    def quad(self):
        if self._quad is None:
            self._quad = lift_model(self.model, mu=self.settings.mu)
        return self._quad

    @property
    def snapshots(self):
        if self._snap is None:
            s = self.settings
            self._snap = collect_snapshots(self.model, u=1.0, T=s.T_train, dt=s.dt_train)
        return self._snap


def build_rom(ctx: _Context, method: str, r: int):
    """Reduced model for ``method`` at target order ``r``; returns ``(rom, converged)``.

    StrH2 uses ``r_q = r - p`` so that ``orth([V_T, C^T])`` has order ``r``
    generically; POD and Str-QBT use ``r`` directly.
    """
    model, s = ctx.model, ctx.settings
    if method in ("strh2-a", "strh2-b"):
        r_q = r - model.p
        if r_q < 1:
            raise ValueError(f"order {r} too small for p={model.p}")
        mode = "two_sided" if method == "strh2-a" else "one_sided"
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = qirka(ctx.quad, r_q, mode, tol=s.tol, max_iter=s.max_iter)
        basis = build_final_basis(extract_VT(res.V, model.n), model.Cout)
        return reduce_second_order(model, basis), bool(res.converged)
    if method == "pod":
        return reduce_second_order(model, pod_basis(ctx.snapshots, r)), None
    if method == "strqbt":
        f = str_qbt_basis(ctx.quad, r, s.qbt_block, ordering=s.qbt_ordering)
        return reduce_with_petrov(model, f.Vb, f.Wb), None
    raise ValueError(f"unknown method {method!r}")


def _run_cell(args):
    ctx, method, r, inputs, refs = args
    s = ctx.settings
    out = []
    t0 = time.perf_counter()
    try:
        rom, conv = build_rom(ctx, method, r)
    except Exception as exc:  # recorded per cell, sweep continues
        reason = f"{type(exc).__name__}: {exc}"
        logger.warning("%s r=%d failed in reduction: %s", method, r, reason)
        return [SweepRecord(method, r, lab, math.nan, reason=reason, r_target=r) for lab, _ in inputs]
    t_red = time.perf_counter() - t0
    for (label, u), yref in zip(inputs, refs):
        t1 = time.perf_counter()
        try:
            yr = integrate_second_order(rom, u=u, T=s.T, dt=s.dt)
            err = linf_rel_error(yref, yr)
            reason = ""
        except Exception as exc:
            err, reason = math.nan, f"{type(exc).__name__}: {exc}"
            logger.warning("%s r=%d input %s failed: %s", method, r, label, reason)
        out.append(SweepRecord(method, rom.r, label, err, t_red, time.perf_counter() - t1, conv,
                               r_target=r, reason=reason))
    return out


def sweep_orders(model: SecondOrderModel, methods, r_range, mu: float = 1e-3, inputs=None, *,
                 jobs: int = 1, **settings) -> list[SweepRecord]:
    """Run every ``(method, r)`` cell and evaluate it under each input.

    ``inputs`` is a sequence of ``(label, u)``; the default is
    ``[("nominal", 1.0)]``. POD is always trained at ``u = 1``. Failed cells
    are recorded with ``rel_linf = nan`` and a reason.
    """
    methods = list(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    r_list = list(r_range)
    if not r_list or min(r_list) < 1:
        raise ValueError("orders must be positive")
    inputs = [("nominal", 1.0)] if inputs is None else list(inputs)
    s = SweepSettings(mu=mu, **settings)
    refs = [integrate_second_order(model, u=u, T=s.T, dt=s.dt) for _, u in inputs]
    ctx = _Context(model, s, methods)
    if any(m in ("strh2-a", "strh2-b", "strqbt") for m in methods):
        ctx.quad  # lift once before fanning out
    if "pod" in methods:
        ctx.snapshots
    cells = [(ctx, m, r, inputs, refs) for m in methods for r in r_list]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            chunks = list(ex.map(_run_cell, cells))
    else:
        chunks = [_run_cell(c) for c in cells]
    return [rec for chunk in chunks for rec in chunk]


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def records_to_csv(records, header_lines=(), *, timings: bool = False) -> str:
    """Sweep CSV. Timing columns stay empty unless ``timings`` is set so that
    reruns are byte-identical."""
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for rec in records:
        w.writerow([
            rec.method, rec.r, rec.input, _fmt(float(rec.rel_linf)),
            _fmt(float(rec.reduce_s)) if timings else "",
            _fmt(float(rec.sim_s)) if timings else "",
            _fmt(rec.converged),
        ])
    return buf.getvalue()
