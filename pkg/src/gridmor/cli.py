"""Command-line front end: ``gridmor {lift,reduce,simulate,sweep,check}``.

Networks are given as a JSON path or a ``synth:`` URI, e.g.
``synth:ring:10:seed7`` or ``synth:random:39:seed0:p0.15``.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
failure (including failed invariants in ``check``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import collect_snapshots, pod_basis, reduce_with_petrov, str_qbt_basis
from .lifting import (
    LiftError,
    assemble_quadratic,
    lift_equilibrium,
    lift_model,
    quadratic_rhs,
    zero_angle_state,
)
from .network import (
    EquilibriumError,
    NetworkError,
    PowerNetwork,
    assemble_second_order,
    eval_f,
    parse_network,
    solve_equilibrium,
    synth_network,
)
from .qirka import qirka, truncated_h2_norm
from .simulate import SimulationError, integrate_lifted, integrate_second_order, linf_rel_error
from .strh2 import export_rom, load_rom, reduce_second_order, strh2_pipeline, theorem1_check
from .sweep import METHODS, records_to_csv, sweep_orders
from .tensor import mode1_apply

logger = logging.getLogger("gridmor")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2
_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class ConfigError(ValueError):
    """Invalid command-line configuration."""


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage
        self.original = exc


_INVALID = (ConfigError, NetworkError, FileNotFoundError, json.JSONDecodeError, KeyError)


@contextmanager
def stage(name):
    """Tag numerical failures with the pipeline stage that raised them."""
    try:
        yield
    except _INVALID:
        raise
    except (np.linalg.LinAlgError, ArithmeticError, SimulationError, EquilibriumError, LiftError,
            RuntimeError, ValueError) as exc:
        raise StageError(name, exc) from exc


# -- network resolution ------------------------------------------------------

def resolve_network(spec: str) -> PowerNetwork:
    """Load ``spec`` from disk or build it from a ``synth:`` URI."""
    if spec.startswith("synth:"):
        parts = spec.split(":")[1:]
        if len(parts) < 3:
            raise ConfigError(f"synth URI needs topology, n and seed: {spec!r}")
        topo, n_s, seed_s, *rest = parts
        try:
            n = int(n_s)
            seed = int(seed_s[4:] if seed_s.startswith("seed") else seed_s)
        except ValueError:
            raise ConfigError(f"bad synth URI {spec!r}") from None
        kw = {}
        for extra in rest:
            if extra.startswith("p"):
                try:
                    kw["p_edge"] = float(extra[1:])
                except ValueError:
                    raise ConfigError(f"bad edge probability in {spec!r}") from None
            else:
                raise ConfigError(f"unknown synth option {extra!r}")
        if topo not in ("ring", "complete", "random"):
            raise ConfigError(f"unknown topology {topo!r}")
        return synth_network(n, topo, seed, **kw)
    path = Path(spec)
    if not path.exists():
        raise FileNotFoundError(f"network file not found: {spec}")
    return parse_network(path)


def _model(args):
    net = resolve_network(args.net)
    return assemble_second_order(net, output="network")


# -- output helpers ----------------------------------------------------------

def _config(args) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "log")}
    cfg["version"] = __version__
    return cfg


def _header(args):
    return ["gridmor " + args.command, "config: " + json.dumps(_config(args), sort_keys=True)]


def _emit(text: str, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _positive(name, value):
    if not value > 0:
        raise ConfigError(f"{name} must be positive (got {value})")


# -- subcommands -------------------------------------------------------------

def cmd_lift(args):
    model = _model(args)
    if args.mu < 0:
        raise ConfigError("mu must be nonnegative")
    with stage("lift"):
        quad = lift_model(model, mu=args.mu, check=False)
        h2 = truncated_h2_norm(quad) if args.h2 else None
    H = quad.H
    stats = {
        "n": model.n,
        "N": quad.N,
        "p": quad.p,
        "mu": quad.mu,
        "tensor_nnz": H.nnz,
        "tensor_norm": H.norm(),
        "tensor_symmetric": bool(H.is_symmetric()),
        "spectral_abscissa": quad.spectral_abscissa,
        "stable": bool(quad.spectral_abscissa < 0),
        "truncated_h2_norm": h2,
        "config": _config(args),
    }
    if args.dump_tensor:
        H.dump(args.dump_tensor)
    _emit(_json(stats), args.out)
    return EXIT_OK


def _reduce(model, args):
    method = args.method
    if method in ("strh2-a", "strh2-b"):
        if args.rq is None:
            raise ConfigError("--rq is required for StrH2")
        _positive("rq", args.rq)
        with stage("strh2"), warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = strh2_pipeline(model, args.rq, args.mu, "A" if method == "strh2-a" else "B",
                                 tol=args.tol, max_iter=args.max_iter)
        if args.iter_log:
            res.qirka.write_log(args.iter_log)
        rom = res.rom
        rom.meta.update({"method": method})
        return rom
    r = args.r if args.r is not None else args.rq
    if r is None:
        raise ConfigError("--r (or --rq) is required")
    _positive("r", r)
    if method == "pod":
        with stage("pod"):
            snap = collect_snapshots(model, u=1.0, T=args.T_train, dt=args.dt_train)
            rom = reduce_second_order(model, pod_basis(snap, r))
        rom.meta.update({"method": "pod", "r": rom.r})
        return rom
    if method == "strqbt":
        with stage("strqbt"):
            quad = lift_model(model, mu=args.mu)
            f = str_qbt_basis(quad, r, args.qbt_block, ordering=args.qbt_ordering)
            rom = reduce_with_petrov(model, f.Vb, f.Wb)
        rom.meta.update({"method": "strqbt", "r": rom.r, "block": f.block, "ordering": f.ordering,
                         "symmetric": False})
        return rom
    raise ConfigError(f"unknown method {method!r}")


def cmd_reduce(args):
    model = _model(args)
    _positive("mu", args.mu)
    rom = _reduce(model, args)
    _emit(export_rom(rom, config=_config(args)) + "\n", args.out)
    return EXIT_OK


def cmd_simulate(args):
    model = _model(args)
    _positive("T", args.T)
    _positive("dt", args.dt)
    target = model
    if args.rom:
        target = load_rom(args.rom, model)
    with stage("simulate"):
        tr = integrate_second_order(target, u=args.u, T=args.T, dt=args.dt)
    _emit(tr.to_csv(_header(args)), args.out)
    return EXIT_OK


def cmd_sweep(args):
    model = _model(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise ConfigError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    if args.rmin < 1 or args.rmax < args.rmin:
        raise ConfigError("need 1 <= rmin <= rmax")
    _positive("mu", args.mu)
    _positive("T", args.T)
    _positive("dt", args.dt)
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    inputs = [("nominal", args.u)]
    if args.perturb is not None:
        _positive("perturb", args.perturb)
        inputs.append(("perturbed", args.u * (1.0 + args.perturb)))
    with stage("sweep"):
        recs = sweep_orders(model, methods, range(args.rmin, args.rmax + 1), args.mu, inputs,
                            jobs=args.jobs, T=args.T, dt=args.dt, qbt_block=args.qbt_block,
                            qbt_ordering=args.qbt_ordering, max_iter=args.max_iter, tol=args.tol)
    _emit(records_to_csv(recs, _header(args), timings=args.timings), args.out)
    return EXIT_OK


def _check_items(model, args):
    """Invariant suite: yields ``(name, passed, detail)``."""
    rng = np.random.default_rng(args.seed)
    sys_ = assemble_quadratic(model)
    H = sys_.H
    # tensor symmetry in the last two modes
    worst = 0.0
    for _ in range(args.samples):
        u, v = rng.standard_normal((2, sys_.N))
        d = np.linalg.norm(mode1_apply(H, u, v) - mode1_apply(H, v, u), np.inf)
        worst = max(worst, d / (H.norm() * np.linalg.norm(u) * np.linalg.norm(v)))
    yield "tensor_symmetry", worst <= 1e-13, {"max_rel_asymmetry": worst}

    # lift exactness from the zero state
    with stage("lift-exactness"):
        y = integrate_second_order(model, u=args.u, T=args.T, dt=args.dt)
        yq = integrate_lifted(sys_, zero_angle_state(model.n), T=args.T, dt=args.dt, u=args.u)
        err = linf_rel_error(y, yq)
    yield "lift_exactness", err <= 1e-8, {"rel_linf": err, "T": args.T, "dt": args.dt}

    # shifted linear part: angle columns
    with stage("shift"):
        quad = lift_model(model, mu=args.mu)
    n = model.n
    ref = np.zeros((quad.N, n))
    ref[:n] = -args.mu * np.eye(n)
    dev = float(np.max(np.abs(quad.Amu[:, :n] - ref)))
    yield "shifted_angle_columns", dev == 0.0, {"max_abs_deviation": dev}

    # equilibrium round trip
    detail = {}
    try:
        dstar = solve_equilibrium(model, u=args.u)
        q = lift_equilibrium(model, dstar, u=args.u, system=sys_)
        detail["network"] = {"residual": float(np.max(np.abs(eval_f(model, dstar) - args.u * model.Bvec)))}
        ok_net = bool(np.all(q[n:2 * n] == 0))
    except EquilibriumError as exc:
        detail["network"] = f"n/a ({exc})"
        ok_net = True
    # consistent injections guarantee a solvable case
    dt = rng.uniform(-0.3, 0.3, n)
    dt -= dt[-1]
    Bc = eval_f(model, dt)
    mc = replace(model, Bvec=Bc)
    dstar = solve_equilibrium(mc, u=1.0)
    q = lift_equilibrium(mc, dstar, u=1.0)
    res = float(np.linalg.norm(quadratic_rhs(assemble_quadratic(mc), q, 1.0)))
    detail["consistent"] = {"lifted_residual": res}
    yield "equilibrium_round_trip", ok_net and res <= 1e-8 and np.all(q[n:2 * n] == 0), detail

    # output range of the dual basis
    rq = min(args.rq, quad.N - 1)
    with stage("qirka"), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        qr = qirka(quad, rq, "two_sided", max_iter=args.max_iter)
        t1 = theorem1_check(qr, quad, model.Cout)
    ok = t1["max_angle"] <= 1e-8 and t1["rank_W_T"] == min(model.p, rq) and t1["formula_mismatch"] <= 1e-8
    t1.update({"r_q": rq, "converged": bool(qr.converged), "iterations": qr.iterations})
    yield "dual_output_range", ok, t1


def cmd_check(args):
    model = _model(args)
    _positive("mu", args.mu)
    items = []
    failed = False
    for name, passed, detail in _check_items(model, args):
        items.append({"name": name, "passed": bool(passed), "detail": detail})
        failed |= not passed
        logger.info("%s: %s", name, "pass" if passed else "FAIL")
    report = {"checks": items, "all_passed": not failed, "config": _config(args)}
    _emit(_json(report), args.out)
    return EXIT_NUMERIC if failed else EXIT_OK


# -- argument parsing --------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gridmor", description="Structure-preserving reduction of swing-equation networks.")
    p.add_argument("--log", default=None, choices=sorted(_LOG_LEVELS), help="log level (default: GRIDMOR_LOG or warn)")
    p.add_argument("--version", action="version", version=f"gridmor {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp, *, mu=True):
        sp.add_argument("--net", required=True, help="network JSON path or synth:<topology>:<n>:seed<k>[:p<prob>]")
        sp.add_argument("--out", default=None, help="output file (default stdout)")
        if mu:
            sp.add_argument("--mu", type=float, default=1e-3, help="spectral shift of the lifted linear part")

    def qirka_opts(sp):
        sp.add_argument("--tol", type=float, default=1e-6)
        sp.add_argument("--max-iter", type=int, default=50)

    def qbt_opts(sp):
        sp.add_argument("--qbt-block", choices=("first", "second"), default="second")
        sp.add_argument("--qbt-ordering", choices=("PQ", "QP"), default="PQ")

    sp = sub.add_parser("lift", help="lifted quadratic model statistics")
    common(sp)
    sp.add_argument("--dump-tensor", default=None, help="write the tensor as 'i j k value' text")
    sp.add_argument("--h2", action="store_true", help="also report the truncated H2 norm")
    sp.set_defaults(func=cmd_lift)

    sp = sub.add_parser("reduce", help="build a reduced model and write it as JSON")
    common(sp)
    sp.add_argument("--method", choices=METHODS, default="strh2-a")
    sp.add_argument("--rq", type=int, default=None, help="Q-IRKA order (StrH2)")
    sp.add_argument("--r", type=int, default=None, help="order for POD / Str-QBT")
    sp.add_argument("--T-train", type=float, default=10.0)
    sp.add_argument("--dt-train", type=float, default=1e-2)
    sp.add_argument("--iter-log", default=None, help="Q-IRKA iteration log CSV")
    qirka_opts(sp)
    qbt_opts(sp)
    sp.set_defaults(func=cmd_reduce)

    sp = sub.add_parser("simulate", help="simulate the full model or a reduced model")
    common(sp, mu=False)
    sp.add_argument("--rom", default=None, help="reduced-model JSON from 'reduce'")
    sp.add_argument("--u", type=float, default=1.0)
    sp.add_argument("--T", type=float, default=10.0)
    sp.add_argument("--dt", type=float, default=1e-3)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="error versus reduced order for several methods")
    common(sp)
    sp.add_argument("--methods", default="strh2-a,strh2-b,pod")
    sp.add_argument("--rmin", type=int, default=2)
    sp.add_argument("--rmax", type=int, default=10)
    sp.add_argument("--u", type=float, default=1.0)
    sp.add_argument("--perturb", type=float, default=None, help="relative input perturbation")
    sp.add_argument("--T", type=float, default=10.0)
    sp.add_argument("--dt", type=float, default=1e-3)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--timings", action="store_true", help="fill reduce_s/sim_s (output no longer reproducible)")
    qirka_opts(sp)
    qbt_opts(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("check", help="run the invariant suite")
    common(sp)
    sp.add_argument("--rq", type=int, default=4)
    sp.add_argument("--u", type=float, default=1.0)
    sp.add_argument("--T", type=float, default=5.0)
    sp.add_argument("--dt", type=float, default=1e-3)
    sp.add_argument("--samples", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-iter", type=int, default=50)
    sp.set_defaults(func=cmd_check)
    return p


def _setup_logging(level_name):
    name = (level_name or os.environ.get("GRIDMOR_LOG") or "warn").lower()
    if name not in _LOG_LEVELS:
        raise ConfigError(f"GRIDMOR_LOG must be one of {', '.join(_LOG_LEVELS)}")
    logging.basicConfig(level=_LOG_LEVELS[name], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.getLogger("gridmor").setLevel(_LOG_LEVELS[name])


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _setup_logging(args.log)
        return args.func(args)
    except StageError as exc:
        print(f"gridmor: numerical failure {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _INVALID as exc:
        print(f"gridmor: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"gridmor: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (np.linalg.LinAlgError, SimulationError, EquilibriumError, LiftError) as exc:
        print(f"gridmor: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
