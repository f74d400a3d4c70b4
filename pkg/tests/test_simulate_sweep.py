import math

import numpy as np
import pytest

from gridmor.baselines import collect_snapshots
from gridmor.lifting import QuadraticModel, assemble_quadratic, lift_model, lift_state, zero_angle_state
from gridmor.network import assemble_second_order, solve_equilibrium, synth_network
from gridmor.simulate import (
    Trajectory,
    integrate_lifted,
    integrate_quadratic,
    integrate_second_order,
    linf_rel_error,
)
from gridmor.sweep import SWEEP_HEADER, records_to_csv, sweep_orders
from gridmor.tensor import SparseTensor3


def test_equilibrium_is_stationary(two_node):
    ds = solve_equilibrium(two_node)
    tr = integrate_second_order(two_node, u=1.0, T=10, dt=1e-2, ic=(ds, np.zeros(2)), keep_states=True)
    assert np.max(np.abs(tr.states[:2] - ds[:, None])) <= 1e-6


def test_rk4_fourth_order(two_node):
    ic = (np.array([0.3, -0.2]), np.array([0.5, 0.0]))
    ref = integrate_second_order(two_node, T=2, dt=0.1 / 8, ic=ic).outputs[:, -1]
    e1 = abs(integrate_second_order(two_node, T=2, dt=0.1, ic=ic).outputs[:, -1] - ref)[0]
    e2 = abs(integrate_second_order(two_node, T=2, dt=0.05, ic=ic).outputs[:, -1] - ref)[0]
    assert 12 < e1 / e2 < 20


def test_lift_matches_nonlinear(ring6):
    y = integrate_second_order(ring6, T=5, dt=1e-3)
    quad = lift_model(ring6, mu=0.0, check=False)
    yq = integrate_quadratic(quad, T=5, dt=1e-3)
    assert linf_rel_error(y, yq) <= 1e-8
    yl = integrate_lifted(assemble_quadratic(ring6), zero_angle_state(6), T=5, dt=1e-3)
    assert linf_rel_error(y, yl) <= 1e-8


def test_shift_damps_toy_system():
    A = np.array([[-0.01, 1.0], [-1.0, -0.01]])
    def toy(mu):
        return QuadraticModel(E=np.eye(2), Amu=A - mu * np.eye(2), H=SparseTensor3.zeros(2),
                              Btil=np.zeros((2, 1)), C=np.eye(2)[:1], mu=mu)
    x0 = np.array([1.0, 0.0])
    a = integrate_quadratic(toy(0.0), T=5, dt=1e-2, x0=x0, keep_states=True).states[:, -1]
    b = integrate_quadratic(toy(0.1), T=5, dt=1e-2, x0=x0, keep_states=True).states[:, -1]
    assert np.linalg.norm(b) < np.linalg.norm(a)


def test_zero_input_zero_trajectory():
    m = QuadraticModel(E=np.eye(3), Amu=-np.eye(3), H=SparseTensor3.from_entries(3, [(0, 1, 2, 1.0)]),
                       Btil=np.zeros((3, 2)), C=np.ones((1, 3)))
    assert not np.any(integrate_quadratic(m, T=1, dt=0.1).outputs)


def test_linf_examples():
    t = np.arange(0, 10.0001, 1e-3)
    y = np.sin(t)[None, :]
    assert linf_rel_error(y, y) == 0.0
    assert linf_rel_error(y, np.zeros_like(y)) == 1.0
    z = y + 0.01 * np.cos(t)
    assert math.isclose(linf_rel_error(-3 * y, -3 * z), linf_rel_error(y, z), rel_tol=1e-14)
    with pytest.raises(ValueError):
        linf_rel_error(y, y[:, :-1])


def test_trajectory_csv():
    tr = Trajectory(times=np.array([0.0, 0.5]), outputs=np.array([[1.0, 2.0]]))
    assert tr.to_csv(["a"]) == "# a\nt,y1\n0.0,1.0\n0.5,2.0\n"


@pytest.fixture(scope="module")
def small_sweep():
    m = assemble_second_order(synth_network(8, "ring", 4))
    recs = sweep_orders(m, ["strh2-a", "pod"], range(2, 9), inputs=[("nominal", 1.0), ("perturbed", 1.001)], T=5)
    return m, recs


def test_sweep_cells(small_sweep):
    _, recs = small_sweep
    assert len(recs) == 2 * 7 * 2
    assert {(r.method, r.input) for r in recs} == {(a, b) for a in ("strh2-a", "pod") for b in ("nominal", "perturbed")}


def test_sweep_pod_full_rank_is_exact(small_sweep):
    m, recs = small_sweep
    s = collect_snapshots(m)
    rank = np.linalg.matrix_rank(s.Delta)
    rec = next(r for r in recs if r.method == "pod" and r.r == rank and r.input == "nominal")
    assert rec.rel_linf <= 1e-6


def test_sweep_strh2_trend():
    m = assemble_second_order(synth_network(18, "random", 1, p_edge=0.25))
    recs = sweep_orders(m, ["strh2-a"], [2, 3, 4, 15, 16, 17], T=5)
    small = min(r.rel_linf for r in recs if r.r <= 4)
    large = min(r.rel_linf for r in recs if r.r >= 15)
    assert large < small


def test_sweep_failed_cell_recorded():
    m = assemble_second_order(synth_network(5, "ring", 0))
    recs = sweep_orders(m, ["pod"], [4, 30], T=1)
    bad = [r for r in recs if r.r == 30]
    assert len(bad) == 1 and math.isnan(bad[0].rel_linf) and "rank" in bad[0].reason


def test_sweep_rejects_unknown_method(ring6):
    with pytest.raises(ValueError):
        sweep_orders(ring6, ["dmd"], [2])


def test_csv_without_timings_is_reproducible(small_sweep):
    _, recs = small_sweep
    text = records_to_csv(recs, ["config: x"])
    lines = text.splitlines()
    assert lines[0] == "# config: x" and lines[1] == ",".join(SWEEP_HEADER)
    assert all(line.split(",")[4:6] == ["", ""] for line in lines[2:])
    assert records_to_csv(recs, timings=True).splitlines()[2].split(",")[4] != ""
