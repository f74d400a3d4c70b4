import json
import warnings

import numpy as np
import pytest
import scipy.linalg as spla

from gridmor.network import assemble_second_order, eval_f, synth_network
from gridmor.simulate import integrate_second_order, linf_rel_error
from gridmor.strh2 import (
    ReductionBasis,
    build_final_basis,
    eval_f_r,
    export_rom,
    extract_VT,
    load_rom,
    reduce_petrov,
    reduce_second_order,
    strh2_pipeline,
    theorem1_check,
)


def test_extract_vt(rng):
    V = np.eye(8)
    np.testing.assert_array_equal(extract_VT(V, 2), np.eye(8)[:2])
    np.testing.assert_array_equal(extract_VT(np.zeros((8, 3)), 2), np.zeros((2, 3)))
    X = rng.standard_normal((12, 4))
    VT = extract_VT(X, 3)
    Y = X.copy()
    Y[:3] = VT
    np.testing.assert_array_equal(Y, X)
    with pytest.raises(ValueError):
        extract_VT(np.zeros((7, 2)), 2)


def test_final_basis_generic(rng):
    C = np.full((1, 10), 0.1)
    b = build_final_basis(rng.standard_normal((10, 5)), C)
    assert b.r == 6
    np.testing.assert_allclose(b.Vfinal.T @ b.Vfinal, np.eye(6), atol=1e-12)


def test_final_basis_output_in_span(rng):
    C = np.full((1, 10), 0.1)
    VT = np.column_stack([C.T, rng.standard_normal((10, 4))])
    assert build_final_basis(VT, C).r == 5


def test_final_basis_zero_vt():
    C = np.full((1, 6), 1 / 6)
    b = build_final_basis(np.zeros((6, 3)), C)
    assert b.r == 1
    np.testing.assert_allclose(np.abs(b.Vfinal[:, 0]), 1 / np.sqrt(6))


def test_full_basis_is_change_of_coordinates(ring10, rng):
    Q = np.linalg.qr(rng.standard_normal((10, 10)))[0]
    rom = reduce_second_order(ring10, ReductionBasis(V_T=Q, Vfinal=Q))
    y = integrate_second_order(ring10, T=3, dt=1e-3)
    yr = integrate_second_order(rom, T=3, dt=1e-3)
    assert linf_rel_error(y, yr) <= 1e-10


def test_galerkin_structure(ring10, rng):
    V = np.linalg.qr(rng.standard_normal((10, 4)))[0]
    rom = reduce_second_order(ring10, V)
    np.testing.assert_array_equal(rom.Mr, rom.Mr.T)
    np.testing.assert_array_equal(rom.Dr, rom.Dr.T)
    assert np.linalg.eigvalsh(rom.Mr).min() > 0 and np.linalg.eigvalsh(rom.Dr).min() > 0
    I = np.eye(10)[:, :3]
    np.testing.assert_array_equal(reduce_second_order(ring10, I).Br, ring10.Bvec[:3])


def test_eval_f_r(ring10, rng):
    V = np.linalg.qr(rng.standard_normal((10, 4)))[0]
    rom = reduce_second_order(ring10, V)
    x = rng.standard_normal(4)
    np.testing.assert_allclose(eval_f_r(rom, ring10, x), V.T @ eval_f(ring10, V @ x), atol=1e-14)
    full = reduce_second_order(ring10, np.eye(10))
    d = rng.standard_normal(10)
    np.testing.assert_array_equal(full.f_r(d), eval_f(ring10, d))


def test_eval_f_r_zero():
    m = assemble_second_order(synth_network(5, "ring", 0))
    from gridmor.network import SecondOrderModel
    m0 = SecondOrderModel(M=m.M, Dmat=m.Dmat, Bvec=m.Bvec, Cout=m.Cout, ci=m.ci, cj=m.cj, K=m.K,
                          gamma=np.zeros_like(m.gamma))
    rom = reduce_second_order(m0, np.eye(5)[:, :2])
    np.testing.assert_array_equal(rom.f_r(np.zeros(2)), 0)


def test_petrov_projection_with_equal_bases(ring10, rng):
    V = np.linalg.qr(rng.standard_normal((10, 4)))[0]
    a, b = reduce_petrov(ring10, V, V), reduce_second_order(ring10, V)
    for name in ("Mr", "Dr", "Br", "Cr"):
        np.testing.assert_allclose(getattr(a, name), getattr(b, name), atol=1e-15)
    assert not a.symmetric and b.symmetric


def test_pipeline_end_to_end(ring10):
    res = strh2_pipeline(ring10, 4, variant="B")
    assert res.rom.r == 5
    assert res.rom.meta["method"] == "strh2-b" and res.rom.meta["r"] == 5
    np.testing.assert_array_equal(res.rom.Mr, res.rom.Mr.T)
    assert np.linalg.eigvalsh(res.rom.Dr).min() > 0


def test_variants_differ(ring10):
    a = strh2_pipeline(ring10, 3, variant="A")
    b = strh2_pipeline(ring10, 3, variant="B")
    assert np.max(spla.subspace_angles(a.basis.V_T, b.basis.V_T)) > 1e-3


def test_full_order_reproduces_output():
    m = assemble_second_order(synth_network(6, "ring", 2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = strh2_pipeline(m, 6, variant="B")
    assert res.rom.r == 6
    y = integrate_second_order(m, T=5, dt=1e-3)
    yr = integrate_second_order(res.rom, T=5, dt=1e-3)
    assert linf_rel_error(y, yr) <= 1e-6


def test_theorem1_diagnostics(ring10):
    res = strh2_pipeline(ring10, 5, variant="A", diagnostics=True)
    assert res.qirka.converged
    d = res.diagnostics["theorem1"]
    assert d["rank_W_T"] == 1
    assert d["max_angle"] <= 1e-8 and d["formula_mismatch"] <= 1e-8


def test_theorem1_needs_two_sided(ring10):
    res = strh2_pipeline(ring10, 3, variant="B")
    with pytest.raises(ValueError):
        theorem1_check(res.qirka, res.quad, ring10.Cout)


def test_export_round_trip(tmp_path, ring10):
    res = strh2_pipeline(ring10, 3, variant="A")
    path = tmp_path / "rom.json"
    text = export_rom(res.rom, path, config={"k": 1})
    assert json.loads(text)["meta"]["variant"] == "A"
    again = load_rom(path, ring10)
    np.testing.assert_array_equal(again.Mr, res.rom.Mr)
    np.testing.assert_array_equal(again.Vfinal, res.rom.Vfinal)
    assert export_rom(res.rom, config={"k": 1}) == text
