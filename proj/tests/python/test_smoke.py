"""Smoke tests for the python bindings: each main operation is driven
once end to end with small fixtures."""

import math

import numpy as np
import pytest

import qeba


def make_linear_fixture(shape=(1, 4, 4), seed=0):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(math.prod(shape))
    w /= np.linalg.norm(w)
    boundary = np.full(shape, 0.5)
    victim = qeba.linear_victim(w, -float(w @ boundary.ravel()))
    return w, boundary, victim


def test_mse_and_l2():
    a = np.zeros((1, 2, 2))
    b = np.ones((1, 2, 2))
    assert qeba.mse(a, b) == pytest.approx(1.0)
    assert qeba.l2(np.array([3.0, 4.0])) == pytest.approx(5.0)


def test_theory_formulas():
    assert qeba.c_coefficient(2) == pytest.approx(2 * math.sqrt(2) / math.pi)
    assert 0.018 <= qeba.expected_cosine(150528, 100, 1.0) <= 0.022
    assert 0.055 <= qeba.expected_cosine(9408, 100, 0.5) <= 0.065
    assert qeba.lower_bound_factor(64, 0.0, 2.0, 1.0) == 1.0
    assert qeba.coordinate_density(0.0, 3) == pytest.approx(0.5)


def test_unit_directions_are_orthonormal():
    u = qeba.sample_unit_directions(12, 4, seed=7, orthogonalize=True)
    gram = u.T @ u
    assert np.allclose(gram, np.eye(4), atol=1e-10)


def test_dct_basis_roundtrip_and_rho():
    basis = qeba.dct_basis(1, 8, 1)
    v = np.random.default_rng(1).standard_normal(basis.n)
    assert np.allclose(basis.adjoint(basis.forward(v)), v, atol=1e-10)

    w, _, _ = make_linear_fixture()
    aligned = qeba.aligned_basis(w, 4, seed=3)
    assert qeba.rho(aligned, w) == pytest.approx(1.0)


def test_oracle_counts_queries_and_budget():
    _, boundary, victim = make_linear_fixture()
    oracle = qeba.Oracle(victim, budget=2)
    assert oracle.phi(np.clip(boundary + 0.1, 0, 1)) in (-1, 1)
    oracle.phi(boundary)
    assert oracle.query_count == 2
    with pytest.raises(qeba.QueryBudgetError):
        oracle.phi(boundary)


def test_estimate_gradient_points_along_the_gradient():
    w, boundary, victim = make_linear_fixture()
    oracle = qeba.Oracle(victim)
    est = qeba.estimate_gradient(boundary, qeba.full_basis(16), B=32,
                                 delta=1e-4, oracle=oracle, seed=5)
    assert est["queries_used"] == 32
    assert not est["degenerate"]
    assert float(est["direction"] @ w) > 0.2


def test_discretize_rounding():
    x = np.full((1, 1, 1), 0.5)
    assert qeba.discretize(x)[0, 0, 0] == pytest.approx(128 / 255)


def test_run_attack_reduces_mse_and_is_deterministic():
    shape = (1, 4, 4)
    rng = np.random.default_rng(2)
    source = np.clip(0.75 + 0.2 * rng.random(shape), 0, 1)
    target = np.clip(0.05 + 0.2 * rng.random(shape), 0, 1)
    w = rng.standard_normal(16)
    w /= np.linalg.norm(w)
    mid = 0.5 * (source + target)
    b = -float(w @ mid.ravel())
    if w @ source.ravel() + b < 0:
        w, b = -w, -b
    victim = qeba.linear_victim(w, b)

    result = qeba.run_attack(victim, source, target, qeba.full_basis(16),
                             B=8, max_queries=1200, theta=1e-2, seed=9)
    records = result["records"]
    assert records[0]["iteration"] == 0
    assert records[-1]["mse"] < qeba.mse(source, target) / 5
    assert result["queries"] <= 1200
    assert victim.sign(result["final_image"]) == 1

    rerun = qeba.run_attack(victim, source, target, qeba.full_basis(16),
                            B=8, max_queries=1200, theta=1e-2, seed=9)
    assert np.array_equal(result["final_image"], rerun["final_image"])


def test_measure_cosine_matches_limit():
    shape = (1, 8, 8)
    rng = np.random.default_rng(3)
    w = rng.standard_normal(64)
    w /= np.linalg.norm(w)
    b = -float(w @ np.full(64, 0.5))
    victim = qeba.linear_victim(w, b)
    point = qeba.linear_boundary_point(w, b, 1, 8, 8, seed=11)
    report = qeba.measure_cosine(victim, point, qeba.full_basis(64),
                                 B=16, delta=1e-5, trials=100, seed=13)
    predicted = qeba.c_coefficient(64) * math.sqrt(16 / 64)
    assert abs(report["measured"] - predicted) <= 3 * report["stderr"]


def test_qimg_roundtrip(tmp_path):
    img = np.random.default_rng(4).random((3, 5, 4))
    path = tmp_path / "img.qimg"
    qeba.save_qimg(img, path)
    assert np.array_equal(qeba.load_qimg(path), img)


def test_basis_cache_roundtrip(tmp_path):
    basis = qeba.random_basis(20, 5, seed=21)
    path = tmp_path / "basis.qeba"
    qeba.save_basis(basis, path)
    loaded = qeba.load_basis(path)
    assert np.array_equal(loaded.matrix(), basis.matrix())


def test_pca_basis_recovers_rank_one(tmp_path):
    g = np.random.default_rng(5).standard_normal(12)
    victim = qeba.linear_victim(g, 0.0)
    probes = [np.random.default_rng(10 + k).random((1, 3, 4))
              for k in range(6)]
    store = tmp_path / "grads.qgst"
    qeba.build_gradient_store([victim], probes, store)
    basis = qeba.pca_basis(store, n=1, seed=6)
    top = np.asarray(basis.matrix())[:, 0]
    assert abs(top @ (g / np.linalg.norm(g))) > 0.999999
