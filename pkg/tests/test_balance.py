import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plapinv import femspace as fs
from plapinv.balance import (BetaMap, Bracket, NoSignChange, NotSignChanging, PhiMap, RootConfig,
                             balance_residual, find_balanced_alpha, fixed_point, phi)
from plapinv.femspace import FeFunction
from plapinv.mesh import build_rect_mesh
from plapinv.ppoisson import PPoissonConfig


def midline(mesh):
    return FeFunction.interpolate(mesh, lambda x, y: x * y * (x - 1) * (y - 1) * (x - 0.5))


def skewed(mesh):
    return FeFunction.interpolate(mesh, lambda x, y: x * y * (x - 1) * (y - 1) * (x - 0.3 + 0.2 * y))


def test_fixed_points():
    assert fixed_point(BetaMap("linear")) == pytest.approx(0.5, abs=1e-14)
    assert BetaMap("power", 2.0).alpha_star == pytest.approx(1 / math.sqrt(2), abs=1e-13)


@given(p=st.floats(1.01, 20.0))
@settings(max_examples=40, deadline=None)
def test_power_fixed_point(p):
    assert fixed_point(BetaMap("power", p)) == pytest.approx(2 ** (-1 / p), abs=1e-13)


@given(kind=st.sampled_from(["linear", "power"]), p=st.floats(1.1, 8.0),
       a=st.floats(0, 1), b=st.floats(0, 1))
@settings(max_examples=60, deadline=None)
def test_beta_map_contract(kind, p, a, b):
    beta = BetaMap(kind, p)
    assert beta(0.0) == 1.0 and beta(1.0) == 0.0
    if a < b:
        assert beta(a) >= beta(b)
    assert 0.0 <= beta(a) <= 1.0


def test_beta_map_validation():
    with pytest.raises(ValueError):
        BetaMap("cubic")
    with pytest.raises(ValueError):
        BetaMap("power", -1.0)


def test_bracket_validation():
    Bracket(0.1, 0.2)
    for lo, hi in [(0.2, 0.1), (-0.1, 0.5), (0.5, 1.5)]:
        with pytest.raises(ValueError):
            Bracket(lo, hi)


def test_not_sign_changing(square16):
    pos = FeFunction.interpolate(square16, lambda x, y: x * (1 - x) * y * (1 - y))
    with pytest.raises(NotSignChanging):
        PhiMap(pos, BetaMap(), PPoissonConfig(2.0))


@pytest.mark.parametrize("p", [1.7, 2.0, 3.0])
def test_phi_at_endpoints_has_one_sign(square16, p):
    u = skewed(square16)
    cfg = PPoissonConfig(p)
    I = square16.interior_nodes
    assert np.all(phi(0.0, u, BetaMap("linear", p), cfg).values[I] <= 0)
    assert np.all(phi(1.0, u, BetaMap("linear", p), cfg).values[I] >= 0)


@pytest.mark.parametrize("p", [1.7, 2.0, 3.0])
def test_phi_monotone_in_alpha(square16, p):
    pm = PhiMap(skewed(square16), BetaMap("linear", p), PPoissonConfig(p))
    alphas = [0.0, 0.05, 0.2, 0.45, 0.5, 0.8, 1.0]
    for a, b in zip(alphas, alphas[1:]):
        va, vb = pm(a).values, pm(b).values
        assert np.all(va <= vb + 1e-8 * max(np.abs(va).max(), np.abs(vb).max()))


@pytest.mark.parametrize("c", [0.01, 1.0, 250.0])
def test_phi_ignores_input_scale(square16, c):
    u = skewed(square16)
    cfg, beta = PPoissonConfig(2.5), BetaMap("linear", 2.5)
    v1, v2 = phi(0.4, u, beta, cfg), phi(0.4, c * u, beta, cfg)
    assert np.allclose(v1.values, v2.values, rtol=0, atol=1e-10 * np.abs(v1.values).max())


def test_phi_of_negated_input(square16):
    # with beta = 1 - alpha the parts trade places: phi(a, -u) = -phi(1 - a, u)
    u = skewed(square16)
    cfg, beta = PPoissonConfig(2.5), BetaMap("linear", 2.5)
    v1, v2 = phi(0.4, -u, beta, cfg), -phi(0.6, u, beta, cfg)
    assert np.allclose(v1.values, v2.values, rtol=0, atol=1e-10 * np.abs(v1.values).max())


def test_residual_markers(square16):
    u = skewed(square16)
    cfg = PPoissonConfig(2.0)
    assert balance_residual(0.0, u, BetaMap(), cfg) == -math.inf
    assert balance_residual(1.0, u, BetaMap(), cfg) == math.inf


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_residual_continuous_inside_window(square16, p):
    u, beta, cfg = skewed(square16), BetaMap("linear", p), PPoissonConfig(p)
    pm = PhiMap(u, beta, cfg)
    root = find_balanced_alpha(u, beta, cfg, phimap=pm).alpha_k
    for a in (0.7 * root, root, 1.3 * root):
        F0, F1 = pm.residual(a), pm.residual(a * (1 + 1e-7))
        assert math.isfinite(F0) and math.isfinite(F1)
        assert abs(F1 - F0) <= 1e-4 * pm.rayleigh(a).total


@pytest.mark.parametrize("p", [2.0, 2.7])
def test_midline_balances_at_half(square16, p):
    u = midline(square16)
    cfg = PPoissonConfig(p)
    F = balance_residual(0.5, u, BetaMap("linear", p), cfg)
    R = fs.rayleigh(phi(0.5, u, BetaMap("linear", p), cfg), p).total
    assert abs(F) <= 1e-6 * R
    res = find_balanced_alpha(u, BetaMap("linear", p), cfg)
    assert res.alpha_k == pytest.approx(0.5, abs=1e-6)


@pytest.mark.parametrize("p", [1.7, 2.0, 3.0])
@pytest.mark.parametrize("guess", [
    lambda x, y: x * y * (x - 1) * (y - 1) * (x - 0.3 + 0.2 * y),
    lambda x, y: x * y * (x - 1) * (y - 1) * ((x - 0.5) * (y - 0.5) - 0.01),
    lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y) * (x + y - 1.3),
])
def test_generic_guess_balances(p, guess):
    mesh = build_rect_mesh(24, 24)
    u = FeFunction.interpolate(mesh, guess)
    cfg = PPoissonConfig(p)
    root = RootConfig()
    res = find_balanced_alpha(u, BetaMap("linear", p), cfg, root)
    assert 0.0 < res.alpha_k < 1.0
    assert res.beta_k == pytest.approx(1.0 - res.alpha_k)
    rep = fs.rayleigh(res.u_next, p)
    assert rep.plus is not None and rep.minus is not None
    assert abs(rep.plus - rep.minus) <= root.F_tol * rep.total
    assert res.fevals <= root.max_fevals


def test_eigenfunction_alpha_half():
    from scipy.sparse.linalg import eigsh
    mesh = build_rect_mesh(32, 32)
    I = mesh.interior_nodes
    K = fs.stiffness_matrix(mesh)[I][:, I].tocsc()
    M = fs.mass_matrix(mesh)[I][:, I].tocsc()
    mu, V = eigsh(K, k=3, M=M, sigma=0)
    vals = np.zeros(mesh.n_nodes)
    vals[I] = V[:, 1]
    u = FeFunction(mesh, vals)
    res = find_balanced_alpha(u, BetaMap(), PPoissonConfig(2.0))
    assert res.alpha_k == pytest.approx(0.5, abs=1e-4)
    ut = fs.normalize_lp(u, 2.0)
    assert np.allclose(res.u_next.values, ut.values / (2 * mu[1]), atol=1e-10)


def test_no_sign_change_with_tiny_budget(square16):
    with pytest.raises(NoSignChange) as info:
        find_balanced_alpha(skewed(square16), BetaMap(), PPoissonConfig(2.0),
                            RootConfig(max_fevals=3))
    assert info.value.samples


def test_warm_start_reduces_newton_work(square16):
    pm = PhiMap(skewed(square16), BetaMap("linear", 3.0), PPoissonConfig(3.0))
    pm(0.2)
    cold = pm.newton_iterations
    pm(0.2001)
    assert pm.newton_iterations - cold < cold
