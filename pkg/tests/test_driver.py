import json
import math

import numpy as np
import pytest

from plapinv import femspace as fs
from plapinv.balance import BetaMap, NotSignChanging, RootConfig
from plapinv.driver import (CSV_HEADER, RunAborted, RunConfig, TraceTooShort, UnknownGuess,
                            convergence_diagnostics, initial_guess, run_algorithm_a, validate_u0)
from plapinv.femspace import FeFunction
from plapinv.mesh import build_interval_mesh, build_rect_mesh


def _grid(mesh, u):
    n = int(round(math.sqrt(mesh.n_nodes)))
    return u.values.reshape(n, n)  # rows are y, columns are x


def test_midline_guess_is_odd(square64):
    u = initial_guess("midline", square64)
    g = _grid(square64, u)
    assert np.allclose(g, -g[:, ::-1], atol=1e-15)
    assert np.all(g[1:-1, 33:-1] > 0) and np.all(g[1:-1, 1:32] < 0)
    assert np.all(g[:, 32] == 0)


def test_diagonal_guess_is_odd(square64):
    g = _grid(square64, initial_guess("diagonal", square64))
    assert np.allclose(g, -g.T, atol=1e-15)


def test_circle_guess_sign_pattern(square64):
    u = initial_guess("circle", square64)
    x, y = square64.nodes.T
    r = np.hypot(x - 0.5, y - 0.5)
    inner = ~square64.boundary & (r < 0.24)
    outer = ~square64.boundary & (r > 0.26)
    assert np.all(u.values[inner] > 0) and np.all(u.values[outer] < 0)
    g = _grid(square64, u)
    assert np.allclose(g, g[::-1, ::-1], atol=1e-15)


def test_guess_rescales_rectangle():
    m = build_rect_mesh(8, 4, 2.0, 1.0)
    u = initial_guess("midline", m)
    assert np.all(u.values[np.isclose(m.nodes[:, 0], 1.0)] == 0)


def test_first_eig_product_and_custom():
    m = build_interval_mesh(100)
    u = initial_guess("first_eig_product", m)
    assert u.values[25] == pytest.approx(1.0)
    sq = build_rect_mesh(8, 8)
    vals = np.arange(sq.n_nodes, dtype=float)
    c = initial_guess("custom_nodal", sq, values=vals)
    assert np.all(c.values[sq.boundary_nodes] == 0)
    assert np.array_equal(c.values[sq.interior_nodes], vals[sq.interior_nodes])
    with pytest.raises(ValueError):
        initial_guess("custom_nodal", sq, values=[1.0])


def test_unknown_guess(square16):
    with pytest.raises(UnknownGuess):
        initial_guess("spiral", square16)
    with pytest.raises(UnknownGuess):
        initial_guess("midline", build_interval_mesh(10))


def test_validate_u0(square64):
    d = validate_u0(initial_guess("midline", square64))
    assert d.zero_fraction == pytest.approx(63 / 63 ** 2)
    assert d.warnings == ()
    with pytest.raises(NotSignChanging):
        validate_u0(FeFunction(square64, np.ones(square64.n_nodes)))


def test_validate_u0_plateau_warning(square16):
    x, y = square16.nodes.T
    vals = np.where(x < 0.3, 0.0, np.sin(2 * np.pi * (x - 0.3) / 0.7)) * y * (1 - y)
    vals[square16.boundary_nodes] = 0
    with pytest.warns(UserWarning, match="vanishes"):
        d = validate_u0(FeFunction(square16, vals))
    assert d.zero_fraction > 0.05


@pytest.mark.parametrize("kw", [dict(p=1.0), dict(p=2.0, max_iters=0),
                                dict(p=2.0, rq_stop_tol=0.0), dict(p=2.0, symmetry_breaking_noise=-1)])
def test_run_config_validation(kw):
    with pytest.raises(ValueError):
        RunConfig(**kw)


@pytest.fixture(scope="module")
def p2_trace(square64):
    return run_algorithm_a(square64, initial_guess("midline", square64),
                           RunConfig(2.0, max_iters=8, stop_early=False))


def test_p2_trace_invariants(p2_trace):
    R = p2_trace.R_values()
    assert np.all(R[2:] <= R[1:-1] * (1 + 1e-4))
    assert np.all(R[1:] >= 5 * math.pi ** 2 * 0.99)
    for s in p2_trace.states[1:]:
        assert abs(s.rayleigh.plus - s.rayleigh.minus) <= 1e-6 * s.R
    assert p2_trace.invariant_violations == []
    assert p2_trace.stop_reason == "max_iters"
    assert p2_trace.iterations == 8


def test_trace_serialisation(p2_trace, tmp_path):
    text = p2_trace.to_csv(tmp_path / "t.csv")
    lines = text.strip().split("\n")
    assert lines[0] == CSV_HEADER
    assert len(lines) == 10
    assert lines[1].startswith("0,,,")
    assert (tmp_path / "t.csv").read_text() == text
    data = json.loads(p2_trace.to_json())
    assert data["iterations"] == 8 and data["violations"] == 0
    assert data["alpha_star"] == pytest.approx(0.5)


def test_convergence_diagnostics(p2_trace):
    rep = convergence_diagnostics(p2_trace)
    assert rep.alpha_error <= 1e-3 and rep.beta_error <= 1e-3
    assert rep.lp_norm_rel_error <= 0.01
    assert rep.w_norm_rel_error <= 0.01
    assert rep.R_tail_slope <= 0


@pytest.mark.filterwarnings("ignore:u0 vanishes")
def test_trace_too_short(square16):
    tr = run_algorithm_a(square16, initial_guess("midline", square16), RunConfig(2.0, max_iters=1))
    with pytest.raises(TraceTooShort):
        convergence_diagnostics(tr)


@pytest.mark.parametrize("p", [1.8, 2.0, 3.0])
def test_early_stop(interval200, p):
    u0 = initial_guess("first_eig_product", interval200, m=2)
    u0 = u0 + 0.2 * initial_guess("first_eig_product", interval200, m=3)
    tr = run_algorithm_a(interval200, u0, RunConfig(p, max_iters=200))
    assert tr.stop_reason in ("rq_converged", "diff_converged")
    assert tr.iterations < 200


def test_symmetry_inheritance_union_jack():
    mesh = build_rect_mesh(32, 32, diagonal="union_jack")
    tr = run_algorithm_a(mesh, initial_guess("midline", mesh),
                         RunConfig(2.5, max_iters=5, stop_early=False))
    for s in tr.states:
        g = _grid(mesh, s.u_k)
        assert np.abs(g - g[::-1, :]).max() <= 1e-6 * np.abs(g).max()
        assert np.abs(g + g[:, ::-1]).max() <= 1e-6 * np.abs(g).max()


@pytest.mark.filterwarnings("ignore:u0 vanishes")
def test_power_beta_alpha_limit(square16):
    tr = run_algorithm_a(square16, initial_guess("midline", square16),
                         RunConfig(3.0, BetaMap("power", 3.0), max_iters=4, stop_early=False))
    assert tr.last.alpha_k == pytest.approx(2 ** (-1 / 3), abs=1e-3)


def test_noise_is_seeded(square16):
    cfg = RunConfig(2.0, max_iters=3, stop_early=False, symmetry_breaking_noise=1e-6, seed=4)
    a = run_algorithm_a(square16, initial_guess("circle", square16), cfg)
    b = run_algorithm_a(square16, initial_guess("circle", square16), cfg)
    assert a.to_csv() == b.to_csv()
    c = run_algorithm_a(square16, initial_guess("circle", square16),
                        RunConfig(2.0, max_iters=3, stop_early=False, symmetry_breaking_noise=1e-6, seed=5))
    assert c.to_csv() != a.to_csv()


def test_aborted_run_keeps_partial_trace(square16):
    u = FeFunction.interpolate(square16, lambda x, y: x * y * (x - 1) * (y - 1) * (x - 0.3 + 0.2 * y))
    with pytest.raises(RunAborted) as info:
        run_algorithm_a(square16, u, RunConfig(2.0, root=RootConfig(max_fevals=2)))
    assert info.value.trace.stop_reason == "no_sign_change"
    assert len(info.value.trace.states) == 1


def test_u0_on_other_mesh(square16):
    with pytest.raises(ValueError):
        run_algorithm_a(build_rect_mesh(16, 16), initial_guess("midline", square16), RunConfig(2.0))
