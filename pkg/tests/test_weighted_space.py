import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad
from scipy.special import gamma

from halfline_lq import ConfigError, Gram, WeightSpec, build_grid, from_ortho, inner, norm, to_ortho, weight_at


def test_uniform_nodes_clustering_one():
    g = build_grid(WeightSpec(0.5, "pure_power"), 8, 8.0, 1.0)
    assert np.allclose(g.nodes, 8.0 * np.arange(1, 9) / 9, rtol=0, atol=1e-15)
    assert np.allclose(g.spacing, 8.0 / 9, rtol=1e-14)


def test_graded_first_node():
    g = build_grid(WeightSpec(0.3, "capped"), 8, 8.0, 2.0)
    assert g.nodes[0] == pytest.approx(8.0 / 81, rel=1e-15)


def test_quadrature_weights_sum_to_xi_max():
    g = build_grid(WeightSpec(0.5, "capped"), 400, 20.0, 2.0)
    assert abs(g.quad_weights.sum() - 20.0) <= 1e-12 * 20.0
    assert np.all(g.quad_weights > 0)


def test_grid_invariants():
    g = build_grid(WeightSpec(0.8, "pure_power"), 50, 12.0, 2.5)
    assert np.all(np.diff(g.nodes) > 0)
    assert g.nodes[0] > 0 and g.nodes[-1] < g.xi_max
    assert g.n == 50 and g.spacing.size == 51


def test_refine_doubles_and_keeps_nodes():
    g = build_grid(WeightSpec(0.8, "capped"), 20, 20.0, 2.0)
    r = g.refine()
    assert r.n >= 2 * g.n and r.xi_max == g.xi_max
    assert r.refinement_level == g.refinement_level + 1
    assert np.allclose(r.nodes[1::2], g.nodes, rtol=1e-14)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n=7),
        dict(n=8.5),
        dict(xi_max=4.0),
        dict(xi_max=np.inf),
        dict(clustering=0.5),
        dict(clustering=np.nan),
    ],
)
def test_build_grid_rejects(kwargs):
    args = dict(n=10, xi_max=20.0, clustering=2.0) | kwargs
    with pytest.raises(ConfigError):
        build_grid(WeightSpec(), **args)


@pytest.mark.parametrize("theta", [0.0, 1.0, -0.2, np.nan])
def test_weight_spec_rejects_theta(theta):
    with pytest.raises(ConfigError):
        WeightSpec(theta)


def test_weight_spec_rejects_kind():
    with pytest.raises(ConfigError):
        WeightSpec(0.5, "cubic")


@pytest.mark.parametrize(
    "kind,xi,expected",
    [("pure_power", 1.0, 1.0), ("capped", 4.0, 1.0), ("pure_power", 4.0, 8.0), ("capped", 0.0, 0.0)],
)
def test_weight_at_values(kind, xi, expected):
    assert weight_at(WeightSpec(0.5, kind), xi) == pytest.approx(expected, rel=1e-15)


def test_weight_at_rejects_bad_input():
    with pytest.raises(ConfigError):
        weight_at(WeightSpec(), np.nan)
    with pytest.raises(ConfigError):
        weight_at(WeightSpec(), -1.0)


@pytest.mark.parametrize("kind", ["pure_power", "capped"])
def test_weight_monotone(kind):
    w = WeightSpec(0.7, kind)
    xs = np.linspace(0, 1, 501)
    assert np.all(np.diff(weight_at(w, xs)) >= 0)
    if kind == "capped":
        assert np.all(weight_at(w, np.linspace(1, 50, 100)) == 1.0)


def test_inner_indicator():
    g = build_grid(WeightSpec(0.5, "pure_power"), 1603, 20.0, 2.0)
    f = (g.nodes < 1).astype(float)
    assert inner(f, f, Gram.from_grid(g)) == pytest.approx(1 / 2.5, rel=1e-2)


def test_inner_zero():
    g = build_grid(WeightSpec(), 30)
    f = np.random.default_rng(0).normal(size=30)
    assert inner(f, np.zeros(30), Gram.from_grid(g)) == 0.0


@pytest.mark.parametrize("theta", [0.3, 0.5, 0.9])
def test_inner_exponential_against_quadrature(theta):
    g = build_grid(WeightSpec(theta, "pure_power"), 800, 20.0, 2.0)
    f = np.exp(-g.nodes)
    oracle = quad(lambda x: x ** (1 + theta) * np.exp(-2 * x), 0, np.inf, epsabs=1e-14)[0]
    assert oracle == pytest.approx(gamma(2 + theta) / 2 ** (2 + theta), rel=1e-12)
    assert inner(f, f, Gram.from_grid(g)) == pytest.approx(oracle, rel=1e-6)


def test_linear_polynomials_integrated():
    errs = []
    for n in (400, 801, 1603):
        g = build_grid(WeightSpec(), n, 20.0, 2.0)
        for a, b in ((1.0, 0.0), (0.3, 2.0)):
            exact = a * 20 + b * 200
            err = abs(np.sum((a + b * g.nodes) * g.quad_weights) - exact) / exact
            assert err <= 1e-3
        errs.append(abs(np.sum(g.nodes * g.quad_weights) - 200) / 200)
    assert errs[0] > errs[1] > errs[2]


def test_dimension_mismatch():
    gr = Gram.from_grid(build_grid(WeightSpec(), 10))
    with pytest.raises(ValueError):
        inner(np.ones(10), np.ones(9), gr)
    with pytest.raises(ValueError):
        to_ortho(np.ones(11), gr)


def test_to_ortho_examples():
    g = build_grid(WeightSpec(), 12)
    gr = Gram.from_grid(g)
    ones = Gram(np.ones(12), np.ones(12), np.ones(12))
    f = np.arange(12.0)
    assert np.array_equal(to_ortho(f, ones), f)
    e = np.zeros(12)
    e[4] = 1.0
    assert np.array_equal(to_ortho(e, gr), gr.sqrt_diag[4] * e)


def test_gram_positive_for_pure_power():
    gr = Gram.from_grid(build_grid(WeightSpec(0.9, "pure_power"), 200))
    assert np.all(gr.diag > 0)


_vec = arrays(np.float64, 24, elements=st.floats(-1e3, 1e3, allow_nan=False))
_GRAM = Gram.from_grid(build_grid(WeightSpec(0.6, "pure_power"), 24, 10.0, 2.0))


@settings(max_examples=60, deadline=None)
@given(_vec, _vec, st.floats(-10, 10))
def test_inner_product_axioms(f, g, c):
    gr = _GRAM
    # bound on every term's magnitude, so the tolerances are in units of rounding
    scale = 1 + (np.abs(f).max() + np.abs(g).max()) ** 2 * gr.diag.sum()
    assert inner(f, f, gr) >= 0
    assert inner(f, g, gr) == pytest.approx(inner(g, f, gr), abs=1e-13 * scale)
    assert inner(c * f + g, g, gr) == pytest.approx(c * inner(f, g, gr) + inner(g, g, gr), abs=1e-13 * scale * (1 + abs(c)))
    if np.any(np.abs(f) > 1e-150):  # below this f^2 underflows
        assert inner(f, f, gr) > 0


@settings(max_examples=60, deadline=None)
@given(_vec, _vec)
def test_to_ortho_isometry(f, g):
    gr = _GRAM
    y, z = to_ortho(f, gr), to_ortho(g, gr)
    scale = 1 + np.abs(f).max() * np.abs(g).max()
    assert abs(inner(f, g, gr) - y @ z) <= 1e-13 * scale * 24
    assert np.allclose(from_ortho(y, gr), f, rtol=1e-14, atol=1e-12)
    assert norm(f, gr) == pytest.approx(np.linalg.norm(y), rel=1e-12, abs=1e-12)


def test_batched_inner():
    gr = _GRAM
    F = np.random.default_rng(1).normal(size=(3, 5, 24))
    out = inner(F, F, gr)
    assert out.shape == (3, 5)
    assert out[2, 3] == pytest.approx(inner(F[2, 3], F[2, 3], gr))
