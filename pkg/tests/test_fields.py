import math

import numpy as np
import pytest

from incflow.fields import (
    GridInterpolant,
    HolderModulus,
    LipschitzModulus,
    SmoothRateModulus,
    VectorField,
    box_bump_clip,
    builtin_field,
    builtin_suite,
    field_from_ref,
    grid_relu_approximate,
    grid_to_mlp,
    modulus_bound_eval,
    radial_bump_clip,
    rotation_field,
    sin_bump_field,
    squeeze_field,
    zero_field,
)


def kuhn_oracle(values, ns, X):
    """Independent argsort/barycentric walk over the coordinate-order
    simplices; valid for points inside [0,1]^d."""
    d = len(ns)
    shape = tuple(n + 1 for n in ns)
    out = np.zeros((len(X), values.shape[1]))
    t = X * np.array(ns, dtype=float)
    anchor = np.clip(np.floor(t).astype(int), 0, np.array(ns) - 1)
    u = t - anchor
    order = np.argsort(-u, axis=1, kind="stable")
    for row in range(len(X)):
        idx = anchor[row].copy()
        us = u[row, order[row]]
        acc = (1.0 - us[0]) * values[np.ravel_multi_index(tuple(idx), shape)]
        for k in range(d):
            idx[order[row, k]] += 1
            lam = us[k] - us[k + 1] if k + 1 < d else us[k]
            acc = acc + lam * values[np.ravel_multi_index(tuple(idx), shape)]
        out[row] = acc
    return out


# ---------------------------------------------------------------------------
# analytic fields


def test_rotation_field_values():
    f = rotation_field([0.5, 0.5], math.pi)
    v = f.eval(np.array([0.75, 0.5]))
    assert np.allclose(v, [0.0, 0.25 * math.pi], atol=1e-15)
    assert np.array_equal(f.eval(np.array([0.5, 0.5])), [0.0, 0.0])
    assert f.lipschitz_bound == math.pi


def test_squeeze_field_values():
    f = squeeze_field(0.5)
    assert np.allclose(f.eval(np.array([0.75, 0.2])), [-0.25, 0.0], atol=1e-15)
    assert np.array_equal(f.eval(np.array([0.5, 0.9])), [0.0, 0.0])
    assert f.lipschitz_bound == 1.0


def test_radial_clip_zero_beyond_outer_radius():
    f = builtin_field("rotation_clipped")
    pt = np.array([0.5 + 0.5 / math.sqrt(2), 0.5 + 0.5 / math.sqrt(2)])
    assert np.array_equal(f.eval(pt), [0.0, 0.0])
    assert np.array_equal(f.eval(np.array([0.5, 0.5])), [0.0, 0.0])


def test_radial_clip_identity_inside_inner_radius():
    raw = rotation_field([0.5, 0.5], math.pi)
    f = builtin_field("rotation_clipped")
    pt = np.array([0.6, 0.5])  # distance 0.1 < 1/8, profile is 1 there
    assert np.allclose(f.eval(pt), raw.eval(pt), atol=1e-15)


def test_radial_clip_validation():
    with pytest.raises(ValueError):
        radial_bump_clip(rotation_field([0.5, 0.5], 1.0), [0.5, 0.5], 0.3, 0.2)


def test_radial_clip_vanishes_outside_declared_support():
    f = builtin_field("squeeze_clipped")
    rng = np.random.default_rng(0)
    lo, hi = f.support_box
    pts = rng.uniform(-1.0, 2.0, size=(10_000, 2))
    outside = ~np.all((pts >= lo) & (pts <= hi), axis=1)
    assert outside.sum() > 5000
    assert np.array_equal(f.eval(pts[outside]), np.zeros((outside.sum(), 2)))


def test_field_lipschitz_bounds_dominate_on_pairs():
    rng = np.random.default_rng(1)
    X = rng.random((10_000, 2))
    Y = rng.random((10_000, 2))
    den = np.abs(X - Y).max(axis=1)
    for name, f in builtin_suite().items():
        num = np.abs(f.eval(X) - f.eval(Y)).max(axis=1)
        assert (num <= f.lipschitz_bound * den + 1e-9).all(), name


def test_box_clip_kills_any_outside_coordinate():
    f = box_bump_clip(builtin_field("sin_bump"), 0.4)
    pts = np.array([[-0.5, 0.5], [0.5, -0.5], [0.05, 0.5]])
    assert np.array_equal(f.eval(pts), np.zeros((3, 2)))


def test_box_clip_zero_field_stays_zero():
    f = box_bump_clip(zero_field(3), 0.4)
    rng = np.random.default_rng(2)
    assert np.array_equal(f.eval(rng.random((100, 3))), np.zeros((100, 3)))


def test_box_clip_identity_on_plateau():
    lin = VectorField(2, lambda X: X.copy(), 1.0,
                      support_box=np.array([[0.0, 0.0], [1.0, 1.0]]))
    f = box_bump_clip(lin, 0.4)
    assert np.allclose(f.eval(np.array([0.5, 0.5])), [0.5, 0.5], atol=1e-15)
    rng = np.random.default_rng(3)
    X = rng.uniform(0.2, 0.8, size=(10_000, 2))
    assert np.abs(f.eval(X) - lin.eval(X)).max() <= 1e-12


def test_box_clip_vanishes_outside_declared_support():
    # the clip target must vanish on the cube boundary (as every field in
    # the approximation pipeline does); sin_bump vanishes outside
    # [1/8, 7/8]^2
    f = box_bump_clip(builtin_field("sin_bump"), 0.4)
    lo, hi = f.support_box
    assert lo[0] == pytest.approx(0.1)
    assert hi[0] == pytest.approx((2 - 0.4) / (2 * (1 - 0.4)))
    rng = np.random.default_rng(4)
    pts = rng.uniform(-1.0, 3.0, size=(10_000, 2))
    outside = ~np.all((pts >= lo) & (pts <= hi), axis=1)
    assert outside.sum() > 5000
    assert np.array_equal(f.eval(pts[outside]), np.zeros((outside.sum(), 2)))


def test_box_clip_delta_validation():
    with pytest.raises(ValueError):
        box_bump_clip(zero_field(2), 2.5)


# ---------------------------------------------------------------------------
# grid interpolant


def test_vertex_reproduction_exact():
    rng = np.random.default_rng(5)
    vals = rng.standard_normal((25, 2))
    gi = GridInterpolant((4, 4), vals)
    assert np.array_equal(gi(gi.vertex_points()), vals)


def test_matches_simplicial_oracle():
    rng = np.random.default_rng(6)
    for ns in [(4, 4), (3, 5), (2, 2, 2), (6,)]:
        nverts = int(np.prod([n + 1 for n in ns]))
        vals = rng.standard_normal((nverts, 2))
        gi = GridInterpolant(ns, vals)
        X = rng.random((2000, len(ns)))
        assert np.abs(gi(X) - kuhn_oracle(vals, ns, X)).max() <= 1e-12


def test_affine_reproduction():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((2, 2))
    b = rng.standard_normal(2)
    gi = GridInterpolant.from_callable(lambda P: P @ A.T + b, (5, 5))
    X = rng.random((1000, 2))
    assert np.abs(gi(X) - (X @ A.T + b)).max() <= 1e-12


def test_global_continuity_across_facets():
    rng = np.random.default_rng(8)
    gi = GridInterpolant((4, 4), rng.standard_normal((25, 1)))
    # approach a cell facet from both sides
    base = np.array([[0.5 - 1e-10, 0.37], [0.5 + 1e-10, 0.37]])
    v = gi(base)
    assert abs(v[0, 0] - v[1, 0]) <= 1e-8


def test_hat_continuation_dies_one_cell_out():
    rng = np.random.default_rng(9)
    gi = GridInterpolant((4, 4), rng.standard_normal((25, 2)))
    pts = np.array([[1.3, 0.5], [-0.3, 0.5], [0.5, 1.26], [2.0, 2.0]])
    assert np.array_equal(gi(pts), np.zeros((4, 2)))


def test_mlp_realization_agrees_with_interpolant():
    rng = np.random.default_rng(10)
    for ns in [(4, 4), (8, 8), (2, 2, 2)]:
        nverts = int(np.prod([n + 1 for n in ns]))
        vals = rng.standard_normal((nverts, len(ns)))
        gi = GridInterpolant(ns, vals)
        net = grid_to_mlp(gi)
        X = rng.random((10_000, len(ns)))
        assert np.abs(gi(X) - net.eval(X)).max() <= 1e-9
        # and on the continuation just outside the cube
        Xo = rng.uniform(-0.2, 1.2, size=(2000, len(ns)))
        assert np.abs(gi(Xo) - net.eval(Xo)).max() <= 1e-9


def test_exact_lipschitz_dominates_sampled_slopes():
    rng = np.random.default_rng(11)
    gi = GridInterpolant((4, 4), rng.standard_normal((25, 2)))
    L = gi.lipschitz_linf()
    X = rng.random((20_000, 2))
    Y = X + rng.standard_normal((20_000, 2)) * 1e-4
    num = np.abs(gi(X) - gi(Y)).max(axis=1)
    den = np.abs(X - Y).max(axis=1)
    ratio = (num / den).max()
    assert ratio <= L + 1e-9
    assert ratio >= 0.9 * L  # the bound is attained up to sampling slack


def test_binary_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(12)
    gi = GridInterpolant((3, 5), rng.standard_normal((24, 2)))
    path = tmp_path / "grid.bin"
    gi.save(path)
    back = GridInterpolant.load(path)
    assert back.ns == gi.ns
    assert np.array_equal(back.values, gi.values)
    assert (tmp_path / "grid.bin.json").exists()


def test_grid_validation():
    with pytest.raises(ValueError):
        GridInterpolant((0,), np.zeros((1, 1)))
    with pytest.raises(ValueError):
        GridInterpolant((2, 2), np.zeros((5, 1)))


# ---------------------------------------------------------------------------
# moduli


def test_lipschitz_modulus_values():
    m = LipschitzModulus([2.0])
    assert modulus_bound_eval(m, 0.25)[0] == pytest.approx(0.5)
    assert modulus_bound_eval(m, 0.0)[0] == 0.0
    with pytest.raises(ValueError):
        m(-0.1)


def test_smooth_rate_modulus_value():
    m = SmoothRateModulus(s=1, dim=2, cs_norms=[1.0])
    assert m((2, 2))[0] == pytest.approx(680.0)
    with pytest.raises(ValueError):
        m(0.5)  # needs the (N, L) pair


def test_holder_modulus():
    m = HolderModulus([1.0], 0.5)
    assert m(0.25)[0] == pytest.approx(0.5)
    assert m(0.0)[0] == 0.0


def test_modulus_monotone_and_subadditive():
    m = LipschitzModulus([3.0, 1.0])
    ts = np.linspace(0.0, 2.0, 41)
    vals = np.stack([m(t) for t in ts])
    assert (np.diff(vals, axis=0) >= 0).all()
    for s, t in [(0.1, 0.2), (0.5, 1.3), (0.0, 0.7)]:
        assert (m(s + t) <= m(s) + m(t) + 1e-15).all()


# ---------------------------------------------------------------------------
# grid approximation


def test_constant_field_is_reproduced():
    c = VectorField(2, lambda X: np.full_like(X, 0.7), 0.0,
                    support_box=np.array([[0.0, 0.0], [1.0, 1.0]]))
    vf, net, report = grid_relu_approximate(c, 4, LipschitzModulus([0.0, 0.0]))
    assert report.measured_error.max() <= 1e-12


def test_linear_field_is_reproduced():
    A = np.array([[0.3, -0.2], [0.1, 0.4]])
    lin = VectorField(2, lambda X: X @ A.T, float(np.abs(A).sum(axis=1).max()),
                      support_box=np.array([[0.0, 0.0], [1.0, 1.0]]))
    vf, net, report = grid_relu_approximate(
        lin, 4, LipschitzModulus(np.abs(A).sum(axis=1))
    )
    assert report.measured_error.max() <= 1e-12


@pytest.mark.parametrize("n", [4, 8, 16])
def test_sin_bump_error_within_modulus(n):
    f = sin_bump_field()
    mod = LipschitzModulus(np.full(2, f.lipschitz_bound))
    vf, net, report = grid_relu_approximate(f, n, mod)
    assert report.within_bound
    assert report.measured_error.max() <= f.lipschitz_bound * 2 / (2 * n)


def test_sin_bump_rate_halves():
    f = sin_bump_field()
    mod = LipschitzModulus(np.full(2, f.lipschitz_bound))
    errs = {}
    for n in (8, 16):
        _, _, report = grid_relu_approximate(f, n, mod)
        errs[n] = report.measured_error.max()
    assert errs[16] <= 0.55 * errs[8]


def test_size_report_fields():
    f = sin_bump_field()
    mod = LipschitzModulus(np.full(2, f.lipschitz_bound))
    _, net, report = grid_relu_approximate(f, 8, mod)
    assert report.width == net.width
    assert report.depth == net.depth
    assert report.nonzeros == net.nonzeros
    assert report.target_width == 8 * 2 * 9**2 + 9
    assert report.target_depth == 7
    assert report.target_nonzeros == 16 * 2 * 9**2 + 9
    d = report.to_dict()
    assert d["achieved"]["width"] == net.width
    assert d["within_bound"] is True


def test_modulus_bound_holds_for_every_builtin_field():
    for name, f in builtin_suite().items():
        mod = LipschitzModulus(np.full(2, f.lipschitz_bound))
        for n in (4, 8):
            _, _, report = grid_relu_approximate(f, n, mod)
            assert report.within_bound, (name, n)


def test_grid_approximate_rejects_unsupported_fields():
    with pytest.raises(ValueError):
        grid_relu_approximate(rotation_field([0.5, 0.5], 1.0), 4,
                              LipschitzModulus([1.0, 1.0]))
    f = sin_bump_field()
    with pytest.raises(ValueError):
        grid_relu_approximate(f, 0, LipschitzModulus([1.0, 1.0]))


# ---------------------------------------------------------------------------
# registry round trips


@pytest.mark.parametrize("name", ["zero", "rotation_clipped", "squeeze_clipped", "sin_bump"])
def test_builtin_refs_roundtrip(name):
    f = builtin_field(name)
    back = field_from_ref(f.ref)
    rng = np.random.default_rng(13)
    X = rng.random((500, f.dim))
    assert np.abs(f.eval(X) - back.eval(X)).max() <= 1e-15
    assert back.lipschitz_bound == pytest.approx(f.lipschitz_bound)


def test_builtin_suite_members():
    suite = builtin_suite()
    assert set(suite) == {"zero", "rotation_clipped", "squeeze_clipped", "sin_bump"}
    for f in suite.values():
        assert f.support_box is not None


def test_unknown_field_id():
    with pytest.raises(KeyError):
        builtin_field("no_such_field")
