import numpy as np
import pytest

from monocurve.convex import (
    AbsValFn,
    CTuple,
    PowerFn,
    QuadraticFn,
    TabulatedConvexFn,
    build_ctuple_from_curve,
    check_monotone_set,
    conjugate_tabulated,
    conjugate_value,
    diagonal_curve,
    discrete_legendre,
    duality_gap,
    numeric_conjugate,
    prox,
)
from monocurve.errors import (
    DimensionMismatch,
    EmptyBox,
    NotStrictlyIncreasing,
)

Q = QuadraticFn(1.0)  # the base quadratic x^2/2


def grid_argmin_prox(f, x, box=(-5.0, 5.0), num=200001):
    # independent oracle: dense grid argmin of f(p) + (x-p)^2/2
    ps = np.linspace(box[0], box[1], num)
    obj = f.value(ps) + 0.5 * (x - ps) ** 2
    return ps[np.argmin(obj)]


class TestEval:
    def test_power_two(self):
        assert PowerFn(2.0).value(3.0) == pytest.approx(4.5)

    def test_base_quadratic(self):
        assert Q.value(-2.0) == pytest.approx(2.0)

    def test_power_three(self):
        assert PowerFn(3.0).value(1.0) == pytest.approx(1.0 / 3.0)

    def test_second_difference_nonneg(self):
        rng = np.random.default_rng(7)
        fns = [PowerFn(1.5), PowerFn(2.0), PowerFn(3.0), QuadraticFn(0.7, -1.2, 0.3), AbsValFn()]
        for f in fns:
            x = rng.uniform(-4, 4, 300)
            h = rng.uniform(1e-3, 1.0, 300)
            dd = f.value(x + h) - 2.0 * f.value(x) + f.value(x - h)
            assert np.min(dd) >= -1e-9

    def test_power_requires_p_gt_one(self):
        with pytest.raises(ValueError):
            PowerFn(1.0)
        with pytest.raises(ValueError):
            QuadraticFn(-0.1)


class TestConjugate:
    def test_quadratic_self_conjugate(self):
        assert conjugate_value(Q, 3.0) == pytest.approx(4.5)

    def test_power_three_conjugate(self):
        # exponent pair (3, 1.5): conjugate of |x|^3/3 at 1 is 1/1.5
        assert conjugate_value(PowerFn(3.0), 1.0) == pytest.approx(2.0 / 3.0)

    def test_absval_conjugate_flat_then_unbounded(self):
        assert conjugate_value(AbsValFn(), 0.5) == pytest.approx(0.0)
        assert np.isinf(conjugate_value(AbsValFn(), 2.0))

    def test_numeric_path_matches_closed_form(self):
        for y in (-2.0, -0.3, 0.0, 1.3, 2.5):
            num = numeric_conjugate(PowerFn(3.0).value, y, (-10.0, 10.0))
            assert num == pytest.approx(PowerFn(3.0).conjugate_closed_form(y), abs=2e-5)

    def test_numeric_unbounded_flag(self):
        # grid max grows with the box width for |y| > 1
        assert np.isinf(numeric_conjugate(AbsValFn().value, 2.0, (-10.0, 10.0)))
        assert numeric_conjugate(AbsValFn().value, 0.5, (-10.0, 10.0)) == pytest.approx(0.0, abs=1e-12)

    def test_empty_box(self):
        with pytest.raises(EmptyBox):
            discrete_legendre(Q.value, 1.0, (2.0, 2.0))

    def test_fenchel_young(self):
        rng = np.random.default_rng(11)
        for p in (1.5, 2.0, 3.0):
            f = PowerFn(p)
            x = rng.uniform(-5, 5, 2000)
            y = rng.uniform(-5, 5, 2000)
            gap = f.value(x) + f.conjugate_closed_form(y) - x * y
            assert np.min(gap) >= -1e-9

    def test_biconjugation_recovers_function(self):
        # discrete Legendre applied twice lands back on f in the box interior
        f = PowerFn(3.0)
        box = (-6.0, 6.0)
        grid = np.linspace(box[0], box[1], 2049)

        def legendre_table(values):
            # one grid Legendre sweep: returns the transform on the same grid
            out = np.empty_like(grid)
            for start in range(0, len(grid), 256):
                ys = grid[start:start + 256]
                out[start:start + 256] = np.max(np.outer(ys, grid) - values[None, :], axis=1)
            return out

        star = legendre_table(f.value(grid))
        star2 = legendre_table(star)
        interior = np.abs(grid) <= 2.2  # maximizers for |x| <= 2.2 stay inside the box
        assert np.max(np.abs(star2[interior] - f.value(grid[interior]))) < 1e-3


class TestProx:
    def test_quadratic(self):
        assert prox(Q, 4.0) == pytest.approx(2.0)

    def test_zero_function_is_identity(self):
        assert prox(QuadraticFn(0.0), 4.0) == pytest.approx(4.0)

    def test_absval_soft_threshold(self):
        # frozen from the grid-argmin oracle (soft threshold at 1)
        assert prox(AbsValFn(), 0.3) == pytest.approx(0.0, abs=1e-9)
        assert prox(AbsValFn(), 2.3) == pytest.approx(1.3, abs=1e-9)
        assert grid_argmin_prox(AbsValFn(), 0.3) == pytest.approx(0.0, abs=1e-4)

    def test_numeric_matches_grid_argmin(self):
        f = PowerFn(4.0)
        for x in (-2.0, -0.4, 0.0, 1.1, 3.0):
            assert prox(f, x) == pytest.approx(grid_argmin_prox(f, x), abs=1e-4)

    def test_nonexpansive(self):
        rng = np.random.default_rng(3)
        for f in (PowerFn(1.5), PowerFn(3.0), AbsValFn(), QuadraticFn(2.0, 0.5)):
            x = rng.uniform(-5, 5, 200)
            y = rng.uniform(-5, 5, 200)
            px = np.array([prox(f, v) for v in x])
            py = np.array([prox(f, v) for v in y])
            assert np.all(np.abs(px - py) <= np.abs(x - y) + 1e-9)

    def test_bad_tol(self):
        with pytest.raises(ValueError):
            prox(Q, 1.0, tol=0.0)


class TestDualityGap:
    def test_pairs(self):
        t = CTuple([Q, Q])
        assert duality_gap(np.array([1.0, 1.0]), t) == pytest.approx(0.0)
        assert duality_gap(np.array([1.0, -1.0]), t) == pytest.approx(2.0)

    def test_three_dim_scaled_quadratics(self):
        t = CTuple([QuadraticFn(2.0)] * 3)
        assert duality_gap(np.array([1.0, 1.0, 1.0]), t) == pytest.approx(0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            duality_gap(np.array([1.0, 2.0, 3.0]), CTuple([Q, Q]))

    def test_batch(self):
        t = CTuple([Q, Q])
        pts = np.array([[1.0, 1.0], [1.0, -1.0], [0.0, 0.0]])
        assert duality_gap(pts, t) == pytest.approx([0.0, 2.0, 0.0])

    def test_zero_set_is_monotone(self):
        # points with tiny gap for a duality tuple are coordinatewise comparable
        f = PowerFn(3.0)
        t = CTuple([f, PowerFn(1.5)])
        xs = np.linspace(-1.5, 1.5, 101)
        curve = np.stack([xs, f.deriv(xs)], axis=1)
        gaps = duality_gap(curve, t)
        assert np.max(np.abs(gaps)) <= 1e-6
        assert check_monotone_set(curve, tol=1e-9)


class TestDiagonalCurve:
    def test_scaled_quadratics_k3(self):
        t = CTuple([QuadraticFn(2.0)] * 3)
        curve = diagonal_curve(t)
        for s in (-2.0, 0.0, 1.5):
            assert curve(s) == pytest.approx(np.full(3, s / 3.0))

    def test_base_pair(self):
        curve = diagonal_curve(CTuple([Q, Q]))
        assert curve(5.0) == pytest.approx([2.5, 2.5])

    def test_power_with_numeric_conjugate_sums_to_identity(self):
        f = PowerFn(4.0)
        fstar = conjugate_tabulated(f, (-9.0, 9.0), nodes=4097)
        curve = diagonal_curve(CTuple([f, fstar]))
        for s in (-2.0, 0.0, 2.0):
            g = curve(s)
            assert g[0] + g[1] == pytest.approx(s, abs=1e-4)

    def test_components_monotone_and_lipschitz(self):
        rng = np.random.default_rng(5)
        curve = diagonal_curve(CTuple([PowerFn(3.0), PowerFn(1.5)]))
        s = np.sort(rng.uniform(-4, 4, 60))
        pts = curve(s)
        assert np.all(np.diff(pts, axis=0) >= -1e-9)
        steps = np.abs(np.diff(pts, axis=0))
        assert np.all(steps <= np.diff(s)[:, None] + 1e-9)

    def test_curve_points_form_monotone_set(self):
        # 50 random points on the curve of a duality-checked tuple
        rng = np.random.default_rng(12)
        t = CTuple([PowerFn(3.0), PowerFn(1.5)])
        assert t.check_duality((-4.0, 4.0))
        curve = diagonal_curve(t)
        pts = curve(rng.uniform(-6.0, 6.0, 50))
        assert check_monotone_set(pts, tol=1e-9)


class TestBuildFromCurve:
    def test_identity_map_gives_base_quadratic(self):
        t = build_ctuple_from_curve({(0, 1): lambda u: u}, (-2.0, 2.0))
        xs = np.linspace(-2.0, 2.0, 41)
        for f in t.fns:
            assert np.max(np.abs(f.value(xs) - Q.value(xs))) < 1e-6
        assert t.duality_checked

    def test_cubic_map_closed_forms(self):
        t = build_ctuple_from_curve({(0, 1): lambda u: u ** 3}, (-2.0, 2.0))
        xs = np.linspace(-1.9, 1.9, 51)
        f0 = xs ** 4 / 4.0
        f1 = 0.75 * np.abs(xs) ** (4.0 / 3.0)
        assert np.max(np.abs(t.fns[0].value(xs) - f0)) < 1e-4
        assert np.max(np.abs(t.fns[1].value(xs) - f1)) < 1e-4

    def test_k3_identity_maps(self):
        maps = {(0, 1): lambda u: u, (0, 2): lambda u: u, (1, 2): lambda u: u}
        t = build_ctuple_from_curve(maps, (-2.0, 2.0))
        xs = np.linspace(-2.0, 2.0, 21)
        for f in t.fns:
            assert np.max(np.abs(f.value(xs) - xs ** 2)) < 1e-6

    def test_prox_sum_is_identity(self):
        t = build_ctuple_from_curve({(0, 1): lambda u: u ** 3}, (-2.0, 2.0))
        for s in np.linspace(-3.0, 3.0, 25):
            total = sum(prox(f, s) for f in t.fns)
            assert total == pytest.approx(s, abs=1e-5)

    def test_gap_small_on_generating_curve(self):
        t = build_ctuple_from_curve({(0, 1): lambda u: u ** 3}, (-2.0, 2.0))
        xs = np.linspace(-1.25, 1.25, 31)  # keeps x^3 inside the box too
        pts = np.stack([xs, xs ** 3], axis=1)
        assert np.max(np.abs(duality_gap(pts, t))) <= 1e-3

    def test_rejects_nonincreasing(self):
        with pytest.raises(NotStrictlyIncreasing):
            build_ctuple_from_curve({(0, 1): lambda u: -u}, (-2.0, 2.0))

    def test_rejects_missing_pair(self):
        with pytest.raises(DimensionMismatch):
            build_ctuple_from_curve({(0, 2): lambda u: u}, (-2.0, 2.0))


class TestMonotoneSetCheck:
    def test_simple_true(self):
        assert check_monotone_set([(0, 0), (1, 1), (2, 3)])

    def test_simple_false(self):
        assert not check_monotone_set([(0, 0), (1, -1)])

    def test_matches_double_loop_definition(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            pts = rng.standard_normal((12, 3))
            tol = 10.0 ** rng.uniform(-6, 1)
            brute = True
            for a in range(len(pts)):
                for b in range(len(pts)):
                    d = pts[b] - pts[a]
                    for i in range(3):
                        for j in range(3):
                            if d[i] * d[j] < -tol:
                                brute = False
            assert check_monotone_set(pts, tol=tol) == brute


class TestTabulated:
    def test_roundtrip_interpolation(self):
        xs = np.linspace(-3.0, 3.0, 3001)
        f = TabulatedConvexFn(xs, Q.value(xs), xs)
        probe = np.linspace(-2.9, 2.9, 37)
        assert np.max(np.abs(f.value(probe) - Q.value(probe))) < 1e-6
        assert np.max(np.abs(f.deriv(probe) - probe)) < 1e-9

    def test_extension_is_convex(self):
        xs = np.linspace(-1.0, 1.0, 501)
        f = TabulatedConvexFn(xs, Q.value(xs), xs)
        probes = np.linspace(-4.0, 4.0, 81)
        d = f.deriv(probes)
        assert np.all(np.diff(d) >= -1e-12)
