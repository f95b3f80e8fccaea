"""Scalar convex analysis: closed-form convex functions, numeric Legendre
transforms, proximal maps, duality-gap evaluation for function tuples, and
construction of tuple potentials from pairwise monotone maps.

Conventions: q(x) = x^2/2 denotes the base quadratic; for a tuple
f = (f_1, ..., f_k) the duality gap at a point x in R^k is

    gap(x) = sum_i f_i(x_i) - sum_{i<j} x_i x_j

which is >= 0 everywhere exactly when the tuple is in duality position, and
its zero set is a monotone set parametrized by s = sum_i x_i through the
componentwise proximal maps.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import (
    DimensionMismatch,
    EmptyBox,
    NoConvergence,
    NotStrictlyIncreasing,
)

__all__ = [
    "PowerFn",
    "QuadraticFn",
    "AbsValFn",
    "TabulatedConvexFn",
    "CTuple",
    "MonotoneCurveFn",
    "conjugate_value",
    "discrete_legendre",
    "numeric_conjugate",
    "conjugate_tabulated",
    "prox",
    "duality_gap",
    "diagonal_curve",
    "build_ctuple_from_curve",
    "check_monotone_set",
]


# ---------------------------------------------------------------------------
# closed-form convex functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerFn:
    """f(x) = |x|^p / p for an exponent p > 1; self-dual family under
    conjugation with the Hoelder-conjugate exponent."""

    p: float

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValueError("power exponent must exceed 1")

    def value(self, x):
        return np.abs(x) ** self.p / self.p

    def deriv(self, x):
        return np.sign(x) * np.abs(x) ** (self.p - 1.0)

    def second_deriv(self, x):
        with np.errstate(divide="ignore"):
            return (self.p - 1.0) * np.abs(x) ** (self.p - 2.0)

    def conjugate_closed_form(self, y):
        q = self.p / (self.p - 1.0)
        return np.abs(y) ** q / q


@dataclass(frozen=True)
class QuadraticFn:
    """f(x) = a x^2 / 2 + b x + c with curvature a >= 0."""

    a: float
    b: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        if self.a < 0.0:
            raise ValueError("quadratic curvature must be nonnegative")

    def value(self, x):
        return self.a * x * x / 2.0 + self.b * x + self.c

    def deriv(self, x):
        return self.a * x + self.b

    def second_deriv(self, x):
        return self.a * np.ones_like(np.asarray(x, dtype=float))

    def conjugate_closed_form(self, y):
        if self.a > 0.0:
            return (y - self.b) ** 2 / (2.0 * self.a) - self.c
        # affine: conjugate is an indicator of the single slope b
        y = np.asarray(y, dtype=float)
        out = np.where(y == self.b, -self.c, np.inf)
        return out if out.ndim else float(out)

    def prox_exact(self, x):
        return (x - self.b) / (1.0 + self.a)


@dataclass(frozen=True)
class AbsValFn:
    """f(x) = |x|; conjugate is the indicator of [-1, 1], prox is the unit
    soft-threshold."""

    def value(self, x):
        return np.abs(x)

    def deriv(self, x):
        return np.sign(x)

    def second_deriv(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def conjugate_closed_form(self, y):
        y = np.asarray(y, dtype=float)
        out = np.where(np.abs(y) <= 1.0, 0.0, np.inf)
        return out if out.ndim else float(out)

    def prox_exact(self, x):
        return np.sign(x) * np.maximum(np.abs(x) - 1.0, 0.0)


class TabulatedConvexFn:
    """Convex function stored as (knots, values, derivative values).

    The derivative is interpolated with a monotone cubic (PCHIP), which is what
    proximal root-finding consumes; values use linear interpolation on the
    dense knot grid. Outside the knot range the derivative is held constant,
    so the extension stays convex.
    """

    def __init__(self, knots, values, derivs):
        knots = np.asarray(knots, dtype=float)
        values = np.asarray(values, dtype=float)
        derivs = np.asarray(derivs, dtype=float)
        if knots.ndim != 1 or knots.shape != values.shape or knots.shape != derivs.shape:
            raise DimensionMismatch("knots, values and derivs must be equal-length 1-D arrays")
        if np.any(np.diff(knots) <= 0):
            raise NotStrictlyIncreasing("knot grid must be strictly increasing")
        self.knots = knots
        self.values = values
        self.derivs = derivs
        self._dinterp = PchipInterpolator(knots, derivs, extrapolate=False)
        self._d2interp = self._dinterp.derivative()

    def value(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.knots[0], self.knots[-1]
        inner = np.interp(np.clip(x, lo, hi), self.knots, self.values)
        below = self.values[0] + self.derivs[0] * (x - lo)
        above = self.values[-1] + self.derivs[-1] * (x - hi)
        out = np.where(x < lo, below, np.where(x > hi, above, inner))
        return out if out.ndim else float(out)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, self.knots[0], self.knots[-1])
        out = self._dinterp(xc)
        return out if out.ndim else float(out)

    def second_deriv(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.knots[0]) & (x <= self.knots[-1])
        xc = np.clip(x, self.knots[0], self.knots[-1])
        out = np.where(inside, self._d2interp(xc), 0.0)
        return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# conjugation
# ---------------------------------------------------------------------------

def discrete_legendre(value_fn, y, box, num=4097):
    """Grid Legendre transform max_x [x*y - f(x)] over a uniform grid."""
    lo, hi = float(box[0]), float(box[1])
    if not hi > lo:
        raise EmptyBox(f"degenerate search box [{lo}, {hi}]")
    xs = np.linspace(lo, hi, num)
    return float(np.max(xs * y - value_fn(xs)))


def numeric_conjugate(value_fn, y, box, num=4097, growth_tol=1e-4):
    """Numeric conjugate with unboundedness detection.

    The grid maximum is recomputed on a box of twice the width (same grid
    spacing); growth beyond `growth_tol` means the supremum is not attained
    inside the box and +inf is returned.
    """
    lo, hi = float(box[0]), float(box[1])
    if not hi > lo:
        raise EmptyBox(f"degenerate search box [{lo}, {hi}]")
    m1 = discrete_legendre(value_fn, y, (lo, hi), num)
    c, half = 0.5 * (lo + hi), hi - lo
    m2 = discrete_legendre(value_fn, y, (c - half, c + half), 2 * num - 1)
    if m2 > m1 + growth_tol * max(1.0, abs(m1)):
        return np.inf
    return m1


def conjugate_value(f, y, search_box=None, num=4097):
    """Convex conjugate f*(y); exact for closed-form kinds, otherwise a grid
    Legendre transform over `search_box`."""
    if hasattr(f, "conjugate_closed_form"):
        return f.conjugate_closed_form(y)
    if search_box is None:
        raise EmptyBox("numeric conjugation needs a finite search box")
    return numeric_conjugate(f.value, y, search_box, num=num)


def conjugate_tabulated(f, box, nodes=4097):
    """Tabulate the conjugate of `f` on `box` as a TabulatedConvexFn.

    When `f` exposes a derivative, the maximizer x*(y) = (f')^{-1}(y) is found
    by bisection and the table uses the exact relations f*(y) = x* y - f(x*),
    (f*)'(y) = x*. Otherwise values come from the grid Legendre transform and
    derivatives from central differences.
    """
    lo, hi = float(box[0]), float(box[1])
    if not hi > lo:
        raise EmptyBox(f"degenerate search box [{lo}, {hi}]")
    ys = np.linspace(lo, hi, nodes)
    if hasattr(f, "deriv"):
        xstar = _invert_increasing(f.deriv, ys, box)
        vals = xstar * ys - f.value(xstar)
        return TabulatedConvexFn(ys, vals, xstar)
    xs = np.linspace(lo, hi, nodes)
    fx = f.value(xs)
    vals = np.empty(nodes)
    chunk = max(1, (1 << 22) // nodes)
    for start in range(0, nodes, chunk):
        sl = ys[start:start + chunk]
        vals[start:start + chunk] = np.max(np.outer(sl, xs) - fx[None, :], axis=1)
    derivs = np.maximum.accumulate(np.gradient(vals, ys))
    return TabulatedConvexFn(ys, vals, derivs)


# ---------------------------------------------------------------------------
# proximal map
# ---------------------------------------------------------------------------

def prox(f, x, tol=1e-10, max_iter=200):
    """Proximal map argmin_p [f(p) + (x-p)^2/2], i.e. the inverse of
    p + f'(p) at x.

    Uses a closed form when the function supplies one; otherwise safeguarded
    bisection with Newton acceleration on the strictly increasing map
    p + f'(p). Bracket collapse counts as convergence (it is the exact answer
    when f' jumps).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if hasattr(f, "prox_exact"):
        return float(f.prox_exact(x))

    x = float(x)
    fx = float(f.deriv(x))
    if not np.isfinite(fx):
        raise NoConvergence("derivative not finite at the query point")
    lo, hi = (x - fx, x) if fx >= 0 else (x, x - fx)

    second = getattr(f, "second_deriv", None)
    p = 0.5 * (lo + hi)
    for _ in range(max_iter):
        resid = p + float(f.deriv(p)) - x
        if not np.isfinite(resid):
            raise NoConvergence("non-finite residual in prox root-finding")
        if abs(resid) <= tol:
            return p
        if resid > 0:
            hi = p
        else:
            lo = p
        if hi - lo <= tol * max(1.0, abs(p)):
            return 0.5 * (lo + hi)
        nxt = None
        if second is not None:
            curv = 1.0 + float(second(p))
            if np.isfinite(curv) and curv > 0:
                cand = p - resid / curv
                if lo < cand < hi:
                    nxt = cand
        p = nxt if nxt is not None else 0.5 * (lo + hi)
    raise NoConvergence(f"prox root-finding did not converge in {max_iter} iterations")


# ---------------------------------------------------------------------------
# tuples in duality position
# ---------------------------------------------------------------------------

@dataclass
class CTuple:
    """A tuple of k scalar convex functions meant to be in duality position."""

    fns: list
    duality_checked: bool = False

    def __post_init__(self):
        if len(self.fns) < 2:
            raise DimensionMismatch("a tuple needs at least two component functions")

    @property
    def k(self):
        return len(self.fns)

    def check_duality(self, box, grid=65, tol=-1e-6, return_min=False):
        """Sample the duality gap on box^k; flags the tuple when the sampled
        minimum stays above `tol`."""
        axes = [np.linspace(box[0], box[1], grid)] * self.k
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.k)
        gmin = float(np.min(duality_gap(mesh, self)))
        self.duality_checked = gmin >= tol
        return gmin if return_min else self.duality_checked


def duality_gap(x, ctuple):
    """sum_i f_i(x_i) - sum_{i<j} x_i x_j for a point (k,) or batch (n, k)."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    pts = x[None, :] if squeeze else x
    if pts.ndim != 2 or pts.shape[1] != ctuple.k:
        raise DimensionMismatch(f"expected points in R^{ctuple.k}, got shape {x.shape}")
    total = np.zeros(pts.shape[0])
    for i, f in enumerate(ctuple.fns):
        total += f.value(pts[:, i])
    s = pts.sum(axis=1)
    cost = 0.5 * (s * s - (pts * pts).sum(axis=1))
    gap = total - cost
    return float(gap[0]) if squeeze else gap


@dataclass
class MonotoneCurveFn:
    """Diagonal parametrization of a tuple's zero set: component i at index s
    is the proximal map of f_i, hence nondecreasing and 1-Lipschitz."""

    ctuple: CTuple
    tol: float = 1e-10

    @property
    def k(self):
        return self.ctuple.k

    def component(self, i, s):
        f = self.ctuple.fns[i]
        if np.ndim(s) == 0:
            return prox(f, float(s), self.tol)
        return np.array([prox(f, float(v), self.tol) for v in np.asarray(s, dtype=float)])

    def __call__(self, s):
        if np.ndim(s) == 0:
            return np.array([self.component(i, s) for i in range(self.k)])
        return np.stack([self.component(i, s) for i in range(self.k)], axis=1)


def diagonal_curve(ctuple):
    """Monotone curve s -> (prox_{f_1}(s), ..., prox_{f_k}(s))."""
    return MonotoneCurveFn(ctuple)


# ---------------------------------------------------------------------------
# tuple construction from pairwise monotone maps
# ---------------------------------------------------------------------------

def _invert_increasing(fn, targets, box, iters=90):
    """Bisection inverse of a strictly increasing callable on `box`,
    vectorized over targets; values outside the image clamp to the box ends."""
    lo = np.full_like(targets, float(box[0]))
    hi = np.full_like(targets, float(box[1]))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        high = fn(mid) >= targets
        hi = np.where(high, mid, hi)
        lo = np.where(high, lo, mid)
    return 0.5 * (lo + hi)


def build_ctuple_from_curve(pairwise_maps, box, nodes=16385):
    """Assemble k tabulated convex potentials from strictly increasing maps
    Gamma_ij (i < j), so that the tuple's duality-gap zero set contains the
    generating curve.

    pairwise_maps: dict {(i, j): callable}, 0-based indices i < j, each
    strictly increasing on `box`. The box must contain 0 (the integrals are
    anchored there). Potentials are built by composite trapezoid quadrature
    with `nodes` grid points; inverse maps come from bisection.
    """
    lo, hi = float(box[0]), float(box[1])
    if not hi > lo:
        raise EmptyBox(f"degenerate box [{lo}, {hi}]")
    if not lo <= 0.0 <= hi:
        raise ValueError("box must contain 0 (integral anchor)")
    if nodes < 2049:
        raise ValueError("need at least 2049 quadrature nodes")

    k = 1 + max(max(i, j) for i, j in pairwise_maps)
    for i in range(k):
        for j in range(i + 1, k):
            if (i, j) not in pairwise_maps:
                raise DimensionMismatch(f"missing pairwise map for coordinates ({i}, {j})")

    grid = np.linspace(lo, hi, nodes)
    fwd = {}
    for (i, j), fn in pairwise_maps.items():
        vals = np.asarray(fn(grid), dtype=float)
        if np.any(np.diff(vals) <= 0):
            raise NotStrictlyIncreasing(f"map ({i}, {j}) is not strictly increasing on the box")
        fwd[(i, j)] = vals

    # direction (i -> j) tables on the common grid for every ordered pair;
    # anchors[(i, j)] is the map's ordinate at 0, the lower integral limit
    # for partner i inside f_j
    tables = {}
    anchors = {}
    for (i, j), vals in fwd.items():
        tables[(i, j)] = vals
        tables[(j, i)] = _invert_increasing(pairwise_maps[(i, j)], grid, box)
        anchors[(i, j)] = float(np.asarray(pairwise_maps[(i, j)](np.array([0.0])))[0])

    dx = np.diff(grid)
    fns = []
    for i in range(k):
        deriv = np.zeros(nodes)
        value = np.zeros(nodes)
        for j in range(k):
            if j == i:
                continue
            tab = tables[(i, j)]
            deriv += tab
            ct = np.concatenate([[0.0], np.cumsum(0.5 * (tab[1:] + tab[:-1]) * dx)])
            anchor = 0.0 if j > i else anchors[(j, i)]
            if not lo <= anchor <= hi:
                raise ValueError(f"integral anchor for pair ({j}, {i}) falls outside the box")
            value += ct - np.interp(anchor, grid, ct)
        fns.append(TabulatedConvexFn(grid, value, deriv))

    out = CTuple(fns)
    gmin = out.check_duality(box, return_min=True)
    # quadrature error must stay inside the construction tolerance; the strict
    # duality flag is only set when the sampled gap clears the tighter bound
    if gmin < -1e-4:
        raise NotStrictlyIncreasing(
            f"built tuple violates duality position (min sampled gap {gmin:.3e}); "
            "increase the node count"
        )
    return out


# ---------------------------------------------------------------------------
# monotone-set check
# ---------------------------------------------------------------------------

def check_monotone_set(points, tol=0.0):
    """True iff every pair of points is coordinatewise comparable:
    (b_j - a_j)(b_i - a_i) >= -tol for all coordinate pairs (i, j).

    Brute force over all point pairs; for each pair the worst product is
    min(d) * max(d) of the difference vector d.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        pts = pts.reshape(len(pts), -1)
    n = pts.shape[0]
    for a in range(n):
        d = pts[a + 1:] - pts[a]
        if d.size == 0:
            continue
        worst = d.min(axis=1) * d.max(axis=1)
        if np.any(worst < -tol):
            return False
    return True
