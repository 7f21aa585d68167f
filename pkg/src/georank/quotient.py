"""Quotient geometries for fixed-rank matrices.

Five factorization-based total spaces are supported, each quotiented by the
factorization's invariance group:

    psd_q1   X = Y Y^T            Y full column rank,    gauge O(r)
    psd_q2   X = U B U^T          U Stiefel, B SPD,      gauge O(r)
    gen_q1   X = L R^T            L, R full column rank, gauge GL(r)
    gen_q2   X = U B V^T          U, V Stiefel, B SPD,   gauge O(r)
    gen_q3   X = U Y^T            U Stiefel, Y full rank, gauge O(r)

Each geometry carries a closed enumeration of metric weight families with
analytic directional derivatives (required by the Hessian formulas). A
quotient point caches the embedded-geometry frame built from its own factors,
so transports between the horizontal space and the embedded tangent space are
free of rotation ambiguity.

Horizontal vectors are stored in ambient total-space coordinates. Membership
in the horizontal space is checked to 1e-8 relative to the vector norm;
near-misses up to 1e-6 are re-projected, anything worse is rejected.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .embedded import EmbeddedPoint, _point_from_factors, embed_point
from .linalg import skew, solve_sylvester, spd_functions, sym
from .objectives import Objective

HORIZ_TOL = 1e-8
REPROJECT_TOL = 1e-6
FULL_RANK_TOL = 1e-10
STIEFEL_TOL = 1e-12

GEOMETRY_KIND = {
    "psd_q1": "psd",
    "psd_q2": "psd",
    "gen_q1": "general",
    "gen_q2": "general",
    "gen_q3": "general",
}

FACTOR_NAMES = {
    "psd_q1": ("Y",),
    "psd_q2": ("U", "B"),
    "gen_q1": ("L", "R"),
    "gen_q2": ("U", "B", "V"),
    "gen_q3": ("U", "Y"),
}


# ---------------------------------------------------------------------------
# points


@dataclass(frozen=True, eq=False)
class QuotientPoint:
    """A total-space representative plus its matched embedded frame."""

    geometry: str
    factors: tuple
    point: EmbeddedPoint  # embedded view of the represented X, frame-matched

    @property
    def X(self) -> np.ndarray:
        return self.point.X

    @property
    def r(self) -> int:
        return self.point.r

    def factor(self, name: str) -> np.ndarray:
        return self.factors[FACTOR_NAMES[self.geometry].index(name)]

    @property
    def P(self) -> np.ndarray:
        """U_frame^T Y for psd_q1 (invertible r x r)."""
        return self.point.U.T @ self.factor("Y")

    @property
    def P1(self) -> np.ndarray:
        return self.point.U.T @ self.factor("L")

    @property
    def P2(self) -> np.ndarray:
        return self.point.V.T @ self.factor("R")


def _qf(a):
    """QR orthonormal factor with positive diagonal R (deterministic)."""
    q, r = np.linalg.qr(a)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def _check_full_rank(a, name):
    s = np.linalg.svd(a, compute_uv=False)
    if s[-1] <= FULL_RANK_TOL * max(s[0], 1e-300):
        raise ValueError(f"factor {name} is numerically rank deficient")


def _check_stiefel(u, name):
    r = u.shape[1]
    if np.linalg.norm(u.T @ u - np.eye(r)) > STIEFEL_TOL * max(1.0, np.sqrt(r)):
        raise ValueError(f"factor {name} does not have orthonormal columns")


def _check_spd(b, name):
    if np.linalg.norm(b - b.T) > 1e-10 * max(1.0, np.linalg.norm(b)):
        raise ValueError(f"factor {name} is not symmetric")
    w = np.linalg.eigvalsh(sym(b))
    if w[0] <= FULL_RANK_TOL * max(w[-1], 0.0):
        raise ValueError(f"factor {name} is not positive definite")


def quotient_point(geometry: str, *factors) -> QuotientPoint:
    """Build a quotient point from raw factors, caching a matched frame."""
    if geometry not in GEOMETRY_KIND:
        raise ValueError(f"unknown quotient geometry {geometry!r}")
    factors = tuple(np.asarray(f, dtype=float) for f in factors)
    names = FACTOR_NAMES[geometry]
    if len(factors) != len(names):
        raise ValueError(f"{geometry} expects factors {names}")

    if geometry == "psd_q1":
        (y,) = factors
        _check_full_rank(y, "Y")
        u = _qf(y)
        pt = _point_from_factors("psd", u, u.T @ (y @ y.T) @ u, None)
    elif geometry == "psd_q2":
        u, b = factors
        _check_stiefel(u, "U")
        _check_spd(b, "B")
        b = sym(b)
        factors = (u, b)
        pt = _point_from_factors("psd", u, b, None)
    elif geometry == "gen_q1":
        l, r_ = factors
        _check_full_rank(l, "L")
        _check_full_rank(r_, "R")
        u, v = _qf(l), _qf(r_)
        pt = _point_from_factors("general", u, (u.T @ l) @ (v.T @ r_).T, v)
    elif geometry == "gen_q2":
        u, b, v = factors
        _check_stiefel(u, "U")
        _check_stiefel(v, "V")
        _check_spd(b, "B")
        b = sym(b)
        factors = (u, b, v)
        pt = _point_from_factors("general", u, b, v)
    else:  # gen_q3
        u, y = factors
        _check_stiefel(u, "U")
        _check_full_rank(y, "Y")
        v = _qf(y)
        pt = _point_from_factors("general", u, y.T @ v, v)
        # Sigma = U^T X V = Y^T V for X = U Y^T
    return QuotientPoint(geometry, factors, pt)


def lift_point(x_pt: EmbeddedPoint, geometry: str) -> QuotientPoint:
    """Canonical factorized representative of an embedded point.

    Lifts reuse the embedded point's own frame, so the lifted point and
    ``x_pt`` form a matched pair for the tangent-space transports.
    """
    if geometry not in GEOMETRY_KIND:
        raise ValueError(f"unknown quotient geometry {geometry!r}")
    if GEOMETRY_KIND[geometry] != x_pt.kind:
        raise ValueError(f"{geometry} cannot represent a {x_pt.kind} point")

    sig = x_pt.Sigma
    if np.linalg.norm(sig - np.diag(np.diag(sig))) > 1e-12 * np.linalg.norm(sig):
        # canonical lifts need a spectral frame; rebuild one from X
        x_pt = embed_point(x_pt.X, x_pt.r, x_pt.kind)
        sig = x_pt.Sigma
    root = np.diag(np.sqrt(np.diag(sig)))

    if geometry == "psd_q1":
        z = QuotientPoint(geometry, (x_pt.U @ root,), x_pt)
    elif geometry == "psd_q2":
        z = QuotientPoint(geometry, (x_pt.U, sig), x_pt)
    elif geometry == "gen_q1":
        z = QuotientPoint(geometry, (x_pt.U @ root, x_pt.V @ root), x_pt)
    elif geometry == "gen_q2":
        z = QuotientPoint(geometry, (x_pt.U, sig, x_pt.V), x_pt)
    else:
        z = QuotientPoint(geometry, (x_pt.U, x_pt.V @ sig), x_pt)
    return z


def same_fiber(z1: QuotientPoint, z2: QuotientPoint, rtol: float = 1e-8) -> bool:
    """Whether two representatives encode the same matrix (same fiber)."""
    if z1.geometry != z2.geometry:
        raise ValueError(f"variant mismatch: {z1.geometry} vs {z2.geometry}")
    if any(a.shape != b.shape for a, b in zip(z1.factors, z2.factors)):
        raise ValueError("factor shapes differ")
    scale = max(np.linalg.norm(z1.X), np.linalg.norm(z2.X), 1e-300)
    return bool(np.linalg.norm(z1.X - z2.X) <= rtol * scale)


# ---------------------------------------------------------------------------
# gauge action (fiber moves and the induced transport of horizontal lifts)


def act_on_point(z: QuotientPoint, g) -> QuotientPoint:
    """Move z along its fiber by a gauge element (O(r), or GL(r) for gen_q1)."""
    g = np.asarray(g, dtype=float)
    geo = z.geometry
    if geo == "psd_q1":
        return quotient_point(geo, z.factor("Y") @ g)
    if geo == "psd_q2":
        return quotient_point(geo, z.factor("U") @ g, g.T @ z.factor("B") @ g)
    if geo == "gen_q1":
        ginv_t = np.linalg.inv(g).T
        return quotient_point(geo, z.factor("L") @ g, z.factor("R") @ ginv_t)
    if geo == "gen_q2":
        return quotient_point(
            geo, z.factor("U") @ g, g.T @ z.factor("B") @ g, z.factor("V") @ g
        )
    return quotient_point(geo, z.factor("U") @ g, z.factor("Y") @ g)


def act_on_horizontal(hv: "HorizontalVector", z_new: QuotientPoint, g):
    """Transport a horizontal lift to the gauge-moved representative."""
    g = np.asarray(g, dtype=float)
    geo = hv.base.geometry
    parts = hv.parts
    if geo == "psd_q1":
        moved = (parts[0] @ g,)
    elif geo == "psd_q2":
        moved = (parts[0] @ g, g.T @ parts[1] @ g)
    elif geo == "gen_q1":
        moved = (parts[0] @ g, parts[1] @ np.linalg.inv(g).T)
    elif geo == "gen_q2":
        moved = (parts[0] @ g, g.T @ parts[1] @ g, parts[2] @ g)
    else:
        moved = (parts[0] @ g, parts[1] @ g)
    return HorizontalVector(z_new, moved)


# ---------------------------------------------------------------------------
# metric families


@dataclass(frozen=True, eq=False)
class MetricFamily:
    """One choice of SPD weight matrices defining the total-space metric.

    The weight callables take the quotient point; the derivative callables
    take the point and a tuple of tangent components and return the Frechet
    derivative of the weight along that direction. Only the enumerated
    families below are supported: the Hessian formulas need analytic weight
    derivatives, which are unavailable for arbitrary user-supplied weights.
    """

    geometry: str
    name: str
    description: str
    fns: dict = field(repr=False)

    def __getattr__(self, key):
        try:
            return self.fns[key]
        except KeyError as exc:  # pragma: no cover
            raise AttributeError(key) from exc


def _const(mat_fn):
    return {
        "value": mat_fn,
        "deriv": lambda z, parts: np.zeros_like(mat_fn(z)),
    }


def _inv_pack(pack):
    """Inverse weight and its derivative from a weight pack."""

    def value(z):
        return spd_functions(pack["value"](z)).inv

    def deriv(z, parts):
        winv = value(z)
        return -winv @ pack["deriv"](z, parts) @ winv

    return {"value": value, "deriv": deriv}


def _gram(get, dget):
    """Weight F(z)^T F(z) with F linear in the factors."""
    return {
        "value": lambda z: get(z).T @ get(z),
        "deriv": lambda z, parts: dget(parts).T @ get(z) + get(z).T @ dget(parts),
    }


def _wrap(kind_to_pack):
    """Flatten {'w': pack, ...} into the MetricFamily fns dict."""
    fns = {}
    for key, pack in kind_to_pack.items():
        inv = _inv_pack(pack)
        fns[key] = pack["value"]
        fns[f"{key}_inv"] = inv["value"]
        fns[f"d{key}"] = pack["deriv"]
        fns[f"d{key}_inv"] = inv["deriv"]
    return fns


def _identity_pack(r_of):
    return {
        "value": lambda z: np.eye(r_of(z)),
        "deriv": lambda z, parts: np.zeros((r_of(z), r_of(z))),
    }


def _build_metrics():
    metrics = {}

    def rk(z):
        return z.r

    # psd_q1: weight W_Y on the single factor Y
    y = lambda z: z.factor("Y")
    dy = lambda parts: parts[0]
    metrics["psd_q1"] = {
        "flat": MetricFamily(
            "psd_q1", "flat", "W_Y = I", _wrap({"w": _identity_pack(rk)})
        ),
        "double-gram": MetricFamily(
            "psd_q1",
            "double-gram",
            "W_Y = 2 Y^T Y",
            _wrap(
                {
                    "w": {
                        "value": lambda z: 2.0 * y(z).T @ y(z),
                        "deriv": lambda z, parts: 2.0
                        * (dy(parts).T @ y(z) + y(z).T @ dy(parts)),
                    }
                }
            ),
        ),
        "inverse-gram": MetricFamily(
            "psd_q1",
            "inverse-gram",
            "W_Y = (Y^T Y)^-1",
            _wrap({"w": _inv_pack(_gram(y, dy))}),
        ),
    }

    # psd_q2: weights (V_B, W_B) on (U, B); derivatives along theta_B
    b = lambda z: z.factor("B")
    dbp = lambda parts: parts[1]
    metrics["psd_q2"] = {
        "polar": MetricFamily(
            "psd_q2",
            "polar",
            "V_B = I, W_B = B^-1",
            _wrap(
                {
                    "v": _identity_pack(rk),
                    "w": _inv_pack(
                        {"value": b, "deriv": lambda z, parts: dbp(parts)}
                    ),
                }
            ),
        ),
        "matched": MetricFamily(
            "psd_q2",
            "matched",
            "V_B = 2 B^2, W_B = I",
            _wrap(
                {
                    "v": {
                        "value": lambda z: 2.0 * b(z) @ b(z),
                        "deriv": lambda z, parts: 2.0
                        * (dbp(parts) @ b(z) + b(z) @ dbp(parts)),
                    },
                    "w": _identity_pack(rk),
                }
            ),
        ),
    }

    # gen_q1: weights (W_{L,R}, V_{L,R}); derivatives take the (L, R) pair
    l = lambda z: z.factor("L")
    r_ = lambda z: z.factor("R")
    dl = lambda parts: parts[0]
    dr = lambda parts: parts[1]
    metrics["gen_q1"] = {
        "inverse-gram": MetricFamily(
            "gen_q1",
            "inverse-gram",
            "W = (L^T L)^-1, V = (R^T R)^-1",
            _wrap(
                {
                    "w": _inv_pack(_gram(l, dl)),
                    "v": _inv_pack(_gram(r_, dr)),
                }
            ),
        ),
        "crossed-gram": MetricFamily(
            "gen_q1",
            "crossed-gram",
            "W = R^T R, V = L^T L",
            _wrap({"w": _gram(r_, dr), "v": _gram(l, dl)}),
        ),
    }

    # gen_q2: the single standard choice
    metrics["gen_q2"] = {
        "polar": MetricFamily(
            "gen_q2",
            "polar",
            "V_B = I, W_B = B^-1",
            _wrap(
                {
                    "v": _identity_pack(rk),
                    "w": _inv_pack(
                        {"value": b, "deriv": lambda z, parts: parts[1]}
                    ),
                }
            ),
        )
    }

    # gen_q3: weights (V_Y, W_Y) on (U, Y); derivatives along theta_Y
    yq3 = lambda z: z.factor("Y")
    dyq3 = lambda parts: parts[1]
    metrics["gen_q3"] = {
        "flat": MetricFamily(
            "gen_q3",
            "flat",
            "V_Y = I, W_Y = I",
            _wrap({"v": _identity_pack(rk), "w": _identity_pack(rk)}),
        ),
        "inverse-gram": MetricFamily(
            "gen_q3",
            "inverse-gram",
            "V_Y = I, W_Y = (Y^T Y)^-1",
            _wrap(
                {
                    "v": _identity_pack(rk),
                    "w": _inv_pack(_gram(yq3, dyq3)),
                }
            ),
        ),
        "matched": MetricFamily(
            "gen_q3",
            "matched",
            "V_Y = Y^T Y, W_Y = I",
            _wrap({"v": _gram(yq3, dyq3), "w": _identity_pack(rk)}),
        ),
    }
    return metrics


_METRICS = _build_metrics()


def metric_derivative_fd(
    metric: "MetricFamily", key: str, z: "QuotientPoint", parts, h: float = 1e-6
) -> np.ndarray:
    """Central-difference fallback for a weight derivative, e.g. key "dw".

    Exists solely to cross-validate the analytic derivatives the Hessian
    formulas consume; moves the factors along the standard total-space curve
    with velocity ``parts``.
    """
    if not key.startswith("d") or key[1:] not in metric.fns:
        raise ValueError(f"{key!r} is not a weight-derivative name")
    weight = metric.fns[key[1:]]
    curve = total_curve(z, HorizontalVector(z, tuple(np.asarray(p) for p in parts)))
    return (weight(curve(h)) - weight(curve(-h))) / (2.0 * h)


def metric_choices(geometry: str):
    """Names of the enumerated metric families for a quotient geometry."""
    if geometry not in _METRICS:
        raise ValueError(f"unknown quotient geometry {geometry!r}")
    return list(_METRICS[geometry])


def metric_family(geometry: str, name: str) -> MetricFamily:
    choices = metric_choices(geometry)
    if name not in choices:
        raise ValueError(
            f"metric {name!r} not in the enumerated families for {geometry}: {choices}"
        )
    return _METRICS[geometry][name]


def _check_metric(z: QuotientPoint, metric: MetricFamily):
    if metric.geometry != z.geometry:
        raise ValueError(
            f"metric for {metric.geometry} used with a {z.geometry} point"
        )


# ---------------------------------------------------------------------------
# horizontal vectors


@dataclass(frozen=True, eq=False)
class HorizontalVector:
    """Ambient-coordinate tangent components belonging to the horizontal
    space at the base point."""

    base: QuotientPoint
    parts: tuple

    def _combine(self, other, sa, sb):
        if other.base is not self.base:
            raise ValueError("vector arithmetic requires a common base point")
        return HorizontalVector(
            self.base, tuple(sa * a + sb * b for a, b in zip(self.parts, other.parts))
        )

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, c):
        return HorizontalVector(self.base, tuple(c * a for a in self.parts))

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def raw_norm(self) -> float:
        """Frobenius norm of the stacked components (metric-independent)."""
        return float(np.sqrt(sum(np.sum(a**2) for a in self.parts)))


def project_total_tangent(z: QuotientPoint, parts) -> tuple:
    """Project raw matrices onto the total-space tangent space at z.

    Stiefel components get the usual tangent projection, SPD components are
    symmetrized, and full-rank factor components are unconstrained.
    """
    parts = tuple(np.asarray(a, dtype=float) for a in parts)
    geo = z.geometry
    if geo in ("psd_q1", "gen_q1"):
        return parts

    def st_proj(u, eta):
        return eta - u @ sym(u.T @ eta)

    if geo == "psd_q2":
        u = z.factor("U")
        return (st_proj(u, parts[0]), sym(parts[1]))
    if geo == "gen_q2":
        u, v = z.factor("U"), z.factor("V")
        return (st_proj(u, parts[0]), sym(parts[1]), st_proj(v, parts[2]))
    u = z.factor("U")
    return (st_proj(u, parts[0]), parts[1])


def _tangency_defect(z: QuotientPoint, parts) -> float:
    proj = project_total_tangent(z, parts)
    return float(
        np.sqrt(sum(np.sum((a - b) ** 2) for a, b in zip(parts, proj)))
    )


def vertical_project(z: QuotientPoint, parts, metric: Optional[MetricFamily] = None):
    """Vertical component of a total-space tangent vector.

    The decomposition is the direct sum T = V + H: the returned tuple lies in
    the vertical space and ``parts - vertical`` lies in the horizontal space.
    For the q1 geometries (whose horizontal space is metric-orthogonal to the
    vertical space) the metric enters through the weight matrices and the two
    components are also orthogonal under the total-space metric.
    """
    parts = tuple(np.asarray(a, dtype=float) for a in parts)
    scale = max(np.sqrt(sum(np.sum(a**2) for a in parts)), 1e-300)
    if _tangency_defect(z, parts) > HORIZ_TOL * scale:
        raise ValueError("input is not tangent to the total space")
    parts = project_total_tangent(z, parts)
    geo = z.geometry

    if geo == "psd_q1":
        if metric is None:
            raise ValueError("psd_q1 projections require a metric family")
        _check_metric(z, metric)
        u, p = z.point.U, z.P
        pinv = np.linalg.inv(p)
        m = pinv.T @ metric.w(z) @ pinv
        a = u.T @ parts[0] @ p.T
        omega = solve_sylvester(m, m, 2.0 * skew(a @ m))
        return (u @ omega @ pinv.T,)
    if geo == "psd_q2":
        u, b = z.factor("U"), z.factor("B")
        omega = u.T @ parts[0]
        return (u @ omega, b @ omega - omega @ b)
    if geo == "gen_q1":
        if metric is None:
            raise ValueError("gen_q1 projections require a metric family")
        _check_metric(z, metric)
        u, v = z.point.U, z.point.V
        p1, p2 = z.P1, z.P2
        p1inv, p2inv = np.linalg.inv(p1), np.linalg.inv(p2)
        m1 = p1 @ metric.v_inv(z) @ p1.T
        m2 = p2 @ metric.w_inv(z) @ p2.T
        a1 = u.T @ parts[0] @ p2.T
        a2 = v.T @ parts[1] @ p1.T
        sv_t = solve_sylvester(m2, m1, a1.T @ m1 - m2 @ a2)
        sv = sv_t.T
        return (u @ sv @ p2inv.T, -v @ sv.T @ p1inv.T)
    if geo == "gen_q2":
        u, b, v = z.factors
        omega = (u.T @ parts[0] + v.T @ parts[2]) / 2.0
        return (u @ omega, b @ omega - omega @ b, v @ omega)
    u, y = z.factors
    omega = u.T @ parts[0]
    return (u @ omega, y @ omega)


def horizontal_project(
    z: QuotientPoint, parts, metric: Optional[MetricFamily] = None
) -> HorizontalVector:
    """Horizontal component of a total-space tangent vector (see
    ``vertical_project`` for the decomposition convention)."""
    parts = project_total_tangent(z, parts)
    vert = vertical_project(z, parts, metric)
    return HorizontalVector(z, tuple(a - b for a, b in zip(parts, vert)))


def _membership_defect(z, parts, metric) -> float:
    hor = horizontal_project(z, parts, metric)
    return float(
        np.sqrt(sum(np.sum((a - b) ** 2) for a, b in zip(parts, hor.parts)))
    )


def is_horizontal(
    z: QuotientPoint, parts, metric: Optional[MetricFamily] = None,
    tol: float = HORIZ_TOL,
) -> bool:
    parts = tuple(np.asarray(a, dtype=float) for a in parts)
    scale = max(np.sqrt(sum(np.sum(a**2) for a in parts)), 1e-300)
    if _tangency_defect(z, parts) > tol * scale:
        return False
    return _membership_defect(z, project_total_tangent(z, parts), metric) <= tol * scale


def horizontal_vector(
    z: QuotientPoint, *parts, metric: Optional[MetricFamily] = None
) -> HorizontalVector:
    """Wrap components as a horizontal vector, re-projecting near-misses.

    Components whose horizontal-membership defect is below 1e-8 (relative)
    are accepted as given; defects up to 1e-6 are silently cleaned by
    projection; anything larger is an error.
    """
    parts = tuple(np.asarray(a, dtype=float) for a in parts)
    scale = max(np.sqrt(sum(np.sum(a**2) for a in parts)), 1e-300)
    tangent = project_total_tangent(z, parts)
    defect = np.sqrt(
        _tangency_defect(z, parts) ** 2 + _membership_defect(z, tangent, metric) ** 2
    )
    if defect <= HORIZ_TOL * scale:
        return HorizontalVector(z, parts)
    if defect <= REPROJECT_TOL * scale:
        return horizontal_project(z, tangent, metric)
    raise ValueError(
        f"components are not horizontal (relative defect {defect / scale:.3e})"
    )


def ensure_horizontal(hv: HorizontalVector, metric: Optional[MetricFamily] = None):
    return horizontal_vector(hv.base, *hv.parts, metric=metric)


def random_horizontal(
    z: QuotientPoint, metric: Optional[MetricFamily], rng: np.random.Generator
) -> HorizontalVector:
    """Gaussian tangent draw projected onto the horizontal space."""
    raw = tuple(rng.standard_normal(f.shape) for f in z.factors)
    return horizontal_project(z, project_total_tangent(z, raw), metric)


# ---------------------------------------------------------------------------
# metric inner product


def metric_inner(
    z: QuotientPoint, t1: HorizontalVector, t2: HorizontalVector,
    metric: MetricFamily,
) -> float:
    """Total-space Riemannian metric evaluated on two tangent vectors at z."""
    if t1.base is not z or t2.base is not z:
        raise ValueError("vectors are not based at the given point")
    _check_metric(z, metric)
    geo = z.geometry
    if geo == "psd_q1":
        return float(np.trace(metric.w(z) @ t1.parts[0].T @ t2.parts[0]))
    if geo in ("psd_q2", "gen_q2"):
        vb, wb = metric.v(z), metric.w(z)
        out = np.trace(vb @ t1.parts[0].T @ t2.parts[0])
        out += np.trace(wb @ t1.parts[1] @ wb @ t2.parts[1])
        if geo == "gen_q2":
            out += np.trace(vb @ t1.parts[2].T @ t2.parts[2])
        return float(out)
    if geo == "gen_q1":
        return float(
            np.trace(metric.w(z) @ t1.parts[0].T @ t2.parts[0])
            + np.trace(metric.v(z) @ t1.parts[1].T @ t2.parts[1])
        )
    return float(
        np.trace(metric.v(z) @ t1.parts[0].T @ t2.parts[0])
        + np.trace(metric.w(z) @ t1.parts[1].T @ t2.parts[1])
    )


def metric_norm(z, t, metric) -> float:
    return float(np.sqrt(max(metric_inner(z, t, t, metric), 0.0)))


# ---------------------------------------------------------------------------
# Riemannian gradient (horizontal lift)


def gradient_lift_from_ambient(
    z: QuotientPoint, metric: MetricFamily, nabla
) -> HorizontalVector:
    """Closed-form horizontal lift induced by an ambient gradient-like matrix.

    Applied to the Euclidean gradient this is the lifted Riemannian gradient
    of h; applied to the ambient form of the embedded Riemannian gradient it
    realizes the quotient side of the gradient-conversion identities.
    """
    _check_metric(z, metric)
    nabla = np.asarray(nabla, dtype=float)
    geo = z.geometry
    if GEOMETRY_KIND[geo] == "psd":
        # the PSD problem only sees the symmetrized objective, whose
        # gradient at a symmetric point is the symmetric part
        nabla = sym(nabla)
    if geo == "psd_q1":
        yfac = z.factor("Y")
        parts = (2.0 * nabla @ yfac @ metric.w_inv(z),)
    elif geo == "psd_q2":
        u, b = z.factors
        winv, vinv = metric.w_inv(z), metric.v_inv(z)
        nu = nabla @ u
        parts = (2.0 * (nu - u @ (u.T @ nu)) @ b @ vinv, winv @ u.T @ nu @ winv)
    elif geo == "gen_q1":
        lfac, rfac = z.factors
        parts = (nabla @ rfac @ metric.w_inv(z), nabla.T @ lfac @ metric.v_inv(z))
    elif geo == "gen_q2":
        u, b, v = z.factors
        delta = u.T @ nabla @ v
        mix = (skew(delta) @ b + b @ skew(delta)) / 2.0
        nv = nabla @ v
        ntu = nabla.T @ u
        parts = (
            (nv - u @ (u.T @ nv)) @ b + u @ mix,
            b @ sym(delta) @ b,
            (ntu - v @ (v.T @ ntu)) @ b - v @ mix,
        )
    else:
        u, yfac = z.factors
        ny = nabla @ yfac
        parts = ((ny - u @ (u.T @ ny)) @ metric.v_inv(z), nabla.T @ u @ metric.w_inv(z))
    return HorizontalVector(z, parts)


def riem_grad_quotient(
    z: QuotientPoint, obj: Objective, metric: MetricFamily
) -> HorizontalVector:
    """Horizontal lift of the Riemannian gradient of the induced quotient
    objective h([Z]) = f(X(Z)).

    Closed forms per geometry; the defining property g(grad, theta) =
    D h(Z)[theta] holds for every horizontal theta.
    """
    return gradient_lift_from_ambient(z, metric, obj.egrad(z.X))


# ---------------------------------------------------------------------------
# Riemannian Hessian quadratic form


def riem_hess_quad_quotient(
    z: QuotientPoint, obj: Objective, metric: MetricFamily, theta: HorizontalVector
) -> float:
    """Quadratic form of the lifted Riemannian Hessian of h along theta.

    The expressions combine the Euclidean Hessian along the factorization
    differential, gradient-coupling terms from the factorization curvature,
    and correction terms carrying the Frechet derivatives of the metric
    weights. Bilinear values follow by polarization.
    """
    _check_metric(z, metric)
    if theta.base is not z:
        raise ValueError("direction is not based at the given point")
    theta = ensure_horizontal(theta, metric)
    x = z.X
    nabla = obj.egrad(x)
    geo = z.geometry
    if GEOMETRY_KIND[geo] == "psd":
        nabla = sym(nabla)

    def dot(a, b):
        return float(np.sum(a * b))

    if geo == "psd_q1":
        yfac = z.factor("Y")
        (ty,) = theta.parts
        amb = yfac @ ty.T + ty @ yfac.T
        out = obj.ehess_quad(x, amb)
        out += 2.0 * dot(nabla, ty @ ty.T)
        out += 2.0 * dot(nabla @ yfac @ metric.dw_inv(z, theta.parts), ty @ metric.w(z))
        grad = riem_grad_quotient(z, obj, metric)
        out += dot(metric.dw(z, grad.parts), ty.T @ ty) / 2.0
        return out

    if geo == "psd_q2":
        u, b = z.factors
        tu, tb = theta.parts
        amb = u @ b @ tu.T + u @ tb @ u.T + tu @ b @ u.T
        out = obj.ehess_quad(x, amb)
        out += 2.0 * dot(nabla, tu @ b @ tu.T)
        wb, vb = metric.w(z), metric.v(z)
        inner = (
            2.0 * tu @ tb
            + u @ metric.dw_inv(z, theta.parts) @ wb @ tb
            + tu @ vb @ metric.dv_inv(z, theta.parts) @ b
            - tu @ (u.T @ tu) @ b
            - u @ tu.T @ tu @ b
        )
        out += 2.0 * dot(nabla @ u, inner)
        grad_b = riem_grad_quotient(z, obj, metric).parts[1]
        gdir = (np.zeros_like(u), grad_b)
        out += np.trace(metric.dv(z, gdir) @ tu.T @ tu) / 2.0
        out += np.trace(sym(wb @ tb @ metric.dw(z, gdir)) @ tb)
        return float(out)

    if geo == "gen_q1":
        lfac, rfac = z.factors
        tl, tr = theta.parts
        amb = lfac @ tr.T + tl @ rfac.T
        out = obj.ehess_quad(x, amb)
        out += 2.0 * dot(nabla, tl @ tr.T)
        out += dot(nabla @ rfac @ metric.dw_inv(z, theta.parts), tl @ metric.w(z))
        out += dot(nabla.T @ lfac @ metric.dv_inv(z, theta.parts), tr @ metric.v(z))
        grad = riem_grad_quotient(z, obj, metric)
        out += dot(metric.dw(z, grad.parts), tl.T @ tl) / 2.0
        out += dot(metric.dv(z, grad.parts), tr.T @ tr) / 2.0
        return float(out)

    if geo == "gen_q2":
        u, b, v = z.factors
        tu, tb, tv = theta.parts
        amb = tu @ b @ v.T + u @ tb @ v.T + u @ b @ tv.T
        out = obj.ehess_quad(x, amb)
        out += 2.0 * dot(nabla, tu @ b @ tv.T)
        delta = u.T @ nabla @ v
        dprime = tu.T @ nabla @ v
        dsecond = u.T @ nabla @ tv
        utu = u.T @ tu
        vtv = v.T @ tv
        binv = spd_functions(b).inv
        out += dot(delta, sym(utu @ utu) @ b + b @ sym(vtv @ utu) - 2.0 * tu.T @ tu @ b) / 2.0
        out += dot(delta, b @ sym(vtv @ vtv) + sym(utu @ vtv) @ b
                   - 2.0 * b @ tv.T @ tv + 2.0 * tb @ binv @ tb) / 2.0
        out += dot(dprime, 2.0 * tb - utu @ b - tu.T @ u @ b / 2.0 - vtv @ b / 2.0)
        out += dot(dsecond, 2.0 * tb - b @ tv.T @ v - b @ vtv / 2.0 - b @ tu.T @ u / 2.0)
        return float(out)

    u, yfac = z.factors
    tu, ty = theta.parts
    amb = u @ ty.T + tu @ yfac.T
    out = obj.ehess_quad(x, amb)
    out += 2.0 * dot(nabla, tu @ ty.T)
    out -= dot(u.T @ nabla @ yfac, tu.T @ tu)
    out += dot(nabla.T @ u @ metric.dw_inv(z, theta.parts), ty @ metric.w(z))
    out += dot(nabla @ yfac @ metric.dv_inv(z, theta.parts), tu @ metric.v(z))
    grad_y = riem_grad_quotient(z, obj, metric).parts[1]
    gdir = (np.zeros_like(u), grad_y)
    out += dot(metric.dw(z, gdir), ty.T @ ty) / 2.0
    out += dot(metric.dv(z, gdir), tu.T @ tu) / 2.0
    return float(out)


# ---------------------------------------------------------------------------
# horizontal bases


def _sym_basis(r):
    out = []
    for i in range(r):
        for j in range(i, r):
            a = np.zeros((r, r))
            if i == j:
                a[i, i] = 1.0
            else:
                a[i, j] = a[j, i] = 1.0 / np.sqrt(2.0)
            out.append(a)
    return out


def _skew_basis(r):
    out = []
    for i in range(r):
        for j in range(i + 1, r):
            a = np.zeros((r, r))
            a[i, j] = 1.0 / np.sqrt(2.0)
            a[j, i] = -1.0 / np.sqrt(2.0)
            out.append(a)
    return out


def _unit_basis(m, n):
    out = []
    for i in range(m):
        for j in range(n):
            a = np.zeros((m, n))
            a[i, j] = 1.0
            out.append(a)
    return out


def horizontal_basis(z: QuotientPoint, metric: MetricFamily):
    """Structured basis of the horizontal space plus its metric Gram matrix.

    The count equals the quotient-manifold dimension: p*r - r(r-1)/2 for the
    PSD geometries, (p1 + p2 - r)*r for the general ones.
    """
    _check_metric(z, metric)
    geo = z.geometry
    r = z.r
    vecs = []
    if geo == "psd_q1":
        u, uperp = z.point.U, z.point.Uperp
        p = z.P
        pinv = np.linalg.inv(p)
        m = pinv.T @ metric.w(z) @ pinv
        minv = spd_functions(m).inv
        for a in _sym_basis(r):
            vecs.append(HorizontalVector(z, (u @ (a @ minv) @ pinv.T,)))
        for e in _unit_basis(uperp.shape[1], r):
            vecs.append(HorizontalVector(z, (uperp @ e @ pinv.T,)))
    elif geo == "psd_q2":
        u = z.factor("U")
        uperp = z.point.Uperp
        zero_b = np.zeros((r, r))
        zero_u = np.zeros_like(u)
        for e in _unit_basis(uperp.shape[1], r):
            vecs.append(HorizontalVector(z, (uperp @ e, zero_b)))
        for a in _sym_basis(r):
            vecs.append(HorizontalVector(z, (zero_u, a)))
    elif geo == "gen_q1":
        u, v = z.point.U, z.point.V
        uperp, vperp = z.point.Uperp, z.point.Vperp
        p1, p2 = z.P1, z.P2
        p1inv, p2inv = np.linalg.inv(p1), np.linalg.inv(p2)
        m1 = p1 @ metric.v_inv(z) @ p1.T
        m2 = p2 @ metric.w_inv(z) @ p2.T
        zl = np.zeros_like(z.factor("L"))
        zr = np.zeros_like(z.factor("R"))
        for e in _unit_basis(r, r):
            vecs.append(
                HorizontalVector(
                    z, (u @ e @ m2 @ p2inv.T, v @ e.T @ m1 @ p1inv.T)
                )
            )
        for e in _unit_basis(uperp.shape[1], r):
            vecs.append(HorizontalVector(z, (uperp @ e @ p2inv.T, zr)))
        for e in _unit_basis(vperp.shape[1], r):
            vecs.append(HorizontalVector(z, (zl, vperp @ e @ p1inv.T)))
    elif geo == "gen_q2":
        u, b, v = z.factors
        uperp, vperp = z.point.Uperp, z.point.Vperp
        zero_b = np.zeros((r, r))
        zero_u = np.zeros_like(u)
        zero_v = np.zeros_like(v)
        for e in _unit_basis(uperp.shape[1], r):
            vecs.append(HorizontalVector(z, (uperp @ e, zero_b, zero_v)))
        for e in _unit_basis(vperp.shape[1], r):
            vecs.append(HorizontalVector(z, (zero_u, zero_b, vperp @ e)))
        for a in _sym_basis(r):
            vecs.append(HorizontalVector(z, (zero_u, a, zero_v)))
        for w in _skew_basis(r):
            vecs.append(HorizontalVector(z, (u @ w, zero_b, -v @ w)))
    else:
        u, yfac = z.factors
        uperp = z.point.Uperp
        zero_y = np.zeros_like(yfac)
        zero_u = np.zeros_like(u)
        for e in _unit_basis(uperp.shape[1], r):
            vecs.append(HorizontalVector(z, (uperp @ e, zero_y)))
        for e in _unit_basis(yfac.shape[0], r):
            vecs.append(HorizontalVector(z, (zero_u, e)))
    gram = np.zeros((len(vecs), len(vecs)))
    for i, vi in enumerate(vecs):
        for j in range(i, len(vecs)):
            gram[i, j] = gram[j, i] = metric_inner(z, vi, vecs[j], metric)
    return vecs, gram


def quotient_dim(geometry: str, p1: int, p2: int, r: int) -> int:
    """Dimension of the quotient manifold (= its horizontal spaces)."""
    if geometry in ("psd_q1", "psd_q2", "psd_embedded"):
        return p1 * r - (r * r - r) // 2
    if geometry in ("gen_q1", "gen_q2", "gen_q3", "gen_embedded"):
        return (p1 + p2 - r) * r
    raise ValueError(f"unknown geometry {geometry!r}")


def total_curve(z: QuotientPoint, theta: HorizontalVector):
    """Curve t -> point through z with initial velocity theta.

    Straight lines in the vector-space factors, QR retraction on Stiefel
    factors. Used by the finite-difference oracles for gradients (any t) and
    for Hessians at stationary points (curve-independence holds there).
    """
    geo = z.geometry

    def curve(t):
        if geo == "psd_q1":
            return quotient_point(geo, z.factor("Y") + t * theta.parts[0])
        if geo == "psd_q2":
            u, b = z.factors
            return quotient_point(geo, _qf(u + t * theta.parts[0]),
                                  sym(b + t * theta.parts[1]))
        if geo == "gen_q1":
            lfac, rfac = z.factors
            return quotient_point(geo, lfac + t * theta.parts[0],
                                  rfac + t * theta.parts[1])
        if geo == "gen_q2":
            u, b, v = z.factors
            return quotient_point(geo, _qf(u + t * theta.parts[0]),
                                  sym(b + t * theta.parts[1]),
                                  _qf(v + t * theta.parts[2]))
        u, yfac = z.factors
        return quotient_point(geo, _qf(u + t * theta.parts[0]),
                              yfac + t * theta.parts[1])

    return curve
