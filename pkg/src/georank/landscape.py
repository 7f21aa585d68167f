"""Landscape connections between the embedded and quotient geometries.

Contains the closed-form gradient conversions valid at every point, Hessian
spectrum assembly on explicit bases, the per-index sandwich verification at
first-order stationary points, stationary-point classification, a projected
Riemannian gradient-descent FOSP finder, and the analytic stationary points
of the matrix-approximation objective (the independent oracle used by all
stationarity-dependent checks).
"""

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .embedded import (
    EmbeddedPoint,
    EmbeddedTangent,
    embed_point,
    retract,
    riem_grad_embedded,
    riem_hess_quad_embedded,
    tangent_basis,
    tangent_project,
)
from .linalg import (
    ConditioningError,
    RankError,
    gen_sym_eig,
    polarize,
    solve_sylvester,
    spd_functions,
    sym,
)
from .objectives import Objective
from .quotient import (
    GEOMETRY_KIND,
    HorizontalVector,
    MetricFamily,
    QuotientPoint,
    gradient_lift_from_ambient,
    horizontal_basis,
    lift_point,
    metric_inner,
    metric_norm,
    random_horizontal,
    riem_grad_quotient,
    riem_hess_quad_quotient,
)
from .transport import forward_map, spectrum_bounds

EMBEDDED_GEOMETRIES = ("psd_embedded", "gen_embedded")


def embedded_tag(kind: str) -> str:
    return "psd_embedded" if kind == "psd" else "gen_embedded"


# ---------------------------------------------------------------------------
# gradient conversions (exact at every point, not only at stationary ones)


def grad_embedded_from_quotient(
    z: QuotientPoint, grad_h: HorizontalVector, metric: MetricFamily
) -> EmbeddedTangent:
    """Embedded Riemannian gradient reconstructed from a quotient lift.

    Applied verbatim to any horizontal vector; when ``grad_h`` is the lifted
    Riemannian gradient of h the result equals the embedded Riemannian
    gradient of f at the represented matrix.
    """
    if grad_h.base is not z:
        raise ValueError("horizontal vector is not based at the given point")
    geo = z.geometry
    if geo == "psd_q1":
        yfac = z.factor("Y")
        (g,) = grad_h.parts
        a = g @ metric.w(z) @ np.linalg.pinv(yfac)
        proj_out = np.eye(yfac.shape[0]) - yfac @ np.linalg.pinv(yfac)
        amb = (a + a.T @ proj_out) / 2.0
    elif geo == "psd_q2":
        u, b = z.factors
        gu, gb = grad_h.parts
        binv = spd_functions(b).inv
        wb, vb = metric.w(z), metric.v(z)
        a = gu @ vb @ binv @ u.T / 2.0
        amb = a + a.T + u @ wb @ gb @ wb @ u.T
    elif geo == "gen_q1":
        lfac, rfac = z.factors
        gl, gr = grad_h.parts
        rp = np.linalg.pinv(rfac)
        lp = np.linalg.pinv(lfac)
        amb = gl @ metric.w(z) @ rp + (gr @ metric.v(z) @ lp).T @ (
            np.eye(rfac.shape[0]) - rfac @ rp
        )
    elif geo == "gen_q2":
        u, b, v = z.factors
        gu, gb, gv = grad_h.parts
        binv = spd_functions(b).inv
        # skew part of Delta solves B K + K B = 2 gu^T U with K = skew(Delta)^T
        k = solve_sylvester(b, b, 2.0 * gu.T @ u)
        delta = binv @ gb @ binv + k.T
        pgu = gu - u @ (u.T @ gu)
        pgv = gv - v @ (v.T @ gv)
        amb = pgu @ binv @ v.T + u @ delta @ v.T + (pgv @ binv @ u.T).T
    else:
        u, yfac = z.factors
        gu, gy = grad_h.parts
        amb = gu @ metric.v(z) @ np.linalg.pinv(yfac) + (gy @ metric.w(z) @ u.T).T
    return tangent_project(z.point, amb)


def grad_quotient_from_embedded(
    z: QuotientPoint, grad_f: EmbeddedTangent, metric: MetricFamily
) -> HorizontalVector:
    """Quotient gradient lift reconstructed from the embedded gradient.

    The conversion has the same closed form as the lifted gradient itself,
    with the Euclidean gradient replaced by the embedded Riemannian gradient.
    """
    if grad_f.base is not z.point:
        raise ValueError(
            "embedded tangent is not based at the point matched to this "
            "quotient representative"
        )
    return gradient_lift_from_ambient(z, metric, grad_f.ambient())


# ---------------------------------------------------------------------------
# spectra


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    geometry: str
    metric: str
    eigenvalues: np.ndarray  # descending
    gram_cond: float
    grad_norm: float

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[-1])

    def to_dict(self) -> dict:
        return {
            "geometry": self.geometry,
            "metric": self.metric,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "gram_cond": float(self.gram_cond),
            "grad_norm": float(self.grad_norm),
        }


def _as_quotient(point, geometry) -> QuotientPoint:
    if isinstance(point, QuotientPoint):
        if point.geometry != geometry:
            raise ValueError(f"point is a {point.geometry} point, not {geometry}")
        return point
    return lift_point(point, geometry)


def _mix_basis(basis, gram, rng):
    d = len(basis)
    c = rng.standard_normal((d, d)) / np.sqrt(d) + np.eye(d)
    mixed = []
    for j in range(d):
        v = basis[0] * c[0, j]
        for i in range(1, d):
            v = v + basis[i] * c[i, j]
        mixed.append(v)
    return mixed, c.T @ gram @ c


def hessian_spectrum(
    point,
    obj: Objective,
    geometry: str,
    metric: Optional[MetricFamily] = None,
    mix_rng: Optional[np.random.Generator] = None,
    cond_limit: float = 1e10,
) -> SpectrumReport:
    """Full Riemannian Hessian spectrum at a point under one geometry.

    The Hessian matrix is assembled entry by entry from the quadratic form
    via polarization over an explicit tangent/horizontal basis, and the
    eigenvalues are those of the pencil (H, Gram). ``mix_rng`` optionally
    replaces the structured basis by a random invertible recombination
    (the spectrum is invariant; used for self-checks).
    """
    if geometry in EMBEDDED_GEOMETRIES:
        if not isinstance(point, EmbeddedPoint):
            point = point.point
        basis = tangent_basis(point)
        gram = np.eye(len(basis))

        def quad(v):
            return riem_hess_quad_embedded(point, obj, v)

        gnorm = riem_grad_embedded(point, obj).norm()
        mname = "euclidean"
    else:
        if metric is None:
            raise ValueError("quotient geometries need a metric family")
        z = _as_quotient(point, geometry)
        basis, gram = horizontal_basis(z, metric)

        def quad(v):
            return riem_hess_quad_quotient(z, obj, metric, v)

        gnorm = metric_norm(z, riem_grad_quotient(z, obj, metric), metric)
        mname = metric.name

    if mix_rng is not None:
        basis, gram = _mix_basis(basis, gram, mix_rng)
    d = len(basis)
    h = np.zeros((d, d))
    for i in range(d):
        h[i, i] = quad(basis[i])
        for j in range(i + 1, d):
            h[i, j] = h[j, i] = polarize(quad, basis[i], basis[j])
    cond = float(np.linalg.cond(gram))
    if cond > cond_limit:
        raise ConditioningError(f"basis Gram condition {cond:.3e} exceeds {cond_limit:.1e}")
    eig, _ = gen_sym_eig(h, gram)
    return SpectrumReport(geometry, mname, eig, cond, float(gnorm))


# ---------------------------------------------------------------------------
# sandwich verification at FOSPs


def verify_sandwich(
    z: QuotientPoint,
    obj: Objective,
    metric: MetricFamily,
    rng: Optional[np.random.Generator] = None,
    n_directions: int = 100,
    margin_tol: float = 1e-8,
    identity_rtol: float = 1e-8,
    fosp_tol: float = 1e-8,
) -> dict:
    """Check the spectrum sandwich and the pointwise Hessian identity at a
    Riemannian FOSP of the quotient problem.

    Both statements are exact only at exact stationary points; the identity
    tolerance is therefore widened proportionally to the residual gradient
    norm, and the report records the coupling.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    grad_h = riem_grad_quotient(z, obj, metric)
    gnorm = metric_norm(z, grad_h, metric)
    egrad_scale = float(np.linalg.norm(obj.egrad(z.X), 2))
    threshold = fosp_tol * (1.0 + egrad_scale)
    if gnorm > threshold:
        raise ValueError(
            f"point is not a FOSP: |grad| = {gnorm:.3e} > {threshold:.3e}"
        )

    emb = hessian_spectrum(z.point, obj, embedded_tag(z.point.kind))
    quo = hessian_spectrum(z, obj, z.geometry, metric)
    coeffs = spectrum_bounds(z, metric)
    lam_f, lam_h = emb.eigenvalues, quo.eigenvalues
    scale = max(1.0, np.max(np.abs(lam_f)), np.max(np.abs(lam_h)))

    per_index = []
    sandwich_ok = True
    for k in range(len(lam_f)):
        lo, hi = coeffs.interval(lam_f[k])
        m_lo = float(lam_h[k] - lo)
        m_hi = float(hi - lam_h[k])
        ok = m_lo >= -margin_tol * scale and m_hi >= -margin_tol * scale
        sandwich_ok &= ok
        per_index.append(
            {"k": k, "lam_f": float(lam_f[k]), "lam_h": float(lam_h[k]),
             "lo": float(lo), "hi": float(hi),
             "margin_lo": m_lo, "margin_hi": m_hi, "ok": bool(ok)}
        )

    # pointwise identity Hess h[theta, theta] = Hess f[L theta, L theta]
    identity_tol = identity_rtol + gnorm / scale
    max_rel = 0.0
    for _ in range(n_directions):
        theta = random_horizontal(z, metric, rng)
        qh = riem_hess_quad_quotient(z, obj, metric, theta)
        xi = forward_map(z, theta, metric)
        qf = riem_hess_quad_embedded(z.point, obj, xi)
        denom = max(abs(qh), abs(qf),
                    scale * metric_inner(z, theta, theta, metric), 1e-300)
        max_rel = max(max_rel, abs(qh - qf) / denom)
    identity_ok = max_rel <= identity_tol

    matched = (coeffs.beta - coeffs.alpha) <= 1e-10 * max(1.0, coeffs.beta)
    spectra_rel_gap = float(
        np.max(np.abs(0.5 * (coeffs.alpha + coeffs.beta) * lam_f - lam_h)) / scale
    ) if matched else None

    return {
        "geometry": z.geometry,
        "metric": metric.name,
        "metric_weights": metric.description,
        "alpha": coeffs.alpha,
        "beta": coeffs.beta,
        "grad_norm": gnorm,
        "fosp_threshold": threshold,
        "eig_embedded": [float(v) for v in lam_f],
        "eig_quotient": [float(v) for v in lam_h],
        "per_index": per_index,
        "identity_max_rel_err": float(max_rel),
        "identity_tol": float(identity_tol),
        "matched_coefficients": bool(matched),
        "matched_spectra_rel_gap": spectra_rel_gap,
        "passed": bool(sandwich_ok and identity_ok),
    }


# ---------------------------------------------------------------------------
# classification


@dataclass(frozen=True, eq=False)
class StationaryClassification:
    is_fosp: bool
    is_sosp: bool
    is_strict_saddle: bool
    min_eigenvalue: float
    grad_norm: float
    tolerances: dict = field(default_factory=dict)

    def label(self) -> str:
        if not self.is_fosp:
            return "non-stationary"
        if self.is_sosp:
            return "sosp"
        if self.is_strict_saddle:
            return "strict-saddle"
        return "fosp"

    def to_dict(self) -> dict:
        return {
            "is_fosp": self.is_fosp,
            "is_sosp": self.is_sosp,
            "is_strict_saddle": self.is_strict_saddle,
            "min_eigenvalue": self.min_eigenvalue,
            "grad_norm": self.grad_norm,
            "label": self.label(),
            "tolerances": dict(self.tolerances),
        }


def classify_point(
    point,
    obj: Objective,
    geometry: str,
    metric: Optional[MetricFamily] = None,
    tol_grad: float = 1e-8,
    tol_hess: float = 1e-6,
    tol_saddle: float = 1e-6,
) -> StationaryClassification:
    """FOSP / SOSP / strict-saddle classification under one geometry."""
    report = hessian_spectrum(point, obj, geometry, metric)
    egrad_scale = float(np.linalg.norm(obj.egrad(point.X), 2))
    sscale = max(1.0, float(np.max(np.abs(report.eigenvalues))))
    lam_min = report.min_eigenvalue
    is_fosp = report.grad_norm <= tol_grad * (1.0 + egrad_scale)
    is_sosp = bool(is_fosp and lam_min >= -tol_hess * sscale)
    is_saddle = bool(is_fosp and lam_min <= -tol_saddle * sscale)
    return StationaryClassification(
        bool(is_fosp), is_sosp, is_saddle, float(lam_min), float(report.grad_norm),
        {"tol_grad": tol_grad, "tol_hess": tol_hess, "tol_saddle": tol_saddle},
    )


# ---------------------------------------------------------------------------
# FOSP finder (projected Riemannian gradient descent with Armijo)


@dataclass(frozen=True, eq=False)
class FospResult:
    point: EmbeddedPoint
    quotient_point: Optional[QuotientPoint]
    geometry: str
    converged: bool
    iterations: int
    grad_norm: float
    trace: list  # (iteration, f, |grad|)
    message: str

    def to_dict(self) -> dict:
        return {
            "geometry": self.geometry,
            "converged": self.converged,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "message": self.message,
            "trace_tail": [list(map(float, t)) for t in self.trace[-5:]],
        }


def _lipschitz_estimate(obj: Objective, x, iters: int = 20, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(x.shape)
    v /= np.linalg.norm(v)
    lam = 1.0
    for _ in range(iters):
        w = obj.ehess_vec(x, v)
        lam = np.linalg.norm(w)
        if lam < 1e-14:
            return 0.0
        v = w / lam
    return float(lam)


def find_fosp(
    obj: Objective,
    geometry: str,
    init,
    max_iter: int = 5000,
    tol: float = 1e-8,
    metric: Optional[MetricFamily] = None,
    backtracks: int = 60,
    armijo: float = 1e-4,
) -> FospResult:
    """Riemannian gradient descent with Armijo backtracking and the
    projection retraction, run under the embedded geometry.

    For a quotient geometry the search runs on the corresponding embedded
    manifold (stationary points correspond one-to-one across geometries) and
    the result additionally carries the lifted representative.
    """
    if geometry in EMBEDDED_GEOMETRIES:
        kind = "psd" if geometry == "psd_embedded" else "general"
        quotient_geo = None
    elif geometry in GEOMETRY_KIND:
        kind = GEOMETRY_KIND[geometry]
        quotient_geo = geometry
    else:
        raise ValueError(f"unknown geometry {geometry!r}")

    pt = init.point if isinstance(init, QuotientPoint) else init
    if pt.kind != kind:
        raise ValueError(f"initial point is {pt.kind}, geometry wants {kind}")

    lip = _lipschitz_estimate(obj, pt.X)
    t0 = 1.0 / lip if lip > 1e-12 else 1.0
    fval = obj.value(pt.X)
    grad = riem_grad_embedded(pt, obj)
    gnorm = grad.norm()
    trace = [(0, fval, gnorm)]
    converged = gnorm <= tol
    it = 0
    message = "initial point is already stationary" if converged else ""

    while not converged and it < max_iter:
        it += 1
        step = t0
        accepted = False
        for _ in range(backtracks):
            try:
                cand = retract(pt, grad, -step)
            except RankError:
                step *= 0.5
                continue
            fnew = obj.value(cand.X)
            if fnew <= fval - armijo * step * gnorm**2:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            message = f"line search failed at iteration {it}"
            break
        pt, fval = cand, fnew
        grad = riem_grad_embedded(pt, obj)
        gnorm = grad.norm()
        trace.append((it, fval, gnorm))
        if gnorm <= tol:
            converged = True
            message = f"converged in {it} iterations"

    if not converged and not message:
        message = f"max_iter={max_iter} reached with |grad| = {gnorm:.3e}"
    zq = lift_point(pt, quotient_geo) if quotient_geo else None
    return FospResult(pt, zq, geometry, bool(converged), it, float(gnorm),
                      trace, message)


# ---------------------------------------------------------------------------
# analytic stationary points of the matrix-approximation objective


def analytic_fosps(obj: Objective, r: int, gap_tol: float = 1e-8):
    """All rank-r stationary points of f(X) = 0.5 ||X - M||^2.

    These are the truncations of M onto r-element subsets of its nonzero
    spectrum (positive eigenvalues in the symmetric case, nonzero singular
    values otherwise). Requires the relevant spectrum values to be pairwise
    distinct, otherwise the subset stationary points are not isolated.
    """
    if obj.kind != "approx":
        raise ValueError("analytic stationary points require the matrix-approx objective")
    m = -obj.egrad(np.zeros(obj.shape))
    scale = max(np.linalg.norm(m, 2), 1e-300)
    if obj.symmetric:
        w, q = np.linalg.eigh(sym(m))
        order = np.argsort(w)[::-1]
        w, q = w[order], q[:, order]
        keep = np.where(w > 1e-10 * scale)[0]
        vals = w[keep]
        kind = "psd"
    else:
        u_all, s_all, vt_all = np.linalg.svd(m)
        keep = np.where(s_all > 1e-10 * scale)[0]
        vals = s_all[keep]
        kind = "general"
    if len(vals) < r:
        raise RankError(f"target has numerical rank {len(vals)} < r = {r}")
    gaps = np.abs(vals[:, None] - vals[None, :]) + np.eye(len(vals)) * scale
    if np.min(gaps) <= gap_tol * scale:
        raise ValueError(
            "spectrum values are repeated within tolerance; subset stationary "
            "points are not isolated"
        )

    points = []
    for subset in itertools.combinations(range(len(vals)), r):
        idx = keep[list(subset)]
        if kind == "psd":
            x = (q[:, idx] * w[idx]) @ q[:, idx].T
        else:
            x = (u_all[:, idx] * s_all[idx]) @ vt_all[idx, :]
        pt = embed_point(x, r, kind)
        gnorm = riem_grad_embedded(pt, obj).norm()
        if gnorm > 1e-10 * (1.0 + scale):
            raise AssertionError(
                f"analytic stationary point failed certification: |grad| = {gnorm:.3e}"
            )
        points.append(pt)
    return points
