"""Embedded geometry of the fixed-rank PSD and general matrix manifolds.

Points are stored with cached factors: a rank-r PSD matrix as X = U S U^T
with U orthonormal, a rank-r general matrix as X = U S V^T. Tangent vectors
live in the (S, D)-block coordinates relative to the point's cached frame

    psd:      [U U_perp] [[S, D^T], [D, 0]] [U U_perp]^T,   S symmetric
    general:  [U U_perp] [[S, D2^T], [D1, 0]] [V V_perp]^T, S arbitrary

so the manifold dimension is p*r - r(r-1)/2 in the PSD case and
(p1 + p2 - r)*r in the general case. The ambient metric is Frobenius.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import RankError, orth_complement, sym
from .objectives import Objective

RANK_GAP_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class EmbeddedPoint:
    """Rank-r point with cached orthonormal frame and r x r core factor."""

    kind: str  # "psd" | "general"
    X: np.ndarray
    U: np.ndarray
    Sigma: np.ndarray  # U^T X U (psd) or U^T X V (general); invertible r x r
    V: Optional[np.ndarray]
    Uperp: np.ndarray
    Vperp: Optional[np.ndarray]

    @property
    def r(self) -> int:
        return self.U.shape[1]

    @property
    def shape(self) -> tuple:
        return self.X.shape

    def frame_right(self) -> np.ndarray:
        return self.U if self.kind == "psd" else self.V

    def frame_right_perp(self) -> np.ndarray:
        return self.Uperp if self.kind == "psd" else self.Vperp


@dataclass(frozen=True, eq=False)
class EmbeddedTangent:
    """Tangent vector in (S, D)-block coordinates at a fixed point."""

    base: EmbeddedPoint
    S: np.ndarray
    D1: np.ndarray
    D2: Optional[np.ndarray]  # None for the PSD kind

    def ambient(self) -> np.ndarray:
        pt = self.base
        if pt.kind == "psd":
            core = pt.U @ self.S @ pt.U.T
            off = pt.Uperp @ self.D1 @ pt.U.T
            return core + off + off.T
        return (
            pt.U @ self.S @ pt.V.T
            + pt.Uperp @ self.D1 @ pt.V.T
            + pt.U @ self.D2.T @ pt.Vperp.T
        )

    def norm(self) -> float:
        if self.base.kind == "psd":
            return float(
                np.sqrt(np.sum(self.S**2) + 2.0 * np.sum(self.D1**2))
            )
        return float(
            np.sqrt(np.sum(self.S**2) + np.sum(self.D1**2) + np.sum(self.D2**2))
        )

    def _combine(self, other, sa, sb):
        if other.base is not self.base:
            raise ValueError("tangent arithmetic requires a common base point")
        d2 = None if self.D2 is None else sa * self.D2 + sb * other.D2
        return EmbeddedTangent(self.base, sa * self.S + sb * other.S,
                               sa * self.D1 + sb * other.D1, d2)

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, c):
        d2 = None if self.D2 is None else c * self.D2
        return EmbeddedTangent(self.base, c * self.S, c * self.D1, d2)

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)


def _fix_column_signs(u, v=None):
    """Make the largest-magnitude entry of each column of U positive.

    For the general kind the corresponding column of V is flipped along with
    U's, so the represented product is unchanged.
    """
    flips = np.sign(u[np.argmax(np.abs(u), axis=0), np.arange(u.shape[1])])
    flips[flips == 0] = 1.0
    u = u * flips
    if v is None:
        return u, None
    return u, v * flips


def _top_factors(x, r, kind, rank_tol=RANK_GAP_TOL):
    """Top-r factorization of an ambient matrix, with sign-fixed frames."""
    x = np.asarray(x, dtype=float)
    if kind == "psd":
        if x.shape[0] != x.shape[1]:
            raise ValueError(f"psd kind needs a square matrix, got {x.shape}")
        if np.linalg.norm(x - x.T) > 1e-10 * max(1.0, np.linalg.norm(x)):
            raise ValueError("psd kind requires a symmetric matrix")
        w, q = np.linalg.eigh(sym(x))
        order = np.argsort(w)[::-1]
        w, q = w[order], q[:, order]
        scale = max(np.max(np.abs(w)), 1e-300)
        if w[r - 1] <= rank_tol * scale:
            raise RankError(
                f"matrix is not numerically rank {r} with positive spectrum "
                f"(eigenvalue {r} is {w[r - 1]:.3e})"
            )
        u, _ = _fix_column_signs(q[:, :r])
        return u, np.diag(w[:r]), None
    if kind != "general":
        raise ValueError(f"unknown manifold kind {kind!r}")
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    if s[r - 1] <= rank_tol * max(s[0], 1e-300):
        raise RankError(
            f"matrix is not numerically rank {r} (singular value {r} is {s[r-1]:.3e})"
        )
    u, v = _fix_column_signs(u[:, :r], vt[:r].T)
    return u, np.diag(s[:r]), v


def _point_from_factors(kind, u, sigma, v):
    if kind == "psd":
        x = u @ sigma @ u.T
        return EmbeddedPoint("psd", sym(x), u, sigma, None, orth_complement(u), None)
    x = u @ sigma @ v.T
    return EmbeddedPoint("general", x, u, sigma, v,
                         orth_complement(u), orth_complement(v))


def embed_point(x, r, kind) -> EmbeddedPoint:
    """Wrap a rank-r matrix as a manifold point with cached factors."""
    x = np.asarray(x, dtype=float)
    u, sigma, v = _top_factors(x, r, kind)
    pt = _point_from_factors(kind, u, sigma, v)
    resid = np.linalg.norm(pt.X - x) / max(np.linalg.norm(x), 1e-300)
    if resid > 1e-10:
        raise RankError(
            f"input is not rank {r}: truncation residual {resid:.3e} exceeds 1e-10"
        )
    return pt


def project_rank_r(x, r, kind) -> EmbeddedPoint:
    """Metric projection of an ambient matrix onto the rank-r manifold
    (truncated eigendecomposition / SVD), without a residual check."""
    u, sigma, v = _top_factors(x, r, kind)
    return _point_from_factors(kind, u, sigma, v)


def tangent_project(pt: EmbeddedPoint, z) -> EmbeddedTangent:
    """Orthogonal projection of an ambient matrix onto the tangent space."""
    z = np.asarray(z, dtype=float)
    if z.shape != pt.X.shape:
        raise ValueError(f"expected shape {pt.X.shape}, got {z.shape}")
    if pt.kind == "psd":
        z = sym(z)
        return EmbeddedTangent(pt, sym(pt.U.T @ z @ pt.U), pt.Uperp.T @ z @ pt.U, None)
    return EmbeddedTangent(
        pt,
        pt.U.T @ z @ pt.V,
        pt.Uperp.T @ z @ pt.V,
        pt.Vperp.T @ z.T @ pt.U,
    )


def riem_grad_embedded(pt: EmbeddedPoint, obj: Objective) -> EmbeddedTangent:
    """Riemannian gradient: the tangent projection of the Euclidean gradient."""
    return tangent_project(pt, obj.egrad(pt.X))


def riem_hess_quad_embedded(pt: EmbeddedPoint, obj: Objective,
                            xi: EmbeddedTangent) -> float:
    """Quadratic form of the Riemannian Hessian at pt along xi.

    Equals the Euclidean Hessian form plus the curvature correction coupling
    the Euclidean gradient with the off-space blocks of xi through Sigma^-1.
    """
    if xi.base is not pt:
        raise ValueError("tangent vector is not based at the given point")
    sig = pt.Sigma
    if np.linalg.svd(sig, compute_uv=False)[-1] <= RANK_GAP_TOL * np.linalg.norm(sig, 2):
        raise RankError("core factor is numerically singular")
    amb = xi.ambient()
    quad = obj.ehess_quad(pt.X, amb)
    egrad = obj.egrad(pt.X)
    if pt.kind == "psd":
        corr = pt.Uperp @ (xi.D1 @ np.linalg.solve(sig, xi.D1.T)) @ pt.Uperp.T
    else:
        corr = pt.Uperp @ (xi.D1 @ np.linalg.solve(sig, xi.D2.T)) @ pt.Vperp.T
    return quad + 2.0 * float(np.sum(egrad * corr))


def retract(pt: EmbeddedPoint, xi: EmbeddedTangent, t: float) -> EmbeddedPoint:
    """Projection retraction: rank-r truncation of X + t * xi."""
    if not np.isfinite(t):
        raise ValueError("step must be finite")
    return project_rank_r(pt.X + t * xi.ambient(), pt.r, pt.kind)


def tangent_basis(pt: EmbeddedPoint):
    """Frobenius-orthonormal basis of the tangent space, S-blocks first."""
    r = pt.r
    basis = []
    if pt.kind == "psd":
        p = pt.X.shape[0]
        for i in range(r):
            for j in range(i, r):
                s = np.zeros((r, r))
                if i == j:
                    s[i, i] = 1.0
                else:
                    s[i, j] = s[j, i] = 1.0 / np.sqrt(2.0)
                basis.append(EmbeddedTangent(pt, s, np.zeros((p - r, r)), None))
        for k in range(p - r):
            for l in range(r):
                d = np.zeros((p - r, r))
                d[k, l] = 1.0 / np.sqrt(2.0)
                basis.append(EmbeddedTangent(pt, np.zeros((r, r)), d, None))
        return basis
    p1, p2 = pt.X.shape
    for i in range(r):
        for j in range(r):
            s = np.zeros((r, r))
            s[i, j] = 1.0
            basis.append(EmbeddedTangent(pt, s, np.zeros((p1 - r, r)),
                                         np.zeros((p2 - r, r))))
    for k in range(p1 - r):
        for l in range(r):
            d1 = np.zeros((p1 - r, r))
            d1[k, l] = 1.0
            basis.append(EmbeddedTangent(pt, np.zeros((r, r)), d1,
                                         np.zeros((p2 - r, r))))
    for k in range(p2 - r):
        for l in range(r):
            d2 = np.zeros((p2 - r, r))
            d2[k, l] = 1.0
            basis.append(EmbeddedTangent(pt, np.zeros((r, r)),
                                         np.zeros((p1 - r, r)), d2))
    return basis
