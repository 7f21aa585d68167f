"""Dense linear-algebra utilities shared by the geometry modules.

Everything here is pure and operates on plain ``numpy`` arrays. Matrices are
small (desk scale, dimensions well below a few hundred), so dense
factorizations are used throughout.
"""

from typing import Callable, NamedTuple

import numpy as np


class RankError(ValueError):
    """A matrix does not have the numerical rank an operation requires."""


class ConditioningError(np.linalg.LinAlgError):
    """A linear system is too close to singular to solve reliably."""


def _as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {a.shape}")
    return a


def sym(x) -> np.ndarray:
    """Symmetric part (X + X^T)/2 of a square matrix."""
    x = _as_matrix(x)
    if x.shape[0] != x.shape[1]:
        raise ValueError(f"sym requires a square matrix, got {x.shape}")
    return (x + x.T) / 2.0


def skew(x) -> np.ndarray:
    """Skew-symmetric part (X - X^T)/2 of a square matrix."""
    x = _as_matrix(x)
    if x.shape[0] != x.shape[1]:
        raise ValueError(f"skew requires a square matrix, got {x.shape}")
    return (x - x.T) / 2.0


def solve_sylvester(a, b, c, sep_tol: float = 1e-12) -> np.ndarray:
    """Solve A X + X B = C by a Kronecker-vectorized dense solve.

    The coefficient matrices here never exceed ~20x20 (they come from r x r
    factor blocks), so the O((mn)^3) dense solve is preferable to
    Bartels-Stewart. Raises ``ConditioningError`` when the spectra of A and
    -B come within ``sep_tol`` of each other relative to the problem scale,
    which is exactly when the equation loses its unique solution.
    """
    a = _as_matrix(a)
    b = _as_matrix(b)
    c = _as_matrix(c)
    m, n = c.shape
    if a.shape != (m, m) or b.shape != (n, n):
        raise ValueError(
            f"incompatible Sylvester shapes: A {a.shape}, B {b.shape}, C {c.shape}"
        )
    scale = np.linalg.norm(a, 2) + np.linalg.norm(b, 2)
    alpha = np.linalg.eigvals(a)
    beta = np.linalg.eigvals(b)
    gap = np.min(np.abs(alpha[:, None] + beta[None, :]))
    if gap <= sep_tol * max(scale, 1e-300):
        raise ConditioningError(
            f"spectra of A and -B overlap (separation {gap:.3e}); "
            "Sylvester equation has no unique solution"
        )
    k = np.kron(np.eye(n), a) + np.kron(b.T, np.eye(m))
    x = np.linalg.solve(k, c.reshape(-1, order="F"))
    return x.reshape((m, n), order="F")


def orth_complement(u, tol: float = 1e-12) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of span(U).

    U must be p x r with orthonormal columns; the result is p x (p-r) with
    orthonormal columns satisfying U^T U_perp = 0. For r = p the result is an
    empty p x 0 matrix.
    """
    u = _as_matrix(u)
    p, r = u.shape
    if r > p:
        raise ValueError(f"complement needs r <= p, got shape {u.shape}")
    if r > 0 and np.linalg.norm(u.T @ u - np.eye(r)) > tol * max(1.0, np.sqrt(r)):
        raise ValueError("input columns are not orthonormal")
    if r == p:
        return np.zeros((p, 0))
    # Rows r..p of V^T in the full SVD of U^T span the null space of U^T.
    _, _, vt = np.linalg.svd(u.T, full_matrices=True)
    return vt[r:].T


class SpdFunctions(NamedTuple):
    sqrt: np.ndarray
    inv: np.ndarray
    inv_sqrt: np.ndarray


def spd_functions(b, tol: float = 1e-12) -> SpdFunctions:
    """Matrix square root, inverse, and inverse square root of an SPD matrix."""
    b = _as_matrix(b)
    if b.shape[0] != b.shape[1]:
        raise ValueError(f"SPD functions require a square matrix, got {b.shape}")
    if np.linalg.norm(b - b.T) > tol * max(1.0, np.linalg.norm(b)):
        raise ValueError("matrix is not symmetric")
    w, v = np.linalg.eigh(sym(b))
    if w[0] <= tol * max(w[-1], 0.0):
        raise ValueError("matrix is not positive definite")
    sq = (v * np.sqrt(w)) @ v.T
    inv = (v / w) @ v.T
    inv_sq = (v / np.sqrt(w)) @ v.T
    return SpdFunctions(sym(sq), sym(inv), sym(inv_sq))


def gen_sym_eig(h, g, cond_tol: float = 1e-12):
    """Eigenvalues/eigenvectors of the pencil H v = lambda G v, G SPD.

    Solved by Cholesky whitening: with G = L L^T the pencil reduces to the
    ordinary symmetric problem L^-1 H L^-T. Returned eigenvalues are in
    descending order and the eigenvectors (columns) are G-orthonormal.
    """
    h = _as_matrix(h)
    g = _as_matrix(g)
    if h.shape != g.shape or h.shape[0] != h.shape[1]:
        raise ValueError(f"H {h.shape} and G {g.shape} must be square and equal")
    wg = np.linalg.eigvalsh(sym(g))
    if wg[0] <= cond_tol * max(wg[-1], 0.0):
        raise ConditioningError(
            f"Gram matrix is not safely positive definite (eigs {wg[0]:.3e}..{wg[-1]:.3e})"
        )
    ell = np.linalg.cholesky(sym(g))
    middle = np.linalg.solve(ell, np.linalg.solve(ell, sym(h)).T).T
    w, q = np.linalg.eigh(sym(middle))
    order = np.argsort(w)[::-1]
    w = w[order]
    q = q[:, order]
    vecs = np.linalg.solve(ell.T, q)
    return w, vecs


def polarize(quad, a, b) -> float:
    """Bilinear form from a quadratic form: (Q(a+b) - Q(a-b)) / 4.

    Works for any vector type supporting + and - (ambient matrices, embedded
    tangents, horizontal vectors).
    """
    return (quad(a + b) - quad(a - b)) / 4.0


def finite_diff_directional(
    fn: Callable[[np.ndarray], float], x, v, order: int, h: float
) -> float:
    """Central finite difference of a scalar matrix function along V.

    order 1: (f(X+hV) - f(X-hV)) / (2h)
    order 2: (f(X+hV) - 2 f(X) + f(X-hV)) / h^2
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    fp = float(fn(x + h * v))
    fm = float(fn(x - h * v))
    if order == 1:
        out = (fp - fm) / (2.0 * h)
    elif order == 2:
        f0 = float(fn(x))
        out = (fp - 2.0 * f0 + fm) / h**2
    else:
        raise ValueError(f"order must be 1 or 2, got {order}")
    if not np.isfinite(out):
        raise ValueError("function evaluated to a non-finite value")
    return out
