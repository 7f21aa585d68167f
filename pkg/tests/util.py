"""Shared builders for randomized test instances."""

import numpy as np

from georank import make_matrix_approx
from georank.embedded import project_rank_r
from georank.linalg import sym
from georank.quotient import metric_choices, metric_family, quotient_point

PSD_QUOTIENTS = ("psd_q1", "psd_q2")
GEN_QUOTIENTS = ("gen_q1", "gen_q2", "gen_q3")
ALL_QUOTIENTS = PSD_QUOTIENTS + GEN_QUOTIENTS


def qf(a):
    q, r = np.linalg.qr(a)
    s = np.sign(np.diag(r))
    s[s == 0] = 1.0
    return q * s


def random_embedded(kind, p1, p2, r, rng):
    if kind == "psd":
        a = rng.standard_normal((p1, r))
        return project_rank_r(a @ a.T, r, "psd")
    return project_rank_r(
        rng.standard_normal((p1, r)) @ rng.standard_normal((r, p2)), r, "general"
    )


def random_quotient(geometry, p1, p2, r, rng):
    if geometry == "psd_q1":
        return quotient_point(geometry, rng.standard_normal((p1, r)))
    if geometry == "psd_q2":
        c = rng.standard_normal((r, r))
        return quotient_point(geometry, qf(rng.standard_normal((p1, r))),
                              c @ c.T + 0.5 * np.eye(r))
    if geometry == "gen_q1":
        return quotient_point(geometry, rng.standard_normal((p1, r)),
                              rng.standard_normal((p2, r)))
    if geometry == "gen_q2":
        c = rng.standard_normal((r, r))
        return quotient_point(geometry, qf(rng.standard_normal((p1, r))),
                              c @ c.T + 0.5 * np.eye(r),
                              qf(rng.standard_normal((p2, r))))
    return quotient_point(geometry, qf(rng.standard_normal((p1, r))),
                          rng.standard_normal((p2, r)))


def random_approx_objective(kind, p1, p2, rng):
    a = rng.standard_normal((p1, p2))
    if kind == "psd":
        return make_matrix_approx(sym(a), symmetric=True)
    return make_matrix_approx(a)


def geometry_metric_combos(geometries):
    """(geometry, metric) pairs over every enumerated metric family."""
    for geo in geometries:
        for name in metric_choices(geo):
            yield geo, metric_family(geo, name)


def kind_of(geometry):
    return "psd" if geometry.startswith("psd") else "general"


def hv_gap(a, b):
    """Relative component-wise gap between two horizontal vectors."""
    num = np.sqrt(sum(np.sum((x - y) ** 2) for x, y in zip(a.parts, b.parts)))
    den = max(a.raw_norm(), b.raw_norm(), 1e-300)
    return num / den
