"""Gradient flows dX/dt = -grad f(X) in ambient coordinates.

The embedded geometries flow along the negative Riemannian gradient. Each
supported quotient source induces a flow on X through the factorization link,
and for the enumerated metric choices the induced field has a closed ambient
form. Two of the pairs produce fields identical to the embedded ones (the
metrics whose sandwich gap coefficients are (1, 1)); the full-rank
factorization pairs differ from the embedded field exactly by the doubly
projected term P_U grad f P_U (PSD) or P_U grad f P_V (general).

Integration is classical RK4 on the ambient field with a rank-r
re-factorization after every step to control drift off the manifold.
"""

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .embedded import EmbeddedPoint, project_rank_r, riem_grad_embedded
from .linalg import RankError, sym
from .objectives import Objective

# (geometry, metric-name) pairs whose induced X-space fields are implemented
FLOW_SOURCES = (
    ("psd_embedded", None),
    ("psd_q1", "double-gram"),
    ("psd_q2", "matched"),
    ("gen_embedded", None),
    ("gen_q1", "crossed-gram"),
    ("gen_q3", "matched"),
)


def _normalize_source(source):
    if isinstance(source, str):
        source = (source, None)
    source = (source[0], source[1])
    if source not in FLOW_SOURCES:
        raise ValueError(
            f"unsupported flow source {source}; supported: {list(FLOW_SOURCES)}"
        )
    return source


def flow_field(pt: EmbeddedPoint, obj: Objective, source) -> np.ndarray:
    """Ambient dX/dt at a manifold point for one of the enumerated sources."""
    geometry, _ = _normalize_source(source)
    want_kind = "psd" if geometry.startswith("psd") else "general"
    if pt.kind != want_kind:
        raise ValueError(f"{geometry} flow needs a {want_kind} point, got {pt.kind}")
    if geometry in ("psd_embedded", "gen_embedded"):
        return -riem_grad_embedded(pt, obj).ambient()
    nabla = obj.egrad(pt.X)
    if pt.kind == "psd":
        nabla = sym(nabla)  # PSD flows see the symmetrized objective
    pu = pt.U @ pt.U.T
    if geometry == "psd_q1":
        return -(pu @ nabla + nabla @ pu)
    if geometry == "psd_q2":
        return -(pu @ nabla + nabla @ pu - pu @ nabla @ pu)
    pv = pt.V @ pt.V.T
    if geometry == "gen_q1":
        return -(pu @ nabla + nabla @ pv)
    return -(pu @ nabla + nabla @ pv - pu @ nabla @ pv)


@dataclass(frozen=True, eq=False)
class FlowTrace:
    times: np.ndarray
    states: list  # ambient matrices X(t), rank r
    geometry: str
    metric: Optional[str]
    rank: int
    degenerate: bool = False
    message: str = ""

    def energies(self, obj: Objective) -> np.ndarray:
        return np.array([obj.value(x) for x in self.states])


def integrate_flow(
    x0: EmbeddedPoint, obj: Objective, source, t_final: float, dt: float
) -> FlowTrace:
    """Classical RK4 on the ambient field with per-step re-factorization.

    If the state loses rank along the way the trace is returned as far as it
    got, flagged degenerate, instead of raising.
    """
    geometry, metric = _normalize_source(source)
    if t_final <= 0 or dt <= 0:
        raise ValueError("horizon and step must be positive")
    r, kind = x0.r, x0.kind
    n_steps = int(round(t_final / dt))
    times = np.linspace(0.0, n_steps * dt, n_steps + 1)

    def field(x_ambient):
        return flow_field(project_rank_r(x_ambient, r, kind), obj, source)

    states = [x0.X]
    x = x0.X
    for k in range(n_steps):
        try:
            k1 = field(x)
            k2 = field(x + 0.5 * dt * k1)
            k3 = field(x + 0.5 * dt * k2)
            k4 = field(x + dt * k3)
            x = project_rank_r(
                x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), r, kind
            ).X
        except RankError as exc:
            return FlowTrace(times[: k + 1], states, geometry, metric, r,
                             degenerate=True,
                             message=f"rank collapse at t = {times[k]:.6g}: {exc}")
        states.append(x)
    return FlowTrace(times, states, geometry, metric, r)


def compare_flows(
    x0: EmbeddedPoint, obj: Objective, source_a, source_b,
    t_final: float, dt: float,
) -> dict:
    """Integrate two sources from a common start and report the deviation
    max_t ||X_a(t) - X_b(t)||_F over the shared grid."""
    tr_a = integrate_flow(x0, obj, source_a, t_final, dt)
    tr_b = integrate_flow(x0, obj, source_b, t_final, dt)
    n = min(len(tr_a.states), len(tr_b.states))
    devs = np.array(
        [np.linalg.norm(tr_a.states[k] - tr_b.states[k]) for k in range(n)]
    )
    return {
        "times": tr_a.times[:n],
        "deviations": devs,
        "max_deviation": float(np.max(devs)) if n else float("nan"),
        "degenerate": tr_a.degenerate or tr_b.degenerate,
        "trace_a": tr_a,
        "trace_b": tr_b,
    }


def trace_to_csv(trace: FlowTrace, path) -> None:
    """Write rows (t, vec(X) row-major) for external plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for t, x in zip(trace.times, trace.states):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in x.ravel()])
