"""One-extra-dimension lifting: realize Lipschitz maps R^d -> R^D as
time-1 flows, one flow per output component.

A scalar g on [0,1]^d induces the (d+1)-dimensional field
V(x, y) = (0, ..., 0, g(x)). Its exact time-1 flow sends (x, y) to
(x, y + g(x)), so embedding x at (x, 0), flowing for unit time, and
projecting onto the last coordinate recovers g(x) exactly. Approximating
the lifted field on a grid turns this identity into a constructive
approximation scheme whose error is pure field-approximation error: the
first d components of the lifted field are identically zero, so the
integration itself is exact (a single Euler step already lands on the
answer).
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .fields import (
    LipschitzModulus,
    VectorField,
    box_bump_clip,
    grid_realize,
)
from .flow import DEFAULT_STEPS, ErrorCertificate, FlowMap

__all__ = [
    "lift_field",
    "LiftedApproximator",
    "JointLiftedApproximator",
    "lifted_apply",
    "exact_lift",
    "approximate_lipschitz_function",
    "lift_function",
    "LIFT_FUNCTIONS",
    "function_from_samples",
    "save_lifted",
    "load_lifted",
]


def lift_field(g, d: int, lipschitz: float, ref: dict | None = None) -> VectorField:
    """Field (x, y) -> (0, ..., 0, g(x)) on R^(d+1).

    The declared Lipschitz bound is max(1, L_g). Lifted fields are not
    compactly supported in general (g need not vanish on the cube
    boundary); they are sampled on the cube by the grid machinery and
    clipped afterwards.
    """

    def ev(Z):
        out = np.zeros_like(Z)
        out[:, -1] = np.asarray(g(Z[:, :d]), dtype=float).reshape(-1)
        return out

    return VectorField(
        d + 1,
        ev,
        max(1.0, float(lipschitz)),
        support_box=None,
        ref=ref or {"backend": "lifted", "function": "opaque", "d": d},
    )


class LiftedApproximator:
    """Concatenation of per-component lifted flows.

    Evaluation embeds x at (x, 0), applies component i's (d+1)-dimensional
    flow, and projects off the last coordinate; the D component outputs
    are assembled in index order.
    """

    def __init__(self, components: list[FlowMap], d: int,
                 certificates: list[ErrorCertificate] | None = None):
        if not components:
            raise ValueError("need at least one component flow")
        for c in components:
            if c.dim != d + 1:
                raise ValueError(
                    f"component flows must live in {d + 1} dimensions, got {c.dim}"
                )
        self.components = list(components)
        self.d = int(d)
        self.D = len(components)
        self.certificates = certificates

    @property
    def dim(self) -> int:
        """Input dimension (measure pushforward treats this as the domain)."""
        return self.d

    def embed(self, x) -> np.ndarray:
        X = np.atleast_2d(np.asarray(x, dtype=float))
        return np.hstack([X, np.zeros((X.shape[0], 1))])

    @staticmethod
    def project(z) -> np.ndarray:
        return np.atleast_2d(np.asarray(z, dtype=float))[:, -1]

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        Z = self.embed(x)
        cols = [self.project(c.apply(Z)) for c in self.components]
        out = np.stack(cols, axis=1)
        return out[0] if single else out

    __call__ = apply

    def to_dict(self) -> dict:
        return {
            "kind": "lifted_approximator",
            "d": self.d,
            "D": self.D,
            "components": [c.to_dict() for c in self.components],
            "certificates": [c.to_dict() for c in self.certificates]
            if self.certificates
            else None,
        }


def lifted_apply(approx: LiftedApproximator, x) -> np.ndarray:
    return approx.apply(x)


def exact_lift(components, d: int, lipschitz) -> LiftedApproximator:
    """Lift analytic scalar components with the exact one-step integrator."""
    lipschitz = np.broadcast_to(np.asarray(lipschitz, dtype=float), (len(components),))
    flows = [
        FlowMap(lift_field(g, d, L), steps=1, method="euler")
        for g, L in zip(components, lipschitz)
    ]
    return LiftedApproximator(flows, d)


def _component_callables(f, d: int, D: int):
    if isinstance(f, (list, tuple)):
        return list(f)

    def make(i):
        def gi(X):
            vals = np.asarray(f(X), dtype=float)
            if vals.ndim == 1:
                vals = vals[:, None]
            return vals[:, i]

        return gi

    return [make(i) for i in range(D)]


def approximate_lipschitz_function(
    f,
    n: int,
    d: int,
    D: int,
    lipschitz,
    mode: str = "componentwise",
    collapse_y: bool = False,
    steps: int = DEFAULT_STEPS,
    delta: float | None = None,
) -> tuple[LiftedApproximator, ErrorCertificate]:
    """Grid-approximate each lifted component field and wrap as flows.

    Componentwise mode lifts each f_i into d+1 dimensions (the default;
    the joint (d+D)-dimensional lift is available as ``mode='joint'`` but
    scales poorly in D). ``collapse_y`` reduces the dummy axis to a single
    cell: the lifted field is constant in y, so linear reproduction keeps
    this exact while shrinking the network.

    The cutoff is scaled to an enlarged box so that its identity region
    covers [0,1]^(d+1): on the cube the approximator's error is then pure
    interpolation error, which is what the certified rate describes, and
    the field is still compactly supported just outside the cube.

    Returns the approximator together with the worst-component
    certificate 2 ||omega((d+1)/(2n))|| e^{max(1, L_i)}; per-component
    certificates ride on the approximator.
    """
    if n < 1:
        raise ValueError("grid parameter n must be >= 1")
    if mode not in ("componentwise", "joint"):
        raise ValueError("mode must be 'componentwise' or 'joint'")
    lipschitz = np.broadcast_to(np.asarray(lipschitz, dtype=float), (D,)).copy()
    comps = _component_callables(f, d, D)

    if mode == "joint":
        return _approximate_joint(comps, n, d, D, lipschitz, collapse_y, steps, delta)

    flows = []
    certs = []
    for gi_fn, L in zip(comps, lipschitz):
        field = lift_field(gi_fn, d, L)
        ns = (n,) * d + ((1,) if collapse_y else (n,))
        omega_vec = np.zeros(d + 1)
        omega_vec[-1] = L
        modulus = LipschitzModulus(omega_vec)
        gridvf, net, report = grid_realize(field.eval, d + 1, n, modulus, ns=ns)
        dlt = _auto_delta(delta, modulus, d + 1, n, gridvf)
        # pad >= delta keeps the cutoff's identity region over [0,1]^(d+1);
        # pad >= cell width makes exterior folds land where the hat
        # continuation is exactly zero (lifted fields do not vanish on the
        # cube boundary, so folding into the continuation shell would leak)
        pad = max(dlt, *(1.0 / m for m in ns))
        clipped = box_bump_clip(gridvf, dlt, box=(-pad, 1.0 + pad))
        clipped.report = report
        flows.append(FlowMap(clipped, steps=steps))
        Lbar = max(1.0, float(L))
        omega = modulus((d + 1) / (2.0 * n))
        certs.append(
            ErrorCertificate(
                [(omega, Lbar)],
                2.0 * float(np.max(omega)) * math.exp(Lbar),
                n,
                math.exp(Lbar),
            )
        )
    worst = max(range(D), key=lambda i: certs[i].total_bound)
    approx = LiftedApproximator(flows, d, certificates=certs)
    return approx, certs[worst]


def _auto_delta(delta, modulus, dim, n, gridvf):
    if delta is not None:
        return delta
    omega_sup = float(np.max(modulus(dim / (2.0 * n))))
    big = 2.0 * float(np.abs(gridvf.grid.values).max())
    d = min(0.2, omega_sup / big) if big > 0 else 0.2
    return max(d, 1e-9)


class JointLiftedApproximator(LiftedApproximator):
    """Single (d+D)-dimensional lift: one flow carries all D outputs.

    Scales poorly in D compared with the componentwise default and is
    kept for comparison experiments.
    """

    def __init__(self, flow: FlowMap, d: int, D: int,
                 certificates: list[ErrorCertificate] | None = None):
        if flow.dim != d + D:
            raise ValueError(
                f"joint lift flow must live in {d + D} dimensions, got {flow.dim}"
            )
        self.components = [flow]
        self.d = int(d)
        self.D = int(D)
        self.certificates = certificates

    def embed(self, x) -> np.ndarray:
        X = np.atleast_2d(np.asarray(x, dtype=float))
        return np.hstack([X, np.zeros((X.shape[0], self.D))])

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        Z = self.components[0].apply(self.embed(x))
        out = Z[:, self.d:]
        return out[0] if single else out

    __call__ = apply

    def to_dict(self) -> dict:
        doc = super().to_dict()
        doc["kind"] = "joint_lifted_approximator"
        return doc


def _approximate_joint(comps, n, d, D, lipschitz, collapse_y, steps, delta):
    def joint_g(Z):
        X = Z[:, :d]
        out = np.zeros((Z.shape[0], Z.shape[1]))
        for i, g in enumerate(comps):
            out[:, d + i] = np.asarray(g(X), dtype=float).reshape(-1)
        return out

    dim = d + D
    omega_vec = np.zeros(dim)
    omega_vec[d:] = lipschitz
    modulus = LipschitzModulus(omega_vec)
    ns = (n,) * d + ((1,) if collapse_y else (n,)) * D
    gridvf, net, report = grid_realize(joint_g, dim, n, modulus, ns=ns)
    dlt = _auto_delta(delta, modulus, dim, n, gridvf)
    pad = max(dlt, *(1.0 / m for m in ns))
    clipped = box_bump_clip(gridvf, dlt, box=(-pad, 1.0 + pad))
    clipped.report = report
    flow = FlowMap(clipped, steps=steps)
    Lbar = max(1.0, float(np.max(lipschitz)))
    omega = modulus(dim / (2.0 * n))
    cert = ErrorCertificate(
        [(omega, Lbar)], 2.0 * float(np.max(omega)) * math.exp(Lbar), n, math.exp(Lbar)
    )
    return JointLiftedApproximator(flow, d, D, certificates=[cert]), cert


# ---------------------------------------------------------------------------
# target-function registry


def _abs2x1(X):
    return np.abs(2.0 * X[:, 0] - 1.0)


def _square(X):
    return X[:, 0] ** 2


def _sin01(X):
    return 0.5 + 0.5 * np.sin(2.0 * np.pi * X[:, 0])


def _plateau1d(t):
    return np.clip(np.minimum((t - 0.125) * 4.0, (0.875 - t) * 4.0), 0.0, 1.0)


def _sin_windowed(X):
    # signed target: its lifted trajectories exit the grid cube below
    # y = 0 wherever it is negative, so only the certificate bound (not
    # the clean 1/n rate) applies to it
    return np.sin(2.0 * np.pi * X[:, 0]) * _plateau1d(X[:, 0])


LIFT_FUNCTIONS = {
    # id -> (callables, d, D, per-component Lipschitz constants)
    "abs2x1": ([_abs2x1], 1, 1, [2.0]),
    "square": ([_square], 1, 1, [2.0]),
    "sin01": ([_sin01], 1, 1, [math.pi]),
    "sin_windowed": ([_sin_windowed], 1, 1, [2.0 * math.pi + 4.0]),
    "affine_pair": ([lambda X: X[:, 0], lambda X: 1.0 - X[:, 0]], 1, 2, [1.0, 1.0]),
}


def lift_function(function_id: str):
    if function_id not in LIFT_FUNCTIONS:
        raise KeyError(
            f"unknown lift target {function_id!r}; known: {sorted(LIFT_FUNCTIONS)}"
        )
    return LIFT_FUNCTIONS[function_id]


def function_from_samples(xs, ys, lipschitz: float):
    """1-d Lipschitz target from sample pairs (piecewise-linear interpolation)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
        raise ValueError("need matching 1-d sample arrays with at least two points")
    order = np.argsort(xs)
    xs, ys = xs[order], ys[order]

    def g(X):
        return np.interp(X[:, 0], xs, ys)

    return [g], 1, 1, [float(lipschitz)]


# ---------------------------------------------------------------------------
# manifests


def save_lifted(approx: LiftedApproximator, out_dir: str, name: str = "manifest.json") -> str:
    from .flow import _externalize_grid

    os.makedirs(out_dir, exist_ok=True)
    doc = approx.to_dict()
    for k, (comp_doc, comp) in enumerate(zip(doc["components"], approx.components)):
        if comp.field.grid is not None:
            comp_doc["field"] = _externalize_grid(
                comp_doc["field"], comp.field, out_dir, f"component{k}"
            )
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def verify_lifted_manifest(path: str, rel_tol: float = 1e-12) -> dict:
    """Recheck that a lifted manifest's certificates are recomputable."""
    approx = load_lifted(path)
    checks = {}
    certs = approx.certificates or []
    for i, cert in enumerate(certs):
        recomputed = cert.recompute_total()
        checks[f"component{i}_certificate"] = {
            "stated": cert.total_bound,
            "recomputed": recomputed,
            "ok": abs(cert.total_bound - recomputed)
            <= rel_tol * max(1.0, abs(cert.total_bound)),
        }
    checks["ok"] = bool(certs) and all(
        v["ok"] for v in checks.values() if isinstance(v, dict)
    )
    return checks


def load_lifted(path: str) -> LiftedApproximator:
    from .fields import field_from_ref

    with open(path) as fh:
        doc = json.load(fh)
    base = os.path.dirname(path)
    comps = []
    for s in doc["components"]:
        f = field_from_ref(s["field"], base)
        comps.append(
            FlowMap(f, s["direction"], s["integrator"]["steps"], s["integrator"]["method"])
        )
    certs = None
    if doc.get("certificates"):
        certs = [ErrorCertificate.from_dict(c) for c in doc["certificates"]]
    if doc.get("kind") == "joint_lifted_approximator":
        return JointLiftedApproximator(comps[0], doc["d"], doc["D"], certificates=certs)
    return LiftedApproximator(comps, doc["d"], certificates=certs)
