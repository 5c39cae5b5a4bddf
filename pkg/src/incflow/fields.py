"""Lipschitz vector fields: analytic library, support clipping, and the
constructive grid-based ReLU approximant.

A :class:`VectorField` bundles an evaluator with the two facts every
certificate downstream needs: a support box outside which it vanishes
exactly, and an upper bound on its l_inf Lipschitz constant.

The grid approximant interpolates vertex samples over the Kuhn simplicial
subdivision of a uniform grid and is realized a second time as an exact
ReLU network built from the nodal hat function of that triangulation,
``relu(1 - max_i relu((x_i - v_i)/h) - max_i relu((v_i - x_i)/h))``.
The two code paths compute the same function and are cross-checked in the
test suite.
"""

from __future__ import annotations

import itertools
import json
import math
import struct
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .mlp import MLP, BumpSpec, affine_mlp, build_bump, bump_support, bump_values, compose, relu

__all__ = [
    "Modulus",
    "LipschitzModulus",
    "HolderModulus",
    "SmoothRateModulus",
    "modulus_bound_eval",
    "GridInterpolant",
    "VectorField",
    "ApproximationReport",
    "zero_field",
    "rotation_field",
    "squeeze_field",
    "radial_bump_clip",
    "box_bump_clip",
    "sin_bump_field",
    "grid_realize",
    "grid_relu_approximate",
    "grid_to_mlp",
    "field_from_ref",
    "builtin_field",
    "builtin_suite",
    "BUILTIN_FIELDS",
]


# ---------------------------------------------------------------------------
# moduli of regularity


class Modulus:
    """Componentwise modulus bound t -> omega(t), omega(0)=0, nondecreasing."""

    dim_out: int

    def __call__(self, t):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(d: dict) -> "Modulus":
        kind = d["kind"]
        if kind == "lipschitz":
            return LipschitzModulus(np.array(d["L"]))
        if kind == "holder":
            return HolderModulus(np.array(d["C"]), d["alpha"])
        if kind == "smooth_rate":
            return SmoothRateModulus(d["s"], d["dim"], np.array(d["cs_norms"]))
        raise ValueError(f"unknown modulus kind {kind!r}")


class LipschitzModulus(Modulus):
    """omega(t) = L t, componentwise."""

    def __init__(self, L):
        self.L = np.atleast_1d(np.asarray(L, dtype=float))
        if np.any(self.L < 0):
            raise ValueError("Lipschitz constants must be >= 0")
        self.dim_out = self.L.shape[0]

    def __call__(self, t):
        if t < 0:
            raise ValueError("modulus argument must be >= 0")
        return self.L * t

    def to_dict(self):
        return {"kind": "lipschitz", "L": self.L.tolist()}


class HolderModulus(Modulus):
    """omega(t) = C t^alpha, componentwise."""

    def __init__(self, C, alpha: float):
        self.C = np.atleast_1d(np.asarray(C, dtype=float))
        if not 0 < alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        self.alpha = float(alpha)
        self.dim_out = self.C.shape[0]

    def __call__(self, t):
        if t < 0:
            raise ValueError("modulus argument must be >= 0")
        return self.C * t**self.alpha

    def to_dict(self):
        return {"kind": "holder", "C": self.C.tolist(), "alpha": self.alpha}


class SmoothRateModulus(Modulus):
    """Certificate-only rate for s-times differentiable fields.

    omega_j(N, L) = 85 (s+1)^d 8^s |V_j|_{C^s} (N L)^(-2s/d). This is a
    bound calculator; no deep network for the smooth case is constructed.
    The argument packs the two architecture parameters as a pair (N, L).
    """

    def __init__(self, s: int, dim: int, cs_norms):
        if s < 1:
            raise ValueError("smoothness s must be >= 1")
        self.s = int(s)
        self.dim = int(dim)
        self.cs_norms = np.atleast_1d(np.asarray(cs_norms, dtype=float))
        self.dim_out = self.cs_norms.shape[0]

    def __call__(self, t):
        try:
            N, L = t
        except TypeError:
            raise ValueError(
                "smooth_rate modulus expects the pair (N, L) as its argument"
            ) from None
        if N < 1 or L < 1:
            raise ValueError("N and L must be positive integers")
        const = 85.0 * (self.s + 1) ** self.dim * 8.0**self.s
        return const * self.cs_norms * float(N * L) ** (-2.0 * self.s / self.dim)

    def to_dict(self):
        return {
            "kind": "smooth_rate",
            "s": self.s,
            "dim": self.dim,
            "cs_norms": self.cs_norms.tolist(),
        }


def modulus_bound_eval(modulus: Modulus, t):
    """Componentwise omega(t); t is a scalar, or (N, L) for smooth_rate."""
    return modulus(t)


# ---------------------------------------------------------------------------
# Kuhn-grid interpolant


class GridInterpolant:
    """Continuous piecewise-linear interpolant on [0,1]^d.

    Each grid cell is split into d! simplices by the coordinate orderings
    of the local coordinates (Kuhn subdivision); ties break by ascending
    axis index. Vertex samples are reproduced exactly and the function is
    globally continuous. Outside the grid the nodal-hat continuation is
    used, which decays to zero within one cell width.

    Parameters
    ----------
    ns : tuple of int
        Per-axis subdivision counts (the uniform case is ``(n,) * d``).
    values : ndarray, shape (prod(ns_i + 1), out_dim)
        Vertex samples in lexicographic vertex order (axis 0 slowest).
    """

    def __init__(self, ns, values):
        self.ns = tuple(int(n) for n in ns)
        if any(n < 1 for n in self.ns):
            raise ValueError("per-axis subdivision counts must be >= 1")
        self.dim = len(self.ns)
        values = np.asarray(values, dtype=float)
        nverts = int(np.prod([n + 1 for n in self.ns]))
        if values.ndim != 2 or values.shape[0] != nverts:
            raise ValueError(
                f"values must have shape ({nverts}, out_dim), got {values.shape}"
            )
        self.values = values
        self.out_dim = values.shape[1]
        self._shape = tuple(n + 1 for n in self.ns)
        self._nvec = np.array(self.ns, dtype=float)

    @classmethod
    def from_callable(cls, fn, ns, out_dim=None) -> "GridInterpolant":
        ns = tuple(int(n) for n in ns)
        axes = [np.linspace(0.0, 1.0, n + 1) for n in ns]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(ns))
        vals = np.asarray(fn(pts), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] != pts.shape[0]:
            raise ValueError("sampler returned wrong number of vertex values")
        return cls(ns, vals)

    def vertex_points(self) -> np.ndarray:
        axes = [np.linspace(0.0, 1.0, n + 1) for n in self.ns]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)

    def __call__(self, x) -> np.ndarray:
        """Hat-sum evaluation, valid on all of R^d (zero one cell out).

        Non-finite rows evaluate to NaN so a caller integrating a
        diverging trajectory sees the failure instead of an index crash.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        if X.shape[1] != self.dim:
            raise ValueError(f"points have dim {X.shape[1]}, interpolant has {self.dim}")
        bad = ~np.isfinite(X).all(axis=1)
        if bad.any():
            out = np.full((X.shape[0], self.out_dim), np.nan)
            good = ~bad
            if good.any():
                out[good] = self(X[good])
            return out[0] if single else out
        t = X * self._nvec  # grid units per axis
        anchor = np.clip(np.floor(t), 0, self._nvec - 1).astype(np.int64)
        out = np.zeros((X.shape[0], self.out_dim))
        for offs in itertools.product((0, 1), repeat=self.dim):
            vidx = anchor + np.array(offs, dtype=np.int64)
            diff = t - vidx
            a = relu(diff).max(axis=1)
            b = relu(-diff).max(axis=1)
            lam = relu(1.0 - a - b)
            flat = np.ravel_multi_index(tuple(vidx.T), self._shape)
            out += lam[:, None] * self.values[flat]
        return out[0] if single else out

    def lipschitz_linf(self) -> float:
        """Exact l_inf Lipschitz constant: max per-simplex affine slope."""
        grid = self.values.reshape(self._shape + (self.out_dim,))
        n_arr = np.array(self.ns, dtype=float)
        cells = tuple(slice(0, n) for n in self.ns)
        best = 0.0
        for perm in itertools.permutations(range(self.dim)):
            offset = [0] * self.dim
            prev = grid[cells]
            rowsum = np.zeros(prev.shape[:-1] + (self.out_dim,))
            for axis in perm:
                offset[axis] += 1
                sl = tuple(slice(o, o + n) for o, n in zip(offset, self.ns))
                cur = grid[sl]
                rowsum += np.abs(cur - prev) * n_arr[axis]
                prev = cur
            best = max(best, float(rowsum.max()))
        return best

    # -- serialization: binary payload + JSON sidecar ----------------------

    def to_bytes(self) -> bytes:
        head = struct.pack("<q", self.dim)
        head += b"".join(struct.pack("<q", n) for n in self.ns)
        head += struct.pack("<q", self.out_dim)
        return head + self.values.astype("<f8").tobytes(order="C")

    @classmethod
    def from_bytes(cls, raw: bytes) -> "GridInterpolant":
        (dim,) = struct.unpack_from("<q", raw, 0)
        ns = struct.unpack_from(f"<{dim}q", raw, 8)
        (out_dim,) = struct.unpack_from("<q", raw, 8 + 8 * dim)
        payload = np.frombuffer(raw, dtype="<f8", offset=16 + 8 * dim)
        nverts = int(np.prod([n + 1 for n in ns]))
        return cls(ns, payload.reshape(nverts, out_dim).copy())

    def sidecar(self) -> dict:
        return {
            "dim": self.dim,
            "n": list(self.ns),
            "out_dim": self.out_dim,
            "vertices": int(np.prod(self._shape)),
            "order": "lexicographic, axis 0 slowest, little-endian float64",
        }

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())
        with open(str(path) + ".json", "w") as fh:
            json.dump(self.sidecar(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "GridInterpolant":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


# ---------------------------------------------------------------------------
# exact ReLU realization of the grid interpolant


def _max_tree_level(wires, units, get_unit):
    """One pairwise-max reduction level over nonnegative wires."""
    out = []
    for w0, w1 in zip(wires[0::2], wires[1::2]):
        cmp_key = ("cmp", w0[2], w1[2])
        get_unit(cmp_key, _wire_sub(w0, w1))
        cry_key = ("cry", w1[2])
        get_unit(cry_key, (w1[0], w1[1]))
        # max(p, q) = q + relu(p - q) for q >= 0
        out.append(({cmp_key: 1.0, cry_key: 1.0}, 0.0, ("max", w0[2], w1[2])))
    if len(wires) % 2:
        w = wires[-1]
        cry_key = ("cry", w[2])
        get_unit(cry_key, (w[0], w[1]))
        out.append(({cry_key: 1.0}, 0.0, ("pass", w[2])))
    return out


def _wire_sub(w0, w1):
    coeffs = dict(w0[0])
    for k, v in w1[0].items():
        coeffs[k] = coeffs.get(k, 0.0) - v
        if coeffs[k] == 0.0:
            del coeffs[k]
    return coeffs, w0[1] - w1[1]


def grid_to_mlp(gi: GridInterpolant) -> MLP:
    """ReLU network computing the interpolant exactly on all of R^d.

    Layers: shared per-axis leaves relu(+-(n_i x_i - k)); a pairwise max
    tree per vertex (ceil(log2 d) levels, carries shared where wires
    coincide); one hat unit per vertex; an affine output combining hats
    with the vertex samples.
    """
    d, ns = gi.dim, gi.ns

    # layer 1: leaves, keyed ("p", axis, k) and ("m", axis, k)
    leaf_rows = []
    leaf_keys = []
    for i in range(d):
        for k in range(ns[i] + 1):
            row = np.zeros(d)
            row[i] = ns[i]
            leaf_rows.append((row, -float(k)))
            leaf_keys.append(("p", i, k))
            leaf_rows.append((-row, float(k)))
            leaf_keys.append(("m", i, k))
    layers = [(
        np.array([r for r, _ in leaf_rows]),
        np.array([b for _, b in leaf_rows]),
    )]
    key_index = {k: j for j, k in enumerate(leaf_keys)}

    vertices = list(np.ndindex(*gi._shape))
    a_wires = {
        v: [({("p", i, v[i]): 1.0}, 0.0, ("p", i, v[i])) for i in range(d)]
        for v in vertices
    }
    b_wires = {
        v: [({("m", i, v[i]): 1.0}, 0.0, ("m", i, v[i])) for i in range(d)]
        for v in vertices
    }

    while max(len(a_wires[v]) for v in vertices) > 1:
        new_units: dict = {}

        def get_unit(key, row, _units=new_units):
            if key not in _units:
                _units[key] = row
            return key

        for v in vertices:
            a_wires[v] = _max_tree_level(a_wires[v], new_units, get_unit)
            b_wires[v] = _max_tree_level(b_wires[v], new_units, get_unit)
        W = np.zeros((len(new_units), layers[-1][0].shape[0]))
        bvec = np.zeros(len(new_units))
        new_index = {}
        for j, (key, (coeffs, bias)) in enumerate(new_units.items()):
            for ck, cv in coeffs.items():
                W[j, key_index[ck]] += cv
            bvec[j] = bias
            new_index[key] = j
        layers.append((W, bvec))
        key_index = new_index

    # hat layer: one unit per vertex, relu(1 - A_v - B_v)
    W = np.zeros((len(vertices), layers[-1][0].shape[0]))
    bvec = np.ones(len(vertices))
    for j, v in enumerate(vertices):
        (ca, ba, _), = a_wires[v]
        (cb, bb, _), = b_wires[v]
        for ck, cv in ca.items():
            W[j, key_index[ck]] -= cv
        for ck, cv in cb.items():
            W[j, key_index[ck]] -= cv
        bvec[j] -= ba + bb
    layers.append((W, bvec))

    # output affine: weight hats by vertex samples
    layers.append((gi.values.T.copy(), np.zeros(gi.out_dim)))
    return MLP(layers)


# ---------------------------------------------------------------------------
# vector fields


class VectorField:
    """Lipschitz map R^d -> R^d with tracked support box and l_inf bound.

    ``support_box`` is ``(lower, upper)`` row-stacked as a (2, d) array, or
    None when unbounded; evaluation vanishes exactly outside a bounded box.
    ``ref`` is a JSON-serializable construction record used by manifests.
    """

    def __init__(self, dim, evaluator, lipschitz_bound, support_box=None, ref=None):
        self.dim = int(dim)
        self._evaluator = evaluator
        self.lipschitz_bound = float(lipschitz_bound)
        if support_box is not None:
            support_box = np.asarray(support_box, dtype=float).reshape(2, self.dim)
        self.support_box = support_box
        self.ref = ref if ref is not None else {"backend": "opaque"}
        self.grid: GridInterpolant | None = None
        self.mlp: MLP | None = None
        self.report: "ApproximationReport | None" = None

    def eval(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        if X.shape[1] != self.dim:
            raise ValueError(f"points have dim {X.shape[1]}, field has {self.dim}")
        out = self._evaluator(X)
        return out[0] if single else out

    __call__ = eval

    def max_abs_on_box(self, per_axis: int = 101) -> float:
        """Deterministic dense-grid estimate of sup |V| over the support box."""
        if self.support_box is None:
            raise ValueError("field has unbounded support")
        lo, hi = self.support_box
        axes = [np.linspace(lo[i], hi[i], per_axis) for i in range(self.dim)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        return float(np.abs(self.eval(pts)).max())


def zero_field(dim: int = 2) -> VectorField:
    return VectorField(
        dim,
        lambda X: np.zeros_like(X),
        0.0,
        support_box=np.array([[0.5] * dim, [0.5] * dim]),
        ref={"backend": "analytic", "id": "zero", "params": {"dim": dim}},
    )


def rotation_field(center, rate: float) -> VectorField:
    """Planar rotation about ``center`` at angular speed ``rate``."""
    c = np.asarray(center, dtype=float)
    if c.shape != (2,):
        raise ValueError("rotation_field is two-dimensional")

    def ev(X):
        return np.stack(
            [-rate * (X[:, 1] - c[1]), rate * (X[:, 0] - c[0])], axis=1
        )

    return VectorField(
        2,
        ev,
        abs(rate),
        support_box=None,
        ref={"backend": "analytic", "id": "rotation",
             "params": {"center": c.tolist(), "rate": rate}},
    )


def squeeze_field(line_x: float = 0.5) -> VectorField:
    """Contraction of the plane onto the vertical line x = line_x."""

    def ev(X):
        out = np.zeros_like(X)
        out[:, 0] = -X[:, 0] + line_x
        return out

    return VectorField(
        2,
        ev,
        1.0,
        support_box=None,
        ref={"backend": "analytic", "id": "squeeze", "params": {"line_x": line_x}},
    )


def radial_profile(s, r_inner: float, r_outer: float):
    """1 on [0, r_inner], linear to 0 on [r_inner, r_outer], 0 beyond."""
    return np.clip((r_outer - np.asarray(s, dtype=float)) / (r_outer - r_inner), 0.0, 1.0)


def radial_bump_clip(
    field: VectorField, center, r_inner: float, r_outer: float, max_abs: float | None = None
) -> VectorField:
    """Pointwise product with a piecewise-linear radial cutoff.

    The Lipschitz bound follows the product rule,
    ``L_V + max|V| / (r_outer - r_inner)``; pass ``max_abs`` when the exact
    supremum of |V| over the outer ball is known, otherwise it is estimated
    on a dense deterministic grid.
    """
    if not 0 < r_inner < r_outer:
        raise ValueError("need 0 < r_inner < r_outer")
    c = np.asarray(center, dtype=float)
    inner = field

    def ev(X):
        s = np.linalg.norm(X - c, axis=1)
        return inner.eval(X) * radial_profile(s, r_inner, r_outer)[:, None]

    box = np.stack([c - r_outer, c + r_outer])
    if max_abs is None:
        probe = VectorField(field.dim, lambda X: inner.eval(X), 0.0, support_box=box)
        max_abs = probe.max_abs_on_box()
    L = field.lipschitz_bound + max_abs / (r_outer - r_inner)
    return VectorField(
        field.dim,
        ev,
        L,
        support_box=box,
        ref={
            "backend": "radial_clip",
            "center": c.tolist(),
            "r_inner": r_inner,
            "r_outer": r_outer,
            "max_abs": max_abs,
            "inner": field.ref,
        },
    )


def _scaled_bump_values(x, delta, lo, hi):
    w = hi - lo
    return lo + w * bump_values((np.asarray(x, dtype=float) - lo) / w, delta)


def box_bump_clip(field: VectorField, delta: float, box=(0.0, 1.0)) -> VectorField:
    """Compose the field coordinatewise with the exact cutoff network.

    The clipped field evaluates ``V(b(x_1), ..., b(x_d))`` where ``b`` is
    the cutoff scaled to ``box``; it equals the field on the cutoff's
    identity region. Outside the cutoff's support (declared exactly from
    the network's zero crossings; unbounded when ``delta >= 1``) the
    composition vanishes provided the field vanishes where the cutoff
    folds exterior coordinates, i.e. on the box's facets reached through
    ``b`` — which holds for every field the approximation pipeline clips
    (they vanish on the cube boundary). If the field carries an MLP
    realization the clipped field does too, by exact network composition.
    """
    if not 0.0 < delta < 2.0:
        raise ValueError(f"delta must lie strictly in (0, 2), got {delta}")
    lo, hi = float(box[0]), float(box[1])
    if not lo < hi:
        raise ValueError("box must satisfy lo < hi")
    w = hi - lo
    inner = field

    def ev(X):
        return inner.eval(_scaled_bump_values(X, delta, lo, hi))

    s_lo, s_hi = bump_support(delta)
    if s_hi is None:
        support = None
    else:
        support = np.array(
            [[lo + w * s_lo] * field.dim, [lo + w * s_hi] * field.dim]
        )
    L = field.lipschitz_bound * max(2.0, abs(1.0 - 1.0 / delta))
    clipped = VectorField(
        field.dim,
        ev,
        L,
        support_box=support,
        ref={
            "backend": "box_clip",
            "delta": delta,
            "box": [lo, hi],
            "inner": field.ref,
        },
    )
    if field.mlp is not None:
        bump = build_bump(BumpSpec(delta, field.dim))
        pre = affine_mlp(np.eye(field.dim) / w, np.full(field.dim, -lo / w))
        post = affine_mlp(np.eye(field.dim) * w, np.full(field.dim, lo))
        scaled = compose(post, compose(bump, pre))
        clipped.mlp = compose(field.mlp, scaled)
    clipped.grid = field.grid
    return clipped


def _plateau(t):
    """Piecewise-linear plateau: 0 outside [1/8, 7/8], 1 on [3/8, 5/8]."""
    t = np.asarray(t, dtype=float)
    return np.clip(np.minimum((t - 0.125) * 4.0, (0.875 - t) * 4.0), 0.0, 1.0)


def sin_bump_field(amplitude: float = 0.2) -> VectorField:
    """Horizontal sine wave windowed to the interior of the unit square.

    V(x, y) = (A sin(2 pi x) q(x) q(y), 0) with q the plateau profile;
    the l_inf Lipschitz bound is A (2 pi + 8).
    """

    def ev(X):
        out = np.zeros_like(X)
        out[:, 0] = (
            amplitude * np.sin(2 * np.pi * X[:, 0]) * _plateau(X[:, 0]) * _plateau(X[:, 1])
        )
        return out

    return VectorField(
        2,
        ev,
        amplitude * (2 * np.pi + 8.0),
        support_box=np.array([[0.125, 0.125], [0.875, 0.875]]),
        ref={"backend": "analytic", "id": "sin_bump", "params": {"amplitude": amplitude}},
    )


# ---------------------------------------------------------------------------
# grid ReLU approximation


@dataclass
class ApproximationReport:
    """Achieved network sizes next to the reporting targets, plus the
    empirical error check on a 4x finer grid."""

    dim: int
    n: int
    width: int
    depth: int
    nonzeros: int
    target_width: int
    target_depth: int
    target_nonzeros: int
    measured_error: np.ndarray = dataclass_field(default_factory=lambda: np.zeros(0))
    modulus_bound: np.ndarray = dataclass_field(default_factory=lambda: np.zeros(0))

    @property
    def within_bound(self) -> bool:
        return bool(np.all(self.measured_error <= self.modulus_bound + 1e-12))

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "n": self.n,
            "achieved": {
                "width": self.width,
                "depth": self.depth,
                "nonzeros": self.nonzeros,
            },
            "target": {
                "width": self.target_width,
                "depth": self.target_depth,
                "nonzeros": self.target_nonzeros,
            },
            "measured_error": self.measured_error.tolist(),
            "modulus_bound": self.modulus_bound.tolist(),
            "within_bound": self.within_bound,
        }


def size_targets(d: int, n: int) -> tuple[int, int, int]:
    """Reporting targets for the approximant network at grid parameter n."""
    width = 8 * d * (n + 1) ** d + 9
    depth = math.ceil(math.log2(d)) + 6
    nonzeros = 16 * d * (n + 1) ** d + 9
    return width, depth, nonzeros


def grid_realize(
    eval_fn, dim: int, n: int, modulus: Modulus, ns=None
) -> tuple[VectorField, MLP, ApproximationReport]:
    """Interpolate ``eval_fn`` on the vertex grid of [0,1]^dim and realize
    the interpolant both directly and as an exact ReLU network.

    This is the unchecked core shared by :func:`grid_relu_approximate`
    (which additionally enforces that the field is supported inside the
    cube) and the one-dimension-higher lifting, whose fields are only
    sampled on the cube. The certified per-component error is the modulus
    at dim/(2n), verified empirically on a 4x finer grid.
    """
    if n < 1:
        raise ValueError("grid parameter n must be >= 1")
    d = dim
    if ns is None:
        ns = (n,) * d
    gi = GridInterpolant.from_callable(eval_fn, ns)
    h = max(1.0 / m for m in ns)
    vf = VectorField(
        d,
        gi,
        gi.lipschitz_linf(),
        support_box=np.array([[-h] * d, [1.0 + h] * d]),
        ref={"backend": "grid", "n": list(ns)},
    )
    vf.grid = gi
    net = grid_to_mlp(gi)
    vf.mlp = net

    fine = tuple(4 * m for m in ns)
    axes = [np.linspace(0.0, 1.0, m + 1) for m in fine]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    target = np.asarray(eval_fn(pts), dtype=float)
    if target.ndim == 1:
        target = target[:, None]
    err = np.abs(gi(pts) - target).max(axis=0)
    tw, td, tn = size_targets(d, n)
    report = ApproximationReport(
        dim=d,
        n=n,
        width=net.width,
        depth=net.depth,
        nonzeros=net.nonzeros,
        target_width=tw,
        target_depth=td,
        target_nonzeros=tn,
        measured_error=np.atleast_1d(err),
        modulus_bound=np.asarray(modulus(d / (2.0 * n))),
    )
    vf.report = report
    return vf, net, report


def grid_relu_approximate(
    field: VectorField, n: int, modulus: Modulus, ns=None
) -> tuple[VectorField, MLP, ApproximationReport]:
    """Sample a supported field on the (n+1)^d vertex grid and realize the
    Kuhn CPWL interpolant both directly and as an exact ReLU network.

    The sup-norm error per component is certified by the modulus at
    argument d/(2n) and verified empirically on a 4x finer grid; the
    report states achieved width/depth/nonzeros next to the targets.
    """
    if field.support_box is None:
        raise ValueError("field must have bounded support inside [0,1]^d")
    lo, hi = field.support_box
    if np.any(lo < -1e-9) or np.any(hi > 1 + 1e-9):
        raise ValueError("field support must be contained in [0,1]^d")
    return grid_realize(field.eval, field.dim, n, modulus, ns)


# ---------------------------------------------------------------------------
# registry


def _build_rotation_clipped(params):
    center = params.get("center", [0.5, 0.5])
    rate = params.get("rate", math.pi)
    r = params.get("r_inner", 0.125)
    R = params.get("r_outer", 0.25)
    base = rotation_field(center, rate)
    f = radial_bump_clip(base, center, r, R, max_abs=abs(rate) * R)
    f.ref = {"backend": "analytic", "id": "rotation_clipped", "params": {
        "center": list(center), "rate": rate, "r_inner": r, "r_outer": R}}
    return f


def _build_squeeze_clipped(params):
    line_x = params.get("line_x", 0.5)
    center = params.get("center", [0.5, 0.5])
    r = params.get("r_inner", 0.125)
    R = params.get("r_outer", 0.25)
    base = squeeze_field(line_x)
    max_abs = abs(center[0] - line_x) + R
    f = radial_bump_clip(base, center, r, R, max_abs=max_abs)
    f.ref = {"backend": "analytic", "id": "squeeze_clipped", "params": {
        "line_x": line_x, "center": list(center), "r_inner": r, "r_outer": R}}
    return f


BUILTIN_FIELDS = {
    "zero": lambda params: zero_field(params.get("dim", 2)),
    "rotation": lambda params: rotation_field(
        params.get("center", [0.5, 0.5]), params.get("rate", math.pi)
    ),
    "squeeze": lambda params: squeeze_field(params.get("line_x", 0.5)),
    "rotation_clipped": _build_rotation_clipped,
    "squeeze_clipped": _build_squeeze_clipped,
    "sin_bump": lambda params: sin_bump_field(params.get("amplitude", 0.2)),
}


def builtin_field(field_id: str, params: dict | None = None) -> VectorField:
    if field_id not in BUILTIN_FIELDS:
        raise KeyError(
            f"unknown field id {field_id!r}; known: {sorted(BUILTIN_FIELDS)}"
        )
    return BUILTIN_FIELDS[field_id](params or {})


def builtin_suite() -> dict[str, VectorField]:
    """The compactly supported fields exercised by the acceptance checks."""
    return {
        "zero": builtin_field("zero"),
        "rotation_clipped": builtin_field("rotation_clipped"),
        "squeeze_clipped": builtin_field("squeeze_clipped"),
        "sin_bump": builtin_field("sin_bump"),
    }


def field_from_ref(ref: dict, base_dir=None) -> VectorField:
    """Reconstruct a field from its manifest record."""
    backend = ref["backend"]
    if backend == "analytic":
        return builtin_field(ref["id"], ref.get("params", {}))
    if backend == "grid":
        if "file" in ref:
            import os

            gi = GridInterpolant.load(
                os.path.join(base_dir, ref["file"]) if base_dir else ref["file"]
            )
        else:
            gi = GridInterpolant(ref["n"], np.array(ref["values"]))
        d = gi.dim
        h = max(1.0 / m for m in gi.ns)
        vf = VectorField(
            d,
            gi,
            gi.lipschitz_linf(),
            support_box=np.array([[-h] * d, [1.0 + h] * d]),
            ref=ref,
        )
        vf.grid = gi
        return vf
    if backend == "box_clip":
        inner = field_from_ref(ref["inner"], base_dir)
        return box_bump_clip(inner, ref["delta"], tuple(ref["box"]))
    if backend == "radial_clip":
        inner = field_from_ref(ref["inner"], base_dir)
        return radial_bump_clip(
            inner, ref["center"], ref["r_inner"], ref["r_outer"], ref.get("max_abs")
        )
    raise ValueError(f"cannot reconstruct field from backend {backend!r}")
