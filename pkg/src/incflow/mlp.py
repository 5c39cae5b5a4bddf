"""ReLU multilayer perceptrons with an exact composition algebra.

Networks here are plain value objects: a list of affine layers with ReLU
applied to every layer except the last. All algebra (composition,
parallelization, depth padding) is exact — the returned network evaluates
to the same piecewise-linear function as the operands, up to float
rounding, never up to an approximation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MLP",
    "BumpSpec",
    "relu",
    "identity_mlp",
    "affine_mlp",
    "build_bump",
    "bump_values",
    "bump_support",
    "compose",
    "parallelize",
    "pad_to_depth",
    "lipschitz_upper_bound",
]


def relu(z):
    return np.maximum(z, 0.0)


class MLP:
    """Layered affine network; ReLU on all layers except the last.

    Parameters
    ----------
    layers : sequence of (W, b)
        ``W`` has shape ``(out, in)``, ``b`` shape ``(out,)``. Consecutive
        layer dimensions must chain. A single layer is the affine map
        itself (zero hidden layers).
    """

    def __init__(self, layers):
        if not layers:
            raise ValueError("an MLP needs at least one affine layer")
        clean = []
        for W, b in layers:
            W = np.array(W, dtype=float)
            b = np.array(b, dtype=float)
            if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
                raise ValueError(
                    f"bad layer shapes: W {W.shape}, b {b.shape}"
                )
            clean.append((W, b))
        for k, ((W0, _), (W1, _)) in enumerate(zip(clean, clean[1:])):
            if W1.shape[1] != W0.shape[0]:
                raise ValueError(
                    f"layer {k} emits {W0.shape[0]} features but layer "
                    f"{k + 1} expects {W1.shape[1]}"
                )
        self.layers = clean

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    @property
    def depth(self) -> int:
        """Hidden layers plus the output layer."""
        return len(self.layers)

    @property
    def width(self) -> int:
        return max(W.shape[0] for W, _ in self.layers)

    @property
    def nonzeros(self) -> int:
        return int(
            sum(np.count_nonzero(W) + np.count_nonzero(b) for W, b in self.layers)
        )

    def eval(self, x, activation=relu):
        """Forward pass. ``x`` is one point ``(d,)`` or a batch ``(m, d)``.

        ``activation`` may be any 1-Lipschitz scalar function applied
        componentwise; the constructive builders in this package assume
        ReLU, which is the default.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ValueError(
                f"input has shape {x.shape}, network expects {self.input_dim} features"
            )
        if not np.all(np.isfinite(X)):
            raise ValueError("non-finite input")
        for W, b in self.layers[:-1]:
            X = activation(X @ W.T + b)
        W, b = self.layers[-1]
        X = X @ W.T + b
        return X[0] if single else X

    __call__ = eval

    def __repr__(self):
        dims = [self.input_dim] + [W.shape[0] for W, _ in self.layers]
        return f"MLP({'-'.join(map(str, dims))})"

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "layers": [
                {
                    "rows": W.shape[0],
                    "cols": W.shape[1],
                    "weights": W.ravel().tolist(),
                    "bias": b.tolist(),
                }
                for W, b in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MLP":
        layers = [
            (
                np.array(spec["weights"], dtype=float).reshape(
                    spec["rows"], spec["cols"]
                ),
                np.array(spec["bias"], dtype=float),
            )
            for spec in d["layers"]
        ]
        net = cls(layers)
        if net.input_dim != d["input_dim"] or net.output_dim != d["output_dim"]:
            raise ValueError("serialized dims inconsistent with layer shapes")
        return net

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load_json(cls, path) -> "MLP":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def identity_mlp(dim: int) -> MLP:
    return MLP([(np.eye(dim), np.zeros(dim))])


def affine_mlp(W, b=None) -> MLP:
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if b is None:
        b = np.zeros(W.shape[0])
    return MLP([(W, np.asarray(b, dtype=float))])


@dataclass(frozen=True)
class BumpSpec:
    """Parameters of the exact coordinatewise cutoff network."""

    delta: float
    dim: int = 1

    def __post_init__(self):
        if not 0.0 < self.delta < 2.0:
            raise ValueError(f"delta must lie strictly in (0, 2), got {self.delta}")
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")


def build_bump(spec: BumpSpec) -> MLP:
    """Exact two-hidden-layer cutoff network, replicated per coordinate.

    Scalar form: ``b(x) = relu(2 relu(x - d/4) - relu(x - d/2)
    - (1/d) relu(x - (1 - d/2)))`` with ``d = spec.delta``. The network
    equals the identity on ``[d/2, 1 - d/2]``, vanishes for
    ``x <= d/4`` and for ``x >= (2 - d) / (2 (1 - d))`` (when ``d < 1``),
    and its range is contained in ``[0, 1)``.
    """
    d = spec.delta
    w1 = np.ones((3, 1))
    b1 = -np.array([d / 4.0, d / 2.0, 1.0 - d / 2.0])
    w2 = np.array([[2.0, -1.0, -1.0 / d]])
    b2 = np.zeros(1)
    w3 = np.eye(1)
    b3 = np.zeros(1)
    scalar = MLP([(w1, b1), (w2, b2), (w3, b3)])
    if spec.dim == 1:
        return scalar
    return parallelize([scalar] * spec.dim)


def bump_values(x, delta: float):
    """Closed-form evaluation of the cutoff network (vectorized)."""
    x = np.asarray(x, dtype=float)
    inner = (
        2.0 * relu(x - delta / 4.0)
        - relu(x - delta / 2.0)
        - relu(x - (1.0 - delta / 2.0)) / delta
    )
    return relu(inner)


def bump_support(delta: float) -> tuple[float, float | None]:
    """Interval outside which the cutoff vanishes.

    Returns ``(delta/4, upper)`` with ``upper = (2-delta)/(2(1-delta))``,
    or ``upper = None`` when ``delta >= 1`` (the descending branch never
    reaches zero, so the cutoff is not compactly supported).
    """
    if delta >= 1.0:
        return delta / 4.0, None
    return delta / 4.0, (2.0 - delta) / (2.0 * (1.0 - delta))


def compose(outer: MLP, inner: MLP) -> MLP:
    """Single network evaluating ``outer(inner(x))`` exactly.

    The junction merges inner's output affine with outer's first affine,
    so hidden depth adds: composing with the cutoff network adds exactly
    its two hidden layers.
    """
    if inner.output_dim != outer.input_dim:
        raise ValueError(
            f"inner emits {inner.output_dim} features, outer expects {outer.input_dim}"
        )
    Wi, bi = inner.layers[-1]
    Wo, bo = outer.layers[0]
    merged = (Wo @ Wi, Wo @ bi + bo)
    return MLP(inner.layers[:-1] + [merged] + outer.layers[1:])


def pad_to_depth(net: MLP, depth: int) -> MLP:
    """Insert exact identity hidden layers before the output layer.

    ReLU-safe identity uses the split z = relu(z) - relu(-z), doubling
    width for the inserted layer.
    """
    if depth < net.depth:
        raise ValueError("cannot shrink depth")
    while net.depth < depth:
        W, b = net.layers[-1]
        m = W.shape[0]
        hidden = (np.vstack([W, -W]), np.concatenate([b, -b]))
        out = (np.hstack([np.eye(m), -np.eye(m)]), np.zeros(m))
        net = MLP(net.layers[:-1] + [hidden, out])
    return net


def parallelize(parts: list[MLP]) -> MLP:
    """Block-diagonal stack under disjoint wiring.

    All parts must share the same input dimension; shallower parts are
    depth-padded first. The result consumes the concatenation of the
    parts' inputs and emits the concatenation of their outputs, exactly
    equal to evaluating each part independently.
    """
    if not parts:
        raise ValueError("parallelize needs at least one part")
    if len({p.input_dim for p in parts}) != 1:
        raise ValueError("parts have unequal input dims")
    depth = max(p.depth for p in parts)
    parts = [pad_to_depth(p, depth) for p in parts]
    layers = []
    for k in range(depth):
        blocks = [p.layers[k] for p in parts]
        rows = sum(W.shape[0] for W, _ in blocks)
        cols = sum(W.shape[1] for W, _ in blocks)
        W = np.zeros((rows, cols))
        b = np.zeros(rows)
        r = c = 0
        for Wp, bp in blocks:
            W[r : r + Wp.shape[0], c : c + Wp.shape[1]] = Wp
            b[r : r + Wp.shape[0]] = bp
            r += Wp.shape[0]
            c += Wp.shape[1]
        layers.append((W, b))
    return MLP(layers)


def lipschitz_upper_bound(net: MLP, norm: str = "l_inf") -> float:
    """Product of layer operator norms; >= the true Lipschitz constant.

    ReLU is 1-Lipschitz componentwise in both supported norms, so the
    product over layers dominates the network's Lipschitz constant.
    """
    prod = 1.0
    for W, _ in net.layers:
        if norm == "l_inf":
            prod *= float(np.abs(W).sum(axis=1).max())
        elif norm == "l_2":
            prod *= float(np.linalg.norm(W, 2))
        else:
            raise ValueError(f"unknown norm {norm!r} (use 'l_inf' or 'l_2')")
    return prod
