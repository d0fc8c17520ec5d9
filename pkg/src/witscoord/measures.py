"""Entropy and (conditional) mutual information on labelled joint pmf tensors.

All quantities are in nats. Divide by ``log(2)`` for bits.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import entr

from .errors import InvalidPmfError, SchemaError

ZERO_CLAMP = 1e-10
NORM_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class JointPmf:
    """Dense joint pmf with one named axis per random variable."""

    axes: tuple[str, ...]
    data: np.ndarray

    def __post_init__(self):
        axes = tuple(self.axes)
        data = np.array(self.data, dtype=float)
        if len(set(axes)) != len(axes):
            raise SchemaError(f"duplicate axis labels in {axes}")
        if data.ndim != len(axes):
            raise SchemaError(f"{len(axes)} axis labels for a {data.ndim}-d tensor")
        if np.any(data < 0) or not np.all(np.isfinite(data)):
            raise InvalidPmfError("joint pmf has negative or non-finite entries")
        total = data.sum()
        if abs(total - 1.0) > NORM_TOL:
            raise InvalidPmfError(f"joint pmf sums to {total!r}, not 1")
        data.setflags(write=False)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "data", data)

    @property
    def sizes(self) -> dict[str, int]:
        return dict(zip(self.axes, self.data.shape))

    def require(self, labels: Iterable[str]) -> None:
        missing = [a for a in labels if a not in self.axes]
        if missing:
            raise SchemaError(f"joint over {self.axes} lacks axes {missing}")

    def marginal(self, labels: Sequence[str]) -> np.ndarray:
        """Marginal tensor over ``labels``, axes in the order given."""
        labels = tuple(labels)
        self.require(labels)
        if len(set(labels)) != len(labels):
            raise SchemaError(f"repeated labels {labels}")
        drop = tuple(i for i, a in enumerate(self.axes) if a not in labels)
        m = self.data.sum(axis=drop) if drop else self.data
        kept = [a for a in self.axes if a in labels]
        return np.transpose(m, [kept.index(a) for a in labels])


def _clamp(v: float) -> float:
    return 0.0 if abs(v) < ZERO_CLAMP else float(v)


def entropy(p) -> float:
    """Shannon entropy in nats of a pmf (any shape; flattened)."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise InvalidPmfError("pmf has negative entries")
    return float(entr(p).sum())


def _groups(joint: JointPmf, *groups) -> list[tuple[str, ...]]:
    out = []
    seen: set[str] = set()
    for g in groups:
        g = (g,) if isinstance(g, str) else tuple(g)
        if not g:
            raise SchemaError("empty axis group")
        if seen.intersection(g):
            raise SchemaError(f"axis groups overlap on {sorted(seen.intersection(g))}")
        seen.update(g)
        out.append(g)
    joint.require(seen)
    return out


def _h(joint: JointPmf, labels) -> float:
    return entropy(joint.marginal(labels)) if labels else 0.0


def mutual_information(joint: JointPmf, group_a, group_b) -> float:
    """I(A;B) = H(A) + H(B) - H(A,B)."""
    a, b = _groups(joint, group_a, group_b)
    return _clamp(_h(joint, a) + _h(joint, b) - _h(joint, a + b))


def conditional_mutual_information(joint: JointPmf, group_a, group_b, group_c) -> float:
    """I(A;B|C) = H(A,C) + H(B,C) - H(A,B,C) - H(C)."""
    a, b, c = _groups(joint, group_a, group_b, group_c)
    v = _h(joint, a + c) + _h(joint, b + c) - _h(joint, a + b + c) - _h(joint, c)
    return _clamp(v)


def info_constraint_value(joint: JointPmf) -> float:
    """I(W1;Y1) - I(U2;X0|W1,Y1); the design is feasible when this is >= 0.

    Only the X0, W1, Y1 and U2 axes are read, so a joint with U1 already
    summed out is accepted.
    """
    joint.require(("X0", "W1", "Y1", "U2"))
    rate = mutual_information(joint, "W1", "Y1")
    leak = conditional_mutual_information(joint, "U2", "X0", ("W1", "Y1"))
    return _clamp(rate - leak)
