"""Lower-left convex envelope of (P, S) cost points."""
from __future__ import annotations

import numpy as np

from .model import CostPair


def envelope_indices(P, S) -> list[int]:
    """Indices of the vertices of the lower-left convex hull, ordered by P.

    Dominated points and points on a chord between two vertices are dropped.
    Ties are broken toward lower P, then lower S, then the earlier index.
    """
    P = np.asarray(P, dtype=float)
    S = np.asarray(S, dtype=float)
    if P.size == 0:
        return []
    order = np.lexsort((np.arange(P.size), S, P))
    stair: list[int] = []
    for i in order:
        if not stair or S[i] < S[stair[-1]]:
            if stair and P[i] == P[stair[-1]]:
                continue
            stair.append(int(i))
    hull: list[int] = []
    for i in stair:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (P[b] - P[a]) * (S[i] - S[a]) - (S[b] - S[a]) * (P[i] - P[a])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def convex_envelope(points: list[CostPair]) -> list[CostPair]:
    idx = envelope_indices([p.P for p in points], [p.S for p in points])
    return [points[i] for i in idx]


def envelope_value(envelope: list[CostPair], P: float) -> float:
    """Lowest S reachable at input power ``P`` by time-sharing envelope vertices.

    Returns ``inf`` left of the first vertex and the last vertex's S to the right
    of the last one.
    """
    Ps = np.array([p.P for p in envelope])
    Ss = np.array([p.S for p in envelope])
    if P < Ps[0]:
        return float("inf")
    if P >= Ps[-1]:
        return float(Ss[-1])
    return float(np.interp(P, Ps, Ss))


def envelope_slope(envelope: list[CostPair], P: float) -> float:
    """dS/dP of the envelope at ``P`` (0 beyond the last vertex)."""
    Ps = np.array([p.P for p in envelope])
    Ss = np.array([p.S for p in envelope])
    if len(Ps) < 2 or P >= Ps[-1]:
        return 0.0
    k = int(np.clip(np.searchsorted(Ps, P, side="right") - 1, 0, len(Ps) - 2))
    return float((Ss[k + 1] - Ss[k]) / (Ps[k + 1] - Ps[k]))
