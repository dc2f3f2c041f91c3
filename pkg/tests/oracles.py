"""Independent reference implementations, written as plain loops.

The cluster and verdict oracles use exact rational arithmetic on the (float)
inputs, so boundary ties such as a point lying exactly on a radius are decided
by the true geometry rather than by rounding.
"""

import math
from fractions import Fraction


def _exact(v):
    return [Fraction(float(x)) for x in v]


def _sq(a, b):
    return sum((x - y) ** 2 for x, y in zip(a, b))


def cluster_oracle(features, labels, lam):
    """Per-class (center, squared radius): exact mean, ceil(lam*N)-th smallest squared center distance."""
    out = {}
    for cls in dict.fromkeys(labels):
        members = [_exact(f) for f, l in zip(features, labels) if l == cls]
        n = len(members)
        center = [sum(col) / n for col in zip(*members)]
        dists = sorted(_sq(m, center) for m in members)
        out[cls] = (center, dists[math.ceil(lam * n) - 1])
    return out


def knn_oracle(features, query, k):
    """Indices of the k nearest features by a full sort on (distance, index)."""
    q = [float(x) for x in query]
    ranked = sorted((math.dist([float(x) for x in f], q), i) for i, f in enumerate(features))
    return [i for _, i in ranked[:k]]


def ood_oracle(features, labels, clusters, query, k):
    """Verdict by the any-vote rule: neighbor votes ID iff d_y <= d_k and d_y <= r_j."""
    q = _exact(query)
    feats = [_exact(f) for f in features]
    ranked = sorted((_sq(f, q), i) for i, f in enumerate(feats))
    votes = []
    for _, i in ranked[:k]:
        center, r2 = clusters[labels[i]]
        d_k2 = _sq(feats[i], center)
        d_y2 = _sq(q, center)
        votes.append(d_y2 <= d_k2 and d_y2 <= r2)
    return "ID" if any(votes) else "OOD"
