"""NumPy implementations of the scenario-reduction kernels."""

import numpy as np

# relative slack for treating two selection objectives as tied
TIE_RTOL = 1e-12


def pairwise_distances(X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        diff = X[i + 1 :] - X[i]
        d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        out[i, i + 1 :] = d
        out[i + 1 :, i] = d
    return out


def forward_select(dist, prob, count):
    """Greedy forward selection; returns kept indices in selection order.

    At each step the candidate ``u`` minimising
    ``sum_{k not kept, k != u} p_k * min(mind_k, dist[k, u])`` is added,
    ties going to the lowest index.
    """
    dist = np.ascontiguousarray(dist, dtype=np.float64)
    prob = np.ascontiguousarray(prob, dtype=np.float64)
    n = dist.shape[0]
    if not 0 <= count <= n:
        raise ValueError("count out of range")
    mind = np.full(n, np.inf)
    kept = np.zeros(n, dtype=bool)
    order = []
    for _ in range(count):
        cand = np.flatnonzero(~kept)
        others = ~kept
        # contrib[k, u] for k not kept; k == u contributes 0 because dist[u, u] = 0
        contrib = np.minimum(mind[others][:, None], dist[np.ix_(others, cand)])
        z = prob[others] @ contrib
        zmin = z.min()
        u = cand[int(np.flatnonzero(z <= zmin + TIE_RTOL * abs(zmin))[0])]
        order.append(int(u))
        kept[u] = True
        mind = np.minimum(mind, dist[:, u])
    return order
