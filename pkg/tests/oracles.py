"""Independent reference implementations used only by the tests.

Nothing here imports from the package: features, solves and the backward loop
are written out by hand for the three-state chain.
"""

import math


def gauss_jordan_inverse(M):
    """Dense inverse by Gauss-Jordan elimination with partial pivoting (lists of lists)."""
    n = len(M)
    aug = [list(map(float, row)) + [1.0 if i == j else 0.0 for j in range(n)] for i, row in enumerate(M)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(aug[r][col]))
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        aug[col] = [v / p for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0.0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def chain_features(state, action, A):
    phi = [0.0] * (A + 2)
    phi[action if state == 0 else A + state - 1] = 1.0
    return phi


def oracle_sitewise(sites, A, H, lam, beta):
    """Pessimistic site-wise ridge on the chain, from raw transition tuples.

    ``sites[k]`` is a list of ``(h, s, a, r, s_next)`` tuples. Returns per-step
    ``w``, ``m`` and a ``Q[h][s][a]`` table.
    """
    d = A + 2
    W, Mvec = [None] * H, [None] * H
    Q = [None] * (H + 2)

    def V(h, s):
        if h > H:
            return 0.0
        return max(Q[h][s])

    for h in range(H, 0, -1):
        nus, roots = [], []
        for data in sites:
            L = [[lam if i == j else 0.0 for j in range(d)] for i in range(d)]
            b = [0.0] * d
            for (t, s, a, r, s2) in data:
                if t != h:
                    continue
                phi = chain_features(s, a, A)
                y = r + V(h + 1, s2)
                for i in range(d):
                    b[i] += phi[i] * y
                    for j in range(d):
                        L[i][j] += phi[i] * phi[j]
            Linv = gauss_jordan_inverse(L)
            nus.append([sum(Linv[i][j] * b[j] for j in range(d)) for i in range(d)])
            roots.append([math.sqrt(Linv[i][i]) for i in range(d)])
        W[h - 1] = [min(nu[i] for nu in nus) for i in range(d)]
        Mvec[h - 1] = [max(rt[i] for rt in roots) for i in range(d)]
        table = []
        for s in range(3):
            row = []
            for a in range(A):
                phi = chain_features(s, a, A)
                raw = sum(p * w for p, w in zip(phi, W[h - 1])) - beta * sum(p * m for p, m in zip(phi, Mvec[h - 1]))
                row.append(min(max(raw, 0.0), H - h + 1))
            table.append(row)
        Q[h] = table
    return W, Mvec, Q
