"""SMO inner loop for the C-SVC dual, compiled with numba.

Working-set selection uses second-order information (maximal violating
``i``, then ``j`` maximizing the guaranteed objective decrease), as in
LIBSVM. The dual is ``min 1/2 a'Qa - e'a`` with ``Q_ij = y_i y_j K_ij``,
``0 <= a <= C`` and ``y'a = 0``.
"""

import numpy as np
from numba import njit

TAU = 1e-12


@njit(cache=True)
def smo_solve(K, y, C, eps, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    converged = False
    while it < max_iter:
        # select i: max -y_t G_t over I_up
        Gmax = -np.inf
        i = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * G[t]
                if v > Gmax:
                    Gmax = v
                    i = t
        # select j over I_low
        Gmin = np.inf
        j = -1
        best = np.inf
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                v = -y[t] * G[t]
                if v < Gmin:
                    Gmin = v
                if i >= 0:
                    b = Gmax - v
                    if b > 0:
                        a = K[i, i] + K[t, t] - 2.0 * K[i, t]
                        if a <= 0:
                            a = TAU
                        obj = -(b * b) / a
                        if obj < best:
                            best = obj
                            j = t
        if i < 0 or j < 0 or Gmax - Gmin < eps:
            converged = True
            break
        it += 1

        yi = y[i]
        yj = y[j]
        Qii = K[i, i]
        Qjj = K[j, j]
        Qij = yi * yj * K[i, j]
        old_ai = alpha[i]
        old_aj = alpha[j]
        if yi != yj:
            quad = Qii + Qjj + 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = Qii + Qjj - 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total

        dai = alpha[i] - old_ai
        daj = alpha[j] - old_aj
        for t in range(n):
            G[t] += y[t] * (yi * K[i, t] * dai + yj * K[j, t] * daj)

    # offset: average over free multipliers, else midpoint of the feasible range
    ub = np.inf
    lb = -np.inf
    s = 0.0
    nfree = 0
    for t in range(n):
        yG = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yG)
            else:
                lb = max(lb, yG)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yG)
            else:
                lb = max(lb, yG)
        else:
            nfree += 1
            s += yG
    if nfree > 0:
        rho = s / nfree
    else:
        rho = (ub + lb) / 2.0
    return alpha, rho, it, converged
