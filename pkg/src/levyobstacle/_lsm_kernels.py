"""Normal equations for the least-squares continuation regression.

The basis is ``[1, z, ..., z^degree]`` in the standardised state ``z``, plus
optionally the standardised payoff.  Sums run in path order so results do not
depend on BLAS threading.
"""
import numpy as np

from ._backend import njit, use_numba


@njit(nogil=True)
def _normal_eq_nb(z, p, y, degree, with_payoff):
    nb = degree + 1 + (1 if with_payoff else 0)
    G = np.zeros((nb, nb))
    r = np.zeros(nb)
    row = np.empty(nb)
    for i in range(z.shape[0]):
        v = 1.0
        for d in range(degree + 1):
            row[d] = v
            v *= z[i]
        if with_payoff:
            row[nb - 1] = p[i]
        for a in range(nb):
            r[a] += row[a] * y[i]
            for b in range(a, nb):
                G[a, b] += row[a] * row[b]
    for a in range(nb):
        for b in range(a):
            G[a, b] = G[b, a]
    return G, r


def design_matrix(z, p, degree, with_payoff):
    cols = [z ** d for d in range(degree + 1)]
    if with_payoff:
        cols.append(p)
    return np.column_stack(cols)


def normal_equations(z, p, y, degree, with_payoff):
    if use_numba():
        return _normal_eq_nb(z, p, y, degree, with_payoff)
    B = design_matrix(z, p, degree, with_payoff)
    return B.T @ B, B.T @ y


def min_norm_solve(G, r, rcond=1e-12):
    """Minimum-norm solution of ``G c = r`` (``G`` symmetric PSD)."""
    return np.linalg.pinv(G, rcond=rcond, hermitian=True) @ r
