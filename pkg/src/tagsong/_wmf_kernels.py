"""Half-sweep kernels for the alternating least squares factorizer.

Both kernels share one contract: given a row-compressed interaction slice
(indptr, indices, counts), the fixed opposite factor ``other``, its Gram
matrix ``gram = other.T @ other``, the regularizer and the confidence
weight, overwrite ``out`` row by row with the regularized weighted
least-squares solution

    A x = b,  A = gram + reg*I + sum_obs (alpha*count) y y^T,
              b = sum_obs (1 + alpha*count) y

and return the number of rows whose normal matrix was not positive
definite (the caller turns a nonzero count into an error). Rows with no
observations are set to zero: their objective is pure shrinkage.

The numba variant parallelizes over rows; each row writes only its own
output slice, so results are bitwise independent of the schedule.
"""

import numpy as np
import scipy.linalg

_numba_kernel = None


def half_sweep_numpy(indptr, indices, counts, other, gram, reg, alpha, out) -> int:
    k = other.shape[1]
    base = gram + reg * np.eye(k)
    fails = 0
    for r in range(indptr.shape[0] - 1):
        lo, hi = indptr[r], indptr[r + 1]
        if hi == lo:
            out[r] = 0.0
            continue
        cols = indices[lo:hi]
        cm1 = alpha * counts[lo:hi]
        Y = other[cols]
        A = base + (Y.T * cm1) @ Y
        b = Y.T @ (1.0 + cm1)
        try:
            cf = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
            out[r] = scipy.linalg.cho_solve(cf, b, check_finite=False)
        except scipy.linalg.LinAlgError:
            fails += 1
    return fails


def _build_numba_kernel():
    from numba import njit, prange

    @njit(cache=True)
    def chol_solve(A, b):
        # in-place Cholesky factorization, then forward/back substitution
        n = A.shape[0]
        for j in range(n):
            s = A[j, j]
            for t in range(j):
                s -= A[j, t] * A[j, t]
            if s <= 0.0:
                return False
            A[j, j] = np.sqrt(s)
            for i in range(j + 1, n):
                v = A[i, j]
                for t in range(j):
                    v -= A[i, t] * A[j, t]
                A[i, j] = v / A[j, j]
        for i in range(n):
            v = b[i]
            for t in range(i):
                v -= A[i, t] * b[t]
            b[i] = v / A[i, i]
        for i in range(n - 1, -1, -1):
            v = b[i]
            for t in range(i + 1, n):
                v -= A[t, i] * b[t]
            b[i] = v / A[i, i]
        return True

    @njit(cache=True, parallel=True)
    def half_sweep(indptr, indices, counts, other, gram, reg, alpha, out):
        n_rows = indptr.shape[0] - 1
        k = other.shape[1]
        fails = 0
        for r in prange(n_rows):
            lo = indptr[r]
            hi = indptr[r + 1]
            if hi == lo:
                for j in range(k):
                    out[r, j] = 0.0
            else:
                A = gram.copy()
                for j in range(k):
                    A[j, j] += reg
                b = np.zeros(k, dtype=np.float64)
                for idx in range(lo, hi):
                    c = indices[idx]
                    cm1 = alpha * counts[idx]
                    for a in range(k):
                        ya = other[c, a]
                        b[a] += (1.0 + cm1) * ya
                        for bb in range(k):
                            A[a, bb] += cm1 * ya * other[c, bb]
                if chol_solve(A, b):
                    for j in range(k):
                        out[r, j] = b[j]
                else:
                    fails += 1
        return fails

    return half_sweep


def half_sweep_numba(indptr, indices, counts, other, gram, reg, alpha, out) -> int:
    global _numba_kernel
    if _numba_kernel is None:
        _numba_kernel = _build_numba_kernel()
    return int(_numba_kernel(indptr, indices, counts, other, gram, reg, alpha, out))
