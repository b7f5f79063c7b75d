"""Compiled inner loops for the filter-bank convolutions.

All routines take contiguous float64 arrays with a single flattened batch
axis; values outside the grid count as zero.
"""

import numpy as np
from numba import njit

_opts = dict(cache=True, fastmath=True, error_model="numpy")


@njit(**_opts)
def conv_bank(x, k, out):
    # x (B, C, M, N), k (n, C, s, s), out (B, n, C, M, N)
    B, C, M, N = x.shape
    n = k.shape[0]
    s = k.shape[-1]
    nu = s // 2
    out[...] = 0.0
    for b in range(B):
        for l in range(n):
            for c in range(C):
                o = out[b, l, c]
                xx = x[b, c]
                for a in range(s):
                    di = nu - a
                    i0 = max(0, -di)
                    i1 = min(M, M - di)
                    for e in range(s):
                        w = k[l, c, a, e]
                        if w == 0.0:
                            continue
                        dj = nu - e
                        j0 = max(0, -dj)
                        j1 = min(N, N - dj)
                        for i in range(i0, i1):
                            orow = o[i]
                            xrow = xx[i + di]
                            for j in range(j0, j1):
                                orow[j] += w * xrow[j + dj]
    return out


@njit(**_opts)
def conv_bank_adjoint(v, k, out):
    # v (B, n, C, M, N), k (n, C, s, s), out (B, C, M, N)
    B, n, C, M, N = v.shape
    s = k.shape[-1]
    nu = s // 2
    out[...] = 0.0
    for b in range(B):
        for c in range(C):
            o = out[b, c]
            for l in range(n):
                vv = v[b, l, c]
                for a in range(s):
                    di = nu - a
                    i0 = max(0, -di)
                    i1 = min(M, M - di)
                    for e in range(s):
                        w = k[l, c, a, e]
                        if w == 0.0:
                            continue
                        dj = nu - e
                        j0 = max(0, -dj)
                        j1 = min(N, N - dj)
                        for i in range(i0, i1):
                            orow = o[i + di]
                            vrow = vv[i]
                            for j in range(j0, j1):
                                orow[j + dj] += w * vrow[j]
    return out


@njit(**_opts)
def correlate_bank(x, v, s):
    # gradient of <conv_bank(x, k), v> w.r.t. k, summed over the batch
    B, n, C, M, N = v.shape
    nu = s // 2
    g = np.zeros((n, C, s, s))
    for b in range(B):
        for l in range(n):
            for c in range(C):
                xx = x[b, c]
                vv = v[b, l, c]
                for a in range(s):
                    di = nu - a
                    i0 = max(0, -di)
                    i1 = min(M, M - di)
                    for e in range(s):
                        dj = nu - e
                        j0 = max(0, -dj)
                        j1 = min(N, N - dj)
                        acc = 0.0
                        for i in range(i0, i1):
                            xrow = xx[i + di]
                            vrow = vv[i]
                            for j in range(j0, j1):
                                acc += xrow[j + dj] * vrow[j]
                        g[l, c, a, e] += acc
    return g
