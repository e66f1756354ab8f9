# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Monte Carlo kernels (see ``_pykernels`` for the reference Python)."""

from libc.math cimport exp, log, cosh, fabs

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef enum:
    MAXK = 64


cdef inline double _site_sum(Py_ssize_t z, double[::1] theta, const long[:, ::1] nbr) nogil:
    cdef Py_ssize_t j
    cdef double s = 0.0
    cdef double tz = theta[z]
    for j in range(nbr.shape[1]):
        s += exp(tz - theta[nbr[z, j]])
    return s


cdef int _lu_inplace(double* K, int k, int* piv, double* det) nogil:
    """LU with partial pivoting of a row-major k x k matrix; returns 0 if singular."""
    cdef int i, j, c, p
    cdef double amax, t, d = 1.0
    for c in range(k):
        p = c
        amax = fabs(K[c * k + c])
        for i in range(c + 1, k):
            if fabs(K[i * k + c]) > amax:
                amax = fabs(K[i * k + c])
                p = i
        piv[c] = p
        if amax == 0.0:
            det[0] = 0.0
            return 0
        if p != c:
            for j in range(k):
                t = K[c * k + j]
                K[c * k + j] = K[p * k + j]
                K[p * k + j] = t
            d = -d
        d *= K[c * k + c]
        for i in range(c + 1, k):
            K[i * k + c] /= K[c * k + c]
            t = K[i * k + c]
            for j in range(c + 1, k):
                K[i * k + j] -= t * K[c * k + j]
    det[0] = d
    return 1


def sweep_lowrank(double[::1] theta, double[:, ::1] G, double logdet,
                  const long[:, ::1] nbr, const long[::1] hat_pos, long x0,
                  double beta, double coef, double width,
                  const double[::1] normals, const double[::1] uniforms):
    """One Metropolis sweep with determinant-lemma updates of ``G = M_hat^-1``.

    ``theta`` and ``G`` are modified in place.  Returns
    ``(n_accepted, new_logdet)``.
    """
    cdef Py_ssize_t V = theta.shape[0]
    cdef Py_ssize_t n = G.shape[0]
    cdef int nslots = <int> nbr.shape[1]
    if nslots + 1 > MAXK:
        raise ValueError("too many neighbor slots for the compiled kernel")
    cdef long support[MAXK]
    cdef long pos[MAXK]
    cdef double delta[MAXK]
    cdef double K[MAXK * MAXK]
    cdef int piv[MAXK]
    cdef double gs[MAXK]
    cdef double[:, ::1] X = np.empty((MAXK, n))
    cdef Py_ssize_t x, z, y, i, j, a, b
    cdef int k, dup, ok
    cdef double old, new, det_k, d_kin, dS, s, t
    cdef long accepted = 0

    with nogil:
        for x in range(V):
            if x == x0:
                continue
            old = theta[x]
            new = old + width * normals[x]
            k = 0
            for j in range(-1, nslots):
                z = x if j < 0 else nbr[x, j]
                if z == x0:
                    continue
                dup = 0
                for i in range(k):
                    if support[i] == z:
                        dup = 1
                        break
                if dup:
                    continue
                support[k] = z
                pos[k] = hat_pos[z]
                k += 1
            for i in range(k):
                delta[i] = -_site_sum(support[i], theta, nbr)
            theta[x] = new
            for i in range(k):
                delta[i] += _site_sum(support[i], theta, nbr)
            theta[x] = old
            for a in range(k):
                for b in range(k):
                    K[a * k + b] = delta[a] * G[pos[a], pos[b]]
                K[a * k + a] += 1.0
            ok = _lu_inplace(K, k, piv, &det_k)
            if not ok or not det_k > 0.0:
                continue
            d_kin = 0.0
            for j in range(nslots):
                y = nbr[x, j]
                d_kin += cosh(new - theta[y]) - cosh(old - theta[y])
            dS = coef * log(det_k) + beta * d_kin
            if dS <= 0.0 or uniforms[x] < exp(-dS):
                theta[x] = new
                # X = K^-1 diag(delta) G[S, :]
                for a in range(k):
                    for j in range(n):
                        X[a, j] = delta[a] * G[pos[a], j]
                for a in range(k):
                    if piv[a] != a:
                        for j in range(n):
                            t = X[a, j]
                            X[a, j] = X[piv[a], j]
                            X[piv[a], j] = t
                for j in range(n):
                    for a in range(k):
                        s = X[a, j]
                        for b in range(a):
                            s -= K[a * k + b] * X[b, j]
                        X[a, j] = s
                    for a in range(k - 1, -1, -1):
                        s = X[a, j]
                        for b in range(a + 1, k):
                            s -= K[a * k + b] * X[b, j]
                        X[a, j] = s / K[a * k + a]
                for i in range(n):
                    # read the row's S entries before the row is overwritten
                    for a in range(k):
                        gs[a] = G[i, pos[a]]
                    for a in range(k):
                        t = gs[a]
                        if t != 0.0:
                            for j in range(n):
                                G[i, j] -= t * X[a, j]
                logdet += log(det_k)
                accepted += 1
    return accepted, logdet


def accumulate_correlator(const double[::1] theta, const double[:, ::1] G,
                          const long[::1] hat_pos, const long[:, ::1] disp,
                          double k_est, double[::1] out):
    """Add ``sum_x e(x, x+s)`` to ``out[s]`` for every displacement ``s``."""
    cdef Py_ssize_t V = theta.shape[0]
    cdef Py_ssize_t x, y
    cdef long px, py
    cdef double gxx, gyy, gxy, ratio, rx
    cdef double[::1] r = np.exp(-np.asarray(theta))
    cdef double[::1] gd = np.zeros(V)
    for x in range(V):
        if hat_pos[x] >= 0:
            gd[x] = G[hat_pos[x], hat_pos[x]]
    with nogil:
        for x in range(V):
            px = hat_pos[x]
            rx = r[x]
            gxx = gd[x]
            for y in range(V):
                py = hat_pos[y]
                gyy = gd[y]
                gxy = G[px, py] if (px >= 0 and py >= 0) else 0.0
                ratio = r[y] / rx
                out[disp[x, y]] += (-k_est * (2.0 * gxy - gxx * ratio - gyy / ratio)
                                    + 0.5 * (ratio + 1.0 / ratio))
