"""Pure-Python versions of the Monte Carlo kernels.

Same arithmetic as the compiled module, used when the extension is not built
or when ``HYPSIGMA_PURE_PYTHON=1``.
"""
from __future__ import annotations

import math

import numpy as np


def _site_sum(z, theta, nbr):
    tz = theta[z]
    return sum(math.exp(tz - theta[y]) for y in nbr[z])


def sweep_lowrank(theta, G, logdet, nbr, hat_pos, x0, beta, coef, width, normals, uniforms):
    """One Metropolis sweep with determinant-lemma updates of ``G = M_hat^-1``.

    ``theta`` and ``G`` are modified in place.  Returns
    ``(n_accepted, new_logdet)``.
    """
    V = theta.shape[0]
    accepted = 0
    nbr_l = nbr.tolist()
    for x in range(V):
        if x == x0:
            continue
        old = theta[x]
        new = old + width * normals[x]
        support = []
        for z in [x] + nbr_l[x]:
            if z != x0 and z not in support:
                support.append(z)
        m_old = [_site_sum(z, theta, nbr_l) for z in support]
        theta[x] = new
        m_new = [_site_sum(z, theta, nbr_l) for z in support]
        theta[x] = old
        pos = [hat_pos[z] for z in support]
        delta = np.array(m_new) - np.array(m_old)
        K = np.eye(len(pos)) + delta[:, None] * G[np.ix_(pos, pos)]
        det_k = np.linalg.det(K)
        if not det_k > 0.0:
            continue
        d_kin = 0.0
        for y in nbr_l[x]:
            d_kin += math.cosh(new - theta[y]) - math.cosh(old - theta[y])
        dS = coef * math.log(det_k) + beta * d_kin
        if dS <= 0.0 or uniforms[x] < math.exp(-dS):
            theta[x] = new
            X = np.linalg.solve(K, delta[:, None] * G[pos, :])
            G -= G[:, pos] @ X
            logdet += math.log(det_k)
            accepted += 1
    return accepted, logdet


def accumulate_correlator(theta, G, hat_pos, disp, k_est, out):
    """Add ``sum_x e(x, x+s)`` to ``out[s]`` for every displacement ``s``.

    ``e`` is the t-integrated estimate of ``n_x . n_y`` with
    ``k_est = (N-1)/(2 beta)``.
    """
    V = theta.shape[0]
    r = np.exp(-theta)
    Gf = np.zeros((V, V))
    keep = hat_pos >= 0
    idx = np.flatnonzero(keep)
    Gf[np.ix_(idx, idx)] = G[np.ix_(hat_pos[idx], hat_pos[idx])]
    diag = np.diag(Gf)
    ratio = r[None, :] / r[:, None]  # r_y / r_x
    est = -k_est * (2.0 * Gf - diag[:, None] * ratio - diag[None, :] / ratio) + 0.5 * (ratio + 1.0 / ratio)
    out += np.bincount(disp.ravel(), weights=est.ravel(), minlength=out.shape[0])
