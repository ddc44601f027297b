"""Compiled inner loops for the DG right-hand side and the SSP-RK3 step.

Geometry and model choices enter through precomputed coefficient packs (see
``dg.kernel_coefficients``), so one loop serves every correction and C0
variant.  ``tests/test_dg.py`` checks these kernels against the numpy
reference assembly built on :mod:`stenoflow.model`.

Quadrature pack ``cq`` (8, N, nq), per point:
    0 K/D^2   1 Coriolis coefficient   2 coefficient of A in the source
    3 coefficient of A^{3/2}   4, 5 p2 transport factors on
    (dQ - U dA) and Q   6 factor on Q^2/A   7 factor of the integral
    approximation term.
Interface pack ``cn`` (2, N+1): K/D^2 and the Coriolis coefficient.
"""
import math

import numpy as np
from numba import njit

# status codes returned by the kernels
OK = 0
BAD_AREA = 1
BAD_TRACE = 2
NOT_HYPERBOLIC = 3
BAD_BOUNDARY = 4

OUTLET_NON_REFLECTING, OUTLET_PRESSURE = 0, 1


@njit(cache=True)
def _max_speed(a, q, coriolis, kd):
    # returns -1 on loss of hyperbolicity
    u = q / a
    disc = (coriolis * u) ** 2 - coriolis * u * u + 0.5 * kd * math.sqrt(a)
    if disc < 0.0:
        return -1.0
    return abs(coriolis * u) + math.sqrt(disc)


@njit(cache=True)
def _trace_terms(a, q, coriolis, kd):
    """(max |lambda|, momentum flux) at one trace state; speed -1 if not hyperbolic."""
    sqa = math.sqrt(a)
    u = q / a
    cu = coriolis * u
    fq = cu * q + kd * a * sqa / 3.0
    disc = cu * cu - cu * u + 0.5 * kd * sqa
    if disc < 0.0:
        return -1.0, fq
    return abs(cu) + math.sqrt(disc), fq


@njit(cache=True)
def rhs_kernel(cA, cQ, V, dV, w, phiL, phiR, h, cq, cn, friction, ga, gq, ha, hq, out, fstar):
    """Assemble dU/dt into ``out`` (2, N, k+1) and interface fluxes into ``fstar`` (N+1, 2).

    Returns (status, element index).
    """
    N, K1 = cA.shape
    nq = w.shape[0]
    jac = 2.0 / h
    for e in range(N):
        for j in range(K1):
            out[0, e, j] = 0.0
            out[1, e, j] = 0.0
        for iq in range(nq):
            a = 0.0
            qv = 0.0
            da = 0.0
            dq = 0.0
            for j in range(K1):
                a += cA[e, j] * V[iq, j]
                qv += cQ[e, j] * V[iq, j]
                da += cA[e, j] * dV[iq, j]
                dq += cQ[e, j] * dV[iq, j]
            if not a > 0.0:
                return BAD_AREA, e
            da *= jac
            dq *= jac
            sqa = math.sqrt(a)
            u = qv / a
            fq = cq[1, e, iq] * qv * u + cq[0, e, iq] * a * sqa / 3.0
            s = (-friction * u + a * (cq[2, e, iq] + cq[3, e, iq] * sqa)
                 - cq[4, e, iq] * (dq - u * da) - cq[5, e, iq] * qv + cq[6, e, iq] * qv * u)
            c7 = cq[7, e, iq]
            if c7 != 0.0:
                s += c7 * (2.0 * qv * dq / sqa - qv * u * da / (2.0 * sqa))
            wfa = jac * w[iq] * qv
            wfq = jac * w[iq] * fq
            ws = w[iq] * s
            for j in range(K1):
                out[0, e, j] += wfa * dV[iq, j]
                out[1, e, j] += wfq * dV[iq, j] + ws * V[iq, j]

    aR_prev = ga
    qR_prev = gq
    for i in range(N + 1):
        aL = aR_prev
        qL = qR_prev
        if i == N:
            aR = ha
            qR = hq
        else:
            aR = 0.0
            qR = 0.0
            for j in range(K1):
                aR += cA[i, j] * phiL[j]
                qR += cQ[i, j] * phiL[j]
            # trace on the right of element i feeds the next interface
            aR_prev = 0.0
            qR_prev = 0.0
            for j in range(K1):
                aR_prev += cA[i, j] * phiR[j]
                qR_prev += cQ[i, j] * phiR[j]
        if not (aL > 0.0 and aR > 0.0):
            return BAD_TRACE, min(i, N - 1)
        kd = cn[0, i]
        cor = cn[1, i]
        sL, fL = _trace_terms(aL, qL, cor, kd)
        sR, fR = _trace_terms(aR, qR, cor, kd)
        if sL < 0.0 or sR < 0.0:
            return NOT_HYPERBOLIC, min(i, N - 1)
        lam = max(sL, sR)
        fstar[i, 0] = 0.5 * (qL + qR) - 0.5 * lam * (aR - aL)
        fstar[i, 1] = 0.5 * (fL + fR) - 0.5 * lam * (qR - qL)

    for e in range(N):
        fa = jac * fstar[e + 1, 0]
        fb = jac * fstar[e, 0]
        ga_ = jac * fstar[e + 1, 1]
        gb = jac * fstar[e, 1]
        for j in range(K1):
            out[0, e, j] -= fa * phiR[j] - fb * phiL[j]
            out[1, e, j] -= ga_ * phiR[j] - gb * phiL[j]
    return OK, -1


@njit(cache=True)
def max_speed_kernel(cA, cQ, V, phiL, phiR, cq, cn):
    """Largest |lambda| over quadrature and trace points; negative on failure."""
    N, K1 = cA.shape
    nq = V.shape[0]
    smax = 0.0
    for e in range(N):
        for iq in range(nq + 2):
            a = 0.0
            qv = 0.0
            for j in range(K1):
                if iq < nq:
                    p = V[iq, j]
                elif iq == nq:
                    p = phiL[j]
                else:
                    p = phiR[j]
                a += cA[e, j] * p
                qv += cQ[e, j] * p
            if not a > 0.0:
                return -1.0
            if iq < nq:
                s = _max_speed(a, qv, cq[1, e, iq], cq[0, e, iq])
            else:
                node = e + iq - nq
                s = _max_speed(a, qv, cn[1, node], cn[0, node])
            if s < 0.0:
                return -2.0
            smax = max(smax, s)
    return smax


@njit(cache=True)
def min_area_kernel(cA, V, phiL, phiR):
    N, K1 = cA.shape
    nq = V.shape[0]
    amin = np.inf
    where = -1
    for e in range(N):
        for iq in range(nq + 2):
            a = 0.0
            for j in range(K1):
                if iq < nq:
                    p = V[iq, j]
                elif iq == nq:
                    p = phiL[j]
                else:
                    p = phiR[j]
                a += cA[e, j] * p
            if not a >= amin:
                amin = a
                where = e
    return amin, where


@njit(cache=True)
def _ghosts(c, phiL, phiR, u_in, sb_in, sb_out, outlet, w2_out, a_out_fixed, g):
    """Velocity-inlet and outlet exterior states written into g = (ga, gq, ha, hq)."""
    N, K1 = c.shape[1], c.shape[2]
    a0 = 0.0
    q0 = 0.0
    aN = 0.0
    qN = 0.0
    for j in range(K1):
        a0 += c[0, 0, j] * phiL[j]
        q0 += c[1, 0, j] * phiL[j]
        aN += c[0, N - 1, j] * phiR[j]
        qN += c[1, N - 1, j] * phiR[j]
    if not (a0 > 0.0 and aN > 0.0):
        return BAD_TRACE
    s = -q0 / a0 + 4.0 * sb_in * a0 ** 0.25 + u_in
    if not s > 0.0:
        return BAD_BOUNDARY
    ag = (s / (4.0 * sb_in)) ** 4
    g[0] = ag
    g[1] = ag * u_in
    w1 = -qN / aN - 4.0 * sb_out * aN ** 0.25
    if outlet == OUTLET_NON_REFLECTING:
        if not w2_out > w1:
            return BAD_BOUNDARY
        ag = ((w2_out - w1) / (8.0 * sb_out)) ** 4
        g[2] = ag
        g[3] = -0.5 * (w1 + w2_out) * ag
    else:
        ag = a_out_fixed
        g[2] = ag
        g[3] = ag * (-w1 - 4.0 * sb_out * ag ** 0.25)
    return OK


@njit(cache=True)
def ssp_rk3_kernel(c, dt, u_in3, V, dV, w, phiL, phiR, h, cq, cn, friction,
                   sb_in, sb_out, outlet, w2_out, a_out_fixed,
                   eq_rhs, eq_fstar, balanced, u1, u2, new, out, fstar, info):
    """One fused SSP-RK3 step (velocity inlet) writing the result into ``new``.

    ``info`` receives (net boundary A-flux * dt, residual, min area, max speed
    of the new state); the residual is max over components of
    ||new - c|| / (dt ||c||).  Returns (status, element).
    """
    N, K1 = c.shape[1], c.shape[2]
    g = np.empty(4)
    net = 0.0
    for stage in range(3):
        if stage == 0:
            src = c
        elif stage == 1:
            src = u1
        else:
            src = u2
        st = _ghosts(src, phiL, phiR, u_in3[stage], sb_in, sb_out, outlet, w2_out, a_out_fixed, g)
        if st != OK:
            return st, 0 if st == BAD_BOUNDARY else -1
        st, e = rhs_kernel(src[0], src[1], V, dV, w, phiL, phiR, h, cq, cn, friction,
                           g[0], g[1], g[2], g[3], out, fstar)
        if st != OK:
            return st, e
        fin = fstar[0, 0]
        fout = fstar[N, 0]
        if balanced:
            fin -= eq_fstar[0, 0]
            fout -= eq_fstar[N, 0]
            for v in range(2):
                for e in range(N):
                    for j in range(K1):
                        out[v, e, j] -= eq_rhs[v, e, j]
        if stage == 0:
            net += (fin - fout) / 6.0
            for v in range(2):
                for e in range(N):
                    for j in range(K1):
                        u1[v, e, j] = c[v, e, j] + dt * out[v, e, j]
        elif stage == 1:
            net += (fin - fout) / 6.0
            for v in range(2):
                for e in range(N):
                    for j in range(K1):
                        u2[v, e, j] = 0.75 * c[v, e, j] + 0.25 * u1[v, e, j] + 0.25 * dt * out[v, e, j]
        else:
            net += 2.0 * (fin - fout) / 3.0
            for v in range(2):
                for e in range(N):
                    for j in range(K1):
                        new[v, e, j] = c[v, e, j] / 3.0 + 2.0 / 3.0 * u2[v, e, j] + 2.0 / 3.0 * dt * out[v, e, j]
    resid = 0.0
    for v in range(2):
        num = 0.0
        den = 0.0
        for e in range(N):
            for j in range(K1):
                d = new[v, e, j] - c[v, e, j]
                num += d * d
                den += c[v, e, j] * c[v, e, j]
        val = math.sqrt(num) / dt
        if den > 0.0:
            val /= math.sqrt(den)
        resid = max(resid, val)
    amin, where = min_area_kernel(new[0], V, phiL, phiR)
    info[0] = dt * net
    info[1] = resid
    info[2] = amin
    info[3] = -1.0
    if not amin > 0.0:
        return BAD_AREA, where
    info[3] = max_speed_kernel(new[0], new[1], V, phiL, phiR, cq, cn)
    return OK, -1
