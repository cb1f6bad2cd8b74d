"""Compiled batch steppers for the ensemble harness.

Each ``*_chunk`` function advances a batch of trajectories through a
block of pre-drawn deviates and updates the per-trajectory observables in
an :class:`Observables` bundle in place.  The step formulas mirror the
pure-Python steppers in ``sde_core`` and ``emitter_models``; the test
suite checks the two agree on shared noise.

Observation convention: after each step the state at grid index ``s`` is
recorded.  Level crossings store the first grid index; occupation-type
times use the left-point rule, adding ``dt`` for every grid index
``s < n_total`` at which the condition holds.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

EULER = 0
MILSTEIN = 1
TAYLOR = 2


@njit(cache=True, nogil=True)
def _observe_path(
    k, path, m, s0, n_total, dt, c0,
    u_thr, a_thr, hit_u, hit_a,
    above, occ, ell, r,
    ex_lo, ex_hi, exit_idx, exit_side,
    cmax, trace_sum, trace_sq, trace_off,
):
    """Fold ``path[:m]`` (C at grid indices ``s0 .. s0+m-1``) into the observables."""
    if m == 0:
        return
    hi = path[0]
    lo = path[0]
    ab = 0.0
    oc = 0.0
    side = exit_side[k]
    has_trace = trace_sum.shape[0] > 0
    for i in range(m):
        C = path[i]
        s = s0 + i
        if C > hi:
            hi = C
        if C < lo:
            lo = C
        if s < n_total:
            if C > c0:
                ab += dt
            if ell <= C <= r:
                oc += dt
        if side == 0 and (C <= ex_lo or C >= ex_hi):
            exit_idx[k] = s
            side = -1 if C <= ex_lo else 1
        if has_trace:
            trace_sum[s - trace_off] += C
            trace_sq[s - trace_off] += C * C
    exit_side[k] = side
    above[k] += ab
    occ[k] += oc
    if hi > cmax[k]:
        cmax[k] = hi
    for j in range(u_thr.shape[0]):
        if hit_u[k, j] < 0 and hi >= u_thr[j]:
            for i in range(m):
                if path[i] >= u_thr[j]:
                    hit_u[k, j] = s0 + i
                    break
    for j in range(a_thr.shape[0]):
        if hit_a[k, j] < 0 and lo <= a_thr[j]:
            for i in range(m):
                if path[i] <= a_thr[j]:
                    hit_a[k, j] = s0 + i
                    break


@njit(cache=True, nogil=True)
def _pop_b(C, kd, sg):
    rad = C * C * C * (1.0 - C)
    if rad <= 0.0:
        return 0.0
    return -kd * sg * math.sqrt(rad)


@njit(cache=True, nogil=True)
def population_step(C, dw, dt, kd, gamma, method):
    """One step of ``dC = -gamma C dt - kd sqrt(gamma) sqrt(C^3 (1-C)) dW``."""
    sg = math.sqrt(gamma)
    a = -gamma * C
    b = _pop_b(C, kd, sg)
    if method == EULER:
        return C + a * dt + b * dw
    if method == MILSTEIN:
        bdb = 0.5 * kd * kd * gamma * (3.0 * C * C - 4.0 * C * C * C)
        return C + a * dt + b * dw + 0.5 * bdb * (dw * dw - dt)
    sq = math.sqrt(dt)
    sup = C + a * dt + b * sq
    return C + a * dt + b * dw + (_pop_b(sup, kd, sg) - b) * (dw * dw - dt) / (2.0 * sq)


@njit(cache=True, nogil=True)
def population_chunk(
    state, z, step0, n_total, dt, kd, gamma, method, c0, stop_below, active, overshoot,
    u_thr, a_thr, hit_u, hit_a, above, occ, ell, r, ex_lo, ex_hi, exit_idx, exit_side,
    cmax, trace_sum, trace_sq, trace_off,
):
    sq = math.sqrt(dt)
    nb, nc = z.shape
    buf = np.empty(nc + 1)
    base = 0 if step0 == 0 else step0 + 1
    for k in range(nb):
        C = state[k]
        m = 0
        if step0 == 0:
            buf[0] = C
            m = 1
        for i in range(nc):
            if not active[k]:
                break
            C = population_step(C, sq * z[k, i], dt, kd, gamma, method)
            if C < 0.0 or C > 1.0:
                overshoot[k] += 1
                C = min(max(C, 0.0), 1.0)
            buf[m] = C
            m += 1
            if C < stop_below:
                active[k] = False
        state[k] = C
        _observe_path(k, buf, m, base, n_total, dt, c0, u_thr, a_thr, hit_u, hit_a, above, occ,
                      ell, r, ex_lo, ex_hi, exit_idx, exit_side, cmax, trace_sum, trace_sq,
                      trace_off)


@njit(cache=True, nogil=True)
def _coupled_ab(C, ph, gamma, floor):
    sg = math.sqrt(gamma)
    Cc = min(max(C, 0.0), 1.0 - floor)
    one_m = 1.0 - Cc
    rad = Cc * Cc * Cc * one_m
    root = math.sqrt(rad) if rad > 0.0 else 0.0
    a0 = -gamma * C
    a1 = gamma * (2.0 * Cc * Cc - Cc) / (2.0 * one_m) * math.sin(2.0 * ph)
    b0 = -2.0 * sg * math.cos(ph) * root
    b1 = -sg * math.sin(ph) * math.sqrt(Cc / one_m)
    return a0, a1, b0, b1


@njit(cache=True, nogil=True)
def coupled_step(C, ph, dw, dt, gamma, floor, method):
    """One step of the coupled population/relative-phase homodyne equations."""
    a0, a1, b0, b1 = _coupled_ab(C, ph, gamma, floor)
    nC = C + a0 * dt + b0 * dw
    nP = ph + a1 * dt + b1 * dw
    if method == EULER:
        return nC, nP
    sq = math.sqrt(dt)
    _, _, s0, s1 = _coupled_ab(C + a0 * dt + b0 * sq, ph + a1 * dt + b1 * sq, gamma, floor)
    f = (dw * dw - dt) / (2.0 * sq)
    return nC + (s0 - b0) * f, nP + (s1 - b1) * f


@njit(cache=True, nogil=True)
def coupled_chunk(
    state, z, step0, n_total, dt, gamma, floor, method, c0, stop_below, active, overshoot,
    u_thr, a_thr, hit_u, hit_a, above, occ, ell, r, ex_lo, ex_hi, exit_idx, exit_side,
    cmax, trace_sum, trace_sq, trace_off,
):
    sq = math.sqrt(dt)
    nb, nc = z.shape
    buf = np.empty(nc + 1)
    base = 0 if step0 == 0 else step0 + 1
    for k in range(nb):
        C = state[k, 0]
        ph = state[k, 1]
        m = 0
        if step0 == 0:
            buf[0] = C
            m = 1
        for i in range(nc):
            if not active[k]:
                break
            C, ph = coupled_step(C, ph, sq * z[k, i], dt, gamma, floor, method)
            if C < 0.0 or C > 1.0 - floor:
                overshoot[k] += 1
                C = min(max(C, 0.0), 1.0 - floor)
            buf[m] = C
            m += 1
            if C < stop_below:
                active[k] = False
        state[k, 0] = C
        state[k, 1] = ph
        _observe_path(k, buf, m, base, n_total, dt, c0, u_thr, a_thr, hit_u, hit_a, above, occ,
                      ell, r, ex_lo, ex_hi, exit_idx, exit_side, cmax, trace_sum, trace_sq,
                      trace_off)


@njit(cache=True, nogil=True)
def _hom_ab(ce, cg, eph, gamma):
    # eph = exp(-i phi); x = <sigma+ e^{i phi} + sigma- e^{-i phi}>
    sg = math.sqrt(gamma)
    x = 2.0 * (eph * cg.conjugate() * ce).real
    q = 0.25 * x * x
    ae = 0.5 * gamma * (-ce - q * ce)
    ag = 0.5 * gamma * (x * eph * ce - q * cg)
    be = -0.5 * sg * x * ce
    bg = sg * (eph * ce - 0.5 * x * cg)
    return ae, ag, be, bg, x


@njit(cache=True, nogil=True)
def homodyne_amp_step(ce, cg, dw, dt, eph, gamma, method):
    """Amplitude-level homodyne step followed by renormalization.

    Returns the new amplitudes and the mean-field term ``x`` of the
    measurement current at the start of the step.
    """
    ae, ag, be, bg, x = _hom_ab(ce, cg, eph, gamma)
    ne = ce + ae * dt + be * dw
    ng = cg + ag * dt + bg * dw
    if method != EULER:
        sq = math.sqrt(dt)
        _, _, se, sgv, _ = _hom_ab(ce + ae * dt + be * sq, cg + ag * dt + bg * sq, eph, gamma)
        f = (dw * dw - dt) / (2.0 * sq)
        ne += (se - be) * f
        ng += (sgv - bg) * f
    nrm = math.sqrt(ne.real * ne.real + ne.imag * ne.imag + ng.real * ng.real + ng.imag * ng.imag)
    return ne / nrm, ng / nrm, x


@njit(cache=True, nogil=True)
def homodyne_amp_chunk(
    psi, z, step0, n_total, dt, eph, gamma, method, c0, stop_below, active, overshoot,
    u_thr, a_thr, hit_u, hit_a, above, occ, ell, r, ex_lo, ex_hi, exit_idx, exit_side,
    cmax, trace_sum, trace_sq, trace_off,
):
    sq = math.sqrt(dt)
    nb, nc = z.shape
    buf = np.empty(nc + 1)
    base = 0 if step0 == 0 else step0 + 1
    for k in range(nb):
        ce = psi[k, 0]
        cg = psi[k, 1]
        m = 0
        if step0 == 0:
            buf[0] = ce.real * ce.real + ce.imag * ce.imag
            m = 1
        for i in range(nc):
            if not active[k]:
                break
            ce, cg, _ = homodyne_amp_step(ce, cg, sq * z[k, i], dt, eph, gamma, method)
            C = ce.real * ce.real + ce.imag * ce.imag
            buf[m] = C
            m += 1
            if C < stop_below:
                active[k] = False
        psi[k, 0] = ce
        psi[k, 1] = cg
        _observe_path(k, buf, m, base, n_total, dt, c0, u_thr, a_thr, hit_u, hit_a, above, occ,
                      ell, r, ex_lo, ex_hi, exit_idx, exit_side, cmax, trace_sum, trace_sq,
                      trace_off)


@njit(cache=True, nogil=True)
def _het_ab(ce, cg, gamma):
    sg = math.sqrt(gamma)
    s = cg.conjugate() * ce  # <sigma->
    s2 = s.real * s.real + s.imag * s.imag
    ae = gamma * (-0.5 * ce - 0.5 * s2 * ce)
    ag = gamma * (s.conjugate() * ce - 0.5 * s2 * cg)
    ge = -sg * s * ce
    gg = sg * (ce - s * cg)
    return ae, ag, ge, gg, s


@njit(cache=True, nogil=True)
def heterodyne_amp_step(ce, cg, dwx, dwy, dt, gamma, method):
    """Amplitude-level heterodyne step (two real noises) plus renormalization.

    Diffusion columns are ``G/sqrt(2)`` and ``iG/sqrt(2)``.  Mixed double
    integrals use ``dWx dWy / 2`` (no Lévy area).
    """
    r2 = 1.0 / math.sqrt(2.0)
    ae, ag, ge, gg, s = _het_ab(ce, cg, gamma)
    bxe = ge * r2
    bxg = gg * r2
    bye = 1j * bxe
    byg = 1j * bxg
    be0 = ce + ae * dt
    bg0 = cg + ag * dt
    ne = be0 + bxe * dwx + bye * dwy
    ng = bg0 + bxg * dwx + byg * dwy
    if method != EULER:
        sq = math.sqrt(dt)
        dws = (dwx, dwy)
        for j1 in range(2):
            if j1 == 0:
                _, _, he, hg, _ = _het_ab(be0 + bxe * sq, bg0 + bxg * sq, gamma)
            else:
                _, _, he, hg, _ = _het_ab(be0 + bye * sq, bg0 + byg * sq, gamma)
            for j2 in range(2):
                if j1 == j2:
                    ito = 0.5 * (dws[j1] * dws[j1] - dt)
                else:
                    ito = 0.5 * dws[j1] * dws[j2]
                f = ito / sq
                if j2 == 0:
                    ne += (he * r2 - bxe) * f
                    ng += (hg * r2 - bxg) * f
                else:
                    ne += (1j * he * r2 - bye) * f
                    ng += (1j * hg * r2 - byg) * f
    nrm = math.sqrt(ne.real * ne.real + ne.imag * ne.imag + ng.real * ng.real + ng.imag * ng.imag)
    return ne / nrm, ng / nrm, s


@njit(cache=True, nogil=True)
def heterodyne_amp_chunk(
    psi, z, step0, n_total, dt, gamma, method, c0, stop_below, active, overshoot,
    u_thr, a_thr, hit_u, hit_a, above, occ, ell, r, ex_lo, ex_hi, exit_idx, exit_side,
    cmax, trace_sum, trace_sq, trace_off,
):
    sq = math.sqrt(dt)
    nb = z.shape[0]
    nc = z.shape[1]
    buf = np.empty(nc + 1)
    base = 0 if step0 == 0 else step0 + 1
    for k in range(nb):
        ce = psi[k, 0]
        cg = psi[k, 1]
        m = 0
        if step0 == 0:
            buf[0] = ce.real * ce.real + ce.imag * ce.imag
            m = 1
        for i in range(nc):
            if not active[k]:
                break
            ce, cg, _ = heterodyne_amp_step(ce, cg, sq * z[k, i, 0], sq * z[k, i, 1], dt, gamma,
                                            method)
            C = ce.real * ce.real + ce.imag * ce.imag
            buf[m] = C
            m += 1
            if C < stop_below:
                active[k] = False
        psi[k, 0] = ce
        psi[k, 1] = cg
        _observe_path(k, buf, m, base, n_total, dt, c0, u_thr, a_thr, hit_u, hit_a, above, occ,
                      ell, r, ex_lo, ex_hi, exit_idx, exit_side, cmax, trace_sum, trace_sq,
                      trace_off)


@njit(cache=True, nogil=True)
def photon_counting_step(C, u, dt, gamma):
    if u < gamma * C * dt:
        return 0.0, True
    decay = math.exp(-gamma * dt)
    return C * decay / (1.0 - C + C * decay), False


@njit(cache=True, nogil=True)
def photon_counting_chunk(
    state, uz, step0, n_total, dt, gamma, jump_idx, c0, stop_below, active, overshoot,
    u_thr, a_thr, hit_u, hit_a, above, occ, ell, r, ex_lo, ex_hi, exit_idx, exit_side,
    cmax, trace_sum, trace_sq, trace_off,
):
    nb, nc = uz.shape
    buf = np.empty(nc + 1)
    base = 0 if step0 == 0 else step0 + 1
    for k in range(nb):
        C = state[k]
        m = 0
        if step0 == 0:
            buf[0] = C
            m = 1
        for i in range(nc):
            if not active[k]:
                break
            C, jumped = photon_counting_step(C, uz[k, i], dt, gamma)
            if jumped and jump_idx[k] < 0:
                jump_idx[k] = step0 + i + 1
            buf[m] = C
            m += 1
            if C < stop_below:
                active[k] = False
        state[k] = C
        _observe_path(k, buf, m, base, n_total, dt, c0, u_thr, a_thr, hit_u, hit_a, above, occ,
                      ell, r, ex_lo, ex_hi, exit_idx, exit_side, cmax, trace_sum, trace_sq,
                      trace_off)


def milstein_population_paths(c0, increments, dt, kd, gamma=1.0, method=MILSTEIN):
    """Final values of many scalar paths driven by given increments (rows)."""
    return _final_values(float(c0), np.ascontiguousarray(increments, dtype=float), float(dt),
                         float(kd), float(gamma), int(method))


@njit(cache=True, nogil=True)
def _final_values(c0, dws, dt, kd, gamma, method):
    n, m = dws.shape
    out = np.empty(n)
    for k in range(n):
        C = c0
        for i in range(m):
            C = population_step(C, dws[k, i], dt, kd, gamma, method)
            C = min(max(C, 0.0), 1.0)
        out[k] = C
    return out
