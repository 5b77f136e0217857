# Compiled inner loops for the two-level emitter.
#
# Frame: emitter ground |g> = index 0, excited |e> = index 1, rotating at the
# frame origin; H = delta |e><e| + (conj(W) |e><g| + W |g><e|) / 2 where W is
# the complex Rabi frequency.  Dissipators: sqrt(gamma) |g><e| (emission) and
# sqrt(2 gamma_d) |e><e| (pure dephasing at coherence rate gamma_d).
# Drive values at half steps are linear interpolations of the grid samples.
import numba
import numpy as np

from .._rng import nb_key, nb_uniform


@numba.njit(cache=True)
def _rhs(gg, ge, eg, ee, w, delta, gamma, gdeph):
    hw = 0.5 * w
    hwc = 0.5 * np.conj(w)
    dec = 0.5 * gamma + gdeph
    dgg = -1j * (hw * eg - hwc * ge) + gamma * ee
    dge = -1j * (hw * ee - hw * gg - delta * ge) - dec * ge
    deg = -1j * (hwc * gg + delta * eg - hwc * ee) - dec * eg
    dee = -1j * (hwc * ge - hw * eg) - gamma * ee
    return dgg, dge, deg, dee


@numba.njit(cache=True)
def bloch_rk4(rabi, dt, delta, gamma, gdeph):
    """Returns (excited population per grid point, integral of it, max trace error)."""
    n = rabi.size
    pop = np.empty(n)
    gg = 1.0 + 0j
    ge = 0j
    eg = 0j
    ee = 0j
    integral = 0.0
    trace_err = 0.0
    pop[0] = 0.0
    for k in range(n - 1):
        w0 = rabi[k]
        w1 = rabi[k + 1]
        wh = 0.5 * (w0 + w1)
        a1, b1, c1, d1 = _rhs(gg, ge, eg, ee, w0, delta, gamma, gdeph)
        h = 0.5 * dt
        a2, b2, c2, d2 = _rhs(gg + h * a1, ge + h * b1, eg + h * c1, ee + h * d1, wh, delta, gamma, gdeph)
        a3, b3, c3, d3 = _rhs(gg + h * a2, ge + h * b2, eg + h * c2, ee + h * d2, wh, delta, gamma, gdeph)
        a4, b4, c4, d4 = _rhs(gg + dt * a3, ge + dt * b3, eg + dt * c3, ee + dt * d3, w1, delta, gamma, gdeph)
        # the excited population integral rides along as an extra RK4 component
        integral += dt / 6.0 * (ee.real + 2.0 * (ee + h * d1).real + 2.0 * (ee + h * d2).real
                                + (ee + dt * d3).real)
        gg += dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        ge += dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
        eg += dt / 6.0 * (c1 + 2 * c2 + 2 * c3 + c4)
        ee += dt / 6.0 * (d1 + 2 * d2 + 2 * d3 + d4)
        pop[k + 1] = ee.real
        err = abs(gg + ee - 1.0)
        if err > trace_err:
            trace_err = err
    return pop, integral, trace_err


@numba.njit(cache=True)
def _rhs_counting(y, w, delta, gamma, gdeph, out):
    # y[n, :] = (gg, ge, eg, ee) of the n-emission conditional state
    nmax = y.shape[0]
    for n in range(nmax):
        gg, ge, eg, ee = y[n, 0], y[n, 1], y[n, 2], y[n, 3]
        dgg, dge, deg, dee = _rhs(gg, ge, eg, ee, w, delta, gamma, gdeph)
        dgg -= gamma * ee  # the emission feeds the next photon number instead
        if n > 0:
            dgg += gamma * y[n - 1, 3]
        out[n, 0] = dgg
        out[n, 1] = dge
        out[n, 2] = deg
        out[n, 3] = dee


@numba.njit(cache=True)
def counting_rk4(rabi, dt, delta, gamma, gdeph, nlevels):
    """Photon-number resolved master equation; returns P(n) incl. post-window decay.

    The last entry collects probability that would exceed ``nlevels - 1``.
    """
    y = np.zeros((nlevels + 1, 4), dtype=np.complex128)
    y[0, 0] = 1.0
    k1 = np.empty_like(y)
    k2 = np.empty_like(y)
    k3 = np.empty_like(y)
    k4 = np.empty_like(y)
    for k in range(rabi.size - 1):
        w0 = rabi[k]
        w1 = rabi[k + 1]
        wh = 0.5 * (w0 + w1)
        _rhs_counting(y, w0, delta, gamma, gdeph, k1)
        _rhs_counting(y + 0.5 * dt * k1, wh, delta, gamma, gdeph, k2)
        _rhs_counting(y + 0.5 * dt * k2, wh, delta, gamma, gdeph, k3)
        _rhs_counting(y + dt * k3, w1, delta, gamma, gdeph, k4)
        y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    p = np.zeros(nlevels + 1)
    for n in range(nlevels + 1):
        p[n] += y[n, 0].real
        if n + 1 <= nlevels:
            p[n + 1] += y[n, 3].real
        else:
            p[nlevels] += y[n, 3].real
    return p


@numba.njit(cache=True)
def nojump_propagators(rabi, dt, delta, gamma, gdeph):
    """Per-step RK4 maps of the non-Hermitian no-jump evolution."""
    n = rabi.size
    out = np.empty((n - 1, 2, 2), dtype=np.complex128)
    eye = np.eye(2, dtype=np.complex128)
    loss = 0.5 * (gamma + 2.0 * gdeph)
    for k in range(n - 1):
        w0 = rabi[k]
        w1 = rabi[k + 1]
        wh = 0.5 * (w0 + w1)
        a0 = np.empty((2, 2), dtype=np.complex128)
        ah = np.empty((2, 2), dtype=np.complex128)
        a1 = np.empty((2, 2), dtype=np.complex128)
        for a, w in ((a0, w0), (ah, wh), (a1, w1)):
            a[0, 0] = 0.0
            a[0, 1] = -0.5j * w
            a[1, 0] = -0.5j * np.conj(w)
            a[1, 1] = -1j * delta - loss
        m1 = a0
        m2 = ah @ (eye + 0.5 * dt * m1)
        m3 = ah @ (eye + 0.5 * dt * m2)
        m4 = a1 @ (eye + dt * m3)
        out[k] = eye + dt / 6.0 * (m1 + 2.0 * m2 + 2.0 * m3 + m4)
    return out


@numba.njit(cache=True, nogil=True)
def mcwf_run(props, t0, dt, gamma, gdeph, seed_key, traj_start, n_traj, max_records):
    """Waiting-time quantum jump trajectories.

    Trajectory ``i`` draws from the counter stream keyed by
    ``traj_start + i`` only, so any partition of trajectories across calls
    reproduces the same records.  Returns (counts, times[n_traj, max_records],
    overflow flag per trajectory).
    """
    counts = np.zeros(n_traj, dtype=np.int64)
    times = np.full((n_traj, max_records), np.nan)
    overflow = np.zeros(n_traj, dtype=np.bool_)
    p_rad = gamma / (gamma + 2.0 * gdeph)
    total = gamma + 2.0 * gdeph
    nsteps = props.shape[0]
    for i in range(n_traj):
        key = nb_key(seed_key, traj_start + i)
        c = 0
        r = nb_uniform(key, c)
        c += 1
        cg = 1.0 + 0j
        ce = 0j
        norm = 1.0
        for k in range(nsteps):
            m = props[k]
            ng = m[0, 0] * cg + m[0, 1] * ce
            ne = m[1, 0] * cg + m[1, 1] * ce
            new_norm = ng.real ** 2 + ng.imag ** 2 + ne.real ** 2 + ne.imag ** 2
            if new_norm <= r:
                radiative = nb_uniform(key, c) < p_rad
                c += 1
                if radiative:
                    frac = (norm - r) / (norm - new_norm) if norm > new_norm else 1.0
                    if counts[i] < max_records:
                        times[i, counts[i]] = t0 + dt * (k + frac)
                    else:
                        overflow[i] = True
                    counts[i] += 1
                    cg = 1.0 + 0j
                    ce = 0j
                else:
                    cg = 0j
                    ce = 1.0 + 0j
                norm = 1.0
                r = nb_uniform(key, c)
                c += 1
            else:
                cg = ng
                ce = ne
                norm = new_norm
        # drive is over: |c_e|^2 decays at the total jump rate, |c_g|^2 is frozen
        t_end = t0 + dt * nsteps
        pg = cg.real ** 2 + cg.imag ** 2
        pe = ce.real ** 2 + ce.imag ** 2
        if r > pg and pe > 0.0:
            t = t_end + np.log(pe / (r - pg)) / total
            while True:
                radiative = nb_uniform(key, c) < p_rad
                c += 1
                if radiative:
                    if counts[i] < max_records:
                        times[i, counts[i]] = t
                    else:
                        overflow[i] = True
                    counts[i] += 1
                    break
                t += -np.log(1.0 - nb_uniform(key, c)) / total
                c += 1
    return counts, times, overflow
