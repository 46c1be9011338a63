"""Split-step propagator kernels.

One step of width h centered at t_mid applies

    exp(-i D(t_mid) h/2) . exp(+i c(t_mid) gamma h sum_i sx_i) . exp(-i D(t_mid) h/2)

with D(t) = s E1 + (1-s)(1-lam) E0 the diagonal part, c(t) = (1-s) lam the
transverse weight, and s(t) = lam(t) = t/tau.  The transverse factor is
exact: the single-bit terms commute and each acts as the 2x2 rotation
cos(th) I + i sin(th) sx on amplitude pairs differing in that bit, with
th = c gamma h.  Every factor is unitary, so norms are preserved to
rounding for any step size.

Two engines implement the same arithmetic: a numba-jitted kernel (default,
about 3x faster here) and a pure-numpy one.  They agree to ~1e-15 but not
bitwise (different libm builds), so reproducibility contracts hold per
engine.
"""

from __future__ import annotations

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency
    HAVE_NUMBA = False

DEFAULT_ENGINE = "numba" if HAVE_NUMBA else "numpy"


def steps_for(tau: float, dt: float) -> tuple[int, float]:
    """Number of steps and actual step width covering [0, tau]."""
    nsteps = max(1, round(tau / dt))
    return nsteps, tau / nsteps


def propagate_numpy(e1, e0, gamma, tau, dt, psi):
    """Evolve the columns of psi (2^n, k) in place; returns psi."""
    nsteps, h = steps_for(tau, dt)
    dim, k = psi.shape
    n = dim.bit_length() - 1
    for step in range(nsteps):
        t = (step + 0.5) * h
        s = t / tau
        lam = t / tau
        diag = s * e1 + (1.0 - s) * (1.0 - lam) * e0
        c = (1.0 - s) * lam
        half = np.exp(-0.5j * h * diag)[:, None]
        psi *= half
        th = c * gamma * h
        ct, st = np.cos(th), 1j * np.sin(th)
        for bit in range(n):
            lo = 1 << bit
            v = psi.reshape(dim >> (bit + 1), 2, lo, k)
            a = v[:, 0].copy()
            v[:, 0] *= ct
            v[:, 0] += st * v[:, 1]
            v[:, 1] *= ct
            v[:, 1] += st * a
        psi *= half
    return psi


if HAVE_NUMBA:

    @numba.njit(cache=True, fastmath=False)
    def _kernel(e1, e0, gamma, tau, h, nsteps, psi):
        dim = psi.shape[0]
        k = psi.shape[1]
        n = 0
        d = dim
        while d > 1:
            d >>= 1
            n += 1
        half = np.empty(dim, dtype=np.complex128)
        for step in range(nsteps):
            t = (step + 0.5) * h
            s = t / tau
            lam = t / tau
            c = (1.0 - s) * lam
            for m in range(dim):
                dg = s * e1[m] + (1.0 - s) * (1.0 - lam) * e0[m]
                half[m] = np.exp(-0.5j * h * dg)
            for m in range(dim):
                hm = half[m]
                for j in range(k):
                    psi[m, j] *= hm
            th = c * gamma * h
            ct = np.cos(th)
            st = 1j * np.sin(th)
            for bit in range(n):
                lo = 1 << bit
                pair = lo << 1
                for base in range(0, dim, pair):
                    for off in range(lo):
                        i0 = base + off
                        i1 = i0 + lo
                        for j in range(k):
                            a = psi[i0, j]
                            b = psi[i1, j]
                            psi[i0, j] = ct * a + st * b
                            psi[i1, j] = ct * b + st * a
            for m in range(dim):
                hm = half[m]
                for j in range(k):
                    psi[m, j] *= hm
        return psi

    def propagate_numba(e1, e0, gamma, tau, dt, psi):
        nsteps, h = steps_for(tau, dt)
        return _kernel(e1, e0, float(gamma), float(tau), h, nsteps, psi)

else:  # pragma: no cover
    propagate_numba = None


def propagate(e1, e0, gamma, tau, dt, psi, engine: str | None = None):
    """Dispatch to the selected engine; psi (2^n, k) is evolved in place.

    tau == 0 leaves psi untouched (the identity evolution).
    """
    if engine is None:
        engine = DEFAULT_ENGINE
    if tau == 0.0:
        return psi
    if engine == "numba":
        if not HAVE_NUMBA:  # pragma: no cover
            raise ValueError("numba engine requested but numba is not importable")
        return propagate_numba(e1, e0, gamma, tau, dt, psi)
    if engine == "numpy":
        return propagate_numpy(e1, e0, gamma, tau, dt, psi)
    raise ValueError(f"unknown engine {engine!r}")
