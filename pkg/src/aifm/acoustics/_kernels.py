"""Compiled time-stepping loops for the scalar wave equation.

Fields live in arrays padded by ``r = order // 2`` ghost layers per side.
Boundary codes per face (x1 lo, x1 hi, x2 lo, x2 hi, x3 lo, x3 hi):
0 = Neumann (even reflection about the boundary node), 1 = Dirichlet (the
boundary node is pinned to zero and the reflection is odd).

The adjoint loop is the exact transpose of the forward recurrence under the
trace product ``sum(dt * d * e)`` and the plain Euclidean volume product.
The reflected Laplacian is self-adjoint only in the trapezoid-weighted
product (weight 1/2 per Neumann boundary index), so the adjoint carries
``p = W^-1 q`` and folds ``W`` back in when accumulating the gradient.
"""

import math

import numpy as np
from numba import njit

# Beyond (pi q0 tau)^2 = 50 the wavelet is below 2e-22 of its peak and is
# treated as exactly zero. Forward and adjoint share the cut, so transposition
# stays exact.
RICKER_CUT_ARG = 50.0


def laplacian_coefficients(order: int) -> np.ndarray:
    """Centered second-derivative weights c_0..c_r (unit spacing)."""
    table = {
        2: [-2.0, 1.0],
        4: [-5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0],
        8: [-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0],
    }
    if order not in table:
        raise ValueError(f"spatial order must be one of {sorted(table)}, got {order}")
    return np.array(table[order])


_UPDATE_TEMPLATE = """
def update(X, Y, Z, out, K, n1, n2, n3, c):
    # out <- 2 X + K * L(Y) - Z on the interior; L is the unit-spacing Laplacian.
    for i in range(n1):
        ii = i + {r}
        for j in range(n2):
            jj = j + {r}
            x = X[ii, jj]; y = Y[ii, jj]; z = Z[ii, jj]; o = out[ii, jj]; kk = K[i, j]
{rows}
            for l in range(n3):
                ll = l + {r}
                lap = 3.0 * c[0] * y[ll]{terms}
                o[ll] = 2.0 * x[ll] + kk[l] * lap - z[ll]
"""


def _make_update(order):
    r = order // 2
    rows, terms = [], []
    for k in range(1, r + 1):
        rows.append(
            f"            a{k} = Y[ii - {k}, jj]; b{k} = Y[ii + {k}, jj]; "
            f"d{k} = Y[ii, jj - {k}]; e{k} = Y[ii, jj + {k}]"
        )
        terms.append(
            f" + c[{k}] * (a{k}[ll] + b{k}[ll] + d{k}[ll] + e{k}[ll] + y[ll - {k}] + y[ll + {k}])"
        )
    code = _UPDATE_TEMPLATE.format(r=r, rows="\n".join(rows), terms="".join(terms))
    ns = {}
    exec(code, ns)
    return njit(cache=False, fastmath=True)(ns["update"])


UPDATES = {order: _make_update(order) for order in (2, 4, 8)}


@njit(cache=True)
def fill_ghosts(P, r, n1, n2, n3, bc):
    for k in range(1, r + 1):
        # axis 0
        s = -1.0 if bc[0] == 1 else 1.0
        for j in range(n2):
            for l in range(n3):
                P[r - k, j + r, l + r] = s * P[r + k, j + r, l + r]
        s = -1.0 if bc[1] == 1 else 1.0
        top = r + n1 - 1
        for j in range(n2):
            for l in range(n3):
                P[top + k, j + r, l + r] = s * P[top - k, j + r, l + r]
        # axis 1
        s = -1.0 if bc[2] == 1 else 1.0
        for i in range(n1):
            for l in range(n3):
                P[i + r, r - k, l + r] = s * P[i + r, r + k, l + r]
        s = -1.0 if bc[3] == 1 else 1.0
        top = r + n2 - 1
        for i in range(n1):
            for l in range(n3):
                P[i + r, top + k, l + r] = s * P[i + r, top - k, l + r]
        # axis 2
        s = -1.0 if bc[4] == 1 else 1.0
        for i in range(n1):
            for j in range(n2):
                P[i + r, j + r, r - k] = s * P[i + r, j + r, r + k]
        s = -1.0 if bc[5] == 1 else 1.0
        top = r + n3 - 1
        for i in range(n1):
            for j in range(n2):
                P[i + r, j + r, top + k] = s * P[i + r, j + r, top - k]


@njit(cache=True)
def zero_dirichlet(P, r, n1, n2, n3, bc):
    if bc[0] == 1:
        P[r, :, :] = 0.0
    if bc[1] == 1:
        P[r + n1 - 1, :, :] = 0.0
    if bc[2] == 1:
        P[:, r, :] = 0.0
    if bc[3] == 1:
        P[:, r + n2 - 1, :] = 0.0
    if bc[4] == 1:
        P[:, :, r] = 0.0
    if bc[5] == 1:
        P[:, :, r + n3 - 1] = 0.0


@njit(inline="always")
def _lap(P, i, j, l, coef, r):
    acc = 3.0 * coef[0] * P[i, j, l]
    for k in range(1, r + 1):
        acc += coef[k] * (
            P[i - k, j, l] + P[i + k, j, l]
            + P[i, j - k, l] + P[i, j + k, l]
            + P[i, j, l - k] + P[i, j, l + k]
        )
    return acc


@njit(inline="always")
def _ricker(tau, pq):
    arg = (pq * tau) ** 2
    if arg >= 50.0:
        return 0.0
    return (1.0 - 2.0 * arg) * math.exp(-arg)


@njit(cache=True)
def _sample(Pf, rec_pad, rec_w, out, col):
    for s in range(rec_pad.shape[0]):
        acc = 0.0
        for k in range(8):
            acc += rec_w[s, k] * Pf[rec_pad[s, k]]
        out[s, col] = acc


@njit(cache=True)
def _band(shift, t, tcut):
    lo = np.searchsorted(shift, t - tcut, side="left")
    hi = np.searchsorted(shift, t + tcut, side="right")
    return lo, hi


@njit(cache=True)
def _stencil_forward(Pc, Pp, Pn, r, n1, n2, n3, coef, k2, a, b, sponge):
    # Pn <- a * (2 Pc + k2 * L Pc) - b * Pp   (k2 = dt^2 c^2 / h^2 per node)
    for i in range(n1):
        ii = i + r
        for j in range(n2):
            jj = j + r
            for l in range(n3):
                ll = l + r
                v = 2.0 * Pc[ii, jj, ll] + k2[i, j, l] * _lap(Pc, ii, jj, ll, coef, r)
                if sponge:
                    Pn[ii, jj, ll] = a[i, j, l] * v - b[i, j, l] * Pp[ii, jj, ll]
                else:
                    Pn[ii, jj, ll] = v - Pp[ii, jj, ll]


@njit(cache=True, nogil=True)
def forward_loop(update, nsteps, dt, pq, tcut, coef, bc, n1, n2, n3, k2, a, b, sponge,
                 src_pad, src_unpad, src_shift, src_w, fsrc, rec_pad, rec_w,
                 snap_steps, snaps, energy, w_over_c2, wgt, inv_h2, want_energy):
    """Leapfrog from zero initial data; returns (traces, first blown-up step or -1).

    traces[:, n] = S u^n for n = 0..nsteps-1; u^0 = u^-1 = 0. Source points are
    visited in arrival order so each step touches only the band where the
    wavelet is nonzero.
    """
    r = coef.shape[0] - 1
    Pp = np.zeros((n1 + 2 * r, n2 + 2 * r, n3 + 2 * r))
    Pc = np.zeros_like(Pp)
    Pn = np.zeros_like(Pp)
    traces = np.zeros((rec_pad.shape[0], nsteps))
    nsnap = 0
    for n in range(nsteps):
        _sample(Pc.reshape(Pc.size), rec_pad, rec_w, traces, n)
        if nsnap < snap_steps.shape[0] and snap_steps[nsnap] == n:
            snaps[nsnap] = Pc[r:r + n1, r:r + n2, r:r + n3]
            nsnap += 1
        if n == nsteps - 1:
            break
        fill_ghosts(Pc, r, n1, n2, n3, bc)
        if sponge:
            _stencil_forward(Pc, Pp, Pn, r, n1, n2, n3, coef, k2, a, b, sponge)
        else:
            update(Pc, Pc, Pp, Pn, k2, n1, n2, n3, coef)
        t = n * dt
        lo, hi = _band(src_shift, t, tcut)
        Pnf = Pn.reshape(Pn.size)
        for q in range(lo, hi):
            fv = fsrc[src_unpad[q]]
            if fv != 0.0:
                Pnf[src_pad[q]] += src_w[q] * _ricker(t - src_shift[q], pq) * fv
        zero_dirichlet(Pn, r, n1, n2, n3, bc)
        if want_energy:
            energy[n] = _energy(Pc, Pn, r, n1, n2, n3, coef, w_over_c2, wgt, dt, inv_h2)
        if n % 64 == 0:
            if not np.isfinite(Pn[r:r + n1, r:r + n2, r:r + n3].sum()):
                return traces, n + 1
        Pp, Pc, Pn = Pc, Pn, Pp
    if not np.all(np.isfinite(traces)):
        return traces, nsteps - 1
    return traces, -1


@njit(cache=True)
def _energy(Pc, Pn, r, n1, n2, n3, coef, w_over_c2, w, dt, inv_h2):
    # E^{n+1/2} = 1/2 <Du, Du>_{W/c^2} - 1/2 <u^{n+1}, L u^n>_W ; Pc ghosts already filled.
    kin = 0.0
    pot = 0.0
    for i in range(n1):
        for j in range(n2):
            for l in range(n3):
                un = Pn[i + r, j + r, l + r]
                d = (un - Pc[i + r, j + r, l + r]) / dt
                kin += w_over_c2[i, j, l] * d * d
                pot -= w[i, j, l] * un * _lap(Pc, i + r, j + r, l + r, coef, r)
    return 0.5 * kin + 0.5 * pot * inv_h2


@njit(cache=True)
def _stencil_adjoint(Pq1, Pq2, Pout, T, r, n1, n2, n3, coef, k2h, a, b):
    # Pout <- 2 a p1 + (dt^2/h^2) L(T) - b p2, with T = c^2 a p1 (ghosts filled).
    for i in range(n1):
        ii = i + r
        for j in range(n2):
            jj = j + r
            for l in range(n3):
                ll = l + r
                lap = k2h * _lap(T, ii, jj, ll, coef, r)
                Pout[ii, jj, ll] = 2.0 * a[i, j, l] * Pq1[ii, jj, ll] + lap - b[i, j, l] * Pq2[ii, jj, ll]


@njit(cache=True, nogil=True)
def adjoint_loop(update, nsteps, dt, pq, tcut, coef, bc, n1, n2, n3, k2, kadj, c2a, a, b,
                 sponge, uniform, src_pad, src_unpad, src_shift, src_w, rec_pad, inj_w, resid):
    """Backward sweep; ``resid`` is (nrec, nsteps) already weighted by dt.

    p^m = W^-1 S^T e^m + 2 a p^{m+1} + dt^2 L(c^2 a p^{m+1}) - b p^{m+2}, and the
    gradient collects dt^2 c^2 a W lambda^{m-1} p^m. ``inj_w`` is the trilinear
    weight times W^-1 at each corner; ``src_w`` is dt^2 c^2 a W in arrival order.
    Returns (gradient (n1, n2, n3), first blown-up step or -1).
    """
    r = coef.shape[0] - 1
    shape = (n1 + 2 * r, n2 + 2 * r, n3 + 2 * r)
    P2 = np.zeros(shape)  # p^{m+2}
    P1 = np.zeros(shape)  # p^{m+1}
    P0 = np.zeros(shape)  # p^m
    T = np.zeros(shape)
    grad = np.zeros(n1 * n2 * n3)
    nrec = rec_pad.shape[0]
    for m in range(nsteps - 1, 0, -1):
        if m <= nsteps - 2:
            if sponge:
                for i in range(n1):
                    for j in range(n2):
                        for l in range(n3):
                            T[i + r, j + r, l + r] = c2a[i, j, l] * P1[i + r, j + r, l + r]
                fill_ghosts(T, r, n1, n2, n3, bc)
                _stencil_adjoint(P1, P2, P0, T, r, n1, n2, n3, coef, kadj[0, 0, 0], a, b)
            elif uniform:
                # L(c^2 p) = c^2 L(p) when c is constant
                fill_ghosts(P1, r, n1, n2, n3, bc)
                update(P1, P1, P2, P0, k2, n1, n2, n3, coef)
            else:
                for i in range(n1):
                    for j in range(n2):
                        for l in range(n3):
                            T[i + r, j + r, l + r] = c2a[i, j, l] * P1[i + r, j + r, l + r]
                fill_ghosts(T, r, n1, n2, n3, bc)
                update(P1, T, P2, P0, kadj, n1, n2, n3, coef)
        else:
            P0[:, :, :] = 0.0
        P0f = P0.reshape(P0.size)
        for s in range(nrec):
            e = resid[s, m]
            if e != 0.0:
                for k in range(8):
                    P0f[rec_pad[s, k]] += inj_w[s, k] * e
        zero_dirichlet(P0, r, n1, n2, n3, bc)
        t = (m - 1) * dt
        lo, hi = _band(src_shift, t, tcut)
        for q in range(lo, hi):
            grad[src_unpad[q]] += src_w[q] * _ricker(t - src_shift[q], pq) * P0f[src_pad[q]]
        if m % 64 == 0:
            if not np.isfinite(P0[r:r + n1, r:r + n2, r:r + n3].sum()):
                return grad.reshape((n1, n2, n3)), m
        P2, P1, P0 = P1, P0, P2
    if not np.all(np.isfinite(grad)):
        return grad.reshape((n1, n2, n3)), 0
    return grad.reshape((n1, n2, n3)), -1
