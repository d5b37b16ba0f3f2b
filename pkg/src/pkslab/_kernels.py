"""Fused flux/update loops for the upwind and limited schemes (numba, optional).

The returned rate is the sum over faces of (F / eps) * D(mu) / eps with
mu = beta phi - f'(rho): the scheme flux rho v paired with v.
"""

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None

if njit is not None:

    @njit(cache=True)
    def _minmod(a, b):
        if a * b <= 0.0:
            return 0.0
        return a if abs(a) < abs(b) else b

    @njit(cache=True)
    def _carried(lo, hi, s_lo, s_hi, drift):
        # MUSCL face values; the slopes are zero for plain upwinding
        return lo + 0.5 * s_lo if drift > 0 else hi - 0.5 * s_hi

    @njit(cache=True)
    def update_1d(rho, phi, P, mu, beta, eps, h, dt, limited, out):
        n = rho.shape[0]
        s = np.zeros(n)
        if limited:
            for i in range(1, n - 1):
                s[i] = _minmod(rho[i] - rho[i - 1], rho[i + 1] - rho[i])
        for i in range(n):
            out[i] = rho[i]
        diss = 0.0
        ih = 1.0 / h
        c = dt * ih / eps
        for i in range(n - 1):
            drift = beta * (phi[i + 1] - phi[i]) * ih
            up = _carried(rho[i], rho[i + 1], s[i], s[i + 1], drift)
            F = up * drift - (P[i + 1] - P[i]) * ih
            out[i] -= c * F
            out[i + 1] += c * F
            diss += F * (mu[i + 1] - mu[i])
        return diss * ih / (eps * eps)

    @njit(cache=True)
    def update_2d(rho, phi, P, mu, beta, eps, hx, hy, dt, limited, out):
        nx, ny = rho.shape
        sx = np.zeros((nx, ny))
        sy = np.zeros((nx, ny))
        if limited:
            for i in range(nx):
                for j in range(ny):
                    if 0 < i < nx - 1:
                        sx[i, j] = _minmod(rho[i, j] - rho[i - 1, j], rho[i + 1, j] - rho[i, j])
                    if 0 < j < ny - 1:
                        sy[i, j] = _minmod(rho[i, j] - rho[i, j - 1], rho[i, j + 1] - rho[i, j])
        for i in range(nx):
            for j in range(ny):
                out[i, j] = rho[i, j]
        diss = 0.0
        cx = dt / (hx * eps)
        cy = dt / (hy * eps)
        for i in range(nx - 1):
            for j in range(ny):
                drift = beta * (phi[i + 1, j] - phi[i, j]) / hx
                up = _carried(rho[i, j], rho[i + 1, j], sx[i, j], sx[i + 1, j], drift)
                F = up * drift - (P[i + 1, j] - P[i, j]) / hx
                out[i, j] -= cx * F
                out[i + 1, j] += cx * F
                diss += F * (mu[i + 1, j] - mu[i, j]) / hx
        for i in range(nx):
            for j in range(ny - 1):
                drift = beta * (phi[i, j + 1] - phi[i, j]) / hy
                up = _carried(rho[i, j], rho[i, j + 1], sy[i, j], sy[i, j + 1], drift)
                F = up * drift - (P[i, j + 1] - P[i, j]) / hy
                out[i, j] -= cy * F
                out[i, j + 1] += cy * F
                diss += F * (mu[i, j + 1] - mu[i, j]) / hy
        return diss / (eps * eps)

    @njit(cache=True)
    def tridiag_factor(n, sigma, eps, h):
        """Thomas factorization of sigma - eps^2 Lap_h with Neumann rows."""
        c = eps * eps / (h * h)
        upper = np.empty(n)
        inv = np.empty(n)
        for i in range(n):
            diag = sigma + (c if i == 0 or i == n - 1 else 2.0 * c)
            if n == 1:
                diag = sigma
            if i > 0:
                diag += c * upper[i - 1]
            inv[i] = 1.0 / diag
            upper[i] = -c * inv[i]
        return upper, inv, c

    @njit(cache=True)
    def tridiag_solve(rhs, upper, inv, c, out):
        n = rhs.shape[0]
        out[0] = rhs[0] * inv[0]
        for i in range(1, n):
            out[i] = (rhs[i] + c * out[i - 1]) * inv[i]
        for i in range(n - 2, -1, -1):
            out[i] -= upper[i] * out[i + 1]

    @njit(cache=True)
    def run_power_1d(rho, m, coef, beta, sigma, eps, h, upper, inv, c, cfl, dt_max, dt_min,
                     limited, clip, t, t_target, max_steps):
        """Repeated steps of update_1d for f = coef rho^m / (m - 1).

        Returns (t, steps, dissipation, clipped_mass, status) with status 0
        on success, 1 for time step underflow and 2 for a non-finite state.
        """
        n = rho.shape[0]
        phi = np.empty(n)
        P = np.empty(n)
        mu = np.empty(n)
        out = np.empty(n)
        kp = coef * m / (m - 1.0)
        square = m == 3.0
        diss = 0.0
        clipped = 0.0
        steps = 0
        while t < t_target * (1.0 - 1e-14) and steps < max_steps:
            if rho.min() == rho.max():
                # constant data: same exact fast path as the spectral solver
                for i in range(n):
                    phi[i] = rho[i] / sigma
            else:
                tridiag_solve(rho, upper, inv, c, phi)
            diff = 0.0
            for i in range(n):
                r = rho[i] if rho[i] > 0.0 else 0.0
                fp = kp * (r * r if square else r ** (m - 1.0))
                P[i] = (m - 1.0) / m * r * fp
                mu[i] = beta * phi[i] - fp
                if (m - 1.0) * fp > diff:
                    diff = (m - 1.0) * fp
            adv = beta * max_abs_diff_1d(phi, h)
            dt = np.inf
            if diff > 0.0:
                dt = h * h * eps / (2.0 * diff)
            if adv > 0.0:
                dt = min(dt, h * eps / adv)
            dt = min(cfl * dt, dt_max, t_target - t)
            if dt < dt_min or not np.isfinite(dt):
                return t, steps, diss, clipped, 1
            rate = update_1d(rho, phi, P, mu, beta, eps, h, dt, limited, out)
            for i in range(n):
                v = out[i]
                if not np.isfinite(v):
                    return t, steps, diss, clipped, 2
                if clip and v < 0.0:
                    clipped -= v * h
                    v = 0.0
                rho[i] = v
            diss += dt * rate * h
            t += dt
            steps += 1
        return t, steps, diss, clipped, 0

    @njit(cache=True)
    def max_abs_diff_1d(u, h):
        m = 0.0
        for i in range(u.shape[0] - 1):
            d = abs(u[i + 1] - u[i])
            if d > m:
                m = d
        return m / h

    @njit(cache=True)
    def max_abs_diff_2d(u, hx, hy):
        nx, ny = u.shape
        mx = 0.0
        my = 0.0
        for i in range(nx):
            for j in range(ny):
                if i + 1 < nx:
                    d = abs(u[i + 1, j] - u[i, j])
                    if d > mx:
                        mx = d
                if j + 1 < ny:
                    d = abs(u[i, j + 1] - u[i, j])
                    if d > my:
                        my = d
        return max(mx / hx, my / hy)

AVAILABLE = njit is not None
