"""Independent reference solutions used by the tests (scipy ODE integration on polylines)."""

import numpy as np
from scipy.integrate import solve_ivp


def polyline_ode(sigma, points, times, xi, drift=None, rtol=1e-12, atol=1e-12):
    """Classical solution of ``y' = b(y) + sigma(y) x'`` along a polyline, at the grid times.

    ``sigma(y)`` returns an ``(m, d)`` matrix for a single point; ``drift`` maps ``(m,) -> (m,)``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    y = np.asarray(xi, dtype=float).copy()
    out = [y.copy()]
    for k in range(len(times) - 1):
        dt = times[k + 1] - times[k]
        vel = (pts[k + 1] - pts[k]) / dt

        def rhs(_, z):
            f = np.asarray(sigma(z)) @ vel
            return f + drift(z) if drift is not None else f

        sol = solve_ivp(rhs, (times[k], times[k + 1]), y, method="DOP853", rtol=rtol, atol=atol)
        y = sol.y[:, -1]
        out.append(y.copy())
    return np.array(out)


def smooth_polyline(rng, n, d, amp=1.0, modes=3):
    """Points of a random smooth curve (few Fourier modes) on ``n`` uniform times in [0, 1]."""
    t = np.linspace(0, 1, n)
    x = np.zeros((n, d))
    for j in range(1, modes + 1):
        c = rng.standard_normal((2, d)) * amp / j
        x += np.sin(np.pi * j * t)[:, None] * c[0] + (1 - np.cos(np.pi * j * t))[:, None] * c[1]
    return t, x
