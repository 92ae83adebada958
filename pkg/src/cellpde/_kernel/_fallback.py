"""Pure-NumPy implementation of the discrete-simulation kernel.

Mirrors the compiled extension in ``_core.pyx``: an adaptive
Dormand-Prince RK45 stepper for the overdamped spring dynamics, with
stochastic cell-division events applied at the end of each proliferation
window.  Used automatically when the extension is unavailable; kept in
sync with the compiled kernel (the parity benchmark compares both).
"""

import numpy as np

from .errors import IntegrationFailure

IMPL = "python"

# Dormand-Prince 5(4) tableau.
_C = (0.2, 0.3, 0.8, 8.0 / 9.0, 1.0)
_A = (
    (0.2,),
    (3.0 / 40.0, 9.0 / 40.0),
    (44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0),
    (19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0),
    (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0),
)
_B = (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0)
_E = (
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)

_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_SAFETY = 0.9


def _velocities(x, law_id, k, s, eta, pinned_right):
    ell = np.diff(x)
    if law_id == 0:
        f = k * (s - ell)
    else:
        f = k * (1.0 / ell - s)
    v = np.empty_like(x)
    v[0] = 0.0
    v[1:-1] = (f[:-1] - f[1:]) / eta
    v[-1] = 0.0 if pinned_right else f[-1] / eta
    return v


def _rates(ell, prolif_id, beta, law_param, window):
    if prolif_id == 1:
        g = beta * (1.0 - 1.0 / (law_param * ell))
        g = np.clip(g, 0.0, 1.0 / window)
    else:
        g = np.where(ell >= law_param, beta, 0.0)
        g = np.minimum(g, 1.0 / window)
    return g


def _advance(x, t, t_end, h, law_id, k, s, eta, pinned_right, rtol, atol, k1=None):
    """Integrate the mechanics from t to t_end in place; returns (h, k1)."""
    if t_end <= t:
        return h, k1
    if k1 is None:
        k1 = _velocities(x, law_id, k, s, eta, pinned_right)
    ks = [None] * 7
    while t < t_end - 1e-14 * max(1.0, abs(t_end)):
        truncated = h > t_end - t
        h_step = min(h, t_end - t)
        if h_step < 1e-14 * max(1.0, abs(t)):
            raise IntegrationFailure(t)
        ks[0] = k1
        y = x
        for stage in range(5):
            acc = _A[stage][0] * ks[0]
            for m in range(1, stage + 1):
                acc = acc + _A[stage][m] * ks[m]
            ks[stage + 1] = _velocities(
                y + h_step * acc, law_id, k, s, eta, pinned_right
            )
        y_new = y + h_step * (
            _B[0] * ks[0]
            + _B[2] * ks[2]
            + _B[3] * ks[3]
            + _B[4] * ks[4]
            + _B[5] * ks[5]
        )
        k7 = _velocities(y_new, law_id, k, s, eta, pinned_right)
        err = h_step * (
            _E[0] * ks[0]
            + _E[2] * ks[2]
            + _E[3] * ks[3]
            + _E[4] * ks[4]
            + _E[5] * ks[5]
            + _E[6] * k7
        )
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
        if err_norm <= 1.0:
            t += h_step
            x[:] = y_new
            k1 = k7
            if err_norm == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = min(_MAX_FACTOR, _SAFETY * err_norm ** -0.2)
            if truncated:
                h = max(h, h_step * factor)
            else:
                h = h_step * factor
        else:
            h = h_step * max(_MIN_FACTOR, _SAFETY * err_norm ** -0.2)
    return h, k1


def simulate_path(
    x0,
    t0,
    save_times,
    law_id,
    k,
    s,
    eta,
    pinned_right,
    prolif_id,
    beta,
    law_param,
    window,
    n_windows,
    rtol,
    atol,
    u_event,
    u_select,
):
    """Run one realization; returns the list of saved position arrays.

    ``prolif_id``: 0 none, 1 logistic (law_param = carrying capacity),
    2 piecewise (law_param = threshold length).  ``u_event``/``u_select``
    are pre-drawn uniforms, one pair per proliferation window.
    """
    x = np.array(x0, dtype=float)
    saved = []
    t = t0
    h = min(1e-3, save_times[-1] - t0) if save_times[-1] > t0 else 1e-3
    k1 = None
    js = 0
    if abs(save_times[0] - t0) <= 1e-9 * max(1.0, abs(t0)):
        saved.append(x.copy())
        js = 1
    jw = 1  # next window end index (window ends at t0 + jw*window)
    while js < len(save_times):
        ts = save_times[js]
        tw = t0 + jw * window if (prolif_id != 0 and jw <= n_windows) else np.inf
        t_next = min(ts, tw)
        h, k1 = _advance(
            x, t, t_next, h, law_id, k, s, eta, pinned_right, rtol, atol, k1
        )
        t = t_next
        if np.any(np.diff(x) <= 0.0):
            raise IntegrationFailure(t)
        if tw <= ts + 1e-9 * max(1.0, abs(ts)) and tw < np.inf:
            g = _rates(np.diff(x), prolif_id, beta, law_param, window)
            total = float(np.sum(g)) * window
            if u_event[jw - 1] < min(1.0, total):
                target = u_select[jw - 1] * float(np.sum(g))
                idx = int(np.searchsorted(np.cumsum(g), target, side="right"))
                idx = min(idx, len(g) - 1)
                mid = 0.5 * (x[idx] + x[idx + 1])
                x = np.insert(x, idx + 1, mid)
                k1 = None  # state dimension changed
            jw += 1
        if abs(t - ts) <= 1e-9 * max(1.0, abs(ts)):
            saved.append(x.copy())
            js += 1
    return saved
