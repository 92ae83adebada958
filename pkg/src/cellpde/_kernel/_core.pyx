# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled discrete-simulation kernel.

Same algorithm as ``_fallback.py``: Dormand-Prince RK45 with adaptive
steps for the overdamped spring dynamics, plus one stochastic division
draw per proliferation window.  Hot path for ensemble simulations.
"""

import numpy as np

cimport numpy as cnp

from libc.math cimport INFINITY, fabs, fmax, fmin, pow, sqrt

from .errors import IntegrationFailure

IMPL = "compiled"

cdef double C2 = 0.2, C3 = 0.3, C4 = 0.8, C5 = 8.0 / 9.0
cdef double A21 = 0.2
cdef double A31 = 3.0 / 40.0, A32 = 9.0 / 40.0
cdef double A41 = 44.0 / 45.0, A42 = -56.0 / 15.0, A43 = 32.0 / 9.0
cdef double A51 = 19372.0 / 6561.0, A52 = -25360.0 / 2187.0
cdef double A53 = 64448.0 / 6561.0, A54 = -212.0 / 729.0
cdef double A61 = 9017.0 / 3168.0, A62 = -355.0 / 33.0, A63 = 46732.0 / 5247.0
cdef double A64 = 49.0 / 176.0, A65 = -5103.0 / 18656.0
cdef double B1 = 35.0 / 384.0, B3 = 500.0 / 1113.0, B4 = 125.0 / 192.0
cdef double B5 = -2187.0 / 6784.0, B6 = 11.0 / 84.0
cdef double E1 = 71.0 / 57600.0, E3 = -71.0 / 16695.0, E4 = 71.0 / 1920.0
cdef double E5 = -17253.0 / 339200.0, E6 = 22.0 / 525.0, E7 = -1.0 / 40.0

cdef double MIN_FACTOR = 0.2
cdef double MAX_FACTOR = 5.0
cdef double SAFETY = 0.9


cdef inline void velocities(double* x, double* v, Py_ssize_t n, int law_id,
                            double k, double s, double eta,
                            bint pinned_right) nogil:
    cdef Py_ssize_t i
    cdef double f_left, f_right, ell
    ell = x[1] - x[0]
    f_left = k * (s - ell) if law_id == 0 else k * (1.0 / ell - s)
    v[0] = 0.0
    for i in range(1, n - 1):
        ell = x[i + 1] - x[i]
        f_right = k * (s - ell) if law_id == 0 else k * (1.0 / ell - s)
        v[i] = (f_left - f_right) / eta
        f_left = f_right
    v[n - 1] = 0.0 if pinned_right else f_left / eta


cdef class _Stepper:
    cdef double[::1] x, k1, k2, k3, k4, k5, k6, k7, y
    cdef Py_ssize_t n, cap
    cdef int law_id
    cdef double k, s, eta, rtol, atol, h
    cdef bint pinned_right, k1_valid

    def __init__(self, cnp.ndarray[double, ndim=1] x0, int law_id, double k,
                 double s, double eta, bint pinned_right, double rtol,
                 double atol, double h0):
        self.n = x0.shape[0]
        self.cap = max(self.n * 2, 64)
        cdef cnp.ndarray[double, ndim=1] buf = np.empty(self.cap)
        buf[:self.n] = x0
        self.x = buf
        self._alloc_work()
        self.law_id = law_id
        self.k = k
        self.s = s
        self.eta = eta
        self.pinned_right = pinned_right
        self.rtol = rtol
        self.atol = atol
        self.h = h0
        self.k1_valid = False

    cdef void _alloc_work(self):
        self.k1 = np.empty(self.cap)
        self.k2 = np.empty(self.cap)
        self.k3 = np.empty(self.cap)
        self.k4 = np.empty(self.cap)
        self.k5 = np.empty(self.cap)
        self.k6 = np.empty(self.cap)
        self.k7 = np.empty(self.cap)
        self.y = np.empty(self.cap)

    cdef void _grow(self):
        cdef cnp.ndarray[double, ndim=1] buf
        buf = np.empty(self.cap * 2)
        buf[:self.n] = np.asarray(self.x[:self.n])
        self.x = buf
        self.cap = self.cap * 2
        self._alloc_work()

    cdef int advance(self, double t, double t_end) except -1:
        """Integrate mechanics in place from t to t_end."""
        cdef double* x = &self.x[0]
        cdef double* k1 = &self.k1[0]
        cdef double* k2 = &self.k2[0]
        cdef double* k3 = &self.k3[0]
        cdef double* k4 = &self.k4[0]
        cdef double* k5 = &self.k5[0]
        cdef double* k6 = &self.k6[0]
        cdef double* k7 = &self.k7[0]
        cdef double* y = &self.y[0]
        cdef Py_ssize_t i, n = self.n
        cdef double h, h_step, err_norm, scale, e, factor, yi
        cdef bint truncated
        if t_end <= t:
            return 0
        if not self.k1_valid:
            velocities(x, k1, n, self.law_id, self.k, self.s, self.eta,
                       self.pinned_right)
            self.k1_valid = True
        h = self.h
        while t < t_end - 1e-14 * fmax(1.0, fabs(t_end)):
            truncated = h > t_end - t
            h_step = fmin(h, t_end - t)
            if h_step < 1e-14 * fmax(1.0, fabs(t)):
                raise IntegrationFailure(t, f"step-size underflow at t = {t:.6g}")
            with nogil:
                for i in range(n):
                    y[i] = x[i] + h_step * A21 * k1[i]
                velocities(y, k2, n, self.law_id, self.k, self.s, self.eta,
                           self.pinned_right)
                for i in range(n):
                    y[i] = x[i] + h_step * (A31 * k1[i] + A32 * k2[i])
                velocities(y, k3, n, self.law_id, self.k, self.s, self.eta,
                           self.pinned_right)
                for i in range(n):
                    y[i] = x[i] + h_step * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
                velocities(y, k4, n, self.law_id, self.k, self.s, self.eta,
                           self.pinned_right)
                for i in range(n):
                    y[i] = x[i] + h_step * (A51 * k1[i] + A52 * k2[i]
                                            + A53 * k3[i] + A54 * k4[i])
                velocities(y, k5, n, self.law_id, self.k, self.s, self.eta,
                           self.pinned_right)
                for i in range(n):
                    y[i] = x[i] + h_step * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i]
                                            + A64 * k4[i] + A65 * k5[i])
                velocities(y, k6, n, self.law_id, self.k, self.s, self.eta,
                           self.pinned_right)
                for i in range(n):
                    y[i] = x[i] + h_step * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i]
                                            + B5 * k5[i] + B6 * k6[i])
                velocities(y, k7, n, self.law_id, self.k, self.s, self.eta,
                           self.pinned_right)
                err_norm = 0.0
                for i in range(n):
                    e = h_step * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i]
                                  + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
                    yi = fmax(fabs(x[i]), fabs(y[i]))
                    scale = self.atol + self.rtol * yi
                    err_norm += (e / scale) * (e / scale)
                err_norm = sqrt(err_norm / n)
            if err_norm <= 1.0:
                t += h_step
                for i in range(n):
                    x[i] = y[i]
                    k1[i] = k7[i]
                if err_norm == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = fmin(MAX_FACTOR, SAFETY * pow(err_norm, -0.2))
                if truncated:
                    h = fmax(h, h_step * factor)
                else:
                    h = h_step * factor
            else:
                h = h_step * fmax(MIN_FACTOR, SAFETY * pow(err_norm, -0.2))
        self.h = h
        return 0

    cdef bint ordered(self):
        cdef Py_ssize_t i
        for i in range(self.n - 1):
            if self.x[i + 1] <= self.x[i]:
                return False
        return True

    cdef void insert(self, Py_ssize_t cell):
        """Insert the midpoint of cell ``cell`` as a new node."""
        cdef Py_ssize_t i
        cdef double mid
        if self.n + 1 > self.cap:
            self._grow()
        mid = 0.5 * (self.x[cell] + self.x[cell + 1])
        for i in range(self.n, cell + 1, -1):
            self.x[i] = self.x[i - 1]
        self.x[cell + 1] = mid
        self.n += 1
        self.k1_valid = False

    cdef double draw(self, int prolif_id, double beta, double law_param,
                     double window, double u_event, double u_select):
        """One division draw; returns 1.0 if a division occurred."""
        cdef Py_ssize_t i, n_cells = self.n - 1
        cdef double total = 0.0, g, ell, target, cum
        cdef double g_max = 1.0 / window
        for i in range(n_cells):
            ell = self.x[i + 1] - self.x[i]
            if prolif_id == 1:
                g = beta * (1.0 - 1.0 / (law_param * ell))
                if g < 0.0:
                    g = 0.0
            else:
                g = beta if ell >= law_param else 0.0
            if g > g_max:
                g = g_max
            total += g
        if total <= 0.0 or u_event >= fmin(1.0, total * window):
            return 0.0
        target = u_select * total
        cum = 0.0
        for i in range(n_cells):
            ell = self.x[i + 1] - self.x[i]
            if prolif_id == 1:
                g = beta * (1.0 - 1.0 / (law_param * ell))
                if g < 0.0:
                    g = 0.0
            else:
                g = beta if ell >= law_param else 0.0
            if g > g_max:
                g = g_max
            cum += g
            if target < cum or i == n_cells - 1:
                self.insert(i)
                break
        return 1.0


def simulate_path(cnp.ndarray[double, ndim=1] x0, double t0,
                  cnp.ndarray[double, ndim=1] save_times, int law_id,
                  double k, double s, double eta, bint pinned_right,
                  int prolif_id, double beta, double law_param,
                  double window, long n_windows, double rtol, double atol,
                  cnp.ndarray[double, ndim=1] u_event,
                  cnp.ndarray[double, ndim=1] u_select):
    """Run one realization; returns the list of saved position arrays."""
    cdef double t = t0, ts, tw, t_next, span
    cdef Py_ssize_t js = 0
    cdef long jw = 1
    cdef list saved = []
    span = save_times[save_times.shape[0] - 1] - t0
    cdef _Stepper st = _Stepper(x0, law_id, k, s, eta, pinned_right, rtol,
                                atol, fmin(1e-3, span) if span > 0 else 1e-3)
    if fabs(save_times[0] - t0) <= 1e-9 * fmax(1.0, fabs(t0)):
        saved.append(np.asarray(st.x[:st.n]).copy())
        js = 1
    while js < save_times.shape[0]:
        ts = save_times[js]
        if prolif_id != 0 and jw <= n_windows:
            tw = t0 + jw * window
        else:
            tw = INFINITY
        t_next = fmin(ts, tw)
        st.advance(t, t_next)
        t = t_next
        if not st.ordered():
            raise IntegrationFailure(t, f"node ordering lost at t = {t:.6g}")
        if tw <= ts + 1e-9 * fmax(1.0, fabs(ts)) and tw != INFINITY:
            st.draw(prolif_id, beta, law_param, window,
                    u_event[jw - 1], u_select[jw - 1])
            jw += 1
        if fabs(t - ts) <= 1e-9 * fmax(1.0, fabs(ts)):
            saved.append(np.asarray(st.x[:st.n]).copy())
            js += 1
    return saved
