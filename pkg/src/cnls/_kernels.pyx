# cython: language_level=3
"""Compiled inner-loop kernels; see ``cnls._kernels_py`` for the reference
numpy versions with the same signatures."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, fabs, floor, hypot, pow, sin, sqrt

cnp.import_array()

cdef double MODULUS_FLOOR = 1e-300
cdef double PHASE_FLOOR = 1e-12
cdef double SQUARE_LO = 1e-290
cdef double SQUARE_HI = 1e290


# Powers of the modulus: small integer exponents (the common case) are
# repeated multiplication, branching once per row; others go through pow.
cdef struct Power:
    bint integer
    int k
    double e


cdef Power _power(double e) noexcept nogil:
    cdef Power pw
    pw.e = e
    pw.integer = e == floor(e) and fabs(e) <= 64
    pw.k = <int>e if pw.integer else 0
    return pw


cdef inline double _ipow(double x, int k) noexcept nogil:
    cdef double out = 1.0
    cdef bint neg = k < 0
    if neg:
        k = -k
    while k:
        if k & 1:
            out *= x
        x *= x
        k >>= 1
    return 1.0 / out if neg else out


cdef inline double _eval(Power pw, double amp) noexcept nogil:
    if pw.integer:
        return _ipow(amp, pw.k)
    return pow(amp, pw.e)


cdef void _moduli(const double complex[:, ::1] phi, double[:, ::1] amp) noexcept nogil:
    """|phi| via sqrt(re^2 + im^2), falling back to hypot where the square under- or overflows."""
    cdef Py_ssize_t j, x
    cdef double re, im, s
    for j in range(phi.shape[0]):
        for x in range(phi.shape[1]):
            re = phi[j, x].real
            im = phi[j, x].imag
            s = re * re + im * im
            if SQUARE_LO < s < SQUARE_HI:
                amp[j, x] = sqrt(s)
            else:
                amp[j, x] = hypot(re, im)


cdef void _fill_power(const double[::1] amp, Power pw, double[::1] out) noexcept nogil:
    """out = amp^e, branching once per row instead of once per point."""
    cdef Py_ssize_t x, n = amp.shape[0]
    cdef double v
    if not pw.integer:
        for x in range(n):
            out[x] = pow(amp[x], pw.e)
    elif pw.k == 0:
        for x in range(n):
            out[x] = 1.0
    elif pw.k == 1:
        for x in range(n):
            out[x] = amp[x]
    elif pw.k == 2:
        for x in range(n):
            out[x] = amp[x] * amp[x]
    elif pw.k == 4:
        for x in range(n):
            v = amp[x] * amp[x]
            out[x] = v * v
    elif pw.k == 6:
        for x in range(n):
            v = amp[x] * amp[x]
            out[x] = v * v * v
    else:
        for x in range(n):
            out[x] = _ipow(amp[x], pw.k)


cdef void _multiplier(const double[:, ::1] amp, const double[::1] mu, const double[:, ::1] beta,
                      double p, double[:, ::1] out, double[:, ::1] cross,
                      double[::1] own) noexcept nogil:
    """Row-wise: each power is one tight loop over contiguous memory."""
    cdef Py_ssize_t j, i, x
    cdef Py_ssize_t ncomp = amp.shape[0]
    cdef Py_ssize_t npts = amp.shape[1]
    cdef double b = 0.5 * (p - 3.0)
    cdef Power pself = _power(p - 1.0)
    cdef Power pcross = _power(0.5 * (p + 1.0))
    cdef Power pown = _power(b)
    cdef double own_floor = pow(MODULUS_FLOOR, b)
    cdef double m, coup
    for j in range(ncomp):
        _fill_power(amp[j], pself, out[j])
        m = mu[j]
        for x in range(npts):
            out[j, x] *= m
    if ncomp == 1:
        return
    for j in range(ncomp):
        _fill_power(amp[j], pcross, cross[j])
    for j in range(ncomp):
        _fill_power(amp[j], pown, own)
        if b < 0:
            # the modulus is clamped at MODULUS_FLOOR inside negative powers
            for x in range(npts):
                if amp[j, x] < MODULUS_FLOOR:
                    own[x] = own_floor
        for i in range(ncomp):
            coup = beta[i, j]
            if i != j and coup != 0.0:
                for x in range(npts):
                    out[j, x] += coup * cross[i, x] * own[x]


cdef double _masked_max(const double[:, ::1] amp, const double[:, ::1] mult, double p) noexcept nogil:
    cdef Py_ssize_t j, x
    cdef double best = 0.0, peak, floor_j, v
    for j in range(amp.shape[0]):
        floor_j = -1.0
        if p < 3.0:
            peak = 0.0
            for x in range(amp.shape[1]):
                if amp[j, x] > peak:
                    peak = amp[j, x]
            floor_j = PHASE_FLOOR * peak
        for x in range(amp.shape[1]):
            if amp[j, x] > floor_j:
                v = fabs(mult[j, x])
                if v > best:
                    best = v
    return best


def multiplier(phi, mu, beta, p):
    cdef const double complex[:, ::1] f = np.ascontiguousarray(phi, dtype=np.complex128)
    amp = np.empty((f.shape[0], f.shape[1]), dtype=np.float64)
    out = np.empty_like(amp)
    cdef double[:, ::1] amp_v = amp
    cdef double[:, ::1] out_v = out
    cdef double[:, ::1] cross_v = np.empty_like(amp)
    cdef double[::1] own_v = np.empty(amp.shape[1], dtype=np.float64)
    cdef const double[::1] mu_v = np.ascontiguousarray(mu, dtype=np.float64)
    cdef const double[:, ::1] beta_v = np.ascontiguousarray(beta, dtype=np.float64)
    cdef double pp = p
    with nogil:
        _moduli(f, amp_v)
        _multiplier(amp_v, mu_v, beta_v, pp, out_v, cross_v, own_v)
    return out


def max_multiplier(phi, mu, beta, p):
    cdef const double complex[:, ::1] f = np.ascontiguousarray(phi, dtype=np.complex128)
    if f.shape[1] == 0:
        return 0.0
    amp = np.empty((f.shape[0], f.shape[1]), dtype=np.float64)
    out = np.empty_like(amp)
    cdef double[:, ::1] amp_v = amp
    cdef double[:, ::1] out_v = out
    cdef double[:, ::1] cross_v = np.empty_like(amp)
    cdef double[::1] own_v = np.empty(amp.shape[1], dtype=np.float64)
    cdef const double[::1] mu_v = np.ascontiguousarray(mu, dtype=np.float64)
    cdef const double[:, ::1] beta_v = np.ascontiguousarray(beta, dtype=np.float64)
    cdef double pp = p
    cdef double best
    with nogil:
        _moduli(f, amp_v)
        _multiplier(amp_v, mu_v, beta_v, pp, out_v, cross_v, own_v)
        best = _masked_max(amp_v, out_v, pp)
    return best


def rotate_phase(cnp.ndarray phi, mu, beta, p, dt):
    """In-place phi_j <- phi_j exp(i dt N_j); returns the largest applied phase."""
    if not phi.flags.c_contiguous or phi.dtype != np.complex128:
        raise TypeError("phi must be a C-contiguous complex128 array")
    cdef double complex[:, ::1] f = phi
    if f.shape[1] == 0:
        return 0.0
    amp = np.empty((f.shape[0], f.shape[1]), dtype=np.float64)
    out = np.empty_like(amp)
    cdef double[:, ::1] amp_v = amp
    cdef double[:, ::1] out_v = out
    cdef double[:, ::1] cross_v = np.empty_like(amp)
    cdef double[::1] own_v = np.empty(amp.shape[1], dtype=np.float64)
    cdef const double[::1] mu_v = np.ascontiguousarray(mu, dtype=np.float64)
    cdef const double[:, ::1] beta_v = np.ascontiguousarray(beta, dtype=np.float64)
    cdef double pp = p, h = dt, best, th
    cdef Py_ssize_t j, x
    with nogil:
        _moduli(f, amp_v)
        _multiplier(amp_v, mu_v, beta_v, pp, out_v, cross_v, own_v)
        for j in range(f.shape[0]):
            for x in range(f.shape[1]):
                th = h * out_v[j, x]
                f[j, x] = f[j, x] * (cos(th) + 1j * sin(th))
        best = h * _masked_max(amp_v, out_v, pp)
    return best


def potential_density(phi, mu, beta, p):
    cdef const double complex[:, ::1] f = np.ascontiguousarray(phi, dtype=np.complex128)
    cdef const double[::1] mu_v = np.ascontiguousarray(mu, dtype=np.float64)
    cdef const double[:, ::1] beta_v = np.ascontiguousarray(beta, dtype=np.float64)
    cdef Py_ssize_t ncomp = f.shape[0], npts = f.shape[1], j, i, x
    amp = np.empty((ncomp, npts), dtype=np.float64)
    dens = np.zeros(npts, dtype=np.float64)
    cdef double[:, ::1] amp_v = amp
    cdef double[:, ::1] self_v = np.empty_like(amp)
    cdef double[:, ::1] cross_v = np.empty_like(amp)
    cdef double[::1] d = dens
    cdef Power pself = _power(p + 1.0)
    cdef Power pcross = _power(0.5 * (p + 1.0))
    cdef double m, coup
    with nogil:
        _moduli(f, amp_v)
        for j in range(ncomp):
            _fill_power(amp_v[j], pself, self_v[j])
            m = mu_v[j]
            for x in range(npts):
                d[x] += m * self_v[j, x]
        if ncomp > 1:
            for j in range(ncomp):
                _fill_power(amp_v[j], pcross, cross_v[j])
            for j in range(ncomp):
                for i in range(ncomp):
                    coup = beta_v[i, j]
                    if i != j and coup != 0.0:
                        for x in range(npts):
                            d[x] += coup * cross_v[i, x] * cross_v[j, x]
    return dens


def tridiag_solve(lower, diag, upper, rhs):
    """Thomas algorithm; lower[k] couples row k to k-1, upper[k] to k+1."""
    cdef const double complex[::1] lo = np.ascontiguousarray(lower, dtype=np.complex128)
    cdef const double complex[::1] di = np.ascontiguousarray(diag, dtype=np.complex128)
    cdef const double complex[::1] up = np.ascontiguousarray(upper, dtype=np.complex128)
    cdef const double complex[::1] r = np.ascontiguousarray(rhs, dtype=np.complex128)
    cdef Py_ssize_t n = di.shape[0], k
    c_arr = np.empty(n, dtype=np.complex128)
    x_arr = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] c = c_arr
    cdef double complex[::1] x = x_arr
    cdef double complex den
    with nogil:
        c[0] = up[0] / di[0]
        x[0] = r[0] / di[0]
        for k in range(1, n):
            den = di[k] - lo[k] * c[k - 1]
            c[k] = up[k] / den
            x[k] = (r[k] - lo[k] * x[k - 1]) / den
        for k in range(n - 2, -1, -1):
            x[k] = x[k] - c[k] * x[k + 1]
    return x_arr
