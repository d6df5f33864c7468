# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
import numpy as np

cdef extern from "complex.h" nogil:
    double complex conj(double complex)
    double creal(double complex)
    double cabs(double complex)


def atom_scores(double complex[:, ::1] R, double complex[:, ::1] atoms, double[::1] inv_norms):
    cdef Py_ssize_t G = atoms.shape[0], S = atoms.shape[1]
    cdef Py_ssize_t g, i, j
    cdef double acc, cross, xr, xi, yr, yi, rr, ri, tr, ti
    out = np.empty(G, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for g in range(G):
            acc = 0.0
            cross = 0.0
            for i in range(S):
                xr = atoms[g, i].real
                xi = atoms[g, i].imag
                acc = acc + R[i, i].real * (xr * xr + xi * xi)
                # t = sum_{j>i} R_ij a_j ; contribution Re(conj(a_i) t)
                tr = 0.0
                ti = 0.0
                for j in range(i + 1, S):
                    rr = R[i, j].real
                    ri = R[i, j].imag
                    yr = atoms[g, j].real
                    yi = atoms[g, j].imag
                    tr = tr + rr * yr - ri * yi
                    ti = ti + rr * yi + ri * yr
                cross = cross + xr * tr + xi * ti
            o[g] = (acc + 2.0 * cross) * inv_norms[g]
    return out


def phase_update(double complex[::1] v, double complex[::1] dv, double eta):
    cdef Py_ssize_t n = v.shape[0], i
    cdef double complex w
    cdef double mag
    out = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] o = out
    with nogil:
        for i in range(n):
            w = v[i] + eta * dv[i]
            mag = cabs(w)
            if mag > 0:
                o[i] = w / mag
            else:
                o[i] = v[i]
    return out


def snapshot_products(double complex[:, ::1] y_R, double complex[::1] v, double complex[:, ::1] y_k):
    cdef Py_ssize_t N = y_R.shape[0], T = y_R.shape[1], n, t
    cdef double vr, vi, ar, ai, br, bi, pr, pi
    out = np.zeros(T, dtype=np.complex128)
    cdef double complex[::1] o = out
    with nogil:
        for n in range(N):
            vr = v[n].real
            vi = v[n].imag
            for t in range(T):
                ar = y_R[n, t].real
                ai = y_R[n, t].imag
                br = y_k[n, t].real
                bi = y_k[n, t].imag
                # conj(a) * v * b
                pr = vr * br - vi * bi
                pi = vr * bi + vi * br
                o[t] = o[t] + ((ar * pr + ai * pi) + 1j * (ar * pi - ai * pr))
    return out
