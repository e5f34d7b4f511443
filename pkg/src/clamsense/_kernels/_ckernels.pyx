# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled grid kernels; see ``_pykernels`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, M_PI

cnp.import_array()


def steered_norms(g, int mx, int mz, double spacing, az_deg, zen_deg):
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] gm = np.ascontiguousarray(g, dtype=np.complex128)
    cdef int k = gm.shape[1]
    cdef double[::1] az = np.deg2rad(np.ascontiguousarray(az_deg, dtype=np.float64))
    cdef double[::1] zen = np.deg2rad(np.ascontiguousarray(zen_deg, dtype=np.float64))
    cdef Py_ssize_t na = az.shape[0], nz = zen.shape[0]
    # conj(G) laid out as (K, mx, mz) split into real/imag planes
    gc = gm.conj().T.reshape(k, mx, mz)
    cdef double[:, :, ::1] gr = np.ascontiguousarray(gc.real)
    cdef double[:, :, ::1] gi = np.ascontiguousarray(gc.imag)
    cdef double[:, ::1] tr = np.empty((k, mx))
    cdef double[:, ::1] ti = np.empty((k, mx))
    cdef double[::1] zr = np.empty(mz)
    cdef double[::1] zi = np.empty(mz)
    cdef double[::1] xr = np.empty(mx)
    cdef double[::1] xi = np.empty(mx)
    out = np.empty((na, nz))
    cdef double[:, ::1] o = out
    cdef double[::1] cos_az = np.cos(np.asarray(az))
    cdef Py_ssize_t i, j, q, a, b
    cdef double ph, sr, si, acc, s_theta, vr, vi
    with nogil:
        for j in range(nz):
            ph = 2.0 * M_PI * spacing * cos(zen[j])
            for b in range(mz):
                zr[b] = cos(ph * b)
                zi[b] = sin(ph * b)
            for q in range(k):
                for a in range(mx):
                    sr = 0.0
                    si = 0.0
                    for b in range(mz):
                        sr = sr + gr[q, a, b] * zr[b] - gi[q, a, b] * zi[b]
                        si = si + gr[q, a, b] * zi[b] + gi[q, a, b] * zr[b]
                    tr[q, a] = sr
                    ti[q, a] = si
            s_theta = sin(zen[j])
            for i in range(na):
                ph = 2.0 * M_PI * spacing * cos_az[i] * s_theta
                for a in range(mx):
                    xr[a] = cos(ph * a)
                    xi[a] = sin(ph * a)
                acc = 0.0
                for q in range(k):
                    vr = 0.0
                    vi = 0.0
                    for a in range(mx):
                        vr = vr + tr[q, a] * xr[a] - ti[q, a] * xi[a]
                        vi = vi + tr[q, a] * xi[a] + ti[q, a] * xr[a]
                    acc = acc + vr * vr + vi * vi
                o[i, j] = acc
    return out


def local_maxima_8(a_in):
    cdef double[:, ::1] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef Py_ssize_t n0 = a.shape[0], n1 = a.shape[1], i, j, di, dj, ii, jj
    mask = np.zeros((n0, n1), dtype=np.uint8)
    cdef unsigned char[:, ::1] m = mask
    cdef double v
    cdef bint ok
    with nogil:
        for i in range(n0):
            for j in range(n1):
                v = a[i, j]
                ok = True
                for di in range(-1, 2):
                    ii = i + di
                    if ii < 0 or ii >= n0:
                        continue
                    for dj in range(-1, 2):
                        jj = j + dj
                        if (di == 0 and dj == 0) or jj < 0 or jj >= n1:
                            continue
                        if not (v > a[ii, jj]):
                            ok = False
                            break
                    if not ok:
                        break
                m[i, j] = ok
    return mask.astype(bool)
