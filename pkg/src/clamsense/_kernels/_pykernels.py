"""NumPy reference implementations of the grid kernels."""
from __future__ import annotations

import numpy as np

_CHUNK_ELEMS = 4_000_000


def steered_norms(g, mx, mz, spacing, az_deg, zen_deg):
    """Return ``|G^H alpha(az_i, zen_j)|^2`` on the grid ``az x zen``.

    ``g`` is ``M x K`` with row index ``m = ix * mz + iz`` (the Kronecker
    ordering of :func:`clamsense.scene.steering_vector`).  The Kronecker
    structure is used so that each grid node costs ``K * mx`` products
    after an ``O(K * M)`` pass per zenith value.
    """
    g = np.asarray(g, dtype=np.complex128)
    k = g.shape[1]
    gc = g.conj().T.reshape(k, mx, mz)
    az = np.deg2rad(np.asarray(az_deg, dtype=float))
    zen = np.deg2rad(np.asarray(zen_deg, dtype=float))
    ix = np.arange(mx)
    iz = np.arange(mz)
    out = np.empty((az.size, zen.size))
    step = max(1, _CHUNK_ELEMS // max(1, k * az.size))
    cos_az = np.cos(az)
    for j0 in range(0, zen.size, step):
        zj = zen[j0:j0 + step]
        a_z = np.exp(2j * np.pi * spacing * np.outer(np.cos(zj), iz))  # (J, mz)
        t = np.einsum("qxz,jz->jqx", gc, a_z)  # (J, K, mx)
        u = spacing * np.multiply.outer(np.sin(zj), cos_az)  # (J, A)
        a_x = np.exp(2j * np.pi * u[..., None] * ix)  # (J, A, mx)
        v = np.matmul(t, a_x.transpose(0, 2, 1))  # (J, K, A)
        out[:, j0:j0 + step] = (v.real ** 2 + v.imag ** 2).sum(axis=1).T
    return out


def local_maxima_8(a):
    """Boolean mask of strict 8-neighbour local maxima (edges use only the
    neighbours that exist)."""
    a = np.asarray(a, dtype=float)
    p = np.pad(a, 1, mode="constant", constant_values=-np.inf)
    mask = np.ones(a.shape, dtype=bool)
    n0, n1 = a.shape
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            mask &= a > p[1 + di:1 + di + n0, 1 + dj:1 + dj + n1]
    return mask
