"""Pure numpy render kernels; reference semantics for ``_ckernels``."""

import numpy as np


def rasterize_min_depth(px, py, pz, x0, dx, nx, y0, dy, ny, min_area):
    """Per-cell minimum depth of triangles covering each cell centre.

    ``px, py, pz`` hold the three corners of every triangle, shape (T, 3).
    Cells whose centre no triangle covers stay at +inf.
    """
    depth = np.full(ny * nx, np.inf)
    ax, bx, qx = px[:, 0], px[:, 1], px[:, 2]
    ay, by, qy = py[:, 0], py[:, 1], py[:, 2]
    area = (bx - ax) * (qy - ay) - (qx - ax) * (by - ay)
    ok = np.abs(area) > min_area

    xmin = np.minimum(ax, np.minimum(bx, qx))
    xmax = np.maximum(ax, np.maximum(bx, qx))
    ymin = np.minimum(ay, np.minimum(by, qy))
    ymax = np.maximum(ay, np.maximum(by, qy))
    ilo = np.maximum(np.ceil((xmin - x0) / dx - 0.5), 0).astype(np.int64)
    ihi = np.minimum(np.floor((xmax - x0) / dx - 0.5), nx - 1).astype(np.int64)
    jlo = np.maximum(np.ceil((ymin - y0) / dy - 0.5), 0).astype(np.int64)
    jhi = np.minimum(np.floor((ymax - y0) / dy - 0.5), ny - 1).astype(np.int64)
    wi = np.maximum(ihi - ilo + 1, 0)
    wj = np.maximum(jhi - jlo + 1, 0)
    count = np.where(ok, wi * wj, 0)
    total = int(count.sum())
    if total == 0:
        return depth.reshape(ny, nx)

    tri = np.repeat(np.arange(len(px)), count)
    start = np.cumsum(count) - count
    local = np.arange(total) - np.repeat(start, count)
    i = ilo[tri] + local % wi[tri]
    j = jlo[tri] + local // wi[tri]
    cx = x0 + (i + 0.5) * dx
    cy = y0 + (j + 0.5) * dy

    ax, bx, qx = ax[tri], bx[tri], qx[tri]
    ay, by, qy = ay[tri], by[tri], qy[tri]
    ar = area[tri]
    w0 = ((bx - cx) * (qy - cy) - (qx - cx) * (by - cy)) / ar
    w1 = ((qx - cx) * (ay - cy) - (ax - cx) * (qy - cy)) / ar
    w2 = ((ax - cx) * (by - cy) - (bx - cx) * (ay - cy)) / ar
    inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
    z = w0 * pz[tri, 0] + w1 * pz[tri, 1] + w2 * pz[tri, 2]
    np.minimum.at(depth, (j * nx + i)[inside], z[inside])
    return depth.reshape(ny, nx)


def _in_image(sx, sz, a0, da, na, r0, dr, nr):
    fa = np.floor((sx - a0) / da)
    fr = np.floor((sz - r0) / dr)
    keep = (fa >= 0) & (fr >= 0) & (fa < na) & (fr < nr)
    return fa, fr, keep


def image_span(sx, sy, sz, a0, da, na, r0, dr, nr):
    """Cross-range extent (min, max, count) of samples landing in the image."""
    _, _, keep = _in_image(sx, sz, a0, da, na, r0, dr, nr)
    n = int(keep.sum())
    if n == 0:
        return np.inf, -np.inf, 0
    y = sy[keep]
    return float(y.min()), float(y.max()), n


def deposit(sx, sy, sz, fid, face_weight, face_bias, depth, x0, dx, y0, dy,
            a0, da, na, r0, dr, nr, tol):
    """Accumulate visible sample weights into (range, azimuth) bins.

    A sample carries the weight of its facet ``fid``. Returns the image and
    the weight that occlusion removed from each bin.
    """
    ny, nx = depth.shape
    fa, fr, keep = _in_image(sx, sz, a0, da, na, r0, dr, nr)
    fa, fr = fa[keep], fr[keep]
    sx, sy, sz, fid = sx[keep], sy[keep], sz[keep], fid[keep]
    weight, bias = face_weight[fid], face_bias[fid]

    fi = np.floor((sx - x0) / dx)
    fj = np.floor((sy - y0) / dy)
    covered = (fi >= 0) & (fj >= 0) & (fi < nx) & (fj < ny)
    d = np.full(len(sx), np.inf)
    d[covered] = depth[fj[covered].astype(np.int64), fi[covered].astype(np.int64)]
    hidden = covered & (sz > d + tol + bias)

    flat = fr.astype(np.int64) * na + fa.astype(np.int64)
    img = np.bincount(flat[~hidden], weights=weight[~hidden], minlength=nr * na)
    occ = np.bincount(flat[hidden], weights=weight[hidden], minlength=nr * na)
    return img.reshape(nr, na), occ.reshape(nr, na)
