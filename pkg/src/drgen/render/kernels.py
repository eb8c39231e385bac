"""Numba kernels: BVH traversal, path tracing, and ID rendering.

Every random number comes from a counter-based splitmix64 stream keyed
by (seed, pixel index, sample index), so results are bit-identical for a
given seed no matter how work is scheduled across threads.  Kernels are
compiled without fastmath so float arithmetic stays IEEE-ordered and
comparable with the pure-numpy oracles used in tests.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

# ---------------------------------------------------------------------------
# counter-based RNG (splitmix64)

_C1 = np.uint64(0x9E3779B97F4A7C15)
_C2 = np.uint64(0xBF58476D1CE4E5B9)
_C3 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV_2_53 = 1.0 / 9007199254740992.0

T_MIN = 1e-9          # minimum accepted ray parameter
_DET_EPS = 1e-12      # parallel-ray rejection threshold


@njit(inline="always", cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _C2
    z = (z ^ (z >> _S27)) * _C3
    return z ^ (z >> _S31)


@njit(inline="always", cache=True)
def rng_uniform(state):
    """Advance the stream; returns (new_state, u) with u in [0, 1)."""
    state = state + _C1
    z = mix64(state)
    return state, float(z >> _S11) * _INV_2_53


@njit(inline="always", cache=True)
def stream_seed(seed, a, b):
    """Independent stream for counters (a, b) under one seed."""
    s = mix64(seed ^ (_C2 * (a + np.uint64(1))))
    return mix64(s ^ (_C3 * (b + np.uint64(1))))


# ---------------------------------------------------------------------------
# alias table construction (Vose)


@njit(cache=True)
def alias_build_core(scaled, prob, alias):
    n = scaled.size
    small = np.empty(n, np.int64)
    large = np.empty(n, np.int64)
    ns = 0
    nl = 0
    for i in range(n):
        if scaled[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        nl -= 1
        l = large[nl]
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] = (scaled[l] + scaled[s]) - 1.0
        if scaled[l] < 1.0:
            small[ns] = l
            ns += 1
        else:
            large[nl] = l
            nl += 1
    # numerical leftovers on either list take their slot with certainty


# ---------------------------------------------------------------------------
# ray / triangle / BVH


@njit(inline="always", cache=True)
def tri_intersect(ox, oy, oz, dx, dy, dz,
                  ax, ay, az, bx, by, bz, cx, cy, cz):
    """Moller-Trumbore; returns (t, u, v) with t < 0 on miss."""
    e1x = bx - ax
    e1y = by - ay
    e1z = bz - az
    e2x = cx - ax
    e2y = cy - ay
    e2z = cz - az
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) < _DET_EPS:
        return -1.0, 0.0, 0.0
    inv = 1.0 / det
    tx = ox - ax
    ty = oy - ay
    tz = oz - az
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return -1.0, 0.0, 0.0
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return -1.0, 0.0, 0.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= T_MIN:
        return -1.0, 0.0, 0.0
    return t, u, v


@njit(inline="always", cache=True)
def _slab_hit(nmin, nmax, node, ox, oy, oz, ix, iy, iz,
              dx, dy, dz, t_best):
    """Conservative ray/AABB test against node, limited to [T_MIN, t_best]."""
    near = T_MIN
    far = t_best
    for k in range(3):
        if k == 0:
            o, inv, d = ox, ix, dx
        elif k == 1:
            o, inv, d = oy, iy, dy
        else:
            o, inv, d = oz, iz, dz
        lo = nmin[node, k]
        hi = nmax[node, k]
        if d != 0.0:
            t1 = (lo - o) * inv
            t2 = (hi - o) * inv
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > near:
                near = t1
            if t2 < far:
                far = t2
            if near > far:
                return False
        else:
            if o < lo or o > hi:
                return False
    return True


@njit(cache=True)
def bvh_nearest(nmin, nmax, left, right, start, count, tri_order, tv,
                tri_part, part_mask,
                ox, oy, oz, dx, dy, dz, stack):
    """Nearest masked hit: (t, triangle, u, v); triangle < 0 on miss.

    Ties on t resolve to the lower triangle index so results match a
    sequential brute-force scan exactly.
    """
    ix = 1.0 / dx
    iy = 1.0 / dy
    iz = 1.0 / dz
    best_t = np.inf
    best_tri = -1
    best_u = 0.0
    best_v = 0.0
    top = 0
    stack[top] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _slab_hit(nmin, nmax, node, ox, oy, oz, ix, iy, iz,
                         dx, dy, dz, best_t):
            continue
        c = count[node]
        if c > 0:
            s = start[node]
            for k in range(s, s + c):
                tri = tri_order[k]
                if part_mask[tri_part[tri]] == 0:
                    continue
                t, u, v = tri_intersect(
                    ox, oy, oz, dx, dy, dz,
                    tv[tri, 0], tv[tri, 1], tv[tri, 2],
                    tv[tri, 3], tv[tri, 4], tv[tri, 5],
                    tv[tri, 6], tv[tri, 7], tv[tri, 8])
                if t > 0.0 and (t < best_t or (t == best_t and tri < best_tri)):
                    best_t = t
                    best_tri = tri
                    best_u = u
                    best_v = v
        else:
            stack[top] = right[node]
            top += 1
            stack[top] = left[node]
            top += 1
    return best_t, best_tri, best_u, best_v


@njit(cache=True)
def bvh_any_hit(nmin, nmax, left, right, start, count, tri_order, tv,
                ox, oy, oz, dx, dy, dz, t_max, stack):
    """True when any triangle lies along the ray within (T_MIN, t_max)."""
    ix = 1.0 / dx
    iy = 1.0 / dy
    iz = 1.0 / dz
    top = 0
    stack[top] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _slab_hit(nmin, nmax, node, ox, oy, oz, ix, iy, iz,
                         dx, dy, dz, t_max):
            continue
        c = count[node]
        if c > 0:
            s = start[node]
            for k in range(s, s + c):
                tri = tri_order[k]
                t, u, v = tri_intersect(
                    ox, oy, oz, dx, dy, dz,
                    tv[tri, 0], tv[tri, 1], tv[tri, 2],
                    tv[tri, 3], tv[tri, 4], tv[tri, 5],
                    tv[tri, 6], tv[tri, 7], tv[tri, 8])
                if 0.0 < t < t_max:
                    return True
        else:
            stack[top] = right[node]
            top += 1
            stack[top] = left[node]
            top += 1
    return False


# ---------------------------------------------------------------------------
# environment map sampling


@njit(inline="always", cache=True)
def env_lookup(baked, pdf, rotation, dx, dy, dz):
    """Point-sampled radiance and sampling pdf for a direction."""
    h = baked.shape[0]
    w = baked.shape[1]
    c = dy
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    theta = math.acos(c)
    phi = math.atan2(dz, dx) - rotation
    u = (phi * (1.0 / (2.0 * math.pi))) % 1.0
    v = theta * (1.0 / math.pi)
    x = int(u * w)
    if x >= w:
        x = w - 1
    elif x < 0:
        x = 0
    y = int(v * h)
    if y >= h:
        y = h - 1
    return baked[y, x, 0], baked[y, x, 1], baked[y, x, 2], pdf[y, x]


@njit(inline="always", cache=True)
def env_sample(baked, pdf, aprob, aidx, row_cos, rotation, state):
    """Draw a direction from the luminance-weighted texel distribution.

    Within the chosen texel the jitter is uniform in (cos theta, phi),
    i.e. uniform in solid angle, so the realized density is exactly the
    tabulated per-texel pdf.
    """
    h = baked.shape[0]
    w = baked.shape[1]
    n = h * w
    state, u1 = rng_uniform(state)
    state, u2 = rng_uniform(state)
    state, ju = rng_uniform(state)
    state, jv = rng_uniform(state)
    slot = int(u1 * n)
    if slot >= n:
        slot = n - 1
    if u2 >= aprob[slot]:
        slot = aidx[slot]
    y = slot // w
    x = slot - y * w
    c0 = row_cos[y]
    c1 = row_cos[y + 1]
    dy = c0 + jv * (c1 - c0)
    if dy > 1.0:
        dy = 1.0
    elif dy < -1.0:
        dy = -1.0
    st = math.sqrt(max(0.0, 1.0 - dy * dy))
    phi = 2.0 * math.pi * (x + ju) / w + rotation
    dx = st * math.cos(phi)
    dz = st * math.sin(phi)
    return (state, dx, dy, dz, pdf[y, x],
            baked[y, x, 0], baked[y, x, 1], baked[y, x, 2])


# ---------------------------------------------------------------------------
# material evaluation

_LUM_R = 0.2126
_LUM_G = 0.7152
_LUM_B = 0.0722


@njit(inline="always", cache=True)
def _tex_noise_value(cx, cy, cz, salt):
    h = mix64((np.uint64(cx) * _C1) ^ (np.uint64(cy) * _C2)
              ^ (np.uint64(cz) * _C3) ^ salt)
    return float(h >> _S11) * _INV_2_53


@njit(inline="always", cache=True)
def eval_base_color(pi, wx, wy, wz, mat_base, tex_kind, tex_a, tex_b,
                    tex_freq, inv_rows):
    """Base color at a world point; procedural patterns are evaluated in
    the part's object space so no UVs are needed."""
    kind = tex_kind[pi]
    if kind == 0:
        return mat_base[pi, 0], mat_base[pi, 1], mat_base[pi, 2]
    qx = (inv_rows[pi, 0, 0] * wx + inv_rows[pi, 0, 1] * wy
          + inv_rows[pi, 0, 2] * wz + inv_rows[pi, 0, 3])
    qy = (inv_rows[pi, 1, 0] * wx + inv_rows[pi, 1, 1] * wy
          + inv_rows[pi, 1, 2] * wz + inv_rows[pi, 1, 3])
    qz = (inv_rows[pi, 2, 0] * wx + inv_rows[pi, 2, 1] * wy
          + inv_rows[pi, 2, 2] * wz + inv_rows[pi, 2, 3])
    f = tex_freq[pi]
    cx = int(math.floor(qx * f))
    cy = int(math.floor(qy * f))
    cz = int(math.floor(qz * f))
    if kind == 1:        # checker
        pick = (cx + cy + cz) & 1
        if pick == 0:
            return tex_a[pi, 0], tex_a[pi, 1], tex_a[pi, 2]
        return tex_b[pi, 0], tex_b[pi, 1], tex_b[pi, 2]
    if kind == 2:        # stripe along object x
        if (cx & 1) == 0:
            return tex_a[pi, 0], tex_a[pi, 1], tex_a[pi, 2]
        return tex_b[pi, 0], tex_b[pi, 1], tex_b[pi, 2]
    # cellular value noise
    t = _tex_noise_value(cx, cy, cz, np.uint64(pi))
    return (tex_a[pi, 0] + t * (tex_b[pi, 0] - tex_a[pi, 0]),
            tex_a[pi, 1] + t * (tex_b[pi, 1] - tex_a[pi, 1]),
            tex_a[pi, 2] + t * (tex_b[pi, 2] - tex_a[pi, 2]))


@njit(inline="always", cache=True)
def ggx_d(alpha2, nh):
    d = nh * nh * (alpha2 - 1.0) + 1.0
    return alpha2 / (math.pi * d * d)


@njit(inline="always", cache=True)
def smith_lambda(alpha2, c):
    c2 = c * c
    return 0.5 * (-1.0 + math.sqrt(1.0 + alpha2 * (1.0 - c2) / c2))


@njit(inline="always", cache=True)
def bsdf_eval(vx, vy, vz, lx, ly, lz,
              br, bg, bb, metal, rough, spec):
    """Evaluate the metallic-roughness BSDF in the local shading frame
    (+z is the shading normal; v and l must both have z > 0).

    Returns (fr, fg, fb, pdf) where pdf is the density of sample_bsdf.
    """
    hx = vx + lx
    hy = vy + ly
    hz = vz + lz
    hn = math.sqrt(hx * hx + hy * hy + hz * hz)
    if hn < 1e-12:
        return 0.0, 0.0, 0.0, 0.0
    hx /= hn
    hy /= hn
    hz /= hn
    if hz < 0.0:
        hx, hy, hz = -hx, -hy, -hz
    vh = vx * hx + vy * hy + vz * hz
    if vh < 0.0:
        vh = 0.0

    alpha = rough * rough
    alpha2 = alpha * alpha
    f0_diel = 0.04 * spec
    f0r = f0_diel * (1.0 - metal) + br * metal
    f0g = f0_diel * (1.0 - metal) + bg * metal
    f0b = f0_diel * (1.0 - metal) + bb * metal
    f90 = spec * (1.0 - metal) + metal
    s5 = (1.0 - vh) ** 5
    fr_ = f0r + (f90 - f0r) * s5
    fg_ = f0g + (f90 - f0g) * s5
    fb_ = f0b + (f90 - f0b) * s5

    d = ggx_d(alpha2, hz)
    lam_v = smith_lambda(alpha2, vz)
    lam_l = smith_lambda(alpha2, lz)
    g2 = 1.0 / (1.0 + lam_v + lam_l)
    g1v = 1.0 / (1.0 + lam_v)
    spec_den = 4.0 * vz * lz
    ks = d * g2 / spec_den

    kd = (1.0 - metal) * (1.0 - f0_diel)
    dr = kd * br / math.pi
    dg = kd * bg / math.pi
    db = kd * bb / math.pi

    fr = dr + fr_ * ks
    fg = dg + fg_ * ks
    fb = db + fb_ * ks

    # lobe selection probabilities must mirror sample_bsdf
    w_s = (_LUM_R * f0r + _LUM_G * f0g + _LUM_B * f0b) + 0.05 * f90
    w_d = kd * (_LUM_R * br + _LUM_G * bg + _LUM_B * bb)
    w_sum = w_s + w_d
    if w_sum <= 0.0:
        return fr, fg, fb, 0.0
    p_s = w_s / w_sum
    pdf_spec = g1v * d / (4.0 * vz)
    pdf = (1.0 - p_s) * (lz / math.pi) + p_s * pdf_spec
    return fr, fg, fb, pdf


@njit(inline="always", cache=True)
def sample_bsdf(vx, vy, vz, br, bg, bb, metal, rough, spec, state):
    """Draw a scatter direction; returns
    (state, lx, ly, lz, fr, fg, fb, pdf)."""
    alpha = rough * rough
    f0_diel = 0.04 * spec
    f0r = f0_diel * (1.0 - metal) + br * metal
    f0g = f0_diel * (1.0 - metal) + bg * metal
    f0b = f0_diel * (1.0 - metal) + bb * metal
    f90 = spec * (1.0 - metal) + metal
    kd = (1.0 - metal) * (1.0 - f0_diel)
    w_s = (_LUM_R * f0r + _LUM_G * f0g + _LUM_B * f0b) + 0.05 * f90
    w_d = kd * (_LUM_R * br + _LUM_G * bg + _LUM_B * bb)
    w_sum = w_s + w_d
    if w_sum <= 0.0:
        return state, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0
    p_s = w_s / w_sum

    state, u_lobe = rng_uniform(state)
    state, u1 = rng_uniform(state)
    state, u2 = rng_uniform(state)

    if u_lobe >= p_s:
        # cosine-weighted diffuse
        r = math.sqrt(u1)
        phi = 2.0 * math.pi * u2
        lx = r * math.cos(phi)
        ly = r * math.sin(phi)
        lz = math.sqrt(max(0.0, 1.0 - u1))
    else:
        # GGX visible-normal sampling (Heitz 2018)
        sx = alpha * vx
        sy = alpha * vy
        sz = vz
        sn = math.sqrt(sx * sx + sy * sy + sz * sz)
        sx /= sn
        sy /= sn
        sz /= sn
        lensq = sx * sx + sy * sy
        if lensq > 1e-16:
            il = 1.0 / math.sqrt(lensq)
            t1x = -sy * il
            t1y = sx * il
            t1z = 0.0
        else:
            t1x = 1.0
            t1y = 0.0
            t1z = 0.0
        t2x = sy * t1z - sz * t1y
        t2y = sz * t1x - sx * t1z
        t2z = sx * t1y - sy * t1x
        rr = math.sqrt(u1)
        phi = 2.0 * math.pi * u2
        p1 = rr * math.cos(phi)
        p2 = rr * math.sin(phi)
        s = 0.5 * (1.0 + sz)
        p2 = (1.0 - s) * math.sqrt(max(0.0, 1.0 - p1 * p1)) + s * p2
        p3 = math.sqrt(max(0.0, 1.0 - p1 * p1 - p2 * p2))
        nhx = p1 * t1x + p2 * t2x + p3 * sx
        nhy = p1 * t1y + p2 * t2y + p3 * sy
        nhz = p1 * t1z + p2 * t2z + p3 * sz
        hx = alpha * nhx
        hy = alpha * nhy
        hz = max(1e-9, nhz)
        hn = math.sqrt(hx * hx + hy * hy + hz * hz)
        hx /= hn
        hy /= hn
        hz /= hn
        vh = vx * hx + vy * hy + vz * hz
        lx = 2.0 * vh * hx - vx
        ly = 2.0 * vh * hy - vy
        lz = 2.0 * vh * hz - vz

    if lz <= 0.0:
        return state, lx, ly, lz, 0.0, 0.0, 0.0, 0.0
    fr, fg, fb, pdf = bsdf_eval(vx, vy, vz, lx, ly, lz,
                                br, bg, bb, metal, rough, spec)
    return state, lx, ly, lz, fr, fg, fb, pdf


# ---------------------------------------------------------------------------
# full path tracing kernel


@njit(inline="always", cache=True)
def _bary_normal(tn, tri, bu, bv):
    w0 = 1.0 - bu - bv
    nx = w0 * tn[tri, 0] + bu * tn[tri, 3] + bv * tn[tri, 6]
    ny = w0 * tn[tri, 1] + bu * tn[tri, 4] + bv * tn[tri, 7]
    nz = w0 * tn[tri, 2] + bu * tn[tri, 5] + bv * tn[tri, 8]
    n = math.sqrt(nx * nx + ny * ny + nz * nz)
    if n < 1e-12:
        return 0.0, 0.0, 1.0
    return nx / n, ny / n, nz / n


@njit(inline="always", cache=True)
def _geom_normal(tv, tri):
    e1x = tv[tri, 3] - tv[tri, 0]
    e1y = tv[tri, 4] - tv[tri, 1]
    e1z = tv[tri, 5] - tv[tri, 2]
    e2x = tv[tri, 6] - tv[tri, 0]
    e2y = tv[tri, 7] - tv[tri, 1]
    e2z = tv[tri, 8] - tv[tri, 2]
    nx = e1y * e2z - e1z * e2y
    ny = e1z * e2x - e1x * e2z
    nz = e1x * e2y - e1y * e2x
    n = math.sqrt(nx * nx + ny * ny + nz * nz)
    if n < 1e-12:
        return 0.0, 0.0, 1.0
    return nx / n, ny / n, nz / n


@njit(inline="always", cache=True)
def _backplate_emission(bp_img, tuv, tri, bu, bv):
    w0 = 1.0 - bu - bv
    u = w0 * tuv[tri, 0] + bu * tuv[tri, 2] + bv * tuv[tri, 4]
    v = w0 * tuv[tri, 1] + bu * tuv[tri, 3] + bv * tuv[tri, 5]
    h = bp_img.shape[0]
    w = bp_img.shape[1]
    fx = u * (w - 1)
    fy = v * (h - 1)
    x0 = int(fx)
    y0 = int(fy)
    if x0 < 0:
        x0 = 0
    elif x0 > w - 2 and w > 1:
        x0 = w - 2
    if y0 < 0:
        y0 = 0
    elif y0 > h - 2 and h > 1:
        y0 = h - 2
    if w == 1:
        x0 = 0
    if h == 1:
        y0 = 0
    tx = fx - x0
    ty = fy - y0
    if tx < 0.0:
        tx = 0.0
    elif tx > 1.0:
        tx = 1.0
    if ty < 0.0:
        ty = 0.0
    elif ty > 1.0:
        ty = 1.0
    x1 = x0 + 1 if x0 + 1 < w else x0
    y1 = y0 + 1 if y0 + 1 < h else y0
    out0 = 0.0
    out1 = 0.0
    out2 = 0.0
    a = (1.0 - tx) * (1.0 - ty)
    b = tx * (1.0 - ty)
    c = (1.0 - tx) * ty
    d = tx * ty
    out0 = (a * bp_img[y0, x0, 0] + b * bp_img[y0, x1, 0]
            + c * bp_img[y1, x0, 0] + d * bp_img[y1, x1, 0])
    out1 = (a * bp_img[y0, x0, 1] + b * bp_img[y0, x1, 1]
            + c * bp_img[y1, x0, 1] + d * bp_img[y1, x1, 1])
    out2 = (a * bp_img[y0, x0, 2] + b * bp_img[y0, x1, 2]
            + c * bp_img[y1, x0, 2] + d * bp_img[y1, x1, 2])
    return out0, out1, out2


@njit(parallel=True, cache=True, error_model="numpy")
def render_beauty(linear_out, bad_counts,
                  width, height, spp, max_bounces, rr_start, seed,
                  cam_rot, cam_org, f_pix,
                  nmin, nmax, left, right, start, count, tri_order,
                  tv, tn, tuv, tri_part,
                  part_emissive, full_mask,
                  mat_base, mat_metal, mat_rough, mat_spec,
                  tex_kind, tex_a, tex_b, tex_freq, inv_rows,
                  bp_img,
                  env_baked, env_pdf, env_aprob, env_aidx, env_row_cos,
                  env_rot, env_nee_prob,
                  scene_eps):
    half_w = width * 0.5
    half_h = height * 0.5
    for pix in prange(width * height):
        py = pix // width
        px = pix - py * width
        stack = np.empty(128, np.int32)
        acc_r = 0.0
        acc_g = 0.0
        acc_b = 0.0
        bad = 0
        for s in range(spp):
            state = stream_seed(seed, np.uint64(pix), np.uint64(s))
            state, jx = rng_uniform(state)
            state, jy = rng_uniform(state)
            u = px + jx
            v = py + jy
            dlx = (u - half_w) / f_pix
            dly = (half_h - v) / f_pix
            dlz = -1.0
            dn = math.sqrt(dlx * dlx + dly * dly + dlz * dlz)
            dlx /= dn
            dly /= dn
            dlz /= dn
            dx = cam_rot[0, 0] * dlx + cam_rot[0, 1] * dly + cam_rot[0, 2] * dlz
            dy = cam_rot[1, 0] * dlx + cam_rot[1, 1] * dly + cam_rot[1, 2] * dlz
            dz = cam_rot[2, 0] * dlx + cam_rot[2, 1] * dly + cam_rot[2, 2] * dlz
            ox = cam_org[0]
            oy = cam_org[1]
            oz = cam_org[2]

            tp_r = 1.0
            tp_g = 1.0
            tp_b = 1.0
            out_r = 0.0
            out_g = 0.0
            out_b = 0.0
            prev_pdf = 0.0

            for seg in range(max_bounces + 1):
                t, tri, bu, bv = bvh_nearest(
                    nmin, nmax, left, right, start, count, tri_order, tv,
                    tri_part, full_mask, ox, oy, oz, dx, dy, dz, stack)
                if tri < 0:
                    lr, lg, lb, epdf = env_lookup(env_baked, env_pdf,
                                                  env_rot, dx, dy, dz)
                    if seg == 0 or env_nee_prob <= 0.0:
                        w = 1.0
                    else:
                        den = prev_pdf + env_nee_prob * epdf
                        w = prev_pdf / den if den > 0.0 else 1.0
                    out_r += tp_r * lr * w
                    out_g += tp_g * lg * w
                    out_b += tp_b * lb * w
                    break

                pi = tri_part[tri]
                hx = ox + t * dx
                hy = oy + t * dy
                hz = oz + t * dz

                if part_emissive[pi] != 0:
                    er, eg, eb = _backplate_emission(bp_img, tuv, tri, bu, bv)
                    out_r += tp_r * er
                    out_g += tp_g * eg
                    out_b += tp_b * eb
                    break

                gx, gy, gz = _geom_normal(tv, tri)
                if gx * dx + gy * dy + gz * dz > 0.0:
                    gx, gy, gz = -gx, -gy, -gz
                nx, ny, nz = _bary_normal(tn, tri, bu, bv)
                if nx * dx + ny * dy + nz * dz >= 0.0:
                    nx, ny, nz = gx, gy, gz

                br, bg, bb = eval_base_color(pi, hx, hy, hz, mat_base,
                                             tex_kind, tex_a, tex_b,
                                             tex_freq, inv_rows)
                metal = mat_metal[pi]
                rough = mat_rough[pi]
                spc = mat_spec[pi]

                # local frame around the shading normal
                if abs(nx) > 0.9:
                    bx, by, bz = 0.0, 1.0, 0.0
                else:
                    bx, by, bz = 1.0, 0.0, 0.0
                t1x = ny * bz - nz * by
                t1y = nz * bx - nx * bz
                t1z = nx * by - ny * bx
                tl = math.sqrt(t1x * t1x + t1y * t1y + t1z * t1z)
                t1x /= tl
                t1y /= tl
                t1z /= tl
                t2x = ny * t1z - nz * t1y
                t2y = nz * t1x - nx * t1z
                t2z = nx * t1y - ny * t1x

                wox = -dx
                woy = -dy
                woz = -dz
                vlx = wox * t1x + woy * t1y + woz * t1z
                vly = wox * t2x + woy * t2y + woz * t2z
                vlz = wox * nx + woy * ny + woz * nz
                if vlz <= 1e-9:
                    break

                # light sampling with adaptive rate
                if env_nee_prob > 0.0:
                    state, u_nee = rng_uniform(state)
                    if u_nee < env_nee_prob:
                        (state, sdx, sdy, sdz, lpdf,
                         lr, lg, lb) = env_sample(env_baked, env_pdf,
                                                  env_aprob, env_aidx,
                                                  env_row_cos,
                                                  env_rot, state)
                        cos_l = sdx * nx + sdy * ny + sdz * nz
                        cos_g = sdx * gx + sdy * gy + sdz * gz
                        if lpdf > 0.0 and cos_l > 1e-9 and cos_g > 0.0:
                            sox = hx + gx * scene_eps
                            soy = hy + gy * scene_eps
                            soz = hz + gz * scene_eps
                            if not bvh_any_hit(nmin, nmax, left, right, start,
                                               count, tri_order, tv,
                                               sox, soy, soz,
                                               sdx, sdy, sdz, np.inf, stack):
                                llx = sdx * t1x + sdy * t1y + sdz * t1z
                                lly = sdx * t2x + sdy * t2y + sdz * t2z
                                llz = cos_l
                                fr, fg, fb, bpdf = bsdf_eval(
                                    vlx, vly, vlz, llx, lly, llz,
                                    br, bg, bb, metal, rough, spc)
                                sel_pdf = env_nee_prob * lpdf
                                den = sel_pdf + bpdf
                                w = sel_pdf / den if den > 0.0 else 1.0
                                scale = cos_l * w / sel_pdf
                                out_r += tp_r * fr * lr * scale
                                out_g += tp_g * fg * lg * scale
                                out_b += tp_b * fb * lb * scale

                if seg == max_bounces:
                    break

                (state, slx, sly, slz, fr, fg, fb,
                 bpdf) = sample_bsdf(vlx, vly, vlz, br, bg, bb,
                                     metal, rough, spc, state)
                if bpdf <= 0.0 or slz <= 0.0:
                    break
                ndx = slx * t1x + sly * t2x + slz * nx
                ndy = slx * t1y + sly * t2y + slz * ny
                ndz = slx * t1z + sly * t2z + slz * nz
                if ndx * gx + ndy * gy + ndz * gz <= 0.0:
                    break
                wgt = slz / bpdf
                tp_r *= fr * wgt
                tp_g *= fg * wgt
                tp_b *= fb * wgt
                tmax_tp = tp_r
                if tp_g > tmax_tp:
                    tmax_tp = tp_g
                if tp_b > tmax_tp:
                    tmax_tp = tp_b
                if tmax_tp <= 0.0:
                    break

                if seg + 1 > rr_start:
                    q = tmax_tp
                    if q > 0.95:
                        q = 0.95
                    elif q < 0.05:
                        q = 0.05
                    state, u_rr = rng_uniform(state)
                    if u_rr >= q:
                        break
                    tp_r /= q
                    tp_g /= q
                    tp_b /= q

                ox = hx + gx * scene_eps
                oy = hy + gy * scene_eps
                oz = hz + gz * scene_eps
                dx = ndx
                dy = ndy
                dz = ndz
                prev_pdf = bpdf

            total = out_r + out_g + out_b
            if math.isfinite(total):
                acc_r += out_r
                acc_g += out_g
                acc_b += out_b
            else:
                bad += 1

        good = spp - bad
        if good < 1:
            good = 1
        linear_out[py, px, 0] = acc_r / good
        linear_out[py, px, 1] = acc_g / good
        linear_out[py, px, 2] = acc_b / good
        bad_counts[py, px] = bad


@njit(parallel=True, cache=True, error_model="numpy")
def render_ids(id_out, width, height,
               cam_rot, cam_org, f_pix,
               nmin, nmax, left, right, start, count, tri_order,
               tv, tri_part, part_instance, part_mask):
    """One primary ray through each pixel center; nearest masked hit's
    instance id, 0 for background and the backplate."""
    half_w = width * 0.5
    half_h = height * 0.5
    for pix in prange(width * height):
        py = pix // width
        px = pix - py * width
        stack = np.empty(128, np.int32)
        u = px + 0.5
        v = py + 0.5
        dlx = (u - half_w) / f_pix
        dly = (half_h - v) / f_pix
        dlz = -1.0
        dn = math.sqrt(dlx * dlx + dly * dly + dlz * dlz)
        dlx /= dn
        dly /= dn
        dlz /= dn
        dx = cam_rot[0, 0] * dlx + cam_rot[0, 1] * dly + cam_rot[0, 2] * dlz
        dy = cam_rot[1, 0] * dlx + cam_rot[1, 1] * dly + cam_rot[1, 2] * dlz
        dz = cam_rot[2, 0] * dlx + cam_rot[2, 1] * dly + cam_rot[2, 2] * dlz
        t, tri, bu, bv = bvh_nearest(
            nmin, nmax, left, right, start, count, tri_order, tv,
            tri_part, part_mask,
            cam_org[0], cam_org[1], cam_org[2], dx, dy, dz, stack)
        if tri < 0:
            id_out[py, px] = 0
        else:
            id_out[py, px] = part_instance[tri_part[tri]]
