"""Pure-Python Monte-Carlo kernels.

Statement-for-statement mirror of the compiled ``_mc_core`` extension: the
same random streams, the same order of draws and the same arithmetic, so
the two backends agree to rounding. Slow, but dependency free.
"""
import bisect
import math

import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
TWO_M53 = 1.0 / 9007199254740992.0


def mix64(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


class Stream:
    """Counter-based SplitMix64 stream for one sample."""

    __slots__ = ("state",)

    def __init__(self, seed, index):
        self.state = mix64(mix64((seed + GOLDEN) & MASK) ^ ((index * 0xD1B54A32D192ED03) & MASK))

    def uniform(self):
        self.state = (self.state + GOLDEN) & MASK
        return (mix64(self.state) >> 11) * TWO_M53


def stream_uniforms(seed, index, count):
    s = Stream(seed, index)
    return np.array([s.uniform() for _ in range(count)])


def draw_step(s, mu):
    t = -math.log(1.0 - s.uniform()) / mu
    ct = 2.0 * s.uniform() - 1.0
    phi = 2.0 * math.pi * s.uniform()
    st = math.sqrt(1.0 - ct * ct)
    return t, (st * math.cos(phi), st * math.sin(phi), ct)


def project(d, v):
    s = d[0] * v[0] + d[1] * v[1] + d[2] * v[2]
    return [v[0] - s * d[0], v[1] - s * d[1], v[2] - s * d[2]]


def dot(x, y):
    """x . y* (second argument conjugated)."""
    return (x[0] * y[0].conjugate() + x[1] * y[1].conjugate() + x[2] * y[2].conjugate())


def cexp(w):
    r = math.exp(w.real)
    return complex(r * math.cos(w.imag), r * math.sin(w.imag))


def add_outer(m, w, p, q, conj_q):
    for j in range(3):
        qj = q[j].conjugate() if conj_q else q[j]
        for i in range(3):
            m[3 * i + j] = m[3 * i + j] + w * p[i] * qj


def point_walk(s, z0, mu, b, cap, pol, f, xfac, arate, srate, e1, e2):
    """See ``_mc_core.point_walk``; returns (tl, tl0, tx, tx0)."""
    m = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
    tl = [0j] * 9
    tl0 = [0j] * 9
    tx = [0j] * 9
    tx0 = [0j] * 9
    p = list(e1)
    q = list(e2)
    w = math.exp(-mu * z0)
    add_outer(tl, w, p, p, True)
    add_outer(tl0, w, p, p, True)
    w = cexp(-srate * z0)
    add_outer(tx, w, p, q, False)
    add_outer(tx0, w, p, q, False)
    z, tt, fk, xk, k = z0, 0.0, 1.0, 1 + 0j, 0
    while k < cap:
        t, d = draw_step(s, mu)
        znew = z + t * d[2]
        if znew < 0.0 or znew > b:
            break
        k += 1
        z = znew
        tt += t
        if pol:
            md = [m[3 * i] * d[0] + m[3 * i + 1] * d[1] + m[3 * i + 2] * d[2] for i in range(3)]
            for i in range(3):
                for j in range(3):
                    m[3 * i + j] -= md[i] * d[j]
            p = [m[3 * i] * e1[0] + m[3 * i + 1] * e1[1] + m[3 * i + 2] * e1[2] for i in range(3)]
            q = [m[3 * i] * e2[0] + m[3 * i + 1] * e2[1] + m[3 * i + 2] * e2[2] for i in range(3)]
        fk *= f
        xk *= f * xfac
        add_outer(tl, fk * math.exp(-mu * z), p, p, True)
        add_outer(tx, xk * cexp(-(arate * tt + srate * z)), p, q, False)
    return tl, tl0, tx, tx0


def pi_ladder_t(u, v, w):
    tru = u[0] + u[4] + u[8]
    trv = v[0] + v[4] + v[8]
    tvw = tuw = tvuw = 0j
    for a in range(3):
        for bb in range(3):
            tvw = tvw + v[3 * a + bb] * w[3 * bb + a]
            tuw = tuw + u[3 * a + bb] * w[3 * bb + a]
    for a in range(3):
        for c in range(3):
            vu = v[3 * a] * u[c] + v[3 * a + 1] * u[3 + c] + v[3 * a + 2] * u[6 + c]
            tvuw = tvuw + vu * w[3 * c + a]
    return (0.25 * (tru * tvw + trv * tuw + 2.0 * tvuw)).real


def pi_crossed_t(u, vx, wy):
    tru = u[0] + u[4] + u[8]
    t1 = t2 = t4 = 0j
    for a in range(9):
        t1 = t1 + vx[a] * wy[a]
    for a in range(3):
        for c in range(3):
            for d in range(3):
                t2 = t2 + vx[3 * a + d] * (wy[3 * a + c] + wy[3 * c + a]) * u[3 * c + d]
                t4 = t4 + vx[3 * a + d] * wy[3 * c + d] * u[3 * c + a]
    return (0.25 * (tru * t1 + t2 + t4)).real


def pi_prop_ladder_t(e1, e3, pt):
    s = 0j
    for a in range(3):
        for bb in range(3):
            s = s + e1[a] * e3[bb].conjugate() * pt[3 * bb + a]
    o = dot(e1, e3)
    return (0.5 * (dot(e3, e1) * s + (pt[0] + pt[4] + pt[8]) * (o.real * o.real + o.imag * o.imag))).real


def pi_prop_crossed_t(e1, e3, e3t, qt):
    s = 0j
    for a in range(3):
        for bb in range(3):
            s = s + e1[a] * e3t[bb] * (qt[3 * a + bb] + qt[3 * bb + a])
    return (0.5 * (dot(e3, e1) * s)).real


def pchip_eval(x, c, u):
    n = len(x)
    m = n - 1
    lo = min(max(bisect.bisect_right(x, u) - 1, 0), m - 1)
    dx = u - x[lo]
    c0, c1, c2, c3 = c[lo], c[m + lo], c[2 * m + lo], c[3 * m + lo]
    return ((c0 * dx + c1) * dx + c2) * dx + c3, (3.0 * c0 * dx + 2.0 * c1) * dx + c2


def spectrum(delta, dp):
    e = 2.0 * delta - dp
    return (1.0 + 4.0 * delta * delta) / (4.0 * math.pi * (dp * dp + 0.25) * (e * e + 0.25))


def _pol_vectors(pol):
    if pol:
        r = 1.0 / math.sqrt(2.0)
        el = [complex(r, 0.0), complex(0.0, r), 0j]
        return el, [v.conjugate() for v in el]
    return [1 + 0j, 0j, 0j], [1 + 0j, 0j, 0j]


class _Acc:
    def __init__(self, nch):
        self.sums = np.zeros(nch)
        self.cross = np.zeros((nch, nch))

    def add(self, vals):
        v = np.asarray(vals, dtype=float)
        self.sums += v
        self.cross += np.outer(v, v)


def scatt_kernel(seed, start, stop, b, delta, mode, delta_p, pol, cap, cdf_x, cdf_c):
    acc = _Acc(2)
    el, ed = _pol_vectors(pol)
    x = list(np.asarray(cdf_x, dtype=float))
    c = list(np.asarray(cdf_c, dtype=float))
    f = 1.5 if pol else 1.0
    for idx in range(start, stop):
        s = Stream(seed, idx)
        z0 = b * s.uniform()
        if mode == 0:
            dp, jac = pchip_eval(x, c, s.uniform())
            wdp = spectrum(delta, dp) * jac
        elif mode == 1:
            dp, wdp = delta, -2.0
        else:
            dp, wdp = delta_p, 1.0
        kappa = (1.0 + 4.0 * delta * delta) / (1.0 + 4.0 * dp * dp)
        a = complex(0.5 * (1.0 + kappa), delta - dp * kappa)
        cc = complex(1.0, 2.0 * delta) / complex(1.0, 2.0 * dp)
        uu, uu0, _, _ = point_walk(s, z0, 1.0, b, cap, pol, f, 1 + 0j, 0j, 1 + 0j, el, el)
        vl, vl0, vx, vx0 = point_walk(s, z0, 1.0, b, cap, pol, f, cc, a - 1.0, a, el, ed)
        wl, wl0, wy, wy0 = point_walk(s, z0, kappa, b, cap, pol, f, cc / kappa, a - kappa, a,
                                      ed, el)
        wy = [v.conjugate() for v in wy]
        wy0 = [v.conjugate() for v in wy0]
        vxp = [vx[i] - vx0[i] for i in range(9)]
        wyp = [wy[i] - wy0[i] for i in range(9)]
        lad = 2.0 * pi_ladder_t(uu, vl, wl) - pi_ladder_t(uu0, vl0, wl)
        crs = (4.0 * pi_crossed_t(uu, vx, wy) - 4.0 * pi_crossed_t(uu, vx0, wy0)
               - 2.0 * pi_crossed_t(uu0, vx0, wyp) - 2.0 * pi_crossed_t(uu0, vxp, wy0))
        acc.add((b * wdp * f * lad, b * wdp * f * crs))
    return acc.sums, acc.cross


def probe_walk(s, z1, b, cap):
    zs, lens, dirs = [z1], [0.0], [(0.0, 0.0, 0.0)]
    k = 0
    while k + 1 < cap:
        t, d = draw_step(s, 1.0)
        znew = zs[k] + t * d[2]
        if znew < 0.0 or znew > b:
            break
        k += 1
        zs.append(znew)
        lens.append(t)
        dirs.append(d)
    return zs, lens, dirs


def linear_kernel(seed, start, stop, b, pol, cap):
    acc = _Acc(4)
    el, ed = _pol_vectors(pol)
    edc = [v.conjugate() for v in ed]
    w0 = -math.expm1(-b)
    f = 1.5 if pol else 1.0
    for idx in range(start, stop):
        s = Stream(seed, idx)
        z1 = -math.log(1.0 - s.uniform() * w0)
        zs, lens, dirs = probe_walk(s, z1, b, cap)
        va, vb = list(el), list(edc)
        vals = [0.0, 0.0, 0.0, 0.0]
        fn = 1.0
        for n in range(1, len(zs) + 1):
            if n > 1 and pol:
                va = project(dirs[n - 1], va)
                vb = project(dirs[n - 1], vb)
            fn *= f
            amp = edc[0] * va[0] + edc[1] * va[1] + edc[2] * va[2]
            ampr = el[0] * vb[0] + el[1] * vb[1] + el[2] * vb[2]
            wn = w0 * fn * math.exp(-zs[n - 1])
            a2 = amp.real * amp.real + amp.imag * amp.imag
            vals[0] += wn * a2
            if n > 1:
                vals[1] += wn * (amp * ampr.conjugate()).real
            vals[2] += n * wn * a2
            vals[3] += n * n * wn * a2
        acc.add(vals)
    return acc.sums, acc.cross


ZAXIS = (0.0, 0.0, 1.0)


def prop_kernel(seed, start, stop, b, pol, cap):
    acc = _Acc(2)
    el, ed = _pol_vectors(pol)
    w0 = -math.expm1(-b)
    f = 1.5 if pol else 1.0
    for idx in range(start, stop):
        s = Stream(seed, idx)
        z1 = -math.log(1.0 - s.uniform() * w0)
        zs, lens, dirs = probe_walk(s, z1, b, cap)
        nv = len(zs)
        e1s = [list(el)]
        lseg = [z1]
        for l in range(1, nv):
            e1s.append(project(dirs[l], e1s[l - 1]) if pol else list(e1s[l - 1]))
            lseg.append(lens[l])
        pseg, p0seg, qseg, q0seg = [], [], [], []
        for l in range(nv):
            if l == 0:
                zp = z1 * s.uniform()
            else:
                zp = zs[l - 1] + lens[l] * s.uniform() * dirs[l][2]
            p, p0, q, q0 = point_walk(s, zp, 1.0, b, cap, pol, f, 1 + 0j, 0j, 1 + 0j, el, ed)
            pseg.append(p)
            p0seg.append(p0)
            qseg.append([v.conjugate() for v in q])
            q0seg.append([v.conjugate() for v in q0])
        vals = [0.0, 0.0]
        fn = 1.0
        for n in range(1, nv + 1):
            fn *= f
            en = w0 * fn * math.exp(-zs[n - 1])
            lad = crs = 0.0
            v = project(ZAXIS, e1s[n - 1]) if pol else list(e1s[n - 1])
            lx = zs[n - 1]
            zp = lx * s.uniform()
            px, px0, qx, qx0 = point_walk(s, zp, 1.0, b, cap, pol, f, 1 + 0j, 0j, 1 + 0j, el, ed)
            e3 = list(ed)
            lpn = 2.0 * lx * pi_prop_ladder_t(v, e3, px)
            lad += lpn
            if n > 1:
                crs += lpn
            e3, e3t = list(ed), list(el)
            for l in range(n - 1, -1, -1):
                if pol:
                    axis = ZAXIS if l == 0 else dirs[l]
                    e3 = project(axis, e3)
                    e3t = project(axis, e3t)
                lpn = lseg[l] * pi_prop_ladder_t(e1s[l], e3, pseg[l])
                if l == 0:
                    lpn = 2.0 * lpn - lseg[0] * pi_prop_ladder_t(e1s[0], e3, p0seg[0])
                else:
                    lpn = 2.0 * lpn
                lad += lpn
                if n > 1:
                    crs += lpn
                if l == 0:
                    qd = [qseg[0][i] - q0seg[0][i] for i in range(9)]
                    crs += (4.0 if n > 1 else 2.0) * (lseg[0] * pi_prop_crossed_t(e1s[0], e3, e3t, qd))
                else:
                    crs += 2.0 * lseg[l] * pi_prop_crossed_t(e1s[l], e3, e3t, qseg[l])
            vals[0] += en * lad
            vals[1] += en * crs
        acc.add(vals)
    return acc.sums, acc.cross


def sample_path(seed, index, origin, b, mu, polarization, cap):
    """One isotropic random walk with projected polarization (see montecarlo.PhotonPath)."""
    from .montecarlo import PhotonPath

    s = Stream(seed, index)
    pos = [float(v) for v in origin]
    verts, dirs, lens, pols = [list(pos)], [], [], [list(polarization)]
    eps = list(polarization)
    while len(verts) <= cap:
        t, d = draw_step(s, mu)
        znew = pos[2] + t * d[2]
        if znew < 0.0 or znew > b:
            return PhotonPath(np.array(verts), np.array(dirs).reshape(-1, 3), np.array(lens),
                              np.array(pols), t, np.array(d))
        pos = [pos[0] + t * d[0], pos[1] + t * d[1], znew]
        eps = project(d, eps)
        verts.append(list(pos))
        dirs.append(d)
        lens.append(t)
        pols.append(eps)
    return PhotonPath(np.array(verts), np.array(dirs).reshape(-1, 3), np.array(lens),
                      np.array(pols))
