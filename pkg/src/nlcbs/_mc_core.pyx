# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Monte-Carlo kernels for polarized photon transport in a slab.

Every kernel processes the sample indices [start, stop) and returns the
per-channel sums and the matrix of cross sums, so that means, standard
errors and covariances can be formed by the caller. Each sample owns a
counter-based random stream derived from (seed, index); the pure-Python
module ``_mc_py`` implements the identical algorithm.
"""
import numpy as np

from libc.math cimport exp, log, sqrt, cos, sin, M_PI
from libc.stdlib cimport malloc, free

ctypedef unsigned long long u64
ctypedef double complex cplx

cdef u64 GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double TWO_M53 = 1.0 / 9007199254740992.0


cdef inline u64 mix64(u64 z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline u64 stream_init(u64 seed, u64 index) nogil:
    return mix64(mix64(seed + GOLDEN) ^ (index * 0xD1B54A32D192ED03ULL))


cdef inline double uniform(u64* s) nogil:
    s[0] += GOLDEN
    return <double>(mix64(s[0]) >> 11) * TWO_M53


cdef inline cplx cexp(cplx w) nogil:
    cdef double r = exp(w.real)
    return r * cos(w.imag) + 1j * (r * sin(w.imag))


cdef inline void draw_step(u64* s, double mu, double* t, double* d) nogil:
    cdef double ct, st, phi
    t[0] = -log(1.0 - uniform(s)) / mu
    ct = 2.0 * uniform(s) - 1.0
    phi = 2.0 * M_PI * uniform(s)
    st = sqrt(1.0 - ct * ct)
    d[0] = st * cos(phi)
    d[1] = st * sin(phi)
    d[2] = ct


cdef inline void project(const double* d, const cplx* v, cplx* out) nogil:
    cdef cplx s = d[0] * v[0] + d[1] * v[1] + d[2] * v[2]
    out[0] = v[0] - s * d[0]
    out[1] = v[1] - s * d[1]
    out[2] = v[2] - s * d[2]


cdef inline cplx dot(const cplx* x, const cplx* y) nogil:
    """x . y* (second argument conjugated)."""
    return x[0] * y[0].conjugate() + x[1] * y[1].conjugate() + x[2] * y[2].conjugate()


cdef inline void zero9(cplx* m) nogil:
    cdef int i
    for i in range(9):
        m[i] = 0


cdef inline void add_outer(cplx* m, cplx w, const cplx* p, const cplx* q, bint conj_q) nogil:
    """m += w p q^T (or w p q^dagger)."""
    cdef int i, j
    cdef cplx qj
    for j in range(3):
        qj = q[j].conjugate() if conj_q else q[j]
        for i in range(3):
            m[3 * i + j] = m[3 * i + j] + w * p[i] * qj


cdef void point_walk(u64* s, double z0, double mu, double b, int cap, bint pol, double f,
                     cplx xfac, cplx arate, cplx srate, const cplx* e1, const cplx* e2,
                     cplx* tl, cplx* tl0, cplx* tx, cplx* tx0) nogil:
    """Random walk from depth z0 towards the surface-connected source/detector.

    tl accumulates sum_k f^k e^{-mu z_k} p_k p_k^dagger and tx accumulates
    sum_k (f xfac)^k e^{-arate T_k - srate z_k} p_k q_k^T, with p_k = M_k e1,
    q_k = M_k e2 and M_k = Delta_{d_1} ... Delta_{d_k}; tl0/tx0 hold the k = 0
    terms alone.
    """
    cdef double m[9]
    cdef double d[3]
    cdef double md[3]
    cdef cplx p[3]
    cdef cplx q[3]
    cdef double z = z0, tt = 0.0, t, znew, fk = 1.0
    cdef cplx xk = 1.0, w
    cdef int k = 0, i, j
    for i in range(9):
        m[i] = 0.0
        tl[i] = 0
        tl0[i] = 0
        tx[i] = 0
        tx0[i] = 0
    m[0] = m[4] = m[8] = 1.0
    for i in range(3):
        p[i] = e1[i]
        q[i] = e2[i]
    w = exp(-mu * z)
    add_outer(tl, w, p, p, True)
    add_outer(tl0, w, p, p, True)
    w = cexp(-srate * z)
    add_outer(tx, w, p, q, False)
    add_outer(tx0, w, p, q, False)
    while k < cap:
        draw_step(s, mu, &t, d)
        znew = z + t * d[2]
        if znew < 0.0 or znew > b:
            break
        k += 1
        z = znew
        tt += t
        if pol:
            for i in range(3):
                md[i] = m[3 * i] * d[0] + m[3 * i + 1] * d[1] + m[3 * i + 2] * d[2]
            for i in range(3):
                for j in range(3):
                    m[3 * i + j] -= md[i] * d[j]
            for i in range(3):
                p[i] = m[3 * i] * e1[0] + m[3 * i + 1] * e1[1] + m[3 * i + 2] * e1[2]
                q[i] = m[3 * i] * e2[0] + m[3 * i + 1] * e2[1] + m[3 * i + 2] * e2[2]
        fk *= f
        xk *= f * xfac
        add_outer(tl, fk * exp(-mu * z), p, p, True)
        add_outer(tx, xk * cexp(-(arate * tt + srate * z)), p, q, False)


cdef double pi_ladder_t(const cplx* u, const cplx* v, const cplx* w) nogil:
    """Ladder polarization weight contracted over walk tensors."""
    cdef cplx tru = u[0] + u[4] + u[8], trv = v[0] + v[4] + v[8]
    cdef cplx tvw = 0, tuw = 0, tvuw = 0, vu
    cdef int a, bb, c
    for a in range(3):
        for bb in range(3):
            tvw = tvw + v[3 * a + bb] * w[3 * bb + a]
            tuw = tuw + u[3 * a + bb] * w[3 * bb + a]
    for a in range(3):
        for c in range(3):
            vu = v[3 * a] * u[c] + v[3 * a + 1] * u[3 + c] + v[3 * a + 2] * u[6 + c]
            tvuw = tvuw + vu * w[3 * c + a]
    return 0.25 * (tru * tvw + trv * tuw + 2.0 * tvuw).real


cdef double pi_crossed_t(const cplx* u, const cplx* vx, const cplx* wy) nogil:
    """Crossed polarization weight contracted over walk tensors."""
    cdef cplx tru = u[0] + u[4] + u[8]
    cdef cplx t1 = 0, t2 = 0, t4 = 0
    cdef int a, c, d
    for a in range(9):
        t1 = t1 + vx[a] * wy[a]
    for a in range(3):
        for c in range(3):
            for d in range(3):
                t2 = t2 + vx[3 * a + d] * (wy[3 * a + c] + wy[3 * c + a]) * u[3 * c + d]
                t4 = t4 + vx[3 * a + d] * wy[3 * c + d] * u[3 * c + a]
    return 0.25 * (tru * t1 + t2 + t4).real


cdef double pi_prop_ladder_t(const cplx* e1, const cplx* e3, const cplx* pt) nogil:
    cdef cplx s = 0
    cdef int a, bb
    for a in range(3):
        for bb in range(3):
            s = s + e1[a] * e3[bb].conjugate() * pt[3 * bb + a]
    cdef cplx o = dot(e1, e3)
    return 0.5 * (dot(e3, e1) * s + (pt[0] + pt[4] + pt[8]) * (o.real * o.real + o.imag * o.imag)).real


cdef double pi_prop_crossed_t(const cplx* e1, const cplx* e3, const cplx* e3t, const cplx* qt) nogil:
    cdef cplx s = 0
    cdef int a, bb
    for a in range(3):
        for bb in range(3):
            s = s + e1[a] * e3t[bb] * (qt[3 * a + bb] + qt[3 * bb + a])
    return 0.5 * (dot(e3, e1) * s).real


cdef double pchip_eval(const double* x, const double* c, int n, double u, double* deriv) nogil:
    """Evaluate a piecewise cubic with coefficients c (4 x (n-1), row-major)."""
    cdef int lo = 0, hi = n - 1, mid
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if x[mid] <= u:
            lo = mid
        else:
            hi = mid
    cdef int m = n - 1
    cdef double dx = u - x[lo]
    cdef double c0 = c[lo], c1 = c[m + lo], c2 = c[2 * m + lo], c3 = c[3 * m + lo]
    deriv[0] = (3.0 * c0 * dx + 2.0 * c1) * dx + c2
    return ((c0 * dx + c1) * dx + c2) * dx + c3


cdef inline double spectrum(double delta, double dp) nogil:
    cdef double e = 2.0 * delta - dp
    return (1.0 + 4.0 * delta * delta) / (4.0 * M_PI * (dp * dp + 0.25) * (e * e + 0.25))


cdef inline void accumulate(double* vals, int nch, double[::1] sums, double[:, ::1] cross):
    cdef int i, j
    for i in range(nch):
        sums[i] += vals[i]
        for j in range(nch):
            cross[i, j] += vals[i] * vals[j]


def _pol_vectors(bint pol):
    if pol:
        el = np.array([1.0, 1.0j, 0.0]) / np.sqrt(2.0)
        return el, el.conj()
    e = np.array([1.0 + 0j, 0.0, 0.0])
    return e, e.copy()


def scatt_kernel(u64 seed, long long start, long long stop, double b, double delta, int mode,
                 double delta_p, bint pol, int cap, double[::1] cdf_x, double[::1] cdf_c):
    """Nonlinear scattering vertex: channels (ladder, crossed).

    mode 0 samples delta' from the inelastic spectrum, mode 1 is the elastic
    variant (delta' = delta with weight -2), mode 2 evaluates the spectral
    density at the fixed delta_p.
    """
    cdef int nch = 2
    sums_np = np.zeros(nch)
    cross_np = np.zeros((nch, nch))
    cdef double[::1] sums = sums_np
    cdef double[:, ::1] cross = cross_np
    el_np, ed_np = _pol_vectors(pol)
    cdef cplx[::1] el_m = el_np
    cdef cplx[::1] ed_m = ed_np
    cdef cplx el[3]
    cdef cplx ed[3]
    cdef int i, ncdf = cdf_x.shape[0]
    for i in range(3):
        el[i] = el_m[i]
        ed[i] = ed_m[i]
    cdef cplx uu[9]
    cdef cplx uu0[9]
    cdef cplx vl[9]
    cdef cplx vl0[9]
    cdef cplx vx[9]
    cdef cplx vx0[9]
    cdef cplx wl[9]
    cdef cplx wl0[9]
    cdef cplx wy[9]
    cdef cplx wy0[9]
    cdef cplx dummy[9]
    cdef cplx dummy0[9]
    cdef cplx vxp[9]
    cdef cplx wyp[9]
    cdef double vals[2]
    cdef u64 s
    cdef long long idx
    cdef double z0, dp, wdp, jac, kappa, f = 1.5 if pol else 1.0
    cdef cplx a, c
    cdef double lad, crs
    for idx in range(start, stop):
        s = stream_init(seed, <u64>idx)
        z0 = b * uniform(&s)
        if mode == 0:
            dp = pchip_eval(&cdf_x[0], &cdf_c[0], ncdf, uniform(&s), &jac)
            wdp = spectrum(delta, dp) * jac
        elif mode == 1:
            dp = delta
            wdp = -2.0
        else:
            dp = delta_p
            wdp = 1.0
        kappa = (1.0 + 4.0 * delta * delta) / (1.0 + 4.0 * dp * dp)
        a = 0.5 * (1.0 + kappa) + 1j * (delta - dp * kappa)
        c = (1.0 + 2j * delta) / (1.0 + 2j * dp)
        point_walk(&s, z0, 1.0, b, cap, pol, f, 1.0, 0.0, 1.0, el, el, uu, uu0, dummy, dummy0)
        point_walk(&s, z0, 1.0, b, cap, pol, f, c, a - 1.0, a, el, ed, vl, vl0, vx, vx0)
        point_walk(&s, z0, kappa, b, cap, pol, f, c / kappa, a - kappa, a, ed, el, wl, wl0, wy, wy0)
        for i in range(9):
            wy[i] = wy[i].conjugate()
            wy0[i] = wy0[i].conjugate()
            vxp[i] = vx[i] - vx0[i]
            wyp[i] = wy[i] - wy0[i]
        lad = 2.0 * pi_ladder_t(uu, vl, wl) - pi_ladder_t(uu0, vl0, wl)
        crs = (4.0 * pi_crossed_t(uu, vx, wy) - 4.0 * pi_crossed_t(uu, vx0, wy0)
               - 2.0 * pi_crossed_t(uu0, vx0, wyp) - 2.0 * pi_crossed_t(uu0, vxp, wy0))
        vals[0] = b * wdp * f * lad
        vals[1] = b * wdp * f * crs
        accumulate(vals, nch, sums, cross)
    return sums_np, cross_np


cdef int probe_walk(u64* s, double z1, double b, int cap, double* zs, double* lens,
                    double* dirs) nogil:
    """Linear path entering at depth z1; returns the number of vertices."""
    cdef int k = 0
    cdef double t, znew
    cdef double d[3]
    zs[0] = z1
    while k + 1 < cap:
        draw_step(s, 1.0, &t, d)
        znew = zs[k] + t * d[2]
        if znew < 0.0 or znew > b:
            break
        k += 1
        zs[k] = znew
        lens[k] = t
        dirs[3 * k] = d[0]
        dirs[3 * k + 1] = d[1]
        dirs[3 * k + 2] = d[2]
    return k + 1


def linear_kernel(u64 seed, long long start, long long stop, double b, bint pol, int cap):
    """Linear backscattering: channels (ladder, crossed, sum n w_n, sum n^2 w_n)."""
    cdef int nch = 4
    sums_np = np.zeros(nch)
    cross_np = np.zeros((nch, nch))
    cdef double[::1] sums = sums_np
    cdef double[:, ::1] cross = cross_np
    el_np, ed_np = _pol_vectors(pol)
    cdef cplx[::1] el_m = el_np
    cdef cplx[::1] ed_m = ed_np
    cdef double* zs = <double*>malloc((cap + 1) * sizeof(double))
    cdef double* lens = <double*>malloc((cap + 1) * sizeof(double))
    cdef double* dirs = <double*>malloc(3 * (cap + 1) * sizeof(double))
    cdef cplx va[3]
    cdef cplx vb[3]
    cdef cplx edc[3]
    cdef cplx amp, ampr
    cdef double vals[4]
    cdef double w0 = -np.expm1(-b), f = 1.5 if pol else 1.0, fn, wn, z1
    cdef int n, nv, i
    cdef u64 s
    cdef long long idx
    try:
        for idx in range(start, stop):
            s = stream_init(seed, <u64>idx)
            z1 = -log(1.0 - uniform(&s) * w0)
            nv = probe_walk(&s, z1, b, cap, zs, lens, dirs)
            for i in range(3):
                va[i] = el_m[i]
                vb[i] = ed_m[i].conjugate()
                edc[i] = ed_m[i].conjugate()
            for i in range(4):
                vals[i] = 0.0
            fn = 1.0
            for n in range(1, nv + 1):
                if n > 1 and pol:
                    project(&dirs[3 * (n - 1)], va, va)
                    project(&dirs[3 * (n - 1)], vb, vb)
                fn *= f
                # amplitude eps_D^* . M eps_L and its reversed partner eps_L . M eps_D^*
                amp = edc[0] * va[0] + edc[1] * va[1] + edc[2] * va[2]
                ampr = el_m[0] * vb[0] + el_m[1] * vb[1] + el_m[2] * vb[2]
                wn = w0 * fn * exp(-zs[n - 1])
                vals[0] += wn * (amp.real * amp.real + amp.imag * amp.imag)
                if n > 1:
                    vals[1] += wn * (amp * ampr.conjugate()).real
                vals[2] += n * wn * (amp.real * amp.real + amp.imag * amp.imag)
                vals[3] += n * n * wn * (amp.real * amp.real + amp.imag * amp.imag)
            accumulate(vals, nch, sums, cross)
    finally:
        free(zs)
        free(lens)
        free(dirs)
    return sums_np, cross_np


def prop_kernel(u64 seed, long long start, long long stop, double b, bint pol, int cap):
    """Nonlinear average propagation: channels (ladder, crossed)."""
    cdef int nch = 2
    sums_np = np.zeros(nch)
    cross_np = np.zeros((nch, nch))
    cdef double[::1] sums = sums_np
    cdef double[:, ::1] cross = cross_np
    el_np, ed_np = _pol_vectors(pol)
    cdef cplx[::1] el_m = el_np
    cdef cplx[::1] ed_m = ed_np
    cdef cplx el[3]
    cdef cplx ed[3]
    cdef int i, j
    for i in range(3):
        el[i] = el_m[i]
        ed[i] = ed_m[i]
    cdef double* zs = <double*>malloc((cap + 1) * sizeof(double))
    cdef double* lens = <double*>malloc((cap + 1) * sizeof(double))
    cdef double* dirs = <double*>malloc(3 * (cap + 1) * sizeof(double))
    # per segment: entry (0), internal steps (1..nv-1); per exit: one segment per prefix
    cdef cplx* e1s = <cplx*>malloc(3 * (cap + 1) * sizeof(cplx))
    cdef cplx* pseg = <cplx*>malloc(9 * (cap + 1) * sizeof(cplx))
    cdef cplx* p0seg = <cplx*>malloc(9 * (cap + 1) * sizeof(cplx))
    cdef cplx* qseg = <cplx*>malloc(9 * (cap + 1) * sizeof(cplx))
    cdef cplx* q0seg = <cplx*>malloc(9 * (cap + 1) * sizeof(cplx))
    cdef double* lseg = <double*>malloc((cap + 1) * sizeof(double))
    cdef cplx px[9]
    cdef cplx px0[9]
    cdef cplx qx[9]
    cdef cplx qx0[9]
    cdef cplx qd[9]
    cdef cplx e3[3]
    cdef cplx e3t[3]
    cdef cplx v[3]
    cdef double zaxis[3]
    zaxis[0] = 0.0
    zaxis[1] = 0.0
    zaxis[2] = 1.0
    cdef double vals[2]
    cdef double w0 = -np.expm1(-b), f = 1.5 if pol else 1.0, fn, en, z1, zp, lad, crs, lx
    cdef double lpn, lq
    cdef int n, nv, l
    cdef u64 s
    cdef long long idx
    try:
        for idx in range(start, stop):
            s = stream_init(seed, <u64>idx)
            z1 = -log(1.0 - uniform(&s) * w0)
            nv = probe_walk(&s, z1, b, cap, zs, lens, dirs)
            # probe polarization on each shared segment, pump tensors on each
            for i in range(3):
                e1s[i] = el[i]
            lseg[0] = z1
            for l in range(1, nv):
                if pol:
                    project(&dirs[3 * l], &e1s[3 * (l - 1)], &e1s[3 * l])
                else:
                    for i in range(3):
                        e1s[3 * l + i] = e1s[3 * (l - 1) + i]
                lseg[l] = lens[l]
            for l in range(nv):
                if l == 0:
                    zp = z1 * uniform(&s)
                else:
                    zp = zs[l - 1] + lens[l] * uniform(&s) * dirs[3 * l + 2]
                point_walk(&s, zp, 1.0, b, cap, pol, f, 1.0, 0.0, 1.0, el, ed,
                           &pseg[9 * l], &p0seg[9 * l], &qseg[9 * l], &q0seg[9 * l])
                for i in range(9):
                    qseg[9 * l + i] = qseg[9 * l + i].conjugate()
                    q0seg[9 * l + i] = q0seg[9 * l + i].conjugate()
            vals[0] = 0.0
            vals[1] = 0.0
            fn = 1.0
            for n in range(1, nv + 1):
                fn *= f
                en = w0 * fn * exp(-zs[n - 1])
                lad = 0.0
                crs = 0.0
                # exit segment of prefix n: vertical from u_n to the surface
                if pol:
                    project(zaxis, &e1s[3 * (n - 1)], v)
                else:
                    for i in range(3):
                        v[i] = e1s[3 * (n - 1) + i]
                lx = zs[n - 1]
                zp = lx * uniform(&s)
                point_walk(&s, zp, 1.0, b, cap, pol, f, 1.0, 0.0, 1.0, el, ed, px, px0, qx, qx0)
                for i in range(3):
                    e3[i] = ed[i]
                lpn = 2.0 * lx * pi_prop_ladder_t(v, e3, px)
                lad += lpn
                if n > 1:
                    crs += lpn
                # shared segments l = n-1 ... 0, walking the detector vectors backwards
                for i in range(3):
                    e3[i] = ed[i]
                    e3t[i] = el[i]
                for l in range(n - 1, -1, -1):
                    if not pol:
                        pass
                    elif l == 0:
                        project(zaxis, e3, e3)
                        project(zaxis, e3t, e3t)
                    else:
                        project(&dirs[3 * l], e3, e3)
                        project(&dirs[3 * l], e3t, e3t)
                    lpn = lseg[l] * pi_prop_ladder_t(&e1s[3 * l], e3, &pseg[9 * l])
                    if l == 0:
                        lpn = 2.0 * lpn - lseg[0] * pi_prop_ladder_t(&e1s[0], e3, &p0seg[0])
                    else:
                        lpn = 2.0 * lpn
                    lad += lpn
                    if n > 1:
                        crs += lpn
                    if l == 0:
                        for i in range(9):
                            qd[i] = qseg[i] - q0seg[i]
                        lq = lseg[0] * pi_prop_crossed_t(&e1s[0], e3, e3t, qd)
                        crs += (4.0 if n > 1 else 2.0) * lq
                    else:
                        crs += 2.0 * lseg[l] * pi_prop_crossed_t(&e1s[3 * l], e3, e3t, &qseg[9 * l])
                vals[0] += en * lad
                vals[1] += en * crs
            accumulate(vals, nch, sums, cross)
    finally:
        free(zs)
        free(lens)
        free(dirs)
        free(e1s)
        free(pseg)
        free(p0seg)
        free(qseg)
        free(q0seg)
        free(lseg)
    return sums_np, cross_np


def stream_uniforms(u64 seed, long long index, int count):
    """First ``count`` uniforms of a sample stream (for cross-backend tests)."""
    cdef u64 s = stream_init(seed, <u64>index)
    out = np.empty(count)
    cdef int i
    for i in range(count):
        out[i] = uniform(&s)
    return out
