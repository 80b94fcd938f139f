# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Euler-Lagrange flow over postfix expression programs.

Operation-for-operation mirror of ``hjdiv._flow``.  Programs come from
``hjdiv.expr.compile_programs``; for the alpha family the first dim**2
programs are the metric (row-major) followed by dim**3 skewness programs,
for custom Lagrangians program 0 is L(x, v) and programs 1..dim are the
momentum components when available.
"""

import numpy as np

from libc.math cimport acos, cos, exp, fabs, isfinite, log, pow, sin, sqrt
from libc.stdlib cimport calloc, free

DEF OK = 0
DEF DOMAIN = 1
DEF DEGENERATE = 2
DEF EVAL = 3

cdef double POSITION_STEP = 1e-5
cdef double VELOCITY_STEP = 1e-6
cdef double SECOND_DIFF_STEP = 1e-4
cdef double COND_LIMIT = 1e12
cdef double MARGIN = 1e-9

KIND_ALPHA = 0
KIND_CUSTOM = 1


cdef struct Flow:
    int kind
    int dim
    int use_skew
    int has_grad
    double alpha
    const int* codes
    const double* args
    const int* starts
    const int* constant
    const double* lo
    const double* hi
    double* stack
    double* z
    double* zp
    double* zm
    double* g
    double* dg
    double* t
    double* dt
    double* hess
    double* inv
    double* work
    double* rhs
    double* dldx
    double* dpdx
    double cond


cdef inline double run(Flow* f, int k, const double* z, int* err) noexcept nogil:
    cdef int i, op, sp = 0
    cdef double a, b, r
    cdef double* s = f.stack
    for i in range(f.starts[k], f.starts[k + 1]):
        op = f.codes[i]
        if op == 0:
            s[sp] = f.args[i]
            sp += 1
        elif op == 1:
            s[sp] = z[<int>f.args[i]]
            sp += 1
        elif op <= 6:
            sp -= 1
            b = s[sp]
            a = s[sp - 1]
            if op == 2:
                r = a + b
            elif op == 3:
                r = a - b
            elif op == 4:
                r = a * b
            elif op == 5:
                if b == 0.0:
                    err[0] = EVAL
                    return 0.0
                r = a / b
            else:
                if b == 2.0:
                    r = a * a
                else:
                    r = pow(a, b)
                    if not isfinite(r):
                        err[0] = EVAL
                        return 0.0
            s[sp - 1] = r
        elif op == 7:
            s[sp - 1] = -s[sp - 1]
        else:
            a = s[sp - 1]
            if op == 8:
                r = exp(a)
                if not isfinite(r):
                    err[0] = EVAL
                    return 0.0
            elif op == 9:
                if a <= 0.0:
                    err[0] = EVAL
                    return 0.0
                r = log(a)
            elif op == 10:
                if a < 0.0:
                    err[0] = EVAL
                    return 0.0
                r = sqrt(a)
            elif op == 11:
                r = sin(a)
            elif op == 12:
                r = cos(a)
            else:
                if a < -1.0 or a > 1.0:
                    err[0] = EVAL
                    return 0.0
                r = acos(a)
            s[sp - 1] = r
    r = s[0]
    if not isfinite(r):
        err[0] = EVAL
        return 0.0
    return r


cdef inline int inside(Flow* f, const double* x) noexcept nogil:
    cdef int i
    for i in range(f.dim):
        if not (f.lo[i] + MARGIN < x[i] and x[i] < f.hi[i] - MARGIN):
            return 0
    return 1


cdef inline double step_of(double base, double c) noexcept nogil:
    return base * (fabs(c) if fabs(c) > 1.0 else 1.0)


cdef int solve_regular(Flow* f, double* a) noexcept nogil:
    """Gauss-Jordan inverse of f.hess, 1-norm condition guard, a = inv @ rhs."""
    cdef int n = f.dim, i, j, k, piv
    cdef int w = 2 * n
    cdef double best, tmp, norm_h = 0.0, norm_i = 0.0, col
    cdef double* m = f.work
    for i in range(n):
        for j in range(n):
            m[i * w + j] = f.hess[i * n + j]
            m[i * w + n + j] = 1.0 if i == j else 0.0
    for k in range(n):
        piv = k
        best = fabs(m[k * w + k])
        for i in range(k + 1, n):
            if fabs(m[i * w + k]) > best:
                best = fabs(m[i * w + k])
                piv = i
        if best == 0.0:
            return DEGENERATE
        if piv != k:
            for j in range(w):
                tmp = m[k * w + j]
                m[k * w + j] = m[piv * w + j]
                m[piv * w + j] = tmp
        tmp = m[k * w + k]
        for j in range(w):
            m[k * w + j] /= tmp
        for i in range(n):
            if i != k:
                tmp = m[i * w + k]
                if tmp != 0.0:
                    for j in range(w):
                        m[i * w + j] -= tmp * m[k * w + j]
    for j in range(n):
        col = 0.0
        for i in range(n):
            col += fabs(f.hess[i * n + j])
        if col > norm_h:
            norm_h = col
        col = 0.0
        for i in range(n):
            f.inv[i * n + j] = m[i * w + n + j]
            col += fabs(m[i * w + n + j])
        if col > norm_i:
            norm_i = col
    f.cond = norm_h * norm_i
    if not isfinite(f.cond) or f.cond > COND_LIMIT:
        return DEGENERATE
    for i in range(n):
        tmp = 0.0
        for j in range(n):
            tmp += f.inv[i * n + j] * f.rhs[j]
        a[i] = tmp
    return OK


cdef int eval_fields(Flow* f, const double* x, int first, int count, double* out) noexcept nogil:
    cdef int k, err = OK
    for k in range(count):
        out[k] = run(f, first + k, x, &err)
        if err:
            return err
    return OK


cdef int field_derivative(Flow* f, const double* x, int m, int first, int count, double* out) noexcept nogil:
    """Central difference of programs first..first+count along coordinate m."""
    cdef int k, i, err = OK
    cdef double h = step_of(POSITION_STEP, x[m])
    for i in range(f.dim):
        f.zp[i] = x[i]
        f.zm[i] = x[i]
    f.zp[m] += h
    f.zm[m] -= h
    if not inside(f, f.zp) or not inside(f, f.zm):
        return DOMAIN
    for k in range(count):
        if f.constant[first + k]:
            out[k] = 0.0
            continue
        out[k] = (run(f, first + k, f.zp, &err) - run(f, first + k, f.zm, &err)) / (2 * h)
        if err:
            return err
    return OK


cdef int alpha_acceleration(Flow* f, const double* x, const double* v, double* a) noexcept nogil:
    cdef int d = f.dim, d2 = f.dim * f.dim, d3 = d2 * f.dim
    cdef int m, j, k, l, st
    cdef int use_t = f.use_skew and f.alpha != 0.0
    cdef double acc, vv
    if not inside(f, x):
        return DOMAIN
    st = eval_fields(f, x, 0, d2, f.g)
    if st:
        return st
    for m in range(d):
        st = field_derivative(f, x, m, 0, d2, f.dg + m * d2)
        if st:
            return st
        if use_t:
            st = field_derivative(f, x, m, d2, d3, f.dt + m * d3)
            if st:
                return st
    for j in range(d2):
        f.hess[j] = f.g[j]
    for m in range(d):
        # dL/dx^m = dg[m]vv/2 ; (dp_j/dx^m) v^m accumulated below
        acc = 0.0
        for k in range(d):
            for l in range(d):
                acc += f.dg[m * d2 + k * d + l] * v[k] * v[l]
        f.dldx[m] = 0.5 * acc
    for j in range(d):
        acc = 0.0
        for m in range(d):
            for k in range(d):
                acc += f.dg[m * d2 + j * d + k] * v[k] * v[m]
        f.rhs[j] = f.dldx[j] - acc
    if use_t:
        st = eval_fields(f, x, d2, d3, f.t)
        if st:
            return st
        for j in range(d):
            for k in range(d):
                acc = 0.0
                for l in range(d):
                    acc += f.t[j * d2 + k * d + l] * v[l]
                f.hess[j * d + k] = f.g[j * d + k] + f.alpha * acc
        for m in range(d):
            acc = 0.0
            for j in range(d):
                for k in range(d):
                    vv = v[j] * v[k]
                    for l in range(d):
                        acc += f.dt[m * d3 + j * d2 + k * d + l] * vv * v[l]
            f.dldx[m] = f.alpha / 6 * acc
        for j in range(d):
            acc = 0.0
            for m in range(d):
                for k in range(d):
                    vv = v[k] * v[m]
                    for l in range(d):
                        acc += f.dt[m * d3 + j * d2 + k * d + l] * vv * v[l]
            f.rhs[j] += f.dldx[j] - f.alpha / 2 * acc
    return solve_regular(f, a)


cdef inline void load_z(Flow* f, double* z, const double* x, const double* v) noexcept nogil:
    cdef int i
    for i in range(f.dim):
        z[i] = x[i]
        z[f.dim + i] = v[i]


cdef int custom_hessian(Flow* f, const double* x, const double* v) noexcept nogil:
    cdef int d = f.dim, j, k, err = OK
    cdef double h, sj, sk, l0, val
    if f.has_grad:
        for k in range(d):
            h = step_of(VELOCITY_STEP, v[k])
            load_z(f, f.zp, x, v)
            load_z(f, f.zm, x, v)
            f.zp[d + k] += h
            f.zm[d + k] -= h
            for j in range(d):
                f.hess[j * d + k] = (run(f, 1 + j, f.zp, &err) - run(f, 1 + j, f.zm, &err)) / (2 * h)
            if err:
                return err
    else:
        load_z(f, f.z, x, v)
        l0 = run(f, 0, f.z, &err)
        for j in range(d):
            sj = step_of(SECOND_DIFF_STEP, v[j])
            load_z(f, f.zp, x, v)
            f.zp[d + j] += sj
            val = run(f, 0, f.zp, &err)
            f.zp[d + j] -= 2 * sj
            val += run(f, 0, f.zp, &err)
            f.hess[j * d + j] = (val - 2 * l0) / (sj * sj)
            for k in range(j + 1, d):
                sk = step_of(SECOND_DIFF_STEP, v[k])
                load_z(f, f.zp, x, v)
                f.zp[d + j] += sj
                f.zp[d + k] += sk
                val = run(f, 0, f.zp, &err)
                f.zp[d + k] -= 2 * sk
                val -= run(f, 0, f.zp, &err)
                f.zp[d + j] -= 2 * sj
                val += run(f, 0, f.zp, &err)
                f.zp[d + k] += 2 * sk
                val -= run(f, 0, f.zp, &err)
                val = val / (4 * sj * sk)
                f.hess[j * d + k] = val
                f.hess[k * d + j] = val
        if err:
            return err
    for j in range(d):
        for k in range(j + 1, d):
            val = 0.5 * (f.hess[j * d + k] + f.hess[k * d + j])
            f.hess[j * d + k] = val
            f.hess[k * d + j] = val
    return OK


cdef int custom_acceleration(Flow* f, const double* x, const double* v, double* a) noexcept nogil:
    cdef int d = f.dim, j, m, st, err = OK
    cdef double h, hm, sj, acc, val
    if not inside(f, x):
        return DOMAIN
    st = custom_hessian(f, x, v)
    if st:
        return st
    for m in range(d):
        h = step_of(POSITION_STEP, x[m])
        load_z(f, f.zp, x, v)
        load_z(f, f.zm, x, v)
        f.zp[m] += h
        f.zm[m] -= h
        if not inside(f, f.zp) or not inside(f, f.zm):
            return DOMAIN
        f.dldx[m] = (run(f, 0, f.zp, &err) - run(f, 0, f.zm, &err)) / (2 * h)
        if f.has_grad:
            for j in range(d):
                f.dpdx[j * d + m] = (run(f, 1 + j, f.zp, &err) - run(f, 1 + j, f.zm, &err)) / (2 * h)
        if err:
            return err
    if not f.has_grad:
        for m in range(d):
            hm = step_of(SECOND_DIFF_STEP, x[m])
            load_z(f, f.zp, x, v)
            f.zp[m] += hm
            load_z(f, f.zm, x, v)
            f.zm[m] -= hm
            if not inside(f, f.zp) or not inside(f, f.zm):
                return DOMAIN
            for j in range(d):
                sj = step_of(SECOND_DIFF_STEP, v[j])
                f.zp[d + j] += sj
                f.zm[d + j] += sj
                val = run(f, 0, f.zp, &err) - run(f, 0, f.zm, &err)
                f.zp[d + j] -= 2 * sj
                f.zm[d + j] -= 2 * sj
                val += -run(f, 0, f.zp, &err) + run(f, 0, f.zm, &err)
                f.zp[d + j] += sj
                f.zm[d + j] += sj
                f.dpdx[j * d + m] = val / (4 * sj * hm)
            if err:
                return err
    for j in range(d):
        acc = 0.0
        for m in range(d):
            acc += f.dpdx[j * d + m] * v[m]
        f.rhs[j] = f.dldx[j] - acc
    return solve_regular(f, a)


cdef inline int accel(Flow* f, const double* x, const double* v, double* a) noexcept nogil:
    if f.kind == 0:
        return alpha_acceleration(f, x, v, a)
    return custom_acceleration(f, x, v, a)


cdef class _FlowHandle:
    """Owns the scratch buffers and keeps the program arrays alive."""

    cdef Flow f
    cdef object keep
    cdef int[::1] codes
    cdef double[::1] args
    cdef int[::1] starts
    cdef int[::1] constant
    cdef double[::1] lo
    cdef double[::1] hi

    def __cinit__(self, program, int kind, int dim, double alpha, bint use_skew, bint has_grad, lo, hi):
        cdef int d = dim
        self.codes = np.ascontiguousarray(program.codes, dtype=np.int32)
        self.args = np.ascontiguousarray(program.args, dtype=np.float64)
        self.starts = np.ascontiguousarray(program.starts, dtype=np.int32)
        self.constant = np.ascontiguousarray(program.constant, dtype=np.int32)
        self.lo = np.ascontiguousarray(lo, dtype=np.float64)
        self.hi = np.ascontiguousarray(hi, dtype=np.float64)
        self.f.kind = kind
        self.f.dim = d
        self.f.alpha = alpha
        self.f.use_skew = use_skew
        self.f.has_grad = has_grad
        self.f.codes = &self.codes[0] if self.codes.shape[0] else NULL
        self.f.args = &self.args[0] if self.args.shape[0] else NULL
        self.f.starts = &self.starts[0]
        self.f.constant = &self.constant[0] if self.constant.shape[0] else NULL
        self.f.lo = &self.lo[0]
        self.f.hi = &self.hi[0]
        self.f.stack = <double*>calloc(program.max_stack + 1, sizeof(double))
        self.f.z = <double*>calloc(2 * d, sizeof(double))
        self.f.zp = <double*>calloc(2 * d, sizeof(double))
        self.f.zm = <double*>calloc(2 * d, sizeof(double))
        self.f.g = <double*>calloc(d * d, sizeof(double))
        self.f.dg = <double*>calloc(d * d * d, sizeof(double))
        self.f.t = <double*>calloc(d * d * d, sizeof(double))
        self.f.dt = <double*>calloc(d * d * d * d, sizeof(double))
        self.f.hess = <double*>calloc(d * d, sizeof(double))
        self.f.inv = <double*>calloc(d * d, sizeof(double))
        self.f.work = <double*>calloc(2 * d * d, sizeof(double))
        self.f.rhs = <double*>calloc(d, sizeof(double))
        self.f.dldx = <double*>calloc(d, sizeof(double))
        self.f.dpdx = <double*>calloc(d * d, sizeof(double))
        if (self.f.stack == NULL or self.f.z == NULL or self.f.zp == NULL or self.f.zm == NULL
                or self.f.g == NULL or self.f.dg == NULL or self.f.t == NULL or self.f.dt == NULL
                or self.f.hess == NULL or self.f.inv == NULL or self.f.work == NULL
                or self.f.rhs == NULL or self.f.dldx == NULL or self.f.dpdx == NULL):
            raise MemoryError()

    def __dealloc__(self):
        free(self.f.stack)
        free(self.f.z)
        free(self.f.zp)
        free(self.f.zm)
        free(self.f.g)
        free(self.f.dg)
        free(self.f.t)
        free(self.f.dt)
        free(self.f.hess)
        free(self.f.inv)
        free(self.f.work)
        free(self.f.rhs)
        free(self.f.dldx)
        free(self.f.dpdx)

    def acceleration(self, x, v):
        """Return ``(a, status, cond)`` at a single state."""
        cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
        cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
        out = np.zeros(self.f.dim)
        cdef double[::1] a = out
        cdef int st
        with nogil:
            st = accel(&self.f, &xv[0], &vv[0], &a[0])
        return out, st, self.f.cond

    def integrate(self, x0, v0, double t0, double dt, int n_steps):
        """RK4 over ``n_steps``; returns ``(xs, vs, status, failed_step)``."""
        cdef int d = self.f.dim
        xs_arr = np.empty((n_steps + 1, d))
        vs_arr = np.empty((n_steps + 1, d))
        cdef double[:, ::1] xs = xs_arr
        cdef double[:, ::1] vs = vs_arr
        cdef double[::1] x0v = np.ascontiguousarray(x0, dtype=np.float64)
        cdef double[::1] v0v = np.ascontiguousarray(v0, dtype=np.float64)
        scratch_arr = np.zeros(12 * d)
        cdef double[::1] sc = scratch_arr
        cdef double* x = &sc[0]
        cdef double* v = &sc[d]
        cdef double* a1 = &sc[2 * d]
        cdef double* a2 = &sc[3 * d]
        cdef double* a3 = &sc[4 * d]
        cdef double* a4 = &sc[5 * d]
        cdef double* x2 = &sc[6 * d]
        cdef double* v2 = &sc[7 * d]
        cdef double* x3 = &sc[8 * d]
        cdef double* v3 = &sc[9 * d]
        cdef double* x4 = &sc[10 * d]
        cdef double* v4 = &sc[11 * d]
        cdef double half = 0.5 * dt
        cdef int i, j, st = OK, failed = -1
        for j in range(d):
            x[j] = x0v[j]
            v[j] = v0v[j]
            xs[0, j] = x[j]
            vs[0, j] = v[j]
        with nogil:
            for i in range(n_steps):
                st = accel(&self.f, x, v, a1)
                if st:
                    failed = i
                    break
                for j in range(d):
                    x2[j] = x[j] + half * v[j]
                    v2[j] = v[j] + half * a1[j]
                st = accel(&self.f, x2, v2, a2)
                if st:
                    failed = i
                    break
                for j in range(d):
                    x3[j] = x[j] + half * v2[j]
                    v3[j] = v[j] + half * a2[j]
                st = accel(&self.f, x3, v3, a3)
                if st:
                    failed = i
                    break
                for j in range(d):
                    x4[j] = x[j] + dt * v3[j]
                    v4[j] = v[j] + dt * a3[j]
                st = accel(&self.f, x4, v4, a4)
                if st:
                    failed = i
                    break
                for j in range(d):
                    x[j] = x[j] + dt / 6 * (v[j] + 2 * v2[j] + 2 * v3[j] + v4[j])
                    v[j] = v[j] + dt / 6 * (a1[j] + 2 * a2[j] + 2 * a3[j] + a4[j])
                    xs[i + 1, j] = x[j]
                    vs[i + 1, j] = v[j]
            if st == OK and not inside(&self.f, x):
                st = DOMAIN
                failed = n_steps
        return xs_arr, vs_arr, st, failed
