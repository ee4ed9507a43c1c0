# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled episode kernel. Twin of ``_pykernel.py``; keep the two in sync."""

from libc.math cimport cos, sin, tanh, M_PI

cdef enum:
    MAX_HIDDEN = 64
    MAX_OUT = 8

cdef int CARTPOLE = 0
cdef int ACROBOT = 1
cdef int CONT_CARTPOLE = 2
cdef int CONT_CARTPOLE_HARD = 3


cdef void _mlp(const double[::1] p, const double* obs, int n_in, int h1, int h2,
               int n_out, double* out) noexcept nogil:
    cdef double a1[MAX_HIDDEN]
    cdef double a2[MAX_HIDDEN]
    cdef int o_b1 = h1 * n_in
    cdef int o_w2 = o_b1 + h1
    cdef int o_b2 = o_w2 + h2 * h1
    cdef int o_w3 = o_b2 + h2
    cdef int o_b3 = o_w3 + n_out * h2
    cdef int j, k, row
    cdef double acc
    for j in range(h1):
        acc = p[o_b1 + j]
        row = j * n_in
        for k in range(n_in):
            acc += p[row + k] * obs[k]
        a1[j] = tanh(acc)
    for j in range(h2):
        acc = p[o_b2 + j]
        row = o_w2 + j * h1
        for k in range(h1):
            acc += p[row + k] * a1[k]
        a2[j] = tanh(acc)
    for j in range(n_out):
        acc = p[o_b3 + j]
        row = o_w3 + j * h2
        for k in range(h2):
            acc += p[row + k] * a2[k]
        out[j] = acc


cdef int _argmax(const double* v, int n) noexcept nogil:
    cdef int best = 0
    cdef int i
    for i in range(1, n):
        if v[i] > v[best]:
            best = i
    return best


cdef bint _cartpole_step(double* s, double force, const double[::1] c) noexcept nogil:
    cdef double gravity = c[0]
    cdef double masspole = c[2]
    cdef double total_mass = c[1] + masspole
    cdef double length = c[3]
    cdef double polemass_length = masspole * length
    cdef double tau = c[5]
    cdef double x = s[0]
    cdef double x_dot = s[1]
    cdef double theta = s[2]
    cdef double theta_dot = s[3]
    cdef double costh = cos(theta)
    cdef double sinth = sin(theta)
    cdef double temp = (force + polemass_length * theta_dot * theta_dot * sinth) / total_mass
    cdef double thetaacc = (gravity * sinth - costh * temp) / (
        length * (4.0 / 3.0 - masspole * costh * costh / total_mass))
    cdef double xacc = temp - polemass_length * thetaacc * costh / total_mass
    x = x + tau * x_dot
    x_dot = x_dot + tau * xacc
    theta = theta + tau * theta_dot
    theta_dot = theta_dot + tau * thetaacc
    s[0] = x
    s[1] = x_dot
    s[2] = theta
    s[3] = theta_dot
    return x < -c[7] or x > c[7] or theta < -c[6] or theta > c[6]


cdef void _acrobot_dsdt(const double* s, double torque, const double[::1] c,
                        double* out) noexcept nogil:
    cdef double l1 = c[1]
    cdef double m1 = c[2]
    cdef double m2 = c[3]
    cdef double lc1 = c[4]
    cdef double lc2 = c[5]
    cdef double i1 = c[6]
    cdef double i2 = c[7]
    cdef double g = c[8]
    cdef double theta1 = s[0]
    cdef double theta2 = s[1]
    cdef double dtheta1 = s[2]
    cdef double dtheta2 = s[3]
    cdef double cos2 = cos(theta2)
    cdef double sin2 = sin(theta2)
    cdef double d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * cos2) + i1 + i2
    cdef double d2 = m2 * (lc2 * lc2 + l1 * lc2 * cos2) + i2
    cdef double phi2 = m2 * lc2 * g * cos(theta1 + theta2 - M_PI / 2.0)
    cdef double phi1 = (-m2 * l1 * lc2 * dtheta2 * dtheta2 * sin2
                        - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * sin2
                        + (m1 * lc1 + m2 * l1) * g * cos(theta1 - M_PI / 2.0) + phi2)
    cdef double ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * sin2 - phi2) / (
        m2 * lc2 * lc2 + i2 - d2 * d2 / d1)
    cdef double ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
    out[0] = dtheta1
    out[1] = dtheta2
    out[2] = ddtheta1
    out[3] = ddtheta2


cdef void _acrobot_rk4(double* s, double torque, const double[::1] c, double dt) noexcept nogil:
    cdef double k1[4]
    cdef double k2[4]
    cdef double k3[4]
    cdef double k4[4]
    cdef double tmp[4]
    cdef int i
    _acrobot_dsdt(s, torque, c, k1)
    for i in range(4):
        tmp[i] = s[i] + dt / 2.0 * k1[i]
    _acrobot_dsdt(tmp, torque, c, k2)
    for i in range(4):
        tmp[i] = s[i] + dt / 2.0 * k2[i]
    _acrobot_dsdt(tmp, torque, c, k3)
    for i in range(4):
        tmp[i] = s[i] + dt * k3[i]
    _acrobot_dsdt(tmp, torque, c, k4)
    for i in range(4):
        s[i] = s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


cdef double _wrap(double x, double lo, double hi) noexcept nogil:
    cdef double span = hi - lo
    while x > hi:
        x = x - span
    while x < lo:
        x = x + span
    return x


cdef double _clip(double x, double lo, double hi) noexcept nogil:
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


cdef bint _acrobot_step(double* s, double torque, const double[::1] c) noexcept nogil:
    _acrobot_rk4(s, torque, c, c[0])
    s[0] = _wrap(s[0], -M_PI, M_PI)
    s[1] = _wrap(s[1], -M_PI, M_PI)
    s[2] = _clip(s[2], -c[9], c[9])
    s[3] = _clip(s[3], -c[10], c[10])
    return -cos(s[0]) - cos(s[1] + s[0]) > 1.0


def episode(int kind, const double[::1] params, const double[::1] state0,
            const double[::1] consts, int max_steps, int h1, int h2, int n_out):
    """Run one episode; returns (total_reward, steps, timed_out)."""
    if h1 > MAX_HIDDEN or h2 > MAX_HIDDEN or n_out > MAX_OUT:
        raise ValueError("network too large for the compiled kernel")
    cdef double s[4]
    cdef double obs[6]
    cdef double out[MAX_OUT]
    cdef double total = 0.0
    cdef double pending = 0.0
    cdef double a, force, torque
    cdef int steps = 0
    cdef bint done = False
    cdef int n_in = 6 if kind == ACROBOT else 4
    cdef int i
    for i in range(4):
        s[i] = state0[i]
    with nogil:
        while steps < max_steps and not done:
            if kind == ACROBOT:
                obs[0] = cos(s[0])
                obs[1] = sin(s[0])
                obs[2] = cos(s[1])
                obs[3] = sin(s[1])
                obs[4] = s[2]
                obs[5] = s[3]
            else:
                obs[0] = s[0]
                obs[1] = s[1]
                obs[2] = s[2]
                obs[3] = s[3]
            _mlp(params, obs, n_in, h1, h2, n_out, out)
            if kind == CARTPOLE:
                force = consts[4] if _argmax(out, n_out) == 1 else -consts[4]
                done = _cartpole_step(s, force, consts)
                total += 1.0
            elif kind == ACROBOT:
                torque = (_argmax(out, n_out) - 1) * consts[11]
                done = _acrobot_step(s, torque, consts)
                total -= 1.0
            else:
                a = _clip(tanh(out[0]), -1.0, 1.0)
                done = _cartpole_step(s, a * consts[4], consts)
                if kind == CONT_CARTPOLE:
                    total += 1.0
                else:
                    pending += 1.0
            steps += 1
    if kind == CONT_CARTPOLE_HARD:
        total += pending
    return total, steps, not done
