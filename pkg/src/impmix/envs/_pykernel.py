"""Pure-Python episode kernel.

This is the fallback used when the compiled ``_ckernel`` extension is not
available. ``_ckernel.pyx`` is a line-by-line twin: both evaluate the same
floating point operations in the same order, so the two backends return
identical results. Keep them in sync.
"""

import math

CARTPOLE = 0
ACROBOT = 1
CONT_CARTPOLE = 2
CONT_CARTPOLE_HARD = 3

PI = math.pi


def mlp_forward(params, obs, n_in, h1, h2, n_out):
    """tanh-tanh-linear MLP. Parameter layout: W1, b1, W2, b2, W3, b3 (row-major)."""
    o_b1 = h1 * n_in
    o_w2 = o_b1 + h1
    o_b2 = o_w2 + h2 * h1
    o_w3 = o_b2 + h2
    o_b3 = o_w3 + n_out * h2
    a1 = [0.0] * h1
    for j in range(h1):
        acc = params[o_b1 + j]
        row = j * n_in
        for k in range(n_in):
            acc += params[row + k] * obs[k]
        a1[j] = math.tanh(acc)
    a2 = [0.0] * h2
    for j in range(h2):
        acc = params[o_b2 + j]
        row = o_w2 + j * h1
        for k in range(h1):
            acc += params[row + k] * a1[k]
        a2[j] = math.tanh(acc)
    out = [0.0] * n_out
    for j in range(n_out):
        acc = params[o_b3 + j]
        row = o_w3 + j * h2
        for k in range(h2):
            acc += params[row + k] * a2[k]
        out[j] = acc
    return out


def argmax(values):
    best = 0
    for i in range(1, len(values)):
        if values[i] > values[best]:
            best = i
    return best


def cartpole_step(s, force, c):
    """One Euler step. ``s`` = [x, x_dot, theta, theta_dot] (updated in place).

    ``c`` = [gravity, masscart, masspole, half_length, force_mag, tau,
    theta_threshold, x_threshold]. Returns True when the state is terminal.
    """
    gravity = c[0]
    masspole = c[2]
    total_mass = c[1] + masspole
    length = c[3]
    polemass_length = masspole * length
    tau = c[5]
    x = s[0]
    x_dot = s[1]
    theta = s[2]
    theta_dot = s[3]
    costh = math.cos(theta)
    sinth = math.sin(theta)
    temp = (force + polemass_length * theta_dot * theta_dot * sinth) / total_mass
    thetaacc = (gravity * sinth - costh * temp) / (
        length * (4.0 / 3.0 - masspole * costh * costh / total_mass))
    xacc = temp - polemass_length * thetaacc * costh / total_mass
    x = x + tau * x_dot
    x_dot = x_dot + tau * xacc
    theta = theta + tau * theta_dot
    theta_dot = theta_dot + tau * thetaacc
    s[0] = x
    s[1] = x_dot
    s[2] = theta
    s[3] = theta_dot
    return x < -c[7] or x > c[7] or theta < -c[6] or theta > c[6]


def acrobot_dsdt(s, torque, c, out):
    """Time derivative of [theta1, theta2, dtheta1, dtheta2].

    ``c`` = [dt, l1, m1, m2, lc1, lc2, i1, i2, g, max_vel1, max_vel2, torque_mag].
    """
    l1 = c[1]
    m1 = c[2]
    m2 = c[3]
    lc1 = c[4]
    lc2 = c[5]
    i1 = c[6]
    i2 = c[7]
    g = c[8]
    theta1 = s[0]
    theta2 = s[1]
    dtheta1 = s[2]
    dtheta2 = s[3]
    cos2 = math.cos(theta2)
    sin2 = math.sin(theta2)
    d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * cos2) + i1 + i2
    d2 = m2 * (lc2 * lc2 + l1 * lc2 * cos2) + i2
    phi2 = m2 * lc2 * g * math.cos(theta1 + theta2 - PI / 2.0)
    phi1 = (-m2 * l1 * lc2 * dtheta2 * dtheta2 * sin2
            - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * sin2
            + (m1 * lc1 + m2 * l1) * g * math.cos(theta1 - PI / 2.0) + phi2)
    ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * sin2 - phi2) / (
        m2 * lc2 * lc2 + i2 - d2 * d2 / d1)
    ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
    out[0] = dtheta1
    out[1] = dtheta2
    out[2] = ddtheta1
    out[3] = ddtheta2


def acrobot_rk4(s, torque, c, dt):
    """Single classical RK4 step over ``dt`` (in place, no wrapping)."""
    k1 = [0.0] * 4
    k2 = [0.0] * 4
    k3 = [0.0] * 4
    k4 = [0.0] * 4
    tmp = [0.0] * 4
    acrobot_dsdt(s, torque, c, k1)
    for i in range(4):
        tmp[i] = s[i] + dt / 2.0 * k1[i]
    acrobot_dsdt(tmp, torque, c, k2)
    for i in range(4):
        tmp[i] = s[i] + dt / 2.0 * k2[i]
    acrobot_dsdt(tmp, torque, c, k3)
    for i in range(4):
        tmp[i] = s[i] + dt * k3[i]
    acrobot_dsdt(tmp, torque, c, k4)
    for i in range(4):
        s[i] = s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


def _wrap(x, lo, hi):
    span = hi - lo
    while x > hi:
        x = x - span
    while x < lo:
        x = x + span
    return x


def _clip(x, lo, hi):
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


def acrobot_step(s, torque, c):
    """RK4 step, angle wrapping and velocity clipping. Returns True on success."""
    acrobot_rk4(s, torque, c, c[0])
    s[0] = _wrap(s[0], -PI, PI)
    s[1] = _wrap(s[1], -PI, PI)
    s[2] = _clip(s[2], -c[9], c[9])
    s[3] = _clip(s[3], -c[10], c[10])
    return -math.cos(s[0]) - math.cos(s[1] + s[0]) > 1.0


def episode(kind, params, state0, consts, max_steps, h1, h2, n_out):
    """Run one episode; returns (total_reward, steps, timed_out)."""
    params = [float(p) for p in params]
    c = [float(v) for v in consts]
    s = [float(v) for v in state0]
    total = 0.0
    pending = 0.0
    steps = 0
    done = False
    if kind == ACROBOT:
        obs = [0.0] * 6
        n_in = 6
    else:
        obs = [0.0] * 4
        n_in = 4
    while steps < max_steps and not done:
        if kind == ACROBOT:
            obs[0] = math.cos(s[0])
            obs[1] = math.sin(s[0])
            obs[2] = math.cos(s[1])
            obs[3] = math.sin(s[1])
            obs[4] = s[2]
            obs[5] = s[3]
        else:
            obs[0] = s[0]
            obs[1] = s[1]
            obs[2] = s[2]
            obs[3] = s[3]
        out = mlp_forward(params, obs, n_in, h1, h2, n_out)
        if kind == CARTPOLE:
            force = c[4] if argmax(out) == 1 else -c[4]
            done = cartpole_step(s, force, c)
            total += 1.0
        elif kind == ACROBOT:
            torque = (argmax(out) - 1) * c[11]
            done = acrobot_step(s, torque, c)
            total -= 1.0
        else:
            a = _clip(math.tanh(out[0]), -1.0, 1.0)
            done = cartpole_step(s, a * c[4], c)
            if kind == CONT_CARTPOLE:
                total += 1.0
            else:
                pending += 1.0
        steps += 1
    if kind == CONT_CARTPOLE_HARD:
        total += pending
    return total, steps, not done
