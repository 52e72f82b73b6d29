"""Self-contained swing-up and locomotion tasks.

Angles are in radians and measured so that the hanging rest position is
explicit in each task's docstring. Velocities are clamped to documented
bounds so that arbitrary action sequences cannot blow up the integrator.
"""

from __future__ import annotations

import math

import numpy as np

from paramnoise.envs.base import Env, clip, wrap_angle


def rk4(f, y, u, dt):
    """One classical Runge-Kutta step of ``y' = f(y, u)`` with ``u`` held."""
    k1 = f(y, u)
    k2 = f(y + 0.5 * dt * k1, u)
    k3 = f(y + 0.5 * dt * k2, u)
    k4 = f(y + dt * k3, u)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class CartpoleSwingup(Env):
    """Pole on a cart, starting hanging down; pole angle 0 is upright, pi is down.

    Point-mass pole on a massless rod, no friction, RK4 integration. The
    episode terminates when the cart leaves the track ``|x| > track_limit``.
    Dense reward: ``cos(angle)`` in [-1, 1]. Sparse reward: 1 while
    ``cos(angle) > success_cos`` and the cart is on the track.

    Observation: ``[x, x_dot, cos(angle), sin(angle), angle_dot]``.
    """

    base_name = "cartpole-swingup"
    state_dim = 5
    action_dim = 1
    default_dt = 0.02
    defaults = {
        "cart_mass": 1.0,
        "pole_mass": 0.1,
        "pole_length": 0.5,
        "gravity": 9.8,
        "action_limit": 5.0,
        "track_limit": 2.4,
        "max_speed": 10.0,
        "max_angular_speed": 20.0,
        "success_cos": 0.8,
        "init_noise": 0.05,
    }

    def rest_state(self):
        return np.array([0.0, 0.0, math.pi, 0.0])

    def initial_state(self, rng):
        n = self.p["init_noise"]
        x, xd, th, thd = rng.uniform(-n, n, size=4)
        return np.array([x, xd, wrap_angle(math.pi + th), thd])

    def derivatives(self, state, action):
        p = self.p
        _, th, xd, thd = state
        m, M, l, g = p["pole_mass"], p["cart_mass"], p["pole_length"], p["gravity"]
        s, c = math.sin(th), math.cos(th)
        xdd = (action[0] + m * s * (l * thd * thd - g * c)) / (M + m * s * s)
        thdd = (g * s - c * xdd) / l
        return np.array([xd, thd, xdd, thdd])

    def _integrate(self, state, action):
        p = self.p
        # internal order (x, angle, x_dot, angle_dot) keeps the RK4 helper generic
        y = rk4(self.derivatives, np.array([state[0], state[2], state[1], state[3]]), action, self.spec.dt)
        x, th = y[0], wrap_angle(y[1])
        return np.array([x, clip(y[2], p["max_speed"]), th, clip(y[3], p["max_angular_speed"])])

    def is_terminal(self, state):
        return abs(state[0]) > self.p["track_limit"]

    def observe(self):
        x, xd, th, thd = self.state
        return np.array([x, xd, math.cos(th), math.sin(th), thd])

    def dense_reward(self, state, action):
        return math.cos(state[2])

    def success(self, state):
        return math.cos(state[2]) > self.p["success_cos"] and abs(state[0]) <= self.p["track_limit"]

    def energy(self, state):
        """Kinetic plus potential energy, zero at rest hanging down."""
        p = self.p
        _, xd, th, thd = state
        m, M, l, g = p["pole_mass"], p["cart_mass"], p["pole_length"], p["gravity"]
        kinetic = 0.5 * (M + m) * xd * xd + m * l * math.cos(th) * xd * thd + 0.5 * m * l * l * thd * thd
        return kinetic + m * g * l * (1.0 + math.cos(th))


class DoublePendulumSwingup(Env):
    """Two-link pendulum on a fixed pivot, torque at both joints.

    Absolute link angles, 0 is hanging straight down. Point masses at the link
    ends, RK4 integration. Dense reward: tip height over total length, in
    [-1, 1]. Sparse reward: 1 while the tip is above ``success_height`` of the
    total length.

    Observation: ``[cos a1, sin a1, cos a2, sin a2, a1_dot, a2_dot]``.
    """

    base_name = "double-pendulum-swingup"
    state_dim = 6
    action_dim = 2
    default_dt = 0.02
    defaults = {
        "mass1": 0.5,
        "mass2": 0.5,
        "length1": 0.5,
        "length2": 0.5,
        "gravity": 9.8,
        "damping": 0.0,
        "action_limit": 1.0,
        "max_angular_speed": 25.0,
        "success_height": 0.9,
        "init_noise": 0.05,
    }

    def rest_state(self):
        return np.zeros(4)

    def initial_state(self, rng):
        n = self.p["init_noise"]
        return rng.uniform(-n, n, size=4)

    def derivatives(self, state, torque):
        p = self.p
        a1, a2, w1, w2 = state
        m1, m2, l1, l2, g = p["mass1"], p["mass2"], p["length1"], p["length2"], p["gravity"]
        d = a1 - a2
        cd, sd = math.cos(d), math.sin(d)
        # generalized forces for absolute angles: shoulder torque minus elbow reaction
        q1 = torque[0] - torque[1] - p["damping"] * w1
        q2 = torque[1] - p["damping"] * w2
        m11 = (m1 + m2) * l1 * l1
        m12 = m2 * l1 * l2 * cd
        m22 = m2 * l2 * l2
        f1 = q1 - m2 * l1 * l2 * sd * w2 * w2 - (m1 + m2) * g * l1 * math.sin(a1)
        f2 = q2 + m2 * l1 * l2 * sd * w1 * w1 - m2 * g * l2 * math.sin(a2)
        det = m11 * m22 - m12 * m12
        return np.array([w1, w2, (m22 * f1 - m12 * f2) / det, (m11 * f2 - m12 * f1) / det])

    def _integrate(self, state, action):
        a1, a2, w1, w2 = rk4(self.derivatives, state, action, self.spec.dt)
        bound = self.p["max_angular_speed"]
        return np.array([wrap_angle(a1), wrap_angle(a2), clip(w1, bound), clip(w2, bound)])

    def observe(self):
        a1, a2, w1, w2 = self.state
        return np.array([math.cos(a1), math.sin(a1), math.cos(a2), math.sin(a2), w1, w2])

    def tip_height(self, state):
        return -self.p["length1"] * math.cos(state[0]) - self.p["length2"] * math.cos(state[1])

    def dense_reward(self, state, action):
        return self.tip_height(state) / (self.p["length1"] + self.p["length2"])

    def success(self, state):
        return self.tip_height(state) > self.p["success_height"] * (self.p["length1"] + self.p["length2"])

    def energy(self, state):
        """Kinetic plus potential energy, zero at rest hanging down."""
        p = self.p
        a1, a2, w1, w2 = state
        m1, m2, l1, l2, g = p["mass1"], p["mass2"], p["length1"], p["length2"], p["gravity"]
        kinetic = (
            0.5 * (m1 + m2) * l1 * l1 * w1 * w1
            + 0.5 * m2 * l2 * l2 * w2 * w2
            + m2 * l1 * l2 * w1 * w2 * math.cos(a1 - a2)
        )
        potential = (m1 + m2) * g * l1 * (1.0 - math.cos(a1)) + m2 * g * l2 * (1.0 - math.cos(a2))
        return kinetic + potential


class PlanarRunner(Env):
    """Body sliding along a line, pushed by two rotating legs.

    A leg at angle ``phi`` (0 pointing straight down) touches the ground while
    ``|phi| < contact_angle``. A grounded foot grips with viscous friction,
    pushing the body opposite to the foot's horizontal velocity; the same force
    acts back on the leg joint. Semi-implicit Euler. Dense reward: forward
    velocity. Sparse reward: 1 while the body is beyond ``goal_distance``.

    Observation: ``[x, x_dot, cos p1, sin p1, cos p2, sin p2, p1_dot, p2_dot]``.
    """

    base_name = "planar-runner"
    state_dim = 8
    action_dim = 2
    default_dt = 0.02
    defaults = {
        "body_mass": 1.0,
        "leg_length": 0.3,
        "leg_inertia": 0.02,
        "joint_damping": 0.05,
        "grip": 4.0,
        "body_drag": 0.5,
        "contact_angle": 0.6,
        "action_limit": 0.3,
        "max_speed": 5.0,
        "max_joint_speed": 15.0,
        "goal_distance": 5.0,
        "init_noise": 0.05,
    }

    def rest_state(self):
        return np.zeros(6)

    def initial_state(self, rng):
        n = self.p["init_noise"]
        x, xd, p1, p2 = rng.uniform(-n, n, size=4)
        return np.array([x, xd, p1, p2 + math.pi, 0.0, 0.0])

    def _integrate(self, state, action):
        p = self.p
        dt = self.spec.dt
        x, xd, p1, p2, w1, w2 = state
        L = p["leg_length"]
        push = -p["body_drag"] * xd
        legs = []
        for phi, w, u in ((p1, w1, action[0]), (p2, w2, action[1])):
            torque = u - p["joint_damping"] * w
            if abs(phi) < p["contact_angle"]:
                force = -p["grip"] * (xd + L * math.cos(phi) * w)
                push += force
                torque += L * math.cos(phi) * force
            legs.append(clip(w + dt * torque / p["leg_inertia"], p["max_joint_speed"]))
        xd = clip(xd + dt * push / p["body_mass"], p["max_speed"])
        w1, w2 = legs
        return np.array([x + dt * xd, xd, wrap_angle(p1 + dt * w1), wrap_angle(p2 + dt * w2), w1, w2])

    def observe(self):
        x, xd, p1, p2, w1, w2 = self.state
        return np.array([x, xd, math.cos(p1), math.sin(p1), math.cos(p2), math.sin(p2), w1, w2])

    def dense_reward(self, state, action):
        return float(state[1])

    def success(self, state):
        return state[0] > self.p["goal_distance"]
