"""FGA trajectories with surface hopping.

A trajectory carries the frozen-Gaussian variables (Q, P, S, A, J) on the
surface it currently follows. After every RK4 step the hopping coefficient

    tau = -P d10(Q)  on surface 0,     tau = -P d01(Q)  on surface 1

is evaluated at the new state; the trajectory switches surface with
probability dt |tau|, picking up the phase tau/|tau|, while the log-weight
accumulates the integral of |tau| (trapezoid rule per step). Q, P, S, A and J
are continuous across hops and no momentum adjustment is made.

Ensembles are stored as structure-of-arrays. On the numba backend each
trajectory runs independently inside a ``prange`` loop; on the numpy backend
all trajectories advance in lock-step as array operations. Both read the same
counter-based random streams, so a trajectory's path does not depend on the
backend's scheduling.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from ._backend import USE_NUMBA, jit, prange
from .errors import DegenerateGap, HopProbabilityOverflow, IllConditionedZ
from .model import GAP_TOL, ModelPotential, surface_data

# hopping modes
BERNOULLI = 0
CLOCK = 1
PRESCRIBED = 2
_MODES = {"bernoulli": BERNOULLI, "clock": CLOCK, "prescribed": PRESCRIBED}

# per-trajectory status codes
OK = 0
ILL_Z = 1
HOP_OVERFLOW = 2
DEGENERATE = 3

Z_TOL = 1e-12
HOP_CAPACITY = 16


# ---------------------------------------------------------------------------
# kernels shared by scalars and arrays


@jit
def rhs(sgn, P, A, J11, J12, J21, J22, m, m1, m2, g, g1, g2):
    """Right-hand side of the FGA system on the surface with E = m + sgn g.

    Returns (dQ, dP, dS, dA, dJ11, dJ12, dJ21, dJ22). The diagonal coupling
    d_ll vanishes in the real gauge, so the -A d_ll P term drops.
    """
    E = m + sgn * g
    E1 = m1 + sgn * g1
    E2 = m2 + sgn * g2
    Z = (J11 + J22) + 1j * (J21 - J12)
    dzQ = J11 - 1j * J12
    dzP = J21 - 1j * J22
    dA = 0.5 * A * (dzP - 1j * dzQ * E2) / Z
    return P, -E1, 0.5 * P * P - E, dA, J21, J22, -E2 * J11, -E2 * J12


@jit
def rk4(kind, params, sgn, dt, Q, P, S, A, J11, J12, J21, J22,
        m, m1, m2, g, g1, g2):
    """One classical RK4 step; the surface data at Q is passed in as stage 1.

    Returns the new state followed by the surface data at the new Q, which
    the caller reuses for the hop test and as the next step's first stage.
    """
    h = 0.5 * dt
    k1 = rhs(sgn, P, A, J11, J12, J21, J22, m, m1, m2, g, g1, g2)

    q2 = Q + h * k1[0]
    a, b, c, d, e, f, _ = surface_data(kind, params, q2)
    k2 = rhs(sgn, P + h * k1[1], A + h * k1[3], J11 + h * k1[4], J12 + h * k1[5],
             J21 + h * k1[6], J22 + h * k1[7], a, b, c, d, e, f)

    q3 = Q + h * k2[0]
    a, b, c, d, e, f, _ = surface_data(kind, params, q3)
    k3 = rhs(sgn, P + h * k2[1], A + h * k2[3], J11 + h * k2[4], J12 + h * k2[5],
             J21 + h * k2[6], J22 + h * k2[7], a, b, c, d, e, f)

    q4 = Q + dt * k3[0]
    a, b, c, d, e, f, _ = surface_data(kind, params, q4)
    k4 = rhs(sgn, P + dt * k3[1], A + dt * k3[3], J11 + dt * k3[4], J12 + dt * k3[5],
             J21 + dt * k3[6], J22 + dt * k3[7], a, b, c, d, e, f)

    w = dt / 6.0
    Qn = Q + w * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    Pn = P + w * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    Sn = S + w * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    An = A + w * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
    J11n = J11 + w * (k1[4] + 2.0 * k2[4] + 2.0 * k3[4] + k4[4])
    J12n = J12 + w * (k1[5] + 2.0 * k2[5] + 2.0 * k3[5] + k4[5])
    J21n = J21 + w * (k1[6] + 2.0 * k2[6] + 2.0 * k3[6] + k4[6])
    J22n = J22 + w * (k1[7] + 2.0 * k2[7] + 2.0 * k3[7] + k4[7])
    sd = surface_data(kind, params, Qn)
    return (Qn, Pn, Sn, An, J11n, J12n, J21n, J22n,
            sd[0], sd[1], sd[2], sd[3], sd[4], sd[5], sd[6])


# ---------------------------------------------------------------------------
# numba ensemble kernel


@jit(parallel=True)
def _advance_numba(kind, params, dt, nsteps, t0, step0, mode,
                   Q, P, S, A, J, surf, phase, logw, nhops, hop_t,
                   counter, clock, keys, status,
                   presc_steps, presc_n, presc_next, prod_tau):
    n_traj = Q.shape[0]
    cap = hop_t.shape[1]
    for i in prange(n_traj):
        if status[i] != 0:
            continue
        q = Q[i]
        p = P[i]
        s = S[i]
        a = A[i]
        j11 = J[i, 0]
        j12 = J[i, 1]
        j21 = J[i, 2]
        j22 = J[i, 3]
        sgn = 2.0 * surf[i] - 1.0
        m, m1, m2, g, g1, g2, th1 = surface_data(kind, params, q)
        if mode == 2:
            while presc_next[i] < presc_n[i] and presc_steps[i, presc_next[i]] == step0:
                tau = -sgn * p * th1
                prod_tau[i] *= tau
                sgn = -sgn
                k = nhops[i]
                if k < cap:
                    hop_t[i, k] = t0
                nhops[i] = k + 1
                presc_next[i] += 1
        rate0 = abs(p * th1)
        for n in range(nsteps):
            (q, p, s, a, j11, j12, j21, j22,
             m, m1, m2, g, g1, g2, th1) = rk4(kind, params, sgn, dt, q, p, s, a,
                                              j11, j12, j21, j22, m, m1, m2, g, g1, g2)
            if not g > 0.5 * GAP_TOL:
                status[i] = 3
                break
            zabs = np.hypot(j11 + j22, j21 - j12)
            jn = np.sqrt(j11 * j11 + j12 * j12 + j21 * j21 + j22 * j22)
            if not zabs > Z_TOL * jn:
                status[i] = 1
                break
            tau = -sgn * p * th1
            rate = abs(tau)
            t_now = t0 + (n + 1) * dt
            hop = False
            if mode == 0:
                logw[i] += 0.5 * dt * (rate0 + rate)
                prob = dt * rate
                if prob >= 1.0:
                    status[i] = 2
                    break
                u = rng.uniform(keys[i], counter[i])
                counter[i] += np.uint64(1)
                hop = u < prob
                if hop:
                    phase[i] *= tau / rate
            elif mode == 1:
                inc = 0.5 * dt * (rate0 + rate)
                logw[i] += inc
                clock[i] -= inc
                if clock[i] <= 0.0:
                    hop = True
                    if rate > 0.0:
                        phase[i] *= tau / rate
                    u = rng.uniform(keys[i], counter[i])
                    counter[i] += np.uint64(1)
                    clock[i] = -np.log1p(-u)
            else:
                gstep = step0 + n + 1
                while presc_next[i] < presc_n[i] and presc_steps[i, presc_next[i]] == gstep:
                    prod_tau[i] *= -sgn * p * th1
                    sgn = -sgn
                    k = nhops[i]
                    if k < cap:
                        hop_t[i, k] = t_now
                    nhops[i] = k + 1
                    presc_next[i] += 1
            if hop:
                sgn = -sgn
                k = nhops[i]
                if k < cap:
                    hop_t[i, k] = t_now
                nhops[i] = k + 1
            rate0 = rate
        Q[i] = q
        P[i] = p
        S[i] = s
        A[i] = a
        J[i, 0] = j11
        J[i, 1] = j12
        J[i, 2] = j21
        J[i, 3] = j22
        surf[i] = 1 if sgn > 0 else 0


# ---------------------------------------------------------------------------
# numpy ensemble kernel


def _record_hops(idx, t_now, nhops, hop_t):
    k = nhops[idx]
    room = k < hop_t.shape[1]
    hop_t[idx[room], k[room]] = t_now
    nhops[idx] = k + 1


def _advance_numpy(kind, params, dt, nsteps, t0, step0, mode,
                   Q, P, S, A, J, surf, phase, logw, nhops, hop_t,
                   counter, clock, keys, status,
                   presc_steps, presc_n, presc_next, prod_tau):
    idx = np.flatnonzero(status == 0)
    if idx.size == 0:
        return
    q, p, s, a = Q[idx], P[idx], S[idx], A[idx]
    j11, j12, j21, j22 = (J[idx, c].copy() for c in range(4))
    sgn = 2.0 * surf[idx] - 1.0
    m, m1, m2, g, g1, g2, th1 = surface_data(kind, params, q)

    def prescribed_hops(gstep, t_now, live):
        while True:
            nxt = presc_next[idx]
            pending = live & (nxt < presc_n[idx])
            pending[pending] = presc_steps[idx[pending], nxt[pending]] == gstep
            if not pending.any():
                return
            prod_tau[idx[pending]] *= -sgn[pending] * p[pending] * th1[pending]
            sgn[pending] = -sgn[pending]
            _record_hops(idx[pending], t_now, nhops, hop_t)
            presc_next[idx[pending]] += 1

    live = np.ones(idx.size, dtype=bool)
    if mode == PRESCRIBED:
        prescribed_hops(step0, t0, live)
    rate0 = np.abs(p * th1)
    for n in range(nsteps):
        out = rk4(kind, params, sgn, dt, q, p, s, a, j11, j12, j21, j22, m, m1, m2, g, g1, g2)
        # frozen trajectories keep their state
        q, p, s, a, j11, j12, j21, j22, m, m1, m2, g, g1, g2, th1 = (
            np.where(live, new, old) for new, old in
            zip(out, (q, p, s, a, j11, j12, j21, j22, m, m1, m2, g, g1, g2, th1)))
        bad = live & ~(g > 0.5 * GAP_TOL)
        status[idx[bad]] = DEGENERATE
        live &= ~bad
        zabs = np.hypot(j11 + j22, j21 - j12)
        jn = np.sqrt(j11 ** 2 + j12 ** 2 + j21 ** 2 + j22 ** 2)
        bad = live & ~(zabs > Z_TOL * jn)
        status[idx[bad]] = ILL_Z
        live &= ~bad
        tau = -sgn * p * th1
        rate = np.abs(tau)
        t_now = t0 + (n + 1) * dt
        if mode == BERNOULLI:
            prob = dt * rate
            bad = live & (prob >= 1.0)
            status[idx[bad]] = HOP_OVERFLOW
            live &= ~bad
            logw[idx[live]] += 0.5 * dt * (rate0 + rate)[live]
            u = rng.uniforms(keys[idx[live]], counter[idx[live]])
            counter[idx[live]] += np.uint64(1)
            hop = np.zeros_like(live)
            hop[live] = u < prob[live]
            phase[idx[hop]] *= tau[hop] / rate[hop]
        elif mode == CLOCK:
            inc = 0.5 * dt * (rate0 + rate)
            logw[idx[live]] += inc[live]
            clock[idx[live]] -= inc[live]
            hop = live & (clock[idx] <= 0.0)
            ph = hop & (rate > 0.0)
            phase[idx[ph]] *= tau[ph] / rate[ph]
            u = rng.uniforms(keys[idx[hop]], counter[idx[hop]])
            counter[idx[hop]] += np.uint64(1)
            clock[idx[hop]] = -np.log1p(-u)
        else:
            hop = np.zeros_like(live)
            prescribed_hops(step0 + n + 1, t_now, live)
        if hop.any():
            sgn[hop] = -sgn[hop]
            _record_hops(idx[hop], t_now, nhops, hop_t)
        rate0 = rate
        if not live.any():
            break
    Q[idx], P[idx], S[idx], A[idx] = q, p, s, a
    J[idx, 0], J[idx, 1], J[idx, 2], J[idx, 3] = j11, j12, j21, j22
    surf[idx] = (sgn > 0).astype(surf.dtype)


_advance = _advance_numba if USE_NUMBA else _advance_numpy


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class Ensemble:
    """Structure-of-arrays state of many trajectories at a common time."""

    Q: np.ndarray
    P: np.ndarray
    S: np.ndarray
    A: np.ndarray
    J: np.ndarray
    surface: np.ndarray
    phase: np.ndarray
    log_weight: np.ndarray
    n_hops: np.ndarray
    hop_times: np.ndarray
    counter: np.ndarray
    clock: np.ndarray
    keys: np.ndarray
    status: np.ndarray
    prod_tau: np.ndarray
    presc_steps: np.ndarray
    presc_n: np.ndarray
    presc_next: np.ndarray
    t: float = 0.0
    step: int = 0
    mode: int = BERNOULLI

    def __len__(self):
        return self.Q.shape[0]

    @classmethod
    def start(cls, q, p, amplitude, keys, mode="bernoulli", hop_capacity=HOP_CAPACITY,
              hop_steps=None):
        """Fresh ensemble on surface 0 with J = I.

        ``hop_steps`` (prescribed mode) is a list of per-trajectory sequences
        of global step indices at which to switch surface.
        """
        q = np.ascontiguousarray(q, dtype=float).reshape(-1)
        n = q.size
        mode_id = _MODES[mode] if isinstance(mode, str) else int(mode)
        J = np.zeros((n, 4))
        J[:, 0] = 1.0
        J[:, 3] = 1.0
        keys = np.ascontiguousarray(keys, dtype=np.uint64).reshape(-1)
        if keys.size != n:
            raise ValueError("one stream key per trajectory is required")
        presc_n = np.zeros(n, dtype=np.int64)
        width = 1
        if hop_steps is not None:
            presc_n[:] = [len(h) for h in hop_steps]
            width = max(1, int(presc_n.max(initial=0)))
        presc_steps = np.full((n, width), -1, dtype=np.int64)
        if hop_steps is not None:
            for i, h in enumerate(hop_steps):
                presc_steps[i, :len(h)] = h
        ens = cls(
            Q=q.copy(),
            P=np.ascontiguousarray(np.broadcast_to(np.asarray(p, dtype=float), (n,))).copy(),
            S=np.zeros(n),
            A=np.ascontiguousarray(np.broadcast_to(np.asarray(amplitude, dtype=complex), (n,))).copy(),
            J=J,
            surface=np.zeros(n, dtype=np.int64),
            phase=np.ones(n, dtype=complex),
            log_weight=np.zeros(n),
            n_hops=np.zeros(n, dtype=np.int64),
            hop_times=np.full((n, hop_capacity), np.nan),
            counter=np.zeros(n, dtype=np.uint64),
            clock=np.zeros(n),
            keys=keys.copy(),
            status=np.zeros(n, dtype=np.int64),
            prod_tau=np.ones(n, dtype=complex),
            presc_steps=presc_steps,
            presc_n=presc_n,
            presc_next=np.zeros(n, dtype=np.int64),
            mode=mode_id,
        )
        if mode_id == CLOCK:
            u = rng.uniforms(ens.keys, ens.counter)
            ens.counter += np.uint64(1)
            ens.clock[:] = -np.log1p(-u)
        return ens

    def _run(self, model: ModelPotential, dt: float, nsteps: int):
        _advance(int(model.kind), model.params, float(dt), int(nsteps), float(self.t),
                 int(self.step), int(self.mode),
                 self.Q, self.P, self.S, self.A, self.J, self.surface, self.phase,
                 self.log_weight, self.n_hops, self.hop_times, self.counter,
                 self.clock, self.keys, self.status,
                 self.presc_steps, self.presc_n, self.presc_next, self.prod_tau)

    def advance_to(self, t_target: float, dt: float, model: ModelPotential, raise_errors=True):
        """Step every trajectory to ``t_target``; the last step may be partial."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        span = t_target - self.t
        if span < -1e-12 * max(1.0, abs(t_target)):
            raise ValueError("cannot step backwards in time")
        nfull = int(np.floor(span / dt + 1e-9))
        if nfull > 0:
            self._run(model, dt, nfull)
            self.step += nfull
            self.t = self.t + nfull * dt
        rest = t_target - self.t
        if rest > 1e-9 * dt:
            self._run(model, rest, 1)
            self.step += 1
        self.t = float(t_target)
        if raise_errors:
            self.raise_on_failure()
        return self

    def raise_on_failure(self, context: str = ""):
        bad = np.flatnonzero(self.status)
        if bad.size == 0:
            return
        i = int(bad[0])
        code = int(self.status[i])
        where = f"trajectory {i}{context} at Q={self.Q[i]:.6g}, P={self.P[i]:.6g}, t<={self.t:.6g}"
        if code == HOP_OVERFLOW:
            raise HopProbabilityOverflow(
                f"hop probability dt*|tau| reached 1 on {where}; reduce dt "
                f"({bad.size} trajectories affected)")
        if code == ILL_Z:
            raise IllConditionedZ(f"Z became singular on {where} ({bad.size} affected)")
        raise DegenerateGap(f"adiabatic gap closed on {where} ({bad.size} affected)")

    def Z(self) -> np.ndarray:
        J = self.J
        return (J[:, 0] + J[:, 3]) + 1j * (J[:, 2] - J[:, 1])

    def symplectic_defect(self) -> np.ndarray:
        """max-norm of J^T Omega J - Omega per trajectory (m = 1: |det J - 1|)."""
        J = self.J
        return np.abs(J[:, 0] * J[:, 3] - J[:, 1] * J[:, 2] - 1.0)

    def state(self, i: int) -> "TrajectoryState":
        k = min(int(self.n_hops[i]), self.hop_times.shape[1])
        return TrajectoryState(
            t=self.t, surface=int(self.surface[i]), Q=float(self.Q[i]), P=float(self.P[i]),
            S=float(self.S[i]), A=complex(self.A[i]),
            J=self.J[i].reshape(2, 2).copy(), hop_phase=complex(self.phase[i]),
            log_weight=float(self.log_weight[i]), hops=list(self.hop_times[i, :k]),
            key=int(self.keys[i]), counter=int(self.counter[i]),
            clock=float(self.clock[i]), tau_product=complex(self.prod_tau[i]),
        )

    @classmethod
    def from_states(cls, states, mode="bernoulli"):
        n = len(states)
        ens = cls.start([s.Q for s in states], [s.P for s in states],
                        [s.A for s in states], [s.key for s in states], mode=mode)
        for i, s in enumerate(states):
            ens.S[i] = s.S
            ens.J[i] = np.asarray(s.J, dtype=float).reshape(4)
            ens.surface[i] = s.surface
            ens.phase[i] = s.hop_phase
            ens.log_weight[i] = s.log_weight
            ens.n_hops[i] = len(s.hops)
            ens.hop_times[i, :min(len(s.hops), HOP_CAPACITY)] = s.hops[:HOP_CAPACITY]
            ens.counter[i] = s.counter
            ens.prod_tau[i] = s.tau_product
            if ens.mode == CLOCK:
                ens.clock[i] = s.clock
        if n:
            ens.t = float(states[0].t)
        return ens


# ---------------------------------------------------------------------------
# single-trajectory interface


@dataclass(eq=False)
class TrajectoryState:
    t: float
    surface: int
    Q: float
    P: float
    S: float
    A: complex
    J: np.ndarray = field(default_factory=lambda: np.eye(2))
    hop_phase: complex = 1.0 + 0.0j
    log_weight: float = 0.0
    hops: list = field(default_factory=list)
    key: int = 0
    counter: int = 0
    clock: float = 0.0
    tau_product: complex = 1.0 + 0.0j

    def __eq__(self, other):
        if not isinstance(other, TrajectoryState):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in self.__dataclass_fields__)

    @property
    def Z(self) -> complex:
        J = self.J
        return complex((J[0, 0] + J[1, 1]) + 1j * (J[1, 0] - J[0, 1]))

    def symplectic_defect(self) -> float:
        omega = np.array([[0.0, 1.0], [-1.0, 0.0]])
        return float(np.max(np.abs(self.J.T @ omega @ self.J - omega)))


def initial_state(q: float, p: float, amplitude: complex, key: int = 0) -> TrajectoryState:
    return TrajectoryState(t=0.0, surface=0, Q=float(q), P=float(p), S=0.0,
                           A=complex(amplitude), key=int(key))


def time_derivative(state: TrajectoryState, model: ModelPotential):
    """d/dt of (Q, P, S, A, J) as a tuple (dQ, dP, dS, dA, dJ)."""
    m, m1, m2, g, g1, g2, _ = surface_data(int(model.kind), model.params, float(state.Q))
    if not g > 0.5 * GAP_TOL:
        raise DegenerateGap(f"adiabatic gap closed at Q={state.Q}")
    J = state.J
    if not abs(state.Z) > Z_TOL * np.linalg.norm(J):
        raise IllConditionedZ(f"Z is singular at t={state.t}")
    sgn = 2.0 * state.surface - 1.0
    dQ, dP, dS, dA, d11, d12, d21, d22 = rhs(
        sgn, float(state.P), complex(state.A), J[0, 0], J[0, 1], J[1, 0], J[1, 1],
        m, m1, m2, g, g1, g2)
    return dQ, dP, dS, dA, np.array([[d11, d12], [d21, d22]])


def rk4_step(state: TrajectoryState, dt: float, model: ModelPotential) -> TrajectoryState:
    """Deterministic RK4 step of (Q, P, S, A, J); surface and hop data untouched."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0:
        return _copy(state)
    kind, params = int(model.kind), model.params
    sd = surface_data(kind, params, float(state.Q))
    J = state.J
    out = rk4(kind, params, 2.0 * state.surface - 1.0, float(dt), float(state.Q),
              float(state.P), float(state.S), complex(state.A),
              J[0, 0], J[0, 1], J[1, 0], J[1, 1], *sd[:6])
    new = _copy(state)
    new.t = state.t + dt
    new.Q, new.P, new.S, new.A = float(out[0]), float(out[1]), float(out[2]), complex(out[3])
    new.J = np.array([[out[4], out[5]], [out[6], out[7]]])
    if not abs(new.Z) > Z_TOL * np.linalg.norm(new.J):
        raise IllConditionedZ(f"Z is singular at t={new.t}")
    return new


def hop_rate(state: TrajectoryState, model: ModelPotential):
    """(|tau|, tau) for a hop away from the current surface."""
    g, th1 = _gap_and_coupling(model, state.Q)
    if not g > 0.5 * GAP_TOL:
        raise DegenerateGap(f"adiabatic gap closed at Q={state.Q}")
    tau = -(2.0 * state.surface - 1.0) * state.P * th1
    return abs(tau), complex(tau)


def _gap_and_coupling(model, x):
    sd = surface_data(int(model.kind), model.params, float(x))
    return sd[3], sd[6]


def _copy(state: TrajectoryState) -> TrajectoryState:
    new = TrajectoryState(**{k: getattr(state, k) for k in state.__dataclass_fields__})
    new.J = np.array(state.J, dtype=float)
    new.hops = list(state.hops)
    return new


def stochastic_step(state: TrajectoryState, dt: float, model: ModelPotential,
                    mode: str = "bernoulli") -> TrajectoryState:
    """RK4 step, weight update and one hop test."""
    ens = Ensemble.from_states([state], mode=mode)
    ens._run(model, dt, 1)
    ens.t = state.t + dt
    ens.raise_on_failure()
    return ens.state(0)


def evolve(z0, copy_amplitude: complex, t_final: float, dt: float, model: ModelPotential,
           seed: int = 0, mode: str = "bernoulli", trace: list | None = None) -> TrajectoryState:
    """One stochastic trajectory from (q, p) on surface 0.

    When ``trace`` is a list, one row (t, surface, Q, P, Re A, Im A, log_weight)
    is appended per step.
    """
    if t_final < 0:
        raise ValueError("t_final must be non-negative")
    q, p = z0
    key = rng.derive_key(seed, 0)
    ens = Ensemble.start([q], [p], [copy_amplitude], [key], mode=mode)
    if trace is None:
        ens.advance_to(t_final, dt, model)
    else:
        _trace_row(ens, trace)
        while ens.t < t_final - 1e-12:
            ens.advance_to(min(ens.t + dt, t_final), dt, model)
            _trace_row(ens, trace)
    return ens.state(0)


def _trace_row(ens, rows):
    rows.append((ens.t, int(ens.surface[0]), float(ens.Q[0]), float(ens.P[0]),
                 float(ens.A[0].real), float(ens.A[0].imag), float(ens.log_weight[0])))


def hop_steps(hop_times, dt: float, t_final: float):
    """Nearest step indices for prescribed hop times."""
    hop_times = list(hop_times)
    if any(b < a for a, b in zip(hop_times, hop_times[1:])):
        raise ValueError("hop times must be non-decreasing")
    if hop_times and (hop_times[0] < 0 or hop_times[-1] > t_final + 1e-12):
        raise ValueError("hop times must lie in [0, t_final]")
    nmax = int(np.ceil(t_final / dt - 1e-9))
    return [min(int(np.rint(h / dt)), nmax) for h in hop_times]


def evolve_prescribed(z0, copy_amplitude: complex, t_final: float, dt: float,
                      model: ModelPotential, hop_times) -> TrajectoryState:
    """Deterministic trajectory that switches surface at the given times.

    The full product of hopping coefficients is kept in ``tau_product``; no
    weights are accumulated.
    """
    q, p = z0
    ens = Ensemble.start([q], [p], [copy_amplitude], [0], mode="prescribed",
                         hop_steps=[hop_steps(hop_times, dt, t_final)])
    ens.advance_to(t_final, dt, model)
    return ens.state(0)
