"""Wave-function assembly from trajectory ensembles, errors and statistics."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from ._backend import USE_NUMBA, jit, prange
from .errors import (ConfigError, MeshMismatch, MixedFinalTimes, TailTooLarge,
                     ZeroField)
from .model import ModelPotential, coupling_bound
from .sampling import InitialAmplitudeField, UniformMesh
from .trajectory import Ensemble, hop_steps

BEAM_RADIUS = 8.0  # beams are cut at |x - Q| > BEAM_RADIUS * sqrt(eps)
N_BLOCKS = 64  # fixed reduction blocks, independent of the worker count


@dataclass
class WaveField:
    """Adiabatic components u0, u1 on a uniform x mesh."""

    x_mesh: UniformMesh
    u0: np.ndarray
    u1: np.ndarray
    epsilon: float

    @property
    def x(self) -> np.ndarray:
        return self.x_mesh.nodes

    @property
    def dx(self) -> float:
        return self.x_mesh.h

    def norms(self):
        return (float(np.sqrt(np.sum(np.abs(self.u0) ** 2) * self.dx)),
                float(np.sqrt(np.sum(np.abs(self.u1) ** 2) * self.dx)))

    def __add__(self, other: "WaveField") -> "WaveField":
        _check_mesh(self, other)
        return WaveField(self.x_mesh, self.u0 + other.u0, self.u1 + other.u1, self.epsilon)

    def scaled(self, c) -> "WaveField":
        return WaveField(self.x_mesh, c * self.u0, c * self.u1, self.epsilon)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "re_u0", "im_u0", "re_u1", "im_u1"])
            for row in zip(self.x, self.u0.real, self.u0.imag, self.u1.real, self.u1.imag):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, epsilon: float) -> "WaveField":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        x = data[:, 0]
        mesh = UniformMesh(float(x[0]), float(x[-1]), float(x[1] - x[0]))
        return cls(mesh, data[:, 1] + 1j * data[:, 2], data[:, 3] + 1j * data[:, 4], epsilon)


def _check_mesh(a: WaveField, b: WaveField):
    if a.u0.shape != b.u0.shape or not np.allclose(a.x, b.x, rtol=0, atol=1e-12):
        raise MeshMismatch("wave fields live on different x meshes")


# ---------------------------------------------------------------------------
# assembly kernels


@jit
def _beam_sum(first, last, x0, dx, nx, eps, radius, Q, P, S, coef, surf, out0, out1):
    for j in range(first, last):
        c = coef[j]
        if c == 0:
            continue
        q = Q[j]
        lo = max(0, int(math.ceil((q - radius - x0) / dx)))
        hi = min(nx - 1, int(math.floor((q + radius - x0) / dx)))
        p = P[j]
        s = S[j]
        for k in range(lo, hi + 1):
            d = x0 + k * dx - q
            ph = (s + p * d) / eps
            v = c * math.exp(-0.5 * d * d / eps) * complex(math.cos(ph), math.sin(ph))
            if surf[j] == 0:
                out0[k] += v
            else:
                out1[k] += v


@jit(parallel=True)
def _assemble_numba(x0, dx, nx, eps, radius, Q, P, S, coef, surf, bounds):
    nb = bounds.shape[0] - 1
    part0 = np.zeros((nb, nx), dtype=np.complex128)
    part1 = np.zeros((nb, nx), dtype=np.complex128)
    for b in prange(nb):
        _beam_sum(bounds[b], bounds[b + 1], x0, dx, nx, eps, radius, Q, P, S, coef, surf,
                  part0[b], part1[b])
    out0 = np.zeros(nx, dtype=np.complex128)
    out1 = np.zeros(nx, dtype=np.complex128)
    for b in range(nb):
        out0 += part0[b]
        out1 += part1[b]
    return out0, out1


def _assemble_numpy(x0, dx, nx, eps, radius, Q, P, S, coef, surf, bounds):
    width = int(np.floor(2 * radius / dx)) + 2
    offs = np.arange(width)
    out = [np.zeros(nx, dtype=complex), np.zeros(nx, dtype=complex)]
    for b in range(bounds.size - 1):
        part = [np.zeros(nx, dtype=complex), np.zeros(nx, dtype=complex)]
        sl = slice(bounds[b], bounds[b + 1])
        q, p, s, c, l = Q[sl], P[sl], S[sl], coef[sl], surf[sl]
        lo = np.maximum(0, np.ceil((q - radius - x0) / dx)).astype(np.int64)
        hi = np.minimum(nx - 1, np.floor((q + radius - x0) / dx)).astype(np.int64)
        k = lo[:, None] + offs[None, :]
        ok = (k <= hi[:, None]) & (c[:, None] != 0)
        d = x0 + k * dx - q[:, None]
        ph = (s[:, None] + p[:, None] * d) / eps
        v = c[:, None] * np.exp(-0.5 * d * d / eps) * (np.cos(ph) + 1j * np.sin(ph))
        for lab in (0, 1):
            sel = ok & (l[:, None] == lab)
            np.add.at(part[lab], k[sel], v[sel])
        out[0] += part[0]
        out[1] += part[1]
    return out[0], out[1]


_assemble_kernel = _assemble_numba if USE_NUMBA else _assemble_numpy


def beam_coefficients(ens: Ensemble, prefactor, use_weights: bool = True,
                      tau_product: bool = False) -> np.ndarray:
    """Per-trajectory complex factor multiplying exp(i Theta / eps)."""
    c = np.asarray(prefactor) * ens.A
    c = c * (ens.prod_tau if tau_product else ens.phase)
    if use_weights:
        c = c * np.exp(ens.log_weight)
    return np.ascontiguousarray(c, dtype=complex)


def assemble_beams(x_mesh: UniformMesh, epsilon: float, Q, P, S, coef, surface) -> WaveField:
    """sum_j coef_j exp((i/eps)(S_j + P_j (x - Q_j)) - |x - Q_j|^2 / (2 eps)), routed by surface.

    Beams are summed in index order inside fixed blocks, and blocks in order,
    so the result does not depend on the number of workers.
    """
    n = len(Q)
    nb = max(1, min(N_BLOCKS, n))
    bounds = np.linspace(0, n, nb + 1).round().astype(np.int64)
    radius = BEAM_RADIUS * math.sqrt(epsilon)
    u0, u1 = _assemble_kernel(float(x_mesh.lo), float(x_mesh.h), int(x_mesh.n), float(epsilon),
                              radius, np.ascontiguousarray(Q, dtype=float),
                              np.ascontiguousarray(P, dtype=float),
                              np.ascontiguousarray(S, dtype=float),
                              np.ascontiguousarray(coef, dtype=complex),
                              np.ascontiguousarray(surface, dtype=np.int64), bounds)
    return WaveField(x_mesh, u0, u1, float(epsilon))


def assemble(ensembles, prefactor, x_mesh: UniformMesh, epsilon: float,
             use_weights: bool = True) -> WaveField:
    """Monte Carlo wave field of one or more ensembles at a common time.

    ``prefactor`` is dq dp / (2 pi eps)^(3/2) (the per-copy amplitude already
    carries the 1/n split of the stratified plan or the i.i.d. normalisation).
    """
    if isinstance(ensembles, Ensemble):
        ensembles = [ensembles]
    times = {round(e.t, 12) for e in ensembles}
    if len(times) > 1:
        raise MixedFinalTimes(f"ensembles disagree on the final time: {sorted(times)}")
    Q = np.concatenate([e.Q for e in ensembles])
    P = np.concatenate([e.P for e in ensembles])
    S = np.concatenate([e.S for e in ensembles])
    surf = np.concatenate([e.surface for e in ensembles])
    coef = np.concatenate([beam_coefficients(e, prefactor, use_weights) for e in ensembles])
    return assemble_beams(x_mesh, epsilon, Q, P, S, coef, surf)


# ---------------------------------------------------------------------------
# errors and observables


def l2_error(field: WaveField, ref: WaveField):
    """(e0, e1) with e_k = sqrt(sum |u_k - u_k^ref|^2 dx)."""
    _check_mesh(field, ref)
    dx = field.dx
    return (float(np.sqrt(np.sum(np.abs(field.u0 - ref.u0) ** 2) * dx)),
            float(np.sqrt(np.sum(np.abs(field.u1 - ref.u1) ** 2) * dx)))


def transition_rate(field: WaveField) -> float:
    """|u1|^2 / (|u0|^2 + |u1|^2) with trapezoid norms."""
    w = field.x_mesh.trapezoid_weights()
    n0 = float(np.sum(np.abs(field.u0) ** 2 * w))
    n1 = float(np.sum(np.abs(field.u1) ** 2 * w))
    if not n0 + n1 > 0:
        raise ZeroField("transition rate of an empty field")
    return n1 / (n0 + n1)


@dataclass
class EnsembleStats:
    """Replication statistics for a sequence of configurations."""

    labels: list
    e0: np.ndarray  # (n_configs, R)
    e1: np.ndarray

    @property
    def R(self) -> int:
        return self.e0.shape[1]

    def mean(self, k: int) -> np.ndarray:
        return (self.e0 if k == 0 else self.e1).mean(axis=1)

    def var(self, k: int) -> np.ndarray:
        return (self.e0 if k == 0 else self.e1).var(axis=1, ddof=1)

    def ci(self, k: int) -> np.ndarray:
        """95% confidence half-width of the mean."""
        return 1.96 * np.sqrt(self.var(k) / self.R)

    def rates(self, k: int) -> np.ndarray:
        """Convergence rate between consecutive configurations (nan for the first)."""
        return np.concatenate([[np.nan], convergence_rates(self.labels, self.mean(k))])

    def to_csv(self, path, label_name: str = "config"):
        rows = [
            ("E(e0)", self.mean(0)), ("Conv. Rate", self.rates(0)), ("Var(e0)", self.var(0)),
            ("E(e1)", self.mean(1)), ("Conv. Rate", self.rates(1)), ("Var(e1)", self.var(1)),
        ]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([label_name] + [str(v) for v in self.labels])
            for name, vals in rows:
                w.writerow([name] + ["" if np.isnan(v) else f"{v:.6e}" for v in vals])


def convergence_rates(sizes, means) -> np.ndarray:
    """rate(a -> b) = log(E(e^a) / E(e^b)) / log(N^b / N^a) for consecutive pairs."""
    sizes = np.asarray(sizes, dtype=float)
    means = np.asarray(means, dtype=float)
    return np.log(means[:-1] / means[1:]) / np.log(sizes[1:] / sizes[:-1])


def replication_stats(errors, labels) -> EnsembleStats:
    """``errors`` has shape (n_configs, R, 2) holding (e0, e1) per replication."""
    errors = np.asarray(errors, dtype=float)
    if errors.ndim != 3 or errors.shape[2] != 2:
        raise ValueError("errors must have shape (n_configs, R, 2)")
    if errors.shape[1] < 2:
        raise ConfigError("at least two replications are needed for a variance")
    return EnsembleStats(list(labels), errors[:, :, 0], errors[:, :, 1])


# ---------------------------------------------------------------------------
# deterministic series oracle


def simplex_rule(t: float, n_points: int, order: int):
    """Nodes and weights of the iterated trapezoid rule on 0 <= t1 <= ... <= t_order <= t.

    Returns (list of index tuples into the uniform time grid, weights, grid).
    """
    grid = np.linspace(0.0, t, n_points)
    h = grid[1] - grid[0]

    def trap(j):  # trapezoid weights on grid[0..j]
        if j == 0:
            return np.zeros(1)
        w = np.full(j + 1, h)
        w[0] = w[-1] = 0.5 * h
        return w

    if order == 0:
        return [()], np.ones(1), grid
    if order == 1:
        w = trap(n_points - 1)
        return [(i,) for i in range(n_points)], w, grid
    if order == 2:
        idx, wts = [], []
        outer = trap(n_points - 1)
        for j in range(n_points):
            inner = trap(j)
            for i in range(j + 1):
                idx.append((i, j))
                wts.append(outer[j] * inner[i])
        return idx, np.array(wts), grid
    raise ValueError("simplex rule implemented up to order 2")


def series_tail_bound(t: float, c_tau: float, n_max: int) -> float:
    """(t C_tau)^(n_max + 1) / (n_max + 1)!, the size of the first omitted term."""
    return (t * c_tau) ** (n_max + 1) / math.factorial(n_max + 1)


def brute_force_series_oracle(field: InitialAmplitudeField, model: ModelPotential, t: float,
                              dt: float, x_mesh: UniformMesh, n_max: int = 2,
                              n_points: int = 65, c_tau: float | None = None,
                              tail_tol: float = 1e-3, return_terms: bool = False):
    """Sum of the n <= n_max hopping terms by quadrature over ordered hop times.

    Every nonzero node of ``field`` is propagated along each prescribed hop
    sequence of the simplex rule; the n-th term carries tau_1 ... tau_n and the
    rule's weight. Hop times must fall on the time-step grid.
    """
    if not 0 <= n_max <= 2:
        raise ValueError("n_max must be 0, 1 or 2")
    eps = field.epsilon
    if c_tau is None:
        mesh = field.mesh
        reach = (mesh.p_max + 1.0) * t + 1.0
        c_tau = coupling_bound(model, (mesh.q_min - reach, mesh.q_max + reach),
                               (mesh.p_min - 1.0, mesh.p_max + 1.0))
    bound = series_tail_bound(t, c_tau, n_max)
    if bound > tail_tol:
        raise TailTooLarge(f"omitted term bound {bound:.3e} exceeds {tail_tol:g}; raise n_max or lower t")
    nsteps = t / dt
    if abs(nsteps - round(nsteps)) > 1e-9 or round(nsteps) % (n_points - 1):
        raise ConfigError("the hop-time grid must align with the time steps")
    a = field.amplitude.reshape(-1)
    active = np.flatnonzero(a)
    qs, ps = field.mesh.nodes()
    terms = []
    for order in range(n_max + 1):
        idx, wts, grid = simplex_rule(t, n_points, order)
        n_seq = len(idx)
        node = np.repeat(active, n_seq)
        seq = [hop_steps([grid[i] for i in tup], dt, t) for tup in idx] * active.size
        w = np.tile(wts, active.size)
        ens = Ensemble.start(qs[node], ps[node], a[node], np.zeros(node.size, dtype=np.uint64),
                             mode="prescribed", hop_steps=seq)
        ens.advance_to(t, dt, model)
        coef = field.prefactor * w * ens.A * ens.prod_tau
        terms.append(assemble_beams(x_mesh, eps, ens.Q, ens.P, ens.S, coef, ens.surface))
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return (total, terms) if return_terms else total
