"""Initial FGA amplitudes on a phase-space mesh and trajectory sampling.

The initial amplitude of the beam centred at (q, p) is

    A(q, p) = 2^(1/2) * int u0(y) exp((i/eps) (-p (y - q) + (i/2) |y - q|^2)) dy,

evaluated by the trapezoid rule on a uniform y-mesh. Summing the beams back
with weight dq dp / (2 pi eps)^(3/2) reproduces u0 up to the mesh and
phase-space truncation error.

Two ways of turning the field into trajectories are provided: the stratified
partition plan, where each node spawns ceil(|A| / d_M) copies sharing its
amplitude, and i.i.d. draws of nodes with probability proportional to |A|.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import EmptyField, MeshTooCoarse


@dataclass(frozen=True)
class UniformMesh:
    """Closed uniform 1-d grid ``lo, lo + h, ..., hi``."""

    lo: float
    hi: float
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("mesh spacing must be positive")
        if not self.hi > self.lo:
            raise ValueError("mesh interval is empty")

    @property
    def n(self) -> int:
        return int(np.rint((self.hi - self.lo) / self.h)) + 1

    @property
    def nodes(self) -> np.ndarray:
        return self.lo + self.h * np.arange(self.n)

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w


@dataclass(frozen=True)
class PhaseSpaceMesh:
    """Rectangle K = [q_min, q_max] x [p_min, p_max] with spacings dq, dp."""

    q_min: float
    q_max: float
    p_min: float
    p_max: float
    dq: float
    dp: float

    def __post_init__(self):
        if not (self.dq > 0 and self.dp > 0):
            raise ValueError("dq and dp must be positive")
        if not (self.q_max > self.q_min and self.p_max > self.p_min):
            raise ValueError("phase-space box is empty")

    @property
    def q(self) -> np.ndarray:
        return UniformMesh(self.q_min, self.q_max, self.dq).nodes

    @property
    def p(self) -> np.ndarray:
        return UniformMesh(self.p_min, self.p_max, self.dp).nodes

    @property
    def shape(self):
        return self.q.size, self.p.size

    def nodes(self):
        """Flattened (q, p) node coordinates in row-major (q, p) order."""
        qq, pp = np.meshgrid(self.q, self.p, indexing="ij")
        return qq.reshape(-1), pp.reshape(-1)


@dataclass(frozen=True)
class GaussianPacket:
    """u0(y) = norm * exp(i p0 y / eps) * exp(-alpha (y - q0)^2)."""

    q0: float
    p0: float
    alpha: float
    epsilon: float
    norm: float = 1.0

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return self.norm * np.exp(1j * self.p0 * y / self.epsilon - self.alpha * (y - self.q0) ** 2)


@dataclass
class InitialAmplitudeField:
    mesh: PhaseSpaceMesh
    amplitude: np.ndarray  # complex, shape mesh.shape
    epsilon: float

    @property
    def cell(self) -> float:
        return self.mesh.dq * self.mesh.dp

    @property
    def prefactor(self) -> float:
        """Beam weight dq dp / (2 pi eps)^(3/2) for m = 1."""
        return self.cell / (2.0 * np.pi * self.epsilon) ** 1.5

    def total_mass(self) -> float:
        """Z = (2 pi eps)^(-3/2) * sum |A| dq dp."""
        return float(self.prefactor * np.abs(self.amplitude).sum())

    def to_csv(self, path):
        qs, ps = self.mesh.nodes()
        a = self.amplitude.reshape(-1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["q", "p", "re_A", "im_A"])
            for row in zip(qs, ps, a.real, a.imag):
                w.writerow([repr(float(v)) for v in row])


def check_oscillation_resolved(dy: float, p_max_abs: float, epsilon: float):
    """Quarter-wavelength rule for the oscillation exp(-i p y / eps)."""
    limit = 2.0 * np.pi * epsilon / (4.0 * p_max_abs) if p_max_abs > 0 else np.inf
    if dy > limit:
        raise MeshTooCoarse(
            f"dy={dy:.4g} under-resolves the phase oscillation; need dy <= {limit:.4g} "
            f"(quarter of the wavelength 2*pi*eps/|p| at |p|={p_max_abs:.4g})")


def initial_amplitude(u0_values, y_mesh: UniformMesh, q, p, epsilon: float):
    """A(q, p) on every pair of q and p (outer product); returns shape (len q, len p).

    ``u0_values`` are samples of the initial wave function on ``y_mesh``.
    Scalars q and p give a scalar.
    """
    q_arr = np.atleast_1d(np.asarray(q, dtype=float))
    p_arr = np.atleast_1d(np.asarray(p, dtype=float))
    check_oscillation_resolved(y_mesh.h, float(np.max(np.abs(p_arr))), epsilon)
    y = y_mesh.nodes
    u = np.asarray(u0_values, dtype=complex) * y_mesh.trapezoid_weights()
    if u.shape != y.shape:
        raise ValueError("u0 samples do not match the y mesh")
    # exp(-i p (y - q)/eps) = exp(i p q / eps) * exp(-i p y / eps)
    osc = np.exp(-1j * np.outer(p_arr, y) / epsilon)
    out = np.empty((q_arr.size, p_arr.size), dtype=complex)
    for i, qi in enumerate(q_arr):
        win = np.exp(-0.5 * (y - qi) ** 2 / epsilon) * u
        out[i] = np.exp(1j * p_arr * qi / epsilon) * (osc @ win)
    out *= np.sqrt(2.0)
    if np.ndim(q) == 0 and np.ndim(p) == 0:
        return complex(out[0, 0])
    return out


def amplitude_field(u0, mesh: PhaseSpaceMesh, y_mesh: UniformMesh, epsilon: float) -> InitialAmplitudeField:
    """Evaluate A on every node of ``mesh``; ``u0`` is a callable of y."""
    values = initial_amplitude(u0(y_mesh.nodes), y_mesh, mesh.q, mesh.p, epsilon)
    return InitialAmplitudeField(mesh, values, float(epsilon))


def reconstruct_initial(field: InitialAmplitudeField, x_mesh) -> np.ndarray:
    """Sum of the t = 0 beams: the FGA representation of u0 on ``x_mesh``."""
    x = np.asarray(x_mesh, dtype=float)
    eps = field.epsilon
    q, p = field.mesh.q, field.mesh.p
    osc = np.exp(1j * np.outer(x, p) / eps)  # (nx, np)
    out = np.zeros(x.shape, dtype=complex)
    for i, qi in enumerate(q):
        row = field.amplitude[i]
        if not np.any(row):
            continue
        phase = osc @ (row * np.exp(-1j * p * qi / eps))
        out += np.exp(-0.5 * (x - qi) ** 2 / eps) * phase
    return field.prefactor * out


def l2_norm(values, dx: float) -> float:
    """Discrete L2 norm with uniform weight dx."""
    return float(np.sqrt(np.sum(np.abs(values) ** 2) * dx))


def initial_error(field: InitialAmplitudeField, u0, x_mesh: UniformMesh) -> float:
    """L2 distance between u0 and its FGA reconstruction on ``x_mesh``."""
    x = x_mesh.nodes
    return l2_norm(reconstruct_initial(field, x) - u0(x), x_mesh.h)


def truncate(field: InitialAmplitudeField, cutoff: float) -> InitialAmplitudeField:
    """Zero every node with |A| below ``cutoff * max|A|``."""
    if cutoff <= 0:
        return field
    a = field.amplitude.copy()
    a[np.abs(a) < cutoff * np.abs(a).max()] = 0.0
    return InitialAmplitudeField(field.mesh, a, field.epsilon)


@dataclass
class PartitionPlan:
    """Stratified trajectory quota: node k spawns ``copies[k]`` trajectories."""

    M: int
    d_M: float
    node: np.ndarray  # flat node index per active node
    copies: np.ndarray  # ceil(|A| / d_M) per active node
    q: np.ndarray
    p: np.ndarray
    amplitude: np.ndarray  # A at each active node

    @property
    def n_traj(self) -> int:
        return int(self.copies.sum())

    def copy_amplitudes(self) -> np.ndarray:
        """A / n for each active node."""
        return self.amplitude / self.copies

    def expand(self):
        """(q, p, per-copy amplitude, node index) for every trajectory, node-major."""
        rep = self.copies
        return (np.repeat(self.q, rep), np.repeat(self.p, rep),
                np.repeat(self.copy_amplitudes(), rep), np.repeat(self.node, rep))


def build_partition(field: InitialAmplitudeField, M: int) -> PartitionPlan:
    """d_M = max|A| / M and n = ceil(|A| / d_M) copies per node with A != 0."""
    if int(M) != M or M < 1:
        raise ValueError("partition integer M must be a positive integer")
    mag = np.abs(field.amplitude).reshape(-1)
    top = mag.max(initial=0.0)
    if not top > 0:
        raise EmptyField("initial amplitude vanishes on the whole mesh")
    d_M = top / M
    active = np.flatnonzero(mag > 0)
    copies = np.ceil(mag[active] / d_M).astype(np.int64)
    qs, ps = field.mesh.nodes()
    return PartitionPlan(int(M), float(d_M), active, copies, qs[active], ps[active],
                         field.amplitude.reshape(-1)[active])


def sample_iid(field: InitialAmplitudeField, n_traj: int, key: int):
    """Draw ``n_traj`` nodes with probability proportional to |A|.

    Returns (q, p, per-trajectory amplitude, node index). The amplitude
    A / |A| * sum|A| / N makes the beam-weighted sum an unbiased estimate of
    Z * E[A / |A| ...], the same normalisation as the stratified plan.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be positive")
    a = field.amplitude.reshape(-1)
    mag = np.abs(a)
    total = mag.sum()
    if not total > 0:
        raise EmptyField("initial amplitude vanishes on the whole mesh")
    cdf = np.cumsum(mag)
    u = rng.uniforms(np.full(n_traj, key, dtype=np.uint64), np.arange(n_traj, dtype=np.uint64))
    node = np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), a.size - 1)
    qs, ps = field.mesh.nodes()
    amp = a[node] / mag[node] * (total / n_traj)
    return qs[node], ps[node], amp, node
