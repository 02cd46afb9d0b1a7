"""Run configuration: one JSON document per experiment.

List-valued ``epsilon`` expands into one :class:`RunConfig` per value;
list-valued ``M`` (stratified) or ``n_traj`` (i.i.d.) form the rows of one
statistics table.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .errors import ConfigError
from .model import ModelPotential, coupling_bound, on_grid, surface_data
from .sampling import GaussianPacket, PhaseSpaceMesh, UniformMesh

MAX_HOP_PROBABILITY = 0.5
REFERENCE_REFINE = 64  # reference dx = 2 pi eps / REFERENCE_REFINE


@dataclass(frozen=True)
class PacketConfig:
    """u0(x) = norm exp(i p0 x / eps) exp(-alpha (x - q0)^2).

    ``norm`` is a number or ``"eps_scaled"`` for (16 eps)^(-1/4).
    """

    q0: float = -1.0
    p0: float = 2.0
    alpha: float = 16.0
    norm: float | str = "eps_scaled"

    def amplitude(self, epsilon: float) -> float:
        if self.norm == "eps_scaled":
            return (16.0 * epsilon) ** -0.25
        if isinstance(self.norm, str):
            raise ConfigError(f"unknown packet norm {self.norm!r}")
        return float(self.norm)


@dataclass(frozen=True)
class RunConfig:
    model: str = "simple_avoided"
    delta: float | None = None  # None: delta = epsilon
    model_extra: tuple = ()
    epsilon: float = 1.0 / 16.0
    t_final: float = 1.0
    dt: float | None = None  # eps / 32
    q_min: float = -math.pi
    q_max: float = math.pi
    p_min: float = 0.5
    p_max: float = 3.5
    dq: float | None = None  # 2 pi eps / 8
    dp: float | None = None  # 3 eps / 4
    dx: float | None = None  # 2 pi eps / 32, shared by the x and y meshes
    packet: PacketConfig = field(default_factory=PacketConfig)
    sampling_mode: str = "stratified"
    M: tuple = (16,)
    n_traj: tuple = (6400,)
    replications: int = 50
    seed: int = 0
    workers: int | None = None
    exact_thinning: bool = False
    disable_weights: bool = False
    amplitude_cutoff: float = 1e-3
    check_boundary: bool = True
    times: tuple = ()
    traces: int = 0

    # -- derived quantities -------------------------------------------------

    @property
    def model_delta(self) -> float:
        return float(self.epsilon if self.delta is None else self.delta)

    def potential(self) -> ModelPotential:
        return ModelPotential.from_name(self.model, self.model_delta, tuple(self.model_extra))

    @property
    def step(self) -> float:
        return float(self.dt if self.dt is not None else self.epsilon / 32.0)

    @property
    def mesh_dx(self) -> float:
        return float(self.dx if self.dx is not None else 2.0 * math.pi * self.epsilon / 32.0)

    def phase_mesh(self) -> PhaseSpaceMesh:
        dq = self.dq if self.dq is not None else 2.0 * math.pi * self.epsilon / 8.0
        dp = self.dp if self.dp is not None else 3.0 * self.epsilon / 4.0
        return PhaseSpaceMesh(self.q_min, self.q_max, self.p_min, self.p_max, dq, dp)

    def x_mesh(self) -> UniformMesh:
        return UniformMesh(-math.pi, math.pi, self.mesh_dx)

    def initial_packet(self) -> GaussianPacket:
        p = self.packet
        return GaussianPacket(p.q0, p.p0, p.alpha, self.epsilon, p.amplitude(self.epsilon))

    @property
    def sizes(self) -> tuple:
        """Table labels: M values (stratified) or trajectory counts (i.i.d.)."""
        return tuple(self.M if self.sampling_mode == "stratified" else self.n_traj)

    @property
    def hop_mode(self) -> str:
        return "clock" if self.exact_thinning else "bernoulli"

    def reference_nodes(self) -> int:
        n = REFERENCE_REFINE / self.epsilon
        return int(round(n))

    # -- validation -----------------------------------------------------------

    def validate(self) -> "RunConfig":
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if not self.t_final >= 0:
            raise ConfigError("t_final must be non-negative")
        for name in ("dt", "dq", "dp", "dx", "delta"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive")
        if not (self.q_max > self.q_min and self.p_max > self.p_min):
            raise ConfigError("phase-space box K is empty")
        if self.sampling_mode not in ("stratified", "iid"):
            raise ConfigError("sampling_mode must be 'stratified' or 'iid'")
        if not self.sizes or any(int(v) != v or v < 1 for v in self.sizes):
            raise ConfigError("M / n_traj must be a non-empty list of positive integers")
        if int(self.replications) != self.replications or self.replications < 1:
            raise ConfigError("replications must be a positive integer")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be positive")
        if not 0 <= self.amplitude_cutoff < 1:
            raise ConfigError("amplitude_cutoff must lie in [0, 1)")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ConfigError("times must be strictly increasing")
        if self.times and (self.times[0] < 0 or self.times[-1] > self.t_final + 1e-12):
            raise ConfigError("times must lie in [0, t_final]")
        try:
            self.potential()
            self.packet.amplitude(self.epsilon)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        self._check_reference_grid()
        rate = self.estimated_max_rate()
        if self.step * rate >= MAX_HOP_PROBABILITY:
            raise ConfigError(
                f"dt={self.step:.4g} is too large for the coupling: dt * max rate = "
                f"{self.step * rate:.3g} >= {MAX_HOP_PROBABILITY}; reduce dt")
        return self

    def _check_reference_grid(self):
        n = REFERENCE_REFINE / self.epsilon
        if abs(n - round(n)) > 1e-9 or int(round(n)) & (int(round(n)) - 1):
            raise ConfigError("reference grid needs 64 / epsilon to be a power of two")
        ratio = self.mesh_dx / (2.0 * math.pi / round(n))
        cells = 2.0 * math.pi / self.mesh_dx
        if abs(ratio - round(ratio)) > 1e-9 or abs(cells - round(cells)) > 1e-9:
            raise ConfigError("dx must be a multiple of the reference spacing dividing 2 pi")

    def estimated_max_rate(self) -> float:
        """Bound on |P d01| over the region trajectories can reach by t_final."""
        model = self.potential()
        t = self.t_final
        pmax = max(abs(self.p_min), abs(self.p_max))
        reach = pmax * t + 1.0
        xs = np.linspace(self.q_min - reach, self.q_max + reach, 4001)
        m1, g1 = (on_grid(surface_data, model, xs)[i] for i in (1, 4))
        force = float(np.max(np.abs(m1) + np.abs(g1)))
        reach += 0.5 * force * t * t
        p_range = (self.p_min - force * t, self.p_max + force * t)
        return coupling_bound(model, (self.q_min - reach, self.q_max + reach), p_range, n=4001)

    # -- serialisation --------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("model_extra", "M", "n_traj", "times"):
            d[k] = list(d[k])
        return d


_LIST_FIELDS = ("model_extra", "M", "n_traj", "times")


def _as_tuple(v):
    return tuple(v) if isinstance(v, (list, tuple)) else (v,)


def from_dict(data: dict) -> list[RunConfig]:
    """Validated configurations, one per epsilon."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    data = dict(data)
    packet = data.pop("packet", {}) or {}
    if not isinstance(packet, dict):
        raise ConfigError("packet must be an object")
    try:
        pk = PacketConfig(**packet)
    except TypeError as exc:
        raise ConfigError(f"bad packet entry: {exc}") from exc
    for k in _LIST_FIELDS:
        if k in data:
            data[k] = _as_tuple(data[k])
    eps_values = _as_tuple(data.pop("epsilon", RunConfig.epsilon))
    out = []
    for eps in eps_values:
        try:
            cfg = RunConfig(packet=pk, epsilon=float(eps), **data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        out.append(cfg.validate())
    return out


def load(path) -> list[RunConfig]:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return from_dict(data)


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    for k in _LIST_FIELDS:
        if k in kw:
            kw[k] = _as_tuple(kw[k])
    return replace(cfg, **kw).validate()
