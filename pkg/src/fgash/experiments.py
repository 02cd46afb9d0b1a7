"""End-to-end experiments: sampling, ensemble evolution, assembly and statistics."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import rng
from ._backend import USE_NUMBA
from .config import RunConfig
from .model import ModelPotential, sweep
from .reconstruct import (EnsembleStats, WaveField, assemble, l2_error, replication_stats,
                          transition_rate)
from .reference import cached_reference, reference_solve, to_wavefield
from .sampling import InitialAmplitudeField, amplitude_field, build_partition, sample_iid, truncate
from .trajectory import Ensemble

log = logging.getLogger(__name__)


def set_workers(n: int | None):
    if n is not None and USE_NUMBA:
        import numba
        numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))


def eps_label(epsilon: float) -> str:
    f = Fraction(epsilon).limit_denominator(1 << 20)
    return f"eps_{f.numerator}-{f.denominator}"


# ---------------------------------------------------------------------------
# building blocks


def initial_field(cfg: RunConfig) -> InitialAmplitudeField:
    """Amplitude field on the K mesh with nodes below the cutoff removed."""
    field = amplitude_field(cfg.initial_packet(), cfg.phase_mesh(), cfg.x_mesh(), cfg.epsilon)
    return truncate(field, cfg.amplitude_cutoff)


def _reference_key(cfg: RunConfig, times) -> dict:
    return dict(model=cfg.model, delta=cfg.model_delta, extra=list(cfg.model_extra),
                epsilon=cfg.epsilon, times=[float(t) for t in times], dx=cfg.mesh_dx,
                n_nodes=cfg.reference_nodes(), packet=repr(cfg.packet),
                check_boundary=cfg.check_boundary)


def reference_fields(cfg: RunConfig, times=None) -> list[WaveField]:
    """Reference wave fields on the x mesh at ``times`` (default: t_final), cached."""
    times = [cfg.t_final] if times is None else list(times)
    model = cfg.potential()
    xm = cfg.x_mesh()

    def compute():
        snaps = reference_solve(cfg.initial_packet(), model, cfg.epsilon, cfg.t_final,
                                n_nodes=cfg.reference_nodes(),
                                check_boundary=cfg.check_boundary, snapshots=times)
        arrays = []
        for s in snaps:
            w = to_wavefield(s, model, xm)
            arrays += [w.u0, w.u1]
        return arrays

    arrays = cached_reference(_reference_key(cfg, times), compute)
    return [WaveField(xm, arrays[2 * i], arrays[2 * i + 1], cfg.epsilon)
            for i in range(len(times))]


def draw(cfg: RunConfig, field: InitialAmplitudeField, size: int, replication: int):
    """Initial (q, p, amplitude) and stream keys of one replication."""
    base = rng.derive_key(cfg.seed, replication, size)
    if cfg.sampling_mode == "iid":
        q, p, a, _ = sample_iid(field, size, rng.derive_key(cfg.seed, replication, size, 1))
    else:
        q, p, a, _ = build_partition(field, size).expand()
    return q, p, a, rng.stream_keys(base, q.size)


def start_ensemble(cfg: RunConfig, field, size: int, replication: int) -> Ensemble:
    q, p, a, keys = draw(cfg, field, size, replication)
    return Ensemble.start(q, p, a, keys, mode=cfg.hop_mode)


def advance(ens: Ensemble, cfg: RunConfig, model: ModelPotential, t: float, context: str = ""):
    ens.advance_to(t, cfg.step, model, raise_errors=False)
    ens.raise_on_failure(context)
    return ens


def simulate(cfg: RunConfig, field: InitialAmplitudeField, size: int, replication: int,
             model: ModelPotential | None = None):
    """(Monte Carlo wave field at t_final, trajectory count) of one replication."""
    model = model or cfg.potential()
    ens = start_ensemble(cfg, field, size, replication)
    advance(ens, cfg, model, cfg.t_final, f" (replication {replication}, size {size})")
    w = assemble(ens, field.prefactor, cfg.x_mesh(), cfg.epsilon,
                 use_weights=not cfg.disable_weights)
    return w, len(ens)


# ---------------------------------------------------------------------------
# experiments


@dataclass
class FgaResult:
    config: RunConfig
    stats: EnsembleStats
    errors: np.ndarray  # (n_sizes, R, 2)
    n_traj: np.ndarray  # (n_sizes, R)
    fields: list  # replication-0 field per size
    reference: WaveField


def run_fga(cfg: RunConfig, out_dir=None) -> FgaResult:
    """R replications for every size in the table, with errors against the reference."""
    set_workers(cfg.workers)
    model = cfg.potential()
    ref = reference_fields(cfg)[0]
    field = initial_field(cfg)
    sizes = cfg.sizes
    R = cfg.replications
    errors = np.zeros((len(sizes), R, 2))
    counts = np.zeros((len(sizes), R), dtype=np.int64)
    fields = []
    for i, size in enumerate(sizes):
        for r in range(R):
            w, counts[i, r] = simulate(cfg, field, size, r, model)
            errors[i, r] = l2_error(w, ref)
            if r == 0:
                fields.append(w)
        log.info("size %s: E(e0)=%.4e over %d replications", size, errors[i, :, 0].mean(), R)
    stats = replication_stats(errors, sizes) if R >= 2 else EnsembleStats(
        list(sizes), errors[:, :, 0], errors[:, :, 1])
    result = FgaResult(cfg, stats, errors, counts, fields, ref)
    if out_dir is not None:
        write_fga(result, Path(out_dir))
    return result


def write_fga(result: FgaResult, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    label = "M" if cfg.sampling_mode == "stratified" else "N_traj"
    with open(out / "errors.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([label, "replication", "n_traj", "e0", "e1"])
        for i, size in enumerate(cfg.sizes):
            for r in range(cfg.replications):
                e0, e1 = result.errors[i, r]
                w.writerow([size, r, int(result.n_traj[i, r]), repr(float(e0)), repr(float(e1))])
    if cfg.replications >= 2:
        result.stats.to_csv(out / "stats.csv", label_name=label)
    for size, f in zip(cfg.sizes, result.fields):
        f.to_csv(out / f"wavefield_{label}{size}.csv")
    result.reference.to_csv(out / "reference.csv")
    if cfg.traces:
        write_traces(cfg, out)


def write_traces(cfg: RunConfig, out: Path):
    """(t, surface, Q, P, Re A, Im A, log_weight) for the first trajectories of replication 0."""
    model = cfg.potential()
    q, p, a, keys = draw(cfg, initial_field(cfg), cfg.sizes[0], 0)
    k = min(cfg.traces, q.size)
    ens = Ensemble.start(q[:k], p[:k], a[:k], keys[:k], mode=cfg.hop_mode)
    rows = [[] for _ in range(k)]

    def record():
        for i in range(k):
            rows[i].append((ens.t, int(ens.surface[i]), ens.Q[i], ens.P[i], ens.A[i].real,
                            ens.A[i].imag, ens.log_weight[i]))

    record()
    nsteps = int(np.ceil(cfg.t_final / cfg.step - 1e-9))
    for n in range(1, nsteps + 1):
        advance(ens, cfg, model, min(n * cfg.step, cfg.t_final))
        record()
    for i in range(k):
        with open(out / f"trace_{i}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "surface", "Q", "P", "re_A", "im_A", "log_weight"])
            for row in rows[i]:
                w.writerow([repr(float(row[0])), row[1]] + [repr(float(v)) for v in row[2:]])


def run_reference(cfg: RunConfig, out_dir=None) -> WaveField:
    ref = reference_fields(cfg)[0]
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        ref.to_csv(Path(out_dir) / "reference.csv")
    return ref


def run_transition_curve(cfg: RunConfig, times=None, out_dir=None):
    """Rows (t, rate_fga, rate_ref) from one ensemble snapshotted at ``times``."""
    set_workers(cfg.workers)
    times = list(times if times is not None else cfg.times)
    if not times:
        raise ValueError("no sample times given")
    if any(b <= a for a, b in zip(times, times[1:])) or times[0] < 0:
        raise ValueError("sample times must be increasing and non-negative")
    if times[-1] > cfg.t_final + 1e-12:
        raise ValueError("sample times must not exceed t_final")
    model = cfg.potential()
    refs = reference_fields(cfg, times)
    field = initial_field(cfg)
    ens = start_ensemble(cfg, field, cfg.sizes[0], 0)
    rows = []
    for t, ref in zip(times, refs):
        advance(ens, cfg, model, t, f" (transition curve, t={t:g})")
        w = assemble(ens, field.prefactor, cfg.x_mesh(), cfg.epsilon,
                     use_weights=not cfg.disable_weights)
        rows.append((float(t), transition_rate(w), transition_rate(ref)))
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        with open(Path(out_dir) / "transition.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "rate_fga", "rate_ref"])
            for row in rows:
                wr.writerow([repr(v) for v in row])
    return rows


def inspect_model(model: ModelPotential, xs, path=None):
    """Rows (x, E0, E1, d01, D01) along an increasing grid."""
    rows = [(d.x, d.E0, d.E1, d.d01, d.D01) for d in sweep(model, np.asarray(xs, dtype=float))]
    if path is not None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "E0", "E1", "d01", "D01"])
            for row in rows:
                w.writerow([repr(float(v)) for v in row])
    return rows


def sample_init(cfg: RunConfig, out_dir=None):
    """Amplitude field and partition summary for every M of the configuration."""
    field = initial_field(cfg)
    summary = []
    for M in cfg.M:
        plan = build_partition(field, M)
        summary.append((int(M), plan.d_M, plan.node.size, plan.n_traj))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        field.to_csv(out / "amplitude.csv")
        with open(out / "partition.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["M", "d_M", "active_nodes", "n_traj"])
            for M, d, nodes, n in summary:
                w.writerow([M, repr(float(d)), nodes, n])
    return field, summary
