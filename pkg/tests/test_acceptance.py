"""Acceptance suite: one pass/fail test per published criterion.

The heavy Monte Carlo studies are marked ``slow``; the partition study is run
once per module and shared by the partition and epsilon-trend checks.
"""
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from fgash import rng
from fgash.config import load, with_overrides
from fgash.experiments import (initial_field, reference_fields, run_fga, run_transition_curve,
                               simulate)
from fgash.model import ModelKind, ModelPotential
from fgash.reconstruct import brute_force_series_oracle, transition_rate
from fgash.sampling import amplitude_field, build_partition, initial_error, truncate
from fgash.trajectory import Ensemble, evolve

from oracles import free_amplitude, poisson_pmf

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def config(name):
    return load(CONFIGS / name)


def log_slope(x, y):
    return np.polyfit(np.log(x), np.log(y), 1)[0]


# ---------------------------------------------------------------------------
# 1. Monte Carlo rate in the number of i.i.d. trajectories


@pytest.mark.slow
def test_ac01_monte_carlo_rate():
    cfg = next(c for c in config("simple_avoided_iid.json") if c.epsilon == 1 / 16)
    assert cfg.sizes == (100, 200, 400, 800, 1600) and cfg.replications == 50
    res = run_fga(cfg)
    mean = res.stats.mean(0)
    assert -0.6 <= log_slope(cfg.sizes, mean) <= -0.4
    assert 1.9889e-1 / 2 <= mean[0] <= 2 * 1.9889e-1


# ---------------------------------------------------------------------------
# 2 and 3. Partition-integer study over M and epsilon


@pytest.fixture(scope="module")
def partition_study():
    cfgs = config("simple_avoided_partition.json")
    assert [c.epsilon for c in cfgs] == [1 / 16, 1 / 32, 1 / 64]
    assert all(c.M == (1, 2, 4, 8, 16) and c.replications == 50 for c in cfgs)
    return {c.epsilon: run_fga(c).stats for c in cfgs}


def inversions(st):
    mean, ci = st.mean(0), st.ci(0)
    return [(i, bool(abs(mean[i + 1] - mean[i]) <= ci[i] + ci[i + 1]))
            for i in range(len(mean) - 1) if mean[i + 1] >= mean[i]]


@pytest.mark.slow
def test_ac02_partition_study(partition_study):
    for eps, st in partition_study.items():
        inv = inversions(st)
        assert len(inv) <= 1 and all(overlap for _, overlap in inv), (eps, st.mean(0))
        rates = st.rates(0)[1:]
        assert np.all((rates >= 0.2) & (rates <= 0.6)), (eps, rates)
    e = partition_study[1 / 64].mean(0)[-1]
    assert 1.6811e-2 / 2 <= e <= 2 * 1.6811e-2


@pytest.mark.slow
def test_ac03_epsilon_trend(partition_study):
    at16 = [partition_study[eps].mean(0)[-1] for eps in (1 / 16, 1 / 32, 1 / 64)]
    assert at16[0] > at16[1] > at16[2]


# ---------------------------------------------------------------------------
# 4. Initial reconstruction error


def test_ac04_initial_reconstruction():
    cfg = with_overrides(config("simple_avoided_partition.json")[0], amplitude_cutoff=0.0)
    u0 = cfg.initial_packet()
    field = amplitude_field(u0, cfg.phase_mesh(), cfg.x_mesh(), cfg.epsilon)
    e_in = initial_error(field, u0, cfg.x_mesh())
    assert 8.3178e-5 / 3 <= e_in <= 3 * 8.3178e-5


# ---------------------------------------------------------------------------
# 5. Quadratic potential without coupling


def test_ac05_harmonic_exactness():
    cfg = with_overrides(config("simple_avoided_partition.json")[0], model="harmonic_decoupled",
                         delta=1.0, M=(1,), replications=1)
    res = run_fga(cfg)
    assert math.hypot(*res.errors[0, 0]) <= 1e-3


# ---------------------------------------------------------------------------
# 6. Free-particle amplitude


@pytest.mark.parametrize("q, p, a0", [(0.0, 1.0, 1.0), (-0.7, 2.3, 0.4 - 1.1j)])
def test_ac06_free_particle_amplitude(q, p, a0):
    flat = ModelPotential(ModelKind.CONSTANT_RATE, 1.0, (0.5, 0.0))
    s = evolve((q, p), a0, 1.0, 1e-3, flat)
    assert abs(s.A - free_amplitude(a0, 1.0)) <= 1e-8


# ---------------------------------------------------------------------------
# 7. Symplecticity of the flow Jacobian, including multiply hopped trajectories


def test_ac07_symplecticity():
    cfg = config("simple_avoided_partition.json")[0]
    assert cfg.step == cfg.epsilon / 32
    field = initial_field(cfg)
    ens = Ensemble.start(*_draw_stratified(field, 16), mode=cfg.hop_mode)
    ens.advance_to(1.0, cfg.step, cfg.potential())
    defect = ens.symplectic_defect()
    assert np.count_nonzero(ens.n_hops >= 2) > 0
    assert defect.max() <= 1e-6
    assert defect[ens.n_hops >= 2].max() <= 1e-6


def _draw_stratified(field, M):
    q, p, a, _ = build_partition(field, M).expand()
    return q, p, a, rng.stream_keys(rng.derive_key(7), q.size)


# ---------------------------------------------------------------------------
# 8. Jump-process law on a constant-rate model


def test_ac08_jump_process_law():
    lam, t, dt, n = 1.0, 1.0, 1e-3, 100_000
    model = ModelPotential(ModelKind.CONSTANT_RATE, 1.0, (0.5, lam))
    ens = Ensemble.start(np.zeros(n), np.ones(n), np.ones(n),
                         rng.stream_keys(rng.derive_key(8), n), hop_capacity=16)
    ens.advance_to(t, dt, model)
    assert int(ens.n_hops.max()) < 16

    counts = np.bincount(np.minimum(ens.n_hops, 5), minlength=6)
    pk = np.array([poisson_pmf(k, lam * t) for k in range(5)])
    expected = n * np.append(pk, 1 - pk.sum())
    assert stats.chisquare(counts, expected).pvalue > 0.01

    # first holding time, given a hop before t, is exponential truncated at t
    first = ens.hop_times[ens.n_hops > 0, 0]
    trunc = 1 - math.exp(-lam * t)
    assert stats.kstest(first, lambda s: (1 - np.exp(-lam * s)) / trunc).pvalue > 0.01


# ---------------------------------------------------------------------------
# 9. Brute-force surface-hopping series


@pytest.mark.slow
def test_ac09_series_oracle():
    cfg = with_overrides(config("simple_avoided_partition.json")[0], model="weak_avoided",
                         t_final=0.5, M=(4,), replications=40)
    model = cfg.potential()
    full = amplitude_field(cfg.initial_packet(), cfg.phase_mesh(), cfg.x_mesh(), cfg.epsilon)
    field = truncate(full, 0.5)
    oracle = brute_force_series_oracle(field, model, cfg.t_final, cfg.step, cfg.x_mesh())
    runs = [simulate(cfg, field, 4, r, model)[0] for r in range(cfg.replications)]
    h = cfg.mesh_dx
    R = cfg.replications
    for comp in ("u0", "u1"):
        U = np.array([getattr(w, comp) for w in runs])
        dist = math.sqrt(np.sum(np.abs(U.mean(0) - getattr(oracle, comp)) ** 2) * h)
        sigma = math.sqrt(np.sum(U.var(axis=0, ddof=1)) * h / R)
        assert dist <= 3 * sigma, (comp, dist, sigma)


# ---------------------------------------------------------------------------
# 10. Weighting ablation


@pytest.mark.slow
def test_ac10_weighting_ablation():
    cfg = next(c for c in config("fixed_gap_linear.json") if c.epsilon == 1 / 16)
    ablated = next(c for c in config("fixed_gap_linear_no_weights.json") if c.epsilon == 1 / 16)
    assert ablated.disable_weights and replace(ablated, disable_weights=False, traces=cfg.traces) == cfg
    with_w = run_fga(cfg).errors[0, :, 0].mean()
    without = run_fga(ablated).errors[0, :, 0].mean()
    assert without >= 2 * with_w


# ---------------------------------------------------------------------------
# 11. Transition-rate curve


@pytest.mark.slow
def test_ac11_transition_curve():
    (cfg,) = config("simple_avoided_transition.json")
    assert cfg.sizes == (6400,) and cfg.sampling_mode == "iid"
    assert cfg.times[0] == 0 and cfg.times[-1] == pytest.approx(1.5)
    rows = run_transition_curve(cfg)
    assert max(abs(a - b) for _, a, b in rows) <= 0.05


# ---------------------------------------------------------------------------
# 12. Adiabatic limit


@pytest.mark.slow
def test_ac12_adiabatic_limit():
    cfg = next(c for c in config("fixed_gap_linear.json") if c.epsilon == 1 / 128)
    assert cfg.M == (16,)
    res = run_fga(cfg)
    rate = transition_rate(res.fields[0])
    ref = transition_rate(reference_fields(cfg)[0])
    assert rate <= 0.05
    assert abs(rate - ref) <= 0.02


# ---------------------------------------------------------------------------
# 13. Determinism of CSV outputs


def test_ac13_byte_identical_outputs(tmp_path):
    cfg = with_overrides(config("simple_avoided_partition.json")[0], t_final=0.5, M=(1, 2),
                         replications=3, traces=2)
    tcfg = with_overrides(cfg, sampling_mode="iid", n_traj=(300,), times=(0.0, 0.25, 0.5))
    for name in ("a", "b"):
        run_fga(cfg, tmp_path / name)
        run_transition_curve(tcfg, out_dir=tmp_path / name)
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert {"errors.csv", "stats.csv", "transition.csv", "trace_0.csv"} <= set(files)
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f
