import math

import numpy as np
import pytest

from fgash import reference
from fgash.errors import BoundaryContamination
from fgash.model import ModelKind, ModelPotential
from fgash.reference import (DiabaticField, adiabatic_project, cached_reference, lift,
                             periodic_grid, reference_mesh, reference_solve, to_wavefield,
                             tssp_step)
from fgash.sampling import GaussianPacket, UniformMesh

EPS = 1 / 16
EX3 = ModelPotential(ModelKind.SIMPLE_AVOIDED, EPS)
PACKET = GaussianPacket(-1.0, 2.0, 16.0, EPS, (16 * EPS) ** -0.25)


def test_flat_plane_wave_phase():
    g = 0.3
    model = ModelPotential(ModelKind.CONSTANT_RATE, 1.0, (2 * g, 0.0))
    x = periodic_grid(256)
    k = 5
    v = np.stack([np.zeros(256), np.exp(1j * k * x)])
    dt = 0.01
    out = tssp_step(DiabaticField(x, v, EPS), dt, model)
    # diabatic component 1 sits on energy -g
    expected = np.exp(-0.5j * EPS * k * k * dt + 1j * g * dt / EPS) * v[1]
    np.testing.assert_allclose(out.v[1], expected, atol=1e-13)
    assert np.max(np.abs(out.v[0])) < 1e-14


def test_norm_conserved_per_step():
    x = periodic_grid(reference_mesh(EPS))
    f = DiabaticField(x, lift(PACKET(x), 0 * x, EX3, x), EPS)
    n0 = f.norm()
    cache = {}
    for _ in range(20):
        f = tssp_step(f, EPS / 32, EX3, cache)
        assert f.norm() == pytest.approx(n0, abs=1e-12)


def test_time_step_self_convergence():
    t = 0.25
    a, b, c = (reference_solve(PACKET, EX3, EPS, t, dt=dt).v for dt in (EPS / 4, EPS / 8, EPS / 16))
    ratio = np.linalg.norm(a - b) / np.linalg.norm(b - c)
    assert 3.5 < ratio < 4.5


def test_time_zero_returns_initial_datum():
    f = reference_solve(PACKET, EX3, EPS, 0.0)
    x = f.x
    np.testing.assert_allclose(f.v, lift(PACKET(x), 0 * x, EX3, x), atol=0)


def test_projection_round_trip():
    x = periodic_grid(1024)
    rs = np.random.default_rng(0)
    u0, u1 = rs.normal(size=1024) + 0j, rs.normal(size=1024) * 1j
    f = DiabaticField(x, lift(u0, u1, EX3, x), EPS)
    p0, p1 = adiabatic_project(f, EX3)
    np.testing.assert_allclose(p0, u0, atol=1e-14)
    np.testing.assert_allclose(p1, u1, atol=1e-14)


def test_decoupled_model_keeps_upper_surface_empty():
    model = ModelPotential(ModelKind.HARMONIC_DECOUPLED, 1.0)
    f = reference_solve(PACKET, model, EPS, 1.0)
    u0, u1 = adiabatic_project(f, model)
    assert np.max(np.abs(u1)) <= 1e-12


def test_mass_conservation_over_time():
    snaps = reference_solve(PACKET, EX3, EPS, 1.5, snapshots=[0.0, 0.5, 1.0, 1.5],
                            check_boundary=False)
    n0 = snaps[0].norm()
    for s in snaps[1:]:
        u0, u1 = adiabatic_project(s, EX3)
        mass = math.sqrt((np.sum(np.abs(u0) ** 2) + np.sum(np.abs(u1) ** 2)) * s.dx)
        assert mass == pytest.approx(n0, abs=1e-10)


def test_off_grid_snapshots_do_not_perturb_later_ones():
    a = reference_solve(PACKET, EX3, EPS, 0.5, snapshots=[0.1234, 0.5])[1]
    b = reference_solve(PACKET, EX3, EPS, 0.5)
    np.testing.assert_array_equal(a.v, b.v)


def _refinement_gap(t, n):
    xm = UniformMesh(-np.pi, np.pi, 2 * np.pi * EPS / 32)
    a = to_wavefield(reference_solve(PACKET, EX3, EPS, t, n_nodes=n), EX3, xm)
    b = to_wavefield(reference_solve(PACKET, EX3, EPS, t, n_nodes=2 * n), EX3, xm)
    return math.sqrt(np.sum(np.abs(a.u0 - b.u0) ** 2 + np.abs(a.u1 - b.u1) ** 2) * xm.h)


def test_space_refinement_is_converged():
    assert _refinement_gap(0.5, reference_mesh(EPS)) < 1e-10


def test_space_refinement_floor_from_edge_contact():
    # by t = 1 the tail touches the periodic edge, where the potential is not
    # periodic; the resulting floor does not shrink with n
    n = reference_mesh(EPS)
    assert _refinement_gap(1.0, n) < 1e-9
    assert _refinement_gap(1.0, 2 * n) < 1e-9


def test_boundary_contamination_detected():
    with pytest.raises(BoundaryContamination):
        reference_solve(PACKET, EX3, EPS, 1.5)


def test_grid_must_be_power_of_two():
    with pytest.raises(ValueError):
        periodic_grid(1000)
    with pytest.raises(ValueError):
        reference_mesh(0.3)


def test_to_wavefield_rejects_off_grid_mesh():
    f = reference_solve(PACKET, EX3, EPS, 0.0)
    with pytest.raises(ValueError):
        to_wavefield(f, EX3, UniformMesh(-np.pi, np.pi, 2 * np.pi / 1000))


def test_cache_hit(tmp_path, monkeypatch):
    monkeypatch.setenv(reference.CACHE_ENV, str(tmp_path))
    calls = []

    def compute():
        calls.append(1)
        return [np.arange(3.0) + 1j, np.zeros(3)]

    first = cached_reference({"a": 1}, compute)
    second = cached_reference({"a": 1}, compute)
    assert len(calls) == 1
    for u, v in zip(first, second):
        np.testing.assert_array_equal(u, v)
    cached_reference({"a": 2}, compute)
    assert len(calls) == 2
