import numpy as np
import pytest
from scipy import stats

from fgash.errors import EmptyField, MeshTooCoarse
from fgash.sampling import (GaussianPacket, InitialAmplitudeField, PhaseSpaceMesh, UniformMesh,
                            amplitude_field, build_partition, initial_amplitude, initial_error,
                            reconstruct_initial, sample_iid, truncate)

from oracles import gaussian_amplitude

EPS = 1 / 16


def standard_meshes(eps, refine=1):
    K = PhaseSpaceMesh(-np.pi, np.pi, 0.5, 3.5, 2 * np.pi * eps / 8 / refine, 3 * eps / 4 / refine)
    return K, UniformMesh(-np.pi, np.pi, 2 * np.pi * eps / 32 / refine)


def test_mesh_nodes():
    m = UniformMesh(-1.0, 1.0, 0.25)
    assert m.n == 9
    np.testing.assert_allclose(m.nodes[[0, -1]], [-1.0, 1.0])
    assert m.trapezoid_weights().sum() == pytest.approx(2.0)
    K = PhaseSpaceMesh(0, 1, 0, 2, 0.5, 1.0)
    q, p = K.nodes()
    assert K.shape == (3, 3) and q[1] == 0.0 and p[1] == 1.0
    with pytest.raises(ValueError):
        UniformMesh(0, 1, 0)
    with pytest.raises(ValueError):
        PhaseSpaceMesh(0, 1, 1, 1, 0.1, 0.1)


def test_zero_datum_gives_zero_amplitude():
    _, y = standard_meshes(EPS)
    assert initial_amplitude(np.zeros(y.n), y, 0.3, 2.0, EPS) == 0


@pytest.mark.parametrize("q0", [1.0, -1.0])
def test_gaussian_amplitude_matches_closed_form(q0):
    K, y = standard_meshes(EPS)
    u0 = GaussianPacket(q0, 2.0, 16.0, EPS, (16 * EPS) ** -0.25)
    A = initial_amplitude(u0(y.nodes), y, K.q, K.p, EPS)
    qq, pp = np.meshgrid(K.q, K.p, indexing="ij")
    exact = gaussian_amplitude(qq, pp, q0, 2.0, 16.0, EPS, (16 * EPS) ** -0.25)
    assert np.max(np.abs(A - exact)) <= 1e-8


@pytest.mark.parametrize("eps", [1 / 32, 1 / 64])
def test_gaussian_amplitude_closed_form_other_eps(eps):
    K, y = standard_meshes(eps)
    u0 = GaussianPacket(-1.0, 2.0, 16.0, eps, 1.0)
    q = K.q[::7]
    A = initial_amplitude(u0(y.nodes), y, q, K.p, eps)
    qq, pp = np.meshgrid(q, K.p, indexing="ij")
    assert np.max(np.abs(A - gaussian_amplitude(qq, pp, -1.0, 2.0, 16.0, eps, 1.0))) <= 1e-8


def test_amplitude_peaks_at_packet_centre():
    K, y = standard_meshes(EPS)
    f = amplitude_field(GaussianPacket(1.0, 2.0, 16.0, EPS, (16 * EPS) ** -0.25), K, y, EPS)
    i, j = np.unravel_index(np.argmax(np.abs(f.amplitude)), K.shape)
    assert abs(K.q[i] - 1.0) <= K.dq and abs(K.p[j] - 2.0) <= K.dp


def test_scalar_and_vector_amplitude_agree():
    K, y = standard_meshes(EPS)
    u = GaussianPacket(-1.0, 2.0, 16.0, EPS)(y.nodes)
    grid = initial_amplitude(u, y, K.q[40:42], K.p[10:12], EPS)
    assert initial_amplitude(u, y, K.q[41], K.p[11], EPS) == pytest.approx(grid[1, 1], abs=1e-15)


def test_coarse_mesh_is_rejected():
    y = UniformMesh(-np.pi, np.pi, 0.2)
    with pytest.raises(MeshTooCoarse):
        initial_amplitude(np.ones(y.n), y, 0.0, 3.5, EPS)


def test_initial_reconstruction_error_level():
    K, y = standard_meshes(EPS)
    u0 = GaussianPacket(-1.0, 2.0, 16.0, EPS, (16 * EPS) ** -0.25)
    err = initial_error(amplitude_field(u0, K, y, EPS), u0, y)
    assert 8.3178e-05 / 3 <= err <= 3 * 8.3178e-05


def test_initial_reconstruction_improves_under_refinement():
    # the momentum window covers the packet so quadrature, not truncation, dominates
    u0 = GaussianPacket(-1.0, 2.0, 16.0, EPS, (16 * EPS) ** -0.25)
    y = UniformMesh(-np.pi, np.pi, 2 * np.pi * EPS / 64)
    errs = []
    for r in (0.2, 0.25, 0.3):
        K = PhaseSpaceMesh(-np.pi, np.pi, -0.5, 4.5, 2 * np.pi * EPS / 8 / r, 3 * EPS / 4 / r)
        errs.append(initial_error(amplitude_field(u0, K, y, EPS), u0, y))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-9


def test_zero_field_reconstructs_to_zero():
    K, y = standard_meshes(EPS)
    f = InitialAmplitudeField(K, np.zeros(K.shape, dtype=complex), EPS)
    assert not np.any(reconstruct_initial(f, y.nodes))
    with pytest.raises(EmptyField):
        build_partition(f, 4)
    with pytest.raises(EmptyField):
        sample_iid(f, 10, 1)


def test_total_mass_positive():
    K, y = standard_meshes(EPS)
    f = amplitude_field(GaussianPacket(-1.0, 2.0, 16.0, EPS), K, y, EPS)
    assert f.total_mass() > 0


def single_node_field(values):
    K = PhaseSpaceMesh(0.0, 1.0, 0.0, 1.0, 1.0, 1.0)
    return InitialAmplitudeField(K, np.asarray(values, dtype=complex).reshape(2, 2), EPS)


def test_partition_single_node_exact_division():
    plan = build_partition(single_node_field([1.0, 0, 0, 0]), 4)
    assert plan.d_M == 0.25 and plan.copies.tolist() == [4] and plan.n_traj == 4


def test_partition_m1_gives_one_copy_per_active_node():
    plan = build_partition(single_node_field([1.0, 0.3j, 0, -0.5]), 1)
    assert plan.copies.tolist() == [1, 1, 1]
    assert plan.node.tolist() == [0, 1, 3]


def test_partition_doubling_m_grows_at_most_twice():
    K, y = standard_meshes(EPS)
    f = truncate(amplitude_field(GaussianPacket(-1.0, 2.0, 16.0, EPS), K, y, EPS), 1e-3)
    prev = build_partition(f, 1).n_traj
    for M in (2, 4, 8, 16):
        n = build_partition(f, M).n_traj
        assert prev <= n <= 2 * prev
        prev = n


def test_partition_copies_sum_to_node_amplitude():
    K, y = standard_meshes(EPS)
    f = amplitude_field(GaussianPacket(-1.0, 2.0, 16.0, EPS), K, y, EPS)
    plan = build_partition(f, 7)
    q, p, a, node = plan.expand()
    sums = np.zeros(f.amplitude.size, dtype=complex)
    np.add.at(sums, node, a)
    np.testing.assert_allclose(sums[plan.node], plan.amplitude, rtol=1e-15, atol=0)
    with pytest.raises(ValueError):
        build_partition(f, 0)


def test_truncate_removes_small_nodes():
    f = single_node_field([1.0, 1e-4, 0.01, -0.5])
    assert np.count_nonzero(truncate(f, 1e-3).amplitude) == 3
    assert truncate(f, 0) is f


def test_iid_sampling_follows_modulus():
    f = single_node_field([1.0, 2.0j, 0, -1.0])
    q, p, a, node = sample_iid(f, 40000, 5)
    counts = np.bincount(node, minlength=4)
    assert counts[2] == 0
    expected = 40000 * np.array([1, 2, 1]) / 4
    assert stats.chisquare(counts[[0, 1, 3]], expected).pvalue > 0.01
    np.testing.assert_allclose(np.abs(a), 4.0 / 40000)
    np.testing.assert_allclose(a[node == 1], 1j * 4.0 / 40000)


def test_iid_sampling_is_unbiased():
    f = single_node_field([1.0, 2.0j, 0.5, -1.0])
    _, _, a, node = sample_iid(f, 200000, 9)
    est = np.zeros(4, dtype=complex)
    np.add.at(est, node, a)
    np.testing.assert_allclose(est, f.amplitude.reshape(-1), atol=0.03)


def test_amplitude_csv(tmp_path):
    f = single_node_field([1.0, 2.0j, 0, -1.0])
    f.to_csv(tmp_path / "a.csv")
    data = np.loadtxt(tmp_path / "a.csv", delimiter=",", skiprows=1)
    assert data.shape == (4, 4) and data[1, 3] == 2.0
