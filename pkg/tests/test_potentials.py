import numpy as np
import pytest

from expdich.errors import ContractError, DomainError, SeparationError
from expdich.grid import GridSpec, laplacian_bands, lowest_modes, tridiagonal_apply, tridiagonal_matrix, tridiagonal_solve
from expdich.potentials import PotentialShape, PotentialTrack, check_tracks, poschl_teller, total_potential


def test_grid_spacing():
    g = GridSpec.from_spacing(-1.0, 1.0, 0.1, dt=0.01)
    assert g.n_points == 19 and g.dx == pytest.approx(0.1)
    assert g.x[0] == pytest.approx(-0.9) and g.x[-1] == pytest.approx(0.9)


def test_tridiagonal_helpers(rng):
    g = GridSpec(0.0, np.pi, 50)
    d, e = laplacian_bands(g)
    M = tridiagonal_matrix(d, e)
    u = rng.standard_normal(50)
    assert np.allclose(tridiagonal_apply(d, e, u), M @ u)
    assert np.allclose(tridiagonal_solve(d, e, u), np.linalg.solve(M, u))


def test_dirichlet_spectrum_second_order():
    errs = []
    for n in (99, 199):
        g = GridSpec(0.0, np.pi, n)
        vals, _ = lowest_modes(g, *laplacian_bands(g), 2)
        errs.append(abs(vals[0] - 1.0))
        assert vals[1] == pytest.approx(4.0, rel=1e-3)
    assert np.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.1)


def test_shapes():
    x = np.linspace(-3, 3, 7)
    assert np.allclose(PotentialShape("sech2", {"amplitude": -6.0})(x), -6 / np.cosh(x) ** 2)
    assert np.allclose(PotentialShape("gaussian", {"amplitude": -1.0, "width": 2.0})(x), -np.exp(-(x / 2) ** 2))
    assert np.allclose(PotentialShape("constant", {"value": 3.0})(x), 3.0)
    assert poschl_teller(2).params["amplitude"] == -6.0
    with pytest.raises(ContractError):
        PotentialShape("square")
    with pytest.raises(ContractError):
        PotentialShape("sech2", {"width": -1.0})


def test_table_shape(tmp_path):
    xs = np.linspace(-5, 5, 201)
    path = tmp_path / "well.txt"
    np.savetxt(path, np.column_stack([xs, -2 / np.cosh(xs) ** 2]))
    shape = PotentialShape("table", {"path": str(path)})
    x = np.linspace(-4, 4, 33)
    assert np.allclose(shape(x), -2 / np.cosh(x) ** 2, atol=1e-6)
    assert shape(np.array([10.0]))[0] == 0.0


def test_track_kinematics():
    tr = PotentialTrack(PotentialShape("sech2"), x0=1.0, v0=0.1, amp=0.05, omega=0.5)
    t = np.linspace(0, 10, 1001)
    pos = tr.position(t)
    assert np.allclose(np.gradient(pos, t)[1:-1], tr.velocity(t)[1:-1], atol=1e-5)
    assert np.max(np.abs(tr.velocity(t))) <= tr.max_speed + 1e-15
    x = np.linspace(-5, 5, 11)
    assert np.allclose(total_potential([tr], x, 2.0), tr.shape(x - tr.position(2.0)))


def test_check_tracks():
    sh = PotentialShape("sech2")
    tracks = [PotentialTrack(sh, -10.0, -0.05), PotentialTrack(sh, 10.0, 0.05)]
    info = check_tracks(tracks, -40, 40, 20.0, max_speed=0.05, min_sep=20.0)
    assert info["speed_ok"] and info["min_separation"] == pytest.approx(20.0)
    with pytest.raises(SeparationError):
        check_tracks(tracks, -40, 40, 20.0, min_sep=25.0)
    with pytest.raises(DomainError):
        check_tracks(tracks, -15, 15, 20.0)
