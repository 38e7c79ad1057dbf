import time

import numpy as np
import pytest

from expdich.errors import HypothesisError
from expdich.grid import GridSpec
from expdich.heat import (
    MovingWells,
    backward_heat_evolve,
    coercivity_check,
    component_dynamics,
    discretize_schrodinger,
    energy_identity_defect,
    growth_rate,
    heat_moving_evolve,
    mollify_potential,
    moving_cone_functionals,
    moving_heat_dichotomy,
    oscillation,
    ray_uniqueness,
    sampled_backward_sequence,
    spectral_constants,
    spectral_data,
    stable_ray_backward_heat,
)
from expdich.linops import compose
from expdich.potentials import PotentialShape, PotentialTrack

SECH2 = PotentialShape("sech2", {"amplitude": -2.0, "width": 1.0})


@pytest.fixture(scope="module")
def box():
    return GridSpec(0.0, np.pi, 400, 1e-3)


def slow_V(grid, amp=0.05):
    return lambda t: -2.5 + amp * np.sin(0.5 * t) * np.cos(2 * grid.x)


def test_schrodinger_matrix(box):
    H = discretize_schrodinger(box, np.zeros(box.n_points))
    assert np.allclose(H, H.T)
    vals = np.linalg.eigvalsh(H)
    assert vals[0] == pytest.approx(1.0, abs=1e-4) and vals[1] == pytest.approx(4.0, abs=1e-3)
    shifted = np.linalg.eigvalsh(discretize_schrodinger(box, np.full(box.n_points, 0.7)))
    assert np.allclose(shifted, vals + 0.7, atol=1e-10)


def test_poschl_teller_levels():
    g = GridSpec.from_spacing(-20, 20, 0.02)
    sd = spectral_data(g, PotentialShape("sech2", {"amplitude": -6.0})(g.x), n_modes=3)
    # -6 sech^2 has bound states at -4 and -1; with the +1 mass these are -3 and 0
    assert sd.lambda1 + 1 == pytest.approx(-3.0, abs=1e-3)
    assert sd.lambda2 + 1 == pytest.approx(0.0, abs=1e-3)


def test_spectral_data_gap(box):
    sd = spectral_data(box, np.full(box.n_points, -2.5), mu_required=1.4)
    assert sd.lambda1 == pytest.approx(-1.5, abs=1e-4) and sd.lambda2 == pytest.approx(1.5, abs=1e-3)
    assert np.all(sd.phi1 >= 0) and box.norm(sd.phi1) == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(HypothesisError):
        spectral_data(box, np.zeros(box.n_points), mu_required=0.1)


def test_ground_state_continuity(box):
    base = np.full(box.n_points, -2.5)
    ref = spectral_data(box, base).phi1
    ratios = []
    for eps in (1e-2, 1e-3, 1e-4):
        pert = base + eps * np.cos(2 * box.x)
        diff = spectral_data(box, pert).phi1 - ref
        ratios.append(box.h1_norm(diff) / np.sqrt(box.norm(pert - base)))
    assert max(ratios) < 1.0  # measured constant, well bounded


def test_mollifier(box):
    W = mollify_potential(lambda t: np.full(box.n_points, -2.5))
    assert np.allclose(W(3.0), -2.5, atol=1e-14)
    assert W.weights.sum() == pytest.approx(1.0, abs=1e-15)
    V = slow_V(box)
    Wv = mollify_potential(V)
    t = 3.0
    window = max(box.norm(V(t) - V(t + s)) for s in np.linspace(-0.5, 0.5, 41))
    assert box.norm(V(t) - Wv(t)) <= window + 1e-12
    h = 1e-4
    fd = (Wv(t + h) - Wv(t - h)) / (2 * h)
    assert np.allclose(Wv.derivative(t), fd, atol=1e-6)


def test_oscillation_measured(box):
    assert oscillation(slow_V(box), box, 20.0) <= 0.05


def test_backward_evolve_eigenmode():
    errs = []
    for n, dt in ((99, 2e-3), (199, 1e-3)):
        g = GridSpec(0.0, np.pi, n, dt)
        mode = np.sin(2 * g.x)
        out = backward_heat_evolve(g, lambda t: np.full(n, -1.0), mode, 0.5, 0.0)
        # backward equation u_t = -u_xx + V u: the mode evolves by exp((V + k^2)(t - tau))
        exact = np.exp(-(4.0 - 1.0) * 0.5) * mode
        errs.append(g.norm(out - exact) / g.norm(exact))
    assert errs[1] < errs[0] / 3.5


def test_backward_evolve_zero_and_composition(box):
    V = slow_V(box)
    assert np.all(backward_heat_evolve(box, V, np.zeros(box.n_points), 1.0, 0.0) == 0)
    u = np.sin(3 * box.x) + box.x * (np.pi - box.x)
    a = backward_heat_evolve(box, V, u, 2.0, 0.0)
    b = backward_heat_evolve(box, V, backward_heat_evolve(box, V, u, 2.0, 0.7), 0.7, 0.0)
    assert np.abs(a - b).max() <= 1e-10 * np.abs(a).max()


def test_sampled_sequence_composes(box):
    V = slow_V(box)
    seq = sampled_backward_sequence(box, V, 0.25, 4)
    u = np.sin(box.x)
    direct = backward_heat_evolve(box, V, u, 1.0, 0.0)
    via = compose(seq, 4, 0).matrix @ u  # A(0, 4) = A_1 A_2 A_3 A_4
    assert np.allclose(via, direct, atol=1e-10 * np.abs(direct).max())


def test_stable_ray_autonomous(box):
    ray = stable_ray_backward_heat(box, lambda t: np.full(box.n_points, -2.5), 1.5)
    assert ray.decay_rate == pytest.approx(1.5, abs=1e-3)


def test_stable_ray_slow_potential(box):
    t0 = time.perf_counter()
    V = slow_V(box)
    ray = stable_ray_backward_heat(box, V, 1.5)
    assert ray.rate_ok
    assert ray_uniqueness(box, V, 1.5) <= 1e-6
    assert time.perf_counter() - t0 < 20


def test_spectral_constants_report(box):
    out = spectral_constants(box, np.full(box.n_points, -2.5), slow_V(box)(1.0), 1.4)
    assert isinstance(out, dict) and out


@pytest.fixture(scope="module")
def single():
    g = GridSpec.from_spacing(-30, 30, 0.05, dt=0.01, boundary="truncated-line-dirichlet")
    return MovingWells(g, [PotentialTrack(SECH2, 0.0, 0.02)])


def test_single_well_rate(single):
    oracle = spectral_data(single.grid, SECH2(single.grid.x)).lambda1
    assert single.K == 1
    assert growth_rate(single, 20.0) == pytest.approx(-oracle, rel=0.05)


def test_stationary_eigen_growth():
    g = GridSpec.from_spacing(-30, 30, 0.05, dt=0.01)
    sysm = MovingWells(g, [PotentialTrack(SECH2)])
    u0 = sysm.eigenfunctions(0)[:, 0]
    traj = heat_moving_evolve(sysm, u0, 2.0, n_out=3)
    assert g.norm(traj.states[-1]) == pytest.approx(np.exp(sysm.rates[0] * 2.0), rel=1e-3)


def test_free_heat_decays():
    g = GridSpec.from_spacing(-10, 10, 0.1, dt=0.01)
    sysm = MovingWells(g, [PotentialTrack(PotentialShape("constant", {"value": 0.0}))])
    traj = heat_moving_evolve(sysm, np.exp(-g.x ** 2), 2.0, n_out=21, wall_margin=0.0)
    norms = [g.norm(u) for u in traj.states]
    assert all(b <= a for a, b in zip(norms, norms[1:]))


def test_functionals_and_gram(single):
    p = moving_cone_functionals(single)
    Y = single.eigenfunctions(1.0)[:, 0]
    assert p.I_plus(1.0, Y) == pytest.approx(1.0, abs=1e-6)
    assert p.I_minus(1.0, Y) == pytest.approx(1.0, abs=1e-6)
    u = np.exp(-(single.grid.x - 5) ** 2)
    u -= single.grid.inner(u, Y) * Y
    assert p.I_plus(1.0, u) < 1e-8 * single.grid.norm(u)


def test_gram_deviation_small():
    g = GridSpec.from_spacing(-60, 60, 0.1, dt=0.01)
    devs = []
    for eta in (0.2, 0.1, 0.05):
        sysm = MovingWells(g, [PotentialTrack(SECH2, -0.5 / eta), PotentialTrack(SECH2, 0.5 / eta)])
        devs.append(sysm.gram_deviation())
    assert devs[2] < devs[1] < devs[0]
    assert devs[2] < 1e-6


def test_coercivity(single):
    assert coercivity_check(single, 5.0).passed
    # the plain form is not coercive: the negative mode needs the penalty
    assert coercivity_check(single, 0.0).min_value < 0


def test_coercivity_slack_decreases():
    g = GridSpec.from_spacing(-60, 60, 0.1, dt=0.01)
    need = []
    for eta in (0.2, 0.1, 0.05):
        sysm = MovingWells(g, [PotentialTrack(SECH2, -0.5 / eta, -eta), PotentialTrack(SECH2, 0.5 / eta, eta)])
        need.append(-min(coercivity_check(sysm, 1.0).min_value, 0.0))
    assert need[0] >= need[1] >= need[2]


def test_energy_identity(single):
    u0 = np.exp(-single.grid.x ** 2) * np.cos(single.grid.x)
    assert energy_identity_defect(single, u0) < 1e-10


def test_component_law(single):
    traj = heat_moving_evolve(single, single.eigenfunctions(0)[:, 0] + 0.3 * np.exp(-(single.grid.x - 5) ** 2),
                              10.0, n_out=201)
    assert component_dynamics(single, traj).max() < 0.05


def test_two_well_dichotomy():
    t0 = time.perf_counter()
    g = GridSpec.from_spacing(-60, 60, 0.1, dt=0.01)
    sysm = MovingWells(g, [PotentialTrack(SECH2, -25, -0.02), PotentialTrack(SECH2, 25, 0.02)])
    rep = moving_heat_dichotomy(sysm, 30.0, eta=0.02)
    assert rep.K_detected == rep.K_expected == 2 and rep.passed
    assert time.perf_counter() - t0 < 60
