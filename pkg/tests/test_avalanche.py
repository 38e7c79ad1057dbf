import numpy as np
import pytest

from expdich.avalanche import (
    avalanche_certificate,
    avalanche_functionals,
    build_avalanche,
    choose_cone_constants,
    constant_system,
    epsilon_decay,
    epsilon_growth,
    rotating_delta,
    rotating_system,
    stable_alignment,
)
from expdich.cones import ConeParams, check_step_inequalities, cone_samples, constants_gate
from expdich.dichotomy import certify
from expdich.errors import GapViolationError, HypothesisError
from expdich.linops import OperatorSequence, Subspace, sphere_distance

E1 = Subspace.coordinate(2, [0])


def eta_for_delta(delta):
    return 2 * np.arcsin(np.sqrt(delta) / 2)


def test_constant_system_aligned():
    sysm = build_avalanche(constant_system((0.5, 3.0)), 0.5, 3.0, 0, 10)
    assert sysm.delta == 0.0
    assert sysm.d_s == 1 and sysm.d_u == 1
    for n in range(10):
        assert sphere_distance(sysm.Y_s_at(n), E1) < 1e-15
        assert sphere_distance(sysm.Z_s[n], E1) < 1e-15


@pytest.mark.parametrize("eta", [0.1, 0.05, 0.025])
def test_rotating_delta_quadratic(eta):
    sysm = build_avalanche(rotating_system(eta), 0.5, 3.0, 0, 20)
    assert sysm.delta == pytest.approx(rotating_delta(eta), rel=1e-9)
    assert sysm.delta == pytest.approx(eta ** 2, rel=0.01)


def test_gap_violation():
    with pytest.raises(GapViolationError):
        build_avalanche(OperatorSequence.constant(np.eye(2)), 0.5, 3.0, 0, 5)


def test_orthogonality_of_splits():
    sysm = build_avalanche(rotating_system(0.1), 0.5, 3.0, 0, 10)
    for n in range(10):
        assert np.abs(sysm.Y_s[n].basis.T @ sysm.Y_u[n].basis).max() < 1e-10
        assert np.abs(sysm.Z_s[n].basis.T @ sysm.Z_u[n].basis).max() < 1e-10


def test_functional_values(rng):
    sysm = build_avalanche(rotating_system(0.1), 0.5, 3.0, 0, 10)
    p = avalanche_functionals(sysm)
    n = 4
    ys, yu = sysm.Y_s_at(n).basis[:, 0], sysm.Y_u_at(n).basis[:, 0]
    assert p.I_minus(n, ys) == pytest.approx(1.0) and p.I_plus(n, ys) == pytest.approx(0.0, abs=1e-15)
    v = (ys + yu) / np.sqrt(2)
    assert p.I_minus(n, v) == pytest.approx(1 / np.sqrt(2)) and p.I_plus(n, v) == pytest.approx(1 / np.sqrt(2))
    V = rng.standard_normal((100, 2))
    assert np.allclose(p.I_minus(n, V) ** 2 + p.I_plus(n, V) ** 2, np.sum(V ** 2, axis=1), rtol=1e-12)


def test_certificate_constant():
    seq = constant_system((0.5, 3.0))
    cert, _ = avalanche_certificate(build_avalanche(seq, 0.5, 3.0, 0, 20), epsilon=0.01)
    assert certify(seq, cert).passed
    assert all(sphere_distance(cert.stable_at(n), E1) < 1e-14 for n in cert.indices)


def test_certificate_small_delta():
    seq = rotating_system(eta_for_delta(1e-4))
    sysm = build_avalanche(seq, 0.5, 3.0, 0, 30)
    assert sysm.delta == pytest.approx(1e-4, rel=1e-9)
    cert, _ = avalanche_certificate(sysm, epsilon=0.05)
    assert certify(seq, cert).passed
    assert cert.stable_at(0).dim == sysm.d_s


def test_certificate_large_delta_rejected():
    sysm = build_avalanche(rotating_system(eta_for_delta(0.3)), 0.5, 3.0, 0, 10)
    with pytest.raises(HypothesisError, match="epsilon"):
        avalanche_certificate(sysm, epsilon=0.01)


def test_epsilon_formulas():
    d, a, b, c3, c4 = 1e-3, 0.5, 3.0, 2.0, 0.1
    assert epsilon_growth(d, a, b, c4) == pytest.approx(b * (1 - np.sqrt(1 - d)) + a * np.sqrt(d) / c4)
    assert epsilon_decay(d, a, c3) > 0


def test_step_inequalities_with_proof_epsilon():
    seq = rotating_system(0.05)
    sysm = build_avalanche(seq, 0.5, 3.0, 0, 30)
    choice = choose_cone_constants(sysm.delta, 0.5, 3.0)
    p = avalanche_functionals(sysm)
    params = ConeParams(choice.c3, choice.c4, 0.5 + choice.epsilon, 3.0 - choice.epsilon)
    assert constants_gate(p, params).ok
    samples = cone_samples(p, 2, [choice.c3, choice.c4], seed=0, n_random=1000)
    assert check_step_inequalities(seq, p, params, range(30), samples) == []


def test_projection_bound(rng):
    # |proj_Z v|^2 >= (1 - phi(Y, Z)) |v|^2 for v in Y
    for _ in range(50):
        Y = Subspace.from_vectors(rng.standard_normal((4, 2)))
        Z = Subspace.from_vectors(Y.basis + 0.1 * rng.standard_normal((4, 2)))
        phi = sphere_distance(Y, Z)
        V = Y.basis @ rng.standard_normal((2, 20))
        proj = Z.basis @ (Z.basis.T @ V)
        assert np.all(np.sum(proj ** 2, 0) >= (1 - phi) * np.sum(V ** 2, 0) - 1e-12)


def test_alignment_monotone_in_eta():
    worst = []
    for eta in (0.1, 0.05, 0.025, 0.0125):
        sysm = build_avalanche(rotating_system(eta), 0.5, 3.0, 0, 50)
        cert, _ = avalanche_certificate(sysm)
        worst.append(float(np.max(stable_alignment(sysm, cert))))
    assert all(b < a for a, b in zip(worst, worst[1:]))
