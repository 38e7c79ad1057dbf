import time

import numpy as np
import pytest

from expdich.avalanche import conjugated_system, constant_system
from expdich.dichotomy import (
    DichotomyCertificate,
    build_certificate,
    build_projections,
    certify,
    horizon_convergence,
    measure_rates,
    propagate_unstable,
    stable_subspace_backward,
    stable_subspace_forward,
    unstable_subspace_backward,
    unstable_subspace_forward,
)
from expdich.errors import NoGapError, TransversalityError
from expdich.linops import OperatorSequence, Subspace, principal_angles, rotation, sphere_distance

E1 = Subspace.coordinate(2, [0])
E2 = Subspace.coordinate(2, [1])


def line(v):
    return Subspace.from_vectors(np.asarray(v, dtype=float).reshape(-1, 1))


def test_stable_forward_diagonal():
    seq = constant_system((0.5, 3.0))
    for h in (1, 5, 20):
        assert sphere_distance(stable_subspace_forward(seq, 1, 3, h), E1) < 1e-12


def test_stable_forward_intro(intro):
    assert sphere_distance(stable_subspace_forward(intro, 1, 0, 20), E1) < 1e-12


def test_stable_forward_conjugated():
    eta = 0.3
    seq = conjugated_system(eta)
    for n in (0, 4, 9):
        expected = line(rotation(n * eta)[:, 0])
        assert sphere_distance(stable_subspace_forward(seq, 1, n, 30), expected) < 1e-8


def test_stable_forward_no_gap():
    with pytest.raises(NoGapError):
        stable_subspace_forward(OperatorSequence.constant(np.eye(2)), 1, 0, 5)


def test_horizon_convergence_monotone():
    seq = conjugated_system(0.2, (0.5, 2.0))
    d = horizon_convergence(seq, 1, 0, [1, 2, 4, 8])
    positive = [x for x in d if x > 1e-15]
    assert all(b <= a for a, b in zip(positive, positive[1:]))


def test_unstable_forward_examples(intro):
    seq = constant_system((0.5, 3.0))
    for n in (0, 3, 7):
        assert sphere_distance(unstable_subspace_forward(seq, E2, n), E2) < 1e-14
    assert sphere_distance(unstable_subspace_forward(intro, E2, 6), E2) < 1e-14


def test_unstable_forward_angle_decay():
    seq = constant_system((0.5, 3.0))
    fam = propagate_unstable(seq, line([1.0, 1.0]), 0, 8)
    for n, S in enumerate(fam):
        angle = principal_angles(S, E2)[0]
        assert 0.5 * 6.0 ** -n <= angle <= 2 * 6.0 ** -n


def test_stable_backward_examples():
    seq = OperatorSequence.constant(np.diag([0.5, 0.25]), direction="backward")
    assert sphere_distance(stable_subspace_backward(seq, 1, 0, 10), E1) < 1e-12
    singular = OperatorSequence.constant(np.diag([1.0, 0.0]), direction="backward")
    assert sphere_distance(stable_subspace_backward(singular, 1, 0, 10), E1) < 1e-12


def test_stable_backward_rotated():
    th = 0.4
    Q = rotation(th)
    seq = OperatorSequence.constant(Q @ np.diag([0.5, 0.25]) @ Q.T, direction="backward")
    assert sphere_distance(stable_subspace_backward(seq, 1, 2, 30), line(Q[:, 0])) < 1e-8


def test_unstable_backward_examples():
    a1 = np.array([[1.0, 0.0, 0.0]])
    plane = Subspace.coordinate(3, [1, 2])
    ident = OperatorSequence.constant(np.eye(3), direction="backward")
    for n in (0, 2, 5):
        assert sphere_distance(unstable_subspace_backward(ident, a1, n), plane) < 1e-12
    diag = OperatorSequence.constant(np.diag([2.0, 1.0, 1.0]), direction="backward")
    assert sphere_distance(unstable_subspace_backward(diag, a1, 3), plane) < 1e-12


def test_unstable_backward_random_constraint():
    rng = np.random.default_rng(0)
    mats = [rng.standard_normal((4, 4)) for _ in range(8)]
    seq = OperatorSequence.from_matrices(mats, direction="backward")
    alpha = rng.standard_normal((1, 4))
    n = 5
    X = unstable_subspace_backward(seq, alpha, n)
    A = np.eye(4)
    for k in range(1, n + 1):
        A = A @ mats[k]
    assert X.dim == 3
    assert np.abs(alpha @ A @ X.basis).max() <= 1e-10 * np.linalg.norm(alpha) * np.linalg.norm(A)


def test_projections():
    p = build_projections(E1, E2)
    assert p.norm_s == pytest.approx(1.0) and p.norm_u == pytest.approx(1.0)
    q = build_projections(E1, line([1.0, 1.0]))
    assert np.allclose(q.pi_s, [[1.0, -1.0], [0.0, 0.0]], atol=1e-14)
    assert q.norm_s == pytest.approx(np.sqrt(2))
    assert np.allclose(q.pi_s + q.pi_u, np.eye(2)) and np.allclose(q.pi_s @ q.pi_s, q.pi_s)
    with pytest.raises(TransversalityError):
        build_projections(E1, E1)


def test_certify_diagonal():
    seq = constant_system((0.5, 3.0))
    cert = build_certificate(seq, 1, 0, 20, 0.5, 3.0)
    rep = certify(seq, cert)
    assert rep.passed and rep.C == pytest.approx(1.0)
    assert rep.item("commutation").measured < 1e-12
    assert [it.item for it in rep.items] == [1, 2, 3, 4, 5]


def test_certify_intro(intro):
    t0 = time.perf_counter()
    cert = build_certificate(intro, 1, 0, 40, 0.125, 2.0)
    rep = certify(intro, cert)
    assert rep.passed
    assert time.perf_counter() - t0 < 1.0


def test_certify_swapped_fails(intro):
    cert = build_certificate(intro, 1, 0, 30, 0.125, 2.0)
    swapped = DichotomyCertificate(cert.direction, cert.start, cert.stop, cert.unstable, cert.stable,
                                   cert.rate_a, cert.rate_b)
    rep = certify(intro, swapped)
    item = rep.item("stable-decay")
    assert not item.passed
    # the fitted constant grows exponentially with the window
    assert item.measured > 1e30 and "log-slope 2.7" in item.detail


def test_measure_rates_examples(intro):
    seq = constant_system((0.5, 3.0))
    rate, C = measure_rates(seq, [E1] * 20)
    assert rate == pytest.approx(0.5, abs=1e-10)
    cert = build_certificate(intro, 1, 0, 40, 0.125, 2.0)
    rs, _ = measure_rates(intro, cert.stable)
    ru, _ = measure_rates(intro, cert.unstable, which="min")
    assert rs == pytest.approx(0.125, abs=1e-10)
    assert ru == pytest.approx(2.0, abs=1e-10)


def test_measure_rates_noisy_conjugated():
    rng = np.random.default_rng(9)
    angles = np.cumsum(rng.uniform(0.05, 0.4, 60))
    noise = [1 + 0.05 * rng.standard_normal(2) for _ in range(60)]
    mats = [rotation(angles[n + 1]) @ np.diag([0.4 * noise[n][0], 2.5 * noise[n][1]]) @ rotation(angles[n]).T
            for n in range(59)]
    seq = OperatorSequence.from_matrices(mats)
    fam = [line(rotation(angles[n])[:, 0]) for n in range(59)]
    rate, _ = measure_rates(seq, fam)
    assert rate == pytest.approx(0.4, rel=0.05)


def test_stable_set_characterization(intro):
    cert = build_certificate(intro, 1, 0, 30, 0.125, 2.0)
    rep = certify(intro, cert)
    rng = np.random.default_rng(1)
    v = cert.stable_at(0).basis[:, 0]
    w = rng.standard_normal(2)
    for m in range(1, 30):
        v = intro.matrix(m - 1) @ v
        w = intro.matrix(m - 1) @ w
        assert np.linalg.norm(v) <= rep.C * 0.125 ** m * (1 + 1e-9)
    # a generic vector leaves every decay bound with rate below b
    assert np.linalg.norm(w) > 1.5 ** 29


def test_stable_invariance(intro):
    cert = build_certificate(intro, 1, 0, 20, 0.125, 2.0)
    for n in range(19):
        img = intro.matrix(n) @ cert.stable_at(n).basis
        assert cert.stable_at(n + 1).distance_to(img[:, 0] / np.linalg.norm(img)) < 1e-10


def test_unstable_seed_independence():
    seq = constant_system((0.5, 3.0))
    A = propagate_unstable(seq, line([0.3, 1.0]), 0, 20)
    B = propagate_unstable(seq, line([-0.2, 1.0]), 0, 20)
    assert sphere_distance(A[20], B[20]) < 1e-12 < sphere_distance(A[0], B[0])


def test_certificate_json_roundtrip(intro):
    cert = build_certificate(intro, 1, 0, 10, 0.125, 2.0)
    back = DichotomyCertificate.from_json(cert.to_json())
    assert back.dim == 2 and back.indices == cert.indices
    for n in cert.indices:
        assert sphere_distance(back.stable_at(n), cert.stable_at(n)) < 1e-15
    assert certify(intro, back).passed
