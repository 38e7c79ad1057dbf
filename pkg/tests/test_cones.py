import json

import numpy as np
import pytest

from expdich.avalanche import avalanche_functionals, build_avalanche, constant_system
from expdich.cones import (
    ConeFunctionalPair,
    ConeParams,
    check_cone_invariance,
    check_step_inequalities,
    cone_samples,
    constants_gate,
    estimate_c1,
    functionals_from_certificate,
    gate_bound,
    in_cone_threshold,
    membership,
    random_unit_vectors,
    subspace_in_cone,
    uniform_independence_constant,
    write_violations,
)
from expdich.dichotomy import build_certificate
from expdich.errors import ContractError, DegeneracyError
from expdich.linops import OperatorSequence, compose, intro_sequence


def coord_pair(c1=None, c2=None):
    return ConeFunctionalPair(
        lambda n, V: np.abs(V[:, 0]), lambda n, V: np.abs(V[:, 1]), K=1, c1=c1, c2=c2,
        covectors=lambda n: np.array([[0.0, 1.0]]),
    )


def test_membership_examples():
    p = coord_pair()
    assert membership(p, 1.0, 0, [1.0, 0.0]) == "stable"
    assert membership(p, 1.0, 0, [1.0, 1.0]) == "boundary"
    assert membership(p, 0.5, 0, [1.0, 0.9]) == "unstable"


def test_membership_batch_and_errors():
    p = coord_pair()
    labels = membership(p, 1.0, 0, np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert list(labels) == ["stable", "unstable"]
    with pytest.raises(ContractError):
        membership(p, 0.0, 0, [1.0, 0.0])


def test_homogeneity(rng):
    p = coord_pair()
    V = rng.standard_normal((50, 2))
    t = rng.standard_normal(50)
    assert np.allclose(p.I_minus(0, V * t[:, None]), np.abs(t) * p.I_minus(0, V))
    assert np.allclose(p.I_plus(0, V * t[:, None]), np.abs(t) * p.I_plus(0, V))


@pytest.mark.parametrize("direction,c4,ok,bound", [
    ("forward", 0.1, True, 1 / 6),
    ("forward", 0.2, False, 1 / 6),
    ("backward", 7.0, True, 6.0),
])
def test_constants_gate_examples(direction, c4, ok, bound):
    rep = constants_gate((1.0, 1.0), ConeParams(1.0, c4, 0.5, 2.0, direction))
    assert rep.ok is ok
    assert rep.bound == pytest.approx(bound, rel=1e-15)
    assert ("PASS" if ok else "FAIL") in rep.line()


def test_gate_grid_matches_arithmetic():
    rng = np.random.default_rng(7)
    for c1, c2, c3 in rng.uniform(0.05, 3.0, (100, 3)):
        assert gate_bound(c1, c2, c3, "forward") == (c1 * c2) ** 2 * c3 / (3.0 * (1.0 + c3))
        assert gate_bound(c1, c2, c3, "backward") == 3.0 * (c3 + 1.0) / (c1 * c2) ** 2


def test_gate_rejects_nonpositive():
    with pytest.raises(ContractError):
        gate_bound(0.0, 1.0, 1.0, "forward")
    with pytest.raises(ContractError):
        ConeParams(1.0, -1.0, 0.5, 2.0)


def test_estimate_c1(rng):
    p = coord_pair()
    s = np.linspace(0, 2 * np.pi, 1001)
    est = estimate_c1(p, np.stack([np.cos(s), np.sin(s)], axis=1))
    assert est.lower >= 1 / np.sqrt(2) - 1e-6 and est.ok
    axis = estimate_c1(p, np.eye(2))
    assert axis.c1 == pytest.approx(1.0)
    zero = ConeFunctionalPair(lambda n, V: 0 * V[:, 0], lambda n, V: 0 * V[:, 0], K=0)
    bad = estimate_c1(zero, np.eye(2))
    assert bad.c1 == 0.0 and not bad.ok
    with pytest.raises(ContractError):
        estimate_c1(p, np.zeros((1, 2)))


def test_step_inequalities_diagonal_exact():
    seq = constant_system((0.5, 3.0))
    p = coord_pair()
    for c3, c4 in ((1.0, 0.1), (5.0, 2.0)):
        samples = cone_samples(p, 2, [c3, c4], seed=0, n_random=200)
        assert check_step_inequalities(seq, p, ConeParams(c3, c4, 0.5, 3.0), range(10), samples) == []


def test_step_inequalities_detect_wrong_rate(tmp_path):
    seq = constant_system((0.5, 3.0))
    p = coord_pair()
    samples = cone_samples(p, 2, [1.0, 0.1], seed=0, n_random=200)
    viol = check_step_inequalities(seq, p, ConeParams(1.0, 0.1, 0.5, 4.0), range(10), samples)
    assert {v.n for v in viol} == set(range(10))
    assert all(v.inequality == "growth" and v.margin < 0 for v in viol)
    out = tmp_path / "v.jsonl"
    write_violations(out, viol[:3])
    rec = [json.loads(line) for line in out.read_text().splitlines()]
    assert set(rec[0]) == {"n", "sample_id", "inequality", "lhs", "rhs", "margin"}


def test_step_inequalities_intro_blocks():
    blocks = OperatorSequence.constant(compose(intro_sequence(), 2, 0).matrix)
    eps = 0.01
    p = coord_pair()
    params = ConeParams(1.0, 0.1, (1 / 8 + eps) ** 2, (2 - eps) ** 2)
    samples = cone_samples(p, 2, [1.0, 0.1], seed=1, n_random=500)
    assert check_step_inequalities(blocks, p, params, range(10), samples) == []


def test_cone_invariance_diagonal():
    seq = constant_system((0.5, 3.0))
    p = coord_pair()
    samples = cone_samples(p, 2, [0.1, 1.0], seed=2, n_random=500)
    assert check_cone_invariance(seq, p, [0.1, 0.5, 1.0], range(20), samples) == []


def test_norm_equivalence_on_stable_cone(rng):
    p = coord_pair()
    c1, c = 1 / np.sqrt(2), 0.7
    V = random_unit_vectors(rng, 2000, 2)
    stable = p.I_plus(0, V) <= c * p.I_minus(0, V)
    im = p.I_minus(0, V[stable])
    assert np.all(c1 * im <= 1 + 1e-12) and np.all(1 <= (1 + c) / c1 * im + 1e-12)


def test_subspace_in_cone_orthonormal():
    A = np.eye(4)[:2]
    S = subspace_in_cone(A)
    assert S.dim == 2
    assert np.allclose(S.meta["pairings"], 1.0)


def test_subspace_in_cone_gram_schmidt():
    A = np.array([[1.0, 0.0], [1.0, 0.1]])
    S = subspace_in_cone(A)
    Z = S.meta["z"]
    assert Z[:, 1] @ A[1] == pytest.approx(0.1, abs=1e-12)
    assert abs(A[0] @ Z[:, 1]) < 1e-12 and abs(A[1] @ Z[:, 0]) < 1e-12


def test_subspace_in_cone_dependent():
    with pytest.raises(DegeneracyError):
        subspace_in_cone(np.array([[1.0, 0.0], [1.0, 0.0]]))


def test_subspace_in_cone_random_families():
    rng = np.random.default_rng(3)
    for _ in range(100):
        K = int(rng.integers(1, 4))
        A = rng.standard_normal((K, 6))
        c6 = uniform_independence_constant(A)
        S = subspace_in_cone(A, c6)
        Z = S.meta["z"]
        G = A @ Z
        assert np.allclose(np.linalg.norm(Z, axis=0), 1.0, atol=1e-14)
        assert np.all(np.diag(G) >= c6 / 2)
        assert np.abs(G - np.diag(np.diag(G))).max() <= 1e-12


def test_subspace_in_cone_membership():
    # plus side: I^+ = max |<alpha_k, v>|, I^- = |component orthogonal to the covectors|
    rng = np.random.default_rng(4)
    A = rng.standard_normal((2, 5))
    Q, _ = np.linalg.qr(A.T)

    def plus(n, V):
        return np.max(np.abs(V @ A.T), axis=1)

    def minus(n, V):
        return np.linalg.norm(V - (V @ Q) @ Q.T, axis=1)

    p = ConeFunctionalPair(minus, plus, K=2)
    S = subspace_in_cone(A, pair=p, c=10.0, side="unstable", n_check=100)
    assert S.meta["cone_check_failures"] == 0
    assert in_cone_threshold(1.0, 1.0, 1.0, 2, "unstable") == 0.25


def test_functionals_from_diagonal_certificate(rng):
    seq = constant_system((0.5, 3.0))
    cert = build_certificate(seq, 1, 0, 20, 0.5, 3.0)
    p = functionals_from_certificate(cert, seq)
    V = rng.standard_normal((50, 2))
    assert np.allclose(p.I_minus(5, V), np.abs(V[:, 0]), rtol=1e-12)
    assert np.allclose(p.I_plus(5, V), np.abs(V[:, 1]), rtol=1e-12)


def test_functionals_from_certificate_kernel_and_seminorm(rng):
    seq = intro_sequence()
    cert = build_certificate(seq, 1, 0, 30, 0.125, 2.0)
    p = functionals_from_certificate(cert, seq)
    for n in (3, 10):
        Xs = cert.stable_at(n).basis
        V = (Xs @ rng.standard_normal((Xs.shape[1], 100))).T
        assert np.all(p.I_plus(n, V) <= 1e-12 * np.linalg.norm(V, axis=1))
        X, Y = rng.standard_normal((2, 100, 2))
        for f in (p.I_minus, p.I_plus):
            assert np.all(f(n, X + Y) <= f(n, X) + f(n, Y) + 1e-12)


def test_functionals_from_certificate_monotone():
    seq = intro_sequence()
    cert = build_certificate(seq, 1, 0, 30, 0.125, 2.0)
    p = functionals_from_certificate(cert, seq)
    rng = np.random.default_rng(5)
    for n in range(0, 29):
        V = rng.standard_normal((1000, 2))
        W = V @ seq.matrix(n).T
        assert np.all(p.I_plus(n + 1, W) >= 2.0 * p.I_plus(n, V) * (1 - 1e-10))
        assert np.all(p.I_minus(n + 1, W) <= 0.125 * p.I_minus(n, V) * (1 + 1e-10))


def test_avalanche_pair_constants():
    sysm = build_avalanche(constant_system((0.5, 3.0)), 0.5, 3.0, 0, 10)
    p = avalanche_functionals(sysm)
    assert p.c1 == pytest.approx(1 / np.sqrt(2))
