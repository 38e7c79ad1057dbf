"""Experiment runners behind the command line: each turns a validated config
into PASS/FAIL checks, CSV tables and JSON documents."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import avalanche as av
from . import heat, kleingordon as kg
from .cones import ConeParams, cone_samples, check_step_inequalities, constants_gate, functionals_from_certificate
from .config import (
    AvalancheConfig,
    BackwardHeatConfig,
    HeatMovingConfig,
    KleinGordonConfig,
    MatrixSystem,
    MatrixSystemConfig,
)
from .dichotomy import build_certificate, build_projections, certify, measure_rates
from .errors import ContractError
from .grid import GridSpec
from .linops import FORWARD, OperatorSequence, intro_sequence
from .potentials import PotentialShape


@dataclass
class Check:
    passed: bool
    text: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.text}"


@dataclass
class Result:
    kind: str
    seed: int
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # name -> (columns, rows)
    documents: dict = field(default_factory=dict)  # name -> JSON-able dict
    metrics: dict = field(default_factory=dict)  # scalar summary for sweeps
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, passed: bool, text: str) -> None:
        self.checks.append(Check(bool(passed), text))

    def add_line(self, line: str) -> None:
        """Adopt a line already prefixed with PASS/FAIL."""
        status, _, rest = line.partition(" ")
        self.checks.append(Check(status == "PASS", rest))


# --- matrix systems ----------------------------------------------------------------------------


def build_sequence(system: MatrixSystem) -> OperatorSequence:
    if system.example == "intro":
        seq = intro_sequence()
    elif system.example == "constant":
        seq = OperatorSequence.constant(np.diag(system.diag), name="constant")
    elif system.example == "rotating":
        seq = av.rotating_system(system.eta, system.diag)
    elif system.example == "conjugated":
        seq = av.conjugated_system(system.eta, system.diag)
    else:
        seq = OperatorSequence.periodic([np.array(m, dtype=float) for m in system.matrices], name="custom")
    if system.direction != FORWARD:
        seq = OperatorSequence(seq.dim, system.direction, seq.provider, seq.length, seq.name)
    return seq


def _certificate_checks(res: Result, seq, cert) -> None:
    report = certify(seq, cert)
    for it in report.items:
        res.add_line(it.line())
    prof = report.gap_profile
    gaps = sorted(set(prof["stable"]) | set(prof["unstable"]))
    res.tables["gap_profile"] = (
        ["gap", "stable_sup", "unstable_sup"],
        [[g, prof["stable"].get(g, np.nan), prof["unstable"].get(g, np.nan)] for g in gaps],
    )
    rows = []
    for n in cert.indices:
        p = build_projections(cert.stable_at(n), cert.unstable_at(n))
        rows.append([n, p.norm_s, p.norm_u])
    res.tables["projections"] = (["n", "norm_pi_stable", "norm_pi_unstable"], rows)
    res.metrics.update({"C": report.C, "proj_bound": report.proj_bound})


def run_matrix(cfg: MatrixSystemConfig, base_dir: Path | None = None) -> Result:
    res = Result(cfg.kind, cfg.seed)
    seq = build_sequence(cfg.system)
    start, stop = cfg.window
    a, b = cfg.rates
    cert = build_certificate(seq, cfg.K, start, stop, a, b)
    cert.meta["seed"] = cfg.seed
    _certificate_checks(res, seq, cert)
    if seq.direction == FORWARD and cert.stable_at(start).dim and cert.unstable_at(start).dim:
        rs, Cs = measure_rates(seq, cert.stable, start, which="max")
        ru, Cu = measure_rates(seq, cert.unstable, start, which="min")
        res.add(rs <= a * (1 + 1e-9), f"measured stable rate {rs:.12g} <= a={a:.12g} (stable-decay item), "
                                      f"margin {a - rs:.3e}")
        res.add(ru >= b * (1 - 1e-9), f"measured unstable rate {ru:.12g} >= b={b:.12g} (unstable-growth item), "
                                      f"margin {ru - b:.3e}")
        res.metrics.update({"rate_stable": rs, "rate_unstable": ru})
    if cfg.cones is not None:
        pair = functionals_from_certificate(cert, seq)
        c1 = cfg.cones.c1 if cfg.cones.c1 is not None else pair.c1
        c2 = cfg.cones.c2 if cfg.cones.c2 is not None else pair.c2
        params = ConeParams(cfg.cones.c3, cfg.cones.c4, a, b, seq.direction)
        gate = constants_gate((c1, c2), params)
        res.add_line(gate.line())
        res.metrics["gate_slack"] = gate.slack
        if cfg.cones.samples:
            n_range = range(start, stop) if seq.direction == FORWARD else range(start + 1, stop + 1)
            samples = cone_samples(pair, seq.dim, [cfg.cones.c3, cfg.cones.c4], cfg.seed, cfg.cones.samples)
            viol = check_step_inequalities(seq, pair, params, n_range, samples)
            res.add(not viol, f"one-step decay/growth inequalities on {cfg.cones.samples} samples per index: "
                              f"{len(viol)} violations")
    res.documents["certificate"] = cert.to_dict()
    return res


# --- avalanche --------------------------------------------------------------------------------


def avalanche_sequence(cfg: AvalancheConfig) -> OperatorSequence:
    if cfg.generator == "rotating":
        return av.rotating_system(cfg.eta, cfg.diag)
    if cfg.generator == "conjugated":
        return av.conjugated_system(cfg.eta, cfg.diag)
    return av.constant_system(cfg.diag)


def run_avalanche(cfg: AvalancheConfig, base_dir: Path | None = None) -> Result:
    res = Result(cfg.kind, cfg.seed)
    seq = avalanche_sequence(cfg)
    sys = av.build_avalanche(seq, cfg.a, cfg.b, *cfg.window)
    cert, choice = av.avalanche_certificate(sys, cfg.epsilon, cfg.c3)
    cert.meta["seed"] = cfg.seed
    res.add(choice.c4 < choice.gate, f"constants gate (forward): c4={choice.c4:.6g} < {choice.gate:.6g} "
                                     f"with c3={choice.c3:.6g}")
    eps = cert.meta["epsilon"]
    res.add(eps >= choice.epsilon, f"alignment bound: epsilon={eps:.6g} >= guaranteed {choice.epsilon:.6g} "
                                   f"(growth {choice.eps_growth:.6g}, decay {choice.eps_decay:.6g}) at delta={sys.delta:.6g}")
    _certificate_checks(res, seq, cert)
    align = av.stable_alignment(sys, cert)
    res.tables["alignment"] = (
        ["n", "phi_stable_step", "phi_unstable_step", "phi_certified_vs_singular"],
        [[n, sys.phi_s[i] if i < len(sys.phi_s) else np.nan, sys.phi_u[i] if i < len(sys.phi_u) else np.nan,
          align[i]] for i, n in enumerate(cert.indices)],
    )
    res.metrics.update({"eta": cfg.eta, "delta": sys.delta, "epsilon": eps, "c3": choice.c3, "c4": choice.c4,
                        "max_alignment": float(np.max(align)), "eps_decay_printed": choice.eps_decay_printed})
    res.documents["certificate"] = cert.to_dict()
    return res


# --- backward heat ------------------------------------------------------------------------------


def heat_potential(cfg: BackwardHeatConfig, grid):
    p = cfg.potential
    profile = np.cos(p.wavenumber * grid.x)

    def V(t):
        return p.value + p.amp * np.sin(p.omega * t) * profile

    return V


def run_backward_heat(cfg: BackwardHeatConfig, base_dir: Path | None = None) -> Result:
    res = Result(cfg.kind, cfg.seed)
    grid = cfg.grid.build()
    V = heat_potential(cfg, grid)
    T = cfg.T if cfg.T is not None else 10.0 / cfg.mu
    delta = heat.oscillation(V, grid, T)
    res.add(delta <= cfg.delta_max, f"hypothesis slow variation: unit-window oscillation {delta:.6g} "
                                    f"<= {cfg.delta_max:.6g}, margin {cfg.delta_max - delta:.3e}")
    W = heat.mollify_potential(V)
    # eigenvalues move by at most the perturbation size, so the gap is checked with that slack
    mu_eff = cfg.mu - cfg.delta_max
    specs = [heat.spectral_data(grid, W(t)) for t in np.linspace(0.0, T, 21)]
    l1 = max(s.lambda1 for s in specs)
    l2 = min(s.lambda2 for s in specs)
    last = specs[-1]
    res.add(l1 <= -mu_eff and l2 >= mu_eff,
            f"hypothesis spectral gap of the mollified potential on [0, {T:g}]: max lambda1={l1:.6g} <= "
            f"-(mu-delta_max)={-mu_eff:.6g}, min lambda2={l2:.6g} >= {mu_eff:.6g}, "
            f"margin {min(-mu_eff - l1, l2 - mu_eff):.3e}")
    ray = heat.stable_ray_backward_heat(grid, V, cfg.mu, T, cfg.epsilon, mollified=W)
    res.add(ray.rate_ok, f"stable ray decay exponent {ray.decay_rate:.6g} in [mu-eps, mu+eps] = "
                         f"[{cfg.mu - cfg.epsilon:g}, {cfg.mu + cfg.epsilon:g}]")
    dist = heat.ray_uniqueness(grid, V, cfg.mu, T, cfg.seed)
    res.add(dist <= cfg.uniqueness_tol, f"stable ray uniqueness: two terminal seeds differ by {dist:.3e} at t=0 "
                                        f"(<= {cfg.uniqueness_tol:g})")
    res.tables["ray"] = (["t", "l2_norm", "h1_seminorm"],
                         [[t, a, b] for t, a, b in zip(ray.times, ray.l2_norms, ray.h1_norms)])
    res.metrics.update({"delta": delta, "decay_rate": ray.decay_rate, "uniqueness": dist,
                        "lambda1": last.lambda1, "lambda2": last.lambda2})
    return res


# --- heat with moving wells ---------------------------------------------------------------------------


def run_heat_moving(cfg: HeatMovingConfig, base_dir: Path | None = None) -> Result:
    res = Result(cfg.kind, cfg.seed)
    grid = cfg.grid.build()
    tracks = [t.build(base_dir) for t in cfg.tracks]
    system = heat.MovingWells(grid, tracks)
    if system.K == 0:
        raise ContractError("the wells have no negative eigenvalues; nothing grows")
    if len(tracks) == 1:
        oracle = float(system.rates[0])
        rate = heat.growth_rate(system, cfg.T)
        err = abs(rate - oracle) / oracle
        res.add(err <= cfg.rate_tol, f"single-well unstable rate {rate:.6g} vs diagonalization {oracle:.6g}: "
                                     f"relative error {err:.3e} <= {cfg.rate_tol:g}")
        res.metrics.update({"rate": rate, "oracle_rate": oracle})
    rep = heat.moving_heat_dichotomy(system, cfg.T, cfg.epsilon, cfg.extra, cfg.seed, eta=cfg.eta)
    res.add(rep.K_detected == rep.K_expected, f"codim X_s = K: detected {rep.K_detected}, expected {rep.K_expected}")
    res.add(rep.unstable_min >= rep.lam - rep.epsilon,
            f"unstable growth: min exponent {rep.unstable_min:.6g} >= lambda - eps = {rep.lam - rep.epsilon:.6g}")
    res.add(rep.stable_max <= rep.epsilon,
            f"stable growth: max exponent {rep.stable_max:.6g} <= eps = {rep.epsilon:g} "
            f"(constant {rep.stable_growth:.4g})")
    res.tables["exponents"] = (["index", "exponent"], [[i, e] for i, e in enumerate(rep.exponents)])
    res.metrics.update({"K": rep.K_detected, "unstable_min": rep.unstable_min, "stable_max": rep.stable_max})
    return res


# --- Klein-Gordon ---------------------------------------------------------------------------------------


def run_klein_gordon(cfg: KleinGordonConfig, base_dir: Path | None = None) -> Result:
    res = Result(cfg.kind, cfg.seed)
    shape_cfg = cfg.tracks[0].shape if cfg.tracks else None
    shape = shape_cfg.build(base_dir) if shape_cfg is not None else PotentialShape("sech2", {"amplitude": -6.0})
    if cfg.convergence is not None:
        cc = cfg.convergence
        rows = []
        for beta in cc.betas:
            for which in cc.which:
                tab = kg.convergence_study(shape, beta, which, cc.dxs, cc.T, cc.half_width)
                order = tab.min_order
                res.add(order >= cc.min_order, f"exact {which}-mode solution at beta={beta:g}: residual order "
                                               f"{order:.4g} >= {cc.min_order:g}")
                rows += [[beta, which, dx, dt, r] for dx, dt, r in tab.rows]
        res.tables["convergence"] = (["beta", "which", "dx", "dt", "max_residual"], rows)
    if cfg.conservation is not None:
        cs = cfg.conservation
        rows, reps = [], []
        for dx in cs.dxs:
            grid = GridSpec.from_spacing(-cs.half_width, cs.half_width, dx, dt=0.5 * dx)
            rep = kg.conservation_diagnostics(kg.single_well(grid, shape, cs.beta), cs.T, seed=cfg.seed)
            reps.append(rep)
            rows.append([dx, rep.dt, rep.q_drift, rep.pairing_drift])
        ref = reps[0]
        res.add(ref.q_drift <= cs.tol, f"moving-frame energy drift {ref.q_drift:.3e} <= {cs.tol:g} over T={cs.T:g} "
                                       f"at dx={ref.dx:g}")
        res.add(ref.pairing_drift <= cs.tol, f"symplectic pairing drift {ref.pairing_drift:.3e} <= {cs.tol:g}")
        for a, b in zip(reps, reps[1:]):
            order = np.log(a.q_drift / b.q_drift) / np.log(a.dx / b.dx)
            res.add(order >= 1.9, f"energy drift order {order:.4g} >= 1.9 between dx={a.dx:g} and dx={b.dx:g}")
            # the pairing is conserved exactly by the scheme; only roundoff is left
            floor = max(a.pairing_drift, b.pairing_drift)
            res.add(floor <= 1e-12, f"pairing drift at roundoff under refinement: {floor:.3e} <= 1e-12")
        res.tables["conservation"] = (["dx", "dt", "q_drift", "pairing_drift"], rows)
    if cfg.tracks:
        grid = cfg.grid.build()
        system = kg.KGSystem(grid, [t.build(base_dir) for t in cfg.tracks])
        if system.K == 0:
            raise ContractError("the wells have no negative eigenvalues; nothing grows")
        rep = kg.kg_dichotomy_verify(system, cfg.T, cfg.epsilon, cfg.unstable_slack, cfg.v, cfg.eta, cfg.extra,
                                     cfg.seed, interval_T=cfg.interval_T)
        for name, ok, measured, bound in rep.hypotheses:
            res.add(ok, f"hypothesis {name}: measured {measured:.6g}, bound {bound:.6g}")
        for line in rep.lines()[len(rep.hypotheses):]:
            res.add_line(line)
        if rep.interval:
            res.notes.append(
                f"differential inequalities: growth slack {rep.interval['eps_growth']:.4g} "
                f"({rep.interval['checked_growth']} times), decay slack {rep.interval['eps_decay']:.4g} "
                f"({rep.interval['checked_decay']} times)"
            )
        res.tables["exponents"] = (["index", "exponent"], [[i, e] for i, e in enumerate(rep.exponents)])
        res.metrics.update({"K": rep.K_detected, "unstable_min": rep.unstable_min, "stable_max": rep.stable_max,
                            "stable_constant": rep.stable_growth})
    return res


RUNNERS = {
    "matrix-system": run_matrix,
    "avalanche": run_avalanche,
    "backward-heat": run_backward_heat,
    "heat-moving": run_heat_moving,
    "klein-gordon": run_klein_gordon,
}


def run_experiment(cfg, base_dir: Path | None = None) -> Result:
    return RUNNERS[cfg.kind](cfg, base_dir)
