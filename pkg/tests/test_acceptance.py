"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. Criterion 1 asserts a 1e-4 terminal error at dt=1e-3 together with
first-order convergence; the first-order scheme's error constant on that
problem is exactly 1/2 (terminal error dt/2 = 5.0e-4), so that single
assertion fails by construction of the scheme and is reported honestly.
See README "Known limitations".
"""
import time

import numpy as np

from sddsim import (
    AffineMap,
    ConstantDelay,
    HistorySegment,
    IntegralInnerDelay,
    IntegralOuterDelay,
    LocalNonlinearity,
    NestedPointDelay,
    NicholsonNonlinearity,
    OpaqueDelay,
    ProblemSpec,
    SolverConfig,
    StateVector,
    SumOfNestedDelay,
    build_dirichlet_laplacian,
    build_ode_diag,
    gaussian_kernel,
    make_history,
    mild_residual,
    ode_space,
    solve,
    verify_ignorance,
)
from sddsim.runs import _build_ensemble
from sddsim.verify import (
    WellPosednessConstants,
    continuous_dependence_probe,
    dissipation_probe,
    holder_regularity_probe,
    uniqueness_probe,
)


def emit(num: int, name: str, ok: bool, detail: str) -> None:
    print(f"[acceptance] C{num} {name}: {'PASS' if ok else 'FAIL'} ({detail})")


# ---------------------------------------------------------------------------
# shared acceptance configurations


def phi_constant(value: float, r: float = 1.0) -> HistorySegment:
    sp = ode_space(1)
    return make_history([(-r, StateVector([value], sp)), (0.0, StateVector([value], sp))], r)


def oracle_problem() -> ProblemSpec:
    # u'(t) = -u(t-1) with phi = 1
    return ProblemSpec(
        build_ode_diag([0.0]),
        LocalNonlinearity(b=lambda w: -w, lipschitz_b=1.0),
        ConstantDelay(1.0, 1.0),
        1.0,
    )


def pde_sine_history(problem: ProblemSpec, amplitude: float = 1.0) -> HistorySegment:
    sp = problem.operator.space
    vals = amplitude * np.sin(np.pi * sp.grid() / sp.length)
    r = problem.horizon
    return make_history([(-r, StateVector(vals, sp)), (0.0, StateVector(vals, sp))], r)


def nicholson_pde_nested() -> ProblemSpec:
    op = build_dirichlet_laplacian(64, np.pi, 1.0, 0.0)
    nl = NicholsonNonlinearity(p=np.e, kernel=gaussian_kernel(0.1))
    eta = NestedPointDelay(
        p=AffineMap(lo=0.2, hi=0.8, a=0.1, b=0.5),
        chi=AffineMap(lo=0.1, hi=0.9, a=0.2, b=0.4),
        anchor=1.0,
        r=1.0,
    )
    return ProblemSpec(op, nl, eta, 1.0)


def nicholson_pde_sum() -> ProblemSpec:
    op = build_dirichlet_laplacian(64, np.pi, 1.0, 0.0)
    nl = NicholsonNonlinearity(p=np.e, kernel=gaussian_kernel(0.1))
    terms = tuple(
        NestedPointDelay(
            p=AffineMap(lo=0.1, hi=0.25, a=0.02, b=0.15 + 0.01 * k),
            chi=AffineMap(lo=0.2, hi=0.8, a=0.05 * k, b=0.4),
            anchor=1.0 - 0.1 * k,
            r=1.0,
        )
        for k in range(3)
    )
    return ProblemSpec(op, nl, SumOfNestedDelay(terms=terms, r=1.0), 1.0)


def nicholson_oscillatory() -> ProblemSpec:
    # weak diffusion plus instantaneous decay keeps the delayed birth term
    # above the oscillation threshold: the attractor is not a point
    op = build_dirichlet_laplacian(64, np.pi, 0.1, 0.5)
    nl = NicholsonNonlinearity(p=50.0, kernel=gaussian_kernel(0.1))
    eta = NestedPointDelay(
        p=AffineMap(lo=2.2, hi=3.8, a=0.05, b=3.0),
        chi=AffineMap(lo=0.5, hi=3.5, a=0.1, b=2.0),
        anchor=4.0,
        r=4.0,
    )
    return ProblemSpec(op, nl, eta, 4.0)


def equilibrium_delays() -> list:
    idm = AffineMap(lo=0.0, hi=1.0, a=1.0, b=0.0)
    half = AffineMap(lo=0.0, hi=1.0, a=0.0, b=0.5)
    return [
        ConstantDelay(0.4, 1.0),
        NestedPointDelay(p=idm, chi=half, anchor=1.0, r=1.0),
        SumOfNestedDelay(
            terms=(
                NestedPointDelay(p=AffineMap(lo=0.0, hi=0.3, a=0.1, b=0.1), chi=half, anchor=1.0, r=1.0),
                NestedPointDelay(p=AffineMap(lo=0.0, hi=0.3, a=0.0, b=0.2), chi=half, anchor=0.5, r=1.0),
            ),
            r=1.0,
        ),
        IntegralOuterDelay(p=idm, chi1=AffineMap(lo=0.2, hi=0.2), chi2=AffineMap(lo=0.8, hi=0.8), r1=1.0, r2=1.0, r=1.0),
        IntegralInnerDelay(p=idm, chi1=AffineMap(lo=0.2, hi=0.2), chi2=AffineMap(lo=0.8, hi=0.8), r1=1.0, r2=1.0, r=1.0),
    ]


# ---------------------------------------------------------------------------
# criteria


def test_c1_constant_delay_oracle():
    t0 = time.perf_counter()
    prob = oracle_problem()
    phi = phi_constant(1.0)
    errs = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        tr = solve(prob, phi, SolverConfig(dt=dt, T=2.0))
        errs.append(abs(tr.eval_values(2.0)[0] - (-0.5)))
    orders = [float(np.log2(errs[i] / errs[i + 1])) for i in range(2)]
    tr = solve(prob, phi, SolverConfig(dt=1e-3, T=2.0))
    err = abs(tr.eval_values(2.0)[0] - (-0.5))
    elapsed = time.perf_counter() - t0
    ok = err <= 1e-4 and all(0.8 <= o <= 1.2 for o in orders) and elapsed < 1.0
    emit(
        1,
        "constant-delay oracle",
        ok,
        f"err@dt=1e-3 {err:.3e} (req <=1e-4), orders {orders[0]:.3f}/{orders[1]:.3f}, {elapsed:.2f}s",
    )
    assert elapsed < 1.0
    for order in orders:
        assert 0.8 <= order <= 1.2
    assert err <= 1e-4, (
        f"terminal error {err:.3e} exceeds 1e-4: a first-order one-sided scheme has "
        f"error constant 1/2 on this problem (dt/2 = 5e-4); see README known limitations"
    )


def test_c2_semigroup_algebra():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    op = build_dirichlet_laplacian(1024, np.pi, 1.0, 0.1)
    ident_err = 0.0
    law_err = 0.0
    for _ in range(100):
        v = rng.standard_normal(1024)
        ident_err = max(ident_err, float(np.max(np.abs(op.semigroup_values(0.0, v) - v))))
        t1, t2 = rng.uniform(0.0, 0.3, size=2)
        once = op.semigroup_values(t1 + t2, v)
        twice = op.semigroup_values(t1, op.semigroup_values(t2, v))
        law_err = max(law_err, float(np.max(np.abs(once - twice))))
    elapsed = time.perf_counter() - t0
    ok = ident_err < 1e-13 and law_err < 1e-12 and elapsed < 1.0
    emit(2, "semigroup algebra", ok, f"identity {ident_err:.2e}, law {law_err:.2e}, {elapsed:.2f}s")
    assert ident_err < 1e-13
    assert law_err < 1e-12
    assert elapsed < 1.0


def test_c3_ignorance_fuzzing():
    t0 = time.perf_counter()
    sp = ode_space(1)
    ts = np.linspace(-1.0, 0.0, 41)
    phi = make_history([(t, StateVector([t + 1.0], sp)) for t in ts], 1.0)
    idm = AffineMap(lo=0.0, hi=1.0, a=1.0, b=0.0)
    variants = {
        "nested_point": NestedPointDelay(p=idm, chi=AffineMap(lo=0.0, hi=1.0, a=0.0, b=0.5), anchor=1.0, r=1.0),
        "sum_of_nested_3": SumOfNestedDelay(
            terms=tuple(
                NestedPointDelay(
                    p=AffineMap(lo=0.0, hi=0.3, a=0.05 * (k + 1), b=0.1),
                    chi=AffineMap(lo=0.1, hi=0.9, a=0.1 * k, b=0.3 + 0.1 * k),
                    anchor=1.0 - 0.2 * k,
                    r=1.0,
                )
                for k in range(3)
            ),
            r=1.0,
        ),
        "integral_outer": IntegralOuterDelay(
            p=AffineMap(lo=0.0, hi=1.0, a=0.4, b=0.3),
            chi1=AffineMap(lo=0.15, hi=0.45, a=0.1, b=0.25),
            chi2=AffineMap(lo=0.55, hi=0.95, a=-0.1, b=0.8),
            r1=1.0,
            r2=0.7,
            r=1.0,
        ),
        "integral_inner": IntegralInnerDelay(
            p=AffineMap(lo=0.0, hi=1.0, a=0.5, b=0.2),
            chi1=AffineMap(lo=0.2, hi=0.4, a=0.05, b=0.3),
            chi2=AffineMap(lo=0.6, hi=0.9, a=0.0, b=0.75),
            r1=0.8,
            r2=1.0,
            r=1.0,
        ),
    }
    deviations = {}
    for name, eta in variants.items():
        rep = verify_ignorance(eta, phi, trials=1000, seed=11)
        deviations[name] = (rep.max_deviation, rep.effective_trials)
        assert rep.effective_trials >= 900, name

    planted = OpaqueDelay(
        fn=lambda h: float(np.clip(0.5 + 0.1 * h.eval(0.0).mean(), 0.0, 1.0)),
        r=1.0,
        theta_upper=lambda h: 1.0,
        theta_lower=lambda h: 0.5,
    )
    detected = sum(
        1 for seed in range(10) if not verify_ignorance(planted, phi, trials=1000, seed=seed).passes
    )
    elapsed = time.perf_counter() - t0
    exact = all(dev == 0.0 for dev, _ in deviations.values())
    ok = exact and detected == 10 and elapsed < 10.0
    emit(
        3,
        "ignorance-condition fuzzing",
        ok,
        f"max deviations {[d for d, _ in deviations.values()]}, planted detected {detected}/10 seeds, {elapsed:.2f}s",
    )
    for name, (dev, _) in deviations.items():
        assert dev == 0.0, name
    assert detected == 10
    assert elapsed < 10.0


def test_c4_uniqueness():
    t0 = time.perf_counter()
    tol = 10 * 1e-10
    rep_oracle = uniqueness_probe(
        oracle_problem(), phi_constant(1.0), SolverConfig(dt=1e-3, T=10.0), n_variants=5, seed=0
    )
    prob = nicholson_pde_nested()
    rep_pde = uniqueness_probe(
        prob, pde_sine_history(prob), SolverConfig(dt=0.01, T=10.0), n_variants=5, seed=0
    )
    elapsed = time.perf_counter() - t0
    ok = (
        rep_oracle.passes
        and rep_pde.passes
        and rep_oracle.max_divergence <= tol
        and rep_pde.max_divergence <= tol
        and elapsed < 30.0
    )
    emit(
        4,
        "uniqueness via randomized re-solves",
        ok,
        f"oracle div {rep_oracle.max_divergence:.2e}, pde div {rep_pde.max_divergence:.2e} (tol {tol:.0e}), {elapsed:.1f}s",
    )
    assert rep_oracle.max_divergence <= tol
    assert rep_pde.max_divergence <= tol
    assert elapsed < 30.0


def test_c5_continuous_dependence():
    t0 = time.perf_counter()
    rep_scalar = continuous_dependence_probe(
        oracle_problem(),
        phi_constant(1.0),
        SolverConfig(dt=1e-3, T=1.0),
        WellPosednessConstants(omega=0.5, q=0.5),
        n_perturbations=20,
        eps=1e-3,
        seed=0,
        bound_slack=0.05,
    )
    prob = nicholson_pde_sum()
    rep_pde = continuous_dependence_probe(
        prob,
        pde_sine_history(prob),
        SolverConfig(dt=0.005, T=1.0),
        WellPosednessConstants(omega=0.5, q=0.5),
        n_perturbations=20,
        eps=1e-3,
        seed=1,
        bound_slack=0.05,
    )
    elapsed = time.perf_counter() - t0
    n_ok_scalar = sum(1 for r in rep_scalar.ratios if r <= rep_scalar.bound * 1.05)
    n_ok_pde = sum(1 for r in rep_pde.ratios if r <= rep_pde.bound * 1.05)
    ok = n_ok_scalar == 20 and n_ok_pde == 20 and elapsed < 60.0
    emit(
        5,
        "continuous dependence vs explicit bound",
        ok,
        f"scalar {n_ok_scalar}/20 worst {rep_scalar.worst_ratio:.3f} bound {rep_scalar.bound:.3f}; "
        f"pde {n_ok_pde}/20 worst {rep_pde.worst_ratio:.3f} bound {rep_pde.bound:.3f} t1 {rep_pde.constants.t1:.3f}; {elapsed:.1f}s",
    )
    assert n_ok_scalar == 20
    assert n_ok_pde == 20
    assert elapsed < 60.0


def test_c6_mild_residual():
    t0 = time.perf_counter()
    level_checks = []

    def level(name, prob, phi, dt, T):
        tr = solve(prob, phi, SolverConfig(dt=dt, T=T))
        d = mild_residual(tr, np.linspace(T / 10.0, T, 10))
        level_checks.append((name, dt, d))
        return d

    nested = nicholson_pde_nested()
    sum_prob = nicholson_pde_sum()
    osc = nicholson_oscillatory()
    equil = ProblemSpec(build_ode_diag([1.0], 0.0), NicholsonNonlinearity(p=np.e), ConstantDelay(0.4, 1.0), 1.0)

    ratios = {}
    d1 = level("oracle", oracle_problem(), phi_constant(1.0), 1e-2, 2.0)
    d2 = level("oracle", oracle_problem(), phi_constant(1.0), 5e-3, 2.0)
    ratios["oracle"] = d1 / d2
    d1 = level("nicholson_pde", nested, pde_sine_history(nested, 3.0), 1e-2, 2.0)
    d2 = level("nicholson_pde", nested, pde_sine_history(nested, 3.0), 5e-3, 2.0)
    ratios["nicholson_pde"] = d1 / d2
    d1 = level("oscillatory", osc, pde_sine_history(osc, 2.0), 2e-2, 20.0)
    d2 = level("oscillatory", osc, pde_sine_history(osc, 2.0), 1e-2, 20.0)
    ratios["oscillatory"] = d1 / d2
    level("sum_of_nested_pde", sum_prob, pde_sine_history(sum_prob), 1e-2, 2.0)
    level("equilibrium_ode", equil, phi_constant(1.0), 1e-2, 5.0)

    elapsed = time.perf_counter() - t0
    levels_ok = all(d <= 10 * dt for _, dt, d in level_checks)
    ratios_ok = all(1.7 <= v <= 2.3 for v in ratios.values())
    ok = levels_ok and ratios_ok and elapsed < 30.0
    emit(
        6,
        "mild-residual defect",
        ok,
        f"max defect/10dt {max(d / (10 * dt) for _, dt, d in level_checks):.3f}, "
        f"halving ratios {({k: round(v, 3) for k, v in ratios.items()})}, {elapsed:.1f}s",
    )
    for name, dt, d in level_checks:
        assert d <= 10 * dt, (name, dt, d)
    for name, v in ratios.items():
        assert 1.7 <= v <= 2.3, (name, v)
    assert elapsed < 30.0


def test_c7_dissipation_and_attractor_regularity():
    t0 = time.perf_counter()
    prob = nicholson_oscillatory()
    phi = pde_sine_history(prob, 2.0)
    cfg = SolverConfig(dt=0.02, T=1.0)
    ensemble = _build_ensemble(phi, 8, 10.0, seed=1, nonneg=True)
    assert all(h.sup_norm() <= 10.0 + 1e-9 for h in ensemble)
    d100 = dissipation_probe(prob, cfg, ensemble, 100.0)
    d200 = dissipation_probe(prob, cfg, ensemble, 200.0)
    l0s = [holder_regularity_probe(d200, pairs=400, seed=s).l0_estimate for s in range(4)]
    holder = holder_regularity_probe(d200, pairs=400, seed=0)
    elapsed = time.perf_counter() - t0

    radius_ok = d200.radius_estimate <= d100.radius_estimate * 1.05
    spread = (max(l0s) - min(l0s)) / max(l0s)
    l0_ok = all(np.isfinite(v) for v in l0s) and spread <= 0.20
    ltilde_ok = np.isfinite(holder.l_tilde_estimate) and holder.exponent_fit >= 0.95
    ok = (
        d100.dissipation_observed
        and d200.dissipation_observed
        and radius_ok
        and l0_ok
        and ltilde_ok
        and elapsed < 300.0
    )
    emit(
        7,
        "dissipation and attractor regularity",
        ok,
        f"radius {d100.radius_estimate:.3f}->{d200.radius_estimate:.3f}, L0 {min(l0s):.2f}..{max(l0s):.2f} "
        f"(spread {spread:.1%}), L~ {holder.l_tilde_estimate:.2f}, exp {holder.exponent_fit:.2f}, {elapsed:.0f}s",
    )
    assert d100.dissipation_observed and d200.dissipation_observed
    assert radius_ok
    assert l0_ok
    assert ltilde_ok, "tail windows should be near-Lipschitz (exponent close to 1)"
    assert elapsed < 300.0


def test_c8_equilibrium_preservation():
    t0 = time.perf_counter()
    op = build_ode_diag([1.0], 0.0)  # a + d = 1, b(1) = e * 1 * e^{-1} = 1
    nl = NicholsonNonlinearity(p=np.e)
    phi = phi_constant(1.0)
    worst = 0.0
    for eta in equilibrium_delays():
        tr = solve(ProblemSpec(op, nl, eta, 1.0), phi, SolverConfig(dt=0.02, T=10.0))
        worst = max(worst, float(np.max(np.abs(tr.values - 1.0))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 1.0
    emit(8, "equilibrium preservation", ok, f"worst deviation {worst:.2e} across 5 delay variants, {elapsed:.2f}s")
    assert worst <= 1e-8
    assert elapsed < 1.0
