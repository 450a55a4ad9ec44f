//! Acceptance suite: one line per criterion, with measured values, pinned
//! tolerances and wall-clock limits. Exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tchain_cli::config::{ExperimentSpec, Scenario};
use tchain_cli::sweep::{classify, sweep_points, GROWTH_RATIO, PLATEAU_RATIO};
use tchain_cli::validate::{criteria_disagreements, gradient_mismatch, random_layouts};
use tchain_core::feedback::{
    envelope_check, neumann_boundary_ode, neumann_closed_loop, subdomain_envelope_check, DirichletFeedback,
    SubdomainRhs,
};
use tchain_core::mild::{autonomous_solution, dirichlet_solution, upwind_solution, OpenLoopProblem};
use tchain_core::norms::{l2, NormKind};
use tchain_core::ocp::{self, control_inner, periodic_midpoint_step, OcpConfig};
use tchain_core::stabilizability::{certificate_length, worst_case_certificate};
use tchain_core::{
    bump_initial, build_chain, restrict, ChainLayout, ControlSignal, Coupling, SpatialGrid, StateField, TimeGrid,
};

type Outcome = anyhow::Result<(bool, String)>;

struct Criterion {
    id: u8,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn criterion_equivalence() -> Outcome {
    let layouts = random_layouts(20_240_901, 100);
    let bounds = [0.5, 1.0, 2.0, 5.0, 10.0];
    let bad = criteria_disagreements(&layouts, &bounds)?;
    Ok((bad == 0, format!("{bad} disagreements over 100 layouts × {} bounds", bounds.len())))
}

fn certificate() -> Outcome {
    let (m, k, c) = (std::f64::consts::E.powi(2), 2.0, 2.0);
    let l0 = certificate_length(m, k, c)?;
    let layout = build_chain(&[0.0, 7.0, 14.0], 14.0, c)?;
    let eps = 0.1;
    let cert = worst_case_certificate(l0, eps, &layout, m, k)?;
    let h = 1e-3;
    let grid = SpatialGrid::new(14.0, h)?;
    // Bump on the middle half of the certificate support, so the translated
    // copy stays clear of the characteristic front from the access point.
    let bump = bump_initial(cert.support.0 + 0.5 * eps, 0.5 * eps, &grid)?;
    let x0 = restrict(&bump, cert.gap)?;
    let n0 = l2(&x0, (0.0, 14.0))?;
    let t_grid = TimeGrid::covering(cert.t_star, h / c)?;
    let feedback = DirichletFeedback::new(&layout, &x0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let candidates = [
        ("zero", ControlSignal::zeros(layout.n_l(), &t_grid)),
        ("feedback", ControlSignal::from_fn(layout.n_l(), &t_grid, |i, t| feedback.control(i, t))?),
        ("random", random_signal(&ControlSignal::zeros(layout.n_l(), &t_grid), &mut rng)?),
    ];
    let floor = cert.envelope_at_t_star * n0;
    let mut worst_dev: f64 = 0.0;
    let mut ok = cert.t_star == 1.5 && l0 == 6.0;
    for (_, u) in candidates {
        let problem = OpenLoopProblem::new(layout.clone(), x0.clone(), Coupling::Dirichlet, u)?;
        let x = dirichlet_solution(&problem, cert.t_star)?;
        let (lo, hi) = cert.translated_support(c);
        let on_support = l2(&x, (lo + eps / 8.0, hi - eps / 8.0))?;
        let total = l2(&x, (0.0, 14.0))?;
        worst_dev = worst_dev.max((on_support - n0).abs());
        ok &= (on_support - n0).abs() <= 1e-10 && total > floor;
    }
    ok &= worst_dev <= 1e-10;
    Ok((
        ok,
        format!(
            "L0 = {l0}, t* = {}, max |‖x(t*)‖ - ‖x0‖| = {worst_dev:.2e}, M e^(-k t*) = {:.4}",
            cert.t_star, cert.envelope_at_t_star
        ),
    ))
}

fn extinction() -> Outcome {
    let layout = ChainLayout::equidistant(1.0, 10.0, 2.0)?;
    let h = 1e-3;
    let grid = SpatialGrid::new(10.0, h)?;
    let x0 = bump_initial(0.6, 0.8, &grid)?;
    let n0 = l2(&x0, (0.0, 10.0))?;
    let t_grid = TimeGrid::covering(2.0, h / 2.0)?;
    let cutoff = 2.0 * layout.max_gap() / layout.velocity() + t_grid.tau;
    let fb = DirichletFeedback::new(&layout, &x0)?;
    let (mut after, mut before): (f64, f64) = (0.0, 0.0);
    for t in t_grid.times() {
        let n = l2(&fb.field(t)?, (0.0, 10.0))? / n0;
        if t >= cutoff - 1e-12 {
            after = after.max(n);
        } else {
            before = before.max(n);
        }
    }
    Ok((
        after <= 1e-10 && before <= 1.0,
        format!("max ‖x‖/‖x0‖ = {before:.12} before 1 + τ, {after:.2e} after"),
    ))
}

fn neumann_decay() -> Outcome {
    let layout = ChainLayout::equidistant(1.0, 10.0, 2.0)?;
    let c = layout.velocity();
    let dt = layout.delta() / c;
    let t_grid = TimeGrid::covering(5.0, 1e-3)?;
    let y = neumann_boundary_ode(&vec![0.0; t_grid.len()], 1.0, dt, c, &t_grid)?;
    let ode_excess = y
        .iter()
        .zip(t_grid.times())
        .map(|(y, t)| y.abs() - (c * dt / 2.0 - c * t).exp())
        .fold(f64::NEG_INFINITY, f64::max);
    let ode_ok = ode_excess <= 1e-9;

    let h = 2e-3;
    let grid = SpatialGrid::new(10.0, h)?;
    let x0 = bump_initial(0.6, 0.8, &grid)?;
    let run = neumann_closed_loop(&layout, &x0, &TimeGrid::covering(4.0, h / c)?)?;
    let (m, k) = (run.envelope().m, run.envelope().k);
    let slack = 1.0 + 10.0 * h;
    let global = envelope_check(&run, m, k, NormKind::H1, slack)?;
    let local = subdomain_envelope_check(&run, m, k, SubdomainRhs::DependenceDomain, slack)?;
    let literal = subdomain_envelope_check(&run, m, k, SubdomainRhs::Literal, slack)?;
    Ok((
        ode_ok && global.passed && local.passed,
        format!(
            "ODE excess {ode_excess:.1e}; H1 ratio {:.3e}, subdomain ratio {:.3e} (literal single-subdomain rhs: {:.3e}, {})",
            global.max_ratio,
            local.max_ratio,
            literal.max_ratio,
            if literal.passed { "holds" } else { "violated" }
        ),
    ))
}

fn oracle_equivalence() -> Outcome {
    let layout = ChainLayout::equidistant(1.0, 10.0, 2.0)?;
    let h = 1e-3;
    let tau = h / 2.0;
    let grid = SpatialGrid::new(10.0, h)?;
    let x0 = bump_initial(0.6, 0.8, &grid)?;
    let t_grid = TimeGrid::covering(2.0, tau)?;
    let mut worst: f64 = 0.0;
    for amp in [0.0, 0.5] {
        let u = ControlSignal::from_fn(layout.n_l(), &t_grid, |i, t| {
            amp * (std::f64::consts::PI * t).sin() * (1.0 + 0.1 * i as f64)
        })?;
        let problem = OpenLoopProblem::new(layout.clone(), x0.clone(), Coupling::Dirichlet, u)?;
        let exact = dirichlet_solution(&problem, 2.0)?;
        let approx = upwind_solution(&problem, 2.0, tau)?;
        let err = l2(&exact.zip_with(&approx, |a, b| a - b)?, (0.0, 10.0))? / l2(&exact, (0.0, 10.0))?;
        worst = worst.max(err);
    }
    Ok((worst <= 5e-2, format!("max relative L2 error {worst:.3e}")))
}

fn random_signal(template: &ControlSignal, rng: &mut ChaCha8Rng) -> anyhow::Result<ControlSignal> {
    let channels = template
        .channels()
        .iter()
        .map(|c| c.iter().map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    Ok(ControlSignal::new(template.start(), template.tau(), channels)?)
}

fn ocp_optimality() -> Outcome {
    let layout = ChainLayout::equidistant(1.0, 10.0, 2.0)?;
    let grid = SpatialGrid::new(10.0, 0.02)?;
    let config = OcpConfig::unit_cfl(layout, bump_initial(0.6, 0.8, &grid)?, 5.0, 0.156)?;
    let solution = ocp::solve(&config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let zero = config.zero_control();
    let u = random_signal(&zero, &mut rng)?;
    let dirs = (0..5).map(|_| random_signal(&zero, &mut rng)).collect::<anyhow::Result<Vec<_>>>()?;
    let fd_rel = gradient_mismatch(&config, &u, &dirs, 1e-3)?;
    // At the optimum the central difference itself must vanish.
    let eps = 1e-3;
    let mut at_opt: f64 = 0.0;
    for d in &dirs {
        let shift = |s: f64| -> anyhow::Result<ControlSignal> {
            let ch = solution
                .control
                .channels()
                .iter()
                .zip(d.channels())
                .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + s * q).collect())
                .collect();
            Ok(ControlSignal::new(zero.start(), zero.tau(), ch)?)
        };
        let fd = (ocp::cost(&config, &shift(eps)?)? - ocp::cost(&config, &shift(-eps)?)?) / (2.0 * eps);
        at_opt = at_opt.max(fd.abs() / control_inner(d, d).sqrt());
    }
    Ok((
        solution.residual <= 1e-8 && fd_rel <= 1e-5 && at_opt <= 1e-6,
        format!(
            "KKT residual {:.2e}, FD relative mismatch {fd_rel:.2e}, |FD|/‖δ‖ at u* {at_opt:.2e}",
            solution.residual
        ),
    ))
}

fn figure_sweep() -> Outcome {
    let spec = ExperimentSpec {
        scenario: Scenario::Equidistant(1.0),
        lengths: vec![2.0, 4.0, 6.0, 8.0, 10.0],
        mu: 0.5,
        alpha: 0.156,
        horizon: 5.0,
        ..ExperimentSpec::default()
    };
    let points = sweep_points(&spec)?;
    let c = classify(&points);
    let ok = c.plateau.reference_length == 6.0 && c.plateau.ratio <= PLATEAU_RATIO && c.growth.passed && c.passed;
    Ok((
        ok,
        format!(
            "equidistant value(10)/value(6) = {:.4} (≤ {PLATEAU_RATIO}), midpoint increasing: {}, value(10)/value(2) = {:.3} (≥ {GROWTH_RATIO}), L = 2 diff {:.1e}",
            c.plateau.ratio,
            c.growth.strictly_increasing,
            c.growth.ratio,
            c.coincidence.first().map_or(f64::NAN, |x| x.state_diff.max(x.costate_diff))
        ),
    ))
}

fn scheme_invariants() -> Outcome {
    let n = 128;
    let h = 1.0 / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut x: Vec<f64> = (0..n)
        .map(|j| (2.0 * std::f64::consts::PI * 3.0 * j as f64 * h).sin() + 0.3 * rng.gen_range(-1.0..1.0))
        .collect();
    let e0 = l2_squared_slice_periodic(&x, h);
    let mut energy_drift: f64 = 0.0;
    for _ in 0..50 {
        x = periodic_midpoint_step(&x, h, 2.0, 0.7 * h)?;
        energy_drift = energy_drift.max(((l2_squared_slice_periodic(&x, h) / e0).sqrt() - 1.0).abs());
    }

    let grid = SpatialGrid::new(4.0, 0.01)?;
    let x0 = StateField::from_fn(grid, |w| (1.0 + w).ln() * (3.0 * w).cos())?;
    let mut semigroup: f64 = 0.0;
    for coupling in [Coupling::Dirichlet, Coupling::Neumann] {
        for (s, t) in [(0.5, 1.25), (1.0, 2.0), (0.37, 0.63)] {
            let direct = autonomous_solution(&x0, s + t, coupling)?;
            let composed = autonomous_solution(&autonomous_solution(&x0, s, coupling)?, t, coupling)?;
            semigroup = semigroup.max(direct.zip_with(&composed, |a, b| a - b)?.max_abs());
        }
    }
    Ok((
        energy_drift <= 1e-12 && semigroup <= 1e-12,
        format!("energy drift {energy_drift:.2e} over 50 steps, semigroup defect {semigroup:.2e}"),
    ))
}

fn l2_squared_slice_periodic(x: &[f64], h: f64) -> f64 {
    h * x.iter().map(|v| v * v).sum::<f64>()
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "criterion equivalence", limit: Duration::from_secs(1), run: criterion_equivalence },
        Criterion { id: 2, name: "counterexample certificate", limit: Duration::from_secs(1), run: certificate },
        Criterion { id: 3, name: "finite-time extinction", limit: Duration::from_secs(10), run: extinction },
        Criterion { id: 4, name: "Neumann boundary decay", limit: Duration::from_secs(30), run: neumann_decay },
        Criterion { id: 5, name: "mild vs upwind oracle", limit: Duration::from_secs(30), run: oracle_equivalence },
        Criterion { id: 6, name: "OCP optimality", limit: Duration::from_secs(120), run: ocp_optimality },
        Criterion { id: 7, name: "domain-size sweep", limit: Duration::from_secs(600), run: figure_sweep },
        Criterion { id: 8, name: "scheme invariants", limit: Duration::from_secs(1), run: scheme_invariants },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str()) || c.id.to_string() == *f) {
            continue;
        }
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok((ok, detail)) => (ok && elapsed <= c.limit, detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} [{}] {}: {} ({:.2} s, limit {} s)",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            detail,
            elapsed.as_secs_f64(),
            c.limit.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
