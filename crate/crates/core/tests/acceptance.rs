//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use pointground::espace::mass_sq;
use pointground::functionals::{energy, gradient, hartree_potential, scaling_path_apply};
use pointground::solver::{multistart, multistart_on, ResultRecord};
use pointground::verify::{
    gn_scan, identity_suite, pohozaev_probe, small_mass_scan, subadditivity_scan, vanishing_check, Check, ScanReport,
    GN_REFERENCE_SAMPLES, GN_REFERENCE_SEED, LP_EXPONENTS,
};
use pointground::{EnergyState, GridDescriptor, ProblemKind, ProblemSpec, RadialGrid, SolveOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Outcome {
            passed,
            detail: detail.into(),
        }
    }
}

fn worst(checks: &[&Check]) -> String {
    let failing: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed())
        .map(|c| format!("{}={:.3e} (tol {:.1e}, {:?})", c.name, c.value, c.tolerance, c.status))
        .collect();
    if failing.is_empty() {
        format!("{} checks", checks.len())
    } else {
        failing.join("; ")
    }
}

fn list(v: &[f64]) -> String {
    let cells: Vec<String> = v.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", cells.join(", "))
}

fn grid_n(n: usize) -> GridDescriptor {
    GridDescriptor {
        n,
        ..GridDescriptor::default()
    }
}

fn options(n: usize) -> SolveOptions {
    SolveOptions {
        grid: grid_n(n),
        ..SolveOptions::default()
    }
}

fn nlse_spec(rho: f64) -> ProblemSpec {
    ProblemSpec::new(ProblemKind::Nlse, 0.5, 2.25, rho).unwrap()
}

fn select<'a>(rep: &'a ScanReport, prefixes: &[&str]) -> Vec<&'a Check> {
    rep.checks
        .iter()
        .filter(|c| prefixes.iter().any(|p| c.name.starts_with(p)))
        .collect()
}

fn criterion_1_2(grid: &Arc<RadialGrid>) -> (Outcome, Outcome) {
    let start = Instant::now();
    let rep = identity_suite(grid);
    let elapsed = start.elapsed();
    let ident = select(
        &rep,
        &[
            "green_l2_norm",
            "green_pair_inner",
            "green_lr_norm",
            "green_phi_inner",
            "point_evaluation",
            "resolvent_difference",
        ],
    );
    let gauge = select(&rep, &["gauge_invariance", "closed_gauge_form"]);
    let ok1 = ident.iter().all(|c| c.passed()) && elapsed < Duration::from_secs(10);
    let ok2 = gauge.len() == 4 && gauge.iter().all(|c| c.passed());
    (
        Outcome::new(ok1, format!("{}, {:.2} s", worst(&ident), elapsed.as_secs_f64())),
        Outcome::new(ok2, worst(&gauge)),
    )
}

fn criterion_3(grid: &Arc<RadialGrid>) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut max_rel: f64 = 0.0;
    let mut count = 0;
    for kind in ProblemKind::ALL {
        let spec = ProblemSpec::new(kind, 0.4, 2.3, 0.5).unwrap();
        for _ in 0..10 {
            let comps: Vec<(f64, f64)> = (0..rng.gen_range(1..=3))
                .map(|_| (rng.gen_range(-0.3..0.3), rng.gen_range(0.5..2.5)))
                .collect();
            let u = EnergyState::from_fn(
                grid.clone(),
                rng.gen_range(0.5..2.0),
                |r| comps.iter().map(|(a, w)| a * (-r * r / (w * w)).exp()).sum(),
                rng.gen_range(0.1..1.0),
            )
            .unwrap();
            let g = gradient(&spec, &u).unwrap();
            for _ in 0..8 {
                let (a, w, c) = (rng.gen_range(-1.0..1.0), rng.gen_range(0.4..2.0), rng.gen_range(0.0..3.0));
                let dphi = grid.sample(|r| a * (-(r - c) * (r - c) / (w * w)).exp());
                let dq = rng.gen_range(-0.5..0.5);
                let analytic: f64 = g.phi.iter().zip(&dphi).map(|(x, y)| x * y).sum::<f64>() + g.q * dq;
                let at = |s: f64| {
                    let phi = u.phi().iter().zip(&dphi).map(|(x, y)| x + s * y).collect();
                    let v = EnergyState::new(grid.clone(), u.gauge(), phi, u.charge() + s * dq).unwrap();
                    energy(&spec, &v).unwrap().total
                };
                let e = 1e-4;
                let fd = (8.0 * (at(e) - at(-e)) - (at(2.0 * e) - at(-2.0 * e))) / (12.0 * e);
                max_rel = max_rel.max((analytic - fd).abs() / analytic.abs().max(1e-8));
                count += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        max_rel <= 1e-5 && elapsed < Duration::from_secs(60),
        format!("{count} directions, max relative error {max_rel:.2e}, {:.1} s", elapsed.as_secs_f64()),
    )
}

fn criterion_4(grid: &Arc<RadialGrid>) -> Outcome {
    let n = grid.sample(|r| (-r * r).exp());
    let psi = hartree_potential(grid, &n).unwrap();
    let mut uniform: f64 = 0.0;
    let mut far: f64 = 0.0;
    let total = PI.powf(1.5);
    for (&r, &v) in grid.nodes().iter().zip(&psi) {
        let exact = total * statrs::function::erf::erf(r) / r;
        uniform = uniform.max((v - exact).abs() / exact);
        if r >= 10.0 {
            far = far.max((r * v - total).abs() / total);
        }
    }
    Outcome::new(
        uniform <= 1e-4 && far <= 1e-4,
        format!("max relative error {uniform:.2e}, monopole {far:.2e}"),
    )
}

fn criterion_5() -> Outcome {
    let o = options(1024);
    let mut lines = Vec::new();
    let mut ok = true;
    let mut slowest: f64 = 0.0;
    for kind in ProblemKind::ALL {
        for alpha in [0.0, 0.5] {
            for rho in [0.2, 0.4] {
                let spec = ProblemSpec::new(kind, alpha, 2.25, rho).unwrap();
                let start = Instant::now();
                let rep = vanishing_check(&spec, &o).unwrap();
                let t = start.elapsed().as_secs_f64();
                slowest = slowest.max(t);
                let row = &rep.rows[0];
                let pass = rep.passed() && t < 300.0;
                ok &= pass;
                lines.push(format!(
                    "    {kind} alpha={alpha} rho={rho}: gap={:.3e} q={:.3e} {}",
                    row[3],
                    row[4],
                    if pass { "ok" } else { "FAIL" }
                ));
                if !pass {
                    lines.push(format!("      {}", worst(&rep.checks.iter().collect::<Vec<_>>())));
                }
            }
        }
    }
    Outcome::new(ok, format!("slowest pair {slowest:.1} s\n{}", lines.join("\n")))
}

fn criterion_6() -> Outcome {
    let rep = small_mass_scan(&nlse_spec(0.8), &[0.8, 0.4, 0.2, 0.1], &SolveOptions::default()).unwrap();
    let req = select(
        &rep,
        &["negative_level", "level_ratio_increasing", "omega_positive", "omega_decreasing"],
    );
    let ratios = rep.column("energy_over_rho2").unwrap();
    let omegas = rep.column("omega").unwrap();
    Outcome::new(
        req.iter().all(|c| c.passed()),
        format!("{}; E/rho^2 = {}; omega = {}", worst(&req), list(&ratios), list(&omegas)),
    )
}

fn criterion_7() -> Outcome {
    let rep = subadditivity_scan(&nlse_spec(0.5), &[0.1, 0.2, 0.3, 0.4], &SolveOptions::default()).unwrap();
    let margins = rep.column("margin").unwrap();
    Outcome::new(
        rep.passed() && !rep.checks.is_empty(),
        format!("{}; margins = {}", worst(&rep.checks.iter().collect::<Vec<_>>()), list(&margins)),
    )
}

fn criterion_8(grid: &Arc<RadialGrid>) -> Outcome {
    let o = SolveOptions::default();
    let mut ok = true;
    let mut lines = Vec::new();
    let mut mass_err: f64 = 0.0;
    for kind in ProblemKind::ALL {
        let spec = ProblemSpec::new(kind, 0.5, 2.25, 0.4).unwrap();
        let res = multistart_on(&spec, &o, false, grid).unwrap();
        let m = mass_sq(&res.state);
        for beta in [-1.0, 0.0, 1.0] {
            for theta in [0.5, 2.0] {
                let g = scaling_path_apply(&res.state, beta, theta).unwrap();
                mass_err = mass_err.max((mass_sq(&g) - theta * theta * m).abs() / (theta * theta * m));
            }
        }
        let rep = pohozaev_probe(&spec, &res, &[-1.0, 0.0, 1.0]).unwrap();
        let pass = rep.passed();
        ok &= pass;
        let diffs = rep.column("relative_difference").unwrap();
        lines.push(format!(
            "    {kind}: h'(1) relative differences {}, {}",
            list(&diffs),
            worst(&rep.checks.iter().collect::<Vec<_>>())
        ));
    }
    ok &= mass_err <= 1e-5;
    Outcome::new(ok, format!("mass law max error {mass_err:.2e}\n{}", lines.join("\n")))
}

fn criterion_9(grid: &Arc<RadialGrid>) -> Outcome {
    let mut problems = Vec::new();
    let spec = ProblemSpec::new(ProblemKind::Kirchhoff, 0.5, 2.25, 0.4).unwrap();
    let o = SolveOptions {
        restarts: 2,
        seed: 11,
        ..options(512)
    };
    let a = multistart(&spec, &o, false).unwrap();
    let b = multistart(&spec, &o, false).unwrap();
    let ja = serde_json::to_string_pretty(&a.to_record(&spec, true)).unwrap();
    let jb = serde_json::to_string_pretty(&b.to_record(&spec, true)).unwrap();
    if ja != jb {
        problems.push("result records differ between identical runs");
    }
    let back: ResultRecord = serde_json::from_str(&ja).unwrap();
    if back != a.to_record(&spec, true) {
        problems.push("result record does not round-trip");
    }
    let state = serde_json::to_string(&a.state.to_record()).unwrap();
    let reloaded = EnergyState::from_record(&serde_json::from_str(&state).unwrap()).unwrap();
    if reloaded != a.state {
        problems.push("state record does not round-trip");
    }

    let r1 = small_mass_scan(&spec, &[0.4, 0.2], &o).unwrap();
    let r2 = small_mass_scan(&spec, &[0.4, 0.2], &o).unwrap();
    let s1 = serde_json::to_string(&r1).unwrap();
    if s1 != serde_json::to_string(&r2).unwrap() || r1.to_csv() != r2.to_csv() {
        problems.push("scan reports differ between identical runs");
    }
    let back: ScanReport = serde_json::from_str(&s1).unwrap();
    if back != r1 {
        problems.push("scan report JSON does not round-trip");
    }
    let parsed: Vec<Vec<f64>> = r1
        .to_csv()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    if parsed != r1.rows {
        problems.push("scan CSV does not round-trip");
    }

    let g1 = gn_scan(grid, &LP_EXPONENTS, GN_REFERENCE_SAMPLES, GN_REFERENCE_SEED).unwrap();
    let g2 = gn_scan(grid, &LP_EXPONENTS, GN_REFERENCE_SAMPLES, GN_REFERENCE_SEED).unwrap();
    if serde_json::to_string(&g1).unwrap() != serde_json::to_string(&g2).unwrap() {
        problems.push("GN scans differ between identical runs");
    }
    if !g1.passed() {
        problems.push("GN scan exceeds its calibration");
    }
    Outcome::new(
        problems.is_empty(),
        if problems.is_empty() {
            "solve, scan and GN outputs identical across runs; JSON and CSV round-trip".to_string()
        } else {
            problems.join("; ")
        },
    )
}

fn main() -> ExitCode {
    let grid = Arc::new(RadialGrid::default());
    let (c1, c2) = criterion_1_2(&grid);
    let results: Vec<(&str, Outcome)> = vec![
        ("closed-form identities", c1),
        ("gauge invariance", c2),
        ("gradient correctness", criterion_3(&grid)),
        ("Hartree oracle", criterion_4(&grid)),
        ("vanishing at small mass", criterion_5()),
        ("small-mass condition scan", criterion_6()),
        ("strict sub-additivity", criterion_7()),
        ("scaling-path algebra", criterion_8(&grid)),
        ("determinism and schema", criterion_9(&grid)),
    ];
    let mut all = true;
    for (i, (name, o)) in results.iter().enumerate() {
        all &= o.passed;
        println!(
            "criterion {}: {} {}: {}",
            i + 1,
            if o.passed { "PASS" } else { "FAIL" },
            name,
            o.detail
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
