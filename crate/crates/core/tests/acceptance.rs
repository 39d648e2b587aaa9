//! Acceptance suite: one line per criterion. Hard checks decide the
//! verdict; soft checks are reported alongside.

use std::process::ExitCode;
use std::time::Instant;

use stokes_lab::dual::DualOptions;
use stokes_lab::grid::{good_time_set, MaskDocument};
use stokes_lab::observability::{build_schedule, certify_observability, direct_ratio, dual_null_control, mu_for_constant, TelescopeOptions};
use stokes_lab::rng::{gaussian_vec, stream, streams};
use stokes_lab::rnorm::{conjugate, duality_map, p_norm};
use stokes_lab::runner::{run, ExperimentConfig, Kind};
use stokes_lab::shape::{
    greedy_design, randomized_constant_mc, solve_relaxed_design, truncation_certificate, Law,
};
use stokes_lab::smallness::{growth_fit, l1_constant_estimate, l2_constant, SubgradientOptions};
use stokes_lab::timeopt::{check_monotone, minimal_time, min_norm_control, uniqueness_check, CurvePoint, TimeOptOptions};
use stokes_lab::{solve_modes, synthesize_field, Cutoff, GoodTimeSet, Method, ModalState, RectDomain, SpaceTimeMask, SpatialMask};

struct Report {
    hard: Vec<(String, bool)>,
    soft: Vec<(String, bool)>,
}

impl Report {
    fn new() -> Self {
        Self { hard: Vec::new(), soft: Vec::new() }
    }

    fn hard(&mut self, what: impl Into<String>, ok: bool) {
        self.hard.push((what.into(), ok));
    }

    fn soft(&mut self, what: impl Into<String>, ok: bool) {
        self.soft.push((what.into(), ok));
    }
}

fn square(n: usize, t: f64, nt: usize) -> RectDomain {
    RectDomain::unit_square(n, t, nt).unwrap()
}

fn eigen_suite(r: &mut Report) {
    let start = Instant::now();
    let d = square(16, 1.0, 2);
    let dense = solve_modes(&d, Cutoff::Count(10), Method::Dense).unwrap();
    let iter = solve_modes(&d, Cutoff::Count(10), Method::Iterative).unwrap();
    let gap = dense
        .eigenvalues()
        .iter()
        .zip(iter.eigenvalues())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    r.hard(format!("dense vs iterative max |Δλ| {gap:.1e} ≤ 1e-8"), dense.len() == iter.len() && gap <= 1e-8);
    let ortho = dense.orthonormality_defect().max(iter.orthonormality_defect());
    r.hard(format!("orthonormality {ortho:.1e} ≤ 1e-8"), ortho <= 1e-8);
    let mut div = dense.max_divergence().max(iter.max_divergence());
    let mut l1 = Vec::new();
    for n in [16, 32, 64] {
        let b = solve_modes(&square(n, 1.0, 2), Cutoff::Count(1), Method::Iterative).unwrap();
        div = div.max(b.max_divergence());
        l1.push(b.eigenvalues()[0]);
    }
    r.hard(format!("divergence {div:.1e} ≤ 1e-14"), div <= 1e-14);
    let ratio = (l1[0] - l1[1]) / (l1[1] - l1[2]);
    r.hard(format!("Richardson ratio {ratio:.3} in [3.2, 4.8]"), (3.2..=4.8).contains(&ratio));
    let secs = start.elapsed().as_secs_f64();
    r.hard(format!("runtime {secs:.1}s ≤ 120s"), secs <= 120.0);
}

fn decay_law(r: &mut Report) {
    let b = solve_modes(&square(16, 1.0, 2), Cutoff::Count(30), Method::Dense).unwrap();
    let l = b.eigenvalues();
    let cuts: Vec<f64> = [2usize, 6, 11, 17, 24].iter().map(|&k| 0.5 * (l[k] + l[k + 1])).collect();
    let mut rng = stream(2026, streams::PROBE);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let z0 = ModalState::new(&b, gaussian_vec(&mut rng, b.len())).unwrap();
        for &cut in &cuts {
            let (_, tail) = z0.split(cut);
            for t in [1e-4, 1e-3, 1e-2, 0.05] {
                let lhs = tail.evolve(t).unwrap().h_norm();
                let rhs = (-cut * t).exp() * z0.h_norm();
                worst = worst.max(lhs - rhs);
            }
        }
    }
    r.hard(format!("max ‖z⊥(t)‖ − e^(−Λt)‖z0‖ = {worst:.1e} ≤ 1e-12"), worst <= 1e-12);
}

fn spectral_constants(r: &mut Report) {
    let d = square(16, 1.0, 2);
    let b = solve_modes(&d, Cutoff::Lambda(400.0), Method::Dense).unwrap();
    let full = l2_constant(&b, &SpatialMask::full(d), 400.0).unwrap().value;
    r.hard(format!("c2 on Ω = {full:.12}"), (full - 1.0).abs() <= 1e-4);

    let opts = SubgradientOptions { seed: 3, ..SubgradientOptions::default() };
    let mut last = 0.0;
    let mut monotone = true;
    let mut floor = true;
    for k in 0..10 {
        let (m, _) = SpatialMask::ball(d, (0.5, 0.5), 0.45 - 0.03 * k as f64).unwrap();
        let c2 = l2_constant(&b, &m, 200.0).unwrap().value;
        let c1 = l1_constant_estimate(&b, &m, 200.0, &opts).unwrap();
        monotone &= c2 >= last;
        floor &= c1.ratio >= c2 / m.measure().sqrt();
        last = c2;
    }
    r.hard("c2 monotone over 10 nested balls", monotone);
    r.hard("ĉ1 ≥ c2/|ω|^½ on every mask", floor);

    let (m, _) = SpatialMask::ball(d, (0.3, 0.4), 0.2).unwrap();
    let pairs: Vec<(f64, f64)> = [100.0, 200.0, 300.0, 400.0]
        .iter()
        .map(|&l| (l, l2_constant(&b, &m, l).unwrap().value))
        .collect();
    let fit = growth_fit(&pairs).unwrap();
    r.soft(format!("log c2 vs √Λ R² = {:.3} ≥ 0.9", fit.r_squared), fit.r_squared >= 0.9);

    let d12 = square(12, 1.0, 2);
    let b2 = solve_modes(&d12, Cutoff::Count(4), Method::Dense).unwrap().truncated(2).unwrap();
    let mask = SpatialMask::from_fn(d12, |x, y| x < 0.4 && y > 0.3);
    let est = l1_constant_estimate(&b2, &mask, b2.eigenvalues()[1], &opts).unwrap();
    let mut best = f64::INFINITY;
    for s in 0..(std::f64::consts::PI / 1e-4) as usize {
        let th = s as f64 * 1e-4;
        best = best.min(synthesize_field(&b2, &[th.cos(), th.sin()]).unwrap().l1_norm_on(&mask));
    }
    let rel = (est.ratio - 1.0 / best).abs() * best;
    r.hard(format!("2-mode ĉ1 vs angular scan rel {rel:.1e} ≤ 1e-3"), rel <= 1e-3);
}

fn telescoping(r: &mut Report) {
    let d = square(16, 0.5, 40);
    let e = GoodTimeSet::from_members(d, (0..40).map(|k| k % 5 != 4).collect()).unwrap();
    let coverage = e.measure() / d.t_horizon;
    let s = build_schedule(&e, 4.0 / 3.0, 12).unwrap();
    let defect = s.identity_defect().max((s.telescoped_length() - (s.l1 - s.l)).abs());
    r.hard(format!("schedule identities defect {defect:.1e} ≤ 1e-12"), defect <= 1e-12);
    let dens = s.densities.iter().cloned().fold(f64::INFINITY, f64::min);
    r.hard(
        format!("density ≥ 1/3 at depth 12, coverage {coverage:.2}, min {dens:.3}"),
        coverage >= 0.8 && s.m_max == 12 && s.check_density(&e).is_ok() && dens >= 1.0 / 3.0,
    );
    r.hard("μ(1) = 4/3", mu_for_constant(1.0) == 4.0 / 3.0);

    let b = solve_modes(&d, Cutoff::Count(10), Method::Dense).unwrap();
    let (ball, _) = SpatialMask::ball(d, (0.5, 0.5), 0.3).unwrap();
    let mask = SpaceTimeMask::cylinder_steps(&ball, |k| k % 5 != 4);
    let g = good_time_set(&mask).unwrap();
    let report = certify_observability(&b, &mask, 12, &TelescopeOptions { probes: 24, seed: 9 }).unwrap();
    let mut rng = stream(11, streams::PROBE);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let a = gaussian_vec(&mut rng, b.len());
        worst = worst.max(direct_ratio(&b, &mask, &a).unwrap());
    }
    r.hard(
        format!("C_obs {:.3e} ≥ direct ratio {worst:.3e} on 20 states (E coverage {:.2})", report.c_obs, g.measure() / 0.5),
        report.c_obs >= worst,
    );
}

fn stays_on_mask(c: &stokes_lab::dual::ControlSignal, mask: &SpaceTimeMask) -> bool {
    c.entries.iter().all(|e| mask.contains(c.steps[e.sample], e.cell))
}

fn null_control(r: &mut Report) {
    let d = square(16, 0.5, 40);
    let b = solve_modes(&d, Cutoff::Count(10), Method::Dense).unwrap();
    let opts = DualOptions { max_iter: 200, seed: 4, ..DualOptions::default() };
    let (omega, _) = SpatialMask::ball(d, (0.3, 0.4), 0.2).unwrap();

    let mut u0 = vec![0.0; b.len()];
    u0[0] = 1.0;
    let cyl = SpaceTimeMask::cylinder(&omega);
    let one = dual_null_control(&b, &u0, &cyl, &opts).unwrap();
    r.hard(format!("single mode, cylinder: residual {:.1e} ≤ 1e-3", one.record.relative), one.record.relative <= 1e-3);

    let u5: Vec<f64> = (0..b.len()).map(|j| if j < 5 { 1.0 / (1.0 + j as f64) } else { 0.0 }).collect();
    let window = SpaceTimeMask::cylinder_between(&omega, 0.1, 0.4);
    let five = dual_null_control(&b, &u5, &window, &opts).unwrap();
    r.hard(
        format!("5 modes, ball×(0.1, 0.4): residual {:.1e} ≤ 1e-2 in {} steps", five.record.relative, five.record.iterations),
        five.record.relative <= 1e-2 && five.record.iterations <= 200,
    );
    let invariants = [&one, &five]
        .iter()
        .zip([&cyl, &window])
        .all(|(n, m)| n.control.check_bound().is_ok() && stays_on_mask(&n.control, m) && n.control.max_norm() <= n.bound * (1.0 + 1e-9));
    r.hard("support and L∞ bound invariants", invariants);

    let moving = SpaceTimeMask::from_fn(d, |x, y, t| {
        let (cx, cy) = (0.25 + t, 0.5);
        (x - cx).powi(2) + (y - cy).powi(2) < 0.04
    });
    let st = dual_null_control(&b, &u5, &moving, &opts).unwrap();
    r.soft(format!("moving-ball mask residual {:.1e} ≤ 5e-2", st.record.relative), st.record.relative <= 5e-2);
    r.hard("moving-ball control stays on its mask", stays_on_mask(&st.control, &moving) && st.control.check_bound().is_ok());
}

fn shape_design(r: &mut Report) {
    let b = solve_modes(&square(16, 1.0, 2), Cutoff::Count(12), Method::Dense).unwrap();
    let mut exact = true;
    for l in [0.1, 0.25, 0.5] {
        let lp = solve_relaxed_design(&b, 0.05, l, 1).unwrap();
        let (_, g) = greedy_design(&b, 0.05, l).unwrap();
        exact &= (lp.objective - g).abs() <= 1e-12 * g;
    }
    r.hard("J = 1 LP equals the greedy quantile", exact);

    let mut gaps = 0.0_f64;
    let mut frac_ok = true;
    for (t, j) in [(0.05, 8), (1e-3, 5), (1.0, 5)] {
        let mut last = 0.0;
        for l in [0.1, 0.2, 0.4] {
            let s = solve_relaxed_design(&b, t, l, j).unwrap();
            gaps = gaps.max(s.gap.abs());
            frac_ok &= s.fractional <= j + 1;
            frac_ok &= s.objective > last;
            last = s.objective;
        }
    }
    r.hard(format!("duality gap {gaps:.1e} ≤ 1e-7"), gaps <= 1e-7);
    r.hard("fractional cells ≤ J + 1 and objective increasing in L", frac_ok);

    let design = solve_relaxed_design(&b, 0.05, 0.2, 6).unwrap().design;
    let a: Vec<f64> = (0..b.len()).map(|j| 1.0 / (1.0 + j as f64)).collect();
    for law in [Law::Gaussian, Law::Bernoulli] {
        let mc = randomized_constant_mc(&b, &design, &a, 0.05, 10_000, 21, law).unwrap();
        r.hard(format!("{law:?} MC z = {:.2} within ±4", mc.z_score), mc.z_score.abs() <= 4.0);
    }

    let s = solve_relaxed_design(&b, 1.0, 0.2, 5).unwrap();
    let v = truncation_certificate(&b, 1.0, 5, &s.design, s.objective).unwrap();
    r.hard(format!("truncation at T = 1, J = 5: margin {:.1e} ≥ 10", v.margin), v.passed && v.margin >= 10.0);
}

fn time_optimal(r: &mut Report) {
    let mut rng = stream(8, streams::PROBE);
    let mut worst = 0.0_f64;
    for n in [2usize, 5] {
        for _ in 0..50 {
            let phi = gaussian_vec(&mut rng, n);
            for rr in [1.0, 1.5, 2.0, 4.0, f64::INFINITY] {
                let v = duality_map(&phi, rr).unwrap();
                let pair: f64 = v.iter().zip(&phi).map(|(a, b)| a * b).sum();
                worst = worst.max((pair - p_norm(&phi, conjugate(rr))).abs()).max((p_norm(&v, rr) - 1.0).abs());
            }
        }
    }
    r.hard(format!("duality map identities {worst:.1e} ≤ 1e-10"), worst <= 1e-10);

    let d = square(16, 1.0, 10);
    let b = solve_modes(&d, Cutoff::Count(5), Method::Dense).unwrap();
    let (omega, _) = SpatialMask::ball(d, (0.3, 0.4), 0.25).unwrap();
    let u0 = [1.0, -0.5, 0.25, 0.4, -0.3];
    let opts = TimeOptOptions { dual: DualOptions { seed: 1, ..DualOptions::default() }, ..TimeOptOptions::default() };

    let curve: Vec<CurvePoint> = [0.02, 0.05, 0.1, 0.2, 0.4]
        .iter()
        .map(|&tau| CurvePoint { tau, m_min: min_norm_control(&b, &u0, &omega, tau, 2.0, &opts).unwrap().m_min })
        .collect();
    r.hard("M_min(τ) nonincreasing on a 5-point sweep", check_monotone(&curve).is_ok());

    let mut taus = Vec::new();
    let mut steer = 0.0_f64;
    let mut bang = 0.0_f64;
    let mut samples_ok = true;
    for m in [1.0, 2.0, 4.0] {
        let res = minimal_time(&b, &u0, m, &omega, 2.0, 1e-4, &opts).unwrap();
        samples_ok &= check_monotone(&res.curve).is_ok();
        steer = steer.max(res.residual);
        bang = bang.max(res.bang_bang.fraction);
        taus.push(res.tau_star);
    }
    r.hard("bisection samples of M_min nonincreasing", samples_ok);
    r.hard(format!("τ* {taus:.4?} decreasing over M = 1, 2, 4"), taus[0] > taus[1] && taus[1] > taus[2]);
    for rr in [1.5, 4.0, f64::INFINITY, 1.0] {
        let res = minimal_time(&b, &u0, 2.0, &omega, rr, 1e-3, &opts).unwrap();
        steer = steer.max(res.residual);
    }
    r.hard(format!("steering residual {steer:.1e} ≤ 1e-2 (r = 1, 1.5, 2, 4, ∞)"), steer <= 1e-2);
    r.soft(format!("bang-bang residual {bang:.3} ≤ 0.05 at ε = 0.05"), bang <= 0.05);

    let u = uniqueness_check(&b, &u0, 2.0, &omega, 2.0, 1e-4, (1, 2), &opts).unwrap();
    r.soft(format!("r = 2 inter-seed distance {:.1e} ≤ 1e-2", u.relative_distance), u.relative_distance <= 1e-2);

    let a = minimal_time(&b, &u0, 2.0, &omega, 1.5, 1e-4, &opts).unwrap();
    let c = minimal_time(&b, &u0, 2.0, &omega, 1.5, 1e-4, &opts).unwrap();
    let same = a.tau_star.to_bits() == c.tau_star.to_bits()
        && serde_json::to_string(&a.control).unwrap() == serde_json::to_string(&c.control).unwrap();
    r.hard("identical seeds bit-exact", same);
}

const RUN_CONFIG: &str = r#"
seed = 17

[domain]
cells_x = 12
t_horizon = 0.5
nt = 20

[basis]
modes = 6

[mask]
shape = "ball"
center = [0.4, 0.5]
radius = 0.25

[observe]
m_max = 8
probes = 8
u0 = [1.0, 0.5, -0.5]
"#;

fn determinism(r: &mut Report) {
    let dir = tempfile::tempdir().unwrap();
    let base = ExperimentConfig::from_toml(RUN_CONFIG).unwrap();
    let cfg = |name: &str| {
        let mut c = base.clone().resolve(Kind::Observe, None, Some(dir.path().join(name))).unwrap();
        c.cache_dir = Some(dir.path().join("cache"));
        c
    };
    let (c1, c2) = (cfg("a"), cfg("b"));
    let m1 = run(&c1).unwrap();
    let m2 = run(&c2).unwrap();
    let bytes_equal = m1.files.iter().all(|f| {
        std::fs::read(dir.path().join("a").join(&f.name)).unwrap() == std::fs::read(dir.path().join("b").join(&f.name)).unwrap()
    });
    r.hard(
        format!("{} payloads byte-identical across two runs", m1.files.len()),
        m1.payload_hashes() == m2.payload_hashes() && bytes_equal,
    );
    r.hard("second run served from the basis cache", m2.basis_cache == stokes_lab::runner::CacheStatus::Hit);
    let _ = MaskDocument::from_spatial;
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn(&mut Report));
    let criteria: [Criterion; 8] = [
        ("eigen suite", eigen_suite),
        ("decay law", decay_law),
        ("spectral constants", spectral_constants),
        ("telescoping machinery", telescoping),
        ("null control", null_control),
        ("shape design", shape_design),
        ("time-optimal control", time_optimal),
        ("end-to-end determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut rep = Report::new();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| f(&mut rep)));
        let ok = outcome.is_ok() && rep.hard.iter().all(|h| h.1);
        if !ok {
            failed += 1;
        }
        let hard: Vec<String> = rep.hard.iter().map(|(w, p)| format!("{}{w}", if *p { "" } else { "FAILED " })).collect();
        let soft: Vec<String> = rep.soft.iter().map(|(w, p)| format!("{} {w}", if *p { "soft ok" } else { "soft miss" })).collect();
        println!(
            "criterion {} {name}: {} [{:.1}s] {}{}{}",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            if outcome.is_err() { "panicked; " } else { "" },
            hard.join("; "),
            if soft.is_empty() { String::new() } else { format!("; {}", soft.join("; ")) },
        );
    }
    println!("acceptance: {} of 8 criteria pass", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
