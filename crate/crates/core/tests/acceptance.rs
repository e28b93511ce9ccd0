//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//! Set `ACCEPTANCE_ONLY=3,7` to run a subset.

use fiberlab::diffusion::{simulate, KillMode, NuEval, SimConfig};
use fiberlab::functionals::estimate_robin;
use fiberlab::geometry::{max_fiber_b, overlapping_cells, DomainModel, PrefractalBoundary};
use fiberlab::lab::{check_prop_rr, classify_limit, run_regime_studies, ClassifyThresholds, StudyConfig};
use fiberlab::oracle::{
    calibrate_local_time, closed_form_vs_fd, convergence_sweep, elastic_survival, fixed_c_schedule, halving,
    laplace_local_time_closed_form, mean_exit_closed_form, simulate_1d_skew, IntervalModel, LeftBoundary,
    LineMedium,
};
use fiberlab::output::MANIFEST_NAME;
use fiberlab::Vec2;
use std::process::Command;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn centroid() -> Vec2 {
    Vec2::new(0.5, -(3f64.sqrt()) / 6.0)
}

fn geometry_exactness() -> Outcome {
    let mut worst_len: f64 = 0.0;
    let mut worst_mass: f64 = 0.0;
    let mut counts = true;
    let mut overlaps = 0;
    for n in 1..=6u32 {
        let k = PrefractalBoundary::at_level(3.0, n).unwrap();
        counts &= k.segment_count() == 3 * 4usize.pow(n);
        let ring = k.ring();
        let want = 3f64.powi(-(n as i32));
        for i in 0..ring.len() {
            let l = (ring[(i + 1) % ring.len()] - ring[i]).norm();
            worst_len = worst_len.max((l - want).abs());
        }
        let d = DomainModel::build(3.0, n, max_fiber_b(3.0)).unwrap();
        worst_mass = worst_mass.max((d.sigma_n * k.arclength() - 3.0).abs());
        if n <= 4 {
            overlaps += overlapping_cells(&d).len();
        }
    }
    outcome(
        counts && worst_len < 1e-12 && worst_mass < 1e-12 && overlaps == 0,
        format!("counts {counts}, max length error {worst_len:.1e}, max mass error {worst_mass:.1e}, overlapping cell pairs {overlaps}"),
    )
}

fn measure_convergence() -> Outcome {
    let b = max_fiber_b(3.0);
    let levels: Vec<u32> = (2..=8).collect();
    let one = check_prop_rr(3.0, b, &|_| 1.0, &levels, 12).unwrap();
    let one_exact = one.iter().all(|r| r.error == 0.0);
    let lin = check_prop_rr(3.0, b, &|p: Vec2| p.x + p.y, &levels, 12).unwrap();
    let errs: Vec<f64> = lin.iter().map(|r| r.error).collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let last = *errs.last().unwrap();
    let quad = check_prop_rr(3.0, b, &|p: Vec2| p.x * p.x + p.y, &levels, 12).unwrap();
    let quad_errs: Vec<String> = quad.iter().map(|r| format!("{:.1e}", r.error)).collect();
    let lin_errs: Vec<String> = errs.iter().map(|e| format!("{e:.1e}")).collect();
    outcome(
        one_exact && decreasing && last < 1e-3,
        format!(
            "g=1 exact {one_exact}; g=x+y errors [{}] strictly decreasing {decreasing}, final {last:.1e}; \
             for reference g=x^2+y errors [{}]",
            lin_errs.join(", "),
            quad_errs.join(", ")
        ),
    )
}

fn interval_oracle() -> Outcome {
    let (r1, r2, h) = (0.06, 0.1, 1e-5);
    let mut inside = 0;
    let mut worst_z: f64 = 0.0;
    let mut worst_fd: f64 = 0.0;
    for nu in [0.3, 0.5, 0.7] {
        let m = IntervalModel::new(r1, r2, nu, LeftBoundary::ReflectAtZero).unwrap();
        worst_fd = worst_fd.max(closed_form_vs_fd(&m, 0.0, 10_000).unwrap());
        for k in 0..5 {
            let x0 = r2 * (k as f64 + 0.5) / 5.0;
            let cfg = SimConfig {
                h,
                shell: 3.0 * h.sqrt(),
                t_max: 100.0,
                paths: 100_000,
                seed: 7,
                ..SimConfig::default()
            };
            let mc = simulate_1d_skew(x0, &m, &cfg).unwrap();
            let exact = mean_exit_closed_form(x0, &m).unwrap().value;
            let z = (mc.exit_time.mean - exact) / mc.exit_time.stderr;
            worst_z = worst_z.max(z.abs());
            if z.abs() <= 3.0 {
                inside += 1;
            }
        }
    }
    outcome(
        inside == 15 && worst_fd < 1e-6,
        format!("{inside}/15 cells within 3 stderr (max |z| {worst_z:.2}), closed form vs finite differences {worst_fd:.1e}"),
    )
}

fn local_time_calibration() -> Outcome {
    let mean_cfg = SimConfig {
        h: 2e-6,
        shell: 3.0 * 2e-6f64.sqrt(),
        t_max: 1.0,
        paths: 100_000,
        seed: 1,
        kappa_l: 1.0,
        ..SimConfig::default()
    };
    let cal = calibrate_local_time(&mean_cfg).unwrap();
    let z_mean = (cal.estimate.mean - cal.target) / cal.estimate.stderr;
    let kappa_ok = (0.9..=1.1).contains(&cal.kappa_fit);
    let surv_cfg = SimConfig {
        h: 1e-5,
        shell: 3.0 * 1e-5f64.sqrt(),
        ..mean_cfg.clone()
    };
    let mut zs = Vec::new();
    for c in [0.5, 1.0, 2.0] {
        let e = elastic_survival(c, &surv_cfg).unwrap();
        zs.push((e.mean - laplace_local_time_closed_form(c, 1.0)) / e.stderr);
    }
    let zs_txt: Vec<String> = zs.iter().map(|z| format!("{z:+.2}")).collect();
    outcome(
        z_mean.abs() <= 3.0 && kappa_ok && zs.iter().all(|z| z.abs() <= 3.0),
        format!(
            "mean L_1 {:.5} vs {:.5} (z {z_mean:+.2}), kappa fit {:.4}, survival z [{}]",
            cal.estimate.mean,
            cal.target,
            cal.kappa_fit,
            zs_txt.join(", ")
        ),
    )
}

fn elastic_limit_sweep() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for c in [0.5, 2.0] {
        let rows = convergence_sweep(c, 0.06, LeftBoundary::ReflectAtZero, 0.0, &fixed_c_schedule(c, &halving(0.04, 5)))
            .unwrap();
        let errs: Vec<f64> = rows.iter().map(|r| r.sup_error).collect();
        ok &= errs.windows(2).all(|w| w[1] < w[0]);
        detail.push(format!(
            "c={c}: [{}]",
            errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(", ")
        ));
    }
    outcome(ok, detail.join("; "))
}

fn side_choice() -> Outcome {
    let medium = LineMedium::free(0.0);
    let mut ok = true;
    let mut detail = Vec::new();
    for nu in [0.1, 0.5, 0.9] {
        let cfg = SimConfig {
            h: 1e-5,
            shell: 3.0 * 1e-5f64.sqrt(),
            t_max: 0.05,
            kill_mode: KillMode::AbsorbOuter,
            nu_eval: NuEval::Fixed(nu),
            seed: 23,
            paths: 2000,
            ..SimConfig::default()
        };
        let fs = simulate(&medium, 0.0, &cfg).unwrap();
        let crossings: u64 = fs.iter().map(|f| f.crossings).sum();
        let sigma: u64 = fs.iter().map(|f| f.sigma_choices).sum();
        let freq = sigma as f64 / crossings as f64;
        let half = 2.5758 * (nu * (1.0 - nu) / crossings as f64).sqrt();
        ok &= crossings >= 100_000 && (freq - nu).abs() <= half;
        detail.push(format!("nu={nu}: {freq:.4} over {crossings} crossings (99% half-width {half:.4})"));
    }
    outcome(ok, detail.join("; "))
}

fn regime_study() -> Outcome {
    let study = StudyConfig::default();
    let schedules = ["const:1", "fade:3", "explode:10"].map(|s| s.parse().unwrap());
    let tables = run_regime_studies(&schedules, &[2, 3, 4], &study).unwrap();
    let th = ClassifyThresholds::default();
    let labels: Vec<_> = tables.iter().map(|t| classify_limit(t, &th)).collect();
    let robin: Vec<f64> = tables[0].rows.iter().map(|r| r.ks_robin).collect();
    let surv: Vec<f64> = tables[1].rows.iter().map(|r| r.survival_at_probe).collect();
    let dir: Vec<f64> = tables[2].rows.iter().map(|r| r.ks_dirichlet).collect();
    let robin_ok = robin.iter().all(|&d| d < 0.05);
    let fade_ok = surv.windows(2).all(|w| w[1] > w[0]) && *surv.last().unwrap() > 0.99;
    let explode_ok = dir.windows(2).all(|w| w[1] < w[0]) && *dir.last().unwrap() < 0.05;
    let distinct = labels[0] != labels[1] && labels[1] != labels[2] && labels[0] != labels[2];
    let conclusive = labels.iter().all(|l| *l != fiberlab::lab::LimitLabel::Inconclusive);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    outcome(
        robin_ok && fade_ok && explode_ok && distinct && conclusive,
        format!(
            "const KS Robin [{}]; fade survival [{}]; explode KS Dirichlet [{}]; labels {} / {} / {}",
            fmt(&robin),
            fmt(&surv),
            fmt(&dir),
            labels[0],
            labels[1],
            labels[2]
        ),
    )
}

fn pathwise_monotonicity() -> Outcome {
    let d = DomainModel::build(3.0, 2, max_fiber_b(3.0)).unwrap();
    let x0 = Vec2::new(0.5, 0.0);
    let rates = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
    let mut breaks = 0usize;
    let mut compared = 0usize;
    for mode in [KillMode::ElasticClock, KillMode::ReflectInterface] {
        let runs: Vec<Vec<f64>> = rates
            .iter()
            .map(|&c| {
                let cfg = SimConfig {
                    h: 1e-4,
                    shell: 3e-2,
                    t_max: 0.2,
                    c_n: c,
                    kill_mode: mode,
                    nu_eval: NuEval::Fixed(0.3),
                    seed: 17,
                    paths: 500,
                    ..SimConfig::default()
                };
                simulate(&d, x0, &cfg).unwrap().iter().map(|f| f.lifetime).collect()
            })
            .collect();
        for w in runs.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                compared += 1;
                if b > a {
                    breaks += 1;
                }
            }
        }
    }
    let cfg = SimConfig {
        h: 1e-4,
        shell: 3e-2,
        t_max: 3.0,
        seed: 17,
        paths: 500,
        ..SimConfig::default()
    };
    let robin: Vec<f64> = [0.25, 0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|&c0| estimate_robin(&d, centroid(), &|_| 1.0, 1.0, c0, 1.0, &cfg).unwrap().estimate.mean)
        .collect();
    let robin_ok = robin.windows(2).all(|w| w[1] < w[0]);
    outcome(
        breaks == 0 && robin_ok,
        format!(
            "{breaks} of {compared} coupled lifetime pairs increase with c; Robin estimates [{}]",
            robin.iter().map(|x| format!("{x:.5}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn determinism() -> Outcome {
    let run = |args: &[&str], out: &std::path::Path| {
        let o = Command::new(env!("CARGO_BIN_EXE_fiberlab"))
            .args(args)
            .arg("--out")
            .arg(out)
            .env_remove("FIBERLAB_OUT")
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(
        &["simulate", "--level", "2", "--paths", "2000", "--tmax", "0.2", "--h", "1e-4", "--seed", "9"],
        a.path(),
    );
    let cfg = a.path().join("config.txt");
    run(&["simulate", "--config", cfg.to_str().unwrap()], b.path());
    let ma = fiberlab::output::RunManifest::read(&a.path().join(MANIFEST_NAME)).unwrap();
    let mb = fiberlab::output::RunManifest::read(&b.path().join(MANIFEST_NAME)).unwrap();
    let mut same = ma.config == mb.config;
    let mut checked = Vec::new();
    for f in &ma.files {
        if f.name.ends_with(".csv") {
            let x = std::fs::read(a.path().join(&f.name)).unwrap();
            let y = std::fs::read(b.path().join(&f.name)).unwrap();
            same &= x == y;
            checked.push(f.name.clone());
        }
    }
    outcome(
        same && !checked.is_empty(),
        format!("config echo identical and CSVs byte-identical: {same} ({})", checked.join(", ")),
    )
}

fn main() {
    let criteria: [(&str, f64, fn() -> Outcome); 9] = [
        ("geometry exactness", 10.0, geometry_exactness),
        ("interface measure convergence", 60.0, measure_convergence),
        ("interval oracle", 300.0, interval_oracle),
        ("local-time calibration", 300.0, local_time_calibration),
        ("elastic-limit sweep", 60.0, elastic_limit_sweep),
        ("skew side choice", 120.0, side_choice),
        ("regime study", 1800.0, regime_study),
        ("pathwise monotonicity", f64::INFINITY, pathwise_monotonicity),
        ("determinism", f64::INFINITY, determinism),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let o = check();
        let secs = start.elapsed().as_secs_f64();
        let pass = o.pass && secs < *budget;
        if !pass {
            failed += 1;
        }
        let budget_txt = if budget.is_finite() { format!(" of {budget:.0}s") } else { String::new() };
        println!(
            "criterion {} {name}: {} ({secs:.1}s{budget_txt}) {}",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
