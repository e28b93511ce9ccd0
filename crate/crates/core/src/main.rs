use clap::{Args, Parser, Subcommand};
use fiberlab::config::{parse_with_overrides, FunctionalKind, Params};
use fiberlab::diffusion::{run_paths, simulate, PathFunctionals, Termination, TraceRecorder};
use fiberlab::error::{Error, Result};
use fiberlab::functionals::{
    estimate_dirichlet, estimate_robin, estimate_u_n, laplace_local_time, resolvent_estimate, survival_from_lifetimes,
};
use fiberlab::geometry::{overlapping_cells, DomainModel};
use fiberlab::lab::{check_prop_rr, classify_limit, run_regime_studies, ClassifyThresholds, LimitLabel};
use fiberlab::oracle::{
    closed_form_vs_fd, convergence_sweep, elastic_limit_solution, fixed_c_schedule, halving, mean_exit_closed_form,
    simulate_1d_skew, IntervalModel,
};
use fiberlab::output::{
    csv, fmt12, geometry_svg, regime_csv, survival_csv, vertices_csv, OutputDir, RunManifest, CONFIG_NAME,
};
use serde_json::json;
use std::path::PathBuf;
use std::time::{Instant, SystemTime};

/// Environment variable naming the default output root.
const OUT_ENV: &str = "FIBERLAB_OUT";

#[derive(Parser, Debug)]
#[command(name = "fiberlab", version, about = "Skew Brownian motion on Koch pre-fractal domains with insulating fibers")]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory. Defaults to $FIBERLAB_OUT/<command>, or ./fiberlab-out/<command>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Any configuration key, as key=value. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    #[arg(long, global = true)]
    alpha: Option<String>,
    #[arg(long, global = true)]
    level: Option<String>,
    #[arg(long, global = true)]
    b: Option<String>,
    #[arg(long, global = true)]
    cn: Option<String>,
    #[arg(long, global = true)]
    deltan: Option<String>,
    #[arg(long = "kill-mode", global = true)]
    kill_mode: Option<String>,
    #[arg(long, global = true)]
    h: Option<String>,
    #[arg(long, global = true)]
    shell: Option<String>,
    #[arg(long, global = true)]
    tmax: Option<String>,
    #[arg(long, global = true)]
    paths: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Start point as x,y.
    #[arg(long, global = true, allow_hyphen_values = true)]
    x0: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a pre-fractal domain and write its sketch, vertices and summary.
    Geometry {
        #[arg(long, default_value_t = 800)]
        svg_width: u32,
    },
    /// Simulate paths and write per-path functionals and the survival curve.
    Simulate,
    /// Estimate one functional (see the `functional` key).
    Estimate {
        #[arg(long)]
        functional: Option<String>,
        #[arg(long)]
        integrand: Option<String>,
    },
    /// One-dimensional interval model: closed forms, finite differences, elastic sweep.
    Oracle {
        /// Also run the Monte Carlo walker at `oracle_x0`.
        #[arg(long)]
        mc: bool,
    },
    /// Lifetime laws across levels for several conductance schedules.
    Regimes {
        #[arg(long)]
        levels: Option<String>,
        #[arg(long)]
        schedules: Option<String>,
        /// Exit with code 4 unless the schedules get pairwise distinct, conclusive labels.
        #[arg(long)]
        check: bool,
    },
    /// Arc-length quadrature against the self-similar measure.
    RrCheck {
        #[arg(long)]
        levels: Option<String>,
        #[arg(long)]
        integrand: Option<String>,
        /// Exit with code 4 unless errors decrease strictly and end below 1e-3.
        #[arg(long)]
        check: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Geometry { .. } => "geometry",
            Command::Simulate => "simulate",
            Command::Estimate { .. } => "estimate",
            Command::Oracle { .. } => "oracle",
            Command::Regimes { .. } => "regimes",
            Command::RrCheck { .. } => "rr-check",
        }
    }

    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        let mut push = |k: &'static str, o: &Option<String>| {
            if let Some(s) = o {
                v.push((k, s.clone()));
            }
        };
        match self {
            Command::Estimate { functional, integrand } => {
                push("functional", functional);
                push("integrand", integrand);
            }
            Command::Regimes { levels, schedules, .. } => {
                push("levels", levels);
                push("schedules", schedules);
            }
            Command::RrCheck { levels, integrand, .. } => {
                push("rr_levels", levels);
                push("integrand", integrand);
            }
            _ => {}
        }
        v
    }
}

fn load_params(cli: &Cli) -> Result<Params> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        None => String::new(),
    };
    let c = &cli.common;
    let mut overrides: Vec<(&str, String)> = Vec::new();
    for (k, o) in [
        ("alpha", &c.alpha),
        ("level", &c.level),
        ("b", &c.b),
        ("cn", &c.cn),
        ("deltan", &c.deltan),
        ("kill_mode", &c.kill_mode),
        ("h", &c.h),
        ("shell", &c.shell),
        ("tmax", &c.tmax),
        ("paths", &c.paths),
        ("seed", &c.seed),
        ("x0", &c.x0),
    ] {
        if let Some(v) = o {
            overrides.push((k, v.clone()));
        }
    }
    overrides.extend(cli.command.overrides());
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Parameter(format!("--set expects key=value, got '{kv}'")))?;
        overrides.push((k.trim(), v.trim().to_string()));
    }
    parse_with_overrides(Params::default(), &text, &overrides)
}

fn output_dir(cli: &Cli) -> PathBuf {
    match &cli.out {
        Some(p) => p.clone(),
        None => std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("fiberlab-out"))
            .join(cli.command.name()),
    }
}

fn cause_name(c: Termination) -> &'static str {
    match c {
        Termination::Running => "running",
        Termination::Absorbed => "absorbed",
        Termination::Killed => "killed",
        Termination::HorizonReached => "horizon",
        Termination::Stopped => "stopped",
    }
}

fn time_grid(t_max: f64, points: usize) -> Vec<f64> {
    (1..=points).map(|i| t_max * i as f64 / points as f64).collect()
}

fn paths_csv(fs: &[PathFunctionals]) -> String {
    csv(
        &[
            "path",
            "cause",
            "lifetime",
            "gamma_omega",
            "gamma_sigma",
            "l_sym",
            "l_left",
            "l_right",
            "crossings",
            "sigma_choices",
            "zeta",
        ],
        fs.iter().enumerate().map(|(i, f)| {
            vec![
                i.to_string(),
                cause_name(f.cause).into(),
                fmt12(f.lifetime),
                fmt12(f.gamma_omega),
                fmt12(f.gamma_sigma),
                fmt12(f.l_sym),
                fmt12(f.l_left),
                fmt12(f.l_right),
                f.crossings.to_string(),
                f.sigma_choices.to_string(),
                fmt12(f.zeta),
            ]
        }),
    )
}

fn cmd_geometry(p: &Params, out: &mut OutputDir, svg_width: u32) -> Result<serde_json::Value> {
    let d = DomainModel::build(p.alpha, p.level, p.b)?;
    out.write("geometry.svg", &geometry_svg(&d, svg_width))?;
    out.write("vertices.csv", &vertices_csv(&d))?;
    let overlaps = if p.level <= 4 {
        Some(overlapping_cells(&d).len())
    } else {
        None
    };
    let summary = json!({
        "alpha": p.alpha,
        "level": p.level,
        "b": p.b,
        "segments": d.segment_count(),
        "segment_length": d.segment_length(),
        "arclength": d.segment_length() * d.segment_count() as f64,
        "sigma_n": d.sigma_n,
        "normalized_arclength": d.arclength_quadrature(|_| 1.0),
        "max_weight": d.max_weight(),
        "overlapping_cell_pairs": overlaps,
    });
    out.write_json("summary.json", &summary)?;
    Ok(summary)
}

fn cmd_simulate(p: &Params, out: &mut OutputDir) -> Result<serde_json::Value> {
    let d = DomainModel::build(p.alpha, p.level, p.b)?;
    let cfg = p.sim_config();
    let start = Instant::now();
    let fs = simulate(&d, p.x0, &cfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    out.write("paths.csv", &paths_csv(&fs))?;
    let life: Vec<(f64, bool)> = fs
        .iter()
        .map(|f| (f.lifetime, f.cause == Termination::HorizonReached))
        .collect();
    let curve = survival_from_lifetimes(&life, &time_grid(p.tmax, p.grid_points), p.cn, p.kill_mode)?;
    out.write("survival.csv", &survival_csv(&curve))?;
    if p.trace_paths > 0 {
        let tcfg = fiberlab::diffusion::SimConfig {
            paths: p.trace_paths,
            ..cfg.clone()
        };
        let runs = run_paths(&d, p.x0, &tcfg, |_| TraceRecorder::new(p.trace_every))?;
        let rows = runs.iter().enumerate().flat_map(|(i, (_, rec))| {
            rec.rows.iter().map(move |(t, x, side, l)| {
                vec![
                    i.to_string(),
                    fmt12(*t),
                    fmt12(x.x),
                    fmt12(x.y),
                    format!("{side:?}").to_lowercase(),
                    fmt12(*l),
                ]
            })
        });
        out.write("trace.csv", &csv(&["path", "t", "x", "y", "region", "l_sym"], rows))?;
    }
    let count = |c: Termination| fs.iter().filter(|f| f.cause == c).count();
    let n = fs.len() as f64;
    let summary = json!({
        "paths": fs.len(),
        "killed": count(Termination::Killed),
        "absorbed": count(Termination::Absorbed),
        "horizon": count(Termination::HorizonReached),
        "mean_lifetime": fs.iter().map(|f| f.lifetime).sum::<f64>() / n,
        "mean_l_sym": fs.iter().map(|f| f.l_sym).sum::<f64>() / n,
        "mean_crossings": fs.iter().map(|f| f.crossings as f64).sum::<f64>() / n,
        "anomalies": fs.iter().map(|f| f.anomalies).sum::<u64>(),
        "elapsed_seconds": elapsed,
    });
    out.write_json("summary.json", &summary)?;
    Ok(summary)
}

fn cmd_estimate(p: &Params, out: &mut OutputDir) -> Result<serde_json::Value> {
    let d = DomainModel::build(p.alpha, p.level, p.b)?;
    let cfg = p.sim_config();
    let g = p.integrand;
    let f = move |x: fiberlab::Vec2| g.eval(x);
    let value = match p.functional {
        FunctionalKind::Un => serde_json::to_value(estimate_u_n(&d, p.x0, &f, &cfg)?),
        FunctionalKind::Resolvent => serde_json::to_value(resolvent_estimate(&d, p.x0, &f, p.lambda, &cfg)?),
        FunctionalKind::Robin => {
            serde_json::to_value(estimate_robin(&d, p.x0, &f, p.delta0, p.c0, g.sup_bound(), &cfg)?)
        }
        FunctionalKind::Dirichlet => serde_json::to_value(estimate_dirichlet(&d, p.x0, &f, p.delta0, &cfg)?),
        FunctionalKind::Survival => {
            let c = fiberlab::functionals::survival_curve(&d, p.x0, &cfg, &time_grid(p.tmax, p.grid_points))?;
            out.write("survival.csv", &survival_csv(&c))?;
            serde_json::to_value(&c)
        }
        FunctionalKind::Laplace => {
            let l = laplace_local_time(&d, p.x0, p.tmax, &p.laplace_c, &cfg)?;
            out.write(
                "laplace.csv",
                &csv(
                    &["c", "mean", "stderr"],
                    l.c.iter()
                        .zip(&l.estimates)
                        .map(|(c, e)| vec![fmt12(*c), fmt12(e.mean), fmt12(e.stderr)]),
                ),
            )?;
            serde_json::to_value(&l)
        }
    }
    .map_err(|e| Error::Integrity(e.to_string()))?;
    let summary = json!({
        "functional": p.functional.to_string(),
        "integrand": p.integrand.to_string(),
        "result": value,
    });
    out.write_json("estimate.json", &summary)?;
    Ok(summary)
}

fn cmd_oracle(p: &Params, out: &mut OutputDir, mc: bool) -> Result<serde_json::Value> {
    let m = IntervalModel::new(p.r1, p.r2, p.nu, p.left)?;
    let eps = p.r2 - p.r1;
    let c = p.nu / ((1.0 - p.nu) * eps);
    let rows: Vec<Vec<String>> = (0..=40)
        .map(|i| {
            let x = p.r2 * i as f64 / 40.0;
            let v = mean_exit_closed_form(x, &m)?;
            let lim = if x <= p.r1 {
                fmt12(elastic_limit_solution(x, p.r1, c, p.left)?.value)
            } else {
                String::new()
            };
            Ok(vec![fmt12(x), fmt12(v.value), format!("{:?}", v.flag).to_lowercase(), lim])
        })
        .collect::<Result<_>>()?;
    out.write("mean_exit.csv", &csv(&["x", "mean_exit", "flag", "elastic_limit"], rows))?;
    let fd_gap = closed_form_vs_fd(&m, 0.0, p.fd_nodes)?;
    let sweep = convergence_sweep(
        p.sweep_c,
        p.r1,
        p.left,
        0.0,
        &fixed_c_schedule(p.sweep_c, &halving(eps, p.sweep_steps)),
    )?;
    out.write(
        "sweep.csv",
        &csv(
            &["eps", "nu", "sup_error"],
            sweep.iter().map(|r| vec![fmt12(r.eps), fmt12(r.nu), fmt12(r.sup_error)]),
        ),
    )?;
    let mc_value = if mc {
        let r = simulate_1d_skew(p.oracle_x0, &m, &p.sim_config())?;
        let exact = mean_exit_closed_form(p.oracle_x0, &m)?.value;
        Some(json!({
            "x0": p.oracle_x0,
            "mean_exit": r.exit_time,
            "closed_form": exact,
            "z": (r.exit_time.mean - exact) / r.exit_time.stderr,
            "unfinished": r.unfinished,
        }))
    } else {
        None
    };
    let summary = json!({
        "r1": p.r1,
        "r2": p.r2,
        "nu": p.nu,
        "left": p.left.to_string(),
        "elastic_coefficient": c,
        "closed_form_vs_fd_relative": fd_gap,
        "sweep_monotone": sweep.windows(2).all(|w| w[1].sup_error < w[0].sup_error),
        "monte_carlo": mc_value,
    });
    out.write_json("summary.json", &summary)?;
    Ok(summary)
}

fn cmd_regimes(p: &Params, out: &mut OutputDir, check: bool) -> Result<serde_json::Value> {
    let study = p.study_config();
    let tables = run_regime_studies(&p.schedules, &p.levels, &study)?;
    out.write("regimes.csv", &regime_csv(&tables))?;
    let mut labels = Vec::new();
    for t in &tables {
        for r in &t.rows {
            let name = format!("survival_{}_n{}.csv", t.schedule.replace(':', "_"), r.level);
            out.write(&name, &survival_csv(&r.curve))?;
        }
        labels.push((t.schedule.clone(), classify_limit(t, &ClassifyThresholds::default())));
    }
    out.write_json("tables.json", &tables)?;
    let summary = json!({
        "levels": p.levels,
        "labels": labels.iter().map(|(s, l)| json!({"schedule": s, "label": l.to_string()})).collect::<Vec<_>>(),
    });
    out.write_json("summary.json", &summary)?;
    if check {
        let conclusive = labels.iter().all(|(_, l)| *l != LimitLabel::Inconclusive);
        let distinct = labels
            .iter()
            .enumerate()
            .all(|(i, a)| labels[i + 1..].iter().all(|b| b.1 != a.1));
        if !(conclusive && distinct) {
            return Err(Error::Statistical(format!("labels {labels:?} are not distinct and conclusive")));
        }
    }
    Ok(summary)
}

fn cmd_rr_check(p: &Params, out: &mut OutputDir, check: bool) -> Result<serde_json::Value> {
    let g = p.integrand;
    let f = move |x: fiberlab::Vec2| g.eval(x);
    let rows = check_prop_rr(p.alpha, p.b, &f, &p.rr_levels, p.reference_level)?;
    out.write(
        "rr.csv",
        &csv(
            &["level", "quadrature", "reference", "error"],
            rows.iter().map(|r| {
                vec![r.level.to_string(), fmt12(r.quadrature), fmt12(r.reference), fmt12(r.error)]
            }),
        ),
    )?;
    let decreasing = rows.windows(2).all(|w| w[1].error < w[0].error);
    let last = rows.last().map_or(f64::NAN, |r| r.error);
    let summary = json!({
        "integrand": g.to_string(),
        "reference_level": p.reference_level,
        "strictly_decreasing": decreasing,
        "final_error": last,
    });
    out.write_json("summary.json", &summary)?;
    if check && !(decreasing && last < 1e-3) {
        return Err(Error::Statistical(format!(
            "errors for {g} are not strictly decreasing to below 1e-3 (final {last:e})"
        )));
    }
    Ok(summary)
}

fn run(cli: &Cli) -> Result<()> {
    let params = load_params(cli)?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut out = OutputDir::create(output_dir(cli))?;
    let echo = params.to_text();
    out.write(CONFIG_NAME, &echo)?;
    let outcome = match &cli.command {
        Command::Geometry { svg_width } => cmd_geometry(&params, &mut out, *svg_width),
        Command::Simulate => cmd_simulate(&params, &mut out),
        Command::Estimate { .. } => cmd_estimate(&params, &mut out),
        Command::Oracle { mc } => cmd_oracle(&params, &mut out, *mc),
        Command::Regimes { check, .. } => cmd_regimes(&params, &mut out, *check),
        Command::RrCheck { check, .. } => cmd_rr_check(&params, &mut out, *check),
    };
    // the manifest is written even when a check fails, so the evidence is kept
    let summary = match &outcome {
        Ok(s) => Some(s.clone()),
        Err(Error::Statistical(_)) => None,
        Err(_) => return outcome.map(|_| ()),
    };
    let root = out.root().to_path_buf();
    let manifest = RunManifest::new(
        cli.command.name(),
        params.seed,
        echo,
        started,
        clock.elapsed().as_secs_f64(),
    );
    out.finish(manifest)?;
    if let Some(s) = summary {
        println!("{}", serde_json::to_string_pretty(&s).unwrap_or_default());
    }
    println!("wrote {}", root.display());
    outcome.map(|_| ())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("fiberlab: {e}");
        std::process::exit(e.exit_code());
    }
}
