//! Level-by-level regime study: lifetimes of the elastic process on each
//! pre-fractal domain compared with absorbing, reflecting-with-clock and
//! immortal references simulated on the same level.

use crate::diffusion::{simulate, KillMode, NuEval, PathFunctionals, SimConfig, Termination};
use crate::error::{Error, Result};
use crate::functionals::{survival_from_lifetimes, SurvivalCurve};
use crate::geometry::{check_alpha, selfsimilar_quadrature, DomainModel};
use crate::stats::{
    bootstrap_95, ks_censored, ks_critical_95, ks_to_immortal, linear_fit, resample, wilson, Estimate, Z95,
};
use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};

/// Smallest step used by the study.
pub const MIN_STEP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScheduleKind {
    /// c_n = c0 at every level.
    ConstantC0(f64),
    /// c_n = cbar / n.
    Vanishing(f64),
    /// c_n = cbar * alpha^-n.
    VanishingGeometric(f64),
    /// c_n = cbar * alpha^(n/2).
    Exploding(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSchedule {
    pub kind: ScheduleKind,
}

impl RegimeSchedule {
    pub fn new(kind: ScheduleKind) -> Result<Self> {
        let v = match kind {
            ScheduleKind::ConstantC0(v)
            | ScheduleKind::Vanishing(v)
            | ScheduleKind::VanishingGeometric(v)
            | ScheduleKind::Exploding(v) => v,
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Parameter(format!("schedule constant {v} must be positive")));
        }
        Ok(RegimeSchedule { kind })
    }

    /// Short identifier, also the CLI spelling: `const:1`, `vanish:1`, `fade:3`, `explode:10`.
    pub fn id(&self) -> String {
        match self.kind {
            ScheduleKind::ConstantC0(v) => format!("const:{v}"),
            ScheduleKind::Vanishing(v) => format!("vanish:{v}"),
            ScheduleKind::VanishingGeometric(v) => format!("fade:{v}"),
            ScheduleKind::Exploding(v) => format!("explode:{v}"),
        }
    }

    pub fn c_at(&self, level: u32, alpha: f64) -> f64 {
        match self.kind {
            ScheduleKind::ConstantC0(c) => c,
            ScheduleKind::Vanishing(c) => c / level as f64,
            ScheduleKind::VanishingGeometric(c) => c * alpha.powi(-(level as i32)),
            ScheduleKind::Exploding(c) => c * alpha.powf(level as f64 / 2.0),
        }
    }

    /// c_n times the largest fiber weight (b/2) alpha^-n 3/(3+b^2).
    pub fn conductance_product(&self, level: u32, alpha: f64, b: f64) -> f64 {
        self.c_at(level, alpha) * (b / 2.0) * alpha.powi(-(level as i32)) * 3.0 / (3.0 + b * b)
    }

    /// Levels allowed to run: all of them, except that an exploding schedule
    /// stops before the first level where c_n grows slower than the weights shrink.
    pub fn admissible_levels(&self, levels: &[u32], alpha: f64, b: f64) -> Result<Vec<u32>> {
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("levels must be strictly increasing".into()));
        }
        if !matches!(self.kind, ScheduleKind::Exploding(_)) {
            return Ok(levels.to_vec());
        }
        let mut out = Vec::new();
        for (i, &n) in levels.iter().enumerate() {
            if i > 0 {
                let prev = self.conductance_product(levels[i - 1], alpha, b);
                if self.conductance_product(n, alpha, b) >= prev {
                    log::warn!("schedule {} violates c_n w_n -> 0 at level {n}; stopping", self.id());
                    break;
                }
            }
            if i > 0 && self.c_at(n, alpha) <= self.c_at(levels[i - 1], alpha) {
                break;
            }
            out.push(n);
        }
        Ok(out)
    }
}

impl std::str::FromStr for RegimeSchedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (k, v) = s
            .split_once(':')
            .ok_or_else(|| Error::Parameter(format!("schedule '{s}' should look like const:1")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Parameter(format!("bad schedule constant in '{s}'")))?;
        let kind = match k.trim() {
            "const" => ScheduleKind::ConstantC0(v),
            "vanish" => ScheduleKind::Vanishing(v),
            "fade" => ScheduleKind::VanishingGeometric(v),
            "explode" => ScheduleKind::Exploding(v),
            _ => return Err(Error::Parameter(format!("unknown schedule kind '{k}'"))),
        };
        RegimeSchedule::new(kind)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub alpha: f64,
    pub b: f64,
    /// Step at level 0; level n uses h0 alpha^-2n, floored at MIN_STEP.
    pub h0: f64,
    /// Shell width in units of sqrt(h).
    pub shell_factor: f64,
    pub t_max: f64,
    /// Time at which survival is reported.
    pub t_probe: f64,
    /// Clock rate of the reflecting reference when the schedule is not constant.
    pub robin_c0: f64,
    pub x0: Vec2,
    pub paths: usize,
    pub seed: u64,
    /// Survival grid size (uniform on (0, t_max]).
    pub grid_points: usize,
    /// Bootstrap replicates behind each KS band.
    pub bootstrap: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            alpha: 3.0,
            b: crate::geometry::max_fiber_b(3.0),
            h0: 4e-3,
            shell_factor: 3.0,
            t_max: 0.05,
            t_probe: 0.05,
            robin_c0: 1.0,
            x0: Vec2::new(0.5, -(3f64.sqrt()) / 6.0),
            paths: 10_000,
            seed: 1,
            grid_points: 50,
            bootstrap: 200,
        }
    }
}

impl StudyConfig {
    pub fn step_at(&self, level: u32) -> f64 {
        (self.h0 * self.alpha.powi(-2 * level as i32)).max(MIN_STEP)
    }

    pub fn sim_config(&self, level: u32) -> SimConfig {
        let h = self.step_at(level);
        SimConfig {
            h,
            shell: self.shell_factor * h.sqrt(),
            t_max: self.t_max,
            delta_n: 0.0,
            c_n: 0.0,
            kill_mode: KillMode::AbsorbOuter,
            nu_eval: NuEval::SigmaSide,
            kappa_l: 1.0,
            bridge: true,
            leap: true,
            seed: self.seed,
            paths: self.paths,
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        let m = self.grid_points.max(1);
        (1..=m).map(|i| self.t_max * i as f64 / m as f64).collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_probe > 0.0 && self.t_probe <= self.t_max) {
            return Err(Error::Parameter(format!(
                "probe time {} outside (0, {}]",
                self.t_probe, self.t_max
            )));
        }
        if !(self.h0 > 0.0 && self.shell_factor > 0.0 && self.robin_c0 >= 0.0) {
            return Err(Error::Parameter("h0, shell factor must be positive and robin_c0 non-negative".into()));
        }
        Ok(())
    }
}

/// Lifetimes with paths alive at the horizon mapped to +inf.
fn lifetimes(fs: &[PathFunctionals]) -> Vec<f64> {
    fs.iter()
        .map(|f| {
            if f.cause == Termination::HorizonReached {
                f64::INFINITY
            } else {
                f.lifetime
            }
        })
        .collect()
}

/// Reference lifetimes at one level.
#[derive(Debug, Clone)]
pub struct LevelReferences {
    pub level: u32,
    pub dirichlet: Vec<f64>,
    pub robin: Vec<f64>,
    pub robin_c0: f64,
}

pub fn level_references(study: &StudyConfig, domain: &DomainModel, robin_c0: f64) -> Result<LevelReferences> {
    let base = study.sim_config(domain.level());
    let d = simulate(
        domain,
        study.x0,
        &SimConfig {
            kill_mode: KillMode::AbsorbInterface,
            ..base.clone()
        },
    )?;
    let r = simulate(
        domain,
        study.x0,
        &SimConfig {
            kill_mode: KillMode::ReflectInterface,
            c_n: robin_c0,
            ..base
        },
    )?;
    Ok(LevelReferences {
        level: domain.level(),
        dirichlet: lifetimes(&d),
        robin: lifetimes(&r),
        robin_c0,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    pub level: u32,
    pub schedule: String,
    pub c_n: f64,
    pub h: f64,
    pub shell: f64,
    pub mean_lifetime: Estimate,
    pub survival_at_probe: f64,
    pub survival_ci: (f64, f64),
    pub killed_fraction: f64,
    pub absorbed_fraction: f64,
    /// Killed with less than one step of occupation in the fibers.
    pub killed_shallow_fraction: f64,
    pub ks_dirichlet: f64,
    pub ks_robin: f64,
    pub ks_neumann: f64,
    pub ks_critical: f64,
    /// Bootstrap 95% bands of the three distances.
    pub ks_dirichlet_band: (f64, f64),
    pub ks_robin_band: (f64, f64),
    pub ks_neumann_band: (f64, f64),
    pub curve: SurvivalCurve,
    pub elapsed: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultTable {
    pub schedule: String,
    pub t_probe: f64,
    pub t_max: f64,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new(schedule: String, t_probe: f64, t_max: f64) -> Self {
        ResultTable {
            schedule,
            t_probe,
            t_max,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: ResultRow) -> Result<()> {
        if self.rows.iter().any(|r| r.level == row.level && r.schedule == row.schedule) {
            return Err(Error::Integrity(format!(
                "duplicate row for level {} and schedule {}",
                row.level, row.schedule
            )));
        }
        self.rows.push(row);
        Ok(())
    }
}

/// One schedule at one level, against precomputed references.
pub fn run_level(
    schedule: &RegimeSchedule,
    study: &StudyConfig,
    domain: &DomainModel,
    refs: &LevelReferences,
) -> Result<ResultRow> {
    let level = domain.level();
    let c_n = schedule.c_at(level, study.alpha);
    let cfg = SimConfig {
        kill_mode: KillMode::ElasticClock,
        c_n,
        ..study.sim_config(level)
    };
    let start = std::time::Instant::now();
    let fs = simulate(domain, study.x0, &cfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    let n = fs.len();
    let life = lifetimes(&fs);
    let finite: Vec<f64> = fs.iter().map(|f| f.lifetime).collect();
    let alive_probe = life.iter().filter(|&&l| l > study.t_probe).count();
    let killed = fs.iter().filter(|f| f.cause == Termination::Killed).count();
    let absorbed = fs.iter().filter(|f| f.cause == Termination::Absorbed).count();
    let shallow = fs
        .iter()
        .filter(|f| f.cause == Termination::Killed && f.gamma_sigma < cfg.h)
        .count();
    let pairs: Vec<(f64, bool)> = fs
        .iter()
        .map(|f| (f.lifetime, f.cause == Termination::HorizonReached))
        .collect();
    let curve = survival_from_lifetimes(&pairs, &study.grid(), c_n, KillMode::ElasticClock)?;
    let t_max = study.t_max;
    let band = |r: &[f64], salt: u64| {
        bootstrap_95(study.bootstrap, study.seed ^ (salt << 32) ^ level as u64, |g| {
            ks_censored(&resample(&life, g), &resample(r, g), t_max)
        })
    };
    let ks_dirichlet_band = band(&refs.dirichlet, 1);
    let ks_robin_band = band(&refs.robin, 2);
    let ks_neumann_band = bootstrap_95(study.bootstrap, study.seed ^ (3 << 32) ^ level as u64, |g| {
        ks_to_immortal(&resample(&life, g), t_max)
    });
    Ok(ResultRow {
        level,
        schedule: schedule.id(),
        c_n,
        h: cfg.h,
        shell: cfg.shell,
        mean_lifetime: Estimate::from_samples(&finite, elapsed),
        survival_at_probe: alive_probe as f64 / n as f64,
        survival_ci: wilson(alive_probe, n, Z95),
        killed_fraction: killed as f64 / n as f64,
        absorbed_fraction: absorbed as f64 / n as f64,
        killed_shallow_fraction: if killed == 0 { 0.0 } else { shallow as f64 / killed as f64 },
        ks_dirichlet: ks_censored(&life, &refs.dirichlet, study.t_max),
        ks_robin: ks_censored(&life, &refs.robin, study.t_max),
        ks_neumann: ks_to_immortal(&life, study.t_max),
        ks_critical: ks_critical_95(n, refs.dirichlet.len()),
        ks_dirichlet_band,
        ks_robin_band,
        ks_neumann_band,
        curve,
        elapsed,
    })
}

/// Runs several schedules over the levels, sharing the references of each level.
/// The reflecting reference uses c0 for a constant schedule and `study.robin_c0` otherwise.
pub fn run_regime_studies(schedules: &[RegimeSchedule], levels: &[u32], study: &StudyConfig) -> Result<Vec<ResultTable>> {
    study.validate()?;
    let allowed: Vec<Vec<u32>> = schedules
        .iter()
        .map(|s| s.admissible_levels(levels, study.alpha, study.b))
        .collect::<Result<_>>()?;
    let mut tables: Vec<ResultTable> = schedules
        .iter()
        .map(|s| ResultTable::new(s.id(), study.t_probe, study.t_max))
        .collect();
    for &n in levels {
        let domain = DomainModel::build(study.alpha, n, study.b)?;
        let mut cache: Vec<LevelReferences> = Vec::new();
        for (i, s) in schedules.iter().enumerate() {
            if !allowed[i].contains(&n) {
                continue;
            }
            let c0 = match s.kind {
                ScheduleKind::ConstantC0(c) => c,
                _ => study.robin_c0,
            };
            let idx = match cache.iter().position(|r| r.robin_c0 == c0) {
                Some(j) => j,
                None => {
                    log::info!("level {n}: simulating references (robin c0 = {c0})");
                    cache.push(level_references(study, &domain, c0)?);
                    cache.len() - 1
                }
            };
            log::info!("level {n}: schedule {}", s.id());
            let row = run_level(s, study, &domain, &cache[idx])?;
            tables[i].push(row)?;
        }
    }
    Ok(tables)
}

pub fn run_regime_study(schedule: &RegimeSchedule, levels: &[u32], study: &StudyConfig) -> Result<ResultTable> {
    Ok(run_regime_studies(std::slice::from_ref(schedule), levels, study)?.remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitLabel {
    Robin,
    Neumann,
    Dirichlet,
    Inconclusive,
}

impl std::fmt::Display for LimitLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LimitLabel::Robin => "Robin",
            LimitLabel::Neumann => "Neumann",
            LimitLabel::Dirichlet => "Dirichlet",
            LimitLabel::Inconclusive => "Inconclusive",
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClassifyThresholds {
    /// Extra separation demanded between the band of the nearest reference
    /// and the bands of the others.
    pub margin: f64,
    pub min_levels: usize,
}

impl Default for ClassifyThresholds {
    fn default() -> Self {
        ClassifyThresholds {
            margin: 0.0,
            min_levels: 3,
        }
    }
}

/// Nearest reference at the deepest level. The call stands only when the
/// upper end of its bootstrap band, plus the margin, lies below the lower end
/// of every other band; otherwise it is Inconclusive.
pub fn classify_limit(table: &ResultTable, th: &ClassifyThresholds) -> LimitLabel {
    if table.rows.len() < th.min_levels {
        return LimitLabel::Inconclusive;
    }
    let Some(last) = table.rows.iter().max_by_key(|r| r.level) else {
        return LimitLabel::Inconclusive;
    };
    let mut d = [
        (last.ks_robin, last.ks_robin_band, LimitLabel::Robin),
        (last.ks_neumann, last.ks_neumann_band, LimitLabel::Neumann),
        (last.ks_dirichlet, last.ks_dirichlet_band, LimitLabel::Dirichlet),
    ];
    d.sort_by(|a, b| a.0.total_cmp(&b.0));
    let upper = d[0].1 .1.max(d[0].0) + th.margin;
    if d[1..].iter().all(|o| o.1 .0.min(o.0) > upper) {
        d[0].2
    } else {
        LimitLabel::Inconclusive
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RrRow {
    pub level: u32,
    pub quadrature: f64,
    pub reference: f64,
    pub error: f64,
}

/// Level-n arclength quadrature against the self-similar reference at `reference_level`.
pub fn check_prop_rr(
    alpha: f64,
    b: f64,
    g: &(dyn Fn(Vec2) -> f64 + Sync),
    levels: &[u32],
    reference_level: u32,
) -> Result<Vec<RrRow>> {
    check_alpha(alpha)?;
    let reference = selfsimilar_quadrature(alpha, reference_level, &g)?;
    levels
        .iter()
        .map(|&n| {
            let d = DomainModel::build(alpha, n, b)?;
            let q = d.arclength_quadrature(g);
            Ok(RrRow {
                level: n,
                quadrature: q,
                reference,
                error: (q - reference).abs(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentReport {
    /// (s, t, E|L_t - L_s|^2, stderr)
    pub pairs: Vec<(f64, f64, f64, f64)>,
    /// Least-squares C in m = C |t - s|^2.
    pub c_fit: f64,
    /// Slope of log m against log |t - s|.
    pub exponent: f64,
    /// Pairs where m exceeds C |t - s|^2 by more than three standard errors.
    pub violations: usize,
}

/// Second moments of local-time increments from traces sampled on a common
/// time grid (`traces[path][k] = (t_k, L(t_k))`). None when fewer than two
/// traces or grid points are available.
pub fn moment_diagnostics(traces: &[Vec<(f64, f64)>]) -> Option<MomentReport> {
    let len = traces.iter().map(|t| t.len()).min().unwrap_or(0);
    if traces.len() < 2 || len < 2 {
        log::warn!("moment diagnostics skipped: not enough traces");
        return None;
    }
    let times: Vec<f64> = traces[0][..len].iter().map(|r| r.0).collect();
    let mut pairs = Vec::new();
    for i in 0..len {
        for j in i..len {
            let sq: Vec<f64> = traces
                .iter()
                .map(|tr| {
                    let d = tr[j].1 - tr[i].1;
                    d * d
                })
                .collect();
            let e = Estimate::from_samples(&sq, 0.0);
            pairs.push((times[i], times[j], e.mean, e.stderr));
        }
    }
    let (num, den) = pairs.iter().fold((0.0, 0.0), |(n, d), &(s, t, m, _)| {
        let dt2 = (t - s) * (t - s);
        (n + m * dt2, d + dt2 * dt2)
    });
    let c_fit = if den > 0.0 { num / den } else { 0.0 };
    let logs: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|&&(s, t, m, _)| t > s && m > 0.0)
        .map(|&(s, t, m, _)| ((t - s).ln(), m.ln()))
        .collect();
    let exponent = if logs.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = logs.into_iter().unzip();
        linear_fit(&x, &y).0
    } else {
        f64::NAN
    };
    let violations = pairs
        .iter()
        .filter(|&&(s, t, m, se)| m - 3.0 * se > c_fit * (t - s) * (t - s))
        .count();
    Some(MomentReport {
        pairs,
        c_fit,
        exponent,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::max_fiber_b;

    fn row(level: u32, d: f64, r: f64, nm: f64) -> ResultRow {
        ResultRow {
            level,
            schedule: "x".into(),
            c_n: 1.0,
            h: 1e-4,
            shell: 0.03,
            mean_lifetime: Estimate::from_samples(&[1.0], 0.0),
            survival_at_probe: 1.0 - nm,
            survival_ci: (0.0, 1.0),
            killed_fraction: 0.0,
            absorbed_fraction: 0.0,
            killed_shallow_fraction: 0.0,
            ks_dirichlet: d,
            ks_robin: r,
            ks_neumann: nm,
            ks_critical: 0.02,
            ks_dirichlet_band: (d - 0.01, d + 0.01),
            ks_robin_band: (r - 0.01, r + 0.01),
            ks_neumann_band: (nm - 0.01, nm + 0.01),
            curve: survival_from_lifetimes(&[], &[1.0], 1.0, KillMode::ElasticClock).unwrap(),
            elapsed: 0.0,
        }
    }

    fn table(rows: Vec<ResultRow>) -> ResultTable {
        let mut t = ResultTable::new("x".into(), 0.05, 0.05);
        for r in rows {
            t.push(r).unwrap();
        }
        t
    }

    #[test]
    fn immortal_table_is_neumann() {
        let t = table((2..=4).map(|n| row(n, 0.6, 0.2, 0.0)).collect());
        assert_eq!(classify_limit(&t, &ClassifyThresholds::default()), LimitLabel::Neumann);
    }

    #[test]
    fn dirichlet_copy_is_dirichlet() {
        let t = table((2..=4).map(|n| row(n, 0.0, 0.4, 0.6)).collect());
        assert_eq!(classify_limit(&t, &ClassifyThresholds::default()), LimitLabel::Dirichlet);
    }

    #[test]
    fn close_call_is_inconclusive() {
        let t = table((2..=4).map(|n| row(n, 0.5, 0.01, 0.02)).collect());
        assert_eq!(classify_limit(&t, &ClassifyThresholds::default()), LimitLabel::Inconclusive);
        let short = table(vec![row(2, 0.0, 0.5, 0.5)]);
        assert_eq!(classify_limit(&short, &ClassifyThresholds::default()), LimitLabel::Inconclusive);
    }

    #[test]
    fn duplicate_rows_are_rejected() {
        let mut t = table(vec![row(2, 0.0, 0.0, 0.0)]);
        assert!(t.push(row(2, 0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn schedules_parse_and_scale() {
        let s: RegimeSchedule = "explode:10".parse().unwrap();
        assert!((s.c_at(2, 3.0) - 30.0).abs() < 1e-12);
        let v: RegimeSchedule = "vanish:1".parse().unwrap();
        assert_eq!(v.c_at(4, 3.0), 0.25);
        let f: RegimeSchedule = "fade:9".parse().unwrap();
        assert!((f.c_at(2, 3.0) - 1.0).abs() < 1e-15);
        assert_eq!(f.id(), "fade:9");
        assert!("const:-1".parse::<RegimeSchedule>().is_err());
        assert!("grow:1".parse::<RegimeSchedule>().is_err());
        assert_eq!(s.id(), "explode:10");
    }

    #[test]
    fn exploding_schedule_meets_weight_constraint() {
        let b = max_fiber_b(3.0);
        let s: RegimeSchedule = "explode:10".parse().unwrap();
        assert_eq!(s.admissible_levels(&[2, 3, 4, 5], 3.0, b).unwrap(), vec![2, 3, 4, 5]);
        // growth alpha^(n/2) against weights alpha^-n: the product still shrinks at alpha = 3.9
        assert_eq!(s.admissible_levels(&[1, 2], 3.9, 0.1).unwrap(), vec![1, 2]);
        assert!(s.admissible_levels(&[3, 2], 3.0, b).is_err());
    }

    #[test]
    fn constant_integrand_is_exact_at_every_level() {
        let b = max_fiber_b(3.0);
        let one = |_: Vec2| 1.0;
        for r in check_prop_rr(3.0, b, &one, &[1, 2, 3, 4], 8).unwrap() {
            assert_eq!(r.error, 0.0);
            assert_eq!(r.quadrature, 3.0);
        }
        let zero = |_: Vec2| 0.0;
        assert!(check_prop_rr(3.0, b, &zero, &[2], 6).unwrap().iter().all(|r| r.quadrature == 0.0));
    }

    #[test]
    fn moments_vanish_on_the_diagonal() {
        let traces: Vec<Vec<(f64, f64)>> = (0..10)
            .map(|p| (0..5).map(|k| (k as f64 * 0.1, (p as f64 + 1.0) * (k as f64 * 0.1))).collect())
            .collect();
        let rep = moment_diagnostics(&traces).unwrap();
        for &(s, t, m, _) in &rep.pairs {
            if s == t {
                assert_eq!(m, 0.0);
            }
        }
        // linear paths: increments are exactly quadratic in |t - s|
        assert!((rep.exponent - 2.0).abs() < 1e-9);
        assert_eq!(rep.violations, 0);
        assert!(moment_diagnostics(&traces[..1]).is_none());
    }
}
