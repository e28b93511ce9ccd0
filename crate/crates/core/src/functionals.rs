//! Monte Carlo estimators built on the walker: discounted path integrals,
//! Robin and Dirichlet proxies, resolvents, survival curves and Laplace
//! transforms of the local time.

use crate::diffusion::{run_paths, KillMode, Medium, PathFunctionals, PathObserver, Side, SimConfig, Termination};
use crate::error::{Error, Result};
use crate::stats::{wilson, Estimate, Z95};
use serde::{Deserialize, Serialize};

/// Fraction of discarded paths above which an estimate is refused.
pub const MAX_DISCARD_FRACTION: f64 = 1e-3;
/// Remaining weight exp(-c L) below which a Robin path is stopped when there is no discount.
pub const ROBIN_WEIGHT_FLOOR: f64 = 1e-6;

/// Accumulates sum_k exp(-delta t_k - c L(t_k)) f(X_{t_k}) h over the steps.
struct DiscountedIntegral<'f, P> {
    f: &'f (dyn Fn(P) -> f64 + Sync),
    delta: f64,
    c: f64,
    h: f64,
    stop_below: f64,
    sum: f64,
    bad: bool,
    truncated: bool,
}

impl<P: Copy> PathObserver<P> for DiscountedIntegral<'_, P> {
    #[inline]
    fn observe(&mut self, t: f64, pos: P, _side: Side, f: &PathFunctionals) -> bool {
        let w = (-self.delta * t - self.c * f.l_sym).exp();
        if w < self.stop_below {
            self.truncated = true;
            return false;
        }
        let v = (self.f)(pos);
        if !v.is_finite() {
            self.bad = true;
            return false;
        }
        self.sum += w * v * self.h;
        true
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PathIntegral {
    pub estimate: Estimate,
    /// Paths dropped because f was not finite somewhere along them.
    pub discarded: usize,
    /// Paths stopped by the weight floor.
    pub truncated: usize,
    /// Paths still running at the horizon.
    pub at_horizon: usize,
    /// Bound on the part of the integral beyond the horizon, when one is available.
    pub tail_bound: Option<f64>,
}

fn integrate<M: Medium>(
    medium: &M,
    x0: M::P,
    f: &(dyn Fn(M::P) -> f64 + Sync),
    delta: f64,
    c: f64,
    stop_below: f64,
    cfg: &SimConfig,
) -> Result<PathIntegral> {
    let start = std::time::Instant::now();
    let runs = run_paths(medium, x0, cfg, |_| DiscountedIntegral {
        f,
        delta,
        c,
        h: cfg.h,
        stop_below,
        sum: 0.0,
        bad: false,
        truncated: false,
    })?;
    let discarded = runs.iter().filter(|(_, o)| o.bad).count();
    if discarded as f64 > MAX_DISCARD_FRACTION * runs.len() as f64 {
        return Err(Error::Integrity(format!(
            "integrand was not finite on {discarded} of {} paths",
            runs.len()
        )));
    }
    if discarded > 0 {
        log::warn!("discarded {discarded} paths with a non-finite integrand");
    }
    let sums: Vec<f64> = runs.iter().filter(|(_, o)| !o.bad).map(|(_, o)| o.sum).collect();
    Ok(PathIntegral {
        estimate: Estimate::from_samples(&sums, start.elapsed().as_secs_f64()),
        discarded,
        truncated: runs.iter().filter(|(_, o)| o.truncated).count(),
        at_horizon: runs.iter().filter(|(p, _)| p.cause == Termination::HorizonReached).count(),
        tail_bound: None,
    })
}

/// E int_0^lifetime exp(-delta_n t) f(X_t) dt with skew transmission and
/// absorption at the outer boundary.
pub fn estimate_u_n<M: Medium>(
    medium: &M,
    x0: M::P,
    f: &(dyn Fn(M::P) -> f64 + Sync),
    cfg: &SimConfig,
) -> Result<PathIntegral> {
    let cfg = SimConfig {
        kill_mode: KillMode::AbsorbOuter,
        ..cfg.clone()
    };
    integrate(medium, x0, f, cfg.delta_n, 0.0, 0.0, &cfg)
}

/// Resolvent R_lambda f: the discount is lambda + delta_n.
pub fn resolvent_estimate<M: Medium>(
    medium: &M,
    x0: M::P,
    f: &(dyn Fn(M::P) -> f64 + Sync),
    lambda: f64,
    cfg: &SimConfig,
) -> Result<PathIntegral> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!("resolvent parameter {lambda} must be positive")));
    }
    integrate(medium, x0, f, lambda + cfg.delta_n, 0.0, 0.0, cfg)
}

/// E int_0^inf exp(-delta0 t - c0 L_t) f(X_t) dt for Brownian motion reflected
/// at the interface, truncated at the horizon.
pub fn estimate_robin<M: Medium>(
    medium: &M,
    x0: M::P,
    f: &(dyn Fn(M::P) -> f64 + Sync),
    delta0: f64,
    c0: f64,
    sup_f: f64,
    cfg: &SimConfig,
) -> Result<PathIntegral> {
    if !(delta0 >= 0.0 && c0 >= 0.0) {
        return Err(Error::Parameter(format!("need delta0, c0 >= 0, got {delta0}, {c0}")));
    }
    if delta0 == 0.0 && c0 == 0.0 {
        return Err(Error::Parameter(
            "delta0 = c0 = 0: the reflected integral does not converge".into(),
        ));
    }
    let cfg = SimConfig {
        kill_mode: KillMode::ReflectInterface,
        c_n: 0.0,
        ..cfg.clone()
    };
    let floor = if delta0 == 0.0 { ROBIN_WEIGHT_FLOOR } else { 0.0 };
    let mut out = integrate(medium, x0, f, delta0, c0, floor, &cfg)?;
    if delta0 > 0.0 {
        out.tail_bound = Some((-delta0 * cfg.t_max).exp() / delta0 * sup_f.abs());
    }
    Ok(out)
}

/// E int_0^tau exp(-delta0 t) f(X_t) dt, tau the first contact with the interface.
pub fn estimate_dirichlet<M: Medium>(
    medium: &M,
    x0: M::P,
    f: &(dyn Fn(M::P) -> f64 + Sync),
    delta0: f64,
    cfg: &SimConfig,
) -> Result<PathIntegral> {
    if !(delta0 >= 0.0 && delta0.is_finite()) {
        return Err(Error::Parameter(format!("discount {delta0} must be non-negative")));
    }
    if let Some((d, _)) = medium.interface_gap(x0, cfg.shell) {
        if d < cfg.shell {
            log::warn!("start is within the shell of the boundary; paths stop immediately");
        }
    }
    let cfg = SimConfig {
        kill_mode: KillMode::AbsorbInterface,
        ..cfg.clone()
    };
    integrate(medium, x0, f, delta0, 0.0, 0.0, &cfg)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub n_paths: usize,
    pub c_n: f64,
    pub kill_mode: KillMode,
}

/// Empirical survival from lifetimes; paths reaching the horizon count as alive.
pub fn survival_from_lifetimes(
    lifetimes: &[(f64, bool)],
    times: &[f64],
    c_n: f64,
    kill_mode: KillMode,
) -> Result<SurvivalCurve> {
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Parameter("survival grid must be increasing".into()));
    }
    let n = lifetimes.len();
    let mut survival = Vec::with_capacity(times.len());
    let mut lower = Vec::with_capacity(times.len());
    let mut upper = Vec::with_capacity(times.len());
    for &t in times {
        let alive = lifetimes.iter().filter(|&&(l, horizon)| horizon || l > t).count();
        let (lo, hi) = wilson(alive, n, Z95);
        survival.push(if n == 0 { f64::NAN } else { alive as f64 / n as f64 });
        lower.push(lo);
        upper.push(hi);
    }
    Ok(SurvivalCurve {
        times: times.to_vec(),
        survival,
        lower,
        upper,
        n_paths: n,
        c_n,
        kill_mode,
    })
}

/// P(lifetime > t) on a time grid, with 95% Wilson intervals.
pub fn survival_curve<M: Medium>(medium: &M, x0: M::P, cfg: &SimConfig, times: &[f64]) -> Result<SurvivalCurve> {
    if let Some(&last) = times.last() {
        if last > cfg.t_max {
            return Err(Error::Parameter(format!(
                "survival grid reaches {last} beyond the horizon {}",
                cfg.t_max
            )));
        }
    }
    let fs = crate::diffusion::simulate(medium, x0, cfg)?;
    let lt: Vec<(f64, bool)> = fs
        .iter()
        .map(|f| (f.lifetime, f.cause == Termination::HorizonReached))
        .collect();
    survival_from_lifetimes(&lt, times, cfg.c_n, cfg.kill_mode)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaplaceLocalTime {
    pub c: Vec<f64>,
    pub estimates: Vec<Estimate>,
    /// Fraction of paths absorbed before t.
    pub absorbed_fraction: f64,
}

/// E exp(-c L_sym(t ^ lifetime)) for several c on the same paths; the clock is
/// disabled so that the local time is observed up to t.
pub fn laplace_local_time<M: Medium>(
    medium: &M,
    x0: M::P,
    t: f64,
    cs: &[f64],
    cfg: &SimConfig,
) -> Result<LaplaceLocalTime> {
    if !(t > 0.0 && t <= cfg.t_max) {
        return Err(Error::Parameter(format!("time {t} outside (0, {}]", cfg.t_max)));
    }
    let kill_mode = match cfg.kill_mode {
        KillMode::ElasticClock => KillMode::AbsorbOuter,
        m => m,
    };
    let run = SimConfig {
        t_max: t,
        kill_mode,
        c_n: if kill_mode == KillMode::ReflectInterface { 0.0 } else { cfg.c_n },
        ..cfg.clone()
    };
    let start = std::time::Instant::now();
    let fs = crate::diffusion::simulate(medium, x0, &run)?;
    let elapsed = start.elapsed().as_secs_f64();
    let absorbed = fs.iter().filter(|f| f.cause == Termination::Absorbed).count();
    let estimates = cs
        .iter()
        .map(|&c| {
            let v: Vec<f64> = fs.iter().map(|f| if c == 0.0 { 1.0 } else { (-c * f.l_sym).exp() }).collect();
            Estimate::from_samples(&v, elapsed)
        })
        .collect();
    Ok(LaplaceLocalTime {
        c: cs.to_vec(),
        estimates,
        absorbed_fraction: absorbed as f64 / fs.len().max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::NuEval;
    use crate::oracle::{IntervalModel, LeftBoundary, LineMedium};

    fn line_cfg(paths: usize) -> SimConfig {
        SimConfig {
            h: 1e-5,
            shell: 3.0 * 1e-5f64.sqrt(),
            t_max: 50.0,
            paths,
            seed: 3,
            nu_eval: NuEval::Fixed(0.5),
            ..SimConfig::default()
        }
    }

    fn interval() -> LineMedium {
        LineMedium::interval(&IntervalModel::new(0.06, 0.1, 0.5, LeftBoundary::ReflectAtZero).unwrap())
    }

    #[test]
    fn zero_integrand_gives_zero() {
        let m = interval();
        let zero = |_: f64| 0.0;
        let u = estimate_u_n(&m, 0.05, &zero, &line_cfg(50)).unwrap();
        assert_eq!(u.estimate.mean, 0.0);
        assert_eq!(u.estimate.stderr, 0.0);
        let r = estimate_robin(&m, 0.05, &zero, 1.0, 1.0, 0.0, &line_cfg(50)).unwrap();
        assert_eq!(r.estimate.mean, 0.0);
    }

    #[test]
    fn robin_rejects_non_integrable_case() {
        let one = |_: f64| 1.0;
        assert!(matches!(
            estimate_robin(&interval(), 0.05, &one, 0.0, 0.0, 1.0, &line_cfg(10)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn resolvent_rejects_non_positive_lambda() {
        let one = |_: f64| 1.0;
        assert!(resolvent_estimate(&interval(), 0.05, &one, 0.0, &line_cfg(10)).is_err());
    }

    #[test]
    fn non_finite_integrand_fails_the_run() {
        let bad = |x: f64| if x > 0.05 { f64::NAN } else { 1.0 };
        let r = estimate_u_n(&interval(), 0.05, &bad, &line_cfg(100));
        assert!(matches!(r, Err(Error::Integrity(_))));
    }

    #[test]
    fn survival_starts_at_one() {
        let lt = [(0.5, false), (2.0, true), (0.1, false)];
        let s = survival_from_lifetimes(&lt, &[0.0, 0.2, 1.0], 1.0, KillMode::ElasticClock).unwrap();
        assert_eq!(s.survival, vec![1.0, 2.0 / 3.0, 1.0 / 3.0]);
        assert!(survival_from_lifetimes(&lt, &[0.2, 0.1], 1.0, KillMode::ElasticClock).is_err());
    }

    #[test]
    fn laplace_at_zero_rate_is_one() {
        let cfg = SimConfig { t_max: 0.01, ..line_cfg(200) };
        let l = laplace_local_time(&LineMedium::free(0.0), 0.0, 0.01, &[0.0, 1.0, 3.0], &cfg).unwrap();
        assert_eq!(l.estimates[0].mean, 1.0);
        assert!(l.estimates[1].mean >= l.estimates[2].mean);
    }
}
