//! Exactly solvable interval model: skew Brownian motion on (0, r2) with a
//! skew point at r1, its elastic limit as the outer layer collapses, and a line
//! medium that runs the shared walker in one dimension.
//!
//! Time is normalized so that the generator is (1/2) d^2/dx^2; mean exit times
//! solve (1/2) m'' - delta m = -1.

use crate::diffusion::{
    run_paths, EdgeHit, EdgeKind, KillMode, Medium, NuEval, PathFunctionals, Side, SimConfig, Termination,
};
use crate::error::{Error, Result};
use crate::stats::Estimate;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LeftBoundary {
    /// m'(0) = 0.
    ReflectAtZero,
    /// m(0) = 0.
    ZeroAtOrigin,
}

impl std::str::FromStr for LeftBoundary {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "reflect" | "reflectatzero" => Ok(LeftBoundary::ReflectAtZero),
            "zero" | "zeroatorigin" => Ok(LeftBoundary::ZeroAtOrigin),
            _ => Err(Error::Parameter(format!("unknown left boundary '{s}'"))),
        }
    }
}

impl std::fmt::Display for LeftBoundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LeftBoundary::ReflectAtZero => "reflect",
            LeftBoundary::ZeroAtOrigin => "zero",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalModel {
    pub r1: f64,
    pub r2: f64,
    pub nu: f64,
    pub left: LeftBoundary,
}

impl IntervalModel {
    pub fn new(r1: f64, r2: f64, nu: f64, left: LeftBoundary) -> Result<Self> {
        let m = IntervalModel { r1, r2, nu, left };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r1 > 0.0 && self.r2 > self.r1 && self.r2.is_finite()) {
            return Err(Error::Parameter(format!(
                "need 0 < r1 < r2, got r1 = {}, r2 = {}",
                self.r1, self.r2
            )));
        }
        if !(0.0..=1.0).contains(&self.nu) {
            return Err(Error::Parameter(format!("nu = {} outside [0, 1]", self.nu)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleFlag {
    /// The fiber side cannot be reached from the inner side; the value only
    /// describes the piece where the point sits.
    OneSided,
    /// The expected time is infinite.
    NonIntegrable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    pub flag: Option<OracleFlag>,
}

/// Particular solution plus a two-function basis of (1/2) u'' - delta u = -1.
#[derive(Debug, Clone, Copy)]
struct Basis {
    delta: f64,
    k: f64,
}

impl Basis {
    fn new(delta: f64) -> Self {
        Basis {
            delta,
            k: (2.0 * delta).sqrt(),
        }
    }

    /// (particular, phi1, phi2) values at x.
    fn values(&self, x: f64) -> [f64; 3] {
        if self.delta == 0.0 {
            [-x * x, 1.0, x]
        } else {
            [1.0 / self.delta, (self.k * x).cosh(), (self.k * x).sinh()]
        }
    }

    fn slopes(&self, x: f64) -> [f64; 3] {
        if self.delta == 0.0 {
            [-2.0 * x, 0.0, 1.0]
        } else {
            [0.0, self.k * (self.k * x).sinh(), self.k * (self.k * x).cosh()]
        }
    }
}

/// Gaussian elimination with partial pivoting; None if singular.
fn solve_dense<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for col in 0..N {
        let piv = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-13 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            for k in col..N {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let mut s = b[row];
        for k in row + 1..N {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Coefficients (A1, B1, A2, B2) of the two pieces, or None if the system is singular.
fn interval_coefficients(m: &IntervalModel, delta: f64) -> Option<[f64; 4]> {
    let bs = Basis::new(delta);
    let (r1, r2, nu) = (m.r1, m.r2, m.nu);
    let v0 = bs.values(0.0);
    let s0 = bs.slopes(0.0);
    let v1 = bs.values(r1);
    let s1 = bs.slopes(r1);
    let v2 = bs.values(r2);
    let mut a = [[0.0; 4]; 4];
    let mut rhs = [0.0; 4];
    match m.left {
        LeftBoundary::ReflectAtZero => {
            a[0] = [s0[1], s0[2], 0.0, 0.0];
            rhs[0] = -s0[0];
        }
        LeftBoundary::ZeroAtOrigin => {
            a[0] = [v0[1], v0[2], 0.0, 0.0];
            rhs[0] = -v0[0];
        }
    }
    a[1] = [0.0, 0.0, v2[1], v2[2]];
    rhs[1] = -v2[0];
    a[2] = [v1[1], v1[2], -v1[1], -v1[2]];
    rhs[2] = 0.0;
    a[3] = [(1.0 - nu) * s1[1], (1.0 - nu) * s1[2], -nu * s1[1], -nu * s1[2]];
    rhs[3] = -((1.0 - nu) - nu) * s1[0];
    solve_dense(a, rhs)
}

fn eval_piece(bs: &Basis, c: (f64, f64), x: f64) -> f64 {
    let v = bs.values(x);
    v[0] + c.0 * v[1] + c.1 * v[2]
}

/// Expected discounted time to leave (0, r2) (or to reach r2 under reflection at 0):
/// solves (1/2) m'' - delta m = -1 piecewise with continuity and the flux
/// condition (1 - nu) m'(r1-) = nu m'(r1+).
pub fn mean_exit_discounted(x: f64, m: &IntervalModel, delta: f64) -> Result<OracleValue> {
    m.validate()?;
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Parameter(format!("discount {delta} must be non-negative")));
    }
    if !(0.0..=m.r2).contains(&x) {
        return Err(Error::Parameter(format!("x = {x} outside [0, {}]", m.r2)));
    }
    let bs = Basis::new(delta);
    let unreachable = m.nu == 0.0 && x > m.r1;
    match interval_coefficients(m, delta) {
        Some(c) => {
            let value = if x <= m.r1 {
                eval_piece(&bs, (c[0], c[1]), x)
            } else {
                eval_piece(&bs, (c[2], c[3]), x)
            };
            Ok(OracleValue {
                value,
                flag: unreachable.then_some(OracleFlag::OneSided),
            })
        }
        None if unreachable => {
            // time to leave (r1, r2) with both ends absorbing
            let one = IntervalModel {
                r1: m.r1,
                r2: m.r2,
                nu: 0.5,
                left: LeftBoundary::ZeroAtOrigin,
            };
            let v = two_point_dirichlet(x - m.r1, one.r2 - one.r1, delta);
            Ok(OracleValue {
                value: v,
                flag: Some(OracleFlag::OneSided),
            })
        }
        None => Ok(OracleValue {
            value: f64::INFINITY,
            flag: Some(OracleFlag::NonIntegrable),
        }),
    }
}

/// Solution of (1/2) u'' - delta u = -1 on (0, len), u = 0 at both ends.
fn two_point_dirichlet(y: f64, len: f64, delta: f64) -> f64 {
    if delta == 0.0 {
        y * (len - y)
    } else {
        let k = (2.0 * delta).sqrt();
        (1.0 - ((k * (y - len / 2.0)).cosh() / (k * len / 2.0).cosh())) / delta
    }
}

/// Undiscounted mean exit time of the interval model.
pub fn mean_exit_closed_form(x: f64, m: &IntervalModel) -> Result<OracleValue> {
    mean_exit_discounted(x, m, 0.0)
}

/// Limit as the outer layer collapses: (1/2) v'' - delta v = -1 on (0, r1) with
/// v(r1) = 0 when c = inf and v'(r1) = -c v(r1) otherwise.
pub fn elastic_limit_discounted(x: f64, r1: f64, c: f64, left: LeftBoundary, delta: f64) -> Result<OracleValue> {
    if c.is_nan() || c < 0.0 {
        return Err(Error::Parameter(format!("elastic coefficient {c} must be in [0, inf]")));
    }
    if !(r1 > 0.0) || !(0.0..=r1).contains(&x) {
        return Err(Error::Parameter(format!("need 0 <= x <= r1 with r1 > 0, got x = {x}, r1 = {r1}")));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Parameter(format!("discount {delta} must be non-negative")));
    }
    let bs = Basis::new(delta);
    let v0 = bs.values(0.0);
    let s0 = bs.slopes(0.0);
    let v1 = bs.values(r1);
    let s1 = bs.slopes(r1);
    let mut a = [[0.0; 2]; 2];
    let mut rhs = [0.0; 2];
    match left {
        LeftBoundary::ReflectAtZero => {
            a[0] = [s0[1], s0[2]];
            rhs[0] = -s0[0];
        }
        LeftBoundary::ZeroAtOrigin => {
            a[0] = [v0[1], v0[2]];
            rhs[0] = -v0[0];
        }
    }
    if c.is_infinite() {
        a[1] = [v1[1], v1[2]];
        rhs[1] = -v1[0];
    } else {
        a[1] = [s1[1] + c * v1[1], s1[2] + c * v1[2]];
        rhs[1] = -(s1[0] + c * v1[0]);
    }
    match solve_dense(a, rhs) {
        Some(co) => Ok(OracleValue {
            value: eval_piece(&bs, (co[0], co[1]), x),
            flag: None,
        }),
        None => Ok(OracleValue {
            value: f64::INFINITY,
            flag: Some(OracleFlag::NonIntegrable),
        }),
    }
}

pub fn elastic_limit_solution(x: f64, r1: f64, c: f64, left: LeftBoundary) -> Result<OracleValue> {
    elastic_limit_discounted(x, r1, c, left, 0.0)
}

/// Finite-difference solution on a grid with a node at r1.
#[derive(Debug, Clone)]
pub struct FdSolution {
    pub x: Vec<f64>,
    pub m: Vec<f64>,
}

/// Brute-force tridiagonal solve with `nodes` grid points: centred second
/// differences, a finite-volume flux row at r1 weighted by (1 - nu, nu).
pub fn fd_mean_exit(model: &IntervalModel, delta: f64, nodes: usize) -> Result<FdSolution> {
    model.validate()?;
    if nodes < 5 {
        return Err(Error::Parameter("need at least 5 nodes".into()));
    }
    let (r1, r2, nu) = (model.r1, model.r2, model.nu);
    let n1 = (((nodes - 1) as f64 * r1 / r2).round() as usize).clamp(2, nodes - 3);
    let n2 = nodes - 1 - n1;
    let d1 = r1 / n1 as f64;
    let d2 = (r2 - r1) / n2 as f64;
    let n = nodes;
    let x: Vec<f64> = (0..n)
        .map(|i| if i <= n1 { i as f64 * d1 } else { r1 + (i - n1) as f64 * d2 })
        .collect();
    // rows: lower[i] m[i-1] + diag[i] m[i] + upper[i] m[i+1] = rhs[i]
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    match model.left {
        LeftBoundary::ReflectAtZero => {
            // ghost node m[-1] = m[1]
            diag[0] = -1.0 / (d1 * d1) - delta;
            upper[0] = 1.0 / (d1 * d1);
            rhs[0] = -1.0;
        }
        LeftBoundary::ZeroAtOrigin => {
            diag[0] = 1.0;
            rhs[0] = 0.0;
        }
    }
    for i in 1..n - 1 {
        if i < n1 || i > n1 {
            let d = if i < n1 { d1 } else { d2 };
            lower[i] = 0.5 / (d * d);
            diag[i] = -1.0 / (d * d) - delta;
            upper[i] = 0.5 / (d * d);
            rhs[i] = -1.0;
        } else {
            let mass = 0.5 * ((1.0 - nu) * d1 + nu * d2);
            lower[i] = 0.5 * (1.0 - nu) / d1;
            upper[i] = 0.5 * nu / d2;
            diag[i] = -lower[i] - upper[i] - delta * mass;
            rhs[i] = -mass;
        }
    }
    diag[n - 1] = 1.0;
    rhs[n - 1] = 0.0;
    let m = thomas(&lower, &diag, &upper, &rhs)
        .ok_or_else(|| Error::Parameter("finite-difference system is singular".into()))?;
    Ok(FdSolution { x, m })
}

fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    if b[0] == 0.0 {
        return None;
    }
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let den = b[i] - a[i] * cp[i - 1];
        if den == 0.0 || !den.is_finite() {
            return None;
        }
        cp[i] = c[i] / den;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Largest relative gap between the closed form and the finite-difference
/// solution over the grid nodes, relative to the largest value.
pub fn closed_form_vs_fd(model: &IntervalModel, delta: f64, nodes: usize) -> Result<f64> {
    let fd = fd_mean_exit(model, delta, nodes)?;
    let scale = fd.m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let mut worst: f64 = 0.0;
    for (x, v) in fd.x.iter().zip(&fd.m) {
        let c = mean_exit_discounted(*x, model, delta)?.value;
        worst = worst.max((c - v).abs() / scale);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub nu: f64,
    pub sup_error: f64,
}

/// Sup-norm distance on [0, r1] between the interval solution with outer
/// layer (eps_k, nu_k) and the elastic limit with coefficient c.
pub fn convergence_sweep(
    c: f64,
    r1: f64,
    left: LeftBoundary,
    delta: f64,
    schedule: &[(f64, f64)],
) -> Result<Vec<SweepRow>> {
    for w in schedule.windows(2) {
        if !(w[1].0 < w[0].0) {
            return Err(Error::Parameter("layer widths must decrease".into()));
        }
    }
    let grid: Vec<f64> = (0..=200).map(|i| r1 * i as f64 / 200.0).collect();
    let limit: Vec<f64> = grid
        .iter()
        .map(|&x| elastic_limit_discounted(x, r1, c, left, delta).map(|v| v.value))
        .collect::<Result<_>>()?;
    schedule
        .iter()
        .map(|&(eps, nu)| {
            if !(nu > 0.0 && nu < 1.0) {
                return Err(Error::Parameter(format!("schedule nu = {nu} outside (0, 1)")));
            }
            if !(eps > 0.0) {
                return Err(Error::Parameter(format!("schedule eps = {eps} must be positive")));
            }
            let m = IntervalModel::new(r1, r1 + eps, nu, left)?;
            let mut sup: f64 = 0.0;
            for (x, l) in grid.iter().zip(&limit) {
                let v = mean_exit_discounted(*x, &m, delta)?.value;
                sup = sup.max((v - l).abs());
            }
            Ok(SweepRow { eps, nu, sup_error: sup })
        })
        .collect()
}

/// Layer widths eps0 / 2^k, k = 0..steps.
pub fn halving(eps0: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| eps0 / 2f64.powi(k as i32)).collect()
}

/// nu with nu / ((1 - nu) eps) = c exactly.
pub fn fixed_c_schedule(c: f64, eps: &[f64]) -> Vec<(f64, f64)> {
    eps.iter().map(|&e| (e, c * e / (1.0 + c * e))).collect()
}

/// nu = eps^power: power < 1 drives the ratio to infinity, power > 1 to zero.
pub fn power_schedule(power: f64, eps: &[f64]) -> Vec<(f64, f64)> {
    eps.iter().map(|&e| (e, e.powf(power))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WallKind {
    Reflect,
    Absorb,
}

/// The real line with a skew point and optional walls on either side.
#[derive(Debug, Clone, Copy)]
pub struct LineMedium {
    pub interface: f64,
    pub left: Option<(f64, WallKind)>,
    pub right: Option<(f64, WallKind)>,
}

impl LineMedium {
    pub fn free(interface: f64) -> Self {
        LineMedium {
            interface,
            left: None,
            right: None,
        }
    }

    pub fn interval(m: &IntervalModel) -> Self {
        let left = match m.left {
            LeftBoundary::ReflectAtZero => WallKind::Reflect,
            LeftBoundary::ZeroAtOrigin => WallKind::Absorb,
        };
        LineMedium {
            interface: m.r1,
            left: Some((0.0, left)),
            right: Some((m.r2, WallKind::Absorb)),
        }
    }

    fn wall_position(&self, edge: usize) -> f64 {
        match edge {
            0 => self.interface,
            1 => self.left.map_or(f64::NEG_INFINITY, |w| w.0),
            _ => self.right.map_or(f64::INFINITY, |w| w.0),
        }
    }

    fn wall_kind(w: WallKind) -> EdgeKind {
        match w {
            WallKind::Reflect => EdgeKind::Wall,
            WallKind::Absorb => EdgeKind::Outer,
        }
    }
}

impl Medium for LineMedium {
    type P = f64;

    fn local_time_scale(&self) -> f64 {
        1.0
    }

    fn locate(&self, p: f64) -> Result<Side> {
        let lo = self.left.map_or(f64::NEG_INFINITY, |w| w.0);
        let hi = self.right.map_or(f64::INFINITY, |w| w.0);
        if !(lo..=hi).contains(&p) {
            return Err(Error::Domain(format!("start {p} outside [{lo}, {hi}]")));
        }
        Ok(if p <= self.interface { Side::Omega } else { Side::Sigma })
    }

    fn on_outer(&self, p: f64) -> bool {
        let at = |w: Option<(f64, WallKind)>| matches!(w, Some((x, WallKind::Absorb)) if x == p);
        at(self.left) || at(self.right)
    }

    #[inline]
    fn first_hit(&self, a: f64, b: f64, skip: Option<usize>) -> Option<EdgeHit> {
        if a == b {
            return None;
        }
        let mut best: Option<EdgeHit> = None;
        let mut offer = |t: f64, edge: usize, kind: EdgeKind| {
            if best.is_none_or(|h| t < h.t) {
                best = Some(EdgeHit { t, edge, kind });
            }
        };
        let r = self.interface;
        if skip != Some(0) && ((a - r) * (b - r) < 0.0 || (a == r && b != r)) {
            offer((r - a) / (b - a), 0, EdgeKind::Interface);
        }
        if let Some((x, w)) = self.left {
            if skip != Some(1) && b < x && a >= x {
                offer((x - a) / (b - a), 1, Self::wall_kind(w));
            }
        }
        if let Some((x, w)) = self.right {
            if skip != Some(2) && b > x && a <= x {
                offer((x - a) / (b - a), 2, Self::wall_kind(w));
            }
        }
        best
    }

    #[inline]
    fn mirror(&self, edge: usize, p: f64) -> f64 {
        2.0 * self.wall_position(edge) - p
    }

    #[inline]
    fn fiber_side_of(&self, _edge: usize, p: f64) -> bool {
        p > self.interface
    }

    fn interface_weight(&self, _edge: usize, _p: f64) -> f64 {
        1.0
    }

    #[inline]
    fn interface_gap(&self, p: f64, cap: f64) -> Option<(f64, usize)> {
        let d = (p - self.interface).abs();
        (d <= cap).then_some((d, 0))
    }

    #[inline]
    fn outer_gap(&self, p: f64, side: Side, cap: f64) -> Option<f64> {
        let d = match side {
            Side::Omega => match self.left {
                Some((x, WallKind::Absorb)) => p - x,
                _ => return None,
            },
            Side::Sigma => match self.right {
                Some((x, WallKind::Absorb)) => x - p,
                _ => return None,
            },
        };
        (d <= cap).then_some(d.max(0.0))
    }

    #[inline]
    fn clearance(&self, p: f64, cap: f64) -> f64 {
        let mut d = (p - self.interface).abs();
        if let Some((x, _)) = self.left {
            d = d.min(p - x);
        }
        if let Some((x, _)) = self.right {
            d = d.min(x - p);
        }
        d.min(cap)
    }
}

/// Monte Carlo counterpart of the interval model: mean exit time and local
/// time at r1 accumulated up to exit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IntervalMc {
    pub exit_time: Estimate,
    pub local_time: Estimate,
    /// Paths still running at the horizon (their truncated times are included).
    pub unfinished: usize,
}

/// Simulates the interval model with the shared walker.
pub fn simulate_1d_skew(x0: f64, m: &IntervalModel, base: &SimConfig) -> Result<IntervalMc> {
    m.validate()?;
    let medium = LineMedium::interval(m);
    let cfg = SimConfig {
        kill_mode: KillMode::AbsorbOuter,
        nu_eval: NuEval::Fixed(m.nu),
        ..base.clone()
    };
    let start = std::time::Instant::now();
    let runs = run_paths(&medium, x0, &cfg, |_| ())?;
    let elapsed = start.elapsed().as_secs_f64();
    let fs: Vec<&PathFunctionals> = runs.iter().map(|(f, _)| f).collect();
    let times: Vec<f64> = fs.iter().map(|f| f.lifetime).collect();
    let lts: Vec<f64> = fs.iter().map(|f| f.l_sym).collect();
    let unfinished = fs.iter().filter(|f| f.cause == Termination::HorizonReached).count();
    Ok(IntervalMc {
        exit_time: Estimate::from_samples(&times, elapsed),
        local_time: Estimate::from_samples(&lts, elapsed),
        unfinished,
    })
}

/// E exp(-c L_t) for Brownian motion started at the point where L is taken:
/// 2 exp(c^2 t / 2) Phi(-c sqrt t), written with erfcx-style scaling for large c.
pub fn laplace_local_time_closed_form(c: f64, t: f64) -> f64 {
    let x = c * t.sqrt();
    // 2 e^{x^2/2} Phi(-x) = e^{x^2/2} erfc(x / sqrt 2)
    let y = x / std::f64::consts::SQRT_2;
    if y < 25.0 {
        (x * x / 2.0).exp() * libm::erfc(y)
    } else {
        // asymptotic expansion of erfcx
        let inv = 1.0 / (y * y);
        (1.0 - 0.5 * inv + 0.75 * inv * inv - 1.875 * inv * inv * inv) / (y * std::f64::consts::PI.sqrt())
    }
}

/// E L_t = sqrt(2t/pi) for the same setting.
pub fn mean_local_time_closed_form(t: f64) -> f64 {
    (2.0 * t / std::f64::consts::PI).sqrt()
}

/// Expected value of the shell local-time estimator (kappa = 1) at the interface
/// point for Brownian motion started there, sampled on the grid kh, k < ceil(t/h).
/// Grid samples of free Brownian motion are exact in law, so this is the exact
/// mean of the estimator the walker computes on the free line.
pub fn expected_shell_estimate(h: f64, shell: f64, t: f64) -> f64 {
    let n = (t / h - 1e-9).ceil() as u64;
    let mut s = 1.0;
    for k in 1..n {
        let z = shell / (k as f64 * h).sqrt();
        s += libm::erf(z / std::f64::consts::SQRT_2);
    }
    h / (2.0 * shell) * s
}

/// Scale factor mapping the raw shell estimator to the true local time at time t.
pub fn analytic_kappa(h: f64, shell: f64, t: f64) -> f64 {
    mean_local_time_closed_form(t) / expected_shell_estimate(h, shell, t)
}

/// Local time at an interior point of the free line, measured by the walker.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LocalTimeCalibration {
    pub estimate: Estimate,
    pub target: f64,
    /// Scale that would make the sample mean hit the target.
    pub kappa_fit: f64,
    /// Standard error of `kappa_fit` by the delta method.
    pub kappa_fit_stderr: f64,
}

/// Runs free-line paths from the interface point up to `cfg.t_max` with no
/// clock and transmission 1/2, and compares the mean local time with sqrt(2t/pi).
pub fn calibrate_local_time(base: &SimConfig) -> Result<LocalTimeCalibration> {
    let medium = LineMedium::free(0.0);
    let cfg = SimConfig {
        kill_mode: KillMode::AbsorbOuter,
        nu_eval: NuEval::Fixed(0.5),
        ..base.clone()
    };
    let start = std::time::Instant::now();
    let fs = crate::diffusion::simulate(&medium, 0.0, &cfg)?;
    let l: Vec<f64> = fs.iter().map(|f| f.l_sym).collect();
    let estimate = Estimate::from_samples(&l, start.elapsed().as_secs_f64());
    let target = mean_local_time_closed_form(cfg.t_max);
    let raw = estimate.mean / cfg.kappa_l;
    let kappa_fit = target / raw;
    Ok(LocalTimeCalibration {
        estimate,
        target,
        kappa_fit,
        kappa_fit_stderr: kappa_fit * estimate.stderr / estimate.mean,
    })
}

/// Fraction of free-line paths from the interface point that survive the
/// elastic clock of rate c on the local time up to `base.t_max`.
pub fn elastic_survival(c: f64, base: &SimConfig) -> Result<Estimate> {
    let medium = LineMedium::free(0.0);
    let cfg = SimConfig {
        kill_mode: KillMode::ElasticClock,
        nu_eval: NuEval::Fixed(0.5),
        c_n: c,
        ..base.clone()
    };
    let start = std::time::Instant::now();
    let fs = crate::diffusion::simulate(&medium, 0.0, &cfg)?;
    let alive: Vec<f64> = fs
        .iter()
        .map(|f| if f.cause == Termination::HorizonReached { 1.0 } else { 0.0 })
        .collect();
    Ok(Estimate::from_samples(&alive, start.elapsed().as_secs_f64()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(nu: f64, left: LeftBoundary) -> IntervalModel {
        IntervalModel::new(0.6, 1.0, nu, left).unwrap()
    }

    #[test]
    fn symmetric_reflected_case_is_r2_squared_at_origin() {
        let m = model(0.5, LeftBoundary::ReflectAtZero);
        let v = mean_exit_closed_form(0.0, &m).unwrap();
        assert!((v.value - 1.0).abs() < 1e-13);
        assert!(v.flag.is_none());
        for x in [0.1, 0.6, 0.9] {
            let v = mean_exit_closed_form(x, &m).unwrap().value;
            assert!((v - (1.0 - x * x)).abs() < 1e-13);
        }
    }

    #[test]
    fn outer_point_has_zero_exit_time() {
        for nu in [0.1, 0.5, 0.9] {
            for left in [LeftBoundary::ReflectAtZero, LeftBoundary::ZeroAtOrigin] {
                let v = mean_exit_closed_form(1.0, &model(nu, left)).unwrap().value;
                assert!(v.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_value_variant_vanishes_at_origin() {
        let v = mean_exit_closed_form(0.0, &model(0.3, LeftBoundary::ZeroAtOrigin)).unwrap();
        assert!(v.value.abs() < 1e-13);
    }

    #[test]
    fn flux_condition_holds() {
        let m = model(0.3, LeftBoundary::ReflectAtZero);
        let e = 1e-6;
        let f = |x: f64| mean_exit_closed_form(x, &m).unwrap().value;
        let left = (f(0.6) - f(0.6 - e)) / e;
        let right = (f(0.6 + e) - f(0.6)) / e;
        // one-sided difference error is O(e) times m'' = -2
        assert!(((1.0 - 0.3) * (left - e) - 0.3 * (right + e)).abs() < 1e-8);
    }

    #[test]
    fn unreachable_fiber_side_is_flagged() {
        let m = model(0.0, LeftBoundary::ReflectAtZero);
        let v = mean_exit_closed_form(0.8, &m).unwrap();
        assert_eq!(v.flag, Some(OracleFlag::OneSided));
        assert!((v.value - 0.2 * 0.2).abs() < 1e-13);
        let inner = mean_exit_closed_form(0.3, &m).unwrap();
        assert_eq!(inner.flag, Some(OracleFlag::NonIntegrable));
        let zero = mean_exit_closed_form(0.8, &model(0.0, LeftBoundary::ZeroAtOrigin)).unwrap();
        assert_eq!(zero.flag, Some(OracleFlag::OneSided));
        assert!(zero.value.is_finite());
    }

    #[test]
    fn elastic_limit_examples() {
        let d = elastic_limit_solution(0.3, 1.0, f64::INFINITY, LeftBoundary::ReflectAtZero).unwrap();
        assert!((d.value - (1.0 - 0.09)).abs() < 1e-13);
        let r = elastic_limit_solution(1.0, 1.0, 1.0, LeftBoundary::ReflectAtZero).unwrap();
        assert!((r.value - 2.0).abs() < 1e-13);
        let n = elastic_limit_solution(0.5, 1.0, 0.0, LeftBoundary::ReflectAtZero).unwrap();
        assert_eq!(n.flag, Some(OracleFlag::NonIntegrable));
        assert!(elastic_limit_solution(0.5, 1.0, -1.0, LeftBoundary::ReflectAtZero).is_err());
        let z = elastic_limit_solution(0.5, 1.0, 0.0, LeftBoundary::ZeroAtOrigin).unwrap();
        assert!((z.value - (2.0 * 0.5 - 0.25)).abs() < 1e-13);
    }

    #[test]
    fn discounted_neumann_limit_is_constant() {
        let v = elastic_limit_discounted(0.4, 1.0, 0.0, LeftBoundary::ReflectAtZero, 2.0).unwrap();
        assert!((v.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn finite_differences_agree_with_closed_form() {
        for nu in [0.2, 0.5, 0.85] {
            for left in [LeftBoundary::ReflectAtZero, LeftBoundary::ZeroAtOrigin] {
                for delta in [0.0, 1.5] {
                    let err = closed_form_vs_fd(&model(nu, left), delta, 10_001).unwrap();
                    assert!(err < 1e-6, "nu {nu} {left:?} delta {delta}: {err}");
                }
            }
        }
    }

    #[test]
    fn sweep_rejects_bad_schedules() {
        assert!(convergence_sweep(1.0, 1.0, LeftBoundary::ReflectAtZero, 0.0, &[(0.1, 1.2)]).is_err());
        assert!(convergence_sweep(1.0, 1.0, LeftBoundary::ReflectAtZero, 0.0, &[(0.1, 0.1), (0.2, 0.1)]).is_err());
    }

    #[test]
    fn laplace_closed_form_values() {
        assert!((laplace_local_time_closed_form(0.0, 1.0) - 1.0).abs() < 1e-15);
        // 2 e^{1/2} Phi(-1)
        assert!((laplace_local_time_closed_form(1.0, 1.0) - 0.523_156_583_730_247).abs() < 1e-6);
        let a = laplace_local_time_closed_form(7.0, 1.0);
        let b = laplace_local_time_closed_form(7.1, 1.0);
        assert!(a > b && b > 0.0);
        // continuity across the asymptotic switch
        let lo = laplace_local_time_closed_form(25.0 * std::f64::consts::SQRT_2 - 1e-9, 1.0);
        let hi = laplace_local_time_closed_form(25.0 * std::f64::consts::SQRT_2 + 1e-9, 1.0);
        assert!((lo - hi).abs() < 1e-9 * lo);
    }

    #[test]
    fn shell_expectation_approaches_target_as_shell_shrinks() {
        let t = mean_local_time_closed_form(1.0);
        let coarse = expected_shell_estimate(1e-4, 0.03, 1.0);
        let fine = expected_shell_estimate(1e-6, 0.003, 1.0);
        assert!(coarse < fine && fine < t);
        assert!((t - fine) < 0.01 * t);
        let k = analytic_kappa(1e-5, 3.0 * 1e-5f64.sqrt(), 1.0);
        assert!(k > 1.0 && k < 1.01);
    }

    #[test]
    fn line_medium_crossings() {
        let m = LineMedium::interval(&model(0.5, LeftBoundary::ReflectAtZero));
        let h = m.first_hit(0.5, 0.7, None).unwrap();
        assert_eq!(h.edge, 0);
        assert!((h.t - 0.5).abs() < 1e-12);
        let h = m.first_hit(0.9, 1.1, None).unwrap();
        assert_eq!(h.kind, EdgeKind::Outer);
        let h = m.first_hit(0.05, -0.05, None).unwrap();
        assert_eq!(h.kind, EdgeKind::Wall);
        assert!(m.first_hit(0.6, 0.7, Some(0)).is_none());
        assert!(m.first_hit(0.6, 0.7, None).is_some());
    }
}
