//! Plain-text run configuration: `key = value` lines, `#` comments.
//!
//! Every key has a default, so an empty file is a complete configuration.
//! `Params::to_text` writes every key back out and `parse_config` reads that
//! text back to the same value.

use crate::diffusion::{KillMode, NuEval, SimConfig};
use crate::error::{Error, Result};
use crate::geometry::{koch_angle, max_fiber_b};
use crate::lab::{RegimeSchedule, StudyConfig};
use crate::oracle::LeftBoundary;
use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};

/// Scalar fields used as integrands and test functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrand {
    One,
    X,
    Y,
    XPlusY,
    XSquaredPlusY,
    RSquared,
}

impl Integrand {
    pub fn eval(self, p: Vec2) -> f64 {
        match self {
            Integrand::One => 1.0,
            Integrand::X => p.x,
            Integrand::Y => p.y,
            Integrand::XPlusY => p.x + p.y,
            Integrand::XSquaredPlusY => p.x * p.x + p.y,
            Integrand::RSquared => p.x * p.x + p.y * p.y,
        }
    }

    /// Bound on |g| over the bounding box [-0.5, 1.5] x [-1.5, 0.5].
    pub fn sup_bound(self) -> f64 {
        match self {
            Integrand::One => 1.0,
            Integrand::X | Integrand::Y => 1.5,
            Integrand::XPlusY => 3.0,
            Integrand::XSquaredPlusY => 3.75,
            Integrand::RSquared => 4.5,
        }
    }
}

impl std::str::FromStr for Integrand {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "one" | "1" => Ok(Integrand::One),
            "x" => Ok(Integrand::X),
            "y" => Ok(Integrand::Y),
            "x+y" => Ok(Integrand::XPlusY),
            "x2+y" => Ok(Integrand::XSquaredPlusY),
            "r2" => Ok(Integrand::RSquared),
            _ => Err(Error::Parameter(format!(
                "unknown integrand '{s}' (one, x, y, x+y, x2+y, r2)"
            ))),
        }
    }
}

impl std::fmt::Display for Integrand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Integrand::One => "one",
            Integrand::X => "x",
            Integrand::Y => "y",
            Integrand::XPlusY => "x+y",
            Integrand::XSquaredPlusY => "x2+y",
            Integrand::RSquared => "r2",
        })
    }
}

/// Functional computed by the `estimate` command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FunctionalKind {
    /// Discounted occupation integral up to absorption at the outer boundary.
    Un,
    Resolvent,
    Robin,
    Dirichlet,
    Survival,
    /// E exp(-c L_t) for the listed rates.
    Laplace,
}

impl std::str::FromStr for FunctionalKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "u-n" | "un" => Ok(FunctionalKind::Un),
            "resolvent" => Ok(FunctionalKind::Resolvent),
            "robin" => Ok(FunctionalKind::Robin),
            "dirichlet" => Ok(FunctionalKind::Dirichlet),
            "survival" => Ok(FunctionalKind::Survival),
            "laplace" => Ok(FunctionalKind::Laplace),
            _ => Err(Error::Parameter(format!(
                "unknown functional '{s}' (u-n, resolvent, robin, dirichlet, survival, laplace)"
            ))),
        }
    }
}

impl std::fmt::Display for FunctionalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FunctionalKind::Un => "u-n",
            FunctionalKind::Resolvent => "resolvent",
            FunctionalKind::Robin => "robin",
            FunctionalKind::Dirichlet => "dirichlet",
            FunctionalKind::Survival => "survival",
            FunctionalKind::Laplace => "laplace",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    // geometry
    pub alpha: f64,
    pub b: f64,
    pub level: u32,
    // walker
    pub h: f64,
    pub shell: f64,
    pub tmax: f64,
    pub paths: usize,
    pub seed: u64,
    pub cn: f64,
    pub deltan: f64,
    pub kill_mode: KillMode,
    pub nu_eval: NuEval,
    pub kappa_l: f64,
    pub bridge: bool,
    pub leap: bool,
    pub x0: Vec2,
    pub trace_paths: usize,
    pub trace_every: u64,
    // functionals
    pub functional: FunctionalKind,
    pub integrand: Integrand,
    pub lambda: f64,
    pub delta0: f64,
    pub c0: f64,
    pub laplace_c: Vec<f64>,
    pub grid_points: usize,
    // one-dimensional oracle
    pub r1: f64,
    pub r2: f64,
    pub nu: f64,
    pub left: LeftBoundary,
    pub fd_nodes: usize,
    pub sweep_c: f64,
    pub sweep_steps: usize,
    pub oracle_x0: f64,
    // regime study
    pub levels: Vec<u32>,
    pub schedules: Vec<RegimeSchedule>,
    pub h0: f64,
    pub shell_factor: f64,
    pub study_tmax: f64,
    pub t_probe: f64,
    pub robin_c0: f64,
    pub bootstrap: usize,
    // self-similar measure check
    pub rr_levels: Vec<u32>,
    pub reference_level: u32,
}

impl Default for Params {
    fn default() -> Self {
        let h = 1e-5;
        Params {
            alpha: 3.0,
            b: max_fiber_b(3.0),
            level: 3,
            h,
            shell: 3.0 * h.sqrt(),
            tmax: 1.0,
            paths: 10_000,
            seed: 1,
            cn: 1.0,
            deltan: 0.0,
            kill_mode: KillMode::ElasticClock,
            nu_eval: NuEval::SigmaSide,
            kappa_l: 1.0,
            bridge: true,
            leap: true,
            x0: Vec2::new(0.5, -(3f64.sqrt()) / 6.0),
            trace_paths: 0,
            trace_every: 10,
            functional: FunctionalKind::Un,
            integrand: Integrand::One,
            lambda: 1.0,
            delta0: 1.0,
            c0: 1.0,
            laplace_c: vec![0.5, 1.0, 2.0],
            grid_points: 50,
            r1: 0.06,
            r2: 0.1,
            nu: 0.5,
            left: LeftBoundary::ReflectAtZero,
            fd_nodes: 10_000,
            sweep_c: 2.0,
            sweep_steps: 5,
            oracle_x0: 0.05,
            levels: vec![2, 3, 4],
            schedules: ["const:1", "fade:3", "explode:10"]
                .iter()
                .map(|s| s.parse().expect("built-in schedule"))
                .collect(),
            h0: 4e-3,
            shell_factor: 3.0,
            study_tmax: 0.05,
            t_probe: 0.05,
            robin_c0: 1.0,
            bootstrap: 200,
            rr_levels: (2..=8).collect(),
            reference_level: 12,
        }
    }
}

/// All accepted keys, in the order they are written out.
pub const KEYS: &[&str] = &[
    "alpha", "b", "level", "h", "shell", "tmax", "paths", "seed", "cn", "deltan", "kill_mode", "nu_eval",
    "kappa_l", "bridge", "leap", "x0", "trace_paths", "trace_every", "functional", "integrand", "lambda",
    "delta0", "c0", "laplace_c", "grid_points", "r1", "r2", "nu", "left", "fd_nodes", "sweep_c", "sweep_steps",
    "oracle_x0", "levels", "schedules", "h0", "shell_factor", "study_tmax", "t_probe", "robin_c0", "bootstrap",
    "rr_levels", "reference_level",
];

fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse::<T>().map_err(|_| format!("'{v}' is not a valid {}", std::any::type_name::<T>()))
}

fn list<T: std::str::FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(num::<T>)
        .collect()
}

fn positive(v: f64) -> std::result::Result<f64, String> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive and finite"))
    }
}

fn non_negative(v: f64) -> std::result::Result<f64, String> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be non-negative and finite"))
    }
}

fn increasing(v: Vec<u32>) -> std::result::Result<Vec<u32>, String> {
    if v.is_empty() {
        return Err("level list is empty".into());
    }
    if v.windows(2).any(|w| w[1] <= w[0]) {
        return Err("levels must be strictly increasing".into());
    }
    Ok(v)
}

fn boolean(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("'{v}' is not a boolean")),
    }
}

fn via<T: std::str::FromStr<Err = Error>>(v: &str) -> std::result::Result<T, String> {
    v.parse::<T>().map_err(|e| match e {
        Error::Parameter(m) => m,
        other => other.to_string(),
    })
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl Params {
    /// Sets one key from its textual value. The message of the error names
    /// the problem; the caller attaches the location.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "alpha" => {
                let a: f64 = num(v)?;
                if !(a > 2.0 && a < 4.0) {
                    return Err(format!("alpha = {a} outside (2, 4)"));
                }
                self.alpha = a;
            }
            "b" => self.b = positive(num(v)?)?,
            "level" => self.level = num(v)?,
            "h" => self.h = positive(num(v)?)?,
            "shell" => self.shell = positive(num(v)?)?,
            "tmax" => self.tmax = positive(num(v)?)?,
            "paths" => {
                self.paths = num(v)?;
                if self.paths == 0 {
                    return Err("paths must be at least 1".into());
                }
            }
            "seed" => self.seed = num(v)?,
            "cn" => {
                let c: f64 = num(v)?;
                if !(c >= 0.0) {
                    return Err(format!("cn = {c} must be non-negative"));
                }
                self.cn = c;
            }
            "deltan" => self.deltan = non_negative(num(v)?)?,
            "kill_mode" => self.kill_mode = via(v)?,
            "nu_eval" => self.nu_eval = via(v)?,
            "kappa_l" => self.kappa_l = positive(num(v)?)?,
            "bridge" => self.bridge = boolean(v)?,
            "leap" => self.leap = boolean(v)?,
            "x0" => {
                let c: Vec<f64> = list(v)?;
                if c.len() != 2 || !c.iter().all(|x| x.is_finite()) {
                    return Err(format!("x0 needs two finite coordinates, got '{v}'"));
                }
                self.x0 = Vec2::new(c[0], c[1]);
            }
            "trace_paths" => self.trace_paths = num(v)?,
            "trace_every" => {
                self.trace_every = num(v)?;
                if self.trace_every == 0 {
                    return Err("trace_every must be at least 1".into());
                }
            }
            "functional" => self.functional = via(v)?,
            "integrand" => self.integrand = via(v)?,
            "lambda" => self.lambda = positive(num(v)?)?,
            "delta0" => self.delta0 = non_negative(num(v)?)?,
            "c0" => self.c0 = non_negative(num(v)?)?,
            "laplace_c" => {
                let c: Vec<f64> = list(v)?;
                if c.is_empty() || c.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                    return Err("laplace_c needs non-negative finite rates".into());
                }
                self.laplace_c = c;
            }
            "grid_points" => {
                self.grid_points = num(v)?;
                if self.grid_points == 0 {
                    return Err("grid_points must be at least 1".into());
                }
            }
            "r1" => self.r1 = positive(num(v)?)?,
            "r2" => self.r2 = positive(num(v)?)?,
            "nu" => {
                let nu: f64 = num(v)?;
                if !(0.0..=1.0).contains(&nu) {
                    return Err(format!("nu = {nu} outside [0, 1]"));
                }
                self.nu = nu;
            }
            "left" => self.left = via(v)?,
            "fd_nodes" => {
                self.fd_nodes = num(v)?;
                if self.fd_nodes < 10 {
                    return Err("fd_nodes must be at least 10".into());
                }
            }
            "sweep_c" => self.sweep_c = positive(num(v)?)?,
            "sweep_steps" => {
                self.sweep_steps = num(v)?;
                if self.sweep_steps == 0 {
                    return Err("sweep_steps must be at least 1".into());
                }
            }
            "oracle_x0" => self.oracle_x0 = non_negative(num(v)?)?,
            "levels" => self.levels = increasing(list(v)?)?,
            "schedules" => {
                let s: Vec<RegimeSchedule> = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(via::<RegimeSchedule>)
                    .collect::<std::result::Result<_, _>>()?;
                if s.is_empty() {
                    return Err("schedule list is empty".into());
                }
                self.schedules = s;
            }
            "h0" => self.h0 = positive(num(v)?)?,
            "shell_factor" => self.shell_factor = positive(num(v)?)?,
            "study_tmax" => self.study_tmax = positive(num(v)?)?,
            "t_probe" => self.t_probe = positive(num(v)?)?,
            "robin_c0" => self.robin_c0 = non_negative(num(v)?)?,
            "bootstrap" => self.bootstrap = num(v)?,
            "rr_levels" => self.rr_levels = increasing(list(v)?)?,
            "reference_level" => self.reference_level = num(v)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "alpha" => self.alpha.to_string(),
            "b" => self.b.to_string(),
            "level" => self.level.to_string(),
            "h" => self.h.to_string(),
            "shell" => self.shell.to_string(),
            "tmax" => self.tmax.to_string(),
            "paths" => self.paths.to_string(),
            "seed" => self.seed.to_string(),
            "cn" => self.cn.to_string(),
            "deltan" => self.deltan.to_string(),
            "kill_mode" => self.kill_mode.to_string(),
            "nu_eval" => self.nu_eval.to_string(),
            "kappa_l" => self.kappa_l.to_string(),
            "bridge" => self.bridge.to_string(),
            "leap" => self.leap.to_string(),
            "x0" => format!("{},{}", self.x0.x, self.x0.y),
            "trace_paths" => self.trace_paths.to_string(),
            "trace_every" => self.trace_every.to_string(),
            "functional" => self.functional.to_string(),
            "integrand" => self.integrand.to_string(),
            "lambda" => self.lambda.to_string(),
            "delta0" => self.delta0.to_string(),
            "c0" => self.c0.to_string(),
            "laplace_c" => join(&self.laplace_c),
            "grid_points" => self.grid_points.to_string(),
            "r1" => self.r1.to_string(),
            "r2" => self.r2.to_string(),
            "nu" => self.nu.to_string(),
            "left" => self.left.to_string(),
            "fd_nodes" => self.fd_nodes.to_string(),
            "sweep_c" => self.sweep_c.to_string(),
            "sweep_steps" => self.sweep_steps.to_string(),
            "oracle_x0" => self.oracle_x0.to_string(),
            "levels" => join(&self.levels),
            "schedules" => self.schedules.iter().map(|s| s.id()).collect::<Vec<_>>().join(","),
            "h0" => self.h0.to_string(),
            "shell_factor" => self.shell_factor.to_string(),
            "study_tmax" => self.study_tmax.to_string(),
            "t_probe" => self.t_probe.to_string(),
            "robin_c0" => self.robin_c0.to_string(),
            "bootstrap" => self.bootstrap.to_string(),
            "rr_levels" => join(&self.rr_levels),
            "reference_level" => self.reference_level.to_string(),
            _ => return None,
        })
    }

    /// Every key with its value, one `key = value` line each.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&self.get(k).expect("listed key"));
            out.push('\n');
        }
        out
    }

    /// Checks that involve several keys.
    pub fn cross_check(&self) -> std::result::Result<(), (&'static str, String)> {
        let bmax = max_fiber_b(self.alpha);
        if self.b > bmax * (1.0 + 1e-12) {
            return Err((
                "b",
                format!(
                    "b = {} exceeds tan(theta/2) = {bmax} for alpha = {} (theta = {})",
                    self.b,
                    self.alpha,
                    koch_angle(self.alpha)
                ),
            ));
        }
        if self.r2 <= self.r1 {
            return Err(("r2", format!("r2 = {} must exceed r1 = {}", self.r2, self.r1)));
        }
        if self.oracle_x0 > self.r2 {
            return Err(("oracle_x0", format!("oracle_x0 = {} beyond r2 = {}", self.oracle_x0, self.r2)));
        }
        if self.t_probe > self.study_tmax {
            return Err((
                "t_probe",
                format!("t_probe = {} beyond study_tmax = {}", self.t_probe, self.study_tmax),
            ));
        }
        if self.reference_level < *self.rr_levels.last().unwrap_or(&0) {
            return Err((
                "reference_level",
                format!("reference_level = {} below the deepest checked level", self.reference_level),
            ));
        }
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            h: self.h,
            shell: self.shell,
            t_max: self.tmax,
            delta_n: self.deltan,
            c_n: self.cn,
            kill_mode: self.kill_mode,
            nu_eval: self.nu_eval,
            kappa_l: self.kappa_l,
            bridge: self.bridge,
            leap: self.leap,
            seed: self.seed,
            paths: self.paths,
        }
    }

    pub fn study_config(&self) -> StudyConfig {
        StudyConfig {
            alpha: self.alpha,
            b: self.b,
            h0: self.h0,
            shell_factor: self.shell_factor,
            t_max: self.study_tmax,
            t_probe: self.t_probe,
            robin_c0: self.robin_c0,
            x0: self.x0,
            paths: self.paths,
            seed: self.seed,
            grid_points: self.grid_points,
            bootstrap: self.bootstrap,
        }
    }
}

/// Parses configuration text on top of the defaults.
///
/// `b` left unset follows `alpha` (the largest admissible value), and `shell`
/// left unset follows `h` (three standard deviations of one step).
pub fn parse_config(text: &str) -> Result<Params> {
    parse_onto(Params::default(), text)
}

/// Parses configuration text on top of `base`.
pub fn parse_onto(base: Params, text: &str) -> Result<Params> {
    parse_with_overrides(base, text, &[])
}

/// Parses configuration text, then applies `overrides` (key, value) as if
/// they replaced the matching lines. Override errors report line 0.
pub fn parse_with_overrides(base: Params, text: &str, overrides: &[(&str, String)]) -> Result<Params> {
    let mut entries: Vec<(String, String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            msg: format!("expected 'key = value', got '{content}'"),
        })?;
        let k = k.trim();
        if let Some((_, _, first)) = entries.iter().find(|(s, _, _)| s == k) {
            return Err(Error::Config {
                line,
                msg: format!("key '{k}' already set on line {first}"),
            });
        }
        entries.push((k.to_string(), v.trim().to_string(), line));
    }
    for (k, v) in overrides {
        match entries.iter_mut().find(|(s, _, _)| s == k) {
            Some(e) => {
                e.1 = v.clone();
                e.2 = 0;
            }
            None => entries.push((k.to_string(), v.clone(), 0)),
        }
    }
    let mut p = base;
    for (k, v, line) in &entries {
        p.set(k, v).map_err(|msg| Error::Config { line: *line, msg })?;
    }
    let given = |k: &str| entries.iter().any(|(s, _, _)| s == k);
    if given("alpha") && !given("b") {
        p.b = max_fiber_b(p.alpha);
    }
    if given("h") && !given("shell") {
        p.shell = 3.0 * p.h.sqrt();
    }
    p.cross_check().map_err(|(key, msg)| Error::Config {
        line: entries.iter().find(|(s, _, _)| s == key).map_or(0, |(_, _, l)| *l),
        msg,
    })?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), Params::default());
        assert_eq!(parse_config("# only a comment\n\n   \n").unwrap(), Params::default());
    }

    #[test]
    fn alpha_three_is_accepted() {
        let p = parse_config("alpha = 3.0").unwrap();
        assert_eq!(p.alpha, 3.0);
    }

    #[test]
    fn alpha_out_of_range_names_the_interval_and_line() {
        let e = parse_config("# header\nalpha = 5").unwrap_err();
        match e {
            Error::Config { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("(2, 4)"), "{msg}");
            }
            other => panic!("unexpected {other}"),
        }
        assert_eq!(parse_config("alpha = 5").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn unknown_keys_and_bad_types_are_rejected() {
        assert!(matches!(parse_config("colour = red"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(parse_config("\npaths = many"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(parse_config("no equals sign"), Err(Error::Config { .. })));
        assert!(matches!(parse_config("seed = 1\nseed = 2"), Err(Error::Config { line: 2, .. })));
    }

    #[test]
    fn fiber_bound_follows_alpha() {
        let p = parse_config("alpha = 3.5").unwrap();
        assert_eq!(p.b, max_fiber_b(3.5));
        let e = parse_config("alpha = 3.5\nb = 0.5").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }), "{e}");
        assert!(parse_config("b = 0.2").is_ok());
    }

    #[test]
    fn shell_follows_step_unless_given() {
        let p = parse_config("h = 1e-6").unwrap();
        assert!((p.shell - 3e-3).abs() < 1e-15);
        let p = parse_config("h = 1e-6\nshell = 0.01").unwrap();
        assert_eq!(p.shell, 0.01);
    }

    #[test]
    fn overrides_replace_lines() {
        let p = parse_with_overrides(Params::default(), "paths = 20\nh = 1e-4", &[("paths", "30".into())]).unwrap();
        assert_eq!(p.paths, 30);
        assert!((p.shell - 0.03).abs() < 1e-15);
        let e = parse_with_overrides(Params::default(), "", &[("alpha", "7".into())]).unwrap_err();
        assert!(matches!(e, Error::Config { line: 0, .. }));
    }

    #[test]
    fn inline_comments_are_stripped() {
        let p = parse_config("paths = 20  # short run").unwrap();
        assert_eq!(p.paths, 20);
    }

    #[test]
    fn echo_round_trips() {
        let mut p = Params::default();
        p.alpha = 3.3;
        p.b = 0.1;
        p.x0 = Vec2::new(0.1234567890123, -0.3);
        p.kill_mode = KillMode::ReflectInterface;
        p.nu_eval = NuEval::Fixed(0.25);
        p.left = LeftBoundary::ZeroAtOrigin;
        p.schedules = vec!["vanish:2".parse().unwrap()];
        p.laplace_c = vec![0.1, 1e-7];
        assert_eq!(parse_config(&p.to_text()).unwrap(), p);
        assert_eq!(parse_config(&Params::default().to_text()).unwrap(), Params::default());
    }

    #[test]
    fn every_key_is_readable_and_settable() {
        let p = Params::default();
        for k in KEYS {
            let v = p.get(k).unwrap();
            let mut q = Params::default();
            q.set(k, &v).unwrap_or_else(|e| panic!("{k}: {e}"));
            assert_eq!(q, p, "{k}");
        }
        assert!(p.get("nope").is_none());
    }
}
