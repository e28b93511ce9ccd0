//! Euler stepping of skew Brownian motion across an interface, with mirror-or-keep
//! side selection, outer absorption or reflection, a boundary local-time shell
//! estimator and an exponential killing clock.
//!
//! The engine is generic over a [`Medium`], which supplies the geometry: the
//! snowflake domain in the plane and the interval model on the line share the
//! same stepping, snapping and local-time code.

use crate::error::{Error, Result};
use crate::geometry::{DomainModel, EdgeClass};
use crate::vec2::{mirror_across, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Coordinates the walker can move in.
pub trait Point: Copy + Send + Sync + std::fmt::Debug + 'static {
    fn gaussian<R: Rng + ?Sized>(rng: &mut R, sd: f64) -> Self;
    fn plus(self, o: Self) -> Self;
    fn minus(self, o: Self) -> Self;
    fn times(self, s: f64) -> Self;
    fn length(self) -> f64;
}

impl Point for f64 {
    #[inline]
    fn gaussian<R: Rng + ?Sized>(rng: &mut R, sd: f64) -> Self {
        let z: f64 = StandardNormal.sample(rng);
        sd * z
    }
    #[inline]
    fn plus(self, o: f64) -> f64 {
        self + o
    }
    #[inline]
    fn minus(self, o: f64) -> f64 {
        self - o
    }
    #[inline]
    fn times(self, s: f64) -> f64 {
        self * s
    }
    #[inline]
    fn length(self) -> f64 {
        self.abs()
    }
}

impl Point for Vec2 {
    #[inline]
    fn gaussian<R: Rng + ?Sized>(rng: &mut R, sd: f64) -> Self {
        let x: f64 = StandardNormal.sample(rng);
        let y: f64 = StandardNormal.sample(rng);
        Vec2::new(sd * x, sd * y)
    }
    #[inline]
    fn plus(self, o: Vec2) -> Vec2 {
        self + o
    }
    #[inline]
    fn minus(self, o: Vec2) -> Vec2 {
        self - o
    }
    #[inline]
    fn times(self, s: f64) -> Vec2 {
        self * s
    }
    #[inline]
    fn length(self) -> f64 {
        self.norm()
    }
}

/// Which side of the interface a point is on. `Omega` includes the interface itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Omega,
    Sigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    /// The skew interface.
    Interface,
    /// Outer boundary: absorbing unless the kill mode reflects it.
    Outer,
    /// Always reflecting.
    Wall,
}

#[derive(Debug, Clone, Copy)]
pub struct EdgeHit {
    pub t: f64,
    pub edge: usize,
    pub kind: EdgeKind,
}

/// Geometry seen by the walker.
pub trait Medium: Sync {
    type P: Point;

    /// Arc-length normalization applied to the local time (1 on the line).
    fn local_time_scale(&self) -> f64;

    /// Side of a starting point, or an error if it is outside the medium.
    fn locate(&self, p: Self::P) -> Result<Side>;

    /// Whether p sits on an absorbing outer edge.
    fn on_outer(&self, p: Self::P) -> bool;

    /// First edge crossed by a -> b other than `skip`.
    fn first_hit(&self, a: Self::P, b: Self::P, skip: Option<usize>) -> Option<EdgeHit>;

    /// Mirror image of p across the line of an edge.
    fn mirror(&self, edge: usize, p: Self::P) -> Self::P;

    /// Whether p lies on the fiber side of an interface edge's line.
    fn fiber_side_of(&self, edge: usize, p: Self::P) -> bool;

    /// Fiber-side weight at a point of an interface edge.
    fn interface_weight(&self, edge: usize, p: Self::P) -> f64;

    /// Distance to the interface, with the nearest edge, when at most `cap`.
    fn interface_gap(&self, p: Self::P, cap: f64) -> Option<(f64, usize)>;

    /// Distance to the outer edges reachable from `side` without crossing the interface.
    fn outer_gap(&self, p: Self::P, side: Side, cap: f64) -> Option<f64>;

    /// Distance to the nearest edge of any kind, saturated at `cap`.
    fn clearance(&self, p: Self::P, cap: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KillMode {
    /// Skew transmission, absorbing outer boundary, no clock.
    AbsorbOuter,
    /// Skew transmission, absorbing outer boundary, exponential clock on the local time.
    ElasticClock,
    /// Reflection at the interface (transmission probability 0); the clock runs when c_n > 0.
    ReflectInterface,
    /// Stop at first contact with the interface (within the shell width).
    AbsorbInterface,
}

impl std::str::FromStr for KillMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "absorbouter" => Ok(KillMode::AbsorbOuter),
            "elasticclock" | "elastic" => Ok(KillMode::ElasticClock),
            "reflectinterface" | "reflect" => Ok(KillMode::ReflectInterface),
            "absorbinterface" | "dirichlet" => Ok(KillMode::AbsorbInterface),
            _ => Err(Error::Parameter(format!("unknown kill mode '{s}'"))),
        }
    }
}

impl std::fmt::Display for KillMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            KillMode::AbsorbOuter => "absorb-outer",
            KillMode::ElasticClock => "elastic-clock",
            KillMode::ReflectInterface => "reflect-interface",
            KillMode::AbsorbInterface => "absorb-interface",
        };
        f.write_str(s)
    }
}

/// How the transmission probability is evaluated at an interface hit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NuEval {
    /// Weight taken from the fiber side at the hit point.
    SigmaSide,
    /// Weight 1, the trace from the snowflake side.
    Constant,
    /// A fixed probability, independent of c_n.
    Fixed(f64),
}

impl std::str::FromStr for NuEval {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.to_ascii_lowercase();
        match t.as_str() {
            "sigma-side" | "sigma_side" | "sigmaside" => Ok(NuEval::SigmaSide),
            "constant" => Ok(NuEval::Constant),
            _ => match t.strip_prefix("fixed:") {
                Some(v) => {
                    let nu: f64 = v
                        .parse()
                        .map_err(|_| Error::Parameter(format!("bad transmission probability '{v}'")))?;
                    if !(0.0..=1.0).contains(&nu) {
                        return Err(Error::Parameter(format!("transmission probability {nu} outside [0, 1]")));
                    }
                    Ok(NuEval::Fixed(nu))
                }
                None => Err(Error::Parameter(format!("unknown nu evaluation '{s}'"))),
            },
        }
    }
}

impl std::fmt::Display for NuEval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NuEval::SigmaSide => f.write_str("sigma-side"),
            NuEval::Constant => f.write_str("constant"),
            NuEval::Fixed(v) => write!(f, "fixed:{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub h: f64,
    pub shell: f64,
    pub t_max: f64,
    pub delta_n: f64,
    pub c_n: f64,
    pub kill_mode: KillMode,
    pub nu_eval: NuEval,
    /// Multiplier on the shell local-time estimate.
    pub kappa_l: f64,
    /// Brownian-bridge check for boundary contacts between grid times.
    pub bridge: bool,
    /// Leap over runs of steps far from every edge with a single Gaussian draw
    /// (exact in law up to an event of probability below 1e-9 per leap).
    pub leap: bool,
    pub seed: u64,
    pub paths: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            h: 1e-5,
            shell: 3.0 * 1e-5f64.sqrt(),
            t_max: 1.0,
            delta_n: 0.0,
            c_n: 1.0,
            kill_mode: KillMode::ElasticClock,
            nu_eval: NuEval::SigmaSide,
            kappa_l: 1.0,
            bridge: true,
            leap: true,
            seed: 1,
            paths: 1000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} = {v} must be positive")))
            }
        };
        positive("h", self.h)?;
        positive("shell", self.shell)?;
        positive("kappa_l", self.kappa_l)?;
        if !(self.t_max > 0.0) {
            return Err(Error::Parameter(format!("t_max = {} must be positive", self.t_max)));
        }
        if !(self.delta_n >= 0.0 && self.delta_n.is_finite()) {
            return Err(Error::Parameter(format!("delta_n = {} must be non-negative", self.delta_n)));
        }
        if !(self.c_n >= 0.0) {
            return Err(Error::Parameter(format!("c_n = {} must be non-negative", self.c_n)));
        }
        if let NuEval::Fixed(nu) = self.nu_eval {
            if !(0.0..=1.0).contains(&nu) {
                return Err(Error::Parameter(format!("fixed nu = {nu} outside [0, 1]")));
            }
        }
        if self.paths == 0 {
            return Err(Error::Parameter("path count must be positive".into()));
        }
        if self.shell < 3.0 * self.h.sqrt() {
            log::warn!(
                "shell width {} is below 3*sqrt(h) = {}; grazing contacts are under-resolved",
                self.shell,
                3.0 * self.h.sqrt()
            );
        }
        Ok(())
    }

    /// Whether the exponential clock on the local time is armed.
    pub fn clock_active(&self) -> bool {
        match self.kill_mode {
            KillMode::ElasticClock => true,
            KillMode::ReflectInterface => self.c_n > 0.0,
            _ => false,
        }
    }
}

/// Transmission probability `c w / (1 + c w)`.
pub fn nu_of(c_n: f64, w_val: f64) -> Result<f64> {
    if !(c_n >= 0.0) || !(w_val >= 0.0) {
        return Err(Error::Parameter(format!("nu_of needs c_n >= 0 and w >= 0, got {c_n}, {w_val}")));
    }
    Ok(nu_unchecked(c_n, w_val))
}

#[inline]
fn nu_unchecked(c_n: f64, w_val: f64) -> f64 {
    let x = c_n * w_val;
    if x.is_infinite() {
        1.0
    } else {
        x / (1.0 + x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Running,
    Absorbed,
    Killed,
    HorizonReached,
    /// Stopped early by the path observer (e.g. negligible remaining weight).
    Stopped,
}

/// Per-path accumulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFunctionals {
    pub gamma_omega: f64,
    pub gamma_sigma: f64,
    pub l_sym: f64,
    pub l_left: f64,
    pub l_right: f64,
    pub crossings: u64,
    /// Interface events resolved to the fiber side.
    pub sigma_choices: u64,
    pub lifetime: f64,
    pub cause: Termination,
    pub zeta: f64,
    pub steps: u64,
    /// Steps where the crossing loop gave up (corner ping-pong).
    pub anomalies: u64,
}

impl PathFunctionals {
    fn new(zeta: f64) -> Self {
        PathFunctionals {
            gamma_omega: 0.0,
            gamma_sigma: 0.0,
            l_sym: 0.0,
            l_left: 0.0,
            l_right: 0.0,
            crossings: 0,
            sigma_choices: 0,
            lifetime: 0.0,
            cause: Termination::Running,
            zeta,
            steps: 0,
            anomalies: 0,
        }
    }
}

/// Independent random streams of one path.
pub struct PathStreams {
    pub gauss: ChaCha8Rng,
    pub skew: ChaCha8Rng,
    pub clock: ChaCha8Rng,
    pub bridge: ChaCha8Rng,
}

impl PathStreams {
    pub fn new(seed: u64, path: u64) -> Self {
        let make = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(path.wrapping_mul(4).wrapping_add(k));
            r
        };
        PathStreams {
            gauss: make(0),
            skew: make(1),
            clock: make(2),
            bridge: make(3),
        }
    }
}

/// Draw of an exponential threshold with rate c from a unit exponential; rate 0 gives +inf.
#[inline]
pub fn exp_threshold(unit: f64, c: f64) -> f64 {
    if c == 0.0 {
        f64::INFINITY
    } else {
        unit / c
    }
}

/// Callback invoked at the start of every step.
pub trait PathObserver<P> {
    /// Return false to stop the path with cause `Stopped`.
    fn observe(&mut self, t: f64, pos: P, side: Side, f: &PathFunctionals) -> bool;

    /// Whether the observer must see every grid time. When false the walker may
    /// leap over several steps far from all edges.
    fn every_step(&self) -> bool {
        true
    }
}

impl<P> PathObserver<P> for () {
    #[inline]
    fn observe(&mut self, _: f64, _: P, _: Side, _: &PathFunctionals) -> bool {
        true
    }

    fn every_step(&self) -> bool {
        false
    }
}

/// Resolves an interface hit: draws the fiber side with probability `nu`, keeps
/// `proposed` if it is already there and mirrors it across the edge otherwise.
pub fn skew_resolve<M: Medium, R: Rng + ?Sized>(
    medium: &M,
    hit: M::P,
    proposed: M::P,
    nu: f64,
    edge: usize,
    rng: &mut R,
) -> (M::P, Side) {
    let to_sigma = rng.random::<f64>() < nu;
    let side = if to_sigma { Side::Sigma } else { Side::Omega };
    if proposed.minus(hit).length() == 0.0 {
        return (hit, side);
    }
    if medium.fiber_side_of(edge, proposed) == to_sigma {
        (proposed, side)
    } else {
        (medium.mirror(edge, proposed), side)
    }
}

const MAX_EVENTS: usize = 64;
/// Leaps of several steps are taken only when the displacement needed to reach
/// any edge is at least this many standard deviations of the leap (per axis).
const LEAP_Z: f64 = 6.5;
/// Clearance search radius for leaps, in units of the shell width.
const LEAP_CAP: f64 = 64.0;
/// Bridge contacts with 2 d1 d2 / h above this are ignored (probability < 2e-9).
const BRIDGE_EXPONENT_CUT: f64 = 20.0;

enum Moved<P> {
    To(P, Side),
    /// Absorbed at P after this fraction of the step.
    Absorbed(P, f64),
}

struct Walker<'a, M: Medium> {
    medium: &'a M,
    cfg: &'a SimConfig,
    sqrt_h: f64,
    lt_scale: f64,
    bridge_cut: f64,
}

impl<'a, M: Medium> Walker<'a, M> {
    fn nu_at(&self, edge: usize, p: M::P) -> f64 {
        match self.cfg.kill_mode {
            KillMode::ReflectInterface => 0.0,
            _ => match self.cfg.nu_eval {
                NuEval::Fixed(v) => v,
                NuEval::Constant => nu_unchecked(self.cfg.c_n, 1.0),
                NuEval::SigmaSide => nu_unchecked(self.cfg.c_n, self.medium.interface_weight(edge, p)),
            },
        }
    }

    fn outer_absorbs(&self) -> bool {
        !matches!(self.cfg.kill_mode, KillMode::ReflectInterface)
    }

    /// Follows a -> b through interface and boundary events.
    fn trace(
        &self,
        mut a: M::P,
        mut b: M::P,
        mut side: Side,
        mut skip: Option<usize>,
        streams: &mut PathStreams,
        f: &mut PathFunctionals,
    ) -> (Moved<M::P>, f64, bool, M::P) {
        let mut frac = 1.0;
        let mut touched_interface = false;
        for _ in 0..MAX_EVENTS {
            let hit = match self.medium.first_hit(a, b, skip) {
                None => return (Moved::To(b, side), frac, touched_interface, a),
                Some(h) => h,
            };
            let y = a.plus(b.minus(a).times(hit.t));
            frac *= 1.0 - hit.t;
            match hit.kind {
                EdgeKind::Interface => {
                    if self.cfg.kill_mode == KillMode::AbsorbInterface {
                        return (Moved::Absorbed(y, 1.0 - frac), frac, true, y);
                    }
                    let nu = self.nu_at(hit.edge, y);
                    let (nb, ns) = skew_resolve(self.medium, y, b, nu, hit.edge, &mut streams.skew);
                    f.crossings += 1;
                    if ns == Side::Sigma {
                        f.sigma_choices += 1;
                    }
                    b = nb;
                    side = ns;
                    touched_interface = true;
                }
                EdgeKind::Outer if self.outer_absorbs() => {
                    return (Moved::Absorbed(y, 1.0 - frac), frac, touched_interface, y);
                }
                EdgeKind::Outer | EdgeKind::Wall => {
                    b = self.medium.mirror(hit.edge, b);
                }
            }
            a = y;
            skip = Some(hit.edge);
        }
        f.anomalies += 1;
        (Moved::To(a, side), frac, touched_interface, a)
    }

    /// Bridge contact probability exp(-2 d1 d2 / t) given both distances.
    #[inline]
    fn contact(d1: f64, d2: f64, t: f64) -> f64 {
        let e = 2.0 * d1 * d2 / t;
        if e > BRIDGE_EXPONENT_CUT {
            0.0
        } else {
            (-e).exp()
        }
    }

    fn slow_move(
        &self,
        pos: M::P,
        side: Side,
        dz: M::P,
        streams: &mut PathStreams,
        f: &mut PathFunctionals,
    ) -> Moved<M::P> {
        let start = pos;
        let (moved, frac, touched, last) = self.trace(start, start.plus(dz), side, None, streams, f);
        let (b, side_b) = match moved {
            Moved::Absorbed(p, e) => return Moved::Absorbed(p, e),
            Moved::To(b, s) => (b, s),
        };
        if !self.cfg.bridge {
            return Moved::To(b, side_b);
        }
        let t_rem = (frac * self.cfg.h).max(f64::MIN_POSITIVE);
        let span = b.minus(last).length();

        // outer boundary
        if self.outer_absorbs() && self.cfg.kill_mode != KillMode::AbsorbInterface {
            {
                let cap = self.bridge_cut + span;
                if let Some(da) = self.medium.outer_gap(last, side_b, cap) {
                    if let Some(db) = self.medium.outer_gap(b, side_b, da + span + self.bridge_cut) {
                        let p = Self::contact(da, db, t_rem);
                        if p > 0.0 && streams.bridge.random::<f64>() < p {
                            return Moved::Absorbed(b, 1.0 - 0.5 * frac);
                        }
                    }
                }
            }
        }

        // interface
        let interface_live = match self.cfg.kill_mode {
            KillMode::ReflectInterface => false,
            KillMode::AbsorbInterface => true,
            _ => !matches!(self.cfg.nu_eval, NuEval::Fixed(v) if v == 0.0),
        };
        if interface_live && !touched {
            {
                let cap = self.bridge_cut + span;
                if let Some((da, _)) = self.medium.interface_gap(last, cap) {
                    if let Some((db, eb)) = self.medium.interface_gap(b, da + span + self.bridge_cut) {
                        let p = Self::contact(da, db, t_rem);
                        if p > 0.0 && streams.bridge.random::<f64>() < p {
                            if self.cfg.kill_mode == KillMode::AbsorbInterface {
                                return Moved::Absorbed(b, 1.0 - 0.5 * frac);
                            }
                            let nu = self.nu_at(eb, b);
                            let foot = self.foot_on(eb, b);
                            let (nb, ns) = skew_resolve(self.medium, foot, b, nu, eb, &mut streams.skew);
                            f.crossings += 1;
                            if ns == Side::Sigma {
                                f.sigma_choices += 1;
                            }
                            if ns == side_b {
                                return Moved::To(b, side_b);
                            }
                            let (moved, _, _, _) = self.trace(foot, nb, ns, Some(eb), streams, f);
                            return moved;
                        }
                    }
                }
            }
        }
        Moved::To(b, side_b)
    }

    /// Midpoint between p and its mirror image: the foot on the edge's line.
    fn foot_on(&self, edge: usize, p: M::P) -> M::P {
        let m = self.medium.mirror(edge, p);
        p.plus(m.minus(p).times(0.5))
    }

    fn run<O: PathObserver<M::P>>(&self, x0: M::P, path: u64, obs: &mut O) -> Result<PathFunctionals> {
        let cfg = self.cfg;
        let mut streams = PathStreams::new(cfg.seed, path);
        let unit: f64 = Exp1.sample(&mut streams.clock);
        let zeta = if cfg.clock_active() {
            exp_threshold(unit, cfg.c_n)
        } else {
            f64::INFINITY
        };
        let mut f = PathFunctionals::new(zeta);
        let mut side = self.medium.locate(x0)?;
        let mut pos = x0;
        if self.outer_absorbs() && self.medium.on_outer(pos) {
            f.cause = Termination::Absorbed;
            return Ok(f);
        }
        let h = cfg.h;
        let n_steps = (cfg.t_max / h - 1e-9).ceil().max(0.0) as u64;
        let lt_one_sided = self.lt_scale * h / cfg.shell;
        let need = cfg.shell.max(self.bridge_cut);
        let leap = cfg.leap && !obs.every_step();
        let cap = if leap { LEAP_CAP * need } else { 8.0 * need };
        let mut anchor = pos;
        let mut anchor_r = self.medium.clearance(pos, cap);
        let mut k: u64 = 0;
        loop {
            let t = k as f64 * h;
            if k >= n_steps {
                f.cause = Termination::HorizonReached;
                f.lifetime = t;
                break;
            }
            if !obs.observe(t, pos, side, &f) {
                f.cause = Termination::Stopped;
                f.lifetime = t;
                break;
            }
            if leap {
                let mut lb = anchor_r - pos.minus(anchor).length();
                if lb < 0.5 * anchor_r && pos.minus(anchor).length() > 0.0 {
                    anchor = pos;
                    anchor_r = self.medium.clearance(pos, cap);
                    lb = anchor_r;
                }
                let room = lb - need;
                if room > 0.0 {
                    let span = ((room * room) / (2.0 * LEAP_Z * LEAP_Z * h)).floor() as u64;
                    let span = span.min(n_steps - k);
                    if span >= 2 {
                        let dz = M::P::gaussian(&mut streams.gauss, (span as f64 * h).sqrt());
                        pos = pos.plus(dz);
                        k += span;
                        f.steps += span;
                        match side {
                            Side::Omega => f.gamma_omega += span as f64 * h,
                            Side::Sigma => f.gamma_sigma += span as f64 * h,
                        }
                        continue;
                    }
                }
            }
            let dz = M::P::gaussian(&mut streams.gauss, self.sqrt_h);
            let step_len = dz.length();
            let mut lb = anchor_r - pos.minus(anchor).length();
            let fast_ok = |lb: f64| lb >= cfg.shell && step_len < lb && lb * (lb - step_len) * 2.0 > BRIDGE_EXPONENT_CUT * h;
            if !fast_ok(lb) && pos.minus(anchor).length() > 0.0 {
                anchor = pos;
                anchor_r = self.medium.clearance(pos, cap);
                lb = anchor_r;
            }
            k += 1;
            f.steps += 1;
            if fast_ok(lb) {
                pos = pos.plus(dz);
                match side {
                    Side::Omega => f.gamma_omega += h,
                    Side::Sigma => f.gamma_sigma += h,
                }
                continue;
            }

            // left-endpoint shell accounting and contact
            if let Some((d, _)) = self.medium.interface_gap(pos, cfg.shell) {
                if d < cfg.shell {
                    if cfg.kill_mode == KillMode::AbsorbInterface {
                        f.cause = Termination::Absorbed;
                        f.lifetime = t;
                        break;
                    }
                    match side {
                        Side::Omega => f.l_left += lt_one_sided,
                        Side::Sigma => f.l_right += lt_one_sided,
                    }
                    f.l_sym = 0.5 * (f.l_left + f.l_right);
                }
            }
            // the clock fires at the end of the step unless absorption comes first
            let killed = f.l_sym > f.zeta;

            match self.slow_move(pos, side, dz, &mut streams, &mut f) {
                Moved::Absorbed(p, elapsed) => {
                    pos = p;
                    f.cause = Termination::Absorbed;
                    f.lifetime = t + elapsed * h;
                    match side {
                        Side::Omega => f.gamma_omega += elapsed * h,
                        Side::Sigma => f.gamma_sigma += elapsed * h,
                    }
                    break;
                }
                Moved::To(p, s) => {
                    pos = p;
                    side = s;
                    match side {
                        Side::Omega => f.gamma_omega += h,
                        Side::Sigma => f.gamma_sigma += h,
                    }
                    if killed {
                        f.cause = Termination::Killed;
                        f.lifetime = t + h;
                        break;
                    }
                }
            }
        }
        let _ = pos;
        Ok(f)
    }
}

/// Simulates one path from x0 with the streams of `path`.
pub fn run_path<M: Medium, O: PathObserver<M::P>>(
    medium: &M,
    x0: M::P,
    cfg: &SimConfig,
    path: u64,
    obs: &mut O,
) -> Result<PathFunctionals> {
    let w = Walker {
        medium,
        cfg,
        sqrt_h: cfg.h.sqrt(),
        lt_scale: cfg.kappa_l * medium.local_time_scale(),
        bridge_cut: (0.5 * BRIDGE_EXPONENT_CUT * cfg.h).sqrt(),
    };
    w.run(x0, path, obs)
}

/// Runs `cfg.paths` independent paths in parallel, in path order.
pub fn run_paths<M, O, F>(medium: &M, x0: M::P, cfg: &SimConfig, make_observer: F) -> Result<Vec<(PathFunctionals, O)>>
where
    M: Medium,
    O: PathObserver<M::P> + Send,
    F: Fn(u64) -> O + Sync,
{
    cfg.validate()?;
    (0..cfg.paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut obs = make_observer(i);
            run_path(medium, x0, cfg, i, &mut obs).map(|f| (f, obs))
        })
        .collect()
}

/// Plain functionals of `cfg.paths` paths.
pub fn simulate<M: Medium>(medium: &M, x0: M::P, cfg: &SimConfig) -> Result<Vec<PathFunctionals>> {
    Ok(run_paths(medium, x0, cfg, |_| ())?.into_iter().map(|(f, _)| f).collect())
}

/// Positions sampled along a path for trace dumps.
#[derive(Debug, Clone, Default)]
pub struct TraceRecorder<P> {
    pub every: u64,
    pub rows: Vec<(f64, P, Side, f64)>,
    count: u64,
}

impl<P> TraceRecorder<P> {
    pub fn new(every: u64) -> Self {
        TraceRecorder {
            every: every.max(1),
            rows: Vec::new(),
            count: 0,
        }
    }
}

impl<P: Copy> PathObserver<P> for TraceRecorder<P> {
    fn observe(&mut self, t: f64, pos: P, side: Side, f: &PathFunctionals) -> bool {
        if self.count % self.every == 0 {
            self.rows.push((t, pos, side, f.l_sym));
        }
        self.count += 1;
        true
    }
}

impl Medium for DomainModel {
    type P = Vec2;

    fn local_time_scale(&self) -> f64 {
        self.sigma_n
    }

    fn locate(&self, p: Vec2) -> Result<Side> {
        if self.in_omega(p) || self.interface_distance(p, 1e-12).is_some() {
            Ok(Side::Omega)
        } else if self.fiber_cell_at(p).is_some() {
            Ok(Side::Sigma)
        } else {
            Err(Error::Domain(format!("start ({}, {}) is outside the composite domain", p.x, p.y)))
        }
    }

    fn on_outer(&self, p: Vec2) -> bool {
        let tol = 1e-12 * self.segment_length();
        self.roof_distance(p, tol).is_some() && self.interface_distance(p, tol).is_none()
    }

    #[inline]
    fn first_hit(&self, a: Vec2, b: Vec2, skip: Option<usize>) -> Option<EdgeHit> {
        let min_len = 1e-13 * self.segment_length();
        self.first_crossing(a, b, skip, min_len).map(|(t, id)| EdgeHit {
            t,
            edge: id,
            kind: match self.edge_class(id) {
                EdgeClass::Interface(_) => EdgeKind::Interface,
                EdgeClass::Roof(_) => EdgeKind::Outer,
            },
        })
    }

    #[inline]
    fn mirror(&self, edge: usize, p: Vec2) -> Vec2 {
        let (a, b) = self.edge(edge);
        mirror_across(p, a, b)
    }

    #[inline]
    fn fiber_side_of(&self, edge: usize, p: Vec2) -> bool {
        let (a, b) = self.edge(edge);
        (b - a).cross(p - a) > 0.0
    }

    fn interface_weight(&self, edge: usize, p: Vec2) -> f64 {
        let (a, b) = self.interface_segment(edge);
        let d = b - a;
        let s = ((p - a).dot(d) / d.norm2()).clamp(0.0, 1.0);
        self.fiber_weight_at_param(s)
    }

    #[inline]
    fn interface_gap(&self, p: Vec2, cap: f64) -> Option<(f64, usize)> {
        self.interface_distance(p, cap).map(|(d, e, _)| (d, e))
    }

    fn outer_gap(&self, p: Vec2, side: Side, cap: f64) -> Option<f64> {
        match side {
            Side::Omega => None,
            Side::Sigma => self.roof_distance(p, cap).map(|(d, _, _)| d),
        }
    }

    #[inline]
    fn clearance(&self, p: Vec2, cap: f64) -> f64 {
        DomainModel::clearance(self, p, cap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::max_fiber_b;

    #[test]
    fn nu_formula_values() {
        assert_eq!(nu_of(0.0, 0.3).unwrap(), 0.0);
        assert_eq!(nu_of(2.0, 0.5).unwrap(), 0.5);
        assert!(nu_of(1e300, 1e10).unwrap() > 0.999_999);
        assert_eq!(nu_of(f64::INFINITY, 1.0).unwrap(), 1.0);
        assert!(nu_of(-1.0, 1.0).is_err());
        assert!(nu_of(1.0, -1.0).is_err());
    }

    #[test]
    fn zero_rate_threshold_is_infinite() {
        assert_eq!(exp_threshold(0.7, 0.0), f64::INFINITY);
        assert_eq!(exp_threshold(0.7, 2.0), 0.35);
    }

    #[test]
    fn parse_modes() {
        assert_eq!("elastic-clock".parse::<KillMode>().unwrap(), KillMode::ElasticClock);
        assert_eq!("AbsorbOuter".parse::<KillMode>().unwrap(), KillMode::AbsorbOuter);
        assert!("bogus".parse::<KillMode>().is_err());
        assert_eq!("fixed:0.3".parse::<NuEval>().unwrap(), NuEval::Fixed(0.3));
        assert!("fixed:1.3".parse::<NuEval>().is_err());
    }

    fn snowflake(level: u32) -> DomainModel {
        DomainModel::build(3.0, level, max_fiber_b(3.0)).unwrap()
    }

    #[test]
    fn skew_resolve_zero_nu_lands_on_omega_side() {
        let d = snowflake(1);
        let (a, b) = d.interface_segment(0);
        let hit = (a + b) * 0.5;
        let outward = (b - a).perp() * 0.01;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (p, s) = skew_resolve(&d, hit, hit + outward, 0.0, 0, &mut rng);
            assert_eq!(s, Side::Omega);
            assert!(!d.fiber_side_of(0, p));
        }
    }

    #[test]
    fn start_on_outer_boundary_is_absorbed_immediately() {
        let d = snowflake(2);
        let cfg = SimConfig {
            kill_mode: KillMode::AbsorbOuter,
            ..SimConfig::default()
        };
        let apex = d.apexes[4];
        let f = run_path(&d, apex, &cfg, 0, &mut ()).unwrap();
        assert_eq!(f.cause, Termination::Absorbed);
        assert_eq!(f.lifetime, 0.0);
    }

    #[test]
    fn start_outside_is_a_domain_error() {
        let d = snowflake(2);
        let cfg = SimConfig::default();
        assert!(matches!(
            run_path(&d, Vec2::new(4.0, 4.0), &cfg, 0, &mut ()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn same_seed_same_functionals() {
        let d = snowflake(2);
        let cfg = SimConfig {
            h: 1e-4,
            shell: 0.03,
            t_max: 0.05,
            c_n: 5.0,
            ..SimConfig::default()
        };
        let x0 = Vec2::new(0.5, -0.25);
        let f1 = run_path(&d, x0, &cfg, 17, &mut ()).unwrap();
        let f2 = run_path(&d, x0, &cfg, 17, &mut ()).unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn local_time_identity_holds() {
        let d = snowflake(2);
        let cfg = SimConfig {
            h: 1e-4,
            shell: 0.03,
            t_max: 0.2,
            c_n: 3.0,
            kill_mode: KillMode::AbsorbOuter,
            paths: 50,
            ..SimConfig::default()
        };
        let fs = simulate(&d, Vec2::new(0.5, -0.1), &cfg).unwrap();
        for f in &fs {
            assert_eq!(f.l_sym, 0.5 * (f.l_left + f.l_right));
            assert!(f.gamma_omega + f.gamma_sigma <= f.lifetime + 1e-12);
        }
        assert!(fs.iter().any(|f| f.l_sym > 0.0));
    }
}
