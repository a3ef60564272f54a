//! Monte Carlo for the h-transformed Brownian motion in the cylinder
//! coordinates `(t, theta)`: `dt = ds/t + dW_1`, `dtheta = dW_2`.
//!
//! The radial part is a three-dimensional Bessel process. Paths run until
//! `t >= t_max`; an optional exact return rule accounts for excursions back
//! below `t_max` so that hitting probabilities refer to the whole path.

use std::f64::consts::TAU;
use std::io::Write;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{equilibrium_capacity, potential_eval, EquilibriumOptions};
use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, shell_bounds, shell_decompose, CompactSetSpec, LogPolarPoint, Primitive};
use crate::kernels::KernelKind;
use crate::registry::{Named, Registry};

/// Largest admissible base step.
pub const MAX_STEP: f64 = 0.5;

/// One transition of the radial coordinate over time `dt`.
pub trait RadialScheme: Named + Send + Sync {
    /// New `t`; a value `<= 0` means the path left through the unit circle.
    fn advance(&self, t: f64, dt: f64, rng: &mut ChaCha8Rng) -> f64;
}

/// Exact transition: the norm of a 3D Gaussian centred at `(t, 0, 0)`.
/// Never reaches `t = 0`.
pub struct ExactBes3;

impl Named for ExactBes3 {
    fn name(&self) -> &'static str {
        "exact_bes3"
    }
}

impl RadialScheme for ExactBes3 {
    fn advance(&self, t: f64, dt: f64, rng: &mut ChaCha8Rng) -> f64 {
        let s = dt.sqrt();
        let x = t + s * rng.sample::<f64, _>(StandardNormal);
        let y = s * rng.sample::<f64, _>(StandardNormal);
        let z = s * rng.sample::<f64, _>(StandardNormal);
        (x * x + y * y + z * z).sqrt()
    }
}

/// Euler-Maruyama with drift `1/t`; may overshoot below zero.
pub struct EulerMaruyama;

impl Named for EulerMaruyama {
    fn name(&self) -> &'static str {
        "euler"
    }
}

impl RadialScheme for EulerMaruyama {
    fn advance(&self, t: f64, dt: f64, rng: &mut ChaCha8Rng) -> f64 {
        t + dt / t + dt.sqrt() * rng.sample::<f64, _>(StandardNormal)
    }
}

pub fn scheme_registry() -> &'static Registry<dyn RadialScheme> {
    static REG: OnceLock<Registry<dyn RadialScheme>> = OnceLock::new();
    REG.get_or_init(|| {
        let exact: Arc<dyn RadialScheme> = Arc::new(ExactBes3);
        let euler: Arc<dyn RadialScheme> = Arc::new(EulerMaruyama);
        Registry::new("radial scheme").with(exact).with(euler).with_default("exact_bes3")
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McOptions {
    /// Smallest time step, used next to obstacles.
    pub step: f64,
    pub t_max: f64,
    /// Shell ratio for recording hit events.
    pub a: f64,
    /// Stop at the first hit instead of recording first hits per shell.
    pub stop_at_first_hit: bool,
    /// On passing `t_max` at some `t`, return to `t_max / 2` with the exact
    /// Bessel probability `t_max / (2t)` at a uniform angle.
    pub radial_return: bool,
    /// Keep every `store_every`-th point; 0 keeps only the endpoints.
    pub store_every: usize,
    pub max_steps: usize,
    pub scheme: Option<String>,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            step: 0.01,
            t_max: 64.0,
            a: 2.0,
            stop_at_first_hit: false,
            radial_return: true,
            store_every: 0,
            max_steps: 50_000_000,
            scheme: None,
        }
    }
}

impl McOptions {
    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || self.step > MAX_STEP {
            return Err(Error::Parameter(format!("step must lie in (0, {MAX_STEP}], got {}", self.step)));
        }
        if !(self.t_max > 0.0) || !self.t_max.is_finite() {
            return Err(Error::Parameter(format!("t_max must be positive, got {}", self.t_max)));
        }
        if !(self.a > 1.0) {
            return Err(Error::Parameter(format!("shell ratio must exceed 1, got {}", self.a)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitEvent {
    pub shell: i32,
    pub t: f64,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub trajectory: Vec<LogPolarPoint>,
    /// First hit of each shell, in order of occurrence.
    pub hit_events: Vec<HitEvent>,
    pub died_at_boundary: bool,
    pub reached_t_max: bool,
    /// Step index of the first hit.
    pub m_exit: Option<usize>,
    pub steps: usize,
}

/// Shell index with the level circle `t = a^n` in shell `n`.
pub fn shell_of(t: f64, a: f64) -> i32 {
    let mut n = (t.ln() / a.ln()).floor() as i32;
    if a.powi(n + 1) <= t {
        n += 1;
    }
    if a.powi(n) > t {
        n -= 1;
    }
    n
}

/// A radial segment far shorter than the step scale. Paths cannot resolve it,
/// so hits are drawn from the planar log-capacity law inside a small zone.
#[derive(Debug, Clone, Copy)]
struct Micro {
    shell: i32,
    t: f64,
    theta: f64,
    /// Logarithmic capacity of a segment: a quarter of its length.
    ln_cap: f64,
}

/// The set cut into shell pieces, each tagged with its shell index, so that
/// shells already hit can be skipped.
struct Obstacles {
    regular: Vec<(i32, Primitive)>,
    /// End points of curve pieces, where the line-crossing law is least accurate.
    tips: Vec<(i32, LogPolarPoint)>,
    micro: Vec<Micro>,
    zone: f64,
}

impl Obstacles {
    fn new(k: &CompactSetSpec, step: f64, a: f64) -> Self {
        let zone = 0.5 * step.sqrt();
        let mut regular = Vec::new();
        let mut micro = Vec::new();
        for p in &k.primitives {
            if let Primitive::RadialSegment { t_hi, theta, .. } = *p {
                let ll = p.log_length().unwrap();
                if ll < (0.01 * zone).ln() {
                    // the top end point alone would fall in the next shell
                    let mut shell = shell_of(t_hi, a);
                    if a.powi(shell) == t_hi {
                        shell -= 1;
                    }
                    micro.push(Micro { shell, t: t_hi, theta, ln_cap: ll - 4f64.ln() });
                    continue;
                }
            }
            let (lo, hi) = p.t_range();
            for n in shell_of(lo, a)..=shell_of(hi, a) {
                let (slo, shi) = shell_bounds(a, n);
                if let Some(piece) = p.clip_t(slo, shi) {
                    // a circle on the shared level belongs to the upper shell only
                    if !matches!(piece, Primitive::Arc { t, .. } if t == shi) {
                        regular.push((n, piece));
                    }
                }
            }
        }
        let mut tips = Vec::new();
        for &(n, p) in &regular {
            match p {
                Primitive::RadialSegment { t_lo, t_hi, theta, .. } => {
                    tips.push((n, LogPolarPoint { t: t_lo, theta }));
                    tips.push((n, LogPolarPoint { t: t_hi, theta }));
                }
                Primitive::Arc { t, theta_lo, theta_hi } if theta_hi - theta_lo < TAU - 1e-12 => {
                    tips.push((n, LogPolarPoint { t, theta: theta_lo }));
                    tips.push((n, LogPolarPoint { t, theta: theta_hi }));
                }
                _ => {}
            }
        }
        Self { regular, tips, micro, zone }
    }

    fn tip_clearance(&self, p: &LogPolarPoint, active: &impl Fn(i32) -> bool) -> f64 {
        self.tips
            .iter()
            .filter(|(n, _)| active(*n))
            .map(|(_, q)| q.cylinder_distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    fn clearance(&self, p: &LogPolarPoint, active: &impl Fn(i32) -> bool) -> f64 {
        let a = self
            .regular
            .iter()
            .filter(|(n, _)| active(*n))
            .map(|(_, q)| q.distance(p))
            .fold(f64::INFINITY, f64::min);
        let b = self
            .micro
            .iter()
            .filter(|m| active(m.shell))
            .map(|m| (LogPolarPoint { t: m.t, theta: m.theta }.cylinder_distance(p) - self.zone).max(0.0))
            .fold(f64::INFINITY, f64::min);
        a.min(b)
    }
}

/// Where along `s in [0, 1]` the chord `p0 -> p1` first meets `q`, if it does.
fn chord_crossing(q: &Primitive, t0: f64, th0: f64, t1: f64, th1: f64) -> Option<f64> {
    let dth = th1 - th0;
    match *q {
        Primitive::RadialSegment { t_lo, t_hi, theta, .. } => {
            if dth == 0.0 {
                return None;
            }
            let (lo, hi) = (th0.min(th1), th0.max(th1));
            let mut k = ((lo - theta) / TAU).ceil();
            let mut best: Option<f64> = None;
            while theta + k * TAU <= hi {
                let s = (theta + k * TAU - th0) / dth;
                let tc = t0 + s * (t1 - t0);
                if tc >= t_lo && tc <= t_hi {
                    best = Some(best.map_or(s, |b| b.min(s)));
                }
                k += 1.0;
            }
            best
        }
        Primitive::Arc { t, theta_lo, theta_hi } => {
            if (t0 - t) * (t1 - t) > 0.0 || t0 == t1 {
                return None;
            }
            let s = (t - t0) / (t1 - t0);
            let span = theta_hi - theta_lo;
            let off = normalize_angle(th0 + s * dth - theta_lo);
            (span >= TAU - 1e-12 || off <= span).then_some(s)
        }
        _ => (0..=8).map(|i| i as f64 / 8.0).find(|&s| {
            let p = LogPolarPoint { t: t0 + s * (t1 - t0), theta: th0 + s * dth };
            q.distance(&p) <= 0.0
        }),
    }
}

/// Whether the Brownian bridge between two points on the same side of `q`
/// touches it. Curves use the exact crossing law of their supporting line,
/// `exp(-2 n0 n1 / dt)` with normal distances `n0, n1`, and place the
/// crossing by interpolation along the chord. Areas use distances instead.
fn bridge_hit(q: &Primitive, t0: f64, th0: f64, t1: f64, th1: f64, dt: f64, rng: &mut ChaCha8Rng) -> Option<(f64, f64)> {
    let crosses = |n0: f64, n1: f64, rng: &mut ChaCha8Rng| {
        let x = 2.0 * n0 * n1 / dt;
        (x < 40.0 && rng.random::<f64>() < (-x).exp()).then(|| n0 / (n0 + n1))
    };
    match *q {
        Primitive::RadialSegment { t_lo, t_hi, theta, .. } => {
            let mid = 0.5 * (th0 + th1);
            let line = theta + ((mid - theta) / TAU).round() * TAU;
            let (n0, n1) = (th0 - line, th1 - line);
            if n0 * n1 <= 0.0 {
                return None;
            }
            let s = crosses(n0.abs(), n1.abs(), rng)?;
            let tc = t0 + s * (t1 - t0);
            (tc >= t_lo && tc <= t_hi).then_some((s, tc))
        }
        Primitive::Arc { t, theta_lo, theta_hi } => {
            let (n0, n1) = (t0 - t, t1 - t);
            if n0 * n1 <= 0.0 {
                return None;
            }
            let s = crosses(n0.abs(), n1.abs(), rng)?;
            let span = theta_hi - theta_lo;
            let off = normalize_angle(th0 + s * (th1 - th0) - theta_lo);
            (span >= TAU - 1e-12 || off <= span).then_some((s, t))
        }
        _ => {
            let d0 = q.distance(&LogPolarPoint { t: t0, theta: th0 });
            let d1 = q.distance(&LogPolarPoint { t: t1, theta: th1 });
            let s = crosses(d0, d1, rng)?;
            let (lo, hi) = q.t_range();
            Some((s, (t0 + s * (t1 - t0)).clamp(lo, hi)))
        }
    }
}

/// Closest approach of the chord to a point, with the angle taken on the
/// copy of the point nearest the chord.
fn chord_point_distance(t0: f64, th0: f64, t1: f64, th1: f64, pt: f64, pth: f64) -> f64 {
    let mid = 0.5 * (th0 + th1);
    let pth = pth + ((mid - pth) / TAU).round() * TAU;
    let (dx, dy) = (t1 - t0, th1 - th0);
    let len2 = dx * dx + dy * dy;
    let s = if len2 > 0.0 { (((pt - t0) * dx + (pth - th0) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (t0 + s * dx - pt).hypot(th0 + s * dy - pth)
}

struct Walker<'a> {
    obs: &'a Obstacles,
    opts: &'a McOptions,
    scheme: &'a dyn RadialScheme,
}

impl Walker<'_> {
    fn run(&self, start: LogPolarPoint, rng: &mut ChaCha8Rng) -> Result<PathSample> {
        let o = self.opts;
        let (mut t, mut th) = (start.t, start.theta);
        let mut out = PathSample {
            trajectory: vec![start],
            hit_events: Vec::new(),
            died_at_boundary: false,
            reached_t_max: false,
            m_exit: None,
            steps: 0,
        };
        let hit = |out: &mut PathSample, shell: i32, t_hit: f64, step: usize| {
            if out.m_exit.is_none() {
                out.m_exit = Some(step);
            }
            if !out.hit_events.iter().any(|e| e.shell == shell) {
                out.hit_events.push(HitEvent { shell, t: t_hit, step });
            }
        };
        // the start itself may lie on the set
        for (n, q) in &self.obs.regular {
            if q.distance(&start) <= 0.0 {
                hit(&mut out, *n, start.t.clamp(q.t_range().0, q.t_range().1), 0);
                if o.stop_at_first_hit {
                    return Ok(out);
                }
            }
        }
        loop {
            let hit_before = out.hit_events.clone();
            let active = |n: i32| o.stop_at_first_hit || !hit_before.iter().any(|e| e.shell == n);
            if out.steps >= o.max_steps {
                return Err(Error::NoConvergence { iterations: out.steps, residual: t });
            }
            let here = LogPolarPoint { t, theta: th };
            let d = self.obs.clearance(&here, &active);
            let floor = o.step.min((t / 10.0).powi(2));
            let mut dt = (d / 5.0).powi(2).max(floor).min(25.0);
            // finer steps around curve tips, down to a 64th of the floor
            dt = dt.min((self.obs.tip_clearance(&here, &active) / 4.0).powi(2).max(floor / 64.0));
            let mut t1 = self.scheme.advance(t, dt, rng);
            let mut th1 = th + dt.sqrt() * rng.sample::<f64, _>(StandardNormal);
            out.steps += 1;
            let step = out.steps;
            if t1 <= 0.0 {
                out.died_at_boundary = true;
                out.trajectory.push(LogPolarPoint { t: t1.max(f64::MIN_POSITIVE), theta: normalize_angle(th1) });
                return Ok(out);
            }
            let mut first: Option<(f64, i32, f64)> = None;
            for (n, q) in self.obs.regular.iter().filter(|(n, _)| active(*n)) {
                let event = match chord_crossing(q, t, th, t1, th1) {
                    Some(s) => Some((s, t + s * (t1 - t))),
                    None => bridge_hit(q, t, th, t1, th1, dt, rng),
                };
                if let Some((s, t_hit)) = event {
                    if first.map_or(true, |(fs, _, _)| s < fs) {
                        first = Some((s, *n, t_hit));
                    }
                }
            }
            for m in self.obs.micro.iter().filter(|m| active(m.shell)) {
                let rho = chord_point_distance(t, th, t1, th1, m.t, m.theta);
                if rho >= self.obs.zone {
                    continue;
                }
                let outer = 2.0 * self.obs.zone;
                let ln_rho = rho.ln().max(m.ln_cap);
                let p = (outer.ln() - ln_rho) / (outer.ln() - m.ln_cap);
                if rng.random::<f64>() < p {
                    first = Some((0.0, m.shell, m.t));
                    break;
                }
                // escaped: continue from the outer circle of the zone
                let phi = TAU * rng.random::<f64>();
                t1 = (m.t + outer * phi.cos()).max(f64::MIN_POSITIVE);
                th1 = m.theta + ((th - m.theta) / TAU).round() * TAU + outer * phi.sin();
            }
            if let Some((_, shell, t_hit)) = first {
                hit(&mut out, shell, t_hit, step);
                if o.stop_at_first_hit {
                    out.trajectory.push(LogPolarPoint { t: t1, theta: normalize_angle(th1) });
                    return Ok(out);
                }
            }
            t = t1;
            th = th1;
            if o.store_every > 0 && step % o.store_every == 0 {
                out.trajectory.push(LogPolarPoint { t, theta: normalize_angle(th) });
            }
            if t >= o.t_max {
                // a Bessel(3) path from t reaches the level c < t with probability c / t
                if o.radial_return && rng.random::<f64>() < 0.5 * o.t_max / t {
                    t = 0.5 * o.t_max;
                    th = TAU * rng.random::<f64>();
                    continue;
                }
                out.reached_t_max = true;
                out.trajectory.push(LogPolarPoint { t, theta: normalize_angle(th) });
                return Ok(out);
            }
        }
    }
}

fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn check_start(start: &LogPolarPoint, opts: &McOptions) -> Result<()> {
    if !(start.t >= opts.step) || !start.theta.is_finite() {
        return Err(Error::Parameter(format!("start t={} must be at least the step {}", start.t, opts.step)));
    }
    if start.t >= opts.t_max {
        return Err(Error::Parameter(format!("start t={} is beyond t_max={}", start.t, opts.t_max)));
    }
    Ok(())
}

/// One path from `start`; `path_index` selects the random stream.
pub fn sample_hpath(
    start: &LogPolarPoint,
    omega_complement: &CompactSetSpec,
    opts: &McOptions,
    seed: u64,
    path_index: u64,
) -> Result<PathSample> {
    opts.validate()?;
    check_start(start, opts)?;
    omega_complement.validate()?;
    let obs = Obstacles::new(omega_complement, opts.step, opts.a);
    let scheme = scheme_registry().resolve(opts.scheme.as_deref())?;
    let walker = Walker { obs: &obs, opts, scheme: scheme.as_ref() };
    walker.run(*start, &mut path_rng(seed, path_index))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellFrequency {
    pub shell: i32,
    pub hits: u64,
    pub frequency: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitEstimate {
    pub n_paths: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub standard_error: f64,
    pub deaths: u64,
    pub reached_t_max: u64,
    pub shells: Vec<ShellFrequency>,
}

fn binomial(hits: u64, n: u64) -> (f64, f64) {
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

impl HitEstimate {
    /// Rows `shell,hits,frequency,standard_error`; the `all` row is `p_hat`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "shell,hits,frequency,standard_error")?;
        writeln!(w, "all,{},{},{}", self.hits, self.p_hat, self.standard_error)?;
        for s in &self.shells {
            writeln!(w, "{},{},{},{}", s.shell, s.hits, s.frequency, s.standard_error)?;
        }
        Ok(())
    }
}

#[derive(Default)]
struct Tally {
    hits: u64,
    deaths: u64,
    reached: u64,
    shells: std::collections::BTreeMap<i32, u64>,
}

impl Tally {
    fn add(mut self, p: &PathSample) -> Self {
        self.hits += u64::from(p.m_exit.is_some());
        self.deaths += u64::from(p.died_at_boundary);
        self.reached += u64::from(p.reached_t_max);
        for e in &p.hit_events {
            *self.shells.entry(e.shell).or_default() += 1;
        }
        self
    }

    fn merge(mut self, other: Self) -> Self {
        self.hits += other.hits;
        self.deaths += other.deaths;
        self.reached += other.reached;
        for (k, v) in other.shells {
            *self.shells.entry(k).or_default() += v;
        }
        self
    }

    fn finish(self, n: u64) -> HitEstimate {
        let (p_hat, standard_error) = binomial(self.hits, n);
        let shells = self
            .shells
            .into_iter()
            .map(|(shell, hits)| {
                let (frequency, standard_error) = binomial(hits, n);
                ShellFrequency { shell, hits, frequency, standard_error }
            })
            .collect();
        HitEstimate { n_paths: n, hits: self.hits, p_hat, standard_error, deaths: self.deaths, reached_t_max: self.reached, shells }
    }
}

fn run_many<S>(omega_complement: &CompactSetSpec, n_paths: u64, opts: &McOptions, seed: u64, start: S) -> Result<HitEstimate>
where
    S: Fn(&mut ChaCha8Rng) -> LogPolarPoint + Sync,
{
    if n_paths < 100 {
        return Err(Error::Parameter(format!("at least 100 paths are needed, got {n_paths}")));
    }
    opts.validate()?;
    omega_complement.validate()?;
    let mut opts = opts.clone();
    opts.store_every = 0;
    let obs = Obstacles::new(omega_complement, opts.step, opts.a);
    let scheme = scheme_registry().resolve(opts.scheme.as_deref())?;
    let walker = Walker { obs: &obs, opts: &opts, scheme: scheme.as_ref() };
    let tally = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let s = start(&mut rng);
            check_start(&s, &opts)?;
            walker.run(s, &mut rng)
        })
        .try_fold(Tally::default, |acc, p| p.map(|p| acc.add(&p)))
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;
    Ok(tally.finish(n_paths))
}

/// Fraction of `n_paths` paths from `start` that hit `omega_complement`, with
/// per-shell first-hit frequencies.
pub fn estimate_hit_probability(
    start: &LogPolarPoint,
    omega_complement: &CompactSetSpec,
    n_paths: u64,
    opts: &McOptions,
    seed: u64,
) -> Result<HitEstimate> {
    let s = *start;
    run_many(omega_complement, n_paths, opts, seed, move |_| s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawTrend {
    TendsToOne,
    BoundedBelowOne,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawRow {
    pub n: i32,
    pub start_t: f64,
    pub p_hat: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticLaw {
    pub rows: Vec<LawRow>,
    pub trend: LawTrend,
}

/// For each `n`, paths start uniformly on the circle `t = a^n` and the table
/// reports the probability of hitting the part of the set at `t >= a^n`.
pub fn asymptotic_law_experiment(
    omega_complement: &CompactSetSpec,
    n1: i32,
    n2: i32,
    n_paths: u64,
    opts: &McOptions,
    seed: u64,
) -> Result<AsymptoticLaw> {
    if n1 > n2 {
        return Err(Error::Parameter(format!("empty shell range {n1}..{n2}")));
    }
    let a = opts.a;
    let mut rows = Vec::new();
    for n in n1..=n2 {
        let start_t = a.powi(n);
        let upper = omega_complement.clip_t(start_t, f64::INFINITY);
        let mut o = opts.clone();
        o.stop_at_first_hit = true;
        let est = run_many(&upper, n_paths, &o, seed.wrapping_add(n as u64), |rng| LogPolarPoint {
            t: start_t,
            theta: TAU * rng.random::<f64>(),
        })?;
        rows.push(LawRow { n, start_t, p_hat: est.p_hat, standard_error: est.standard_error });
    }
    let last = rows.last().unwrap();
    let trend = if rows.iter().all(|r| r.p_hat == 0.0) {
        LawTrend::Zero
    } else if last.p_hat >= 1.0 - (3.0 * last.standard_error).max(0.02) {
        LawTrend::TendsToOne
    } else {
        LawTrend::BoundedBelowOne
    };
    Ok(AsymptoticLaw { rows, trend })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    pub t0: f64,
    pub samples: u64,
    /// Mean of `(t(dt) - t0) / dt`.
    pub mean_rate: f64,
    pub standard_error: f64,
    pub expected: f64,
}

/// Mean radial increment per unit time from `t0`, over independent single
/// transitions of length `dt`.
pub fn drift_experiment(t0: f64, dt: f64, samples: u64, scheme: Option<&str>, seed: u64) -> Result<DriftEstimate> {
    if !(t0 > 0.0) || !(dt > 0.0) || dt > MAX_STEP || samples < 2 {
        return Err(Error::Parameter("drift experiment needs t0 > 0, dt in (0, 0.5] and two samples".into()));
    }
    let scheme = scheme_registry().resolve(scheme)?;
    const CHUNK: u64 = 4096;
    let chunks = samples.div_ceil(CHUNK);
    let (s1, s2) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = path_rng(seed, c);
            let mut acc = (0.0, 0.0);
            for _ in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let r = (scheme.advance(t0, dt, &mut rng) - t0) / dt;
                acc.0 += r;
                acc.1 += r * r;
            }
            acc
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = samples as f64;
    let mean = s1 / n;
    let var = (s2 / n - mean * mean) * n / (n - 1.0);
    Ok(DriftEstimate { t0, samples, mean_rate: mean, standard_error: (var / n).sqrt(), expected: 1.0 / t0 })
}

/// Monte Carlo against potential theory for one shell: the hit probability
/// of `E_n` from the probe on its inner circle, and `R_h^{E_n}(x) / h(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellCheck {
    pub shell: i32,
    pub probe: LogPolarPoint,
    pub mc: f64,
    pub standard_error: f64,
    pub pde: f64,
    /// `(mc - pde) / standard_error`.
    pub z: f64,
}

/// Probe angle on the inner circle: the point of the circle farthest from
/// the shell.
fn probe_on_circle(shell: &CompactSetSpec, t: f64) -> LogPolarPoint {
    (0..64)
        .map(|i| LogPolarPoint { t, theta: i as f64 * TAU / 64.0 })
        .max_by(|p, q| shell.distance(p).total_cmp(&shell.distance(q)))
        .unwrap()
}

pub fn shell_cross_check(
    omega_complement: &CompactSetSpec,
    n1: i32,
    n2: i32,
    n_paths: u64,
    opts: &McOptions,
    seed: u64,
) -> Result<Vec<ShellCheck>> {
    let dec = shell_decompose(omega_complement, opts.a, n1, n2)?;
    let kind = KernelKind::LaplaceDisk;
    let eq = EquilibriumOptions { probe: false, ..Default::default() };
    dec.iter()
        .map(|(n, shell)| {
            let (lo, _) = dec.bounds(n);
            let probe = probe_on_circle(shell, lo);
            let mut o = opts.clone();
            o.stop_at_first_hit = true;
            o.a = opts.a;
            let est = estimate_hit_probability(&probe, shell, n_paths, &o, seed.wrapping_add(n as u64))?;
            let pde = if shell.is_empty() {
                0.0
            } else {
                let res = equilibrium_capacity(shell, &kind, &eq)?;
                potential_eval(&res.equilibrium, &probe, &kind)? / kind.h(&probe)
            };
            let z = if est.standard_error > 0.0 { (est.p_hat - pde) / est.standard_error } else { 0.0 };
            Ok(ShellCheck { shell: n, probe, mc: est.p_hat, standard_error: est.standard_error, pde, z })
        })
        .collect()
}

/// `path,step,t,theta` for a decimated dump of sample paths.
pub fn write_paths_csv<W: Write>(paths: &[PathSample], mut w: W) -> std::io::Result<()> {
    writeln!(w, "path,point,t,theta")?;
    for (i, p) in paths.iter().enumerate() {
        for (j, x) in p.trajectory.iter().enumerate() {
            writeln!(w, "{i},{j},{},{}", x.t, x.theta)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> McOptions {
        McOptions { t_max: 50.0, ..Default::default() }
    }

    #[test]
    fn step_bounds() {
        let k = CompactSetSpec::empty("D");
        let o = McOptions { step: 0.6, ..opts() };
        assert!(matches!(sample_hpath(&LogPolarPoint::raw(1.0, 0.0), &k, &o, 1, 0), Err(Error::Parameter(_))));
        assert!(estimate_hit_probability(&LogPolarPoint::raw(1.0, 0.0), &k, 99, &opts(), 1).is_err());
    }

    #[test]
    fn shells_follow_upper_convention() {
        assert_eq!(shell_of(2.0, 2.0), 1);
        assert_eq!(shell_of(3.99, 2.0), 1);
        assert_eq!(shell_of(4.0, 2.0), 2);
        assert_eq!(shell_of(0.5, 2.0), -1);
    }

    #[test]
    fn replay_is_identical() {
        let k = CompactSetSpec::new("seg", vec![Primitive::radial_segment(2.0, 8.0, 0.0)]);
        let o = McOptions { store_every: 10, ..opts() };
        let a = sample_hpath(&LogPolarPoint::raw(1.0, 2.0), &k, &o, 7, 3).unwrap();
        let b = sample_hpath(&LogPolarPoint::raw(1.0, 2.0), &k, &o, 7, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.trajectory[0] == LogPolarPoint::raw(1.0, 2.0));
        assert!(a.trajectory.iter().all(|p| p.t > 0.0));
        let e1 = estimate_hit_probability(&LogPolarPoint::raw(1.0, 2.0), &k, 400, &o, 9).unwrap();
        let e2 = estimate_hit_probability(&LogPolarPoint::raw(1.0, 2.0), &k, 400, &o, 9).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn empty_set_never_hit_and_paths_escape() {
        let k = CompactSetSpec::empty("D");
        let e = estimate_hit_probability(&LogPolarPoint::raw(1.0, 0.0), &k, 2000, &opts(), 1).unwrap();
        assert_eq!(e.hits, 0);
        assert_eq!(e.deaths, 0);
        assert_eq!(e.reached_t_max, 2000);
    }

    #[test]
    fn circle_is_unavoidable() {
        let k = CompactSetSpec::new("c", vec![Primitive::circle(10.0)]);
        let e = estimate_hit_probability(&LogPolarPoint::raw(5.0, 1.0), &k, 500, &opts(), 2).unwrap();
        assert_eq!(e.hits, 500);
        assert_eq!(e.shells, vec![ShellFrequency { shell: 3, hits: 500, frequency: 1.0, standard_error: 0.0 }]);
    }

    #[test]
    fn revisit_probability_is_ratio_of_levels() {
        // a Bessel(3) path from t reaches level c < t with probability c / t
        let k = CompactSetSpec::new("low", vec![Primitive::circle(0.1)]);
        let o = McOptions { stop_at_first_hit: true, ..opts() };
        let e = estimate_hit_probability(&LogPolarPoint::raw(1.0, 0.0), &k, 4000, &o, 5).unwrap();
        assert!((e.p_hat - 0.1).abs() < 3.0 * e.standard_error + 0.005, "{e:?}");
    }

    #[test]
    fn drift_matches_inverse_t() {
        let d = drift_experiment(2.0, 0.01, 100_000, None, 11).unwrap();
        assert!((d.mean_rate - 0.5).abs() < 3.0 * d.standard_error, "{d:?}");
    }

    #[test]
    fn chord_crossings() {
        let seg = Primitive::radial_segment(1.0, 3.0, 0.0);
        assert!(chord_crossing(&seg, 2.0, -0.1, 2.0, 0.1).is_some());
        assert!(chord_crossing(&seg, 2.0, TAU - 0.1, 2.0, TAU + 0.1).is_some());
        assert!(chord_crossing(&seg, 4.0, -0.1, 4.0, 0.1).is_none());
        let arc = Primitive::arc(2.0, 1.0, 2.0);
        assert!((chord_crossing(&arc, 1.5, 1.5, 2.5, 1.5).unwrap() - 0.5).abs() < 1e-15);
        assert!(chord_crossing(&arc, 1.5, 3.0, 2.5, 3.0).is_none());
    }
}
