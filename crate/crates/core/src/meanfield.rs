//! Deterministic mean-field dynamics of the aggressive-comment fraction.
//!
//! A comment replies to the post with probability `1 - alpha` and to a
//! previous-step comment otherwise. By total probability the aggressive
//! fraction evolves as
//!
//! ```text
//! x(t+1) = (1 - alpha) * p_reply_post
//!        + alpha * (x(t) * p_reply_aggr + (1 - x(t)) * p_reply_nonaggr)
//!        = c + s * x(t)
//! ```
//!
//! with offset `c = (1 - alpha) p_reply_post + alpha p_reply_nonaggr` and
//! slope `s = alpha (p_reply_aggr - p_reply_nonaggr)`. Moderation acts on the
//! parent pool only: injected neutral comments dilute it and deleted
//! aggressive comments leave it, while the reported quantity stays the
//! organic fraction.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, invalid, Error, Result};
use crate::fmt::fixed6;

/// Organic comments per step used throughout the published scenarios.
pub const DEFAULT_N_PER_STEP: u64 = 750;

const MAX_CONVERGENCE_STEPS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Probability that a comment replies to another comment rather than the post.
    pub alpha: f64,
    /// Aggression probability of a reply to the post.
    pub p_reply_post: f64,
    /// Aggression probability of a reply to an aggressive comment.
    pub p_reply_aggr: f64,
    /// Aggression probability of a reply to a non-aggressive comment.
    pub p_reply_nonaggr: f64,
}

impl ModelParams {
    pub fn new(
        alpha: f64,
        p_reply_post: f64,
        p_reply_aggr: f64,
        p_reply_nonaggr: f64,
    ) -> Result<Self> {
        let params = Self {
            alpha,
            p_reply_post,
            p_reply_aggr,
            p_reply_nonaggr,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("alpha", self.alpha)?;
        check_probability("p_reply_post", self.p_reply_post)?;
        check_probability("p_reply_aggr", self.p_reply_aggr)?;
        check_probability("p_reply_nonaggr", self.p_reply_nonaggr)
    }

    pub fn composites(&self) -> Composites {
        composites(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let params: Self = serde_json::from_str(text)?;
        params.validate()?;
        Ok(params)
    }

    pub fn to_json(&self) -> String {
        // f64 Display is shortest round-trip, so reloads are exact
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }
}

/// The affine form `x -> offset_c + slope_s * x` of the recurrence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Composites {
    pub offset_c: f64,
    pub slope_s: f64,
}

impl Composites {
    fn apply(&self, x: f64) -> f64 {
        (self.offset_c + self.slope_s * x).clamp(0.0, 1.0)
    }
}

pub fn composites(p: &ModelParams) -> Composites {
    Composites {
        offset_c: (1.0 - p.alpha) * p.p_reply_post + p.alpha * p.p_reply_nonaggr,
        slope_s: p.alpha * (p.p_reply_aggr - p.p_reply_nonaggr),
    }
}

/// Per-step moderation budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlPolicy {
    /// Organic comments written per step.
    pub n_per_step: u64,
    /// Neutral comments injected into the parent pool (soft strategy).
    pub add_per_step: u64,
    /// Aggressive comments removed from the parent pool (hard strategy).
    pub delete_per_step: u64,
}

impl ControlPolicy {
    pub fn uncontrolled(n_per_step: u64) -> Self {
        Self {
            n_per_step,
            add_per_step: 0,
            delete_per_step: 0,
        }
    }

    pub fn soft(n_per_step: u64, add_per_step: u64) -> Self {
        Self {
            add_per_step,
            ..Self::uncontrolled(n_per_step)
        }
    }

    pub fn hard(n_per_step: u64, delete_per_step: u64) -> Self {
        Self {
            delete_per_step,
            ..Self::uncontrolled(n_per_step)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_step == 0 {
            return Err(invalid("n_per_step", "must be positive"));
        }
        if self.delete_per_step > self.n_per_step {
            return Err(invalid(
                "delete_per_step",
                format!(
                    "{} exceeds n_per_step {}",
                    self.delete_per_step, self.n_per_step
                ),
            ));
        }
        Ok(())
    }

    pub fn regime(&self) -> Regime {
        match (self.add_per_step > 0, self.delete_per_step > 0) {
            (false, false) => Regime::Uncontrolled,
            (true, false) => Regime::Soft,
            (false, true) => Regime::Hard,
            (true, true) => Regime::Combined,
        }
    }

    /// Aggressive fraction of the post-control pool built from an organic
    /// step with aggressive fraction `x_raw`. Deletions go first, then
    /// injections; an empty pool counts as non-aggressive.
    pub fn pool_fraction(&self, x_raw: f64) -> f64 {
        let n = self.n_per_step as f64;
        let delete = self.delete_per_step as f64;
        let aggressive = n * x_raw;
        let deleted = delete.min(aggressive);
        let size = n - deleted + self.add_per_step as f64;
        if size <= 0.0 {
            return 0.0;
        }
        ((aggressive - delete).max(0.0) / size).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    Uncontrolled,
    Soft,
    Hard,
    Combined,
    /// Deletions outrun the aggressive supply and the pool is emptied of
    /// aggression every step.
    Clamped,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Uncontrolled => "UNCONTROLLED",
            Regime::Soft => "SOFT",
            Regime::Hard => "HARD",
            Regime::Combined => "COMBINED",
            Regime::Clamped => "CLAMPED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub x_star: f64,
    pub floor: f64,
    pub composites: Composites,
    pub regime: Regime,
}

/// One step of a trajectory. `x_pool` is the aggressive share of the
/// parent pool the step's commenters replied to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub x_raw: f64,
    pub x_pool: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn x_raw(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x_raw).collect()
    }

    pub fn last_x_raw(&self) -> Option<f64> {
        self.points.last().map(|p| p.x_raw)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "x_raw", "x_pool"])?;
        for p in &self.points {
            w.write_record([p.step.to_string(), fixed6(p.x_raw), fixed6(p.x_pool)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut points = Vec::new();
        for (i, row) in r.deserialize::<TrajectoryPoint>().enumerate() {
            let point = row.map_err(|e| Error::Row {
                row: i + 1,
                field: "step,x_raw,x_pool".into(),
                message: e.to_string(),
            })?;
            points.push(point);
        }
        Ok(Self { points })
    }
}

fn check_fraction(name: &'static str, x: f64) -> Result<()> {
    check_probability(name, x)
}

/// One uncontrolled step of the recurrence.
pub fn step(x: f64, p: &ModelParams) -> Result<f64> {
    check_fraction("x", x)?;
    p.validate()?;
    Ok(p.composites().apply(x))
}

/// Aggression level reached when every visible parent is non-aggressive.
pub fn floor(p: &ModelParams) -> f64 {
    p.composites().offset_c
}

pub fn equilibrium(p: &ModelParams) -> Result<EquilibriumReport> {
    p.validate()?;
    let comp = p.composites();
    let denom = 1.0 - comp.slope_s;
    if denom == 0.0 {
        return Err(Error::NonContracting(comp.slope_s));
    }
    Ok(EquilibriumReport {
        x_star: (comp.offset_c / denom).clamp(0.0, 1.0),
        floor: comp.offset_c,
        composites: comp,
        regime: Regime::Uncontrolled,
    })
}

/// Advances the organic fraction one step under `policy`. Returns the next
/// organic fraction and the pool fraction the new commenters saw.
pub fn controlled_step(x_raw: f64, p: &ModelParams, policy: &ControlPolicy) -> Result<(f64, f64)> {
    check_fraction("x_raw", x_raw)?;
    p.validate()?;
    policy.validate()?;
    let x_pool = policy.pool_fraction(x_raw);
    Ok((p.composites().apply(x_pool), x_pool))
}

/// Fixed point of [`controlled_step`].
///
/// Above the deletion threshold `d = delete/n` the map is affine with pool
/// size `m = n - delete + add`, giving `x* = (c m - s delete) / (m - s n)`.
/// That reduces to `c / (1 - s n/(n+add))` without deletions and to
/// `(c(1-d) - s d) / ((1-d) - s)` without injections. When `c <= d` every
/// step's aggressive supply is deleted and the fixed point is `c` itself.
pub fn controlled_equilibrium(
    p: &ModelParams,
    policy: &ControlPolicy,
) -> Result<EquilibriumReport> {
    policy.validate()?;
    let regime = policy.regime();
    if regime == Regime::Uncontrolled {
        return equilibrium(p);
    }
    p.validate()?;
    let comp = p.composites();
    let (c, s) = (comp.offset_c, comp.slope_s);
    let n = policy.n_per_step as f64;
    let delete = policy.delete_per_step as f64;
    let add = policy.add_per_step as f64;

    if policy.delete_per_step > 0 && c <= delete / n {
        return Ok(EquilibriumReport {
            x_star: c,
            floor: c,
            composites: comp,
            regime: Regime::Clamped,
        });
    }

    let pool = n - delete + add;
    let denom = pool - s * n;
    if denom <= 0.0 {
        return Err(Error::NonContractingControlled(denom / n));
    }
    Ok(EquilibriumReport {
        x_star: ((c * pool - s * delete) / denom).clamp(0.0, 1.0),
        floor: c,
        composites: comp,
        regime,
    })
}

/// Slope of the controlled map on its affine branch.
pub fn effective_slope(p: &ModelParams, policy: &ControlPolicy) -> f64 {
    let n = policy.n_per_step as f64;
    let pool = n - policy.delete_per_step as f64 + policy.add_per_step as f64;
    if pool <= 0.0 {
        return 0.0;
    }
    p.composites().slope_s * n / pool
}

/// Iterates [`controlled_step`] from `x0`; point `t` holds the state after
/// `t` steps, for `t = 1..=horizon`.
pub fn project(
    x0: f64,
    p: &ModelParams,
    policy: &ControlPolicy,
    horizon: usize,
) -> Result<Trajectory> {
    check_fraction("x0", x0)?;
    p.validate()?;
    policy.validate()?;
    let mut points = Vec::with_capacity(horizon);
    let mut x = x0;
    for t in 1..=horizon {
        let (next, pool) = controlled_step(x, p, policy)?;
        points.push(TrajectoryPoint {
            step: t,
            x_raw: next,
            x_pool: pool,
        });
        x = next;
    }
    Ok(Trajectory { points })
}

/// Smallest `t` with `rate^t * gap <= eps` for a linear contraction.
pub fn geometric_steps(rate: f64, gap: f64, eps: f64) -> usize {
    let (rate, gap) = (rate.abs(), gap.abs());
    if gap <= eps {
        return 0;
    }
    if rate == 0.0 {
        return 1;
    }
    let t = ((eps / gap).ln() / rate.ln()).ceil().max(1.0) as usize;
    // ceil() can land one off at exact powers
    if t > 1 && rate.powi(t as i32 - 1) * gap <= eps {
        t - 1
    } else if rate.powi(t as i32) * gap > eps {
        t + 1
    } else {
        t
    }
}

/// Steps until the controlled trajectory from `x0` stays within `eps` of
/// its equilibrium. The geometric rate gives the answer directly when the
/// map is affine over the whole path; iteration confirms it and covers
/// paths that cross the deletion threshold.
pub fn convergence_time(
    p: &ModelParams,
    policy: &ControlPolicy,
    x0: f64,
    eps: f64,
) -> Result<usize> {
    check_fraction("x0", x0)?;
    if eps.is_nan() || eps <= 0.0 {
        return Err(invalid("eps", "must be positive"));
    }
    let rate = effective_slope(p, policy);
    if rate.abs() >= 1.0 {
        return Err(Error::NonContracting(rate));
    }
    let x_star = controlled_equilibrium(p, policy)?.x_star;
    let gap = (x0 - x_star).abs();
    if gap <= eps {
        return Ok(0);
    }

    let geometric = geometric_steps(rate, gap, eps);
    let mut x = x0;
    for t in 1..=MAX_CONVERGENCE_STEPS {
        x = controlled_step(x, p, policy)?.0;
        if (x - x_star).abs() <= eps {
            debug_assert!(
                policy.delete_per_step > 0 || t.abs_diff(geometric) <= 1,
                "iteration {t} vs geometric {geometric}"
            );
            return Ok(t);
        }
    }
    Err(Error::NoConvergence(MAX_CONVERGENCE_STEPS))
}

/// Recovers parameters from an observed equilibrium and floor, given the
/// two quantities the pair cannot identify (`alpha` and `p_reply_nonaggr`).
pub fn fit_from_observables(
    x_star: f64,
    floor_c: f64,
    alpha: f64,
    p_nonaggr: f64,
) -> Result<ModelParams> {
    if !(x_star > 0.0 && x_star < 1.0) {
        return Err(invalid("x_star", format!("{x_star} is outside (0, 1)")));
    }
    if !(floor_c >= 0.0 && floor_c <= x_star) {
        return Err(invalid(
            "floor_c",
            format!("{floor_c} is outside [0, x_star = {x_star}]"),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("{alpha} is outside (0, 1)")));
    }
    check_probability("p_nonaggr", p_nonaggr)?;

    let slope = 1.0 - floor_c / x_star;
    let p_reply_aggr = p_nonaggr + slope / alpha;
    let p_reply_post = (floor_c - alpha * p_nonaggr) / (1.0 - alpha);

    let feasible = |v: f64| (0.0..=1.0).contains(&v);
    if !feasible(p_reply_aggr) || !feasible(p_reply_post) {
        let lo = ((floor_c - 1.0 + alpha) / alpha).max(0.0);
        let hi = (1.0 - slope / alpha).min(floor_c / alpha).min(1.0);
        let region = if lo <= hi {
            format!("for alpha = {alpha}, p_nonaggr must lie in [{lo:.6}, {hi:.6}]")
        } else {
            format!(
                "no p_nonaggr is feasible for alpha = {alpha}; alpha must be at least {slope:.6}"
            )
        };
        return Err(Error::InfeasibleFit(format!(
            "p_reply_post = {p_reply_post:.6}, p_reply_aggr = {p_reply_aggr:.6}; {region}"
        )));
    }
    ModelParams::new(alpha, p_reply_post, p_reply_aggr, p_nonaggr)
}
