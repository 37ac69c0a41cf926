//! The decision loop: choose a control, train, observe, update, decide
//! whether to continue.
//!
//! Three variants share one loop and differ only in how the Q-curve for the
//! next control is produced:
//!
//! * relaxed: `Lambda` with the damped top level `(1 - eps) V_N` of a map,
//! * exact: the level matching the remaining horizon, stopping after `N` calls,
//! * on-the-fly: nested Monte Carlo with no map at all.
//!
//! After each observation the loop stops when the posterior mean score at the
//! control just applied is at least the Q-value of the best next control.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::basis::{BasisSet, ControlPoint};
use crate::belief::{kalman_update, BeliefState, NoiseModel};
use crate::error::{Error, Result};
use crate::oracle::{ParamValue, Params, Trainer};
use crate::qvalue::{default_resolution, Continuation, QCurve, QEvaluator, SamplingPlan};
use crate::regress::RegressionSpec;
use crate::rng::{label, StreamKey};
use crate::valuemap::ValueMap;

/// Default `budget_guard`: maximum number of epochs in any run.
pub const DEFAULT_BUDGET_GUARD: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MappingKind {
    LinearInt,
    LinearReal,
    LogReal,
    Identity,
}

/// Maps one control coordinate in `[0, 1]` onto a named hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlMapping {
    pub name: String,
    pub kind: MappingKind,
    #[serde(default)]
    pub lo: f64,
    #[serde(default = "one")]
    pub hi: f64,
}

fn one() -> f64 {
    1.0
}

impl ControlMapping {
    pub fn new(name: impl Into<String>, kind: MappingKind, lo: f64, hi: f64) -> Result<Self> {
        let m = ControlMapping {
            name: name.into(),
            kind,
            lo,
            hi,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::invalid(format!(
                "mapping {:?} needs finite lo < hi, got [{}, {}]",
                self.name, self.lo, self.hi
            )));
        }
        if self.kind == MappingKind::LogReal && self.lo <= 0.0 {
            return Err(Error::invalid(format!("log-real mapping {:?} needs lo > 0", self.name)));
        }
        Ok(())
    }
}

pub fn map_control(mapping: &ControlMapping, u: f64) -> Result<ParamValue> {
    mapping.validate()?;
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::invalid(format!("control coordinate {u} outside [0, 1]")));
    }
    let (lo, hi) = (mapping.lo, mapping.hi);
    Ok(match mapping.kind {
        MappingKind::LinearInt => ParamValue::Int((lo + (hi - lo) * u).floor() as i64),
        MappingKind::LinearReal => ParamValue::Real(lo + (hi - lo) * u),
        MappingKind::LogReal => ParamValue::Real((lo.ln() + (hi.ln() - lo.ln()) * u).exp()),
        MappingKind::Identity => ParamValue::Real(u),
    })
}

/// Raw score to transformed score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScoreTransform {
    /// `(h_raw - lo) / (hi - lo)`.
    Affine { lo: f64, hi: f64 },
    /// `(ln h_raw - ln lo) / (ln hi - ln lo)`.
    AffineLog { lo: f64, hi: f64 },
}

impl ScoreTransform {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = match *self {
            ScoreTransform::Affine { lo, hi } | ScoreTransform::AffineLog { lo, hi } => (lo, hi),
        };
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid("score transform needs finite lo < hi"));
        }
        if matches!(self, ScoreTransform::AffineLog { .. }) && lo <= 0.0 {
            return Err(Error::invalid("affine-log score transform needs lo > 0"));
        }
        Ok(())
    }

    pub fn apply(&self, raw: f64) -> f64 {
        match *self {
            ScoreTransform::Affine { lo, hi } => (raw - lo) / (hi - lo),
            ScoreTransform::AffineLog { lo, hi } => (raw.ln() - lo.ln()) / (hi.ln() - lo.ln()),
        }
    }

    pub fn invert(&self, h: f64) -> f64 {
        match *self {
            ScoreTransform::Affine { lo, hi } => lo + h * (hi - lo),
            ScoreTransform::AffineLog { lo, hi } => (lo.ln() + h * (hi.ln() - lo.ln())).exp(),
        }
    }
}

/// Raw cost to transformed cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CostTransform {
    Affine { lo: f64, hi: f64 },
}

impl CostTransform {
    pub fn validate(&self) -> Result<()> {
        let CostTransform::Affine { lo, hi } = *self;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid("cost transform needs finite lo < hi"));
        }
        Ok(())
    }

    pub fn apply(&self, raw: f64) -> f64 {
        let CostTransform::Affine { lo, hi } = *self;
        (raw - lo) / (hi - lo)
    }

    pub fn invert(&self, t: f64) -> f64 {
        let CostTransform::Affine { lo, hi } = *self;
        lo + t * (hi - lo)
    }
}

fn default_replicates() -> usize {
    1
}

/// Everything that defines an optimisation problem, independent of how the
/// controls are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub gamma: f64,
    #[serde(default)]
    pub epsilon: f64,
    pub noise: NoiseModel,
    pub basis: BasisSet,
    pub prior: BeliefState,
    pub score_transform: ScoreTransform,
    pub cost_transform: CostTransform,
    pub control_maps: Vec<ControlMapping>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
}

impl ProblemSpec {
    /// 0 for one control, 0.02 otherwise.
    pub fn default_epsilon(p: usize) -> f64 {
        if p <= 1 {
            0.0
        } else {
            0.02
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.dim_control()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::invalid(format!("epsilon must lie in [0, 1), got {}", self.epsilon)));
        }
        if self.replicates == 0 {
            return Err(Error::invalid("replicates must be at least 1"));
        }
        self.noise.validate()?;
        self.prior.check_basis(&self.basis)?;
        self.score_transform.validate()?;
        self.cost_transform.validate()?;
        if self.control_maps.len() != self.dim() {
            return Err(Error::invalid(format!(
                "{} control mappings for a {}-dimensional control",
                self.control_maps.len(),
                self.dim()
            )));
        }
        for m in &self.control_maps {
            m.validate()?;
        }
        Ok(())
    }

    pub fn params(&self, u: &ControlPoint) -> Result<Params> {
        self.control_maps
            .iter()
            .zip(u.coords())
            .map(|(m, &c)| Ok((m.name.clone(), map_control(m, c)?)))
            .collect::<Result<Vec<_>>>()
            .map(Params)
    }

    pub fn param_names(&self) -> Vec<String> {
        self.control_maps.iter().map(|m| m.name.clone()).collect()
    }
}

pub fn transform_observation(spec: &ProblemSpec, h_raw: f64, t_raw: f64) -> Result<(f64, f64)> {
    if !h_raw.is_finite() || !t_raw.is_finite() {
        return Err(Error::InvalidObservation(format!(
            "non-finite raw observation score={h_raw}, cost={t_raw}"
        )));
    }
    let h = spec.score_transform.apply(h_raw);
    let t = spec.cost_transform.apply(t_raw);
    if !h.is_finite() || !t.is_finite() {
        return Err(Error::InvalidObservation(format!(
            "raw observation score={h_raw}, cost={t_raw} has no transformed value"
        )));
    }
    Ok((h, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    ValueCondition,
    HorizonExhausted,
    TrainerFailure,
    BudgetGuard,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::ValueCondition => "value-condition",
            StopReason::HorizonExhausted => "horizon-exhausted",
            StopReason::TrainerFailure => "trainer-failure",
            StopReason::BudgetGuard => "budget-guard",
        }
    }
}

/// One epoch of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub n: usize,
    pub h: f64,
    pub t: f64,
    pub cum_cost: f64,
    /// Control applied in this epoch, `u_{n-1}`.
    pub u: Vec<f64>,
    /// `mu_alpha_n . phi(u_{n-1})`.
    pub posterior_score: f64,
    /// Q-value of the best next control; absent once the horizon is reached.
    pub value: Option<f64>,
    pub h_raw: f64,
    pub t_raw: f64,
    pub params: Params,
    pub wall_clock: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terminal {
    pub u: Vec<f64>,
    pub h: f64,
    pub cost: f64,
    pub state: BeliefState,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub terminal: Option<Terminal>,
}

impl RunTrace {
    pub fn epochs(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub trace: RunTrace,
    pub stop_reason: StopReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

impl RunOutcome {
    /// Table columns `n, h_n, t_n, sum t, u_{n-1}, posterior score, V` plus
    /// the stop reason on the last row.
    pub fn to_csv(&self) -> String {
        let p = self.trace.rows.first().map_or(1, |r| r.u.len());
        let mut out = String::from("n,h_n,t_n,sum_t,");
        if p == 1 {
            out.push_str("u_prev,");
        } else {
            for i in 1..=p {
                let _ = write!(out, "u{i}_prev,");
            }
        }
        out.push_str("posterior_score,V,stop_reason\n");
        let last = self.trace.rows.len().saturating_sub(1);
        for (i, r) in self.trace.rows.iter().enumerate() {
            let _ = write!(out, "{},{},{},{},", r.n, fmt_f(r.h), fmt_f(r.t), fmt_f(r.cum_cost));
            for c in &r.u {
                let _ = write!(out, "{},", fmt_f(*c));
            }
            let v = r.value.map(fmt_f).unwrap_or_default();
            let reason = if i == last { self.stop_reason.as_str() } else { "" };
            let _ = writeln!(out, "{},{},{}", fmt_f(r.posterior_score), v, reason);
        }
        out
    }

    /// One JSON record per epoch.
    pub fn to_jsonl(&self) -> String {
        self.trace
            .rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("trace rows serialise") + "\n")
            .collect()
    }

    /// `u*, h*, T*, epochs, stop_reason` on one line.
    pub fn summary(&self) -> String {
        match &self.trace.terminal {
            Some(t) => format!(
                "u*={:?} h*={:.6} T*={:.6} epochs={} stop_reason={}",
                t.u,
                t.h,
                t.cost,
                self.trace.epochs(),
                self.stop_reason.as_str()
            ),
            None => format!("u*=none epochs=0 stop_reason={}", self.stop_reason.as_str()),
        }
    }
}

/// Settings shared by every variant of the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    /// Grid and sample count for the per-epoch Q-curve; its seed roots every
    /// epoch's random stream.
    pub plan: SamplingPlan,
    pub qfit: RegressionSpec,
    #[serde(default)]
    pub resolution: Option<usize>,
    #[serde(default = "default_guard")]
    pub budget_guard: usize,
    #[serde(default)]
    pub allow_gamma_override: bool,
}

fn default_guard() -> usize {
    DEFAULT_BUDGET_GUARD
}

impl RunSettings {
    pub fn new(plan: SamplingPlan, qfit: RegressionSpec) -> Self {
        RunSettings {
            plan,
            qfit,
            resolution: None,
            budget_guard: DEFAULT_BUDGET_GUARD,
            allow_gamma_override: false,
        }
    }

    pub fn with_budget_guard(mut self, guard: usize) -> Self {
        self.budget_guard = guard;
        self
    }

    pub fn epoch_key(&self, epoch: usize) -> StreamKey {
        StreamKey::new(self.plan.seed).child(label::EPOCH).child(epoch as u64)
    }
}

/// How the Q-curve of each epoch is produced.
#[derive(Clone, Copy)]
pub enum Strategy<'a> {
    /// Damped top level of the map; `None` is the map that is `-inf`
    /// everywhere, i.e. no continuation.
    Relaxed(Option<&'a ValueMap>),
    /// Level `N - n - 1` for the control of epoch `n`; at most `N` calls.
    Exact(&'a ValueMap),
    /// Nested Monte Carlo of the given depth; `plan_first` replaces the
    /// settings' plan for the very first control.
    Otf {
        depth: usize,
        plan_first: Option<&'a SamplingPlan>,
    },
}

/// Median of the scores and sum of the costs over the replicates.
fn observe(spec: &ProblemSpec, trainer: &mut dyn Trainer, u: &ControlPoint, params: &Params) -> Result<(f64, f64, f64)> {
    let mut scores = Vec::with_capacity(spec.replicates);
    let mut cost = 0.0;
    let mut wall = 0.0;
    for _ in 0..spec.replicates {
        let r = trainer.evaluate(u, params)?;
        scores.push(r.score_raw);
        cost += r.cost_raw;
        wall += r.wall_clock;
    }
    scores.sort_by(f64::total_cmp);
    let k = scores.len();
    let median = if k % 2 == 1 {
        scores[k / 2]
    } else {
        0.5 * (scores[k / 2 - 1] + scores[k / 2])
    };
    Ok((median, cost, wall))
}

fn score_at(x: &BeliefState, u: &ControlPoint, basis: &BasisSet) -> Result<f64> {
    Ok(basis.eval_phi(u)?.dot(x.mu_alpha()))
}

struct Chooser<'a> {
    spec: &'a ProblemSpec,
    strategy: Strategy<'a>,
    main: QEvaluator<'a>,
    first: Option<QEvaluator<'a>>,
}

impl<'a> Chooser<'a> {
    /// Q-curve for the control of epoch `e`, or `None` past the horizon.
    fn curve(&self, e: usize, x: &BeliefState, key: StreamKey) -> Result<Option<(QCurve, &QEvaluator<'a>)>> {
        let eps = self.spec.epsilon;
        match self.strategy {
            Strategy::Relaxed(None) => Ok(Some((self.main.lambda(x, Continuation::None, key)?, &self.main))),
            Strategy::Relaxed(Some(map)) => {
                let top = map.top();
                Ok(Some((self.main.lambda(x, Continuation::damped(&top, eps), key)?, &self.main)))
            }
            Strategy::Exact(map) => {
                let n = map.depth();
                if e >= n {
                    return Ok(None);
                }
                let level = n - e - 1;
                let q = if level == 0 {
                    self.main.lambda(x, Continuation::None, key)?
                } else {
                    let v = map.level(level)?;
                    self.main.lambda(x, Continuation::damped(&v, eps), key)?
                };
                Ok(Some((q, &self.main)))
            }
            Strategy::Otf { depth, .. } => {
                let ev = match (&self.first, e) {
                    (Some(f), 0) => f,
                    _ => &self.main,
                };
                Ok(Some((ev.otf(x, depth, Continuation::None, key)?, ev)))
            }
        }
    }
}

/// Runs the loop until the stopping condition, the horizon, the budget guard
/// or a trainer failure. `observer` sees each row as soon as it is recorded.
pub fn run(
    spec: &ProblemSpec,
    strategy: Strategy<'_>,
    trainer: &mut dyn Trainer,
    settings: &RunSettings,
    observer: &mut dyn FnMut(&TraceRow),
) -> Result<RunOutcome> {
    spec.validate()?;
    settings.plan.validate()?;
    if settings.plan.dim() != spec.dim() {
        return Err(Error::invalid("sampling plan dimension does not match the problem"));
    }
    if settings.budget_guard == 0 {
        return Err(Error::invalid("budget_guard must be at least 1"));
    }
    let resolution = settings.resolution.unwrap_or_else(|| default_resolution(spec.dim()));
    fn make<'a>(spec: &'a ProblemSpec, plan: &'a SamplingPlan, qfit: &'a RegressionSpec, res: usize) -> Result<QEvaluator<'a>> {
        Ok(QEvaluator::new(&spec.basis, &spec.noise, spec.gamma, plan, qfit)?.with_resolution(res))
    }
    let mut first = None;
    match strategy {
        Strategy::Relaxed(Some(map)) | Strategy::Exact(map) => {
            map.check_compatible(&spec.basis, spec.gamma, settings.allow_gamma_override)?;
        }
        Strategy::Relaxed(None) => {}
        Strategy::Otf { depth, plan_first } => {
            if depth == 0 {
                return Err(Error::invalid("OTF depth must be at least 1"));
            }
            if depth > crate::qvalue::OTF_DEPTH_LIMIT {
                return Err(Error::BudgetExceeded(format!(
                    "OTF depth {depth} exceeds the limit {}",
                    crate::qvalue::OTF_DEPTH_LIMIT
                )));
            }
            if let Some(pf) = plan_first {
                if pf.dim() != spec.dim() {
                    return Err(Error::invalid("first-call plan dimension does not match the problem"));
                }
                first = Some(make(spec, pf, &settings.qfit, resolution)?);
            }
        }
    }
    let chooser = Chooser {
        spec,
        strategy,
        main: make(spec, &settings.plan, &settings.qfit, resolution)?,
        first,
    };

    let mut x = spec.prior.clone();
    let (q, ev) = chooser
        .curve(0, &x, settings.epoch_key(0))?
        .ok_or_else(|| Error::invalid("value map has no levels"))?;
    let mut u = ev.argmax(&q).0;

    let mut trace = RunTrace::default();
    let mut cum = 0.0;
    let mut failure = None;
    let stop = loop {
        let params = spec.params(&u)?;
        let observed = observe(spec, trainer, &u, &params)
            .and_then(|(h_raw, t_raw, wall)| transform_observation(spec, h_raw, t_raw).map(|ht| (ht, h_raw, t_raw, wall)));
        let ((h, t), h_raw, t_raw, wall) = match observed {
            Ok(v) => v,
            Err(e @ (Error::TrainerFailure { .. } | Error::Protocol { .. } | Error::InvalidObservation(_))) => {
                log::warn!("stopping after trainer failure: {e}");
                failure = Some(e.to_string());
                break StopReason::TrainerFailure;
            }
            Err(e) => return Err(e),
        };
        x = kalman_update(&x, &u, h, t, &spec.basis, &spec.noise)?;
        cum += t;
        let n = trace.rows.len() + 1;
        let posterior_score = score_at(&x, &u, &spec.basis)?;
        let next = chooser.curve(n, &x, settings.epoch_key(n))?;
        let best = next.as_ref().map(|(q, ev)| ev.argmax(q));
        let row = TraceRow {
            n,
            h,
            t,
            cum_cost: cum,
            u: u.coords().to_vec(),
            posterior_score,
            value: best.as_ref().map(|b| b.1),
            h_raw,
            t_raw,
            params,
            wall_clock: wall,
        };
        log::info!(
            "epoch {n}: u={:?} h={h:.4} t={t:.4} score={posterior_score:.4} V={:?}",
            row.u,
            row.value
        );
        observer(&row);
        trace.rows.push(row);
        trace.terminal = Some(Terminal {
            u: u.coords().to_vec(),
            h: posterior_score,
            cost: cum,
            state: x.clone(),
        });
        let Some((u_next, v_next)) = best else {
            break StopReason::HorizonExhausted;
        };
        if posterior_score >= v_next {
            break StopReason::ValueCondition;
        }
        if n >= settings.budget_guard {
            break StopReason::BudgetGuard;
        }
        u = u_next;
    };
    Ok(RunOutcome {
        trace,
        stop_reason: stop,
        failure,
    })
}

pub fn run_relaxed(
    spec: &ProblemSpec,
    map: Option<&ValueMap>,
    trainer: &mut dyn Trainer,
    settings: &RunSettings,
) -> Result<RunOutcome> {
    run(spec, Strategy::Relaxed(map), trainer, settings, &mut |_| {})
}

pub fn run_exact(spec: &ProblemSpec, map: &ValueMap, trainer: &mut dyn Trainer, settings: &RunSettings) -> Result<RunOutcome> {
    run(spec, Strategy::Exact(map), trainer, settings, &mut |_| {})
}

pub fn run_otf(
    spec: &ProblemSpec,
    depth: usize,
    trainer: &mut dyn Trainer,
    settings: &RunSettings,
    plan_first: Option<&SamplingPlan>,
) -> Result<RunOutcome> {
    run(spec, Strategy::Otf { depth, plan_first }, trainer, settings, &mut |_| {})
}
