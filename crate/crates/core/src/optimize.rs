//! Key-rate maximization over intensities and relay placement, and
//! key-rate-versus-loss curves.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::channel::misalignment_split;
use crate::decoy::{
    decoy_key_rate, estimate_finite_bounds, estimate_single_photon_bounds, finite_key_rate, observe_intensities,
    FiniteKeyParams, IntensitySet,
};
use crate::error::{check_nonneg, check_range, Error, Result};
use crate::fock::{pair_tail, poisson_tail_probability};
use crate::interference::{BeamSplitterSpec, DetectorParams};
use crate::rates::{LinkTables, MisalignmentSampling, RateModel, DEFAULT_F_E};
use crate::scenario::Links;

const MU_RANGE: (f64, f64) = (1e-6, 1.0);
const LAMBDA_RANGE: (f64, f64) = (1e-6, 1e-1);
const MU_GRID: usize = 13;
const LAMBDA_GRID: usize = 11;
const SPLIT_GRID: [f64; 5] = [0.3, 0.4, 0.5, 0.6, 0.7];
/// Weak decoy as a fraction of the signal on the coarse grid.
const DECOY_GRID: [f64; 4] = [0.01, 0.03, 0.1, 0.3];
/// Descents started from the best grid points in finite mode.
const FINITE_STARTS: usize = 3;

const LOG_STEP: f64 = 0.5;
const SPLIT_STEP: f64 = 0.1;
const MIN_LOG_STEP: f64 = 1e-3;
const MIN_SPLIT_STEP: f64 = 1e-4;
const RELATIVE_TOLERANCE: f64 = 1e-4;
const MAX_SWEEPS: usize = 400;

/// Everything the optimizer keeps fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioTemplate {
    pub detector: DetectorParams,
    pub beam_splitter: BeamSplitterSpec,
    /// Total misalignment error, shared equally by the four links.
    pub e_d: f64,
    pub alpha_db_per_km: f64,
    pub f_e: f64,
    pub n_max: u32,
    /// Largest photon-number mass allowed beyond `n_max` before a point is flagged.
    pub tail_tolerance: f64,
    pub sampling: MisalignmentSampling,
}

impl ScenarioTemplate {
    pub fn new(detector: DetectorParams, e_d: f64, n_max: u32) -> Self {
        ScenarioTemplate {
            detector,
            beam_splitter: BeamSplitterSpec::balanced(),
            e_d,
            alpha_db_per_km: crate::channel::STANDARD_FIBER_DB_PER_KM,
            f_e: DEFAULT_F_E,
            n_max,
            tail_tolerance: 1e-3,
            sampling: MisalignmentSampling::Fixed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_range("e_d", self.e_d, 0.0, 1.0)?;
        check_nonneg("alpha_db_per_km", self.alpha_db_per_km)?;
        check_range("f_e", self.f_e, 1.0, f64::INFINITY)?;
        check_range("tail_tolerance", self.tail_tolerance, 0.0, 1.0)?;
        if self.n_max == 0 {
            return Err(Error::ParameterDomain { name: "n_max", value: 0.0, reason: "must be at least 1" });
        }
        Ok(())
    }

    pub fn links(&self, total_loss_db: f64, split_a: f64, split_b: f64) -> Result<Links> {
        let theta = misalignment_split(self.e_d)?[0];
        Links::from_total_loss(total_loss_db, split_a, split_b, self.alpha_db_per_km, theta)
    }

    pub fn model(&self) -> Result<RateModel> {
        RateModel::new(self.detector, self.beam_splitter, self.n_max, self.sampling)
    }
}

/// Decoy intensities in finite mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecoyChoice {
    /// Same weak and vacuum decoys for both parties.
    Fixed { weak: f64, vacuum: f64 },
    /// Weak decoys are optimized; the second decoy is this fixed value.
    Optimize { vacuum: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Exact single-photon quantities (infinitely many decoys and pulses).
    Asymptotic,
    /// Two-decoy bounds with finite statistics.
    Finite { params: FiniteKeyParams, decoys: DecoyChoice },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizationVariables {
    pub mu_a: f64,
    pub mu_b: f64,
    /// Pair brightness `2λ`.
    pub mu_c: f64,
    /// Share of Alice's arm loss on her own link; the rest is on Charles' link to David.
    pub split_a: f64,
    pub split_b: f64,
    /// Weak decoys in finite mode.
    pub decoy_a: Option<f64>,
    pub decoy_b: Option<f64>,
}

impl OptimizationVariables {
    pub fn symmetric(mu: f64, mu_c: f64, split: f64) -> Self {
        OptimizationVariables { mu_a: mu, mu_b: mu, mu_c, split_a: split, split_b: split, decoy_a: None, decoy_b: None }
    }

    pub fn validate(&self) -> Result<()> {
        check_nonneg("mu_a", self.mu_a)?;
        check_nonneg("mu_b", self.mu_b)?;
        check_nonneg("mu_c", self.mu_c)?;
        check_range("split_a", self.split_a, 0.0, 1.0)?;
        check_range("split_b", self.split_b, 0.0, 1.0)?;
        Ok(())
    }

    /// Alice and Bob exchanged.
    pub fn mirrored(&self) -> Self {
        OptimizationVariables {
            mu_a: self.mu_b,
            mu_b: self.mu_a,
            split_a: self.split_b,
            split_b: self.split_a,
            decoy_a: self.decoy_b,
            decoy_b: self.decoy_a,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    pub q_z: f64,
    pub e_z: Option<f64>,
    /// Exact value in asymptotic mode, upper bound in finite mode.
    pub e11_x: Option<f64>,
    /// Largest photon-number mass dropped by the truncation.
    pub truncated_tail: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PointFlags {
    /// No setting gave a positive rate.
    pub dark_count_floor: bool,
    /// Truncated mass exceeds the template's tolerance.
    pub truncation: bool,
    /// Finite mode could not bound the single-photon yield.
    pub insufficient_statistics: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub total_loss_db: f64,
    /// Clamped at zero.
    pub r_optimal: f64,
    pub r_raw: f64,
    pub variables: OptimizationVariables,
    pub diagnostics: Diagnostics,
    pub flags: PointFlags,
}

impl CurvePoint {
    /// Fiber length equivalent of the total loss.
    pub fn fiber_km(&self, alpha_db_per_km: f64) -> f64 {
        self.total_loss_db / alpha_db_per_km
    }
}

#[derive(Debug, Clone, Copy)]
struct Evaluation {
    r_raw: f64,
    /// Same bounds without statistical fluctuations; ranks grid points.
    r_unlimited: f64,
    diagnostics: Diagnostics,
    insufficient_statistics: bool,
}

/// Rate evaluator for one loss value; caches coincidence tables per split.
struct Objective<'a> {
    template: &'a ScenarioTemplate,
    model: &'a RateModel,
    mode: Mode,
    total_loss_db: f64,
    tables: HashMap<(u64, u64), LinkTables>,
}

impl<'a> Objective<'a> {
    fn new(template: &'a ScenarioTemplate, model: &'a RateModel, mode: Mode, total_loss_db: f64) -> Self {
        Objective { template, model, mode, total_loss_db, tables: HashMap::new() }
    }

    fn tables(&mut self, split_a: f64, split_b: f64) -> Result<&LinkTables> {
        let key = (split_a.to_bits(), split_b.to_bits());
        if !self.tables.contains_key(&key) {
            let links = self.template.links(self.total_loss_db, split_a, split_b)?;
            let t = self.model.tables(&links)?;
            self.tables.insert(key, t);
        }
        Ok(&self.tables[&key])
    }

    fn evaluate(&mut self, v: &OptimizationVariables) -> Result<Evaluation> {
        let (template, model, mode) = (self.template, self.model, self.mode);
        let tail = truncated_tail(v, template.n_max);
        let tables = self.tables(v.split_a, v.split_b)?;
        match mode {
            Mode::Asymptotic => {
                let s = model.summarize(tables, v.mu_a, v.mu_b, v.mu_c, template.f_e)?;
                Ok(Evaluation {
                    r_raw: s.r_raw,
                    r_unlimited: s.r_raw,
                    diagnostics: Diagnostics { q_z: s.q_z, e_z: s.e_z, e11_x: s.e11_x, truncated_tail: tail },
                    insufficient_statistics: false,
                })
            }
            Mode::Finite { params, decoys } => {
                let (alice, bob) = decoy_sets(v, decoys)?;
                let table = observe_intensities(model, tables, &alice, &bob, v.mu_c)?;
                let bounds = estimate_finite_bounds(&table, &params)?;
                let fr = finite_key_rate(&bounds, &table, &params, template.f_e);
                let z = table.signal(crate::fock::Basis::Z);
                Ok(Evaluation {
                    r_raw: fr.rate.raw,
                    r_unlimited: decoy_key_rate(&estimate_single_photon_bounds(&table)?, &table, template.f_e).raw,
                    diagnostics: Diagnostics {
                        q_z: z.gain,
                        e_z: z.qber(),
                        e11_x: Some(bounds.e11_x_upper),
                        truncated_tail: tail,
                    },
                    insufficient_statistics: fr.insufficient_statistics,
                })
            }
        }
    }
}

impl Evaluation {
    /// Ordering used by the search. Positive rates rank by value; the rest
    /// rank by rate per detected signal, which does not reward switching
    /// the sources off.
    fn score(&self) -> f64 {
        if self.r_raw > 0.0 || self.diagnostics.q_z <= 0.0 {
            self.r_raw
        } else {
            self.r_raw / self.diagnostics.q_z
        }
    }
}

fn decoy_sets(v: &OptimizationVariables, decoys: DecoyChoice) -> Result<(IntensitySet, IntensitySet)> {
    let (wa, wb, vac) = match decoys {
        DecoyChoice::Fixed { weak, vacuum } => (weak, weak, vacuum),
        DecoyChoice::Optimize { vacuum } => (
            v.decoy_a.unwrap_or(v.mu_a * 0.1),
            v.decoy_b.unwrap_or(v.mu_b * 0.1),
            vacuum,
        ),
    };
    Ok((IntensitySet::two_decoy(v.mu_a, wa, vac)?, IntensitySet::two_decoy(v.mu_b, wb, vac)?))
}

fn truncated_tail(v: &OptimizationVariables, n_max: u32) -> f64 {
    let wcp = poisson_tail_probability(v.mu_a.max(v.mu_b), n_max);
    let pairs = pair_tail(v.mu_c / 2.0, n_max);
    wcp.max(pairs)
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Coordinates the descent moves along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Coordinate {
    MuA,
    MuB,
    MuC,
    SplitA,
    SplitB,
    DecoyA,
    DecoyB,
    /// All intensities together, the pair source quadratically.
    Brightness,
}

impl Coordinate {
    fn is_log(self) -> bool {
        !matches!(self, Coordinate::SplitA | Coordinate::SplitB)
    }

    /// Move `v` along this coordinate; `None` if the move leaves the box.
    fn step(self, v: &OptimizationVariables, delta: f64) -> Option<OptimizationVariables> {
        let mut out = *v;
        let scale = |x: f64| x * delta.exp();
        match self {
            Coordinate::MuA => out.mu_a = scale(v.mu_a),
            Coordinate::MuB => out.mu_b = scale(v.mu_b),
            Coordinate::MuC => out.mu_c = scale(v.mu_c),
            Coordinate::SplitA => out.split_a = v.split_a + delta,
            Coordinate::SplitB => out.split_b = v.split_b + delta,
            Coordinate::DecoyA => out.decoy_a = v.decoy_a.map(scale),
            Coordinate::DecoyB => out.decoy_b = v.decoy_b.map(scale),
            Coordinate::Brightness => {
                out.mu_a = scale(v.mu_a);
                out.mu_b = scale(v.mu_b);
                out.mu_c = scale(scale(v.mu_c));
                out.decoy_a = v.decoy_a.map(scale);
                out.decoy_b = v.decoy_b.map(scale);
            }
        }
        let in_box = |x: f64, lo: f64, hi: f64| x >= lo && x <= hi;
        let ok = in_box(out.mu_a, MU_RANGE.0, MU_RANGE.1)
            && in_box(out.mu_b, MU_RANGE.0, MU_RANGE.1)
            && in_box(out.mu_c, 2.0 * LAMBDA_RANGE.0, 2.0 * LAMBDA_RANGE.1)
            && in_box(out.split_a, 0.0, 1.0)
            && in_box(out.split_b, 0.0, 1.0)
            && out.decoy_a.map_or(true, |d| d > 0.0 && d < out.mu_a)
            && out.decoy_b.map_or(true, |d| d > 0.0 && d < out.mu_b);
        ok.then_some(out)
    }
}

fn coordinates(mode: Mode) -> Vec<Coordinate> {
    use Coordinate::*;
    let mut c = vec![MuA, MuB, MuC, Brightness, SplitA, SplitB];
    if let Mode::Finite { decoys: DecoyChoice::Optimize { .. }, .. } = mode {
        c.extend([DecoyA, DecoyB]);
    }
    c
}

/// Symmetric coarse grid over intensities and splits. Returns the best
/// point by rate, followed in finite mode by the best few by rate and by
/// fluctuation-free rate.
fn coarse_start(objective: &mut Objective) -> Result<Vec<(OptimizationVariables, Evaluation)>> {
    let optimize_decoys = matches!(objective.mode, Mode::Finite { decoys: DecoyChoice::Optimize { .. }, .. });
    let fixed_weak = match objective.mode {
        Mode::Finite { decoys: DecoyChoice::Fixed { weak, .. }, .. } => Some(weak),
        _ => None,
    };
    let decoy_fractions: &[f64] = if optimize_decoys { &DECOY_GRID } else { &[0.0] };
    let mut all: Vec<(OptimizationVariables, Evaluation)> = Vec::new();
    for &split in &SPLIT_GRID {
        for &mu in &log_grid(MU_RANGE.0, MU_RANGE.1, MU_GRID) {
            if fixed_weak.is_some_and(|w| mu <= w) {
                continue;
            }
            for &lambda in &log_grid(LAMBDA_RANGE.0, LAMBDA_RANGE.1, LAMBDA_GRID) {
                for &frac in decoy_fractions {
                    let mut v = OptimizationVariables::symmetric(mu, 2.0 * lambda, split);
                    if optimize_decoys {
                        v.decoy_a = Some(mu * frac);
                        v.decoy_b = Some(mu * frac);
                    }
                    let e = objective.evaluate(&v)?;
                    all.push((v, e));
                }
            }
        }
    }
    if all.is_empty() {
        return Err(Error::Range("empty optimization grid"));
    }
    let starts = if matches!(objective.mode, Mode::Asymptotic) { 1 } else { FINITE_STARTS };
    all.sort_by(|a, b| b.1.score().total_cmp(&a.1.score()));
    let mut out: Vec<_> = all.iter().take(starts).cloned().collect();
    if starts > 1 {
        all.sort_by(|a, b| b.1.r_unlimited.total_cmp(&a.1.r_unlimited));
        out.extend(all.iter().take(starts).cloned());
    }
    Ok(out)
}

/// Pattern search from `start` until no coordinate move improves the rate
/// at the smallest step sizes.
fn descend(
    objective: &mut Objective,
    start: OptimizationVariables,
    start_eval: Evaluation,
) -> Result<(OptimizationVariables, Evaluation)> {
    let coords = coordinates(objective.mode);
    let mut steps: Vec<f64> = coords.iter().map(|c| if c.is_log() { LOG_STEP } else { SPLIT_STEP }).collect();
    let (mut v, mut best) = (start, start_eval);
    for _ in 0..MAX_SWEEPS {
        let before = best.score();
        let mut moved = false;
        for (k, &c) in coords.iter().enumerate() {
            for dir in [1.0, -1.0] {
                let Some(cand) = c.step(&v, dir * steps[k]) else { continue };
                let e = objective.evaluate(&cand)?;
                if e.score() > best.score() {
                    v = cand;
                    best = e;
                    moved = true;
                    break;
                }
            }
        }
        let gain = best.score() - before;
        let small = gain <= RELATIVE_TOLERANCE * best.score().abs();
        if !moved || small {
            let mut done = true;
            for (k, &c) in coords.iter().enumerate() {
                let min = if c.is_log() { MIN_LOG_STEP } else { MIN_SPLIT_STEP };
                if steps[k] > min {
                    steps[k] = (steps[k] / 2.0).max(min);
                    done = false;
                }
            }
            if done && !moved {
                break;
            }
        }
    }
    Ok((v, best))
}

fn finish(total_loss_db: f64, template: &ScenarioTemplate, v: OptimizationVariables, e: Evaluation) -> CurvePoint {
    let positive = e.r_raw > 0.0;
    CurvePoint {
        total_loss_db,
        r_optimal: e.r_raw.max(0.0),
        r_raw: e.r_raw,
        variables: v,
        diagnostics: e.diagnostics,
        flags: PointFlags {
            dark_count_floor: !positive,
            truncation: e.diagnostics.truncated_tail > template.tail_tolerance,
            insufficient_statistics: e.insufficient_statistics,
        },
    }
}

/// Rate at given variables, with the same diagnostics as an optimized point.
pub fn evaluate_point(
    total_loss_db: f64,
    template: &ScenarioTemplate,
    mode: Mode,
    v: &OptimizationVariables,
) -> Result<CurvePoint> {
    template.validate()?;
    v.validate()?;
    let model = template.model()?;
    let mut objective = Objective::new(template, &model, mode, total_loss_db);
    let e = objective.evaluate(v)?;
    Ok(finish(total_loss_db, template, *v, e))
}

fn optimize_with(
    total_loss_db: f64,
    template: &ScenarioTemplate,
    model: &RateModel,
    mode: Mode,
    start: Option<&OptimizationVariables>,
) -> Result<CurvePoint> {
    check_nonneg("total_loss_db", total_loss_db)?;
    let mut objective = Objective::new(template, model, mode, total_loss_db);
    let (v0, e0) = match start {
        Some(s) => {
            let mut s = *s;
            if let Mode::Finite { decoys: DecoyChoice::Optimize { .. }, .. } = mode {
                s.decoy_a = s.decoy_a.or(Some(s.mu_a * 0.1));
                s.decoy_b = s.decoy_b.or(Some(s.mu_b * 0.1));
            }
            let e = objective.evaluate(&s)?;
            (s, e)
        }
        None => {
            let mut best: Option<(OptimizationVariables, Evaluation)> = None;
            for (v0, e0) in coarse_start(&mut objective)? {
                let (v, e) = descend(&mut objective, v0, e0)?;
                if best.as_ref().map_or(true, |(_, b)| e.score() > b.score()) {
                    best = Some((v, e));
                }
            }
            let (v, e) = best.expect("grid is not empty");
            return Ok(finish(total_loss_db, template, v, e));
        }
    };
    let (v, e) = descend(&mut objective, v0, e0)?;
    Ok(finish(total_loss_db, template, v, e))
}

/// Maximize the key rate at one total loss.
pub fn optimize_point(total_loss_db: f64, template: &ScenarioTemplate, mode: Mode) -> Result<CurvePoint> {
    template.validate()?;
    let model = template.model()?;
    optimize_with(total_loss_db, template, &model, mode, None)
}

/// Same as [`optimize_point`] but descending from `start` instead of the grid.
pub fn optimize_point_from(
    total_loss_db: f64,
    template: &ScenarioTemplate,
    mode: Mode,
    start: &OptimizationVariables,
) -> Result<CurvePoint> {
    template.validate()?;
    start.validate()?;
    let model = template.model()?;
    optimize_with(total_loss_db, template, &model, mode, Some(start))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub points: Vec<CurvePoint>,
}

impl Curve {
    /// Largest loss with a positive optimized rate.
    pub fn cutoff_db(&self) -> Option<f64> {
        self.points.iter().filter(|p| p.r_optimal > 0.0).map(|p| p.total_loss_db).reduce(f64::max)
    }
}

/// Loss values `loss_min, loss_min + step, ...` up to `loss_max` inclusive.
pub fn loss_grid(loss_min: f64, loss_max: f64, step: f64) -> Result<Vec<f64>> {
    check_nonneg("loss_min", loss_min)?;
    check_nonneg("loss_max", loss_max)?;
    if loss_max < loss_min {
        return Err(Error::Range("loss_max is below loss_min"));
    }
    if loss_max == loss_min {
        return Ok(vec![loss_min]);
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Range("step must be positive"));
    }
    let n = ((loss_max - loss_min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| loss_min + step * i as f64).collect())
}

/// Optimize every loss value from the coarse grid (in parallel), then sweep
/// the curve in both directions restarting each point from its neighbour's
/// optimum wherever that does better.
pub fn scan_curve(loss_min: f64, loss_max: f64, step: f64, template: &ScenarioTemplate, mode: Mode) -> Result<Curve> {
    template.validate()?;
    let losses = loss_grid(loss_min, loss_max, step)?;
    let model = template.model()?;
    let mut points = losses
        .par_iter()
        .map(|&l| optimize_with(l, template, &model, mode, None))
        .collect::<Result<Vec<_>>>()?;
    let n = points.len();
    let order: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).chain((1..n).rev().map(|i| (i, i - 1))).collect();
    for (from, to) in order {
        let start = points[from].variables;
        let cand = optimize_with(points[to].total_loss_db, template, &model, mode, Some(&start))?;
        if point_score(&cand) > point_score(&points[to]) {
            points[to] = cand;
        }
    }
    Ok(Curve { points })
}

fn point_score(p: &CurvePoint) -> f64 {
    if p.r_raw > 0.0 || p.diagnostics.q_z <= 0.0 {
        p.r_raw
    } else {
        p.r_raw / p.diagnostics.q_z
    }
}
