//! Decoy-state bounds on the single-photon yield and phase error, with an
//! optional finite-statistics layer.
//!
//! Writing `G(x, y) = e^{x+y} Q(x, y) = Σ x^n y^m Y_nm / (n! m!)` for the
//! gain at intensities `(x, y)`, the double difference
//! `S(x, y) = G(x, y) - G(x, ω) - G(ω, y) + G(ω, ω)` keeps only terms with
//! `n, m ≥ 1`. Subtracting `B · S(μ, μ)` from `S(ν, ν)`, with `B` chosen so that
//! every coefficient except the `(1, 1)` one is non-positive, leaves a lower
//! bound on `Y_11` that needs no assumption beyond `Y_nm ≥ 0`.

use rayon::prelude::*;

use crate::error::{check_nonneg, Error, Result};
use crate::fock::Basis;
use crate::rates::{h2, single_pair_probability, BasisStats, KeyRate, LinkTables, RateModel, Source};
use crate::scenario::Scenario;

/// Photon numbers beyond this are covered by the monotone tail of the ratio.
const RATIO_TERMS: i32 = 64;

/// Below this relative size of the `(1,1)` coefficient the set is degenerate.
const DEGENERATE_RATIO: f64 = 1e-3;

/// Signal intensity followed by strictly decreasing decoys.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensitySet {
    values: Vec<f64>,
}

impl IntensitySet {
    pub fn new(signal: f64, decoys: &[f64]) -> Result<Self> {
        let mut values = Vec::with_capacity(decoys.len() + 1);
        values.push(check_nonneg("signal intensity", signal)?);
        for &d in decoys {
            values.push(check_nonneg("decoy intensity", d)?);
        }
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::IntensitySet("intensities must be strictly decreasing"));
        }
        Ok(IntensitySet { values })
    }

    pub fn signal_only(signal: f64) -> Result<Self> {
        IntensitySet::new(signal, &[])
    }

    /// Signal `μ`, weak decoy `ν` and (near-)vacuum decoy `ω`.
    pub fn two_decoy(signal: f64, weak: f64, vacuum: f64) -> Result<Self> {
        IntensitySet::new(signal, &[weak, vacuum])
    }

    pub fn signal(&self) -> f64 {
        self.values[0]
    }

    pub fn decoys(&self) -> &[f64] {
        &self.values[1..]
    }

    /// Signal first.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Total number of pulse pairs and the overall failure probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteKeyParams {
    pub n_pulses: f64,
    pub epsilon: f64,
}

impl FiniteKeyParams {
    /// `n_pulses` may be infinite.
    pub fn new(n_pulses: f64, epsilon: f64) -> Result<Self> {
        if n_pulses.is_nan() || n_pulses < 1.0 {
            return Err(Error::ParameterDomain { name: "n_pulses", value: n_pulses, reason: "must be at least 1" });
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::ParameterDomain { name: "epsilon", value: epsilon, reason: "must lie in (0, 1)" });
        }
        Ok(FiniteKeyParams { n_pulses, epsilon })
    }
}

/// Gains and error gains for every (Alice intensity, Bob intensity) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableTable {
    alice: IntensitySet,
    bob: IntensitySet,
    z: Vec<BasisStats>,
    x: Vec<BasisStats>,
}

impl ObservableTable {
    pub fn alice(&self) -> &IntensitySet {
        &self.alice
    }

    pub fn bob(&self) -> &IntensitySet {
        &self.bob
    }

    /// Entry for Alice's `i`-th and Bob's `j`-th intensity (0 is the signal).
    pub fn get(&self, basis: Basis, i: usize, j: usize) -> BasisStats {
        let k = i * self.bob.len() + j;
        match basis {
            Basis::Z => self.z[k],
            Basis::X => self.x[k],
        }
    }

    pub fn signal(&self, basis: Basis) -> BasisStats {
        self.get(basis, 0, 0)
    }
}

/// Run the interference model once per intensity pair.
pub fn observe_intensities(
    model: &RateModel,
    tables: &LinkTables,
    alice: &IntensitySet,
    bob: &IntensitySet,
    mu_c: f64,
) -> Result<ObservableTable> {
    let pairs: Vec<(f64, f64)> = alice
        .values()
        .iter()
        .flat_map(|&a| bob.values().iter().map(move |&b| (a, b)))
        .collect();
    let stats = pairs
        .par_iter()
        .map(|&(a, b)| {
            let obs = model.observe(tables, Source::Wcp(a), Source::Wcp(b), mu_c)?;
            Ok((obs.z.stats(Basis::Z), obs.x.stats(Basis::X)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (z, x) = stats.into_iter().unzip();
    Ok(ObservableTable { alice: alice.clone(), bob: bob.clone(), z, x })
}

/// Observable table for a scenario (its own `mu_a`, `mu_b` are ignored).
pub fn simulate_observables(scenario: &Scenario, alice: &IntensitySet, bob: &IntensitySet) -> Result<ObservableTable> {
    scenario.validate()?;
    let model = RateModel::for_scenario(scenario)?;
    let tables = model.tables(&scenario.links)?;
    observe_intensities(&model, &tables, alice, bob, scenario.mu_c)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundFlags {
    /// A lower bound came out negative and was clamped to zero.
    pub clamped: bool,
    /// The intensities are too close to separate single photons; trivial
    /// bounds are reported.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePhotonBounds {
    pub y11_z_lower: f64,
    pub y11_x_lower: f64,
    /// Lower bounds before clamping; negative when infeasible.
    pub y11_z_unclamped: f64,
    pub y11_x_unclamped: f64,
    /// Not capped at 1/2; the key rate caps it.
    pub e11_x_upper: f64,
    pub flags: BoundFlags,
}

/// Which side of an observed quantity a bound may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Lower,
    Upper,
}

/// `Σ c_k e^{x_k + y_k} Q_k` over a fixed set of intensity pairs.
#[derive(Debug, Clone)]
struct Combination {
    terms: Vec<(f64, usize, usize)>,
}

impl Combination {
    /// `S(i, j)` with `w` the index of the weakest decoy on each side.
    fn double_difference(i: usize, j: usize, wa: usize, wb: usize, scale: f64) -> Self {
        let mut c = Combination { terms: Vec::new() };
        c.add(scale, i, j);
        c.add(-scale, i, wb);
        c.add(-scale, wa, j);
        c.add(scale, wa, wb);
        c
    }

    fn add(&mut self, coef: f64, i: usize, j: usize) {
        match self.terms.iter_mut().find(|t| t.1 == i && t.2 == j) {
            Some(t) => t.0 += coef,
            None => self.terms.push((coef, i, j)),
        }
    }

    fn plus(mut self, other: &Combination) -> Self {
        for &(c, i, j) in &other.terms {
            self.add(c, i, j);
        }
        self.terms.retain(|t| t.0 != 0.0);
        self
    }

    /// Value and a rounding allowance. `value(i, j, side)` supplies the gain,
    /// and `side` tells it which way the bound may degrade it.
    fn evaluate(&self, table: &ObservableTable, want: Side, value: impl Fn(usize, usize, Side) -> f64) -> (f64, f64) {
        let (a, b) = (table.alice.values(), table.bob.values());
        let mut sum = 0.0;
        let mut abs = 0.0;
        for &(c, i, j) in &self.terms {
            let side = if (c > 0.0) == (want == Side::Lower) { Side::Lower } else { Side::Upper };
            let t = c * (a[i] + b[j]).exp() * value(i, j, side);
            sum += t;
            abs += t.abs();
        }
        (sum, 8.0 * f64::EPSILON * abs)
    }

    fn len(&self) -> usize {
        self.terms.len()
    }
}

/// `(x^n - ω^n) / (μ^n - ω^n)`, maximized over `n ≥ from`.
fn max_ratio(signal: f64, weak: f64, vacuum: f64, from: i32) -> f64 {
    (from..=RATIO_TERMS)
        .map(|n| (weak.powi(n) - vacuum.powi(n)) / (signal.powi(n) - vacuum.powi(n)))
        .filter(|r| r.is_finite())
        .fold(0.0, f64::max)
}

/// The linear combinations behind the bounds, fixed by the intensity sets.
#[derive(Debug, Clone)]
struct DecoyPlan {
    yield_numerator: Combination,
    yield_denominator: f64,
    error_numerator: Combination,
    error_denominator: f64,
    degenerate: bool,
}

impl DecoyPlan {
    fn new(alice: &IntensitySet, bob: &IntensitySet) -> Result<Self> {
        if alice.len() < 3 || bob.len() < 3 {
            return Err(Error::IntensitySet("bounds need a signal and two decoys per party"));
        }
        let (wa, wb) = (alice.len() - 1, bob.len() - 1);
        let [mu_a, nu_a, om_a] = [alice.values()[0], alice.values()[1], alice.values()[wa]];
        let [mu_b, nu_b, om_b] = [bob.values()[0], bob.values()[1], bob.values()[wb]];

        let r1a = (nu_a - om_a) / (mu_a - om_a);
        let r1b = (nu_b - om_b) / (mu_b - om_b);
        let r2a = max_ratio(mu_a, nu_a, om_a, 2);
        let r2b = max_ratio(mu_b, nu_b, om_b, 2);
        // every (n, m) != (1, 1) coefficient of S(ν,ν) - B S(μ,μ) is <= 0
        let b = [r1a * r2b, r2a * r1b, r2a * r2b].into_iter().fold(0.0, f64::max);

        let f1 = (nu_a - om_a) * (nu_b - om_b);
        let c11 = f1 - b * (mu_a - om_a) * (mu_b - om_b);
        let yield_numerator =
            Combination::double_difference(1, 1, wa, wb, 1.0).plus(&Combination::double_difference(0, 0, wa, wb, -b));
        let error_numerator = Combination::double_difference(1, 1, wa, wb, 1.0);
        Ok(DecoyPlan {
            yield_numerator,
            yield_denominator: c11,
            error_numerator,
            error_denominator: f1,
            degenerate: !(c11 > DEGENERATE_RATIO * f1) || f1 <= 0.0,
        })
    }

    /// Number of distinct observed quantities the bounds rely on.
    fn estimated_quantities(&self) -> usize {
        2 * self.yield_numerator.len() + self.error_numerator.len()
    }

    fn bounds(&self, table: &ObservableTable, value: impl Fn(Basis, bool, usize, usize, Side) -> f64) -> SinglePhotonBounds {
        if self.degenerate {
            return SinglePhotonBounds {
                y11_z_lower: 0.0,
                y11_x_lower: 0.0,
                y11_z_unclamped: 0.0,
                y11_x_unclamped: 0.0,
                e11_x_upper: 1.0,
                flags: BoundFlags { clamped: false, degenerate: true },
            };
        }
        let yield_lower = |basis: Basis| {
            let (v, margin) =
                self.yield_numerator.evaluate(table, Side::Lower, |i, j, s| value(basis, false, i, j, s));
            (v - margin) / self.yield_denominator
        };
        let y11_z_unclamped = yield_lower(Basis::Z);
        let y11_x_unclamped = yield_lower(Basis::X);
        let flags = BoundFlags { clamped: y11_z_unclamped < 0.0 || y11_x_unclamped < 0.0, degenerate: false };
        let (y11_z_lower, y11_x_lower) = (y11_z_unclamped.max(0.0), y11_x_unclamped.max(0.0));
        let (ev, margin) = self.error_numerator.evaluate(table, Side::Upper, |i, j, s| value(Basis::X, true, i, j, s));
        let error_yield = ((ev + margin) / self.error_denominator).max(0.0);
        let e11_x_upper = if y11_x_lower > 0.0 { (error_yield / y11_x_lower).min(1.0) } else { 1.0 };
        SinglePhotonBounds { y11_z_lower, y11_x_lower, y11_z_unclamped, y11_x_unclamped, e11_x_upper, flags }
    }
}

fn observed(table: &ObservableTable, basis: Basis, error: bool, i: usize, j: usize) -> f64 {
    let s = table.get(basis, i, j);
    if error {
        s.error_gain
    } else {
        s.gain
    }
}

/// Asymptotic two-decoy bounds from exact observables.
pub fn estimate_single_photon_bounds(table: &ObservableTable) -> Result<SinglePhotonBounds> {
    let plan = DecoyPlan::new(&table.alice, &table.bob)?;
    Ok(plan.bounds(table, |basis, err, i, j, _| observed(table, basis, err, i, j)))
}

/// Interval for the mean of a count given `observed` and `beta = ln(1/ε)`
/// (multiplicative Chernoff bounds, inverted).
pub fn count_interval(observed: f64, beta: f64) -> (f64, f64) {
    let lower = observed - ((beta * beta + 8.0 * beta * observed).sqrt() - beta) / 2.0;
    let upper = observed + beta + (beta * beta + 2.0 * beta * observed).sqrt();
    (lower.max(0.0), upper)
}

/// Pulse pairs behind one (basis, intensity pair) bucket: both parties pick
/// each basis with probability 1/2 and each intensity uniformly.
pub fn pulses_per_bucket(fk: &FiniteKeyParams, alice: &IntensitySet, bob: &IntensitySet) -> f64 {
    fk.n_pulses / (4.0 * alice.len() as f64 * bob.len() as f64)
}

/// Two-decoy bounds with every observed gain moved to the edge of its
/// confidence interval; `ε` is shared equally by the quantities used.
pub fn estimate_finite_bounds(table: &ObservableTable, fk: &FiniteKeyParams) -> Result<SinglePhotonBounds> {
    let plan = DecoyPlan::new(&table.alice, &table.bob)?;
    let n = pulses_per_bucket(fk, &table.alice, &table.bob);
    if n.is_infinite() {
        return estimate_single_photon_bounds(table);
    }
    let beta = (plan.estimated_quantities() as f64 / fk.epsilon).ln();
    Ok(plan.bounds(table, |basis, err, i, j, side| {
        let (lo, hi) = count_interval(n * observed(table, basis, err, i, j), beta);
        match side {
            Side::Lower => lo / n,
            Side::Upper => hi / n,
        }
    }))
}

/// Key rate from decoy bounds and the observed signal statistics.
pub fn decoy_key_rate(bounds: &SinglePhotonBounds, table: &ObservableTable, f_e: f64) -> KeyRate {
    let (mu_a, mu_b) = (table.alice.signal(), table.bob.signal());
    let q11 = single_pair_probability(mu_a, mu_b) * bounds.y11_z_lower;
    let z = table.signal(Basis::Z);
    let e_z = z.qber().unwrap_or(0.0);
    let raw = q11 * (1.0 - h2(bounds.e11_x_upper.min(0.5))) - z.gain * f_e * h2(e_z);
    KeyRate { raw, clamped: raw.max(0.0) }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteKeyRate {
    pub rate: KeyRate,
    pub bounds: SinglePhotonBounds,
    /// Too few events for a positive single-photon bound.
    pub insufficient_statistics: bool,
}

/// Finite-size key rate; `bounds` should come from [`estimate_finite_bounds`].
///
/// When the yields cannot be bounded away from zero the clamped rate is 0
/// and the raw value measures how far the bound is from feasible.
pub fn finite_key_rate(
    bounds: &SinglePhotonBounds,
    table: &ObservableTable,
    fk: &FiniteKeyParams,
    f_e: f64,
) -> FiniteKeyRate {
    let n = pulses_per_bucket(fk, &table.alice, &table.bob);
    let z = table.signal(Basis::Z);
    let insufficient = bounds.y11_z_lower <= 0.0 || bounds.y11_x_lower <= 0.0 || n * z.gain < 1.0;
    let rate = if insufficient {
        let p11 = single_pair_probability(table.alice.signal(), table.bob.signal());
        let shortfall = p11 * bounds.y11_z_unclamped.min(bounds.y11_x_unclamped).min(0.0);
        let leak = z.gain * f_e * h2(z.qber().unwrap_or(0.0));
        KeyRate { raw: shortfall - leak, clamped: 0.0 }
    } else {
        decoy_key_rate(bounds, table, f_e)
    };
    FiniteKeyRate { rate, bounds: *bounds, insufficient_statistics: insufficient }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intensity_set_validation() {
        assert!(IntensitySet::two_decoy(0.5, 0.1, 0.0).is_ok());
        assert!(IntensitySet::two_decoy(0.5, 0.5, 0.0).is_err());
        assert!(IntensitySet::two_decoy(0.5, 0.01, 0.02).is_err());
        assert!(IntensitySet::new(-0.1, &[]).is_err());
        let s = IntensitySet::two_decoy(0.5, 0.1, 0.0).unwrap();
        assert_eq!(s.signal(), 0.5);
        assert_eq!(s.decoys(), &[0.1, 0.0]);
    }

    #[test]
    fn finite_params_validation() {
        assert!(FiniteKeyParams::new(1e15, 1e-10).is_ok());
        assert!(FiniteKeyParams::new(f64::INFINITY, 1e-10).is_ok());
        assert!(FiniteKeyParams::new(0.5, 1e-10).is_err());
        assert!(FiniteKeyParams::new(1e6, 0.0).is_err());
        assert!(FiniteKeyParams::new(1e6, 1.0).is_err());
    }

    #[test]
    fn count_interval_contains_observation() {
        for x in [0.0, 1.0, 1e3, 1e9] {
            let (lo, hi) = count_interval(x, 25.0);
            assert!(lo <= x && x <= hi);
        }
        let (lo, hi) = count_interval(1e12, 25.0);
        let width = (hi - lo) / 1e12;
        assert!(width < 2e-5 && width > 1e-5);
    }

    #[test]
    fn ratios_for_vacuum_decoy() {
        assert!((max_ratio(0.5, 0.1, 0.0, 2) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn close_intensities_are_degenerate() {
        let a = IntensitySet::two_decoy(0.5, 0.4999, 0.0).unwrap();
        assert!(DecoyPlan::new(&a, &a).unwrap().degenerate);
        let a = IntensitySet::two_decoy(0.5, 0.1, 0.0).unwrap();
        assert!(!DecoyPlan::new(&a, &a).unwrap().degenerate);
        assert!(DecoyPlan::new(&IntensitySet::signal_only(0.5).unwrap(), &a).is_err());
    }
}
