//! Sifted gains, error rates, single-photon yields and the key rate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{propagate_photon_source, propagate_wcp, ChannelParams};
use crate::coincidence::{CoincidenceTable, RelayModel};
use crate::error::{check_range, Error, Result};
use crate::fock::{pair_distribution, Basis, Bb84State, Bit};
use crate::interference::{BeamSplitterSpec, BsmOutcome, DetectorParams, JointOutcomeDistribution};
use crate::math::two_mode_state_count;
use crate::scenario::{Links, Scenario};

/// Error-correction inefficiency used throughout unless configured.
pub const DEFAULT_F_E: f64 = 1.16;

/// Shannon binary entropy in bits.
pub fn binary_entropy(x: f64) -> Result<f64> {
    check_range("x", x, 0.0, 1.0)?;
    Ok(h2(x))
}

pub(crate) fn h2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sift {
    Flip,
    NonFlip,
    Discard,
}

/// Post-processing rule for a pair of relay announcements.
pub fn sift_decision(basis: Basis, david: BsmOutcome, ethan: BsmOutcome) -> Sift {
    use BsmOutcome::*;
    match (basis, david, ethan) {
        (_, Fail, _) | (_, _, Fail) => Sift::Discard,
        (Basis::Z, _, _) => Sift::Flip,
        (Basis::X, PsiPlus, PsiPlus) | (Basis::X, PsiMinus, PsiMinus) => Sift::Flip,
        (Basis::X, _, _) => Sift::NonFlip,
    }
}

/// How a source is modeled for a given evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Source {
    /// Phase-randomized weak coherent pulse of this mean photon number.
    Wcp(f64),
    /// Ideal single photon.
    SinglePhoton,
}

/// Party weight vector over photon occupations (in `pol.basis` modes) after the link.
pub fn party_weights(source: Source, pol: Bb84State, ch: &ChannelParams, n_max: u32) -> Result<Vec<f64>> {
    let dist = match source {
        Source::Wcp(mu) => propagate_wcp(mu, pol, ch, n_max)?,
        Source::SinglePhoton => propagate_photon_source(&[0.0, 1.0], pol, ch, n_max)?,
    };
    let mut w = vec![0.0; two_mode_state_count(n_max)];
    for (occ, p) in dist.iter() {
        w[occ.index()] += p;
    }
    Ok(w)
}

/// Joint outcomes when Alice and Bob prepared the same state and when they
/// prepared orthogonal states, within one basis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BasisOutcomes {
    pub same: JointOutcomeDistribution,
    pub orthogonal: JointOutcomeDistribution,
}

/// Gain and error gain (gain × QBER) of one basis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BasisStats {
    pub gain: f64,
    pub error_gain: f64,
}

impl BasisStats {
    /// `None` when nothing was detected.
    pub fn qber(&self) -> Option<f64> {
        (self.gain > 0.0).then(|| self.error_gain / self.gain)
    }
}

impl BasisOutcomes {
    /// Average over the two preparations; errors follow [`sift_decision`]
    /// (a flip on equal bits or a non-flip on opposite bits is an error).
    pub fn stats(&self, basis: Basis) -> BasisStats {
        let mut gain = 0.0;
        let mut errors = 0.0;
        for (dist, same) in [(&self.same, true), (&self.orthogonal, false)] {
            for d in BsmOutcome::SUCCESS {
                for e in BsmOutcome::SUCCESS {
                    let p = dist.get(d, e);
                    gain += p;
                    let wrong = match sift_decision(basis, d, e) {
                        Sift::Flip => same,
                        Sift::NonFlip => !same,
                        Sift::Discard => false,
                    };
                    if wrong {
                        errors += p;
                    }
                }
            }
        }
        BasisStats { gain: gain / 2.0, error_gain: errors / 2.0 }
    }

    fn accumulate(&mut self, other: &BasisOutcomes, weight: f64) {
        for (dst, src) in [(&mut self.same, &other.same), (&mut self.orthogonal, &other.orthogonal)] {
            for i in 0..3 {
                for j in 0..3 {
                    dst.probs[i][j] += weight * src.probs[i][j];
                }
            }
            dst.unresolved += weight * src.unresolved;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Observation {
    pub z: BasisOutcomes,
    pub x: BasisOutcomes,
}

impl Observation {
    pub fn basis(&self, basis: Basis) -> &BasisOutcomes {
        match basis {
            Basis::Z => &self.z,
            Basis::X => &self.x,
        }
    }
}

/// Treatment of the link rotation angles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MisalignmentSampling {
    /// Every link rotates by its configured angle.
    Fixed,
    /// Each link angle is drawn uniformly from `[-θ, +θ]`; observations are
    /// averaged over `draws` draws from a seeded generator.
    MonteCarlo { seed: u64, draws: u32 },
}

/// Coincidence tables for one placement of the links (one per angle draw).
#[derive(Debug, Clone)]
pub struct LinkTables {
    draws: Vec<(Links, CoincidenceTable)>,
}

/// Relay model plus misalignment treatment; evaluates observations for
/// arbitrary intensities.
#[derive(Debug, Clone)]
pub struct RateModel {
    relay: RelayModel,
    sampling: MisalignmentSampling,
}

impl RateModel {
    pub fn new(detector: DetectorParams, bs: BeamSplitterSpec, n_max: u32, sampling: MisalignmentSampling) -> Result<Self> {
        Ok(RateModel { relay: RelayModel::new(detector, bs, n_max)?, sampling })
    }

    pub fn for_scenario(s: &Scenario) -> Result<Self> {
        RateModel::new(s.detector, s.beam_splitter, s.n_max, MisalignmentSampling::Fixed)
    }

    pub fn n_max(&self) -> u32 {
        self.relay.n_max()
    }

    pub fn sampling(&self) -> MisalignmentSampling {
        self.sampling
    }

    pub fn tables(&self, links: &Links) -> Result<LinkTables> {
        let realizations: Vec<Links> = match self.sampling {
            MisalignmentSampling::Fixed => vec![*links],
            MisalignmentSampling::MonteCarlo { seed, draws } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let max = links.thetas();
                (0..draws.max(1))
                    .map(|_| {
                        let mut th = [0.0; 4];
                        for k in 0..4 {
                            th[k] = if max[k] == 0.0 { 0.0 } else { rng.gen_range(-max[k].abs()..=max[k].abs()) };
                        }
                        links.with_thetas(th)
                    })
                    .collect()
            }
        };
        let draws = realizations
            .into_iter()
            .map(|l| Ok((l, self.relay.coincidences(&l.charles_david, &l.charles_ethan)?)))
            .collect::<Result<_>>()?;
        Ok(LinkTables { draws })
    }

    /// Joint outcomes for the four preparations used in sifting.
    pub fn observe(&self, tables: &LinkTables, alice: Source, bob: Source, mu_c: f64) -> Result<Observation> {
        let n_max = self.n_max();
        let pairs = pair_distribution(mu_c / 2.0, n_max);
        let mut total = Observation::default();
        let weight = 1.0 / tables.draws.len() as f64;
        for (links, table) in &tables.draws {
            let obs = observe_one(table, links, alice, bob, &pairs, n_max)?;
            total.z.accumulate(&obs.z, weight);
            total.x.accumulate(&obs.x, weight);
        }
        Ok(total)
    }

    /// Full rate summary with exact single-photon quantities.
    pub fn summarize(&self, tables: &LinkTables, mu_a: f64, mu_b: f64, mu_c: f64, f_e: f64) -> Result<RateSummary> {
        let signal = self.observe(tables, Source::Wcp(mu_a), Source::Wcp(mu_b), mu_c)?;
        let single = self.observe(tables, Source::SinglePhoton, Source::SinglePhoton, mu_c)?;
        Ok(RateSummary::from_observations(&signal, &single, mu_a, mu_b, f_e))
    }
}

fn observe_one(
    table: &CoincidenceTable,
    links: &Links,
    alice: Source,
    bob: Source,
    pairs: &[f64],
    n_max: u32,
) -> Result<Observation> {
    let mut obs = Observation::default();
    for basis in [Basis::Z, Basis::X] {
        let a0 = Bb84State::new(basis, Bit::Zero);
        let wa = party_weights(alice, a0, &links.alice, n_max)?;
        let wb_same = party_weights(bob, a0, &links.bob, n_max)?;
        let wb_orth = party_weights(bob, a0.orthogonal(), &links.bob, n_max)?;
        let out = BasisOutcomes {
            same: table.outcomes(basis, pairs, &wa, &wb_same),
            orthogonal: table.outcomes(basis, pairs, &wa, &wb_orth),
        };
        match basis {
            Basis::Z => obs.z = out,
            Basis::X => obs.x = out,
        }
    }
    Ok(obs)
}

/// Everything that enters the key-rate formula at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSummary {
    pub q_z: f64,
    pub e_z: Option<f64>,
    pub q_x: f64,
    pub e_x: Option<f64>,
    pub y11_z: f64,
    pub y11_x: f64,
    pub e11_x: Option<f64>,
    pub q11_z: f64,
    /// Unclamped key rate, bits per pulse.
    pub r_raw: f64,
}

impl RateSummary {
    pub fn from_observations(signal: &Observation, single: &Observation, mu_a: f64, mu_b: f64, f_e: f64) -> Self {
        let z = signal.z.stats(Basis::Z);
        let x = signal.x.stats(Basis::X);
        let y_z = single.z.stats(Basis::Z);
        let y_x = single.x.stats(Basis::X);
        let q11_z = single_pair_probability(mu_a, mu_b) * y_z.gain;
        let mut s = RateSummary {
            q_z: z.gain,
            e_z: z.qber(),
            q_x: x.gain,
            e_x: x.qber(),
            y11_z: y_z.gain,
            y11_x: y_x.gain,
            e11_x: y_x.qber(),
            q11_z,
            r_raw: 0.0,
        };
        s.r_raw = secret_key_rate(&s, f_e).raw;
        s
    }

    /// Key rate clamped at zero.
    pub fn key_rate(&self) -> f64 {
        self.r_raw.max(0.0)
    }
}

/// `P^{1,1} = μ_a μ_b e^{-(μ_a+μ_b)}`.
pub fn single_pair_probability(mu_a: f64, mu_b: f64) -> f64 {
    mu_a * mu_b * (-(mu_a + mu_b)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRate {
    pub raw: f64,
    pub clamped: f64,
}

/// `R = Q11_Z [1 - H2(e11_X)] - Q_Z f_e H2(E_Z)`.
pub fn key_rate_formula(q11_z: f64, e11_x: f64, q_z: f64, e_z: f64, f_e: f64) -> f64 {
    q11_z * (1.0 - h2(e11_x)) - q_z * f_e * h2(e_z)
}

pub fn secret_key_rate(s: &RateSummary, f_e: f64) -> KeyRate {
    // without single-photon detections the first term is zero whatever e11 is
    let e11 = s.e11_x.unwrap_or(0.5);
    let e_z = s.e_z.unwrap_or(0.0);
    let raw = key_rate_formula(s.q11_z, e11, s.q_z, e_z, f_e);
    KeyRate { raw, clamped: raw.max(0.0) }
}

/// `(Q, E)` of one basis for WCP sources.
pub fn gains_and_qber(scenario: &Scenario, basis: Basis) -> Result<(f64, f64)> {
    scenario.validate()?;
    let model = RateModel::for_scenario(scenario)?;
    let tables = model.tables(&scenario.links)?;
    let obs = model.observe(&tables, Source::Wcp(scenario.mu_a), Source::Wcp(scenario.mu_b), scenario.mu_c)?;
    let stats = obs.basis(basis).stats(basis);
    stats.qber().map(|e| (stats.gain, e)).ok_or(Error::NoSignal)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePhotonQuantities {
    pub y11_z: f64,
    pub y11_x: f64,
    pub e11_x: Option<f64>,
    pub q11_z: f64,
}

/// Yields with both weak pulses replaced by ideal single photons.
pub fn single_photon_quantities(scenario: &Scenario) -> Result<SinglePhotonQuantities> {
    scenario.validate()?;
    let model = RateModel::for_scenario(scenario)?;
    let tables = model.tables(&scenario.links)?;
    let obs = model.observe(&tables, Source::SinglePhoton, Source::SinglePhoton, scenario.mu_c)?;
    let z = obs.z.stats(Basis::Z);
    let x = obs.x.stats(Basis::X);
    Ok(SinglePhotonQuantities {
        y11_z: z.gain,
        y11_x: x.gain,
        e11_x: x.qber(),
        q11_z: single_pair_probability(scenario.mu_a, scenario.mu_b) * z.gain,
    })
}

/// Gains, error rates and asymptotic key rate of a scenario.
pub fn summarize(scenario: &Scenario, f_e: f64) -> Result<RateSummary> {
    scenario.validate()?;
    check_range("f_e", f_e, 1.0, f64::INFINITY)?;
    let model = RateModel::for_scenario(scenario)?;
    let tables = model.tables(&scenario.links)?;
    model.summarize(&tables, scenario.mu_a, scenario.mu_b, scenario.mu_c, f_e)
}
