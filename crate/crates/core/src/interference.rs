//! Two-photon interference at the relays and threshold detection.
//!
//! Each relay is a balanced beam splitter followed by a polarizing beam
//! splitter on each output and four threshold detectors
//! (port3-H, port3-V, port4-H, port4-V). Port 1 of David's beam splitter
//! takes Alice's pulse and port 2 Charles' photon; Ethan has Charles' photon
//! on port 1 and Bob's pulse on port 2.

use std::collections::HashMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use crate::channel::LossRecordMixture;
use crate::error::{check_range, Error, Result};
use crate::fock::{to_hv, AmplitudeState, Occupation, PhotonNumberDistribution, Port};
use crate::math::{binomial, factorial, CompensatedSum};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Beam splitter with `a1† → t a3† + r a4†` and `a2† → r a3† + t a4†`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSplitterSpec {
    pub t: Complex64,
    pub r: Complex64,
}

impl BeamSplitterSpec {
    /// `t = 1/√2`, `r = i/√2`.
    pub fn balanced() -> Self {
        BeamSplitterSpec {
            t: Complex64::new(FRAC_1_SQRT_2, 0.0),
            r: Complex64::new(0.0, FRAC_1_SQRT_2),
        }
    }

    /// Checks `|r|² + |t|² = 1` and `r*t + r t* = 0`.
    pub fn new(t: Complex64, r: Complex64) -> Result<Self> {
        let norm = t.norm_sqr() + r.norm_sqr();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::ParameterDomain {
                name: "beam_splitter",
                value: norm,
                reason: "|r|^2 + |t|^2 must equal 1",
            });
        }
        let cross = r.conj() * t + r * t.conj();
        if cross.norm() > 1e-12 {
            return Err(Error::ParameterDomain {
                name: "beam_splitter",
                value: cross.norm(),
                reason: "r*t + rt* must vanish",
            });
        }
        Ok(BeamSplitterSpec { t, r })
    }
}

impl Default for BeamSplitterSpec {
    fn default() -> Self {
        Self::balanced()
    }
}

/// Amplitudes for `n_in1`, `n_in2` photons of one polarization entering the
/// beam splitter; entry `z` is the amplitude of `z` photons leaving port 3
/// (and `n_in1 + n_in2 - z` leaving port 4).
pub fn beam_splitter_output(n_in1: u32, n_in2: u32, bs: &BeamSplitterSpec) -> Vec<Complex64> {
    let n = n_in1 + n_in2;
    let norm_in = factorial(n_in1) * factorial(n_in2);
    (0..=n)
        .map(|z| {
            let bosonic = (factorial(z) * factorial(n - z) / norm_in).sqrt();
            let k_lo = z.saturating_sub(n_in2);
            let k_hi = z.min(n_in1);
            let mut acc = ZERO;
            for k in k_lo..=k_hi {
                let c = binomial(n_in1, k) * binomial(n_in2, z - k);
                acc += bs.t.powu(2 * k + n_in2 - z) * bs.r.powu(n_in1 + z - 2 * k) * c;
            }
            acc * bosonic
        })
        .collect()
}

/// Interfere pure states on the two inputs of one relay, polarization by
/// polarization. The result lives on `[Port3, Port4]`, where `h`/`v` of each
/// occupation are the photons reaching that port's H and V detectors.
///
/// `photon_bound` is the largest total photon number the caller's tables
/// can hold; exceeding it is an error rather than a silent truncation.
pub fn interfere_mode_pair(
    port1: &[(Occupation, Complex64)],
    port2: &[(Occupation, Complex64)],
    bs: &BeamSplitterSpec,
    photon_bound: u32,
) -> Result<AmplitudeState> {
    let mut out = AmplitudeState::new(vec![Port::Port3, Port::Port4]);
    let mut cache: HashMap<(u32, u32), Vec<Complex64>> = HashMap::new();
    let mut table = |a: u32, b: u32| {
        cache.entry((a, b)).or_insert_with(|| beam_splitter_output(a, b, bs)).clone()
    };
    for &(o1, a1) in port1 {
        for &(o2, a2) in port2 {
            let photons = o1.total() + o2.total();
            if photons > photon_bound {
                return Err(Error::TruncationOverflow { photons, bound: photon_bound });
            }
            let amp = a1 * a2;
            if amp == ZERO {
                continue;
            }
            let (nh, nv) = (o1.h + o2.h, o1.v + o2.v);
            let th = table(o1.h, o2.h);
            let tv = table(o1.v, o2.v);
            for (zh, &ah) in th.iter().enumerate() {
                if ah == ZERO {
                    continue;
                }
                for (zv, &av) in tv.iter().enumerate() {
                    if av == ZERO {
                        continue;
                    }
                    let (zh, zv) = (zh as u32, zv as u32);
                    out.add(
                        vec![Occupation::new(zh, zv), Occupation::new(nh - zh, nv - zv)],
                        amp * ah * av,
                    );
                }
            }
        }
    }
    Ok(out)
}

/// Threshold single-photon detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub eta_d: f64,
    /// Dark-count probability per gate.
    pub y0: f64,
}

impl DetectorParams {
    pub fn new(eta_d: f64, y0: f64) -> Result<Self> {
        check_range("eta_d", eta_d, 0.0, 1.0)?;
        check_range("y0", y0, 0.0, 1.0)?;
        Ok(DetectorParams { eta_d, y0 })
    }

    pub fn ideal() -> Self {
        DetectorParams { eta_d: 1.0, y0: 0.0 }
    }

    /// `(1 - Y0)(1 - η)^k`.
    pub fn no_click_probability(&self, photons: u32) -> f64 {
        (1.0 - self.y0) * (1.0 - self.eta_d).powi(photons as i32)
    }

    /// `1 - (1 - Y0)(1 - η)^k`, evaluated without cancellation.
    pub fn click_probability(&self, photons: u32) -> f64 {
        if photons == 0 {
            return self.y0;
        }
        if self.eta_d >= 1.0 || self.y0 >= 1.0 {
            return 1.0;
        }
        -((1.0 - self.y0).ln() + photons as f64 * (-self.eta_d).ln_1p()).exp_m1()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BsmOutcome {
    PsiPlus,
    PsiMinus,
    Fail,
}

impl BsmOutcome {
    pub const ALL: [BsmOutcome; 3] = [BsmOutcome::PsiPlus, BsmOutcome::PsiMinus, BsmOutcome::Fail];
    pub const SUCCESS: [BsmOutcome; 2] = [BsmOutcome::PsiPlus, BsmOutcome::PsiMinus];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_success(self) -> bool {
        self != BsmOutcome::Fail
    }
}

/// Outcome probabilities `[ψ⁺, ψ⁻, fail]` for fixed photon numbers on the
/// four rails of one relay.
///
/// ψ⁻ is exactly {3H, 4V} or {3V, 4H} clicking; ψ⁺ is exactly {3H, 3V} or
/// {4H, 4V}; every other click pattern fails.
pub fn bsm_weights(port3: Occupation, port4: Occupation, det: &DetectorParams) -> [f64; 3] {
    let rails = [port3.h, port3.v, port4.h, port4.v];
    let c = rails.map(|k| det.click_probability(k));
    let q = rails.map(|k| det.no_click_probability(k));
    let only = |a: usize, b: usize| {
        (0..4).fold(1.0, |acc, i| acc * if i == a || i == b { c[i] } else { q[i] })
    };
    let psi_minus = only(0, 3) + only(1, 2);
    let psi_plus = only(0, 1) + only(2, 3);
    [psi_plus, psi_minus, (1.0 - psi_plus - psi_minus).max(0.0)]
}

/// Outcome distribution of one relay for a state on `[Port3, Port4]`.
/// A sub-normalized state yields sub-normalized outcome probabilities.
pub fn bsm_outcome_probabilities(rails: &AmplitudeState, det: &DetectorParams) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (occ, amp) in rails.iter() {
        let p = amp.norm_sqr();
        if p == 0.0 {
            continue;
        }
        let w = bsm_weights(occ[0], occ[1], det);
        for k in 0..3 {
            out[k] += p * w[k];
        }
    }
    out
}

/// Probabilities of the nine (David, Ethan) outcome pairs.
///
/// `unresolved` is the probability carried by source terms beyond the
/// photon-number truncation; the nine entries plus `unresolved` sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointOutcomeDistribution {
    pub probs: [[f64; 3]; 3],
    pub unresolved: f64,
}

impl JointOutcomeDistribution {
    pub fn get(&self, david: BsmOutcome, ethan: BsmOutcome) -> f64 {
        self.probs[david.index()][ethan.index()]
    }

    pub fn resolved_total(&self) -> f64 {
        self.probs.iter().flatten().sum()
    }

    pub fn total(&self) -> f64 {
        self.resolved_total() + self.unresolved
    }

    /// Probability that both relays announce a Bell state.
    pub fn success(&self) -> f64 {
        BsmOutcome::SUCCESS
            .iter()
            .flat_map(|&d| BsmOutcome::SUCCESS.iter().map(move |&e| (d, e)))
            .map(|(d, e)| self.get(d, e))
            .sum()
    }

    pub fn max_abs_diff(&self, other: &JointOutcomeDistribution) -> f64 {
        self.probs
            .iter()
            .flatten()
            .zip(other.probs.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Joint outcome distribution of the full circuit, computed directly in the
/// Schrödinger picture: every Alice term, Bob term and entangled-source loss
/// branch is interfered explicitly and detected.
pub fn joint_outcomes(
    alice: &PhotonNumberDistribution,
    epr: &LossRecordMixture,
    bob: &PhotonNumberDistribution,
    det: &DetectorParams,
    bs: &BeamSplitterSpec,
) -> Result<JointOutcomeDistribution> {
    let bound = alice.n_max().max(bob.n_max()) * 2;
    let mut probs = [[CompensatedSum::default(); 3]; 3];
    let mut resolved_mass = 0.0;
    let epr_mass = epr.total_probability();

    let alice_terms: Vec<_> = alice.iter().filter(|(_, w)| *w > 0.0).collect();
    let bob_terms: Vec<_> = bob.iter().filter(|(_, w)| *w > 0.0).collect();
    let mut weights: HashMap<(Occupation, Occupation), [f64; 3]> = HashMap::new();

    for &(occ_a, wa) in &alice_terms {
        let state_a = to_hv(occ_a, alice.basis());
        let mut david_cache: HashMap<Occupation, AmplitudeState> = HashMap::new();
        for &(occ_b, wb) in &bob_terms {
            let state_b = to_hv(occ_b, bob.basis());
            let mut ethan_cache: HashMap<Occupation, AmplitudeState> = HashMap::new();
            resolved_mass += wa * wb * epr_mass;
            for (_, comp) in epr.iter() {
                let mut joint: HashMap<[Occupation; 4], Complex64> = HashMap::new();
                for (ports, c) in comp.iter() {
                    if c == ZERO {
                        continue;
                    }
                    let (sd, se) = (ports[0], ports[1]);
                    if !david_cache.contains_key(&sd) {
                        let rails = interfere_mode_pair(&state_a, &[(sd, ONE)], bs, bound)?;
                        david_cache.insert(sd, rails);
                    }
                    if !ethan_cache.contains_key(&se) {
                        let rails = interfere_mode_pair(&[(se, ONE)], &state_b, bs, bound)?;
                        ethan_cache.insert(se, rails);
                    }
                    let (rd, re) = (&david_cache[&sd], &ethan_cache[&se]);
                    for (od, ad) in rd.iter() {
                        for (oe, ae) in re.iter() {
                            *joint.entry([od[0], od[1], oe[0], oe[1]]).or_insert(ZERO) += c * ad * ae;
                        }
                    }
                }
                for (k, amp) in joint {
                    let p = amp.norm_sqr() * wa * wb;
                    if p == 0.0 {
                        continue;
                    }
                    let wd = *weights
                        .entry((k[0], k[1]))
                        .or_insert_with(|| bsm_weights(k[0], k[1], det));
                    let we = *weights
                        .entry((k[2], k[3]))
                        .or_insert_with(|| bsm_weights(k[2], k[3], det));
                    for i in 0..3 {
                        for j in 0..3 {
                            probs[i][j].add(p * wd[i] * we[j]);
                        }
                    }
                }
            }
            // vacuum terms of the entangled source still see dark counts; they
            // are part of `epr` as the zero-pair branch.
        }
    }
    Ok(JointOutcomeDistribution {
        probs: probs.map(|row| row.map(|s| s.value())),
        unresolved: (1.0 - resolved_mass).max(0.0),
    })
}
