//! Brute-force reference model for small photon numbers.
//!
//! Every photon is written as a creation operator on a named mode and pushed
//! through the whole circuit as a linear form over the final modes (relay
//! detector rails plus environment modes that absorb lost photons). The
//! state is expanded into monomials, amplitudes are read off with explicit
//! bosonic normalization, environment modes are traced out, and each
//! detector configuration is resolved by enumerating all sixteen click
//! patterns of a relay. None of the binomial tables of the main pipeline
//! are used.

use std::collections::HashMap;
use std::f64::consts::FRAC_1_SQRT_2;

use entangled_mdi::fock::{Basis, Bb84State, Bit};
use entangled_mdi::interference::{BeamSplitterSpec, BsmOutcome, DetectorParams, JointOutcomeDistribution};
use entangled_mdi::Scenario;
use num_complex::Complex64;
use thiserror::Error;

/// Largest photon number per source term the oracle accepts.
pub const MAX_N: u32 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("oracle refuses n_max = {0}; at most {MAX_N} photons per source term")]
    TruncationTooLarge(u32),
    #[error(transparent)]
    Model(#[from] entangled_mdi::Error),
    #[error("no signal")]
    NoSignal,
}

pub type Result<T> = std::result::Result<T, OracleError>;

const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const C1: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Final modes. Rails are `(relay, port, polarization)`.
mod mode {
    pub const D3H: usize = 0;
    pub const D3V: usize = 1;
    pub const D4H: usize = 2;
    pub const D4V: usize = 3;
    pub const E3H: usize = 4;
    pub const E3V: usize = 5;
    pub const E4H: usize = 6;
    pub const E4V: usize = 7;
    /// Environment modes of Charles' two links.
    pub const LOST_DH: usize = 8;
    pub const LOST_DV: usize = 9;
    pub const LOST_EH: usize = 10;
    pub const LOST_EV: usize = 11;
    pub const COUNT: usize = 12;
    pub const RAILS: usize = 8;
}

type Key = [u8; mode::COUNT];
type Linear = Vec<(usize, Complex64)>;

/// Polynomial in creation operators acting on vacuum.
#[derive(Debug, Clone)]
struct Poly(HashMap<Key, Complex64>);

impl Poly {
    fn one() -> Self {
        Poly(HashMap::from([([0u8; mode::COUNT], C1)]))
    }

    fn times_linear(&self, l: &Linear) -> Poly {
        let mut out = HashMap::with_capacity(self.0.len() * l.len());
        for (k, c) in &self.0 {
            for &(m, a) in l {
                let mut k2 = *k;
                k2[m] += 1;
                *out.entry(k2).or_insert(C0) += c * a;
            }
        }
        Poly(out)
    }

    fn times(&self, other: &Poly) -> Poly {
        let mut out = HashMap::new();
        for (k1, c1) in &self.0 {
            for (k2, c2) in &other.0 {
                let mut k = *k1;
                for i in 0..mode::COUNT {
                    k[i] += k2[i];
                }
                *out.entry(k).or_insert(C0) += c1 * c2;
            }
        }
        Poly(out)
    }

    fn add_scaled(&mut self, other: &Poly, s: Complex64) {
        for (k, c) in &other.0 {
            *self.0.entry(*k).or_insert(C0) += c * s;
        }
    }

    fn scale(mut self, s: Complex64) -> Poly {
        for c in self.0.values_mut() {
            *c *= s;
        }
        self
    }
}

fn fact(n: u8) -> f64 {
    (1..=n as u32).map(f64::from).product()
}

fn combine(parts: &[(f64, &Linear)]) -> Linear {
    let mut acc: Linear = Vec::new();
    for &(s, l) in parts {
        for &(m, a) in l {
            acc.push((m, a * s));
        }
    }
    acc
}

/// Images of the input creation operators on the final modes.
struct Circuit {
    /// Alice's H and V at David's first input port.
    alice: [Linear; 2],
    /// Bob's H and V at Ethan's second input port.
    bob: [Linear; 2],
    /// Charles' H and V towards David (after loss and rotation).
    charles_d: [Linear; 2],
    /// Charles' H and V towards Ethan.
    charles_e: [Linear; 2],
}

impl Circuit {
    fn new(s: &Scenario, bs: &BeamSplitterSpec) -> Circuit {
        use mode::*;
        let (t, r) = (bs.t, bs.r);
        // first input port: a1 -> t a3 + r a4; second: a2 -> r a3 + t a4
        let port1 = |h3: usize, h4: usize| -> Linear { vec![(h3, t), (h4, r)] };
        let port2 = |h3: usize, h4: usize| -> Linear { vec![(h3, r), (h4, t)] };
        let alice = [port1(D3H, D4H), port1(D3V, D4V)];
        let bob = [port2(E3H, E4H), port2(E3V, E4V)];
        let charles_at_david = [port2(D3H, D4H), port2(D3V, D4V)];
        let charles_at_ethan = [port1(E3H, E4H), port1(E3V, E4V)];
        let link = |at_relay: &[Linear; 2], lost: [usize; 2], trans: f64, theta: f64| -> [Linear; 2] {
            let (sn, cs) = theta.sin_cos();
            let keep = trans.sqrt();
            let drop = (1.0 - trans).sqrt();
            // rotation: H -> cos H + sin V, V -> -sin H + cos V
            let h = combine(&[(keep * cs, &at_relay[0]), (keep * sn, &at_relay[1]), (drop, &vec![(lost[0], C1)])]);
            let v = combine(&[(-keep * sn, &at_relay[0]), (keep * cs, &at_relay[1]), (drop, &vec![(lost[1], C1)])]);
            [h, v]
        };
        let cd = &s.links.charles_david;
        let ce = &s.links.charles_ethan;
        Circuit {
            alice,
            bob,
            charles_d: link(&charles_at_david, [LOST_DH, LOST_DV], cd.transmittance, cd.theta_rad),
            charles_e: link(&charles_at_ethan, [LOST_EH, LOST_EV], ce.transmittance, ce.theta_rad),
        }
    }

    /// Entangled-source state truncated at `n_max` pairs, with
    /// `|Φ_n⟩ = K^n |0⟩ / (n! √(n+1))` and `K = d_H† e_V† − d_V† e_H†`.
    fn source(&self, lambda: f64, n_max: u32) -> Poly {
        let dh_ev = Poly::one().times_linear(&self.charles_d[0]).times_linear(&self.charles_e[1]);
        let dv_eh = Poly::one().times_linear(&self.charles_d[1]).times_linear(&self.charles_e[0]);
        let mut k = dh_ev;
        k.add_scaled(&dv_eh, -C1);
        let mut total = Poly(HashMap::new());
        let mut power = Poly::one();
        for n in 0..=n_max {
            let p = (n as f64 + 1.0) * lambda.powi(n as i32) / (1.0 + lambda).powi(n as i32 + 2);
            let norm = p.sqrt() / ((1..=n).map(f64::from).product::<f64>() * (n as f64 + 1.0).sqrt());
            total.add_scaled(&power, Complex64::new(norm, 0.0));
            power = power.times(&k);
        }
        total
    }
}

/// What a party sends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleSource {
    /// Phase-randomized weak coherent pulse.
    Wcp(f64),
    /// Ideal single photon.
    SinglePhoton,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preparation {
    pub source: OracleSource,
    pub state: Bb84State,
}

/// Classical branch of one party: `prepared` photons still in the prepared
/// polarization and `flipped` photons rotated into the orthogonal one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartyBranch {
    pub prepared: u32,
    pub flipped: u32,
    pub weight: f64,
}

/// One configuration of all detector rails for one pair of party branches,
/// after tracing out the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedBranch {
    /// Photon numbers on `[D3H, D3V, D4H, D4V, E3H, E3V, E4H, E4V]`.
    pub rails: [u8; 8],
    pub weight: f64,
    pub alice: PartyBranch,
    pub bob: PartyBranch,
}

fn polarization(state: Bb84State) -> [f64; 2] {
    let s = FRAC_1_SQRT_2;
    match (state.basis, state.bit) {
        (Basis::Z, Bit::Zero) => [1.0, 0.0],
        (Basis::Z, Bit::One) => [0.0, 1.0],
        (Basis::X, Bit::Zero) => [s, s],
        (Basis::X, Bit::One) => [s, -s],
    }
}

fn orthogonal(state: Bb84State) -> Bb84State {
    let bit = match state.bit {
        Bit::Zero => Bit::One,
        Bit::One => Bit::Zero,
    };
    Bb84State { basis: state.basis, bit }
}

/// Arriving-photon branches of one party. Each arriving photon is treated
/// as a distinguishable path that independently keeps or flips its
/// polarization; paths ending in the same occupation are merged.
pub fn party_branches(source: OracleSource, transmittance: f64, theta: f64, n_max: u32) -> Vec<PartyBranch> {
    let arriving: Vec<f64> = match source {
        OracleSource::Wcp(mu) => {
            let m = mu * transmittance;
            let mut p = (-m).exp();
            (0..=n_max)
                .map(|n| {
                    let out = p;
                    p *= m / (n as f64 + 1.0);
                    out
                })
                .collect()
        }
        OracleSource::SinglePhoton => {
            let mut v = vec![0.0; n_max as usize + 1];
            v[0] = 1.0 - transmittance;
            if n_max >= 1 {
                v[1] = transmittance;
            }
            v
        }
    };
    let keep = theta.cos().powi(2);
    let flip = theta.sin().powi(2);
    let mut merged: HashMap<(u32, u32), f64> = HashMap::new();
    for (n, &pn) in arriving.iter().enumerate() {
        for pattern in 0u32..(1 << n) {
            let flipped = pattern.count_ones();
            let w = pn * keep.powi((n as u32 - flipped) as i32) * flip.powi(flipped as i32);
            *merged.entry((n as u32 - flipped, flipped)).or_insert(0.0) += w;
        }
    }
    let mut out: Vec<PartyBranch> = merged
        .into_iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|((prepared, flipped), weight)| PartyBranch { prepared, flipped, weight })
        .collect();
    out.sort_by_key(|b| (b.prepared, b.flipped));
    out
}

/// Creation polynomial of a party branch on the given input-port images.
fn party_poly(branch: &PartyBranch, state: Bb84State, port: &[Linear; 2]) -> Poly {
    let p = polarization(state);
    let o = polarization(orthogonal(state));
    let along = |c: [f64; 2]| combine(&[(c[0], &port[0]), (c[1], &port[1])]);
    let (lp, lo) = (along(p), along(o));
    let mut poly = Poly::one();
    for _ in 0..branch.prepared {
        poly = poly.times_linear(&lp);
    }
    for _ in 0..branch.flipped {
        poly = poly.times_linear(&lo);
    }
    let norm = (fact(branch.prepared as u8) * fact(branch.flipped as u8)).sqrt();
    poly.scale(Complex64::new(1.0 / norm, 0.0))
}

/// Probabilities `[ψ⁺, ψ⁻, fail]` of one relay given rail photon numbers
/// `[3H, 3V, 4H, 4V]`, by enumeration of the click patterns.
pub fn relay_outcome(rails: [u8; 4], det: &DetectorParams) -> [f64; 3] {
    let click: Vec<f64> = rails
        .iter()
        .map(|&k| 1.0 - (1.0 - det.y0) * (1.0 - det.eta_d).powi(k as i32))
        .collect();
    let mut out = [0.0; 3];
    for pattern in 0u8..16 {
        let mut p = 1.0;
        for (i, c) in click.iter().enumerate() {
            p *= if pattern & (1 << i) != 0 { *c } else { 1.0 - c };
        }
        // bits: 0 = 3H, 1 = 3V, 2 = 4H, 3 = 4V
        let outcome = match pattern {
            0b1001 | 0b0110 => BsmOutcome::PsiMinus,
            0b0011 | 0b1100 => BsmOutcome::PsiPlus,
            _ => BsmOutcome::Fail,
        };
        out[outcome.index()] += p;
    }
    out
}

fn check(s: &Scenario) -> Result<()> {
    s.validate()?;
    if s.n_max > MAX_N {
        return Err(OracleError::TruncationTooLarge(s.n_max));
    }
    Ok(())
}

/// All rail configurations with their probabilities.
pub fn enumerate_branches(s: &Scenario, alice: Preparation, bob: Preparation) -> Result<Vec<EnumeratedBranch>> {
    check(s)?;
    let circuit = Circuit::new(s, &s.beam_splitter);
    let source = circuit.source(s.lambda(), s.n_max);
    let la = &s.links.alice;
    let lb = &s.links.bob;
    let mut out = Vec::new();
    for a in party_branches(alice.source, la.transmittance, la.theta_rad, s.n_max) {
        let pa = party_poly(&a, alice.state, &circuit.alice);
        for b in party_branches(bob.source, lb.transmittance, lb.theta_rad, s.n_max) {
            let pb = party_poly(&b, bob.state, &circuit.bob);
            let state = source.times(&pa).times(&pb);
            let mut rails: HashMap<[u8; 8], f64> = HashMap::new();
            for (k, c) in &state.0 {
                let bosonic: f64 = k.iter().map(|&n| fact(n)).product();
                let p = c.norm_sqr() * bosonic * a.weight * b.weight;
                if p == 0.0 {
                    continue;
                }
                let mut r = [0u8; 8];
                r.copy_from_slice(&k[..mode::RAILS]);
                *rails.entry(r).or_insert(0.0) += p;
            }
            let mut branches: Vec<_> = rails
                .into_iter()
                .map(|(rails, weight)| EnumeratedBranch { rails, weight, alice: a, bob: b })
                .collect();
            branches.sort_by(|x, y| x.rails.cmp(&y.rails));
            out.extend(branches);
        }
    }
    Ok(out)
}

/// Joint (David, Ethan) outcome distribution; `unresolved` is the source
/// probability beyond the truncation.
pub fn oracle_joint_outcomes(s: &Scenario, alice: Preparation, bob: Preparation) -> Result<JointOutcomeDistribution> {
    let branches = enumerate_branches(s, alice, bob)?;
    let mut probs = [[0.0; 3]; 3];
    let mut mass = 0.0;
    for br in &branches {
        let d = relay_outcome([br.rails[0], br.rails[1], br.rails[2], br.rails[3]], &s.detector);
        let e = relay_outcome([br.rails[4], br.rails[5], br.rails[6], br.rails[7]], &s.detector);
        for i in 0..3 {
            for j in 0..3 {
                probs[i][j] += br.weight * d[i] * e[j];
            }
        }
        mass += br.weight;
    }
    Ok(JointOutcomeDistribution { probs, unresolved: (1.0 - mass).max(0.0) })
}

/// `(gain, error gain)` for Alice and Bob both preparing in `basis`,
/// averaged over equal and opposite bits.
pub fn oracle_basis_stats(s: &Scenario, basis: Basis, alice: OracleSource, bob: OracleSource) -> Result<(f64, f64)> {
    use BsmOutcome::*;
    let a_state = Bb84State::new(basis, Bit::Zero);
    let mut gain = 0.0;
    let mut errors = 0.0;
    for same in [true, false] {
        let b_state = if same { a_state } else { orthogonal(a_state) };
        let j = oracle_joint_outcomes(
            s,
            Preparation { source: alice, state: a_state },
            Preparation { source: bob, state: b_state },
        )?;
        for d in [PsiPlus, PsiMinus] {
            for e in [PsiPlus, PsiMinus] {
                let p = j.get(d, e);
                gain += p;
                // Z always flips; X flips on equal announcements
                let flip = basis == Basis::Z || d == e;
                if flip == same {
                    errors += p;
                }
            }
        }
    }
    Ok((gain / 2.0, errors / 2.0))
}

/// `(Q, E)` of one basis with weak coherent pulses.
pub fn oracle_gain_and_qber(s: &Scenario, basis: Basis) -> Result<(f64, f64)> {
    let (q, eq) = oracle_basis_stats(s, basis, OracleSource::Wcp(s.mu_a), OracleSource::Wcp(s.mu_b))?;
    if q <= 0.0 {
        return Err(OracleError::NoSignal);
    }
    Ok((q, eq / q))
}

/// Outcome probabilities `[ψ⁺, ψ⁻, fail]` of a single relay fed the
/// two-photon state `Σ c_{ij} a_i† b_j† |0⟩`, with `a` on the first input
/// port and `b` on the second, polarization index 0 = H, 1 = V.
pub fn oracle_two_photon_relay(coeff: [[Complex64; 2]; 2], det: &DetectorParams, bs: &BeamSplitterSpec) -> [f64; 3] {
    use mode::*;
    let (t, r) = (bs.t, bs.r);
    let first: [Linear; 2] = [vec![(D3H, t), (D4H, r)], vec![(D3V, t), (D4V, r)]];
    let second: [Linear; 2] = [vec![(D3H, r), (D4H, t)], vec![(D3V, r), (D4V, t)]];
    let mut state = Poly(HashMap::new());
    for i in 0..2 {
        for j in 0..2 {
            let term = Poly::one().times_linear(&first[i]).times_linear(&second[j]);
            state.add_scaled(&term, coeff[i][j]);
        }
    }
    let mut out = [0.0; 3];
    for (k, c) in &state.0 {
        let bosonic: f64 = k.iter().map(|&n| fact(n)).product();
        let p = c.norm_sqr() * bosonic;
        let o = relay_outcome([k[D3H], k[D3V], k[D4H], k[D4V]], det);
        for i in 0..3 {
            out[i] += p * o[i];
        }
    }
    out
}
