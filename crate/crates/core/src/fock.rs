//! Photon-number and amplitude representations of the three sources.
//!
//! Alice and Bob emit phase-randomized weak coherent pulses, which are a
//! diagonal mixture of number states. Charles emits the two-mode squeezed
//! polarization state of a type-II down-converter, kept as a coherent
//! superposition. Everything is truncated at `n_max` photons per source term.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use crate::error::{check_nonneg, Result};
use crate::math::{binomial, factorial, powi};

/// Photon counts in the two polarization modes of one spatial port.
///
/// In the Z basis `h`/`v` count horizontal/vertical photons; when a
/// container is tagged with [`Basis::X`] they count `+45°`/`-45°` photons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Occupation {
    pub h: u32,
    pub v: u32,
}

impl Occupation {
    pub const VACUUM: Occupation = Occupation { h: 0, v: 0 };

    pub const fn new(h: u32, v: u32) -> Self {
        Occupation { h, v }
    }

    pub const fn total(self) -> u32 {
        self.h + self.v
    }

    /// Position of this occupation in the canonical enumeration
    /// (ordered by total photon number, then by `v`).
    pub fn index(self) -> usize {
        let n = self.total() as usize;
        n * (n + 1) / 2 + self.v as usize
    }
}

/// All two-mode occupations with at most `n_max` photons, in [`Occupation::index`] order.
pub fn fock_states(n_max: u32) -> Vec<Occupation> {
    (0..=n_max)
        .flat_map(|n| (0..=n).map(move |v| Occupation::new(n - v, v)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Basis {
    Z,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    pub fn flipped(self) -> Bit {
        match self {
            Bit::Zero => Bit::One,
            Bit::One => Bit::Zero,
        }
    }
}

/// One of the four BB84 polarization states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bb84State {
    pub basis: Basis,
    pub bit: Bit,
}

impl Bb84State {
    pub const H: Bb84State = Bb84State { basis: Basis::Z, bit: Bit::Zero };
    pub const V: Bb84State = Bb84State { basis: Basis::Z, bit: Bit::One };
    pub const PLUS: Bb84State = Bb84State { basis: Basis::X, bit: Bit::Zero };
    pub const MINUS: Bb84State = Bb84State { basis: Basis::X, bit: Bit::One };

    pub fn new(basis: Basis, bit: Bit) -> Self {
        Bb84State { basis, bit }
    }

    pub fn orthogonal(self) -> Self {
        Bb84State { basis: self.basis, bit: self.bit.flipped() }
    }
}

/// Polarization vector `(c_H, c_V)` of a BB84 state.
pub fn bb84_encode(state: Bb84State) -> [f64; 2] {
    match (state.basis, state.bit) {
        (Basis::Z, Bit::Zero) => [1.0, 0.0],
        (Basis::Z, Bit::One) => [0.0, 1.0],
        (Basis::X, Bit::Zero) => [FRAC_1_SQRT_2, FRAC_1_SQRT_2],
        (Basis::X, Bit::One) => [FRAC_1_SQRT_2, -FRAC_1_SQRT_2],
    }
}

/// A linear map of two creation operators: column `j` is the image of
/// input mode `j` on the output `(H, V)` modes, i.e.
/// `a_j† → m[0][j]·a_H† + m[1][j]·a_V†`.
pub type ModeMatrix = [[Complex64; 2]; 2];

/// Expand the Fock state `occ` under the mode map `m`.
///
/// Returns the output occupations with their amplitudes. The result is the
/// exact bosonic transformation, so it is unitary whenever `m` is.
pub fn mode_transform(occ: Occupation, m: &ModeMatrix) -> Vec<(Occupation, Complex64)> {
    let (p, q) = (occ.h, occ.v);
    let n = p + q;
    let mut coeff = vec![Complex64::new(0.0, 0.0); n as usize + 1];
    // (m00 h + m10 v)^p (m01 h + m11 v)^q, coefficient indexed by output h count
    for i in 0..=p {
        let a = m[0][0].powu(i) * m[1][0].powu(p - i) * binomial(p, i);
        if a == Complex64::new(0.0, 0.0) {
            continue;
        }
        for j in 0..=q {
            let b = m[0][1].powu(j) * m[1][1].powu(q - j) * binomial(q, j);
            coeff[(i + j) as usize] += a * b;
        }
    }
    let norm_in = (factorial(p) * factorial(q)).sqrt();
    coeff
        .into_iter()
        .enumerate()
        .filter(|(_, c)| c.norm_sqr() > 0.0)
        .map(|(h, c)| {
            let h = h as u32;
            let out = Occupation::new(h, n - h);
            (out, c * (factorial(h) * factorial(n - h)).sqrt() / norm_in)
        })
        .collect()
}

/// Modes of `basis` expressed on the `(H, V)` modes.
pub fn basis_matrix(basis: Basis) -> ModeMatrix {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
    match basis {
        Basis::Z => [[one, zero], [zero, one]],
        Basis::X => [[s, s], [s, -s]],
    }
}

/// Fock state counted in `basis` modes, rewritten on `(H, V)`.
pub fn to_hv(occ: Occupation, basis: Basis) -> Vec<(Occupation, Complex64)> {
    match basis {
        Basis::Z => vec![(occ, Complex64::new(1.0, 0.0))],
        Basis::X => mode_transform(occ, &basis_matrix(Basis::X)),
    }
}

/// A classical mixture over two-mode photon occupations.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonNumberDistribution {
    basis: Basis,
    entries: BTreeMap<Occupation, f64>,
    n_max: u32,
    truncated_tail: f64,
}

impl PhotonNumberDistribution {
    /// Build from raw entries; the tail is whatever probability is missing.
    pub fn from_entries(
        basis: Basis,
        n_max: u32,
        entries: impl IntoIterator<Item = (Occupation, f64)>,
    ) -> Self {
        let mut map = BTreeMap::new();
        for (occ, p) in entries {
            debug_assert!(occ.total() <= n_max);
            *map.entry(occ).or_insert(0.0) += p;
        }
        let total: f64 = map.values().sum();
        PhotonNumberDistribution {
            basis,
            entries: map,
            n_max,
            truncated_tail: (1.0 - total).max(0.0),
        }
    }

    pub(crate) fn with_tail(
        basis: Basis,
        n_max: u32,
        entries: BTreeMap<Occupation, f64>,
        truncated_tail: f64,
    ) -> Self {
        PhotonNumberDistribution { basis, entries, n_max, truncated_tail }
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn truncated_tail(&self) -> f64 {
        self.truncated_tail
    }

    pub fn probability(&self, occ: Occupation) -> f64 {
        self.entries.get(&occ).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Occupation, f64)> + '_ {
        self.entries.iter().map(|(o, p)| (*o, *p))
    }

    pub fn total_probability(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Distribution of the total photon number `h + v`.
    pub fn total_photon_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_max as usize + 1];
        for (occ, p) in self.iter() {
            out[occ.total() as usize] += p;
        }
        out
    }
}

/// Which spatial port a block of an [`AmplitudeState`] lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Port {
    /// Charles' output travelling to David.
    DavidSide,
    /// Charles' output travelling to Ethan.
    EthanSide,
    /// First output port of a relay beam splitter.
    Port3,
    /// Second output port of a relay beam splitter.
    Port4,
}

/// Coherent superposition over joint occupations of labeled ports.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeState {
    ports: Vec<Port>,
    entries: BTreeMap<Vec<Occupation>, Complex64>,
}

impl AmplitudeState {
    pub fn new(ports: Vec<Port>) -> Self {
        AmplitudeState { ports, entries: BTreeMap::new() }
    }

    pub fn ports(&self) -> &[Port] {
        &self.ports
    }

    /// Add `amp` to the amplitude of `occ` (amplitudes accumulate coherently).
    pub fn add(&mut self, occ: Vec<Occupation>, amp: Complex64) {
        debug_assert_eq!(occ.len(), self.ports.len());
        *self.entries.entry(occ).or_insert(Complex64::new(0.0, 0.0)) += amp;
    }

    pub fn amplitude(&self, occ: &[Occupation]) -> Complex64 {
        self.entries.get(occ).copied().unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[Occupation], Complex64)> + '_ {
        self.entries.iter().map(|(k, a)| (k.as_slice(), *a))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.entries.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        AmplitudeState {
            ports: self.ports.clone(),
            entries: self.entries.iter().map(|(k, a)| (k.clone(), a * factor)).collect(),
        }
    }
}

/// Phase-randomized weak coherent pulse: Poisson photon-number statistics
/// with all photons in the first mode.
pub fn wcp_distribution(mu: f64, n_max: u32) -> Result<PhotonNumberDistribution> {
    check_nonneg("mu", mu)?;
    let probs = poisson_probabilities(mu, n_max);
    let tail = poisson_tail(mu, &probs);
    let entries = probs
        .into_iter()
        .enumerate()
        .map(|(n, p)| (Occupation::new(n as u32, 0), p))
        .collect();
    Ok(PhotonNumberDistribution::with_tail(Basis::Z, n_max, entries, tail))
}

/// `e^{-μ} μ^n / n!` for `n = 0..=n_max`.
pub fn poisson_probabilities(mu: f64, n_max: u32) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max as usize + 1);
    let mut term = (-mu).exp();
    for n in 0..=n_max {
        if n > 0 {
            term *= mu / n as f64;
        }
        out.push(term);
    }
    out
}

/// Poisson probability of more than `n_max` photons.
pub fn poisson_tail_probability(mu: f64, n_max: u32) -> f64 {
    poisson_tail(mu, &poisson_probabilities(mu, n_max))
}

/// Probability beyond the listed Poisson terms, summed forward so it keeps
/// full relative precision when tiny.
fn poisson_tail(mu: f64, head: &[f64]) -> f64 {
    let mut n = head.len() as u32 - 1;
    let mut term = *head.last().expect("non-empty");
    let mut tail = 0.0;
    loop {
        n += 1;
        term *= mu / n as f64;
        tail += term;
        if term <= tail * 1e-18 || term == 0.0 {
            break;
        }
    }
    tail
}

/// Probability of exactly `n` photon pairs, `(n+1) λ^n / (1+λ)^{n+2}`.
pub fn pair_probability(lambda: f64, n: u32) -> f64 {
    (n as f64 + 1.0) * powi(lambda / (1.0 + lambda), n) / (1.0 + lambda).powi(2)
}

/// Pair-number distribution for `n = 0..=n_max`.
pub fn pair_distribution(lambda: f64, n_max: u32) -> Vec<f64> {
    (0..=n_max).map(|n| pair_probability(lambda, n)).collect()
}

/// Closed-form probability of more than `n_max` pairs.
pub fn pair_tail(lambda: f64, n_max: u32) -> f64 {
    let x = lambda / (1.0 + lambda);
    let n = n_max as f64;
    powi(x, n_max + 1) * ((n + 2.0) - (n + 1.0) * x)
}

/// Normalized n-pair component `|Φ_n⟩`.
pub fn pdc_sector(n: u32) -> AmplitudeState {
    let mut state = AmplitudeState::new(vec![Port::DavidSide, Port::EthanSide]);
    let amp = 1.0 / (n as f64 + 1.0).sqrt();
    for m in 0..=n {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        state.add(
            vec![Occupation::new(n - m, m), Occupation::new(m, n - m)],
            Complex64::new(sign * amp, 0.0),
        );
    }
    state
}

/// Type-II down-conversion output with pair parameter `λ = sinh²χ`
/// (brightness `2λ`), truncated at `n_max` pairs.
pub fn pdc_state(lambda: f64, n_max: u32) -> Result<AmplitudeState> {
    check_nonneg("lambda", lambda)?;
    let cosh2 = 1.0 + lambda; // cosh²χ
    let tanh = (lambda / cosh2).sqrt();
    let mut state = AmplitudeState::new(vec![Port::DavidSide, Port::EthanSide]);
    for n in 0..=n_max {
        let weight = (n as f64 + 1.0).sqrt() * powi(tanh, n) / cosh2;
        if weight == 0.0 {
            continue;
        }
        for (occ, amp) in pdc_sector(n).iter() {
            state.add(occ.to_vec(), amp * weight);
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuum_wcp() {
        let d = wcp_distribution(0.0, 4).unwrap();
        assert_eq!(d.probability(Occupation::VACUUM), 1.0);
        assert_eq!(d.truncated_tail(), 0.0);
        for n in 1..=4 {
            assert_eq!(d.probability(Occupation::new(n, 0)), 0.0);
        }
    }

    #[test]
    fn wcp_values() {
        let d = wcp_distribution(0.5, 4).unwrap();
        assert!((d.probability(Occupation::VACUUM) - 0.606_530_659_712_633_4).abs() < 1e-15);
        let d = wcp_distribution(0.5, 20).unwrap();
        assert!(d.truncated_tail() < 1e-15);
    }

    #[test]
    fn wcp_normalization_with_tail() {
        for &mu in &[1e-6, 0.01, 0.3, 1.0, 2.0] {
            let d = wcp_distribution(mu, 25).unwrap();
            assert!(d.truncated_tail() < 1e-10);
            assert!((d.total_probability() + d.truncated_tail() - 1.0).abs() < 1e-12);
            let d = wcp_distribution(mu, 3).unwrap();
            assert!((d.total_probability() + d.truncated_tail() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_intensity_rejected() {
        assert!(wcp_distribution(-0.1, 4).is_err());
        assert!(pdc_state(-1e-3, 4).is_err());
    }

    #[test]
    fn pdc_vacuum_when_unpumped() {
        let s = pdc_state(0.0, 4).unwrap();
        assert_eq!(s.len(), 1);
        let vac = [Occupation::VACUUM, Occupation::VACUUM];
        assert_eq!(s.amplitude(&vac), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn pdc_single_pair_probability() {
        let lambda: f64 = 5e-4;
        let p1 = 2.0 * lambda / (1.0 + lambda).powi(3);
        assert!((pair_probability(lambda, 1) - p1).abs() < 1e-18);
        assert!((p1 - 9.985e-4).abs() < 1e-6);
        let s = pdc_state(lambda, 4).unwrap();
        let sector: f64 = s
            .iter()
            .filter(|(occ, _)| occ[0].total() == 1)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        assert!((sector - p1).abs() < 1e-15);
    }

    #[test]
    fn singlet_sector() {
        let s = pdc_sector(1);
        let r = FRAC_1_SQRT_2;
        let hv = [Occupation::new(1, 0), Occupation::new(0, 1)];
        let vh = [Occupation::new(0, 1), Occupation::new(1, 0)];
        assert!((s.amplitude(&hv) - Complex64::new(r, 0.0)).norm() < 1e-15);
        assert!((s.amplitude(&vh) - Complex64::new(-r, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn bb84_vectors() {
        assert_eq!(bb84_encode(Bb84State::H), [1.0, 0.0]);
        assert_eq!(bb84_encode(Bb84State::V), [0.0, 1.0]);
        assert_eq!(bb84_encode(Bb84State::PLUS), [FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
        assert_eq!(bb84_encode(Bb84State::MINUS), [FRAC_1_SQRT_2, -FRAC_1_SQRT_2]);
    }

    #[test]
    fn x_basis_conversion_matches_polarization_vectors() {
        // one photon in the X-basis state bit b has HV amplitudes bb84_encode
        for bit in [Bit::Zero, Bit::One] {
            let occ = match bit {
                Bit::Zero => Occupation::new(1, 0),
                Bit::One => Occupation::new(0, 1),
            };
            let out = to_hv(occ, Basis::X);
            let v = bb84_encode(Bb84State::new(Basis::X, bit));
            for (o, a) in out {
                let expect = if o == Occupation::new(1, 0) { v[0] } else { v[1] };
                assert!((a.re - expect).abs() < 1e-15 && a.im.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_photon_diagonal_state() {
        // |2,0⟩ in the X basis = (|2,0⟩ + √2|1,1⟩ + |0,2⟩)/2 on H/V
        let out: BTreeMap<_, _> = to_hv(Occupation::new(2, 0), Basis::X).into_iter().collect();
        assert!((out[&Occupation::new(2, 0)].re - 0.5).abs() < 1e-15);
        assert!((out[&Occupation::new(1, 1)].re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((out[&Occupation::new(0, 2)].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fock_index_matches_enumeration() {
        for (i, occ) in fock_states(5).into_iter().enumerate() {
            assert_eq!(occ.index(), i);
        }
    }
}
