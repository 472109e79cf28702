//! Lossy, misaligned fiber links from the three sources to the two relays.
//!
//! Loss is a beam splitter to an environment mode per polarization. The
//! environment is traced out, so every distinct lost-photon record becomes
//! its own incoherent branch. Misalignment is the real rotation `U(θ)`.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{check_nonneg, check_range, Error, Result};
use crate::fock::{
    mode_transform, poisson_probabilities, AmplitudeState, Bit, Bb84State,
    ModeMatrix, Occupation, PhotonNumberDistribution, Port,
};
use crate::math::{binomial, powi};

/// Standard single-mode telecom fiber, dB/km.
pub const STANDARD_FIBER_DB_PER_KM: f64 = 0.21;
/// Ultra-low-loss fiber, dB/km.
pub const ULTRA_LOW_LOSS_DB_PER_KM: f64 = 0.16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub length_km: f64,
    pub alpha_db_per_km: f64,
    pub transmittance: f64,
    /// Polarization rotation angle of the link.
    pub theta_rad: f64,
}

impl ChannelParams {
    pub fn from_length(length_km: f64, alpha_db_per_km: f64, theta_rad: f64) -> Result<Self> {
        let transmittance = transmittance_from_length(length_km, alpha_db_per_km)?;
        Ok(ChannelParams { length_km, alpha_db_per_km, transmittance, theta_rad })
    }

    /// Link with the given loss in dB; the length is derived from `alpha`.
    pub fn from_loss_db(loss_db: f64, alpha_db_per_km: f64, theta_rad: f64) -> Result<Self> {
        check_nonneg("loss_db", loss_db)?;
        check_nonneg("alpha_db_per_km", alpha_db_per_km)?;
        let length_km = if alpha_db_per_km > 0.0 { loss_db / alpha_db_per_km } else { 0.0 };
        Ok(ChannelParams {
            length_km,
            alpha_db_per_km,
            transmittance: 10f64.powf(-loss_db / 10.0),
            theta_rad,
        })
    }

    pub fn from_transmittance(transmittance: f64, theta_rad: f64) -> Result<Self> {
        check_range("transmittance", transmittance, 0.0, 1.0)?;
        Ok(ChannelParams { length_km: 0.0, alpha_db_per_km: 0.0, transmittance, theta_rad })
    }

    pub fn lossless() -> Self {
        ChannelParams { length_km: 0.0, alpha_db_per_km: 0.0, transmittance: 1.0, theta_rad: 0.0 }
    }

    pub fn with_theta(mut self, theta_rad: f64) -> Self {
        self.theta_rad = theta_rad;
        self
    }

    pub fn loss_db(&self) -> f64 {
        -10.0 * self.transmittance.log10()
    }

    /// `U(θ)`: `a_H† → cosθ a_H† + sinθ a_V†`, `a_V† → -sinθ a_H† + cosθ a_V†`.
    pub fn rotation(&self) -> ModeMatrix {
        rotation_matrix(self.theta_rad)
    }
}

pub fn rotation_matrix(theta: f64) -> ModeMatrix {
    let (s, c) = theta.sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ]
}

/// `t = 10^{-αL/10}`.
pub fn transmittance_from_length(length_km: f64, alpha_db_per_km: f64) -> Result<f64> {
    check_nonneg("length_km", length_km)?;
    check_nonneg("alpha_db_per_km", alpha_db_per_km)?;
    Ok(10f64.powf(-alpha_db_per_km * length_km / 10.0))
}

/// Per-link rotation angles for a total misalignment error `e_d`, shared
/// equally by the four links (`sin²θ_k = e_d / 4`).
pub fn misalignment_split(e_d: f64) -> Result<[f64; 4]> {
    check_range("e_d", e_d, 0.0, 1.0)?;
    let theta = (e_d / 4.0).sqrt().asin();
    Ok([theta; 4])
}

/// Weak coherent pulse of intensity `mu` prepared in `pol`, after the link.
///
/// Diagonal mixture: Poissonian in the arriving photon number (mean `μt`),
/// each arriving photon found in the prepared mode with probability `cos²θ`
/// and in the orthogonal mode otherwise. Occupations are counted in the
/// modes of `pol.basis` (`h` = bit-0 mode, `v` = bit-1 mode).
pub fn propagate_wcp(
    mu: f64,
    pol: Bb84State,
    ch: &ChannelParams,
    n_max: u32,
) -> Result<PhotonNumberDistribution> {
    check_nonneg("mu", mu)?;
    check_range("transmittance", ch.transmittance, 0.0, 1.0)?;
    let mean = mu * ch.transmittance;
    let arriving = poisson_probabilities(mean, n_max);
    let total: f64 = arriving.iter().sum();
    let tail = crate::fock::wcp_distribution(mean, n_max)?.truncated_tail();
    let entries = split_polarization(&arriving, pol, ch.theta_rad);
    debug_assert!((entries.values().sum::<f64>() - total).abs() < 1e-12);
    Ok(PhotonNumberDistribution::with_tail(pol.basis, n_max, entries, tail))
}

/// Any source with photon-number distribution `source[n]`, sent through the
/// link photon by photon (independent loss, then independent misalignment).
pub fn propagate_photon_source(
    source: &[f64],
    pol: Bb84State,
    ch: &ChannelParams,
    n_max: u32,
) -> Result<PhotonNumberDistribution> {
    check_range("transmittance", ch.transmittance, 0.0, 1.0)?;
    let t = ch.transmittance;
    let mut arriving = vec![0.0; n_max as usize + 1];
    for (n, &p) in source.iter().enumerate() {
        let n = n as u32;
        for k in 0..=n.min(n_max) {
            arriving[k as usize] += p * binomial(n, k) * powi(t, k) * powi(1.0 - t, n - k);
        }
    }
    let entries = split_polarization(&arriving, pol, ch.theta_rad);
    let total: f64 = entries.values().sum();
    Ok(PhotonNumberDistribution::with_tail(pol.basis, n_max, entries, (1.0 - total).max(0.0)))
}

fn split_polarization(
    arriving: &[f64],
    pol: Bb84State,
    theta: f64,
) -> BTreeMap<Occupation, f64> {
    let (s, c) = theta.sin_cos();
    let (keep, flip) = (c * c, s * s);
    let mut entries = BTreeMap::new();
    for (n, &p) in arriving.iter().enumerate() {
        let n = n as u32;
        if p == 0.0 {
            continue;
        }
        for m in 0..=n {
            let w = p * binomial(n, m) * powi(keep, m) * powi(flip, n - m);
            if w == 0.0 {
                continue;
            }
            let occ = match pol.bit {
                Bit::Zero => Occupation::new(m, n - m),
                Bit::One => Occupation::new(n - m, m),
            };
            *entries.entry(occ).or_insert(0.0) += w;
        }
    }
    entries
}

/// Environment record of an entangled-source branch: the pair number it
/// came from and how many photons each link lost in each polarization
/// (`[David H, David V, Ethan H, Ethan V]`).
///
/// Branches from different pair numbers sit in different photon-number
/// sectors, and the threshold detectors are diagonal in photon number, so
/// keeping them apart loses nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LossRecord {
    pub pairs: u32,
    pub lost: [u32; 4],
}

/// Entangled-source state after the links: mutually exclusive loss
/// branches, each a coherent superposition over (David-side, Ethan-side).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossRecordMixture {
    components: BTreeMap<LossRecord, AmplitudeState>,
}

impl LossRecordMixture {
    pub fn iter(&self) -> impl Iterator<Item = (&LossRecord, &AmplitudeState)> {
        self.components.iter()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn get(&self, record: &LossRecord) -> Option<&AmplitudeState> {
        self.components.get(record)
    }

    pub fn total_probability(&self) -> f64 {
        self.components.values().map(AmplitudeState::norm_sqr).sum()
    }
}

fn loss_amplitude(photons: u32, kept: u32, t: f64) -> f64 {
    (binomial(photons, kept) * powi(t, kept) * powi(1.0 - t, photons - kept)).sqrt()
}

/// Send Charles' two outputs through the David and Ethan links.
pub fn propagate_epr(
    pdc: &AmplitudeState,
    ch_d: &ChannelParams,
    ch_e: &ChannelParams,
    n_max: u32,
) -> Result<LossRecordMixture> {
    check_range("transmittance", ch_d.transmittance, 0.0, 1.0)?;
    check_range("transmittance", ch_e.transmittance, 0.0, 1.0)?;
    let (td, te) = (ch_d.transmittance, ch_e.transmittance);
    let (rot_d, rot_e) = (ch_d.rotation(), ch_e.rotation());
    let mut out: BTreeMap<LossRecord, AmplitudeState> = BTreeMap::new();

    for (occ, amp) in pdc.iter() {
        let (d, e) = (occ[0], occ[1]);
        let pairs = d.total();
        if pairs > n_max || e.total() > n_max {
            return Err(Error::TruncationOverflow { photons: pairs.max(e.total()), bound: n_max });
        }
        for kdh in 0..=d.h {
            let fdh = loss_amplitude(d.h, kdh, td);
            for kdv in 0..=d.v {
                let fdv = fdh * loss_amplitude(d.v, kdv, td);
                if fdv == 0.0 {
                    continue;
                }
                let david = mode_transform(Occupation::new(kdh, kdv), &rot_d);
                for keh in 0..=e.h {
                    let feh = fdv * loss_amplitude(e.h, keh, te);
                    for kev in 0..=e.v {
                        let f = feh * loss_amplitude(e.v, kev, te);
                        if f == 0.0 {
                            continue;
                        }
                        let record = LossRecord {
                            pairs,
                            lost: [d.h - kdh, d.v - kdv, e.h - keh, e.v - kev],
                        };
                        let ethan = mode_transform(Occupation::new(keh, kev), &rot_e);
                        let comp = out
                            .entry(record)
                            .or_insert_with(|| AmplitudeState::new(vec![Port::DavidSide, Port::EthanSide]));
                        for &(od, ad) in &david {
                            for &(oe, ae) in &ethan {
                                comp.add(vec![od, oe], amp * f * ad * ae);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(LossRecordMixture { components: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{pdc_sector, pdc_state, Basis};
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    #[test]
    fn transmittance_values() {
        assert_eq!(transmittance_from_length(0.0, 0.21).unwrap(), 1.0);
        let t = transmittance_from_length(100.0, 0.21).unwrap();
        assert!((t - 7.943_282_347_242_81e-3).abs() < 1e-15);
        let ch = ChannelParams::from_length(367.0, 0.21, 0.0).unwrap();
        assert!((ch.loss_db() - 77.07).abs() < 1e-9);
        assert!(transmittance_from_length(-1.0, 0.21).is_err());
        assert!(transmittance_from_length(1.0, -0.21).is_err());
    }

    #[test]
    fn misalignment_angles() {
        assert_eq!(misalignment_split(0.0).unwrap(), [0.0; 4]);
        let th = misalignment_split(0.03).unwrap();
        assert!((th[0] - 0.0867_1).abs() < 1e-4);
        assert!((th[0] - 0.0075f64.sqrt().asin()).abs() < 1e-15);
        for e in [0.0, 0.01, 0.03, 0.5, 1.0] {
            for th in misalignment_split(e).unwrap() {
                assert!((th.sin().powi(2) - e / 4.0).abs() < 1e-15);
            }
        }
        assert!(misalignment_split(1.5).is_err());
        assert!(misalignment_split(-0.1).is_err());
    }

    #[test]
    fn identity_link_keeps_poisson_in_prepared_mode() {
        let d = propagate_wcp(0.3, Bb84State::H, &ChannelParams::lossless(), 6).unwrap();
        let p = poisson_probabilities(0.3, 6);
        for n in 0..=6 {
            assert!((d.probability(Occupation::new(n, 0)) - p[n as usize]).abs() < 1e-15);
        }
        assert!((d.total_probability() - p.iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn quarter_turn_swaps_polarization() {
        let ch = ChannelParams::lossless().with_theta(FRAC_PI_2);
        let d = propagate_wcp(0.3, Bb84State::H, &ch, 4).unwrap();
        for (occ, p) in d.iter() {
            if p > 1e-30 {
                assert_eq!(occ.h, 0, "found {occ:?} with {p}");
            }
        }
        // the rotation also swaps the modes of an amplitude state (up to sign)
        let out = mode_transform(Occupation::new(2, 0), &rotation_matrix(FRAC_PI_2));
        let big: Vec<_> = out.iter().filter(|(_, a)| a.norm() > 1e-12).collect();
        assert_eq!(big.len(), 1);
        assert_eq!(big[0].0, Occupation::new(0, 2));
    }

    #[test]
    fn wcp_total_photon_marginal_is_thinned_poisson() {
        let ch = ChannelParams::from_transmittance(0.37, 0.2).unwrap();
        let d = propagate_wcp(0.8, Bb84State::MINUS, &ch, 8).unwrap();
        assert_eq!(d.basis(), Basis::X);
        let marginal = d.total_photon_marginal();
        let expect = poisson_probabilities(0.8 * 0.37, 8);
        for (a, b) in marginal.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_matches_photon_by_photon_route() {
        let ch = ChannelParams::from_transmittance(0.4, 0.13).unwrap();
        let source = poisson_probabilities(0.6, 40);
        let a = propagate_wcp(0.6, Bb84State::V, &ch, 5).unwrap();
        let b = propagate_photon_source(&source, Bb84State::V, &ch, 5).unwrap();
        for (occ, p) in a.iter() {
            assert!((p - b.probability(occ)).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_epr_link() {
        let pdc = pdc_state(0.01, 3).unwrap();
        let ch = ChannelParams::lossless();
        let mix = propagate_epr(&pdc, &ch, &ch, 3).unwrap();
        let mut recombined = AmplitudeState::new(vec![Port::DavidSide, Port::EthanSide]);
        for (rec, comp) in mix.iter() {
            assert_eq!(rec.lost, [0; 4]);
            for (occ, a) in comp.iter() {
                recombined.add(occ.to_vec(), a);
            }
        }
        for (occ, a) in pdc.iter() {
            assert!((recombined.amplitude(occ) - a).norm() < 1e-15);
        }
        assert_eq!(recombined.len(), pdc.len());
    }

    #[test]
    fn single_pair_is_singlet() {
        let ch = ChannelParams::lossless();
        let mix = propagate_epr(&pdc_sector(1), &ch, &ch, 2).unwrap();
        assert_eq!(mix.len(), 1);
        let (_, comp) = mix.iter().next().unwrap();
        let hv = [Occupation::new(1, 0), Occupation::new(0, 1)];
        let vh = [Occupation::new(0, 1), Occupation::new(1, 0)];
        assert!((comp.amplitude(&hv).re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((comp.amplitude(&vh).re + FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn total_loss_leaves_david_empty() {
        let pdc = pdc_state(0.05, 3).unwrap();
        let cut = ChannelParams::from_transmittance(0.0, 0.1).unwrap();
        let ok = ChannelParams::from_transmittance(0.8, 0.1).unwrap();
        let mix = propagate_epr(&pdc, &cut, &ok, 3).unwrap();
        for (_, comp) in mix.iter() {
            for (occ, a) in comp.iter() {
                if a.norm_sqr() > 0.0 {
                    assert_eq!(occ[0], Occupation::VACUUM);
                }
            }
        }
        assert!((mix.total_probability() - pdc.norm_sqr()).abs() < 1e-12);
    }

    #[test]
    fn rotations_conserve_probability() {
        let pdc = pdc_state(0.1, 4).unwrap();
        let ch = ChannelParams::lossless().with_theta(0.7);
        let mix = propagate_epr(&pdc, &ch, &ch.with_theta(-1.3), 4).unwrap();
        assert!((mix.total_probability() - pdc.norm_sqr()).abs() < 1e-12);
    }
}
