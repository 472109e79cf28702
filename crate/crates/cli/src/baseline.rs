//! Reference curve: plain measurement-device-independent QKD with weak
//! coherent pulses from Alice and Bob meeting at a single relay, so a key
//! bit needs only a two-fold coincidence.
//!
//! Each arm carries half of the total loss. Every link has the same
//! rotation angle as one link of the entangled setup.

use entangled_mdi::channel::{misalignment_split, propagate_photon_source, propagate_wcp, ChannelParams};
use entangled_mdi::fock::{to_hv, Basis, Bb84State, Bit, Occupation};
use entangled_mdi::interference::{bsm_outcome_probabilities, interfere_mode_pair, BsmOutcome};
use entangled_mdi::optimize::{Curve, CurvePoint, Diagnostics, OptimizationVariables, PointFlags, ScenarioTemplate};
use entangled_mdi::rates::key_rate_formula;
use entangled_mdi::Result;
use num_complex::Complex64;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy)]
enum Pulse {
    Wcp(f64),
    SinglePhoton,
}

fn arriving(pulse: Pulse, pol: Bb84State, ch: &ChannelParams, n_max: u32) -> Result<Vec<(Occupation, f64)>> {
    let d = match pulse {
        Pulse::Wcp(mu) => propagate_wcp(mu, pol, ch, n_max)?,
        Pulse::SinglePhoton => propagate_photon_source(&[0.0, 1.0], pol, ch, n_max)?,
    };
    Ok(d.iter().collect())
}

/// `(gain, error gain)` in one basis, averaged over the four bit pairs.
fn basis_stats(t: &ScenarioTemplate, ch: &ChannelParams, alice: Pulse, bob: Pulse, basis: Basis) -> Result<(f64, f64)> {
    let (mut gain, mut err) = (0.0, 0.0);
    for a in [Bit::Zero, Bit::One] {
        for b in [Bit::Zero, Bit::One] {
            let pa = arriving(alice, Bb84State::new(basis, a), ch, t.n_max)?;
            let pb = arriving(bob, Bb84State::new(basis, b), ch, t.n_max)?;
            for &(oa, wa) in &pa {
                let ha: Vec<(Occupation, Complex64)> = to_hv(oa, basis);
                for &(ob, wb) in &pb {
                    let rails = interfere_mode_pair(&ha, &to_hv(ob, basis), &t.beam_splitter, 2 * t.n_max)?;
                    let p = bsm_outcome_probabilities(&rails, &t.detector);
                    let w = wa * wb / 4.0;
                    let (plus, minus) = (p[BsmOutcome::PsiPlus.index()], p[BsmOutcome::PsiMinus.index()]);
                    gain += w * (plus + minus);
                    err += w * match (basis, a == b) {
                        (Basis::Z, true) => plus + minus,
                        (Basis::Z, false) => 0.0,
                        (Basis::X, true) => minus,
                        (Basis::X, false) => plus,
                    };
                }
            }
        }
    }
    Ok((gain, err))
}

fn evaluate(t: &ScenarioTemplate, ch: &ChannelParams, mu: f64) -> Result<(f64, Diagnostics)> {
    let (q_z, err_z) = basis_stats(t, ch, Pulse::Wcp(mu), Pulse::Wcp(mu), Basis::Z)?;
    let (y11_z, _) = basis_stats(t, ch, Pulse::SinglePhoton, Pulse::SinglePhoton, Basis::Z)?;
    let (y11_x, err11_x) = basis_stats(t, ch, Pulse::SinglePhoton, Pulse::SinglePhoton, Basis::X)?;
    let p11 = mu * mu * (-2.0 * mu).exp();
    let e_z = (q_z > 0.0).then(|| err_z / q_z);
    let e11_x = (y11_x > 0.0).then(|| err11_x / y11_x);
    let r = key_rate_formula(p11 * y11_z, e11_x.unwrap_or(0.5), q_z, e_z.unwrap_or(0.0), t.f_e);
    Ok((r, Diagnostics { q_z, e_z, e11_x, truncated_tail: 0.0 }))
}

/// Asymptotic single-relay rate at `total_loss_db`, maximized over a
/// common intensity `μ` (log grid, then golden-section refinement).
pub fn optimize_point(total_loss_db: f64, t: &ScenarioTemplate) -> Result<CurvePoint> {
    let theta = misalignment_split(t.e_d)?[0];
    let ch = ChannelParams::from_loss_db(total_loss_db / 2.0, t.alpha_db_per_km, theta)?;
    let grid: Vec<f64> = (0..=24).map(|i| (-3.0 + 3.0 * i as f64 / 24.0) * std::f64::consts::LN_10).collect();
    let mut vals = Vec::with_capacity(grid.len());
    for &x in &grid {
        vals.push(evaluate(t, &ch, x.exp())?.0);
    }
    let best = (0..grid.len()).max_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap();
    let (mut lo, mut hi) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..40 {
        let (a, b) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if evaluate(t, &ch, a.exp())?.0 >= evaluate(t, &ch, b.exp())?.0 {
            hi = b;
        } else {
            lo = a;
        }
    }
    let mu = ((lo + hi) / 2.0).exp();
    let (mut r, mut diagnostics) = evaluate(t, &ch, mu)?;
    let mut mu_best = mu;
    if vals[best] > r {
        mu_best = grid[best].exp();
        (r, diagnostics) = evaluate(t, &ch, mu_best)?;
    }
    Ok(CurvePoint {
        total_loss_db,
        r_optimal: r.max(0.0),
        r_raw: r,
        variables: OptimizationVariables {
            mu_a: mu_best,
            mu_b: mu_best,
            mu_c: 0.0,
            split_a: 1.0,
            split_b: 1.0,
            decoy_a: None,
            decoy_b: None,
        },
        diagnostics,
        flags: PointFlags { dark_count_floor: r <= 0.0, ..Default::default() },
    })
}

pub fn scan_curve(losses: &[f64], t: &ScenarioTemplate) -> Result<Curve> {
    let points = losses.par_iter().map(|&l| optimize_point(l, t)).collect::<Result<Vec<_>>>()?;
    Ok(Curve { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use entangled_mdi::interference::DetectorParams;

    #[test]
    fn ideal_single_photons_have_no_errors() {
        let t = ScenarioTemplate::new(DetectorParams::ideal(), 0.0, 2);
        let ch = ChannelParams::lossless();
        let (y, e) = basis_stats(&t, &ch, Pulse::SinglePhoton, Pulse::SinglePhoton, Basis::X).unwrap();
        assert!((y - 0.5).abs() < 1e-12 && e.abs() < 1e-12);
        let (y, e) = basis_stats(&t, &ch, Pulse::SinglePhoton, Pulse::SinglePhoton, Basis::Z).unwrap();
        assert!((y - 0.5).abs() < 1e-12 && e.abs() < 1e-12);
    }

    #[test]
    fn rate_falls_with_loss() {
        let t = ScenarioTemplate::new(DetectorParams::new(0.145, 6.02e-6).unwrap(), 0.03, 3);
        let a = optimize_point(0.0, &t).unwrap();
        let b = optimize_point(20.0, &t).unwrap();
        assert!(a.r_optimal > b.r_optimal && b.r_optimal > 0.0);
        assert!(optimize_point(120.0, &t).unwrap().r_optimal == 0.0);
    }
}
