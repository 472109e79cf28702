//! Physical configuration of one run: intensities, links, detectors.

use crate::channel::{misalignment_split, ChannelParams};
use crate::error::{check_nonneg, check_range, Result};
use crate::interference::{BeamSplitterSpec, DetectorParams};

/// The four quantum links.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Links {
    /// Alice → David.
    pub alice: ChannelParams,
    /// Charles → David.
    pub charles_david: ChannelParams,
    /// Charles → Ethan.
    pub charles_ethan: ChannelParams,
    /// Bob → Ethan.
    pub bob: ChannelParams,
}

impl Links {
    pub fn lossless() -> Self {
        let ch = ChannelParams::lossless();
        Links { alice: ch, charles_david: ch, charles_ethan: ch, bob: ch }
    }

    /// Place `total_loss_db` between Alice and Bob: half on each arm, with
    /// `split_a` (`split_b`) of Alice's (Bob's) arm on the party's own link
    /// and the rest on Charles' link. Every link gets rotation angle `theta`.
    pub fn from_total_loss(
        total_loss_db: f64,
        split_a: f64,
        split_b: f64,
        alpha_db_per_km: f64,
        theta: f64,
    ) -> Result<Self> {
        check_nonneg("total_loss_db", total_loss_db)?;
        check_range("split_a", split_a, 0.0, 1.0)?;
        check_range("split_b", split_b, 0.0, 1.0)?;
        let arm = total_loss_db / 2.0;
        let link = |db: f64| ChannelParams::from_loss_db(db, alpha_db_per_km, theta);
        Ok(Links {
            alice: link(arm * split_a)?,
            charles_david: link(arm * (1.0 - split_a))?,
            charles_ethan: link(arm * (1.0 - split_b))?,
            bob: link(arm * split_b)?,
        })
    }

    pub fn total_loss_db(&self) -> f64 {
        [self.alice, self.charles_david, self.charles_ethan, self.bob]
            .iter()
            .map(ChannelParams::loss_db)
            .sum()
    }

    /// Exchange the roles of Alice and Bob (and so of David and Ethan).
    pub fn mirrored(&self) -> Self {
        Links {
            alice: self.bob,
            charles_david: self.charles_ethan,
            charles_ethan: self.charles_david,
            bob: self.alice,
        }
    }

    pub fn with_thetas(mut self, thetas: [f64; 4]) -> Self {
        self.alice.theta_rad = thetas[0];
        self.charles_david.theta_rad = thetas[1];
        self.charles_ethan.theta_rad = thetas[2];
        self.bob.theta_rad = thetas[3];
        self
    }

    pub fn thetas(&self) -> [f64; 4] {
        [
            self.alice.theta_rad,
            self.charles_david.theta_rad,
            self.charles_ethan.theta_rad,
            self.bob.theta_rad,
        ]
    }
}

/// Everything needed to evaluate gains and error rates at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub mu_a: f64,
    pub mu_b: f64,
    /// Brightness of Charles' source (expected pairs per pulse, `2λ`).
    pub mu_c: f64,
    pub links: Links,
    pub detector: DetectorParams,
    pub beam_splitter: BeamSplitterSpec,
    pub n_max: u32,
}

impl Scenario {
    pub fn new(mu_a: f64, mu_b: f64, mu_c: f64, links: Links, detector: DetectorParams, n_max: u32) -> Result<Self> {
        let s = Scenario {
            mu_a,
            mu_b,
            mu_c,
            links,
            detector,
            beam_splitter: BeamSplitterSpec::balanced(),
            n_max,
        };
        s.validate()?;
        Ok(s)
    }

    /// Symmetric setup: `total_loss_db` split evenly over the four links,
    /// all links misaligned by the same share of `e_d`.
    pub fn symmetric(
        mu: f64,
        mu_c: f64,
        total_loss_db: f64,
        e_d: f64,
        detector: DetectorParams,
        n_max: u32,
    ) -> Result<Self> {
        let theta = misalignment_split(e_d)?[0];
        let links = Links::from_total_loss(total_loss_db, 0.5, 0.5, 0.21, theta)?;
        Scenario::new(mu, mu, mu_c, links, detector, n_max)
    }

    pub fn validate(&self) -> Result<()> {
        check_nonneg("mu_a", self.mu_a)?;
        check_nonneg("mu_b", self.mu_b)?;
        check_nonneg("mu_c", self.mu_c)?;
        for ch in [self.links.alice, self.links.charles_david, self.links.charles_ethan, self.links.bob] {
            check_range("transmittance", ch.transmittance, 0.0, 1.0)?;
        }
        check_range("eta_d", self.detector.eta_d, 0.0, 1.0)?;
        check_range("y0", self.detector.y0, 0.0, 1.0)?;
        Ok(())
    }

    /// Pair parameter `λ = sinh²χ`.
    pub fn lambda(&self) -> f64 {
        self.mu_c / 2.0
    }

    /// Same physics with Alice and Bob exchanged.
    pub fn mirrored(&self) -> Self {
        Scenario {
            mu_a: self.mu_b,
            mu_b: self.mu_a,
            links: self.links.mirrored(),
            ..*self
        }
    }
}
