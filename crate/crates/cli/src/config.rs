//! Scenario configuration files.
//!
//! A config is TOML. Every key is validated at load time; unknown keys are
//! rejected and every error carries the line and column of the offending key.

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use entangled_mdi::decoy::FiniteKeyParams;
use entangled_mdi::interference::DetectorParams;
use entangled_mdi::optimize::{DecoyChoice, Mode, ScenarioTemplate};
use entangled_mdi::rates::MisalignmentSampling;
use serde::{Deserialize, Serialize};
use toml::de::{DeTable, DeValue};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mode: ModeKind,
    #[serde(default = "default_f_e")]
    pub f_e: f64,
    pub detector: DetectorConfig,
    pub misalignment: MisalignmentConfig,
    #[serde(default)]
    pub fiber: FiberConfig,
    #[serde(default)]
    pub truncation: TruncationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finite: Option<FiniteConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Asymptotic,
    Finite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub eta_d: f64,
    pub y0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MisalignmentConfig {
    /// Total error shared by the four links.
    pub e_d: f64,
    #[serde(default)]
    pub sampling: Sampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Sampling {
    #[default]
    Fixed,
    MonteCarlo { seed: u64, draws: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberConfig {
    pub alpha_db_per_km: f64,
}

impl Default for FiberConfig {
    fn default() -> Self {
        FiberConfig { alpha_db_per_km: entangled_mdi::channel::STANDARD_FIBER_DB_PER_KM }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    pub n_max: u32,
    pub tail_tolerance: f64,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig { n_max: 4, tail_tolerance: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteConfig {
    pub n_pulses: f64,
    pub epsilon: f64,
    pub weak_decoy: WeakDecoy,
    #[serde(default)]
    pub vacuum_decoy: f64,
}

/// A fixed weak-decoy intensity, or `"optimize"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeakDecoy {
    Value(f64),
    Keyword(DecoyKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoyKeyword {
    Optimize,
}

fn default_f_e() -> f64 {
    entangled_mdi::rates::DEFAULT_F_E
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub file: Option<PathBuf>,
    /// 1-based line and column of the offending key, when it is present in the file.
    pub position: Option<(usize, usize)>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(file) = &self.file {
            write!(f, "{}:", file.display())?;
        }
        if let Some((line, col)) = self.position {
            write!(f, "{line}:{col}:")?;
        }
        if self.file.is_some() || self.position.is_some() {
            write!(f, " ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "`{key}`: ")?;
        }
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ConfigError {}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            file: Some(path.to_path_buf()),
            position: None,
            key: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(&text).map_err(|mut e| {
            e.file = Some(path.to_path_buf());
            e
        })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let span = e.span();
            ConfigError {
                file: None,
                position: span.clone().map(|s| line_col(text, s.start)),
                key: span.and_then(|s| key_at(text, s)),
                message: e.message().trim().to_string(),
            }
        })?;
        config.validate().map_err(|(key, message)| ConfigError {
            file: None,
            position: locate(text, &key).map(|s| line_col(text, s.start)),
            key: Some(key),
            message,
        })?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Checks every field; on failure returns the dotted key and a message.
    pub fn validate(&self) -> Result<(), (String, String)> {
        fn range(key: &str, x: f64, lo: f64, hi: f64) -> Result<(), (String, String)> {
            if x.is_nan() || x < lo || x > hi {
                return Err((key.to_string(), format!("{x} is outside [{lo}, {hi}]")));
            }
            Ok(())
        }
        range("detector.eta_d", self.detector.eta_d, 0.0, 1.0)?;
        range("detector.y0", self.detector.y0, 0.0, 1.0)?;
        range("misalignment.e_d", self.misalignment.e_d, 0.0, 1.0)?;
        if let Sampling::MonteCarlo { draws, .. } = self.misalignment.sampling {
            if draws == 0 {
                return Err(("misalignment.sampling.monte_carlo.draws".into(), "must be at least 1".into()));
            }
        }
        range("fiber.alpha_db_per_km", self.fiber.alpha_db_per_km, f64::MIN_POSITIVE, 100.0)?;
        range("f_e", self.f_e, 1.0, 10.0)?;
        if !(1..=8).contains(&self.truncation.n_max) {
            return Err(("truncation.n_max".into(), format!("{} is outside [1, 8]", self.truncation.n_max)));
        }
        range("truncation.tail_tolerance", self.truncation.tail_tolerance, 0.0, 1.0)?;
        match (self.mode, &self.finite) {
            (ModeKind::Finite, None) => {
                return Err(("mode".into(), "finite mode needs a [finite] section".into()));
            }
            (_, Some(f)) => {
                if f.n_pulses.is_nan() || f.n_pulses < 1.0 {
                    return Err(("finite.n_pulses".into(), format!("{} must be at least 1", f.n_pulses)));
                }
                if !(f.epsilon > 0.0 && f.epsilon < 1.0) {
                    return Err(("finite.epsilon".into(), format!("{} must lie in (0, 1)", f.epsilon)));
                }
                range("finite.vacuum_decoy", f.vacuum_decoy, 0.0, 1.0)?;
                if let WeakDecoy::Value(w) = f.weak_decoy {
                    range("finite.weak_decoy", w, 0.0, 1.0)?;
                    if w <= f.vacuum_decoy {
                        return Err(("finite.weak_decoy".into(), "must exceed vacuum_decoy".into()));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn template(&self) -> ScenarioTemplate {
        let detector = DetectorParams { eta_d: self.detector.eta_d, y0: self.detector.y0 };
        let mut t = ScenarioTemplate::new(detector, self.misalignment.e_d, self.truncation.n_max);
        t.alpha_db_per_km = self.fiber.alpha_db_per_km;
        t.f_e = self.f_e;
        t.tail_tolerance = self.truncation.tail_tolerance;
        t.sampling = match self.misalignment.sampling {
            Sampling::Fixed => MisalignmentSampling::Fixed,
            Sampling::MonteCarlo { seed, draws } => MisalignmentSampling::MonteCarlo { seed, draws },
        };
        t
    }

    pub fn mode(&self) -> Mode {
        match (self.mode, self.finite) {
            (ModeKind::Finite, Some(f)) => Mode::Finite {
                params: FiniteKeyParams { n_pulses: f.n_pulses, epsilon: f.epsilon },
                decoys: match f.weak_decoy {
                    WeakDecoy::Value(weak) => DecoyChoice::Fixed { weak, vacuum: f.vacuum_decoy },
                    WeakDecoy::Keyword(DecoyKeyword::Optimize) => DecoyChoice::Optimize { vacuum: f.vacuum_decoy },
                },
            },
            _ => Mode::Asymptotic,
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

/// Span of the key `a.b.c` in the document.
fn locate(text: &str, dotted: &str) -> Option<Range<usize>> {
    let doc = DeTable::parse(text).ok()?;
    let mut table = doc.get_ref();
    let parts: Vec<&str> = dotted.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let (key, value) = table.iter().find(|(k, _)| k.get_ref() == part)?;
        if i + 1 == parts.len() {
            return Some(key.span());
        }
        match value.get_ref() {
            DeValue::Table(t) => table = t,
            _ => return Some(key.span()),
        }
    }
    None
}

/// Dotted key whose key or value contains `span`, innermost first.
fn key_at(text: &str, span: Range<usize>) -> Option<String> {
    fn walk(table: &DeTable, span: &Range<usize>, prefix: &str) -> Option<String> {
        for (k, v) in table.iter() {
            let name = if prefix.is_empty() { k.get_ref().to_string() } else { format!("{prefix}.{}", k.get_ref()) };
            if let DeValue::Table(t) = v.get_ref() {
                if let Some(inner) = walk(t, span, &name) {
                    return Some(inner);
                }
            }
            let (ks, vs) = (k.span(), v.span());
            let hit = |r: &Range<usize>| r.start <= span.start && span.start < r.end.max(r.start + 1);
            if hit(&ks) || (!matches!(v.get_ref(), DeValue::Table(_)) && hit(&vs)) {
                return Some(name);
            }
        }
        None
    }
    let doc = DeTable::parse(text).ok()?;
    walk(doc.get_ref(), &span, "")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "mode = \"asymptotic\"\n[detector]\neta_d = 0.5\ny0 = 1e-6\n[misalignment]\ne_d = 0.01\n";

    #[test]
    fn defaults_fill_in() {
        let c = ScenarioConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.truncation.n_max, 4);
        assert_eq!(c.f_e, 1.16);
        assert_eq!(c.mode(), Mode::Asymptotic);
    }

    #[test]
    fn unknown_key_is_located() {
        let text = MINIMAL.replace("y0 = 1e-6", "y0 = 1e-6\ncolour = 3");
        let e = ScenarioConfig::parse(&text).unwrap_err();
        assert_eq!(e.position.map(|p| p.0), Some(5));
        assert!(e.message.contains("colour"), "{e}");
    }

    #[test]
    fn bad_value_names_its_key() {
        let text = MINIMAL.replace("eta_d = 0.5", "eta_d = 1.5");
        let e = ScenarioConfig::parse(&text).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("detector.eta_d"));
        assert_eq!(e.position, Some((3, 1)));
        let text = MINIMAL.replace("eta_d = 0.5", "eta_d = \"high\"");
        let e = ScenarioConfig::parse(&text).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("detector.eta_d"), "{e}");
        assert_eq!(e.position.map(|p| p.0), Some(3));
    }

    #[test]
    fn finite_mode_needs_its_section() {
        let text = MINIMAL.replace("\"asymptotic\"", "\"finite\"");
        let e = ScenarioConfig::parse(&text).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("mode"));
        assert_eq!(e.position, Some((1, 1)));
    }

    #[test]
    fn decoy_keyword() {
        let text = MINIMAL.replace("\"asymptotic\"", "\"finite\"")
            + "[finite]\nn_pulses = 1e12\nepsilon = 1e-10\nweak_decoy = \"optimize\"\n";
        let c = ScenarioConfig::parse(&text).unwrap();
        assert!(matches!(c.mode(), Mode::Finite { decoys: DecoyChoice::Optimize { vacuum }, .. } if vacuum == 0.0));
        let e = ScenarioConfig::parse(&text.replace("\"optimize\"", "\"maximize\"")).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("finite.weak_decoy"), "{e}");
    }
}
