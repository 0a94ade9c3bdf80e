//! Versioned line tables: ground level, hyperfine manifold and E1 transitions.

use super::wigner::doubled;
use super::AtomError;
use crate::constants::ATOMIC_MASS_UNIT;
use serde::Deserialize;

pub const LINE_TABLE_FORMAT: u32 = 1;

const RB87_TOML: &str = include_str!("../../data/rb87.toml");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile {
    format_version: u32,
    species: String,
    mass_amu: f64,
    nuclear_spin: f64,
    ground: GroundFile,
    lines: Vec<LineFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundFile {
    label: String,
    j: f64,
    hyperfine: Vec<HyperfineLevel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct HyperfineLevel {
    pub f: f64,
    pub g_f: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineFile {
    label: String,
    upper: String,
    j_upper: f64,
    frequency_hz: f64,
    linewidth_hz: f64,
    reduced_dipole: f64,
    dipole_convention: DipoleConvention,
}

/// How a tabulated reduced dipole relates to `(J'||d||J)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DipoleConvention {
    /// `<J||er||J'>` with `|(J'||d||J)|^2 = (2J+1) |<J||er||J'>|^2`.
    Unnormalized,
    /// Already `(J'||d||J)`.
    Normalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub label: String,
    pub upper: String,
    pub j_upper: f64,
    pub frequency_hz: f64,
    /// Natural linewidth Gamma / 2pi.
    pub linewidth_hz: f64,
    /// `|(n'J'||d||nJ)|^2` in C^2 m^2.
    pub reduced_dipole_sq: f64,
}

impl Transition {
    pub fn angular_frequency(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency_hz
    }

    pub fn gamma(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.linewidth_hz
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomSpecies {
    pub name: String,
    pub mass_kg: f64,
    pub nuclear_spin: f64,
    pub ground_label: String,
    pub ground_j: f64,
    pub hyperfine: Vec<HyperfineLevel>,
    pub transitions: Vec<Transition>,
}

impl AtomSpecies {
    pub fn rb87() -> Self {
        Self::from_toml_str(RB87_TOML).expect("embedded 87Rb table is valid")
    }

    /// Species by short key; only tables shipped with the crate are known.
    pub fn by_key(key: &str) -> Result<Self, AtomError> {
        match key {
            "87Rb" | "Rb87" | "rb87" => Ok(Self::rb87()),
            other => Err(AtomError::UnknownSpecies(other.to_string())),
        }
    }

    pub fn known_keys() -> &'static [&'static str] {
        &["87Rb"]
    }

    pub fn from_toml_str(text: &str) -> Result<Self, AtomError> {
        let file: TableFile = toml::from_str(text).map_err(|e| AtomError::Table(e.to_string()))?;
        if file.format_version != LINE_TABLE_FORMAT {
            return Err(AtomError::Table(format!(
                "unsupported line table format_version {} (expected {LINE_TABLE_FORMAT})",
                file.format_version
            )));
        }
        let half = |name: &str, v: f64| {
            doubled(v).ok_or_else(|| AtomError::Table(format!("{name} = {v} is not a non-negative half-integer")))
        };
        let two_i = half("nuclear_spin", file.nuclear_spin)?;
        let two_j = half("ground.j", file.ground.j)?;
        if !(file.mass_amu > 0.0) {
            return Err(AtomError::Table("mass_amu must be positive".into()));
        }
        for h in &file.ground.hyperfine {
            let two_f = half("ground.hyperfine.f", h.f)?;
            let lo = (two_i as i64 - two_j as i64).unsigned_abs() as u32;
            if two_f < lo || two_f > two_i + two_j || (two_f + two_i + two_j) % 2 != 0 {
                return Err(AtomError::Table(format!("F = {} not reachable from J = {} and I = {}", h.f, file.ground.j, file.nuclear_spin)));
            }
        }
        let mut transitions = Vec::with_capacity(file.lines.len());
        for l in file.lines {
            half("lines.j_upper", l.j_upper)?;
            if !(l.frequency_hz > 0.0) || !(l.linewidth_hz >= 0.0) || !l.reduced_dipole.is_finite() {
                return Err(AtomError::Table(format!("line {} has non-physical data", l.label)));
            }
            if (l.j_upper - file.ground.j).abs() > 1.0 + 1e-9 {
                return Err(AtomError::Table(format!("line {} is not an E1 transition", l.label)));
            }
            let d2 = l.reduced_dipole * l.reduced_dipole;
            let reduced_dipole_sq = match l.dipole_convention {
                DipoleConvention::Unnormalized => (2.0 * file.ground.j + 1.0) * d2,
                DipoleConvention::Normalized => d2,
            };
            transitions.push(Transition {
                label: l.label,
                upper: l.upper,
                j_upper: l.j_upper,
                frequency_hz: l.frequency_hz,
                linewidth_hz: l.linewidth_hz,
                reduced_dipole_sq,
            });
        }
        if transitions.is_empty() {
            return Err(AtomError::Table("line table lists no transitions".into()));
        }
        Ok(Self {
            name: file.species,
            mass_kg: file.mass_amu * ATOMIC_MASS_UNIT,
            nuclear_spin: file.nuclear_spin,
            ground_label: file.ground.label,
            ground_j: file.ground.j,
            hyperfine: file.ground.hyperfine,
            transitions,
        })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, AtomError> {
        let text = std::fs::read_to_string(path).map_err(|e| AtomError::Table(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn hyperfine_level(&self, f: f64) -> Result<HyperfineLevel, AtomError> {
        self.hyperfine
            .iter()
            .copied()
            .find(|h| (h.f - f).abs() < 1e-9)
            .ok_or(AtomError::UnknownLevel { f })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_table_loads() {
        let rb = AtomSpecies::rb87();
        assert_eq!(rb.transitions.len(), 2);
        assert_eq!(rb.hyperfine_level(1.0).unwrap().g_f, -0.5);
        let d1 = &rb.transitions[0];
        assert!((d1.reduced_dipole_sq / (2.0 * 2.537e-29f64.powi(2)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let bad = RB87_TOML.replace("format_version = 1", "format_version = 9");
        assert!(matches!(AtomSpecies::from_toml_str(&bad), Err(AtomError::Table(_))));
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(matches!(AtomSpecies::by_key("Cs133"), Err(AtomError::UnknownSpecies(_))));
    }

    #[test]
    fn unreachable_f_is_rejected() {
        let bad = RB87_TOML.replace("f = 2\n", "f = 3\n");
        assert!(AtomSpecies::from_toml_str(&bad).is_err());
    }
}
