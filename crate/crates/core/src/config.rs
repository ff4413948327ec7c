//! Plain `key = value` config files with `[section]` headers.
//!
//! ```text
//! [field]
//! row_spacing = 0.6
//! seed = 3
//!
//! [controller]
//! kind = proportional
//! alpha = -0.12
//! ```
//!
//! `#` and `;` start comments. Unknown sections or keys are errors so typos
//! do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

use crate::mask::DegradeSpec;
use crate::servo::{Controller, IbvsConfig, PControllerConfig};
use crate::sim::{nominal_ibvs, CameraModel, Field, FieldSpec, TrialConfig};
use crate::tsm::TsmConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("[{section}] {key}: cannot parse {value:?}")]
    BadValue {
        section: String,
        key: String,
        value: String,
    },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("unknown key {key:?} in [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or(ConfigError::Syntax {
                    line: i + 1,
                    msg: "unterminated section header".into(),
                })?;
                let name = name.trim().to_ascii_lowercase();
                sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax {
                line: i + 1,
                msg: format!("expected key = value, got {line:?}"),
            })?;
            let section = current.clone().ok_or(ConfigError::Syntax {
                line: i + 1,
                msg: "key outside of any section".into(),
            })?;
            let key = key.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    msg: "empty key".into(),
                });
            }
            sections
                .entry(section)
                .or_default()
                .insert(key, value.trim().to_string());
        }
        Ok(Self { sections })
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.sections
            .entry(section.into())
            .or_default()
            .insert(key.into(), value.into());
    }

    fn check_keys(&self, allowed: &[(&str, &[&str])]) -> Result<(), ConfigError> {
        for (section, keys) in &self.sections {
            let Some((_, known)) = allowed.iter().find(|(s, _)| s == section) else {
                return Err(ConfigError::UnknownSection(section.clone()));
            };
            if let Some(k) = keys.keys().find(|k| !known.contains(&k.as_str())) {
                return Err(ConfigError::UnknownKey {
                    section: section.clone(),
                    key: k.clone(),
                });
            }
        }
        Ok(())
    }

    fn read<T: FromStr>(&self, section: &str, key: &str, into: &mut T) -> Result<(), ConfigError> {
        if let Some(v) = self.get(section, key) {
            *into = v.parse().map_err(|_| ConfigError::BadValue {
                section: section.into(),
                key: key.into(),
                value: v.into(),
            })?;
        }
        Ok(())
    }

    fn read_pair(&self, section: &str, key: &str) -> Result<Option<[f64; 2]>, ConfigError> {
        let Some(v) = self.get(section, key) else {
            return Ok(None);
        };
        let bad = || ConfigError::BadValue {
            section: section.into(),
            key: key.into(),
            value: v.into(),
        };
        let parts: Vec<f64> = v
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        match parts[..] {
            [a, b] => Ok(Some([a, b])),
            _ => Err(bad()),
        }
    }
}

const FIELD_KEYS: &[&str] = &[
    "row_spacing",
    "seed_spacing",
    "plant_height_mean",
    "plant_height_jitter",
    "row_length",
    "num_rows",
    "plant_radius_per_height",
    "plant_orientation_deg",
    "seed",
];
const CAMERA_KEYS: &[&str] = &[
    "hfov",
    "vfov",
    "pitch",
    "mount_height",
    "render_width",
    "render_height",
    "output_size",
    "square_direct",
];
const TRIAL_KEYS: &[&str] = &[
    "trials",
    "heading_seed",
    "initial_heading",
    "initial_offset",
    "frame_distance",
    "max_frames",
    "row_index",
    "parallel",
];
const CONTROLLER_KEYS: &[&str] = &["kind", "alpha", "w1", "w2", "v_star", "lambda", "jv", "jw"];
const TSM_KEYS: &[&str] = &[
    "scale_factor",
    "begin",
    "cease",
    "anchor_threshold_ratio",
    "default_anchor",
];
const DEGRADE_KEYS: &[&str] = &["block_size", "dropout", "speckle", "dilation", "seed"];

/// Reads a `[tsm]` section over `base`.
pub fn tsm_from(cfg: &ConfigFile, base: TsmConfig) -> Result<TsmConfig, ConfigError> {
    let mut t = base;
    cfg.read("tsm", "scale_factor", &mut t.scale_factor)?;
    cfg.read("tsm", "begin", &mut t.begin)?;
    cfg.read("tsm", "cease", &mut t.cease)?;
    cfg.read(
        "tsm",
        "anchor_threshold_ratio",
        &mut t.anchor_threshold_ratio,
    )?;
    cfg.read("tsm", "default_anchor", &mut t.default_anchor)?;
    Ok(t)
}

/// Detection-only config: just a `[tsm]` section.
pub fn detect_config(cfg: &ConfigFile) -> Result<TsmConfig, ConfigError> {
    cfg.check_keys(&[("tsm", TSM_KEYS)])?;
    tsm_from(cfg, TsmConfig::default())
}

/// Everything `simulate` needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub field: FieldSpec,
    pub trial: TrialConfig,
    pub trials: usize,
    pub heading_seed: u64,
    /// Same initial heading for every trial instead of the +/- protocol.
    pub fixed_heading: Option<f64>,
    pub parallel: bool,
    /// IBVS Jacobians left blank in the file, to be filled from the camera.
    ibvs_needs_jacobian: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            field: FieldSpec::default(),
            trial: TrialConfig::default(),
            trials: 20,
            heading_seed: 0,
            fixed_heading: None,
            parallel: true,
            ibvs_needs_jacobian: false,
        }
    }
}

impl SimulationConfig {
    pub fn from_config(cfg: &ConfigFile) -> Result<Self, ConfigError> {
        cfg.check_keys(&[
            ("field", FIELD_KEYS),
            ("camera", CAMERA_KEYS),
            ("trial", TRIAL_KEYS),
            ("controller", CONTROLLER_KEYS),
            ("tsm", TSM_KEYS),
            ("degrade", DEGRADE_KEYS),
        ])?;
        let mut s = SimulationConfig::default();

        let f = &mut s.field;
        cfg.read("field", "row_spacing", &mut f.row_spacing)?;
        cfg.read("field", "seed_spacing", &mut f.seed_spacing)?;
        cfg.read("field", "plant_height_mean", &mut f.plant_height_mean)?;
        cfg.read("field", "plant_height_jitter", &mut f.plant_height_jitter)?;
        cfg.read("field", "row_length", &mut f.row_length)?;
        cfg.read("field", "num_rows", &mut f.num_rows)?;
        cfg.read(
            "field",
            "plant_radius_per_height",
            &mut f.plant_radius_per_height,
        )?;
        cfg.read(
            "field",
            "plant_orientation_deg",
            &mut f.plant_orientation_deg,
        )?;
        cfg.read("field", "seed", &mut f.seed)?;

        let c = &mut s.trial.camera;
        cfg.read("camera", "hfov", &mut c.hfov_deg)?;
        cfg.read("camera", "vfov", &mut c.vfov_deg)?;
        cfg.read("camera", "pitch", &mut c.pitch_deg)?;
        cfg.read("camera", "mount_height", &mut c.mount_height)?;
        cfg.read("camera", "render_width", &mut c.render_width)?;
        cfg.read("camera", "render_height", &mut c.render_height)?;
        cfg.read("camera", "output_size", &mut c.output_size)?;
        cfg.read("camera", "square_direct", &mut c.square_direct)?;

        s.trial.tsm = tsm_from(cfg, crate::sim::simulation_tsm(c.output_size))?;

        cfg.read("trial", "trials", &mut s.trials)?;
        cfg.read("trial", "heading_seed", &mut s.heading_seed)?;
        cfg.read("trial", "parallel", &mut s.parallel)?;
        if cfg.get("trial", "initial_heading").is_some() {
            let mut h = 0.0;
            cfg.read("trial", "initial_heading", &mut h)?;
            s.fixed_heading = Some(h);
        }
        cfg.read("trial", "initial_offset", &mut s.trial.initial_offset)?;
        cfg.read("trial", "frame_distance", &mut s.trial.frame_distance)?;
        cfg.read("trial", "max_frames", &mut s.trial.max_frames)?;
        if cfg.get("trial", "row_index").is_some() {
            let mut r = 0usize;
            cfg.read("trial", "row_index", &mut r)?;
            s.trial.row_index = Some(r);
        }

        let kind = cfg.get("controller", "kind").unwrap_or("proportional");
        s.trial.controller = match kind {
            "proportional" => {
                let mut p = PControllerConfig::default();
                cfg.read("controller", "alpha", &mut p.alpha)?;
                cfg.read("controller", "w1", &mut p.w1)?;
                cfg.read("controller", "w2", &mut p.w2)?;
                cfg.read("controller", "v_star", &mut p.v_star)?;
                Controller::Proportional(p)
            }
            "ibvs" => {
                let mut i = IbvsConfig {
                    lambda: 2.0,
                    v_star: PControllerConfig::default().v_star,
                    jacobian_v: [0.0; 2],
                    jacobian_w: [0.0; 2],
                };
                cfg.read("controller", "lambda", &mut i.lambda)?;
                cfg.read("controller", "v_star", &mut i.v_star)?;
                let jv = cfg.read_pair("controller", "jv")?;
                let jw = cfg.read_pair("controller", "jw")?;
                s.ibvs_needs_jacobian = jw.is_none();
                i.jacobian_v = jv.unwrap_or_default();
                i.jacobian_w = jw.unwrap_or_default();
                Controller::Ibvs(i)
            }
            other => {
                return Err(ConfigError::BadValue {
                    section: "controller".into(),
                    key: "kind".into(),
                    value: other.into(),
                })
            }
        };

        if cfg.has_section("degrade") {
            let mut d = DegradeSpec::identity();
            cfg.read("degrade", "block_size", &mut d.dropout_block_size)?;
            cfg.read("degrade", "dropout", &mut d.dropout_probability)?;
            cfg.read("degrade", "speckle", &mut d.speckle_probability)?;
            cfg.read("degrade", "dilation", &mut d.dilation_radius)?;
            cfg.read("degrade", "seed", &mut d.seed)?;
            s.trial.degrade = Some(d);
        }
        Ok(s)
    }

    /// Replaces every seed (field, headings, degradation).
    pub fn override_seed(&mut self, seed: u64) {
        self.field.seed = seed;
        self.heading_seed = seed;
        if let Some(d) = &mut self.trial.degrade {
            d.seed = seed;
        }
    }

    /// Fills IBVS Jacobians that the file left out from the camera model.
    pub fn resolve_jacobians(&mut self, field: &Field) -> Result<(), ConfigError> {
        if !self.ibvs_needs_jacobian {
            return Ok(());
        }
        if let Controller::Ibvs(i) = &mut self.trial.controller {
            let row = self.trial.row_index.unwrap_or(field.rows().len() / 2);
            let nominal = nominal_ibvs(field, &self.trial.camera, row, i.lambda, i.v_star)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if i.jacobian_v == [0.0; 2] {
                i.jacobian_v = nominal.jacobian_v;
            }
            i.jacobian_w = nominal.jacobian_w;
        }
        self.ibvs_needs_jacobian = false;
        Ok(())
    }

    pub fn camera(&self) -> &CameraModel {
        &self.trial.camera
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let c = ConfigFile::parse(
            "# top\n[Field]\nrow_spacing = 0.5 ; inline\n\n[controller]\nkind=ibvs\njw = 1.5, -2\n",
        )
        .unwrap();
        assert_eq!(c.get("field", "row_spacing"), Some("0.5"));
        assert_eq!(c.get("controller", "kind"), Some("ibvs"));
        assert_eq!(c.read_pair("controller", "jw").unwrap(), Some([1.5, -2.0]));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        assert_eq!(
            ConfigFile::parse("[a]\nnot a pair\n"),
            Err(ConfigError::Syntax {
                line: 2,
                msg: "expected key = value, got \"not a pair\"".into()
            })
        );
        assert!(ConfigFile::parse("x = 1\n").is_err());
        assert!(ConfigFile::parse("[open\n").is_err());
    }

    #[test]
    fn simulation_config_round() {
        let text = "[field]\nseed = 9\nrow_length = 8\n[trial]\ntrials = 4\ninitial_heading = 5\n\
                    [controller]\nalpha = -0.2\n[tsm]\nbegin = 180\n[degrade]\ndropout = 0.1\n";
        let s = SimulationConfig::from_config(&ConfigFile::parse(text).unwrap()).unwrap();
        assert_eq!(s.field.seed, 9);
        assert_eq!(s.field.row_length, 8.0);
        assert_eq!(s.trials, 4);
        assert_eq!(s.fixed_heading, Some(5.0));
        assert_eq!(s.trial.tsm.begin, 180);
        assert_eq!(s.trial.tsm.default_anchor, 256);
        match s.trial.controller {
            Controller::Proportional(p) => assert_eq!(p.alpha, -0.2),
            _ => panic!("expected proportional"),
        }
        assert_eq!(s.trial.degrade.unwrap().dropout_probability, 0.1);
    }

    #[test]
    fn unknown_keys_and_values_are_rejected() {
        let parse = |t: &str| SimulationConfig::from_config(&ConfigFile::parse(t).unwrap());
        assert!(matches!(
            parse("[field]\nrow_spacin = 1\n"),
            Err(ConfigError::UnknownKey { .. })
        ));
        assert!(matches!(
            parse("[wat]\n"),
            Err(ConfigError::UnknownSection(_))
        ));
        assert!(matches!(
            parse("[field]\nnum_rows = many\n"),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(parse("[controller]\nkind = pid\n").is_err());
        assert!(parse("[controller]\nkind = ibvs\njw = 1\n").is_err());
    }

    #[test]
    fn seed_override_reaches_everything() {
        let mut s = SimulationConfig::from_config(
            &ConfigFile::parse("[degrade]\ndropout = 0.1\nseed = 3\n").unwrap(),
        )
        .unwrap();
        s.override_seed(77);
        assert_eq!(s.field.seed, 77);
        assert_eq!(s.heading_seed, 77);
        assert_eq!(s.trial.degrade.unwrap().seed, 77);
    }

    #[test]
    fn detect_config_only_takes_tsm() {
        let t = detect_config(&ConfigFile::parse("[tsm]\ncease = 340\n").unwrap()).unwrap();
        assert_eq!((t.begin, t.cease, t.default_anchor), (190, 340, 277));
        assert!(detect_config(&ConfigFile::parse("[field]\nseed = 1\n").unwrap()).is_err());
    }
}
