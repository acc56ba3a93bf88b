//! Per-viewer display preferences: validation, patching, on-disk profiles and
//! the render directives handed to display clients.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::cue_model::{RenderOptions, Verbosity};

pub const FONT_SCALE_MIN: f64 = 0.5;
pub const FONT_SCALE_MAX: f64 = 3.0;
pub const MAX_LINES_MIN: u8 = 1;
pub const MAX_LINES_MAX: u8 = 5;

/// Environment variable naming the profile directory.
pub const PROFILES_DIR_ENV: &str = "CAPFUSE_PROFILES_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contrast {
    Light,
    #[default]
    Dark,
    HighContrast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    #[default]
    Bottom,
    Top,
    NearSpeaker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceProfile {
    pub font_scale: f64,
    pub contrast: Contrast,
    pub placement: Placement,
    pub verbosity: Verbosity,
    pub show_tone: bool,
    pub show_gestures: bool,
    pub max_lines: u8,
}

impl Default for PreferenceProfile {
    fn default() -> Self {
        PreferenceProfile {
            font_scale: 1.0,
            contrast: Contrast::Dark,
            placement: Placement::Bottom,
            verbosity: Verbosity::Minimal,
            show_tone: true,
            show_gestures: true,
            max_lines: 2,
        }
    }
}

impl PreferenceProfile {
    pub fn render_options(&self) -> RenderOptions {
        RenderOptions {
            verbosity: self.verbosity,
            show_tone: self.show_tone,
            show_gestures: self.show_gestures,
        }
    }

    pub fn check(&self) -> Result<(), PrefError> {
        check_font_scale(self.font_scale)?;
        check_max_lines(self.max_lines as u64)?;
        Ok(())
    }
}

impl From<&PreferenceProfile> for RenderOptions {
    fn from(p: &PreferenceProfile) -> Self {
        p.render_options()
    }
}

#[derive(Debug, Error)]
pub enum PrefError {
    #[error("invalid preference {field}: {reason}")]
    InvalidPreference { field: String, reason: String },
    #[error("invalid profile name {0:?}")]
    InvalidName(String),
    #[error("profile storage failure: {0}")]
    StorageFailure(#[from] io::Error),
}

impl PrefError {
    fn invalid(field: &str, reason: impl Into<String>) -> Self {
        PrefError::InvalidPreference {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// Field name for `InvalidPreference`, if that is what this is.
    pub fn field(&self) -> Option<&str> {
        match self {
            PrefError::InvalidPreference { field, .. } => Some(field),
            _ => None,
        }
    }
}

/// A validated partial profile. Absent fields are left untouched by
/// [`apply_patch`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfilePatch {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub font_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contrast: Option<Contrast>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub placement: Option<Placement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verbosity: Option<Verbosity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub show_tone: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub show_gestures: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_lines: Option<u8>,
}

impl ProfilePatch {
    pub fn is_empty(&self) -> bool {
        *self == ProfilePatch::default()
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("patch serializes")
    }
}

fn check_font_scale(v: f64) -> Result<f64, PrefError> {
    if !v.is_finite() || !(FONT_SCALE_MIN..=FONT_SCALE_MAX).contains(&v) {
        return Err(PrefError::invalid(
            "font_scale",
            format!("out of range [{FONT_SCALE_MIN}, {FONT_SCALE_MAX}]"),
        ));
    }
    Ok(v)
}

fn check_max_lines(v: u64) -> Result<u8, PrefError> {
    if !(MAX_LINES_MIN as u64..=MAX_LINES_MAX as u64).contains(&v) {
        return Err(PrefError::invalid(
            "max_lines",
            format!("out of range [{MAX_LINES_MIN}, {MAX_LINES_MAX}]"),
        ));
    }
    Ok(v as u8)
}

fn enum_value<T: for<'de> Deserialize<'de>>(field: &str, value: &Value) -> Result<T, PrefError> {
    let s = value
        .as_str()
        .ok_or_else(|| PrefError::invalid(field, "expected a string"))?;
    serde_json::from_value(Value::String(s.to_ascii_lowercase()))
        .map_err(|_| PrefError::invalid(field, format!("unknown value {s:?}")))
}

fn bool_value(field: &str, value: &Value) -> Result<bool, PrefError> {
    value
        .as_bool()
        .ok_or_else(|| PrefError::invalid(field, "expected true or false"))
}

/// Checks a raw patch object: unknown fields are rejected, numbers are
/// range-checked and enum values are matched case-insensitively.
pub fn validate_patch(raw: &Map<String, Value>) -> Result<ProfilePatch, PrefError> {
    let mut patch = ProfilePatch::default();
    for (field, value) in raw {
        match field.as_str() {
            "font_scale" => {
                let v = value
                    .as_f64()
                    .ok_or_else(|| PrefError::invalid("font_scale", "expected a number"))?;
                patch.font_scale = Some(check_font_scale(v)?);
            }
            "contrast" => patch.contrast = Some(enum_value(field, value)?),
            "placement" => patch.placement = Some(enum_value(field, value)?),
            "verbosity" => patch.verbosity = Some(enum_value(field, value)?),
            "show_tone" => patch.show_tone = Some(bool_value(field, value)?),
            "show_gestures" => patch.show_gestures = Some(bool_value(field, value)?),
            "max_lines" => {
                let v = value
                    .as_u64()
                    .ok_or_else(|| PrefError::invalid("max_lines", "expected an integer"))?;
                patch.max_lines = Some(check_max_lines(v)?);
            }
            other => return Err(PrefError::invalid(other, "unknown field")),
        }
    }
    Ok(patch)
}

/// Field-wise overwrite of `profile` by a validated patch.
pub fn apply_patch(profile: &PreferenceProfile, patch: &ProfilePatch) -> PreferenceProfile {
    PreferenceProfile {
        font_scale: patch.font_scale.unwrap_or(profile.font_scale),
        contrast: patch.contrast.unwrap_or(profile.contrast),
        placement: patch.placement.unwrap_or(profile.placement),
        verbosity: patch.verbosity.unwrap_or(profile.verbosity),
        show_tone: patch.show_tone.unwrap_or(profile.show_tone),
        show_gestures: patch.show_gestures.unwrap_or(profile.show_gestures),
        max_lines: patch.max_lines.unwrap_or(profile.max_lines),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderDirectives {
    pub font_scale: f64,
    pub foreground: String,
    pub background: String,
    pub anchor: Placement,
    pub line_budget: u8,
}

impl RenderDirectives {
    pub fn colors(&self) -> (&str, &str) {
        (&self.foreground, &self.background)
    }
}

pub fn to_render_directives(profile: &PreferenceProfile) -> RenderDirectives {
    let (fg, bg) = match profile.contrast {
        Contrast::Light => ("#1A1A1A", "#F5F5F5"),
        Contrast::Dark => ("#F5F5F5", "#1A1A1A"),
        Contrast::HighContrast => ("#FFFFFF", "#000000"),
    };
    RenderDirectives {
        font_scale: profile.font_scale,
        foreground: fg.to_string(),
        background: bg.to_string(),
        anchor: profile.placement,
        line_budget: profile.max_lines,
    }
}

/// Result of [`ProfileStore::load`].
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedProfile {
    pub profile: PreferenceProfile,
    /// False when no file existed and defaults were returned.
    pub found: bool,
    /// Set when the stored file could not be parsed; the original was moved
    /// aside with a `.bad` suffix.
    pub corrupt: Option<PathBuf>,
}

pub fn is_valid_profile_name(name: &str) -> bool {
    (1..=32).contains(&name.len())
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}

/// One pretty-printed JSON file per named profile.
#[derive(Debug)]
pub struct ProfileStore {
    dir: PathBuf,
    write_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl ProfileStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ProfileStore {
            dir: dir.into(),
            write_locks: Mutex::new(HashMap::new()),
        }
    }

    /// Uses `explicit` if given, else `CAPFUSE_PROFILES_DIR`, else `./profiles`.
    pub fn from_env(explicit: Option<&Path>) -> Self {
        let dir = explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(PROFILES_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("profiles"));
        ProfileStore::new(dir)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, name: &str) -> Result<PathBuf, PrefError> {
        if !is_valid_profile_name(name) {
            return Err(PrefError::InvalidName(name.to_string()));
        }
        Ok(self.dir.join(format!("{name}.json")))
    }

    fn lock_for(&self, name: &str) -> Arc<Mutex<()>> {
        let mut locks = self.write_locks.lock().expect("lock table poisoned");
        locks.entry(name.to_string()).or_default().clone()
    }

    pub fn persist(&self, name: &str, profile: &PreferenceProfile) -> Result<(), PrefError> {
        let path = self.path_for(name)?;
        profile.check()?;
        let lock = self.lock_for(name);
        let _guard = lock.lock().expect("profile lock poisoned");
        fs::create_dir_all(&self.dir)?;
        let mut body = serde_json::to_string_pretty(profile).expect("profile serializes");
        body.push('\n');
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, body)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn load(&self, name: &str) -> Result<LoadedProfile, PrefError> {
        let path = self.path_for(name)?;
        let body = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Ok(LoadedProfile {
                    profile: PreferenceProfile::default(),
                    found: false,
                    corrupt: None,
                })
            }
            Err(e) => return Err(e.into()),
        };
        let parsed = serde_json::from_slice::<PreferenceProfile>(&body)
            .ok()
            .filter(|p| p.check().is_ok());
        match parsed {
            Some(profile) => Ok(LoadedProfile {
                profile,
                found: true,
                corrupt: None,
            }),
            None => {
                let lock = self.lock_for(name);
                let _guard = lock.lock().expect("profile lock poisoned");
                let bad = path.with_extension("json.bad");
                fs::rename(&path, &bad)?;
                tracing::warn!(profile = name, moved_to = %bad.display(), "corrupt profile replaced by defaults");
                Ok(LoadedProfile {
                    profile: PreferenceProfile::default(),
                    found: false,
                    corrupt: Some(bad),
                })
            }
        }
    }
}
