//! Flat `key = value` pipeline configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::matcher::MatchOptions;
use crate::regions::DetectorParams;
use crate::spectral::DEFAULT_BASIS_SIZE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionSource {
    Detect,
    Files,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mesh_x: Option<PathBuf>,
    pub mesh_y: Option<PathBuf>,
    /// Ground-truth X→Y map; enables evaluation.
    pub truth: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub regions: RegionSource,
    pub regions_x: Option<PathBuf>,
    pub regions_y: Option<PathBuf>,
    pub basis_size: usize,
    pub detector: DetectorParams,
    pub matching: MatchOptions,
    pub icp_iters: usize,
    /// Farthest-point sources used to estimate the diameter of Y.
    pub diameter_samples: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mesh_x: None,
            mesh_y: None,
            truth: None,
            output_dir: PathBuf::from("fmatch-out"),
            regions: RegionSource::Detect,
            regions_x: None,
            regions_y: None,
            basis_size: DEFAULT_BASIS_SIZE,
            detector: DetectorParams::default(),
            matching: MatchOptions::default(),
            icp_iters: 30,
            diameter_samples: 16,
        }
    }
}

/// Every recognized key, in the order written by [`PipelineConfig::to_text`].
pub const KEYS: &[&str] = &[
    "mesh_x",
    "mesh_y",
    "truth",
    "output_dir",
    "regions",
    "regions_x",
    "regions_y",
    "basis_size",
    "num_functions",
    "steps",
    "stability_tol",
    "stability_window",
    "min_area_frac",
    "max_area_frac",
    "max_overlap",
    "lambda",
    "mu",
    "lambda_scale",
    "mu_scale",
    "tol",
    "max_iter",
    "accelerate",
    "weight_p",
    "max_ratio",
    "max_outer",
    "outer_tol",
    "identity_start",
    "icp_iters",
    "diameter_samples",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::InvalidArgument(format!("{key} = {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::InvalidArgument(format!("{key} = {value:?}: expected true or false"))),
    }
}

/// `none` (or empty) clears an optional value.
fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if value.is_empty() || value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl PipelineConfig {
    /// Sets one key; `-` and `_` are interchangeable in key names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        let k = key.as_str();
        let det = &mut self.detector;
        let m = &mut self.matching;
        match k {
            "mesh_x" => self.mesh_x = optional(k, v)?,
            "mesh_y" => self.mesh_y = optional(k, v)?,
            "truth" => self.truth = optional(k, v)?,
            "output_dir" => self.output_dir = parse(k, v)?,
            "regions" => {
                self.regions = match v {
                    "detect" => RegionSource::Detect,
                    "files" => RegionSource::Files,
                    _ => {
                        return Err(Error::InvalidArgument(format!(
                            "regions = {v:?}: expected detect or files"
                        )))
                    }
                }
            }
            "regions_x" => self.regions_x = optional(k, v)?,
            "regions_y" => self.regions_y = optional(k, v)?,
            "basis_size" => self.basis_size = parse(k, v)?,
            "num_functions" => det.num_functions = parse(k, v)?,
            "steps" => det.steps = parse(k, v)?,
            "stability_tol" => det.stability_tol = parse(k, v)?,
            "stability_window" => det.stability_window = parse(k, v)?,
            "min_area_frac" => det.min_area_frac = parse(k, v)?,
            "max_area_frac" => det.max_area_frac = parse(k, v)?,
            "max_overlap" => det.max_overlap = parse(k, v)?,
            "lambda" => m.solver.lambda = optional(k, v)?,
            "mu" => m.solver.mu = optional(k, v)?,
            "lambda_scale" => m.solver.lambda_scale = parse(k, v)?,
            "mu_scale" => m.solver.mu_scale = parse(k, v)?,
            "tol" => m.solver.tol = parse(k, v)?,
            "max_iter" => m.solver.max_iter = parse(k, v)?,
            "accelerate" => m.solver.accelerate = parse_bool(k, v)?,
            "weight_p" => m.weight_p = parse(k, v)?,
            "max_ratio" => m.max_ratio = parse(k, v)?,
            "max_outer" => m.max_outer = parse(k, v)?,
            "outer_tol" => m.outer_tol = parse(k, v)?,
            "identity_start" => m.identity_start = parse_bool(k, v)?,
            "icp_iters" => self.icp_iters = parse(k, v)?,
            "diameter_samples" => self.diameter_samples = parse(k, v)?,
            _ => return Err(Error::InvalidArgument(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: format!("expected key = value, found {line:?}"),
            })?;
            self.set(k, v).map_err(|e| Error::Parse {
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let opt = |x: Option<f64>| x.map_or("none".to_string(), fmt_f64);
        let det = &self.detector;
        let m = &self.matching;
        let values = [
            path(&self.mesh_x),
            path(&self.mesh_y),
            path(&self.truth),
            self.output_dir.display().to_string(),
            match self.regions {
                RegionSource::Detect => "detect".into(),
                RegionSource::Files => "files".into(),
            },
            path(&self.regions_x),
            path(&self.regions_y),
            self.basis_size.to_string(),
            det.num_functions.to_string(),
            det.steps.to_string(),
            fmt_f64(det.stability_tol),
            det.stability_window.to_string(),
            fmt_f64(det.min_area_frac),
            fmt_f64(det.max_area_frac),
            fmt_f64(det.max_overlap),
            opt(m.solver.lambda),
            opt(m.solver.mu),
            fmt_f64(m.solver.lambda_scale),
            fmt_f64(m.solver.mu_scale),
            fmt_f64(m.solver.tol),
            m.solver.max_iter.to_string(),
            m.solver.accelerate.to_string(),
            fmt_f64(m.weight_p),
            fmt_f64(m.max_ratio),
            m.max_outer.to_string(),
            fmt_f64(m.outer_tol),
            m.identity_start.to_string(),
            self.icp_iters.to_string(),
            self.diameter_samples.to_string(),
        ];
        let mut s = String::new();
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Checks everything that can be checked before any file is read.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.basis_size < 2 {
            return bad(format!("basis_size must be >= 2, got {}", self.basis_size));
        }
        if self.diameter_samples == 0 {
            return bad("diameter_samples must be >= 1".into());
        }
        if self.output_dir.as_os_str().is_empty() {
            return bad("output_dir is empty".into());
        }
        Ok(())
    }
}
