//! End-to-end pipeline: load → basis → regions → match → refine →
//! evaluate → export.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;

use crate::config::{PipelineConfig, RegionSource};
use crate::error::Error;
use crate::eval::{correspondence_error, default_thresholds, error_curve, export_colored_ply, ErrorCurve};
use crate::geodesic::shape_diameter;
use crate::io::{fmt_f64, load_mesh, save_matrix};
use crate::matcher::{match_regions, MatchResult};
use crate::mesh::Mesh;
use crate::refine::{refine_icp, IcpResult, PointMap};
use crate::regions::{detect_stable_regions, filter_by_area, load_regions, region_coefficients, RegionSet};
use crate::spectral::{mesh_eigenbasis, SpectralBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Basis,
    Regions,
    Match,
    Refine,
    Eval,
    Export,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Basis => "basis",
            Stage::Regions => "regions",
            Stage::Match => "match",
            Stage::Refine => "refine",
            Stage::Eval => "eval",
            Stage::Export => "export",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An error tagged with the pipeline stage that raised it.
#[derive(Debug, thiserror::Error)]
#[error("stage {stage}: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl StageError {
    pub fn new(stage: Stage, source: Error) -> Self {
        StageError { stage, source }
    }

    /// 2 for configuration and input problems, 1 for computational failures.
    pub fn exit_code(&self) -> i32 {
        match self.stage {
            Stage::Config | Stage::Load => 2,
            _ => 1,
        }
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

pub trait AtStage<T> {
    fn at(self, stage: Stage) -> StageResult<T>;
}

impl<T> AtStage<T> for crate::Result<T> {
    fn at(self, stage: Stage) -> StageResult<T> {
        self.map_err(|e| StageError::new(stage, e))
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    pub basis: f64,
    pub regions: f64,
    pub optimization: f64,
    pub refinement: f64,
    pub total: f64,
}

impl Timings {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, t) in [
            ("Basis", self.basis),
            ("Regions (MSER)", self.regions),
            ("Opt.", self.optimization),
            ("Ref.", self.refinement),
            ("Tot.", self.total),
        ] {
            let _ = writeln!(s, "{name}\t{t:.3}");
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub diameter: f64,
    pub errors: Vec<f64>,
    pub curve: ErrorCurve,
}

impl Evaluation {
    pub fn summary(&self) -> String {
        let n = self.errors.len().max(1) as f64;
        let mean = self.errors.iter().sum::<f64>() / n;
        let max = self.errors.iter().copied().fold(0.0, f64::max);
        let exact = self.errors.iter().filter(|&&e| e == 0.0).count() as f64 / n;
        let mut s = String::new();
        let _ = writeln!(s, "diameter = {}", fmt_f64(self.diameter));
        let _ = writeln!(s, "mean_error = {}", fmt_f64(mean));
        let _ = writeln!(s, "max_error = {}", fmt_f64(max));
        let _ = writeln!(s, "exact_fraction = {}", fmt_f64(exact));
        s
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub regions_x: RegionSet,
    pub regions_y: RegionSet,
    pub matching: MatchResult,
    pub refined: IcpResult,
    pub evaluation: Option<Evaluation>,
    pub timings: Timings,
    /// Files written, in write order.
    pub artifacts: Vec<PathBuf>,
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> StageResult<&'a Path> {
    p.as_deref()
        .filter(|p| !p.as_os_str().is_empty())
        .ok_or_else(|| StageError::new(Stage::Load, Error::InvalidArgument(format!("{key} is not set"))))
}

pub fn load_input_mesh(path: &Option<PathBuf>, key: &str) -> StageResult<Mesh> {
    load_mesh(required(path, key)?).at(Stage::Load)
}

/// Detects regions or reads them from `file`, then drops those below the
/// minimum area fraction. An empty result is an error.
pub fn obtain_regions(
    mesh: &Mesh,
    basis: &SpectralBasis,
    file: Option<&Path>,
    config: &PipelineConfig,
) -> StageResult<RegionSet> {
    let raw = match file {
        Some(p) => load_regions(p, mesh).at(Stage::Load)?,
        None => detect_stable_regions(mesh, basis, &config.detector).at(Stage::Regions)?,
    };
    let kept = filter_by_area(&raw, config.detector.min_area_frac);
    if kept.is_empty() {
        return Err(StageError::new(Stage::Regions, Error::NoRegions));
    }
    Ok(kept)
}

/// Geodesic error of `map` against `truth` and its cumulative curve.
pub fn evaluate(mesh_y: &Mesh, map: &PointMap, truth: &PointMap, samples: usize) -> StageResult<Evaluation> {
    let diameter = shape_diameter(mesh_y, samples).at(Stage::Eval)?;
    let errors = correspondence_error(map, truth, mesh_y, diameter).at(Stage::Eval)?;
    let curve = error_curve(&errors, &default_thresholds()).at(Stage::Eval)?;
    Ok(Evaluation { diameter, errors, curve })
}

fn write(path: PathBuf, text: &str, artifacts: &mut Vec<PathBuf>) -> StageResult<()> {
    fs::write(&path, text).map_err(|e| StageError::new(Stage::Export, Error::io(&path, e)))?;
    artifacts.push(path);
    Ok(())
}

/// Runs every stage and writes the artifacts into `config.output_dir`.
///
/// Everything except `timings.txt` depends only on the configuration.
pub fn run_pipeline(config: &PipelineConfig) -> StageResult<PipelineOutput> {
    let start = Instant::now();
    config.validate().at(Stage::Config)?;
    if config.regions == RegionSource::Files {
        required(&config.regions_x, "regions_x")?;
        required(&config.regions_y, "regions_y")?;
    }
    let mesh_x = load_input_mesh(&config.mesh_x, "mesh_x")?;
    let mesh_y = load_input_mesh(&config.mesh_y, "mesh_y")?;
    let truth = match &config.truth {
        Some(p) => Some(PointMap::load(p, mesh_y.num_vertices()).at(Stage::Load)?),
        None => None,
    };
    if let Some(t) = &truth {
        if t.len() != mesh_x.num_vertices() {
            return Err(StageError::new(
                Stage::Load,
                Error::dims(format!("truth over {} vertices", mesh_x.num_vertices()), t.len()),
            ));
        }
    }
    info!("loaded X ({} vertices) and Y ({} vertices)", mesh_x.num_vertices(), mesh_y.num_vertices());

    let t = Instant::now();
    let n = config.basis_size;
    let (bx, by) = rayon::join(|| mesh_eigenbasis(&mesh_x, n), || mesh_eigenbasis(&mesh_y, n));
    let (basis_x, basis_y) = (bx.at(Stage::Basis)?, by.at(Stage::Basis)?);
    let basis_time = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (fx, fy) = match config.regions {
        RegionSource::Files => (config.regions_x.as_deref(), config.regions_y.as_deref()),
        RegionSource::Detect => (None, None),
    };
    let regions_x = obtain_regions(&mesh_x, &basis_x, fx, config)?;
    let regions_y = obtain_regions(&mesh_y, &basis_y, fy, config)?;
    let regions_time = t.elapsed().as_secs_f64();
    info!("{} regions on X, {} on Y", regions_x.len(), regions_y.len());

    let t = Instant::now();
    let a = region_coefficients(&regions_x, &basis_x).at(Stage::Match)?;
    let b = region_coefficients(&regions_y, &basis_y).at(Stage::Match)?;
    let matching = match_regions(&a, &b, &regions_x, &regions_y, &config.matching).at(Stage::Match)?;
    let opt_time = t.elapsed().as_secs_f64();
    info!("matching: {} outer iterations, objective {}", matching.iterations, matching.objective());

    let t = Instant::now();
    let mut refined = refine_icp(&basis_x, &basis_y, &matching.c, config.icp_iters).at(Stage::Refine)?;
    let refine_time = t.elapsed().as_secs_f64();

    let evaluation = match &truth {
        Some(truth) => {
            let ev = evaluate(&mesh_y, &refined.map, truth, config.diameter_samples)?;
            refined.map.errors = Some(ev.errors.clone());
            Some(ev)
        }
        None => None,
    };

    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| StageError::new(Stage::Export, Error::io(dir, e)))?;
    let mut artifacts = Vec::new();
    write(dir.join("config.txt"), &config.to_text(), &mut artifacts)?;
    write(dir.join("match_report.txt"), &matching.report(), &mut artifacts)?;
    let c_path = dir.join("functional_map.txt");
    save_matrix(&matching.c, &c_path).at(Stage::Export)?;
    artifacts.push(c_path);
    let c_path = dir.join("refined_functional_map.txt");
    save_matrix(&refined.c, &c_path).at(Stage::Export)?;
    artifacts.push(c_path);
    for (name, regions) in [("regions_x.txt", &regions_x), ("regions_y.txt", &regions_y)] {
        let p = dir.join(name);
        regions.save(&p).at(Stage::Export)?;
        artifacts.push(p);
    }
    let p = dir.join("pointmap.txt");
    refined.map.save(&p).at(Stage::Export)?;
    artifacts.push(p);
    let (px, py) = (dir.join("x_colored.ply"), dir.join("y_colored.ply"));
    export_colored_ply(&mesh_x, &mesh_y, &refined.map, &px, &py).at(Stage::Export)?;
    artifacts.extend([px, py]);
    if let Some(ev) = &evaluation {
        write(dir.join("error_curve.txt"), &ev.curve.to_text(), &mut artifacts)?;
        write(dir.join("evaluation.txt"), &ev.summary(), &mut artifacts)?;
        let errs: String = ev.errors.iter().map(|e| fmt_f64(*e) + "\n").collect();
        write(dir.join("errors.txt"), &errs, &mut artifacts)?;
    }

    let timings = Timings {
        basis: basis_time,
        regions: regions_time,
        optimization: opt_time,
        refinement: refine_time,
        total: start.elapsed().as_secs_f64(),
    };
    write(dir.join("timings.txt"), &timings.to_text(), &mut artifacts)?;
    Ok(PipelineOutput {
        regions_x,
        regions_y,
        matching,
        refined,
        evaluation,
        timings,
        artifacts,
    })
}
