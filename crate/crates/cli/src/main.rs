use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use fmatch::config::PipelineConfig;
use fmatch::eval::export_colored_ply;
use fmatch::io::{load_matrix, load_mesh, save_matrix};
use fmatch::matcher::match_regions;
use fmatch::pipeline::{evaluate, load_input_mesh, obtain_regions, run_pipeline, AtStage, Stage, StageError, StageResult};
use fmatch::refine::{refine_icp, PointMap};
use fmatch::regions::region_coefficients;
use fmatch::spectral::{mesh_eigenbasis, SpectralBasis};
use fmatch::{Error, Mesh};

#[derive(Parser)]
#[command(name = "fmatch", version, about = "Shape correspondence from unordered region sets")]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a Laplace–Beltrami eigenbasis.
    Basis {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Detect stable regions on one mesh.
    Detect {
        #[arg(long)]
        mesh: PathBuf,
        /// Precomputed basis; computed from the mesh when absent.
        #[arg(long)]
        basis: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Match regions of X and Y; writes the report and functional map to the output directory.
    Match {
        #[arg(long)]
        basis_x: Option<PathBuf>,
        #[arg(long)]
        basis_y: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Turn a functional map into a vertex map by spectral ICP.
    Refine {
        #[arg(long)]
        basis_x: PathBuf,
        #[arg(long)]
        basis_y: PathBuf,
        /// Functional map file (whitespace matrix).
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Geodesic error of a vertex map against ground truth.
    Eval {
        /// Vertex map X → Y.
        #[arg(long)]
        map: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Run the whole pipeline.
    Run {
        #[command(flatten)]
        settings: Settings,
    },
    /// Write colored PLYs visualizing a vertex map.
    Export {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out_x: PathBuf,
        #[arg(long)]
        out_y: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
}

/// A config file plus one override flag per config key.
#[derive(Args)]
struct Settings {
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mesh_x: Option<String>,
    #[arg(long)]
    mesh_y: Option<String>,
    #[arg(long)]
    truth: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    /// `detect` or `files`.
    #[arg(long)]
    regions: Option<String>,
    #[arg(long)]
    regions_x: Option<String>,
    #[arg(long)]
    regions_y: Option<String>,
    #[arg(long)]
    basis_size: Option<String>,
    #[arg(long)]
    num_functions: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    stability_tol: Option<String>,
    #[arg(long)]
    stability_window: Option<String>,
    #[arg(long)]
    min_area_frac: Option<String>,
    #[arg(long)]
    max_area_frac: Option<String>,
    #[arg(long)]
    max_overlap: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    lambda_scale: Option<String>,
    #[arg(long)]
    mu_scale: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    max_iter: Option<String>,
    #[arg(long)]
    accelerate: Option<String>,
    /// Same as `--accelerate false`.
    #[arg(long)]
    no_accel: bool,
    #[arg(long)]
    weight_p: Option<String>,
    #[arg(long)]
    max_ratio: Option<String>,
    #[arg(long)]
    max_outer: Option<String>,
    #[arg(long)]
    outer_tol: Option<String>,
    #[arg(long)]
    identity_start: Option<String>,
    #[arg(long)]
    icp_iters: Option<String>,
    #[arg(long)]
    diameter_samples: Option<String>,
}

impl Settings {
    fn resolve(&self) -> StageResult<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p).at(Stage::Config)?,
            None => PipelineConfig::default(),
        };
        let overrides = [
            ("mesh_x", &self.mesh_x),
            ("mesh_y", &self.mesh_y),
            ("truth", &self.truth),
            ("output_dir", &self.output_dir),
            ("regions", &self.regions),
            ("regions_x", &self.regions_x),
            ("regions_y", &self.regions_y),
            ("basis_size", &self.basis_size),
            ("num_functions", &self.num_functions),
            ("steps", &self.steps),
            ("stability_tol", &self.stability_tol),
            ("stability_window", &self.stability_window),
            ("min_area_frac", &self.min_area_frac),
            ("max_area_frac", &self.max_area_frac),
            ("max_overlap", &self.max_overlap),
            ("lambda", &self.lambda),
            ("mu", &self.mu),
            ("lambda_scale", &self.lambda_scale),
            ("mu_scale", &self.mu_scale),
            ("tol", &self.tol),
            ("max_iter", &self.max_iter),
            ("accelerate", &self.accelerate),
            ("weight_p", &self.weight_p),
            ("max_ratio", &self.max_ratio),
            ("max_outer", &self.max_outer),
            ("outer_tol", &self.outer_tol),
            ("identity_start", &self.identity_start),
            ("icp_iters", &self.icp_iters),
            ("diameter_samples", &self.diameter_samples),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v).at(Stage::Config)?;
            }
        }
        if self.no_accel {
            cfg.matching.solver.accelerate = false;
        }
        cfg.validate().at(Stage::Config)?;
        Ok(cfg)
    }
}

fn load_or_compute_basis(file: Option<&Path>, mesh: &Mesh, n: usize) -> StageResult<SpectralBasis> {
    let basis = match file {
        Some(p) => SpectralBasis::load(p).at(Stage::Load)?,
        None => return mesh_eigenbasis(mesh, n).at(Stage::Basis),
    };
    if basis.num_vertices() != mesh.num_vertices() {
        return Err(StageError::new(
            Stage::Load,
            Error::dims(format!("basis over {} vertices", mesh.num_vertices()), basis.num_vertices()),
        ));
    }
    Ok(basis)
}

fn create_dir(dir: &Path) -> StageResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| StageError::new(Stage::Export, Error::io(dir, e)))
}

fn write_text(path: &Path, text: &str) -> StageResult<()> {
    std::fs::write(path, text).map_err(|e| StageError::new(Stage::Export, Error::io(path, e)))
}

fn execute(command: Command) -> StageResult<()> {
    match command {
        Command::Basis { mesh, out, settings } => {
            let cfg = settings.resolve()?;
            let mesh = load_mesh(&mesh).at(Stage::Load)?;
            let basis = mesh_eigenbasis(&mesh, cfg.basis_size).at(Stage::Basis)?;
            basis.save(&out).at(Stage::Export)?;
            info!("eigenvalues: {:?}", basis.eigenvalues());
        }
        Command::Detect { mesh, basis, out, settings } => {
            let cfg = settings.resolve()?;
            let mesh = load_mesh(&mesh).at(Stage::Load)?;
            let basis = load_or_compute_basis(basis.as_deref(), &mesh, cfg.basis_size)?;
            let regions = obtain_regions(&mesh, &basis, None, &cfg)?;
            regions.save(&out).at(Stage::Export)?;
            println!("{} regions", regions.len());
        }
        Command::Match { basis_x, basis_y, settings } => {
            let cfg = settings.resolve()?;
            let mesh_x = load_input_mesh(&cfg.mesh_x, "mesh_x")?;
            let mesh_y = load_input_mesh(&cfg.mesh_y, "mesh_y")?;
            let bx = load_or_compute_basis(basis_x.as_deref(), &mesh_x, cfg.basis_size)?;
            let by = load_or_compute_basis(basis_y.as_deref(), &mesh_y, cfg.basis_size)?;
            if bx.size() != by.size() {
                return Err(StageError::new(Stage::Load, Error::dims(bx.size(), by.size())));
            }
            let (fx, fy) = match cfg.regions {
                fmatch::config::RegionSource::Files => (cfg.regions_x.as_deref(), cfg.regions_y.as_deref()),
                fmatch::config::RegionSource::Detect => (None, None),
            };
            let rx = obtain_regions(&mesh_x, &bx, fx, &cfg)?;
            let ry = obtain_regions(&mesh_y, &by, fy, &cfg)?;
            let a = region_coefficients(&rx, &bx).at(Stage::Match)?;
            let b = region_coefficients(&ry, &by).at(Stage::Match)?;
            let res = match_regions(&a, &b, &rx, &ry, &cfg.matching).at(Stage::Match)?;
            create_dir(&cfg.output_dir)?;
            res.save_report(cfg.output_dir.join("match_report.txt")).at(Stage::Export)?;
            save_matrix(&res.c, cfg.output_dir.join("functional_map.txt")).at(Stage::Export)?;
            rx.save(cfg.output_dir.join("regions_x.txt")).at(Stage::Export)?;
            ry.save(cfg.output_dir.join("regions_y.txt")).at(Stage::Export)?;
            println!("{} pairs, objective {}", res.pairs().len(), res.objective());
        }
        Command::Refine { basis_x, basis_y, map, out, settings } => {
            let cfg = settings.resolve()?;
            let bx = SpectralBasis::load(&basis_x).at(Stage::Load)?;
            let by = SpectralBasis::load(&basis_y).at(Stage::Load)?;
            let c = load_matrix(&map).at(Stage::Load)?;
            let res = refine_icp(&bx, &by, &c, cfg.icp_iters).at(Stage::Refine)?;
            res.map.save(&out).at(Stage::Export)?;
            println!("{} ICP iterations, converged = {}", res.iterations, res.converged);
        }
        Command::Eval { map, settings } => {
            let cfg = settings.resolve()?;
            let mesh_y = load_input_mesh(&cfg.mesh_y, "mesh_y")?;
            let Some(truth) = &cfg.truth else {
                return Err(StageError::new(Stage::Load, Error::InvalidArgument("truth is not set".into())));
            };
            let m = mesh_y.num_vertices();
            let map = PointMap::load(&map, m).at(Stage::Load)?;
            let truth = PointMap::load(truth, m).at(Stage::Load)?;
            let ev = evaluate(&mesh_y, &map, &truth, cfg.diameter_samples)?;
            create_dir(&cfg.output_dir)?;
            ev.curve.save(cfg.output_dir.join("error_curve.txt")).at(Stage::Export)?;
            let summary = ev.summary();
            write_text(&cfg.output_dir.join("evaluation.txt"), &summary)?;
            print!("{summary}");
        }
        Command::Run { settings } => {
            let cfg = settings.resolve()?;
            let out = run_pipeline(&cfg)?;
            print!("{}", out.timings.to_text());
            if let Some(ev) = &out.evaluation {
                print!("{}", ev.summary());
            }
        }
        Command::Export { map, out_x, out_y, settings } => {
            let cfg = settings.resolve()?;
            let mesh_x = load_input_mesh(&cfg.mesh_x, "mesh_x")?;
            let mesh_y = load_input_mesh(&cfg.mesh_y, "mesh_y")?;
            let map = PointMap::load(&map, mesh_y.num_vertices()).at(Stage::Load)?;
            export_colored_ply(&mesh_x, &mesh_y, &map, &out_x, &out_y).at(Stage::Export)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
