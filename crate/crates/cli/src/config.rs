use std::path::{Path, PathBuf};

use dcspde::noise::GridSpec;
use dcspde::solver::FieldPoint;
use dcspde::spectral::SpectralMeasureSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::{Command, GlobalArgs, MeasureKind};
use crate::CliError;

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub measure: MeasureSection,
    pub point: PointSection,
    pub grid: GridSection,
    pub run: RunSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureSection {
    pub kind: Option<MeasureKind>,
    pub beta: Option<f64>,
    pub ell: Option<f64>,
    pub table: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointSection {
    pub t: Option<f64>,
    pub x1: Option<f64>,
    pub x2: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub dt: Option<f64>,
    pub t_steps: Option<usize>,
    pub x_extent: Option<f64>,
    pub n_modes: Option<usize>,
    pub n_cells: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Invalid(format!("config {}: {e}", path.display())))
    }
}

/// Fully resolved parameters of one run. `threads` and `out` are excluded from
/// the hash since they do not affect results.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub measure: SpectralMeasureSpec,
    pub point: FieldPoint,
    pub grid: GridSpec,
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
    /// Subcommand options.
    pub params: serde_json::Value,
    #[serde(skip)]
    pub threads: Option<usize>,
    #[serde(skip)]
    pub out: PathBuf,
}

impl RunConfig {
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

struct Defaults {
    measure: MeasureKind,
    point: FieldPoint,
    grid: GridSpec,
    samples: usize,
    tol: f64,
}

fn defaults(command: &Command) -> Defaults {
    let grid = GridSpec { dt: 0.05, t_steps: 20, x_extent: 4.0, n_modes: 64, seed: 0, n_cells: 64 };
    let base = Defaults { measure: MeasureKind::Riesz, point: FieldPoint::new(1.0, 0.0, 0.0), grid, samples: 10_000, tol: 1e-9 };
    match command {
        Command::WeakCheck => Defaults { tol: 1e-3, ..base },
        Command::Bounds(_) => Defaults { point: FieldPoint::new(1.0, 0.5, 0.0), ..base },
        Command::Simulate(_) => Defaults { tol: 0.05, ..base },
        Command::Continuity(_) => Defaults {
            measure: MeasureKind::Gaussian,
            point: FieldPoint::new(0.5, 0.5, 0.0),
            grid: GridSpec { dt: 0.003125, t_steps: 224, x_extent: 4.0, n_modes: 16, seed: 0, n_cells: 8 },
            samples: 2000,
            tol: 2e-4,
        },
        Command::CovarianceCheck => Defaults {
            grid: GridSpec { dt: 0.05, t_steps: 20, x_extent: 6.0, n_modes: 32, seed: 0, n_cells: 96 },
            ..base
        },
        _ => base,
    }
}

pub fn resolve(g: &GlobalArgs, command: &Command, params: serde_json::Value) -> Result<RunConfig, CliError> {
    let file = match &g.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let d = defaults(command);
    let kind = g.measure.or(file.measure.kind).unwrap_or(d.measure);
    let beta = g.beta.or(file.measure.beta).unwrap_or(0.5);
    let ell = g.ell.or(file.measure.ell).unwrap_or(1.0);
    let measure = match kind {
        MeasureKind::Riesz => SpectralMeasureSpec::RieszPower { beta },
        MeasureKind::Gaussian => SpectralMeasureSpec::GaussianDensity { ell },
        MeasureKind::White => SpectralMeasureSpec::WhiteNoise,
        MeasureKind::Table => {
            let path = g.table.clone().or(file.measure.table).ok_or_else(|| {
                CliError::Invalid("--measure table needs --table FILE".into())
            })?;
            SpectralMeasureSpec::TabulatedRadial { samples: read_table(&path)? }
        }
    };
    measure.validate()?;

    let point = FieldPoint::new(
        g.t.or(file.point.t).unwrap_or(d.point.t),
        g.x1.or(file.point.x1).unwrap_or(d.point.x1),
        g.x2.or(file.point.x2).unwrap_or(d.point.x2),
    );
    let seed = g.seed.or(file.run.seed).unwrap_or(2024);
    let grid = GridSpec {
        dt: g.dt.or(file.grid.dt).unwrap_or(d.grid.dt),
        t_steps: g.t_steps.or(file.grid.t_steps).unwrap_or(d.grid.t_steps),
        x_extent: g.x_extent.or(file.grid.x_extent).unwrap_or(d.grid.x_extent),
        n_modes: g.n_modes.or(file.grid.n_modes).unwrap_or(d.grid.n_modes),
        seed,
        n_cells: g.n_cells.or(file.grid.n_cells).unwrap_or(d.grid.n_cells),
    };
    let tol = g.tol.or(file.run.tol).unwrap_or(d.tol);
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(CliError::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    let threads = g.threads.or(file.run.threads);
    if threads == Some(0) {
        return Err(CliError::Invalid("--threads must be at least 1".into()));
    }
    Ok(RunConfig {
        command: command_name(command).into(),
        measure,
        point,
        grid,
        samples: g.samples.or(file.run.samples).unwrap_or(d.samples),
        seed,
        tol,
        params,
        threads,
        out: g.out.clone().or(file.run.out).unwrap_or_else(|| PathBuf::from("out")),
    })
}

pub fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Gamma(_) => "gamma",
        Command::WeakCheck => "weak-check",
        Command::FourierCheck(_) => "fourier-check",
        Command::Bounds(_) => "bounds",
        Command::Admissibility => "admissibility",
        Command::Simulate(_) => "simulate",
        Command::Continuity(_) => "continuity",
        Command::CovarianceCheck => "covariance-check",
    }
}

#[derive(Deserialize)]
struct TableRow {
    radius: f64,
    density: f64,
}

/// Reads `radius,density` rows; `#` lines are comments.
pub fn read_table(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Invalid(format!("table {}: {e}", path.display())))?;
    rdr.deserialize::<TableRow>()
        .map(|r| {
            r.map(|row| (row.radius, row.density))
                .map_err(|e| CliError::Invalid(format!("table {}: {e}", path.display())))
        })
        .collect()
}
