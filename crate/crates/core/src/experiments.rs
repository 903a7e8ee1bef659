//! Scenario runners: potential builders, grid sweeps and CSV output.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ScenarioConfig, ScenarioKind, SolverSection};
use crate::eigensolver::EigenOptions;
use crate::error::{Error, Result};
use crate::hamiltonian::{GroundState, HubbardOperator, HubbardSystem, OperatorOptions};
use crate::hilbert::{random_amplitudes, ManyBodyState, SiteField, SpinSector};
use crate::inversion::{invert_density, InversionOptions};
use crate::ks::{solve_ks, KsOptions};
use crate::metrics::{density_distance, distance_report, wavefunction_distance, DistanceReport};

/// Sector dimensions above which the default Lanczos tolerance is relaxed.
const LARGE_SECTOR: usize = 200_000;
const HUGE_SECTOR: usize = 5_000_000;
const SAMPLE_CHUNK: usize = 4096;

/// `v_j = k (j - (d-1)/2)^2`.
pub fn harmonic_potential(d: usize, k: f64) -> Result<SiteField> {
    if !(k >= 0.0) || !k.is_finite() {
        return Err(Error::InvalidInput(format!("curvature must be finite and >= 0, got {k}")));
    }
    let centre = (d as f64 - 1.0) / 2.0;
    SiteField::new((0..d).map(|j| k * (j as f64 - centre).powi(2)).collect())
}

/// `V` on the listed sites, zero elsewhere.
pub fn impurity_potential(d: usize, sites: &[usize], v: f64) -> Result<SiteField> {
    let mut field = vec![0.0; d];
    let mut seen = vec![false; d];
    for &s in sites {
        if s >= d {
            return Err(Error::InvalidInput(format!("impurity site {s} outside [0, {d})")));
        }
        if std::mem::replace(&mut seen[s], true) {
            return Err(Error::InvalidInput(format!("impurity site {s} listed twice")));
        }
        field[s] = v;
    }
    SiteField::new(field)
}

/// Numerical settings for one grid point.
#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub eigen: EigenOptions,
    pub operator: OperatorOptions,
    pub ks: KsOptions,
    pub inversion: InversionOptions,
    pub run_inversion: bool,
}

/// Residual tolerance (relative to max(1, |E|)) near the rounding floor of
/// the blocked inner products at each size.
pub fn default_lanczos_tol(dim: usize) -> f64 {
    if dim > HUGE_SECTOR {
        1e-10
    } else if dim > LARGE_SECTOR {
        1e-12
    } else {
        1e-14
    }
}

impl SolverSettings {
    pub fn for_sector(section: &SolverSection, sector: SpinSector, run_inversion: bool) -> Self {
        let dim = sector.dimension_u128() as usize;
        let eigen = EigenOptions {
            tol: section.lanczos_tol.unwrap_or(default_lanczos_tol(dim)),
            max_iter: section.lanczos_max_iter,
            krylov_memory: section.krylov_memory_mib << 20,
            ..EigenOptions::default()
        };
        let operator = OperatorOptions {
            max_dimension: section.max_dim,
            ..OperatorOptions::default()
        };
        let ks = KsOptions {
            tol: section.ks_tol,
            max_iter: section.ks_max_iter,
            ..KsOptions::default()
        };
        let inversion = InversionOptions {
            threshold: section.inversion_threshold,
            max_iter: section.inversion_max_iter,
            mixing: section.inversion_mixing,
            empty_floor: section.empty_floor,
            eigen: eigen.clone(),
            operator,
            ..InversionOptions::default()
        };
        Self {
            eigen,
            operator,
            ks,
            inversion,
            run_inversion,
        }
    }
}

/// One point of a sweep.
#[derive(Debug, Clone)]
pub struct WorkItem {
    pub u: f64,
    pub sector: SpinSector,
    pub param_name: &'static str,
    pub param_value: f64,
    pub v: SiteField,
}

/// One CSV row. Missing values are written as empty fields.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub d: usize,
    pub t: f64,
    #[serde(rename = "U")]
    pub u: f64,
    pub n_up: usize,
    pub n_down: usize,
    pub param_name: String,
    pub param_value: f64,
    pub d_rho_scaled: Option<f64>,
    pub d_psi_scaled: Option<f64>,
    pub d_va_scaled: Option<f64>,
    pub d_vb_scaled: Option<f64>,
    pub exact_energy: Option<f64>,
    pub lda_converged: bool,
    pub inversion_converged: Option<bool>,
    pub inversion_iters: Option<usize>,
    pub wall_ms: u64,
    #[serde(skip)]
    pub details: PointDetails,
}

/// Intermediate results kept for inspection; not written to CSV.
#[derive(Debug, Clone, Default)]
pub struct PointDetails {
    pub v: Option<SiteField>,
    pub exact_density: Option<SiteField>,
    pub lda_density: Option<SiteField>,
    pub ilda_density: Option<SiteField>,
    pub ilda_potential: Option<SiteField>,
    pub report: Option<DistanceReport>,
    /// First failure encountered at this point.
    pub error: Option<String>,
}

/// Run-time overrides, typically from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub max_dim: Option<usize>,
    pub inversion: Option<bool>,
    pub trace_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

fn effective_section(config: &ScenarioConfig, opts: &RunOptions) -> SolverSection {
    let mut s = config.solver.clone();
    if let Some(m) = opts.max_dim {
        s.max_dim = m;
    }
    s
}

pub fn work_items(config: &ScenarioConfig) -> Result<Vec<WorkItem>> {
    let sectors = config.sectors()?;
    let mut items = Vec::new();
    for u in config.u_values() {
        match config.kind {
            ScenarioKind::Homogeneous => {
                for &sector in &sectors {
                    items.push(WorkItem {
                        u,
                        sector,
                        param_name: "d",
                        param_value: sector.d() as f64,
                        v: SiteField::zeros(sector.d()),
                    });
                }
            }
            ScenarioKind::Impurities => {
                let imp = config
                    .impurities
                    .as_ref()
                    .ok_or_else(|| Error::config("impurities", "missing"))?;
                let sector = sectors[0];
                for value in imp.v.values("impurities.V")? {
                    items.push(WorkItem {
                        u,
                        sector,
                        param_name: "V",
                        param_value: value,
                        v: impurity_potential(sector.d(), &imp.sites, value)?,
                    });
                }
            }
            ScenarioKind::Harmonic => {
                let h = config
                    .harmonic
                    .as_ref()
                    .ok_or_else(|| Error::config("harmonic", "missing"))?;
                let sector = sectors[0];
                for k in h.k.values("harmonic.k")? {
                    items.push(WorkItem {
                        u,
                        sector,
                        param_name: "k",
                        param_value: k,
                        v: harmonic_potential(sector.d(), k)?,
                    });
                }
            }
            ScenarioKind::RandomSample => {
                return Err(Error::config("kind", "random-sample scenarios are run by sample_random"))
            }
        }
    }
    Ok(items)
}

/// Exact ground state of `system`.
pub fn exact_ground_state(system: &HubbardSystem, settings: &SolverSettings) -> Result<(HubbardOperator, GroundState)> {
    let op = HubbardOperator::new(system, settings.operator)?;
    let gs = op.ground_state(&settings.eigen)?;
    Ok((op, gs))
}

fn trace_path(dir: &Path, scenario: &str, item: &WorkItem) -> PathBuf {
    dir.join(format!(
        "{scenario}_U{}_d{}_{}{}.csv",
        item.u,
        item.sector.d(),
        item.param_name,
        item.param_value
    ))
}

/// Exact solve, KS-LDA, optional inversion and distances for one grid point.
/// Solver failures are recorded in the row rather than returned.
pub fn compute_point(
    scenario: &str,
    t: f64,
    item: &WorkItem,
    settings: &SolverSettings,
    trace_dir: Option<&Path>,
) -> ResultRow {
    let start = Instant::now();
    let mut row = ResultRow {
        scenario: scenario.to_string(),
        d: item.sector.d(),
        t,
        u: item.u,
        n_up: item.sector.n_up(),
        n_down: item.sector.n_down(),
        param_name: item.param_name.to_string(),
        param_value: item.param_value,
        d_rho_scaled: None,
        d_psi_scaled: None,
        d_va_scaled: None,
        d_vb_scaled: None,
        exact_energy: None,
        lda_converged: false,
        inversion_converged: None,
        inversion_iters: None,
        wall_ms: 0,
        details: PointDetails {
            v: Some(item.v.clone()),
            ..PointDetails::default()
        },
    };
    if let Err(e) = fill_point(&mut row, t, item, settings, trace_dir) {
        log::warn!(
            "{scenario} U={} {}={}: {e}",
            item.u,
            item.param_name,
            item.param_value
        );
        row.details.error = Some(e.to_string());
    }
    row.wall_ms = start.elapsed().as_millis() as u64;
    row
}

fn fill_point(
    row: &mut ResultRow,
    t: f64,
    item: &WorkItem,
    settings: &SolverSettings,
    trace_dir: Option<&Path>,
) -> Result<()> {
    let system = HubbardSystem::new(t, item.u, item.v.clone(), item.sector)?;
    let n = item.sector.n_particles() as f64;
    let (op, gs) = exact_ground_state(&system, settings)?;
    row.exact_energy = Some(gs.energy);
    let exact_density = op.basis().density(&gs.state)?.total;
    drop(op);
    row.details.exact_density = Some(exact_density.clone());

    let ks = solve_ks(&system, &settings.ks)?;
    row.lda_converged = ks.converged;
    let rho = density_distance(&exact_density, &ks.density_total, n)?;
    row.d_rho_scaled = Some(rho.scaled);
    row.details.lda_density = Some(ks.density_total.clone());

    if !settings.run_inversion {
        return Ok(());
    }
    row.inversion_converged = Some(false);
    let inv = invert_density(
        &ks.density_total,
        item.u,
        t,
        item.sector,
        &item.v,
        &settings.inversion,
    )?;
    if let Some(dir) = trace_dir {
        inv.write_trace(&trace_path(dir, &row.scenario, item))?;
    }
    row.inversion_converged = Some(true);
    row.inversion_iters = Some(inv.iterations);

    let ilda_op = HubbardOperator::new(&HubbardSystem::new(t, item.u, inv.v.clone(), item.sector)?, settings.operator)?;
    let ilda_density = ilda_op.basis().density(&inv.state)?.total;
    let report = distance_report(
        (&gs.state, &inv.state),
        (&exact_density, &ks.density_total),
        (&item.v, &inv.v),
    )?;
    row.d_psi_scaled = Some(report.psi.scaled);
    row.d_va_scaled = Some(report.va.scaled);
    row.d_vb_scaled = Some(report.vb.scaled);
    row.details.ilda_density = Some(ilda_density);
    row.details.ilda_potential = Some(inv.v);
    row.details.report = Some(report);
    Ok(())
}

/// Runs every grid point of a sweep scenario; rows come back in grid order.
pub fn run_scenario(config: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<ResultRow>> {
    let section = effective_section(config, opts);
    config.validate_with_max_dim(section.max_dim)?;
    let items = work_items(config)?;
    if let Some(dir) = &opts.trace_dir {
        std::fs::create_dir_all(dir)?;
    }
    let name = config.name().to_string();
    let rows = items
        .par_iter()
        .map(|item| {
            let run_inversion = opts
                .inversion
                .map_or(true, |on| on)
                && section.inversion.enabled_for(item.sector.d());
            let settings = SolverSettings::for_sector(&section, item.sector, run_inversion);
            compute_point(&name, config.t, item, &settings, opts.trace_dir.as_deref())
        })
        .collect();
    Ok(rows)
}

pub fn write_rows<W: Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record(RESULT_HEADER)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub const RESULT_HEADER: [&str; 17] = [
    "scenario",
    "d",
    "t",
    "U",
    "n_up",
    "n_down",
    "param_name",
    "param_value",
    "d_rho_scaled",
    "d_psi_scaled",
    "d_va_scaled",
    "d_vb_scaled",
    "exact_energy",
    "lda_converged",
    "inversion_converged",
    "inversion_iters",
    "wall_ms",
];

/// Mean distances of random states from the exact ground state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleSummary {
    pub samples: usize,
    pub mean_d_psi: f64,
    pub stderr_d_psi: f64,
    pub mean_d_rho: f64,
    pub stderr_d_rho: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: usize,
    psi: f64,
    psi_sq: f64,
    rho: f64,
    rho_sq: f64,
}

impl Moments {
    fn merge(self, o: Moments) -> Moments {
        Moments {
            count: self.count + o.count,
            psi: self.psi + o.psi,
            psi_sq: self.psi_sq + o.psi_sq,
            rho: self.rho + o.rho,
            rho_sq: self.rho_sq + o.rho_sq,
        }
    }
}

fn mean_and_stderr(sum: f64, sum_sq: f64, m: usize) -> (f64, f64) {
    let mf = m as f64;
    let mean = sum / mf;
    if m < 2 {
        return (mean, f64::NAN);
    }
    let var = ((sum_sq - sum * mean) / (mf - 1.0)).max(0.0);
    (mean, (var / mf).sqrt())
}

/// Distances between the exact ground state (`v = 0`) and `samples` random
/// normalized states with amplitudes uniform on `[-1, 1]`.
///
/// Samples are drawn in fixed chunks, chunk `c` from ChaCha8 stream `c` of
/// `seed`, so the result does not depend on the thread count.
pub fn sample_random(
    sector: SpinSector,
    u: f64,
    t: f64,
    samples: usize,
    seed: u64,
    settings: &SolverSettings,
) -> Result<SampleSummary> {
    if samples == 0 {
        return Err(Error::InvalidInput("at least one sample required".into()));
    }
    let system = HubbardSystem::new(t, u, SiteField::zeros(sector.d()), sector)?;
    let (op, gs) = exact_ground_state(&system, settings)?;
    let basis = op.basis();
    let exact_density = basis.density(&gs.state)?.total;
    let n = sector.n_particles() as f64;
    let dim = basis.dim();

    let chunks = samples.div_ceil(SAMPLE_CHUNK);
    let partial: Result<Vec<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = SAMPLE_CHUNK.min(samples - c * SAMPLE_CHUNK);
            let mut m = Moments {
                count,
                ..Moments::default()
            };
            for _ in 0..count {
                let state = ManyBodyState::from_amplitudes(sector, random_amplitudes(dim, &mut rng))?;
                let psi = wavefunction_distance(&gs.state, &state)?.scaled;
                let density = basis.density(&state)?.total;
                let rho = density_distance(&exact_density, &density, n)?.scaled;
                m.psi += psi;
                m.psi_sq += psi * psi;
                m.rho += rho;
                m.rho_sq += rho * rho;
            }
            Ok(m)
        })
        .collect();
    let total = partial?.into_iter().fold(Moments::default(), Moments::merge);
    let (mean_d_psi, stderr_d_psi) = mean_and_stderr(total.psi, total.psi_sq, total.count);
    let (mean_d_rho, stderr_d_rho) = mean_and_stderr(total.rho, total.rho_sq, total.count);
    Ok(SampleSummary {
        samples,
        mean_d_psi,
        stderr_d_psi,
        mean_d_rho,
        stderr_d_rho,
    })
}

/// One row of a random-sampling CSV.
#[derive(Debug, Clone, Serialize)]
pub struct SampleRow {
    pub scenario: String,
    pub d: usize,
    pub t: f64,
    #[serde(rename = "U")]
    pub u: f64,
    pub n_up: usize,
    pub n_down: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub summary: SampleSummary,
    pub wall_ms: u64,
}

/// Runs a random-sample scenario, one row per (U, sector).
pub fn run_sampling(config: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<SampleRow>> {
    let section = effective_section(config, opts);
    config.validate_with_max_dim(section.max_dim)?;
    let random = config
        .random
        .as_ref()
        .ok_or_else(|| Error::config("random", "missing"))?;
    let seed = opts.seed.unwrap_or(random.seed);
    let mut rows = Vec::new();
    for u in config.u_values() {
        for sector in config.sectors()? {
            let start = Instant::now();
            let settings = SolverSettings::for_sector(&section, sector, false);
            let summary = sample_random(sector, u, config.t, random.samples, seed, &settings)?;
            rows.push(SampleRow {
                scenario: config.name().to_string(),
                d: sector.d(),
                t: config.t,
                u,
                n_up: sector.n_up(),
                n_down: sector.n_down(),
                seed,
                summary,
                wall_ms: start.elapsed().as_millis() as u64,
            });
        }
    }
    Ok(rows)
}

pub fn write_sample_rows<W: Write>(rows: &[SampleRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Output of either scenario family.
#[derive(Debug, Clone)]
pub enum ScenarioOutput {
    Sweep(Vec<ResultRow>),
    Samples(Vec<SampleRow>),
}

impl ScenarioOutput {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        match self {
            ScenarioOutput::Sweep(rows) => write_rows(rows, writer),
            ScenarioOutput::Samples(rows) => write_sample_rows(rows, writer),
        }
    }

    /// True if any grid point failed.
    pub fn has_failures(&self) -> bool {
        match self {
            ScenarioOutput::Sweep(rows) => rows.iter().any(|r| r.details.error.is_some()),
            ScenarioOutput::Samples(_) => false,
        }
    }
}

pub fn run_config(config: &ScenarioConfig, opts: &RunOptions) -> Result<ScenarioOutput> {
    match config.kind {
        ScenarioKind::RandomSample => run_sampling(config, opts).map(ScenarioOutput::Samples),
        _ => run_scenario(config, opts).map(ScenarioOutput::Sweep),
    }
}
