//! Density-to-potential inversion for the interacting chain.
//!
//! Fixed-point iteration on the external potential:
//! `v_i <- v_i + mixing * (n_i - n_i^target) |E| / <n_i^2>`, where `n`, `E`
//! and `<n_i^2>` come from the interacting ground state in the current `v`.

use std::path::Path;

use serde::Serialize;

use crate::eigensolver::EigenOptions;
use crate::error::{Error, Result};
use crate::hamiltonian::{HubbardOperator, HubbardSystem, OperatorOptions};
use crate::hilbert::{ManyBodyState, SiteField, SpinSector};
use crate::ks::{solve_ks, KsOptions, KsResult};

const TARGET_SUM_TOL: f64 = 1e-6;
/// Recovery of the mixing after each accepted step.
const MIXING_GROWTH: f64 = 1.1;

#[derive(Debug, Clone)]
pub struct InversionOptions {
    /// Stop when the mean per-site density error falls below this.
    pub threshold: f64,
    pub max_iter: usize,
    /// Weight of the new update; `1 - mixing` of the previous potential is kept.
    pub mixing: f64,
    /// A step that raises the density error is retried with half the mixing,
    /// down to this floor.
    pub min_mixing: f64,
    /// Target occupations this close to 0 (or 2) are rejected.
    pub empty_floor: f64,
    /// Below this `|E|` the iterate is shifted by a constant so that `E = -1`.
    pub energy_floor: f64,
    /// Start each eigensolve from the previous ground state.
    pub warm_start: bool,
    pub eigen: EigenOptions,
    pub operator: OperatorOptions,
}

impl Default for InversionOptions {
    fn default() -> Self {
        Self {
            threshold: 1e-8,
            max_iter: 50_000,
            mixing: 0.2,
            min_mixing: 0.2 / 32.0,
            empty_floor: 1e-6,
            energy_floor: 0.5,
            warm_start: true,
            eigen: EigenOptions::default(),
            operator: OperatorOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub average_error: f64,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct InversionResult {
    /// Potential with `sum v = 0`.
    pub v: SiteField,
    pub state: ManyBodyState,
    /// Ground-state energy in the gauge of `v`.
    pub energy: f64,
    pub iterations: usize,
    pub final_error: f64,
    pub trace: Vec<TraceRow>,
}

impl InversionResult {
    pub fn write_trace(&self, path: &Path) -> Result<()> {
        write_trace(&self.trace, path)
    }
}

pub fn write_trace(trace: &[TraceRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in trace {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn check_target(target: &SiteField, sector: SpinSector, floor: f64) -> Result<()> {
    if target.len() != sector.d() {
        return Err(Error::DimensionMismatch {
            expected: sector.d(),
            actual: target.len(),
        });
    }
    let n = sector.n_particles() as f64;
    if (target.sum() - n).abs() > TARGET_SUM_TOL {
        return Err(Error::InvalidInput(format!(
            "target density sums to {}, sector has {n} particles",
            target.sum()
        )));
    }
    for (site, &value) in target.iter().enumerate() {
        if !(0.0..=2.0).contains(&value) {
            return Err(Error::InvalidInput(format!(
                "target density {value} at site {site} outside [0, 2]"
            )));
        }
        if value <= floor || value >= 2.0 - floor {
            return Err(Error::IllConditionedTarget { site, value, floor });
        }
    }
    Ok(())
}

fn mean_abs_error(a: &SiteField, b: &SiteField) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// External potential whose interacting ground state has density `target`.
pub fn invert_density(
    target: &SiteField,
    u: f64,
    t: f64,
    sector: SpinSector,
    v0: &SiteField,
    opts: &InversionOptions,
) -> Result<InversionResult> {
    check_target(target, sector, opts.empty_floor)?;
    if v0.len() != sector.d() {
        return Err(Error::DimensionMismatch {
            expected: sector.d(),
            actual: v0.len(),
        });
    }
    let n_particles = sector.n_particles() as f64;
    // The step scale |E| depends on the gauge; iterating at min v = 0 makes the
    // trajectory independent of constant offsets in v0.
    let mut v = v0.as_slice().to_vec();
    let system = HubbardSystem::new(t, u, SiteField::new(v.clone())?, sector)?;
    let mut op = HubbardOperator::new(&system, opts.operator)?;
    let mut eigen = opts.eigen.clone();
    let mut trace = Vec::new();
    let mut best = f64::INFINITY;
    let mut mixing = opts.mixing;
    let min_mixing = opts.min_mixing.min(opts.mixing);
    // Last accepted iterate: potential, update direction and its error.
    let mut accepted: Option<(Vec<f64>, Vec<f64>, f64)> = None;

    for iteration in 0..=opts.max_iter {
        let floor = v.iter().copied().fold(f64::INFINITY, f64::min);
        v.iter_mut().for_each(|x| *x -= floor);
        let field = SiteField::new(v.clone())?;
        op.set_potential(&field)?;
        let gs = op.ground_state(&eigen)?;
        let moments = op.basis().site_moments(&gs.state)?;
        let density = &moments.density.total;
        let error = mean_abs_error(density, target);
        best = best.min(error);
        trace.push(TraceRow {
            iteration,
            average_error: error,
            energy: gs.energy,
        });

        if error < opts.threshold {
            let mean = field.mean();
            return Ok(InversionResult {
                v: field.gauge_fixed(),
                state: gs.state,
                energy: gs.energy - n_particles * mean,
                iterations: iteration,
                final_error: error,
                trace,
            });
        }
        if iteration == opts.max_iter {
            break;
        }

        // Backtrack: a step that raised the error is retried from the last
        // accepted potential with half the mixing. At the floor every step is taken.
        if let Some((base, direction, base_error)) = &accepted {
            if error > *base_error && mixing > min_mixing {
                mixing = (mixing * 0.5).max(min_mixing);
                v = base.iter().zip(direction).map(|(b, s)| b + mixing * s).collect();
                continue;
            }
        }

        let mut energy = gs.energy;
        if energy.abs() < opts.energy_floor {
            // A constant shift leaves the state unchanged and moves E by N * shift.
            let shift = (-1.0 - energy) / n_particles;
            v.iter_mut().for_each(|x| *x += shift);
            energy += n_particles * shift;
            log::debug!("inversion iteration {iteration}: energy guard shift {shift:.3e}");
        }
        let mut direction = Vec::with_capacity(v.len());
        for i in 0..v.len() {
            let nsq = moments.nsq[i];
            if !(nsq > 0.0) {
                return Err(Error::Numeric(format!(
                    "vanishing <n^2> at site {i} during inversion"
                )));
            }
            direction.push((density[i] - target[i]) * energy.abs() / nsq);
        }
        let base = v.clone();
        v = base.iter().zip(&direction).map(|(b, s)| b + mixing * s).collect();
        accepted = Some((base, direction, error));
        mixing = (mixing * MIXING_GROWTH).min(opts.mixing);
        if opts.warm_start {
            eigen.start = Some(gs.state.into_amplitudes());
        }
    }
    Err(Error::Convergence {
        what: "density inversion",
        iterations: opts.max_iter,
        best,
    })
}

#[derive(Debug, Clone, Default)]
pub struct IldaOptions {
    pub ks: KsOptions,
    pub inversion: InversionOptions,
}

/// KS-LDA density of `system`, then the interacting potential reproducing it.
pub fn build_ilda(system: &HubbardSystem, opts: &IldaOptions) -> Result<(KsResult, InversionResult)> {
    let ks = solve_ks(system, &opts.ks)?;
    let inv = invert_density(
        &ks.density_total,
        system.u,
        system.t,
        system.sector,
        &system.v,
        &opts.inversion,
    )?;
    Ok((ks, inv))
}
