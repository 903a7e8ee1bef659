//! Lattice Kohn-Sham solver with the BALDA exchange-correlation potential.

use nalgebra::DMatrix;

use crate::balda::Balda;
use crate::eigensolver::dense_spectrum;
use crate::error::{Error, Result};
use crate::hamiltonian::HubbardSystem;
use crate::hilbert::SiteField;

#[derive(Debug, Clone)]
pub struct KsOptions {
    /// Convergence threshold on the largest per-site density change.
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the output density mixed into the next input.
    pub mixing: f64,
    /// Floor for the mixing fraction after repeated halving.
    pub min_mixing: f64,
    /// Minimum frontier orbital gap for an integer occupation.
    pub degeneracy_tol: f64,
}

impl Default for KsOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 20_000,
            mixing: 0.2,
            min_mixing: 0.025,
            degeneracy_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KsResult {
    pub density_total: SiteField,
    pub density_up: SiteField,
    pub density_down: SiteField,
    pub v_eff: SiteField,
    /// Full single-particle spectrum of the final effective Hamiltonian, ascending.
    pub orbital_energies: Vec<f64>,
    pub scf_iterations: usize,
    pub converged: bool,
}

/// Eigenpairs of the open chain with hopping `-t` and diagonal `v_eff`.
pub struct Orbitals {
    pub energies: Vec<f64>,
    /// Column `k` is orbital `k`.
    pub vectors: DMatrix<f64>,
}

impl Orbitals {
    /// `sum_{k < count} |phi_k(i)|^2` per site.
    pub fn density(&self, count: usize) -> Vec<f64> {
        let d = self.vectors.nrows();
        (0..d)
            .map(|i| (0..count).map(|k| self.vectors[(i, k)].powi(2)).sum())
            .collect()
    }
}

pub fn single_particle_solve(v_eff: &SiteField, d: usize, t: f64) -> Result<Orbitals> {
    if v_eff.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: v_eff.len(),
        });
    }
    let mut h = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        h[(i, i)] = v_eff[i];
        if i + 1 < d {
            h[(i, i + 1)] = -t;
            h[(i + 1, i)] = -t;
        }
    }
    let spectrum = dense_spectrum(&h)?;
    Ok(Orbitals {
        energies: spectrum.values,
        vectors: spectrum.vectors,
    })
}

fn effective_potential(system: &HubbardSystem, balda: &Balda, density: &[f64]) -> Result<SiteField> {
    let mut v = Vec::with_capacity(density.len());
    for (i, &n) in density.iter().enumerate() {
        v.push(system.v[i] + 0.5 * system.u * n + balda.vxc(n.clamp(0.0, 2.0))?);
    }
    SiteField::new(v)
}

fn frontier_gap(energies: &[f64], filled: usize) -> Option<f64> {
    (filled > 0 && filled < energies.len()).then(|| energies[filled] - energies[filled - 1])
}

/// Self-consistent KS-LDA ground-state density.
pub fn solve_ks(system: &HubbardSystem, opts: &KsOptions) -> Result<KsResult> {
    let balda = Balda::new(system.u, system.t)?;
    solve_ks_with(system, &balda, opts)
}

/// [`solve_ks`] with a prebuilt functional, which must match `system.u` and `system.t`.
pub fn solve_ks_with(system: &HubbardSystem, balda: &Balda, opts: &KsOptions) -> Result<KsResult> {
    if balda.u() != system.u || balda.t() != system.t {
        return Err(Error::InvalidInput(format!(
            "functional built for U={}, t={} used on U={}, t={}",
            balda.u(),
            balda.t(),
            system.u,
            system.t
        )));
    }
    let d = system.d();
    let (n_up, n_down) = (system.sector.n_up(), system.sector.n_down());
    let n_total = (n_up + n_down) as f64;

    let mut density = vec![n_total / d as f64; d];
    let mut mixing = opts.mixing;
    let mut previous = f64::INFINITY;
    let mut best = f64::INFINITY;

    for iteration in 1..=opts.max_iter {
        let v_eff = effective_potential(system, balda, &density)?;
        let orbitals = single_particle_solve(&v_eff, d, system.t)?;
        let up = orbitals.density(n_up);
        let down = if n_down == n_up {
            up.clone()
        } else {
            orbitals.density(n_down)
        };
        let output: Vec<f64> = up.iter().zip(&down).map(|(a, b)| a + b).collect();
        let residual = output
            .iter()
            .zip(&density)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        best = best.min(residual);

        if residual < opts.tol {
            for filled in [n_up, n_down] {
                if let Some(gap) = frontier_gap(&orbitals.energies, filled) {
                    if gap < opts.degeneracy_tol {
                        return Err(Error::Degeneracy {
                            what: "Kohn-Sham frontier orbital",
                            gap,
                        });
                    }
                }
            }
            return Ok(KsResult {
                density_total: SiteField::new(output)?,
                density_up: SiteField::new(up)?,
                density_down: SiteField::new(down)?,
                v_eff,
                orbital_energies: orbitals.energies,
                scf_iterations: iteration,
                converged: true,
            });
        }

        if residual > previous && mixing > opts.min_mixing {
            mixing = (0.5 * mixing).max(opts.min_mixing);
            log::debug!("KS mixing reduced to {mixing} at iteration {iteration}");
        }
        previous = residual;
        for (n, out) in density.iter_mut().zip(&output) {
            *n += mixing * (out - *n);
        }
    }
    Err(Error::Convergence {
        what: "Kohn-Sham SCF",
        iterations: opts.max_iter,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::SpinSector;

    fn system(d: usize, n_up: usize, n_down: usize, u: f64, v: Vec<f64>) -> HubbardSystem {
        let sector = SpinSector::new(d, n_up, n_down).unwrap();
        HubbardSystem::new(1.0, u, SiteField::new(v).unwrap(), sector).unwrap()
    }

    #[test]
    fn three_site_spectrum() {
        let o = single_particle_solve(&SiteField::zeros(3), 3, 1.0).unwrap();
        let s = 2f64.sqrt();
        assert_close!(o.energies[0], -s, 1e-14);
        assert_close!(o.energies[1], 0.0, 1e-14);
        assert_close!(o.energies[2], s, 1e-14);
    }

    #[test]
    fn constant_shift_moves_spectrum() {
        let v = SiteField::new(vec![0.3, -1.0, 0.7, 2.0]).unwrap();
        let a = single_particle_solve(&v, 4, 1.0).unwrap();
        let b = single_particle_solve(&v.shifted(2.5), 4, 1.0).unwrap();
        for (x, y) in a.energies.iter().zip(&b.energies) {
            assert_close!(x + 2.5, *y, 1e-12);
        }
        for k in 0..4 {
            let dot: f64 = (0..4).map(|i| a.vectors[(i, k)] * b.vectors[(i, k)]).sum();
            assert_close!(dot.abs(), 1.0, 1e-12);
        }
    }

    #[test]
    fn single_site() {
        let o = single_particle_solve(&SiteField::constant(1, -0.4), 1, 1.0).unwrap();
        assert_eq!(o.energies, vec![-0.4]);
        assert!(single_particle_solve(&SiteField::zeros(3), 4, 1.0).is_err());
    }

    #[test]
    fn symmetric_dimer_at_half_filling() {
        let r = solve_ks(&system(2, 1, 1, 4.0, vec![0.0, 0.0]), &KsOptions::default()).unwrap();
        assert!(r.converged);
        assert_close!(r.density_total[0], 1.0, 1e-12);
        assert_close!(r.density_total[1], 1.0, 1e-12);
        assert_close!(r.v_eff[0], r.v_eff[1], 1e-12);
    }

    #[test]
    fn harmonic_zero_curvature_normalized() {
        let r = solve_ks(&system(8, 1, 1, 2.0, vec![0.0; 8]), &KsOptions::default()).unwrap();
        assert!(r.converged);
        assert_close!(r.density_total.sum(), 2.0, 1e-8);
        assert!(r.density_total.iter().all(|&n| (0.0..=2.0).contains(&n)));
    }

    #[test]
    fn spin_channels_identical_when_unpolarized() {
        let r = solve_ks(
            &system(6, 2, 2, 4.0, vec![0.0, 1.0, -0.5, 0.2, 0.0, 0.3]),
            &KsOptions::default(),
        )
        .unwrap();
        assert_eq!(r.density_up, r.density_down);
    }

    #[test]
    fn polarized_sector_fills_more_up_orbitals() {
        let r = solve_ks(&system(5, 3, 2, 4.0, vec![0.0; 5]), &KsOptions::default()).unwrap();
        assert_close!(r.density_up.sum(), 3.0, 1e-10);
        assert_close!(r.density_down.sum(), 2.0, 1e-10);
    }

    #[test]
    fn mismatched_functional_rejected() {
        let balda = Balda::new(2.0, 1.0).unwrap();
        let s = system(4, 1, 1, 4.0, vec![0.0; 4]);
        assert!(solve_ks_with(&s, &balda, &KsOptions::default()).is_err());
    }

    #[test]
    fn iteration_cap_reports_convergence_error() {
        let opts = KsOptions {
            max_iter: 1,
            ..KsOptions::default()
        };
        let s = system(6, 2, 1, 4.0, vec![0.0, 3.0, 0.0, 0.0, -1.0, 0.0]);
        match solve_ks(&s, &opts) {
            Err(Error::Convergence { iterations: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
