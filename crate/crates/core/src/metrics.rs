//! Distances between wave functions, densities and potentials, each with a
//! scaled form in `[0, 1]`.
//!
//! Potential distances are taken over gauge classes: `Δv = v1 - v2` is shifted
//! by the constant `c` that minimizes the metric, and `c` is reported.

use crate::error::{Error, Result};
use crate::hilbert::{overlap, ManyBodyState, SiteField};

const PARTICLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distance {
    pub raw: f64,
    pub scaled: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialDistance {
    pub raw: f64,
    pub scaled: f64,
    /// Minimizing constant: the metric is evaluated on `v1 - v2 + c_min`.
    pub c_min: f64,
    /// All constants in this closed interval are minimizers. It is a single
    /// point except for the L1 metric on an even number of sites.
    pub c_range: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceReport {
    pub psi: Distance,
    pub rho: Distance,
    pub va: PotentialDistance,
    pub vb: PotentialDistance,
}

impl DistanceReport {
    pub fn d_psi_scaled(&self) -> f64 {
        self.psi.scaled
    }

    pub fn d_rho_scaled(&self) -> f64 {
        self.rho.scaled
    }

    pub fn d_va_scaled(&self) -> f64 {
        self.va.scaled
    }

    pub fn d_vb_scaled(&self) -> f64 {
        self.vb.scaled
    }

    pub fn c_min_a(&self) -> f64 {
        self.va.c_min
    }

    pub fn c_min_b(&self) -> f64 {
        self.vb.c_min
    }
}

/// Distances between two interacting systems given their ground states,
/// densities and external potentials.
pub fn distance_report(
    psi: (&ManyBodyState, &ManyBodyState),
    rho: (&SiteField, &SiteField),
    v: (&SiteField, &SiteField),
) -> Result<DistanceReport> {
    let n = psi.0.sector().n_particles();
    Ok(DistanceReport {
        psi: wavefunction_distance(psi.0, psi.1)?,
        rho: density_distance(rho.0, rho.1, n as f64)?,
        va: potential_distance_a(v.0, v.1)?,
        vb: potential_distance_b(v.0, v.1)?,
    })
}

/// `raw = sqrt(2N (1 - |<a|b>|))`, `scaled = sqrt(1 - |<a|b>|)`.
pub fn wavefunction_distance(a: &ManyBodyState, b: &ManyBodyState) -> Result<Distance> {
    let n = a.sector().n_particles() as f64;
    let ov = overlap(a, b)?.abs().min(1.0);
    let scaled = (1.0 - ov).sqrt();
    Ok(Distance {
        raw: (2.0 * n).sqrt() * scaled,
        scaled,
    })
}

fn check_lengths(a: &SiteField, b: &SiteField) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("empty site field".into()));
    }
    Ok(())
}

/// `raw = sum_j |r1_j - r2_j|`, `scaled = raw / (2N)`.
pub fn density_distance(r1: &SiteField, r2: &SiteField, n: f64) -> Result<Distance> {
    check_lengths(r1, r2)?;
    if !(n > 0.0) {
        return Err(Error::InvalidInput(format!("particle number must be positive, got {n}")));
    }
    for r in [r1, r2] {
        let total = r.sum();
        if (total - n).abs() > PARTICLE_TOL {
            return Err(Error::InvalidInput(format!(
                "density integrates to {total}, expected {n}"
            )));
        }
    }
    let raw: f64 = r1.iter().zip(r2.iter()).map(|(a, b)| (a - b).abs()).sum();
    Ok(Distance {
        raw,
        scaled: raw / (2.0 * n),
    })
}

fn difference(v1: &SiteField, v2: &SiteField) -> Result<Vec<f64>> {
    check_lengths(v1, v2)?;
    Ok(v1.iter().zip(v2.iter()).map(|(a, b)| a - b).collect())
}

fn unit_scale(raw: f64) -> f64 {
    raw / (raw + 1.0)
}

/// `raw = min_c (1/d) sum_j |Δv_j + c|`, minimized by minus the median of `Δv`
/// (the lower median when `d` is even).
pub fn potential_distance_a(v1: &SiteField, v2: &SiteField) -> Result<PotentialDistance> {
    let mut delta = difference(v1, v2)?;
    delta.sort_by(f64::total_cmp);
    let d = delta.len();
    // Pairing order statistics from both ends gives the minimum without
    // reference to which median is chosen.
    let raw = (0..d / 2).map(|k| delta[d - 1 - k] - delta[k]).sum::<f64>() / d as f64;
    let lower = delta[(d - 1) / 2];
    let upper = delta[d / 2];
    Ok(PotentialDistance {
        raw,
        scaled: unit_scale(raw),
        c_min: -lower,
        c_range: (-upper, -lower),
    })
}

/// `raw = sqrt(min_c (1/d) sum_j (Δv_j + c)^2)`: the population standard
/// deviation of `Δv`, minimized at minus its mean.
pub fn potential_distance_b(v1: &SiteField, v2: &SiteField) -> Result<PotentialDistance> {
    let delta = difference(v1, v2)?;
    let d = delta.len() as f64;
    let mean = delta.iter().sum::<f64>() / d;
    let var = delta.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d;
    let raw = var.sqrt();
    Ok(PotentialDistance {
        raw,
        scaled: unit_scale(raw),
        c_min: -mean,
        c_range: (-mean, -mean),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::SpinSector;

    fn f(v: &[f64]) -> SiteField {
        SiteField::new(v.to_vec()).unwrap()
    }

    #[test]
    fn wavefunction_examples() {
        let s = SpinSector::new(4, 1, 1).unwrap();
        let a = ManyBodyState::basis_state(s, 0).unwrap();
        let b = ManyBodyState::basis_state(s, 1).unwrap();
        assert_eq!(wavefunction_distance(&a, &a).unwrap(), Distance { raw: 0.0, scaled: 0.0 });
        let ab = wavefunction_distance(&a, &b).unwrap();
        assert_close!(ab.raw, 2.0, 1e-15);
        assert_close!(ab.scaled, 1.0, 1e-15);

        let mut amps = vec![0.0; 16];
        amps[0] = 0.5;
        amps[1] = 0.75f64.sqrt();
        let c = ManyBodyState::from_amplitudes(s, amps).unwrap();
        assert_close!(wavefunction_distance(&a, &c).unwrap().scaled, 0.5f64.sqrt(), 1e-15);
    }

    #[test]
    fn wavefunction_sector_mismatch() {
        let a = ManyBodyState::basis_state(SpinSector::new(4, 1, 1).unwrap(), 0).unwrap();
        let b = ManyBodyState::basis_state(SpinSector::new(4, 2, 0).unwrap(), 0).unwrap();
        assert!(matches!(
            wavefunction_distance(&a, &b),
            Err(Error::IncompatibleSector(_))
        ));
    }

    #[test]
    fn density_examples() {
        let r = density_distance(&f(&[1.0, 1.0]), &f(&[1.0, 1.0]), 2.0).unwrap();
        assert_eq!((r.raw, r.scaled), (0.0, 0.0));
        let r = density_distance(&f(&[2.0, 0.0]), &f(&[0.0, 2.0]), 2.0).unwrap();
        assert_eq!((r.raw, r.scaled), (4.0, 1.0));
        let r = density_distance(&f(&[1.0, 1.0]), &f(&[0.5, 1.5]), 2.0).unwrap();
        assert_eq!((r.raw, r.scaled), (1.0, 0.25));
    }

    #[test]
    fn density_errors() {
        assert!(density_distance(&f(&[1.0, 1.0]), &f(&[2.0]), 2.0).is_err());
        assert!(density_distance(&f(&[1.0, 1.0]), &f(&[1.0, 0.5]), 2.0).is_err());
    }

    #[test]
    fn potential_a_examples() {
        let r = potential_distance_a(&f(&[8.0, 9.0, 10.0]), &f(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!((r.raw, r.scaled), (0.0, 0.0));

        let r = potential_distance_a(&f(&[1.0, 2.0, 10.0]), &f(&[0.0, 0.0, 0.0])).unwrap();
        assert_eq!(r.c_min, -2.0);
        assert_close!(r.raw, 3.0, 1e-15);
        assert_close!(r.scaled, 0.75, 1e-15);

        let r = potential_distance_a(&f(&[0.0]), &f(&[5.0])).unwrap();
        assert_eq!(r.raw, 0.0);
        assert!(potential_distance_a(&f(&[0.0]), &f(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn potential_a_median_is_grid_minimum() {
        let delta = [0.3, -1.2, 4.0, 2.2, 0.9, -0.1];
        let r = potential_distance_a(&f(&delta), &SiteField::zeros(6)).unwrap();
        let brute = (-4000..=4000)
            .map(|k| {
                let c = k as f64 * 1e-3;
                delta.iter().map(|x| (x + c).abs()).sum::<f64>() / 6.0
            })
            .fold(f64::INFINITY, f64::min);
        assert_close!(r.raw, brute, 1e-12);
        // even d: lower median 0.3 and upper median 0.9 bound the minimizers
        assert_eq!(r.c_min, -0.3);
        assert_eq!(r.c_range, (-0.9, -0.3));
    }

    #[test]
    fn potential_b_examples() {
        let z = SiteField::zeros(3);
        assert_eq!(potential_distance_b(&f(&[4.0, 4.0, 4.0]), &z).unwrap().raw, 0.0);
        let r = potential_distance_b(&f(&[1.0, 2.0, 3.0]), &z).unwrap();
        assert_close!(r.raw, (2.0f64 / 3.0).sqrt(), 1e-15);
        assert_eq!(r.c_min, -2.0);
        let r = potential_distance_b(&f(&[0.0, 0.0, 6.0]), &z).unwrap();
        assert_close!(r.raw, 8f64.sqrt(), 1e-14);
        assert_close!(r.scaled, 0.7388, 1e-4);
        let brute = (-6000..=6000)
            .map(|k| {
                let c = k as f64 * 1e-3;
                ([0.0, 0.0, 6.0f64].iter().map(|x| (x + c).powi(2)).sum::<f64>() / 3.0).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert_close!(r.raw, brute, 1e-9);
    }
}
