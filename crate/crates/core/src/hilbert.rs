//! Occupation-number basis for a fixed spin sector.
//!
//! A configuration is a pair of bit masks `(up, down)`; bit `i` set means
//! site `i` holds a particle of that spin. The basis of a sector is ordered
//! lexicographically on `(up, down)` with both masks compared as unsigned
//! integers, so the index of `(up_states[iu], down_states[id])` is
//! `iu * n_down_states + id`. Persisted state files depend on this ordering.

use std::io::{Read, Write};
use std::ops::Index;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Largest chain supported by the `u64` occupation masks.
pub const MAX_SITES: usize = 64;

const NORM_TOL: f64 = 1e-12;

/// Binomial coefficient, `None` on overflow.
pub fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Particle counts `(n_up, n_down)` on `d` sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpinSector {
    d: usize,
    n_up: usize,
    n_down: usize,
}

impl SpinSector {
    pub fn new(d: usize, n_up: usize, n_down: usize) -> Result<Self> {
        if d == 0 || d > MAX_SITES {
            return Err(Error::InvalidSector(format!(
                "site count {d} outside 1..={MAX_SITES}"
            )));
        }
        if n_up > d || n_down > d {
            return Err(Error::InvalidSector(format!(
                "occupations ({n_up}, {n_down}) exceed {d} sites"
            )));
        }
        Ok(Self { d, n_up, n_down })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_up(&self) -> usize {
        self.n_up
    }

    pub fn n_down(&self) -> usize {
        self.n_down
    }

    pub fn n_particles(&self) -> usize {
        self.n_up + self.n_down
    }

    /// `C(d, n_up) * C(d, n_down)`, exact.
    pub fn dimension_u128(&self) -> u128 {
        let up = binomial(self.d, self.n_up).expect("d <= 64 keeps C(d, k) in u128");
        let down = binomial(self.d, self.n_down).expect("d <= 64 keeps C(d, k) in u128");
        up.saturating_mul(down)
    }

    /// Sector dimension; fails if it does not fit in `usize`.
    pub fn dimension(&self) -> Result<usize> {
        usize::try_from(self.dimension_u128())
            .map_err(|_| Error::Capacity(format!("sector {self} is too large to index")))
    }
}

impl std::fmt::Display for SpinSector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(d={}, n_up={}, n_down={})", self.d, self.n_up, self.n_down)
    }
}

/// Occupation pattern of both spin species. The derived ordering is the
/// basis ordering: lexicographic on `(up, down)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration {
    pub up: u64,
    pub down: u64,
}

impl Configuration {
    #[inline]
    pub fn occupation(&self, site: usize) -> u32 {
        (((self.up >> site) & 1) + ((self.down >> site) & 1)) as u32
    }

    #[inline]
    pub fn double_occupancies(&self) -> u32 {
        (self.up & self.down).count_ones()
    }
}

/// All `d`-bit masks with `n` bits set, in increasing numeric order.
pub fn species_states(d: usize, n: usize) -> Vec<u64> {
    assert!(d <= MAX_SITES && n <= d);
    if n == 0 {
        return vec![0];
    }
    let limit: u128 = 1u128 << d;
    let mut out = Vec::with_capacity(binomial(d, n).unwrap_or(0) as usize);
    let mut m: u64 = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    loop {
        out.push(m);
        // Gosper's hack: next integer with the same popcount.
        let c = m & m.wrapping_neg();
        let r = m.wrapping_add(c);
        if r == 0 || (r as u128) >= limit {
            break;
        }
        let next = (((r ^ m) >> 2) / c) | r;
        if (next as u128) >= limit {
            break;
        }
        m = next;
    }
    out
}

/// Enumerated determinant basis of a sector.
#[derive(Debug, Clone)]
pub struct Basis {
    sector: SpinSector,
    up_states: Vec<u64>,
    down_states: Vec<u64>,
}

impl Basis {
    pub fn new(sector: SpinSector) -> Result<Self> {
        sector.dimension()?;
        Ok(Self {
            sector,
            up_states: species_states(sector.d, sector.n_up),
            down_states: species_states(sector.d, sector.n_down),
        })
    }

    pub fn sector(&self) -> SpinSector {
        self.sector
    }

    pub fn dim(&self) -> usize {
        self.up_states.len() * self.down_states.len()
    }

    pub fn up_states(&self) -> &[u64] {
        &self.up_states
    }

    pub fn down_states(&self) -> &[u64] {
        &self.down_states
    }

    #[inline]
    pub fn config_at(&self, index: usize) -> Configuration {
        let nd = self.down_states.len();
        Configuration {
            up: self.up_states[index / nd],
            down: self.down_states[index % nd],
        }
    }

    pub fn index_of(&self, config: &Configuration) -> Option<usize> {
        let iu = self.up_states.binary_search(&config.up).ok()?;
        let id = self.down_states.binary_search(&config.down).ok()?;
        Some(iu * self.down_states.len() + id)
    }

    /// The ordered configuration list. Allocates `dim` entries.
    pub fn configurations(&self) -> Vec<Configuration> {
        (0..self.dim()).map(|i| self.config_at(i)).collect()
    }

    fn check_state(&self, state: &ManyBodyState) -> Result<()> {
        if state.sector != self.sector {
            return Err(Error::IncompatibleSector(format!(
                "state in {} used with basis {}",
                state.sector, self.sector
            )));
        }
        Ok(())
    }

    /// Spin-resolved site densities `<n_i,sigma>`.
    pub fn density(&self, state: &ManyBodyState) -> Result<SpinDensity> {
        Ok(self.site_moments(state)?.density)
    }

    /// Densities together with `<n_i^2>` per site, in one sweep.
    pub fn site_moments(&self, state: &ManyBodyState) -> Result<SiteMoments> {
        self.check_state(state)?;
        let d = self.sector.d;
        let nd = self.down_states.len();
        let mut w_up = vec![0.0; self.up_states.len()];
        let mut w_down = vec![0.0; nd];
        let mut double = vec![0.0; d];
        for (iu, (&up, row)) in self
            .up_states
            .iter()
            .zip(state.amplitudes.chunks_exact(nd))
            .enumerate()
        {
            let mut acc = 0.0;
            for (id, (&down, &a)) in self.down_states.iter().zip(row).enumerate() {
                let p = a * a;
                acc += p;
                w_down[id] += p;
                let mut both = up & down;
                while both != 0 {
                    double[both.trailing_zeros() as usize] += p;
                    both &= both - 1;
                }
            }
            w_up[iu] = acc;
        }
        let up = spread_weights(d, &self.up_states, &w_up);
        let down = spread_weights(d, &self.down_states, &w_down);
        let total: Vec<f64> = up.iter().zip(&down).map(|(a, b)| a + b).collect();
        let nsq = (0..d).map(|i| total[i] + 2.0 * double[i]).collect();
        Ok(SiteMoments {
            density: SpinDensity {
                total: SiteField(total),
                up: SiteField(up),
                down: SiteField(down),
            },
            nsq,
            double_occupancy: double,
        })
    }

    /// `<(n_i,up + n_i,down)^2>` for one site.
    pub fn expectation_nsq(&self, state: &ManyBodyState, site: usize) -> Result<f64> {
        if site >= self.sector.d {
            return Err(Error::InvalidInput(format!(
                "site {site} out of range for d={}",
                self.sector.d
            )));
        }
        self.check_state(state)?;
        let bit = 1u64 << site;
        let nd = self.down_states.len();
        let mut acc = 0.0;
        for (i, &a) in state.amplitudes.iter().enumerate() {
            let up = (self.up_states[i / nd] & bit != 0) as u32;
            let down = (self.down_states[i % nd] & bit != 0) as u32;
            let occ = (up + down) as f64;
            acc += a * a * occ * occ;
        }
        Ok(acc)
    }
}

fn spread_weights(d: usize, states: &[u64], weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for (&mask, &w) in states.iter().zip(weights) {
        let mut m = mask;
        while m != 0 {
            out[m.trailing_zeros() as usize] += w;
            m &= m - 1;
        }
    }
    out
}

/// A real site-indexed field: potential, density, or spin density.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteField(Vec<f64>);

impl SiteField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry {} at site {i}",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn constant(d: usize, value: f64) -> Self {
        Self(vec![value; d])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.0.len() as f64
    }

    /// Elementwise shift by a constant.
    pub fn shifted(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| v + c).collect())
    }

    /// Representative with zero sum.
    pub fn gauge_fixed(&self) -> Self {
        self.shifted(-self.mean())
    }

    pub fn max_abs_diff(&self, other: &SiteField) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for SiteField {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl AsRef<[f64]> for SiteField {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinDensity {
    pub total: SiteField,
    pub up: SiteField,
    pub down: SiteField,
}

#[derive(Debug, Clone)]
pub struct SiteMoments {
    pub density: SpinDensity,
    /// `<n_i^2>` with `n_i = n_i,up + n_i,down`.
    pub nsq: Vec<f64>,
    /// `<n_i,up n_i,down>`.
    pub double_occupancy: Vec<f64>,
}

/// Unit-norm real amplitude vector over a sector's basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ManyBodyState {
    sector: SpinSector,
    amplitudes: Vec<f64>,
}

impl ManyBodyState {
    /// Normalizes `amplitudes`; rejects zero or non-finite vectors.
    pub fn from_amplitudes(sector: SpinSector, mut amplitudes: Vec<f64>) -> Result<Self> {
        let dim = sector.dimension()?;
        if amplitudes.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: amplitudes.len(),
            });
        }
        let norm = amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidInput(format!(
                "cannot normalize amplitude vector with norm {norm}"
            )));
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        Ok(Self { sector, amplitudes })
    }

    pub fn basis_state(sector: SpinSector, index: usize) -> Result<Self> {
        let dim = sector.dimension()?;
        if index >= dim {
            return Err(Error::InvalidInput(format!(
                "basis index {index} out of range for dimension {dim}"
            )));
        }
        let mut amplitudes = vec![0.0; dim];
        amplitudes[index] = 1.0;
        Ok(Self { sector, amplitudes })
    }

    pub fn sector(&self) -> SpinSector {
        self.sector
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<f64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum()
    }

    /// Writes the header `(d, n_up, n_down, dimension)` as little-endian
    /// `u64` followed by the amplitudes as little-endian `f64` in basis order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        for h in [
            self.sector.d,
            self.sector.n_up,
            self.sector.n_down,
            self.amplitudes.len(),
        ] {
            w.write_all(&(h as u64).to_le_bytes())?;
        }
        for a in &self.amplitudes {
            w.write_all(&a.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = [0u8; 8];
        let mut header = [0usize; 4];
        for h in header.iter_mut() {
            r.read_exact(&mut buf)?;
            *h = usize::try_from(u64::from_le_bytes(buf))
                .map_err(|_| Error::InvalidInput("header field overflows usize".into()))?;
        }
        let sector = SpinSector::new(header[0], header[1], header[2])?;
        let dim = sector.dimension()?;
        if dim != header[3] {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: header[3],
            });
        }
        let mut amplitudes = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut buf)?;
            amplitudes.push(f64::from_le_bytes(buf));
        }
        let state = Self { sector, amplitudes };
        if (state.norm_sqr() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput("stored state is not normalized".into()));
        }
        Ok(state)
    }
}

/// `<a|b>` for two states of the same sector.
pub fn overlap(a: &ManyBodyState, b: &ManyBodyState) -> Result<f64> {
    if a.sector != b.sector {
        return Err(Error::IncompatibleSector(format!(
            "{} vs {}",
            a.sector, b.sector
        )));
    }
    Ok(dot(&a.amplitudes, &b.amplitudes))
}

const DOT_BLOCK: usize = 4096;

/// Blocked sum: fixed block boundaries keep the result independent of the
/// thread count, and the rounding error grows with the block count rather
/// than the length.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let block = |(x, y): (&[f64], &[f64])| -> f64 { x.iter().zip(y).map(|(p, q)| p * q).sum() };
    if a.len() <= 16 * DOT_BLOCK {
        return a.chunks(DOT_BLOCK).zip(b.chunks(DOT_BLOCK)).map(block).sum();
    }
    let partial: Vec<f64> = a
        .par_chunks(DOT_BLOCK)
        .zip(b.par_chunks(DOT_BLOCK))
        .map(block)
        .collect();
    partial.iter().sum()
}

/// Unnormalized amplitudes i.i.d. uniform on `[-1, 1]`.
pub fn random_amplitudes<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

/// Amplitudes i.i.d. uniform on `[-1, 1]`, then normalized.
pub fn random_state<R: Rng + ?Sized>(sector: SpinSector, rng: &mut R) -> Result<ManyBodyState> {
    let amplitudes = random_amplitudes(sector.dimension()?, rng);
    let state = ManyBodyState::from_amplitudes(sector, amplitudes)?;
    debug_assert!((state.norm_sqr() - 1.0).abs() < NORM_TOL);
    Ok(state)
}
