//! Sparse many-body Hubbard Hamiltonian on an open chain.
//!
//! `H = -t sum_{i,s} (c+_{i,s} c_{i+1,s} + h.c.) + U sum_i n_{i,up} n_{i,down} + sum_{i,s} v_i n_{i,s}`
//!
//! Fermionic operators are ordered with all spin-up operators before all
//! spin-down ones. A hop within one species then only picks up the sign
//! of the same-species particles it passes over; the other species
//! contributes a configuration-independent factor of one.

use rayon::prelude::*;

use crate::eigensolver::{self, EigenOptions, EigenResult, LinearOperator};
use crate::error::{Error, Result};
use crate::hilbert::{dot, Basis, ManyBodyState, SiteField, SpinSector};

/// Default cap on the sector dimension of an exact solve (covers d=20, N=8).
pub const DEFAULT_MAX_DIMENSION: usize = 30_000_000;

/// Default memory allowed for explicit matrix storage.
pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 30;

/// Parameters of a Hubbard chain in a fixed spin sector.
#[derive(Debug, Clone, PartialEq)]
pub struct HubbardSystem {
    pub t: f64,
    pub u: f64,
    pub v: SiteField,
    pub sector: SpinSector,
}

impl HubbardSystem {
    pub fn new(t: f64, u: f64, v: SiteField, sector: SpinSector) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidInput(format!("hopping t must be positive, got {t}")));
        }
        if !u.is_finite() {
            return Err(Error::InvalidInput(format!("interaction U must be finite, got {u}")));
        }
        if sector.d() < 2 {
            return Err(Error::InvalidInput("a chain needs at least 2 sites".into()));
        }
        if v.len() != sector.d() {
            return Err(Error::DimensionMismatch {
                expected: sector.d(),
                actual: v.len(),
            });
        }
        Ok(Self { t, u, v, sector })
    }

    pub fn d(&self) -> usize {
        self.sector.d()
    }

    pub fn n_particles(&self) -> usize {
        self.sector.n_particles()
    }

    /// Same system with a different external potential.
    pub fn with_potential(&self, v: SiteField) -> Result<Self> {
        Self::new(self.t, self.u, v, self.sector)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OperatorOptions {
    pub max_dimension: usize,
    /// Bytes allowed for explicit row-compressed storage; above this the
    /// matrix-vector product is generated on the fly from the hop tables.
    pub memory_budget: usize,
}

impl Default for OperatorOptions {
    fn default() -> Self {
        Self {
            max_dimension: DEFAULT_MAX_DIMENSION,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

/// Sign of `c+_to c_from` acting on a single-species occupation mask that
/// has `from` occupied and `to` empty.
#[inline]
pub fn hop_sign(mask: u64, from: usize, to: usize) -> f64 {
    let (lo, hi) = if from < to { (from, to) } else { (to, from) };
    let between = if hi - lo > 1 {
        ((1u64 << hi) - 1) & !((1u64 << (lo + 1)) - 1)
    } else {
        0
    };
    if (mask & between).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Nearest-neighbour hops of one spin species, row-compressed by source state.
#[derive(Debug, Clone)]
struct HopTable {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    signs: Vec<f64>,
}

impl HopTable {
    fn build(d: usize, states: &[u64]) -> Self {
        let mut offsets = Vec::with_capacity(states.len() + 1);
        let mut targets = Vec::new();
        let mut signs = Vec::new();
        offsets.push(0);
        for &s in states {
            for i in 0..d - 1 {
                let pair = (1u64 << i) | (1u64 << (i + 1));
                let occ = s & pair;
                if occ == 0 || occ == pair {
                    continue;
                }
                let (from, to) = if s & (1u64 << i) != 0 { (i, i + 1) } else { (i + 1, i) };
                let next = s ^ pair;
                let j = states
                    .binary_search(&next)
                    .expect("hop preserves particle number");
                targets.push(j as u32);
                signs.push(hop_sign(s, from, to));
            }
            offsets.push(targets.len());
        }
        Self {
            offsets,
            targets,
            signs,
        }
    }

    #[inline]
    fn row(&self, s: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[s]..self.offsets[s + 1];
        self.targets[r.clone()]
            .iter()
            .zip(&self.signs[r])
            .map(|(&j, &sg)| (j as usize, sg))
    }

    fn len(&self) -> usize {
        self.targets.len()
    }
}

/// Real symmetric matrix in compressed sparse row form.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .zip(&self.vals[r])
            .filter(|(&c, _)| c as usize == j)
            .map(|(_, &v)| v)
            .sum()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .zip(&self.vals[r])
            .map(|(&c, &v)| (c as usize, v))
    }
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        y.par_chunks_mut(4096).enumerate().for_each(|(chunk, ys)| {
            let base = chunk * 4096;
            for (k, yi) in ys.iter_mut().enumerate() {
                let i = base + k;
                let r = self.row_ptr[i]..self.row_ptr[i + 1];
                *yi = self.cols[r.clone()]
                    .iter()
                    .zip(&self.vals[r])
                    .map(|(&c, &v)| v * x[c as usize])
                    .sum();
            }
        });
    }
}

/// Many-body Hubbard Hamiltonian restricted to one spin sector.
#[derive(Debug, Clone)]
pub struct HubbardOperator {
    basis: Basis,
    t: f64,
    u: f64,
    diag: Vec<f64>,
    up_hops: HopTable,
    down_hops: HopTable,
    explicit: Option<SparseMatrix>,
}

fn diagonal_entries(basis: &Basis, u: f64, v: &[f64]) -> Vec<f64> {
    let site_energy = |mask: u64| -> f64 {
        let mut m = mask;
        let mut e = 0.0;
        while m != 0 {
            e += v[m.trailing_zeros() as usize];
            m &= m - 1;
        }
        e
    };
    let up_e: Vec<f64> = basis.up_states().iter().map(|&m| site_energy(m)).collect();
    let down_e: Vec<f64> = basis.down_states().iter().map(|&m| site_energy(m)).collect();
    let mut diag = Vec::with_capacity(basis.dim());
    for (&um, &ue) in basis.up_states().iter().zip(&up_e) {
        for (&dm, &de) in basis.down_states().iter().zip(&down_e) {
            diag.push(u * (um & dm).count_ones() as f64 + ue + de);
        }
    }
    diag
}

/// Builds the sector Hamiltonian with default storage options.
pub fn build_hubbard(system: &HubbardSystem) -> Result<HubbardOperator> {
    HubbardOperator::new(system, OperatorOptions::default())
}

impl HubbardOperator {
    pub fn new(system: &HubbardSystem, opts: OperatorOptions) -> Result<Self> {
        let sector = system.sector;
        let dim128 = sector.dimension_u128();
        if dim128 > opts.max_dimension as u128 {
            return Err(Error::Capacity(format!(
                "sector {sector} has dimension {dim128}, above the limit {}",
                opts.max_dimension
            )));
        }
        let basis = Basis::new(sector)?;
        let d = sector.d();
        let up_hops = HopTable::build(d, basis.up_states());
        let down_hops = HopTable::build(d, basis.down_states());

        let diag = diagonal_entries(&basis, system.u, system.v.as_slice());

        let mut op = Self {
            basis,
            t: system.t,
            u: system.u,
            diag,
            up_hops,
            down_hops,
            explicit: None,
        };
        let nnz = op.nnz_estimate();
        let bytes = nnz * (8 + 4) + (op.dim() + 1) * 8;
        if bytes <= opts.memory_budget && op.dim() <= u32::MAX as usize {
            op.explicit = Some(op.assemble(nnz));
        }
        Ok(op)
    }

    fn nnz_estimate(&self) -> usize {
        let nu = self.basis.up_states().len();
        let nd = self.basis.down_states().len();
        self.dim() + self.up_hops.len() * nd + self.down_hops.len() * nu
    }

    fn assemble(&self, nnz: usize) -> SparseMatrix {
        let nd = self.basis.down_states().len();
        let dim = self.dim();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        let mut row: Vec<(u32, f64)> = Vec::new();
        row_ptr.push(0);
        for i in 0..dim {
            let (iu, id) = (i / nd, i % nd);
            row.clear();
            row.push((i as u32, self.diag[i]));
            for (ju, s) in self.up_hops.row(iu) {
                row.push(((ju * nd + id) as u32, -self.t * s));
            }
            for (jd, s) in self.down_hops.row(id) {
                row.push(((iu * nd + jd) as u32, -self.t * s));
            }
            row.sort_unstable_by_key(|e| e.0);
            for &(c, v) in &row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        SparseMatrix {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    /// Replaces the external potential in place, keeping hopping and interaction.
    pub fn set_potential(&mut self, v: &SiteField) -> Result<()> {
        let d = self.sector().d();
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: v.len(),
            });
        }
        self.diag = diagonal_entries(&self.basis, self.u, v.as_slice());
        if let Some(m) = &mut self.explicit {
            for (i, &value) in self.diag.iter().enumerate() {
                let (lo, hi) = (m.row_ptr[i], m.row_ptr[i + 1]);
                let k = lo + m.cols[lo..hi]
                    .binary_search(&(i as u32))
                    .expect("diagonal stored in every row");
                m.vals[k] = value;
            }
        }
        Ok(())
    }

    pub fn sector(&self) -> SpinSector {
        self.basis.sector()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn is_explicit(&self) -> bool {
        self.explicit.is_some()
    }

    pub fn explicit(&self) -> Option<&SparseMatrix> {
        self.explicit.as_ref()
    }

    /// True when every off-diagonal element is non-positive. Together with
    /// the connectivity of nearest-neighbour hopping this makes the ground
    /// state unique with strictly positive amplitudes (Perron-Frobenius).
    pub fn is_stoquastic(&self) -> bool {
        self.t > 0.0
            && self.up_hops.signs.iter().all(|&s| s > 0.0)
            && self.down_hops.signs.iter().all(|&s| s > 0.0)
    }

    /// Matrix element `<i|H|j>` generated from the hop tables.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let nd = self.basis.down_states().len();
        let (iu, id) = (i / nd, i % nd);
        let (ju, jd) = (j / nd, j % nd);
        let mut e = 0.0;
        if i == j {
            e += self.diag[i];
        }
        if id == jd {
            e += self
                .up_hops
                .row(iu)
                .filter(|&(k, _)| k == ju)
                .map(|(_, s)| -self.t * s)
                .sum::<f64>();
        }
        if iu == ju {
            e += self
                .down_hops
                .row(id)
                .filter(|&(k, _)| k == jd)
                .map(|(_, s)| -self.t * s)
                .sum::<f64>();
        }
        e
    }

    /// Dense copy, for small sectors only.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply_into(&e, &mut col);
            e[j] = 0.0;
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        m
    }

    /// Checked matrix-vector product.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        let mut y = vec![0.0; x.len()];
        self.apply_into(x, &mut y);
        Ok(y)
    }

    fn apply_on_the_fly(&self, x: &[f64], y: &mut [f64]) {
        let nd = self.basis.down_states().len();
        let mt = -self.t;
        y.par_chunks_mut(nd).enumerate().for_each(|(iu, yb)| {
            let xb = &x[iu * nd..(iu + 1) * nd];
            let db = &self.diag[iu * nd..(iu + 1) * nd];
            for ((yi, &di), &xi) in yb.iter_mut().zip(db).zip(xb) {
                *yi = di * xi;
            }
            for (ju, s) in self.up_hops.row(iu) {
                let c = mt * s;
                let xj = &x[ju * nd..(ju + 1) * nd];
                for (yi, &xi) in yb.iter_mut().zip(xj) {
                    *yi += c * xi;
                }
            }
            for (id, yi) in yb.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (jd, s) in self.down_hops.row(id) {
                    acc += s * xb[jd];
                }
                *yi += mt * acc;
            }
        });
    }

    /// Lowest eigenpair as a normalized many-body state.
    pub fn ground_state(&self, opts: &EigenOptions) -> Result<GroundState> {
        let mut opts = opts.clone();
        if self.is_stoquastic() {
            opts.probe_degeneracy = false;
        }
        let result = eigensolver::ground_state(self, &opts)?;
        GroundState::from_result(self.sector(), result)
    }
}

impl LinearOperator for HubbardOperator {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim(), "operand length");
        assert_eq!(y.len(), self.dim(), "output length");
        match &self.explicit {
            Some(m) => m.apply_into(x, y),
            None => self.apply_on_the_fly(x, y),
        }
    }
}

/// Ground state of a Hubbard operator with solver diagnostics.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub energy: f64,
    pub state: ManyBodyState,
    pub residual_norm: f64,
    pub iterations: usize,
    pub dense: bool,
    pub degeneracy_gap: Option<f64>,
}

impl GroundState {
    fn from_result(sector: SpinSector, r: EigenResult) -> Result<Self> {
        let state = ManyBodyState::from_amplitudes(sector, r.vector)?;
        Ok(Self {
            energy: r.energy,
            state,
            residual_norm: r.residual_norm,
            iterations: r.iterations,
            dense: r.dense,
            degeneracy_gap: r.degeneracy_gap,
        })
    }
}

/// `<x|H|x>` for a normalized state.
pub fn expectation_energy(state: &ManyBodyState, op: &HubbardOperator) -> Result<f64> {
    if state.sector() != op.sector() {
        return Err(Error::IncompatibleSector(format!(
            "state {} vs operator {}",
            state.sector(),
            op.sector()
        )));
    }
    let hx = op.apply(state.amplitudes())?;
    Ok(dot(state.amplitudes(), &hx))
}

/// `<(n_i,up + n_i,down)^2>`.
pub fn expectation_nsq(basis: &Basis, state: &ManyBodyState, site: usize) -> Result<f64> {
    basis.expectation_nsq(state, site)
}
