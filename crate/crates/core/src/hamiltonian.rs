//! Many-body Hamiltonian in the truncated Fock basis.
//!
//! The rotating-frame Hamiltonian splits into four pieces that do not depend
//! on the rotation rate:
//!
//! `H(Ω, g, A) = diag(h0) - Ω diag(L) + g V + A W`
//!
//! where `h0` is the oscillator energy `2Σn + Σ|m| + N`, `V` the contact
//! interaction `½ Σ I(k,l,p,q) a†_k a†_l a_q a_p` and `W` the one-body
//! quadrupole `Σ ⟨p|x²-y²|k⟩ a†_p a_k`. The anisotropy strength `A` is the
//! coefficient of `x² - y²` in the trap potential, in units of `Mω⊥²`. The pieces are assembled once and
//! combined on the fly in [`Operator::apply`].

use std::ops::Range;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::basis::FockBasis;
use crate::error::{Error, Result};
use crate::matelems::{AnisotropyTable, InteractionTable};

/// Rows per parallel work item in matrix-vector products.
const ROW_CHUNK: usize = 256;

/// Compressed sparse row storage of a real symmetric matrix (both triangles).
#[derive(Debug, Clone, Default)]
pub struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds the full symmetric matrix from per-column upper entries
    /// (`upper[s]` holds `(j, H_js)` with `j >= s`, sorted by `j`).
    fn from_upper(upper: Vec<Vec<(u32, f64)>>) -> Self {
        let dim = upper.len();
        let mut counts = vec![0usize; dim];
        for (s, col) in upper.iter().enumerate() {
            for &(j, _) in col {
                counts[s] += 1;
                if j as usize != s {
                    counts[j as usize] += 1;
                }
            }
        }
        let mut row_ptr = vec![0usize; dim + 1];
        for r in 0..dim {
            row_ptr[r + 1] = row_ptr[r] + counts[r];
        }
        let nnz = row_ptr[dim];
        let mut cols = vec![0u32; nnz];
        let mut vals = vec![0.0; nnz];
        let mut fill = row_ptr.clone();
        // Lower part of row j comes from columns s < j, visited in ascending s,
        // followed by the upper part of row j itself: rows end up sorted.
        for (s, col) in upper.iter().enumerate() {
            for &(j, v) in col {
                let j = j as usize;
                if j != s {
                    cols[fill[j]] = s as u32;
                    vals[fill[j]] = v;
                    fill[j] += 1;
                }
            }
            for &(j, v) in col {
                cols[fill[s]] = j;
                vals[fill[s]] = v;
                fill[s] += 1;
            }
        }
        Self {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .zip(&self.vals[r])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&(j as u32)) {
            Ok(pos) => self.vals[r.start + pos],
            Err(_) => 0.0,
        }
    }

    #[inline]
    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .zip(&self.vals[r])
            .map(|(&c, &v)| v * x[c as usize])
            .sum()
    }

    /// Sub-matrix on a contiguous index range, reindexed from zero.
    fn restrict(&self, range: &Range<usize>) -> Self {
        let mut row_ptr = vec![0usize];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in range.clone() {
            for (c, v) in self.row(i) {
                if range.contains(&c) {
                    cols.push((c - range.start) as u32);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            dim: range.len(),
            row_ptr,
            cols,
            vals,
        }
    }

    /// True when every stored `(i, j)` has an identical `(j, i)`.
    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }
}

/// The rotation-independent pieces of the Hamiltonian.
#[derive(Debug, Clone)]
pub struct HamiltonianParts {
    pub h0_diag: Vec<f64>,
    pub lz_diag: Vec<f64>,
    pub interaction: CsrMatrix,
    pub anisotropy: CsrMatrix,
}

/// Maps basis mode indices onto table mode indices.
fn table_index(basis: &FockBasis, table_modes: &[crate::basis::SpMode]) -> Result<Vec<usize>> {
    basis
        .modes()
        .iter()
        .map(|md| {
            table_modes
                .iter()
                .position(|t| t == md)
                .ok_or_else(|| Error::MissingTableEntry(md.to_string()))
        })
        .collect()
}

fn merge_sorted(mut col: Vec<(u32, f64)>) -> Vec<(u32, f64)> {
    col.sort_by_key(|&(j, _)| j);
    let mut out: Vec<(u32, f64)> = Vec::with_capacity(col.len());
    for (j, v) in col {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += v,
            _ => out.push((j, v)),
        }
    }
    out
}

/// Builds the Hamiltonian pieces for `basis` from precomputed tables.
pub fn assemble(
    basis: &FockBasis,
    interaction: &InteractionTable,
    anisotropy: &AnisotropyTable,
) -> Result<HamiltonianParts> {
    let n_modes = basis.n_modes();
    let inter_map = table_index(basis, interaction.modes())?;
    let aniso_map = table_index(basis, anisotropy.modes())?;

    // Table index -> basis index, for modes the basis knows about.
    let mut back = vec![usize::MAX; interaction.modes().len()];
    for (b, &t) in inter_map.iter().enumerate() {
        back[t] = b;
    }
    // couplings[p][q - p] lists creation pairs (k, l, coefficient * multiplicity / 2).
    let mut couplings: Vec<Vec<Vec<(usize, usize, f64)>>> =
        (0..n_modes).map(|p| vec![Vec::new(); n_modes - p]).collect();
    for ((tp, tq), list) in interaction.pair_couplings() {
        let (p, q) = (back[tp], back[tq]);
        if p == usize::MAX || q == usize::MAX {
            continue;
        }
        let (p, q) = if p <= q { (p, q) } else { (q, p) };
        let ann_mult = if p == q { 1.0 } else { 2.0 };
        for ((tk, tl), v) in list {
            let (k, l) = (back[tk], back[tl]);
            if k == usize::MAX || l == usize::MAX {
                continue;
            }
            let cre_mult = if k == l { 1.0 } else { 2.0 };
            couplings[p][q - p].push((k.min(l), k.max(l), 0.5 * ann_mult * cre_mult * v));
        }
    }

    let mut aniso_nb: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_modes];
    let mut aback = vec![usize::MAX; anisotropy.modes().len()];
    for (b, &t) in aniso_map.iter().enumerate() {
        aback[t] = b;
    }
    for (k, &tk) in aniso_map.iter().enumerate() {
        for &(tp, v) in anisotropy.neighbours(tk) {
            if aback[tp] != usize::MAX {
                aniso_nb[k].push((aback[tp], v));
            }
        }
    }

    let dim = basis.dim();
    let h0_diag: Vec<f64> = basis
        .states()
        .iter()
        .map(|s| s.oscillator_energy(basis.modes()))
        .collect();
    let lz_diag: Vec<f64> = basis
        .states()
        .iter()
        .map(|s| s.angular_momentum(basis.modes()) as f64)
        .collect();

    type Row = Vec<(u32, f64)>;
    let columns: Vec<(Row, Row)> = (0..dim)
        .into_par_iter()
        .map(|s| {
            let occ0 = basis.state(s).occupations();
            let mut occ = occ0.to_vec();
            let occupied: Vec<usize> = (0..n_modes).filter(|&i| occ0[i] > 0).collect();

            let mut v_col = Vec::new();
            for (ai, &p) in occupied.iter().enumerate() {
                for &q in &occupied[ai..] {
                    let (np, nq) = (occ0[p] as u64, occ0[q] as u64);
                    let ann = if p == q {
                        if np < 2 {
                            continue;
                        }
                        np * (np - 1)
                    } else {
                        np * nq
                    };
                    occ[p] -= 1;
                    occ[q] -= 1;
                    for &(k, l, coef) in &couplings[p][q - p] {
                        let (nk, nl) = (occ[k] as u64, occ[l] as u64);
                        let cre = if k == l {
                            (nk + 1) * (nk + 2)
                        } else {
                            (nk + 1) * (nl + 1)
                        };
                        occ[k] += 1;
                        occ[l] += 1;
                        if let Some(j) = basis.lookup(&occ) {
                            if j >= s {
                                v_col.push((j as u32, coef * ((ann * cre) as f64).sqrt()));
                            }
                        }
                        occ[k] -= 1;
                        occ[l] -= 1;
                    }
                    occ[p] += 1;
                    occ[q] += 1;
                }
            }

            let mut w_col = Vec::new();
            for &k in &occupied {
                let nk = occ0[k] as u64;
                for &(p, w) in &aniso_nb[k] {
                    let np = occ0[p] as u64;
                    occ[k] -= 1;
                    occ[p] += 1;
                    if let Some(j) = basis.lookup(&occ) {
                        if j >= s {
                            w_col.push((j as u32, w * ((nk * (np + 1)) as f64).sqrt()));
                        }
                    }
                    occ[k] += 1;
                    occ[p] -= 1;
                }
            }
            (merge_sorted(v_col), merge_sorted(w_col))
        })
        .collect();

    let (v_upper, w_upper): (Vec<_>, Vec<_>) = columns.into_iter().unzip();
    Ok(HamiltonianParts {
        h0_diag,
        lz_diag,
        interaction: CsrMatrix::from_upper(v_upper),
        anisotropy: CsrMatrix::from_upper(w_upper),
    })
}

impl HamiltonianParts {
    pub fn dim(&self) -> usize {
        self.h0_diag.len()
    }

    /// The Hamiltonian at one parameter point, as a linear operator.
    pub fn at(&self, omega: f64, g: f64, anisotropy: f64) -> Operator<'_> {
        Operator {
            parts: self,
            omega,
            g,
            anisotropy,
        }
    }

    /// Pieces restricted to a contiguous block of basis indices.
    pub fn restrict(&self, range: Range<usize>) -> HamiltonianParts {
        HamiltonianParts {
            h0_diag: self.h0_diag[range.clone()].to_vec(),
            lz_diag: self.lz_diag[range.clone()].to_vec(),
            interaction: self.interaction.restrict(&range),
            anisotropy: self.anisotropy.restrict(&range),
        }
    }
}

/// Real symmetric operator acting on amplitude vectors.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;

    /// `y = A x`.
    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        y
    }
}

/// `H(Ω, g, A)` over borrowed [`HamiltonianParts`]; never materialized.
#[derive(Debug, Clone, Copy)]
pub struct Operator<'a> {
    pub parts: &'a HamiltonianParts,
    pub omega: f64,
    pub g: f64,
    pub anisotropy: f64,
}

impl Operator<'_> {
    /// `H x`, checking the dimension.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.apply(x))
    }

    pub fn to_dense(&self, cap: usize) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if n > cap {
            return Err(Error::DenseTooLarge { dim: n, cap });
        }
        let p = self.parts;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] += p.h0_diag[i] - self.omega * p.lz_diag[i];
            for (j, v) in p.interaction.row(i) {
                m[(i, j)] += self.g * v;
            }
            for (j, v) in p.anisotropy.row(i) {
                m[(i, j)] += self.anisotropy * v;
            }
        }
        Ok(m)
    }
}

impl LinearOperator for Operator<'_> {
    fn dim(&self) -> usize {
        self.parts.dim()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let p = self.parts;
        let (omega, g, a) = (self.omega, self.g, self.anisotropy);
        y.par_chunks_mut(ROW_CHUNK).enumerate().for_each(|(c, out)| {
            let base = c * ROW_CHUNK;
            for (o, yi) in out.iter_mut().enumerate() {
                let i = base + o;
                let mut acc = (p.h0_diag[i] - omega * p.lz_diag[i]) * x[i];
                if g != 0.0 {
                    acc += g * p.interaction.row_dot(i, x);
                }
                if a != 0.0 {
                    acc += a * p.anisotropy.row_dot(i, x);
                }
                *yi = acc;
            }
        });
    }
}
