//! Ground-state analysis: one-body density matrix, natural orbitals,
//! the two-mode decomposition over the two leading orbitals, and the
//! quantum Fisher information for a phase imprinted on the leading orbital.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::FockBasis;
use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-10;
const CHUNK: usize = 2048;
/// Cross-parity SPDM entries below `BLOCK_TOL * N` are treated as zero.
const BLOCK_TOL: f64 = 1e-8;
/// Occupations within `TIE_TOL * N` count as degenerate for ordering.
pub const TIE_TOL: f64 = 1e-6;
/// Default cap on stored amplitudes in a rotated-mode state.
pub const DEFAULT_ROTATION_CAP: usize = 5_000_000;

fn check_normalized(state: &[f64], basis: &FockBasis) -> Result<()> {
    if state.len() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            got: state.len(),
        });
    }
    let norm = state.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::Unnormalized { norm });
    }
    Ok(())
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// One-body density matrix `ρ[k][l] = ⟨a†_k a_l⟩` over the basis modes.
#[derive(Debug, Clone)]
pub struct Spdm {
    pub matrix: DMatrix<f64>,
    pub n_particles: usize,
    /// `m` parity of each mode, `true` for even.
    pub mode_even: Vec<bool>,
}

impl Spdm {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// `cᵀ ρ c`, the mean occupation of orbital `c`.
    pub fn expectation(&self, c: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(c);
        (v.transpose() * &self.matrix * &v)[(0, 0)]
    }

    /// Trace equals `N` and the spectrum is non-negative.
    pub fn check_valid(&self) -> Result<()> {
        let n = self.n_particles as f64;
        if (self.trace() - n).abs() > 1e-10 * n.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "SPDM trace {} differs from N = {}",
                self.trace(),
                n
            )));
        }
        let min = SymmetricEigen::new(self.matrix.clone()).eigenvalues.min();
        if min < -1e-10 * n.max(1.0) {
            return Err(Error::InvalidArgument(format!("SPDM has negative eigenvalue {min}")));
        }
        Ok(())
    }
}

pub fn spdm(state: &[f64], basis: &FockBasis) -> Result<Spdm> {
    check_normalized(state, basis)?;
    let m = basis.n_modes();
    let partials: Vec<Vec<f64>> = (0..basis.dim())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; m * m];
            let mut occ = Vec::with_capacity(m);
            for &s in chunk {
                let amp = state[s];
                if amp == 0.0 {
                    continue;
                }
                occ.clear();
                occ.extend_from_slice(basis.state(s).occupations());
                for l in 0..m {
                    let nl = occ[l];
                    if nl == 0 {
                        continue;
                    }
                    acc[l * m + l] += amp * amp * nl as f64;
                    occ[l] -= 1;
                    for k in 0..m {
                        if k == l {
                            continue;
                        }
                        occ[k] += 1;
                        if let Some(t) = basis.lookup(&occ) {
                            let factor = (nl as f64 * occ[k] as f64).sqrt();
                            acc[k * m + l] += state[t] * amp * factor;
                        }
                        occ[k] -= 1;
                    }
                    occ[l] += 1;
                }
            }
            acc
        })
        .collect();
    let mut sum = vec![0.0; m * m];
    for part in partials {
        for (a, b) in sum.iter_mut().zip(part) {
            *a += b;
        }
    }
    let raw = DMatrix::from_row_slice(m, m, &sum);
    let matrix = (&raw + raw.transpose()) * 0.5;
    Ok(Spdm {
        matrix,
        n_particles: basis.n_particles(),
        mode_even: basis.modes().iter().map(|mode| mode.is_even()).collect(),
    })
}

/// Parity class of a natural orbital under `r -> -r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OrbitalParity {
    Even,
    Odd,
    Mixed,
}

#[derive(Debug, Clone, Serialize)]
pub struct NaturalOrbitals {
    /// Descending occupations.
    pub occupations: Vec<f64>,
    /// Orbital coefficient vectors over the basis modes.
    pub orbitals: Vec<Vec<f64>>,
    pub parity: Vec<OrbitalParity>,
    /// Weight of each orbital on even-`m` modes.
    #[serde(skip)]
    pub even_weight: Vec<f64>,
}

impl NaturalOrbitals {
    pub fn leading(&self) -> &[f64] {
        &self.orbitals[0]
    }

    pub fn second(&self) -> &[f64] {
        &self.orbitals[1]
    }

    /// Top even-parity occupation minus top odd-parity occupation.
    ///
    /// Signed across the critical point, unlike `λ₁ - λ₂`.
    pub fn signed_imbalance(&self) -> Option<f64> {
        let even = self
            .occupations
            .iter()
            .zip(&self.even_weight)
            .find(|(_, &w)| w > 0.5)?
            .0;
        let odd = self
            .occupations
            .iter()
            .zip(&self.even_weight)
            .find(|(_, &w)| w <= 0.5)?
            .0;
        Some(even - odd)
    }

    /// Orthogonal matrix whose columns are the orbitals.
    pub fn rotation(&self) -> DMatrix<f64> {
        let m = self.orbitals.len();
        DMatrix::from_fn(m, m, |k, j| self.orbitals[j][k])
    }
}

fn classify(even_weight: f64) -> OrbitalParity {
    if even_weight >= 1.0 - 1e-8 {
        OrbitalParity::Even
    } else if even_weight <= 1e-8 {
        OrbitalParity::Odd
    } else {
        OrbitalParity::Mixed
    }
}

/// Makes the largest-magnitude entry positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    for &x in v.iter() {
        if x.abs() > best.abs() + 1e-12 {
            best = x;
        }
    }
    if best < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn eigen_into(matrix: DMatrix<f64>, index: &[usize], dim: usize, out: &mut Vec<(f64, Vec<f64>)>) {
    if index.is_empty() {
        return;
    }
    let eig = SymmetricEigen::new(matrix);
    for c in 0..index.len() {
        let mut v = vec![0.0; dim];
        for (r, &k) in index.iter().enumerate() {
            v[k] = eig.eigenvectors[(r, c)];
        }
        out.push((eig.eigenvalues[c], v));
    }
}

/// Diagonalizes the SPDM, per `m`-parity block when the state has definite
/// parity. Occupations are sorted descending; near-ties put even orbitals first.
pub fn natural_orbitals(rho: &Spdm) -> NaturalOrbitals {
    let m = rho.dim();
    let n = rho.n_particles as f64;
    let even: Vec<usize> = (0..m).filter(|&k| rho.mode_even[k]).collect();
    let odd: Vec<usize> = (0..m).filter(|&k| !rho.mode_even[k]).collect();
    let cross = even
        .iter()
        .flat_map(|&i| odd.iter().map(move |&j| (i, j)))
        .map(|(i, j)| rho.matrix[(i, j)].abs())
        .fold(0.0, f64::max);

    let mut pairs = Vec::with_capacity(m);
    if cross <= BLOCK_TOL * n.max(1.0) {
        for index in [&even, &odd] {
            let sub = DMatrix::from_fn(index.len(), index.len(), |a, b| rho.matrix[(index[a], index[b])]);
            eigen_into(sub, index, m, &mut pairs);
        }
    } else {
        let all: Vec<usize> = (0..m).collect();
        eigen_into(rho.matrix.clone(), &all, m, &mut pairs);
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut items: Vec<(f64, Vec<f64>, f64)> = pairs
        .into_iter()
        .map(|(lam, mut v)| {
            fix_sign(&mut v);
            let w: f64 = v
                .iter()
                .enumerate()
                .filter(|(k, _)| rho.mode_even[*k])
                .map(|(_, x)| x * x)
                .sum();
            (lam, v, w)
        })
        .collect();
    let tie = TIE_TOL * n.max(1.0);
    let mut swapped = true;
    while swapped {
        swapped = false;
        for i in 1..items.len() {
            if (items[i - 1].0 - items[i].0).abs() <= tie && items[i].2 > items[i - 1].2 + 1e-12 {
                items.swap(i - 1, i);
                swapped = true;
            }
        }
    }

    NaturalOrbitals {
        occupations: items.iter().map(|t| t.0).collect(),
        parity: items.iter().map(|t| classify(t.2)).collect(),
        even_weight: items.iter().map(|t| t.2).collect(),
        orbitals: items.into_iter().map(|t| t.1).collect(),
    }
}

/// Sparse amplitudes over the full `N`-boson Fock space of `n_modes` modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeAmplitudes {
    pub n_modes: usize,
    pub amplitudes: BTreeMap<Vec<u8>, f64>,
}

impl ModeAmplitudes {
    pub fn from_basis(state: &[f64], basis: &FockBasis) -> Self {
        let amplitudes = basis
            .states()
            .iter()
            .zip(state)
            .filter(|(_, &a)| a != 0.0)
            .map(|(s, &a)| (s.occupations().to_vec(), a))
            .collect();
        Self {
            n_modes: basis.n_modes(),
            amplitudes,
        }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.values().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn get(&self, occupations: &[u8]) -> f64 {
        self.amplitudes.get(occupations).copied().unwrap_or(0.0)
    }

    /// Mean and variance of the occupation of `mode`.
    pub fn number_moments(&self, mode: usize) -> (f64, f64) {
        let (mut m1, mut m2) = (0.0, 0.0);
        for (occ, a) in &self.amplitudes {
            let p = a * a;
            let k = occ[mode] as f64;
            m1 += p * k;
            m2 += p * k * k;
        }
        (m1, m2 - m1 * m1)
    }

    /// Applies the substitution `a†_p -> Σ_j g[p][j] a†_j` restricted to modes `p, q`.
    fn rotate_pair(&mut self, p: usize, q: usize, g: [[f64; 2]; 2], cap: usize) -> Result<()> {
        let mut out: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
        for (occ, &amp) in &self.amplitudes {
            let (np, nq) = (occ[p] as usize, occ[q] as usize);
            let t = np + nq;
            let scale = binomial(t, np);
            for a in 0..=t {
                let mut coef = 0.0;
                for i in a.saturating_sub(nq)..=a.min(np) {
                    let j = a - i;
                    coef += binomial(np, i)
                        * g[0][0].powi(i as i32)
                        * g[0][1].powi((np - i) as i32)
                        * binomial(nq, j)
                        * g[1][0].powi(j as i32)
                        * g[1][1].powi((nq - j) as i32);
                }
                if coef == 0.0 {
                    continue;
                }
                coef *= (scale / binomial(t, a)).sqrt();
                let mut key = occ.clone();
                key[p] = a as u8;
                key[q] = (t - a) as u8;
                *out.entry(key).or_insert(0.0) += amp * coef;
            }
            if out.len() > cap {
                return Err(Error::DimensionCapExceeded {
                    dimension: out.len() as u128,
                    cap,
                });
            }
        }
        out.retain(|_, a| *a != 0.0);
        self.amplitudes = out;
        Ok(())
    }
}

/// Re-expresses `state` in the mode basis given by the columns of `u`:
/// new mode `j` has coefficients `u[(k, j)]` over old mode `k`.
///
/// `u` is reduced to Givens rotations and a sign diagonal; each rotation acts
/// exactly within the two-mode subspaces it touches.
pub fn mode_rotate(state: &[f64], basis: &FockBasis, u: &DMatrix<f64>, cap: usize) -> Result<ModeAmplitudes> {
    check_normalized(state, basis)?;
    let m = basis.n_modes();
    if u.nrows() != m || u.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: u.nrows().max(u.ncols()),
        });
    }
    let defect = (u.transpose() * u - DMatrix::<f64>::identity(m, m)).amax();
    if defect > NORM_TOL {
        return Err(Error::InvalidArgument(format!(
            "mode matrix is not orthogonal (defect {defect:.3e})"
        )));
    }
    let mut out = ModeAmplitudes::from_basis(state, basis);
    let mut r = u.clone();
    for j in 0..m {
        for i in j + 1..m {
            let (a, b) = (r[(j, j)], r[(i, j)]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for col in 0..m {
                let (x, y) = (r[(j, col)], r[(i, col)]);
                r[(j, col)] = c * x + s * y;
                r[(i, col)] = -s * x + c * y;
            }
            out.rotate_pair(j, i, [[c, -s], [s, c]], cap)?;
        }
    }
    let flips: Vec<bool> = (0..m).map(|k| r[(k, k)] < 0.0).collect();
    for (occ, amp) in out.amplitudes.iter_mut() {
        let odd = occ.iter().zip(&flips).filter(|(&n, &f)| f && n % 2 == 1).count();
        if odd % 2 == 1 {
            *amp = -*amp;
        }
    }
    let norm = out.norm();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::Leakage { norm });
    }
    Ok(out)
}

/// Orthonormal completion of the given orthonormal columns to a square matrix.
pub fn complete_orthonormal(columns: &[Vec<f64>], dim: usize) -> DMatrix<f64> {
    let mut basis: Vec<Vec<f64>> = columns.to_vec();
    for e in 0..dim {
        if basis.len() == dim {
            break;
        }
        let mut v = vec![0.0; dim];
        v[e] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = b.iter().zip(&v).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    DMatrix::from_fn(dim, dim, |k, j| basis[j][k])
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoModeDecomposition {
    /// `C_n = ⟨N-2n, 2n | Ψ⟩` for `n = 0..=N/2`.
    pub coefficients: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub fidelity: f64,
    /// Weight on two-mode states with odd occupation of the second orbital.
    pub odd_weight: f64,
}

/// Amplitudes `⟨N-j, j | Ψ⟩` in orbitals `(c1, c2)` for `j = 0..=N`.
fn two_mode_amplitudes(state: &[f64], basis: &FockBasis, c1: &[f64], c2: &[f64]) -> Vec<f64> {
    let n = basis.n_particles();
    let ln_fact: Vec<f64> = (0..=n).map(ln_factorial).collect();
    let partials: Vec<Vec<f64>> = (0..basis.dim())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; n + 1];
            let mut poly = vec![0.0; n + 1];
            let mut next = vec![0.0; n + 1];
            for &s in chunk {
                let amp = state[s];
                if amp == 0.0 {
                    continue;
                }
                // poly[a]: Σ over splits with `a` bosons assigned to the first orbital.
                poly.iter_mut().for_each(|x| *x = 0.0);
                poly[0] = 1.0;
                let mut deg = 0usize;
                let mut ln_norm = 0.0;
                for (k, &nk) in basis.state(s).occupations().iter().enumerate() {
                    if nk == 0 {
                        continue;
                    }
                    let nk = nk as usize;
                    ln_norm += ln_fact[nk];
                    next[..=deg + nk].iter_mut().for_each(|x| *x = 0.0);
                    for a in 0..=nk {
                        let w = binomial(nk, a) * c1[k].powi(a as i32) * c2[k].powi((nk - a) as i32);
                        if w == 0.0 {
                            continue;
                        }
                        for d in 0..=deg {
                            next[d + a] += poly[d] * w;
                        }
                    }
                    deg += nk;
                    poly[..=deg].copy_from_slice(&next[..=deg]);
                }
                for j in 0..=n {
                    let n1 = n - j;
                    let f = (0.5 * (ln_fact[n1] + ln_fact[j] - ln_norm)).exp();
                    acc[j] += amp * f * poly[n1];
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; n + 1];
    for part in partials {
        total.iter_mut().zip(part).for_each(|(a, b)| *a += b);
    }
    total
}

/// Projects the state onto `|N-2n⟩|2n⟩` in the two leading natural orbitals.
pub fn two_mode_decompose(
    state: &[f64],
    basis: &FockBasis,
    orbitals: &NaturalOrbitals,
) -> Result<TwoModeDecomposition> {
    check_normalized(state, basis)?;
    let n = basis.n_particles();
    if n % 2 == 1 {
        return Err(Error::OddParticleNumber(n));
    }
    if orbitals.orbitals.len() < 2 {
        return Err(Error::InvalidArgument(
            "two-mode decomposition needs two orbitals".into(),
        ));
    }
    let amps = two_mode_amplitudes(state, basis, orbitals.leading(), orbitals.second());
    let coefficients: Vec<f64> = (0..=n / 2).map(|i| amps[2 * i]).collect();
    let probabilities: Vec<f64> = coefficients.iter().map(|c| c * c).collect();
    let fidelity = probabilities.iter().sum();
    let odd_weight = amps.iter().skip(1).step_by(2).map(|c| c * c).sum();
    Ok(TwoModeDecomposition {
        coefficients,
        probabilities,
        fidelity,
        odd_weight,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct QfiResult {
    pub fq: f64,
    pub mean_n1: f64,
    pub var_n1: f64,
    /// Cramér–Rao phase bound `1/√F_Q`.
    pub dphi: f64,
}

impl QfiResult {
    fn from_moments(mean_n1: f64, var_n1: f64) -> Self {
        let var_n1 = var_n1.max(0.0);
        let fq = 4.0 * var_n1;
        Self {
            fq,
            mean_n1,
            var_n1,
            dphi: 1.0 / fq.sqrt(),
        }
    }
}

/// `F_Q = 4 Var(n₁)` for the leading natural orbital, from `⟨n₁⟩ = cᵀρc`
/// and `⟨n₁²⟩ = ⟨n₁⟩ + ‖b b Ψ‖²` with `b = Σ c_k a_k`.
pub fn qfi(state: &[f64], basis: &FockBasis, rho: &Spdm, orbitals: &NaturalOrbitals) -> Result<QfiResult> {
    check_normalized(state, basis)?;
    let c = orbitals.leading();
    let lam = orbitals.occupations[0];
    let rc = &rho.matrix * nalgebra::DVector::from_column_slice(c);
    let residual = rc.iter().zip(c).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
    let n = basis.n_particles() as f64;
    if residual > 1e-8 * n.max(1.0) {
        return Err(Error::InconsistentOrbitals { residual });
    }
    let mean = rho.expectation(c);

    let mut pairs: HashMap<Vec<u8>, f64> = HashMap::new();
    let m = basis.n_modes();
    let mut occ = Vec::with_capacity(m);
    for (s, &amp) in state.iter().enumerate() {
        if amp == 0.0 {
            continue;
        }
        occ.clear();
        occ.extend_from_slice(basis.state(s).occupations());
        for k in 0..m {
            if occ[k] == 0 || c[k] == 0.0 {
                continue;
            }
            let nk = occ[k] as f64;
            occ[k] -= 1;
            for l in k..m {
                if occ[l] == 0 || c[l] == 0.0 {
                    continue;
                }
                let nl = occ[l] as f64;
                let mult = if l == k { 1.0 } else { 2.0 };
                occ[l] -= 1;
                *pairs.entry(occ.clone()).or_insert(0.0) += mult * c[k] * c[l] * (nk * nl).sqrt() * amp;
                occ[l] += 1;
            }
            occ[k] += 1;
        }
    }
    let mut entries: Vec<(Vec<u8>, f64)> = pairs.into_iter().collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let pair_norm: f64 = entries.iter().map(|(_, a)| a * a).sum();
    let second = mean + pair_norm;
    Ok(QfiResult::from_moments(mean, second - mean * mean))
}

/// QFI from the variance of mode 0 after rotating into the natural orbitals.
pub fn qfi_by_rotation(state: &[f64], basis: &FockBasis, orbitals: &NaturalOrbitals, cap: usize) -> Result<QfiResult> {
    let rotated = mode_rotate(state, basis, &orbitals.rotation(), cap)?;
    let (mean, var) = rotated.number_moments(0);
    Ok(QfiResult::from_moments(mean, var))
}

/// Everything reported about a ground state.
#[derive(Debug, Clone, Serialize)]
pub struct MetrologyReport {
    pub occupations: Vec<f64>,
    pub orbital_parity: Vec<OrbitalParity>,
    /// Mode labels for the orbital coefficient lists.
    pub modes: Vec<String>,
    pub psi1: Vec<f64>,
    pub psi2: Vec<f64>,
    pub two_mode: Option<TwoModeDecomposition>,
    pub qfi: QfiResult,
    pub signed_imbalance: Option<f64>,
}

impl MetrologyReport {
    pub fn lam(&self, i: usize) -> f64 {
        self.occupations.get(i).copied().unwrap_or(0.0)
    }

    pub fn fidelity(&self) -> f64 {
        self.two_mode.as_ref().map_or(f64::NAN, |t| t.fidelity)
    }
}

pub fn analyze(state: &[f64], basis: &FockBasis) -> Result<MetrologyReport> {
    let rho = spdm(state, basis)?;
    rho.check_valid()?;
    let orbitals = natural_orbitals(&rho);
    let two_mode = if basis.n_particles().is_multiple_of(2) && orbitals.orbitals.len() >= 2 {
        Some(two_mode_decompose(state, basis, &orbitals)?)
    } else {
        None
    };
    let qfi = qfi(state, basis, &rho, &orbitals)?;
    let second = orbitals.orbitals.get(1).cloned().unwrap_or_default();
    Ok(MetrologyReport {
        occupations: orbitals.occupations.clone(),
        orbital_parity: orbitals.parity.clone(),
        modes: basis.modes().iter().map(|m| m.to_string()).collect(),
        psi1: orbitals.leading().to_vec(),
        psi2: second,
        two_mode,
        qfi,
        signed_imbalance: orbitals.signed_imbalance(),
    })
}
