//! Lowest eigenpairs of the real symmetric Hamiltonian.
//!
//! The Krylov solver is a thick-restart Lanczos iteration with full
//! reorthogonalization: the projected matrix `Vᵀ H V` is formed explicitly
//! from stored `H v` products, so kept Ritz vectors and the pending Krylov
//! direction carry over across restarts without loss of orthogonality.
//! Near-degenerate pairs (the avoided crossing at the critical rotation)
//! are both resolved because every cycle keeps a block of Ritz vectors.
//!
//! Small problems go straight to a dense symmetric solve.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::{LinearOperator, Operator};

/// Default dense-solve cap.
pub const DEFAULT_DENSE_CAP: usize = 4000;

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Number of lowest eigenpairs requested.
    pub n_eigs: usize,
    /// Residual-norm tolerance `‖Hv - λv‖`.
    pub tol: f64,
    pub seed: u64,
    pub max_restarts: usize,
    /// Krylov subspace size per cycle; `None` picks `max(2k + 20, 40)`.
    pub krylov_dim: Option<usize>,
    /// Dimensions up to this size use the dense solver.
    pub dense_below: usize,
    /// Relative weight of the seeded random vector mixed into a warm start.
    pub start_mix: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_eigs: 4,
            tol: 1e-10,
            seed: 1,
            max_restarts: 500,
            krylov_dim: None,
            dense_below: 64,
            start_mix: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenResult {
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<f64>,
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
    pub residual_norms: Vec<f64>,
    /// Number of operator applications.
    pub iterations: usize,
    pub converged: Vec<bool>,
}

impl EigenResult {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn ground_state(&self) -> &[f64] {
        &self.eigenvectors[0]
    }

    /// `E1 - E0`, zero when only one pair is available.
    pub fn gap(&self) -> f64 {
        if self.eigenvalues.len() < 2 {
            0.0
        } else {
            self.eigenvalues[1] - self.eigenvalues[0]
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn scale(v: &mut [f64], s: f64) {
    v.iter_mut().for_each(|x| *x *= s);
}

/// Two passes of classical Gram–Schmidt against `basis`; returns the norm left.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) -> f64 {
    for _ in 0..2 {
        let coeffs: Vec<f64> = basis.iter().map(|b| dot(b, v)).collect();
        for (b, c) in basis.iter().zip(coeffs) {
            axpy(-c, b, v);
        }
    }
    norm(v)
}

fn random_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Flips the sign so the largest-magnitude component is positive.
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    for &x in v.iter() {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    if best < 0.0 {
        scale(v, -1.0);
    }
}

fn combine(vectors: &[Vec<f64>], coeffs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out = vec![0.0; vectors[0].len()];
    for (v, c) in vectors.iter().zip(coeffs) {
        axpy(c, v, &mut out);
    }
    out
}

/// Lowest `cfg.n_eigs` eigenpairs of `op`, optionally warm-started.
pub fn lowest_eigenpairs<A: LinearOperator + ?Sized>(
    op: &A,
    cfg: &SolverConfig,
    start: Option<&[f64]>,
) -> Result<EigenResult> {
    let dim = op.dim();
    if cfg.n_eigs == 0 {
        return Err(Error::InvalidArgument("n_eigs must be at least 1".into()));
    }
    if cfg.tol.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    if let Some(s) = start {
        if s.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: s.len(),
            });
        }
    }
    let k = cfg.n_eigs.min(dim);
    if dim <= cfg.dense_below || dim <= k + 2 {
        return Ok(dense_lowest(op, k));
    }

    let m = cfg.krylov_dim.unwrap_or((2 * k + 20).max(40)).min(dim).max(k + 2);
    let keep = (m / 2).max(k + 5).min(m - 2);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut next = match start {
        Some(s) => {
            let mut v = s.to_vec();
            let n0 = norm(&v).max(f64::MIN_POSITIVE);
            let noise = random_vector(dim, &mut rng);
            let nn = norm(&noise);
            axpy(cfg.start_mix * n0 / nn, &noise, &mut v);
            v
        }
        None => random_vector(dim, &mut rng),
    };
    let nv = norm(&next);
    scale(&mut next, 1.0 / nv);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut projected = DMatrix::<f64>::zeros(m, m);
    let mut matvecs = 0usize;

    for _restart in 0..=cfg.max_restarts {
        while basis.len() < m {
            let j = basis.len();
            let w = op.apply(&next);
            matvecs += 1;
            basis.push(std::mem::take(&mut next));
            for i in 0..=j {
                let t = dot(&basis[i], &w);
                projected[(i, j)] = t;
                projected[(j, i)] = t;
            }
            let mut r = w.clone();
            images.push(w);
            let wn = norm(&r).max(1.0);
            let mut rn = orthogonalize(&mut r, &basis);
            // Invariant subspace reached: continue from a fresh random direction.
            let mut tries = 0;
            while rn < 1e-10 * wn && tries < 5 {
                r = random_vector(dim, &mut rng);
                rn = orthogonalize(&mut r, &basis);
                tries += 1;
            }
            scale(&mut r, 1.0 / rn);
            next = r;
            if basis.len() == dim {
                break;
            }
        }

        let size = basis.len();
        let t = projected.view((0, 0), (size, size)).clone_owned();
        let t = (&t + t.transpose()) * 0.5;
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let n_keep = if size == dim { size } else { keep.min(size) };
        let mut ritz = Vec::with_capacity(n_keep);
        let mut ritz_images = Vec::with_capacity(n_keep);
        let mut thetas = Vec::with_capacity(n_keep);
        let mut estimates = Vec::with_capacity(n_keep);
        for &c in order.iter().take(n_keep) {
            let y = eig.eigenvectors.column(c);
            let x = combine(&basis, y.iter().copied());
            let hx = combine(&images, y.iter().copied());
            let theta = eig.eigenvalues[c];
            let mut res = hx.clone();
            axpy(-theta, &x, &mut res);
            estimates.push(norm(&res));
            ritz.push(x);
            ritz_images.push(hx);
            thetas.push(theta);
        }

        let settled = size == dim || estimates[..k].iter().all(|&e| e <= 0.5 * cfg.tol);
        if settled {
            let result = finalize(op, &ritz[..k], &thetas[..k], matvecs, cfg.tol);
            matvecs = result.iterations;
            if result.all_converged() || size == dim {
                return Ok(result);
            }
        }

        // Thick restart: keep the Ritz block, continue from the pending direction.
        basis = ritz;
        images = ritz_images;
        projected.fill(0.0);
        for i in 0..basis.len() {
            for j in 0..=i {
                let v = dot(&basis[i], &images[j]);
                projected[(i, j)] = v;
                projected[(j, i)] = v;
            }
        }
        let rn = orthogonalize(&mut next, &basis);
        if rn < 1e-12 {
            next = random_vector(dim, &mut rng);
            let rn = orthogonalize(&mut next, &basis);
            scale(&mut next, 1.0 / rn);
        } else {
            scale(&mut next, 1.0 / rn);
        }
    }

    // Out of restarts: report what we have, flagged.
    let size = basis.len().min(k);
    let thetas: Vec<f64> = (0..size).map(|i| dot(&basis[i], &images[i])).collect();
    Ok(finalize(op, &basis[..size], &thetas, matvecs, cfg.tol))
}

fn finalize<A: LinearOperator + ?Sized>(
    op: &A,
    vectors: &[Vec<f64>],
    thetas: &[f64],
    mut matvecs: usize,
    tol: f64,
) -> EigenResult {
    let mut eigenvectors = Vec::with_capacity(vectors.len());
    let mut eigenvalues = Vec::with_capacity(vectors.len());
    let mut residual_norms = Vec::with_capacity(vectors.len());
    for (v, &theta) in vectors.iter().zip(thetas) {
        let mut x = v.clone();
        let n = norm(&x);
        scale(&mut x, 1.0 / n);
        fix_sign(&mut x);
        let hx = op.apply(&x);
        matvecs += 1;
        let mut r = hx;
        axpy(-theta, &x, &mut r);
        residual_norms.push(norm(&r));
        eigenvalues.push(theta);
        eigenvectors.push(x);
    }
    let converged = residual_norms.iter().map(|&r| r <= tol).collect();
    EigenResult {
        eigenvalues,
        eigenvectors,
        residual_norms,
        iterations: matvecs,
        converged,
    }
}

fn materialize<A: LinearOperator + ?Sized>(op: &A) -> DMatrix<f64> {
    let n = op.dim();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = op.apply(&e);
        e[j] = 0.0;
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    m
}

fn sorted_eigen(mat: DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mat = (&mat + mat.transpose()) * 0.5;
    let eig = SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            fix_sign(&mut v);
            v
        })
        .collect();
    (values, vectors)
}

fn dense_lowest<A: LinearOperator + ?Sized>(op: &A, k: usize) -> EigenResult {
    let (values, vectors) = sorted_eigen(materialize(op));
    let residual_norms: Vec<f64> = vectors[..k]
        .iter()
        .zip(&values)
        .map(|(v, &lam)| {
            let mut r = op.apply(v);
            axpy(-lam, v, &mut r);
            norm(&r)
        })
        .collect();
    EigenResult {
        eigenvalues: values[..k].to_vec(),
        eigenvectors: vectors[..k].to_vec(),
        converged: vec![true; k],
        residual_norms,
        iterations: op.dim(),
    }
}

/// Full ascending spectrum by dense symmetric diagonalization.
pub fn dense_spectrum(op: &Operator<'_>, cap: usize) -> Result<Vec<f64>> {
    let dense = op.to_dense(cap)?;
    let mut vals: Vec<f64> = SymmetricEigen::new(dense).eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    Ok(vals)
}

/// All eigenpairs by dense diagonalization, ascending.
pub fn dense_eigenpairs(op: &Operator<'_>, cap: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    Ok(sorted_eigen(op.to_dense(cap)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_basis, BasisSpec, DEFAULT_BASIS_CAP};
    use crate::hamiltonian::{assemble, HamiltonianParts};
    use crate::matelems::build_tables;
    use std::f64::consts::PI;

    fn parts(n: usize, n_ll: u32, l_min: i32, l_max: i32) -> HamiltonianParts {
        let basis = build_basis(&BasisSpec::new(n, n_ll, l_min, l_max).unwrap(), DEFAULT_BASIS_CAP).unwrap();
        let (it, at) = build_tables(basis.modes());
        assemble(&basis, &it, &at).unwrap()
    }

    fn krylov_only() -> SolverConfig {
        SolverConfig {
            dense_below: 0,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn noninteracting_condensate_is_lowest() {
        let p = parts(6, 1, 0, 10);
        let res = lowest_eigenpairs(&p.at(0.5, 0.0, 0.0), &krylov_only(), None).unwrap();
        assert!(res.all_converged());
        assert!((res.eigenvalues[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn pair_in_ground_mode() {
        let p = parts(2, 1, 0, 0);
        let g = 0.8;
        let spec = dense_spectrum(&p.at(0.2, g, 0.03), 10).unwrap();
        assert_eq!(spec.len(), 1);
        assert!((spec[0] - (2.0 + g / (2.0 * PI))).abs() < 1e-14);
    }

    #[test]
    fn krylov_matches_dense() {
        let p = parts(5, 2, -2, 9);
        assert!(p.dim() <= 2000);
        let op = p.at(0.78, 0.5, 0.03);
        let dense = dense_spectrum(&op, 2000).unwrap();
        assert_eq!(dense.len(), p.dim());
        let res = lowest_eigenpairs(&op, &krylov_only(), None).unwrap();
        assert!(res.all_converged());
        for (a, b) in res.eigenvalues.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        for (i, v) in res.eigenvectors.iter().enumerate() {
            let hv = op.apply(v);
            let rq = dot(v, &hv);
            assert!((rq - res.eigenvalues[i]).abs() < 1e-10);
            for w in &res.eigenvectors[..i] {
                assert!(dot(v, w).abs() < 1e-10);
            }
            assert!((norm(v) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let p = parts(5, 2, -2, 9);
        let op = p.at(0.8, 0.4, 0.03);
        let a = lowest_eigenpairs(&op, &krylov_only(), None).unwrap();
        let b = lowest_eigenpairs(&op, &krylov_only(), None).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
        assert_eq!(a.eigenvectors, b.eigenvectors);
    }

    #[test]
    fn block_spectra_union_is_full_spectrum() {
        let basis = build_basis(&BasisSpec::new(4, 2, -2, 6).unwrap(), DEFAULT_BASIS_CAP).unwrap();
        let (it, at) = build_tables(basis.modes());
        let p = assemble(&basis, &it, &at).unwrap();
        let full = dense_spectrum(&p.at(0.7, 0.6, 0.0), 4000).unwrap();
        let mut union = Vec::new();
        for (_, range) in basis.blocks() {
            if range.is_empty() {
                continue;
            }
            let sub = p.restrict(range.clone());
            union.extend(dense_spectrum(&sub.at(0.7, 0.6, 0.0), 4000).unwrap());
        }
        union.sort_by(|a, b| a.total_cmp(b));
        assert_eq!(union.len(), full.len());
        for (a, b) in union.iter().zip(&full) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn warm_start_converges_to_same_pairs() {
        let p = parts(5, 2, -2, 9);
        let cold = lowest_eigenpairs(&p.at(0.80, 0.5, 0.03), &krylov_only(), None).unwrap();
        let warm = lowest_eigenpairs(&p.at(0.8001, 0.5, 0.03), &krylov_only(), Some(cold.ground_state())).unwrap();
        let reference = dense_spectrum(&p.at(0.8001, 0.5, 0.03), 4000).unwrap();
        for (a, b) in warm.eigenvalues.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn ground_state_is_continuous_off_criticality() {
        let p = parts(6, 1, 0, 10);
        let a = lowest_eigenpairs(&p.at(0.60, 0.5, 0.03), &krylov_only(), None).unwrap();
        let b = lowest_eigenpairs(&p.at(0.6001, 0.5, 0.03), &krylov_only(), None).unwrap();
        assert!(dot(a.ground_state(), b.ground_state()).abs() > 0.99);
    }

    #[test]
    fn dense_cap_is_enforced() {
        let p = parts(5, 2, -2, 9);
        assert!(matches!(
            dense_spectrum(&p.at(0.5, 0.1, 0.0), 10),
            Err(Error::DenseTooLarge { .. })
        ));
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = parts(3, 1, 0, 3);
        let op = p.at(0.5, 0.1, 0.0);
        let cfg = SolverConfig {
            n_eigs: 0,
            ..SolverConfig::default()
        };
        assert!(lowest_eigenpairs(&op, &cfg, None).is_err());
        let cfg = SolverConfig {
            tol: 0.0,
            ..SolverConfig::default()
        };
        assert!(lowest_eigenpairs(&op, &cfg, None).is_err());
    }
}
