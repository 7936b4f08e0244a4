//! Rotation sweeps and the studies built on them: locating the critical
//! rotation, the left half-width of the Fisher-information resonance,
//! truncation comparisons, and isotropic per-L spectra.

use std::f64::consts::PI;

use serde::Serialize;

use crate::basis::{build_basis, BasisSpec, FockBasis};
use crate::eigensolver::{lowest_eigenpairs, EigenResult, SolverConfig};
use crate::error::{Error, Result};
use crate::hamiltonian::{assemble, HamiltonianParts};
use crate::matelems::build_tables;
use crate::observables::{analyze, MetrologyReport};

/// Absolute tolerance on the critical rotation.
pub const OMEGA_TOL: f64 = 1e-6;

/// Basis and Hamiltonian pieces for one truncation; independent of `Ω`, `g`, `A`.
#[derive(Debug)]
pub struct Model {
    pub basis: FockBasis,
    pub parts: HamiltonianParts,
}

impl Model {
    pub fn build(spec: &BasisSpec, basis_cap: usize) -> Result<Self> {
        let basis = build_basis(spec, basis_cap)?;
        let (interaction, anisotropy) = build_tables(basis.modes());
        let parts = assemble(&basis, &interaction, &anisotropy)?;
        Ok(Self { basis, parts })
    }

    pub fn spec(&self) -> &BasisSpec {
        self.basis.spec()
    }

    pub fn solve(&self, c: Couplings, omega: f64, solver: &SolverConfig, start: Option<&[f64]>) -> Result<EigenResult> {
        lowest_eigenpairs(&self.parts.at(omega, c.g, c.anisotropy), solver, start)
    }

    /// Ground state and its analysis at one rotation.
    pub fn evaluate(
        &self,
        c: Couplings,
        omega: f64,
        solver: &SolverConfig,
        start: Option<&[f64]>,
    ) -> Result<Evaluation> {
        let eig = self.solve(c, omega, solver, start)?;
        let report = analyze(eig.ground_state(), &self.basis)?;
        let spec = self.spec();
        let point = SweepPoint {
            omega,
            g: c.g,
            anisotropy: c.anisotropy,
            n_ll: spec.n_ll,
            l_min: spec.l_min,
            l_max: spec.l_max,
            e0: eig.ground_energy(),
            gap: eig.gap(),
            lam1: report.lam(0),
            lam2: report.lam(1),
            lam3: report.lam(2),
            fidelity: report.fidelity(),
            fq: report.qfi.fq,
            dphi: report.qfi.dphi,
            converged: eig.all_converged(),
        };
        Ok(Evaluation { point, report, eig })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Couplings {
    pub g: f64,
    pub anisotropy: f64,
}

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub omega: f64,
    pub g: f64,
    #[serde(rename = "A")]
    pub anisotropy: f64,
    pub n_ll: u32,
    pub l_min: i32,
    pub l_max: i32,
    pub e0: f64,
    pub gap: f64,
    pub lam1: f64,
    pub lam2: f64,
    pub lam3: f64,
    pub fidelity: f64,
    pub fq: f64,
    pub dphi: f64,
    #[serde(skip)]
    pub converged: bool,
}

/// Column order of sweep CSV files.
pub const SWEEP_HEADER: [&str; 14] = [
    "omega", "g", "A", "n_ll", "l_min", "l_max", "e0", "gap", "lam1", "lam2", "lam3", "fidelity", "fq", "dphi",
];

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub point: SweepPoint,
    pub report: MetrologyReport,
    pub eig: EigenResult,
}

impl Evaluation {
    /// Top even-orbital occupation minus top odd-orbital occupation.
    pub fn imbalance(&self) -> f64 {
        self.report.signed_imbalance.unwrap_or(f64::NAN)
    }
}

/// `steps` evenly spaced rotations over `[lo, hi]`, endpoints included.
pub fn omega_grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..steps)
            .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}

fn check_range(lo: f64, hi: f64) -> Result<()> {
    if !(0.0 <= lo && lo < hi && hi < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "rotation range [{lo}, {hi}] must satisfy 0 <= lo < hi < 1"
        )));
    }
    Ok(())
}

/// Warm-started sweep; a point whose solve fails is reported and the chain restarts cold.
pub fn sweep_omega(
    model: &Model,
    c: Couplings,
    lo: f64,
    hi: f64,
    steps: usize,
    solver: &SolverConfig,
) -> Result<Vec<Evaluation>> {
    check_range(lo, hi)?;
    let mut out = Vec::with_capacity(steps);
    let mut start: Option<Vec<f64>> = None;
    for omega in omega_grid(lo, hi, steps) {
        let ev = model.evaluate(c, omega, solver, start.as_deref())?;
        if !ev.point.converged {
            eprintln!("warning: eigensolver not converged at omega = {omega}");
            start = None;
        } else {
            start = Some(ev.eig.ground_state().to_vec());
        }
        out.push(ev);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalPoint {
    pub omega_c: f64,
    pub bracket: [f64; 2],
    /// Signed occupation difference at `omega_c`.
    pub residual: f64,
    pub point: SweepPoint,
    pub report: MetrologyReport,
    /// Coarse-scan samples `(Ω, s(Ω))`.
    pub coarse: Vec<[f64; 2]>,
}

/// Locates the rotation where the leading even and odd natural orbitals
/// are equally occupied: a coarse scan for the first sign change of the
/// signed imbalance, then Illinois false position down to [`OMEGA_TOL`].
pub fn find_critical(
    model: &Model,
    c: Couplings,
    lo: f64,
    hi: f64,
    steps: usize,
    solver: &SolverConfig,
) -> Result<CriticalPoint> {
    check_range(lo, hi)?;
    let n = model.basis.n_particles() as f64;
    let mut coarse = Vec::new();
    let mut prev: Option<Evaluation> = None;
    let mut found = None;
    for omega in omega_grid(lo, hi, steps.max(2)) {
        let ev = model.evaluate(c, omega, solver, prev.as_ref().map(|p| p.eig.ground_state()))?;
        let s = ev.imbalance();
        coarse.push([omega, s]);
        if let Some(p) = &prev {
            if p.imbalance() > 0.0 && s <= 0.0 {
                found = Some((p.clone(), ev));
                break;
            }
        }
        prev = Some(ev);
    }
    let (mut left, mut right) = found.ok_or(Error::NoCrossing { lo, hi })?;
    if right.imbalance() == 0.0 {
        return Ok(critical_from(
            right.clone(),
            [left.point.omega, right.point.omega],
            coarse,
        ));
    }

    let (mut fl, mut fr) = (left.imbalance(), right.imbalance());
    let mut side = 0i8;
    let mut best = if fl.abs() < fr.abs() {
        left.clone()
    } else {
        right.clone()
    };
    for _ in 0..200 {
        let (a, b) = (left.point.omega, right.point.omega);
        let width = b - a;
        if (width <= OMEGA_TOL && best.imbalance().abs() <= OMEGA_TOL * n) || width <= 1e-13 {
            break;
        }
        let mut x = (a * fr - b * fl) / (fr - fl);
        if !(x > a && x < b) || width > 0.25 * (hi - lo) {
            x = 0.5 * (a + b);
        }
        let start = if (x - a) < (b - x) {
            left.eig.ground_state()
        } else {
            right.eig.ground_state()
        };
        let ev = model.evaluate(c, x, solver, Some(start))?;
        let s = ev.imbalance();
        if s.abs() < best.imbalance().abs() {
            best = ev.clone();
        }
        if s == 0.0 {
            best = ev;
            break;
        }
        if s > 0.0 {
            left = ev;
            fl = s;
            if side == -1 {
                fr *= 0.5;
            }
            side = -1;
        } else {
            right = ev;
            fr = s;
            if side == 1 {
                fl *= 0.5;
            }
            side = 1;
        }
    }
    Ok(critical_from(best, [left.point.omega, right.point.omega], coarse))
}

fn critical_from(ev: Evaluation, bracket: [f64; 2], coarse: Vec<[f64; 2]>) -> CriticalPoint {
    CriticalPoint {
        omega_c: ev.point.omega,
        bracket,
        residual: ev.imbalance(),
        point: ev.point,
        report: ev.report,
        coarse,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WidthResult {
    pub omega_c: f64,
    pub fq_c: f64,
    /// Rotation below `omega_c` where `F_Q` has dropped to half of `fq_c`.
    pub omega_half: f64,
    pub width: f64,
    /// Largest `F_Q` seen while scanning.
    pub fq_max_seen: f64,
    pub peak_warning: bool,
    /// Samples `(Ω, F_Q)` visited, in evaluation order.
    pub samples: Vec<[f64; 2]>,
}

/// Left half-width of a resonance `fq(Ω)` peaked at `omega_c`.
///
/// Steps down from `omega_c` with doubling offsets starting at `first_step`
/// until `fq` falls below half its value at `omega_c`, then bisects the
/// last interval to `resolution` of the width.
pub fn left_half_width(
    mut fq: impl FnMut(f64) -> Result<f64>,
    omega_c: f64,
    floor: f64,
    first_step: f64,
    resolution: f64,
) -> Result<WidthResult> {
    let fq_c = fq(omega_c)?;
    let half = 0.5 * fq_c;
    let mut samples = vec![[omega_c, fq_c]];
    let mut max_seen = fq_c;
    let mut inner = omega_c;
    let mut step = first_step;
    let outer = loop {
        let omega = (omega_c - step).max(floor);
        let f = fq(omega)?;
        samples.push([omega, f]);
        max_seen = max_seen.max(f);
        if f <= half {
            break omega;
        }
        if omega <= floor {
            return Err(Error::InvalidArgument(format!(
                "F_Q stays above half maximum down to omega = {floor}"
            )));
        }
        inner = omega;
        step *= 2.0;
    };
    let (mut hi, mut lo) = (inner, outer);
    while hi - lo > resolution * (omega_c - lo).max(f64::MIN_POSITIVE) && hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        let f = fq(mid)?;
        samples.push([mid, f]);
        max_seen = max_seen.max(f);
        if f <= half {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let omega_half = 0.5 * (lo + hi);
    Ok(WidthResult {
        omega_c,
        fq_c,
        omega_half,
        width: omega_c - omega_half,
        fq_max_seen: max_seen,
        peak_warning: max_seen > 1.01 * fq_c,
        samples,
    })
}

/// Left half-width of the model's `F_Q(Ω)` below a located critical rotation.
pub fn qfi_width(model: &Model, c: Couplings, omega_c: f64, solver: &SolverConfig) -> Result<WidthResult> {
    let mut warm: Option<Vec<f64>> = None;
    let result = left_half_width(
        |omega| {
            let ev = model.evaluate(c, omega, solver, warm.as_deref())?;
            warm = Some(ev.eig.ground_state().to_vec());
            Ok(ev.point.fq)
        },
        omega_c,
        0.0,
        OMEGA_TOL,
        1e-3,
    )?;
    if result.peak_warning {
        eprintln!(
            "warning: F_Q peak {} exceeds F_Q(omega_c) = {} by more than 1%",
            result.fq_max_seen, result.fq_c
        );
    }
    Ok(result)
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncationComparison {
    pub levels: [u32; 2],
    pub omega_c: [f64; 2],
    /// `F_Q` of each truncation at the lower truncation's `omega_c`.
    pub fq_at_lower: [f64; 2],
    pub frac_omega_c: f64,
    pub frac_fq: f64,
}

/// Fractional changes between two truncations: of `omega_c` relative to
/// the lower one, and of `F_Q` at the lower `omega_c` relative to the higher one.
pub fn compare_truncations(
    lower: &Model,
    higher: &Model,
    c: Couplings,
    brackets: [(f64, f64); 2],
    steps: usize,
    solver: &SolverConfig,
) -> Result<TruncationComparison> {
    let a = find_critical(lower, c, brackets[0].0, brackets[0].1, steps, solver)?;
    let (omega_b, fq_b) = if std::ptr::eq(lower, higher) {
        (a.omega_c, a.point.fq)
    } else {
        let b = find_critical(higher, c, brackets[1].0, brackets[1].1, steps, solver)?;
        (b.omega_c, higher.evaluate(c, a.omega_c, solver, None)?.point.fq)
    };
    Ok(TruncationComparison {
        levels: [lower.spec().n_ll, higher.spec().n_ll],
        omega_c: [a.omega_c, omega_b],
        fq_at_lower: [a.point.fq, fq_b],
        frac_omega_c: (omega_b - a.omega_c).abs() / a.omega_c,
        frac_fq: (fq_b - a.point.fq).abs() / fq_b,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockLevel {
    pub l: i32,
    /// Lowest block eigenvalue at `Ω = 0`.
    pub e0_static: f64,
    /// Lowest block eigenvalue at the requested rotation.
    pub e0: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IsotropicSpectrum {
    pub omega: f64,
    pub g: f64,
    pub levels: Vec<BlockLevel>,
    /// First rotation at which a block with `L > 0` reaches the `L = 0` energy.
    pub omega_1: Option<f64>,
    /// Angular momentum of the block that crosses first.
    pub l_first: Option<i32>,
}

impl IsotropicSpectrum {
    /// `E0(L)` at rotation `omega`, exact since `L` is conserved.
    pub fn energy_at(&self, l: i32, omega: f64) -> Option<f64> {
        self.levels
            .iter()
            .find(|b| b.l == l)
            .map(|b| b.e0_static - omega * l as f64)
    }
}

/// Lowest eigenvalue of every `L` block of the isotropic Hamiltonian.
pub fn isotropic_spectrum_per_l(model: &Model, g: f64, omega: f64, solver: &SolverConfig) -> Result<IsotropicSpectrum> {
    let one = SolverConfig {
        n_eigs: 1,
        ..solver.clone()
    };
    let mut levels = Vec::new();
    for (l, range) in model.basis.blocks() {
        if range.is_empty() {
            continue;
        }
        let block = model.parts.restrict(range.clone());
        let e = lowest_eigenpairs(&block.at(0.0, g, 0.0), &one, None)?;
        if !e.all_converged() {
            return Err(Error::NotConverged(format!("block L = {l}")));
        }
        let e0_static = e.ground_energy();
        levels.push(BlockLevel {
            l: *l,
            e0_static,
            e0: e0_static - omega * *l as f64,
        });
    }
    let base = levels.iter().find(|b| b.l == 0).map(|b| b.e0_static);
    let mut first: Option<(f64, i32)> = None;
    if let Some(e_zero) = base {
        for b in levels.iter().filter(|b| b.l > 0) {
            let cross = (b.e0_static - e_zero) / b.l as f64;
            if first.is_none_or(|(w, _)| cross < w) {
                first = Some((cross, b.l));
            }
        }
    }
    Ok(IsotropicSpectrum {
        omega,
        g,
        levels,
        omega_1: first.map(|f| f.0),
        l_first: first.map(|f| f.1),
    })
}

/// Advisory numbers on how far the lowest-level picture can be trusted.
#[derive(Debug, Clone, Serialize)]
pub struct ValidityDiagnostics {
    pub n_g: f64,
    /// `2π / (1 - Ω)`.
    pub rotation_bound: f64,
    /// `N g` over the rotation bound; small means the lowest level suffices.
    pub ratio: f64,
    /// Empirical crossover coupling `6.92 N^-1.046` for first-vortex nucleation.
    pub g_max: f64,
    pub g_over_g_max: f64,
}

pub fn validity_diagnostics(n_particles: usize, g: f64, omega: f64) -> ValidityDiagnostics {
    let n = n_particles as f64;
    let rotation_bound = 2.0 * PI / (1.0 - omega);
    let g_max = 6.92 * n.powf(-1.046);
    ValidityDiagnostics {
        n_g: n * g,
        rotation_bound,
        ratio: n * g / rotation_bound,
        g_max,
        g_over_g_max: g / g_max,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LmaxConvergence {
    pub l_max: i32,
    pub omega_c: f64,
    pub omega_c_wider: f64,
    pub shift: f64,
}

/// Shift of `omega_c` when the angular-momentum cutoff is raised by two.
pub fn lmax_convergence(
    spec: &BasisSpec,
    basis_cap: usize,
    c: Couplings,
    lo: f64,
    hi: f64,
    steps: usize,
    solver: &SolverConfig,
) -> Result<LmaxConvergence> {
    let base = find_critical(&Model::build(spec, basis_cap)?, c, lo, hi, steps, solver)?;
    let mut wider = *spec;
    wider.l_max += 2;
    let wide = find_critical(&Model::build(&wider, basis_cap)?, c, lo, hi, steps, solver)?;
    Ok(LmaxConvergence {
        l_max: spec.l_max,
        omega_c: base.omega_c,
        omega_c_wider: wide.omega_c,
        shift: (wide.omega_c - base.omega_c).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{LSector, DEFAULT_BASIS_CAP};

    fn model(n: usize, n_ll: u32, l_min: i32, l_max: i32) -> Model {
        Model::build(&BasisSpec::new(n, n_ll, l_min, l_max).unwrap(), DEFAULT_BASIS_CAP).unwrap()
    }

    #[test]
    fn grid_includes_endpoints() {
        let g = omega_grid(0.5, 0.9, 5);
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], 0.5);
        assert_eq!(g[4], 0.9);
    }

    #[test]
    fn isotropic_sweep_below_nucleation_is_condensed() {
        let m = model(6, 1, 0, 10);
        let pts = sweep_omega(
            &m,
            Couplings {
                g: 0.5,
                anisotropy: 0.0,
            },
            0.3,
            0.6,
            4,
            &SolverConfig::default(),
        )
        .unwrap();
        for ev in &pts {
            assert!((ev.point.lam1 - 6.0).abs() < 1e-8);
            assert!(ev.point.fq.abs() < 1e-8);
            assert!(ev.point.converged);
        }
    }

    #[test]
    fn sweep_columns_are_sane() {
        let m = model(4, 2, -2, 8);
        let pts = sweep_omega(
            &m,
            Couplings {
                g: 0.5,
                anisotropy: 0.03,
            },
            0.7,
            0.95,
            6,
            &SolverConfig::default(),
        )
        .unwrap();
        for ev in &pts {
            let p = &ev.point;
            assert!(p.lam1 >= p.lam2 - 1e-6 && p.lam2 >= p.lam3 - 1e-6 && p.lam3 >= -1e-10);
            assert!(p.fq >= 0.0 && p.gap >= -1e-9);
        }
    }

    #[test]
    fn rejects_bad_range() {
        let m = model(2, 1, 0, 2);
        let c = Couplings {
            g: 0.1,
            anisotropy: 0.0,
        };
        assert!(sweep_omega(&m, c, 0.8, 0.7, 3, &SolverConfig::default()).is_err());
        assert!(sweep_omega(&m, c, 0.5, 1.0, 3, &SolverConfig::default()).is_err());
    }

    #[test]
    fn lowest_level_blocks_are_degenerate_at_nucleation() {
        let n = 6;
        let g = 0.5;
        let m = model(n, 1, 0, n as i32);
        let spec = isotropic_spectrum_per_l(&m, g, 0.0, &SolverConfig::default()).unwrap();
        let omega_1 = spec.omega_1.unwrap();
        let expected = 1.0 - g * n as f64 / (8.0 * PI);
        assert!((omega_1 - expected).abs() < 1e-10);
        let e0 = spec.energy_at(0, omega_1).unwrap();
        for l in (2..=n as i32).step_by(2) {
            assert!((spec.energy_at(l, omega_1).unwrap() - e0).abs() < 1e-8);
        }
    }

    #[test]
    fn noninteracting_block_energies() {
        let m = model(4, 1, 0, 6);
        let spec = isotropic_spectrum_per_l(&m, 0.0, 0.3, &SolverConfig::default()).unwrap();
        for b in &spec.levels {
            assert!((b.e0 - (4.0 + 0.7 * b.l as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn synthetic_lorentzian_width() {
        let (center, gamma, height) = (0.8, 3e-4, 20.0);
        let lorentz = |w: f64| Ok(height / (1.0 + ((w - center) / gamma).powi(2)));
        let res = left_half_width(lorentz, center, 0.0, 1e-6, 1e-4).unwrap();
        assert!((res.width - gamma).abs() < 1e-4 * gamma);
        assert!(!res.peak_warning);
    }

    #[test]
    fn off_center_peak_is_flagged() {
        let lorentz = |w: f64| Ok(1.0 / (1.0 + ((w - 0.79) / 0.01).powi(2)));
        let res = left_half_width(lorentz, 0.8, 0.0, 1e-6, 1e-3).unwrap();
        assert!(res.peak_warning);
    }

    #[test]
    fn validity_numbers() {
        let d = validity_diagnostics(12, 0.5, 0.776);
        assert_eq!(d.n_g, 6.0);
        assert!((d.rotation_bound - 28.05).abs() < 0.01);
        assert!((d.ratio - 0.2139).abs() < 1e-3);
        assert!((d.g_max - 0.5136).abs() < 1e-3);
        assert!(validity_diagnostics(12, 0.5, 1.0 - 1e-12).ratio < 1e-10);
    }

    #[test]
    fn critical_point_small_system() {
        let m = Model::build(
            &BasisSpec::new(4, 1, 0, 8).unwrap().with_sector(LSector::Even),
            DEFAULT_BASIS_CAP,
        )
        .unwrap();
        let c = Couplings {
            g: 1.5,
            anisotropy: 0.03,
        };
        let cp = find_critical(&m, c, 0.5, 0.98, 40, &SolverConfig::default()).unwrap();
        assert!(cp.bracket[1] - cp.bracket[0] <= 1e-6 || cp.residual.abs() <= 4e-6);
        assert!(cp.residual.abs() <= 4e-6);
        assert!((cp.point.lam1 - cp.point.lam2).abs() <= 4e-6);
        let crossing = cp.coarse.windows(2).find(|w| w[0][1] > 0.0 && w[1][1] <= 0.0).unwrap();
        assert!(cp.omega_c >= crossing[0][0] && cp.omega_c <= crossing[1][0]);
    }

    #[test]
    fn identical_truncations_compare_to_zero() {
        let m = Model::build(
            &BasisSpec::new(4, 1, 0, 8).unwrap().with_sector(LSector::Even),
            DEFAULT_BASIS_CAP,
        )
        .unwrap();
        let c = Couplings {
            g: 1.5,
            anisotropy: 0.03,
        };
        let r = compare_truncations(&m, &m, c, [(0.5, 0.98); 2], 30, &SolverConfig::default()).unwrap();
        assert_eq!(r.frac_omega_c, 0.0);
        assert_eq!(r.frac_fq, 0.0);
    }

    #[test]
    fn lowest_level_embeds_in_two_levels() {
        let low = model(4, 1, 0, 6);
        let high = model(4, 2, -2, 6);
        let (g, a, omega) = (0.7, 0.03, 0.8);
        let lo_op = low.parts.at(omega, g, a).to_dense(1000).unwrap();
        let hi_op = high.parts.at(omega, g, a).to_dense(5000).unwrap();
        let embed = |i: usize| -> usize {
            let occ = low.basis.state(i).occupations();
            let mut big = vec![0u8; high.basis.n_modes()];
            for (k, mode) in low.basis.modes().iter().enumerate() {
                big[high.basis.mode_index(*mode).unwrap()] = occ[k];
            }
            high.basis.lookup(&big).unwrap()
        };
        for i in 0..low.basis.dim() {
            for j in 0..low.basis.dim() {
                assert_eq!(lo_op[(i, j)], hi_op[(embed(i), embed(j))]);
            }
        }
    }
}
