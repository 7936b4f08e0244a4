//! One- and two-body matrix elements in the oscillator `(n, m)` basis.
//!
//! Lengths are in units of the transverse oscillator length and energies in
//! units of the transverse trap quantum. Orbitals are
//! `φ_{n,m}(r, θ) = R_{n,|m|}(r) e^{imθ}` with
//! `R_{n,a}(r) = sqrt(n! / (π (n+a)!)) r^a L_n^a(r²) e^{-r²/2}`.
//!
//! Every radial integral is a polynomial times a Gaussian and is evaluated by
//! a Gauss–Laguerre rule whose order makes it exact.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use crate::basis::SpMode;
use crate::error::Result;
use crate::quadrature::{self, laguerre, GaussLaguerre};

/// Elements below this magnitude are treated as exact zeros.
pub const ZERO_CUTOFF: f64 = 1e-14;

fn ln_factorial(k: u32) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// `ln sqrt(n! / (π (n+|m|)!))`.
fn ln_norm(mode: SpMode) -> f64 {
    let a = mode.m.unsigned_abs();
    0.5 * (ln_factorial(mode.n) - ln_factorial(mode.n + a) - PI.ln())
}

/// Radial part `R_{n,|m|}(r)`, normalized so that `∫ R² r dr = 1/(2π)`.
pub fn radial_wavefunction(mode: SpMode, r: f64) -> f64 {
    let a = mode.m.unsigned_abs();
    let r2 = r * r;
    let poly = laguerre(mode.n, a as f64, r2);
    let power = if a == 0 { 1.0 } else { r.powi(a as i32) };
    ln_norm(mode).exp() * power * poly * (-0.5 * r2).exp()
}

fn order_for(degree: u32) -> usize {
    degree as usize / 2 + 2
}

fn interaction_with(rule: &GaussLaguerre, mut modes: [SpMode; 4]) -> f64 {
    // The integrand is symmetric; a fixed order makes every permutation bit-identical.
    modes.sort();
    let abs_sum: u32 = modes.iter().map(|md| md.m.unsigned_abs()).sum();
    let ln_pref: f64 = modes.iter().map(|&md| ln_norm(md)).sum();
    let half_s = abs_sum as f64 / 2.0;
    // x = 2 r², r dr = dx / 4.
    let radial = rule.integrate(|x| {
        let y = 0.5 * x;
        let polys: f64 = modes
            .iter()
            .map(|md| laguerre(md.n, md.m.unsigned_abs() as f64, y))
            .product();
        (ln_pref + half_s * y.ln()).exp() * polys
    }) / 4.0;
    2.0 * PI * radial
}

fn interaction_degree(modes: [SpMode; 4]) -> u32 {
    let abs_sum: u32 = modes.iter().map(|md| md.m.unsigned_abs()).sum();
    abs_sum / 2 + modes.iter().map(|md| md.n).sum::<u32>()
}

/// `∫ d²r φ_k* φ_l* φ_p φ_q`, the contact-interaction overlap.
pub fn interaction_element(k: SpMode, l: SpMode, p: SpMode, q: SpMode) -> f64 {
    if k.m + l.m != p.m + q.m {
        return 0.0;
    }
    let modes = [k, l, p, q];
    let rule = quadrature::rule(order_for(interaction_degree(modes)));
    interaction_with(&rule, modes)
}

/// Same integral with an explicit quadrature order (for exactness checks).
pub fn interaction_element_with_order(k: SpMode, l: SpMode, p: SpMode, q: SpMode, order: usize) -> f64 {
    if k.m + l.m != p.m + q.m {
        return 0.0;
    }
    interaction_with(&GaussLaguerre::new(order), [k, l, p, q])
}

fn anisotropy_degree(k: SpMode, p: SpMode) -> u32 {
    (k.m.unsigned_abs() + p.m.unsigned_abs()) / 2 + 1 + k.n + p.n
}

fn anisotropy_with(rule: &GaussLaguerre, k: SpMode, p: SpMode) -> f64 {
    let half_s = (k.m.unsigned_abs() + p.m.unsigned_abs()) as f64 / 2.0;
    let ln_pref = ln_norm(k) + ln_norm(p);
    // x = r², r³ dr = x dx / 2; the angular integral of e^{∓2iθ} cos 2θ is π.
    let radial = rule.integrate(|x| {
        let polys = laguerre(k.n, k.m.unsigned_abs() as f64, x) * laguerre(p.n, p.m.unsigned_abs() as f64, x);
        (ln_pref + (half_s + 1.0) * x.ln()).exp() * polys
    }) / 2.0;
    PI * radial
}

/// `⟨p| x² - y² |k⟩`; nonzero only for `m_p = m_k ± 2`.
pub fn anisotropy_element(k: SpMode, p: SpMode) -> f64 {
    if (p.m - k.m).abs() != 2 {
        return 0.0;
    }
    let (a, b) = if k <= p { (k, p) } else { (p, k) };
    let rule = quadrature::rule(order_for(anisotropy_degree(a, b)));
    anisotropy_with(&rule, a, b)
}

pub fn anisotropy_element_with_order(k: SpMode, p: SpMode, order: usize) -> f64 {
    if (p.m - k.m).abs() != 2 {
        return 0.0;
    }
    anisotropy_with(&GaussLaguerre::new(order), k, p)
}

/// Unordered mode-index pair.
pub type Pair = (usize, usize);

/// Canonical key of an unordered mode pair.
fn pair(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Contact-interaction overlaps over a mode list, keyed by mode indices.
///
/// Only one representative per symmetry class is stored: the creation pair
/// and annihilation pair are each sorted, and the two pairs are ordered.
#[derive(Debug, Clone)]
pub struct InteractionTable {
    modes: Vec<SpMode>,
    entries: BTreeMap<(Pair, Pair), f64>,
}

impl InteractionTable {
    pub fn modes(&self) -> &[SpMode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn key(k: usize, l: usize, p: usize, q: usize) -> ((usize, usize), (usize, usize)) {
        let a = pair(k, l);
        let b = pair(p, q);
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    /// Coefficient for mode indices `(k, l -> p, q)`; zero when not stored.
    pub fn get(&self, k: usize, l: usize, p: usize, q: usize) -> f64 {
        self.entries.get(&Self::key(k, l, p, q)).copied().unwrap_or(0.0)
    }

    /// Canonical entries `((k, l), (p, q), value)`.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), (usize, usize), f64)> + '_ {
        self.entries.iter().map(|(&(a, b), &v)| (a, b, v))
    }

    /// For every unordered annihilation pair, the creation pairs it couples to.
    pub fn pair_couplings(&self) -> BTreeMap<Pair, Vec<(Pair, f64)>> {
        let mut out: BTreeMap<Pair, Vec<(Pair, f64)>> = BTreeMap::new();
        for (&(a, b), &v) in &self.entries {
            out.entry(b).or_default().push((a, v));
            if a != b {
                out.entry(a).or_default().push((b, v));
            }
        }
        out
    }

    /// Writes `n_k,m_k,n_l,m_l,n_p,m_p,n_q,m_q,value` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n_k", "m_k", "n_l", "m_l", "n_p", "m_p", "n_q", "m_q", "value"])?;
        for ((k, l), (p, q), v) in self.iter() {
            let mut row: Vec<String> = Vec::with_capacity(9);
            for idx in [k, l, p, q] {
                row.push(self.modes[idx].n.to_string());
                row.push(self.modes[idx].m.to_string());
            }
            row.push(format!("{v:e}"));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `x² - y²` matrix elements, symmetric, stored per mode as neighbour lists.
#[derive(Debug, Clone)]
pub struct AnisotropyTable {
    modes: Vec<SpMode>,
    neighbours: Vec<Vec<(usize, f64)>>,
}

impl AnisotropyTable {
    pub fn modes(&self) -> &[SpMode] {
        &self.modes
    }

    /// Modes `p` with a nonzero `⟨p|x²-y²|k⟩`, with that value.
    pub fn neighbours(&self, k: usize) -> &[(usize, f64)] {
        &self.neighbours[k]
    }

    pub fn get(&self, k: usize, p: usize) -> f64 {
        self.neighbours[k]
            .iter()
            .find(|(j, _)| *j == p)
            .map(|&(_, v)| v)
            .unwrap_or(0.0)
    }

    /// Number of stored unordered pairs.
    pub fn len(&self) -> usize {
        self.neighbours.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Precomputes every nonzero interaction and anisotropy element over `modes`.
pub fn build_tables(modes: &[SpMode]) -> (InteractionTable, AnisotropyTable) {
    let mut rules: BTreeMap<usize, GaussLaguerre> = BTreeMap::new();
    let mut rule_for =
        |order: usize| -> GaussLaguerre { rules.entry(order).or_insert_with(|| GaussLaguerre::new(order)).clone() };

    let mut pairs_by_m: BTreeMap<i32, Vec<(usize, usize)>> = BTreeMap::new();
    for a in 0..modes.len() {
        for b in a..modes.len() {
            pairs_by_m.entry(modes[a].m + modes[b].m).or_default().push((a, b));
        }
    }
    let mut entries = BTreeMap::new();
    for group in pairs_by_m.values() {
        for (i, &(k, l)) in group.iter().enumerate() {
            for &(p, q) in &group[i..] {
                let quad = [modes[k], modes[l], modes[p], modes[q]];
                let rule = rule_for(order_for(interaction_degree(quad)));
                let v = interaction_with(&rule, quad);
                if v.abs() >= ZERO_CUTOFF {
                    entries.insert(((k, l), (p, q)), v);
                }
            }
        }
    }

    let mut neighbours = vec![Vec::new(); modes.len()];
    for k in 0..modes.len() {
        for p in 0..modes.len() {
            if (modes[p].m - modes[k].m).abs() != 2 {
                continue;
            }
            // Evaluate once per unordered pair so both directions are bit-identical.
            let (a, b) = if modes[k] <= modes[p] {
                (modes[k], modes[p])
            } else {
                (modes[p], modes[k])
            };
            let rule = rule_for(order_for(anisotropy_degree(a, b)));
            let v = anisotropy_with(&rule, a, b);
            if v.abs() >= ZERO_CUTOFF {
                neighbours[k].push((p, v));
            }
        }
    }

    (
        InteractionTable {
            modes: modes.to_vec(),
            entries,
        },
        AnisotropyTable {
            modes: modes.to_vec(),
            neighbours,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::enumerate_modes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn factorial(k: i32) -> f64 {
        (1..=k).map(|i| i as f64).product()
    }

    /// Complex orbital value `(re, im)` on the Cartesian plane.
    fn orbital(mode: SpMode, x: f64, y: f64) -> (f64, f64) {
        let r = x.hypot(y);
        let th = y.atan2(x);
        let rad = radial_wavefunction(mode, r);
        let ph = mode.m as f64 * th;
        (rad * ph.cos(), rad * ph.sin())
    }

    fn cmul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
        (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
    }

    /// Trapezoid rule over a Cartesian grid (spectrally accurate for Gaussians).
    fn grid_integral(f: impl Fn(f64, f64) -> (f64, f64)) -> (f64, f64) {
        let h = 0.08;
        let half = 9.0;
        let n = (2.0 * half / h) as i32;
        let mut acc = (0.0, 0.0);
        for i in 0..=n {
            let x = -half + i as f64 * h;
            for j in 0..=n {
                let y = -half + j as f64 * h;
                let v = f(x, y);
                acc.0 += v.0;
                acc.1 += v.1;
            }
        }
        (acc.0 * h * h, acc.1 * h * h)
    }

    fn grid_interaction(k: SpMode, l: SpMode, p: SpMode, q: SpMode) -> (f64, f64) {
        grid_integral(|x, y| {
            let ck = orbital(k, x, y);
            let cl = orbital(l, x, y);
            let bra = cmul((ck.0, -ck.1), (cl.0, -cl.1));
            let ket = cmul(orbital(p, x, y), orbital(q, x, y));
            cmul(bra, ket)
        })
    }

    #[test]
    fn radial_values() {
        let g = radial_wavefunction(SpMode::new(0, 0), 0.0);
        assert!((g - 1.0 / PI.sqrt()).abs() < 1e-15);
        assert_eq!(radial_wavefunction(SpMode::new(0, 1), 0.0), 0.0);
        let node = SpMode::new(1, 0);
        assert!(radial_wavefunction(node, 1.0).abs() < 1e-15);
        assert!(radial_wavefunction(node, 0.99) > 0.0);
        assert!(radial_wavefunction(node, 1.01) < 0.0);
    }

    #[test]
    fn radial_normalization_by_quadrature() {
        // ∫ R² r dr with x = r²: ½ ∫ R(√x)² dx, integrated on a fine Simpson grid.
        for mode in [
            SpMode::new(0, 0),
            SpMode::new(1, 0),
            SpMode::new(2, 3),
            SpMode::new(0, -1),
        ] {
            let n = 20000;
            let hi = 60.0;
            let h = hi / n as f64;
            let mut s = 0.0;
            for i in 0..=n {
                let r = i as f64 * h;
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                s += w * radial_wavefunction(mode, r).powi(2) * r;
            }
            s *= h / 3.0;
            assert!((s - 1.0 / (2.0 * PI)).abs() < 1e-10, "{mode}: {s}");
        }
    }

    #[test]
    fn ground_mode_self_interaction() {
        let g = SpMode::new(0, 0);
        let v = interaction_element(g, g, g, g);
        assert!((v - 1.0 / (2.0 * PI)).abs() < 1e-15);
        let (re, im) = grid_interaction(g, g, g, g);
        assert!((re - v).abs() < 1e-10 && im.abs() < 1e-12);
    }

    fn lll_closed_form(mk: i32, ml: i32, mp: i32, mq: i32) -> f64 {
        let s = mk + ml;
        factorial(s)
            / (2f64.powi(s) * (factorial(mk) * factorial(ml) * factorial(mp) * factorial(mq)).sqrt())
            / (2.0 * PI)
    }

    #[test]
    fn lll_example_element() {
        let v = interaction_element(
            SpMode::new(0, 1),
            SpMode::new(0, 1),
            SpMode::new(0, 0),
            SpMode::new(0, 2),
        );
        assert!((v - 0.056270).abs() < 1e-6);
        assert!((v - lll_closed_form(1, 1, 0, 2)).abs() < 1e-15);
    }

    #[test]
    fn lll_closed_form_everywhere() {
        for mk in 0..=9 {
            for ml in 0..=9 {
                for mp in 0..=(mk + ml) {
                    let mq = mk + ml - mp;
                    let got = interaction_element(
                        SpMode::new(0, mk),
                        SpMode::new(0, ml),
                        SpMode::new(0, mp),
                        SpMode::new(0, mq),
                    );
                    let want = lll_closed_form(mk, ml, mp, mq);
                    assert!(((got - want) / want).abs() < 1e-13, "{mk}{ml}{mp}{mq}: {got} {want}");
                }
            }
        }
    }

    #[test]
    fn selection_rules() {
        let a = SpMode::new(0, 0);
        let b = SpMode::new(0, 1);
        assert_eq!(interaction_element(a, a, a, b), 0.0);
        assert_eq!(anisotropy_element(a, b), 0.0);
        assert_eq!(anisotropy_element(a, a), 0.0);
    }

    #[test]
    fn anisotropy_example_and_grid() {
        let v = anisotropy_element(SpMode::new(0, 0), SpMode::new(0, 2));
        assert!((v - 0.5f64.sqrt()).abs() < 1e-14);
        for (k, p) in [
            (SpMode::new(0, 0), SpMode::new(0, 2)),
            (SpMode::new(1, 1), SpMode::new(0, 3)),
            (SpMode::new(0, -1), SpMode::new(1, 1)),
            (SpMode::new(1, 0), SpMode::new(1, -2)),
        ] {
            let (re, im) = grid_integral(|x, y| {
                let bra = orbital(p, x, y);
                let ket = orbital(k, x, y);
                let prod = cmul((bra.0, -bra.1), ket);
                (prod.0 * (x * x - y * y), prod.1 * (x * x - y * y))
            });
            let got = anisotropy_element(k, p);
            assert!((re - got).abs() < 1e-8 && im.abs() < 1e-8, "{k}->{p}: {got} vs {re}");
            assert_eq!(got, anisotropy_element(p, k));
        }
    }

    #[test]
    fn random_interactions_match_grid_integration() {
        let modes = enumerate_modes(3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 6 {
            let pick: Vec<SpMode> = (0..3).map(|_| modes[rng.random_range(0..modes.len())]).collect();
            let target = pick[0].m + pick[1].m - pick[2].m;
            let Some(&q) = modes.iter().filter(|md| md.m == target).nth(rng.random_range(0..2)) else {
                continue;
            };
            let got = interaction_element(pick[0], pick[1], pick[2], q);
            let (re, im) = grid_interaction(pick[0], pick[1], pick[2], q);
            assert!(
                (got - re).abs() < 1e-8 && im.abs() < 1e-8,
                "{pick:?} {q}: {got} vs {re}"
            );
            checked += 1;
        }
    }

    #[test]
    fn doubling_quadrature_order_changes_nothing() {
        let modes = enumerate_modes(3, 6).unwrap();
        for &k in &modes {
            for &l in &modes {
                for &p in &modes {
                    for &q in modes.iter().filter(|q| q.m == k.m + l.m - p.m) {
                        let quad = [k, l, p, q];
                        let base = order_for(interaction_degree(quad));
                        let a = interaction_element(k, l, p, q);
                        let b = interaction_element_with_order(k, l, p, q, 2 * base);
                        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{quad:?}");
                    }
                }
                if (l.m - k.m).abs() == 2 {
                    let base = order_for(anisotropy_degree(k, l));
                    let a = anisotropy_element(k, l);
                    let b = anisotropy_element_with_order(k, l, 2 * base);
                    assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn tables_hold_exactly_the_conserving_quadruples() {
        let modes = enumerate_modes(1, 2).unwrap();
        let (inter, aniso) = build_tables(&modes);
        let mut expected = 0;
        for k in 0..3 {
            for l in k..3 {
                for p in 0..3 {
                    for q in p..3 {
                        if (k, l) <= (p, q) && modes[k].m + modes[l].m == modes[p].m + modes[q].m {
                            expected += 1;
                        }
                    }
                }
            }
        }
        assert_eq!(inter.len(), expected);
        for ((k, l), (p, q), _) in inter.iter() {
            assert_eq!(modes[k].m + modes[l].m, modes[p].m + modes[q].m);
        }
        assert_eq!(aniso.len(), 1);

        let (single, empty) = build_tables(&[SpMode::new(0, 0)]);
        assert_eq!(single.len(), 1);
        assert!(empty.is_empty());
    }

    #[test]
    fn table_entries_recompute() {
        let modes = enumerate_modes(2, 8).unwrap();
        let (inter, aniso) = build_tables(&modes);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = modes.len();
        for _ in 0..100 {
            let (k, l, p) = (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n));
            let q = rng.random_range(0..n);
            let want = interaction_element(modes[k], modes[l], modes[p], modes[q]);
            let want = if want.abs() < ZERO_CUTOFF { 0.0 } else { want };
            assert_eq!(inter.get(k, l, p, q), want);
            // All four symmetries of the stored representative.
            assert_eq!(inter.get(l, k, q, p), want);
            assert_eq!(inter.get(p, q, k, l), want);
            let a = aniso.get(k, p);
            assert_eq!(a, aniso.get(p, k));
            let direct = anisotropy_element(modes[k], modes[p]);
            assert_eq!(a, if direct.abs() < ZERO_CUTOFF { 0.0 } else { direct });
        }
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let modes = enumerate_modes(1, 1).unwrap();
        let (inter, _) = build_tables(&modes);
        let mut buf = Vec::new();
        inter.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "n_k,m_k,n_l,m_l,n_p,m_p,n_q,m_q,value");
        assert_eq!(lines.count(), inter.len());
    }
}
