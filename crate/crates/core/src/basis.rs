//! Single-particle oscillator modes and the truncated bosonic Fock basis.
//!
//! A mode is labelled by the radial quantum number `n` and the angular
//! momentum projection `m`. Its Landau index is `n + (|m| - m)/2`; the
//! `n_ll`-level truncation keeps every many-body state whose summed Landau
//! index does not exceed `n_ll - 1`, so lower truncations are nested inside
//! higher ones. States are further restricted to a window of total angular
//! momentum `L_min <= L <= L_max` and, optionally, to one parity of `L`.
//!
//! Ordering is fully deterministic: states are sorted by `L` ascending and,
//! inside one `L` block, lexicographically by occupation vector over the
//! mode order.

use std::borrow::Borrow;
use std::collections::HashMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default hard cap on the number of basis states.
pub const DEFAULT_BASIS_CAP: usize = 50_000_000;

/// A single-particle orbital of the 2D isotropic oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpMode {
    pub n: u32,
    pub m: i32,
}

impl SpMode {
    pub const fn new(n: u32, m: i32) -> Self {
        Self { n, m }
    }

    /// Landau level index `n + (|m| - m)/2`.
    pub fn landau_index(&self) -> u32 {
        // (|m| - m)/2 is |m| for negative m and zero otherwise.
        self.n + self.m.min(0).unsigned_abs()
    }

    /// Energy `2n + |m| + 1` at zero rotation, in units of the trap quantum.
    pub fn energy(&self) -> f64 {
        (2 * self.n + self.m.unsigned_abs() + 1) as f64
    }

    /// Parity of the orbital under `r -> -r`.
    pub fn is_even(&self) -> bool {
        self.m.rem_euclid(2) == 0
    }
}

impl fmt::Display for SpMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.n, self.m)
    }
}

/// Modes with Landau index below `n_ll` and `m <= m_cap`, ordered by Landau
/// index, then `m`, then `n`.
pub fn enumerate_modes(n_ll: u32, m_cap: i32) -> Result<Vec<SpMode>> {
    if n_ll < 1 {
        return Err(Error::InvalidArgument("n_ll must be at least 1".into()));
    }
    if m_cap < 0 {
        return Err(Error::InvalidArgument("m_cap must be non-negative".into()));
    }
    let mut modes = Vec::new();
    for ll in 0..n_ll {
        // m < 0 needs ll = n + |m|, so |m| <= ll; m >= 0 needs n = ll.
        let lo = -(ll as i32);
        for m in lo..=m_cap {
            let n = if m >= 0 { ll as i64 } else { ll as i64 + m as i64 };
            if n >= 0 {
                modes.push(SpMode::new(n as u32, m));
            }
        }
    }
    Ok(modes)
}

/// Which parities of total angular momentum the basis keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LSector {
    #[default]
    All,
    Even,
    Odd,
}

impl LSector {
    pub fn admits(&self, l: i32) -> bool {
        match self {
            LSector::All => true,
            LSector::Even => l.rem_euclid(2) == 0,
            LSector::Odd => l.rem_euclid(2) == 1,
        }
    }
}

impl std::str::FromStr for LSector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(LSector::All),
            "even" => Ok(LSector::Even),
            "odd" => Ok(LSector::Odd),
            other => Err(Error::InvalidArgument(format!("unknown L sector `{other}`"))),
        }
    }
}

impl fmt::Display for LSector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LSector::All => "all",
            LSector::Even => "even",
            LSector::Odd => "odd",
        })
    }
}

/// Truncation parameters of a many-body basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub n_particles: usize,
    pub n_ll: u32,
    pub l_min: i32,
    pub l_max: i32,
    pub sector: LSector,
}

impl BasisSpec {
    pub fn new(n_particles: usize, n_ll: u32, l_min: i32, l_max: i32) -> Result<Self> {
        let spec = Self {
            n_particles,
            n_ll,
            l_min,
            l_max,
            sector: LSector::All,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Default window: `L_min = 0` in the lowest level, `-2` otherwise, and
    /// `L_max = N + 4`.
    pub fn with_default_window(n_particles: usize, n_ll: u32) -> Result<Self> {
        Self::new(n_particles, n_ll, default_l_min(n_ll), default_l_max(n_particles))
    }

    pub fn with_sector(mut self, sector: LSector) -> Self {
        self.sector = sector;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 1 {
            return Err(Error::InvalidArgument("particle number must be positive".into()));
        }
        if self.n_particles > u8::MAX as usize {
            return Err(Error::InvalidArgument(format!(
                "particle number {} exceeds {}",
                self.n_particles,
                u8::MAX
            )));
        }
        if self.n_ll < 1 {
            return Err(Error::InvalidArgument("n_ll must be at least 1".into()));
        }
        if self.l_min > self.l_max {
            return Err(Error::InvalidArgument(format!(
                "l_min {} exceeds l_max {}",
                self.l_min, self.l_max
            )));
        }
        Ok(())
    }

    /// Largest single-particle `m` that can appear in any admissible state.
    pub fn mode_cap(&self) -> i32 {
        (self.l_max + self.n_ll as i32 - 1).max(0)
    }
}

pub fn default_l_min(n_ll: u32) -> i32 {
    if n_ll <= 1 {
        0
    } else {
        -2
    }
}

pub fn default_l_max(n_particles: usize) -> i32 {
    n_particles as i32 + 4
}

/// Occupation numbers over the mode list of the owning basis.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FockState(Box<[u8]>);

impl FockState {
    pub fn new(occupations: Vec<u8>) -> Self {
        Self(occupations.into_boxed_slice())
    }

    pub fn occupations(&self) -> &[u8] {
        &self.0
    }

    pub fn particle_count(&self) -> usize {
        self.0.iter().map(|&c| c as usize).sum()
    }

    pub fn angular_momentum(&self, modes: &[SpMode]) -> i32 {
        self.0.iter().zip(modes).map(|(&c, md)| c as i32 * md.m).sum()
    }

    pub fn landau_excitation(&self, modes: &[SpMode]) -> u32 {
        self.0
            .iter()
            .zip(modes)
            .map(|(&c, md)| c as u32 * md.landau_index())
            .sum()
    }

    /// `2 sum n + sum |m| + N`, the noninteracting energy at zero rotation.
    pub fn oscillator_energy(&self, modes: &[SpMode]) -> f64 {
        self.0.iter().zip(modes).map(|(&c, md)| c as f64 * md.energy()).sum()
    }

    /// Renders the occupied modes as `(n,m)^count` terms.
    pub fn describe(&self, modes: &[SpMode]) -> String {
        self.0
            .iter()
            .zip(modes)
            .filter(|(&c, _)| c > 0)
            .map(|(&c, md)| format!("{md}^{c}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl Borrow<[u8]> for FockState {
    fn borrow(&self) -> &[u8] {
        &self.0
    }
}

/// The truncated many-body basis with reverse lookup and `L` blocks.
#[derive(Debug, Clone)]
pub struct FockBasis {
    spec: BasisSpec,
    modes: Vec<SpMode>,
    states: Vec<FockState>,
    index: HashMap<FockState, usize>,
    blocks: Vec<(i32, Range<usize>)>,
}

impl FockBasis {
    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    /// Modes that are occupied in at least one basis state.
    pub fn modes(&self) -> &[SpMode] {
        &self.modes
    }

    pub fn states(&self) -> &[FockState] {
        &self.states
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn n_particles(&self) -> usize {
        self.spec.n_particles
    }

    pub fn state(&self, i: usize) -> &FockState {
        &self.states[i]
    }

    pub fn lookup(&self, occupations: &[u8]) -> Option<usize> {
        self.index.get(occupations).copied()
    }

    pub fn mode_index(&self, mode: SpMode) -> Option<usize> {
        self.modes.iter().position(|&md| md == mode)
    }

    /// Every `L` of the window with its (possibly empty) index range.
    pub fn blocks(&self) -> &[(i32, Range<usize>)] {
        &self.blocks
    }

    pub fn block_of(&self, l: i32) -> Result<Range<usize>> {
        if l < self.spec.l_min || l > self.spec.l_max {
            return Err(Error::OutOfWindow {
                l,
                l_min: self.spec.l_min,
                l_max: self.spec.l_max,
            });
        }
        Ok(self.blocks[(l - self.spec.l_min) as usize].1.clone())
    }

    pub fn angular_momentum_of(&self, i: usize) -> i32 {
        self.states[i].angular_momentum(&self.modes)
    }
}

struct Enumerator<'a> {
    modes: &'a [SpMode],
    spec: &'a BasisSpec,
    budget: u32,
    suffix_min_m: Vec<i32>,
    suffix_max_m: Vec<i32>,
}

impl<'a> Enumerator<'a> {
    fn new(modes: &'a [SpMode], spec: &'a BasisSpec) -> Self {
        let k = modes.len();
        let mut suffix_min_m = vec![i32::MAX; k + 1];
        let mut suffix_max_m = vec![i32::MIN; k + 1];
        for i in (0..k).rev() {
            suffix_min_m[i] = suffix_min_m[i + 1].min(modes[i].m);
            suffix_max_m[i] = suffix_max_m[i + 1].max(modes[i].m);
        }
        Self {
            modes,
            spec,
            budget: spec.n_ll - 1,
            suffix_min_m,
            suffix_max_m,
        }
    }

    fn feasible(&self, i: usize, left: u32, budget: u32, l: i32) -> bool {
        if left == 0 {
            return l >= self.spec.l_min && l <= self.spec.l_max;
        }
        if i == self.modes.len() {
            return false;
        }
        let left = left as i64;
        let l = l as i64;
        // Negative m costs at least |m| units of Landau budget.
        let lo = (l + left * self.suffix_min_m[i] as i64).max(l - budget as i64);
        let hi = l + left * self.suffix_max_m[i] as i64;
        lo <= self.spec.l_max as i64 && hi >= self.spec.l_min as i64
    }

    fn count(
        &self,
        i: usize,
        left: u32,
        budget: u32,
        l: i32,
        memo: &mut HashMap<(usize, u32, u32, i32), u128>,
    ) -> u128 {
        if !self.feasible(i, left, budget, l) {
            return 0;
        }
        if left == 0 {
            return self.spec.sector.admits(l) as u128;
        }
        if let Some(&c) = memo.get(&(i, left, budget, l)) {
            return c;
        }
        let ll = self.modes[i].landau_index();
        let m = self.modes[i].m;
        let mut total = 0u128;
        for c in 0..=left {
            let cost = c * ll;
            if cost > budget {
                break;
            }
            total += self.count(i + 1, left - c, budget - cost, l + c as i32 * m, memo);
        }
        memo.insert((i, left, budget, l), total);
        total
    }

    fn collect(&self, i: usize, left: u32, budget: u32, l: i32, occ: &mut Vec<u8>, out: &mut Vec<FockState>) {
        if !self.feasible(i, left, budget, l) {
            return;
        }
        if left == 0 {
            if self.spec.sector.admits(l) {
                out.push(FockState::new(occ.clone()));
            }
            return;
        }
        let ll = self.modes[i].landau_index();
        let m = self.modes[i].m;
        for c in 0..=left {
            let cost = c * ll;
            if cost > budget {
                break;
            }
            occ[i] = c as u8;
            self.collect(i + 1, left - c, budget - cost, l + c as i32 * m, occ, out);
        }
        occ[i] = 0;
    }
}

/// Number of states `build_basis` would produce, without materializing them.
pub fn count_states(spec: &BasisSpec) -> Result<u128> {
    spec.validate()?;
    let modes = enumerate_modes(spec.n_ll, spec.mode_cap())?;
    let en = Enumerator::new(&modes, spec);
    Ok(en.count(0, spec.n_particles as u32, en.budget, 0, &mut HashMap::new()))
}

/// Enumerates the complete truncated Fock basis for `spec`.
pub fn build_basis(spec: &BasisSpec, cap: usize) -> Result<FockBasis> {
    spec.validate()?;
    let all_modes = enumerate_modes(spec.n_ll, spec.mode_cap())?;
    let en = Enumerator::new(&all_modes, spec);
    let would_be = en.count(0, spec.n_particles as u32, en.budget, 0, &mut HashMap::new());
    if would_be > cap as u128 {
        return Err(Error::DimensionCapExceeded {
            dimension: would_be,
            cap,
        });
    }
    if would_be == 0 {
        return Err(Error::EmptyBasis);
    }

    let mut raw = Vec::with_capacity(would_be as usize);
    let mut occ = vec![0u8; all_modes.len()];
    en.collect(0, spec.n_particles as u32, en.budget, 0, &mut occ, &mut raw);
    debug_assert_eq!(raw.len() as u128, would_be);

    // Drop modes no state occupies.
    let used: Vec<usize> = (0..all_modes.len())
        .filter(|&k| raw.iter().any(|s| s.0[k] > 0))
        .collect();
    let modes: Vec<SpMode> = used.iter().map(|&k| all_modes[k]).collect();
    let mut states: Vec<(i32, FockState)> = raw
        .into_iter()
        .map(|s| {
            let occ: Vec<u8> = used.iter().map(|&k| s.0[k]).collect();
            let st = FockState::new(occ);
            (st.angular_momentum(&modes), st)
        })
        .collect();
    states.sort();

    let mut blocks = Vec::with_capacity((spec.l_max - spec.l_min + 1) as usize);
    let mut cursor = 0;
    for l in spec.l_min..=spec.l_max {
        let start = cursor;
        while cursor < states.len() && states[cursor].0 == l {
            cursor += 1;
        }
        blocks.push((l, start..cursor));
    }
    debug_assert_eq!(cursor, states.len());

    let states: Vec<FockState> = states.into_iter().map(|(_, s)| s).collect();
    let index = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    Ok(FockBasis {
        spec: *spec,
        modes,
        states,
        index,
        blocks,
    })
}
