//! Command-line interface: subcommands, config assembly, and artifact output.
//!
//! CSV artifacts start with `# key = value` lines holding the effective
//! configuration; JSON artifacts carry the same text in a `config` field.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::basis::{build_basis, count_states, default_l_min, LSector};
use crate::config::{convert_g, RunConfig};
use crate::error::{ConfigError, Error, Result};
use crate::matelems::build_tables;
use crate::scanner::{
    compare_truncations, find_critical, isotropic_spectrum_per_l, lmax_convergence, qfi_width, sweep_omega,
    validity_diagnostics, Couplings, Evaluation, Model, SweepPoint,
};

#[derive(Debug, Parser)]
#[command(
    name = "vortexed",
    version,
    about = "Exact diagonalization of rotating anisotropic 2D Bose gases"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the mode list, block sizes and (optionally) every basis state.
    BasisInfo {
        #[command(flatten)]
        config: ConfigArgs,
        /// List every Fock state as `L=<L> | (n,m)^count ...`.
        #[arg(long)]
        list: bool,
        /// Write the interaction table as CSV to this path.
        #[arg(long)]
        tables: Option<PathBuf>,
    },
    /// Ground state and its metrology report at a single rotation `omega`.
    GroundState {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Rotation sweep over `[omega_lo, omega_hi]` as CSV.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Locate the critical rotation where the two leading orbitals are equally occupied.
    Critical {
        #[command(flatten)]
        config: ConfigArgs,
        /// Also report the shift of the critical rotation when `l_max` grows by 2.
        #[arg(long)]
        check_lmax: bool,
    },
    /// Left half-width of the Fisher-information resonance below the critical rotation.
    Width {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Fractional changes of the critical rotation and F_Q between two truncations.
    CompareLevels {
        #[command(flatten)]
        config: ConfigArgs,
        /// Landau-level counts to compare, lower first.
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        levels: Vec<u32>,
    },
    /// Lowest isotropic (A = 0) energy of every angular-momentum block.
    SpectrumPerL {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Dimensionless coupling from the scattering length and axial oscillator length.
    ConvertG {
        /// 3D s-wave scattering length.
        #[arg(long, allow_negative_numbers = true)]
        scattering_length: f64,
        /// Axial oscillator length, same unit.
        #[arg(long, allow_negative_numbers = true)]
        axial_length: f64,
    },
}

/// Config file plus per-key overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub g: Option<f64>,
    /// Anisotropy strength.
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    #[arg(long)]
    pub n_ll: Option<u32>,
    #[arg(long, allow_negative_numbers = true)]
    pub l_min: Option<i32>,
    #[arg(long, allow_negative_numbers = true)]
    pub l_max: Option<i32>,
    /// Angular-momentum parity sector: all, even or odd.
    #[arg(long)]
    pub sector: Option<LSector>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub omega_lo: Option<f64>,
    #[arg(long)]
    pub omega_hi: Option<f64>,
    #[arg(long)]
    pub omega_steps: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub dense_cap: Option<usize>,
    #[arg(long)]
    pub basis_cap: Option<usize>,
}

impl ConfigArgs {
    fn overrides(&self) -> RunConfig {
        RunConfig {
            n: self.n,
            g: self.g,
            a: self.a,
            n_ll: self.n_ll,
            l_min: self.l_min,
            l_max: self.l_max,
            sector: self.sector,
            omega: self.omega,
            omega_lo: self.omega_lo,
            omega_hi: self.omega_hi,
            omega_steps: self.omega_steps,
            tol: self.tol,
            seed: self.seed,
            threads: self.threads,
            out_dir: self.out_dir.clone(),
            dense_cap: self.dense_cap,
            basis_cap: self.basis_cap,
        }
    }

    /// File values overridden by flags, not yet validated.
    pub fn merged(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        Ok(base.merged(&self.overrides()))
    }

    /// File values overridden by flags, validated, defaults filled.
    pub fn effective(&self) -> Result<RunConfig> {
        Ok(self.merged()?.resolved()?)
    }
}

fn init_threads(cfg: &RunConfig) -> Result<()> {
    if let Some(t) = cfg.thread_count()? {
        // A pool may already exist when called twice in one process; keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(())
}

fn couplings(cfg: &RunConfig) -> Couplings {
    Couplings {
        g: cfg.g.unwrap_or(0.0),
        anisotropy: cfg.a.unwrap_or(0.0),
    }
}

fn model(cfg: &RunConfig) -> Result<Model> {
    Model::build(&cfg.basis_spec()?, cfg.basis_cap.unwrap_or(usize::MAX))
}

/// Destination of an artifact: `<out_dir>/<name>` or stdout.
fn sink(cfg: &RunConfig, name: &str) -> Result<(Box<dyn Write>, Option<PathBuf>)> {
    match &cfg.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(name);
            Ok((Box::new(BufWriter::new(File::create(&path)?)), Some(path)))
        }
        None => Ok((Box::new(io::stdout().lock()), None)),
    }
}

#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    config: String,
    #[serde(flatten)]
    payload: &'a T,
}

/// Writes `payload` as pretty JSON with the config echo.
pub fn write_json<T: Serialize>(cfg: &RunConfig, name: &str, payload: &T) -> Result<Option<PathBuf>> {
    let (mut out, path) = sink(cfg, name)?;
    serde_json::to_writer_pretty(
        &mut out,
        &Artifact {
            config: cfg.to_text(),
            payload,
        },
    )?;
    writeln!(out)?;
    out.flush()?;
    Ok(path)
}

/// Writes sweep rows as CSV preceded by the config echo.
pub fn write_sweep_csv<W: Write>(cfg: &RunConfig, points: &[SweepPoint], mut out: W) -> Result<()> {
    for line in cfg.to_lines() {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    if points.is_empty() {
        w.write_record(crate::scanner::SWEEP_HEADER)?;
    }
    w.flush()?;
    Ok(())
}

/// Recovers the config echo from the leading `# ` lines of a sweep CSV.
pub fn config_from_csv(text: &str) -> std::result::Result<RunConfig, ConfigError> {
    let echo: String = text
        .lines()
        .map_while(|l| l.strip_prefix("# "))
        .flat_map(|l| [l, "\n"])
        .collect();
    RunConfig::parse_str(&echo)
}

fn report_path(path: Option<PathBuf>) {
    if let Some(p) = path {
        eprintln!("wrote {}", p.display());
    }
}

#[derive(Serialize)]
struct GroundStateOutput<'a> {
    omega: f64,
    energies: &'a [f64],
    residual_norms: &'a [f64],
    converged: bool,
    point: &'a SweepPoint,
    report: &'a crate::observables::MetrologyReport,
    validity: crate::scanner::ValidityDiagnostics,
}

#[derive(Serialize)]
struct CriticalOutput<'a> {
    critical: &'a crate::scanner::CriticalPoint,
    validity: crate::scanner::ValidityDiagnostics,
    lmax_check: Option<crate::scanner::LmaxConvergence>,
}

#[derive(Serialize)]
struct WidthOutput<'a> {
    omega_c: f64,
    width: &'a crate::scanner::WidthResult,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BasisInfo { config, list, tables } => {
            let mut cfg = config.merged()?;
            cfg.g.get_or_insert(0.0);
            let cfg = cfg.resolved()?;
            let spec = cfg.basis_spec()?;
            let count = count_states(&spec)?;
            let basis = build_basis(&spec, cfg.basis_cap.unwrap_or(usize::MAX))?;
            let stdout = io::stdout();
            let mut out = stdout.lock();
            writeln!(out, "dimension {count}")?;
            writeln!(
                out,
                "modes {}: {}",
                basis.n_modes(),
                basis
                    .modes()
                    .iter()
                    .map(|m| m.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            )?;
            for (l, range) in basis.blocks().iter().filter(|(_, r)| !r.is_empty()) {
                writeln!(out, "block L={l} size {}", range.len())?;
            }
            if list {
                for i in 0..basis.dim() {
                    writeln!(
                        out,
                        "L={} | {}",
                        basis.angular_momentum_of(i),
                        basis.state(i).describe(basis.modes())
                    )?;
                }
            }
            if let Some(path) = tables {
                let (interaction, _) = build_tables(basis.modes());
                interaction.write_csv(BufWriter::new(File::create(&path)?))?;
                eprintln!("wrote {}", path.display());
            }
        }
        Command::GroundState { config } => {
            let cfg = config.effective()?;
            init_threads(&cfg)?;
            let omega = cfg.omega.ok_or_else(|| ConfigError::MissingKey("omega".into()))?;
            let m = model(&cfg)?;
            let ev: Evaluation = m.evaluate(couplings(&cfg), omega, &cfg.solver(), None)?;
            let out = GroundStateOutput {
                omega,
                energies: &ev.eig.eigenvalues,
                residual_norms: &ev.eig.residual_norms,
                converged: ev.eig.all_converged(),
                point: &ev.point,
                report: &ev.report,
                validity: validity_diagnostics(m.basis.n_particles(), couplings(&cfg).g, omega),
            };
            report_path(write_json(&cfg, "ground_state.json", &out)?);
        }
        Command::Sweep { config } => {
            let cfg = config.effective()?;
            init_threads(&cfg)?;
            let (lo, hi) = require_range(&cfg)?;
            let m = model(&cfg)?;
            let pts: Vec<SweepPoint> =
                sweep_omega(&m, couplings(&cfg), lo, hi, cfg.omega_steps.unwrap_or(2), &cfg.solver())?
                    .into_iter()
                    .map(|e| e.point)
                    .collect();
            let (out, path) = sink(&cfg, "sweep.csv")?;
            write_sweep_csv(&cfg, &pts, out)?;
            report_path(path);
        }
        Command::Critical { config, check_lmax } => {
            let cfg = config.effective()?;
            init_threads(&cfg)?;
            let (lo, hi) = require_range(&cfg)?;
            let steps = cfg.omega_steps.unwrap_or(2);
            let c = couplings(&cfg);
            let cp = find_critical(&model(&cfg)?, c, lo, hi, steps, &cfg.solver())?;
            let lmax_check = if check_lmax {
                let cap = cfg.basis_cap.unwrap_or(usize::MAX);
                Some(lmax_convergence(
                    &cfg.basis_spec()?,
                    cap,
                    c,
                    lo,
                    hi,
                    steps,
                    &cfg.solver(),
                )?)
            } else {
                None
            };
            let out = CriticalOutput {
                critical: &cp,
                validity: validity_diagnostics(cfg.n.unwrap_or(0), c.g, cp.omega_c),
                lmax_check,
            };
            report_path(write_json(&cfg, "critical.json", &out)?);
        }
        Command::Width { config } => {
            let cfg = config.effective()?;
            init_threads(&cfg)?;
            let (lo, hi) = require_range(&cfg)?;
            let m = model(&cfg)?;
            let c = couplings(&cfg);
            let cp = find_critical(&m, c, lo, hi, cfg.omega_steps.unwrap_or(2), &cfg.solver())?;
            let width = qfi_width(&m, c, cp.omega_c, &cfg.solver())?;
            report_path(write_json(
                &cfg,
                "width.json",
                &WidthOutput {
                    omega_c: cp.omega_c,
                    width: &width,
                },
            )?);
        }
        Command::CompareLevels { config, levels } => {
            let cfg = config.effective()?;
            init_threads(&cfg)?;
            if levels.len() != 2 || levels[0] == 0 || levels[0] > levels[1] {
                return Err(Error::InvalidArgument(
                    "--levels takes two counts a,b with 1 <= a <= b".into(),
                ));
            }
            let (lo, hi) = require_range(&cfg)?;
            let level_model = |n_ll: u32| -> Result<Model> {
                let mut spec = cfg.basis_spec()?;
                spec.n_ll = n_ll;
                if config.l_min.is_none() {
                    spec.l_min = spec.l_min.min(default_l_min(n_ll));
                }
                spec.validate()?;
                Model::build(&spec, cfg.basis_cap.unwrap_or(usize::MAX))
            };
            let lower = level_model(levels[0])?;
            let c = couplings(&cfg);
            let steps = cfg.omega_steps.unwrap_or(2);
            let cmp = if levels[0] == levels[1] {
                compare_truncations(&lower, &lower, c, [(lo, hi); 2], steps, &cfg.solver())?
            } else {
                let higher = level_model(levels[1])?;
                compare_truncations(&lower, &higher, c, [(lo, hi); 2], steps, &cfg.solver())?
            };
            report_path(write_json(&cfg, "compare_levels.json", &cmp)?);
        }
        Command::SpectrumPerL { config } => {
            let cfg = config.effective()?;
            init_threads(&cfg)?;
            let mut spec = cfg.basis_spec()?;
            spec.sector = LSector::All;
            let m = Model::build(&spec, cfg.basis_cap.unwrap_or(usize::MAX))?;
            let spectrum = isotropic_spectrum_per_l(&m, couplings(&cfg).g, cfg.omega.unwrap_or(0.0), &cfg.solver())?;
            report_path(write_json(&cfg, "spectrum_per_l.json", &spectrum)?);
        }
        Command::ConvertG {
            scattering_length,
            axial_length,
        } => {
            println!("{}", convert_g(scattering_length, axial_length)?);
        }
    }
    Ok(())
}

fn require_range(cfg: &RunConfig) -> Result<(f64, f64)> {
    if cfg.omega.is_some() {
        return Err(ConfigError::Conflict("omega".into(), "omega_lo".into()).into());
    }
    Ok(cfg.omega_range())
}
