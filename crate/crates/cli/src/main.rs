//! `deficiency`: certificates for deficiency indices of `−Δ + V` with
//! separated singularities.

mod report;
mod text;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use deficiency::bounds::{
    commutator_to_iii, defect_invariance_gate, hardy_certificate, morgan_form_bound,
    morgan_operator_bound, operator_commutator_gate, BoundKind, BoundsError, PartitionData,
    RelativeBound,
};
use deficiency::channels::{self, ChannelError};
use deficiency::config::ConfigError;
use deficiency::decouple::{self, DecoupleError, DecoupleOptions, Verdict};
use deficiency::grid_table::{GridTable, GridTableError};
use deficiency::partition::{self, PartitionError};
use deficiency::support::{self, GridFunction, SupportError};
use deficiency::weyl::{self, EndpointClass, RadialProblem, Spectral, WeylError, WeylOptions};
use deficiency::{exec, validate_config, SingularityConfig};

use report::{
    BoundsResult, ClassifyResult, CommutatorResult, CutoffSummary, PartitionResult, RunReport,
    SupportResult,
};

#[derive(Parser, Debug)]
#[command(name = "deficiency", version, about = "Deficiency-index certificates for singular Schrödinger operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Half-width of the indeterminate band of the numerical Weyl classifier.
    #[arg(long, global = true)]
    tolerance_band: Option<f64>,
    /// Run the channel oracle through this ℓ.
    #[arg(long, global = true)]
    lmax: Option<u64>,
    /// Worker threads for the parallel loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Leave the timing block out of the report.
    #[arg(long, global = true)]
    omit_timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full defect certificate for a configuration.
    Defect,
    /// Verdict only.
    Certify,
    /// Weyl classification of one inverse-square channel at r = 0.
    Classify(ClassifyArgs),
    /// Build and verify the cutoff family of a configuration.
    Partition(PartitionArgs),
    /// Relative-bound arithmetic and the Hardy certificate.
    Bounds(BoundsArgs),
    /// Check the support calculus on two sampled grid functions.
    SupportCheck(SupportArgs),
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    /// Effective coupling q in q/r²; overrides the channel description.
    #[arg(long, allow_hyphen_values = true)]
    q: Option<f64>,
    #[arg(long)]
    dimension: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    coupling: Option<f64>,
    #[arg(long, default_value_t = 0)]
    ell: u64,
    /// Spectral parameter ±i.
    #[arg(long, value_enum, default_value_t = Sign::Plus)]
    z: Sign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Sign {
    Plus,
    Minus,
}

#[derive(Args, Debug)]
struct PartitionArgs {
    /// Grid nodes per axis for the cutoff verification.
    #[arg(long, default_value_t = 40)]
    resolution: usize,
    /// Random points for the nesting check.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the first φ_j sampled on a grid to this file.
    #[arg(long)]
    export: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long)]
    dimension: Option<usize>,
    /// Inverse-square coupling magnitude for the Hardy bound.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    local_a: Option<f64>,
    #[arg(long)]
    local_b: Option<f64>,
    #[arg(long, value_enum, default_value_t = Kind::Form)]
    kind: Kind,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    e: Option<f64>,
    /// Commutator constant ẽ.
    #[arg(long)]
    e_tilde: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 200)]
    profiles: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Form,
    Operator,
}

#[derive(Args, Debug)]
struct SupportArgs {
    /// Grid table with columns `value` and optionally `mask`.
    #[arg(long)]
    f: PathBuf,
    #[arg(long)]
    g: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    tolerance: f64,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Decouple(#[from] DecoupleError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Weyl(#[from] WeylError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Support(#[from] SupportError),
    #[error(transparent)]
    Table(#[from] GridTableError),
}

/// Exit status: 0 pass, 1 defect or failed check, 2 invalid input, 3 indeterminate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Pass,
    Fail,
    Indeterminate,
}

impl Outcome {
    fn code(self) -> u8 {
        match self {
            Outcome::Pass => 0,
            Outcome::Fail => 1,
            Outcome::Indeterminate => 3,
        }
    }

    fn of_verdict(v: &Verdict) -> Self {
        match v {
            Verdict::EssentiallySelfAdjoint => Outcome::Pass,
            Verdict::PositiveDefect { .. } | Verdict::InfiniteDefect => Outcome::Fail,
            Verdict::Indeterminate => Outcome::Indeterminate,
        }
    }

    fn of_bool(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

struct Inputs {
    digest: report::Digest,
}

impl Inputs {
    fn new(subcommand: &str) -> Self {
        Inputs {
            digest: report::Digest::new(subcommand),
        }
    }

    fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let s = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.digest.add_bytes(s.as_bytes());
        Ok(s)
    }

    fn config(&mut self, cli: &Cli) -> Result<SingularityConfig, CliError> {
        let path = cli
            .config
            .as_ref()
            .ok_or_else(|| CliError::Usage("this subcommand needs --config <path>".into()))?;
        let src = self.read(path)?;
        Ok(SingularityConfig::from_toml_str(&src)?)
    }
}

fn weyl_options(cli: &Cli) -> Result<WeylOptions, CliError> {
    let mut o = WeylOptions::default();
    if let Some(b) = cli.tolerance_band {
        if !(b > 0.0 && b.is_finite()) {
            return Err(CliError::Usage(format!("--tolerance-band must be positive, got {b}")));
        }
        o.band = b;
    }
    Ok(o)
}

fn emit<T: Serialize>(cli: &Cli, report: &RunReport<T>, text: impl FnOnce() -> String) {
    match cli.format {
        Format::Json => println!("{}", report.to_json()),
        Format::Text => print!("{}", text()),
    }
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let start = Instant::now();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        exec::set_threads(t);
    }
    let opts = DecoupleOptions {
        weyl: weyl_options(cli)?,
        lmax: cli.lmax,
        ..DecoupleOptions::default()
    };
    match &cli.command {
        Command::Defect | Command::Certify => {
            let name = if matches!(cli.command, Command::Defect) {
                "defect"
            } else {
                "certify"
            };
            let mut inputs = Inputs::new(name);
            let cfg = inputs.config(cli)?;
            inputs.digest.add_option("tolerance_band", &opts.weyl.band);
            inputs.digest.add_option("lmax", &cli.lmax);
            let cert = decouple::certificate(&cfg, &opts)?;
            let outcome = Outcome::of_verdict(&cert.verdict);
            let warnings = cert.warnings.clone();
            if name == "defect" {
                let r = RunReport::new(name, inputs.digest, cert, warnings, cli.omit_timing, start);
                emit(cli, &r, || text::defect(&r));
            } else {
                let v = report::CertifyResult {
                    verdict: cert.verdict,
                    total: cert.total,
                };
                let r = RunReport::new(name, inputs.digest, v, warnings, cli.omit_timing, start);
                emit(cli, &r, || text::certify(&r));
            }
            Ok(outcome)
        }
        Command::Classify(a) => {
            let mut inputs = Inputs::new("classify");
            let q = match (a.q, a.dimension, a.coupling) {
                (Some(q), _, _) => q,
                (None, Some(n), Some(c)) => {
                    if n < 2 {
                        return Err(ChannelError::DimensionTooSmall(n).into());
                    }
                    channels::effective_coupling(n, c, a.ell)
                }
                _ => {
                    return Err(CliError::Usage(
                        "classify needs --q, or --dimension and --coupling".into(),
                    ))
                }
            };
            if !q.is_finite() {
                return Err(CliError::Usage(format!("coupling must be finite, got {q}")));
            }
            let z = match a.z {
                Sign::Plus => Spectral::PlusI,
                Sign::Minus => Spectral::MinusI,
            };
            let wopts = opts.weyl;
            inputs.digest.add_option("q", &q);
            inputs.digest.add_option("z", &format!("{z:?}"));
            inputs.digest.add_option("tolerance_band", &wopts.band);
            let ev = weyl::weyl_classify_detailed(&RadialProblem::inverse_square(q), z, &wopts)?;
            let closed_form = weyl::frobenius_classify_inverse_square(q);
            let outcome = match ev.class {
                EndpointClass::LimitPoint => Outcome::Pass,
                EndpointClass::LimitCircle => Outcome::Fail,
                EndpointClass::BoundaryIndeterminate { .. } => Outcome::Indeterminate,
            };
            let res = ClassifyResult {
                q_eff: q,
                spectral_parameter: if a.z == Sign::Plus { "+i" } else { "-i" },
                class: ev.class,
                closed_form,
                nu_hat: ev.nu_hat,
                decay_exponent: ev.decay_exponent,
                subdominant_exponent: ev.subdominant_exponent,
                steps: ev.steps,
            };
            let mut warnings = Vec::new();
            if !ev.class.is_indeterminate() && ev.class != closed_form {
                warnings.push(format!(
                    "numerical class {} differs from the closed-form class {}",
                    ev.class, closed_form
                ));
            }
            let r = RunReport::new("classify", inputs.digest, res, warnings, cli.omit_timing, start);
            emit(cli, &r, || text::classify(&r));
            Ok(outcome)
        }
        Command::Partition(a) => {
            let mut inputs = Inputs::new("partition");
            let cfg = inputs.config(cli)?;
            inputs.digest.add_option("resolution", &a.resolution);
            inputs.digest.add_option("samples", &a.samples);
            inputs.digest.add_option("seed", &a.seed);
            if a.resolution < 3 {
                return Err(CliError::Usage("--resolution must be at least 3".into()));
            }
            let v = validate_config(&cfg)?;
            let fam = partition::build_family(&v)?;
            let mut cutoffs = Vec::new();
            let mut seen: HashMap<u64, ()> = HashMap::new();
            let members = fam.members.iter().map(|m| (m.label.clone(), m.core_radius, &m.phi, &m.phi_tilde));
            let orbit = fam
                .orbit
                .iter()
                .map(|o| ("lattice orbit".to_string(), o.core_radius, &o.phi, &o.phi_tilde));
            for (label, delta, phi, tilde) in members.chain(orbit) {
                if seen.insert(delta.to_bits(), ()).is_some() {
                    continue;
                }
                for (role, c) in [("phi", phi), ("phi_tilde", tilde)] {
                    cutoffs.push(CutoffSummary {
                        label: label.clone(),
                        role,
                        core_radius: delta,
                        plateau_radius: c.plateau_radius().unwrap_or(0.0),
                        support_radius: c.support_radius().unwrap_or(f64::INFINITY),
                        verification: partition::verify_cutoff_with(c, a.resolution, exec::Mode::default()),
                    });
                }
            }
            let family = fam.check(a.samples, a.seed);
            let constants = partition::partition_constants(&fam, 4 * a.resolution.max(64));
            if let (Some(path), Some(m)) = (&a.export, fam.members.first()) {
                let t = m.phi.sample_grid(a.resolution);
                fs::write(path, t.to_text()).map_err(|source| CliError::Io {
                    path: path.clone(),
                    source,
                })?;
            }
            let pass = family.pass && cutoffs.iter().all(|c| c.verification.pass);
            let res = PartitionResult {
                dimension: fam.dimension,
                epsilon: fam.epsilon,
                members: fam.members.len(),
                lattice_orbit: fam.orbit.is_some(),
                cutoffs,
                family,
                constants,
                pass,
            };
            let warnings = v.warnings().to_vec();
            let r = RunReport::new("partition", inputs.digest, res, warnings, cli.omit_timing, start);
            emit(cli, &r, || text::partition(&r));
            Ok(Outcome::of_bool(pass))
        }
        Command::Bounds(a) => {
            let mut inputs = Inputs::new("bounds");
            inputs.digest.add_option("args", &format!("{a:?}"));
            let res = bounds(a)?;
            let pass = res.pass;
            let r = RunReport::new("bounds", inputs.digest, res, Vec::new(), cli.omit_timing, start);
            emit(cli, &r, || text::bounds(&r));
            Ok(Outcome::of_bool(pass))
        }
        Command::SupportCheck(a) => {
            let mut inputs = Inputs::new("support-check");
            inputs.digest.add_option("tolerance", &a.tolerance);
            if !(a.tolerance >= 0.0 && a.tolerance.is_finite()) {
                return Err(CliError::Usage("--tolerance must be finite and non-negative".into()));
            }
            let f = GridFunction::from_table(&GridTable::parse(&inputs.read(&a.f)?)?)?
                .with_tolerance(a.tolerance);
            let g = GridFunction::from_table(&GridTable::parse(&inputs.read(&a.g)?)?)?
                .with_tolerance(a.tolerance);
            let laws = support::check_support_laws(&f, &g)?;
            let res = SupportResult {
                cells: f.domain.cells.len(),
                domain_cells: f.domain.len(),
                support_f: support::essential_support(&f).len(),
                support_g: support::essential_support(&g).len(),
                pass: laws.pass,
                laws,
            };
            let pass = res.pass;
            let r = RunReport::new("support-check", inputs.digest, res, Vec::new(), cli.omit_timing, start);
            emit(cli, &r, || text::support(&r));
            Ok(Outcome::of_bool(pass))
        }
    }
}

fn bounds(a: &BoundsArgs) -> Result<BoundsResult, CliError> {
    let hardy = match a.gamma {
        Some(g) => {
            let n = a
                .dimension
                .ok_or_else(|| CliError::Usage("--gamma needs --dimension".into()))?;
            Some(hardy_certificate(n, g, a.profiles, a.seed)?)
        }
        None => None,
    };
    let commutator = match (a.e_tilde, a.epsilon) {
        (Some(et), Some(eps)) => {
            let (d, e) = commutator_to_iii(et, eps)?;
            Some(CommutatorResult {
                e_tilde: et,
                epsilon: eps,
                d,
                e,
            })
        }
        (Some(_), None) => return Err(CliError::Usage("--e-tilde needs --epsilon".into())),
        _ => None,
    };
    let kind = match a.kind {
        Kind::Form => BoundKind::Form,
        Kind::Operator => BoundKind::Operator,
    };
    let local = match (a.local_a, &hardy) {
        (Some(la), _) => Some(RelativeBound::new(la, a.local_b.unwrap_or(0.0), kind)?),
        (None, Some(h)) if kind == BoundKind::Form => Some(h.bound),
        _ => None,
    };
    let d = a.d.or(commutator.as_ref().map(|c| c.d)).unwrap_or(1.0);
    let e = a.e.or(commutator.as_ref().map(|c| c.e)).unwrap_or(0.0);
    let partition = local.map(|_| PartitionData::new(a.c, d, e)).transpose()?;
    let global = match (local, partition) {
        (Some(l), Some(p)) => Some(match kind {
            BoundKind::Form => morgan_form_bound(l, p)?,
            BoundKind::Operator => morgan_operator_bound(l, p)?,
        }),
        _ => None,
    };
    let gate = global.as_ref().map(defect_invariance_gate);
    let commutator_gate = match a.epsilon {
        Some(eps) => Some(operator_commutator_gate(eps, e)?),
        None => None,
    };
    if hardy.is_none() && global.is_none() && commutator.is_none() && commutator_gate.is_none() {
        return Err(CliError::Usage(
            "bounds needs --gamma with --dimension, --local-a, or --epsilon".into(),
        ));
    }
    let pass = gate.unwrap_or(true) && hardy.as_ref().is_none_or(|h| h.pass);
    Ok(BoundsResult {
        hardy,
        local,
        partition,
        global,
        leading_below_one: gate,
        commutator,
        commutator_gate,
        pass,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(o) => ExitCode::from(o.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
