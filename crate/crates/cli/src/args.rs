//! Flag parsing, `--config` files, and resolution of defaults.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use riemann_ineq::manifold::{parse_manifold, ManifoldSpec};
use riemann_ineq::verifier::sweep::Tolerances;
use riemann_ineq::verifier::FamilySpec;

use crate::Failure;

/// Environment fallback for `--out`.
pub const OUT_ENV: &str = "RIEMANN_INEQ_OUT";
pub const DEFAULT_OUT: &str = "riemann-ineq-out";
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_SAMPLES: usize = 20;
pub const DEFAULT_BUDGET: usize = 2000;
pub const DEFAULT_CONVERGENCE_REFINE: usize = 3;

#[derive(Debug, Parser)]
#[command(
    name = "riemann-ineq",
    version,
    about = "Covariant calculus checks and constant estimates for Hessian inequalities on closed manifolds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pointwise identities, the integral identity chain and the ratios.
    Verify(RunArgs),
    /// Maximise A/B and E/B over a function family.
    EstimateC(RunArgs),
    /// Refinement tables for volume, integration by parts and piate.
    Convergence(RunArgs),
    /// Print the manifold catalog.
    ListManifolds(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Verify(_) => "verify",
            Command::EstimateC(_) => "estimate-c",
            Command::Convergence(_) => "convergence",
            Command::ListManifolds(_) => "list-manifolds",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Verify(a)
            | Command::EstimateC(a)
            | Command::Convergence(a)
            | Command::ListManifolds(a) => a,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Manifold spec, e.g. `sphere:1.0`; repeat for several.
    #[arg(long)]
    pub manifold: Vec<String>,
    /// Family spec, e.g. `exp-trig:4` or `shifted-trig:1:a=1:c=2`.
    #[arg(long)]
    pub family: Option<String>,
    /// Random family members per manifold.
    #[arg(long)]
    pub samples: Option<usize>,
    /// `N` for every axis, or one count per axis `N,M,…`.
    #[arg(long)]
    pub resolution: Option<String>,
    /// Grid doublings.
    #[arg(long)]
    pub refine: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Functional evaluations per objective.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `name=value`; names: lemma, bochner, log, sqrt, raz, identity, byparts, certify.
    #[arg(long)]
    pub tolerance: Vec<String>,
    /// Key-value file, one `flag = value` per line.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Parser for a config file turned into flags.
#[derive(Debug, Parser)]
#[command(name = "config", no_binary_name = true)]
struct ConfigArgs {
    #[command(flatten)]
    args: RunArgs,
}

fn read_config(path: &Path) -> Result<RunArgs, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut flags = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| {
                Failure::Config(format!(
                    "{}:{}: expected `key = value`",
                    path.display(),
                    lineno + 1
                ))
            })?;
        if key == "config" {
            return Err(Failure::Config(
                "config files cannot include other configs".into(),
            ));
        }
        flags.push(format!("--{key}"));
        flags.push(value.to_string());
    }
    ConfigArgs::try_parse_from(flags)
        .map(|c| c.args)
        .map_err(|e| Failure::Config(format!("{}: {}", path.display(), e.render())))
}

/// Flags given on the command line win over the config file.
fn merge(cli: &RunArgs, file: RunArgs) -> RunArgs {
    RunArgs {
        manifold: if cli.manifold.is_empty() {
            file.manifold
        } else {
            cli.manifold.clone()
        },
        family: cli.family.clone().or(file.family),
        samples: cli.samples.or(file.samples),
        resolution: cli.resolution.clone().or(file.resolution),
        refine: cli.refine.or(file.refine),
        seed: cli.seed.or(file.seed),
        budget: cli.budget.or(file.budget),
        jobs: cli.jobs.or(file.jobs),
        out: cli.out.clone().or(file.out),
        tolerance: file
            .tolerance
            .into_iter()
            .chain(cli.tolerance.iter().cloned())
            .collect(),
        config: None,
    }
}

/// Fully resolved run configuration.
#[derive(Debug)]
pub struct RunConfig {
    pub manifolds: Vec<ManifoldSpec>,
    pub family: FamilySpec,
    pub samples: usize,
    /// Per-axis counts, or one count for every axis.
    pub resolution: Option<Vec<usize>>,
    pub refine: usize,
    pub seed: u64,
    pub budget: usize,
    pub jobs: Option<usize>,
    pub out: PathBuf,
    pub tolerances: Tolerances,
}

fn parse_resolution(s: &str) -> Result<Vec<usize>, Failure> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Failure::Config(format!("bad resolution '{s}'")))
        })
        .collect()
}

impl RunConfig {
    pub fn resolve(command: &Command) -> Result<RunConfig, Failure> {
        let cli = command.args();
        let args = match &cli.config {
            Some(path) => merge(cli, read_config(path)?),
            None => cli.clone(),
        };

        let default_manifold = "flat-torus:2";
        let default_family = match command {
            Command::Convergence(_) => "exp-trig:2:a=1,0.5",
            _ => "exp-trig:4",
        };
        let specs = if args.manifold.is_empty() {
            vec![default_manifold.to_string()]
        } else {
            args.manifold.clone()
        };
        let manifolds = specs
            .iter()
            .map(|s| parse_manifold(s).map_err(Failure::from_core))
            .collect::<Result<Vec<_>, _>>()?;
        let family = FamilySpec::parse(args.family.as_deref().unwrap_or(default_family))
            .map_err(Failure::from_core)?;

        let mut tolerances = Tolerances::default();
        for t in &args.tolerance {
            let (name, value) = t
                .split_once('=')
                .ok_or_else(|| Failure::Config(format!("tolerance '{t}' is not name=value")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Failure::Config(format!("tolerance '{t}' has a bad value")))?;
            tolerances
                .set(name.trim(), value)
                .map_err(Failure::from_core)?;
        }

        let samples = args.samples.unwrap_or(DEFAULT_SAMPLES);
        if samples == 0 {
            return Err(Failure::Config("samples must be at least 1".into()));
        }
        let budget = args.budget.unwrap_or(DEFAULT_BUDGET);
        if budget == 0 {
            return Err(Failure::Config("budget must be at least 1".into()));
        }
        if args.jobs == Some(0) {
            return Err(Failure::Config("jobs must be at least 1".into()));
        }
        let refine = match command {
            Command::Convergence(_) => {
                let r = args.refine.unwrap_or(DEFAULT_CONVERGENCE_REFINE);
                if r < 2 {
                    return Err(Failure::Config("convergence needs refine >= 2".into()));
                }
                r
            }
            _ => args.refine.unwrap_or(0),
        };
        let resolution = args
            .resolution
            .as_deref()
            .map(parse_resolution)
            .transpose()?;
        let out = args
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

        let config = RunConfig {
            manifolds,
            family,
            samples,
            resolution,
            refine,
            seed: args.seed.unwrap_or(DEFAULT_SEED),
            budget,
            jobs: args.jobs,
            out,
            tolerances,
        };
        for m in &config.manifolds {
            config.resolution_for(m)?;
        }
        Ok(config)
    }

    /// Grid resolution for `m`: the flag broadcast or matched to its axes,
    /// else the manifold default.
    pub fn resolution_for(&self, m: &ManifoldSpec) -> Result<Vec<usize>, Failure> {
        match &self.resolution {
            None => Ok(m.default_resolution()),
            Some(r) if r.len() == 1 => Ok(vec![r[0]; m.dim()]),
            Some(r) if r.len() == m.dim() => Ok(r.clone()),
            Some(r) => Err(Failure::Config(format!(
                "resolution has {} entries but {} has {} axes",
                r.len(),
                m.name,
                m.dim()
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(argv: &[&str]) -> Command {
        Cli::try_parse_from(std::iter::once("riemann-ineq").chain(argv.iter().copied()))
            .unwrap()
            .command
    }

    #[test]
    fn unknown_flags_are_rejected() {
        assert!(Cli::try_parse_from(["riemann-ineq", "verify", "--bogus", "1"]).is_err());
    }

    #[test]
    fn defaults() {
        let cmd = parse(&["verify"]);
        let c = RunConfig::resolve(&cmd).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.samples, DEFAULT_SAMPLES);
        assert!(c.manifolds[0].name.starts_with("flat-torus:2"));
        assert_eq!(c.family.n_params, 4);
    }

    #[test]
    fn resolution_broadcasts_and_checks_axes() {
        let cmd = parse(&["verify", "--manifold", "sphere:1", "--resolution", "16"]);
        let c = RunConfig::resolve(&cmd).unwrap();
        assert_eq!(c.resolution_for(&c.manifolds[0]).unwrap(), vec![16, 16]);
        let cmd = parse(&["verify", "--manifold", "sphere:1", "--resolution", "8,8,8"]);
        assert!(matches!(RunConfig::resolve(&cmd), Err(Failure::Config(_))));
    }

    #[test]
    fn config_file_maps_to_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(
            &path,
            "# sweep\nmanifold = sphere:2\nseed = 7\ntolerance = identity=1e-6\n",
        )
        .unwrap();
        let p = path.to_str().unwrap();
        let cmd = parse(&["verify", "--config", p, "--seed", "3"]);
        let c = RunConfig::resolve(&cmd).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.manifolds[0].name, "sphere:2");
        assert_eq!(c.tolerances.identity, 1e-6);

        std::fs::write(&path, "colour = blue\n").unwrap();
        let cmd = parse(&["verify", "--config", p]);
        assert!(matches!(RunConfig::resolve(&cmd), Err(Failure::Config(_))));
    }

    #[test]
    fn convergence_needs_two_refinements() {
        let cmd = parse(&["convergence", "--refine", "1"]);
        assert!(matches!(RunConfig::resolve(&cmd), Err(Failure::Config(_))));
    }
}
