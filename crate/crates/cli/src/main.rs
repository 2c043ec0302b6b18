//! `byzsim` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use byzsim_core::aggregators::{robustness_certificate, AggregatorKind};
use byzsim_core::algorithms::Algorithm;
use byzsim_core::compressors::{alpha, monte_carlo, omega};
use byzsim_core::harness::config::{AggregatorName, AttackName, CompressorName};
use byzsim_core::harness::run::theoretical_stepsizes;
use byzsim_core::harness::{emit_csv, run, sweep, write_csv, ExperimentConfig, Problem, RunResult};
use byzsim_core::rng::{Purpose, RngStream};
use byzsim_core::Vector;

#[derive(Parser)]
#[command(name = "byzsim", version, about = "Byzantine-robust compressed optimization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its metrics as CSV.
    Run {
        #[command(flatten)]
        overrides: Overrides,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the experiment once per stepsize multiplier.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated multipliers of the theoretical stepsize.
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 4.0, 8.0])]
        mults: Vec<f64>,
        /// Directory receiving one `sweep_x<mult>.csv` per multiplier.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirical robustness certificate on Gaussian good inputs.
    CertifyAggregator {
        #[arg(long, value_enum, default_value_t = AggArg::Cm)]
        agg: AggArg,
        /// Bucket size; 1 disables bucketing.
        #[arg(long, default_value_t = 2)]
        bucket_s: usize,
        #[arg(long, default_value_t = 5)]
        dim: usize,
        #[arg(long, default_value_t = 13)]
        good: usize,
        #[arg(long, default_value_t = 3)]
        byz: usize,
        /// Byzantine inputs sit at `outlier · e1`.
        #[arg(long, default_value_t = 100.0)]
        outlier: f64,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte-Carlo bias and error report for a compressor.
    CheckCompressor {
        #[arg(long, value_enum, default_value_t = CompressorArg::Randk)]
        compressor: CompressorArg,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 20)]
        dim: usize,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print smoothness constants and theoretical stepsizes.
    Constants {
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    /// TOML configuration file; flags below take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    algo: Option<AlgoArg>,
    /// `none` also sets the Byzantine count to zero.
    #[arg(long, value_enum)]
    attack: Option<AttackArg>,
    #[arg(long)]
    attack_z: Option<f64>,
    #[arg(long, value_enum)]
    agg: Option<AggArg>,
    #[arg(long)]
    bucket_s: Option<usize>,
    #[arg(long, value_enum)]
    compressor: Option<CompressorArg>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    gamma_mult: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Marina,
    Marina2,
    Dasha,
    Ef21,
    Ef21bc,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackArg {
    None,
    Bf,
    Lf,
    Ipm,
    Alie,
    Mimic,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggArg {
    Mean,
    Cm,
    Gm,
    Krum,
}

#[derive(Clone, Copy, ValueEnum)]
enum CompressorArg {
    Identity,
    Randk,
    Topk,
    Natural,
    ScaledRandk,
    ScaledNatural,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Marina => Algorithm::Marina,
            AlgoArg::Marina2 => Algorithm::Marina2,
            AlgoArg::Dasha => Algorithm::Dasha,
            AlgoArg::Ef21 => Algorithm::Ef21,
            AlgoArg::Ef21bc => Algorithm::Ef21Bc,
        }
    }
}

impl From<AttackArg> for AttackName {
    fn from(a: AttackArg) -> Self {
        match a {
            AttackArg::None => AttackName::None,
            AttackArg::Bf => AttackName::Bf,
            AttackArg::Lf => AttackName::Lf,
            AttackArg::Ipm => AttackName::Ipm,
            AttackArg::Alie => AttackName::Alie,
            AttackArg::Mimic => AttackName::Mimic,
        }
    }
}

impl From<AggArg> for AggregatorName {
    fn from(a: AggArg) -> Self {
        match a {
            AggArg::Mean => AggregatorName::Mean,
            AggArg::Cm => AggregatorName::Cm,
            AggArg::Gm => AggregatorName::Gm,
            AggArg::Krum => AggregatorName::Krum,
        }
    }
}

impl From<CompressorArg> for CompressorName {
    fn from(c: CompressorArg) -> Self {
        match c {
            CompressorArg::Identity => CompressorName::Identity,
            CompressorArg::Randk => CompressorName::Randk,
            CompressorArg::Topk => CompressorName::Topk,
            CompressorArg::Natural => CompressorName::Natural,
            CompressorArg::ScaledRandk => CompressorName::ScaledRandk,
            CompressorArg::ScaledNatural => CompressorName::ScaledNatural,
        }
    }
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.algo {
            cfg.algorithm = v.into();
        }
        if let Some(v) = self.attack {
            cfg.attack = v.into();
            if cfg.attack == AttackName::None {
                cfg.n_byz = 0;
            }
        }
        if let Some(v) = self.attack_z {
            cfg.attack_z = Some(v);
        }
        if let Some(v) = self.agg {
            cfg.aggregator = v.into();
        }
        if let Some(v) = self.bucket_s {
            cfg.bucket_s = Some(v);
        }
        if let Some(v) = self.compressor {
            cfg.compressor = v.into();
        }
        if let Some(v) = self.k {
            cfg.k = Some(v);
        }
        if let Some(v) = self.gamma_mult {
            cfg.gamma_mult = v;
        }
        if let Some(v) = self.rounds {
            cfg.rounds = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn summarize(label: &str, r: &RunResult) {
    let last = r.rows.last().expect("rows start at t = 0");
    eprintln!(
        "{label}: gamma = {:.4e}, rounds = {}, bits = {}, f = {:.6e}, best |grad f|^2 = {:.4e}{}",
        r.gamma,
        last.t,
        r.total_bits(),
        last.f,
        r.best_grad_norm_sq(),
        if r.diverged { ", DIVERGED" } else { "" }
    );
}

fn cmd_run(overrides: &Overrides, out: Option<&Path>) -> Result<ExitCode> {
    let cfg = overrides.resolve()?;
    let result = run(&cfg)?;
    match out {
        Some(path) => emit_csv(&result, path).with_context(|| format!("writing {}", path.display()))?,
        None => write_csv(&result.rows, std::io::stdout().lock())?,
    }
    summarize(cfg.algorithm.name(), &result);
    Ok(if result.diverged { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn cmd_sweep(overrides: &Overrides, mults: &[f64], out: Option<&Path>) -> Result<ExitCode> {
    if mults.is_empty() {
        bail!("need at least one multiplier");
    }
    let cfg = overrides.resolve()?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let results = sweep(&cfg, mults)?;
    for (k, r) in &results {
        summarize(&format!("{} x{k}", cfg.algorithm.name()), r);
        if let Some(dir) = out {
            let path = dir.join(format!("sweep_x{k}.csv"));
            emit_csv(r, &path).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    let best = results
        .iter()
        .filter(|(_, r)| !r.diverged)
        .min_by(|a, b| a.1.best_grad_norm_sq().total_cmp(&b.1.best_grad_norm_sq()));
    match best {
        Some((k, r)) => {
            println!("best multiplier {k}: |grad f|^2 = {:.4e}", r.best_grad_norm_sq());
            Ok(ExitCode::SUCCESS)
        }
        None => {
            println!("every multiplier diverged");
            Ok(ExitCode::from(2))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_certify(
    agg: AggArg,
    bucket_s: usize,
    dim: usize,
    good: usize,
    byz: usize,
    outlier: f64,
    trials: usize,
    seed: u64,
) -> Result<ExitCode> {
    if dim == 0 || good == 0 {
        bail!("need dim >= 1 and good >= 1");
    }
    let base = match agg {
        AggArg::Mean => AggregatorKind::Mean,
        AggArg::Cm => AggregatorKind::CM,
        AggArg::Gm => AggregatorKind::gm(),
        AggArg::Krum => AggregatorKind::Krum { num_byz: byz },
    };
    let kind = if bucket_s > 1 { AggregatorKind::bucketed(base, bucket_s) } else { base };
    let n = good + byz;
    let delta = byz as f64 / n as f64;
    let byz_vectors = vec![Vector::basis(dim, 0).scaled(outlier); byz];
    let sampler = |rng: &mut RngStream| -> Vec<Vector> {
        (0..good).map(|_| (0..dim).map(|_| rng.standard_normal()).collect()).collect()
    };
    let cert = robustness_certificate(&kind, sampler, &byz_vectors, delta, trials, seed)?;
    println!("aggregator      {kind:?}");
    println!("inputs          {good} good, {byz} Byzantine (delta = {delta:.4})");
    println!("trials          {}", cert.trials);
    println!("E|x_hat-x_bar|^2 {:.6e}", cert.lhs);
    println!("sigma^2         {:.6e}", cert.sigma_sq);
    println!("c_hat           {:.6e}", cert.c_hat);
    Ok(ExitCode::SUCCESS)
}

fn cmd_check_compressor(compressor: CompressorArg, k: usize, dim: usize, draws: usize, seed: u64) -> Result<ExitCode> {
    let kind = ExperimentConfig::compressor_kind(compressor.into(), Some(k), 0.0, dim);
    kind.validate(dim)?;
    let mut rng = RngStream::for_purpose(seed, Purpose::Test, 0);
    let x: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
    let report = monte_carlo(&kind, &x, draws, &mut rng)?;
    println!("compressor      {kind:?}");
    println!("bits/message    {}", kind.message_bits(dim));
    println!("draws           {}", report.draws);
    println!("max |bias|/se   {:.3}", report.max_bias_z);
    println!(
        "E|C(x)-x|^2/|x|^2 {:.6} +- {:.6}",
        report.error_ratio, report.error_ratio_stderr
    );
    if kind.is_unbiased() {
        println!("omega           {:.6}", omega(&kind, dim)?);
    }
    if kind.is_contractive() {
        println!("1 - alpha       {:.6}", 1.0 - alpha(&kind, dim)?);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_constants(overrides: &Overrides) -> Result<ExitCode> {
    let cfg = overrides.resolve()?;
    let problem = Problem::build(&cfg)?;
    let c = &problem.constants;
    println!("d               {}", problem.d);
    println!("m (min shard)   {}", problem.m);
    println!("L               {:.6e}", c.l);
    println!("L_pm            {:.6e}", c.l_pm);
    println!("cal L_pm        {:.6e}", c.cal_l_pm);
    println!("mu              {:.6e}", c.mu);
    println!("c               {}", cfg.c_value());
    println!("delta           {:.6}", cfg.delta());
    for (alg, gamma) in theoretical_stepsizes(&cfg, &problem) {
        match gamma {
            Ok(g) => println!("gamma {:<9} {g:.6e}", alg.name()),
            Err(e) => println!("gamma {:<9} unavailable: {e}", alg.name()),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { overrides, out } => cmd_run(&overrides, out.as_deref()),
        Command::Sweep { overrides, mults, out } => cmd_sweep(&overrides, &mults, out.as_deref()),
        Command::CertifyAggregator {
            agg,
            bucket_s,
            dim,
            good,
            byz,
            outlier,
            trials,
            seed,
        } => cmd_certify(agg, bucket_s, dim, good, byz, outlier, trials, seed),
        Command::CheckCompressor {
            compressor,
            k,
            dim,
            draws,
            seed,
        } => cmd_check_compressor(compressor, k, dim, draws, seed),
        Command::Constants { overrides } => cmd_constants(&overrides),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
