//! Building an experiment from its configuration and running it.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::config::{AttackName, ExperimentConfig, StepsizeMode};
use super::data::{gaussian_shift, partition, phishing_like};
use super::libsvm::load_libsvm;
use crate::algorithms::stepsize::{stepsize, stepsize_pl, StepsizeInputs};
use crate::algorithms::{Algorithm, Federation, HyperParams};
use crate::compressors::{alpha, omega};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::objective::{estimate_constants, estimate_f_star, GlobalObjective, LabeledDataset, LocalObjective, Regularizer, SmoothnessConstants};

/// Environment variable capping the worker thread pool.
pub const THREADS_ENV: &str = "BYZSIM_THREADS";

/// Objectives and constants of a configured experiment.
#[derive(Clone, Debug)]
pub struct Problem {
    pub good: Vec<LocalObjective>,
    /// One objective per Byzantine worker for protocol-following attacks.
    pub shadows: Vec<LocalObjective>,
    pub constants: SmoothnessConstants,
    pub global: GlobalObjective,
    pub d: usize,
    /// Smallest local sample count among good workers.
    pub m: usize,
}

fn dataset(cfg: &ExperimentConfig) -> Result<Arc<LabeledDataset>> {
    Ok(Arc::new(match &cfg.dataset {
        Some(path) => load_libsvm(path, cfg.dim)?,
        None => phishing_like(cfg.samples, cfg.data_seed),
    }))
}

impl Problem {
    pub fn build(cfg: &ExperimentConfig) -> Result<Problem> {
        cfg.validate()?;
        let g = cfg.num_good();
        let (good, shadows) = if cfg.is_quadratic() {
            let z1 = gaussian_shift(cfg.quad_dim, cfg.zeta_seed1);
            let z2 = gaussian_shift(cfg.quad_dim, cfg.zeta_seed2);
            let good: Vec<_> = (0..g)
                .map(|i| LocalObjective::quadratic(if i < cfg.quad_group1 { z1.clone() } else { z2.clone() }))
                .collect();
            let shadows = vec![LocalObjective::quadratic(z1); cfg.n_byz];
            (good, shadows)
        } else {
            let ds = dataset(cfg)?;
            let reg = Regularizer::new(cfg.regularizer, cfg.lambda)?;
            let good = partition(&ds, g, cfg.partition)?
                .into_iter()
                .map(|shard| LocalObjective::logistic(shard, reg))
                .collect::<Result<Vec<_>>>()?;
            // Byzantine workers hold the full dataset
            let shadow_data = if cfg.attack == AttackName::Lf {
                Arc::new(ds.with_flipped_labels())
            } else {
                ds
            };
            let shadows = vec![LocalObjective::logistic(shadow_data, reg)?; cfg.n_byz];
            (good, shadows)
        };
        let constants = estimate_constants(&good)?;
        let global = GlobalObjective::new(&good)?;
        let d = global.dim();
        let m = good.iter().map(|o| o.num_samples()).min().expect("nonempty");
        Ok(Problem {
            good,
            shadows,
            constants,
            global,
            d,
            m,
        })
    }
}

/// Hyperparameters with every default resolved, `gamma` still unset.
pub fn hyper_params(cfg: &ExperimentConfig, alg: Algorithm, problem: &Problem) -> Result<HyperParams> {
    let d = problem.d;
    let uplink = cfg.uplink(d);
    let b = cfg
        .batch
        .unwrap_or_else(|| ((cfg.batch_frac * problem.m as f64).round() as usize).clamp(1, problem.m));
    let w = if alg.needs_unbiased() { omega(&uplink, d)? } else { 0.0 };
    let ratio = b as f64 / problem.m as f64;
    let p = cfg.p.unwrap_or(match alg {
        Algorithm::Marina | Algorithm::Marina2 => (1.0 / (1.0 + w)).min(ratio),
        Algorithm::Dasha => ratio,
        Algorithm::Ef21 | Algorithm::Ef21Bc => 1.0,
    });
    let a = cfg.momentum.unwrap_or(if alg == Algorithm::Dasha { 1.0 / (2.0 * w + 1.0) } else { 1.0 });
    Ok(HyperParams {
        gamma: 0.0,
        p,
        a,
        b,
        rounds: cfg.rounds,
        uplink,
        downlink: cfg.downlink_kind(d),
        aggregator: cfg.aggregator_kind(),
        seed: cfg.seed,
    })
}

pub fn stepsize_inputs(cfg: &ExperimentConfig, alg: Algorithm, problem: &Problem, hp: &HyperParams) -> Result<StepsizeInputs> {
    let d = problem.d;
    let mut inp = StepsizeInputs::from_constants(&problem.constants);
    if alg.needs_unbiased() {
        inp.omega = omega(&hp.uplink, d)?;
    } else {
        inp.alpha_d = alpha(&hp.uplink, d)?;
        inp.alpha_p = if alg == Algorithm::Ef21Bc { alpha(&hp.downlink, d)? } else { 1.0 };
    }
    inp.c = cfg.c_value();
    inp.delta = cfg.delta();
    inp.g = cfg.num_good();
    inp.b = hp.b;
    inp.m = problem.m;
    inp.p = hp.p;
    inp.a = hp.a;
    inp.big_b = cfg.hetero_b;
    Ok(inp)
}

/// Stepsize selected by the configuration.
pub fn resolve_gamma(cfg: &ExperimentConfig, alg: Algorithm, problem: &Problem, hp: &HyperParams) -> Result<f64> {
    match cfg.stepsize {
        StepsizeMode::Explicit => cfg.gamma.ok_or_else(|| Error::Config("explicit stepsize needs gamma".into())),
        StepsizeMode::Theoretical | StepsizeMode::Multiplier => {
            Ok(cfg.gamma_mult * stepsize(alg, &stepsize_inputs(cfg, alg, problem, hp)?)?)
        }
        StepsizeMode::TheoreticalPl => Ok(cfg.gamma_mult * stepsize_pl(alg, &stepsize_inputs(cfg, alg, problem, hp)?)?),
    }
}

/// Non-convex theoretical stepsize of every algorithm under `cfg`.
pub fn theoretical_stepsizes(cfg: &ExperimentConfig, problem: &Problem) -> Vec<(Algorithm, Result<f64>)> {
    Algorithm::ALL
        .into_iter()
        .map(|alg| {
            let mut c = cfg.clone();
            c.algorithm = alg;
            if !alg.needs_unbiased() && !c.uplink(problem.d).is_contractive() {
                c.compressor = super::config::CompressorName::ScaledRandk;
            }
            let res = hyper_params(&c, alg, problem)
                .and_then(|hp| stepsize(alg, &stepsize_inputs(&c, alg, problem, &hp)?));
            (alg, res)
        })
        .collect()
}

/// Thread pool sized by `BYZSIM_THREADS`; `None` when unset (single thread).
pub fn thread_pool_from_env() -> Result<Option<Arc<rayon::ThreadPool>>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
            if n <= 1 {
                return Ok(None);
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(Some(Arc::new(pool)))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub t: usize,
    pub bits: u64,
    pub f: f64,
    pub grad_norm_sq: f64,
    pub gap: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub rows: Vec<Row>,
    pub config: ExperimentConfig,
    pub gamma: f64,
    pub hyper_params: HyperParams,
    pub constants: SmoothnessConstants,
    pub f_star: Option<f64>,
    /// Set when the iterate became non-finite; rows stop before that point.
    pub diverged: bool,
    pub wall_time: Duration,
}

impl RunResult {
    pub fn total_bits(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.bits)
    }

    pub fn best_grad_norm_sq(&self) -> f64 {
        self.rows.iter().map(|r| r.grad_norm_sq).fold(f64::INFINITY, f64::min)
    }
}

fn metrics(global: &GlobalObjective, x: &Vector) -> Result<(f64, f64)> {
    Ok((global.loss(x)?, global.grad(x)?.norm_sq()))
}

/// Runs one experiment. Fully determined by `cfg`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunResult> {
    let problem = Problem::build(cfg)?;
    run_problem(cfg, &problem)
}

/// Runs `cfg` on an already built problem (shared across sweeps).
pub fn run_problem(cfg: &ExperimentConfig, problem: &Problem) -> Result<RunResult> {
    let start = Instant::now();
    let alg = cfg.algorithm;
    let mut hp = hyper_params(cfg, alg, problem)?;
    hp.gamma = resolve_gamma(cfg, alg, problem, &hp)?;
    let f_star = match cfg.f_star {
        Some(v) => Some(v),
        None if cfg.estimate_f_star => Some(estimate_f_star(&problem.good, cfg.f_star_tol)?.value),
        None => None,
    };
    let attack = cfg.attack_kind();
    let shadows = if cfg.n_byz > 0 && attack.is_some_and(|a| a.needs_shadow()) {
        problem.shadows.clone()
    } else {
        Vec::new()
    };
    let mut fed = Federation::new(
        alg,
        hp.clone(),
        Vector::zeros(problem.d),
        problem.good.clone(),
        cfg.n_byz,
        attack,
        shadows,
    )?;
    if let Some(pool) = thread_pool_from_env()? {
        fed = fed.with_pool(pool);
    }
    let row = |t: usize, bits: u64, f: f64, gn: f64| Row {
        t,
        bits,
        f,
        grad_norm_sq: gn,
        gap: f_star.map(|fs| f - fs),
    };
    let mut rows = Vec::with_capacity(cfg.rounds / cfg.metrics_every + 2);
    let (f0, g0) = metrics(&problem.global, &fed.server().x)?;
    rows.push(row(0, 0, f0, g0));
    let mut bits = 0u64;
    let mut diverged = !(f0.is_finite() && g0.is_finite());
    for t in 1..=cfg.rounds {
        if diverged {
            break;
        }
        bits += fed.step()?.bits();
        if !fed.is_finite() {
            diverged = true;
            break;
        }
        if t % cfg.metrics_every == 0 || t == cfg.rounds {
            let (f, gn) = metrics(&problem.global, &fed.server().x)?;
            if !(f.is_finite() && gn.is_finite()) {
                diverged = true;
                break;
            }
            rows.push(row(t, bits, f, gn));
        }
    }
    Ok(RunResult {
        rows,
        config: cfg.clone(),
        gamma: hp.gamma,
        hyper_params: hp,
        constants: problem.constants.clone(),
        f_star,
        diverged,
        wall_time: start.elapsed(),
    })
}

/// Runs `cfg` once per stepsize multiplier.
pub fn sweep(cfg: &ExperimentConfig, multipliers: &[f64]) -> Result<Vec<(f64, RunResult)>> {
    let problem = Problem::build(cfg)?;
    multipliers
        .iter()
        .map(|&k| {
            let mut c = cfg.clone();
            c.gamma_mult = k;
            if c.stepsize == StepsizeMode::Explicit {
                c.gamma = c.gamma.map(|g| g * k);
            }
            run_problem(&c, &problem).map(|r| (k, r))
        })
        .collect()
}

pub const CSV_HEADER: &str = "t,bits,f,grad_norm_sq,gap";

pub fn write_csv<W: Write>(rows: &[Row], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        let gap = r.gap.map(|g| format!("{g:.16e}")).unwrap_or_default();
        writeln!(out, "{},{},{:.16e},{:.16e},{}", r.t, r.bits, r.f, r.grad_norm_sq, gap)?;
    }
    out.flush()?;
    Ok(())
}

pub fn emit_csv(result: &RunResult, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(&result.rows, std::io::BufWriter::new(file))
}

/// Parses CSV produced by [`write_csv`].
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<Row>> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header '{header}'"),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line_no = i + 2;
        let bad = |msg: &str| Error::Parse {
            line: line_no,
            msg: msg.to_string(),
        };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(bad("expected 5 columns"));
        }
        rows.push(Row {
            t: cols[0].parse().map_err(|_| bad("bad t"))?,
            bits: cols[1].parse().map_err(|_| bad("bad bits"))?,
            f: cols[2].parse().map_err(|_| bad("bad f"))?,
            grad_norm_sq: cols[3].parse().map_err(|_| bad("bad grad_norm_sq"))?,
            gap: if cols[4].is_empty() {
                None
            } else {
                Some(cols[4].parse().map_err(|_| bad("bad gap"))?)
            },
        });
    }
    Ok(rows)
}
