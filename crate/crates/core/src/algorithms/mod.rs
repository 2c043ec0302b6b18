//! The five optimizers as a round-by-round simulator.
//!
//! A [`Federation`] holds the server, the good workers and, for
//! protocol-following attacks, a shadow protocol state for each Byzantine
//! worker. One call to [`Federation::step`] runs a synchronized round:
//!
//! 1. the server moves `x ← x − γ g` and broadcasts;
//! 2. every worker computes its message independently (optionally on a
//!    thread pool, each with its own random streams);
//! 3. the adversary sees all good aggregands and forges the Byzantine ones;
//! 4. the server aggregates.
//!
//! Workers `0..G` are good; `G..n` are Byzantine.

pub mod stepsize;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregators::{aggregate, AggregatorKind};
use crate::attacks::{craft, AdversaryView, AttackKind};
use crate::compressors::{compress, decompress, dense_bits, CompressorKind};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::objective::LocalObjective;
use crate::rng::{Purpose, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Baseline: `g_i ← g + m_i`.
    Marina,
    /// `g_i ← g_i + m_i`, with full-gradient rounds on a shared coin.
    Marina2,
    /// Momentum variance reduction; every uplink message is compressed.
    Dasha,
    /// Error feedback on full local gradients.
    Ef21,
    /// Error feedback with a compressed downlink anchor `w`.
    Ef21Bc,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Marina,
        Algorithm::Marina2,
        Algorithm::Dasha,
        Algorithm::Ef21,
        Algorithm::Ef21Bc,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Marina => "marina",
            Algorithm::Marina2 => "marina2",
            Algorithm::Dasha => "dasha",
            Algorithm::Ef21 => "ef21",
            Algorithm::Ef21Bc => "ef21bc",
        }
    }

    /// Whether rounds depend on the shared Bernoulli coin.
    pub fn uses_coin(&self) -> bool {
        matches!(self, Algorithm::Marina | Algorithm::Marina2 | Algorithm::Dasha)
    }

    /// Whether the uplink compressor must be unbiased (otherwise contractive).
    pub fn needs_unbiased(&self) -> bool {
        self.uses_coin()
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub gamma: f64,
    /// Probability of a full-gradient (or fresh-gradient) round.
    pub p: f64,
    /// Momentum of the variance-reduced estimator.
    pub a: f64,
    /// Mini-batch size.
    pub b: usize,
    pub rounds: usize,
    pub uplink: CompressorKind,
    /// Downlink compressor, used by `Ef21Bc` only.
    pub downlink: CompressorKind,
    pub aggregator: AggregatorKind,
    pub seed: u64,
}

impl HyperParams {
    pub fn validate(&self, alg: Algorithm, d: usize, min_m: usize) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::InvalidArgument(format!("p must lie in (0, 1], got {}", self.p)));
        }
        if !(self.a > 0.0 && self.a <= 1.0) {
            return Err(Error::InvalidArgument(format!("a must lie in (0, 1], got {}", self.a)));
        }
        if self.b == 0 || self.b > min_m {
            return Err(Error::InvalidArgument(format!(
                "batch size {} must lie in 1..={min_m}",
                self.b
            )));
        }
        self.uplink.validate(d)?;
        if alg.needs_unbiased() && !self.uplink.is_unbiased() {
            return Err(Error::Classification(format!(
                "{} needs an unbiased uplink compressor, got {:?}",
                alg.name(),
                self.uplink
            )));
        }
        if !alg.needs_unbiased() && !self.uplink.is_contractive() {
            return Err(Error::Classification(format!(
                "{} needs a contractive uplink compressor, got {:?}",
                alg.name(),
                self.uplink
            )));
        }
        if alg == Algorithm::Ef21Bc {
            self.downlink.validate(d)?;
            if !self.downlink.is_contractive() {
                return Err(Error::Classification(format!(
                    "downlink compressor must be contractive, got {:?}",
                    self.downlink
                )));
            }
        }
        self.aggregator.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServerState {
    pub x: Vector,
    pub g: Vector,
    /// Server's copy of every worker's aggregand, Byzantine slots included.
    pub per_worker_g: Vec<Vector>,
    /// Downlink anchor (`Ef21Bc`).
    pub w: Vector,
    pub t: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkerState {
    pub g: Vector,
    /// Variance-reduced estimator (`Dasha`); empty otherwise.
    pub h: Vector,
    /// Downlink anchor (`Ef21Bc`); empty otherwise.
    pub w: Vector,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundStats {
    /// Round index after the step.
    pub t: usize,
    pub coin: Option<bool>,
    pub uplink_bits: u64,
    pub downlink_bits: u64,
}

impl RoundStats {
    pub fn bits(&self) -> u64 {
        self.uplink_bits + self.downlink_bits
    }
}

/// A worker's slot: its objective, protocol state and private streams.
#[derive(Clone, Debug)]
struct Slot {
    obj: LocalObjective,
    state: WorkerState,
    sampling: RngStream,
    compression: RngStream,
}

/// What a worker sends and how the receiver rebuilds `g_i` from it.
enum Uplink {
    /// `g_i ← v`
    Full(Vector),
    /// `g_i ← base + v`, `v` already decompressed.
    Delta(Vector),
}

/// Round data broadcast to workers.
struct RoundCtx<'a> {
    x_new: &'a Vector,
    x_old: &'a Vector,
    coin: bool,
}

#[derive(Clone, Debug)]
pub struct Federation {
    alg: Algorithm,
    hp: HyperParams,
    d: usize,
    server: ServerState,
    good: Vec<Slot>,
    shadows: Vec<Slot>,
    num_byz: usize,
    attack: Option<AttackKind>,
    coin_rng: RngStream,
    agg_rng: RngStream,
    down_rng: RngStream,
    pool: Option<Arc<rayon::ThreadPool>>,
}

fn slot(seed: u64, index: usize, obj: LocalObjective, state: WorkerState) -> Slot {
    Slot {
        obj,
        state,
        sampling: RngStream::for_purpose(seed, Purpose::Sampling, index as u64),
        compression: RngStream::for_purpose(seed, Purpose::Compression, index as u64),
    }
}

impl Federation {
    /// Sets up round 0 at `x0`: `g_i = h_i = ∇f_i(x0)`, `w = x0`, and the
    /// first aggregate. `shadow_objectives` gives each Byzantine worker's
    /// objective for protocol-following attacks and may be empty otherwise.
    pub fn new(
        alg: Algorithm,
        hp: HyperParams,
        x0: Vector,
        good_objectives: Vec<LocalObjective>,
        num_byz: usize,
        attack: Option<AttackKind>,
        shadow_objectives: Vec<LocalObjective>,
    ) -> Result<Self> {
        let d = x0.len();
        if good_objectives.is_empty() {
            return Err(Error::Empty("need at least one good worker"));
        }
        if num_byz > 0 && attack.is_none() {
            return Err(Error::InvalidArgument("Byzantine workers need an attack".into()));
        }
        let needs_shadow = num_byz > 0 && attack.is_some_and(|a| a.needs_shadow());
        if needs_shadow && shadow_objectives.len() != num_byz {
            return Err(Error::InvalidArgument(format!(
                "{} shadow objectives for {num_byz} Byzantine workers",
                shadow_objectives.len()
            )));
        }
        let used_shadows = if needs_shadow { &shadow_objectives[..] } else { &[] };
        let min_m = good_objectives
            .iter()
            .chain(used_shadows)
            .map(|o| o.num_samples())
            .min()
            .unwrap_or(1);
        for o in good_objectives.iter().chain(shadow_objectives.iter()) {
            if o.dim() != d {
                return Err(Error::dim(d, o.dim()));
            }
        }
        hp.validate(alg, d, min_m)?;
        let seed = hp.seed;
        let init = |obj: &LocalObjective| -> Result<WorkerState> {
            let g = obj.grad(&x0)?;
            Ok(WorkerState {
                h: if alg == Algorithm::Dasha { g.clone() } else { Vector::default() },
                w: if alg == Algorithm::Ef21Bc { x0.clone() } else { Vector::default() },
                g,
            })
        };
        let mut good = Vec::with_capacity(good_objectives.len());
        for (i, obj) in good_objectives.into_iter().enumerate() {
            let state = init(&obj)?;
            good.push(slot(seed, i, obj, state));
        }
        let g_count = good.len();
        let mut shadows = Vec::new();
        if needs_shadow {
            for (j, obj) in shadow_objectives.into_iter().enumerate() {
                let state = init(&obj)?;
                shadows.push(slot(seed, g_count + j, obj, state));
            }
        }
        let mut fed = Federation {
            alg,
            d,
            server: ServerState {
                x: x0.clone(),
                g: Vector::zeros(d),
                per_worker_g: good.iter().map(|s| s.state.g.clone()).collect(),
                w: if alg == Algorithm::Ef21Bc { x0 } else { Vector::default() },
                t: 0,
            },
            good,
            shadows,
            num_byz,
            attack,
            coin_rng: RngStream::for_purpose(seed, Purpose::Coin, 0),
            agg_rng: RngStream::for_purpose(seed, Purpose::Aggregation, 0),
            down_rng: RngStream::for_purpose(seed, Purpose::Downlink, 0),
            pool: None,
            hp,
        };
        let shadow_g: Vec<Vector> = fed.shadows.iter().map(|s| s.state.g.clone()).collect();
        fed.finish_round(shadow_g)?;
        Ok(fed)
    }

    /// Runs honest-worker computation on `pool` instead of the caller's
    /// thread. Results are identical either way.
    pub fn with_pool(mut self, pool: Arc<rayon::ThreadPool>) -> Self {
        self.pool = Some(pool);
        self
    }

    pub fn algorithm(&self) -> Algorithm {
        self.alg
    }

    pub fn hyper_params(&self) -> &HyperParams {
        &self.hp
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn num_good(&self) -> usize {
        self.good.len()
    }

    pub fn num_workers(&self) -> usize {
        self.good.len() + self.num_byz
    }

    /// States of the good workers, in worker order.
    pub fn good_states(&self) -> impl Iterator<Item = &WorkerState> {
        self.good.iter().map(|s| &s.state)
    }

    pub fn good_objectives(&self) -> impl Iterator<Item = &LocalObjective> {
        self.good.iter().map(|s| &s.obj)
    }

    /// Bits an honest message costs this round; only the MARINA variants
    /// send dense gradients on sync rounds.
    fn message_bits(&self, coin: Option<bool>) -> u64 {
        let full = coin == Some(true) && matches!(self.alg, Algorithm::Marina | Algorithm::Marina2);
        if full {
            dense_bits(self.d)
        } else {
            self.hp.uplink.message_bits(self.d)
        }
    }

    fn worker_uplink(alg: Algorithm, hp: &HyperParams, slot: &mut Slot, ctx: &RoundCtx<'_>) -> Result<(Uplink, u64)> {
        let d = ctx.x_new.len();
        match alg {
            Algorithm::Marina | Algorithm::Marina2 => {
                if ctx.coin {
                    Ok((Uplink::Full(slot.obj.grad(ctx.x_new)?), dense_bits(d)))
                } else {
                    let diff = slot.obj.grad_diff_estimator(ctx.x_new, ctx.x_old, hp.b, &mut slot.sampling)?;
                    let msg = compress(&hp.uplink, &diff, &mut slot.compression)?;
                    Ok((Uplink::Delta(decompress(&msg)?), msg.bit_cost))
                }
            }
            Algorithm::Dasha => {
                let st = &mut slot.state;
                let h_new = if ctx.coin {
                    slot.obj.grad(ctx.x_new)?
                } else {
                    let diff = slot.obj.grad_diff_estimator(ctx.x_new, ctx.x_old, hp.b, &mut slot.sampling)?;
                    st.h.add(&diff)
                };
                let mut v = h_new.sub(&st.h);
                v.axpy(-hp.a, &st.g.sub(&st.h));
                let msg = compress(&hp.uplink, &v, &mut slot.compression)?;
                st.h = h_new;
                Ok((Uplink::Delta(decompress(&msg)?), msg.bit_cost))
            }
            Algorithm::Ef21 | Algorithm::Ef21Bc => {
                let at = if alg == Algorithm::Ef21Bc { &slot.state.w } else { ctx.x_new };
                let diff = slot.obj.grad(at)?.sub(&slot.state.g);
                let msg = compress(&hp.uplink, &diff, &mut slot.compression)?;
                Ok((Uplink::Delta(decompress(&msg)?), msg.bit_cost))
            }
        }
    }

    /// New `g_i` from an uplink; used identically by workers and server.
    fn rebuild(alg: Algorithm, own_g: &Vector, g_old: &Vector, up: &Uplink) -> Vector {
        match up {
            Uplink::Full(v) => v.clone(),
            Uplink::Delta(v) => {
                let base = if alg == Algorithm::Marina { g_old } else { own_g };
                base.add(v)
            }
        }
    }

    fn run_slots(&mut self, ctx: &RoundCtx<'_>, shadows: bool) -> Result<Vec<(Uplink, u64)>> {
        let (alg, hp) = (self.alg, &self.hp);
        let slots = if shadows { &mut self.shadows } else { &mut self.good };
        let work = |s: &mut Slot| Self::worker_uplink(alg, hp, s, ctx);
        let out: Vec<Result<(Uplink, u64)>> = match &self.pool {
            Some(pool) => pool.install(|| slots.par_iter_mut().map(work).collect()),
            None => slots.iter_mut().map(work).collect(),
        };
        out.into_iter().collect()
    }

    /// Adversary and aggregation; `per_worker_g` must hold the good slots.
    fn finish_round(&mut self, shadow_g: Vec<Vector>) -> Result<()> {
        let g_count = self.good.len();
        self.server.per_worker_g.truncate(g_count);
        if self.num_byz > 0 {
            let attack = self.attack.as_ref().expect("checked at construction");
            let forged = craft(
                attack,
                &AdversaryView {
                    honest_aggregands: &self.server.per_worker_g,
                    shadow_aggregands: &shadow_g,
                    num_byz: self.num_byz,
                },
            )?;
            self.server.per_worker_g.extend(forged);
        }
        self.server.g = aggregate(&self.hp.aggregator, &self.server.per_worker_g, &mut self.agg_rng)?;
        Ok(())
    }

    /// Runs one round.
    pub fn step(&mut self) -> Result<RoundStats> {
        let alg = self.alg;
        let d = self.d;
        let x_old = self.server.x.clone();
        let mut x_new = x_old.clone();
        x_new.axpy(-self.hp.gamma, &self.server.g);
        let g_old = self.server.g.clone();

        let coin = if alg.uses_coin() {
            Some(self.coin_rng.bernoulli(self.hp.p))
        } else {
            None
        };
        let downlink_bits = if alg == Algorithm::Ef21Bc {
            let msg = compress(&self.hp.downlink, &x_new.sub(&self.server.w), &mut self.down_rng)?;
            let s = decompress(&msg)?;
            self.server.w.axpy(1.0, &s);
            for slot in self.good.iter_mut().chain(self.shadows.iter_mut()) {
                slot.state.w.axpy(1.0, &s);
            }
            msg.bit_cost
        } else {
            dense_bits(d)
        };

        let ctx = RoundCtx {
            x_new: &x_new,
            x_old: &x_old,
            coin: coin.unwrap_or(false),
        };
        let good_up = self.run_slots(&ctx, false)?;
        let shadow_up = self.run_slots(&ctx, true)?;

        let mut uplink_bits = 0;
        for (i, (up, bits)) in good_up.iter().enumerate() {
            let worker_g = Self::rebuild(alg, &self.good[i].state.g, &g_old, up);
            let server_g = Self::rebuild(alg, &self.server.per_worker_g[i], &g_old, up);
            self.good[i].state.g = worker_g;
            self.server.per_worker_g[i] = server_g;
            uplink_bits += bits;
        }
        let mut shadow_g = Vec::with_capacity(shadow_up.len());
        for (slot, (up, _)) in self.shadows.iter_mut().zip(&shadow_up) {
            slot.state.g = Self::rebuild(alg, &slot.state.g, &g_old, up);
            shadow_g.push(slot.state.g.clone());
        }
        uplink_bits += self.num_byz as u64 * self.message_bits(coin);

        self.finish_round(shadow_g)?;
        self.server.x = x_new;
        self.server.t += 1;
        Ok(RoundStats {
            t: self.server.t,
            coin,
            uplink_bits,
            downlink_bits,
        })
    }

    /// True while the iterate and aggregate are finite.
    pub fn is_finite(&self) -> bool {
        self.server.x.is_finite() && self.server.g.is_finite()
    }
}
