//! Omniscient Byzantine adversaries.
//!
//! Attacks forge the server-side aggregand `g_i` of each Byzantine slot.
//! Protocol-following attackers (bit flip, label flip, mimic) run a shadow
//! copy of the honest protocol; the simulator passes those shadow aggregands
//! in the view.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

pub const IPM_DEFAULT_Z: f64 = 0.1;
pub const ALIE_DEFAULT_Z: f64 = 1.06;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AttackKind {
    /// Negated honest-protocol aggregand.
    BitFlip,
    /// Honest protocol on label-negated data.
    LabelFlip,
    /// Inner product manipulation: `−(z/G) Σ_good g_i`.
    Ipm { z: f64 },
    /// A little is enough: `μ − zσ`, coordinate-wise over the good aggregands.
    Alie { z: f64 },
    /// Honest protocol on a designated good worker's objective.
    Mimic,
}

impl AttackKind {
    /// Whether the attacker needs its own protocol state.
    pub fn needs_shadow(&self) -> bool {
        matches!(self, AttackKind::BitFlip | AttackKind::LabelFlip | AttackKind::Mimic)
    }
}

/// Everything the adversary sees in one round.
#[derive(Clone, Copy, Debug)]
pub struct AdversaryView<'a> {
    /// Aggregands the good workers will submit this round.
    pub honest_aggregands: &'a [Vector],
    /// Aggregands each Byzantine worker would submit by following the
    /// protocol on its shadow objective; empty when not needed.
    pub shadow_aggregands: &'a [Vector],
    pub num_byz: usize,
}

/// One forged aggregand per Byzantine worker.
pub fn craft(attack: &AttackKind, view: &AdversaryView<'_>) -> Result<Vec<Vector>> {
    if view.num_byz == 0 {
        return Ok(Vec::new());
    }
    let honest = view.honest_aggregands;
    let first = honest.first().ok_or(Error::Empty("adversary sees no honest aggregands"))?;
    let d = first.len();
    if attack.needs_shadow() && view.shadow_aggregands.len() != view.num_byz {
        return Err(Error::InvalidArgument(format!(
            "{} shadow aggregands for {} Byzantine workers",
            view.shadow_aggregands.len(),
            view.num_byz
        )));
    }
    let out = match attack {
        AttackKind::BitFlip => view.shadow_aggregands.iter().map(|v| v.scaled(-1.0)).collect(),
        AttackKind::LabelFlip | AttackKind::Mimic => view.shadow_aggregands.to_vec(),
        AttackKind::Ipm { z } => {
            let mut sum = Vector::zeros(d);
            for v in honest {
                sum.axpy(1.0, v);
            }
            sum.scale(-z / honest.len() as f64);
            vec![sum; view.num_byz]
        }
        AttackKind::Alie { z } => {
            let mu = Vector::mean(honest)?;
            let g = honest.len() as f64;
            let forged: Vector = (0..d)
                .map(|j| {
                    let var = honest.iter().map(|v| (v[j] - mu[j]).powi(2)).sum::<f64>() / g;
                    mu[j] - z * var.sqrt()
                })
                .collect();
            vec![forged; view.num_byz]
        }
    };
    Ok(out)
}
