//! Per-frame subproblem: minimize the expected sum of per-slot penalties
//! `R(P) = V + Q (P - beta)` until the frame's packet is fully accumulated.
//!
//! When some penalty is negative the lowest power level is optimal for the
//! whole frame. Otherwise the value table `m[k]` (minimal expected penalty
//! with `k` data units still missing) is filled bottom-up:
//!
//! ```text
//! m[k] = min_j  R(P_j) + sum_i phi(alpha_i) * m[k - K(alpha_i, P_j)],   m[k <= 0] = 0
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LinkModel, PowerMenu};

/// Per-slot penalty of each power option for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePenalties {
    pub r: Vec<f64>,
}

impl FramePenalties {
    pub fn new(r: Vec<f64>) -> Self {
        Self { r }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(self.r.iter().map(|x| x * c).collect())
    }
}

/// Which solution regime applies to a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameCase {
    /// Some penalty is negative: transmit at the lowest power until done.
    LowestPower,
    /// All penalties are nonnegative: follow the dynamic-program table.
    DynamicProgram,
}

impl FrameCase {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameCase::LowestPower => "lowest_power",
            FrameCase::DynamicProgram => "dynamic_program",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lowest_power" => Some(FrameCase::LowestPower),
            "dynamic_program" => Some(FrameCase::DynamicProgram),
            _ => None,
        }
    }
}

/// Solved frame policy: `values[k]` for `k = 0..=L` and the chosen power
/// option (0-based) for every state `k = 1..=L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    values: Vec<f64>,
    choice: Vec<usize>,
    mode: FrameCase,
}

impl ValueTable {
    /// Packet length the table was built for.
    pub fn len(&self) -> usize {
        self.choice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choice.is_empty()
    }

    pub fn mode(&self) -> FrameCase {
        self.mode
    }

    /// `m[k]`; states `k <= 0` are represented by index 0 and are worth zero.
    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Optimal option index for `k` missing units, `1 <= k <= len()`.
    pub fn choice(&self, k: usize) -> usize {
        self.choice[k - 1]
    }

    pub fn choices(&self) -> &[usize] {
        &self.choice
    }

    /// Power option to use with `remaining` data units still missing.
    pub fn choose_power(&self, remaining: usize) -> Result<usize> {
        if remaining == 0 || remaining > self.len() {
            return Err(Error::contract(format!(
                "remaining {remaining} outside 1..={}",
                self.len()
            )));
        }
        Ok(match self.mode {
            FrameCase::LowestPower => 0,
            FrameCase::DynamicProgram => self.choice[remaining - 1],
        })
    }
}

pub fn penalties(q: f64, v: f64, menu: &PowerMenu, beta: f64) -> FramePenalties {
    FramePenalties::new(menu.levels.iter().map(|&p| v + q * (p - beta)).collect())
}

/// A strictly negative minimum penalty selects the lowest-power regime; a
/// minimum of exactly zero stays with the dynamic program.
pub fn case_split(pen: &FramePenalties) -> FrameCase {
    if pen.r.iter().any(|&r| r < 0.0) {
        FrameCase::LowestPower
    } else {
        FrameCase::DynamicProgram
    }
}

fn require_dp_case(length: usize, pen: &FramePenalties) -> Result<()> {
    if case_split(pen) == FrameCase::LowestPower {
        return Err(Error::contract(
            "value table requested for penalties with a negative entry",
        ));
    }
    if length == 0 {
        return Err(Error::contract("packet length must be at least 1"));
    }
    Ok(())
}

/// Knapsack-style table for a constant channel whose per-option rates are `rates`.
pub fn build_value_table_static(
    length: usize,
    pen: &FramePenalties,
    rates: &[u32],
) -> Result<ValueTable> {
    require_dp_case(length, pen)?;
    if rates.len() != pen.len() {
        return Err(Error::contract(format!(
            "{} rates for {} penalties",
            rates.len(),
            pen.len()
        )));
    }
    let mut values = vec![0.0; length + 1];
    let mut choice = vec![0; length];
    for k in 1..=length {
        let mut best = f64::INFINITY;
        let mut arg = 0;
        for (j, (&r, &rate)) in pen.r.iter().zip(rates).enumerate() {
            let total = r + values[k.saturating_sub(rate as usize)];
            if total < best {
                best = total;
                arg = j;
            }
        }
        values[k] = best;
        choice[k - 1] = arg;
    }
    Ok(ValueTable {
        values,
        choice,
        mode: FrameCase::DynamicProgram,
    })
}

/// Table for the i.i.d. random channel of `model`.
pub fn build_value_table_stochastic(
    length: usize,
    pen: &FramePenalties,
    model: &LinkModel,
) -> Result<ValueTable> {
    require_dp_case(length, pen)?;
    if pen.len() != model.menu.len() {
        return Err(Error::contract(format!(
            "{} penalties for {} power options",
            pen.len(),
            model.menu.len()
        )));
    }
    let probs = &model.channel.probs;
    let rates = &model.rates.k;
    let mut values = vec![0.0; length + 1];
    let mut choice = vec![0; length];
    for k in 1..=length {
        let mut best = f64::INFINITY;
        let mut arg = 0;
        for (j, &r) in pen.r.iter().enumerate() {
            let mut total = r;
            for (i, &phi) in probs.iter().enumerate() {
                total += phi * values[k.saturating_sub(rates[i][j] as usize)];
            }
            if total < best {
                best = total;
                arg = j;
            }
        }
        values[k] = best;
        choice[k - 1] = arg;
    }
    Ok(ValueTable {
        values,
        choice,
        mode: FrameCase::DynamicProgram,
    })
}

/// Solves one frame in whichever regime the penalties select.
///
/// In the lowest-power regime the values are the expected penalty of
/// transmitting at `P_1` throughout (negative, and decreasing in `k`).
pub fn solve_frame(length: usize, pen: &FramePenalties, model: &LinkModel) -> Result<ValueTable> {
    match case_split(pen) {
        FrameCase::DynamicProgram => build_value_table_stochastic(length, pen, model),
        FrameCase::LowestPower => {
            if length == 0 {
                return Err(Error::contract("packet length must be at least 1"));
            }
            let mut values = vec![0.0; length + 1];
            for k in 1..=length {
                let mut total = pen.r[0];
                for (i, &phi) in model.channel.probs.iter().enumerate() {
                    total += phi * values[k.saturating_sub(model.rates.k[i][0] as usize)];
                }
                values[k] = total;
            }
            Ok(ValueTable {
                values,
                choice: vec![0; length],
                mode: FrameCase::LowestPower,
            })
        }
    }
}

pub fn choose_power(table: &ValueTable, remaining: usize) -> Result<usize> {
    table.choose_power(remaining)
}
