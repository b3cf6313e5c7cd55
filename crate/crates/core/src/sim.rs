//! Seeded simulation runs, trace bookkeeping, time-average metrics and
//! drift-plus-penalty diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::fingerprint_bytes;
use crate::controller::{run_horizon, FrameRecord};
use crate::error::{Error, Result};
use crate::model::{LinkModel, SystemConfig};
use crate::rng::derive_seed;

/// Ordered frame history of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub frames: Vec<FrameRecord>,
    /// SHA-256 over the JSON encoding of the model and run configuration.
    pub fingerprint: String,
}

impl Trace {
    pub fn new(frames: Vec<FrameRecord>, model: &LinkModel, config: &SystemConfig) -> Self {
        Self {
            frames,
            fingerprint: model_fingerprint(model, config),
        }
    }

    pub fn total_slots(&self) -> u64 {
        self.frames.iter().map(FrameRecord::len).sum()
    }

    /// Frame indices run 0, 1, 2, ... and each frame starts where the
    /// previous one ended.
    pub fn is_contiguous(&self) -> bool {
        let mut next_slot = 0;
        for (f, rec) in self.frames.iter().enumerate() {
            if rec.index != f as u64 || rec.start_slot != next_slot {
                return false;
            }
            next_slot += rec.len();
        }
        true
    }
}

pub fn model_fingerprint(model: &LinkModel, config: &SystemConfig) -> String {
    let bytes = serde_json::to_vec(&(model, config)).expect("model serializes");
    fingerprint_bytes(&bytes)
}

/// Deterministic trace for `(model, config)`; packet lengths and channel
/// gains come from independent streams keyed by `config.seed`.
pub fn simulate(model: &LinkModel, config: &SystemConfig) -> Result<Trace> {
    run_horizon(model, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub frames: u64,
    pub total_slots: u64,
    /// Slots per packet.
    pub avg_delay: f64,
    pub avg_power_per_slot: f64,
    /// `avg_power_per_slot - beta`; the ratio form of the power constraint.
    pub constraint_slack: f64,
    /// Mean per-frame power surplus; the frame-normalized constraint.
    pub per_frame_surplus_mean: f64,
    pub q_max: f64,
    pub queue_bound: f64,
    /// Mean over frames of `1/2 (Q[f+1]^2 - Q[f]^2) + V T[f]`.
    pub drift_penalty_mean: f64,
    pub c0_bound: f64,
}

pub fn compute_metrics(trace: &Trace, model: &LinkModel, config: &SystemConfig) -> Result<Metrics> {
    if trace.frames.is_empty() {
        return Err(Error::contract("metrics need at least one frame"));
    }
    let frames = trace.frames.len() as u64;
    let total_slots = trace.total_slots();
    let power: f64 = trace.frames.iter().map(|f| f.power_sum).sum();
    let surplus: f64 = trace.frames.iter().map(|f| f.surplus).sum();
    let q_max = trace
        .frames
        .iter()
        .map(|f| f.q_before.max(f.q_after))
        .fold(0.0, f64::max);
    let drift_penalty: f64 = trace
        .frames
        .iter()
        .map(|f| 0.5 * (f.q_after * f.q_after - f.q_before * f.q_before) + config.v * f.len() as f64)
        .sum();
    let avg_power_per_slot = power / total_slots as f64;
    Ok(Metrics {
        frames,
        total_slots,
        avg_delay: total_slots as f64 / frames as f64,
        avg_power_per_slot,
        constraint_slack: avg_power_per_slot - config.beta,
        per_frame_surplus_mean: surplus / frames as f64,
        q_max,
        queue_bound: model.queue_bound(config.beta, config.v),
        drift_penalty_mean: drift_penalty / frames as f64,
        c0_bound: model.drift_constant(config.beta),
    })
}

/// Sample-path checks of the queue bound and the power constraint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub queue_bound: f64,
    pub q_max: f64,
    /// First frame whose queue exceeded the bound.
    pub queue_violation: Option<u64>,
    /// First prefix length `F'` with cumulative surplus above the bound.
    pub prefix_violation: Option<u64>,
    /// Total power minus `beta` times total slots, against the bound.
    pub slot_excess: f64,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.queue_violation.is_none()
            && self.prefix_violation.is_none()
            && self.slot_excess <= self.queue_bound
    }
}

/// Checks `Q[f] <= C` for every frame, `sum_{f<F'} surplus[f] <= C` for every
/// prefix, and `sum P(t) - beta * slots <= C` over the horizon, with
/// `C` the deterministic queue bound. No tolerance is applied.
pub fn check_bounds(trace: &Trace, model: &LinkModel, config: &SystemConfig) -> BoundReport {
    let bound = model.queue_bound(config.beta, config.v);
    let mut q_max: f64 = 0.0;
    let mut queue_violation = None;
    let mut prefix_violation = None;
    let mut cumulative = 0.0;
    for (f, rec) in trace.frames.iter().enumerate() {
        q_max = q_max.max(rec.q_before).max(rec.q_after);
        if queue_violation.is_none() && (rec.q_before > bound || rec.q_after > bound) {
            queue_violation = Some(f as u64);
        }
        cumulative += rec.surplus;
        if prefix_violation.is_none() && cumulative > bound {
            prefix_violation = Some(f as u64 + 1);
        }
    }
    let power: f64 = trace.frames.iter().map(|f| f.power_sum).sum();
    BoundReport {
        queue_bound: bound,
        q_max,
        queue_violation,
        prefix_violation,
        slot_excess: power - config.beta * trace.total_slots() as f64,
    }
}

/// Aggregate of repeated runs at one `V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub v: f64,
    pub reps: usize,
    pub mean_delay: f64,
    pub se_delay: f64,
    pub mean_slack: f64,
    pub se_slack: f64,
    pub q_max: f64,
    pub mean_drift_penalty: f64,
    pub se_drift_penalty: f64,
    pub c0_bound: f64,
    pub theta_star: Option<f64>,
    /// `(mean_delay - theta_star) * v`.
    pub gap_times_v: Option<f64>,
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Seed of repetition `rep`; shared across `V` values so rows are compared
/// on common random numbers.
pub fn repetition_seed(base: u64, rep: usize) -> u64 {
    derive_seed(base, "repetition", rep as u64)
}

/// Runs `repetitions` independent simulations per `V` (in parallel) and
/// aggregates them. `theta_star`, when known, fills the gap columns.
pub fn sweep_v(
    model: &LinkModel,
    base: &SystemConfig,
    v_values: &[f64],
    repetitions: usize,
    theta_star: Option<f64>,
) -> Result<Vec<SweepRow>> {
    if v_values.is_empty() {
        return Err(Error::contract("sweep needs at least one V value"));
    }
    if repetitions == 0 {
        return Err(Error::contract("sweep needs at least one repetition"));
    }
    let cells: Vec<(usize, usize)> = (0..v_values.len())
        .flat_map(|i| (0..repetitions).map(move |r| (i, r)))
        .collect();
    let results: Vec<Metrics> = cells
        .par_iter()
        .map(|&(i, rep)| {
            let config = SystemConfig {
                v: v_values[i],
                seed: repetition_seed(base.seed, rep),
                ..base.clone()
            };
            let trace = simulate(model, &config)?;
            compute_metrics(&trace, model, &config)
        })
        .collect::<Result<_>>()?;

    Ok(v_values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let runs = &results[i * repetitions..(i + 1) * repetitions];
            let col = |f: fn(&Metrics) -> f64| runs.iter().map(f).collect::<Vec<_>>();
            let (mean_delay, se_delay) = mean_se(&col(|m| m.avg_delay));
            let (mean_slack, se_slack) = mean_se(&col(|m| m.constraint_slack));
            let (mean_drift_penalty, se_drift_penalty) = mean_se(&col(|m| m.drift_penalty_mean));
            SweepRow {
                v,
                reps: repetitions,
                mean_delay,
                se_delay,
                mean_slack,
                se_slack,
                q_max: runs.iter().map(|m| m.q_max).fold(0.0, f64::max),
                mean_drift_penalty,
                se_drift_penalty,
                c0_bound: runs[0].c0_bound,
                theta_star,
                gap_times_v: theta_star.map(|t| (mean_delay - t) * v),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::SlotRecord;
    use crate::model::{ChannelDistribution, PacketLengthDistribution, PowerMenu, RateTable};
    use crate::solver::FrameCase;

    fn model() -> LinkModel {
        LinkModel::new(
            PowerMenu::new(vec![0.5, 2.0]),
            ChannelDistribution::new(vec![1.0, 4.0], vec![0.75, 0.25]),
            RateTable::new(vec![vec![1, 2], vec![2, 4]]),
            PacketLengthDistribution::new(vec![3, 6], vec![0.5, 0.5]),
        )
        .unwrap()
    }

    fn config(beta: f64, v: f64, frames: u64, seed: u64) -> SystemConfig {
        SystemConfig {
            beta,
            v,
            horizon_frames: frames,
            seed,
            noise_psd: None,
        }
    }

    fn frame(index: u64, start: u64, powers: &[usize], levels: &[f64], beta: f64, q: (f64, f64)) -> FrameRecord {
        let power_sum: f64 = powers.iter().map(|&p| levels[p]).sum();
        FrameRecord {
            index,
            packet_length: powers.len() as u32,
            start_slot: start,
            slots: powers
                .iter()
                .map(|&p| SlotRecord {
                    power_index: p,
                    gain_index: 0,
                    delivered: 1,
                })
                .collect(),
            power_sum,
            surplus: power_sum - beta * powers.len() as f64,
            q_before: q.0,
            q_after: q.1,
            mode: FrameCase::DynamicProgram,
        }
    }

    fn flat_model() -> LinkModel {
        LinkModel::new(
            PowerMenu::new(vec![1.0]),
            ChannelDistribution::point_mass(1.0),
            RateTable::new(vec![vec![1]]),
            PacketLengthDistribution::new(vec![2, 3, 4], vec![0.3, 0.3, 0.4]),
        )
        .unwrap()
    }

    #[test]
    fn single_frame_at_budget() {
        let m = flat_model();
        let cfg = config(1.0, 1.0, 1, 0);
        let t = Trace::new(vec![frame(0, 0, &[0, 0, 0], &[1.0], 1.0, (0.0, 0.0))], &m, &cfg);
        let mt = compute_metrics(&t, &m, &cfg).unwrap();
        assert_eq!(mt.avg_delay, 3.0);
        assert_eq!(mt.constraint_slack, 0.0);
    }

    #[test]
    fn mean_delay_over_frames() {
        let m = flat_model();
        let cfg = config(1.0, 1.0, 2, 0);
        let t = Trace::new(
            vec![
                frame(0, 0, &[0, 0], &[1.0], 1.0, (0.0, 0.0)),
                frame(1, 2, &[0, 0, 0, 0], &[1.0], 1.0, (0.0, 0.0)),
            ],
            &m,
            &cfg,
        );
        assert!(t.is_contiguous());
        assert_eq!(compute_metrics(&t, &m, &cfg).unwrap().avg_delay, 3.0);
    }

    #[test]
    fn drift_of_single_jump() {
        let m = flat_model();
        let cfg = config(1.0, 0.0, 1, 0);
        let t = Trace::new(vec![frame(0, 0, &[0], &[1.0], 1.0, (0.0, 4.0))], &m, &cfg);
        // 1/2 (16 - 0) with V = 0
        assert_eq!(compute_metrics(&t, &m, &cfg).unwrap().drift_penalty_mean, 8.0);
    }

    #[test]
    fn empty_trace_has_no_metrics() {
        let m = flat_model();
        let cfg = config(1.0, 1.0, 1, 0);
        assert!(compute_metrics(&Trace::new(vec![], &m, &cfg), &m, &cfg).is_err());
    }

    #[test]
    fn simulate_is_deterministic_and_seed_sensitive() {
        let m = model();
        let a = simulate(&m, &config(1.0, 10.0, 200, 3)).unwrap();
        let b = simulate(&m, &config(1.0, 10.0, 200, 3)).unwrap();
        let c = simulate(&m, &config(1.0, 10.0, 200, 4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint, b.fingerprint);
        assert_ne!(a.frames, c.frames);
        assert!(a.is_contiguous());
    }

    #[test]
    fn degenerate_model_is_periodic() {
        let m = LinkModel::new(
            PowerMenu::new(vec![0.5, 2.0]),
            ChannelDistribution::point_mass(1.0),
            RateTable::new(vec![vec![1, 3]]),
            PacketLengthDistribution::fixed(5),
        )
        .unwrap();
        let t = simulate(&m, &config(1.0, 4.0, 400, 1)).unwrap();
        // the queue state drives the period; once it repeats, so does everything
        let key = |f: &FrameRecord| (f.q_before.to_bits(), f.slots.clone());
        let first = t.frames.iter().position(|f| {
            t.frames.iter().filter(|g| key(g) == key(f)).count() > 1
        });
        let start = first.expect("finite state must recur");
        let period = t.frames[start + 1..]
            .iter()
            .position(|g| key(g) == key(&t.frames[start]))
            .unwrap()
            + 1;
        for f in start..t.frames.len() - period {
            assert_eq!(key(&t.frames[f]), key(&t.frames[f + period]));
        }
    }

    #[test]
    fn mean_se_basic() {
        assert_eq!(mean_se(&[2.0]), (2.0, 0.0));
        let (m, se) = mean_se(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        // sd = sqrt(2), se = sqrt(2)/sqrt(2) = 1
        assert!((se - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_sweep_matches_single_run() {
        let m = model();
        let base = config(1.0, 0.0, 300, 8);
        let rows = sweep_v(&m, &base, &[25.0], 1, None).unwrap();
        assert_eq!(rows.len(), 1);
        let cfg = SystemConfig {
            v: 25.0,
            seed: repetition_seed(8, 0),
            ..base
        };
        let mt = compute_metrics(&simulate(&m, &cfg).unwrap(), &m, &cfg).unwrap();
        assert_eq!(rows[0].mean_delay, mt.avg_delay);
        assert_eq!(rows[0].mean_slack, mt.constraint_slack);
        assert_eq!(rows[0].q_max, mt.q_max);
        assert_eq!(rows[0].se_delay, 0.0);
    }

    #[test]
    fn q_max_grows_with_v() {
        let m = model();
        let rows = sweep_v(&m, &config(1.0, 0.0, 2000, 2), &[1.0, 10.0, 100.0], 3, None).unwrap();
        assert!(rows.windows(2).all(|w| w[0].q_max <= w[1].q_max));
    }

    #[test]
    fn bounds_hold_on_simulated_run() {
        let m = model();
        let cfg = config(1.0, 20.0, 3000, 5);
        let t = simulate(&m, &cfg).unwrap();
        let r = check_bounds(&t, &m, &cfg);
        assert!(r.holds(), "{r:?}");
        assert_eq!(r.q_max, compute_metrics(&t, &m, &cfg).unwrap().q_max);
    }
}
