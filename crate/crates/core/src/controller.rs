//! Online frame controller.
//!
//! At the start of each frame the controller observes the virtual queue and
//! the packet length, solves the frame subproblem once, and then picks a
//! power level every slot from the number of data units still missing. The
//! channel gain of a slot is only revealed after the power is committed. The
//! virtual queue is updated once per frame with the frame's power surplus.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_model, LinkModel, SystemConfig};
use crate::rng::{CounterStream, RandomStreams};
use crate::sim::Trace;
use crate::solver::{penalties, solve_frame, FrameCase};

/// Accumulated power debt; never negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
pub struct VirtualQueue(f64);

impl VirtualQueue {
    pub fn new(q: f64) -> Result<Self> {
        if !(q.is_finite() && q >= 0.0) {
            return Err(Error::InvalidInput {
                field: "q",
                reason: format!("queue must be finite and nonnegative, got {q}"),
            });
        }
        Ok(Self(q))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `max(q + surplus, 0)`.
pub fn queue_update(q: VirtualQueue, surplus: f64) -> VirtualQueue {
    VirtualQueue((q.0 + surplus).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub power_index: usize,
    pub gain_index: usize,
    pub delivered: u32,
}

/// Everything that happened while one packet was being transmitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: u64,
    pub packet_length: u32,
    pub start_slot: u64,
    pub slots: Vec<SlotRecord>,
    /// Sum of the transmitted PSD levels.
    pub power_sum: f64,
    /// Sum of `P(t) - beta` over the frame.
    pub surplus: f64,
    pub q_before: f64,
    pub q_after: f64,
    pub mode: FrameCase,
}

impl FrameRecord {
    /// Frame length in slots.
    pub fn len(&self) -> u64 {
        self.slots.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn delivered_total(&self) -> u64 {
        self.slots.iter().map(|s| u64::from(s.delivered)).sum()
    }
}

/// Source of realized channel-gain indices, consumed one per slot.
pub trait GainSource {
    fn next_gain(&mut self) -> usize;
}

/// Gains drawn i.i.d. from the channel distribution, addressed by global slot.
#[derive(Debug, Clone)]
pub struct SlotGains<'a> {
    stream: CounterStream,
    probs: &'a [f64],
    slot: u64,
}

impl<'a> SlotGains<'a> {
    pub fn new(stream: CounterStream, probs: &'a [f64], first_slot: u64) -> Self {
        Self {
            stream,
            probs,
            slot: first_slot,
        }
    }
}

impl GainSource for SlotGains<'_> {
    fn next_gain(&mut self) -> usize {
        let u = self.stream.uniform_at(self.slot);
        self.slot += 1;
        crate::model::sample_index(self.probs, u)
    }
}

impl<F: FnMut() -> usize> GainSource for F {
    fn next_gain(&mut self) -> usize {
        self()
    }
}

/// The online algorithm bound to a model.
///
/// `planning` supplies the channel distribution used to build value tables;
/// it defaults to the true model but may be deliberately wrong.
#[derive(Debug, Clone)]
pub struct Controller<'a> {
    model: &'a LinkModel,
    planning: &'a LinkModel,
    beta: f64,
    v: f64,
    queue_bound: f64,
}

impl<'a> Controller<'a> {
    pub fn new(model: &'a LinkModel, config: &SystemConfig) -> Self {
        Self {
            model,
            planning: model,
            beta: config.beta,
            v: config.v,
            queue_bound: model.queue_bound(config.beta, config.v),
        }
    }

    /// Plans with `planning`'s channel probabilities while the link keeps
    /// behaving according to the true model.
    pub fn with_planning_model(mut self, planning: &'a LinkModel) -> Result<Self> {
        if planning.rates != self.model.rates || planning.menu != self.model.menu {
            return Err(Error::contract(
                "planning model must share the power menu and rate table",
            ));
        }
        self.planning = planning;
        Ok(self)
    }

    pub fn queue_bound(&self) -> f64 {
        self.queue_bound
    }

    pub fn run_frame(
        &self,
        index: u64,
        start_slot: u64,
        q: VirtualQueue,
        packet_length: u32,
        gains: &mut impl GainSource,
    ) -> Result<(FrameRecord, VirtualQueue)> {
        if self.model.lengths.prob_of(packet_length).is_none() {
            return Err(Error::contract(format!(
                "packet length {packet_length} is not in the length set"
            )));
        }
        let pen = penalties(q.value(), self.v, &self.model.menu, self.beta);
        let table = solve_frame(packet_length as usize, &pen, self.planning)?;

        let mut slots = Vec::new();
        let mut power_sum = 0.0;
        let mut surplus = 0.0;
        let mut remaining = packet_length;
        while remaining > 0 {
            // decided before the slot's gain is drawn
            let option = table.choose_power(remaining as usize)?;
            let gain = gains.next_gain();
            let delivered = self.model.rates.get(gain, option);
            let p = self.model.menu.level(option);
            power_sum += p;
            surplus += p - self.beta;
            remaining = remaining.saturating_sub(delivered);
            slots.push(SlotRecord {
                power_index: option,
                gain_index: gain,
                delivered,
            });
        }
        let next = queue_update(q, surplus);
        let record = FrameRecord {
            index,
            packet_length,
            start_slot,
            slots,
            power_sum,
            surplus,
            q_before: q.value(),
            q_after: next.value(),
            mode: table.mode(),
        };
        Ok((record, next))
    }

    /// Runs `frames` frames from an empty queue.
    ///
    /// Panics if a frame exceeds `ceil(L / K_min)` slots or the queue leaves
    /// its deterministic bound; either would be a bug in the controller.
    pub fn run_frames(&self, streams: RandomStreams, frames: u64) -> Result<Vec<FrameRecord>> {
        let kmin = self.model.kmin();
        let mut out = Vec::with_capacity(frames as usize);
        let mut q = VirtualQueue::default();
        let mut slot = 0u64;
        for f in 0..frames {
            let length = self.model.lengths.sample(streams.packet.uniform_at(f));
            let mut gains = SlotGains::new(streams.channel, &self.model.channel.probs, slot);
            let (record, next) = self.run_frame(f, slot, q, length, &mut gains)?;
            let max_slots = u64::from(length.div_ceil(kmin));
            assert!(
                record.len() <= max_slots,
                "frame length {} exceeds {max_slots}: {record:?}",
                record.len()
            );
            assert!(
                next.value() <= self.queue_bound,
                "queue {} exceeds bound {}: {record:?}",
                next.value(),
                self.queue_bound
            );
            slot += record.len();
            q = next;
            out.push(record);
        }
        Ok(out)
    }
}

fn check_runnable(model: &LinkModel, config: &SystemConfig) -> Result<()> {
    let violations: Vec<_> = validate_model(model, config)
        .into_iter()
        .filter(|v| v.code != "config.horizon_zero")
        .collect();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(violations))
    }
}

/// Convenience wrapper for a single frame with the true channel as belief.
pub fn run_frame(
    q: VirtualQueue,
    packet_length: u32,
    model: &LinkModel,
    config: &SystemConfig,
    gains: &mut impl GainSource,
) -> Result<(FrameRecord, VirtualQueue)> {
    Controller::new(model, config).run_frame(0, 0, q, packet_length, gains)
}

/// Full horizon of `config.horizon_frames` frames, deterministic in the seed.
pub fn run_horizon(model: &LinkModel, config: &SystemConfig) -> Result<Trace> {
    check_runnable(model, config)?;
    let frames = Controller::new(model, config)
        .run_frames(RandomStreams::new(config.seed), config.horizon_frames)?;
    Ok(Trace::new(frames, model, config))
}

/// Horizon run whose value tables are built from `planning` instead of the
/// true channel distribution.
pub fn run_horizon_with_planning(
    model: &LinkModel,
    planning: &LinkModel,
    config: &SystemConfig,
) -> Result<Trace> {
    check_runnable(model, config)?;
    let frames = Controller::new(model, config)
        .with_planning_model(planning)?
        .run_frames(RandomStreams::new(config.seed), config.horizon_frames)?;
    Ok(Trace::new(frames, model, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChannelDistribution, PacketLengthDistribution, PowerMenu, RateTable};

    fn config(beta: f64, v: f64, frames: u64) -> SystemConfig {
        SystemConfig {
            beta,
            v,
            horizon_frames: frames,
            seed: 11,
            noise_psd: None,
        }
    }

    fn model() -> LinkModel {
        LinkModel::new(
            PowerMenu::new(vec![0.5, 2.0]),
            ChannelDistribution::new(vec![1.0, 4.0], vec![0.75, 0.25]),
            RateTable::new(vec![vec![1, 2], vec![2, 4]]),
            PacketLengthDistribution::new(vec![3, 6], vec![0.5, 0.5]),
        )
        .unwrap()
    }

    #[test]
    fn queue_update_examples() {
        let q = |x| VirtualQueue::new(x).unwrap();
        assert_eq!(queue_update(q(0.0), -3.0).value(), 0.0);
        assert_eq!(queue_update(q(5.0), 2.5).value(), 7.5);
        assert_eq!(queue_update(q(1.0), -1.0).value(), 0.0);
        assert!(VirtualQueue::new(-1.0).is_err());
    }

    #[test]
    fn unit_packet_takes_one_slot() {
        let m = LinkModel::new(
            PowerMenu::new(vec![0.5, 2.0]),
            ChannelDistribution::new(vec![1.0, 4.0], vec![0.75, 0.25]),
            RateTable::new(vec![vec![1, 2], vec![2, 4]]),
            PacketLengthDistribution::fixed(1),
        )
        .unwrap();
        let mut g = || 0usize;
        let (rec, _) = run_frame(VirtualQueue::default(), 1, &m, &config(1.0, 10.0, 1), &mut g).unwrap();
        assert_eq!(rec.len(), 1);
    }

    #[test]
    fn congested_queue_uses_lowest_power() {
        let m = model();
        // threshold V/(beta - P1) = 10 / 0.5 = 20
        let q = VirtualQueue::new(20.5).unwrap();
        let mut g = || 0usize;
        let (rec, next) = run_frame(q, 6, &m, &config(1.0, 10.0, 1), &mut g).unwrap();
        assert_eq!(rec.mode, FrameCase::LowestPower);
        assert!(rec.slots.iter().all(|s| s.power_index == 0));
        assert_eq!(rec.len(), 6);
        assert_eq!(next.value(), 20.5 - 6.0 * 0.5);
    }

    #[test]
    fn deterministic_replay_single_option() {
        let m = LinkModel::new(
            PowerMenu::new(vec![1.0]),
            ChannelDistribution::point_mass(1.0),
            RateTable::new(vec![vec![2]]),
            PacketLengthDistribution::fixed(5),
        )
        .unwrap();
        let mut g = || 0usize;
        let (rec, _) = run_frame(VirtualQueue::default(), 5, &m, &config(2.0, 1.0, 1), &mut g).unwrap();
        assert_eq!(rec.len(), 3);
        assert_eq!(
            rec.slots.iter().map(|s| s.delivered).collect::<Vec<_>>(),
            vec![2, 2, 2]
        );
        assert_eq!(rec.surplus, -3.0);
    }

    #[test]
    fn unknown_length_is_rejected() {
        let m = model();
        let mut g = || 0usize;
        assert!(run_frame(VirtualQueue::default(), 4, &m, &config(1.0, 1.0, 1), &mut g).is_err());
    }

    #[test]
    fn empty_horizon() {
        let t = run_horizon(&model(), &config(1.0, 10.0, 0)).unwrap();
        assert!(t.frames.is_empty());
    }

    #[test]
    fn generous_budget_keeps_queue_empty() {
        let t = run_horizon(&model(), &config(2.0, 10.0, 500)).unwrap();
        assert!(t.frames.iter().all(|f| f.q_before == 0.0 && f.q_after == 0.0));
    }

    #[test]
    fn same_seed_same_trace() {
        let a = run_horizon(&model(), &config(1.0, 10.0, 300)).unwrap();
        let b = run_horizon(&model(), &config(1.0, 10.0, 300)).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    }

    #[test]
    fn invalid_config_propagates() {
        assert!(matches!(
            run_horizon(&model(), &config(0.4, 10.0, 10)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn planning_model_must_share_rates() {
        let m = model();
        let mut other = m.clone();
        other.rates = RateTable::new(vec![vec![1, 1], vec![2, 4]]);
        assert!(Controller::new(&m, &config(1.0, 1.0, 1))
            .with_planning_model(&other)
            .is_err());
    }

    #[test]
    fn frames_end_at_first_crossing() {
        let t = run_horizon(&model(), &config(1.0, 5.0, 2000)).unwrap();
        for f in &t.frames {
            let delivered: Vec<u64> = f.slots.iter().map(|s| u64::from(s.delivered)).collect();
            let total: u64 = delivered.iter().sum();
            assert!(total >= u64::from(f.packet_length));
            assert!(total - delivered.last().unwrap() < u64::from(f.packet_length));
        }
    }
}
