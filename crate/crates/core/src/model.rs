//! System model of the link: power menu, i.i.d. channel gains, the integer
//! mutual-information rate table and the packet-length distribution.
//!
//! All quantities of information are counted in whole data units. Model types
//! are plain data; [`LinkModel::new`] is the checked entry point and
//! [`validate_model`] reports every violated invariant at once.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Absolute tolerance on probability vectors summing to one.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Discrete transmit PSD levels, strictly increasing and positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerMenu {
    pub levels: Vec<f64>,
}

impl PowerMenu {
    pub fn new(levels: Vec<f64>) -> Self {
        Self { levels }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, option: usize) -> f64 {
        self.levels[option]
    }

    /// P_1, the smallest level.
    pub fn smallest(&self) -> f64 {
        self.levels[0]
    }

    pub fn largest(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }
}

/// Finite channel-gain alphabet with its probability mass function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDistribution {
    pub gains: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ChannelDistribution {
    pub fn new(gains: Vec<f64>, probs: Vec<f64>) -> Self {
        Self { gains, probs }
    }

    /// A single gain with probability one.
    pub fn point_mass(gain: f64) -> Self {
        Self {
            gains: vec![gain],
            probs: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    /// Index of the outcome selected by a uniform draw `u` in `[0, 1)`.
    pub fn sample(&self, u: f64) -> usize {
        sample_index(&self.probs, u)
    }
}

/// Integer rate table `K(alpha_i, P_j)`; `k[i][j]` is indexed by gain then power.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateTable {
    pub k: Vec<Vec<u32>>,
}

impl RateTable {
    pub fn new(k: Vec<Vec<u32>>) -> Self {
        Self { k }
    }

    pub fn get(&self, gain: usize, option: usize) -> u32 {
        self.k[gain][option]
    }

    /// Rates of every power option under a fixed gain.
    pub fn for_gain(&self, gain: usize) -> &[u32] {
        &self.k[gain]
    }
}

/// Distribution of packet lengths in data units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketLengthDistribution {
    pub lengths: Vec<u32>,
    pub probs: Vec<f64>,
}

impl PacketLengthDistribution {
    pub fn new(lengths: Vec<u32>, probs: Vec<f64>) -> Self {
        Self { lengths, probs }
    }

    pub fn fixed(length: u32) -> Self {
        Self {
            lengths: vec![length],
            probs: vec![1.0],
        }
    }

    pub fn sample(&self, u: f64) -> u32 {
        self.lengths[sample_index(&self.probs, u)]
    }

    pub fn prob_of(&self, length: u32) -> Option<f64> {
        self.lengths
            .iter()
            .position(|&l| l == length)
            .map(|i| self.probs[i])
    }
}

/// Run parameters that sit beside the link model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Average PSD budget.
    pub beta: f64,
    /// Delay/power trade-off weight.
    pub v: f64,
    pub horizon_frames: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_psd: Option<f64>,
}

/// Complete link description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub menu: PowerMenu,
    pub channel: ChannelDistribution,
    pub rates: RateTable,
    pub lengths: PacketLengthDistribution,
}

impl LinkModel {
    /// Validates every model invariant and renormalizes both probability
    /// vectors to remove representation error.
    pub fn new(
        menu: PowerMenu,
        channel: ChannelDistribution,
        rates: RateTable,
        lengths: PacketLengthDistribution,
    ) -> Result<Self> {
        let mut model = Self {
            menu,
            channel,
            rates,
            lengths,
        };
        let violations = validate_link(&model);
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        renormalize(&mut model.channel.probs);
        renormalize(&mut model.lengths.probs);
        Ok(model)
    }

    /// Same model with the channel probabilities replaced; used to plan with
    /// a belief that differs from the true channel.
    pub fn with_channel_probs(&self, probs: Vec<f64>) -> Result<Self> {
        Self::new(
            self.menu.clone(),
            ChannelDistribution::new(self.channel.gains.clone(), probs),
            self.rates.clone(),
            self.lengths.clone(),
        )
    }

    pub fn kmin(&self) -> u32 {
        kmin(self)
    }

    pub fn lmax(&self) -> u32 {
        lmax(self)
    }

    /// `ceil(L_max / K_min)`: the most slots any frame can take.
    pub fn max_frame_slots(&self) -> u32 {
        self.lmax().div_ceil(self.kmin())
    }

    /// Deterministic bound on the virtual queue under the online algorithm.
    pub fn queue_bound(&self, beta: f64, v: f64) -> f64 {
        let slots = f64::from(self.max_frame_slots());
        let bound = v / (beta - self.menu.smallest()) + slots * (self.menu.largest() - beta);
        bound.max(0.0)
    }

    /// Per-frame drift constant `1/2 (ceil(L_max/K_min) (P_max + beta))^2`.
    pub fn drift_constant(&self, beta: f64) -> f64 {
        let x = f64::from(self.max_frame_slots()) * (self.menu.largest() + beta);
        0.5 * x * x
    }
}

/// Minimum rate at the smallest power level over all gains.
pub fn kmin(model: &LinkModel) -> u32 {
    model
        .rates
        .k
        .iter()
        .map(|row| row[0])
        .min()
        .expect("rate table has at least one row")
}

pub fn lmax(model: &LinkModel) -> u32 {
    *model
        .lengths
        .lengths
        .iter()
        .max()
        .expect("at least one packet length")
}

/// Rate in data units per slot from the Shannon expression,
/// `ceil(log2(1 + alpha * power / noise_psd))`.
pub fn shannon_rate(alpha: f64, power: f64, noise_psd: f64) -> Result<u32> {
    for (field, value) in [("alpha", alpha), ("power", power), ("noise_psd", noise_psd)] {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidInput {
                field,
                reason: format!("must be a positive finite number, got {value}"),
            });
        }
    }
    let units = (1.0 + alpha * power / noise_psd).log2().ceil();
    if units > f64::from(u32::MAX) {
        return Err(Error::InvalidInput {
            field: "power",
            reason: format!("rate of {units} data units does not fit a table entry"),
        });
    }
    Ok((units as u32).max(1))
}

pub fn build_rate_table(
    channel: &ChannelDistribution,
    menu: &PowerMenu,
    noise_psd: f64,
) -> Result<RateTable> {
    let k = channel
        .gains
        .iter()
        .map(|&alpha| {
            menu.levels
                .iter()
                .map(|&p| shannon_rate(alpha, p, noise_psd))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateTable { k })
}

/// Every violated invariant of the model together with its run configuration.
pub fn validate_model(model: &LinkModel, config: &SystemConfig) -> Vec<Violation> {
    let mut out = validate_link(model);
    out.extend(validate_config(config, model.menu.levels.first().copied()));
    out
}

/// Model-only invariants (menu, channel, rate table, packet lengths).
pub fn validate_link(model: &LinkModel) -> Vec<Violation> {
    let mut out = Vec::new();
    check_menu(&model.menu, &mut out);
    check_channel(&model.channel, &mut out);
    check_rates(&model.rates, &model.channel, &model.menu, &mut out);
    check_lengths(&model.lengths, &mut out);
    out
}

pub(crate) fn validate_config(config: &SystemConfig, p1: Option<f64>) -> Vec<Violation> {
    let mut out = Vec::new();
    if !config.beta.is_finite() {
        out.push(Violation::new("config.beta_not_finite", "beta must be finite"));
    } else if config.beta <= 0.0 {
        out.push(Violation::new("config.beta_nonpositive", "beta must be positive"));
    }
    if let Some(p1) = p1 {
        if p1.is_finite() && config.beta.is_finite() && p1 >= config.beta {
            out.push(Violation::new(
                "config.beta_le_p1",
                format!(
                    "P_1 >= beta: smallest power level {p1} must lie strictly below the budget {}",
                    config.beta
                ),
            ));
        }
    }
    if !(config.v.is_finite() && config.v >= 0.0) {
        out.push(Violation::new(
            "config.v_invalid",
            format!("v must be finite and nonnegative, got {}", config.v),
        ));
    }
    if config.horizon_frames == 0 {
        out.push(Violation::new("config.horizon_zero", "horizon_frames must be at least 1"));
    }
    if let Some(n0) = config.noise_psd {
        if !(n0.is_finite() && n0 > 0.0) {
            out.push(Violation::new(
                "config.noise_psd_invalid",
                format!("noise_psd must be positive and finite, got {n0}"),
            ));
        }
    }
    out
}

fn check_menu(menu: &PowerMenu, out: &mut Vec<Violation>) {
    if menu.is_empty() {
        out.push(Violation::new("menu.empty", "power menu is empty"));
        return;
    }
    if menu.levels.iter().any(|p| !p.is_finite()) {
        out.push(Violation::new("menu.not_finite", "power menu contains NaN or infinity"));
        return;
    }
    if menu.levels[0] <= 0.0 {
        out.push(Violation::new("menu.nonpositive", "power levels must be positive"));
    }
    if menu.levels.windows(2).any(|w| w[0] >= w[1]) {
        out.push(Violation::new(
            "menu.not_increasing",
            "power menu not strictly increasing",
        ));
    }
}

fn check_probs(prefix: &'static str, probs: &[f64], out: &mut Vec<Violation>) {
    let (neg, sum_code) = match prefix {
        "channel" => ("channel.prob_negative", "channel.prob_sum"),
        _ => ("lengths.prob_negative", "lengths.prob_sum"),
    };
    if probs.iter().any(|p| !p.is_finite()) {
        let code = if prefix == "channel" {
            "channel.prob_not_finite"
        } else {
            "lengths.prob_not_finite"
        };
        out.push(Violation::new(code, format!("{prefix} probabilities must be finite")));
        return;
    }
    if probs.iter().any(|&p| p < 0.0) {
        out.push(Violation::new(neg, format!("{prefix} probabilities must be nonnegative")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        out.push(Violation::new(
            sum_code,
            format!("{prefix} probabilities sum to {sum}, expected 1"),
        ));
    }
}

fn check_channel(channel: &ChannelDistribution, out: &mut Vec<Violation>) {
    if channel.is_empty() {
        out.push(Violation::new("channel.empty", "channel alphabet is empty"));
        return;
    }
    if channel.gains.len() != channel.probs.len() {
        out.push(Violation::new(
            "channel.length_mismatch",
            format!(
                "{} gains but {} probabilities",
                channel.gains.len(),
                channel.probs.len()
            ),
        ));
        return;
    }
    if channel.gains.iter().any(|g| !g.is_finite()) {
        out.push(Violation::new("channel.gain_not_finite", "channel gains must be finite"));
    } else if channel.gains.iter().any(|&g| g <= 0.0) {
        out.push(Violation::new("channel.gain_nonpositive", "channel gains must be positive"));
    }
    check_probs("channel", &channel.probs, out);
}

fn check_rates(
    rates: &RateTable,
    channel: &ChannelDistribution,
    menu: &PowerMenu,
    out: &mut Vec<Violation>,
) {
    let rows = rates.k.len();
    let shape_ok = rows == channel.gains.len()
        && rows > 0
        && rates.k.iter().all(|r| r.len() == menu.len() && !r.is_empty());
    if !shape_ok {
        out.push(Violation::new(
            "rates.shape",
            format!(
                "rate table must be {} x {} (gains x power levels)",
                channel.gains.len(),
                menu.len()
            ),
        ));
        return;
    }
    if rates.k.iter().flatten().any(|&k| k == 0) {
        out.push(Violation::new("rates.nonpositive", "every rate must be at least 1 data unit"));
    }
    if rates.k.iter().any(|r| r.windows(2).any(|w| w[0] > w[1])) {
        out.push(Violation::new(
            "rates.not_monotone_power",
            "rates must be nondecreasing in power",
        ));
    }
    if channel.gains.iter().all(|g| g.is_finite()) {
        let mut order: Vec<usize> = (0..rows).collect();
        order.sort_by(|&a, &b| {
            channel.gains[a]
                .partial_cmp(&channel.gains[b])
                .unwrap_or(Ordering::Equal)
        });
        let monotone = order.windows(2).all(|w| {
            let (lo, hi) = (w[0], w[1]);
            let tie = channel.gains[lo] == channel.gains[hi];
            (0..menu.len()).all(|j| {
                let (a, b) = (rates.k[lo][j], rates.k[hi][j]);
                if tie {
                    a == b
                } else {
                    a <= b
                }
            })
        });
        if !monotone {
            out.push(Violation::new(
                "rates.not_monotone_gain",
                "rates must be nondecreasing in channel gain",
            ));
        }
    }
}

fn check_lengths(lengths: &PacketLengthDistribution, out: &mut Vec<Violation>) {
    if lengths.lengths.is_empty() {
        out.push(Violation::new("lengths.empty", "packet length set is empty"));
        return;
    }
    if lengths.lengths.len() != lengths.probs.len() {
        out.push(Violation::new(
            "lengths.length_mismatch",
            format!(
                "{} packet lengths but {} probabilities",
                lengths.lengths.len(),
                lengths.probs.len()
            ),
        ));
        return;
    }
    if lengths.lengths.contains(&0) {
        out.push(Violation::new("lengths.zero", "packet lengths must be at least 1"));
    }
    let mut sorted = lengths.lengths.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        out.push(Violation::new("lengths.duplicate", "packet lengths must be distinct"));
    }
    check_probs("lengths", &lengths.probs, out);
}

fn renormalize(probs: &mut [f64]) {
    let sum: f64 = probs.iter().sum();
    if sum > 0.0 && sum != 1.0 {
        probs.iter_mut().for_each(|p| *p /= sum);
    }
}

/// Categorical draw by inverse CDF; zero-probability outcomes are never chosen.
pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_model() -> LinkModel {
        LinkModel::new(
            PowerMenu::new(vec![1.0, 3.0]),
            ChannelDistribution::new(vec![1.0, 3.0], vec![0.5, 0.5]),
            RateTable::new(vec![vec![1, 2], vec![2, 4]]),
            PacketLengthDistribution::new(vec![2, 4, 7], vec![0.2, 0.3, 0.5]),
        )
        .unwrap()
    }

    fn config(beta: f64) -> SystemConfig {
        SystemConfig {
            beta,
            v: 10.0,
            horizon_frames: 100,
            seed: 1,
            noise_psd: None,
        }
    }

    #[test]
    fn shannon_rate_examples() {
        assert_eq!(shannon_rate(1.0, 3.0, 1.0).unwrap(), 2);
        assert_eq!(shannon_rate(1.0, 1.0, 1.0).unwrap(), 1);
        // log2(6) = 2.585
        assert_eq!(shannon_rate(0.5, 10.0, 1.0).unwrap(), 3);
    }

    #[test]
    fn shannon_rate_never_below_one() {
        assert_eq!(shannon_rate(1e-9, 1e-9, 1.0).unwrap(), 1);
    }

    #[test]
    fn shannon_rate_names_bad_field() {
        match shannon_rate(1.0, 0.0, 1.0) {
            Err(Error::InvalidInput { field, .. }) => assert_eq!(field, "power"),
            other => panic!("unexpected {other:?}"),
        }
        match shannon_rate(-1.0, 1.0, 1.0) {
            Err(Error::InvalidInput { field, .. }) => assert_eq!(field, "alpha"),
            other => panic!("unexpected {other:?}"),
        }
        match shannon_rate(1.0, 1.0, f64::NAN) {
            Err(Error::InvalidInput { field, .. }) => assert_eq!(field, "noise_psd"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rate_table_examples() {
        let menu = PowerMenu::new(vec![1.0]);
        let ch = ChannelDistribution::point_mass(1.0);
        assert_eq!(build_rate_table(&ch, &menu, 1.0).unwrap().k, vec![vec![1]]);

        let menu = PowerMenu::new(vec![1.0, 3.0]);
        let ch = ChannelDistribution::new(vec![1.0, 3.0], vec![0.5, 0.5]);
        // log2(10) = 3.32
        assert_eq!(
            build_rate_table(&ch, &menu, 1.0).unwrap().k,
            vec![vec![1, 2], vec![2, 4]]
        );

        let ch = ChannelDistribution::point_mass(1.0);
        assert_eq!(build_rate_table(&ch, &menu, 1.0).unwrap().k, vec![vec![1, 2]]);
    }

    #[test]
    fn kmin_lmax_examples() {
        let m = sample_model();
        assert_eq!(m.kmin(), 1);
        assert_eq!(m.lmax(), 7);

        let m = LinkModel::new(
            PowerMenu::new(vec![1.0, 2.0]),
            ChannelDistribution::point_mass(1.0),
            RateTable::new(vec![vec![3, 5]]),
            PacketLengthDistribution::fixed(4),
        )
        .unwrap();
        assert_eq!(kmin(&m), 3);
        assert_eq!(m.max_frame_slots(), 2);
    }

    #[test]
    fn unordered_menu_is_reported() {
        let mut m = sample_model();
        m.menu = PowerMenu::new(vec![2.0, 1.0]);
        let v = validate_model(&m, &config(5.0));
        assert!(v.iter().any(|x| x.code == "menu.not_increasing"
            && x.message == "power menu not strictly increasing"));
    }

    #[test]
    fn budget_below_smallest_power_is_reported() {
        let mut m = sample_model();
        m.menu = PowerMenu::new(vec![1.5, 2.0]);
        let v = validate_model(&m, &config(1.0));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code, "config.beta_le_p1");
    }

    #[test]
    fn valid_model_has_no_violations() {
        assert!(validate_model(&sample_model(), &config(2.0)).is_empty());
    }

    #[test]
    fn reports_all_violations_together() {
        let m = LinkModel {
            menu: PowerMenu::new(vec![2.0, 2.0]),
            channel: ChannelDistribution::new(vec![1.0, 2.0], vec![0.5, 0.6]),
            rates: RateTable::new(vec![vec![2, 1], vec![0, 3]]),
            lengths: PacketLengthDistribution::new(vec![3, 3], vec![0.5, 0.5]),
        };
        let codes: Vec<_> = validate_model(&m, &config(1.0)).into_iter().map(|v| v.code).collect();
        for c in [
            "menu.not_increasing",
            "channel.prob_sum",
            "rates.nonpositive",
            "rates.not_monotone_power",
            "rates.not_monotone_gain",
            "lengths.duplicate",
            "config.beta_le_p1",
        ] {
            assert!(codes.contains(&c), "missing {c} in {codes:?}");
        }
    }

    #[test]
    fn gain_monotonicity_respects_gain_order() {
        // Gains listed high-to-low; rates follow the gains, not the row order.
        let m = LinkModel::new(
            PowerMenu::new(vec![1.0]),
            ChannelDistribution::new(vec![4.0, 1.0], vec![0.5, 0.5]),
            RateTable::new(vec![vec![3], vec![1]]),
            PacketLengthDistribution::fixed(2),
        );
        assert!(m.is_ok());
    }

    #[test]
    fn degenerate_shapes_do_not_panic() {
        let m = LinkModel {
            menu: PowerMenu::new(vec![]),
            channel: ChannelDistribution::new(vec![], vec![]),
            rates: RateTable::new(vec![]),
            lengths: PacketLengthDistribution::new(vec![], vec![]),
        };
        let v = validate_model(&m, &config(f64::NAN));
        assert!(v.len() >= 4);
    }

    #[test]
    fn probabilities_are_renormalized() {
        let m = LinkModel::new(
            PowerMenu::new(vec![1.0]),
            ChannelDistribution::new(vec![1.0, 2.0], vec![0.3, 0.7 + 5e-13]),
            RateTable::new(vec![vec![1], vec![1]]),
            PacketLengthDistribution::fixed(1),
        )
        .unwrap();
        let s: f64 = m.channel.probs.iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sampling_skips_zero_mass() {
        let probs = [0.0, 0.5, 0.0, 0.5];
        assert_eq!(sample_index(&probs, 0.0), 1);
        assert_eq!(sample_index(&probs, 0.49), 1);
        assert_eq!(sample_index(&probs, 0.5), 3);
        assert_eq!(sample_index(&probs, 0.999_999_999), 3);
    }

    #[test]
    fn bounds_match_hand_values() {
        let m = sample_model();
        // ceil(7/1) = 7 slots; V/(beta-P1) = 10/1; 7 * (3 - 2) = 7
        assert_eq!(m.queue_bound(2.0, 10.0), 17.0);
        // 0.5 * (7 * 5)^2
        assert_eq!(m.drift_constant(2.0), 612.5);
        // budget above every level: bound collapses to V/(beta-P1) + negative
        assert_eq!(m.queue_bound(10.0, 0.0), 0.0);
    }
}
