#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::Rng;
use rateless_sched::{
    ChannelDistribution, LinkModel, PacketLengthDistribution, PowerMenu, RateTable, SystemConfig,
};

/// Two power levels, two gains, two packet lengths; all values are dyadic so
/// queue arithmetic is exact in binary floating point.
pub fn reference_model() -> LinkModel {
    LinkModel::new(
        PowerMenu::new(vec![0.5, 2.0]),
        ChannelDistribution::new(vec![1.0, 4.0], vec![0.75, 0.25]),
        RateTable::new(vec![vec![1, 2], vec![2, 4]]),
        PacketLengthDistribution::new(vec![3, 6], vec![0.5, 0.5]),
    )
    .unwrap()
}

pub const REFERENCE_BETA: f64 = 1.0;

pub fn config(beta: f64, v: f64, frames: u64, seed: u64) -> SystemConfig {
    SystemConfig {
        beta,
        v,
        horizon_frames: frames,
        seed,
        noise_psd: None,
    }
}

/// Rate table nondecreasing in both gain (rows, gains ascending) and power.
pub fn monotone_rates(rng: &mut StdRng, gains: usize, options: usize, max_step: u32) -> Vec<Vec<u32>> {
    let steps: Vec<Vec<u32>> = (0..gains)
        .map(|_| (0..options).map(|_| rng.gen_range(0..=max_step)).collect())
        .collect();
    let mut k = vec![vec![0u32; options]; gains];
    for i in 0..gains {
        for j in 0..options {
            let up = if i > 0 { k[i - 1][j] } else { 1 };
            let left = if j > 0 { k[i][j - 1] } else { 1 };
            k[i][j] = up.max(left) + steps[i][j];
        }
    }
    k
}

pub fn random_probs(rng: &mut StdRng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Random valid model with up to `max_options` power levels, `max_gains`
/// gains and a single packet length `length`.
pub fn random_model(rng: &mut StdRng, max_options: usize, max_gains: usize, length: u32) -> LinkModel {
    let options = rng.gen_range(1..=max_options);
    let gains = rng.gen_range(1..=max_gains);
    let mut levels: Vec<f64> = Vec::with_capacity(options);
    let mut p = rng.gen_range(0.1..1.0);
    for _ in 0..options {
        levels.push(p);
        p += rng.gen_range(0.1..2.0);
    }
    let gain_values: Vec<f64> = (0..gains).map(|i| 1.0 + i as f64 + rng.gen_range(0.0..0.9)).collect();
    LinkModel::new(
        PowerMenu::new(levels),
        ChannelDistribution::new(gain_values, random_probs(rng, gains)),
        RateTable::new(monotone_rates(rng, gains, options, 2)),
        PacketLengthDistribution::fixed(length),
    )
    .unwrap()
}

/// Budget strictly between the smallest and a little beyond the largest level.
pub fn random_beta(rng: &mut StdRng, model: &LinkModel) -> f64 {
    let lo = model.menu.smallest();
    let hi = model.menu.largest().max(lo) + 0.5;
    lo + rng.gen_range(0.05..1.0) * (hi - lo)
}
