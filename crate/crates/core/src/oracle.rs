//! Brute-force ground truth for small instances.
//!
//! Every deterministic within-frame policy (a map from missing data units to
//! a power option) is enumerated and evaluated by exact expectation
//! recursions. This checks the frame value table against the best policy
//! and yields the optimal constrained delay over stationary randomized
//! frame policies by mixing policies on the lower convex envelope of
//! `(expected surplus, expected length)` points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LinkModel;
use crate::solver::{build_value_table_stochastic, penalties};

/// Upper limit on enumerated policies per packet length.
pub const ENUMERATION_LIMIT: u64 = 10_000_000;

/// Relative tolerance when comparing the value table with the enumeration.
pub const DP_MATCH_RTOL: f64 = 1e-9;

/// Deterministic stationary policy: `actions[k - 1]` is the option used when
/// `k` data units are still missing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePolicy {
    pub actions: Vec<usize>,
}

impl FramePolicy {
    pub fn constant(length: usize, option: usize) -> Self {
        Self {
            actions: vec![option; length],
        }
    }

    /// Policy number `index` in enumeration order (state 1 is the most
    /// significant digit).
    pub fn from_index(index: u64, length: usize, options: usize) -> Self {
        let mut actions = vec![0; length];
        let mut rest = index;
        for a in actions.iter_mut().rev() {
            *a = (rest % options as u64) as usize;
            rest /= options as u64;
        }
        Self { actions }
    }

    pub fn index(&self, options: usize) -> u64 {
        self.actions
            .iter()
            .fold(0u64, |acc, &a| acc * options as u64 + a as u64)
    }
}

/// Expected frame length and power surplus of one policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyStats {
    pub expected_length: f64,
    pub expected_surplus: f64,
}

impl PolicyStats {
    /// Expected sum of `V + Q (P - beta)` over the frame.
    pub fn expected_penalty(&self, q: f64, v: f64) -> f64 {
        v * self.expected_length + q * self.expected_surplus
    }
}

/// Solves `e[k] = 1 + sum_i phi_i e[k - K_i]` and the matching surplus
/// recursion for `policy`, returning the values at `k = length`.
pub fn policy_stats(policy: &FramePolicy, model: &LinkModel, length: usize, beta: f64) -> Result<PolicyStats> {
    if policy.actions.len() != length || length == 0 {
        return Err(Error::contract(format!(
            "policy covers {} states, packet length is {length}",
            policy.actions.len()
        )));
    }
    if policy.actions.iter().any(|&a| a >= model.menu.len()) {
        return Err(Error::contract("policy uses an unknown power option"));
    }
    let mut e = vec![0.0; length + 1];
    let mut s = vec![0.0; length + 1];
    for k in 1..=length {
        let j = policy.actions[k - 1];
        let (mut ek, mut sk) = (1.0, model.menu.level(j) - beta);
        for (i, &phi) in model.channel.probs.iter().enumerate() {
            let next = k.saturating_sub(model.rates.get(i, j) as usize);
            ek += phi * e[next];
            sk += phi * s[next];
        }
        e[k] = ek;
        s[k] = sk;
    }
    Ok(PolicyStats {
        expected_length: e[length],
        expected_surplus: s[length],
    })
}

fn policy_count(options: usize, length: usize) -> f64 {
    (options as f64).powi(length as i32)
}

fn check_guard(options: usize, length: usize) -> Result<u64> {
    let count = policy_count(options, length);
    if count > ENUMERATION_LIMIT as f64 {
        return Err(Error::OracleGuard {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(count as u64)
}

/// Visits every policy over `1..=length` in index order with the expected
/// total of each per-slot cost vector. Only the states whose action changed
/// (and those above them) are re-evaluated between consecutive policies.
fn for_each_policy<const D: usize>(
    model: &LinkModel,
    length: usize,
    costs: &[[f64; D]],
    mut visit: impl FnMut(u64, &[usize], [f64; D]),
) -> Result<()> {
    let options = costs.len();
    check_guard(options, length)?;
    let probs = &model.channel.probs;
    let rates = &model.rates.k;
    let eval = |k: usize, j: usize, values: &[[f64; D]]| {
        let mut out = costs[j];
        for (i, &phi) in probs.iter().enumerate() {
            let next = &values[k.saturating_sub(rates[i][j] as usize)];
            for d in 0..D {
                out[d] += phi * next[d];
            }
        }
        out
    };

    let mut actions = vec![0usize; length];
    let mut values = vec![[0.0; D]; length + 1];
    for k in 1..=length {
        values[k] = eval(k, 0, &values);
    }
    let mut index = 0u64;
    loop {
        visit(index, &actions, values[length]);
        let mut state = length;
        loop {
            if state == 0 {
                return Ok(());
            }
            if actions[state - 1] + 1 < options {
                actions[state - 1] += 1;
                break;
            }
            actions[state - 1] = 0;
            state -= 1;
        }
        for k in state..=length {
            values[k] = eval(k, actions[k - 1], &values);
        }
        index += 1;
    }
}

/// Outcome of checking the value table against exhaustive enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpCheck {
    pub dp_value: f64,
    pub oracle_value: f64,
    pub best_policy: FramePolicy,
    pub matches: bool,
}

pub fn verify_dp(model: &LinkModel, length: usize, q: f64, v: f64, beta: f64) -> Result<DpCheck> {
    check_guard(model.menu.len(), length)?;
    let pen = penalties(q, v, &model.menu, beta);
    let table = build_value_table_stochastic(length, &pen, model)?;
    let costs: Vec<[f64; 1]> = pen.r.iter().map(|&r| [r]).collect();
    let mut best = (f64::INFINITY, Vec::new());
    for_each_policy(model, length, &costs, |_, actions, [value]| {
        if value < best.0 {
            best = (value, actions.to_vec());
        }
    })?;
    let dp_value = table.value(length);
    let oracle_value = best.0;
    Ok(DpCheck {
        dp_value,
        oracle_value,
        best_policy: FramePolicy { actions: best.1 },
        matches: (dp_value - oracle_value).abs() <= DP_MATCH_RTOL * oracle_value.abs().max(1.0),
    })
}

/// One enumerated policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub policy_index: u64,
    pub expected_surplus: f64,
    pub expected_length: f64,
}

/// All policies of one packet length and their lower convex envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthFrontier {
    pub length: u32,
    pub prob: f64,
    pub points: Vec<FrontierPoint>,
    /// Indices into `points` of the envelope vertices, by increasing surplus.
    pub envelope: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFrontier {
    pub options: usize,
    pub frontiers: Vec<LengthFrontier>,
}

pub fn frontier(model: &LinkModel, beta: f64) -> Result<OracleFrontier> {
    let options = model.menu.len();
    for &l in &model.lengths.lengths {
        check_guard(options, l as usize)?;
    }
    let costs: Vec<[f64; 2]> = model.menu.levels.iter().map(|&p| [1.0, p - beta]).collect();
    let mut frontiers = Vec::with_capacity(model.lengths.lengths.len());
    for (&length, &prob) in model.lengths.lengths.iter().zip(&model.lengths.probs) {
        let mut points = Vec::new();
        for_each_policy(model, length as usize, &costs, |index, _, [e, s]| {
            points.push(FrontierPoint {
                policy_index: index,
                expected_surplus: s,
                expected_length: e,
            });
        })?;
        let envelope = lower_envelope(&points);
        frontiers.push(LengthFrontier {
            length,
            prob,
            points,
            envelope,
        });
    }
    Ok(OracleFrontier { options, frontiers })
}

/// Lower convex hull of `(surplus, length)` points, left to right.
fn lower_envelope(points: &[FrontierPoint]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&points[a], &points[b]);
        pa.expected_surplus
            .total_cmp(&pb.expected_surplus)
            .then(pa.expected_length.total_cmp(&pb.expected_length))
            .then(pa.policy_index.cmp(&pb.policy_index))
    });
    order.dedup_by(|b, a| points[*a].expected_surplus == points[*b].expected_surplus);

    let xy = |i: usize| (points[i].expected_surplus, points[i].expected_length);
    let mut hull: Vec<usize> = Vec::new();
    for i in order {
        while hull.len() >= 2 {
            let (o, a, b) = (xy(hull[hull.len() - 2]), xy(hull[hull.len() - 1]), xy(i));
            let cross = (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

/// One deterministic policy in the optimal stationary mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub length: u32,
    pub policy: FramePolicy,
    pub policy_index: u64,
    /// Probability of using this policy when the packet has `length` units.
    pub weight: f64,
    pub expected_length: f64,
    pub expected_surplus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaStar {
    pub theta: f64,
    /// Expected per-frame surplus of the mixture (at most zero).
    pub expected_surplus: f64,
    pub support: Vec<MixtureComponent>,
}

impl ThetaStar {
    /// Re-derives `(E[T], E[surplus])` of the support under `model`'s
    /// packet-length distribution.
    pub fn mixture_totals(&self, model: &LinkModel) -> (f64, f64) {
        self.support.iter().fold((0.0, 0.0), |(t, s), c| {
            let p = model.lengths.prob_of(c.length).unwrap_or(0.0) * c.weight;
            (t + p * c.expected_length, s + p * c.expected_surplus)
        })
    }
}

/// Minimal expected frame length subject to nonpositive expected surplus.
///
/// The achievable set is the probability-weighted Minkowski sum of each
/// length's policy hull, whose lower envelope is obtained by merging all
/// envelope edges in order of slope. Walking from the leftmost point while
/// the slope is negative and the surplus stays nonpositive ends at the
/// optimum, with at most one length split between two adjacent vertices.
pub fn theta_star(model: &LinkModel, beta: f64) -> Result<ThetaStar> {
    let front = frontier(model, beta)?;
    theta_star_from(&front, beta, model)
}

pub fn theta_star_from(front: &OracleFrontier, beta: f64, model: &LinkModel) -> Result<ThetaStar> {
    struct Edge {
        front: usize,
        vertex: usize,
        ds: f64,
        de: f64,
    }
    let mut surplus = 0.0;
    let mut edges = Vec::new();
    for (fi, lf) in front.frontiers.iter().enumerate() {
        let first = &lf.points[lf.envelope[0]];
        surplus += lf.prob * first.expected_surplus;
        for (vi, w) in lf.envelope.windows(2).enumerate() {
            let (a, b) = (&lf.points[w[0]], &lf.points[w[1]]);
            edges.push(Edge {
                front: fi,
                vertex: vi,
                ds: lf.prob * (b.expected_surplus - a.expected_surplus),
                de: lf.prob * (b.expected_length - a.expected_length),
            });
        }
    }
    if surplus > 0.0 {
        return Err(Error::contract(format!(
            "no policy mixture meets the budget {beta}; smallest expected surplus is {surplus}"
        )));
    }
    // zero-probability lengths contribute degenerate edges; they stay at vertex 0
    edges.retain(|e| e.ds > 0.0);
    edges.sort_by(|a, b| {
        (a.de / a.ds)
            .total_cmp(&(b.de / b.ds))
            .then(a.front.cmp(&b.front))
            .then(a.vertex.cmp(&b.vertex))
    });

    // (vertex, fraction toward the next vertex) per packet length
    let mut position: Vec<(usize, f64)> = vec![(0, 0.0); front.frontiers.len()];
    for e in &edges {
        if e.de >= 0.0 {
            break;
        }
        if surplus + e.ds <= 0.0 {
            surplus += e.ds;
            position[e.front] = (e.vertex + 1, 0.0);
        } else {
            let t = (-surplus / e.ds).clamp(0.0, 1.0);
            position[e.front] = (e.vertex, t);
            break;
        }
    }

    let mut support = Vec::new();
    for (lf, &(vertex, t)) in front.frontiers.iter().zip(&position) {
        let mut push = |v: usize, weight: f64| {
            let p = &lf.points[lf.envelope[v]];
            support.push(MixtureComponent {
                length: lf.length,
                policy: FramePolicy::from_index(p.policy_index, lf.length as usize, front.options),
                policy_index: p.policy_index,
                weight,
                expected_length: p.expected_length,
                expected_surplus: p.expected_surplus,
            });
        };
        if t > 0.0 {
            push(vertex, 1.0 - t);
            push(vertex + 1, t);
        } else {
            push(vertex, 1.0);
        }
    }
    let mut out = ThetaStar {
        theta: 0.0,
        expected_surplus: 0.0,
        support,
    };
    let (theta, s) = out.mixture_totals(model);
    out.theta = theta;
    out.expected_surplus = s;
    Ok(out)
}
