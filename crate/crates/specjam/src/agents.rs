//! Policy layer: action codecs, exploration schedules, victim action
//! selection, and the jammer's attack/listen behavior with its two-level
//! greedy exploration, plus the random and ideal attacker baselines.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::qnet::QNetworkParams;
use crate::replay::ObservationHistory;

/// A victim's decoded action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VictimAction {
    /// Transmit on `channel` at power level `power_level` (0-based; level i
    /// means power (i+1) * max_power / num_levels).
    Transmit { channel: usize, power_level: usize },
    /// Stay silent this slot.
    Silent,
}

/// Bijection between victim action indices and (channel, power level)
/// pairs. Index `num_channels * num_levels` is the no-transmission action,
/// for `num_channels * num_levels + 1` actions overall.
#[derive(Debug, Clone, Copy)]
pub struct VictimActionCodec {
    pub num_channels: usize,
    pub num_levels: usize,
    pub max_power: f64,
}

impl VictimActionCodec {
    pub fn action_count(&self) -> usize {
        self.num_channels * self.num_levels + 1
    }

    pub fn decode(&self, index: usize) -> VictimAction {
        assert!(index < self.action_count(), "action index out of range");
        if index == self.num_channels * self.num_levels {
            VictimAction::Silent
        } else {
            VictimAction::Transmit {
                channel: index / self.num_levels,
                power_level: index % self.num_levels,
            }
        }
    }

    pub fn encode(&self, action: VictimAction) -> usize {
        match action {
            VictimAction::Silent => self.num_channels * self.num_levels,
            VictimAction::Transmit {
                channel,
                power_level,
            } => {
                assert!(channel < self.num_channels && power_level < self.num_levels);
                channel * self.num_levels + power_level
            }
        }
    }

    /// Power in watts for a 0-based level, from the grid
    /// {i * max_power / num_levels, i = 1..num_levels}.
    pub fn power_watts(&self, power_level: usize) -> f64 {
        (power_level + 1) as f64 * self.max_power / self.num_levels as f64
    }

    /// (channel, power watts) pair for the environment, `None` when silent.
    pub fn transmit_of(&self, index: usize) -> Option<(usize, f64)> {
        match self.decode(index) {
            VictimAction::Silent => None,
            VictimAction::Transmit {
                channel,
                power_level,
            } => Some((channel, self.power_watts(power_level))),
        }
    }
}

/// Lexicographic bijection between indices and k-subsets of {0..n-1}; the
/// attacker's action space (which channels to jam).
#[derive(Debug, Clone, Copy)]
pub struct SubsetCodec {
    pub n: usize,
    pub k: usize,
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

impl SubsetCodec {
    pub fn action_count(&self) -> usize {
        binomial(self.n, self.k)
    }

    /// Subset for `index` in lexicographic order, ascending members.
    pub fn decode(&self, index: usize) -> Vec<usize> {
        assert!(index < self.action_count(), "subset index out of range");
        let mut remaining = index;
        let mut subset = Vec::with_capacity(self.k);
        let mut next = 0usize;
        for slot in 0..self.k {
            let mut candidate = next;
            loop {
                let tail = binomial(self.n - candidate - 1, self.k - slot - 1);
                if remaining < tail {
                    subset.push(candidate);
                    next = candidate + 1;
                    break;
                }
                remaining -= tail;
                candidate += 1;
            }
        }
        subset
    }

    pub fn encode(&self, subset: &[usize]) -> usize {
        assert_eq!(subset.len(), self.k, "subset size mismatch");
        let mut index = 0usize;
        let mut prev: isize = -1;
        for (slot, &member) in subset.iter().enumerate() {
            assert!(member < self.n);
            assert!(member as isize > prev, "subset must be strictly ascending");
            for skipped in (prev + 1) as usize..member {
                index += binomial(self.n - skipped - 1, self.k - slot - 1);
            }
            prev = member as isize;
        }
        index
    }
}

/// Linear decay from `start` to `end` over `horizon` slots, constant
/// afterwards. Hits both endpoints exactly.
#[derive(Debug, Clone, Copy)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub horizon: u64,
}

impl EpsilonSchedule {
    pub fn value(&self, slot: u64) -> f64 {
        if self.horizon == 0 || slot >= self.horizon {
            return self.end;
        }
        let frac = slot as f64 / self.horizon as f64;
        self.start - (self.start - self.end) * frac
    }
}

/// Epsilon-greedy action for a victim: explore uniformly with probability
/// `eps`, otherwise the greedy action (lowest index on ties).
pub fn victim_act(
    params: &QNetworkParams,
    history: &ObservationHistory,
    eps: f64,
    rng: &mut ChaCha8Rng,
) -> usize {
    let actions = params.dims().actions;
    let u: f64 = rng.gen();
    if u < eps {
        rng.gen_range(0..actions)
    } else {
        params.greedy_action(history)
    }
}

/// The jammer's per-slot operating mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackerMode {
    Listen,
    GreedyAttack,
    ExploreAttack,
}

/// One draw of the two-level exploration rule: listen with probability
/// `eps_l` unless the last slot already listened (never two in a row);
/// otherwise explore a random attack with probability `eps`, else attack
/// greedily.
pub fn select_attacker_mode(
    eps_l: f64,
    eps: f64,
    last_was_listen: bool,
    rng: &mut ChaCha8Rng,
) -> AttackerMode {
    if !last_was_listen {
        let u: f64 = rng.gen();
        if u < eps_l {
            return AttackerMode::Listen;
        }
    }
    let u: f64 = rng.gen();
    if u < eps {
        AttackerMode::ExploreAttack
    } else {
        AttackerMode::GreedyAttack
    }
}

/// Attack-mode action selection over the subset action space.
pub fn attacker_act(
    params: &QNetworkParams,
    history: &ObservationHistory,
    mode: AttackerMode,
    rng: &mut ChaCha8Rng,
) -> usize {
    match mode {
        AttackerMode::Listen => panic!("listening slots take no attack action"),
        AttackerMode::ExploreAttack => rng.gen_range(0..params.dims().actions),
        AttackerMode::GreedyAttack => params.greedy_action(history),
    }
}

/// Converts a listening slot's interference profile into the pseudo-action
/// recorded for training: the `k` channels with the highest measured
/// interference, ties broken toward the lowest channel index. The paired
/// pseudo-reward is zero.
pub fn listen_pseudo_action(measurements: &[f64], k: usize) -> Vec<usize> {
    assert!(k <= measurements.len());
    let mut order: Vec<usize> = (0..measurements.len()).collect();
    // Stable sort keeps lower channel indices first among equal readings.
    order.sort_by(|&a, &b| measurements[b].partial_cmp(&measurements[a]).unwrap());
    let mut chosen: Vec<usize> = order[..k].to_vec();
    chosen.sort_unstable();
    chosen
}

pub const LISTEN_PSEUDO_REWARD: f64 = 0.0;

/// Random baseline: a uniform k-subset of channels.
pub fn random_attack(codec: &SubsetCodec, rng: &mut ChaCha8Rng) -> usize {
    rng.gen_range(0..codec.action_count())
}

/// Ideal (oracle) baseline: jam exactly the channels the victims chose this
/// slot; when they occupy fewer than `k` distinct channels, pad with the
/// lowest-index unused channels.
pub fn ideal_attack(victim_channels: &[Option<usize>], k: usize, num_channels: usize) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for c in victim_channels.iter().flatten() {
        if !chosen.contains(c) {
            chosen.push(*c);
        }
    }
    chosen.truncate(k);
    let mut pad = 0usize;
    while chosen.len() < k {
        if !chosen.contains(&pad) {
            chosen.push(pad);
        }
        pad += 1;
        assert!(pad <= num_channels, "cannot pad beyond channel count");
    }
    chosen.sort_unstable();
    chosen
}

/// The attacker's reward: the negative of the victims' sum rate.
pub fn attacker_reward(sum_rate: f64) -> f64 {
    -sum_rate
}

/// Builds a victim observation vector: own rate, then own transmit power in
/// each channel (zero on unused channels).
pub fn victim_observation(
    rate: f64,
    transmit: Option<(usize, f64)>,
    num_channels: usize,
) -> Vec<f64> {
    let mut obs = vec![0.0; 1 + num_channels];
    obs[0] = rate;
    if let Some((channel, power)) = transmit {
        obs[1 + channel] = power;
    }
    obs
}

/// Builds an attacker observation vector: the victims' sum rate, then a 0/1
/// jam indicator per channel (all zeros on listening slots).
pub fn attacker_observation(sum_rate: f64, jammed: &[usize], num_channels: usize) -> Vec<f64> {
    let mut obs = vec![0.0; 1 + num_channels];
    obs[0] = sum_rate;
    for &c in jammed {
        obs[1 + c] = 1.0;
    }
    obs
}
