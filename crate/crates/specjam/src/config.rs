//! Scenario configuration: defaults, the desk-scale preset, the plain-text
//! `key = value` config format, and validation.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which jammer (if any) a run faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackerType {
    None,
    Random,
    Ideal,
    Dqn,
}

impl fmt::Display for AttackerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AttackerType::None => "none",
            AttackerType::Random => "random",
            AttackerType::Ideal => "ideal",
            AttackerType::Dqn => "dqn",
        };
        f.write_str(s)
    }
}

impl FromStr for AttackerType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AttackerType::None),
            "random" => Ok(AttackerType::Random),
            "ideal" => Ok(AttackerType::Ideal),
            "dqn" => Ok(AttackerType::Dqn),
            other => Err(Error::config(format!(
                "unknown attacker type `{other}` (expected none|random|ideal|dqn)"
            ))),
        }
    }
}

/// Every parameter of a run. The defaults are the full-scale experiment
/// values; [`ScenarioConfig::desk`] divides all durations by ten for quick
/// runs with the same physics and learning parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    // Channel.
    pub doppler: f64,
    pub slot_duration: f64,
    pub noise_power: f64,
    pub num_victims: usize,
    pub num_channels: usize,
    pub max_power: f64,
    pub num_power_levels: usize,
    // Victim learning.
    pub gamma: f64,
    pub victim_lr: f64,
    pub lstm_hidden: usize,
    pub duel_hidden: usize,
    pub victim_eps0: f64,
    pub victim_eps1: f64,
    pub victim_train_slots: u64,
    pub victim_test_slots: u64,
    // Attacker.
    pub attacker_type: AttackerType,
    pub num_jam_channels: usize,
    pub jam_power: f64,
    pub attacker_lr: f64,
    pub attacker_eps0: f64,
    pub attacker_eps1: f64,
    pub listen_eps0: f64,
    pub listen_eps1: f64,
    pub attacker_train_slots: u64,
    /// Slots between the end of victim training and attacker activation.
    pub attack_delay: u64,
    /// Length of the attack phase in the attack scenario.
    pub attack_duration: u64,
    // Retraining and ensemble defense.
    pub retrain_lr: f64,
    pub retrain_eps: f64,
    /// Slots between attacker activation and the start of retraining.
    pub retrain_delay: u64,
    pub retrain_slots: u64,
    pub snapshot_count: usize,
    pub ensemble_size: usize,
    pub reload_period: u64,
    pub ensemble_duration: u64,
    // Training plumbing.
    pub history_len: usize,
    pub replay_capacity: usize,
    pub minibatch: usize,
    pub grad_clip: f64,
    // Transition matrices and collapse detection.
    pub reward_bins: usize,
    pub collapse_no_tx_frac: f64,
    pub collapse_rate_floor: f64,
    pub collapse_window: u64,
    pub collapse_detection: bool,
    // Reporting.
    pub moving_avg_window: usize,
    pub histogram_bin_width: f64,
    pub gain_checkpoint_every: u64,
    // Reproducibility.
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            doppler: 0.2,
            slot_duration: 0.02,
            noise_power: 1.0,
            num_victims: 2,
            num_channels: 4,
            max_power: 6.3,
            num_power_levels: 5,
            gamma: 0.9,
            victim_lr: 0.04,
            lstm_hidden: 20,
            duel_hidden: 10,
            victim_eps0: 1.0,
            victim_eps1: 0.1,
            victim_train_slots: 500_000,
            victim_test_slots: 200_000,
            attacker_type: AttackerType::Dqn,
            num_jam_channels: 2,
            jam_power: 6.3,
            attacker_lr: 0.2,
            attacker_eps0: 1.0,
            attacker_eps1: 0.1,
            listen_eps0: 0.25,
            listen_eps1: 0.025,
            attacker_train_slots: 20_000,
            attack_delay: 50_000,
            attack_duration: 150_000,
            retrain_lr: 0.4,
            retrain_eps: 0.05,
            retrain_delay: 50_000,
            retrain_slots: 1_450_000,
            snapshot_count: 72,
            ensemble_size: 8,
            reload_period: 720_000,
            ensemble_duration: 1_500_000,
            history_len: 10,
            replay_capacity: 10_000,
            minibatch: 16,
            grad_clip: 2.5,
            reward_bins: 16,
            collapse_no_tx_frac: 0.5,
            collapse_rate_floor: 1.0,
            collapse_window: 20_000,
            collapse_detection: true,
            moving_avg_window: 1000,
            histogram_bin_width: 0.1,
            gain_checkpoint_every: 1000,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    /// Desk-scale preset: every phase duration divided by ten, everything
    /// else untouched (the collapse window keeps its absolute width).
    pub fn desk() -> Self {
        ScenarioConfig {
            victim_train_slots: 50_000,
            victim_test_slots: 20_000,
            attacker_train_slots: 2_000,
            attack_delay: 5_000,
            attack_duration: 15_000,
            retrain_delay: 5_000,
            retrain_slots: 145_000,
            reload_period: 72_000,
            ensemble_duration: 150_000,
            ..ScenarioConfig::default()
        }
    }

    /// Number of slots per retraining snapshot interval (remainder slots at
    /// the end of retraining carry no snapshot).
    pub fn snapshot_interval(&self) -> u64 {
        self.retrain_slots / self.snapshot_count as u64
    }

    /// Victim observation width: own rate plus one power entry per channel.
    pub fn victim_obs_width(&self) -> usize {
        1 + self.num_channels
    }

    /// Attacker observation width: sum rate plus one jam flag per channel.
    pub fn attacker_obs_width(&self) -> usize {
        1 + self.num_channels
    }

    pub fn victim_action_count(&self) -> usize {
        self.num_channels * self.num_power_levels + 1
    }

    pub fn validate(&self) -> Result<()> {
        fn require(ok: bool, msg: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::config(msg.to_string()))
            }
        }
        require(self.num_victims >= 1, "num_victims must be at least 1")?;
        require(self.num_channels >= 1, "num_channels must be at least 1")?;
        require(self.num_power_levels >= 1, "num_power_levels must be at least 1")?;
        require(self.max_power > 0.0, "max_power must be positive")?;
        require(self.jam_power >= 0.0, "jam_power must be nonnegative")?;
        require(self.noise_power > 0.0, "noise_power must be positive")?;
        require(self.slot_duration > 0.0, "slot_duration must be positive")?;
        require(self.doppler >= 0.0, "f_d must be nonnegative")?;
        require(self.num_jam_channels >= 1, "K_a must be at least 1")?;
        require(self.num_jam_channels <= self.num_channels, "K_a exceeds N_c")?;
        require((0.0..1.0).contains(&self.gamma), "gamma must lie in [0, 1)")?;
        require(self.victim_lr > 0.0, "victim_lr must be positive")?;
        require(self.attacker_lr > 0.0, "attacker_lr must be positive")?;
        require(self.retrain_lr > 0.0, "retrain_lr must be positive")?;
        for (name, e0, e1) in [
            ("victim_eps", self.victim_eps0, self.victim_eps1),
            ("attacker_eps", self.attacker_eps0, self.attacker_eps1),
            ("listen_eps", self.listen_eps0, self.listen_eps1),
        ] {
            require(
                (0.0..=1.0).contains(&e0) && (0.0..=1.0).contains(&e1),
                &format!("{name}0/{name}1 must lie in [0, 1]"),
            )?;
            require(e1 <= e0, &format!("{name}1 must not exceed {name}0"))?;
        }
        require(
            (0.0..=1.0).contains(&self.retrain_eps),
            "retrain_eps must lie in [0, 1]",
        )?;
        require(self.lstm_hidden >= 1, "lstm_hidden must be at least 1")?;
        require(self.duel_hidden >= 1, "duel_hidden must be at least 1")?;
        for (name, v) in [
            ("victim_train_slots", self.victim_train_slots),
            ("victim_test_slots", self.victim_test_slots),
            ("attacker_train_slots", self.attacker_train_slots),
            ("attack_delay", self.attack_delay),
            ("attack_duration", self.attack_duration),
            ("retrain_delay", self.retrain_delay),
            ("retrain_slots", self.retrain_slots),
            ("reload_period", self.reload_period),
            ("ensemble_duration", self.ensemble_duration),
            ("collapse_window", self.collapse_window),
            ("gain_checkpoint_every", self.gain_checkpoint_every),
        ] {
            require(v >= 1, &format!("{name} must be positive"))?;
        }
        require(self.snapshot_count >= 1, "snapshot_count must be at least 1")?;
        require(self.ensemble_size >= 1, "ensemble_size must be at least 1")?;
        require(
            self.ensemble_size <= self.snapshot_count,
            "N_e exceeds N_s",
        )?;
        require(
            self.reload_period < self.retrain_slots,
            "reload_period must be shorter than retrain_slots",
        )?;
        require(
            self.reload_period >= self.ensemble_size as u64,
            "reload_period too short for the ensemble size",
        )?;
        require(
            self.snapshot_interval() >= 2,
            "retrain_slots / snapshot_count must be at least 2",
        )?;
        require(self.history_len >= 1, "history_len must be at least 1")?;
        require(self.replay_capacity >= 1, "replay_capacity must be at least 1")?;
        require(self.minibatch >= 1, "minibatch must be at least 1")?;
        require(self.grad_clip > 0.0, "grad_clip must be positive")?;
        require(self.reward_bins >= 1, "reward_bins must be at least 1")?;
        require(
            (0.0..=1.0).contains(&self.collapse_no_tx_frac),
            "collapse_no_tx_frac must lie in [0, 1]",
        )?;
        require(
            self.collapse_rate_floor >= 0.0,
            "collapse_rate_floor must be nonnegative",
        )?;
        require(self.moving_avg_window >= 1, "moving_avg_window must be at least 1")?;
        require(
            self.histogram_bin_width > 0.0,
            "histogram_bin_width must be positive",
        )?;
        Ok(())
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value.trim().parse().map_err(|_| {
                Error::config(format!("key `{key}`: cannot parse value `{value}`"))
            })
        }
        let v = value.trim();
        match key {
            "f_d" => self.doppler = num(key, v)?,
            "slot_duration" => self.slot_duration = num(key, v)?,
            "noise_power" => self.noise_power = num(key, v)?,
            "num_victims" => self.num_victims = num(key, v)?,
            "num_channels" => self.num_channels = num(key, v)?,
            "max_power" => self.max_power = num(key, v)?,
            "num_power_levels" => self.num_power_levels = num(key, v)?,
            "gamma" => self.gamma = num(key, v)?,
            "victim_lr" => self.victim_lr = num(key, v)?,
            "lstm_hidden" => self.lstm_hidden = num(key, v)?,
            "duel_hidden" => self.duel_hidden = num(key, v)?,
            "victim_eps0" => self.victim_eps0 = num(key, v)?,
            "victim_eps1" => self.victim_eps1 = num(key, v)?,
            "victim_train_slots" => self.victim_train_slots = num(key, v)?,
            "victim_test_slots" => self.victim_test_slots = num(key, v)?,
            "attacker_type" => self.attacker_type = v.parse()?,
            "K_a" => self.num_jam_channels = num(key, v)?,
            "jam_power" => self.jam_power = num(key, v)?,
            "attacker_lr" => self.attacker_lr = num(key, v)?,
            "attacker_eps0" => self.attacker_eps0 = num(key, v)?,
            "attacker_eps1" => self.attacker_eps1 = num(key, v)?,
            "listen_eps0" => self.listen_eps0 = num(key, v)?,
            "listen_eps1" => self.listen_eps1 = num(key, v)?,
            "attacker_train_slots" => self.attacker_train_slots = num(key, v)?,
            "attack_delay" => self.attack_delay = num(key, v)?,
            "attack_duration" => self.attack_duration = num(key, v)?,
            "retrain_lr" => self.retrain_lr = num(key, v)?,
            "retrain_eps" => self.retrain_eps = num(key, v)?,
            "retrain_delay" => self.retrain_delay = num(key, v)?,
            "retrain_slots" => self.retrain_slots = num(key, v)?,
            "snapshot_count" => self.snapshot_count = num(key, v)?,
            "ensemble_size" => self.ensemble_size = num(key, v)?,
            "reload_period" => self.reload_period = num(key, v)?,
            "ensemble_duration" => self.ensemble_duration = num(key, v)?,
            "history_len" => self.history_len = num(key, v)?,
            "replay_capacity" => self.replay_capacity = num(key, v)?,
            "minibatch" => self.minibatch = num(key, v)?,
            "grad_clip" => self.grad_clip = num(key, v)?,
            "reward_bins" => self.reward_bins = num(key, v)?,
            "collapse_no_tx_frac" => self.collapse_no_tx_frac = num(key, v)?,
            "collapse_rate_floor" => self.collapse_rate_floor = num(key, v)?,
            "collapse_window" => self.collapse_window = num(key, v)?,
            "collapse_detection" => {
                self.collapse_detection = match v {
                    "true" => true,
                    "false" => false,
                    _ => {
                        return Err(Error::config(format!(
                            "key `collapse_detection`: expected true or false, got `{v}`"
                        )))
                    }
                }
            }
            "moving_avg_window" => self.moving_avg_window = num(key, v)?,
            "histogram_bin_width" => self.histogram_bin_width = num(key, v)?,
            "gain_checkpoint_every" => self.gain_checkpoint_every = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            other => return Err(Error::config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` text into `self`. Lines may be blank or start
    /// with `#`. Unknown keys are rejected with their line number.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            self.set(key.trim(), value)
                .map_err(|e| Error::config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    /// Renders the full configuration in the same `key = value` format the
    /// parser accepts, so a manifest reproduces its run verbatim.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        put("f_d", self.doppler.to_string());
        put("slot_duration", self.slot_duration.to_string());
        put("noise_power", self.noise_power.to_string());
        put("num_victims", self.num_victims.to_string());
        put("num_channels", self.num_channels.to_string());
        put("max_power", self.max_power.to_string());
        put("num_power_levels", self.num_power_levels.to_string());
        put("gamma", self.gamma.to_string());
        put("victim_lr", self.victim_lr.to_string());
        put("lstm_hidden", self.lstm_hidden.to_string());
        put("duel_hidden", self.duel_hidden.to_string());
        put("victim_eps0", self.victim_eps0.to_string());
        put("victim_eps1", self.victim_eps1.to_string());
        put("victim_train_slots", self.victim_train_slots.to_string());
        put("victim_test_slots", self.victim_test_slots.to_string());
        put("attacker_type", self.attacker_type.to_string());
        put("K_a", self.num_jam_channels.to_string());
        put("jam_power", self.jam_power.to_string());
        put("attacker_lr", self.attacker_lr.to_string());
        put("attacker_eps0", self.attacker_eps0.to_string());
        put("attacker_eps1", self.attacker_eps1.to_string());
        put("listen_eps0", self.listen_eps0.to_string());
        put("listen_eps1", self.listen_eps1.to_string());
        put("attacker_train_slots", self.attacker_train_slots.to_string());
        put("attack_delay", self.attack_delay.to_string());
        put("attack_duration", self.attack_duration.to_string());
        put("retrain_lr", self.retrain_lr.to_string());
        put("retrain_eps", self.retrain_eps.to_string());
        put("retrain_delay", self.retrain_delay.to_string());
        put("retrain_slots", self.retrain_slots.to_string());
        put("snapshot_count", self.snapshot_count.to_string());
        put("ensemble_size", self.ensemble_size.to_string());
        put("reload_period", self.reload_period.to_string());
        put("ensemble_duration", self.ensemble_duration.to_string());
        put("history_len", self.history_len.to_string());
        put("replay_capacity", self.replay_capacity.to_string());
        put("minibatch", self.minibatch.to_string());
        put("grad_clip", self.grad_clip.to_string());
        put("reward_bins", self.reward_bins.to_string());
        put("collapse_no_tx_frac", self.collapse_no_tx_frac.to_string());
        put("collapse_rate_floor", self.collapse_rate_floor.to_string());
        put("collapse_window", self.collapse_window.to_string());
        put("collapse_detection", self.collapse_detection.to_string());
        put("moving_avg_window", self.moving_avg_window.to_string());
        put("histogram_bin_width", self.histogram_bin_width.to_string());
        put("gain_checkpoint_every", self.gain_checkpoint_every.to_string());
        put("seed", self.seed.to_string());
        s
    }
}
