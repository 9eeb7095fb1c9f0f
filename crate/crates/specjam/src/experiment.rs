//! Scenario orchestration: a single slot clock drives the channel, the
//! victims, the attacker, training, retraining snapshots, and the ensemble
//! reload rotation. Runs are deterministic functions of (config, seed).

use rand_chacha::ChaCha8Rng;

use crate::agents::{
    attacker_act, attacker_observation, attacker_reward, ideal_attack, listen_pseudo_action,
    random_attack, select_attacker_mode, victim_act, victim_observation, AttackerMode,
    EpsilonSchedule, SubsetCodec, VictimActionCodec, LISTEN_PSEUDO_REWARD,
};
use crate::channel::{Complex, FadingChannel, TransmitDecision};
use crate::config::{AttackerType, ScenarioConfig};
use crate::ensemble::{
    detect_collapse, select_ensemble, EnsembleSchedule, SnapshotEntry, SnapshotLibrary,
    TransitionMatrix,
};
use crate::error::{Error, Result};
use crate::qnet::{QNetDims, QNetworkParams, Trainer};
use crate::replay::{ObservationHistory, ReplayHistory, TransitionRecord};
use crate::rng::{NormalSource, StreamSeeder};

/// The four experiment flavors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Train the victims, then test with frozen parameters. No attacker.
    Baseline,
    /// Train, freeze, then expose the victims to the configured attacker.
    Attack,
    /// Attack scenario plus centralized retraining with snapshot collection;
    /// ends at the retraining horizon or on collapse detection.
    Retrain,
    /// Retraining (run to its full horizon) followed by the ensemble
    /// reload phase.
    Ensemble,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Baseline => "baseline",
            ScenarioKind::Attack => "attack",
            ScenarioKind::Retrain => "retrain",
            ScenarioKind::Ensemble => "ensemble",
        }
    }
}

/// What the victims are doing in a given slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Centralized training with the linear exploration decay.
    Train,
    /// Parameters frozen, greedy execution (baseline test phase).
    Test,
    /// Parameters frozen, greedy execution (attack-family scenarios).
    Frozen,
    /// Centralized retraining under attack.
    Retrain,
    /// Ensemble reload rotation with continued training.
    Ensemble,
}

/// Absolute slot boundaries of a run, derived once from the config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhasePlan {
    pub kind: ScenarioKind,
    pub train_end: u64,
    pub run_end: u64,
    pub attack_start: Option<u64>,
    /// Slot at which the attacker's exploration schedule finishes.
    pub attacker_sched_end: Option<u64>,
    pub retrain_start: Option<u64>,
    pub retrain_end: Option<u64>,
    /// Default start slot for histograms and converged-rate statistics.
    pub metrics_from: u64,
}

impl PhasePlan {
    pub fn new(cfg: &ScenarioConfig, kind: ScenarioKind) -> Self {
        let train_end = cfg.victim_train_slots;
        match kind {
            ScenarioKind::Baseline => PhasePlan {
                kind,
                train_end,
                run_end: train_end + cfg.victim_test_slots,
                attack_start: None,
                attacker_sched_end: None,
                retrain_start: None,
                retrain_end: None,
                metrics_from: train_end,
            },
            ScenarioKind::Attack => {
                let attack_start = train_end + cfg.attack_delay;
                let sched_end = attack_start + cfg.attacker_train_slots;
                PhasePlan {
                    kind,
                    train_end,
                    run_end: attack_start + cfg.attack_duration,
                    attack_start: Some(attack_start),
                    attacker_sched_end: Some(sched_end),
                    retrain_start: None,
                    retrain_end: None,
                    metrics_from: sched_end,
                }
            }
            ScenarioKind::Retrain | ScenarioKind::Ensemble => {
                let attack_start = train_end + cfg.attack_delay;
                let sched_end = attack_start + cfg.attacker_train_slots;
                let retrain_start = attack_start + cfg.retrain_delay;
                let retrain_end = retrain_start + cfg.retrain_slots;
                let run_end = if kind == ScenarioKind::Retrain {
                    retrain_end
                } else {
                    retrain_end + cfg.ensemble_duration
                };
                PhasePlan {
                    kind,
                    train_end,
                    run_end,
                    attack_start: Some(attack_start),
                    attacker_sched_end: Some(sched_end),
                    retrain_start: Some(retrain_start),
                    retrain_end: Some(retrain_end),
                    metrics_from: if kind == ScenarioKind::Retrain {
                        retrain_start
                    } else {
                        retrain_end
                    },
                }
            }
        }
    }

    pub fn phase_at(&self, slot: u64) -> Phase {
        if slot < self.train_end {
            return Phase::Train;
        }
        match self.kind {
            ScenarioKind::Baseline => Phase::Test,
            ScenarioKind::Attack => Phase::Frozen,
            ScenarioKind::Retrain | ScenarioKind::Ensemble => {
                let rs = self.retrain_start.unwrap();
                let re = self.retrain_end.unwrap();
                if slot < rs {
                    Phase::Frozen
                } else if slot < re {
                    Phase::Retrain
                } else {
                    Phase::Ensemble
                }
            }
        }
    }

    pub fn attacker_active(&self, slot: u64) -> bool {
        self.attack_start.is_some_and(|s| slot >= s)
    }
}

/// Attacker mode executed in a slot, as recorded in the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotMode {
    Off,
    Listen,
    Attack,
}

impl SlotMode {
    pub fn label(&self) -> &'static str {
        match self {
            SlotMode::Off => "off",
            SlotMode::Listen => "listen",
            SlotMode::Attack => "attack",
        }
    }
}

/// Sampled copy of the gain array for replay-consistency checks.
#[derive(Debug, Clone, PartialEq)]
pub struct GainCheckpoint {
    pub slot: u64,
    pub gains: Vec<Complex>,
}

/// Per-slot record of everything the run produced, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTrace {
    pub num_victims: usize,
    pub num_channels: usize,
    pub jam_power: f64,
    pub rho: f64,
    pub plan: PhasePlan,
    pub sum_rate: Vec<f64>,
    /// `num_victims` entries per slot.
    pub rates: Vec<f64>,
    /// `num_victims` entries per slot; -1 encodes no transmission.
    pub victim_channel: Vec<i16>,
    /// `num_victims` entries per slot; 0 when silent.
    pub victim_power: Vec<f64>,
    pub attacker_mode: Vec<SlotMode>,
    /// Bit `c` set when channel `c` was jammed that slot.
    pub jam_mask: Vec<u64>,
    pub gain_checkpoints: Vec<GainCheckpoint>,
}

impl MetricsTrace {
    fn new(cfg: &ScenarioConfig, plan: PhasePlan, rho: f64) -> Self {
        let slots = plan.run_end as usize;
        let k = cfg.num_victims;
        MetricsTrace {
            num_victims: k,
            num_channels: cfg.num_channels,
            jam_power: cfg.jam_power,
            rho,
            plan,
            sum_rate: Vec::with_capacity(slots),
            rates: Vec::with_capacity(slots * k),
            victim_channel: Vec::with_capacity(slots * k),
            victim_power: Vec::with_capacity(slots * k),
            attacker_mode: Vec::with_capacity(slots),
            jam_mask: Vec::with_capacity(slots),
            gain_checkpoints: Vec::new(),
        }
    }

    /// Number of recorded slots.
    pub fn len(&self) -> usize {
        self.sum_rate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sum_rate.is_empty()
    }

    pub fn victim_channel_at(&self, slot: u64, k: usize) -> Option<usize> {
        let c = self.victim_channel[slot as usize * self.num_victims + k];
        (c >= 0).then_some(c as usize)
    }

    pub fn victim_power_at(&self, slot: u64, k: usize) -> f64 {
        self.victim_power[slot as usize * self.num_victims + k]
    }

    pub fn rate_at(&self, slot: u64, k: usize) -> f64 {
        self.rates[slot as usize * self.num_victims + k]
    }

    pub fn jam_channels_at(&self, slot: u64) -> Vec<usize> {
        let mask = self.jam_mask[slot as usize];
        (0..self.num_channels).filter(|c| mask & (1 << c) != 0).collect()
    }

    /// How many victims stayed silent in `slot`.
    pub fn silent_count_at(&self, slot: u64) -> u32 {
        let base = slot as usize * self.num_victims;
        self.victim_channel[base..base + self.num_victims]
            .iter()
            .filter(|&&c| c < 0)
            .count() as u32
    }

    pub fn mean_sum_rate(&self, from: u64, to: u64) -> f64 {
        let slice = &self.sum_rate[from as usize..to as usize];
        assert!(!slice.is_empty());
        slice.iter().sum::<f64>() / slice.len() as f64
    }

    /// Fraction of no-transmission actions over `[from, to)`.
    pub fn silent_fraction(&self, from: u64, to: u64) -> f64 {
        let slots = to - from;
        assert!(slots >= 1);
        let silent: u64 = (from..to).map(|s| self.silent_count_at(s) as u64).sum();
        silent as f64 / (slots * self.num_victims as u64) as f64
    }

    /// Applies the collapse test to the window ending at `end` (exclusive).
    pub fn collapse_fires_at(&self, end: u64, cfg: &ScenarioConfig) -> bool {
        let w = cfg.collapse_window as usize;
        let end = end as usize;
        assert!(end >= w && end <= self.len());
        let silent: Vec<u32> = (end - w..end)
            .map(|s| self.silent_count_at(s as u64))
            .collect();
        detect_collapse(
            &silent,
            &self.sum_rate[end - w..end],
            self.num_victims,
            w,
            cfg.collapse_no_tx_frac,
            cfg.collapse_rate_floor,
        )
    }
}

/// Trailing moving average; prefixes shorter than the window average over
/// what is available.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        acc += v;
        if i >= window {
            acc -= values[i - window];
        }
        let n = (i + 1).min(window);
        out.push(acc / n as f64);
    }
    out
}

/// Empirical distribution of nonnegative values on fixed-width bins over
/// [0, max]. `mass` holds per-bin probability mass (sums to one); `cdf` its
/// running sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    pub mass: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl Histogram {
    pub fn bin_lower(&self, i: usize) -> f64 {
        i as f64 * self.bin_width
    }
}

pub fn empirical_pdf_cdf(values: &[f64], bin_width: f64) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::Empty("cannot build a histogram from an empty trace"));
    }
    assert!(bin_width > 0.0);
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    let bins = (max / bin_width).floor() as usize + 1;
    let mut mass = vec![0.0; bins];
    let unit = 1.0 / values.len() as f64;
    for &v in values {
        debug_assert!(v >= 0.0);
        let bin = ((v / bin_width).floor() as usize).min(bins - 1);
        mass[bin] += unit;
    }
    let mut cdf = Vec::with_capacity(bins);
    let mut acc = 0.0;
    for m in &mass {
        acc += m;
        cdf.push(acc);
    }
    Ok(Histogram {
        bin_width,
        mass,
        cdf,
    })
}

/// The jammer agent: its network, replay, observation history, exploration
/// state and schedules. Random and ideal attackers reuse the same shell with
/// the learning parts idle.
#[derive(Debug, Clone)]
struct AttackerAgent {
    kind: AttackerType,
    codec: SubsetCodec,
    params: QNetworkParams,
    trainer: Trainer,
    replay: ReplayHistory,
    history: ObservationHistory,
    explore: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    eps: EpsilonSchedule,
    listen_eps: EpsilonSchedule,
    last_was_listen: bool,
}

impl AttackerAgent {
    fn new(cfg: &ScenarioConfig, seeder: &StreamSeeder) -> Self {
        let codec = SubsetCodec {
            n: cfg.num_channels,
            k: cfg.num_jam_channels,
        };
        let dims = QNetDims {
            input: cfg.attacker_obs_width(),
            hidden: cfg.lstm_hidden,
            duel_hidden: cfg.duel_hidden,
            actions: codec.action_count(),
            history: cfg.history_len,
        };
        let mut init_rng = seeder.stream("attacker-init");
        AttackerAgent {
            kind: cfg.attacker_type,
            codec,
            params: QNetworkParams::init(dims, &mut init_rng),
            trainer: Trainer::new(dims),
            replay: ReplayHistory::new(cfg.replay_capacity),
            history: ObservationHistory::zeros(cfg.history_len, dims.input),
            explore: seeder.stream("attacker-explore"),
            replay_rng: seeder.stream("attacker-replay"),
            eps: EpsilonSchedule {
                start: cfg.attacker_eps0,
                end: cfg.attacker_eps1,
                horizon: cfg.attacker_train_slots,
            },
            listen_eps: EpsilonSchedule {
                start: cfg.listen_eps0,
                end: cfg.listen_eps1,
                horizon: cfg.attacker_train_slots,
            },
            last_was_listen: false,
        }
    }
}

/// Transition-matrix collection state during retraining.
#[derive(Debug, Clone)]
struct RetrainBook {
    library: SnapshotLibrary,
    current: TransitionMatrix,
    interval_index: usize,
    interval_start: u64,
    interval_len: u64,
    /// Channels and sum rate of the previous slot inside the interval.
    prev: Option<(Vec<Option<usize>>, f64)>,
    first_collapse_interval: Option<usize>,
}

impl RetrainBook {
    fn new(cfg: &ScenarioConfig, start: u64) -> Self {
        RetrainBook {
            library: SnapshotLibrary::new(),
            current: TransitionMatrix::new(cfg.num_channels, cfg.reward_bins, 0),
            interval_index: 0,
            interval_start: start,
            interval_len: cfg.snapshot_interval(),
            prev: None,
            first_collapse_interval: None,
        }
    }
}

/// One victim's private model during the ensemble phase: its own live copy
/// of the distributed parameters, retrained locally on its own transitions
/// between synchronized reloads.
#[derive(Debug, Clone)]
struct LocalVictim {
    params: QNetworkParams,
    trainer: Trainer,
    replay: ReplayHistory,
    replay_rng: ChaCha8Rng,
}

#[derive(Debug, Clone)]
struct EnsembleRun {
    schedule: EnsembleSchedule,
    start_slot: u64,
    locals: Vec<LocalVictim>,
}

/// Everything a run owns. One world advances sequentially; independent
/// worlds (different seeds or scenarios) may run in parallel.
#[derive(Debug, Clone)]
pub struct World {
    cfg: ScenarioConfig,
    plan: PhasePlan,
    seeder: StreamSeeder,
    channel: FadingChannel,
    fading: NormalSource,
    victim_codec: VictimActionCodec,
    victim_params: QNetworkParams,
    victim_trainer: Trainer,
    victim_replay: ReplayHistory,
    victim_histories: Vec<ObservationHistory>,
    victim_explore: ChaCha8Rng,
    victim_replay_rng: ChaCha8Rng,
    victim_eps: EpsilonSchedule,
    skip_victim_training: bool,
    attacker: Option<AttackerAgent>,
    retrain: Option<RetrainBook>,
    ensemble: Option<EnsembleRun>,
    slot: u64,
    trace: MetricsTrace,
}

/// Results of a completed (or collapse-stopped) run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: MetricsTrace,
    /// Snapshot library collected during retraining, when the scenario has
    /// a retraining phase.
    pub library: Option<SnapshotLibrary>,
    /// Intervals chosen by the ensemble selection.
    pub selected_intervals: Option<Vec<usize>>,
    pub first_collapse_interval: Option<usize>,
    pub final_victim_params: QNetworkParams,
    /// Slot after the last executed one; earlier than the planned end when
    /// collapse detection stopped a retraining run.
    pub stopped_at: u64,
}

impl World {
    pub fn new(cfg: ScenarioConfig, kind: ScenarioKind) -> Result<Self> {
        cfg.validate()?;
        let plan = PhasePlan::new(&cfg, kind);
        let seeder = StreamSeeder::new(cfg.seed);
        let mut fading = NormalSource::new(seeder.stream("fading"));
        let channel = FadingChannel::new(
            cfg.num_victims,
            cfg.num_channels,
            cfg.doppler,
            cfg.slot_duration,
            &mut fading,
        );
        let victim_codec = VictimActionCodec {
            num_channels: cfg.num_channels,
            num_levels: cfg.num_power_levels,
            max_power: cfg.max_power,
        };
        let dims = QNetDims {
            input: cfg.victim_obs_width(),
            hidden: cfg.lstm_hidden,
            duel_hidden: cfg.duel_hidden,
            actions: cfg.victim_action_count(),
            history: cfg.history_len,
        };
        let mut init_rng = seeder.stream("victim-init");
        let victim_params = QNetworkParams::init(dims, &mut init_rng);
        let attacker = (kind != ScenarioKind::Baseline && cfg.attacker_type != AttackerType::None)
            .then(|| AttackerAgent::new(&cfg, &seeder));
        let trace = MetricsTrace::new(&cfg, plan, channel.rho());
        Ok(World {
            victim_trainer: Trainer::new(dims),
            victim_replay: ReplayHistory::new(cfg.replay_capacity),
            victim_histories: vec![
                ObservationHistory::zeros(cfg.history_len, dims.input);
                cfg.num_victims
            ],
            victim_explore: seeder.stream("victim-explore"),
            victim_replay_rng: seeder.stream("victim-replay"),
            victim_eps: EpsilonSchedule {
                start: cfg.victim_eps0,
                end: cfg.victim_eps1,
                horizon: cfg.victim_train_slots,
            },
            skip_victim_training: false,
            victim_params,
            victim_codec,
            attacker,
            retrain: None,
            ensemble: None,
            slot: 0,
            trace,
            channel,
            fading,
            seeder,
            cfg,
            plan,
        })
    }

    /// Installs pre-trained victim parameters and skips the training phase
    /// (the victims act greedily and stay frozen through it).
    pub fn preload_victim(&mut self, params: QNetworkParams) {
        assert_eq!(params.dims(), self.victim_params.dims(), "snapshot shape mismatch");
        assert_eq!(self.slot, 0, "preload before running");
        self.victim_params = params;
        self.skip_victim_training = true;
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn plan(&self) -> PhasePlan {
        self.plan
    }

    pub fn cfg(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn trace(&self) -> &MetricsTrace {
        &self.trace
    }

    pub fn victim_params(&self) -> &QNetworkParams {
        &self.victim_params
    }

    pub fn collapse_fired(&self) -> Option<usize> {
        self.retrain.as_ref().and_then(|b| b.first_collapse_interval)
    }

    /// Forks a world paused exactly at the end of victim training into a
    /// different scenario kind and attacker type. The training prefix is
    /// identical across kinds (attacker streams are untouched before
    /// activation), so the fork continues exactly as a fresh run of the
    /// target scenario would.
    pub fn fork_scenario(&self, kind: ScenarioKind, attacker: AttackerType) -> World {
        assert_eq!(
            self.slot, self.plan.train_end,
            "forking is defined at the training boundary only"
        );
        let mut cfg = self.cfg.clone();
        cfg.attacker_type = attacker;
        let plan = PhasePlan::new(&cfg, kind);
        let mut world = self.clone();
        world.attacker = (kind != ScenarioKind::Baseline && attacker != AttackerType::None)
            .then(|| AttackerAgent::new(&cfg, &self.seeder));
        world.cfg = cfg;
        world.plan = plan;
        world.trace.plan = plan;
        world
    }

    /// Advances one slot.
    pub fn step(&mut self) -> Result<()> {
        let t = self.slot;
        assert!(t < self.plan.run_end, "stepping past the end of the run");
        // Phase transitions that must happen before anyone acts.
        if self.plan.retrain_start == Some(t) {
            self.retrain = Some(RetrainBook::new(&self.cfg, t));
        }
        if self.plan.kind == ScenarioKind::Ensemble && self.plan.retrain_end == Some(t) {
            self.begin_ensemble_phase(t)?;
        }
        let phase = self.plan.phase_at(t);
        if phase == Phase::Ensemble {
            let run = self.ensemble.as_mut().expect("ensemble phase without schedule");
            if let Some(params) = run.schedule.reload_at(t - run.start_slot) {
                // Synchronized reload: every victim's live copy becomes the
                // next model in the rotation.
                for local in &mut run.locals {
                    local.params = params.clone();
                }
            }
        }

        // 1. Everyone picks an action from slot-(t-1) information.
        let eps = match phase {
            Phase::Train => {
                if self.skip_victim_training {
                    0.0
                } else {
                    self.victim_eps.value(t)
                }
            }
            Phase::Test | Phase::Frozen => 0.0,
            Phase::Retrain | Phase::Ensemble => self.cfg.retrain_eps,
        };
        let mut actions = Vec::with_capacity(self.cfg.num_victims);
        for k in 0..self.cfg.num_victims {
            let params = match &self.ensemble {
                Some(run) if phase == Phase::Ensemble => &run.locals[k].params,
                _ => &self.victim_params,
            };
            actions.push(victim_act(
                params,
                &self.victim_histories[k],
                eps,
                &mut self.victim_explore,
            ));
        }
        let transmits: Vec<Option<(usize, f64)>> = actions
            .iter()
            .map(|&a| self.victim_codec.transmit_of(a))
            .collect();
        let victim_channels: Vec<Option<usize>> =
            transmits.iter().map(|o| o.map(|(c, _)| c)).collect();

        let attacker_on = self.plan.attacker_active(t) && self.attacker.is_some();
        let mut slot_mode = SlotMode::Off;
        let mut jam_set: Vec<usize> = Vec::new();
        let mut dqn_action: Option<usize> = None;
        if attacker_on {
            let attack_start = self.plan.attack_start.unwrap();
            let att = self.attacker.as_mut().unwrap();
            match att.kind {
                AttackerType::Dqn => {
                    let active_slot = t - attack_start;
                    let mode = select_attacker_mode(
                        att.listen_eps.value(active_slot),
                        att.eps.value(active_slot),
                        att.last_was_listen,
                        &mut att.explore,
                    );
                    if mode == AttackerMode::Listen {
                        slot_mode = SlotMode::Listen;
                    } else {
                        let idx = attacker_act(&att.params, &att.history, mode, &mut att.explore);
                        jam_set = att.codec.decode(idx);
                        dqn_action = Some(idx);
                        slot_mode = SlotMode::Attack;
                    }
                }
                AttackerType::Random => {
                    let idx = random_attack(&att.codec, &mut att.explore);
                    jam_set = att.codec.decode(idx);
                    slot_mode = SlotMode::Attack;
                }
                AttackerType::Ideal => {
                    jam_set = ideal_attack(
                        &victim_channels,
                        self.cfg.num_jam_channels,
                        self.cfg.num_channels,
                    );
                    slot_mode = SlotMode::Attack;
                }
                AttackerType::None => unreachable!(),
            }
        }

        // 2. The channel fades one slot; 3. rates resolve.
        self.channel.evolve(&mut self.fading);
        let decision = TransmitDecision {
            victims: transmits.clone(),
            jammed: jam_set.clone(),
            jam_power: self.cfg.jam_power,
        };
        let (rates, sum_rate) = self.channel.rates(&decision, self.cfg.noise_power);

        // 4. Observations, replay, and training.
        if attacker_on && self.attacker.as_ref().unwrap().kind == AttackerType::Dqn {
            let listening = slot_mode == SlotMode::Listen;
            let measurements = listening
                .then(|| self.channel.measure_interference(&decision, self.cfg.noise_power));
            let att = self.attacker.as_mut().unwrap();
            let (action, reward, obs) = if let Some(profile) = measurements {
                let pseudo = listen_pseudo_action(&profile, att.codec.k);
                (
                    att.codec.encode(&pseudo),
                    LISTEN_PSEUDO_REWARD,
                    attacker_observation(sum_rate, &[], self.cfg.num_channels),
                )
            } else {
                (
                    dqn_action.unwrap(),
                    attacker_reward(sum_rate),
                    attacker_observation(sum_rate, &jam_set, self.cfg.num_channels),
                )
            };
            let before = att.history.clone();
            att.history.push(&obs);
            att.replay.push(TransitionRecord {
                history: before,
                action,
                reward,
                next_history: att.history.clone(),
            });
            att.last_was_listen = listening;
        }
        for k in 0..self.cfg.num_victims {
            let obs = victim_observation(rates[k], transmits[k], self.cfg.num_channels);
            let before = self.victim_histories[k].clone();
            self.victim_histories[k].push(&obs);
            let record = TransitionRecord {
                history: before,
                action: actions[k],
                reward: sum_rate,
                next_history: self.victim_histories[k].clone(),
            };
            match &mut self.ensemble {
                // Distributed phase: each victim keeps its own experience.
                Some(run) if phase == Phase::Ensemble => run.locals[k].replay.push(record),
                _ => self.victim_replay.push(record),
            }
        }

        let cu_trains = (!self.skip_victim_training && phase == Phase::Train)
            || phase == Phase::Retrain;
        if cu_trains && self.victim_replay.len() >= self.cfg.minibatch {
            let lr = if phase == Phase::Train {
                self.cfg.victim_lr
            } else {
                self.cfg.retrain_lr
            };
            let batch = self
                .victim_replay
                .sample(self.cfg.minibatch, &mut self.victim_replay_rng)?;
            self.victim_trainer
                .train_step(
                    &mut self.victim_params,
                    &batch,
                    self.cfg.gamma,
                    lr,
                    self.cfg.grad_clip,
                )
                .map_err(|d| Error::Divergence { slot: t, loss: d.0 })?;
        }
        if phase == Phase::Ensemble {
            let run = self.ensemble.as_mut().unwrap();
            for local in &mut run.locals {
                if local.replay.len() < self.cfg.minibatch {
                    continue;
                }
                let batch = local.replay.sample(self.cfg.minibatch, &mut local.replay_rng)?;
                local
                    .trainer
                    .train_step(
                        &mut local.params,
                        &batch,
                        self.cfg.gamma,
                        self.cfg.retrain_lr,
                        self.cfg.grad_clip,
                    )
                    .map_err(|d| Error::Divergence { slot: t, loss: d.0 })?;
            }
        }
        if attacker_on {
            let att = self.attacker.as_mut().unwrap();
            if att.kind == AttackerType::Dqn && att.replay.len() >= self.cfg.minibatch {
                let batch = att.replay.sample(self.cfg.minibatch, &mut att.replay_rng)?;
                att.trainer
                    .train_step(
                        &mut att.params,
                        &batch,
                        self.cfg.gamma,
                        self.cfg.attacker_lr,
                        self.cfg.grad_clip,
                    )
                    .map_err(|d| Error::Divergence { slot: t, loss: d.0 })?;
            }
        }

        // 5. Record the slot.
        self.trace.sum_rate.push(sum_rate);
        self.trace.rates.extend_from_slice(&rates);
        for k in 0..self.cfg.num_victims {
            match transmits[k] {
                Some((c, p)) => {
                    self.trace.victim_channel.push(c as i16);
                    self.trace.victim_power.push(p);
                }
                None => {
                    self.trace.victim_channel.push(-1);
                    self.trace.victim_power.push(0.0);
                }
            }
        }
        self.trace.attacker_mode.push(slot_mode);
        let mask = jam_set.iter().fold(0u64, |m, c| m | (1 << c));
        self.trace.jam_mask.push(mask);
        if t % self.cfg.gain_checkpoint_every == 0 {
            self.trace.gain_checkpoints.push(GainCheckpoint {
                slot: t,
                gains: self.channel.gains_snapshot(),
            });
        }

        // 6. Retraining bookkeeping (uses the freshly recorded slot).
        if phase == Phase::Retrain {
            self.update_retrain_book(t, &victim_channels, sum_rate);
        }

        self.slot = t + 1;
        Ok(())
    }

    fn update_retrain_book(&mut self, t: u64, victim_channels: &[Option<usize>], sum_rate: f64) {
        let retrain_start = self.plan.retrain_start.unwrap();
        let book = self.retrain.as_mut().expect("retrain phase without book");
        if book.interval_index >= self.cfg.snapshot_count {
            return; // remainder slots beyond the last full interval
        }
        if let Some((prev_channels, prev_sum)) = &book.prev {
            book.current.accumulate(prev_channels, victim_channels, *prev_sum);
        }
        book.prev = Some((victim_channels.to_vec(), sum_rate));
        let interval_end = book.interval_start + book.interval_len - 1;
        if t == interval_end {
            let finished = std::mem::replace(
                &mut book.current,
                TransitionMatrix::new(
                    self.cfg.num_channels,
                    self.cfg.reward_bins,
                    book.interval_index + 1,
                ),
            );
            book.library.push(SnapshotEntry {
                interval: book.interval_index,
                slot: t,
                params: self.victim_params.clone(),
                matrix: finished,
            });
            // Collapse test on the trailing window, once enough retraining
            // slots exist to fill it.
            if book.first_collapse_interval.is_none()
                && t + 1 >= retrain_start + self.cfg.collapse_window
            {
                let fires = self.trace.collapse_fires_at(t + 1, &self.cfg);
                if fires {
                    book.first_collapse_interval = Some(book.interval_index);
                }
            }
            book.interval_index += 1;
            book.interval_start = t + 1;
            book.prev = None;
        }
    }

    fn begin_ensemble_phase(&mut self, t: u64) -> Result<()> {
        let book = self
            .retrain
            .as_ref()
            .expect("ensemble phase requires a retraining phase");
        // Intervals at and after the first collapsed one are excluded, unless
        // that leaves fewer candidates than the ensemble needs.
        let all = self.cfg.snapshot_count - 1;
        let last_included = match book.first_collapse_interval {
            Some(i) if i >= self.cfg.ensemble_size => i - 1,
            Some(_) => all,
            None => all,
        };
        let schedule = select_ensemble(
            &book.library,
            self.cfg.ensemble_size,
            last_included,
            self.cfg.reload_period,
        )?;
        // From here on the system runs distributed: every victim holds its
        // own copy and retrains it on its own transitions between reloads.
        let dims = self.victim_params.dims();
        let locals = (0..self.cfg.num_victims)
            .map(|k| LocalVictim {
                params: self.victim_params.clone(),
                trainer: Trainer::new(dims),
                replay: ReplayHistory::new(self.cfg.replay_capacity),
                replay_rng: self.seeder.stream(&format!("victim-{k}-local-replay")),
            })
            .collect();
        self.ensemble = Some(EnsembleRun {
            schedule,
            start_slot: t,
            locals,
        });
        Ok(())
    }

    /// Runs to the planned end, stopping early only when a retraining
    /// scenario detects collapse (and detection is enabled).
    pub fn run(&mut self) -> Result<()> {
        while self.slot < self.plan.run_end {
            if self.plan.kind == ScenarioKind::Retrain
                && self.cfg.collapse_detection
                && self.collapse_fired().is_some()
            {
                break;
            }
            self.step()?;
        }
        Ok(())
    }

    /// Runs until `slot` (exclusive) without early stops.
    pub fn run_to(&mut self, slot: u64) -> Result<()> {
        assert!(slot <= self.plan.run_end);
        while self.slot < slot {
            self.step()?;
        }
        Ok(())
    }

    pub fn into_outcome(self) -> RunOutcome {
        RunOutcome {
            stopped_at: self.slot,
            selected_intervals: self
                .ensemble
                .as_ref()
                .map(|e| e.schedule.selected_intervals()),
            first_collapse_interval: self.retrain.as_ref().and_then(|b| b.first_collapse_interval),
            library: self.retrain.map(|b| b.library),
            final_victim_params: self.victim_params,
            trace: self.trace,
        }
    }
}

pub fn scenario_baseline(cfg: &ScenarioConfig) -> Result<RunOutcome> {
    run_scenario(cfg, ScenarioKind::Baseline)
}

pub fn scenario_attack(cfg: &ScenarioConfig) -> Result<RunOutcome> {
    run_scenario(cfg, ScenarioKind::Attack)
}

pub fn scenario_retrain_collapse(cfg: &ScenarioConfig) -> Result<RunOutcome> {
    run_scenario(cfg, ScenarioKind::Retrain)
}

pub fn scenario_ensemble(cfg: &ScenarioConfig) -> Result<RunOutcome> {
    run_scenario(cfg, ScenarioKind::Ensemble)
}

fn run_scenario(cfg: &ScenarioConfig, kind: ScenarioKind) -> Result<RunOutcome> {
    let mut world = World::new(cfg.clone(), kind)?;
    world.run()?;
    Ok(world.into_outcome())
}
