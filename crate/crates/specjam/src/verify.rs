//! Self-check battery behind the `verify` subcommand: fast, deterministic
//! spot checks of the numeric core against independent evaluations.

use rand::Rng;

use crate::agents::{listen_pseudo_action, EpsilonSchedule, SubsetCodec, VictimActionCodec};
use crate::channel::{bessel_j0, Complex, FadingChannel, TransmitDecision};
use crate::config::ScenarioConfig;
use crate::ensemble::{correlation, select_ensemble, SnapshotEntry, SnapshotLibrary, TransitionMatrix};
use crate::experiment::{scenario_attack, ScenarioKind};
use crate::qnet::{batch_loss_fixed_targets, QNetDims, QNetworkParams, Trainer};
use crate::replay::{ObservationHistory, TransitionRecord};
use crate::rng::{NormalSource, StreamSeeder};
use crate::snapshot::{read_params, write_params, SnapshotMeta};

pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail,
    }
}

/// J0 by Simpson quadrature of its integral representation; the independent
/// route against the power series.
fn j0_quadrature(x: f64) -> f64 {
    let n = 20_000;
    let h = std::f64::consts::PI / n as f64;
    let f = |t: f64| (x * t.sin()).cos();
    let mut acc = f(0.0) + f(std::f64::consts::PI);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    acc * h / 3.0 / std::f64::consts::PI
}

fn check_bessel() -> CheckResult {
    let mut worst: f64 = 0.0;
    for i in 0..=40 {
        let x = i as f64 * 0.05;
        worst = worst.max((bessel_j0(x) - j0_quadrature(x)).abs());
    }
    check(
        "bessel-j0-vs-quadrature",
        worst < 1e-10,
        format!("max |series - quadrature| = {worst:.2e}"),
    )
}

fn check_channel_power() -> CheckResult {
    let mut normals = NormalSource::new(StreamSeeder::new(101).stream("fading"));
    let mut ch = FadingChannel::new(9, 10, 0.2, 0.02, &mut normals);
    let mut total = 0.0;
    let mut count = 0.0;
    for _ in 0..4000 {
        ch.evolve(&mut normals);
        if ch.slot() % 20 == 0 {
            for g in ch.gains_snapshot() {
                total += g.norm_sqr();
                count += 1.0;
            }
        }
    }
    let mean = total / count;
    check(
        "fading-stationary-power",
        (mean - 1.0).abs() < 0.05,
        format!("mean |h|^2 = {mean:.4}"),
    )
}

/// Straight-line SINR/rate evaluation written directly from the rate
/// definitions, independent of the channel module's implementation.
fn brute_force_rates(
    gains: &[Complex],
    num_victims: usize,
    num_channels: usize,
    decision: &TransmitDecision,
    noise: f64,
) -> (Vec<f64>, f64) {
    let nodes = num_victims + 1;
    let g = |rx: usize, tx: usize, c: usize| gains[(rx * nodes + tx) * num_channels + c];
    let mut rates = vec![0.0; num_victims];
    for k in 0..num_victims {
        if let Some((ck, pk)) = decision.victims[k] {
            let mut den = noise;
            for j in 0..num_victims {
                if j != k {
                    if let Some((cj, pj)) = decision.victims[j] {
                        if cj == ck {
                            den += pj * g(k, j, cj).norm_sqr();
                        }
                    }
                }
            }
            for &jc in &decision.jammed {
                if jc == ck {
                    den += decision.jam_power * g(k, num_victims, ck).norm_sqr();
                }
            }
            let sinr = pk * g(k, k, ck).norm_sqr() / den;
            rates[k] = (1.0 + sinr).ln() / std::f64::consts::LN_2;
        }
    }
    let sum = rates.iter().sum();
    (rates, sum)
}

fn check_rate_oracle() -> CheckResult {
    let mut rng = StreamSeeder::new(202).stream("oracle");
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.gen_range(1..=4usize);
        let nc = rng.gen_range(1..=6usize);
        let mut normals = NormalSource::new(StreamSeeder::new(rng.gen()).stream("f"));
        let ch = FadingChannel::new(k, nc, 0.2, 0.02, &mut normals);
        let mut decision = TransmitDecision::idle(k);
        for v in decision.victims.iter_mut() {
            if rng.gen_bool(0.8) {
                *v = Some((rng.gen_range(0..nc), rng.gen_range(0.5..6.3)));
            }
        }
        if rng.gen_bool(0.6) {
            let ka = rng.gen_range(1..=nc);
            let codec = SubsetCodec { n: nc, k: ka };
            decision.jammed = codec.decode(rng.gen_range(0..codec.action_count()));
            decision.jam_power = 6.3;
        }
        let (r1, s1) = ch.rates(&decision, 1.0);
        let (r2, s2) = brute_force_rates(&ch.gains_snapshot(), k, nc, &decision, 1.0);
        worst = worst.max((s1 - s2).abs());
        for (a, b) in r1.iter().zip(&r2) {
            worst = worst.max((a - b).abs());
        }
    }
    check(
        "sinr-rate-oracle",
        worst < 1e-12,
        format!("max |module - straight-line| = {worst:.2e}"),
    )
}

fn check_dueling_identity() -> CheckResult {
    let dims = QNetDims {
        input: 5,
        hidden: 8,
        duel_hidden: 5,
        actions: 6,
        history: 4,
    };
    let mut rng = StreamSeeder::new(303).stream("init");
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let params = QNetworkParams::init(dims, &mut rng);
        let mut history = ObservationHistory::zeros(4, 5);
        for _ in 0..4 {
            let obs: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            history.push(&obs);
        }
        let out = params.forward_parts(&history);
        let residual: f64 = out.q.iter().map(|q| q - out.value).sum();
        worst = worst.max(residual.abs());
    }
    check(
        "dueling-mean-centered",
        worst < 1e-9,
        format!("max |sum(Q - V)| = {worst:.2e}"),
    )
}

fn check_gradients() -> CheckResult {
    let dims = QNetDims {
        input: 4,
        hidden: 4,
        duel_hidden: 3,
        actions: 3,
        history: 3,
    };
    let mut rng = StreamSeeder::new(404).stream("grad");
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let params = QNetworkParams::init(dims, &mut rng);
        let mut history = ObservationHistory::zeros(3, 4);
        for _ in 0..3 {
            let obs: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            history.push(&obs);
        }
        let record = TransitionRecord {
            history: history.clone(),
            action: rng.gen_range(0..3),
            reward: rng.gen_range(-3.0..3.0),
            next_history: history,
        };
        let batch = [&record];
        let targets = [record.reward];
        let mut trainer = Trainer::new(dims);
        trainer.loss_and_gradients(&params, &batch, &targets);
        let analytic = trainer.gradients_flat().to_vec();
        let base = params.to_flat();
        for i in 0..base.len() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            let mut pf = base.clone();
            pf[i] += eps;
            plus.set_from_flat(&pf);
            pf[i] -= 2.0 * eps;
            minus.set_from_flat(&pf);
            let numeric = (batch_loss_fixed_targets(&plus, &batch, &targets)
                - batch_loss_fixed_targets(&minus, &batch, &targets))
                / (2.0 * eps);
            // Floor guards against finite-difference roundoff on near-zero
            // gradients (absolute agreement to 1e-8 is still required).
            let denom = (analytic[i].abs() + numeric.abs()).max(1e-4);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
    }
    check(
        "bptt-gradient-check",
        worst < 1e-4,
        format!("max relative error = {worst:.2e}"),
    )
}

fn check_codecs() -> CheckResult {
    let victim = VictimActionCodec {
        num_channels: 4,
        num_levels: 5,
        max_power: 6.3,
    };
    let mut ok = victim.action_count() == 21;
    for i in 0..victim.action_count() {
        ok &= victim.encode(victim.decode(i)) == i;
    }
    let subset = SubsetCodec { n: 4, k: 2 };
    ok &= subset.action_count() == 6;
    ok &= subset.decode(0) == vec![0, 1] && subset.decode(5) == vec![2, 3];
    for i in 0..6 {
        ok &= subset.encode(&subset.decode(i)) == i;
    }
    check("action-codecs", ok, "victim 21 actions, attacker 6 subsets".into())
}

fn check_schedule() -> CheckResult {
    let s = EpsilonSchedule {
        start: 1.0,
        end: 0.1,
        horizon: 20_000,
    };
    let ok = s.value(0) == 1.0 && s.value(20_000) == 0.1 && s.value(100_000) == 0.1;
    check("epsilon-schedule-endpoints", ok, format!("{} -> {}", s.value(0), s.value(20_000)))
}

fn check_listen_rule() -> CheckResult {
    let picked = listen_pseudo_action(&[7.3, 1.0, 1.0, 5.2], 2);
    check(
        "listen-top-k",
        picked == vec![0, 3],
        format!("picked {picked:?}"),
    )
}

fn check_transition_machinery() -> CheckResult {
    let mut m = TransitionMatrix::new(4, 16, 0);
    let held = vec![Some(0), Some(0)];
    m.accumulate(&held, &held, 2.5);
    m.accumulate(&held, &held, 2.5);
    let mut ok = m.count(0, 0, 2) == 4 && m.total() == 4;
    let mut other = TransitionMatrix::new(4, 16, 1);
    other.accumulate(&[Some(0)], &[Some(0)], 2.0);
    ok &= correlation(&m, &other) == correlation(&other, &m);
    ok &= m.reward_bin(17.9) == 15;
    check("transition-matrix", ok, format!("total = {}", m.total()))
}

fn check_reload_cycle() -> CheckResult {
    let params = QNetworkParams::zeros(QNetDims {
        input: 2,
        hidden: 2,
        duel_hidden: 2,
        actions: 2,
        history: 2,
    });
    let mut lib = SnapshotLibrary::new();
    for i in 0..8 {
        lib.push(SnapshotEntry {
            interval: i,
            slot: i as u64,
            params: params.clone(),
            matrix: TransitionMatrix::new(4, 16, i),
        });
    }
    let schedule = select_ensemble(&lib, 8, 7, 720_000).unwrap();
    let ok = schedule.dwell() == 90_000
        && schedule.reload_at(0).is_some()
        && schedule.reload_at(1).is_none()
        && schedule.reload_at(720_000).is_some();
    check("reload-cycle", ok, format!("dwell = {}", schedule.dwell()))
}

fn check_snapshot_roundtrip() -> CheckResult {
    let dims = QNetDims {
        input: 5,
        hidden: 6,
        duel_hidden: 4,
        actions: 7,
        history: 3,
    };
    let mut rng = StreamSeeder::new(505).stream("init");
    let params = QNetworkParams::init(dims, &mut rng);
    let mut bytes = Vec::new();
    write_params(&mut bytes, &params, SnapshotMeta { interval: 1, slot: 2 }).unwrap();
    let ok = match read_params(&mut bytes.as_slice()) {
        Ok((back, _)) => back
            .to_flat()
            .iter()
            .zip(params.to_flat())
            .all(|(a, b)| a.to_bits() == b.to_bits()),
        Err(_) => false,
    };
    check("snapshot-roundtrip", ok, format!("{} bytes", bytes.len()))
}

fn check_run_determinism() -> CheckResult {
    let mut cfg = ScenarioConfig::default();
    cfg.victim_train_slots = 150;
    cfg.victim_test_slots = 50;
    cfg.attack_delay = 30;
    cfg.attacker_train_slots = 40;
    cfg.attack_duration = 120;
    cfg.retrain_delay = 20;
    cfg.retrain_slots = 200;
    cfg.snapshot_count = 4;
    cfg.ensemble_size = 2;
    cfg.reload_period = 100;
    cfg.ensemble_duration = 100;
    cfg.history_len = 3;
    cfg.lstm_hidden = 4;
    cfg.duel_hidden = 3;
    cfg.minibatch = 4;
    cfg.replay_capacity = 400;
    cfg.collapse_window = 50;
    cfg.gain_checkpoint_every = 50;
    cfg.seed = 99;
    let a = scenario_attack(&cfg);
    let b = scenario_attack(&cfg);
    let ok = match (&a, &b) {
        (Ok(x), Ok(y)) => x.trace == y.trace,
        _ => false,
    };
    check(
        "run-determinism",
        ok,
        format!("{} kind repeated", ScenarioKind::Attack.name()),
    )
}

/// Runs every check; each result carries a one-line detail.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        check_bessel(),
        check_channel_power(),
        check_rate_oracle(),
        check_dueling_identity(),
        check_gradients(),
        check_codecs(),
        check_schedule(),
        check_listen_rule(),
        check_transition_machinery(),
        check_reload_cycle(),
        check_snapshot_roundtrip(),
        check_run_determinism(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for result in run_all() {
            assert!(result.passed, "{} failed: {}", result.name, result.detail);
        }
    }
}
