// Dev probe: oracle joint-action sum rate vs the learned policy, same seed.
use specjam::channel::{FadingChannel, TransmitDecision};
use specjam::rng::{NormalSource, StreamSeeder};
use specjam::{scenario_baseline, ScenarioConfig};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut cfg = ScenarioConfig::desk();
    cfg.seed = seed;
    let seeder = StreamSeeder::new(cfg.seed);
    let mut normals = NormalSource::new(seeder.stream("fading"));
    let mut ch = FadingChannel::new(
        cfg.num_victims,
        cfg.num_channels,
        cfg.doppler,
        cfg.slot_duration,
        &mut normals,
    );
    let powers: Vec<f64> = (0..cfg.num_power_levels)
        .map(|i| (i + 1) as f64 * cfg.max_power / cfg.num_power_levels as f64)
        .collect();
    let test_start = cfg.victim_train_slots;
    let test_end = test_start + cfg.victim_test_slots;
    let mut oracle_sum = 0.0;
    let mut best_static_pair = vec![vec![0.0; cfg.num_channels]; cfg.num_channels];
    let mut maxpow_distinct_best = 0.0;
    for t in 0..test_end {
        ch.evolve(&mut normals);
        if t < test_start {
            continue;
        }
        let mut best = 0.0f64;
        for c1 in 0..cfg.num_channels {
            for c2 in 0..cfg.num_channels {
                for &p1 in &powers {
                    for &p2 in &powers {
                        let d = TransmitDecision {
                            victims: vec![Some((c1, p1)), Some((c2, p2))],
                            jammed: vec![],
                            jam_power: 0.0,
                        };
                        let (_, s) = ch.rates(&d, cfg.noise_power);
                        best = best.max(s);
                        if (p1 - cfg.max_power).abs() < 1e-9 && (p2 - cfg.max_power).abs() < 1e-9 {
                            best_static_pair[c1][c2] += s;
                        }
                    }
                }
            }
        }
        oracle_sum += best;
        // max power, best distinct channel pair this slot
        let mut bd = 0.0f64;
        for c1 in 0..cfg.num_channels {
            for c2 in 0..cfg.num_channels {
                if c1 == c2 {
                    continue;
                }
                let d = TransmitDecision {
                    victims: vec![Some((c1, cfg.max_power)), Some((c2, cfg.max_power))],
                    jammed: vec![],
                    jam_power: 0.0,
                };
                let (_, s) = ch.rates(&d, cfg.noise_power);
                bd = bd.max(s);
            }
        }
        maxpow_distinct_best += bd;
    }
    let n = (test_end - test_start) as f64;
    println!("seed {seed}");
    println!("oracle joint (channels+powers): {:.3}", oracle_sum / n);
    println!("oracle distinct channels @max power: {:.3}", maxpow_distinct_best / n);
    let mut static_best = 0.0f64;
    for c1 in 0..cfg.num_channels {
        for c2 in 0..cfg.num_channels {
            static_best = static_best.max(best_static_pair[c1][c2]);
        }
    }
    println!("best static channel pair @max power: {:.3}", static_best / n);

    let out = scenario_baseline(&cfg).unwrap();
    let mean = out.trace.mean_sum_rate(test_start, test_end);
    println!("learned policy test mean: {mean:.3}");
}
