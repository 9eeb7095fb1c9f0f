// Dev probe: frozen end-of-training policy replayed over the same fading
// trajectory it trained on (the channel is action-independent, so equal
// seeds give equal fading).
use specjam::experiment::{ScenarioKind, World};
use specjam::snapshot::load_snapshot;
use specjam::ScenarioConfig;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1);
    let snap = std::env::args().nth(2).expect("snapshot path");
    let (params, _) = load_snapshot(std::path::Path::new(&snap)).unwrap();
    let mut cfg = ScenarioConfig::desk();
    cfg.seed = seed;
    cfg.grad_clip = 2.5;
    let mut world = World::new(cfg.clone(), ScenarioKind::Baseline).unwrap();
    world.preload_victim(params);
    world.run_to(cfg.victim_train_slots).unwrap();
    let trace = world.trace();
    for (lo, hi) in [(10_000u64, 30_000u64), (30_000, 50_000), (44_000, 50_000)] {
        println!(
            "frozen greedy on training-window fading [{lo}, {hi}): {:.3}",
            trace.mean_sum_rate(lo, hi)
        );
    }
}
