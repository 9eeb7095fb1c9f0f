// Dev probe: Q-value scale of a saved victim model on plausible histories.
use specjam::agents::victim_observation;
use specjam::replay::ObservationHistory;
use specjam::snapshot::load_snapshot;

fn main() {
    let path = std::env::args().nth(1).expect("snapshot path");
    let (params, meta) = load_snapshot(std::path::Path::new(&path)).unwrap();
    println!("dims {:?}, saved at slot {}", params.dims(), meta.slot);
    let dims = params.dims();
    for rate in [0.5, 2.0, 4.0] {
        let mut h = ObservationHistory::zeros(dims.history, dims.input);
        for _ in 0..dims.history {
            h.push(&victim_observation(rate, Some((1, 6.3)), dims.input - 1));
        }
        let out = params.forward_parts(&h);
        let max_q = out.q.iter().cloned().fold(f64::MIN, f64::max);
        let min_q = out.q.iter().cloned().fold(f64::MAX, f64::min);
        println!(
            "rate {rate}: V = {:.2}, maxQ = {:.2}, minQ = {:.2}, adv spread = {:.3}",
            out.value,
            max_q,
            min_q,
            max_q - min_q
        );
    }
}
