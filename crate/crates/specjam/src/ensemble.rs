//! Ensemble-policy defense: per-interval transition matrices collected
//! during centralized retraining, pairwise transition correlation, the
//! minimum-correlation subset selection, the periodic reload schedule, and
//! collapse detection.

use crate::error::{Error, Result};
use crate::qnet::QNetworkParams;

/// First-order transition counts over (previous channel, current channel,
/// quantized previous reward) for one retraining interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMatrix {
    counts: Vec<u64>,
    num_channels: usize,
    reward_bins: usize,
    /// Index of the retraining interval this matrix summarizes.
    pub interval: usize,
}

impl TransitionMatrix {
    pub fn new(num_channels: usize, reward_bins: usize, interval: usize) -> Self {
        assert!(num_channels >= 1 && reward_bins >= 1);
        TransitionMatrix {
            counts: vec![0; num_channels * num_channels * reward_bins],
            num_channels,
            reward_bins,
            interval,
        }
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn reward_bins(&self) -> usize {
        self.reward_bins
    }

    #[inline]
    fn index(&self, prev: usize, cur: usize, bin: usize) -> usize {
        (prev * self.num_channels + cur) * self.reward_bins + bin
    }

    pub fn count(&self, prev: usize, cur: usize, bin: usize) -> u64 {
        self.counts[self.index(prev, cur, bin)]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Flattened counts in (prev-channel, cur-channel, reward-bin) order.
    pub fn flat(&self) -> &[u64] {
        &self.counts
    }

    pub fn set_flat(&mut self, flat: &[u64]) {
        assert_eq!(flat.len(), self.counts.len());
        self.counts.copy_from_slice(flat);
    }

    /// Unit-width integer reward bin, clamped to the top bin.
    pub fn reward_bin(&self, reward: f64) -> usize {
        let bin = reward.max(0.0).floor() as usize;
        bin.min(self.reward_bins - 1)
    }

    /// Adds one slot pair: for every victim that transmitted in both slots,
    /// increments the (previous channel, current channel, quantized previous
    /// sum rate) cell. Victims silent in either slot contribute nothing.
    pub fn accumulate(
        &mut self,
        prev_channels: &[Option<usize>],
        cur_channels: &[Option<usize>],
        prev_sum_rate: f64,
    ) {
        assert_eq!(prev_channels.len(), cur_channels.len());
        let bin = self.reward_bin(prev_sum_rate);
        for (prev, cur) in prev_channels.iter().zip(cur_channels) {
            if let (Some(a1), Some(a2)) = (prev, cur) {
                let i = self.index(*a1, *a2, bin);
                self.counts[i] += 1;
            }
        }
    }
}

/// Scalar transition correlation: the grand sum of the element-wise product
/// of two count tensors. Symmetric, nonnegative, zero exactly when the two
/// supports are disjoint.
pub fn correlation(a: &TransitionMatrix, b: &TransitionMatrix) -> u64 {
    assert_eq!(a.num_channels, b.num_channels, "matrix dimension mismatch");
    assert_eq!(a.reward_bins, b.reward_bins, "matrix dimension mismatch");
    a.counts.iter().zip(&b.counts).map(|(x, y)| x * y).sum()
}

/// One saved model with the transition matrix of its interval.
#[derive(Debug, Clone)]
pub struct SnapshotEntry {
    pub interval: usize,
    pub slot: u64,
    pub params: QNetworkParams,
    pub matrix: TransitionMatrix,
}

/// Ordered collection of models saved during retraining, one per interval.
#[derive(Debug, Clone, Default)]
pub struct SnapshotLibrary {
    entries: Vec<SnapshotEntry>,
}

impl SnapshotLibrary {
    pub fn new() -> Self {
        SnapshotLibrary {
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, entry: SnapshotEntry) {
        if let Some(last) = self.entries.last() {
            assert!(
                entry.interval > last.interval,
                "interval indices must be strictly increasing"
            );
        }
        self.entries.push(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[SnapshotEntry] {
        &self.entries
    }

    pub fn matrices(&self) -> Vec<&TransitionMatrix> {
        self.entries.iter().map(|e| &e.matrix).collect()
    }
}

/// Per-interval correlation score: the sum of pairwise correlations against
/// every other candidate. Lower means the interval's transition pattern is
/// more distinctive.
pub fn selection_scores(matrices: &[&TransitionMatrix]) -> Vec<u64> {
    let n = matrices.len();
    let mut scores = vec![0u64; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                scores[i] += correlation(matrices[i], matrices[j]);
            }
        }
    }
    scores
}

/// The reload rotation over the selected models.
#[derive(Debug, Clone)]
pub struct EnsembleSchedule {
    models: Vec<(usize, QNetworkParams)>,
    reload_period: u64,
    dwell: u64,
}

impl EnsembleSchedule {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn reload_period(&self) -> u64 {
        self.reload_period
    }

    /// Slots each model stays live before the next reload.
    pub fn dwell(&self) -> u64 {
        self.dwell
    }

    pub fn selected_intervals(&self) -> Vec<usize> {
        self.models.iter().map(|(i, _)| *i).collect()
    }

    /// At offsets that are multiples of the dwell time, the next model in
    /// the fixed cyclic order becomes live; otherwise nothing happens.
    /// Offset 0 loads model 0.
    pub fn reload_at(&self, offset: u64) -> Option<&QNetworkParams> {
        if offset % self.dwell != 0 {
            return None;
        }
        let position = (offset / self.dwell) as usize % self.models.len();
        Some(&self.models[position].1)
    }
}

/// Minimum-correlation subset selection on bare matrices: the
/// `ensemble_size` intervals (among those `<= last_included`) with the
/// smallest summed pairwise correlation, ties broken toward earlier
/// intervals, returned in interval order.
pub fn select_intervals(
    matrices: &[&TransitionMatrix],
    ensemble_size: usize,
    last_included: usize,
) -> Result<Vec<usize>> {
    let candidates: Vec<&TransitionMatrix> = matrices
        .iter()
        .copied()
        .filter(|m| m.interval <= last_included)
        .collect();
    if candidates.len() < ensemble_size || ensemble_size == 0 {
        return Err(Error::config(format!(
            "ensemble needs {ensemble_size} snapshots but only {} candidate intervals exist",
            candidates.len()
        )));
    }
    let scores = selection_scores(&candidates);
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    // Sort by (score, interval); interval order is already ascending so a
    // stable sort by score alone realizes the earlier-interval tie-break.
    order.sort_by_key(|&i| scores[i]);
    let mut chosen: Vec<usize> = order[..ensemble_size]
        .iter()
        .map(|&i| candidates[i].interval)
        .collect();
    chosen.sort_unstable(); // back to interval order
    Ok(chosen)
}

/// Picks the ensemble models from a snapshot library and packages them with
/// the reload rotation parameters.
pub fn select_ensemble(
    library: &SnapshotLibrary,
    ensemble_size: usize,
    last_included: usize,
    reload_period: u64,
) -> Result<EnsembleSchedule> {
    let matrices: Vec<&TransitionMatrix> = library.entries().iter().map(|e| &e.matrix).collect();
    let chosen = select_intervals(&matrices, ensemble_size, last_included)?;
    let models = chosen
        .iter()
        .map(|&interval| {
            let entry = library
                .entries()
                .iter()
                .find(|e| e.interval == interval)
                .expect("selected interval missing from library");
            (interval, entry.params.clone())
        })
        .collect();
    let dwell = reload_period / ensemble_size as u64;
    assert!(dwell >= 1, "reload period shorter than the ensemble size");
    Ok(EnsembleSchedule {
        models,
        reload_period,
        dwell,
    })
}

/// Collapse test over the trailing `window` slots: true when the fraction of
/// no-transmission victim actions exceeds `no_tx_threshold`, or the mean sum
/// rate falls below `rate_floor`.
///
/// `silent_counts[t]` holds how many victims stayed silent in slot `t`;
/// `num_victims * window` actions are examined.
pub fn detect_collapse(
    silent_counts: &[u32],
    sum_rates: &[f64],
    num_victims: usize,
    window: usize,
    no_tx_threshold: f64,
    rate_floor: f64,
) -> bool {
    assert_eq!(silent_counts.len(), sum_rates.len());
    assert!(window >= 1 && silent_counts.len() >= window, "window too long");
    let start = silent_counts.len() - window;
    let silent: u64 = silent_counts[start..].iter().map(|&c| c as u64).sum();
    let frac = silent as f64 / (num_victims * window) as f64;
    if frac > no_tx_threshold {
        return true;
    }
    let mean_rate = sum_rates[start..].iter().sum::<f64>() / window as f64;
    mean_rate < rate_floor
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qnet::{QNetDims, QNetworkParams};
    use crate::rng::StreamSeeder;
    use proptest::prelude::*;
    use rand::Rng;

    fn dims() -> QNetDims {
        QNetDims {
            input: 3,
            hidden: 3,
            duel_hidden: 2,
            actions: 4,
            history: 2,
        }
    }

    #[test]
    fn accumulate_hand_count() {
        // Two victims holding channel 0 for a 3-slot interval at sum rate
        // 2.5: two transitions each, all landing in cell (0, 0, bin 2).
        let mut m = TransitionMatrix::new(4, 16, 0);
        let held = vec![Some(0), Some(0)];
        for _ in 0..2 {
            m.accumulate(&held, &held, 2.5);
        }
        assert_eq!(m.count(0, 0, 2), 4);
        assert_eq!(m.total(), 4);
    }

    #[test]
    fn silent_victims_contribute_nothing() {
        let mut m = TransitionMatrix::new(4, 16, 0);
        m.accumulate(&[None, Some(1)], &[Some(2), None], 3.0);
        assert_eq!(m.total(), 0);
        m.accumulate(&[None, Some(1)], &[Some(2), Some(1)], 3.0);
        assert_eq!(m.total(), 1);
        assert_eq!(m.count(1, 1, 3), 1);
    }

    #[test]
    fn reward_bin_clamps() {
        let m = TransitionMatrix::new(4, 16, 0);
        assert_eq!(m.reward_bin(17.9), 15);
        assert_eq!(m.reward_bin(2.5), 2);
        assert_eq!(m.reward_bin(0.0), 0);
        assert_eq!(m.reward_bin(15.999), 15);
    }

    #[test]
    fn count_conservation_on_full_trace() {
        // Always-transmitting synthetic trace: total = K * (T_e - 1).
        let k = 2;
        let t_e = 50;
        let mut m = TransitionMatrix::new(4, 16, 0);
        let mut rng = StreamSeeder::new(1).stream("t");
        let mut prev: Vec<Option<usize>> = (0..k).map(|_| Some(rng.gen_range(0..4))).collect();
        for _ in 1..t_e {
            let cur: Vec<Option<usize>> = (0..k).map(|_| Some(rng.gen_range(0..4))).collect();
            m.accumulate(&prev, &cur, rng.gen_range(0.0..12.0));
            prev = cur;
        }
        assert_eq!(m.total(), (k * (t_e - 1)) as u64);
    }

    #[test]
    fn correlation_examples() {
        let mut a = TransitionMatrix::new(4, 16, 0);
        let b = TransitionMatrix::new(4, 16, 1);
        assert_eq!(correlation(&a, &b), 0);
        let mut c = TransitionMatrix::new(4, 16, 2);
        a.accumulate(&[Some(1), Some(1), Some(1)], &[Some(2), Some(2), Some(2)], 5.0);
        c.accumulate(&[Some(1), Some(1)], &[Some(2), Some(2)], 5.0);
        // a has 3 in cell (1,2,5); c has 2 there.
        assert_eq!(correlation(&a, &c), 6);
        assert_eq!(correlation(&c, &a), 6);
    }

    fn random_matrix(rng: &mut rand_chacha::ChaCha8Rng, interval: usize) -> TransitionMatrix {
        let mut m = TransitionMatrix::new(3, 4, interval);
        let flat: Vec<u64> = (0..36).map(|_| rng.gen_range(0..20)).collect();
        m.set_flat(&flat);
        m
    }

    proptest! {
        #[test]
        fn correlation_symmetric_and_bilinear(seed in 0u64..u64::MAX, scale in 1u64..5) {
            let mut rng = StreamSeeder::new(seed).stream("m");
            let a = random_matrix(&mut rng, 0);
            let b = random_matrix(&mut rng, 1);
            prop_assert_eq!(correlation(&a, &b), correlation(&b, &a));
            // Bilinear in the counts.
            let mut a_scaled = a.clone();
            let flat: Vec<u64> = a.flat().iter().map(|x| x * scale).collect();
            a_scaled.set_flat(&flat);
            prop_assert_eq!(correlation(&a_scaled, &b), scale * correlation(&a, &b));
        }

        #[test]
        fn correlation_zero_iff_disjoint_support(seed in 0u64..u64::MAX) {
            let mut rng = StreamSeeder::new(seed).stream("m");
            let a = random_matrix(&mut rng, 0);
            let b = random_matrix(&mut rng, 1);
            let disjoint = a.flat().iter().zip(b.flat()).all(|(x, y)| *x == 0 || *y == 0);
            prop_assert_eq!(correlation(&a, &b) == 0, disjoint);
        }
    }

    fn library_from_matrices(mats: Vec<TransitionMatrix>) -> SnapshotLibrary {
        let mut lib = SnapshotLibrary::new();
        let params = QNetworkParams::zeros(dims());
        for m in mats {
            lib.push(SnapshotEntry {
                interval: m.interval,
                slot: m.interval as u64 * 100,
                params: params.clone(),
                matrix: m,
            });
        }
        lib
    }

    #[test]
    fn selection_prefers_disjoint_interval() {
        // M0 and M1 overlap; M2 has disjoint support, so its score is 0.
        let mut m0 = TransitionMatrix::new(4, 4, 0);
        let mut m1 = TransitionMatrix::new(4, 4, 1);
        let mut m2 = TransitionMatrix::new(4, 4, 2);
        m0.accumulate(&[Some(0)], &[Some(0)], 1.0);
        m0.accumulate(&[Some(0)], &[Some(0)], 1.0);
        m1.accumulate(&[Some(0)], &[Some(0)], 1.0);
        m1.accumulate(&[Some(1)], &[Some(1)], 1.0);
        m2.accumulate(&[Some(2)], &[Some(3)], 2.0);
        let mats = vec![&m0, &m1, &m2];
        let scores = selection_scores(&mats);
        // By hand: R(0,1) = 2*1 = 2, R(0,2) = R(1,2) = 0.
        assert_eq!(scores, vec![2, 2, 0]);

        let lib = library_from_matrices(vec![m0, m1, m2]);
        let schedule = select_ensemble(&lib, 1, 2, 100).unwrap();
        assert_eq!(schedule.selected_intervals(), vec![2]);
    }

    #[test]
    fn selecting_all_candidates_ignores_scores() {
        let mut mats = Vec::new();
        let mut rng = StreamSeeder::new(4).stream("m");
        for i in 0..5 {
            let mut m = TransitionMatrix::new(3, 4, i);
            let flat: Vec<u64> = (0..36).map(|_| rng.gen_range(0..9)).collect();
            m.set_flat(&flat);
            mats.push(m);
        }
        let lib = library_from_matrices(mats);
        let schedule = select_ensemble(&lib, 5, 4, 100).unwrap();
        assert_eq!(schedule.selected_intervals(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn identical_matrices_tie_break_earliest() {
        let mut mats = Vec::new();
        for i in 0..6 {
            let mut m = TransitionMatrix::new(3, 4, i);
            m.accumulate(&[Some(0)], &[Some(1)], 1.0);
            mats.push(m);
        }
        let lib = library_from_matrices(mats);
        let schedule = select_ensemble(&lib, 3, 5, 100).unwrap();
        assert_eq!(schedule.selected_intervals(), vec![0, 1, 2]);
    }

    #[test]
    fn selection_invariant_under_uniform_scaling() {
        let mut rng = StreamSeeder::new(5).stream("m");
        let mats: Vec<TransitionMatrix> = (0..8).map(|i| random_matrix(&mut rng, i)).collect();
        let scaled: Vec<TransitionMatrix> = mats
            .iter()
            .map(|m| {
                let mut s = m.clone();
                let flat: Vec<u64> = m.flat().iter().map(|x| x * 3).collect();
                s.set_flat(&flat);
                s
            })
            .collect();
        let a = select_ensemble(&library_from_matrices(mats), 3, 7, 90).unwrap();
        let b = select_ensemble(&library_from_matrices(scaled), 3, 7, 90).unwrap();
        assert_eq!(a.selected_intervals(), b.selected_intervals());
    }

    #[test]
    fn insufficient_candidates_is_an_error() {
        let mut m0 = TransitionMatrix::new(4, 4, 0);
        m0.accumulate(&[Some(0)], &[Some(0)], 1.0);
        let lib = library_from_matrices(vec![m0]);
        assert!(select_ensemble(&lib, 2, 0, 100).is_err());
    }

    #[test]
    fn reload_cycles_in_order() {
        // Full-scale numbers: 8 models, reload period 720000 -> dwell 90000.
        let mats: Vec<TransitionMatrix> = (0..8).map(|i| TransitionMatrix::new(4, 16, i)).collect();
        let lib = library_from_matrices(mats);
        let schedule = select_ensemble(&lib, 8, 7, 720_000).unwrap();
        assert_eq!(schedule.dwell(), 90_000);
        let mut loads = Vec::new();
        for i in 0..16u64 {
            let offset = i * 90_000;
            assert!(schedule.reload_at(offset).is_some());
            loads.push((offset / 90_000) as usize % 8);
        }
        assert_eq!(loads, (0..8).chain(0..8).collect::<Vec<_>>());
        assert!(schedule.reload_at(1).is_none());
        assert!(schedule.reload_at(89_999).is_none());
        assert!(schedule.reload_at(0).is_some());
    }

    #[test]
    fn collapse_detection_cases() {
        let w = 100;
        // All silent: fires.
        let silent = vec![2u32; w];
        let healthy_rates = vec![8.5; w];
        assert!(detect_collapse(&silent, &healthy_rates, 2, w, 0.5, 1.0));
        // Healthy: does not fire.
        let active = vec![0u32; w];
        assert!(!detect_collapse(&active, &healthy_rates, 2, w, 0.5, 1.0));
        // 51% no-transmission: fires at threshold 0.5.
        let mut mixed = vec![0u32; w];
        for c in mixed.iter_mut().take(51) {
            *c = 2;
        }
        assert!(detect_collapse(&mixed, &healthy_rates, 2, w, 0.5, 1.0));
        let mut under = vec![0u32; w];
        for c in under.iter_mut().take(50) {
            *c = 2;
        }
        assert!(!detect_collapse(&under, &healthy_rates, 2, w, 0.5, 1.0));
        // Rate floor alone fires.
        let starving = vec![0.5; w];
        assert!(detect_collapse(&active, &starving, 2, w, 0.5, 1.0));
    }
}
