//! File emission: run manifests, trace and histogram CSVs, transition
//! matrices and correlation tables. All writes go through a temp file and a
//! rename so partially written outputs never appear under the final name.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::ScenarioConfig;
use crate::ensemble::{correlation, TransitionMatrix};
use crate::error::{Error, Result};
use crate::experiment::{moving_average, Histogram, MetricsTrace, PhasePlan};

/// Writes `bytes` to `path` atomically (temp file in the same directory,
/// then rename).
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// The run manifest: derived phase boundaries as comments, then the complete
/// configuration in parseable `key = value` form. Re-running the same
/// subcommand with the manifest as the config file reproduces the run.
pub fn render_manifest(cfg: &ScenarioConfig, plan: &PhasePlan, stopped_at: u64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# specjam run manifest");
    let _ = writeln!(s, "# scenario = {}", plan.kind.name());
    let _ = writeln!(s, "# train_end = {}", plan.train_end);
    if let Some(a) = plan.attack_start {
        let _ = writeln!(s, "# attack_start = {a}");
    }
    if let Some(a) = plan.attacker_sched_end {
        let _ = writeln!(s, "# attacker_schedule_end = {a}");
    }
    if let Some(r) = plan.retrain_start {
        let _ = writeln!(s, "# retrain_start = {r}");
    }
    if let Some(r) = plan.retrain_end {
        let _ = writeln!(s, "# retrain_end = {r}");
    }
    let _ = writeln!(s, "# planned_end = {}", plan.run_end);
    let _ = writeln!(s, "# stopped_at = {stopped_at}");
    let _ = writeln!(s, "# metrics_from = {}", plan.metrics_from);
    s.push_str(&cfg.to_text());
    s
}

pub fn write_manifest(
    path: &Path,
    cfg: &ScenarioConfig,
    plan: &PhasePlan,
    stopped_at: u64,
) -> Result<()> {
    atomic_write(path, render_manifest(cfg, plan, stopped_at).as_bytes())
}

/// Trace CSV: one row per slot with the moving-average column computed at
/// emission time.
pub fn emit_trace(path: &Path, trace: &MetricsTrace, moving_avg_window: usize) -> Result<()> {
    let avg = moving_average(&trace.sum_rate, moving_avg_window);
    let mut out = String::with_capacity(trace.len() * 48 + 128);
    out.push_str("slot,sum_rate,moving_avg");
    for k in 0..trace.num_victims {
        let _ = write!(out, ",victim_{k}_channel,victim_{k}_power");
    }
    out.push_str(",attacker_channels,attacker_mode\n");
    for t in 0..trace.len() as u64 {
        let _ = write!(out, "{t},{},{}", trace.sum_rate[t as usize], avg[t as usize]);
        for k in 0..trace.num_victims {
            match trace.victim_channel_at(t, k) {
                Some(c) => {
                    let _ = write!(out, ",{c},{}", trace.victim_power_at(t, k));
                }
                None => out.push_str(",,0"),
            }
        }
        out.push(',');
        let jams = trace.jam_channels_at(t);
        for (i, c) in jams.iter().enumerate() {
            if i > 0 {
                out.push('|');
            }
            let _ = write!(out, "{c}");
        }
        let _ = writeln!(out, ",{}", trace.attacker_mode[t as usize].label());
    }
    atomic_write(path, out.as_bytes())
}

/// Histogram CSV: bin_lower, pdf (per-bin probability mass), cdf.
pub fn emit_histogram(path: &Path, hist: &Histogram) -> Result<()> {
    let mut out = String::from("bin_lower,pdf,cdf\n");
    for i in 0..hist.mass.len() {
        let _ = writeln!(out, "{},{},{}", hist.bin_lower(i), hist.mass[i], hist.cdf[i]);
    }
    atomic_write(path, out.as_bytes())
}

fn matrix_header(num_channels: usize, reward_bins: usize) -> String {
    let mut header = String::from("interval");
    for a1 in 0..num_channels {
        for a2 in 0..num_channels {
            for r in 0..reward_bins {
                let _ = write!(header, ",c{a1}_c{a2}_r{r}");
            }
        }
    }
    header
}

/// Transition matrices, one row per interval, counts flattened in
/// (previous channel, current channel, reward bin) order.
pub fn emit_matrices(path: &Path, matrices: &[&TransitionMatrix]) -> Result<()> {
    let mut out = String::new();
    if let Some(first) = matrices.first() {
        out.push_str(&matrix_header(first.num_channels(), first.reward_bins()));
        out.push('\n');
        for m in matrices {
            let _ = write!(out, "{}", m.interval);
            for c in m.flat() {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
    }
    atomic_write(path, out.as_bytes())
}

/// Reads a file produced by [`emit_matrices`].
pub fn load_matrices(
    path: &Path,
    num_channels: usize,
    reward_bins: usize,
) -> Result<Vec<TransitionMatrix>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let expected_cells = num_channels * num_channels * reward_bins;
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(Error::config(format!("{}: empty matrices file", path.display())));
    };
    let expected_header = matrix_header(num_channels, reward_bins);
    if header != expected_header {
        return Err(Error::config(format!(
            "{}: header does not match {num_channels} channels x {reward_bins} reward bins",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let interval: usize = fields
            .next()
            .unwrap()
            .parse()
            .map_err(|_| Error::config(format!("line {}: bad interval index", lineno + 1)))?;
        let counts: Vec<u64> = fields
            .map(|f| {
                f.parse().map_err(|_| {
                    Error::config(format!("line {}: bad count `{f}`", lineno + 1))
                })
            })
            .collect::<Result<_>>()?;
        if counts.len() != expected_cells {
            return Err(Error::config(format!(
                "line {}: expected {expected_cells} counts, found {}",
                lineno + 1,
                counts.len()
            )));
        }
        let mut m = TransitionMatrix::new(num_channels, reward_bins, interval);
        m.set_flat(&counts);
        out.push(m);
    }
    Ok(out)
}

/// Full pairwise correlation table (the per-interval curves of the defense
/// analysis): row `i` holds R(i, j) for every interval `j`.
pub fn emit_scores(path: &Path, matrices: &[&TransitionMatrix]) -> Result<()> {
    let mut out = String::from("interval");
    for m in matrices {
        let _ = write!(out, ",r_{}", m.interval);
    }
    out.push('\n');
    for a in matrices {
        let _ = write!(out, "{}", a.interval);
        for b in matrices {
            let _ = write!(out, ",{}", correlation(a, b));
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Selection summary: every candidate interval with its summed correlation
/// score and whether it made the ensemble.
pub fn emit_selection(
    path: &Path,
    scores: &[(usize, u64)],
    selected: &[usize],
) -> Result<()> {
    let mut out = String::from("interval,score,selected\n");
    for (interval, score) in scores {
        let flag = selected.contains(interval) as u8;
        let _ = writeln!(out, "{interval},{score},{flag}");
    }
    atomic_write(path, out.as_bytes())
}
