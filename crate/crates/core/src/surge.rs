//! Discrete-event simulation of a call surge against a fixed number of
//! dispatchers.
//!
//! Calls arrive as a Poisson process and fall into a matrix cell drawn from
//! a weighted distribution. Each call reaches the queue after a processing
//! delay, which is much shorter when it takes the early-exit path. Free
//! dispatchers always take the head of the queue. The real
//! [`DispatchQueue`] does the ordering.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::queue::{
    assign_priority_at, CallId, DispatchQueue, MatrixCell, QueueLevel, SignalBands,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeParams {
    pub n_calls: usize,
    /// Mean arrivals per second.
    pub arrival_rate: f64,
    /// Relative frequency of each matrix cell, in [`MatrixCell::all`] order.
    pub cell_weights: [f64; 8],
    /// Chance that a high-concern call qualifies for early exit.
    pub early_exit_probability: f64,
    pub dispatchers: usize,
    pub handle_time_secs: f64,
    pub processing_secs: f64,
    pub early_exit_processing_secs: f64,
    pub seed: u64,
}

impl Default for SurgeParams {
    fn default() -> Self {
        Self {
            n_calls: 200,
            arrival_rate: 0.5,
            cell_weights: [0.30, 0.10, 0.08, 0.07, 0.15, 0.10, 0.10, 0.10],
            early_exit_probability: 0.5,
            dispatchers: 4,
            handle_time_secs: 90.0,
            processing_secs: 55.0,
            early_exit_processing_secs: 12.0,
            seed: 0,
        }
    }
}

/// One simulated call. Times are seconds from the start of the surge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCall {
    pub arrival: f64,
    pub cell: MatrixCell,
    pub early_exit: bool,
    /// When the call enters the queue.
    pub queued_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: QueueLevel,
    pub count: usize,
    /// Arrival to dispatcher pick-up.
    pub mean_wait: f64,
    pub p50_wait: f64,
    pub p90_wait: f64,
    pub max_wait: f64,
    /// Arrival to queue entry.
    pub mean_time_to_queue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeReport {
    pub calls: usize,
    pub dispatchers: usize,
    pub early_exit_fraction: f64,
    /// Mean arrival to queue entry for Q1 calls.
    pub mean_time_to_q1: Option<f64>,
    pub makespan: f64,
    pub levels: Vec<LevelStats>,
    /// Indices into the call stream, in pick-up order.
    pub claim_order: Vec<usize>,
    pub claim_times: Vec<f64>,
}

/// Draw a call stream from `params`.
pub fn generate_calls(params: &SurgeParams) -> Vec<SimCall> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let gaps = Exp::new(params.arrival_rate.max(f64::MIN_POSITIVE)).expect("positive rate");
    let cells: Vec<MatrixCell> = MatrixCell::all().collect();
    let pick = WeightedIndex::new(params.cell_weights)
        .expect("cell weights must be non-negative with a positive sum");
    let mut t = 0.0;
    (0..params.n_calls)
        .map(|_| {
            t += gaps.sample(&mut rng);
            let cell = cells[pick.sample(&mut rng)];
            let early_exit =
                cell.concern_high && rng.random_bool(params.early_exit_probability.clamp(0.0, 1.0));
            let delay = if early_exit {
                params.early_exit_processing_secs
            } else {
                params.processing_secs
            };
            SimCall {
                arrival: t,
                cell,
                early_exit,
                queued_at: t + delay,
            }
        })
        .collect()
}

pub fn simulate_surge(params: &SurgeParams) -> SurgeReport {
    let calls = generate_calls(params);
    simulate_stream(&calls, params.dispatchers, params.handle_time_secs)
}

fn instant(epoch: DateTime<Utc>, secs: f64) -> DateTime<Utc> {
    epoch + Duration::nanoseconds((secs * 1e9).round() as i64)
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank]
}

/// Run an explicit call stream through the queue.
pub fn simulate_stream(
    calls: &[SimCall],
    dispatchers: usize,
    handle_time_secs: f64,
) -> SurgeReport {
    let epoch = Utc.timestamp_opt(0, 0).unwrap();
    let mut order: Vec<usize> = (0..calls.len()).collect();
    order.sort_by(|&a, &b| {
        calls[a]
            .queued_at
            .total_cmp(&calls[b].queued_at)
            .then(a.cmp(&b))
    });

    let mut queue = DispatchQueue::new();
    let mut levels = vec![None; calls.len()];
    let mut free_at = vec![0.0f64; dispatchers.max(1)];
    let mut claim_order = Vec::with_capacity(calls.len());
    let mut claim_times = Vec::with_capacity(calls.len());
    let mut wait = vec![0.0; calls.len()];
    let mut next = 0;

    while claim_order.len() < calls.len() {
        let (d, free) = free_at
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one dispatcher");
        // Everything queued by the time this dispatcher is free competes for
        // it. If nothing is, the dispatcher idles until the next arrival.
        let now = if queue.is_empty() {
            free.max(calls[order[next]].queued_at)
        } else {
            free
        };
        while next < order.len() && calls[order[next]].queued_at <= now {
            let i = order[next];
            let c = &calls[i];
            let bands = SignalBands {
                confidence_high: c.cell.confidence_high,
                content_high: c.cell.content_high,
                concern_high: c.cell.concern_high,
                absent: Default::default(),
            };
            let a = assign_priority_at(&bands, c.early_exit, instant(epoch, c.queued_at));
            levels[i] = Some(a.level);
            queue
                .enqueue(CallId(i.to_string()), a)
                .expect("unique index");
            next += 1;
        }
        let entry = queue.claim_next().expect("queue has a ready call");
        let i: usize = entry.call_id.as_str().parse().expect("index id");
        claim_order.push(i);
        claim_times.push(now);
        wait[i] = now - calls[i].arrival;
        free_at[d] = now + handle_time_secs;
    }

    let mut level_stats = Vec::new();
    for level in QueueLevel::ALL {
        let idx: Vec<usize> = (0..calls.len())
            .filter(|&i| levels[i] == Some(level))
            .collect();
        if idx.is_empty() {
            continue;
        }
        let mut w: Vec<f64> = idx.iter().map(|&i| wait[i]).collect();
        w.sort_by(f64::total_cmp);
        let n = idx.len() as f64;
        level_stats.push(LevelStats {
            level,
            count: idx.len(),
            mean_wait: w.iter().sum::<f64>() / n,
            p50_wait: percentile(&w, 0.5),
            p90_wait: percentile(&w, 0.9),
            max_wait: *w.last().unwrap(),
            mean_time_to_queue: idx
                .iter()
                .map(|&i| calls[i].queued_at - calls[i].arrival)
                .sum::<f64>()
                / n,
        });
    }

    let q1: Vec<&SimCall> = (0..calls.len())
        .filter(|&i| levels[i] == Some(QueueLevel::Q1Immediate))
        .map(|i| &calls[i])
        .collect();
    SurgeReport {
        calls: calls.len(),
        dispatchers: free_at.len(),
        early_exit_fraction: if calls.is_empty() {
            0.0
        } else {
            calls.iter().filter(|c| c.early_exit).count() as f64 / calls.len() as f64
        },
        mean_time_to_q1: (!q1.is_empty())
            .then(|| q1.iter().map(|c| c.queued_at - c.arrival).sum::<f64>() / q1.len() as f64),
        makespan: claim_times.last().copied().unwrap_or(0.0),
        levels: level_stats,
        claim_order,
        claim_times,
    }
}

impl SurgeReport {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "calls: {}  dispatchers: {}  early exit: {:.1}%  time to Q1: {}\n",
            self.calls,
            self.dispatchers,
            100.0 * self.early_exit_fraction,
            self.mean_time_to_q1
                .map(|t| format!("{t:.1}s"))
                .unwrap_or_else(|| "-".into()),
        );
        out.push_str(&format!(
            "{:<14} {:>6} {:>10} {:>10} {:>10} {:>10}\n",
            "level", "count", "mean wait", "p50", "p90", "max"
        ));
        for s in &self.levels {
            out.push_str(&format!(
                "{:<14} {:>6} {:>10.1} {:>10.1} {:>10.1} {:>10.1}\n",
                s.level.label(),
                s.count,
                s.mean_wait,
                s.p50_wait,
                s.p90_wait,
                s.max_wait
            ));
        }
        out
    }
}
