//! Fixed-schema CSV output. Floats are written in the shortest form that
//! parses back to the same bits, so a rerun reproduces files byte for byte.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::trace::{IterationTrace, RunResult, RunStatus};

pub const TRACE_HEADER: &str =
    "iteration,mean_reward,best_so_far,S_t,mi_estimate,loss_action,loss_critic,model_flops,batch_max";
pub const PLOT_HEADER: &str = "iteration,S_t,best_so_far,method,seed";
pub const SUMMARY_HEADER: &str = "method,seed,status,evaluations,best_y,final_reward";

/// Round-trip exact; switches to exponent form for very small or large values.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn trace_csv(traces: &[IterationTrace]) -> String {
    let mut s = String::with_capacity(64 * (traces.len() + 1));
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for t in traces {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            t.iteration,
            fmt_f64(t.mean_reward),
            fmt_f64(t.best_so_far),
            fmt_f64(t.s_t),
            fmt_f64(t.mi_estimate),
            fmt_f64(t.loss_action),
            fmt_f64(t.loss_critic),
            t.model_flops,
            fmt_f64(t.batch_max),
        );
    }
    s
}

/// One row of a trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub mean_reward: f64,
    pub best_so_far: f64,
    pub s_t: f64,
    pub mi_estimate: f64,
    pub loss_action: f64,
    pub loss_critic: f64,
    pub model_flops: u64,
    pub batch_max: f64,
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Err(Error::Config(
            "trace file does not start with the expected header".into(),
        ));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::Config(format!("trace row {}: cannot parse {line:?}", i + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(bad());
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad());
            Ok(TraceRow {
                iteration: f[0].parse().map_err(|_| bad())?,
                mean_reward: num(1)?,
                best_so_far: num(2)?,
                s_t: num(3)?,
                mi_estimate: num(4)?,
                loss_action: num(5)?,
                loss_critic: num(6)?,
                model_flops: f[7].parse().map_err(|_| bad())?,
                batch_max: num(8)?,
            })
        })
        .collect()
}

/// Long format for external plotting, one row per (run, iteration).
pub fn plot_csv(runs: &[RunResult]) -> String {
    let mut s = String::from(PLOT_HEADER);
    s.push('\n');
    for r in runs {
        for t in &r.traces {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                t.iteration,
                fmt_f64(t.s_t),
                fmt_f64(t.best_so_far),
                r.method,
                r.seed
            );
        }
    }
    s
}

fn status_text(s: &RunStatus) -> String {
    match s {
        RunStatus::Completed => "completed".into(),
        RunStatus::BudgetExhausted { .. } => "budget_exhausted".into(),
        RunStatus::Failed(msg) => format!("failed: {}", msg.replace([',', '\n', '\r'], ";")),
    }
}

pub fn summary_csv(runs: &[RunResult], final_window: usize) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in runs {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.method,
            r.seed,
            status_text(&r.status),
            r.evaluations,
            fmt_f64(r.best_y),
            fmt_f64(r.final_reward(final_window)),
        );
    }
    s
}

/// Mean of the last `k` mean rewards of a parsed trace.
pub fn final_reward_of_rows(rows: &[TraceRow], k: usize) -> f64 {
    if rows.is_empty() {
        return f64::NAN;
    }
    let tail = &rows[rows.len().saturating_sub(k)..];
    tail.iter().map(|r| r.mean_reward).sum::<f64>() / tail.len() as f64
}
