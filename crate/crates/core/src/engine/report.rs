//! Recovery metrics, run comparison and on-disk artifacts.

use std::fmt::{self, Write as _};
use std::fs;
use std::io;
use std::path::Path;

use super::trace::TraceKind;
use super::{Mode, RunOutput};
use crate::time::SimTime;

/// Steady state is measured over this many trailing seconds.
pub const STEADY_STATE_SECS: f64 = 10.0;
/// Fraction of the pre-failure mean a window must reach to count as recovered.
pub const RECOVERY_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReportError {
    #[error("runs are not comparable: {0}")]
    MismatchedScenarios(String),
}

/// Failure-recovery figures for one flow in one run. Rates are bytes per second.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecovery {
    pub flow: String,
    pub total_bytes: u64,
    pub pre_failure_mean: Option<f64>,
    /// Seconds from the first failure to the first window back at half the pre-failure mean.
    pub recovery: Option<f64>,
    /// Seconds from the first failure to the first delivery of data sent after it.
    pub outage: Option<f64>,
    /// Bytes sent at or after the failure and delivered before the repair.
    pub outage_bytes: u64,
    pub steady_state: f64,
}

fn flow_start(out: &RunOutput, flow: &str) -> Option<SimTime> {
    let needle = format!("flow={flow}");
    out.events_of(TraceKind::FlowStart)
        .find(|e| e.detail == needle)
        .map(|e| e.time)
}

/// Computes recovery figures for `flow`, or `None` when the flow never started.
pub fn flow_recovery(out: &RunOutput, flow: &str) -> Option<FlowRecovery> {
    let start = flow_start(out, flow)?;
    let rows: Vec<_> = out.samples_of(flow).collect();
    let w = out.window.as_secs_f64();
    let total_bytes = rows.iter().map(|r| r.bytes).sum();
    let end = out.duration.as_secs_f64();
    let tail: Vec<f64> = rows
        .iter()
        .filter(|r| r.window_start.as_secs_f64() >= end - STEADY_STATE_SECS - 1e-9)
        .filter(|r| r.window_start.as_secs_f64() + w <= end + 1e-9)
        .map(|r| r.rate)
        .collect();
    let steady_state = mean(&tail).unwrap_or(0.0);
    let mut rec = FlowRecovery {
        flow: flow.to_string(),
        total_bytes,
        pre_failure_mean: None,
        recovery: None,
        outage: None,
        outage_bytes: 0,
        steady_state,
    };
    let Some(tf) = out.failure_at else {
        return Some(rec);
    };
    let tf_s = tf.as_secs_f64();
    let from = (start.as_secs_f64() + tf_s) / 2.0;
    let pre: Vec<f64> = rows
        .iter()
        .filter(|r| {
            let s = r.window_start.as_secs_f64();
            s >= from - 1e-9 && s + w <= tf_s + 1e-9
        })
        .map(|r| r.rate)
        .collect();
    rec.pre_failure_mean = mean(&pre);
    if let Some(m) = rec.pre_failure_mean {
        rec.recovery = rows
            .iter()
            .find(|r| r.window_start >= tf && r.rate >= RECOVERY_FRACTION * m && m > 0.0)
            .map(|r| r.window_start.as_secs_f64() - tf_s);
    }
    let data = || out.deliveries.iter().filter(|d| d.flow == flow && !d.ack);
    rec.outage = data()
        .filter(|d| d.sent_at >= tf)
        .map(|d| d.time)
        .min()
        .map(|t| t.as_secs_f64() - tf_s);
    let until = out.repair_at.unwrap_or(out.duration);
    rec.outage_bytes = data().filter(|d| d.sent_at >= tf && d.time < until).count() as u64
        * u64::from(out.segment_size);
    Some(rec)
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Side-by-side recovery figures for two runs of the same scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub scenario: String,
    pub left: (Mode, Vec<FlowRecovery>),
    pub right: (Mode, Vec<FlowRecovery>),
}

pub fn compare_runs(a: &RunOutput, b: &RunOutput) -> Result<Comparison, ReportError> {
    if a.fingerprint != b.fingerprint {
        return Err(ReportError::MismatchedScenarios(
            "topology or action list differs".into(),
        ));
    }
    if a.window != b.window || a.duration != b.duration {
        return Err(ReportError::MismatchedScenarios(
            "duration or sampling window differs".into(),
        ));
    }
    let figures = |o: &RunOutput| {
        o.flows
            .iter()
            .filter_map(|f| flow_recovery(o, &f.name))
            .collect::<Vec<_>>()
    };
    Ok(Comparison {
        scenario: a.scenario.clone(),
        left: (a.mode, figures(a)),
        right: (b.mode, figures(b)),
    })
}

fn opt_secs(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}s")).unwrap_or_else(|| "-".into())
}

fn opt_rate(v: Option<f64>) -> String {
    v.map(|x| format!("{:.1}kB/s", x / 1000.0))
        .unwrap_or_else(|| "-".into())
}

fn write_recovery(out: &mut String, r: &FlowRecovery) {
    let _ = writeln!(
        out,
        "  {:<8} total={}B pre-failure={} recovery={} outage={} outage-bytes={} steady={}",
        r.flow,
        r.total_bytes,
        opt_rate(r.pre_failure_mean),
        opt_secs(r.recovery),
        opt_secs(r.outage),
        r.outage_bytes,
        opt_rate(Some(r.steady_state)),
    );
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = format!("scenario {}\n", self.scenario);
        for (mode, rows) in [&self.left, &self.right] {
            let _ = writeln!(s, "{mode}:");
            for r in rows {
                write_recovery(&mut s, r);
            }
        }
        f.write_str(&s)
    }
}

/// Human-readable run summary.
pub fn summary_text(out: &RunOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "scenario {} mode {} seed {}",
        out.scenario, out.mode, out.seed
    );
    let _ = writeln!(s, "duration {} window {}", out.duration, out.window);
    if let Some(t) = out.failure_at {
        let _ = writeln!(s, "first failure at {t}");
    }
    if let Some(t) = out.repair_at {
        let _ = writeln!(s, "first repair at {t}");
    }
    let _ = writeln!(s, "flows:");
    for f in &out.flows {
        let labels: Vec<String> = f.labels.iter().map(|l| format!("{l:05x}")).collect();
        let _ = writeln!(
            s,
            "  {:<8} bytes={} data sent/delivered/dropped/in-network={}/{}/{}/{} acks={}/{}/{}/{} timeouts={} fast-retransmits={} labels={}",
            f.name,
            f.bytes,
            f.data.sent,
            f.data.delivered,
            f.data.dropped,
            f.data.in_network,
            f.acks.sent,
            f.acks.delivered,
            f.acks.dropped,
            f.acks.in_network,
            f.timeouts,
            f.fast_retransmits,
            labels.join(",")
        );
    }
    let _ = writeln!(s, "recovery:");
    for f in &out.flows {
        if let Some(r) = flow_recovery(out, &f.name) {
            write_recovery(&mut s, &r);
        }
    }
    let count = |k| out.events_of(k).count();
    let _ = writeln!(
        s,
        "control: local-failures={} route-requests={} updates={} refusals={} presumed-dead={} dv-rounds={}",
        count(TraceKind::LocalFailureDetected),
        count(TraceKind::RouteRequest),
        count(TraceKind::FlowUpdate),
        count(TraceKind::SecurityRefusal),
        count(TraceKind::RouterPresumedDead),
        count(TraceKind::DvRound),
    );
    s
}

/// Writes events.csv, throughput.csv and summary.txt into `dir`.
pub fn write_artifacts(out: &RunOutput, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("events.csv"), out.events_csv())?;
    fs::write(dir.join("throughput.csv"), out.throughput_csv())?;
    fs::write(dir.join("summary.txt"), summary_text(out))?;
    Ok(())
}

/// Artifact names written by [`write_artifacts`].
pub const ARTIFACTS: [&str; 3] = ["events.csv", "throughput.csv", "summary.txt"];
