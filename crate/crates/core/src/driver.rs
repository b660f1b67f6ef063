//! Horizon doubling, coalescence detection, and reconstruction at time 0.

use serde::{Deserialize, Serialize};

use crate::dists::DistributionSpec;
use crate::error::{Error, Result};
use crate::kw::{kw_run, path_value_at, replay, replay_detailed, KwVector, QueueState};
use crate::vacation::{CouplingTrace, VacationParams, VacationSystem};

/// Arrivals fed past the detection point when auditing absorption.
pub const AUDIT_EXTRA_ARRIVALS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcftpConfig {
    pub arrival: DistributionSpec,
    pub service: DistributionSpec,
    pub servers: u32,
    /// Walk drift parameter in `(lambda, c mu)`; `None` uses the midpoint.
    #[serde(default)]
    pub a: Option<f64>,
    /// First inspection horizon; horizons are `t0 * 2^k`, `k >= 1`.
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default)]
    pub seed: u64,
    /// Also return the workload vector seen by the first arrival after 0.
    #[serde(default)]
    pub want_w1: bool,
    #[serde(default = "default_max_doublings")]
    pub max_doublings: u32,
    #[serde(default = "default_max_events")]
    pub max_events: usize,
}

fn default_t0() -> f64 {
    10.0
}

fn default_max_doublings() -> u32 {
    40
}

fn default_max_events() -> usize {
    50_000_000
}

impl DcftpConfig {
    pub fn new(arrival: DistributionSpec, service: DistributionSpec, servers: u32) -> Self {
        Self {
            arrival,
            service,
            servers,
            a: None,
            t0: default_t0(),
            seed: 0,
            want_w1: false,
            max_doublings: default_max_doublings(),
            max_events: default_max_events(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<VacationParams> {
        if !(self.t0.is_finite() && self.t0 > 0.0) {
            return Err(Error::Config(format!(
                "t0 must be positive, got {}",
                self.t0
            )));
        }
        VacationParams::new(
            self.arrival.clone(),
            self.service.clone(),
            self.servers,
            self.a,
        )
    }
}

/// One exact draw of the stationary state at time 0, with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarySample {
    pub replication: u64,
    pub z0: QueueState,
    pub w1: Option<KwVector>,
    /// Distance from time 0 back to the detected coalescence point.
    pub coalescence_time: f64,
    pub horizon_index: u32,
    pub horizon: f64,
    /// Starting arrival, counted back from 0 (`-1` is the last arrival before 0).
    pub kappa: i64,
    /// Detection arrival, counted the same way.
    pub detection: i64,
    /// Arrivals from the starting arrival to the detection arrival.
    pub coalescence_arrivals: u64,
    /// Materialized epochs per stream (0 = arrivals).
    pub renewals: Vec<u64>,
    /// Tilted or rejected walk steps that were not materialized.
    pub proposal_steps: u64,
}

impl StationarySample {
    pub fn number_in_system(&self) -> usize {
        self.z0.number_in_system()
    }

    pub fn total_renewals(&self) -> u64 {
        self.renewals.iter().sum()
    }
}

/// Per-replication invariant checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Audit {
    /// `W(.; 0) <= W(.; W_v) <= W_v` along the whole window.
    pub sandwich: bool,
    /// Lower and upper replays stay below the vacation queue, in order.
    pub queue_dominance: bool,
    /// Equality persists for every later arrival checked.
    pub absorbing: bool,
    pub absorbing_steps: usize,
    /// Replaying from the upper initial state gives the same state at 0.
    pub swap_identical: bool,
}

impl Audit {
    pub fn passed(&self) -> bool {
        self.sandwich
            && self.queue_dominance
            && self.absorbing
            && self.absorbing_steps >= AUDIT_EXTRA_ARRIVALS
            && self.swap_identical
    }
}

/// Smallest `n` where the two workload sequences agree and the detected
/// customer starts service no later than time 0.
pub fn detect_coalescence(upper: &[KwVector], lower: &[KwVector], times: &[f64]) -> Option<usize> {
    upper
        .iter()
        .zip(lower)
        .zip(times)
        .position(|((u, l), &t)| u.coalesced_with(l) && t + u.waiting_time() <= 0.0)
}

/// Draws the stationary state at time 0 for replication `replication`.
pub fn sample_stationary(config: &DcftpConfig, replication: u64) -> Result<StationarySample> {
    run(config, replication, false).map(|(s, _)| s)
}

/// Like [`sample_stationary`], with the invariant audit.
pub fn sample_audited(config: &DcftpConfig, replication: u64) -> Result<(StationarySample, Audit)> {
    run(config, replication, true).map(|(s, a)| (s, a.expect("audit requested")))
}

fn run(
    config: &DcftpConfig,
    replication: u64,
    audit: bool,
) -> Result<(StationarySample, Option<Audit>)> {
    let params = config.validate()?;
    let c = params.servers as usize;
    let mut sys =
        VacationSystem::new(params, config.seed, replication)?.with_event_cap(config.max_events);
    let extra = if audit { AUDIT_EXTRA_ARRIVALS } else { 0 };

    for k in 1..=config.max_doublings {
        let horizon = config.t0 * 2f64.powi(k as i32);
        sys.ensure_horizon(horizon)?;
        let Some(start) = sys.earliest_arrival_within(horizon) else {
            continue;
        };
        let trace = sys.extract_services(start, extra)?;
        let traffic = trace.traffic();
        let len = traffic.len();
        let upto_zero = trace.customers_upto_zero();
        let upper = kw_run(&traffic, &trace.w_v_at(0), 0, len - 1);
        let lower = kw_run(&traffic, &KwVector::zeros(c), 0, len - 1);
        let times: Vec<f64> = traffic.arrivals.iter().map(|a| a.time).collect();
        let Some(n) = detect_coalescence(
            &upper[..upto_zero],
            &lower[..upto_zero],
            &times[..upto_zero],
        ) else {
            continue;
        };

        let z0 = replay(
            &traffic,
            &QueueState::empty(c, 0.0),
            &[],
            trace.start_time,
            0.0,
        )?;
        let w1 = config.want_w1.then(|| {
            let last = upto_zero - 1;
            lower[last].step(
                traffic.arrivals[last].service,
                trace.first_arrival_after_zero - traffic.arrivals[last].time,
            )
        });
        let (renewals, proposal_steps) = sys.renewal_counts();
        let audit = if audit {
            Some(audit_window(&sys, &trace, &upper, &lower, n, &z0)?)
        } else {
            None
        };
        let sample = StationarySample {
            replication,
            z0,
            w1,
            coalescence_time: -(times[n] + upper[n].waiting_time()),
            horizon_index: k,
            horizon,
            kappa: -(upto_zero as i64),
            detection: n as i64 - upto_zero as i64,
            coalescence_arrivals: n as u64,
            renewals,
            proposal_steps,
        };
        return Ok((sample, audit));
    }
    Err(Error::ResourceCap(format!(
        "no coalescence within {} horizon doublings (t0 = {})",
        config.max_doublings, config.t0
    )))
}

fn audit_window(
    sys: &VacationSystem,
    trace: &CouplingTrace,
    upper: &[KwVector],
    lower: &[KwVector],
    n: usize,
    z0: &QueueState,
) -> Result<Audit> {
    let c = sys.servers();
    let tol = |w: &KwVector| 1e-9 * (1.0 + w.as_slice().last().copied().unwrap_or(0.0));
    let sandwich = (0..upper.len()).all(|m| {
        let wv = trace.w_v_at(m);
        upper[m].dominates(&lower[m], tol(&upper[m])) && wv.dominates(&upper[m], tol(&wv))
    });
    let absorbing = (n..upper.len()).all(|m| upper[m].coalesced_with(&lower[m]));
    let absorbing_steps = upper.len() - 1 - n;

    let traffic = trace.traffic();
    let lower_run = replay_detailed(
        &traffic,
        &QueueState::empty(c, 0.0),
        &[],
        trace.start_time,
        0.0,
    )?;
    let upper_start = QueueState {
        q: trace.phantom_count,
        r: trace.initial_residuals.clone(),
        e: 0.0,
    };
    let upper_run = replay_detailed(
        &traffic,
        &upper_start,
        &trace.phantom_services,
        trace.start_time,
        0.0,
    )?;
    let vacation_path: Vec<(f64, usize)> = trace
        .queue_path
        .iter()
        .copied()
        .filter(|(t, _)| *t <= 0.0)
        .collect();
    // The replays rebuild shared epochs by addition, so compare the paths
    // between clusters of nearly equal event times rather than at them.
    let mut times: Vec<f64> = lower_run
        .queue_path
        .iter()
        .chain(&upper_run.queue_path)
        .chain(&vacation_path)
        .map(|(t, _)| *t)
        .collect();
    times.push(0.0);
    times.sort_by(f64::total_cmp);
    let mut probes = vec![trace.start_time];
    for w in times.windows(2) {
        if w[1] - w[0] > 1e-9 * (1.0 + w[0].abs()) {
            probes.push(0.5 * (w[0] + w[1]));
        }
    }
    let queue_dominance = probes.iter().all(|&t| {
        let lo = path_value_at(&lower_run.queue_path, 0, t);
        let up = path_value_at(&upper_run.queue_path, trace.phantom_count, t);
        let vac = path_value_at(&vacation_path, trace.phantom_count, t);
        lo <= up && up <= vac
    });

    let swapped = &upper_run.state;
    let swap_identical = swapped.q == z0.q
        && swapped.e == z0.e
        && swapped
            .r
            .iter()
            .zip(&z0.r)
            .all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs())));

    Ok(Audit {
        sandwich,
        queue_dominance,
        absorbing,
        absorbing_steps,
        swap_identical,
    })
}
