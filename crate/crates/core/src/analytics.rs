//! Closed-form M/M/c references and the experiment harnesses built on them.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::dists::DistributionSpec;
use crate::driver::{sample_stationary, DcftpConfig, StationarySample};
use crate::error::{Error, Result};
use crate::par::run_replications;
use crate::rng::{derive, SimRng, INIT_STREAM, TRAFFIC_STREAM};
use crate::stats::{chi_square_gof, ChiSquareResult, MeanCi};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmcParams {
    pub lambda: f64,
    pub mu: f64,
    pub servers: u32,
}

impl MmcParams {
    pub fn new(lambda: f64, mu: f64, servers: u32) -> Result<Self> {
        if !(lambda > 0.0 && mu > 0.0 && lambda.is_finite() && mu.is_finite()) || servers == 0 {
            return Err(Error::Config(format!(
                "M/M/c needs positive rates and servers (lambda = {lambda}, mu = {mu}, c = {servers})"
            )));
        }
        let p = Self {
            lambda,
            mu,
            servers,
        };
        if p.rho() >= 1.0 {
            return Err(Error::Unstable { rho: p.rho() });
        }
        Ok(p)
    }

    pub fn rho(&self) -> f64 {
        self.lambda / (self.servers as f64 * self.mu)
    }

    pub fn config(&self) -> DcftpConfig {
        DcftpConfig::new(
            DistributionSpec::exponential(self.lambda),
            DistributionSpec::exponential(self.mu),
            self.servers,
        )
    }
}

/// A pmf on `0, 1, ...` given explicitly up to `head.len() - 1` and
/// geometric with ratio `ratio` from there on.
#[derive(Debug, Clone, PartialEq)]
pub struct QueuePmf {
    head: Vec<f64>,
    ratio: f64,
}

impl QueuePmf {
    pub fn prob(&self, n: usize) -> f64 {
        let last = self.head.len() - 1;
        if n <= last {
            self.head[n]
        } else {
            self.head[last] * self.ratio.powi((n - last) as i32)
        }
    }

    /// `P(N >= n)`.
    pub fn tail(&self, n: usize) -> f64 {
        let last = self.head.len() - 1;
        if n >= last {
            self.prob(n) / (1.0 - self.ratio)
        } else {
            self.head[n..].iter().sum::<f64>() + self.head[last] * self.ratio / (1.0 - self.ratio)
        }
    }

    pub fn mean(&self) -> f64 {
        let last = self.head.len() - 1;
        let r = self.ratio;
        let body: f64 = self.head[..last]
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum();
        // sum_{n >= last} n p_last r^(n - last)
        body + self.head[last] * (last as f64 / (1.0 - r) + r / ((1.0 - r) * (1.0 - r)))
    }

    /// `[p_0, ..., p_{n_max}, P(N > n_max)]`.
    pub fn bins(&self, n_max: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..=n_max).map(|n| self.prob(n)).collect();
        v.push(self.tail(n_max + 1));
        v
    }
}

/// Stationary number in system of M/M/c.
pub fn erlang_c_law(params: &MmcParams) -> QueuePmf {
    let c = params.servers as usize;
    let offered = params.lambda / params.mu;
    let mut log_terms = Vec::with_capacity(c + 1);
    let mut acc = 0.0;
    for n in 0..=c {
        if n > 0 {
            acc += offered.ln() - (n as f64).ln();
        }
        log_terms.push(acc);
    }
    let top = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut head: Vec<f64> = log_terms.iter().map(|l| (l - top).exp()).collect();
    let rho = params.rho();
    let total: f64 = head[..c].iter().sum::<f64>() + head[c] / (1.0 - rho);
    for p in &mut head {
        *p /= total;
    }
    QueuePmf { head, ratio: rho }
}

/// `[p_0, ..., p_{n_max}, P(N > n_max)]` for the M/M/c number in system.
pub fn erlang_c_pmf(params: &MmcParams, n_max: usize) -> Vec<f64> {
    erlang_c_law(params).bins(n_max)
}

/// Waiting count of the M/M/c vacation system: an M/M/1 with service rate `c mu`.
pub fn vacation_mmc_qlen_pmf(params: &MmcParams) -> QueuePmf {
    let rho = params.rho();
    QueuePmf {
        head: vec![1.0 - rho],
        ratio: rho,
    }
}

/// Histogram of sampled number-in-system against the M/M/c law.
#[derive(Debug, Clone, Serialize)]
pub struct MmcValidation {
    pub params: MmcParams,
    pub reps: u64,
    /// Counts for `0..=n_max` then `> n_max`.
    pub observed: Vec<u64>,
    pub expected: Vec<f64>,
    pub gof: ChiSquareResult,
}

/// Highest explicit bin of the number-in-system histogram.
pub const MMC_BINS: usize = 15;

pub fn validate_mmc(
    params: &MmcParams,
    seed: u64,
    reps: u64,
    threads: usize,
) -> Result<MmcValidation> {
    let config = params.config().with_seed(seed);
    let samples = run_replications(reps, threads, |r| sample_stationary(&config, r));
    let samples: Vec<StationarySample> = samples.into_iter().collect::<Result<_>>()?;
    Ok(histogram_gof(params, &samples))
}

pub fn histogram_gof(params: &MmcParams, samples: &[StationarySample]) -> MmcValidation {
    let mut observed = vec![0u64; MMC_BINS + 2];
    for s in samples {
        observed[s.number_in_system().min(MMC_BINS + 1)] += 1;
    }
    let probs = erlang_c_pmf(params, MMC_BINS);
    let gof = chi_square_gof(&observed, &probs, 5.0);
    let n = samples.len() as f64;
    MmcValidation {
        params: *params,
        reps: samples.len() as u64,
        observed,
        expected: probs.iter().map(|p| p * n).collect(),
        gof,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `c = 1.2 s`.
    Qd,
    /// `c = s + 2 sqrt(s)`.
    Qed,
}

impl Regime {
    /// M/M/c parameters at scale `s` (`lambda = s`, `mu = 1`).
    pub fn params(self, s: u32) -> Result<MmcParams> {
        let s_f = s as f64;
        let servers = match self {
            Regime::Qd => (1.2 * s_f).round(),
            Regime::Qed => (s_f + 2.0 * s_f.sqrt()).round(),
        };
        MmcParams::new(s_f, 1.0, servers as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoalescenceRow {
    pub regime: Regime,
    pub scale: u32,
    pub lambda: f64,
    pub servers: u32,
    pub mu: f64,
    pub reps: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Sorted workloads of the upper bound at time 0: every server busy with
/// an `Exp(mu)` residual, plus a geometric number of queued customers.
pub fn upper_initial_workload(params: &MmcParams, rng: &mut SimRng) -> Vec<f64> {
    let service = Exp::new(params.mu).expect("positive rate");
    let rho = params.rho();
    let mut w: Vec<f64> = (0..params.servers).map(|_| service.sample(rng)).collect();
    w.sort_by(f64::total_cmp);
    while rng.random::<f64>() < rho {
        w[0] += service.sample(rng);
        w.sort_by(f64::total_cmp);
    }
    w
}

fn differ(a: f64, b: f64) -> bool {
    (a - b).abs() > 1e-9 * (1.0 + a.abs().max(b.abs()))
}

/// First time two FCFS M/M/c queues, started from the given sorted
/// workload vectors and fed the same arrivals and service requirements,
/// hold identical workload vectors.
pub fn forward_coalescence_time(
    params: &MmcParams,
    mut upper: Vec<f64>,
    mut lower: Vec<f64>,
    rng: &mut SimRng,
) -> f64 {
    let gap = Exp::new(params.lambda).expect("positive rate");
    let service = Exp::new(params.mu).expect("positive rate");
    let mut now = 0.0;
    loop {
        // Both vectors drain at unit rate; they agree as soon as every
        // differing coordinate has emptied.
        let meet = upper
            .iter()
            .zip(&lower)
            .filter(|(u, l)| differ(**u, **l))
            .map(|(u, l)| u.max(*l))
            .fold(0.0, f64::max);
        let a = gap.sample(rng);
        if meet <= a {
            return now + meet;
        }
        now += a;
        let v = service.sample(rng);
        for w in [&mut upper, &mut lower] {
            for x in w.iter_mut() {
                *x = (*x - a).max(0.0);
            }
            w.sort_by(f64::total_cmp);
            w[0] += v;
            w.sort_by(f64::total_cmp);
        }
    }
}

/// One replication of the forward-coupled bounding experiment.
pub fn forward_coalescence_rep(params: &MmcParams, seed: u64, replication: u64) -> f64 {
    let mut init = derive(seed, replication, INIT_STREAM);
    let upper = upper_initial_workload(params, &mut init);
    let mut traffic = derive(seed, replication, TRAFFIC_STREAM);
    forward_coalescence_time(
        params,
        upper,
        vec![0.0; params.servers as usize],
        &mut traffic,
    )
}

pub fn coalescence_study(
    regime: Regime,
    scales: &[u32],
    reps: u64,
    seed: u64,
    threads: usize,
) -> Result<Vec<CoalescenceRow>> {
    scales
        .iter()
        .map(|&s| {
            let params = regime.params(s)?;
            let t = run_replications(reps, threads, |r| forward_coalescence_rep(&params, seed, r));
            let ci = MeanCi::from_sample(&t);
            Ok(CoalescenceRow {
                regime,
                scale: s,
                lambda: params.lambda,
                servers: params.servers,
                mu: params.mu,
                reps: t.len(),
                mean: ci.mean,
                std_dev: ci.std_dev,
                ci_lo: ci.lo,
                ci_hi: ci.hi,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityRow {
    pub lambda: f64,
    pub mu: f64,
    pub servers: u32,
    pub rho: f64,
    pub reps: usize,
    /// Materialized epochs over all streams, both directions.
    pub mean_renewals: f64,
    /// Tilted or rejected walk steps, not materialized.
    pub mean_proposal_steps: f64,
    pub mean_coalescence_time: f64,
    /// Horizon `t0 2^k` at which coalescence was detected.
    pub mean_horizon: f64,
    pub scaled_renewals: f64,
}

pub fn complexity_study(
    lambdas: &[f64],
    mu: f64,
    servers: u32,
    reps: u64,
    seed: u64,
    threads: usize,
) -> Result<Vec<ComplexityRow>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let params = MmcParams::new(lambda, mu, servers)?;
            let config = params.config().with_seed(seed);
            let samples: Vec<StationarySample> =
                run_replications(reps, threads, |r| sample_stationary(&config, r))
                    .into_iter()
                    .collect::<Result<_>>()?;
            let n = samples.len() as f64;
            let avg = |f: &dyn Fn(&StationarySample) -> f64| samples.iter().map(f).sum::<f64>() / n;
            let mean_renewals = avg(&|s| s.total_renewals() as f64);
            let rho = params.rho();
            Ok(ComplexityRow {
                lambda,
                mu,
                servers,
                rho,
                reps: samples.len(),
                mean_renewals,
                mean_proposal_steps: avg(&|s| s.proposal_steps as f64),
                mean_coalescence_time: avg(&|s| s.coalescence_time),
                mean_horizon: avg(&|s| s.horizon),
                scaled_renewals: mean_renewals * (1.0 - rho) * (1.0 - rho),
            })
        })
        .collect()
}
