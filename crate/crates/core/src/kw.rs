//! Kiefer–Wolfowitz recursion and continuous-time FCFS replay for GI/GI/c.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sorted (ascending) vector of `c` virtual workloads seen by an arrival.
/// The first entry is the arrival's waiting time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KwVector(Vec<f64>);

impl KwVector {
    pub fn zeros(c: usize) -> Self {
        Self(vec![0.0; c])
    }

    /// Sorts and clamps at zero.
    pub fn from_unsorted(mut v: Vec<f64>) -> Self {
        for x in &mut v {
            *x = x.max(0.0);
        }
        v.sort_by(f64::total_cmp);
        Self(v)
    }

    pub fn servers(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn waiting_time(&self) -> f64 {
        self.0[0]
    }

    /// Entrywise `self >= other` up to `tol`.
    pub fn dominates(&self, other: &Self, tol: f64) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| *a >= b - tol)
    }

    /// Coalescence test: `|a - b| <= 1e-9 (1 + max(|a|, |b|))` entrywise.
    pub fn coalesced_with(&self, other: &Self) -> bool {
        self.0
            .iter()
            .zip(&other.0)
            .all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs())))
    }

    /// One Kiefer–Wolfowitz step: `sort((w + v e - a 1)^+)` where `e` adds
    /// the service to the smallest workload.
    pub fn step(&self, service: f64, interarrival: f64) -> Self {
        let mut next = self.0.clone();
        next[0] += service;
        for x in &mut next {
            *x = (*x - interarrival).max(0.0);
        }
        next.sort_by(f64::total_cmp);
        Self(next)
    }
}

pub fn kw_step(w: &KwVector, service: f64, interarrival: f64) -> KwVector {
    w.step(service, interarrival)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub time: f64,
    pub service: f64,
}

/// Arrivals `(T_n, V_n)` in increasing time order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrafficTrace {
    pub arrivals: Vec<Arrival>,
}

impl TrafficTrace {
    pub fn new(arrivals: Vec<Arrival>) -> Result<Self> {
        for w in arrivals.windows(2) {
            if !(w[1].time > w[0].time) {
                return Err(Error::Tie { time: w[1].time });
            }
        }
        Ok(Self { arrivals })
    }

    pub fn len(&self) -> usize {
        self.arrivals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrivals.is_empty()
    }

    pub fn interarrival(&self, n: usize) -> f64 {
        self.arrivals[n + 1].time - self.arrivals[n].time
    }
}

/// `W_from(T_m; w0)` for `from <= m <= to`.
pub fn kw_run(trace: &TrafficTrace, w0: &KwVector, from: usize, to: usize) -> Vec<KwVector> {
    let mut out = Vec::with_capacity(to + 1 - from);
    out.push(w0.clone());
    for m in from..to {
        let next = out
            .last()
            .expect("nonempty")
            .step(trace.arrivals[m].service, trace.interarrival(m));
        out.push(next);
    }
    out
}

/// Continuous-time state `(Q, R, E)`: waiting count, sorted residual
/// services (zeros for idle servers), and time since the last arrival.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    pub q: usize,
    pub r: Vec<f64>,
    pub e: f64,
}

impl QueueState {
    pub fn empty(c: usize, e: f64) -> Self {
        Self {
            q: 0,
            r: vec![0.0; c],
            e,
        }
    }

    pub fn busy_servers(&self) -> usize {
        self.r.iter().filter(|&&x| x > 0.0).count()
    }

    pub fn number_in_system(&self) -> usize {
        self.q + self.busy_servers()
    }

    pub fn validate(&self) -> Result<()> {
        if self.r.windows(2).any(|w| w[1] < w[0]) || self.r.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Domain(
                "residuals must be sorted and nonnegative".into(),
            ));
        }
        if self.q > 0 && self.r.iter().any(|&x| x <= 0.0) {
            return Err(Error::Domain(
                "waiting customers with an idle server".into(),
            ));
        }
        Ok(())
    }
}

/// Everything observed while replaying a trace.
#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub state: QueueState,
    /// `(trace index, waiting time)` for every fed arrival.
    pub waits: Vec<(usize, f64)>,
    /// `(time, Q after the event)` for every arrival and departure.
    pub queue_path: Vec<(f64, usize)>,
}

/// FCFS GI/GI/c replay from `start` to `end`.
///
/// `z0` is the state just before `start`; `backlog` holds the service times
/// of its `z0.q` waiting customers, head first. Arrivals with
/// `start <= time <= end` are fed.
pub fn replay_detailed(
    trace: &TrafficTrace,
    z0: &QueueState,
    backlog: &[f64],
    start: f64,
    end: f64,
) -> Result<ReplayOutcome> {
    z0.validate()?;
    if backlog.len() != z0.q {
        return Err(Error::Domain(format!(
            "backlog has {} services for {} waiting customers",
            backlog.len(),
            z0.q
        )));
    }
    // Absolute completion times, one per server.
    let mut done: Vec<f64> = z0.r.iter().map(|r| start + r).collect();
    let mut queue: VecDeque<(Option<usize>, f64, f64)> =
        backlog.iter().map(|&v| (None, start, v)).collect();
    let mut last_arrival = start - z0.e;
    let mut waits = Vec::new();
    let mut queue_path = Vec::new();
    let first = trace.arrivals.partition_point(|a| a.time < start);
    let mut next = first;
    let mut now = start;

    loop {
        let arrival_t = trace
            .arrivals
            .get(next)
            .map(|a| a.time)
            .filter(|&t| t <= end)
            .unwrap_or(f64::INFINITY);
        // Departures only matter while someone is waiting.
        let (srv, dep_t) = if queue.is_empty() {
            (usize::MAX, f64::INFINITY)
        } else {
            done.iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, &d)| (i, d.max(now)))
                .unwrap()
        };
        let dep_t = if dep_t <= end { dep_t } else { f64::INFINITY };
        if arrival_t.is_infinite() && dep_t.is_infinite() {
            break;
        }
        if arrival_t == dep_t {
            return Err(Error::Tie { time: arrival_t });
        }
        if arrival_t < dep_t {
            now = arrival_t;
            let a = trace.arrivals[next];
            last_arrival = now;
            // Joins an empty queue with a free server: starts at once.
            let (i, free) = done
                .iter()
                .enumerate()
                .min_by(|x, y| x.1.total_cmp(y.1))
                .map(|(i, &d)| (i, d))
                .unwrap();
            if queue.is_empty() && free <= now {
                done[i] = now + a.service;
                waits.push((next, 0.0));
            } else {
                queue.push_back((Some(next), now, a.service));
            }
            next += 1;
        } else {
            now = dep_t;
            let (idx, arrived, v) = queue.pop_front().expect("queue nonempty");
            done[srv] = now + v;
            if let Some(idx) = idx {
                waits.push((idx, now - arrived));
            }
        }
        queue_path.push((now, queue.len()));
    }

    let mut r: Vec<f64> = done.iter().map(|d| (d - end).max(0.0)).collect();
    r.sort_by(f64::total_cmp);
    Ok(ReplayOutcome {
        state: QueueState {
            q: queue.len(),
            r,
            e: end - last_arrival,
        },
        waits,
        queue_path,
    })
}

pub fn replay(
    trace: &TrafficTrace,
    z0: &QueueState,
    backlog: &[f64],
    start: f64,
    end: f64,
) -> Result<QueueState> {
    replay_detailed(trace, z0, backlog, start, end).map(|o| o.state)
}

/// Value of a right-continuous step path `(time, value)` at `t`.
pub fn path_value_at(path: &[(f64, usize)], initial: usize, t: f64) -> usize {
    let k = path.partition_point(|(s, _)| *s <= t);
    if k == 0 {
        initial
    } else {
        path[k - 1].1
    }
}

/// Replays `traces` random GI/GI/c traces and checks that every replayed
/// waiting time equals the first Kiefer–Wolfowitz coordinate within 1e-9.
pub fn selfcheck(seed: u64, traces: u64) -> Result<bool> {
    use rand::Rng;
    use rand_distr::{Distribution, Exp1};

    for r in 0..traces {
        let mut rng = crate::rng::derive(seed, r, crate::rng::INIT_STREAM);
        let c = rng.random_range(1..=4usize);
        let load = rng.random_range(0.5..1.2) * c as f64;
        let mut t = 0.0;
        let arrivals: Vec<Arrival> = (0..60)
            .map(|_| {
                let gap: f64 = Exp1.sample(&mut rng);
                let service: f64 = Exp1.sample(&mut rng);
                t += gap;
                Arrival {
                    time: t,
                    service: service * load,
                }
            })
            .collect();
        let trace = TrafficTrace::new(arrivals)?;
        let kw = kw_run(&trace, &KwVector::zeros(c), 0, trace.len() - 1);
        let start = trace.arrivals[0].time;
        let drain = t + trace.arrivals.iter().map(|a| a.service).sum::<f64>();
        let out = replay_detailed(&trace, &QueueState::empty(c, 0.0), &[], start, drain)?;
        if out.waits.len() != trace.len() {
            return Ok(false);
        }
        for &(n, w) in &out.waits {
            let k = kw[n].waiting_time();
            if (w - k).abs() > 1e-9 * (1.0 + k.abs()) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive;
    use proptest::prelude::*;
    use rand::Rng;

    fn kw(v: &[f64]) -> KwVector {
        KwVector::from_unsorted(v.to_vec())
    }

    #[test]
    fn kw_step_examples() {
        assert_eq!(kw_step(&kw(&[0.0, 0.0]), 5.0, 1.0), kw(&[0.0, 4.0]));
        // Service joins the least-loaded server: (1+3, 2) - 2 = (2, 0).
        assert_eq!(kw_step(&kw(&[1.0, 2.0]), 3.0, 2.0), kw(&[0.0, 2.0]));
        assert_eq!(kw_step(&kw(&[0.0]), 1.0, 2.0), kw(&[0.0]));
    }

    #[test]
    fn kw_run_single_arrival_is_initial() {
        let trace = TrafficTrace::new(vec![Arrival {
            time: 0.0,
            service: 1.0,
        }])
        .unwrap();
        let w0 = kw(&[0.5, 2.0]);
        assert_eq!(kw_run(&trace, &w0, 0, 0), vec![w0]);
    }

    #[test]
    fn replay_empty_trace() {
        let trace = TrafficTrace::default();
        let z = replay(&trace, &QueueState::empty(2, 0.7), &[], 1.0, 4.0).unwrap();
        assert_eq!(z, QueueState::empty(2, 3.7));
    }

    #[test]
    fn replay_hand_case_single_server() {
        let trace = TrafficTrace::new(vec![
            Arrival {
                time: 0.0,
                service: 3.0,
            },
            Arrival {
                time: 1.0,
                service: 1.0,
            },
        ])
        .unwrap();
        let out = replay_detailed(&trace, &QueueState::empty(1, 0.0), &[], 0.0, 4.0).unwrap();
        assert_eq!(out.waits, vec![(0, 0.0), (1, 2.0)]);
        assert_eq!(
            out.state,
            QueueState {
                q: 0,
                r: vec![0.0],
                e: 3.0
            }
        );
        let mid = replay(&trace, &QueueState::empty(1, 0.0), &[], 0.0, 3.5).unwrap();
        assert_eq!(
            mid,
            QueueState {
                q: 0,
                r: vec![0.5],
                e: 2.5
            }
        );

        let longer = TrafficTrace::new(vec![
            Arrival {
                time: 0.0,
                service: 3.0,
            },
            Arrival {
                time: 1.0,
                service: 2.0,
            },
        ])
        .unwrap();
        let z = replay(&longer, &QueueState::empty(1, 0.0), &[], 0.0, 4.0).unwrap();
        assert_eq!(
            z,
            QueueState {
                q: 0,
                r: vec![1.0],
                e: 3.0
            }
        );
    }

    #[test]
    fn replay_with_backlog() {
        // Two busy servers, one waiting customer with service 2.
        let z0 = QueueState {
            q: 1,
            r: vec![1.0, 3.0],
            e: 0.0,
        };
        let trace = TrafficTrace::new(vec![Arrival {
            time: 0.5,
            service: 1.0,
        }])
        .unwrap();
        let out = replay_detailed(&trace, &z0, &[2.0], 0.0, 10.0).unwrap();
        // Backlog starts at 1 on the first server (done at 3); the arrival
        // waits for the second server at 3, tie broken by index order.
        assert_eq!(out.waits, vec![(0, 2.5)]);
    }

    #[test]
    fn replay_detects_ties() {
        let z0 = QueueState {
            q: 1,
            r: vec![1.0],
            e: 0.0,
        };
        let trace = TrafficTrace::new(vec![Arrival {
            time: 1.0,
            service: 1.0,
        }])
        .unwrap();
        assert!(matches!(
            replay(&trace, &z0, &[1.0], 0.0, 5.0),
            Err(Error::Tie { .. })
        ));
    }

    fn random_trace(seed: u64, n: usize, c: usize) -> TrafficTrace {
        let mut rng = derive(seed, 0, 0);
        let mut t = 0.0;
        let arrivals = (0..n)
            .map(|_| {
                t += -(1.0 - rng.random::<f64>()).ln() / (0.9 * c as f64);
                Arrival {
                    time: t,
                    service: -(1.0 - rng.random::<f64>()).ln(),
                }
            })
            .collect();
        TrafficTrace::new(arrivals).unwrap()
    }

    #[test]
    fn replay_waits_equal_kw_first_entry() {
        for seed in 0..1000u64 {
            let c = 1 + (seed % 4) as usize;
            let trace = random_trace(seed, 60, c);
            let ws = kw_run(&trace, &KwVector::zeros(c), 0, trace.len() - 1);
            let start = trace.arrivals[0].time;
            let out = replay_detailed(
                &trace,
                &QueueState::empty(c, 0.0),
                &[],
                start,
                f64::INFINITY,
            )
            .unwrap();
            assert_eq!(out.waits.len(), trace.len());
            let mut waits = out.waits.clone();
            waits.sort_by_key(|w| w.0);
            for (n, wait) in waits {
                assert!(
                    (wait - ws[n].waiting_time()).abs() <= 1e-9,
                    "seed {seed} n {n}"
                );
            }
        }
    }

    fn arb_kw(c: usize) -> impl Strategy<Value = KwVector> {
        prop::collection::vec(0.0f64..5.0, c).prop_map(KwVector::from_unsorted)
    }

    proptest! {
        #[test]
        fn kw_monotone_in_initial_condition(
            seed in 0u64..10_000,
            low in arb_kw(3),
            bump in prop::collection::vec(0.0f64..3.0, 3),
        ) {
            let high = KwVector::from_unsorted(
                low.as_slice().iter().zip(&bump).map(|(a, b)| a + b).collect(),
            );
            prop_assume!(high.dominates(&low, 0.0));
            let trace = random_trace(seed, 40, 3);
            let lo = kw_run(&trace, &low, 0, 39);
            let hi = kw_run(&trace, &high, 0, 39);
            for (a, b) in hi.iter().zip(&lo) {
                prop_assert!(a.dominates(b, 1e-12));
            }
        }

        #[test]
        fn earlier_empty_start_dominates(seed in 0u64..10_000, later in 1usize..30) {
            let trace = random_trace(seed, 40, 2);
            let early = kw_run(&trace, &KwVector::zeros(2), 0, 39);
            let late = kw_run(&trace, &KwVector::zeros(2), later, 39);
            for (m, w) in late.iter().enumerate() {
                prop_assert!(early[later + m].dominates(w, 1e-12));
            }
        }

        #[test]
        fn coalescence_is_absorbing(seed in 0u64..10_000) {
            let trace = random_trace(seed, 200, 2);
            let hi = kw_run(&trace, &KwVector::from_unsorted(vec![4.0, 9.0]), 0, 199);
            let lo = kw_run(&trace, &KwVector::zeros(2), 0, 199);
            if let Some(n) = (0..200).find(|&n| hi[n].coalesced_with(&lo[n])) {
                for m in n..200 {
                    prop_assert!(hi[m].coalesced_with(&lo[m]));
                }
            }
        }
    }
}
