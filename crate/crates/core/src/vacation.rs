//! Stationary multi-server vacation system, simulated backwards in time.
//!
//! Simulation time `u >= 0` runs backwards: an epoch at simulation time `u`
//! happens at original time `-u`. Stream 0 carries arrivals, streams
//! `1..=c` carry the activities (services or vacations) of each server.
//! Each stream is a time-stationary renewal process, so reading it
//! backwards from 0 gives an equilibrium first gap followed by iid gaps.
//!
//! With `X(u) = N0(u) - sum_i Ni(u)` the stationary waiting count is
//! `Q_v(-u) = M(u) - X(u)` where `M(u) = sup_{s >= u} X(s)`. `M` is made
//! exact by splitting `X` into `c + 1` negative-drift walks whose
//! infinite-horizon maxima come from [`crate::rwmax`].

use std::io::Write;

use serde::Serialize;

use crate::dists::DistributionSpec;
use crate::error::{Error, Result};
use crate::kw::KwVector;
use crate::rng::{derive, SimRng, FORWARD_STREAM_BASE};
use crate::rwmax::{CrossSampler, MaxWalk, WalkSpec};

/// One of the `c + 1` renewal streams, backed by its max-walk.
#[derive(Debug, Clone)]
pub struct RenewalStream {
    id: usize,
    law: DistributionSpec,
    walk: MaxWalk,
    /// Simulation-time epochs `u_1 < u_2 < ...`; `epochs.len() == walk.len()`.
    epochs: Vec<f64>,
    forward_rng: SimRng,
    /// Original-time epochs after 0.
    forward: Vec<f64>,
    /// `forward_gaps[j] = forward[j + 1] - forward[j]` as drawn.
    forward_gaps: Vec<f64>,
}

impl RenewalStream {
    fn new(
        id: usize,
        law: DistributionSpec,
        spec: WalkSpec,
        mut rng: SimRng,
        forward_rng: SimRng,
    ) -> Result<Self> {
        let first = law.sample_equilibrium(&mut rng);
        let origin = spec.increment(first) + if id == 0 { 0.0 } else { 1.0 };
        let walk = MaxWalk::new(CrossSampler::new(spec)?, origin, rng);
        Ok(Self {
            id,
            law,
            walk,
            epochs: vec![first],
            forward_rng,
            forward: Vec::new(),
            forward_gaps: Vec::new(),
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn epochs(&self) -> &[f64] {
        &self.epochs
    }

    pub fn walk(&self) -> &MaxWalk {
        &self.walk
    }

    /// Gap between simulation epochs `k - 1` and `k` (0-based `k >= 1`).
    pub fn gap(&self, k: usize) -> f64 {
        self.walk.base(k)
    }

    fn sync(&mut self) {
        while self.epochs.len() < self.walk.len() {
            let k = self.epochs.len();
            let next = self.epochs[k - 1] + self.walk.base(k);
            self.epochs.push(next);
        }
    }

    fn advance_past(&mut self, t: f64) -> Result<()> {
        while *self.epochs.last().expect("first epoch") <= t {
            self.walk.cycle()?;
            self.sync();
        }
        Ok(())
    }

    fn determine(&mut self, n: usize) -> Result<()> {
        self.walk.extend(n)?;
        self.sync();
        Ok(())
    }

    /// Number of simulation epochs in `[0, t]`.
    pub fn count_upto(&self, t: f64) -> usize {
        self.epochs.partition_point(|&e| e <= t)
    }

    /// Original-time epoch `j` after 0 (0-based), generated on demand.
    pub fn forward_epoch(&mut self, j: usize) -> Result<f64> {
        while self.forward.len() <= j {
            if self.forward.is_empty() {
                let r = self
                    .law
                    .sample_residual_given_age(self.epochs[0], &mut self.forward_rng)?;
                self.forward.push(r);
            } else {
                let g = self.law.sample(&mut self.forward_rng);
                let last = *self.forward.last().unwrap();
                self.forward_gaps.push(g);
                self.forward.push(last + g);
            }
        }
        Ok(self.forward[j])
    }

    /// Full length of the activity (or interarrival) that starts at
    /// simulation epoch `k` (0-based), i.e. original time `-epochs[k]`.
    fn duration_from_sim(&mut self, k: usize) -> Result<f64> {
        if k == 0 {
            Ok(self.epochs[0] + self.forward_epoch(0)?)
        } else {
            Ok(self.gap(k))
        }
    }

    fn duration_from_forward(&mut self, j: usize) -> Result<f64> {
        self.forward_epoch(j + 1)?;
        Ok(self.forward_gaps[j])
    }

    /// Time from original time `t` until the next epoch at or after `t`.
    pub fn residual_at(&mut self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            let s = -t;
            let k = self.count_upto(s);
            if k >= 1 {
                Ok(s - self.epochs[k - 1])
            } else {
                Ok(self.forward_epoch(0)? + s)
            }
        } else {
            let mut j = 0;
            while self.forward_epoch(j)? < t {
                j += 1;
            }
            Ok(self.forward[j] - t)
        }
    }

    /// Materialized epochs, both directions.
    pub fn renewals(&self) -> u64 {
        (self.epochs.len() + self.forward.len()) as u64
    }
}

/// Validated inputs of the vacation construction.
#[derive(Debug, Clone, PartialEq)]
pub struct VacationParams {
    pub arrival: DistributionSpec,
    pub service: DistributionSpec,
    pub servers: u32,
    pub a: f64,
}

impl VacationParams {
    /// Checks stability, continuity, and `a in (lambda, c mu)`. `a = None`
    /// picks the midpoint.
    pub fn new(
        arrival: DistributionSpec,
        service: DistributionSpec,
        servers: u32,
        a: Option<f64>,
    ) -> Result<Self> {
        arrival.validate()?;
        service.validate()?;
        if servers == 0 {
            return Err(Error::Config("need at least one server".into()));
        }
        if arrival.has_atoms() || service.has_atoms() {
            return Err(Error::Config(
                "interarrival and service laws must be continuous (no atoms)".into(),
            ));
        }
        let lambda = arrival.rate();
        let capacity = servers as f64 * service.rate();
        let rho = lambda / capacity;
        if rho >= 1.0 {
            return Err(Error::Unstable { rho });
        }
        let a = a.unwrap_or(0.5 * (lambda + capacity));
        if !(a > lambda && a < capacity) {
            return Err(Error::Config(format!(
                "drift parameter a = {a} must lie in (lambda, c mu) = ({lambda}, {capacity})"
            )));
        }
        Ok(Self {
            arrival,
            service,
            servers,
            a,
        })
    }

    pub fn rho(&self) -> f64 {
        self.arrival.rate() / (self.servers as f64 * self.service.rate())
    }
}

/// Creates the `c + 1` lazily extendable stationary streams for one replication.
pub fn build_streams(
    params: &VacationParams,
    seed: u64,
    replication: u64,
) -> Result<Vec<RenewalStream>> {
    let c = params.servers;
    let mut streams = Vec::with_capacity(c as usize + 1);
    let spec0 = WalkSpec::arrival(params.arrival.clone(), params.a)?;
    streams.push(RenewalStream::new(
        0,
        params.arrival.clone(),
        spec0,
        derive(seed, replication, 0),
        derive(seed, replication, FORWARD_STREAM_BASE),
    )?);
    let spec = WalkSpec::service(params.service.clone(), params.a, c)?;
    for i in 1..=c as usize {
        streams.push(RenewalStream::new(
            i,
            params.service.clone(),
            spec.clone(),
            derive(seed, replication, i as u64),
            derive(seed, replication, FORWARD_STREAM_BASE + i as u64),
        )?);
    }
    Ok(streams)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    /// Simulation time (original time is `-time`).
    pub time: f64,
    pub stream: usize,
    /// 0-based epoch index within its stream.
    pub index: usize,
}

/// Merged backward timeline with exact `X`, `M`, and `Q_v`.
#[derive(Debug, Clone)]
pub struct VacationSystem {
    params: VacationParams,
    streams: Vec<RenewalStream>,
    events: Vec<Event>,
    /// `X` right after each event (simulation-time order).
    x: Vec<i64>,
    /// Exact `M` at events `0..m.len()`.
    m: Vec<i64>,
    m_origin: i64,
    /// `M(u)` is exact for all `u < certified`.
    certified: f64,
    materialized: f64,
    max_events: usize,
}

impl VacationSystem {
    pub fn new(params: VacationParams, seed: u64, replication: u64) -> Result<Self> {
        let streams = build_streams(&params, seed, replication)?;
        Ok(Self {
            params,
            streams,
            events: Vec::new(),
            x: Vec::new(),
            m: Vec::new(),
            m_origin: 0,
            certified: 0.0,
            materialized: 0.0,
            max_events: 50_000_000,
        })
    }

    pub fn with_event_cap(mut self, cap: usize) -> Self {
        self.max_events = cap;
        self
    }

    pub fn params(&self) -> &VacationParams {
        &self.params
    }

    pub fn servers(&self) -> usize {
        self.params.servers as usize
    }

    pub fn streams(&self) -> &[RenewalStream] {
        &self.streams
    }

    pub fn stream_mut(&mut self, i: usize) -> &mut RenewalStream {
        &mut self.streams[i]
    }

    /// Events with exact `M`, in simulation-time order.
    pub fn events(&self) -> &[Event] {
        &self.events[..self.m.len()]
    }

    pub fn certified_horizon(&self) -> f64 {
        self.certified
    }

    pub fn x_at_event(&self, j: usize) -> i64 {
        self.x[j]
    }

    pub fn m_at_event(&self, j: usize) -> i64 {
        self.m[j]
    }

    /// Waiting count just before the event at original time `-events[j].time`.
    pub fn q_before_event(&self, j: usize) -> usize {
        (self.m[j] - self.x[j]) as usize
    }

    /// Renewals materialized per stream, and tilted/rejected walk steps overall.
    pub fn renewal_counts(&self) -> (Vec<u64>, u64) {
        (
            self.streams.iter().map(RenewalStream::renewals).collect(),
            self.streams.iter().map(|s| s.walk().proposal_steps()).sum(),
        )
    }

    fn materialize(&mut self, t: f64) -> Result<()> {
        for s in &mut self.streams {
            s.advance_past(t)?;
        }
        let mut events: Vec<Event> = Vec::new();
        for s in &self.streams {
            for (k, &e) in s.epochs().iter().enumerate() {
                if e > t {
                    break;
                }
                events.push(Event {
                    time: e,
                    stream: s.id(),
                    index: k,
                });
            }
        }
        if events.len() > self.max_events {
            return Err(Error::ResourceCap(format!(
                "{} events exceed the cap of {}",
                events.len(),
                self.max_events
            )));
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        for w in events.windows(2) {
            if w[0].time == w[1].time {
                return Err(Error::Tie { time: -w[0].time });
            }
        }
        let mut x = Vec::with_capacity(events.len());
        let mut level = 0i64;
        for e in &events {
            level += if e.stream == 0 { 1 } else { -1 };
            x.push(level);
        }
        self.events = events;
        self.x = x;
        self.materialized = t;
        Ok(())
    }

    /// Certified upper bound on `sup_{s >= t} X(s)` from the walk maxima.
    fn future_bound(&mut self, t: f64) -> Result<f64> {
        let a = self.params.a;
        let per_server = a / self.params.servers as f64;
        let mut bound = 0.0;
        for s in &mut self.streams {
            let n = s.count_upto(t);
            s.determine(n)?;
            let walk_max = s.walk().max_at(n).expect("determined");
            let now = if s.id() == 0 {
                n as f64 - a * t
            } else {
                per_server * t - n as f64
            };
            bound += now.max(walk_max);
        }
        Ok(bound)
    }

    /// Makes `M(u)`, and hence `Q_v(-u)`, exact for all `u <= tau`.
    pub fn ensure_horizon(&mut self, tau: f64) -> Result<()> {
        if tau < self.certified {
            return Ok(());
        }
        let mut t = tau.max(self.materialized).max(1.0);
        loop {
            self.materialize(t)?;
            let bound = self.future_bound(t)?;
            let cap = (bound + 1e-9).floor() as i64;
            // Last event whose level reaches the bound: M is the plain
            // suffix maximum up to (and just past) it.
            let last_hit = self.x.iter().rposition(|&v| v >= cap);
            let certified = match last_hit {
                Some(j) => self.events.get(j + 1).map_or(t, |e| e.time),
                None if cap <= 0 => self.events.first().map_or(t, |e| e.time),
                None => 0.0,
            };
            if certified > tau {
                let upto = last_hit.map_or(0, |j| j + 1);
                let mut m = vec![0i64; upto];
                let mut run = i64::MIN;
                for j in (0..upto).rev() {
                    run = run.max(self.x[j]);
                    m[j] = run;
                }
                self.m_origin = m.first().copied().unwrap_or(0).max(0);
                self.m = m;
                self.certified = certified;
                return Ok(());
            }
            t *= 1.25;
        }
    }

    /// Exact `M(u) = sup_{s >= u} X(s)` for `0 <= u < certified_horizon()`.
    pub fn running_max_x(&mut self, u: f64) -> Result<i64> {
        self.ensure_horizon(u)?;
        let k = self.events[..self.m.len()].partition_point(|e| e.time <= u);
        Ok(if k == 0 { self.m_origin } else { self.m[k - 1] })
    }

    /// `X(u)` (counts over `[0, u]`).
    pub fn x_at(&mut self, u: f64) -> Result<i64> {
        self.ensure_horizon(u)?;
        let k = self.events[..self.m.len()].partition_point(|e| e.time <= u);
        Ok(if k == 0 { 0 } else { self.x[k - 1] })
    }

    /// Stationary waiting count at original time `-u`.
    pub fn q_v(&mut self, u: f64) -> Result<usize> {
        let m = self.running_max_x(u)?;
        let x = self.x_at(u)?;
        Ok((m - x) as usize)
    }

    /// Writes `time,stream_id,X,M,Q_v` rows for every certified event.
    /// `time` is original time; `Q_v` is the count just before the event.
    pub fn write_timeline_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "stream_id", "X", "M", "Q_v"])?;
        for (j, e) in self.events().iter().enumerate() {
            w.write_record([
                format!("{}", -e.time),
                e.stream.to_string(),
                self.x[j].to_string(),
                self.m[j].to_string(),
                self.q_before_event(j).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Index (in [`Self::events`]) of the arrival with the largest
    /// simulation time `<= t`, if any.
    pub fn earliest_arrival_within(&self, t: f64) -> Option<usize> {
        self.events()
            .iter()
            .rposition(|e| e.stream == 0 && e.time <= t)
    }

    /// Forward replay of the vacation dynamics from the arrival at event
    /// `start` through original time 0 and beyond, assigning each customer
    /// the full activity that initiates its service.
    pub fn extract_services(
        &mut self,
        start: usize,
        extra_forward_arrivals: usize,
    ) -> Result<CouplingTrace> {
        let c = self.servers();
        let ev = self.events()[start];
        if ev.stream != 0 {
            return Err(Error::Domain(format!("event {start} is not an arrival")));
        }
        let phantoms = self.q_before_event(start);
        let t_start = -ev.time;
        let initial_residuals = self.residuals_at(t_start)?;

        // Waiting line: None = customer already waiting before `start`.
        let mut line: std::collections::VecDeque<Option<usize>> =
            std::iter::repeat_n(None, phantoms).collect();
        let mut customers: Vec<Customer> = Vec::new();
        let mut phantom_services = Vec::new();
        let mut queue_path = Vec::new();
        let mut pending_real = 0usize;
        let mut forward_arrivals = 0usize;

        let on_arrival = |time: f64,
                          line: &mut std::collections::VecDeque<Option<usize>>,
                          customers: &mut Vec<Customer>| {
            let idx = customers.len();
            customers.push(Customer {
                arrival_time: time,
                delay: f64::NAN,
                service: f64::NAN,
                server: 0,
                residuals: Vec::new(),
            });
            line.push_back(Some(idx));
        };

        // Backward part, walked in original-time order.
        for j in (0..=start).rev() {
            let e = self.events[j];
            let t = -e.time;
            if e.stream == 0 {
                on_arrival(t, &mut line, &mut customers);
                pending_real += 1;
            } else if let Some(head) = line.pop_front() {
                let v = self.streams[e.stream].duration_from_sim(e.index)?;
                self.assign(
                    head,
                    t,
                    v,
                    e.stream,
                    &mut customers,
                    &mut phantom_services,
                    &mut pending_real,
                )?;
            }
            queue_path.push((t, line.len()));
        }

        // Forward part: activities (and optionally arrivals) after 0.
        let mut cursor = vec![0usize; c + 1];
        while pending_real > 0 || forward_arrivals < extra_forward_arrivals {
            let mut best = (f64::INFINITY, usize::MAX);
            for i in 0..=c {
                if i == 0 && forward_arrivals >= extra_forward_arrivals {
                    continue;
                }
                let t = self.streams[i].forward_epoch(cursor[i])?;
                if t < best.0 {
                    best = (t, i);
                } else if t == best.0 {
                    return Err(Error::Tie { time: t });
                }
            }
            let (t, i) = best;
            if i == 0 {
                on_arrival(t, &mut line, &mut customers);
                pending_real += 1;
                forward_arrivals += 1;
            } else if let Some(head) = line.pop_front() {
                let v = self.streams[i].duration_from_forward(cursor[i])?;
                self.assign(
                    head,
                    t,
                    v,
                    i,
                    &mut customers,
                    &mut phantom_services,
                    &mut pending_real,
                )?;
            }
            cursor[i] += 1;
            queue_path.push((t, line.len()));
        }

        let next_arrival = self.streams[0].forward_epoch(0)?;
        Ok(CouplingTrace {
            servers: c,
            start_time: t_start,
            phantom_count: phantoms,
            phantom_services,
            initial_residuals,
            customers,
            queue_path,
            first_arrival_after_zero: next_arrival,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn assign(
        &mut self,
        head: Option<usize>,
        t: f64,
        v: f64,
        server: usize,
        customers: &mut [Customer],
        phantom_services: &mut Vec<f64>,
        pending_real: &mut usize,
    ) -> Result<()> {
        match head {
            None => phantom_services.push(v),
            Some(idx) => {
                let residuals = self.residuals_at(t)?;
                let cust = &mut customers[idx];
                cust.delay = t - cust.arrival_time;
                cust.service = v;
                cust.server = server;
                cust.residuals = residuals;
                *pending_real -= 1;
            }
        }
        Ok(())
    }

    /// `sort(U(t-))`: time to the next activity epoch at or after `t`, per server.
    pub fn residuals_at(&mut self, t: f64) -> Result<Vec<f64>> {
        let mut r = Vec::with_capacity(self.servers());
        for s in self.streams.iter_mut().skip(1) {
            r.push(s.residual_at(t)?);
        }
        r.sort_by(f64::total_cmp);
        Ok(r)
    }
}

/// A customer of the vacation system, in arrival order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Customer {
    /// Original time of arrival.
    pub arrival_time: f64,
    /// Delay in queue before its service starts.
    pub delay: f64,
    /// Full length of the activity that serves it.
    pub service: f64,
    /// Server (1-based stream id) that serves it.
    pub server: usize,
    /// `sort(U((T + D)-))`, including the zero of the initiating server.
    pub residuals: Vec<f64>,
}

/// Per-customer service extraction over a window starting at an arrival.
#[derive(Debug, Clone)]
pub struct CouplingTrace {
    pub servers: usize,
    /// Original time of the first customer's arrival.
    pub start_time: f64,
    /// Customers already waiting just before `start_time`.
    pub phantom_count: usize,
    /// Their services, head of line first.
    pub phantom_services: Vec<f64>,
    /// `sort(U(start_time))`.
    pub initial_residuals: Vec<f64>,
    pub customers: Vec<Customer>,
    /// `(original time, Q_v after the event)`.
    pub queue_path: Vec<(f64, usize)>,
    pub first_arrival_after_zero: f64,
}

impl CouplingTrace {
    /// Customers arriving at or before original time 0.
    pub fn customers_upto_zero(&self) -> usize {
        self.customers.partition_point(|c| c.arrival_time <= 0.0)
    }

    pub fn service_start(&self, n: usize) -> f64 {
        let c = &self.customers[n];
        c.arrival_time + c.delay
    }

    /// Upper-bound Kiefer–Wolfowitz vector `D 1 + sort(U((T + D)-))`.
    pub fn w_v_at(&self, n: usize) -> KwVector {
        let c = &self.customers[n];
        KwVector::from_unsorted(c.residuals.iter().map(|r| c.delay + r).collect())
    }

    /// Arrivals with their extracted services.
    pub fn traffic(&self) -> crate::kw::TrafficTrace {
        crate::kw::TrafficTrace {
            arrivals: self
                .customers
                .iter()
                .filter(|c| c.service.is_finite())
                .map(|c| crate::kw::Arrival {
                    time: c.arrival_time,
                    service: c.service,
                })
                .collect(),
        }
    }
}
