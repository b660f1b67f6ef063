//! Non-Markovian checks against long forward simulations.

use dcftp::par::run_replications;
use dcftp::rng::derive;
use dcftp::stats::chi_square_gof;
use dcftp::{sample_stationary, DcftpConfig, DistributionSpec};

/// Fraction of time spent with `n` customers in system over a long FCFS
/// GI/GI/c run, discarding a warm-up period.
fn time_average_occupancy(
    arrival: &DistributionSpec,
    service: &DistributionSpec,
    c: usize,
    arrivals: usize,
) -> Vec<f64> {
    let mut rng = derive(999, 0, 0);
    let mut busy_until = vec![0.0f64; c];
    let mut waiting: std::collections::VecDeque<f64> = Default::default();
    let mut occupancy = vec![0.0f64; 64];
    let mut now = 0.0;
    let mut next_arrival = arrival.sample(&mut rng);
    let warmup = arrivals / 20;
    let mut seen = 0usize;
    while seen < arrivals {
        let (srv, finish) = busy_until
            .iter()
            .enumerate()
            .filter(|(_, &b)| b > now)
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map_or((usize::MAX, f64::INFINITY), |(i, &b)| (i, b));
        let t = next_arrival.min(finish);
        if seen >= warmup {
            let n = busy_until.iter().filter(|&&b| b > now).count() + waiting.len();
            occupancy[n.min(63)] += t - now;
        }
        now = t;
        if finish < next_arrival {
            if let Some(v) = waiting.pop_front() {
                busy_until[srv] = now + v;
            }
        } else {
            let v = service.sample(&mut rng);
            match busy_until.iter().position(|&b| b <= now) {
                Some(i) => busy_until[i] = now + v,
                None => waiting.push_back(v),
            }
            next_arrival = now + arrival.sample(&mut rng);
            seen += 1;
        }
    }
    let total: f64 = occupancy.iter().sum();
    occupancy.iter().map(|x| x / total).collect()
}

fn compare(arrival: DistributionSpec, service: DistributionSpec, c: u32, seed: u64) {
    let long_run = time_average_occupancy(&arrival, &service, c as usize, 2_000_000);
    let config = DcftpConfig::new(arrival, service, c).with_seed(seed);
    let reps = 4000;
    let draws = run_replications(reps, 0, |r| sample_stationary(&config, r).unwrap());
    let mut observed = vec![0u64; long_run.len()];
    for d in &draws {
        observed[d.number_in_system().min(long_run.len() - 1)] += 1;
    }
    let gof = chi_square_gof(&observed, &long_run, 5.0);
    assert!(
        gof.p_value > 0.001,
        "{gof:?}\nobserved {observed:?}\nexpected {long_run:?}"
    );
}

#[test]
fn erlang_uniform_two_servers() {
    compare(
        DistributionSpec::erlang(2, 6.0),
        DistributionSpec::uniform(0.2, 0.8),
        2,
        21,
    );
}

#[test]
fn hyperexponential_erlang_three_servers() {
    compare(
        DistributionSpec::hyperexponential(vec![0.3, 0.7], vec![1.0, 8.0]),
        DistributionSpec::erlang(3, 4.0),
        3,
        22,
    );
}

#[test]
fn residual_services_are_consistent() {
    let config = DcftpConfig::new(
        DistributionSpec::erlang(2, 6.0),
        DistributionSpec::uniform(0.2, 0.8),
        2,
    )
    .with_seed(23);
    for r in 0..500 {
        let s = sample_stationary(&config, r).unwrap();
        s.z0.validate().unwrap();
        assert!(s.z0.r.iter().all(|&x| x < 0.8));
        assert!(s.z0.e > 0.0 && s.z0.e <= s.horizon);
        assert!(s.coalescence_time >= 0.0 && s.coalescence_time <= s.horizon);
        assert_eq!(s.renewals.len(), 3);
    }
}
