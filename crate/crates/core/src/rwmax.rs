//! Exact joint sampling of a negative-drift random walk and its
//! infinite-horizon running maxima `M_n = sup_{k >= n} S_k`.
//!
//! The sampler needs a light-tailed increment: it finds the Cramér root
//! `theta*` of `E[exp(theta X)] = 1` and decides first passage over a level
//! `b` exactly by simulating under the exponentially tilted law and
//! accepting with probability `exp(-theta* S_tau)`. Paths conditioned to
//! stay below a level are produced by rejection against that test, and
//! maxima are certified one record at a time.

use rand::Rng;

use crate::dists::{DistributionSpec, Law};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Which renewal-to-walk transformation the increments come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkFlavor {
    /// `X = 1 - a A` with `A` an interarrival time.
    Arrival,
    /// `X = (a / c) V - 1` with `V` a service or vacation time.
    Service,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkSpec {
    pub flavor: WalkFlavor,
    pub base: DistributionSpec,
    pub a: f64,
    pub c: u32,
}

/// One walk step: the underlying renewal gap and the walk increment it induces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub base: f64,
    pub increment: f64,
}

impl WalkSpec {
    pub fn new(flavor: WalkFlavor, base: DistributionSpec, a: f64, c: u32) -> Result<Self> {
        base.validate()?;
        if !(a.is_finite() && a > 0.0) || c == 0 {
            return Err(Error::Config(format!(
                "walk needs a > 0 and c >= 1 (a = {a}, c = {c})"
            )));
        }
        let spec = Self { flavor, base, a, c };
        let drift = spec.mean_increment();
        if drift >= 0.0 {
            return Err(Error::Config(format!(
                "walk drift must be negative, got {drift} (a = {a}, flavor {flavor:?})"
            )));
        }
        Ok(spec)
    }

    pub fn arrival(base: DistributionSpec, a: f64) -> Result<Self> {
        Self::new(WalkFlavor::Arrival, base, a, 1)
    }

    pub fn service(base: DistributionSpec, a: f64, c: u32) -> Result<Self> {
        Self::new(WalkFlavor::Service, base, a, c)
    }

    fn scale(&self) -> f64 {
        match self.flavor {
            WalkFlavor::Arrival => self.a,
            WalkFlavor::Service => self.a / self.c as f64,
        }
    }

    pub fn increment(&self, base: f64) -> f64 {
        match self.flavor {
            WalkFlavor::Arrival => 1.0 - self.a * base,
            WalkFlavor::Service => self.scale() * base - 1.0,
        }
    }

    pub fn mean_increment(&self) -> f64 {
        self.increment(self.base.mean())
    }

    /// Supremum of the increment's support.
    pub fn max_increment(&self) -> f64 {
        match self.flavor {
            WalkFlavor::Arrival => self.increment(self.base.support_inf()),
            WalkFlavor::Service => self.increment(self.base.support_sup()),
        }
    }

    /// Largest theta for which `psi(theta)` is finite.
    pub fn theta_cap(&self) -> f64 {
        match self.flavor {
            WalkFlavor::Arrival => f64::INFINITY,
            WalkFlavor::Service => self.base.theta_max() / self.scale(),
        }
    }

    /// `log E[exp(theta X)]`.
    pub fn log_psi(&self, theta: f64) -> Result<f64> {
        match self.flavor {
            WalkFlavor::Arrival => Ok(theta + self.base.log_mgf(-self.a * theta)?),
            WalkFlavor::Service => Ok(-theta + self.base.log_mgf(theta * self.scale())?),
        }
    }

    pub fn sample_step<R: Rng + ?Sized>(&self, rng: &mut R) -> Step {
        let base = self.base.sample(rng);
        Step {
            base,
            increment: self.increment(base),
        }
    }

    /// Law of the renewal gap under the increment tilt `exp(theta X)`.
    fn tilted_base(&self, theta: f64) -> Result<Law> {
        match self.flavor {
            WalkFlavor::Arrival => self.base.exp_tilt(-self.a * theta),
            WalkFlavor::Service => self.base.exp_tilt(theta * self.scale()),
        }
    }
}

const ROOT_TOL: f64 = 1e-10;

/// Positive root of `E[exp(theta X)] = 1` by bracketed bisection.
pub fn cramer_root(spec: &WalkSpec) -> Result<f64> {
    if spec.mean_increment() >= 0.0 {
        return Err(Error::Config("nonnegative drift has no Cramér root".into()));
    }
    if spec.max_increment() <= 0.0 {
        return Err(Error::Unsupported(
            "increments are almost surely nonpositive; psi < 1 on (0, inf)".into(),
        ));
    }
    let cap = spec.theta_cap();
    let mut lo = 0.0;
    let mut hi = (1.0 / spec.mean_increment().abs()).min(0.5 * cap);
    let mut bracketed = false;
    for _ in 0..4000 {
        if spec.log_psi(hi)? > 0.0 {
            bracketed = true;
            break;
        }
        lo = hi;
        hi = if 2.0 * hi < cap {
            2.0 * hi
        } else {
            0.5 * (hi + cap)
        };
    }
    if !bracketed {
        return Err(Error::Unsupported(format!(
            "Cramér root not bracketable below theta cap {cap}"
        )));
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if spec.log_psi(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    let resid = spec.log_psi(root)?.exp_m1().abs();
    if resid > ROOT_TOL {
        return Err(Error::Unsupported(format!(
            "Cramér root residual {resid:e} exceeds {ROOT_TOL:e}"
        )));
    }
    Ok(root)
}

/// Outcome of a first-passage test over a level `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossOutcome {
    pub crossed: bool,
    /// Steps up to and including the first one whose partial sum exceeds `b`.
    /// Empty when not crossed.
    pub segment: Vec<Step>,
    /// Tilted steps simulated, including those of a rejected proposal.
    pub proposal_steps: u64,
}

/// Exact first-passage machinery for one [`WalkSpec`].
#[derive(Debug, Clone)]
pub struct CrossSampler {
    spec: WalkSpec,
    tilt: Option<(f64, Law)>,
}

impl CrossSampler {
    pub fn new(spec: WalkSpec) -> Result<Self> {
        let tilt = if spec.max_increment() <= 0.0 {
            None
        } else {
            let theta = cramer_root(&spec)?;
            let law = spec.tilted_base(theta)?;
            Some((theta, law))
        };
        Ok(Self { spec, tilt })
    }

    pub fn spec(&self) -> &WalkSpec {
        &self.spec
    }

    /// Cramér root, or `None` when the walk can never rise.
    pub fn theta(&self) -> Option<f64> {
        self.tilt.as_ref().map(|(t, _)| *t)
    }

    /// Bernoulli for `{sup_{n >= 1} S_n > b}` (walk started at 0) together
    /// with the conditioned path up to first passage.
    pub fn cross_test<R: Rng + ?Sized>(&self, b: f64, rng: &mut R) -> Result<CrossOutcome> {
        if !(b >= 0.0) {
            return Err(Error::Domain(format!(
                "crossing level must be >= 0, got {b}"
            )));
        }
        let Some((theta, law)) = &self.tilt else {
            return Ok(CrossOutcome {
                crossed: false,
                segment: Vec::new(),
                proposal_steps: 0,
            });
        };
        let mut segment = Vec::new();
        let mut s = 0.0;
        while s <= b {
            let base = law.sample(rng);
            let increment = self.spec.increment(base);
            s += increment;
            segment.push(Step { base, increment });
        }
        let accept = (-theta * s).exp();
        assert!(
            accept <= (-theta * b).exp() && accept <= 1.0,
            "tilted acceptance probability out of range"
        );
        let proposal_steps = segment.len() as u64;
        if rng.random::<f64>() < accept {
            Ok(CrossOutcome {
                crossed: true,
                segment,
                proposal_steps,
            })
        } else {
            Ok(CrossOutcome {
                crossed: false,
                segment: Vec::new(),
                proposal_steps,
            })
        }
    }

    /// One step of the walk conditioned on its whole future staying strictly
    /// below `headroom` (relative to the current position). Returns the step
    /// and the number of tilted/proposed steps spent.
    pub fn conditional_step<R: Rng + ?Sized>(
        &self,
        headroom: f64,
        rng: &mut R,
    ) -> Result<(Step, u64)> {
        if !(headroom >= 0.0) {
            return Err(Error::Domain(format!(
                "headroom must be >= 0, got {headroom}"
            )));
        }
        let mut spent = 0u64;
        loop {
            let step = self.spec.sample_step(rng);
            spent += 1;
            if step.increment >= headroom {
                continue;
            }
            let test = self.cross_test(headroom - step.increment, rng)?;
            spent += test.proposal_steps;
            if !test.crossed {
                return Ok((step, spent));
            }
        }
    }
}

/// Lazily extendable realization of `(S_n, M_n)`.
///
/// `S_0 = origin`; indices `0..determined()` have exact maxima, indices up to
/// `len() - 1` have materialized positions, and the unmaterialized future is
/// conditioned to stay strictly below `ceiling`.
#[derive(Debug, Clone)]
pub struct MaxWalk {
    sampler: CrossSampler,
    rng: SimRng,
    bases: Vec<f64>,
    positions: Vec<f64>,
    maxima: Vec<f64>,
    ceiling: f64,
    ceiling_from: usize,
    proposal_steps: u64,
}

impl MaxWalk {
    pub fn new(sampler: CrossSampler, origin: f64, rng: SimRng) -> Self {
        Self {
            sampler,
            rng,
            bases: Vec::new(),
            positions: vec![origin],
            maxima: Vec::new(),
            ceiling: f64::INFINITY,
            ceiling_from: 0,
            proposal_steps: 0,
        }
    }

    pub fn spec(&self) -> &WalkSpec {
        self.sampler.spec()
    }

    /// Number of materialized positions `S_0..S_{len-1}`.
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of indices with exact maxima.
    pub fn determined(&self) -> usize {
        self.maxima.len()
    }

    pub fn position(&self, n: usize) -> f64 {
        self.positions[n]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Renewal gap behind step `n` (from `S_{n-1}` to `S_n`), `n >= 1`.
    pub fn base(&self, n: usize) -> f64 {
        self.bases[n - 1]
    }

    pub fn bases(&self) -> &[f64] {
        &self.bases
    }

    pub fn max_at(&self, n: usize) -> Option<f64> {
        self.maxima.get(n).copied()
    }

    pub fn maxima(&self) -> &[f64] {
        &self.maxima
    }

    pub fn ceiling(&self) -> f64 {
        self.ceiling
    }

    /// Index after which the current ceiling binds.
    pub fn ceiling_from(&self) -> usize {
        self.ceiling_from
    }

    /// Tilted and rejected steps spent so far (not materialized).
    pub fn proposal_steps(&self) -> u64 {
        self.proposal_steps
    }

    fn push(&mut self, step: Step) {
        let s = *self.positions.last().expect("origin present") + step.increment;
        self.bases.push(step.base);
        self.positions.push(s);
    }

    /// Runs one determination cycle: either a record test over the
    /// undetermined stretch or, when the stretch is empty, one conditioned step.
    pub fn cycle(&mut self) -> Result<()> {
        let first = self.maxima.len();
        let end = self.positions.len() - 1;
        let current = self.positions[end];
        if first > end {
            let step = if self.ceiling.is_finite() {
                let (step, spent) = self
                    .sampler
                    .conditional_step(self.ceiling - current, &mut self.rng)?;
                self.proposal_steps += spent;
                step
            } else {
                self.sampler.spec().sample_step(&mut self.rng)
            };
            self.push(step);
            return Ok(());
        }

        let (mut argmax, mut record) = (first, self.positions[first]);
        for (k, &s) in self.positions.iter().enumerate().skip(first + 1) {
            if s >= record {
                argmax = k;
                record = s;
            }
        }
        loop {
            let test = self.sampler.cross_test(record - current, &mut self.rng)?;
            self.proposal_steps += test.proposal_steps;
            if !test.crossed {
                // Future stays <= record, so every index up to the record's
                // position has maximum exactly `record`.
                self.maxima.resize(argmax + 1, record);
                self.ceiling = record;
                self.ceiling_from = end;
                return Ok(());
            }
            let peak = current + test.segment.iter().map(|s| s.increment).sum::<f64>();
            if self.ceiling.is_finite() {
                if peak >= self.ceiling {
                    continue;
                }
                let tail = self
                    .sampler
                    .cross_test(self.ceiling - peak, &mut self.rng)?;
                self.proposal_steps += tail.proposal_steps;
                if tail.crossed {
                    continue;
                }
            }
            for step in test.segment {
                self.push(step);
            }
            return Ok(());
        }
    }

    /// Cycles until `M_0..=M_n` are exact.
    pub fn extend(&mut self, n: usize) -> Result<()> {
        while self.maxima.len() <= n {
            self.cycle()?;
        }
        Ok(())
    }

    /// Cycles until `pred` holds. Only whole cycles run, so the realization
    /// does not depend on which predicates were used to drive it.
    pub fn extend_while(&mut self, mut pending: impl FnMut(&Self) -> bool) -> Result<()> {
        while pending(self) {
            self.cycle()?;
        }
        Ok(())
    }
}

/// Checks `M_n = max(S_n, M_{n+1})` and that maxima are never rewritten as
/// walks with `A ~ Exp(1)`, `a = 2` are pushed further.
pub fn selfcheck(seed: u64, walks: u64) -> Result<bool> {
    let spec = WalkSpec::arrival(DistributionSpec::exponential(1.0), 2.0)?;
    let sampler = CrossSampler::new(spec)?;
    for r in 0..walks {
        let mut walk = MaxWalk::new(sampler.clone(), 0.0, crate::rng::derive(seed, r, 0));
        walk.extend(200)?;
        let before = walk.maxima().to_vec();
        walk.extend(2000)?;
        if walk.maxima()[..before.len()] != before[..] {
            return Ok(false);
        }
        let m = walk.maxima();
        let ok = (0..m.len() - 1).all(|n| m[n] == walk.position(n).max(m[n + 1]));
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}
