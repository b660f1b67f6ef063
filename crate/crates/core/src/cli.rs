//! Command-line surface: argument parsing, config files, output formats.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analytics::{
    coalescence_study, complexity_study, histogram_gof, MmcParams, Regime, MMC_BINS,
};
use crate::dists::DistributionSpec;
use crate::driver::{sample_audited, sample_stationary, DcftpConfig, StationarySample};
use crate::error::{Error, Result};
use crate::par::run_replications;
use crate::stats::MeanCi;

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;
pub const EXIT_SELFTEST: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "dcftp",
    version,
    about = "Exact steady-state sampling of FCFS GI/GI/c queues"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw stationary states at time 0, one record per replication.
    Sample(CommonArgs),
    /// Compare sampled M/M/c number-in-system with the closed form.
    ValidateMmc(CommonArgs),
    /// Forward-coupled coalescence times of the two bounding M/M/c queues.
    CoalesceStudy(CommonArgs),
    /// Renewals sampled per draw as the load grows.
    ComplexityStudy(CommonArgs),
    /// Run the invariant checks on small fixed seeds.
    Selftest(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON config file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Interarrival law, e.g. exp:3, erlang:2,6, hyperexp:0.4,1,0.6,5, uniform:0.2,1.
    #[arg(long)]
    pub arrival: Option<String>,
    /// Service law, same syntax as --arrival.
    #[arg(long)]
    pub service: Option<String>,
    #[arg(long)]
    pub servers: Option<u32>,
    #[arg(long)]
    pub reps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// First inspection horizon.
    #[arg(long)]
    pub t0: Option<f64>,
    /// Walk drift parameter in (lambda, c mu).
    #[arg(short = 'a', long = "drift")]
    pub a: Option<f64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Also report the workload vector seen by the first arrival after 0.
    #[arg(long)]
    pub w1: bool,
    /// Coalescence study regime.
    #[arg(long, value_enum)]
    pub regime: Option<RegimeArg>,
    /// Coalescence study scales, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub scales: Option<Vec<u32>>,
    /// Complexity study arrival rates, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Complexity study service rate.
    #[arg(long)]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Qd,
    Qed,
}

/// A law given either as `kind:params` text or as a tagged object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DistField {
    Text(String),
    Spec(DistributionSpec),
}

impl DistField {
    fn resolve(&self) -> Result<DistributionSpec> {
        match self {
            DistField::Text(s) => parse_distribution(s),
            DistField::Spec(d) => {
                d.validate()?;
                Ok(d.clone())
            }
        }
    }
}

/// Fully resolved run configuration (also the config file schema).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub arrival: Option<DistField>,
    #[serde(default)]
    pub service: Option<DistField>,
    #[serde(default)]
    pub servers: Option<u32>,
    #[serde(default)]
    pub reps: Option<u64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub t0: Option<f64>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
    #[serde(default)]
    pub w1: Option<bool>,
    #[serde(default)]
    pub regime: Option<Regime>,
    #[serde(default)]
    pub scales: Option<Vec<u32>>,
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default)]
    pub mu: Option<f64>,
}

impl RunConfig {
    fn empty() -> Self {
        serde_json::from_str("{}").expect("all fields optional")
    }

    /// Loads the config file (if any) and overlays the flags.
    pub fn from_args(args: &CommonArgs) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => Self::empty(),
        };
        macro_rules! overlay {
            ($($field:ident),*) => {$(
                if args.$field.is_some() {
                    cfg.$field = args.$field.clone();
                }
            )*};
        }
        overlay!(servers, reps, seed, t0, a, threads, output, format, scales, lambdas, mu);
        if let Some(s) = &args.arrival {
            cfg.arrival = Some(DistField::Text(s.clone()));
        }
        if let Some(s) = &args.service {
            cfg.service = Some(DistField::Text(s.clone()));
        }
        if args.w1 {
            cfg.w1 = Some(true);
        }
        if let Some(r) = args.regime {
            cfg.regime = Some(match r {
                RegimeArg::Qd => Regime::Qd,
                RegimeArg::Qed => Regime::Qed,
            });
        }
        Ok(cfg)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn threads(&self) -> usize {
        self.threads.unwrap_or(1)
    }

    fn format(&self) -> Format {
        self.format.unwrap_or(Format::Json)
    }

    fn reps(&self, default: u64) -> u64 {
        self.reps.unwrap_or(default)
    }

    /// Sampler configuration; laws and servers are required.
    pub fn dcftp(&self) -> Result<DcftpConfig> {
        let arrival = self
            .arrival
            .as_ref()
            .ok_or_else(|| Error::Config("missing --arrival".into()))?
            .resolve()?;
        let service = self
            .service
            .as_ref()
            .ok_or_else(|| Error::Config("missing --service".into()))?
            .resolve()?;
        let servers = self
            .servers
            .ok_or_else(|| Error::Config("missing --servers".into()))?;
        let mut cfg = DcftpConfig::new(arrival, service, servers).with_seed(self.seed());
        cfg.a = self.a;
        if let Some(t0) = self.t0 {
            cfg.t0 = t0;
        }
        cfg.want_w1 = self.w1.unwrap_or(false);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `kind:p1,p2,...`.
pub fn parse_distribution(text: &str) -> Result<DistributionSpec> {
    let (kind, rest) = text
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("expected kind:params, got {text:?}")))?;
    let params: Vec<f64> = rest
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number {p:?} in {text:?}")))
        })
        .collect::<Result<_>>()?;
    let arity = |n: usize| {
        if params.len() == n {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{kind} takes {n} parameter(s), got {}",
                params.len()
            )))
        }
    };
    let spec = match kind.trim().to_ascii_lowercase().as_str() {
        "exp" | "exponential" => {
            arity(1)?;
            DistributionSpec::exponential(params[0])
        }
        "erlang" => {
            arity(2)?;
            if params[0].fract() != 0.0 || params[0] < 1.0 {
                return Err(Error::Config(format!(
                    "erlang shape must be a positive integer, got {}",
                    params[0]
                )));
            }
            DistributionSpec::erlang(params[0] as u32, params[1])
        }
        "hyperexp" | "hyperexponential" => {
            if params.is_empty() || !params.len().is_multiple_of(2) {
                return Err(Error::Config("hyperexp takes weight,rate pairs".into()));
            }
            let (weights, rates) = params.chunks(2).map(|p| (p[0], p[1])).unzip();
            DistributionSpec::hyperexponential(weights, rates)
        }
        "uniform" => {
            arity(2)?;
            DistributionSpec::uniform(params[0], params[1])
        }
        "det" | "deterministic" => {
            arity(1)?;
            DistributionSpec::deterministic(params[0])
        }
        other => {
            return Err(Error::Config(format!(
                "unknown distribution kind {other:?}"
            )))
        }
    };
    spec.validate()?;
    Ok(spec)
}

/// One output record per draw.
#[derive(Debug, Clone, Serialize)]
pub struct SampleRecord {
    pub schema_version: u32,
    pub replication: u64,
    #[serde(rename = "Q0")]
    pub q0: usize,
    #[serde(rename = "R0")]
    pub r0: Vec<f64>,
    #[serde(rename = "E0")]
    pub e0: f64,
    #[serde(rename = "T_coalesce")]
    pub t_coalesce: f64,
    pub k_horizon: u32,
    pub horizon: f64,
    pub kappa: i64,
    pub detection: i64,
    pub renewals: BTreeMap<String, u64>,
    pub proposal_steps: u64,
    #[serde(rename = "W1", skip_serializing_if = "Option::is_none")]
    pub w1: Option<Vec<f64>>,
}

impl From<&StationarySample> for SampleRecord {
    fn from(s: &StationarySample) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            replication: s.replication,
            q0: s.z0.q,
            r0: s.z0.r.clone(),
            e0: s.z0.e,
            t_coalesce: s.coalescence_time,
            k_horizon: s.horizon_index,
            horizon: s.horizon,
            kappa: s.kappa,
            detection: s.detection,
            renewals: s
                .renewals
                .iter()
                .enumerate()
                .map(|(i, n)| (i.to_string(), *n))
                .collect(),
            proposal_steps: s.proposal_steps,
            w1: s.w1.as_ref().map(|w| w.as_slice().to_vec()),
        }
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

const SAMPLE_CSV_HEADER: [&str; 12] = [
    "schema_version",
    "replication",
    "Q0",
    "R0",
    "E0",
    "T_coalesce",
    "k_horizon",
    "horizon",
    "kappa",
    "detection",
    "renewals_total",
    "proposal_steps",
];

fn write_samples(out: &mut dyn Write, samples: &[StationarySample], format: Format) -> Result<()> {
    match format {
        Format::Json => {
            for s in samples {
                serde_json::to_writer(&mut *out, &SampleRecord::from(s))?;
                writeln!(out)?;
            }
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(SAMPLE_CSV_HEADER)?;
            for s in samples {
                w.write_record([
                    SCHEMA_VERSION.to_string(),
                    s.replication.to_string(),
                    s.z0.q.to_string(),
                    join(&s.z0.r),
                    s.z0.e.to_string(),
                    s.coalescence_time.to_string(),
                    s.horizon_index.to_string(),
                    s.horizon.to_string(),
                    s.kappa.to_string(),
                    s.detection.to_string(),
                    s.total_renewals().to_string(),
                    s.proposal_steps.to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn draw_all(cfg: &DcftpConfig, reps: u64, threads: usize) -> Result<Vec<StationarySample>> {
    run_replications(reps, threads, |r| sample_stationary(cfg, r))
        .into_iter()
        .collect()
}

fn mmc_params(cfg: &DcftpConfig) -> Result<MmcParams> {
    match (&cfg.arrival, &cfg.service) {
        (
            DistributionSpec::Exponential { rate: lambda },
            DistributionSpec::Exponential { rate: mu },
        ) => MmcParams::new(*lambda, *mu, cfg.servers),
        _ => Err(Error::Config(
            "validate-mmc needs exponential arrival and service laws".into(),
        )),
    }
}

fn open_output<'a>(
    path: &Option<PathBuf>,
    stdout: &'a mut dyn Write,
) -> Result<Box<dyn Write + 'a>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(stdout),
    })
}

fn cmd_sample(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let dc = cfg.dcftp()?;
    let samples = draw_all(&dc, cfg.reps(1), cfg.threads())?;
    {
        let mut sink = open_output(&cfg.output, out)?;
        write_samples(&mut sink, &samples, cfg.format())?;
        sink.flush()?;
    }
    let t: Vec<f64> = samples.iter().map(|s| s.coalescence_time).collect();
    let ci = MeanCi::from_sample(&t);
    writeln!(
        err,
        "draws={} mean_T={:.6} ci95=[{:.6}, {:.6}]",
        samples.len(),
        ci.mean,
        ci.lo,
        ci.hi
    )?;
    Ok(EXIT_OK)
}

fn cmd_validate_mmc(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let dc = cfg.dcftp()?;
    let params = mmc_params(&dc)?;
    let samples = draw_all(&dc, cfg.reps(5000), cfg.threads())?;
    let v = histogram_gof(&params, &samples);
    {
        let mut sink = open_output(&cfg.output, out)?;
        match cfg.format() {
            Format::Json => {
                serde_json::to_writer_pretty(&mut sink, &v)?;
                writeln!(sink)?;
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(&mut sink);
                w.write_record(["n", "observed", "expected"])?;
                for (n, (o, e)) in v.observed.iter().zip(&v.expected).enumerate() {
                    let label = if n > MMC_BINS {
                        format!(">{MMC_BINS}")
                    } else {
                        n.to_string()
                    };
                    w.write_record([label, o.to_string(), e.to_string()])?;
                }
                w.flush()?;
            }
        }
        sink.flush()?;
    }
    writeln!(
        err,
        "chi_square={:.6} dof={} p_value={:.6}",
        v.gof.statistic, v.gof.dof, v.gof.p_value
    )?;
    Ok(EXIT_OK)
}

const COALESCE_NOTE: &str =
    "coalescence time of the forward-coupled bounding M/M/c queues; 95% CI by normal approximation";

fn cmd_coalesce_study(cfg: &RunConfig, out: &mut dyn Write, _err: &mut dyn Write) -> Result<i32> {
    let regime = cfg.regime.unwrap_or(Regime::Qd);
    let scales = cfg.scales.clone().unwrap_or_else(|| vec![100]);
    let rows = coalescence_study(regime, &scales, cfg.reps(2000), cfg.seed(), cfg.threads())?;
    let mut sink = open_output(&cfg.output, out)?;
    match cfg.format() {
        Format::Json => {
            let doc = serde_json::json!({
                "schema_version": SCHEMA_VERSION,
                "metadata": { "note": COALESCE_NOTE, "seed": cfg.seed() },
                "rows": rows,
            });
            serde_json::to_writer_pretty(&mut sink, &doc)?;
            writeln!(sink)?;
        }
        Format::Csv => {
            writeln!(sink, "# {COALESCE_NOTE}")?;
            let mut w = csv::Writer::from_writer(&mut sink);
            for row in &rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
    }
    sink.flush()?;
    Ok(EXIT_OK)
}

const COMPLEXITY_NOTES: [&str; 2] = [
    "absolute renewal counts depend on the maximum sampler internals and are not comparable across implementations; the trend in rho is the reproducible quantity",
    "mean_horizon is the inspection horizon t0*2^k at which coalescence was detected",
];

fn cmd_complexity_study(cfg: &RunConfig, out: &mut dyn Write, _err: &mut dyn Write) -> Result<i32> {
    let lambdas = cfg
        .lambdas
        .clone()
        .unwrap_or_else(|| vec![5.0, 6.0, 7.0, 8.0, 9.0]);
    let mu = cfg.mu.unwrap_or(5.0);
    let servers = cfg.servers.unwrap_or(2);
    let rows = complexity_study(
        &lambdas,
        mu,
        servers,
        cfg.reps(1000),
        cfg.seed(),
        cfg.threads(),
    )?;
    let mut sink = open_output(&cfg.output, out)?;
    match cfg.format() {
        Format::Json => {
            let doc = serde_json::json!({
                "schema_version": SCHEMA_VERSION,
                "metadata": { "notes": COMPLEXITY_NOTES, "seed": cfg.seed() },
                "rows": rows,
            });
            serde_json::to_writer_pretty(&mut sink, &doc)?;
            writeln!(sink)?;
        }
        Format::Csv => {
            for note in COMPLEXITY_NOTES {
                writeln!(sink, "# {note}")?;
            }
            let mut w = csv::Writer::from_writer(&mut sink);
            for row in &rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
    }
    sink.flush()?;
    Ok(EXIT_OK)
}

fn cmd_selftest(cfg: &RunConfig, out: &mut dyn Write, _err: &mut dyn Write) -> Result<i32> {
    let mut failures = 0;
    let mut report = |name: &str, ok: bool, out: &mut dyn Write| -> Result<()> {
        if !ok {
            failures += 1;
        }
        writeln!(out, "{} {name}", if ok { "PASS" } else { "FAIL" })?;
        Ok(())
    };

    let kw_ok = crate::kw::selfcheck(cfg.seed(), 200)?;
    report("kw replay equals recursion", kw_ok, out)?;

    let walk_ok = crate::rwmax::selfcheck(cfg.seed(), 20)?;
    report("walk maxima satisfy M_n = max(S_n, M_{n+1})", walk_ok, out)?;

    let configs = [
        DcftpConfig::new(
            DistributionSpec::exponential(3.0),
            DistributionSpec::exponential(2.0),
            2,
        ),
        DcftpConfig::new(
            DistributionSpec::erlang(2, 4.0),
            DistributionSpec::uniform(0.2, 1.0),
            2,
        ),
        DcftpConfig::new(
            DistributionSpec::hyperexponential(vec![0.5, 0.5], vec![1.5, 6.0]),
            DistributionSpec::exponential(1.0),
            3,
        ),
    ];
    for (i, base) in configs.iter().enumerate() {
        let mut ok = true;
        for seed in 1..=3u64 {
            let cfg = base.clone().with_seed(seed);
            for r in 0..10 {
                let (s, audit) = sample_audited(&cfg, r)?;
                ok &= audit.passed() && s.z0.validate().is_ok() && s.coalescence_time <= s.horizon;
                ok &= sample_stationary(&cfg, r)?.z0 == s.z0;
            }
        }
        report(&format!("coupling invariants, model {i}"), ok, out)?;
    }
    Ok(if failures == 0 {
        EXIT_OK
    } else {
        EXIT_SELFTEST
    })
}

type Handler = fn(&RunConfig, &mut dyn Write, &mut dyn Write) -> Result<i32>;

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::ResourceCap(_) => EXIT_RESOURCE,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn describe(e: &Error) -> String {
    match e {
        Error::Unstable { rho } => format!("unstable system: ρ = {rho} (ρ ≥ 1); need λ < cμ"),
        other => other.to_string(),
    }
}

/// Parses `args` and runs the command, writing records to `out` (unless
/// `--output` is given) and diagnostics to `err`. Returns the exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let (common, handler): (&CommonArgs, Handler) = match &cli.command {
        Command::Sample(a) => (a, cmd_sample),
        Command::ValidateMmc(a) => (a, cmd_validate_mmc),
        Command::CoalesceStudy(a) => (a, cmd_coalesce_study),
        Command::ComplexityStudy(a) => (a, cmd_complexity_study),
        Command::Selftest(a) => (a, cmd_selftest),
    };
    let result = RunConfig::from_args(common).and_then(|cfg| {
        writeln!(
            err,
            "dcftp {} seed={}",
            env!("CARGO_PKG_VERSION"),
            cfg.seed()
        )?;
        handler(&cfg, out, err)
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", describe(&e));
            exit_code(&e)
        }
    }
}

/// Entry point for the binary.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    run_with(args, &mut out, &mut err)
}

/// Reads a [`RunConfig`] from a JSON file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
