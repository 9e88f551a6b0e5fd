mod render;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use countdown_core::countdown::{death_time, hitting_time, phi, Cutoff, DelaySequence};
use countdown_core::distributions::{
    corank_pmf, critical_x, hitting_time_pmf, mode_of_s, rn_pmf, rn_tail_bound_check, Pmf,
};
use countdown_core::fieldmat::{enumerate_rank_counts, rank_count_table, FqField, DEFAULT_ENUMERATION_CAP};
use countdown_core::harness::{
    run_experiment, run_suite, ComparisonReport, ExperimentKind, ExperimentSpec, DEFAULT_SEED,
};
use countdown_core::qseries::DEFAULT_TOL;
use countdown_core::tvmetrics::{fg_comparison, tv_corank, tv_hitting, tv_process, TvReport};
use countdown_core::{Approx, Backend, Rational, Scalar};
use serde_json::{json, Value};

use render::{cell, opt_cell, scalar_json, Format, Output};

#[derive(Parser)]
#[command(
    name = "countdown",
    version,
    about = "Geometric-delay countdown process: exact laws, total variation distances, ranks over F_q"
)]
struct Cli {
    /// Truncation tolerance for infinite products and series.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Seed for every stochastic run.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Worker thread cap.
    #[arg(long, global = true, env = "COUNTDOWN_THREADS")]
    threads: Option<usize>,
    /// Force a backend; by default "p/q" selects exact and decimals select float.
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Exact,
    Float,
}

#[derive(Subcommand)]
enum Command {
    /// Probability mass functions.
    #[command(subcommand)]
    Dist(DistCommand),
    /// Total variation distances with bounds.
    #[command(subcommand)]
    Tv(TvCommand),
    /// Corank distance to the untruncated law against the classical bounds.
    FgCompare {
        #[arg(long)]
        q: u64,
        /// Single value or inclusive range a:b.
        #[arg(long, default_value = "1", value_parser = parse_range_u64)]
        n: Span<u64>,
        #[arg(long, default_value = "0", allow_hyphen_values = true, value_parser = parse_range_i64)]
        m: Span<i64>,
    },
    /// Root of x^(k+1) = 1 - x, where the mode of S moves from k to k + 1.
    CriticalX {
        /// Single value or inclusive range a:b.
        #[arg(long, value_parser = parse_range_u64)]
        k: Span<u64>,
    },
    /// Mode of the hitting time S and its mass.
    ModeS {
        #[arg(long)]
        x: String,
    },
    /// The path driven by a delay sequence.
    Trajectory {
        /// Delays z_1,z_2,...
        #[arg(long, value_delimiter = ',', required = true)]
        z: Vec<u64>,
        /// Inclusive time window a:b; defaults to the diagonal start through the hitting time.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_window)]
        window: Option<(i64, i64)>,
    },
    /// Number of rows x cols matrices over F_q of each rank.
    RankCounts {
        #[arg(long)]
        q: u64,
        #[arg(long)]
        rows: u64,
        #[arg(long)]
        cols: u64,
        /// Also count by exhaustive enumeration.
        #[arg(long)]
        enumerate: bool,
        /// Largest number of matrices to enumerate.
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: u64,
    },
    /// Monte Carlo or oracle experiments compared against exact laws.
    Simulate {
        /// JSON file with one experiment or an array of them.
        #[arg(long, conflicts_with = "kind")]
        spec: Option<PathBuf>,
        #[arg(long, value_enum, required_unless_present = "spec")]
        kind: Option<KindArg>,
        /// Experiment parameter key=value, repeatable (e.g. --param x=1/2).
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, Value)>,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        /// Per-bin threshold in standard deviations.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Acceptance suites; exits 1 if any criterion fails.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

#[derive(Subcommand)]
enum DistCommand {
    /// Law of the height X^(n)_t; --n inf for the untruncated process.
    Corank {
        #[arg(long)]
        x: String,
        #[arg(long, value_parser = parse_cutoff)]
        n: Cutoff,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        t: i64,
        #[arg(long)]
        kmax: Option<u64>,
    },
    /// Law of the hitting time S_n (or S with --n inf).
    Hitting {
        #[arg(long)]
        x: String,
        #[arg(long, value_parser = parse_cutoff)]
        n: Cutoff,
        #[arg(long)]
        kmax: Option<u64>,
    },
    /// Law of R_n = Z_(n+1) + Z_(n+2) + ..., with the tail check P(R_n > 1).
    Rn {
        #[arg(long)]
        x: String,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        kmax: Option<u64>,
    },
}

#[derive(Subcommand)]
enum TvCommand {
    /// d_TV(X_t, X^(n)_t).
    Corank {
        #[arg(long)]
        x: String,
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        t: i64,
    },
    /// d_TV(S_n, S).
    Hitting {
        #[arg(long)]
        x: String,
        #[arg(long)]
        n: u64,
    },
    /// Distance between the whole truncated and untruncated processes.
    Process {
        #[arg(long)]
        x: String,
        #[arg(long)]
        n: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    McCorank,
    McHitting,
    McMatrix,
    OraclePmf,
    OracleTv,
    IdentitySweep,
}

impl From<KindArg> for ExperimentKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::McCorank => ExperimentKind::McCorank,
            KindArg::McHitting => ExperimentKind::McHitting,
            KindArg::McMatrix => ExperimentKind::McMatrix,
            KindArg::OraclePmf => ExperimentKind::OraclePmf,
            KindArg::OracleTv => ExperimentKind::OracleTv,
            KindArg::IdentitySweep => ExperimentKind::IdentitySweep,
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] countdown_core::Error),
    #[error("{0}")]
    Io(String),
}

type CliResult<T> = Result<T, CliError>;

fn parse_range<T: std::str::FromStr + Copy>(s: &str) -> Result<(T, T), String>
where
    T::Err: std::fmt::Display,
{
    let one = |v: &str| v.trim().parse::<T>().map_err(|e| format!("{v:?}: {e}"));
    match s.split_once(':') {
        Some((a, b)) => Ok((one(a)?, one(b)?)),
        None => one(s).map(|v| (v, v)),
    }
}

/// An inclusive range of integers given as `a` or `a:b`.
#[derive(Debug, Clone)]
struct Span<T>(Vec<T>);

fn parse_range_u64(s: &str) -> Result<Span<u64>, String> {
    let (a, b) = parse_range::<u64>(s)?;
    if a > b {
        return Err(format!("empty range {s}"));
    }
    Ok(Span((a..=b).collect()))
}

fn parse_range_i64(s: &str) -> Result<Span<i64>, String> {
    let (a, b) = parse_range::<i64>(s)?;
    if a > b {
        return Err(format!("empty range {s}"));
    }
    Ok(Span((a..=b).collect()))
}

fn parse_window(s: &str) -> Result<(i64, i64), String> {
    if !s.contains(':') {
        return Err("window must be a:b".into());
    }
    parse_range(s)
}

fn parse_cutoff(s: &str) -> Result<Cutoff, String> {
    match s {
        "inf" | "infinity" => Ok(Cutoff::Infinite),
        _ => s
            .parse()
            .map(Cutoff::Finite)
            .map_err(|e| format!("{s:?}: {e} (use a nonnegative integer or inf)")),
    }
}

fn parse_param(s: &str) -> Result<(String, Value), String> {
    let (k, v) = s.split_once('=').ok_or("expected key=value")?;
    let value = match v.parse::<i64>() {
        Ok(i) => json!(i),
        Err(_) => json!(v),
    };
    Ok((k.to_string(), value))
}

struct Config {
    tol: Option<f64>,
    seed: u64,
    backend: Option<BackendArg>,
}

impl Config {
    fn tol(&self) -> f64 {
        self.tol.unwrap_or(DEFAULT_TOL)
    }

    fn backend_for(&self, x: &str) -> Backend {
        match self.backend {
            Some(BackendArg::Exact) => Backend::Exact,
            Some(BackendArg::Float) => Backend::Float,
            None if x.contains('/') => Backend::Exact,
            None => Backend::Float,
        }
    }
}

/// Runs `$body` with `$x` bound to the parsed value on the chosen backend.
macro_rules! with_x {
    ($cfg:expr, $xs:expr, |$x:ident| $body:expr) => {
        match $cfg.backend_for($xs) {
            Backend::Exact => {
                let $x = Rational::parse($xs)?;
                $body
            }
            Backend::Float => {
                let $x = Approx::parse($xs)?;
                $body
            }
        }
    };
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            Cli::command()
                .error(clap::error::ErrorKind::ValueValidation, "--threads must be at least 1")
                .exit();
        }
        // only fails if a pool already exists, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    if let (Some(BackendArg::Exact), Some(x)) = (cli.backend, x_arg(&cli.command)) {
        if !x.contains('/') {
            Cli::command()
                .error(
                    clap::error::ErrorKind::ValueValidation,
                    format!("the exact backend takes x as a \"p/q\" literal, got {x:?}"),
                )
                .exit();
        }
    }
    let cfg = Config {
        tol: cli.tol,
        seed: cli.seed,
        backend: cli.backend,
    };
    match run(&cfg, cli.command) {
        Ok(out) => {
            print!("{}", out.render(cli.format));
            if out.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn x_arg(cmd: &Command) -> Option<&str> {
    match cmd {
        Command::Dist(DistCommand::Corank { x, .. } | DistCommand::Hitting { x, .. } | DistCommand::Rn { x, .. })
        | Command::Tv(TvCommand::Corank { x, .. } | TvCommand::Hitting { x, .. } | TvCommand::Process { x, .. })
        | Command::ModeS { x } => Some(x),
        _ => None,
    }
}

fn run(cfg: &Config, command: Command) -> CliResult<Output> {
    let tol = cfg.tol();
    match command {
        Command::Dist(DistCommand::Corank { x, n, t, kmax }) => with_x!(cfg, &x, |xv| {
            let pmf = corank_pmf(&xv, n, t, kmax, tol)?;
            Ok(pmf_output(&pmf, json!({ "law": "corank", "x": x, "n": cutoff_json(n), "t": t })))
        }),
        Command::Dist(DistCommand::Hitting { x, n, kmax }) => with_x!(cfg, &x, |xv| {
            let pmf = hitting_time_pmf(&xv, n, kmax, tol)?;
            Ok(pmf_output(&pmf, json!({ "law": "hitting", "x": x, "n": cutoff_json(n) })))
        }),
        Command::Dist(DistCommand::Rn { x, n, kmax }) => with_x!(cfg, &x, |xv| {
            let pmf = rn_pmf(&xv, n, kmax, tol)?;
            let check = rn_tail_bound_check(&xv, n)?;
            let mut out = pmf_output(&pmf, json!({ "law": "rn", "x": x, "n": n }));
            out.json["tailCheck"] = serde_json::to_value(&check).expect("serializable");
            Ok(out)
        }),
        Command::Tv(TvCommand::Corank { x, n, t }) => with_x!(cfg, &x, |xv| {
            Ok(tv_output(&tv_corank(&xv, n, t, tol)?, json!({ "distance": "corank", "x": x, "n": n, "t": t })))
        }),
        Command::Tv(TvCommand::Hitting { x, n }) => with_x!(cfg, &x, |xv| {
            Ok(tv_output(&tv_hitting(&xv, n, tol)?, json!({ "distance": "hitting", "x": x, "n": n })))
        }),
        Command::Tv(TvCommand::Process { x, n }) => with_x!(cfg, &x, |xv| {
            Ok(tv_output(&tv_process(&xv, n, tol)?, json!({ "distance": "process", "x": x, "n": n })))
        }),
        Command::FgCompare { q, n, m } => fg_output(q, &n.0, &m.0, tol),
        Command::CriticalX { k } => {
            let points = k
                .0
                .iter()
                .map(|&k| critical_x(k, 1e-15))
                .collect::<countdown_core::Result<Vec<_>>>()?;
            let rows = points
                .iter()
                .map(|p| vec![p.k.to_string(), format!("{:.15}", p.x), format!("{:.6}", p.y), format!("{:e}", p.residual)])
                .collect();
            Ok(Output::new(json!(points), &["k", "x", "y", "residual"], rows))
        }
        Command::ModeS { x } => with_x!(cfg, &x, |xv| {
            let m = mode_of_s(&xv, tol)?;
            let json = json!({
                "backend": backend_of(&xv),
                "x": x,
                "mode": m.mode,
                "modeProb": scalar_json(&m.mode_prob),
                "tieWithNext": m.tie_with_next,
            });
            let rows = vec![vec![x.clone(), m.mode.to_string(), cell(&m.mode_prob), m.tie_with_next.to_string()]];
            Ok(Output::new(json, &["x", "mode", "modeProb", "tieWithNext"], rows))
        }),
        Command::Trajectory { z, window } => trajectory_output(&z, window),
        Command::RankCounts { q, rows, cols, enumerate, cap } => rank_output(q, rows, cols, enumerate, cap),
        Command::Simulate { spec, kind, params, samples, sigma } => {
            let specs = match (spec, kind) {
                (Some(path), _) => read_specs(&path)?,
                (None, Some(kind)) => {
                    let mut s = ExperimentSpec::new(kind.into()).samples(samples).seed(cfg.seed);
                    s.params.extend(params);
                    if let Some(t) = cfg.tol {
                        s.tol = t;
                    }
                    if let Some(sig) = sigma {
                        s.sigma = sig;
                    }
                    vec![s]
                }
                (None, None) => unreachable!("clap requires --kind without --spec"),
            };
            simulate_output(&specs)
        }
        Command::Verify { suite } => {
            eprintln!("seed: {}", cfg.seed);
            let results = run_suite(&suite, cfg.seed)?;
            let ok = results.iter().all(|r| r.pass);
            let rows = results
                .iter()
                .map(|r| {
                    vec![
                        r.id.to_string(),
                        r.name.to_string(),
                        if r.pass { "PASS" } else { "FAIL" }.to_string(),
                        r.checks.to_string(),
                        r.failures.len().to_string(),
                        r.elapsed_ms.to_string(),
                        r.detail.clone(),
                    ]
                })
                .collect();
            let json = json!({ "seed": cfg.seed, "pass": ok, "criteria": results });
            Ok(Output::new(json, &["id", "suite", "status", "checks", "failures", "ms", "detail"], rows).ok(ok))
        }
    }
}

fn backend_of<S: Scalar>(_: &S) -> Backend {
    S::BACKEND
}

fn cutoff_json(n: Cutoff) -> Value {
    match n {
        Cutoff::Finite(n) => json!(n),
        Cutoff::Infinite => json!("inf"),
    }
}

fn pmf_output<S: Scalar>(pmf: &Pmf<S>, params: Value) -> Output {
    let float = S::BACKEND == Backend::Float;
    let mut json = json!({ "backend": S::BACKEND, "params": params, "pmf": pmf });
    if float {
        json["errBounds"] = json!(pmf.probs.iter().map(Scalar::err_bound).collect::<Vec<_>>());
    }
    let mut acc = S::zero();
    let rows = pmf
        .probs
        .iter()
        .enumerate()
        .map(|(k, p)| {
            acc = acc.clone() + p.clone();
            let mut row = vec![k.to_string(), cell(p), cell(&acc)];
            if float {
                row.push(format!("{:e}", p.err_bound()));
            }
            row
        })
        .collect();
    let headers: &[&str] = if float {
        &["k", "prob", "cumulative", "errBound"]
    } else {
        &["k", "prob", "cumulative"]
    };
    Output::new(json, headers, rows)
}

fn tv_output<S: Scalar>(rep: &TvReport<S>, params: Value) -> Output {
    let mut json = json!({ "params": params, "report": rep, "sandwichHolds": rep.sandwich_holds() });
    if let Some((lo, hi)) = rep.interval() {
        json["interval"] = json!([scalar_json(&lo), scalar_json(&hi)]);
    }
    let mut rows = vec![
        vec!["backend".to_string(), rep.backend.to_string()],
        vec!["status".into(), serde_json::to_value(rep.status).expect("enum").as_str().unwrap_or_default().into()],
        vec!["exact".into(), opt_cell(&rep.exact)],
        vec!["exactSlack".into(), cell(&rep.exact_slack)],
        vec!["directSum".into(), opt_cell(&rep.direct_sum)],
        vec!["slack".into(), cell(&rep.slack)],
        vec!["lower".into(), opt_cell(&rep.lower)],
        vec!["upper".into(), opt_cell(&rep.upper)],
        vec!["asymptotic".into(), opt_cell(&rep.asymptotic)],
    ];
    rows.extend(rep.method.iter().map(|(k, v)| vec![format!("method.{k}"), v.to_string()]));
    Output::new(json, &["field", "value"], rows)
}

fn fg_output(q: u64, ns: &[u64], ms: &[i64], tol: f64) -> CliResult<Output> {
    let mut table = Vec::new();
    let sweep = ns.len() * ms.len() > 1;
    for &n in ns {
        for &m in ms {
            // a sweep skips shapes with a negative column count
            if sweep && (n as i64) + m < 0 {
                continue;
            }
            table.push(fg_comparison(q, n, m, tol.min(1e-20))?);
        }
    }
    let ok = table.iter().all(|r| r.holds);
    let rows = table
        .iter()
        .map(|r| {
            vec![
                r.q.to_string(),
                r.n.to_string(),
                r.m.to_string(),
                cell(&r.exact),
                opt_cell(&r.fg_lower),
                cell(&r.new_upper),
                opt_cell(&r.fg_upper),
                r.holds.to_string(),
            ]
        })
        .collect();
    let json = json!({ "backend": Backend::Exact, "rows": table });
    Ok(Output::new(json, &["q", "n", "m", "exact", "fgLower", "newUpper", "fgUpper", "holds"], rows).ok(ok))
}

fn trajectory_output(z: &[u64], window: Option<(i64, i64)>) -> CliResult<Output> {
    let delays = DelaySequence::from_dense(z);
    let window = window.unwrap_or((-(delays.max_support() as i64), hitting_time(&delays) as i64));
    let traj = phi(&delays, window);
    let deaths = (1..=delays.max_support())
        .map(|k| death_time(&delays, k))
        .collect::<countdown_core::Result<Vec<_>>>()?;
    let rows = traj.points().map(|(t, x)| vec![t.to_string(), x.to_string()]).collect();
    let json = json!({
        "z": z,
        "window": [window.0, window.1],
        "hittingTime": hitting_time(&delays),
        "deathTimes": deaths,
        "trajectory": traj,
    });
    Ok(Output::new(json, &["t", "x"], rows))
}

fn rank_output(q: u64, rows: u64, cols: u64, enumerate: bool, cap: u64) -> CliResult<Output> {
    let table = rank_count_table(q, rows, cols)?;
    let enumerated = if enumerate {
        let q32 = u32::try_from(q).map_err(|_| countdown_core::Error::UnsupportedField(u32::MAX))?;
        let field = Arc::new(FqField::new(q32)?);
        Some(enumerate_rank_counts(&field, rows as usize, cols as usize, cap)?)
    } else {
        None
    };
    let mut ok = true;
    let mut headers = vec!["rank", "count", "probability"];
    if enumerated.is_some() {
        headers.push("enumerated");
    }
    let out_rows = table
        .iter()
        .map(|r| {
            let mut row = vec![r.rank.to_string(), r.count.to_string(), cell(&r.probability)];
            if let Some(e) = &enumerated {
                let c = e.get(r.rank as usize).copied().unwrap_or(0);
                ok &= r.count == c.into();
                row.push(c.to_string());
            }
            row
        })
        .collect();
    let json = json!({
        "backend": Backend::Exact,
        "q": q,
        "rows": rows,
        "cols": cols,
        "table": table,
        "enumerated": enumerated,
        "agrees": enumerated.as_ref().map(|_| ok),
    });
    Ok(Output::new(json, &headers, out_rows).ok(ok))
}

fn read_specs(path: &PathBuf) -> CliResult<Vec<ExperimentSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let parse = |v: Value| {
        serde_json::from_value::<ExperimentSpec>(v).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    };
    match value {
        Value::Array(items) => items.into_iter().map(parse).collect(),
        other => Ok(vec![parse(other)?]),
    }
}

fn simulate_output(specs: &[ExperimentSpec]) -> CliResult<Output> {
    // specs run one after another; each parallelizes internally
    let reports = specs
        .iter()
        .map(|s| {
            eprintln!("seed: {} ({:?})", s.seed, s.kind);
            run_experiment(s)
        })
        .collect::<countdown_core::Result<Vec<ComparisonReport>>>()?;
    let ok = reports.iter().all(|r| r.pass);
    let rows = reports
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                r.bins.to_string(),
                format!("{:e}", r.max_abs_dev),
                r.max_sigma_dev.map(|s| format!("{s:.3}")).unwrap_or_else(|| "-".into()),
                r.threshold.to_string(),
                r.seed.to_string(),
                if r.pass { "PASS" } else { "FAIL" }.to_string(),
            ]
        })
        .collect();
    let json = json!({ "pass": ok, "reports": reports });
    Ok(Output::new(json, &["experiment", "bins", "maxAbsDev", "maxSigmaDev", "threshold", "seed", "status"], rows).ok(ok))
}
