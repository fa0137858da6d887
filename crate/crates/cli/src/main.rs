use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bilevel_core::bench::corpus::verify_corpus;
use bilevel_core::bench::{run_suite, summarize, SuiteConfig, DEFAULT_FEAS_TOL, DEFAULT_OBJ_TOL};
use bilevel_core::diagnostics::{
    check_kkt, check_mfcq, check_s_stationary, general_infeasibility, infeasibility, Certificate,
};
use bilevel_core::model::Instance;
use bilevel_core::reformulate::{build_mdp, build_mpcc, build_wdp};
use bilevel_core::relaxation::{run, run_linear, SolveReport};
use bilevel_core::{gen_linear, Dims, Error, RelaxationParams, RelaxationScheme, TerminalReason};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(
    name = "bilevel",
    version,
    about = "Bilevel programs via single-level reformulations"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; the tolerances map onto the relaxation
/// parameters one to one.
#[derive(Args, Debug, Clone)]
struct Common {
    /// Random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Outer tolerance ε_r.
    #[arg(long = "tol-r", global = true)]
    tol_r: Option<f64>,
    /// Inner NLP tolerance ε_sqp.
    #[arg(long = "tol-sqp", global = true)]
    tol_sqp: Option<f64>,
    /// Initial relaxation parameter t₀.
    #[arg(long, global = true)]
    t0: Option<f64>,
    /// Reduction factor σ.
    #[arg(long, global = true)]
    sigma: Option<f64>,
}

impl Common {
    fn apply(&self, mut p: RelaxationParams) -> RelaxationParams {
        if let Some(v) = self.tol_r {
            p.eps_r = v;
        }
        if let Some(v) = self.tol_sqp {
            p.eps_sqp = v;
        }
        if let Some(v) = self.t0 {
            p.t0 = v;
        }
        if let Some(v) = self.sigma {
            p.sigma = v;
        }
        p
    }

    fn params(&self) -> Result<RelaxationParams, CliError> {
        let p = self.apply(RelaxationParams::default());
        p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a random linear instance.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        l: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        /// Output file (stdout when absent).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Solve one instance with one scheme.
    Solve {
        instance: PathBuf,
        #[arg(long, default_value = "mdp1")]
        scheme: String,
        /// Initial upper-level point, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run a suite of random instances and summarize it.
    Bench {
        /// JSON suite configuration; the flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Group dimensions `n,l,m,p`; repeat for several groups.
        #[arg(long)]
        dims: Vec<String>,
        #[arg(long)]
        count: Option<usize>,
        /// Comma-separated schemes.
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<String>>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        density: Option<f64>,
        #[arg(long = "feas-tol", default_value_t = DEFAULT_FEAS_TOL)]
        feas_tol: f64,
        #[arg(long = "obj-tol", default_value_t = DEFAULT_OBJ_TOL)]
        obj_tol: f64,
        /// Directory for CSV, markdown and JSON results.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run diagnostics at a point.
    Check { instance: PathBuf, point: PathBuf },
    /// Verify the documented facts of the worked examples.
    Examples,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Failure(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInstance { .. }
            | Error::InvalidParameter(_)
            | Error::DimensionMismatch { .. }
            | Error::NonFinite(_)
            | Error::VariableOutOfRange { .. }
            | Error::DegreeExceeded { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Failure(e.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", path.display())))
}

fn load_instance(path: &Path) -> Result<Instance, CliError> {
    Instance::from_json(&read(path)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn parse_scheme(s: &str) -> Result<RelaxationScheme, CliError> {
    s.parse().map_err(|e: Error| CliError::Usage(e.to_string()))
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn print_report(r: &SolveReport) {
    println!("scheme: {}", r.scheme.label());
    println!("reason: {:?}", r.reason);
    println!("objective: {}", r.objective);
    println!("x: {}", fmt_vec(&r.x));
    println!("y: {}", fmt_vec(&r.y));
    if let Some(z) = &r.z {
        println!("z: {}", fmt_vec(z));
    }
    println!("u: {}", fmt_vec(&r.u));
    if !r.v.is_empty() {
        println!("v: {}", fmt_vec(&r.v));
    }
    let i = &r.infeasibility;
    println!(
        "Infeasibility: {} (upper {:.3e}, lower {:.3e}, bounds {:.3e}, gap {:.3e})",
        i.total,
        i.upper_violation,
        i.lower_feasibility_violation,
        i.bound_violation,
        i.optimality_gap
    );
    println!("kkt residual: {:.3e}", r.kkt.max());
    println!("outer iterations: {}", r.trace.len());
    println!("time: {:.4} s", r.time);
}

fn cmd_gen(
    common: &Common,
    dims: Dims,
    density: f64,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let lin = gen_linear(dims, density, common.seed)?;
    let text = Instance::Linear(lin).to_json();
    match output {
        Some(p) => write(p, &text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_solve(
    common: &Common,
    instance: &Path,
    scheme: &str,
    x0: Option<&[f64]>,
    as_json: bool,
) -> Result<(), CliError> {
    let params = common.params()?;
    let scheme = parse_scheme(scheme)?;
    let inst = load_instance(instance)?;
    let report = match inst.linear() {
        Some(lin) => run_linear(lin, scheme, &params, x0)?,
        None => run(&inst.program()?, scheme, &params, x0)?,
    };
    if as_json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        );
    } else {
        print_report(&report);
    }
    if report.reason == TerminalReason::IterLimit {
        return Err(CliError::Failure("outer iteration limit reached".into()));
    }
    Ok(())
}

fn parse_dims(s: &str) -> Result<Dims, CliError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || CliError::Usage(format!("--dims expects n,l,m,p, got `{s}`"));
    if parts.len() != 4 {
        return Err(bad());
    }
    let v: Vec<usize> = parts
        .iter()
        .map(|p| p.parse().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    Ok(Dims::new(v[0], v[1], v[2], v[3]))
}

struct BenchArgs<'a> {
    config: Option<&'a Path>,
    dims: &'a [String],
    count: Option<usize>,
    schemes: Option<&'a [String]>,
    repeats: Option<usize>,
    jobs: Option<usize>,
    density: Option<f64>,
    feas_tol: f64,
    obj_tol: f64,
    out: Option<&'a Path>,
}

fn cmd_bench(common: &Common, a: BenchArgs<'_>) -> Result<(), CliError> {
    let mut cfg = match a.config {
        Some(path) => {
            let text = read(path)?;
            let mut value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            if value.get("count").is_none() {
                if let Some(c) = a.count {
                    value["count"] = json!(c);
                }
            }
            SuiteConfig::from_json(&value.to_string())
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => SuiteConfig::new(Vec::new(), a.count.unwrap_or(1), common.seed),
    };
    if !a.dims.is_empty() {
        cfg.dims = a
            .dims
            .iter()
            .map(|d| parse_dims(d))
            .collect::<Result<_, _>>()?;
    }
    if let Some(c) = a.count {
        cfg.count = c;
    }
    if let Some(s) = a.schemes {
        cfg.schemes = s
            .iter()
            .map(|s| parse_scheme(s))
            .collect::<Result<_, _>>()?;
    }
    if let Some(r) = a.repeats {
        cfg.repeats = r;
    }
    if a.jobs.is_some() {
        cfg.jobs = a.jobs;
    }
    if let Some(d) = a.density {
        cfg.density = d;
    }
    if a.config.is_none() || common.seed != 0 {
        cfg.seed = common.seed;
    }
    cfg.params = common.apply(cfg.params);
    cfg.validate()?;
    let table = run_suite(&cfg)?;
    let summary = summarize(&table, a.feas_tol, a.obj_tol);
    if let Some(dir) = a.out {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Failure(format!("cannot create {}: {e}", dir.display())))?;
        for g in 0..cfg.dims.len() {
            for &s in &cfg.schemes {
                let name = format!("group{}_{}.csv", g + 1, s.label().to_lowercase());
                write(&dir.join(name), &table.to_csv(g, s))?;
            }
        }
        write(&dir.join("results.md"), &table.to_markdown())?;
        write(&dir.join("summary.md"), &summary.to_markdown())?;
        write(
            &dir.join("results.json"),
            &serde_json::to_string_pretty(&table).expect("table serializes"),
        )?;
        write(
            &dir.join("summary.json"),
            &serde_json::to_string_pretty(&summary).expect("summary serializes"),
        )?;
    }
    println!("{}", summary.to_markdown());
    let failed = table.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} of {} cells failed", table.rows.len());
    }
    Ok(())
}

/// Point file of the `check` subcommand.
#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct PointFile {
    /// `mpcc`, `wdp`, `mdp` or `bilevel` (a point `(x, y)`).
    problem: String,
    point: Vec<f64>,
    /// Subset of `mfcq`, `kkt`, `s_stationary`, `infeasibility`.
    #[serde(default)]
    checks: Option<Vec<String>>,
}

fn cmd_check(instance: &Path, point_path: &Path) -> Result<(), CliError> {
    let inst = load_instance(instance)?;
    let bp = inst.program()?;
    let text = read(point_path)?;
    let pf: PointFile = serde_json::from_str(&text).map_err(|e| {
        let msg = e.to_string();
        let field = ["unknown field `", "missing field `"]
            .iter()
            .find_map(|m| {
                msg.find(m).and_then(|s| {
                    let rest = &msg[s + m.len()..];
                    rest.find('`').map(|e| rest[..e].to_string())
                })
            })
            .unwrap_or_else(|| "point file".into());
        CliError::Usage(format!(
            "{}: invalid field `{field}`: {msg}",
            point_path.display()
        ))
    })?;
    let problem = pf.problem.to_ascii_lowercase();
    let mut out = serde_json::Map::new();
    if problem == "bilevel" {
        if pf.point.len() != bp.n + bp.m {
            return Err(CliError::Usage(format!(
                "{}: invalid field `point`: expected {} entries, got {}",
                point_path.display(),
                bp.n + bp.m,
                pf.point.len()
            )));
        }
        let (x, y) = pf.point.split_at(bp.n);
        let rep = match inst.linear() {
            Some(lin) => infeasibility(lin, x, y)?,
            None => general_infeasibility(&bp, x, y)?,
        };
        out.insert(
            "infeasibility".into(),
            serde_json::to_value(rep).expect("serializes"),
        );
        println!("{}", serde_json::Value::Object(out));
        return Ok(());
    }
    let nlp = match problem.as_str() {
        "mpcc" => build_mpcc(&bp)?,
        "wdp" => build_wdp(&bp)?,
        "mdp" => build_mdp(&bp)?,
        other => {
            return Err(CliError::Usage(format!(
                "{}: invalid field `problem`: unknown value `{other}`",
                point_path.display()
            )))
        }
    };
    if pf.point.len() != nlp.num_vars {
        return Err(CliError::Usage(format!(
            "{}: invalid field `point`: expected {} entries, got {}",
            point_path.display(),
            nlp.num_vars,
            pf.point.len()
        )));
    }
    let default_checks: Vec<String> = if problem == "mpcc" {
        vec!["mfcq".into(), "s_stationary".into()]
    } else {
        vec!["mfcq".into(), "kkt".into()]
    };
    for c in pf.checks.unwrap_or(default_checks) {
        let cert: Certificate = match c.as_str() {
            "mfcq" => check_mfcq(&nlp, &pf.point)?,
            "kkt" => check_kkt(&nlp, &pf.point)?,
            "s_stationary" if problem == "mpcc" => check_s_stationary(&nlp, &pf.point)?,
            other => {
                return Err(CliError::Usage(format!(
                    "{}: invalid field `checks`: `{other}` does not apply to {problem}",
                    point_path.display()
                )))
            }
        };
        out.insert(c, serde_json::to_value(cert).expect("serializes"));
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::Value::Object(out)).expect("serializes")
    );
    Ok(())
}

fn cmd_examples(common: &Common) -> Result<(), CliError> {
    let params = common.params()?;
    let outcomes = verify_corpus(&params);
    let mut all = true;
    for o in &outcomes {
        let ok = o.passed();
        all &= ok;
        println!("{} {}", if ok { "PASS" } else { "FAIL" }, o.name);
        for c in &o.checks {
            println!(
                "    [{}] {}: {}",
                if c.passed { "ok" } else { "x" },
                c.label,
                c.detail
            );
        }
    }
    if all {
        Ok(())
    } else {
        Err(CliError::Failure("some examples failed".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = &cli.common;
    let result = match &cli.command {
        Command::Gen {
            n,
            l,
            m,
            p,
            density,
            output,
        } => cmd_gen(
            common,
            Dims::new(*n, *l, *m, *p),
            *density,
            output.as_deref(),
        ),
        Command::Solve {
            instance,
            scheme,
            x0,
            json,
        } => cmd_solve(common, instance, scheme, x0.as_deref(), *json),
        Command::Bench {
            config,
            dims,
            count,
            schemes,
            repeats,
            jobs,
            density,
            feas_tol,
            obj_tol,
            out,
        } => cmd_bench(
            common,
            BenchArgs {
                config: config.as_deref(),
                dims,
                count: *count,
                schemes: schemes.as_deref(),
                repeats: *repeats,
                jobs: *jobs,
                density: *density,
                feas_tol: *feas_tol,
                obj_tol: *obj_tol,
                out: out.as_deref(),
            },
        ),
        Command::Check { instance, point } => cmd_check(instance, point),
        Command::Examples => cmd_examples(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
