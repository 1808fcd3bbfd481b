use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use perc_core::cache;
use perc_core::oracle::{brute_force_children, exact_reach_probability, mc_survival};
use perc_core::search::{lower_bound, reproduce_tables, Backend, BoundResult, Prepared, SearchOptions, TableEntry, TableSelector};
use perc_core::spectral::{spectral_radius, PowerOptions};
use perc_core::transition::{build_matrix, dump_text, render_row, BuildOptions};
use perc_core::{Error, ModelSpec, SpaceSpec, StateSpace};

const SCHEMA: &str = "perc-bound/1";

#[derive(Parser)]
#[command(name = "perc-bound", version, about = "Certified lower bounds for oriented percolation thresholds")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "PERC_BOUND_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write output here instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Largest certified-subcritical parameter for one model and space.
    Compute {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        p2: Option<f64>,
        #[command(flatten)]
        search: SearchArgs,
        /// Also report the spectral radius on a 21-point grid.
        #[arg(long)]
        verbose: bool,
    },
    /// Spectral radius of the mean matrix at fixed parameters.
    Spectral {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        p2: Option<f64>,
        #[command(flatten)]
        power: PowerArgs,
        #[arg(long, default_value = "auto")]
        backend: Backend,
    },
    /// Row of the mean matrix for one state, symbolic or evaluated.
    Transitions {
        #[command(flatten)]
        target: Target,
        /// State as a bit string, with "/letter" for tagged models; omit to dump every row.
        #[arg(long)]
        state: Option<String>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        p2: Option<f64>,
    },
    /// Independent checks.
    Oracle {
        #[command(subcommand)]
        command: OracleCommand,
    },
    /// Recompute a published table.
    Tables {
        #[arg(value_parser = parse_selector)]
        selector: TableSelector,
        /// Window size for 2D rows, in place of the published one.
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Binary cache of a symbolic mean matrix.
    Cache {
        #[command(subcommand)]
        command: CacheCommand,
    },
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Exact probability of reaching height n from the origin.
    Exact {
        #[arg(long)]
        model: ModelSpec,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        p2: Option<f64>,
    },
    /// Monte Carlo survival to a given depth.
    Mc {
        #[arg(long)]
        model: ModelSpec,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        p2: Option<f64>,
        #[arg(long, default_value_t = 400)]
        depth: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Child expectations of one state by exhaustive enumeration.
    Children {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        state: String,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        p2: Option<f64>,
    },
}

#[derive(Subcommand)]
enum CacheCommand {
    Write {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        path: PathBuf,
    },
    Read {
        #[arg(long)]
        path: PathBuf,
        /// Also print the rows.
        #[arg(long)]
        dump: bool,
    },
}

#[derive(Args)]
struct Target {
    #[arg(long)]
    model: ModelSpec,
    /// k, "k,i,j" or "L[,focus]" for the 3D lattice.
    #[arg(long)]
    space: String,
}

impl Target {
    fn spec(&self) -> perc_core::Result<SpaceSpec> {
        SpaceSpec::parse(&self.space, self.model.lattice)
    }

    fn space(&self) -> perc_core::Result<StateSpace> {
        StateSpace::enumerate(&self.model, self.spec()?)
    }
}

#[derive(Args)]
struct PowerArgs {
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 200_000)]
    max_iter: usize,
}

impl PowerArgs {
    fn options(&self) -> PowerOptions {
        PowerOptions { tol: self.tol, max_iter: self.max_iter, ..PowerOptions::default() }
    }
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value_t = 1e-7)]
    bisect_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    margin: f64,
    #[command(flatten)]
    power: PowerArgs,
    #[arg(long, default_value = "auto")]
    backend: Backend,
    /// Abort matrix construction beyond this many stored entries.
    #[arg(long)]
    max_nonzeros: Option<u64>,
}

impl SearchArgs {
    fn options(&self, scan: bool) -> SearchOptions {
        SearchOptions {
            bisect_tol: self.bisect_tol,
            margin: self.margin,
            power: self.power.options(),
            backend: self.backend,
            max_nonzeros: self.max_nonzeros,
            scan,
        }
    }
}

fn parse_selector(s: &str) -> Result<TableSelector, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn params(model: &ModelSpec, p: f64, p2: Option<f64>) -> perc_core::Result<Vec<f64>> {
    match (model.arity(), p2) {
        (1, None) => Ok(vec![p]),
        (2, Some(q)) => Ok(vec![p, q]),
        (1, Some(_)) => Err(Error::InvalidParams(format!("{model} takes no --p2"))),
        _ => Err(Error::InvalidParams(format!("{model} needs --p2"))),
    }
}

/// Rounds every float to 12 significant digits.
fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or_default();
            let r: f64 = format!("{x:.11e}").parse().unwrap_or(x);
            if let Some(m) = serde_json::Number::from_f64(r) {
                *n = m;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_floats),
        Value::Object(o) => o.values_mut().for_each(round_floats),
        _ => {}
    }
}

fn g12(x: f64) -> String {
    let r: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    format!("{r}")
}

fn to_json(value: impl Serialize) -> String {
    let mut v = serde_json::to_value(value).expect("serializable output");
    round_floats(&mut v);
    let mut out = serde_json::Map::new();
    out.insert("schema".into(), Value::String(SCHEMA.into()));
    match v {
        Value::Object(o) => out.extend(o),
        other => {
            out.insert("result".into(), other);
        }
    }
    serde_json::to_string_pretty(&Value::Object(out)).expect("json") + "\n"
}

const CSV_HEADER: &str = "model,space,p2,bound,lambda,states,polys,seconds";

fn csv_row(r: &BoundResult) -> String {
    format!(
        "{},\"{}\",{},{},{},{},{},{}",
        r.model,
        r.space,
        r.p2.map(g12).unwrap_or_default(),
        g12(r.bound),
        g12(r.lambda_at_bound),
        r.state_count,
        r.distinct_poly_count,
        g12(r.wall_time)
    )
}

fn text_bound(r: &BoundResult) -> String {
    let mut s = format!(
        "model       {}\nspace       {}\n{}bound       {:.6}\nlambda      {}\nstates      {}\npolys       {}\niterations  {}\nseconds     {:.3}\n",
        r.model,
        r.space,
        r.p2.map(|q| format!("p2          {}\n", g12(q))).unwrap_or_default(),
        r.bound,
        g12(r.lambda_at_bound),
        r.state_count,
        r.distinct_poly_count,
        r.bisection_iterations,
        r.wall_time
    );
    if !r.scan.is_empty() {
        s.push_str("scan\n");
        for pt in &r.scan {
            s.push_str(&format!("  p={:.2}  rho={}{}\n", pt.p, g12(pt.radius), if pt.converged { "" } else { " (not converged)" }));
        }
    }
    s
}

fn run(cli: &Cli) -> perc_core::Result<String> {
    let format = cli.format;
    match &cli.command {
        Command::Compute { target, p2, search, verbose } => {
            let r = lower_bound(&target.model, target.spec()?, *p2, &search.options(*verbose))?;
            Ok(match format {
                Format::Json => to_json(&r),
                Format::Csv => format!("{CSV_HEADER}\n{}\n", csv_row(&r)),
                Format::Text => text_bound(&r),
            })
        }
        Command::Spectral { target, p, p2, power, backend } => {
            let space = target.space()?;
            let prepared = Prepared::new(&space, *backend, &BuildOptions::default())?;
            let params = params(&target.model, *p, *p2)?;
            let report = spectral_radius(prepared.operator(&params)?.as_ref(), &power.options());
            if !report.converged {
                return Err(Error::NonConvergence { params, iterations: report.iterations, residual: report.residual });
            }
            Ok(match format {
                Format::Json => to_json(report),
                Format::Csv => format!(
                    "radius_estimate,iterations,converged,residual\n{},{},{},{}\n",
                    g12(report.radius_estimate),
                    report.iterations,
                    report.converged,
                    g12(report.residual)
                ),
                Format::Text => format!(
                    "radius      {}\niterations  {}\nconverged   {}\nresidual    {:e}\n",
                    g12(report.radius_estimate),
                    report.iterations,
                    report.converged,
                    report.residual
                ),
            })
        }
        Command::Transitions { target, state, p, p2 } => {
            let space = target.space()?;
            let matrix = build_matrix(&space, &BuildOptions::default())?;
            let values = p.map(|p| params(&target.model, p, *p2)).transpose()?;
            let Some(state) = state else {
                return Ok(dump_text(&space, &matrix));
            };
            let i = space.parse_state(state)?;
            if format == Format::Json {
                let entries: Vec<Value> = matrix
                    .row(i)
                    .map(|(c, poly)| {
                        let mut e = json!({ "child": space.render_ordinal(c), "poly": poly.to_string() });
                        if let Some(v) = &values {
                            e["value"] = json!(poly.eval(v));
                        }
                        e
                    })
                    .collect();
                return Ok(to_json(json!({ "state": space.render_ordinal(i), "entries": entries })));
            }
            Ok(render_row(&space, &matrix, i, values.as_deref()).join("\n") + "\n")
        }
        Command::Oracle { command } => match command {
            OracleCommand::Exact { model, n, p, p2 } => {
                let params = params(model, *p, *p2)?;
                let prob = exact_reach_probability(model, *n, &params)?;
                Ok(match format {
                    Format::Json => to_json(json!({ "model": model, "n": n, "params": params, "probability": prob })),
                    Format::Csv => format!("model,n,probability\n{model},{n},{}\n", g12(prob)),
                    Format::Text => format!("{}\n", g12(prob)),
                })
            }
            OracleCommand::Mc { model, p, p2, depth, trials, seed } => {
                let params = params(model, *p, *p2)?;
                let est = mc_survival(model, &params, *depth, *trials, *seed)?;
                Ok(match format {
                    Format::Json => to_json(est),
                    Format::Csv => format!(
                        "trials,survived,estimate,lower,upper\n{},{},{},{},{}\n",
                        est.trials,
                        est.survived,
                        g12(est.estimate),
                        g12(est.lower),
                        g12(est.upper)
                    ),
                    Format::Text => format!(
                        "survived {}/{}  estimate {}  99% interval [{}, {}]\n",
                        est.survived,
                        est.trials,
                        g12(est.estimate),
                        g12(est.lower),
                        g12(est.upper)
                    ),
                })
            }
            OracleCommand::Children { target, state, p, p2 } => {
                let space = target.space()?;
                let i = space.parse_state(state)?;
                let values = p.map(|p| params(&target.model, p, *p2)).transpose()?;
                let table = brute_force_children(&space, i)?;
                let rows: Vec<(String, String, Option<f64>)> = table
                    .iter()
                    .map(|(c, poly)| (space.render_ordinal(*c), poly.to_string(), values.as_ref().map(|v| poly.eval(v))))
                    .collect();
                Ok(match format {
                    Format::Json => to_json(json!({
                        "state": space.render_ordinal(i),
                        "children": rows.iter().map(|(c, poly, v)| json!({ "child": c, "poly": poly, "value": v })).collect::<Vec<_>>()
                    })),
                    _ => rows
                        .iter()
                        .map(|(c, poly, v)| match v {
                            Some(v) => format!("{} -> {c} : {}\n", space.render_ordinal(i), g12(*v)),
                            None => format!("{} -> {c} : {poly}\n", space.render_ordinal(i)),
                        })
                        .collect(),
                })
            }
        },
        Command::Tables { selector, k, search } => {
            let entries = reproduce_tables(*selector, &search.options(false), *k)?;
            Ok(match format {
                Format::Json => to_json(json!({ "table": selector.to_string(), "rows": entries })),
                Format::Csv => {
                    let mut s = format!("{CSV_HEADER},published\n");
                    for e in &entries {
                        s.push_str(&format!("{},{}\n", csv_row(&e.result), g12(e.row.published)));
                    }
                    s
                }
                Format::Text => text_table(&entries),
            })
        }
        Command::Cache { command } => match command {
            CacheCommand::Write { target, path } => {
                let space = target.space()?;
                let matrix = build_matrix(&space, &BuildOptions::default())?;
                cache::save(&matrix, path)?;
                Ok(format!(
                    "wrote {} {} states={} nonzeros={} polys={} to {}\n",
                    matrix.model,
                    matrix.spec,
                    matrix.dim(),
                    matrix.nnz(),
                    matrix.pool.len(),
                    path.display()
                ))
            }
            CacheCommand::Read { path, dump } => {
                let matrix = cache::load(path)?;
                if *dump {
                    let space = StateSpace::enumerate(&matrix.model, matrix.spec)?;
                    return Ok(dump_text(&space, &matrix));
                }
                Ok(match format {
                    Format::Json => to_json(json!({
                        "model": matrix.model,
                        "space": matrix.spec,
                        "states": matrix.dim(),
                        "nonzeros": matrix.nnz(),
                        "polys": matrix.pool.len(),
                    })),
                    _ => format!(
                        "{} {} states={} nonzeros={} polys={}\n",
                        matrix.model,
                        matrix.spec,
                        matrix.dim(),
                        matrix.nnz(),
                        matrix.pool.len()
                    ),
                })
            }
        },
    }
}

fn text_table(entries: &[TableEntry]) -> String {
    let mut s = format!("{:<10} {:<14} {:>5} {:>10} {:>10} {:>8} {:>9}\n", "model", "space", "p2", "bound", "published", "states", "seconds");
    for e in entries {
        let r = &e.result;
        s.push_str(&format!(
            "{:<10} {:<14} {:>5} {:>10.6} {:>10} {:>8} {:>9.2}\n",
            r.model.to_string(),
            r.space.to_string(),
            r.p2.map(|q| format!("{q}")).unwrap_or_else(|| "-".into()),
            r.bound,
            e.row.published,
            r.state_count,
            r.wall_time
        ));
    }
    s
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidModel(_)
        | Error::InvalidSize(_)
        | Error::InvalidSpace(_)
        | Error::InvalidParams(_)
        | Error::NotRepresentable(_)
        | Error::InvalidDirection(_) => 2,
        Error::NonConvergence { .. } => 3,
        Error::MemoryBudget { .. } => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(out) => {
            let written = match &cli.output {
                Some(path) => fs::write(path, out),
                None => io::stdout().write_all(out.as_bytes()),
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
