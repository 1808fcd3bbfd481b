//! Bisection for the largest certified-subcritical parameter.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::operator::TransferPlan;
use crate::space::{SpaceSpec, StateSpace};
use crate::spectral::{decide_subcritical, evaluate, is_subcritical, spectral_radius, LinearOperator, PowerOptions, SpectralReport};
use crate::transition::{build_matrix, BuildOptions, MeanMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Materialized matrix for windows of at most `AUTO_MATRIX_SLOTS` slots.
    #[default]
    Auto,
    Matrix,
    Transfer,
}

pub const AUTO_MATRIX_SLOTS: usize = 12;

impl FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Backend::Auto),
            "matrix" => Ok(Backend::Matrix),
            "transfer" => Ok(Backend::Transfer),
            _ => Err(Error::InvalidParams(format!("unknown backend '{s}'"))),
        }
    }
}

/// A mean matrix ready for repeated evaluation.
pub enum Prepared {
    Matrix(MeanMatrix),
    Transfer(TransferPlan),
}

impl Prepared {
    pub fn new(space: &StateSpace, backend: Backend, build: &BuildOptions) -> Result<Self> {
        let use_matrix = match backend {
            Backend::Matrix => true,
            Backend::Transfer => false,
            Backend::Auto => space.window_len() <= AUTO_MATRIX_SLOTS,
        };
        if use_matrix {
            Ok(Prepared::Matrix(build_matrix(space, build)?))
        } else {
            Ok(Prepared::Transfer(TransferPlan::new(space)?))
        }
    }

    pub fn operator(&self, params: &[f64]) -> Result<Box<dyn LinearOperator + '_>> {
        Ok(match self {
            Prepared::Matrix(m) => Box::new(evaluate(m, params)?),
            Prepared::Transfer(t) => Box::new(t.evaluate(params)?),
        })
    }

    pub fn distinct_polys(&self) -> usize {
        match self {
            Prepared::Matrix(m) => m.pool.len(),
            Prepared::Transfer(t) => t.distinct_polys(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub bisect_tol: f64,
    pub margin: f64,
    pub power: PowerOptions,
    pub backend: Backend,
    pub max_nonzeros: Option<u64>,
    /// Also record the radius on a 21-point grid over [0, 1].
    pub scan: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            bisect_tol: 1e-7,
            margin: 1e-6,
            power: PowerOptions::default(),
            backend: Backend::Auto,
            max_nonzeros: None,
            scan: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub p: f64,
    pub radius: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub model: ModelSpec,
    pub space: SpaceSpec,
    pub p2: Option<f64>,
    pub bound: f64,
    pub lambda_at_bound: f64,
    pub bisection_iterations: usize,
    pub wall_time: f64,
    pub state_count: usize,
    pub distinct_poly_count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scan: Vec<ScanPoint>,
}

fn params_for(model: &ModelSpec, p: f64, p2: Option<f64>) -> Result<Vec<f64>> {
    match (model.arity(), p2) {
        (1, None) => Ok(vec![p]),
        (2, Some(q)) => Ok(vec![p, q]),
        (1, Some(_)) => Err(Error::InvalidParams(format!("{model} takes a single parameter"))),
        _ => Err(Error::InvalidParams(format!("{model} needs the second parameter p2"))),
    }
}

/// Floors to 6 decimals, tolerating representation error just below a
/// grid point.
pub fn floor6(x: f64) -> f64 {
    let scaled = x * 1e6;
    let r = scaled.round();
    if (scaled - r).abs() < 1e-6 {
        r / 1e6
    } else {
        scaled.floor() / 1e6
    }
}

pub fn lower_bound(model: &ModelSpec, spec: SpaceSpec, p2: Option<f64>, opts: &SearchOptions) -> Result<BoundResult> {
    let start = Instant::now();
    let space = StateSpace::enumerate(model, spec)?;
    let prepared = Prepared::new(&space, opts.backend, &BuildOptions { max_nonzeros: opts.max_nonzeros })?;
    let mut result = lower_bound_prepared(model, spec, &prepared, space.len(), p2, opts)?;
    result.wall_time = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Spectral radius on the 21-point grid `p = 0, 0.05, ..., 1`.
pub fn grid_scan(model: &ModelSpec, prepared: &Prepared, p2: Option<f64>, power: &PowerOptions) -> Result<Vec<ScanPoint>> {
    (0..=20)
        .map(|i| {
            let p = i as f64 / 20.0;
            let op = prepared.operator(&params_for(model, p, p2)?)?;
            let r = spectral_radius(op.as_ref(), power);
            Ok(ScanPoint { p, radius: r.radius_estimate, converged: r.converged })
        })
        .collect()
}

pub fn lower_bound_prepared(
    model: &ModelSpec,
    spec: SpaceSpec,
    prepared: &Prepared,
    state_count: usize,
    p2: Option<f64>,
    opts: &SearchOptions,
) -> Result<BoundResult> {
    let start = Instant::now();
    if !(opts.bisect_tol >= 1e-9) {
        return Err(Error::InvalidParams(format!("bisection tolerance {} is below 1e-9", opts.bisect_tol)));
    }
    if let Some(q) = p2 {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidParams(format!("p2 = {q} outside [0, 1]")));
        }
    }
    let decide = |p: f64| -> Result<bool> {
        let params = params_for(model, p, p2)?;
        let op = prepared.operator(&params)?;
        Ok(decide_subcritical(op.as_ref(), opts.margin, &opts.power, &params)?.subcritical)
    };
    let certify = |p: f64| -> Result<SpectralReport> {
        let params = params_for(model, p, p2)?;
        let op = prepared.operator(&params)?;
        let cert = is_subcritical(op.as_ref(), opts.margin, &opts.power)?;
        if !cert.report.converged {
            return Err(Error::NonConvergence { params, iterations: cert.report.iterations, residual: cert.report.residual });
        }
        if !cert.subcritical {
            return Err(Error::CertificationFailed { bound: p, radius: cert.report.radius_estimate });
        }
        Ok(cert.report)
    };

    let floor_p = opts.bisect_tol;
    if !decide(floor_p)? {
        return Err(Error::Degenerate(floor_p));
    }
    // p = 1 is never probed: the mean matrix there is typically defective
    // with rho = 1, where power iteration only converges sublinearly
    let (mut lo, mut hi) = (floor_p, 1.0);
    let mut iterations = 0;
    while hi - lo > opts.bisect_tol {
        let mid = 0.5 * (lo + hi);
        if decide(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let mut bound = floor6(lo);
    let report = match certify(bound) {
        Ok(r) => r,
        // the decision at `lo` may have come from rigorous bounds while the
        // converged estimate sits a hair above the threshold; step down once
        Err(Error::CertificationFailed { .. }) if bound >= 1e-6 => {
            bound = floor6(bound - 1e-6);
            certify(bound)?
        }
        Err(e) => return Err(e),
    };
    let scan = if opts.scan { grid_scan(model, prepared, p2, &opts.power)? } else { Vec::new() };
    Ok(BoundResult {
        model: *model,
        space: spec,
        p2,
        bound,
        lambda_at_bound: report.radius_estimate,
        bisection_iterations: iterations,
        wall_time: start.elapsed().as_secs_f64(),
        state_count,
        distinct_poly_count: prepared.distinct_polys(),
        scan,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableSelector {
    Main,
    Comparison,
    Inhomogeneous,
    ThreeD,
}

impl FromStr for TableSelector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "main" => Ok(TableSelector::Main),
            "comparison" => Ok(TableSelector::Comparison),
            "inhomogeneous" => Ok(TableSelector::Inhomogeneous),
            "three-d" => Ok(TableSelector::ThreeD),
            _ => Err(Error::InvalidParams(format!("unknown table '{s}'"))),
        }
    }
}

impl fmt::Display for TableSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TableSelector::Main => "main",
            TableSelector::Comparison => "comparison",
            TableSelector::Inhomogeneous => "inhomogeneous",
            TableSelector::ThreeD => "three-d",
        })
    }
}

/// One published row: model, space and the value to reproduce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: ModelSpec,
    pub space: SpaceSpec,
    pub p2: Option<f64>,
    pub published: f64,
}

fn row(model: &str, space: SpaceSpec, p2: Option<f64>, published: f64) -> TableRow {
    TableRow { model: model.parse().expect("catalog model id"), space, p2, published }
}

pub fn table_rows(selector: TableSelector) -> Vec<TableRow> {
    use SpaceSpec::*;
    let big = Truncated { k: 16, i: 7, j: 3620 };
    match selector {
        TableSelector::Main => vec![
            row("site-vl2", big, None, 0.6967),
            row("bond-vl2", big, None, 0.636893),
            row("site-alt2", Plain { k: 15 }, None, 0.525),
            row("bond-alt2", Plain { k: 13 }, None, 0.4022),
            row("site-vl3", Triangle { side: 5, focus: 6 }, None, 0.41507),
            row("bond-vl3", Triangle { side: 4, focus: 3 }, None, 0.36684),
        ],
        TableSelector::Comparison => vec![
            row("bond-vl2", Truncated { k: 6, i: 2, j: 0 }, None, 0.624211),
            row("bond-vl2", Truncated { k: 7, i: 2, j: 0 }, None, 0.627067),
            row("bond-vl2", Truncated { k: 8, i: 2, j: 1 }, None, 0.629203),
            row("bond-vl2", Truncated { k: 9, i: 2, j: 10 }, None, 0.630864),
            row("bond-vl2", Truncated { k: 10, i: 2, j: 28 }, None, 0.632193),
            row("bond-vl2", Truncated { k: 11, i: 2, j: 44 }, None, 0.63328),
        ],
        TableSelector::Inhomogeneous => vec![
            row("inhom-1", Plain { k: 15 }, Some(0.6), 0.7693),
            row("inhom-1", Plain { k: 15 }, Some(0.8), 0.5444),
            row("inhom-2", Plain { k: 15 }, Some(0.6), 0.8189),
            row("inhom-2", Plain { k: 14 }, Some(0.8), 0.6103),
            row("inhom-2", Plain { k: 14 }, Some(1.0), 0.5223),
            row("inhom-3", Plain { k: 13 }, Some(0.6), 0.7759),
            row("inhom-3", Plain { k: 13 }, Some(0.8), 0.5753),
            row("inhom-4", Plain { k: 13 }, Some(0.6), 0.7720),
            row("inhom-4", Plain { k: 13 }, Some(0.8), 0.5583),
            row("inhom-5", Plain { k: 15 }, Some(0.5), 0.7539),
        ],
        TableSelector::ThreeD => vec![
            row("site-vl3", Triangle { side: 4, focus: 3 }, None, 0.41),
            row("site-vl3", Triangle { side: 5, focus: 6 }, None, 0.41507),
            row("site-vl3", Triangle { side: 5, focus: 3 }, None, 0.4112),
            row("bond-vl3", Triangle { side: 4, focus: 3 }, None, 0.36684),
        ],
    }
}

/// Replaces the space of a 2D row by the plain space with windows of `k`
/// vertices. Triangle spaces are left alone.
pub fn override_space(space: SpaceSpec, k: usize) -> SpaceSpec {
    match space {
        SpaceSpec::Plain { .. } | SpaceSpec::Truncated { .. } => SpaceSpec::Plain { k },
        SpaceSpec::Triangle { .. } => space,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub row: TableRow,
    pub result: BoundResult,
}

/// Recomputes a published table. `k` replaces the window size of 2D rows
/// for runs on small machines; each result records the space actually used.
pub fn reproduce_tables(selector: TableSelector, opts: &SearchOptions, k: Option<usize>) -> Result<Vec<TableEntry>> {
    table_rows(selector)
        .into_iter()
        .map(|r| {
            let space = k.map_or(r.space, |k| override_space(r.space, k));
            let result = lower_bound(&r.model, space, r.p2, opts)?;
            Ok(TableEntry { row: r, result })
        })
        .collect()
}
