//! Command-line front end: argument handling, running the solver and writing
//! the result files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chp_core::bound::WindowEvent;
use chp_core::slr::{IterateRecord, ResultBundle, SlrConfig, Termination};
use chp_core::{load_case, CaseData, Mode};
use clap::{Parser, ValueEnum};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    System,
    Nodal,
}

/// Compute convex-hull prices for a unit commitment case and report their
/// quality.
#[derive(Debug, Clone, Parser)]
#[command(name = "chp", version)]
pub struct Args {
    /// Case document (JSON).
    #[arg(long)]
    pub case: PathBuf,
    /// Solve a nodal case as a single system-wide balance.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, default_value_t = 1e-3)]
    pub quality_tol: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 900.0)]
    pub max_seconds: f64,
    /// Stepsize contraction parameter (> 1).
    #[arg(long = "M", default_value_t = 20.0)]
    pub m: f64,
    /// Stepsize exponent parameter, in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// Fraction of the initial gap estimate used for the first step.
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1)]
    pub exact_dual_every: usize,
    /// Worker threads (defaults to the available parallelism).
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Also write convergence.svg.
    #[arg(long)]
    pub plot: bool,
    /// Reserved; the solver is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Settings of one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub case_path: PathBuf,
    pub mode: Option<Mode>,
    pub slr: SlrConfig,
    pub output_dir: PathBuf,
    pub emit_plot: bool,
    pub random_seed: Option<u64>,
}

impl RunConfig {
    pub fn from_args(args: &Args) -> Result<Self> {
        let mut slr = SlrConfig {
            m: args.m,
            rho: args.rho,
            alpha: args.alpha,
            exact_dual_every: args.exact_dual_every,
            quality_tol: args.quality_tol,
            max_iters: args.max_iters,
            max_seconds: args.max_seconds,
            ..SlrConfig::default()
        };
        if let Some(w) = args.workers {
            slr.worker_count = w;
        }
        slr.validate()?;
        Ok(RunConfig {
            case_path: args.case.clone(),
            mode: args.mode.map(|m| match m {
                ModeArg::System => Mode::System,
                ModeArg::Nodal => Mode::Nodal,
            }),
            slr,
            output_dir: args.out.clone(),
            emit_plot: args.plot,
            random_seed: args.seed,
        })
    }
}

/// Outcome of a completed run, mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    LimitReached,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Converged => 0,
            Outcome::LimitReached => 2,
        }
    }
}

/// Load the case named in the configuration and apply the mode override.
pub fn prepare_case(cfg: &RunConfig) -> Result<CaseData> {
    let text = fs::read_to_string(&cfg.case_path)
        .with_context(|| format!("cannot read case file {}", cfg.case_path.display()))?;
    let case = load_case(&text).with_context(|| format!("invalid case {}", cfg.case_path.display()))?;
    match (cfg.mode, case.mode) {
        (None, _) => Ok(case),
        (Some(Mode::System), Mode::Nodal) => Ok(case.to_system_mode()),
        (Some(want), have) if want == have => Ok(case),
        (Some(want), have) => bail!("cannot run a {have} case in {want} mode"),
    }
}

/// Load, solve and write every report.
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let case = prepare_case(cfg)?;
    log::info!(
        "{}: {} units, {} hours, {} mode",
        cfg.case_path.display(),
        case.units.len(),
        case.horizon,
        case.mode
    );
    let bundle = chp_core::run(&case, &cfg.slr)?;
    emit_reports(&bundle, &case, cfg)?;
    Ok(if bundle.termination.met_tolerance() {
        Outcome::Converged
    } else {
        Outcome::LimitReached
    })
}

fn money(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        v.to_string()
    }
}

fn event_text(e: &Option<WindowEvent>) -> String {
    match e {
        None => String::new(),
        Some(e) => format!(
            "{}+{}:{}:{}",
            e.anchor,
            e.length,
            money(e.qbar),
            if e.accepted { "accepted" } else { "rejected" }
        ),
    }
}

pub const ITERATION_COLUMNS: [&str; 11] = [
    "k",
    "s_k",
    "g_norm",
    "L_tilde",
    "q_exact",
    "q_best",
    "qbar_best",
    "feasible_cost",
    "quality",
    "duality_gap",
    "window_event",
];

fn iteration_row(r: &IterateRecord) -> [String; 11] {
    [
        r.k.to_string(),
        r.stepsize.to_string(),
        r.g_norm.to_string(),
        money(r.l_tilde),
        r.q_exact.map(money).unwrap_or_default(),
        money(r.q_best),
        money(r.qbar_best),
        money(r.feasible_cost),
        r.quality.to_string(),
        r.duality_gap.to_string(),
        event_text(&r.window_event),
    ]
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Serialize)]
struct TimingSummary {
    total_seconds: f64,
    subproblem_seconds: f64,
    bound_seconds: f64,
    feasible_cost_seconds: f64,
    bound_share: f64,
    feasible_cost_share: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    case: String,
    mode: Mode,
    units: usize,
    horizon: usize,
    termination: Termination,
    iterations: usize,
    q_best: Option<f64>,
    qbar_best: Option<f64>,
    feasible_cost: Option<f64>,
    quality: Option<f64>,
    duality_gap: Option<f64>,
    windows_closed: usize,
    bounds_rejected: usize,
    feasible_solution_valid: Option<bool>,
    timings: TimingSummary,
    config: &'a SlrConfig,
}

/// Write `iterations.csv`, `prices.csv`, `summary.json` and, when enabled,
/// `convergence.svg` into the output directory.
pub fn emit_reports(bundle: &ResultBundle, case: &CaseData, cfg: &RunConfig) -> Result<()> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;

    let path = dir.join("iterations.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(ITERATION_COLUMNS)?;
    for r in &bundle.history {
        w.write_record(iteration_row(r))?;
    }
    w.flush().with_context(|| format!("cannot write {}", path.display()))?;

    let path = dir.join("prices.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
    let prices = &bundle.prices;
    match case.mode {
        Mode::System => {
            w.write_record(["hour", "lambda"])?;
            for t in 0..prices.horizon() {
                w.write_record([(t + 1).to_string(), money(prices.get(0, t))])?;
            }
        }
        Mode::Nodal => {
            w.write_record(["bus", "hour", "lambda"])?;
            for n in 0..prices.rows() {
                for t in 0..prices.horizon() {
                    w.write_record([(n + 1).to_string(), (t + 1).to_string(), money(prices.get(n, t))])?;
                }
            }
        }
    }
    w.flush().with_context(|| format!("cannot write {}", path.display()))?;

    let l = &bundle.ledger;
    let t = &bundle.timings;
    let summary = Summary {
        case: cfg.case_path.display().to_string(),
        mode: case.mode,
        units: case.units.len(),
        horizon: case.horizon,
        termination: bundle.termination,
        iterations: bundle.iterations(),
        q_best: finite(l.q_best),
        qbar_best: finite(l.qbar_best),
        feasible_cost: finite(l.feasible_cost_best),
        quality: finite(l.quality),
        duality_gap: finite(l.duality_gap),
        windows_closed: l.window_events.len(),
        bounds_rejected: l.rejections(),
        feasible_solution_valid: bundle.feasible.as_ref().map(|f| f.feasible),
        timings: TimingSummary {
            total_seconds: t.total,
            subproblem_seconds: t.subproblems,
            bound_seconds: t.bound,
            feasible_cost_seconds: t.recovery,
            bound_share: t.bound_share(),
            feasible_cost_share: t.recovery_share(),
        },
        config: &cfg.slr,
    };
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")
        .with_context(|| format!("cannot write {}", path.display()))?;

    if cfg.emit_plot {
        let path = dir.join("convergence.svg");
        fs::write(&path, convergence_svg(&bundle.history)).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

/// Best lower and upper bound envelopes and the exact dual values per
/// iteration, drawn relative to the final best dual value.
pub fn convergence_svg(history: &[IterateRecord]) -> String {
    let (w, h, pad) = (720.0, 420.0, 50.0);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let reference = history.last().map_or(f64::NAN, |r| r.q_best);
    let rel = |v: f64| (v - reference) / reference.abs().max(1.0);
    let series = |f: &dyn Fn(&IterateRecord) -> Option<f64>| -> Vec<(usize, f64)> {
        history
            .iter()
            .filter_map(|r| f(r).filter(|v| v.is_finite()).map(|v| (r.k, rel(v))))
            .collect()
    };
    let lower = series(&|r| Some(r.q_best));
    let upper = series(&|r| Some(r.qbar_best));
    let dual = series(&|r| r.q_exact);
    let all: Vec<f64> = lower.iter().chain(&upper).chain(&dual).map(|p| p.1).collect();
    if all.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let top = upper.first().map_or(0.0, |p| p.1).max(1e-9);
    let bottom = all.iter().copied().fold(0.0, f64::min).max(-top);
    let kmax = history.last().map_or(1, |r| r.k.max(1)) as f64;
    let x = |k: usize| pad + (w - 2.0 * pad) * k as f64 / kmax;
    let y = |v: f64| {
        let v = v.clamp(bottom, top);
        h - pad - (h - 2.0 * pad) * (v - bottom) / (top - bottom).max(1e-12)
    };
    let _ = writeln!(
        svg,
        r##"<path d="M{pad} {pad} V{} H{}" fill="none" stroke="#444"/>"##,
        h - pad,
        w - pad
    );
    let _ = writeln!(
        svg,
        r##"<text x="{pad}" y="{}" font-size="12" font-family="sans-serif">relative to final best dual value; iterations 0..{kmax}</text>"##,
        pad - 15.0
    );
    for (pts, color) in [(&lower, "#1f77b4"), (&upper, "#d62728")] {
        if pts.is_empty() {
            continue;
        }
        let mut d = String::new();
        for (i, (k, v)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, x(*k), y(*v));
        }
        let _ = writeln!(svg, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.trim_end());
    }
    for (k, v) in &dual {
        let _ = writeln!(svg, r##"<circle cx="{:.2}" cy="{:.2}" r="1.2" fill="#2ca02c"/>"##, x(*k), y(*v));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Parse an `iterations.csv` file back into records.
pub fn read_iterations(path: &Path) -> Result<Vec<IterateRecord>> {
    let mut rd = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let num = |i: usize| -> Result<f64> {
            row[i].parse::<f64>().with_context(|| format!("column {} value {:?}", ITERATION_COLUMNS[i], &row[i]))
        };
        let event = if row[10].is_empty() {
            None
        } else {
            let parts: Vec<&str> = row[10].split(':').collect();
            let (anchor, length) = parts[0].split_once('+').context("window event")?;
            Some(WindowEvent {
                anchor: anchor.parse()?,
                length: length.parse()?,
                qbar: parts[1].parse()?,
                accepted: parts[2] == "accepted",
            })
        };
        out.push(IterateRecord {
            k: row[0].parse()?,
            stepsize: num(1)?,
            g_norm: num(2)?,
            l_tilde: num(3)?,
            q_exact: if row[4].is_empty() { None } else { Some(num(4)?) },
            q_best: num(5)?,
            qbar_best: num(6)?,
            feasible_cost: num(7)?,
            quality: num(8)?,
            duality_gap: num(9)?,
            window_event: event,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_defaults() {
        let a = Args::parse_from(["chp", "--case", "x.json"]);
        let c = RunConfig::from_args(&a).unwrap();
        assert_eq!(c.slr.quality_tol, 1e-3);
        assert_eq!(c.slr.max_iters, 5000);
        assert_eq!(c.slr.m, 20.0);
        assert_eq!(c.slr.exact_dual_every, 1);
        assert!(!c.emit_plot);
    }

    #[test]
    fn rejects_out_of_range_flags() {
        let a = Args::parse_from(["chp", "--case", "x.json", "--M", "0.5"]);
        assert!(RunConfig::from_args(&a).is_err());
    }

    #[test]
    fn money_has_six_decimals() {
        assert_eq!(money(1.5), "1.500000");
        assert_eq!(money(f64::INFINITY), "inf");
    }
}
