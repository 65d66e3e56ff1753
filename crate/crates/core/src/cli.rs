//! Command line front end.
//!
//! Exit codes: 0 on success, 2 when an input fails validation or a library
//! precondition, 1 for usage and I/O errors.

use std::io::{Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bounds;
use crate::dimension::{self, DimensionReport, MeasureArg, TransportProfile};
use crate::fractal_catalog::{self, CatalogGenerator, Dyadic, NestedBoxMode};
use crate::measures::{AtomicMeasure, Point};
use crate::solver::{self, SolveOptions};
use crate::transport_graph::{self, TransportPath};

#[derive(Debug, Parser)]
#[command(name = "ramified", version, about = "Branched optimal transport between atomic measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check that a path carries the first measure onto the second.
    Validate {
        #[arg(long = "measure", required = true, num_args = 1)]
        measures: Vec<String>,
        #[arg(long)]
        path: String,
        /// Relative balance tolerance.
        #[arg(long, default_value_t = transport_graph::BALANCE_TOL)]
        tol: f64,
    },
    /// Mα cost of a path.
    Cost {
        #[arg(long)]
        path: String,
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
    },
    /// Compute dα between two measures.
    Solve {
        #[arg(long = "measure", required = true, num_args = 1)]
        measures: Vec<String>,
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = 7)]
        max_terminals: usize,
    },
    /// Lower bounds on dα.
    Bounds {
        #[arg(long = "measure", required = true, num_args = 1)]
        measures: Vec<String>,
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        /// Target point, comma separated; defaults to the origin.
        #[arg(long)]
        point: Option<String>,
        /// Weight bound for the projection bound.
        #[arg(long)]
        lambda: Option<f64>,
        /// Radius for the projection bound.
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Step costs of a catalog sequence.
    Sequence {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long)]
        csv: bool,
    },
    /// Transport dimension report, or a sweep over alpha with --csv.
    Dimension {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long)]
        csv: bool,
    },
    /// Dimensional distance between two families or measures.
    Distance {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long = "measure", num_args = 1)]
        measures: Vec<String>,
    },
}

#[derive(Debug, Args)]
struct FamilyArgs {
    /// cantor, fat_cantor, self_similar, dyadic or nested_box.
    #[arg(long = "family", num_args = 1)]
    families: Vec<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    h: Option<usize>,
    /// determinate or random.
    #[arg(long, default_value = "determinate")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    Usage(anyhow::Error),
    Invalid(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Invalid(e.into())
    }
}

fn usage(e: anyhow::Error) -> Failure {
    Failure::Usage(e)
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(Failure::Usage(e)) => {
            let _ = writeln!(err, "error: {e:#}");
            1
        }
        Err(Failure::Invalid(e)) => {
            let _ = writeln!(err, "error: {e:#}");
            2
        }
    }
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| usage(e.into()))?;
    writeln!(out, "{text}").map_err(|e| usage(e.into()))
}

fn read_source(name: &str) -> Result<String, Failure> {
    if name == "-" {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .context("reading standard input")
            .map_err(usage)?;
        return Ok(s);
    }
    std::fs::read_to_string(Path::new(name))
        .with_context(|| format!("reading {name}"))
        .map_err(usage)
}

fn read_measure(name: &str) -> Result<AtomicMeasure, Failure> {
    let text = read_source(name)?;
    AtomicMeasure::from_json(&text)
        .with_context(|| format!("parsing measure {name}"))
        .map_err(Failure::Invalid)
}

fn read_path(name: &str) -> Result<TransportPath, Failure> {
    let text = read_source(name)?;
    TransportPath::from_json(&text)
        .with_context(|| format!("parsing path {name}"))
        .map_err(Failure::Invalid)
}

fn two_measures(names: &[String]) -> Result<(AtomicMeasure, AtomicMeasure), Failure> {
    match names {
        [a, b] => Ok((read_measure(a)?, read_measure(b)?)),
        _ => Err(usage(anyhow!("expected exactly two --measure arguments, got {}", names.len()))),
    }
}

#[derive(Serialize)]
struct CostOutput {
    alpha: f64,
    cost: f64,
}

#[derive(Serialize)]
struct BoundsOutput {
    alpha: f64,
    point: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    negative_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    positive_alpha_tail: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    separation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    projection: Option<f64>,
}

#[derive(Serialize)]
struct SequenceRow {
    n: usize,
    atoms: usize,
    step_cost: f64,
    closed_form: Option<f64>,
}

#[derive(Serialize)]
struct SweepRow {
    alpha: f64,
    one_over_one_minus_alpha: f64,
    step_ratio: f64,
    admissible: bool,
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32, Failure> {
    match command {
        Command::Validate { measures, path, tol } => {
            let (a, b) = two_measures(&measures)?;
            let g = read_path(&path)?;
            let report = transport_graph::validate_with_tol(&g, &a, &b, tol)?;
            emit_json(out, &report)?;
            Ok(if report.valid { 0 } else { 2 })
        }
        Command::Cost { path, alpha } => {
            let g = read_path(&path)?;
            let cost = transport_graph::cost_malpha(&g, alpha)?;
            emit_json(out, &CostOutput { alpha, cost })?;
            Ok(0)
        }
        Command::Solve {
            measures,
            alpha,
            seed,
            tol,
            max_terminals,
        } => {
            let (a, b) = two_measures(&measures)?;
            let opts = SolveOptions {
                seed,
                tol,
                max_terminals,
                ..SolveOptions::default()
            };
            let result = solver::solve_dalpha(&a, &b, alpha, &opts)?;
            emit_json(out, &result)?;
            Ok(0)
        }
        Command::Bounds {
            measures,
            alpha,
            point,
            lambda,
            radius,
        } => {
            let a = match measures.first() {
                Some(name) => read_measure(name)?,
                None => return Err(usage(anyhow!("--measure is required"))),
            };
            let b = match measures.get(1) {
                Some(name) => Some(read_measure(name)?),
                None => None,
            };
            if measures.len() > 2 {
                return Err(usage(anyhow!("at most two --measure arguments")));
            }
            let p = match point {
                Some(text) => parse_point(&text).map_err(usage)?,
                None => Point::origin(a.ambient_dim()),
            };
            let tail_ok = (0.0..1.0).contains(&alpha) && a.is_probability(bounds::PROBABILITY_TOL);
            let output = BoundsOutput {
                alpha,
                point: p.coords().to_vec(),
                negative_alpha: if alpha <= 0.0 {
                    Some(bounds::negative_alpha_dalpha_bound(&a, &p, alpha)?)
                } else {
                    None
                },
                positive_alpha_tail: if tail_ok {
                    Some(bounds::positive_alpha_tail_bound(&a, &p, alpha)?)
                } else {
                    None
                },
                separation: match &b {
                    Some(b) if alpha < 1.0 => Some(bounds::separation_lower_bound(&a, b, alpha)?),
                    _ => None,
                },
                projection: match (lambda, radius) {
                    (Some(l), Some(r)) => Some(bounds::projection_lower_bound(l, r, alpha)?),
                    (None, None) => None,
                    _ => return Err(usage(anyhow!("--lambda and --radius go together"))),
                },
            };
            emit_json(out, &output)?;
            Ok(0)
        }
        Command::Sequence { family, n, alpha, csv } => {
            let gen = single_family(&family)?;
            let steps = fractal_catalog::generate_all(&gen, n)?;
            let mut rows = Vec::with_capacity(steps.len());
            for s in &steps {
                rows.push(SequenceRow {
                    n: s.n,
                    atoms: s.measure.len(),
                    step_cost: transport_graph::cost_malpha(&s.step_path, alpha)?,
                    closed_form: fractal_catalog::closed_form(&gen, s.n, alpha),
                });
            }
            if csv {
                let mut text = String::from("n,atoms,step_cost,closed_form\n");
                for r in &rows {
                    let cf = r.closed_form.map(|c| c.to_string()).unwrap_or_default();
                    text.push_str(&format!("{},{},{},{}\n", r.n, r.atoms, r.step_cost, cf));
                }
                write!(out, "{text}").map_err(|e| usage(e.into()))?;
            } else {
                emit_json(out, &rows)?;
            }
            Ok(0)
        }
        Command::Dimension { family, csv } => {
            let gen = single_family(&family)?;
            if csv {
                let profile = TransportProfile::from_generator(&gen)?;
                let mut text = String::from("alpha,one_over_one_minus_alpha,step_ratio,admissible\n");
                for row in sweep(&profile) {
                    text.push_str(&format!(
                        "{},{},{},{}\n",
                        row.alpha, row.one_over_one_minus_alpha, row.step_ratio, row.admissible
                    ));
                }
                write!(out, "{text}").map_err(|e| usage(e.into()))?;
            } else {
                let report: DimensionReport = dimension::sandwich_check(&gen)?;
                emit_json(out, &report)?;
            }
            Ok(0)
        }
        Command::Distance { family, measures } => {
            let mut args: Vec<MeasureArg> = families(&family)?.into_iter().map(MeasureArg::Generator).collect();
            for name in &measures {
                args.push(MeasureArg::Atomic(read_measure(name)?));
            }
            let [x, y] = <[MeasureArg; 2]>::try_from(args)
                .map_err(|a| usage(anyhow!("expected two measures in total, got {}", a.len())))?;
            emit_json(out, &dimension::dimensional_distance(&x, &y)?)?;
            Ok(0)
        }
    }
}

/// `α = −2.0, −1.9, …, 0.9`.
fn sweep(profile: &TransportProfile) -> Vec<SweepRow> {
    (0..=29)
        .map(|i| {
            let alpha = (i as f64 - 20.0) / 10.0;
            let ratio = profile.ratio(alpha);
            SweepRow {
                alpha,
                one_over_one_minus_alpha: 1.0 / (1.0 - alpha),
                step_ratio: ratio,
                admissible: ratio < 1.0,
            }
        })
        .collect()
}

fn parse_point(text: &str) -> anyhow::Result<Point> {
    let coords = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad coordinate {s:?}")))
        .collect::<anyhow::Result<Vec<f64>>>()?;
    let p = Point::new(coords);
    if !p.is_finite() {
        bail!("point must be finite");
    }
    Ok(p)
}

fn single_family(args: &FamilyArgs) -> Result<CatalogGenerator, Failure> {
    let mut gens = families(args)?;
    if gens.len() != 1 {
        return Err(usage(anyhow!("expected exactly one --family, got {}", gens.len())));
    }
    Ok(gens.remove(0))
}

fn families(args: &FamilyArgs) -> Result<Vec<CatalogGenerator>, Failure> {
    args.families.iter().map(|name| family(name, args)).collect()
}

fn family(name: &str, args: &FamilyArgs) -> Result<CatalogGenerator, Failure> {
    let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| usage(anyhow!("--family {name} needs --{flag}")));
    let needn = |v: Option<usize>, flag: &str| v.ok_or_else(|| usage(anyhow!("--family {name} needs --{flag}")));
    let gen = match name.replace('-', "_").as_str() {
        "cantor" => CatalogGenerator::Cantor,
        "fat_cantor" => CatalogGenerator::fat_cantor(need(args.lambda, "lambda")?)?,
        "self_similar" => CatalogGenerator::self_similar(needn(args.k, "k")?, need(args.sigma, "sigma")?)?,
        "dyadic" => CatalogGenerator::dyadic(Dyadic::uniform(args.m.unwrap_or(2)))?,
        "nested_box" => {
            let mode = match args.mode.as_str() {
                "determinate" => NestedBoxMode::Determinate,
                "random" => NestedBoxMode::Random(args.seed),
                other => return Err(usage(anyhow!("unknown mode {other:?}"))),
            };
            CatalogGenerator::nested_box(needn(args.k, "k")?, needn(args.m, "m")?, needn(args.h, "h")?, mode)?
        }
        other => return Err(usage(anyhow!("unknown family {other:?}"))),
    };
    Ok(gen)
}
