use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use conflab::curvature::{scalar_curvature, DerivativeMethod};
use conflab::diagnostics::{ainfty_report, BallSampler};
use conflab::metric::{build_graph, shortest_paths, stable_norm, write_distance_matrix, Estimator, StableNormOptions};
use conflab::{Error, Manifold, Result, WeightField};
use conflab_cli::run::exit_code;
use conflab_cli::{run, ExperimentSpec, Preset};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde_json::json;

#[derive(Parser)]
#[command(name = "conflab", version, about = "Conformal-weight geometry experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment spec and write its artifacts.
    Run {
        spec: PathBuf,
        /// Output directory (overrides the spec; CONF_LAB_OUT overrides both).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the canonical spec of a preset as JSON.
    Preset {
        #[arg(value_enum)]
        name: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Graph distances from random sources to every lattice node.
    Dist {
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long)]
        spacing: f64,
        #[arg(long)]
        eps: f64,
        /// Estimator JSON, e.g. '{"kind":"chain-ball"}'.
        #[arg(long, value_parser = json_arg::<Estimator>, default_value = r#"{"kind":"riemann-line","k":4}"#)]
        estimator: Estimator,
        #[arg(long, default_value_t = 8)]
        samples: usize,
        #[arg(long, default_value_t = 200)]
        quadrature: usize,
        #[arg(long, default_value_t = 2_000_000)]
        points: usize,
        /// Directory for the manifest + f64le matrix.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// A∞ report on random balls.
    Ainfty {
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.5,1.0")]
        radii: Vec<f64>,
        #[arg(long, default_value_t = 12)]
        samples: usize,
        #[arg(long, default_value_t = 200)]
        quadrature: usize,
    },
    /// Scalar curvature of the conformal metric at given points.
    Curv {
        #[command(flatten)]
        field: FieldArgs,
        /// Comma-separated coordinates; repeat for several points.
        #[arg(long, value_delimiter = ',', num_args = 1.., action = clap::ArgAction::Append, required = true)]
        point: Vec<f64>,
    },
    /// Stable norm of an integer direction on a periodic weight.
    Stablenorm {
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        direction: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "6.283185307179586,12.566370614359172")]
        t: Vec<f64>,
        #[arg(long)]
        spacing: f64,
        #[arg(long, default_value_t = 3.0)]
        refine_ratio: f64,
        #[arg(long, default_value_t = 4)]
        quadrature: usize,
        #[arg(long, default_value_t = 2_000_000)]
        points: usize,
    },
    /// Schrödinger suite on a torus grid.
    Schrod {
        #[arg(long, value_parser = json_arg::<Manifold>, default_value = r#"{"kind":"torus","periods":[2,2,2]}"#)]
        manifold: Manifold,
        #[arg(long, value_delimiter = ',', default_value = "12,12,12")]
        shape: Vec<usize>,
        #[arg(long, default_value_t = 0.3)]
        amplitude: f64,
        #[arg(long, default_value_t = 0.8)]
        rho: f64,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 12)]
        dense_shape: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct FieldArgs {
    /// Manifold JSON, e.g. '{"kind":"torus","periods":[6.283,6.283]}'.
    #[arg(long, value_parser = json_arg::<Manifold>)]
    manifold: Manifold,
    /// Weight JSON, e.g. '{"kind":"burago","ell":2}'.
    #[arg(long, value_parser = json_arg::<WeightField>)]
    weight: WeightField,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl FieldArgs {
    fn check(&self) -> Result<()> {
        self.weight.validate(&self.manifold)
    }
}

fn json_arg<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_str(s).map_err(|e| e.to_string())
}

/// Pretty JSON to stdout; a closed pipe is not an error.
fn print(v: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn report_run(spec: &ExperimentSpec) -> Result<i32> {
    let report = run(spec)?;
    for f in &report.flags {
        println!("{}", f.line());
    }
    for t in &report.timings {
        if let Some(l) = t.line() {
            println!("{l}");
        }
    }
    for s in report.stages.iter().filter(|s| s.error.is_some()) {
        eprintln!("stage {} failed: {}", s.name, s.error.as_deref().unwrap_or_default());
    }
    println!("report: {}", report.output_dir.join("report.json").display());
    Ok(report.exit_code())
}

fn execute(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::Run { spec, output } => {
            let mut spec = ExperimentSpec::from_json(&std::fs::read_to_string(&spec)?)?;
            if output.is_some() {
                spec.output = output;
            }
            report_run(&spec)
        }
        Cmd::Preset { name, seed } => {
            print(&serde_json::to_value(ExperimentSpec::preset(name, seed))?)?;
            Ok(0)
        }
        Cmd::Dist {
            field,
            spacing,
            eps,
            estimator,
            samples,
            quadrature,
            points,
            output,
        } => {
            field.check()?;
            if eps < 3.0 * spacing * (1.0 - 1e-12) {
                return Err(Error::Input(format!("eps = {eps} violates eps ≥ 3 × spacing = {}", 3.0 * spacing)));
            }
            let m = &field.manifold;
            let pts = m.lattice(spacing, points)?;
            if samples > pts.len() {
                return Err(Error::Input(format!("asked for {samples} sources out of {} nodes", pts.len())));
            }
            let mut sources = sample(&mut ChaCha8Rng::seed_from_u64(field.seed), pts.len(), samples).into_vec();
            sources.sort_unstable();
            let g = build_graph(m, &pts, eps, &field.weight, estimator, quadrature, field.seed)?;
            let dm = shortest_paths(&g, &sources)?;
            let written = match output {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    let path = dir.join("distances.json");
                    write_distance_matrix(&dm, &path)?;
                    Some(path)
                }
                None => None,
            };
            let max = dm.values.iter().cloned().filter(|v| v.is_finite()).fold(0.0, f64::max);
            print(&json!({
                "nodes": pts.len(),
                "edges": g.edge_count(),
                "sources": sources,
                "max_distance": max,
                "manifest": written,
            }))?;
            Ok(0)
        }
        Cmd::Ainfty {
            field,
            q,
            p,
            eta,
            radii,
            samples,
            quadrature,
        } => {
            field.check()?;
            let s = BallSampler::random(&field.manifold, samples, radii, eta, field.seed)?;
            let r = ainfty_report(&field.manifold, &field.weight, q, p, &s, 8, quadrature, 500)?;
            print(&serde_json::to_value(r)?)?;
            Ok(0)
        }
        Cmd::Curv { field, point } => {
            field.check()?;
            let m = &field.manifold;
            let d = m.ambient_dim();
            if point.is_empty() || point.len() % d != 0 {
                return Err(Error::Input(format!("points need {d} coordinates each")));
            }
            let rows = point
                .chunks(d)
                .map(|x| {
                    let c = scalar_curvature(m, &field.weight, x, DerivativeMethod::Exact)?;
                    Ok(json!({ "point": x, "scal": c.scal }))
                })
                .collect::<Result<Vec<_>>>()?;
            print(&json!(rows))?;
            Ok(0)
        }
        Cmd::Stablenorm {
            field,
            direction,
            t,
            spacing,
            refine_ratio,
            quadrature,
            points,
        } => {
            field.check()?;
            let opts = StableNormOptions {
                spacing,
                ratio: refine_ratio,
                quadrature,
                point_budget: points,
                ..StableNormOptions::default()
            };
            let r = stable_norm(&field.manifold, &field.weight, &direction, &t, &opts)?;
            print(&serde_json::to_value(r)?)?;
            Ok(0)
        }
        Cmd::Schrod {
            manifold,
            shape,
            amplitude,
            rho,
            alpha,
            dense_shape,
            seed,
            output,
        } => {
            let mut spec = ExperimentSpec::preset(Preset::Schrodinger, seed);
            spec.manifold = manifold;
            if let Some(p) = spec.schrodinger.as_mut() {
                p.shape = shape;
                p.amplitude = amplitude;
                p.rho = rho;
                p.alpha = alpha;
                p.dense_shape = dense_shape;
            }
            spec.output = output;
            report_run(&spec)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.cmd) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error ({}): {e}", conflab_cli::run::kind_name(e.kind()));
            ExitCode::from(exit_code(e.kind()) as u8)
        }
    }
}
