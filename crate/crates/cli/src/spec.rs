use std::f64::consts::PI;
use std::path::PathBuf;

use conflab::metric::Estimator;
use conflab::{Error, Manifold, Point, Result, WeightField};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    FlatIdentity,
    SphereBubble,
    LogCusp,
    Burago,
    Schrodinger,
    Custom,
}

impl Preset {
    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::FlatIdentity => "flat-identity",
            Preset::SphereBubble => "sphere-bubble",
            Preset::LogCusp => "log-cusp",
            Preset::Burago => "burago",
            Preset::Schrodinger => "schrodinger",
            Preset::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphParams {
    /// Lattice spacing of the single-level graph.
    pub spacing: f64,
    /// ε of the single-level graph.
    pub eps: f64,
    /// Decreasing ε values for refinement and extrapolation.
    #[serde(default)]
    pub eps_schedule: Vec<f64>,
    #[serde(default = "default_estimator")]
    pub estimator: Estimator,
    /// ε/spacing at the coarsest schedule entry.
    #[serde(default = "default_refine_ratio")]
    pub refine_ratio: f64,
    #[serde(default = "default_ratio_growth")]
    pub ratio_growth: f64,
}

fn default_estimator() -> Estimator {
    Estimator::DEFAULT_LINE
}

fn default_refine_ratio() -> f64 {
    3.0
}

fn default_ratio_growth() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticParams {
    #[serde(default = "two")]
    pub q: f64,
    #[serde(default = "two")]
    pub p: f64,
    /// Radius cap; the manifold default when absent.
    #[serde(default)]
    pub eta: Option<f64>,
    /// Pinching radius.
    #[serde(default = "half")]
    pub r0: f64,
    /// Curvature threshold for the pinching report.
    #[serde(default)]
    pub lambda0: Option<f64>,
}

fn two() -> f64 {
    2.0
}

fn half() -> f64 {
    0.5
}

impl Default for DiagnosticParams {
    fn default() -> Self {
        Self {
            q: 2.0,
            p: 2.0,
            eta: None,
            r0: 0.5,
            lambda0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    /// Rays (or samples) per quadrature.
    #[serde(default = "default_quadrature")]
    pub quadrature: usize,
    /// Largest point set any stage may build.
    #[serde(default = "default_points")]
    pub points: usize,
    /// Random pairs, sources or sample points, depending on the stage.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_quadrature() -> usize {
    200
}

fn default_points() -> usize {
    conflab::manifold::DEFAULT_POINT_BUDGET
}

fn default_samples() -> usize {
    50
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            quadrature: default_quadrature(),
            points: default_points(),
            samples: default_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchrodingerParams {
    pub shape: Vec<usize>,
    /// Amplitude of the model potentials.
    pub amplitude: f64,
    /// Cover radius of the decomposition.
    pub rho: f64,
    /// Hölder exponent reported for `w`.
    #[serde(default = "half")]
    pub alpha: f64,
    /// Shape of the 2-d grid checked against the dense eigensolver.
    #[serde(default = "default_dense_shape")]
    pub dense_shape: usize,
}

fn default_dense_shape() -> usize {
    12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: Preset,
    pub manifold: Manifold,
    #[serde(default)]
    pub weight: Option<WeightField>,
    /// Parameter sweep; takes precedence over `weight` where a stage
    /// iterates over fields.
    #[serde(default)]
    pub sweep: Vec<WeightField>,
    pub graph: GraphParams,
    #[serde(default)]
    pub diagnostics: DiagnosticParams,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub schrodinger: Option<SchrodingerParams>,
    pub seed: u64,
    /// Output directory; `CONF_LAB_OUT` overrides it.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Input(msg()))
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Every field the run iterates over: the sweep, or the single weight.
    pub fn fields(&self) -> Vec<WeightField> {
        if !self.sweep.is_empty() {
            self.sweep.clone()
        } else {
            self.weight.iter().cloned().collect()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.graph;
        check(g.spacing > 0.0 && g.spacing.is_finite(), || format!("graph spacing must be positive, got {}", g.spacing))?;
        check(g.eps >= 3.0 * g.spacing * (1.0 - 1e-12), || {
            format!("graph eps = {} violates eps ≥ 3 × spacing = {}", g.eps, 3.0 * g.spacing)
        })?;
        check(g.eps_schedule.windows(2).all(|w| w[1] < w[0]), || {
            "eps schedule must be strictly decreasing".to_string()
        })?;
        check(g.eps_schedule.iter().all(|e| *e > 0.0 && e.is_finite()), || {
            "eps schedule entries must be positive".to_string()
        })?;
        check(g.refine_ratio >= 3.0 && g.ratio_growth >= 1.0, || {
            format!(
                "refine ratio {} must be ≥ 3 (eps ≥ 3 × spacing) and ratio growth {} ≥ 1",
                g.refine_ratio, g.ratio_growth
            )
        })?;
        if let Estimator::RiemannLine { k } = g.estimator {
            check(k >= 1, || "line estimator needs at least one node".to_string())?;
        }
        let d = &self.diagnostics;
        check(d.q > 1.0 && d.p > 1.0, || format!("q = {} and p = {} must exceed 1", d.q, d.p))?;
        check(d.r0 > 0.0, || format!("R0 = {} must be positive", d.r0))?;
        check(d.eta.is_none_or(|e| e > 0.0), || "eta must be positive".to_string())?;
        check(d.lambda0.is_none_or(|l| l > 0.0), || "Λ₀ must be positive".to_string())?;
        let b = &self.budgets;
        check(b.quadrature > 0 && b.points > 0 && b.samples > 0, || "budgets must be positive".to_string())?;
        for f in self.fields() {
            f.validate(&self.manifold)?;
        }
        let m = &self.manifold;
        match self.name {
            Preset::FlatIdentity => {
                check(m.is_flat(), || "flat-identity needs a torus or a box".to_string())?;
                check(self.fields().len() <= 1, || "flat-identity takes a single weight".to_string())?;
                check(!g.eps_schedule.is_empty(), || "flat-identity needs an eps schedule".to_string())?;
            }
            Preset::SphereBubble => {
                check(matches!(m, Manifold::Sphere { dim, .. } if *dim >= 3), || {
                    "sphere-bubble needs a sphere of dimension ≥ 3".to_string()
                })?;
                check(!self.fields().is_empty(), || "sphere-bubble needs bubble weights".to_string())?;
                for f in self.fields() {
                    check(matches!(f, WeightField::SphereBubble { .. }), || {
                        "sphere-bubble sweeps SphereBubble weights only".to_string()
                    })?;
                }
            }
            Preset::LogCusp => {
                check(m.is_flat(), || "log-cusp needs a torus or a box".to_string())?;
                check(self.fields().len() >= 2, || "log-cusp needs capped weights and a limit".to_string())?;
                for f in self.fields() {
                    check(matches!(f, WeightField::LogCusp { .. }), || "log-cusp sweeps LogCusp weights only".to_string())?;
                }
            }
            Preset::Burago => {
                check(matches!(m, Manifold::Torus { periods } if periods.len() == 2), || {
                    "burago needs a 2-torus".to_string()
                })?;
                check(!self.fields().is_empty(), || "burago needs an ℓ sweep".to_string())?;
                for f in self.fields() {
                    check(matches!(f, WeightField::Burago { .. }), || "burago sweeps Burago weights only".to_string())?;
                }
            }
            Preset::Schrodinger => {
                check(matches!(m, Manifold::Torus { .. }), || "schrodinger needs a torus".to_string())?;
                let Some(s) = &self.schrodinger else {
                    return Err(Error::Input("schrodinger needs a `schrodinger` section".into()));
                };
                check(s.shape.len() == m.dim() && s.shape.iter().all(|k| *k >= 8), || {
                    "schrodinger shape needs one entry ≥ 8 per dimension".to_string()
                })?;
                check(s.dense_shape >= 8 && s.dense_shape <= 24, || "dense oracle shape must lie in [8, 24]".to_string())?;
                check(s.amplitude.is_finite() && s.rho > 0.0 && s.alpha > 0.0 && s.alpha <= 1.0, || {
                    "schrodinger amplitude must be finite, rho positive, alpha in (0, 1]".to_string()
                })?;
            }
            Preset::Custom => {
                check(!self.fields().is_empty(), || "custom needs a weight or a sweep".to_string())?;
            }
        }
        Ok(())
    }

    /// The canonical experiment for a preset, with the parameters the
    /// acceptance suite runs.
    pub fn preset(name: Preset, seed: u64) -> Self {
        let torus2 = Manifold::flat_torus(2).expect("torus");
        let graph = |spacing: f64, eps: f64| GraphParams {
            spacing,
            eps,
            eps_schedule: Vec::new(),
            estimator: Estimator::DEFAULT_LINE,
            refine_ratio: 3.0,
            ratio_growth: 1.5,
        };
        // 128 cells per period with ε = 5 cells.
        let cell = 2.0 * PI / 128.0;
        let base = |name, manifold, graph| ExperimentSpec {
            name,
            manifold,
            weight: None,
            sweep: Vec::new(),
            graph,
            diagnostics: DiagnosticParams::default(),
            budgets: Budgets::default(),
            schrodinger: None,
            seed,
            output: None,
        };
        match name {
            Preset::FlatIdentity => ExperimentSpec {
                weight: Some(WeightField::constant(0.0)),
                graph: GraphParams {
                    eps_schedule: vec![0.3, 0.15, 0.075],
                    ..graph(0.05, 0.15)
                },
                ..base(name, torus2, graph(0.05, 0.15))
            },
            Preset::SphereBubble => {
                let pole = Point(vec![0.0, 0.0, 0.0, 1.0]);
                ExperimentSpec {
                    sweep: [1.0, 2.0, 10.0, 100.0]
                        .iter()
                        .map(|l| WeightField::sphere_bubble(*l, pole.clone()))
                        .collect(),
                    budgets: Budgets {
                        samples: 1000,
                        ..Budgets::default()
                    },
                    ..base(name, Manifold::sphere(3, 1.0).expect("sphere"), graph(0.3, 0.9))
                }
            }
            Preset::LogCusp => {
                let x0 = Point(vec![PI + 0.0123, PI + 0.0171]);
                ExperimentSpec {
                    sweep: [Some(2.0), Some(4.0), Some(8.0), None]
                        .iter()
                        .map(|k| WeightField::log_cusp(x0.clone(), 1.0, *k))
                        .collect(),
                    budgets: Budgets {
                        samples: 16,
                        quadrature: 400,
                        ..Budgets::default()
                    },
                    ..base(name, torus2, graph(cell, 5.0 * cell))
                }
            }
            Preset::Burago => ExperimentSpec {
                sweep: (1..=16).map(WeightField::burago).collect(),
                budgets: Budgets {
                    samples: 20,
                    ..Budgets::default()
                },
                ..base(name, torus2, graph(cell, 5.0 * cell))
            },
            Preset::Schrodinger => ExperimentSpec {
                schrodinger: Some(SchrodingerParams {
                    shape: vec![12; 3],
                    amplitude: 0.3,
                    rho: 0.8,
                    alpha: 0.5,
                    dense_shape: 12,
                }),
                ..base(name, Manifold::torus(vec![2.0; 3]).expect("torus"), graph(0.1, 0.3))
            },
            Preset::Custom => ExperimentSpec {
                weight: Some(WeightField::constant(0.0)),
                budgets: Budgets {
                    samples: 8,
                    ..Budgets::default()
                },
                ..base(name, torus2, graph(0.1, 0.3))
            },
        }
    }
}
