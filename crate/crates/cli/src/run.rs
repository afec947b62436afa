use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use conflab::metric::{write_distance_csv, write_distance_matrix, DistanceMatrix};
use conflab::{Error, ErrorKind, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::spec::{ExperimentSpec, Preset};
use crate::stages;

/// A pass/fail check tied to one numbered acceptance criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub criterion: u8,
    pub check: String,
    pub value: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub passed: bool,
}

impl Flag {
    pub fn range(criterion: u8, check: impl Into<String>, value: f64, lo: Option<f64>, hi: Option<f64>) -> Self {
        let passed = value.is_finite() && lo.is_none_or(|l| value >= l) && hi.is_none_or(|h| value <= h);
        Self {
            criterion,
            check: check.into(),
            value,
            lo,
            hi,
            passed,
        }
    }

    pub fn at_most(criterion: u8, check: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::range(criterion, check, value, None, Some(bound))
    }

    pub fn at_least(criterion: u8, check: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::range(criterion, check, value, Some(bound), None)
    }

    /// `|value − target| ≤ tol`.
    pub fn near(criterion: u8, check: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        Self::range(criterion, check, value, Some(target - tol), Some(target + tol))
    }

    /// Boolean condition, recorded as 1 / 0.
    pub fn holds(criterion: u8, check: impl Into<String>, ok: bool) -> Self {
        Self::range(criterion, check, if ok { 1.0 } else { 0.0 }, Some(1.0), None)
    }

    fn describe_bound(&self) -> String {
        match (self.lo, self.hi) {
            (Some(l), Some(h)) => format!("in [{l:.6e}, {h:.6e}]"),
            (Some(l), None) => format!("≥ {l:.6e}"),
            (None, Some(h)) => format!("≤ {h:.6e}"),
            (None, None) => "finite".into(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {:>2} {}: {:.6e} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.criterion,
            self.check,
            self.value,
            self.describe_bound()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub status: StageStatus,
    pub error: Option<String>,
    pub output: Value,
    /// Files written by the stage, relative to the output directory.
    pub artifacts: Vec<String>,
}

/// Wall-clock record of a stage; kept out of the report JSON so identical
/// specs give identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
    /// Criterion and limit in seconds for stages with a runtime bound.
    pub limit: Option<(u8, f64)>,
}

impl StageTiming {
    pub fn within_limit(&self) -> bool {
        self.limit.is_none_or(|(_, l)| self.seconds <= l)
    }

    pub fn line(&self) -> Option<String> {
        let (c, l) = self.limit?;
        Some(format!(
            "[{}] criterion {:>2} runtime of {}: {:.1} s ≤ {:.0} s",
            if self.within_limit() { "PASS" } else { "FAIL" },
            c,
            self.stage,
            self.seconds,
            l
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub spec: ExperimentSpec,
    pub output_dir: PathBuf,
    pub stages: Vec<StageReport>,
    pub flags: Vec<Flag>,
    /// Every stage ran and every flag passed.
    pub passed: bool,
    /// Error class of the first failed stage.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error_kind: Option<String>,
    #[serde(skip)]
    pub timings: Vec<StageTiming>,
}

impl RunReport {
    /// Flag conjunction and runtime limits.
    pub fn succeeded(&self) -> bool {
        self.passed && self.timings.iter().all(StageTiming::within_limit)
    }

    /// Process exit code: 0 pass, 2 validation, 3 numeric, 4 resource; a
    /// failed flag without a stage error counts as numeric.
    pub fn exit_code(&self) -> i32 {
        match self.error_kind.as_deref() {
            Some("validation") => 2,
            Some("resource") => 4,
            Some(_) => 3,
            None if self.succeeded() => 0,
            None => 3,
        }
    }
}

pub fn kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Validation => "validation",
        ErrorKind::Numeric => "numeric",
        ErrorKind::Resource => "resource",
    }
}

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Validation => 2,
        ErrorKind::Numeric => 3,
        ErrorKind::Resource => 4,
    }
}

/// What a stage hands back to the runner.
#[derive(Debug, Default)]
pub struct StageOut {
    pub output: Value,
    pub flags: Vec<Flag>,
    pub artifacts: Vec<String>,
}

/// Shared state of one run: the spec and the output directory it owns.
pub struct Ctx<'a> {
    pub spec: &'a ExperimentSpec,
    pub dir: PathBuf,
}

impl Ctx<'_> {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<String> {
        fs::write(self.path(name), serde_json::to_string_pretty(value)?)?;
        Ok(name.to_string())
    }

    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<String> {
        let mut text = header.join(",");
        text.push('\n');
        for r in rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:.17e}")).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        fs::write(self.path(name), text)?;
        Ok(name.to_string())
    }

    /// Manifest + f64le matrix, plus a CSV copy for small matrices.
    pub fn write_matrix(&self, stem: &str, dm: &DistanceMatrix) -> Result<Vec<String>> {
        let manifest = format!("{stem}.json");
        let data = write_distance_matrix(dm, &self.path(&manifest))?;
        let mut out = vec![manifest, rel(&self.dir, &data)];
        if dm.values.len() <= 10_000 {
            let csv = format!("{stem}.csv");
            write_distance_csv(dm, &self.path(&csv))?;
            out.push(csv);
        }
        Ok(out)
    }
}

fn rel(dir: &Path, p: &Path) -> String {
    p.strip_prefix(dir).unwrap_or(p).to_string_lossy().into_owned()
}

/// Output directory: `CONF_LAB_OUT`, else the spec's `output`, else
/// `conflab-out/<preset>`.
pub fn output_dir(spec: &ExperimentSpec) -> PathBuf {
    match std::env::var_os("CONF_LAB_OUT") {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => spec
            .output
            .clone()
            .unwrap_or_else(|| PathBuf::from("conflab-out").join(spec.name.as_str())),
    }
}

type Stage = (&'static str, fn(&Ctx) -> Result<StageOut>, Option<(u8, f64)>);

fn plan(name: Preset) -> Vec<Stage> {
    match name {
        Preset::FlatIdentity => vec![
            ("distances", stages::flat::distances, Some((1, 120.0))),
            ("refinement", stages::flat::refinement, Some((1, 120.0))),
        ],
        Preset::SphereBubble => vec![
            ("curvature", stages::bubble::curvature, None),
            ("mass", stages::bubble::mass, None),
            ("pinching", stages::bubble::pinching, None),
        ],
        Preset::LogCusp => vec![
            ("distances", stages::cusp::distances, None),
            ("biholder", stages::cusp::biholder, None),
        ],
        Preset::Burago => vec![
            ("stable-norm", stages::burago::stable_norms, Some((5, 300.0))),
            ("convergence", stages::burago::convergence, None),
            ("weak-star", stages::burago::weak_star, None),
            ("ainfty", stages::burago::ainfty, None),
            ("isoperimetry", stages::burago::isoperimetry, None),
            ("scaling", stages::burago::scaling, None),
        ],
        Preset::Schrodinger => vec![
            ("eigen", stages::schrod::eigen, None),
            ("shift", stages::schrod::shift, None),
            ("fixed-point", stages::schrod::fixed_point, None),
            ("decomposition", stages::schrod::decomposition, None),
        ],
        Preset::Custom => vec![
            ("distances", stages::custom::distances, None),
            ("ainfty", stages::custom::ainfty, None),
        ],
    }
}

/// Runs every stage of the spec's preset in order. A stage error is
/// recorded and the remaining stages are skipped. Artifacts, `report.json`
/// and `timings.json` go to the output directory.
pub fn run(spec: &ExperimentSpec) -> Result<RunReport> {
    spec.validate()?;
    let dir = output_dir(spec);
    fs::create_dir_all(&dir)?;
    let ctx = Ctx { spec, dir: dir.clone() };
    ctx.write_json("spec.json", spec)?;
    let mut stages_out = Vec::new();
    let mut flags = Vec::new();
    let mut timings = Vec::new();
    let mut error_kind = None;
    for (name, stage, limit) in plan(spec.name) {
        if error_kind.is_some() {
            stages_out.push(StageReport {
                name: name.into(),
                status: StageStatus::Skipped,
                error: None,
                output: Value::Null,
                artifacts: Vec::new(),
            });
            continue;
        }
        let start = Instant::now();
        let result = stage(&ctx);
        timings.push(StageTiming {
            stage: name.into(),
            seconds: start.elapsed().as_secs_f64(),
            limit,
        });
        match result {
            Ok(out) => {
                flags.extend(out.flags.iter().cloned());
                stages_out.push(StageReport {
                    name: name.into(),
                    status: StageStatus::Ok,
                    error: None,
                    output: out.output,
                    artifacts: out.artifacts,
                });
            }
            Err(e) => {
                error_kind = Some(kind_name(e.kind()).to_string());
                stages_out.push(StageReport {
                    name: name.into(),
                    status: StageStatus::Failed,
                    error: Some(e.to_string()),
                    output: match &e {
                        Error::Numeric { history, .. } => serde_json::json!({ "history": history }),
                        _ => Value::Null,
                    },
                    artifacts: Vec::new(),
                });
            }
        }
    }
    let passed = error_kind.is_none() && flags.iter().all(|f| f.passed);
    let report = RunReport {
        spec: spec.clone(),
        output_dir: dir,
        stages: stages_out,
        flags,
        passed,
        error_kind,
        timings,
    };
    ctx.write_json("report.json", &report)?;
    ctx.write_json("timings.json", &report.timings)?;
    Ok(report)
}
