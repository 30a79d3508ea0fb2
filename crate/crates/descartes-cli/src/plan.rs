//! Run-specification files: a TOML document with sections `[system]`,
//! `[lambda]`, `[integrator]`, `[initial]`, `[monitors]`, `[output]`,
//! optional `[tolerances]` overrides and an `[inverse]` section for the
//! inverse-problem routes. All expressions are embedded strings parsed by
//! the library's expression language; validation reports every problem in
//! one pass with its `section.key` path.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use descartes::cartesian::ConstraintSystem;
use descartes::catalog::{self, LambdaSpec};
use descartes::dynamics::IntegratorConfig;
use descartes::exprlang::{parse, Expr};
use descartes::geometry::{MetricField, OneFormField};
use serde::{Deserialize, Serialize};

// ------------------------------------------------------------- raw schema --

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    /// Required for simulate/verify; optional for inverse-only files.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monitors: Option<BTreeMap<String, String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inverse: Option<InverseSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// Catalog system name; mutually exclusive with the inline fields below.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub catalog: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<BTreeMap<String, f64>>,
    // Inline definition.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraints: Option<usize>,
    /// Full metric rows (expressions); `metric_diagonal` is the shorthand.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<Vec<Vec<String>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric_diagonal: Option<Vec<String>>,
    /// N one-forms: the M given constraints first, then the auxiliaries.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forms: Option<Vec<Vec<String>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub potential: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guards: Option<BTreeMap<String, String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct LambdaSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expressions: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub count: usize,
    pub radius: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<String>>,
}

/// Inputs for the inverse-problem routes; which keys are required depends on
/// the `--route` flag (see docs/spec-format.md).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct InverseSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub functions: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric_diagonal: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surface: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_low: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_high: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    // Stäckel route.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<String>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profiles: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    // Bertrand route, b ≠ 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    // Bertrand route, b = 0 (circular family).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_of_r: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_ref: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_high: Option<f64>,
}

// ---------------------------------------------------------- resolved plan --

pub struct RunPlan {
    /// "inline" for inline definitions, the catalog name otherwise.
    pub system_name: String,
    pub preset: String,
    pub system: ConstraintSystem,
    pub initial: Vec<f64>,
    pub monitors: Vec<(String, Expr)>,
    pub integrator: IntegratorConfig,
    pub states: Vec<Vec<f64>>,
    pub grid: Option<GridSection>,
    pub output_dir: Option<String>,
    pub formats: Vec<String>,
    pub tolerances: BTreeMap<String, f64>,
    /// Catalog parameter overrides, kept for the multiplier-equation check.
    pub param_overrides: Vec<(String, f64)>,
}

impl RunPlan {
    pub fn tolerance(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }
}

/// One-pass error accumulator with `section.key` paths.
#[derive(Default)]
struct Problems {
    items: Vec<String>,
}

impl Problems {
    fn push(&mut self, path: &str, msg: impl std::fmt::Display) {
        self.items.push(format!("{path}: {msg}"));
    }

    fn expr(&mut self, path: &str, src: &str) -> Option<Expr> {
        match parse(src) {
            Ok(e) => Some(e),
            Err(err) => {
                self.push(path, err);
                None
            }
        }
    }

    fn finish(self) -> Result<()> {
        if self.items.is_empty() {
            Ok(())
        } else {
            bail!("invalid run specification:\n  {}", self.items.join("\n  "))
        }
    }
}

pub fn parse_spec(path: &Path) -> Result<RunPlan> {
    resolve(read_spec(path)?)
}

pub fn read_spec(path: &Path) -> Result<SpecFile> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading spec file {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing spec file {}", path.display()))
}

/// The `[inverse]` section plus the output directory, for inverse-only spec
/// files (no `[system]` required).
pub fn parse_inverse_spec(path: &Path) -> Result<(InverseSection, Option<String>)> {
    let spec = read_spec(path)?;
    let section = spec
        .inverse
        .ok_or_else(|| anyhow!("spec file has no [inverse] section"))?;
    let dir = spec.output.and_then(|o| o.dir);
    Ok((section, dir))
}

pub fn resolve(spec: SpecFile) -> Result<RunPlan> {
    let mut problems = Problems::default();

    let lambda_spec = match &spec.lambda {
        None => LambdaSpec::Default,
        Some(l) => match (&l.preset, &l.expressions) {
            (Some(_), Some(_)) => {
                problems.push("lambda", "give either `preset` or `expressions`, not both");
                LambdaSpec::Default
            }
            (Some(p), None) => LambdaSpec::Preset(p.clone()),
            (None, Some(exprs)) => {
                let mut parsed = Vec::new();
                for (i, src) in exprs.iter().enumerate() {
                    if let Some(e) =
                        problems.expr(&format!("lambda.expressions[{i}]"), src)
                    {
                        parsed.push(e);
                    }
                }
                LambdaSpec::Custom(parsed)
            }
            (None, None) => LambdaSpec::Default,
        },
    };

    let built = match &spec.system {
        Some(sys) => build_from_system_section(sys, &lambda_spec, &mut problems),
        None => {
            problems.push("system", "section is required");
            None
        }
    };

    let mut monitors = built
        .as_ref()
        .map(|b| b.monitors.clone())
        .unwrap_or_default();
    if let Some(extra) = &spec.monitors {
        for (name, src) in extra {
            if let Some(e) = problems.expr(&format!("monitors.{name}"), src) {
                monitors.retain(|(n, _)| n != name);
                monitors.push((name.clone(), e));
            }
        }
    }

    let integrator = integrator_config(spec.integrator.as_ref().cloned().unwrap_or_default(), &mut problems);

    let (states, grid) = match &spec.initial {
        None => (Vec::new(), None),
        Some(sec) => {
            if let (Some(states), Some(b)) = (&sec.states, built.as_ref()) {
                for (i, s) in states.iter().enumerate() {
                    if s.len() != b.dim {
                        problems.push(
                            &format!("initial.states[{i}]"),
                            format!("expected {} coordinates, got {}", b.dim, s.len()),
                        );
                    }
                }
            }
            if let Some(g) = &sec.grid {
                if g.count == 0 {
                    problems.push("initial.grid.count", "must be positive");
                }
                if !(g.radius > 0.0) {
                    problems.push("initial.grid.radius", "must be positive");
                }
            }
            (sec.states.clone().unwrap_or_default(), sec.grid.clone())
        }
    };

    let (output_dir, formats) = match &spec.output {
        None => (None, vec!["csv".to_string(), "json".to_string()]),
        Some(o) => {
            let formats = o
                .formats
                .clone()
                .unwrap_or_else(|| vec!["csv".to_string(), "json".to_string()]);
            for f in &formats {
                if f != "csv" && f != "json" {
                    problems.push("output.formats", format!("unknown format `{f}`"));
                }
            }
            (o.dir.clone(), formats)
        }
    };

    if let Some(tols) = &spec.tolerances {
        for (name, v) in tols {
            if !(v.is_finite() && *v > 0.0) {
                problems.push(&format!("tolerances.{name}"), "must be a positive number");
            }
        }
    }

    problems.finish()?;
    let built = built.ok_or_else(|| anyhow!("system section failed to resolve"))?;
    let states = if states.is_empty() {
        vec![built.initial.clone()]
    } else {
        states
    };

    Ok(RunPlan {
        system_name: built.name,
        preset: built.preset,
        system: built.system,
        initial: built.initial,
        monitors,
        integrator,
        states,
        grid,
        output_dir,
        formats,
        tolerances: spec.tolerances.clone().unwrap_or_default(),
        param_overrides: built.param_overrides,
    })
}

struct ResolvedSystem {
    name: String,
    preset: String,
    system: ConstraintSystem,
    initial: Vec<f64>,
    monitors: Vec<(String, Expr)>,
    dim: usize,
    param_overrides: Vec<(String, f64)>,
}

fn build_from_system_section(
    sec: &SystemSection,
    lambda: &LambdaSpec,
    problems: &mut Problems,
) -> Option<ResolvedSystem> {
    let inline_given = sec.dim.is_some()
        || sec.forms.is_some()
        || sec.metric.is_some()
        || sec.metric_diagonal.is_some();
    match (&sec.catalog, inline_given) {
        (Some(_), true) => {
            problems.push(
                "system",
                "give either `catalog` or an inline definition, not both",
            );
            None
        }
        (Some(name), false) => {
            let overrides: Vec<(String, f64)> = sec
                .params
                .clone()
                .unwrap_or_default()
                .into_iter()
                .collect();
            match catalog::build_system(name, lambda, &overrides) {
                Ok(b) => Some(ResolvedSystem {
                    dim: b.system.dim(),
                    name: b.name,
                    preset: b.preset,
                    system: b.system,
                    initial: b.initial,
                    monitors: b.monitors,
                    param_overrides: overrides,
                }),
                Err(e) => {
                    problems.push("system.catalog", e);
                    None
                }
            }
        }
        (None, _) => build_inline(sec, lambda, problems),
    }
}

fn build_inline(
    sec: &SystemSection,
    lambda: &LambdaSpec,
    problems: &mut Problems,
) -> Option<ResolvedSystem> {
    let Some(n) = sec.dim else {
        problems.push("system.dim", "required for inline definitions");
        return None;
    };
    let Some(m) = sec.constraints else {
        problems.push("system.constraints", "required for inline definitions");
        return None;
    };
    if sec.params.is_some() {
        problems.push("system.params", "only valid with `catalog`");
    }
    let lambdas = match lambda {
        LambdaSpec::Custom(exprs) => exprs.clone(),
        _ => {
            problems.push(
                "lambda",
                "inline systems need explicit `expressions` (presets belong to the catalog)",
            );
            return None;
        }
    };

    let metric = match (&sec.metric, &sec.metric_diagonal) {
        (Some(_), Some(_)) => {
            problems.push("system", "give `metric` or `metric_diagonal`, not both");
            None
        }
        (Some(rows), None) => {
            let mut parsed = Vec::new();
            for (i, row) in rows.iter().enumerate() {
                let mut prow = Vec::new();
                for (j, src) in row.iter().enumerate() {
                    if let Some(e) = problems.expr(&format!("system.metric[{i}][{j}]"), src) {
                        prow.push(e);
                    }
                }
                parsed.push(prow);
            }
            if parsed.len() == n && parsed.iter().all(|r| r.len() == n) {
                Some(MetricField::from_rows(parsed))
            } else {
                problems.push("system.metric", format!("must be {n}×{n}"));
                None
            }
        }
        (None, Some(diag)) => {
            let mut parsed = Vec::new();
            for (i, src) in diag.iter().enumerate() {
                if let Some(e) =
                    problems.expr(&format!("system.metric_diagonal[{i}]"), src)
                {
                    parsed.push(e);
                }
            }
            if parsed.len() == n {
                Some(MetricField::diagonal(parsed))
            } else {
                problems.push("system.metric_diagonal", format!("must have {n} entries"));
                None
            }
        }
        (None, None) => Some(MetricField::identity(n)),
    };

    let mut forms = Vec::new();
    match &sec.forms {
        None => problems.push("system.forms", "required for inline definitions"),
        Some(rows) => {
            for (i, row) in rows.iter().enumerate() {
                let mut comps = Vec::new();
                for (j, src) in row.iter().enumerate() {
                    if let Some(e) = problems.expr(&format!("system.forms[{i}][{j}]"), src) {
                        comps.push(e);
                    }
                }
                if comps.len() == n {
                    forms.push(OneFormField::new(comps));
                } else {
                    problems.push(
                        &format!("system.forms[{i}]"),
                        format!("must have {n} components"),
                    );
                }
            }
        }
    }

    let potential = sec
        .potential
        .as_ref()
        .and_then(|src| problems.expr("system.potential", src));
    let mut guards = Vec::new();
    if let Some(gs) = &sec.guards {
        for (name, src) in gs {
            if let Some(e) = problems.expr(&format!("system.guards.{name}"), src) {
                guards.push((name.clone(), e));
            }
        }
    }
    let Some(initial) = sec.initial.clone() else {
        problems.push("system.initial", "required for inline definitions");
        return None;
    };
    if initial.len() != n {
        problems.push(
            "system.initial",
            format!("expected {n} coordinates, got {}", initial.len()),
        );
        return None;
    }

    let metric = metric?;
    if forms.len() != n {
        problems.push(
            "system.forms",
            format!("expected {n} one-forms (constraints first), got {}", forms.len()),
        );
        return None;
    }
    match ConstraintSystem::new(n, m, forms, lambdas, metric, potential) {
        Ok(sys) => {
            let sys = sys.with_guards(guards);
            if let Err(e) = sys.frame_matrix(&initial) {
                problems.push("system.initial", format!("frame check failed: {e}"));
                return None;
            }
            Some(ResolvedSystem {
                name: "inline".to_string(),
                preset: "custom".to_string(),
                system: sys,
                initial,
                monitors: Vec::new(),
                dim: n,
                param_overrides: Vec::new(),
            })
        }
        Err(e) => {
            problems.push("system", e);
            None
        }
    }
}

fn integrator_config(sec: IntegratorSection, problems: &mut Problems) -> IntegratorConfig {
    let t_end = sec.t_end.unwrap_or(5.0);
    if !(t_end > 0.0) {
        problems.push("integrator.t_end", "must be positive");
    }
    match sec.method.as_deref().unwrap_or("rk45") {
        "rk45" => {
            if sec.dt.is_some() || sec.stride.is_some() {
                problems.push("integrator", "`dt`/`stride` belong to method = \"rk4\"");
            }
            IntegratorConfig::rk45(
                sec.rtol.unwrap_or(1e-10),
                sec.atol.unwrap_or(1e-12),
                t_end,
                sec.output_dt.unwrap_or(0.05),
            )
        }
        "rk4" => {
            if sec.rtol.is_some() || sec.atol.is_some() || sec.output_dt.is_some() {
                problems.push(
                    "integrator",
                    "`rtol`/`atol`/`output_dt` belong to method = \"rk45\"",
                );
            }
            let dt = sec.dt.unwrap_or(1e-3);
            if !(dt > 0.0) {
                problems.push("integrator.dt", "must be positive");
            }
            IntegratorConfig::rk4(dt, t_end, sec.stride.unwrap_or(1).max(1))
        }
        other => {
            problems.push(
                "integrator.method",
                format!("unknown method `{other}` (expected \"rk4\" or \"rk45\")"),
            );
            IntegratorConfig::rk45(1e-10, 1e-12, t_end, 0.05)
        }
    }
}
