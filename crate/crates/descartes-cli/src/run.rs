//! The simulate / verify / catalog commands.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use descartes::catalog;
use descartes::dynamics::{
    constraint_drift, integrate_first_order, lagrange_residual, monitor, IntegratorConfig,
};
use descartes::rng::XorShift64Star;
use descartes::tolerances;
use rayon::prelude::*;

use crate::plan::RunPlan;
use crate::report::{self, Check, Report};

/// Deterministic sample points around the plan's initial state: uniform in
/// the box `initial ± radius`, keeping only points where the frame is
/// regular and the field evaluates (guards, singularities).
pub fn sample_grid(plan: &RunPlan, count: usize, radius: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = XorShift64Star::new(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count && attempts < 200 * count.max(1) {
        attempts += 1;
        let x: Vec<f64> = plan
            .initial
            .iter()
            .map(|c| rng.uniform(c - radius, c + radius))
            .collect();
        if plan.system.velocity(&x).is_ok() {
            out.push(x);
        }
    }
    out
}

fn write_artifact(dir: &Option<String>, name: &str, bytes: &str) -> Result<Option<PathBuf>> {
    let Some(dir) = dir else { return Ok(None) };
    let dir = Path::new(dir);
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(Some(path))
}

/// Integrate every initial state of the plan and write trajectory CSVs
/// (one file per state, `trajectory_<index>.csv`; plus optional tidy
/// plot data). Returns the number of rows written per trajectory.
pub fn simulate(plan: &RunPlan, out_override: Option<String>, emit_plot: bool) -> Result<()> {
    let mut states: Vec<Vec<f64>> = plan.states.clone();
    if let Some(grid) = &plan.grid {
        let extra = sample_grid(plan, grid.count, grid.radius, grid.seed.unwrap_or(0));
        states.extend(extra);
    }
    let dir = out_override.or_else(|| plan.output_dir.clone());
    let write_csv = plan.formats.iter().any(|f| f == "csv");
    eprintln!(
        "simulate: system={} preset={} states={}",
        plan.system_name,
        plan.preset,
        states.len()
    );

    // Fan out across initial states; collect preserves input order.
    let runs: Vec<Result<descartes::dynamics::Trajectory>> = states
        .par_iter()
        .map(|x0| {
            integrate_first_order(&plan.system, x0, &plan.integrator).map_err(Into::into)
        })
        .collect();

    for (i, run) in runs.into_iter().enumerate() {
        let traj = run.with_context(|| format!("integrating initial state {i}"))?;
        if let Some(e) = &traj.error {
            eprintln!("warning: run {i} truncated: {e}");
        }
        if write_csv {
            let csv = report::trajectory_csv(&traj, plan.system.dim(), &plan.monitors)?;
            let name = format!("trajectory_{i}.csv");
            match write_artifact(&dir, &name, &csv)? {
                Some(path) => println!("{} ({} rows)", path.display(), traj.samples.len()),
                None => print!("{csv}"),
            }
        }
        if emit_plot {
            let plot = report::plot_csv(&traj, plan.system.dim());
            if let Some(path) = write_artifact(&dir, &format!("plot_{i}.csv"), &plot)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

/// The standard verification battery. Returns the report; the caller maps
/// `all_pass` onto the exit status.
pub fn verify(plan: &RunPlan, grid_size: usize, seed: u64) -> Result<Report> {
    let sys = &plan.system;
    let mut report = Report::new();

    // Along-the-run checks.
    let traj = integrate_first_order(sys, &plan.initial, &plan.integrator)?;
    if let Some(e) = &traj.error {
        eprintln!("warning: verification run truncated: {e}");
    }
    report.insert(
        "constraint_drift".to_string(),
        Check::new(
            constraint_drift(&traj),
            plan.tolerance("constraint_drift", 1e-11),
            traj.samples.len(),
        ),
    );

    // Second-order residual at fixed step (the finite-difference gate wants
    // uniform, step-aligned samples).
    let lr_cfg = IntegratorConfig::rk4(1e-3, plan.integrator.t_end.min(5.0), 1);
    let lr_traj = integrate_first_order(sys, &plan.initial, &lr_cfg)?;
    let rows = lagrange_residual(sys, &lr_traj)?;
    let lr_max = rows
        .iter()
        .flatten()
        .fold(0.0_f64, |acc, r| acc.max(r.abs()));
    report.insert(
        "lagrange_residual".to_string(),
        Check::new(
            lr_max,
            plan.tolerance("lagrange_residual", 1e-4),
            rows.len(),
        ),
    );

    for stats in monitor(&traj, &plan.monitors)? {
        report.insert(
            format!("monitor:{}", stats.name),
            Check::new(
                stats.max_abs_deviation,
                plan.tolerance(
                    &format!("monitor:{}", stats.name),
                    tolerances::ORBIT_INVARIANCE,
                ),
                traj.samples.len(),
            ),
        );
    }

    // Grid checks (seeded, deterministic).
    let grid = sample_grid(plan, grid_size, 0.4, seed);
    let mut consistency = 0.0_f64;
    let mut route_gap = 0.0_f64;
    for x in &grid {
        for r in sys.consistency_residual(x)? {
            consistency = consistency.max(r.abs());
        }
        let num = sys.lambda_vector(x)?;
        let sym = sys.lambda_vector_sym();
        let env = descartes::exprlang::Env::point(x);
        for (k, e) in sym.iter().enumerate() {
            let s = e.eval(&env)?;
            route_gap = route_gap.max((num[k] - s).abs() / num[k].abs().max(1.0));
        }
    }
    report.insert(
        "consistency_residual".to_string(),
        Check::new(
            consistency,
            plan.tolerance("consistency_residual", tolerances::CONSISTENCY_GRID),
            grid.len(),
        ),
    );
    report.insert(
        "lambda_routes".to_string(),
        Check::new(
            route_gap,
            plan.tolerance("lambda_routes", tolerances::LAMBDA_ROUTE_REL),
            grid.len(),
        ),
    );

    // The scalar multiplier equation, where the catalog defines one directly
    // over the chart multipliers.
    if matches!(
        plan.system_name.as_str(),
        "chaplygin_sleigh" | "skate" | "axis_particle" | "gantmacher"
    ) {
        let mut worst = 0.0_f64;
        for x in &grid {
            let r = catalog::multiplier_pde_residual(
                &plan.system_name,
                sys.lambdas(),
                &plan.param_overrides,
                x,
            )?;
            worst = worst.max(r.abs());
        }
        report.insert(
            "multiplier_equation".to_string(),
            Check::new(
                worst,
                plan.tolerance("multiplier_equation", tolerances::CONSISTENCY_GRID),
                grid.len(),
            ),
        );
    }

    Ok(report)
}

pub fn catalog_list() -> String {
    let mut out = String::new();
    for d in catalog::list_systems() {
        out.push_str(&format!(
            "{:22} dim {} constraints {}  {}\n",
            d.name, d.dim, d.constraints, d.summary
        ));
    }
    out
}

pub fn catalog_show(name: &str) -> Result<String> {
    let d = catalog::descriptor(name)?;
    let mut out = format!(
        "{}\n  {}\n  dimension: {}  given constraints: {}\n  parameters:\n",
        d.name, d.summary, d.dim, d.constraints
    );
    for p in &d.params {
        out.push_str(&format!(
            "    {:6} default {:<8} range [{}, {}]  {}\n",
            p.name, p.default, p.min, p.max, p.doc
        ));
    }
    out.push_str("  presets:\n");
    for pr in &d.presets {
        let mark = if pr.name == d.default_preset { "*" } else { " " };
        let adm = if pr.admissible { "admissible" } else { "NOT admissible" };
        out.push_str(&format!("   {mark}{:14} {adm:15} {}\n", pr.name, pr.summary));
    }
    Ok(out)
}
