//! Batch front door for the descartes library: simulate catalog or inline
//! systems, run the standard verification battery, synthesize inverse-problem
//! artifacts, and inspect the catalog. See docs/spec-format.md for the run
//! specification schema and docs/exprlang.md for the expression language.

use descartes_cli::{inverse_cmd, plan, report, run};

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "descartes", version, about = "First-order fields for constrained mechanics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the first-order field and write trajectory CSVs.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        /// Output directory (overrides [output].dir; stdout if neither set).
        #[arg(long)]
        out: Option<String>,
        /// Additionally write tidy long-format CSV for external plotting.
        #[arg(long)]
        emit_plot_data: bool,
    },
    /// Run the verification battery and print a JSON report.
    Verify {
        #[arg(long)]
        spec: PathBuf,
        /// Number of grid points for the pointwise checks.
        #[arg(long, default_value_t = 200)]
        grid: usize,
        /// Seed for the verification grid.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report into this directory.
        #[arg(long)]
        out: Option<String>,
    },
    /// Synthesize a force or potential from an orbit family.
    Inverse {
        #[arg(long, value_parser = ["dainelli", "suslov", "joukovski", "stackel", "bertrand"])]
        route: String,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<String>,
    },
    /// Inspect the built-in system catalog.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
}

#[derive(Subcommand)]
enum CatalogAction {
    /// List every catalog system.
    List,
    /// Show parameters and presets of one system.
    Show { name: String },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(all_pass) => {
            if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            // Machine-readable error record on stderr.
            let record = serde_json::json!({ "error": format!("{e:#}") });
            eprintln!("{record}");
            ExitCode::from(2)
        }
    }
}

/// Returns whether every requested check passed.
fn dispatch() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            spec,
            out,
            emit_plot_data,
        } => {
            let plan = plan::parse_spec(&spec)?;
            run::simulate(&plan, out, emit_plot_data)?;
            Ok(true)
        }
        Command::Verify {
            spec,
            grid,
            seed,
            out,
        } => {
            let plan = plan::parse_spec(&spec)?;
            let rep = run::verify(&plan, grid, seed)?;
            let text = report::report_json(&rep);
            print!("{text}");
            let dir = out.or_else(|| plan.output_dir.clone());
            if let Some(dir) = dir {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(PathBuf::from(&dir).join("verify_report.json"), &text)?;
            }
            Ok(report::all_pass(&rep))
        }
        Command::Inverse { route, spec, out } => {
            let (section, spec_dir) = plan::parse_inverse_spec(&spec)?;
            let outcome = inverse_cmd::run(&route, &section)?;
            let doc = serde_json::json!({
                "artifact": outcome.artifact,
                "checks": outcome.checks,
            });
            let mut text = serde_json::to_string_pretty(&doc)?;
            text.push('\n');
            print!("{text}");
            if let Some(dir) = out.or(spec_dir) {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(
                    PathBuf::from(&dir).join(format!("inverse_{route}.json")),
                    &text,
                )?;
            }
            Ok(report::all_pass(&outcome.checks))
        }
        Command::Catalog { action } => {
            match action {
                CatalogAction::List => print!("{}", run::catalog_list()),
                CatalogAction::Show { name } => print!("{}", run::catalog_show(&name)?),
            }
            Ok(true)
        }
    }
}
