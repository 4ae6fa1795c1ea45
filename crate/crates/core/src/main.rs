use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use viewplan::export::{export_csv, export_svg};
use viewplan::identify::{fit_least_squares, load_dataset, prune_basis};
use viewplan::reward::{stationary_points, unconstrained_optimum};
use viewplan::{run_batch, BasisKind, PlannerKind, Scenario};

#[derive(Parser)]
#[command(name = "viewplan", version, about = "Next-best-view search simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of paired episodes and write metrics CSVs and charts.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated planner names.
        #[arg(long, value_delimiter = ',', default_value = "dcee,mpc,entropy")]
        planners: Vec<String>,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario's step cap.
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Least-squares fit of field coefficients to a logged dataset.
    Fit {
        #[arg(long)]
        dataset: PathBuf,
        /// 6 or 20 terms.
        #[arg(long)]
        basis: BasisKind,
        /// Magnitude floor for pruning a 20-term fit.
        #[arg(long)]
        prune_floor: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the grid optimum, the snapped target and a concavity check.
    Inspect {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> viewplan::Result<()> {
    match cmd {
        Command::Simulate {
            scenario,
            planners,
            runs,
            seed,
            out,
            max_steps,
        } => {
            let mut sc = Scenario::load(&scenario)?;
            if let Some(m) = max_steps {
                if m == 0 {
                    return Err(viewplan::Error::InvalidConfig(
                        "--max-steps must be at least 1".into(),
                    ));
                }
                sc.max_steps = m;
            }
            let kinds: Vec<PlannerKind> = planners
                .iter()
                .map(|p| sc.planner_kind(p))
                .collect::<viewplan::Result<_>>()?;
            log::info!(
                "{}: start node {:?} ({:.2e} snap), target node {:?} ({:.2e} snap)",
                sc.name,
                sc.start.node.indices(),
                sc.start.distance,
                sc.target.node.indices(),
                sc.target.distance
            );
            let t0 = Instant::now();
            let report = run_batch(&sc, &kinds, runs, seed)?;
            log::info!("{} episodes in {:.1?}", runs * kinds.len(), t0.elapsed());
            let mut files = export_csv(&report, &out)?;
            files.extend(export_svg(&report, &out)?);
            for p in &report.planners {
                let median = p
                    .median_steps
                    .map_or_else(|| "not reached".to_string(), |m| m.to_string());
                println!(
                    "{:<8} median steps {median:<12} reached {}/{}",
                    p.planner,
                    p.reached,
                    p.runs.len()
                );
            }
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Fit {
            dataset,
            basis,
            prune_floor,
            out,
        } => {
            let ds = load_dataset(&dataset)?;
            let mut report = fit_least_squares(&ds, basis)?;
            if let Some(floor) = prune_floor {
                report.pruning = Some(prune_basis(&report, floor)?);
            }
            println!(
                "{} samples, {} basis, mean error {:.6}",
                report.samples,
                basis.name(),
                report.mean_error
            );
            for (t, v) in report.terms.iter().zip(&report.theta) {
                println!("  {t:<6} {v:+.6e}");
            }
            if let Some(p) = &report.pruning {
                println!(
                    "kept at |theta| >= {}: {} (matches reduced6: {})",
                    p.floor,
                    p.kept_terms.join(", "),
                    p.matches_reduced6
                );
            }
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            std::fs::write(&out, json + "\n").map_err(|e| viewplan::Error::Io {
                path: out.clone(),
                source: e,
            })?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Inspect { scenario } => {
            let sc = Scenario::load(&scenario)?;
            let (best, c_best) = sc.truth.constrained_optimum(&sc.grid);
            let fmt = |p: viewplan::Position| format!("[{:.4}, {:.4}, {:.4}]", p.x, p.y, p.z);
            println!("scenario      {}", sc.name);
            println!(
                "grid          {}x{} radius {} ({} nodes, azimuth {})",
                sc.grid.n_elev(),
                sc.grid.n_azim(),
                sc.grid.radius(),
                sc.grid.len(),
                if sc.grid.wraps() { "wraps" } else { "clamps" }
            );
            println!(
                "grid optimum  {:?} {} reward {:.4}",
                best.indices(),
                fmt(best.position()),
                c_best
            );
            for (label, s) in [("start", &sc.start), ("target", &sc.target)] {
                println!(
                    "{label:<13} {:?} {} reward {:.4} (requested {}, snap {:.2e})",
                    s.node.indices(),
                    fmt(s.node.position()),
                    sc.truth.reward(&s.node.position()),
                    fmt(s.requested),
                    s.distance
                );
            }
            println!(
                "optimum vs target: {:.4} apart, neighbour arc {:.4}",
                sc.grid
                    .arc_distance(&best.position(), &sc.target.node.position()),
                sc.grid.neighbor_arc(&best)
            );
            if sc.basis() == BasisKind::Reduced6 {
                match stationary_points(sc.truth.theta()) {
                    Ok(pts) => {
                        for p in pts {
                            let c = sc.truth.concavity_at(&p);
                            println!(
                                "stationary    {} reward {:.4} eigenvalues [{:.4}, {:.4}, {:.4}] {}",
                                fmt(p),
                                sc.truth.reward(&p),
                                c.eigenvalues[0],
                                c.eigenvalues[1],
                                c.eigenvalues[2],
                                if c.negative_definite { "concave (local max)" } else { "not concave" }
                            );
                        }
                        if let Ok(g) = unconstrained_optimum(sc.truth.theta()) {
                            println!("unconstrained {}", fmt(g));
                        }
                    }
                    Err(e) => println!("stationary    unavailable: {e}"),
                }
            }
            let c = sc.truth.concavity_at(&best.position());
            println!(
                "hessian at grid optimum: eigenvalues [{:.4}, {:.4}, {:.4}], negative definite: {}",
                c.eigenvalues[0], c.eigenvalues[1], c.eigenvalues[2], c.negative_definite
            );
            Ok(())
        }
    }
}
