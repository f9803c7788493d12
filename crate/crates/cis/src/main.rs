use std::path::PathBuf;
use std::process::ExitCode;

use cis::commands::{self, Context};
use cis::{CliError, CliResult, ExperimentConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cis", version, about = "Covariance-informed subspace experiments")]
struct Cli {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads for likelihood batches.
    #[arg(long, global = true, default_value_t = 1, value_name = "N")]
    threads: usize,
    /// Overrides the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Also write long-format CSVs for plotting.
    #[arg(long, global = true)]
    emit_plot_data: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form checks on random linear-Gaussian problems.
    BlgCheck,
    /// Builds the informed subspace and writes the projector bundle.
    Reduce,
    /// Samples the posterior with a projector bundle.
    Sample {
        /// Projector bundle; defaults to `projector.txt` in the output directory.
        #[arg(long, value_name = "PATH")]
        projector: Option<PathBuf>,
    },
    /// Compares covariance- and gradient-informed subspaces.
    Compare,
    /// Tabulates convergence diagnostics of a run record log.
    Diagnose {
        /// Run record log; defaults to `run.jsonl` in the output directory.
        #[arg(long, value_name = "PATH")]
        records: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if cli.threads == 0 {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    let ctx = Context::new(config, cli.seed, cli.out, cli.emit_plot_data);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} threads: {e}", cli.threads)))?;
    pool.install(|| match cli.command {
        Command::BlgCheck => {
            let rep = commands::blg_check(&ctx)?;
            for (i, r) in rep.rows.iter().enumerate() {
                println!(
                    "instance {i:>3}  n={:<2} m={:<2} r={:<2}  orth {:.1e}  d_F {:.6e} (expected {:.6e}, {} closer)  KLD {:.6e} vs {:.6e}  {}",
                    r.n,
                    r.m,
                    r.rank,
                    r.orthogonality,
                    r.forstner,
                    r.forstner_expected,
                    r.alternatives_closer,
                    r.kld,
                    r.kld_reference,
                    if r.pass { "ok" } else { "FAIL" }
                );
            }
            println!("{} of {} instances pass", rep.rows.len() - rep.failures(), rep.rows.len());
            match rep.failures() {
                0 => Ok(()),
                k => Err(CliError::ChecksFailed(k)),
            }
        }
        Command::Reduce => {
            let s = commands::reduce(&ctx)?;
            println!("method {}: rank {} after {} steps", s.method, s.rank, s.steps);
            if let Some(beta) = s.beta {
                println!("final beta {beta}");
            }
            println!("likelihood evaluations: {}", s.evaluations);
            let head: Vec<String> = s.eigenvalues.iter().take(s.rank + 3).map(|l| format!("{l:.4}")).collect();
            println!("leading eigenvalues: {}", head.join(" "));
            println!("projector written to {}", ctx.path("projector.txt").display());
            Ok(())
        }
        Command::Sample { projector } => {
            let path = projector.unwrap_or_else(|| ctx.path("projector.txt"));
            let s = commands::sample(&ctx, &path)?;
            println!("{} samples at rank {}, {} likelihood evaluations", s.samples, s.rank, s.evaluations);
            if let Some(st) = &s.stage2 {
                println!(
                    "second stage: {} attempts, {} accepted, mean acceptance {:.4}, log ratio in [{:.3e}, {:.3e}]",
                    st.attempts, st.stage2_accepted, st.mean_acceptance, st.min_log_ratio, st.max_log_ratio
                );
            }
            if let (Some(z), Some(v)) = (s.max_mean_z, s.max_var_rel_error) {
                println!("against the exact posterior: max |z| of means {z:.3}, max relative variance error {v:.3}");
            }
            Ok(())
        }
        Command::Compare => {
            let s = commands::compare(&ctx)?;
            println!("{} prior samples, ESS {:.1}, rank {}", s.n_samples, s.ess, s.rank);
            println!("largest principal angle {:.3e}, angle norm {:.3e}", s.max_angle, s.angle_norm);
            if let Some(e) = &s.exact {
                println!("exact subspaces (rank {}): largest principal angle {:.3e}", e.rank, e.max_angle);
            }
            println!(
                "evaluations: covariance route {} likelihoods; gradient route {} likelihoods + {} gradients ({} extra forward solves)",
                s.cis_likelihood_evaluations, s.gis_likelihood_evaluations, s.gis_gradient_evaluations, s.gis_fd_forward_evaluations
            );
            Ok(())
        }
        Command::Diagnose { records } => {
            let path = records.unwrap_or_else(|| ctx.path("run.jsonl"));
            let r = commands::diagnose(&ctx, &path)?;
            if r.iterations > 0 {
                match r.first_stop {
                    Some(i) => println!("{} iterations; stop criteria first met at iteration {i}", r.iterations),
                    None => println!("{} iterations; stop criteria never met", r.iterations),
                }
                if let Some(a) = r.last_max_angle {
                    println!("last largest principal angle {a:.3e}");
                }
            }
            if r.stages > 0 {
                println!("{} tempering stages, final beta {}", r.stages, r.final_beta.unwrap_or(f64::NAN));
            }
            Ok(())
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CIS_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
