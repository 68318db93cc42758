//! Benchmark driver for the one-bit massive MIMO detection library.
//!
//! Subcommands:
//!
//! * `ber` — Monte Carlo bit-error-rate sweep over the configured SNR grid,
//!   reported as CSV (stdout or `--out`).
//! * `timing` — median per-vector detection latency for every tractable
//!   receiver across batch sizes, reported as CSV.
//! * `train` — fit the unfolded detector's per-layer step sizes and write them
//!   to a parameter file.
//! * `demo-nn` — worked example of the nearest-neighbor candidate construction
//!   and top-M list on a fixed four-coordinate soft estimate.
//!
//! Configuration comes from a UTF-8 file of `key = value` lines (`#` starts a
//! comment). `--set key=value` replaces individual keys and `--seed` replaces
//! the master seed. Exit codes: 0 on success, 1 for configuration errors
//! (unknown keys, bad values, invalid combinations), 2 for runtime failures
//! (I/O, missing parameter files, diverged training).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use onebit_mimo::nn_search::{brute_force_top_m, candidate_sets};
use onebit_mimo::{bench, config, obmnet, Constellation, Modulation};

#[derive(Parser)]
#[command(
    name = "mimo-bench",
    version,
    about = "One-bit massive MIMO detection benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the config-driven subcommands.
#[derive(Args)]
struct RunArgs {
    /// Experiment description file (`key = value` lines, `#` comments).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Master seed; replaces the config file's `seed` key.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output path. `ber`/`timing` print CSV to stdout when omitted;
    /// `train` writes `obmnet-params.txt`.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Replace one config key (repeatable), e.g. `--set trials=1000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    /// Config overrides in application order: `--set` pairs, then `--seed`.
    fn overrides(&self) -> Vec<String> {
        let mut v = self.set.clone();
        if let Some(seed) = self.seed {
            v.push(format!("seed={seed}"));
        }
        v
    }
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo BER sweep over the configured SNR grid (CSV).
    Ber(RunArgs),
    /// Median per-vector detection time per receiver and batch size (CSV).
    Timing(RunArgs),
    /// Train step sizes for the unfolded detector and write a parameter file.
    Train(RunArgs),
    /// Print the worked nearest-neighbor search example.
    DemoNn,
}

fn cmd_ber(args: &RunArgs) -> onebit_mimo::Result<()> {
    let cfg = config::parse_config(&args.config, &args.overrides())?;
    let report = bench::run_ber(&cfg)?;
    match &args.out {
        Some(path) => bench::write_report(&report, path)?,
        None => print!("{}", bench::render_csv(&report)),
    }
    Ok(())
}

fn cmd_timing(args: &RunArgs) -> onebit_mimo::Result<()> {
    let cfg = config::parse_config(&args.config, &args.overrides())?;
    let rows = bench::run_timing(&cfg)?;
    match &args.out {
        Some(path) => bench::write_timing(&rows, cfg.seed, path)?,
        None => print!("{}", bench::render_timing_csv(&rows, cfg.seed)),
    }
    Ok(())
}

fn cmd_train(args: &RunArgs) -> onebit_mimo::Result<()> {
    let cfg = config::parse_train_config(&args.config, &args.overrides())?;
    let params = obmnet::train(&cfg)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("obmnet-params.txt"));
    params.save(&out)?;
    println!(
        "trained {} step sizes ({} K={} N={}, seed {}, {} batches) -> {}",
        params.layers(),
        params.modulation.token(),
        params.k,
        params.n,
        params.seed,
        params.epochs,
        out.display()
    );
    Ok(())
}

/// Fixed demonstration instance: soft estimate [0.1, −0.5, −0.3, 0.8] over the
/// four-point constellation with the default ambiguity margin 1/(2√2).
/// Coordinates 1 and 3 sit within γ of the decision boundary at 0, so each
/// contributes two candidate levels; the product set has 4 members.
fn cmd_demo_nn() -> onebit_mimo::Result<()> {
    let x_soft = [0.1, -0.5, -0.3, 0.8];
    let m = 4;
    let cons = Constellation::new(Modulation::Qpsk);
    let gamma = cons.default_search_margin();

    println!("soft estimate x~ = {x_soft:?}");
    println!("margin gamma = 1/(2*sqrt(2)) = {gamma}");
    println!();

    let cand = candidate_sets(&x_soft, gamma, &cons);
    for i in 0..cand.dim() {
        let choices: Vec<String> = cand.choices(i).iter().map(|c| format!("{c:+.6}")).collect();
        let kind = if cand.choices(i).len() == 2 {
            "ambiguous"
        } else {
            "decided"
        };
        println!(
            "A_{} = {{{}}}  ({kind}; nearest boundary {:+.1})",
            i + 1,
            choices.join(", "),
            cand.nearest_boundary(i)
        );
    }
    println!("candidate product size |A| = {}", cand.size());
    println!();

    let list = brute_force_top_m(&cand, m)?;
    println!("top-{m} candidates by squared distance to x~:");
    for (rank, x) in list.iter().enumerate() {
        let d2: f64 = x
            .iter()
            .zip(x_soft.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let signs: Vec<&str> = x.iter().map(|v| if *v > 0.0 { "+" } else { "-" }).collect();
        let coords: Vec<String> = x.iter().map(|v| format!("{v:+.6}")).collect();
        println!(
            "  x_{} = [{}]  signs ({})  dist^2 = {d2:.6}",
            rank + 1,
            coords.join(", "),
            signs.join(", ")
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ber(args) => cmd_ber(args),
        Command::Timing(args) => cmd_timing(args),
        Command::Train(args) => cmd_train(args),
        Command::DemoNn => cmd_demo_nn(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
