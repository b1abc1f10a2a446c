use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use replicore::harness::presets::{override_parameter, preset, presets, run_preset, PresetPart};
use replicore::harness::{
    run_paired, run_paired_records, sweep, sweep_csv, AlgorithmSpec, PairedTrialConfig, ScalarGen,
    TrialReport, VectorDist, VectorGen,
};
use replicore::meanest::Norm;
use replicore::tiling::{lattice_preprocess, read_basis, voronoi_tiling, TilingDescriptor};
use replicore::{Error, Result};

#[derive(Parser)]
#[command(
    name = "replicore",
    version,
    about = "Replicable statistical algorithms and their paired-run harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    L2,
    Linf,
}

#[derive(clap::Args)]
struct Run {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Paired runs of the adaptive coin tester.
    CoinTest {
        #[arg(long)]
        p0: f64,
        #[arg(long)]
        q0: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        delta: f64,
        /// `0.4` or `uniform:lo:hi`.
        #[arg(long)]
        bias: ScalarGen,
        #[command(flatten)]
        run: Run,
    },
    /// Paired runs of the adaptive statistical query on a Bernoulli population.
    Statq {
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        delta: f64,
        /// Population bias: `0.4`, `bernoulli:0.4` or `uniform:lo:hi`.
        #[arg(long)]
        dist: String,
        #[command(flatten)]
        run: Run,
    },
    /// Paired runs of adaptive heavy hitters.
    HeavyHitters {
        /// JSON map from atom to mass, e.g. '{"a":0.6,"b":0.4}'.
        #[arg(long)]
        dist: String,
        #[arg(long)]
        v: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        delta: f64,
        #[command(flatten)]
        run: Run,
    },
    /// Paired runs of the composed N-coin tester.
    Ncoin {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p0: f64,
        #[arg(long)]
        q0: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        delta: f64,
        /// Run the approximate tester with this slack.
        #[arg(long)]
        slack: Option<usize>,
        #[arg(long, default_value = "uniform:0:1")]
        biases: VectorGen,
        #[command(flatten)]
        run: Run,
    },
    /// Paired runs of l-infinity learning by binary search.
    LinfLearn {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value = "uniform:0:1")]
        biases: VectorGen,
        #[command(flatten)]
        run: Run,
    },
    /// Packing and covering radii, surface area and relevant vectors of a lattice.
    TilingInfo {
        /// Text file with one basis vector per row.
        #[arg(long)]
        basis: PathBuf,
    },
    /// Paired runs of replicable mean estimation.
    MeanEst {
        #[arg(long, value_enum)]
        norm: NormArg,
        #[arg(long)]
        n: usize,
        #[arg(long, required_if_eq("norm", "l2"))]
        eps: Option<f64>,
        #[arg(long, required_if_eq("norm", "linf"))]
        gamma: Option<f64>,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        delta: f64,
        /// `cube`, a JSON descriptor, or a path to one.
        #[arg(long, default_value = "cube")]
        tiling: String,
        /// `bernoulli:<biases>` or `gaussian:<means>`.
        #[arg(long)]
        dist: VectorDist,
        #[arg(long, default_value_t = 1.0)]
        error_factor: f64,
        #[command(flatten)]
        run: Run,
    },
    /// Paired runs of pseudo-maximum identification.
    PseudoMax {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        delta: f64,
        /// File of biases, `uniform:lo:hi`, `planted:top:rest:count` or `fixed:v1,v2,...`.
        #[arg(long)]
        biases: VectorGen,
        #[command(flatten)]
        run: Run,
    },
    /// Runs a preset and writes its full JSON report.
    Run {
        preset: String,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Override one parameter of every paired part, as `name=value`.
        #[arg(long = "set")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweeps one parameter of a preset's experiment and writes CSV.
    Sweep {
        preset: String,
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Which experiment of the preset to sweep.
        #[arg(long, default_value_t = 0)]
        part: usize,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the full reports as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Lists the shipped presets.
    ListPresets,
}

fn config(algorithm: AlgorithmSpec, run: &Run, slack_r: usize) -> PairedTrialConfig {
    PairedTrialConfig::new(algorithm, run.trials, run.seed).with_slack(slack_r)
}

fn emit(value: &serde_json::Value, out: Option<&PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn report_json(report: &TrialReport) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(report)?)
}

fn parse_tiling(arg: &str) -> Result<TilingDescriptor> {
    let trimmed = arg.trim();
    if trimmed == "cube" {
        Ok(TilingDescriptor::cube())
    } else if trimmed.starts_with('{') {
        TilingDescriptor::from_json(trimmed)
    } else {
        TilingDescriptor::from_json(&std::fs::read_to_string(trimmed)?)
    }
}

fn parse_bias(arg: &str) -> Result<ScalarGen> {
    arg.strip_prefix("bernoulli:").unwrap_or(arg).parse()
}

/// Runs the command; `Ok(true)` when some report failed.
fn execute(cli: Cli) -> Result<bool> {
    let single = |report: TrialReport| -> Result<bool> {
        emit(&report_json(&report)?, None)?;
        Ok(report.fail)
    };
    match cli.command {
        Command::CoinTest {
            p0,
            q0,
            rho,
            delta,
            bias,
            run,
        } => {
            let cfg = config(
                AlgorithmSpec::CoinTest {
                    p0,
                    q0,
                    rho,
                    delta,
                    bias,
                },
                &run,
                1,
            );
            let paired = run_paired_records(&cfg)?;
            let mut counts: BTreeMap<String, u64> = BTreeMap::new();
            for labels in paired.records.iter().filter_map(|r| r.labels.as_ref()) {
                for l in labels {
                    *counts.entry(l.clone()).or_insert(0) += 1;
                }
            }
            let report = paired.report;
            emit(
                &json!({
                    "verdict_counts": counts,
                    "mean_samples": report.samples.mean,
                    "p95_samples": report.samples.p95,
                    "report": report_json(&report)?,
                }),
                None,
            )?;
            Ok(report.fail)
        }
        Command::Statq {
            tau,
            rho,
            delta,
            dist,
            run,
        } => {
            let bias = parse_bias(&dist)?;
            single(run_paired(&config(
                AlgorithmSpec::StatQuery {
                    tau,
                    rho,
                    delta,
                    bias,
                },
                &run,
                1,
            ))?)
        }
        Command::HeavyHitters {
            dist,
            v,
            eps,
            rho,
            delta,
            run,
        } => {
            let atoms: BTreeMap<String, f64> = serde_json::from_str(&dist)?;
            single(run_paired(&config(
                AlgorithmSpec::HeavyHitters {
                    atoms,
                    v,
                    eps,
                    rho,
                    delta,
                },
                &run,
                1,
            ))?)
        }
        Command::Ncoin {
            n,
            p0,
            q0,
            rho,
            delta,
            slack,
            biases,
            run,
        } => single(run_paired(&config(
            AlgorithmSpec::NCoin {
                n,
                p0,
                q0,
                rho,
                delta,
                slack,
                biases,
            },
            &run,
            slack.unwrap_or(1),
        ))?),
        Command::LinfLearn {
            n,
            eps,
            rho,
            delta,
            biases,
            run,
        } => single(run_paired(&config(
            AlgorithmSpec::LinfLearn {
                n,
                eps,
                rho,
                delta,
                biases,
            },
            &run,
            1,
        ))?),
        Command::TilingInfo { basis } => {
            let lattice = lattice_preprocess(&read_basis(&basis)?, f64::INFINITY)?;
            let tiling = voronoi_tiling(&lattice)?;
            emit(
                &json!({
                    "dim": lattice.dim(),
                    "lambda": lattice.lambda(),
                    "mu": lattice.mu(),
                    "determinant": lattice.determinant(),
                    "relevant_vectors": lattice.relevant_vectors().len(),
                    "cell_radius": tiling.cell_radius(),
                    "surface_area": tiling.surface_area(),
                    "gamma": tiling.gamma(),
                }),
                None,
            )?;
            Ok(false)
        }
        Command::MeanEst {
            norm,
            n,
            eps,
            gamma,
            rho,
            delta,
            tiling,
            dist,
            error_factor,
            run,
        } => {
            let (norm, accuracy) = match norm {
                NormArg::L2 => (Norm::L2, eps),
                NormArg::Linf => (Norm::Linf, gamma),
            };
            let accuracy = accuracy.ok_or_else(|| {
                Error::InvalidParameter("missing accuracy (--eps or --gamma)".into())
            })?;
            single(run_paired(&config(
                AlgorithmSpec::MeanEst {
                    norm,
                    n,
                    accuracy,
                    rho,
                    delta,
                    tiling: parse_tiling(&tiling)?,
                    dist,
                    error_factor,
                },
                &run,
                1,
            ))?)
        }
        Command::PseudoMax {
            n,
            k,
            eps,
            rho,
            delta,
            biases,
            run,
        } => single(run_paired(&config(
            AlgorithmSpec::PseudoMax {
                n,
                k,
                eps,
                rho,
                delta,
                biases,
            },
            &run,
            1,
        ))?),
        Command::Run {
            preset: id,
            trials,
            seed,
            set,
            out,
        } => {
            let mut p = preset(&id)?;
            for assignment in &set {
                let (name, value) = assignment.split_once('=').ok_or_else(|| {
                    Error::Parse(format!("expected name=value, got `{assignment}`"))
                })?;
                let value = value
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("expected a number in `{assignment}`")))?;
                p = override_parameter(&p, name, value)?;
            }
            let outcome = run_preset(&p, trials, seed)?;
            emit(&serde_json::to_value(&outcome)?, out.as_ref())?;
            eprintln!(
                "{}: {}",
                outcome.id,
                if outcome.fail { "FAIL" } else { "PASS" }
            );
            Ok(outcome.fail)
        }
        Command::Sweep {
            preset: id,
            axis,
            values,
            part,
            trials,
            seed,
            out,
            json: json_out,
        } => {
            let p = preset(&id)?;
            let base = p
                .parts
                .iter()
                .filter_map(|part| match part {
                    PresetPart::Paired(c) | PresetPart::Sweep { config: c, .. } => Some(c),
                    PresetPart::Check(_) => None,
                })
                .nth(part)
                .ok_or_else(|| {
                    Error::InvalidParameter(format!("preset `{id}` has no experiment {part}"))
                })?;
            let cfg = PairedTrialConfig {
                trials: trials.unwrap_or(base.trials),
                seed: seed.unwrap_or(base.seed),
                ..base.clone()
            };
            let reports = sweep(&cfg, &axis, &values)?;
            let rows: Vec<(f64, TrialReport)> = values
                .iter()
                .copied()
                .zip(reports.iter().cloned())
                .collect();
            let csv = sweep_csv(&axis, &rows);
            match out {
                Some(path) => std::fs::write(path, &csv)?,
                None => print!("{csv}"),
            }
            if let Some(path) = json_out {
                emit(&serde_json::to_value(&reports)?, Some(&path))?;
            }
            Ok(reports.iter().any(|r| r.fail))
        }
        Command::ListPresets => {
            for p in presets() {
                println!("{:<5} {}", p.id, p.description);
            }
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
