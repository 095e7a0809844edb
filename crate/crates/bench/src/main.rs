use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sfe_bench::experiment::{ExperimentConfig, ALGORITHMS};
use sfe_bench::{collect_identification_data, load_plant, report, run_comparison, Plant};
use sfe_core::design::{design_filter_from_xi, realize, realized_zeros, w_markov};
use sfe_core::inverse::{predictor_zeros, write_matrix_csv};
use sfe_core::lti::{fmt_full, to_predictor};
use sfe_core::sysid::identify_xi;
use sfe_core::{Error, FaultEstimationFilter, IdentifiedXi, IoData, Result, ZeroReport};

/// Sensor fault estimation from identified Markov parameters.
#[derive(Parser)]
#[command(name = "sfe", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Registered plant name or plant file; overrides the configuration.
    #[arg(long, global = true)]
    plant: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Identify Markov parameters (xi.csv) from data, or from a simulated
    /// closed-loop experiment on the plant when no data is given.
    Identify {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Design the filter from Markov parameters or data; writes the filter
    /// bundle and the realized matrices.
    Design {
        #[arg(long, conflicts_with = "data")]
        xi: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run a filter bundle over an input/output record.
    Estimate {
        #[arg(long)]
        filter: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Full four-way comparison on the plant; writes report CSVs and an SVG.
    Compare,
    /// Invariant zeros of the fault subsystem, from the plant model or from
    /// identified Markov parameters.
    Zeros {
        #[arg(long)]
        xi: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let stage = match &e {
                Error::Stage { stage, .. } => *stage,
                _ => verb_name(&cli.command),
            };
            eprintln!("sfe: error [stage: {stage}]: {}", e.root());
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}

fn verb_name(c: &Command) -> &'static str {
    match c {
        Command::Identify { .. } => "identify",
        Command::Design { .. } => "design",
        Command::Estimate { .. } => "estimate",
        Command::Compare => "compare",
        Command::Zeros { .. } => "zeros",
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(plant) = &cli.plant {
        cfg.plant = plant.clone();
    }
    Ok(cfg)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::validation(format!("cannot open {}: {e}", path.display())))
}

fn plant_for(cfg: &ExperimentConfig) -> Result<Plant> {
    let plant = load_plant(&cfg.plant).map_err(|e| e.at("plant"))?;
    match cfg.noise {
        Some(n) => plant.with_noise(n.q, n.r),
        None => Ok(plant),
    }
}

fn simulate_identification(cfg: &ExperimentConfig, out: &Path) -> Result<IoData> {
    let plant = plant_for(cfg)?;
    let id = &cfg.identification;
    let data = collect_identification_data(&plant, id.samples, &id.reference_variance, cfg.seed)
        .map_err(|e| e.at("simulate"))?;
    data.write_csv(File::create(out.join("identification_data.csv"))?)?;
    Ok(data)
}

fn obtain_xi(cfg: &ExperimentConfig, out: &Path, data: Option<&PathBuf>) -> Result<IdentifiedXi> {
    let data = match data {
        Some(path) => IoData::read_csv(open(path)?)?,
        None => simulate_identification(cfg, out)?,
    };
    identify_xi(&data, &cfg.identification.regression).map_err(|e| e.at("identify"))
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let out = cli.out.as_path();
    std::fs::create_dir_all(out)?;
    match &cli.command {
        Command::Identify { data } => {
            let xi = obtain_xi(&cfg, out, data.as_ref())?;
            xi.write_csv(File::create(out.join("xi.csv"))?)?;
            println!(
                "identified p = {}, n_u = {}, n_y = {} -> {}",
                xi.past_horizon,
                xi.inputs(),
                xi.outputs(),
                out.join("xi.csv").display()
            );
        }
        Command::Design { xi, data } => {
            let xi = match xi {
                Some(path) => IdentifiedXi::read_csv(open(path)?)?,
                None => obtain_xi(&cfg, out, data.as_ref())?,
            };
            let design = design_filter_from_xi(&xi, &cfg.design)?;
            if let Some(w) = &design.zeros.warning {
                eprintln!("sfe: warning: {w}");
            }
            design
                .filter
                .write_bundle(&out.join("filter"), &cfg.design.stabilization.tag())?;
            design.realized.write_dir(&out.join("realized"))?;
            write_matrix_csv(
                File::create(out.join("realized").join("Kr.csv"))?,
                &design.gain,
            )?;
            println!(
                "filter order {} (spectral radius {:.4}) -> {}",
                design.filter.order(),
                design.filter.spectral_radius(),
                out.join("filter").display()
            );
        }
        Command::Estimate { filter, data } => {
            let mut filt = FaultEstimationFilter::read_bundle(filter)?;
            let data = IoData::read_csv(open(data)?)?;
            let est = filt.run(&data, None).map_err(|e| e.at("estimate"))?;
            let mut w = csv::Writer::from_writer(File::create(out.join("estimates.csv"))?);
            let mut header = vec!["k".to_string()];
            header.extend((1..=est.ncols()).map(|j| format!("fhat{j}")));
            w.write_record(&header).map_err(Error::from)?;
            for k in 0..est.nrows() {
                let mut rec = vec![k.to_string()];
                rec.extend(est.row(k).iter().map(|v| fmt_full(*v)));
                w.write_record(&rec).map_err(Error::from)?;
            }
            w.flush()?;
            println!(
                "{} estimates -> {}",
                est.nrows(),
                out.join("estimates.csv").display()
            );
        }
        Command::Compare => {
            let plant = load_plant(&cfg.plant).map_err(|e| e.at("plant"))?;
            let rep = run_comparison(&cfg, &plant)?;
            report::write_report(&rep, out)?;
            println!(
                "plant {} seed {}, window {}..{}",
                rep.plant,
                rep.seed,
                rep.evaluation.start,
                rep.evaluation.start + rep.evaluation.length
            );
            for name in ALGORITHMS {
                match &rep.result(name).expect("all algorithms reported").outcome {
                    Ok(run) => println!(
                        "{name}: trace(cov) = {:.6e}, mean = {:?}{}",
                        run.stats.trace(),
                        run.stats
                            .mean
                            .iter()
                            .map(|v| format!("{v:.3e}"))
                            .collect::<Vec<_>>(),
                        run.spectral_radius
                            .map(|r| format!(", spectral radius {r:.4}"))
                            .unwrap_or_default()
                    ),
                    Err(msg) => println!("{name}: failed: {msg}"),
                }
            }
        }
        Command::Zeros { xi } => {
            let rep: ZeroReport<f64> = match xi {
                Some(path) => {
                    let xi = IdentifiedXi::read_csv(open(path)?)?;
                    cfg.design.validate(xi.outputs(), xi.past_horizon)?;
                    let w = w_markov(&xi, &cfg.design.sensors, cfg.design.horizon)
                        .map_err(|e| e.at("markov"))?;
                    let real = realize(&w, xi.inputs(), xi.outputs(), &cfg.design)
                        .map_err(|e| e.at("realize"))?;
                    realized_zeros(
                        &real.parts,
                        cfg.design.zero_margin,
                        cfg.design.observability_tol,
                    )
                }
                None => {
                    let plant = plant_for(&cfg)?;
                    let pred = to_predictor(&plant.model).map_err(|e| e.at("predictor"))?;
                    predictor_zeros(&pred, cfg.design.zero_margin).map_err(|e| e.at("zeros"))?
                }
            };
            let mut w = csv::Writer::from_writer(File::create(out.join("zeros.csv"))?);
            w.write_record(["kind", "re", "im", "modulus"])
                .map_err(Error::from)?;
            for (kind, list) in [
                ("zero", &rep.zeros),
                ("nearly_unobservable", &rep.nearly_unobservable),
            ] {
                for z in list {
                    w.write_record([
                        kind.to_string(),
                        fmt_full(z.re),
                        fmt_full(z.im),
                        fmt_full(z.norm()),
                    ])
                    .map_err(Error::from)?;
                    println!("{kind} {:+.6} {:+.6}i  |z| = {:.6}", z.re, z.im, z.norm());
                }
            }
            w.flush()?;
            if let Some(msg) = &rep.warning {
                eprintln!("sfe: warning: {msg}");
            }
            println!(
                "{} invariant zeros; {}",
                rep.zeros.len(),
                if rep.stable {
                    "all strictly inside the unit circle"
                } else {
                    "UNSTABLE zeros present: the filter cannot be stabilized"
                }
            );
        }
    }
    Ok(())
}
