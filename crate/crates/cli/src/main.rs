use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use fdrec_cli::commands;
use fdrec_cli::config::RunConfig;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "fdrec",
    version,
    about = "Fair diffusion recommender: data ingestion, conditional-diffusion training, \
             prediction, fairness evaluation, and experiment harnesses"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to the key=value run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the top-k cutoff.
    #[arg(long)]
    k: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Additional key=value overrides, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl CommonArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut overrides: Vec<(String, String)> = Vec::new();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects key=value, got '{kv}'"))?;
            overrides.push((k.to_string(), v.to_string()));
        }
        if let Some(seed) = self.seed {
            overrides.push(("seed".to_string(), seed.to_string()));
        }
        if let Some(k) = self.k {
            overrides.push(("k".to_string(), k.to_string()));
        }
        if let Some(out) = &self.out {
            overrides.push(("out_dir".to_string(), out.display().to_string()));
        }
        match &self.config {
            Some(path) => RunConfig::load(path, &overrides),
            None => {
                let pairs: Vec<(String, String)> = overrides;
                RunConfig::from_pairs(&pairs)
            }
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse or generate the dataset, assign groups, split, and dump.
    Ingest(CommonArgs),
    /// Train the configured model on an ingested dataset.
    Train(CommonArgs),
    /// Generate the dense prediction matrix from a trained checkpoint.
    Predict(CommonArgs),
    /// Compute utility and fairness metrics from predictions.
    Eval(CommonArgs),
    /// Train and evaluate the base model and both ablation variants.
    Ablate(CommonArgs),
    /// One train/predict/eval cycle per hyperparameter value.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Parameter to vary: T (diffusion steps) or L (variance scale).
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. 10,50,100.
        #[arg(long)]
        values: String,
    },
    /// Minority under-sampling robustness runs.
    Sparsity {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated removal ratios.
        #[arg(long, default_value = "0.5,0.7,0.9")]
        ratios: String,
    },
    /// Finite-difference verification of all gradients at small dims.
    Gradcheck(CommonArgs),
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("bad numeric value '{v}'"))
        })
        .collect()
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest(args) => {
            let config = args.load()?;
            let out = commands::cmd_ingest(&config)?;
            println!(
                "ingested {} users x {} items ({} interactions, {} users dropped)",
                out.n_users, out.n_items, out.n_events, out.dropped_users
            );
            println!("dataset fingerprint: {}", out.fingerprint);
            println!("dump: {}", out.dump_dir.display());
        }
        Command::Train(args) => {
            let config = args.load()?;
            let out = commands::cmd_train(&config)?;
            println!(
                "trained {} epochs, final loss {:?}",
                out.epochs_done, out.final_loss
            );
            println!("checkpoint: {}", out.checkpoint.display());
            println!("loss history: {}", out.loss_history.display());
        }
        Command::Predict(args) => {
            let config = args.load()?;
            let out = commands::cmd_predict(&config)?;
            println!("predictions: {}", out.predictions.display());
        }
        Command::Eval(args) => {
            let config = args.load()?;
            let out = commands::cmd_eval(&config)?;
            print!("{}", out.report.to_table());
            println!("metrics: {}", out.json_path.display());
        }
        Command::Ablate(args) => {
            let config = args.load()?;
            let out = commands::cmd_ablate(&config)?;
            print!("{}", std::fs::read_to_string(&out.txt_path)?);
        }
        Command::Sweep {
            common,
            param,
            values,
        } => {
            let config = common.load()?;
            let param = commands::SweepParam::parse(&param)?;
            let values = parse_f64_list(&values)?;
            let out = commands::cmd_sweep(&config, param, &values)?;
            print!("{}", std::fs::read_to_string(&out.txt_path)?);
        }
        Command::Sparsity { common, ratios } => {
            let config = common.load()?;
            let ratios = parse_f64_list(&ratios)?;
            let out = commands::cmd_sparsity(&config, &ratios)?;
            print!("{}", std::fs::read_to_string(&out.txt_path)?);
        }
        Command::Gradcheck(args) => {
            let config = args.load()?;
            let report = commands::cmd_gradcheck(&config)?;
            print!("{}", report.render());
            if !report.passed {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}
