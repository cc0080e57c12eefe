use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lcodec::Error;

mod audio;
mod commands;
mod config;

use commands::CorpusKind;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "lcodec", version, about = "Masked-channel RVQ audio codec")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Network weights (LCWT).
    #[arg(long, global = true)]
    weights: Option<PathBuf>,
    /// Masked-channel codebooks (LCCB).
    #[arg(long, global = true)]
    codebooks: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct QuantArgs {
    #[arg(long)]
    n_total: Option<usize>,
    #[arg(long)]
    n_parallel: Option<usize>,
    #[arg(long)]
    codebook_size: Option<usize>,
    /// Latent width.
    #[arg(long)]
    dim: Option<usize>,
    /// Lloyd iterations per stage.
    #[arg(long)]
    kmeans_iters: Option<usize>,
    #[arg(long)]
    ema_epochs: Option<usize>,
}

impl QuantArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let q = &mut cfg.quantizer;
        q.n_total = self.n_total.unwrap_or(q.n_total);
        q.n_parallel = self.n_parallel.unwrap_or(q.n_parallel);
        q.codebook_size = self.codebook_size.unwrap_or(q.codebook_size);
        q.dim = self.dim.unwrap_or(q.dim);
        let t = &mut cfg.training;
        t.kmeans_iters = self.kmeans_iters.unwrap_or(t.kmeans_iters);
        t.ema_epochs = self.ema_epochs.unwrap_or(t.ema_epochs);
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print expected weight names and shapes.
    Manifest {
        /// Also write seeded random weights for every entry to this file.
        #[arg(long, value_name = "FILE")]
        init_random: Option<PathBuf>,
    },
    /// Write a synthetic latent corpus.
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        frames: usize,
        #[arg(long, value_enum, default_value_t = CorpusKind::Correlated)]
        kind: CorpusKind,
        #[arg(long, default_value_t = 3)]
        clusters: usize,
        #[command(flatten)]
        quant: QuantArgs,
    },
    /// Train codebooks on a latent corpus or on encoded WAV files.
    TrainCodebooks {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, conflicts_with = "wav_dir")]
        latents: Option<PathBuf>,
        #[arg(long)]
        wav_dir: Option<PathBuf>,
        /// Also train full-width residual codebooks and write them here.
        #[arg(long)]
        rvq_out: Option<PathBuf>,
        /// Write the report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        quant: QuantArgs,
    },
    /// WAV to LCBS token stream.
    Encode { input: PathBuf, output: PathBuf },
    /// LCBS token stream to WAV.
    Decode {
        input: PathBuf,
        output: PathBuf,
        /// Number of stages to decode (default: all).
        #[arg(long)]
        stages: Option<usize>,
    },
    /// Compare a degraded WAV against a reference.
    Eval {
        reference: PathBuf,
        degraded: PathBuf,
        /// Latent corpus for which to also report the quantizer loss.
        #[arg(long)]
        latents: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Captured energy per stage for masked-channel and plain RVQ.
    ProfileChannels {
        #[arg(long)]
        latents: PathBuf,
        #[arg(long)]
        rvq_codebooks: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        quant: QuantArgs,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 3,
        Error::Shape(_) | Error::Data(_) => 4,
        Error::Format(_) => 5,
        Error::Unsupported(_) => 6,
        Error::Weights(_) => 7,
        Error::Io(_) => 8,
    }
}

fn run(cli: Cli) -> lcodec::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.seed = cli.seed.unwrap_or(cfg.seed);
    if cli.weights.is_some() {
        cfg.paths.weights = cli.weights;
    }
    if cli.codebooks.is_some() {
        cfg.paths.codebooks = cli.codebooks;
    }
    match cli.command {
        Command::Manifest { init_random } => commands::manifest(&cfg, init_random.as_deref()),
        Command::SynthCorpus { out, frames, kind, clusters, quant } => {
            quant.apply(&mut cfg);
            commands::synth_corpus(&cfg, &out, frames, kind, clusters)
        }
        Command::TrainCodebooks { out, latents, wav_dir, rvq_out, report, quant } => {
            quant.apply(&mut cfg);
            commands::train(
                &cfg,
                &commands::TrainArgs {
                    out: &out,
                    latents: latents.as_deref(),
                    wav_dir: wav_dir.as_deref(),
                    rvq_out: rvq_out.as_deref(),
                    report: report.as_deref(),
                },
            )
        }
        Command::Encode { input, output } => commands::encode(&cfg, &input, &output),
        Command::Decode { input, output, stages } => commands::decode(&cfg, &input, &output, stages),
        Command::Eval { reference, degraded, latents, json } => {
            commands::eval(&cfg, &reference, &degraded, latents.as_deref(), json.as_deref())
        }
        Command::ProfileChannels { latents, rvq_codebooks, csv, quant } => {
            quant.apply(&mut cfg);
            if rvq_codebooks.is_some() {
                cfg.paths.rvq_codebooks = rvq_codebooks;
            }
            commands::profile(&cfg, &latents, csv.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LC_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
