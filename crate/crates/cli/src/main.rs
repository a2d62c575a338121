use std::fs;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use trustnav::config::{load_config, LoadedConfig};
use trustnav::eval::{compare_regimes, demo_repl, grid_csv, run_eval, PolicyKind, Regime};
use trustnav::guidance::symbols_to_string;
use trustnav::lang2sym::{evaluate_corpus, load_corpus, Lang2Sym};
use trustnav::ppo::{Checkpoint, Trainer};
use trustnav::world::{generate_world, WorldSpec};

#[derive(Parser)]
#[command(
    name = "trustnav",
    version,
    about = "Trust-aware robot navigation with human guidance"
)]
struct Cli {
    /// Write the gateway graph of the configured world as JSON lines.
    #[arg(long, global = true, value_name = "PATH")]
    dump_world: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Learned,
    Random,
    Gullible,
    Skeptical,
}

#[derive(Subcommand)]
enum Command {
    /// Parse one utterance into directional symbols.
    Parse {
        #[arg(long)]
        text: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check the parser against a golden corpus.
    CorpusTest {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a policy.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint; its embedded configuration is used.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a policy over seeded episodes.
    Eval {
        #[arg(long, value_enum)]
        policy: PolicyArg,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Required for the learned policy.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate all policies under high- and low-trust populations.
    Compare {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Guide the robot yourself, one episode.
    DemoRepl {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "demo_transcript.txt")]
        transcript: PathBuf,
    },
}

fn config_from(path: Option<&Path>) -> Result<LoadedConfig> {
    match path {
        Some(p) => load_config(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(LoadedConfig::from_defaults()),
    }
}

fn dump_world(config: &LoadedConfig, path: &Path) -> Result<()> {
    let world = generate_world(&WorldSpec::from(&config.config.env))?;
    fs::write(path, world.dump_lines().join("\n") + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    eprintln!(
        "wrote {} gateways to {}",
        world.gateways.len(),
        path.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let config_path = match &cli.command {
        Command::Parse { config, .. }
        | Command::CorpusTest { config, .. }
        | Command::Train { config, .. }
        | Command::Eval { config, .. }
        | Command::Compare { config, .. } => config.clone(),
        Command::DemoRepl { .. } => None,
    };
    if let Some(path) = &cli.dump_world {
        dump_world(&config_from(config_path.as_deref())?, path)?;
    }

    match cli.command {
        Command::Parse { text, config } => {
            let config = config_from(config.as_deref())?.config;
            let parsed = Lang2Sym::from_config(&config).parse(&text);
            let g = &parsed.guidance;
            let conf: Vec<String> = g.confidences().iter().map(|c| format!("{c:.4}")).collect();
            println!("symbols: {}", symbols_to_string(g.symbols()));
            println!("confidences: [{}]", conf.join(", "));
            println!("tau_h: {:.4}", g.tau_h());
            if !parsed.has_direction() {
                println!("note: no directional content");
            }
        }
        Command::CorpusTest { file, config } => {
            let config = config_from(config.as_deref())?.config;
            let entries =
                load_corpus(&file).with_context(|| format!("reading {}", file.display()))?;
            let report = evaluate_corpus(&Lang2Sym::from_config(&config), &entries)?;
            for d in &report.diffs {
                println!(
                    "line {}: {:?}\n  expected {}\n  got      {}",
                    d.line,
                    d.text,
                    symbols_to_string(&d.expected),
                    symbols_to_string(&d.got)
                );
            }
            println!(
                "accuracy: {}/{} = {:.4}",
                report.matched, report.total, report.accuracy
            );
        }
        Command::Train {
            config,
            out,
            resume,
        } => {
            let mut trainer = match resume {
                Some(path) => {
                    if config.is_some() {
                        eprintln!("note: --config is ignored when resuming; the checkpoint's configuration is used");
                    }
                    let ckpt = Checkpoint::load(&path)?;
                    eprintln!("resuming from step {}", ckpt.step());
                    Trainer::from_checkpoint(ckpt)
                }
                None => {
                    let loaded = config_from(config.as_deref())?;
                    fs::create_dir_all(&out)
                        .with_context(|| format!("creating {}", out.display()))?;
                    loaded.echo_into(&out).context("echoing config.toml")?;
                    Trainer::new(&loaded.config)?
                }
            };
            let summary = trainer.run(&out)?;
            println!(
                "trained {} updates / {} steps / {} episodes; tail mean tau_r {:.4}",
                summary.updates, summary.steps, summary.episodes, summary.tail_mean_tau_r
            );
            if let Some(p) = summary.final_checkpoint {
                println!("final checkpoint: {}", p.display());
            }
        }
        Command::Eval {
            policy,
            config,
            checkpoint,
            episodes,
            seed,
            out,
        } => {
            let config = config_from(config.as_deref())?.config;
            let kind = match (policy, checkpoint) {
                (PolicyArg::Learned, Some(p)) => PolicyKind::Learned(p),
                (PolicyArg::Learned, None) => bail!("--policy learned needs --checkpoint"),
                (PolicyArg::Random, _) => PolicyKind::Random,
                (PolicyArg::Gullible, _) => PolicyKind::Gullible,
                (PolicyArg::Skeptical, _) => PolicyKind::Skeptical,
            };
            let episodes = episodes.unwrap_or(config.eval.episodes);
            let seed = seed.unwrap_or(config.eval.seed);
            let (report, _) = run_eval(&config, &kind, episodes, seed, out.as_deref())?;
            println!("policy: {}", kind.name());
            println!("episodes: {}", report.episodes);
            println!("success_rate: {:.6}", report.success_rate);
            println!("mean_gateways: {:.6}", report.mean_gateways);
            println!("mean_interactions: {:.6}", report.mean_interactions);
            println!("mean_elapsed: {:.6}", report.mean_elapsed);
            println!("mean_reward: {:.6}", report.mean_reward);
            println!("mean_tau_r: {:.6}", report.mean_tau_r);
        }
        Command::Compare {
            checkpoint,
            config,
            episodes,
            out,
        } => {
            let config = config_from(config.as_deref())?.config;
            let mut policies = Vec::new();
            if let Some(p) = checkpoint {
                policies.push(PolicyKind::Learned(p));
            }
            policies.extend([
                PolicyKind::Random,
                PolicyKind::Gullible,
                PolicyKind::Skeptical,
            ]);
            let cells = compare_regimes(
                &config,
                &policies,
                &[Regime::HighTrust, Regime::LowTrust],
                episodes.unwrap_or(config.eval.episodes),
                config.eval.seed,
            )?;
            let csv = grid_csv(&cells);
            fs::write(&out, &csv).with_context(|| format!("writing {}", out.display()))?;
            print!("{csv}");
        }
        Command::DemoRepl {
            checkpoint,
            seed,
            transcript,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let file = fs::File::create(&transcript)
                .with_context(|| format!("creating {}", transcript.display()))?;
            let mut transcript_out = BufWriter::new(file);
            let stdin = io::stdin();
            let summary = demo_repl(
                ckpt.config(),
                &ckpt.params,
                seed,
                &mut stdin.lock(),
                &mut io::stdout(),
                &mut transcript_out,
            )?;
            drop(transcript_out);
            eprintln!(
                "transcript saved to {} ({} steps)",
                transcript.display(),
                summary.steps
            );
        }
    }
    Ok(())
}
