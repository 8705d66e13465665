//! `colrec`: generate a corpus, train embeddings, build collections and
//! evaluate them, one stage per subcommand with files in between.

mod commands;
mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use colrec::Error;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "colrec", version, about = "Automatic collection recommender")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// Flat `key = value` config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for all stage outputs (and default inputs).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Any config key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    interactions: Option<PathBuf>,
    #[arg(long)]
    metadata: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineFlags {
    #[arg(long)]
    dimred: Option<String>,
    #[arg(long)]
    cluster: Option<String>,
    /// Comma-separated user ids; defaults to every user.
    #[arg(long, value_delimiter = ',')]
    users: Option<Vec<String>>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus with planted themes.
    Generate {
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        items: Option<usize>,
        #[arg(long)]
        themes: Option<usize>,
        #[arg(long)]
        themes_per_user: Option<usize>,
        #[arg(long)]
        interactions_per_user: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Factorize the interactions and write the embedding file.
    Train {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        sweeps: Option<usize>,
        #[arg(long)]
        regularization: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Build collections for every user (or a subset).
    Recommend {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        pipeline: PipelineFlags,
    },
    /// Compute the offline metrics of a collections file.
    Evaluate {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        collections: Option<PathBuf>,
    },
    /// Recommend and evaluate every reduction x clustering combination.
    Ablate {
        #[command(flatten)]
        inputs: Inputs,
        /// Comma-separated user ids; defaults to every user.
        #[arg(long, value_delimiter = ',')]
        users: Option<Vec<String>>,
    },
}

fn push<T: ToString>(out: &mut Vec<(String, String)>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        out.push((key.to_owned(), v.to_string()));
    }
}

fn push_path(out: &mut Vec<(String, String)>, key: &str, value: &Option<PathBuf>) {
    push(out, key, value.as_ref().map(|p| p.display().to_string()));
}

fn push_inputs(out: &mut Vec<(String, String)>, inputs: &Inputs) {
    push_path(out, "interactions", &inputs.interactions);
    push_path(out, "metadata", &inputs.metadata);
    push_path(out, "embeddings", &inputs.embeddings);
}

fn overrides(shared: &Shared, command: &Command) -> Result<Vec<(String, String)>, Error> {
    let mut out = Vec::new();
    for kv in &shared.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Validation(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        out.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    push(&mut out, "seed", shared.seed);
    push_path(&mut out, "out", &shared.out);
    push(&mut out, "jobs", shared.jobs);
    match command {
        Command::Generate {
            users,
            items,
            themes,
            themes_per_user,
            interactions_per_user,
            noise,
        } => {
            push(&mut out, "users", *users);
            push(&mut out, "items", *items);
            push(&mut out, "themes", *themes);
            push(&mut out, "themes_per_user", *themes_per_user);
            push(&mut out, "interactions_per_user", *interactions_per_user);
            push(&mut out, "noise", *noise);
        }
        Command::Train {
            inputs,
            dim,
            sweeps,
            regularization,
            alpha,
        } => {
            push_inputs(&mut out, inputs);
            push(&mut out, "dim", *dim);
            push(&mut out, "sweeps", *sweeps);
            push(&mut out, "regularization", *regularization);
            push(&mut out, "alpha", *alpha);
        }
        Command::Recommend { inputs, pipeline } => {
            push_inputs(&mut out, inputs);
            push(&mut out, "dimred", pipeline.dimred.as_ref());
            push(&mut out, "cluster", pipeline.cluster.as_ref());
        }
        Command::Evaluate {
            inputs,
            collections,
        } => {
            push_inputs(&mut out, inputs);
            push_path(&mut out, "collections", collections);
        }
        Command::Ablate { inputs, .. } => push_inputs(&mut out, inputs),
    }
    Ok(out)
}

fn run(shared: &Shared, command: &Command, out: &mut (dyn Write + Send)) -> anyhow::Result<()> {
    let config = RunConfig::resolve(shared.config.as_deref(), &overrides(shared, command)?)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()?;
    pool.install(|| match command {
        Command::Generate { .. } => commands::generate(&config, out),
        Command::Train { .. } => commands::train(&config, out),
        Command::Recommend { pipeline, .. } => {
            commands::recommend(&config, pipeline.users.as_deref(), out)
        }
        Command::Evaluate { .. } => commands::evaluate(&config, out),
        Command::Ablate { users, .. } => commands::ablate(&config, users.as_deref(), out),
    })
}

/// 3 for anything that failed on the filesystem, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|e| {
        e.is::<std::io::Error>() || matches!(e.downcast_ref::<Error>(), Some(Error::Io { .. }))
    });
    if io {
        3
    } else {
        2
    }
}

/// Parses `args` (program name first), runs the stage and returns the exit code.
fn run_cli<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code() as u8;
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match run(&cli.shared, &cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn main() -> ExitCode {
    let code = run_cli(
        std::env::args_os(),
        &mut std::io::stdout(),
        &mut std::io::stderr(),
    );
    ExitCode::from(code)
}
