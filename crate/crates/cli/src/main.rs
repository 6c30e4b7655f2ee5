//! `xapagy` — run pidgin story files through the narrative-reasoning
//! engine, poke at it interactively, or inspect saved snapshots.
//!
//! Exit codes: 0 success, 1 story error (line-numbered), 2 config error.

use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result, anyhow};
use clap::{Parser, Subcommand};
use xapagy_core::{Agent, Config, KnowledgeBase, Purpose};

#[derive(Parser)]
#[command(name = "xapagy", about = "narrative-reasoning engine for pidgin stories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct AgentArgs {
    /// Domain-knowledge file (concepts, verbs, dictionary).
    #[arg(long)]
    domain: PathBuf,
    /// Optional `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Individual config overrides, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Write the JSONL trace here instead of standard output.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// RNG seed override (shorthand for --set seed=N).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a story file tick-by-tick and emit the trace.
    Run {
        story: PathBuf,
        #[command(flatten)]
        agent: AgentArgs,
        /// Save the final agent state as a snapshot.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Interactive session: statements plus `:dump`, `:mood`, `:recall`,
    /// `:tick`, `:save`, `:load`, `:quit`.
    Repl {
        #[command(flatten)]
        agent: AgentArgs,
    },
    /// Inspect a saved snapshot.
    Dump {
        snapshot: PathBuf,
        /// What to dump: focus, shadows, hls or memory.
        what: String,
        /// HLS purpose (CONTINUATION, MISSING_ACTION, MISSING_RELATION,
        /// SUMMARIZATION).
        #[arg(long, default_value = "CONTINUATION")]
        purpose: String,
    },
}

/// Errors before the story starts executing are configuration errors.
fn build_agent(args: &AgentArgs) -> Result<Agent> {
    let domain_text = std::fs::read_to_string(&args.domain)
        .with_context(|| format!("reading domain file {}", args.domain.display()))?;
    let kb = KnowledgeBase::load(&domain_text)?;
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            Config::load(&text)?
        }
        None => Config::default(),
    };
    for kv in &args.sets {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!("--set needs `key=value`, got `{kv}`"))?;
        config.set(key.trim(), value.trim())?;
    }
    if let Some(seed) = args.seed {
        config.set("seed", &seed.to_string())?;
    }
    Ok(Agent::new(kb, config)?)
}

fn write_trace(agent: &Agent, target: &Option<PathBuf>) -> Result<()> {
    let text = agent.trace.to_jsonl();
    match target {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing trace to {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_run(story: &PathBuf, args: &AgentArgs, save: &Option<PathBuf>) -> Result<ExitCode> {
    let mut agent = match build_agent(args) {
        Ok(agent) => agent,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Ok(ExitCode::from(2));
        }
    };
    let text = std::fs::read_to_string(story)
        .with_context(|| format!("reading story file {}", story.display()))?;
    let run_result = agent.run_text(&text);
    write_trace(&agent, &args.trace)?;
    if let Err(e) = run_result {
        eprintln!("error: {e}");
        return Ok(ExitCode::from(1));
    }
    if let Some(path) = save {
        std::fs::write(path, agent.save_snapshot())
            .with_context(|| format!("writing snapshot to {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn dump_for(agent: &Agent, what: &str, purpose: &str) -> Result<String> {
    Ok(match what {
        "focus" => agent.dump_focus(),
        "shadows" => agent.dump_shadows(),
        "memory" => agent.dump_memory(),
        "hls" => {
            let purpose =
                Purpose::parse(purpose).ok_or_else(|| anyhow!("unknown purpose `{purpose}`"))?;
            agent.dump_hls(purpose)
        }
        other => return Err(anyhow!("unknown dump target `{other}`")),
    })
}

/// One REPL meta-command; errors are reported, never fatal.
fn meta_command(agent: &mut Agent, line: &str) -> Result<bool> {
    let mut parts = line.split_whitespace();
    let cmd = parts.next().unwrap_or("");
    match cmd {
        ":quit" | ":q" => return Ok(true),
        ":dump" => {
            let what = parts.next().unwrap_or("focus");
            let purpose = parts.next().unwrap_or("CONTINUATION");
            print!("{}", dump_for(agent, what, purpose)?);
        }
        ":mood" => {
            let spec = parts.next().ok_or_else(|| anyhow!(":mood needs a preset or key=value"))?;
            agent.set_mood(spec)?;
        }
        ":recall" => {
            let n: usize = parts.next().unwrap_or("1").parse().context("bad recall count")?;
            let vis = agent.recall(n);
            for vi in vis {
                println!("{}", agent.render_vi(vi));
            }
        }
        ":tick" => {
            let n: usize = parts.next().unwrap_or("1").parse().context("bad tick count")?;
            for _ in 0..n {
                agent.empty_tick();
            }
        }
        ":save" => {
            let path = parts.next().ok_or_else(|| anyhow!(":save needs a file"))?;
            std::fs::write(path, agent.save_snapshot())?;
        }
        ":load" => {
            let path = parts.next().ok_or_else(|| anyhow!(":load needs a file"))?;
            let text = std::fs::read_to_string(path)?;
            *agent = Agent::load_snapshot(&text)?;
        }
        other => return Err(anyhow!("unknown meta-command `{other}`")),
    }
    Ok(false)
}

fn cmd_repl(args: &AgentArgs) -> Result<ExitCode> {
    let mut agent = match build_agent(args) {
        Ok(agent) => agent,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Ok(ExitCode::from(2));
        }
    };
    let stdin = std::io::stdin();
    let mut lineno = 0usize;
    for line in stdin.lock().lines() {
        lineno += 1;
        let line = line?;
        let trimmed = line.split('#').next().unwrap_or("").trim().to_string();
        if trimmed.starts_with(':') {
            match meta_command(&mut agent, &trimmed) {
                Ok(true) => break,
                Ok(false) => {}
                Err(e) => eprintln!("error: {e:#}"),
            }
        } else if trimmed.is_empty() {
            if line.trim().is_empty() {
                agent.empty_tick();
            }
        } else if let Err(e) = agent.step_statement(&trimmed, &format!("line {lineno}")) {
            eprintln!("error: {e}");
        }
        std::io::stdout().flush()?;
    }
    write_trace(&agent, &args.trace)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_dump(snapshot: &PathBuf, what: &str, purpose: &str) -> Result<ExitCode> {
    let text = std::fs::read_to_string(snapshot)
        .with_context(|| format!("reading snapshot {}", snapshot.display()))?;
    let agent = Agent::load_snapshot(&text)?;
    print!("{}", dump_for(&agent, what, purpose)?);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { story, agent, save } => cmd_run(story, agent, save),
        Command::Repl { agent } => cmd_repl(agent),
        Command::Dump { snapshot, what, purpose } => cmd_dump(snapshot, what, purpose),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
