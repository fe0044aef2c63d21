//! Command-line verbs.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use kwexpert_core::compose::render_text;
use kwexpert_core::compression::CompiledRule;
use kwexpert_core::corpus::{normalize_phrase, Corpus};
use kwexpert_core::inference::{backward_chain, forward_chain, Fact};
use kwexpert_core::query::Direction;
use kwexpert_core::rules::{validate, RuleBase};

use crate::config::{Config, ConfigLayer};
use crate::engine::{Engine, SearchRequest};

#[derive(Debug, Parser)]
#[command(
    name = "kwexpert",
    version,
    about = "Keyword search with a production-rule expert system"
)]
pub struct Cli {
    /// TOML configuration file (also KWEXPERT_CONFIG).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: ConfigLayer,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Structured,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Index a directory of text files (first line is the title).
    Index {
        dir: PathBuf,
        /// Where to write the index snapshot.
        #[arg(long, default_value = "kwexpert-index.json")]
        out: PathBuf,
    },
    /// Parse or check a rule file.
    Rules {
        #[command(subcommand)]
        action: RulesAction,
    },
    /// Run one query through the full pipeline.
    Search {
        #[arg(required = true)]
        query: Vec<String>,
        #[arg(long, default_value = "left_to_right")]
        direction: Direction,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Forward-chain from a fact file, or prove a goal.
    Infer {
        /// One statement per line, optionally followed by `[confidence]`.
        #[arg(long)]
        facts: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        goal: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Show the compiled rule set for a query.
    Compile {
        #[arg(long)]
        query: String,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, default_value = "left_to_right")]
        direction: Direction,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Start the HTTP server.
    Serve,
}

#[derive(Debug, Subcommand)]
pub enum RulesAction {
    /// Print the canonical form and version hash.
    Load { file: PathBuf },
    /// Report syntax errors, self-loops, cycles and duplicates.
    Validate { file: PathBuf },
}

pub fn resolve_config(cli: &Cli) -> Result<Config> {
    Ok(Config::resolve(cli.config.as_deref(), std::env::vars(), &cli.settings)?)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_rules(path: &Path) -> Result<RuleBase> {
    RuleBase::parse(&read(path)?, &path.display().to_string()).with_context(|| format!("in {}", path.display()))
}

/// Facts file: one statement per line, `#` comments, optional trailing
/// `[confidence]`.
pub fn parse_facts(text: &str) -> Result<Vec<Fact>> {
    let mut facts = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (statement, confidence) = match line.strip_suffix(']').and_then(|s| s.rsplit_once('[')) {
            Some((statement, conf)) => {
                let c: f64 = conf
                    .trim()
                    .parse()
                    .with_context(|| format!("line {}: invalid confidence `{conf}`", n + 1))?;
                if !(c > 0.0 && c <= 1.0) {
                    bail!("line {}: confidence {c} outside (0, 1]", n + 1);
                }
                (statement, c)
            }
            None => (line, 1.0),
        };
        let statement = normalize_phrase(statement);
        if statement.is_empty() {
            bail!("line {}: empty statement", n + 1);
        }
        facts.push(Fact::asserted(statement, confidence));
    }
    Ok(facts)
}

fn engine_for(config: Config) -> Result<Engine> {
    if config.corpus_dir.is_none() && config.index_path.is_none() {
        bail!("no corpus configured: pass --corpus-dir or --index-path");
    }
    let needs_empty_rules = config.rules_file.is_none();
    let engine = Engine::from_config(config)?;
    if needs_empty_rules {
        engine.load_rules("", "empty")?;
    }
    Ok(engine)
}

fn json_line(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let config = resolve_config(&cli)?;
    match cli.command {
        Command::Index { dir, out: path } => {
            let mut corpus = Corpus::new();
            let ids = corpus.ingest_dir(&dir)?;
            corpus.save(&path)?;
            writeln!(out, "indexed {} documents into {}", ids.len(), path.display())?;
            writeln!(out, "corpus version {}", corpus.version())?;
        }
        Command::Rules {
            action: RulesAction::Load { file },
        } => {
            let base = load_rules(&file)?;
            for rule in base.rules() {
                writeln!(out, "{}\t{rule}", rule.id)?;
            }
            writeln!(out, "{} rules, version {}", base.len(), base.version_hash())?;
        }
        Command::Rules {
            action: RulesAction::Validate { file },
        } => {
            let base = load_rules(&file)?;
            let report = validate(&base).with_context(|| format!("in {}", file.display()))?;
            for warning in report.warnings() {
                writeln!(out, "warning: {warning}")?;
            }
            writeln!(out, "{}: {} rules ok", file.display(), base.len())?;
        }
        Command::Search {
            query,
            direction,
            format,
        } => {
            let engine = engine_for(config)?;
            let response = engine.search(&SearchRequest {
                session_id: None,
                query: query.join(" "),
                direction: Some(direction),
            })?;
            match format {
                Format::Structured => json_line(out, &response)?,
                Format::Text => write!(out, "{}", render_text(&response.result, Some(&engine.corpus())))?,
            }
        }
        Command::Infer {
            facts,
            rules,
            goal,
            format,
        } => {
            let facts = parse_facts(&read(&facts)?)?;
            let base = load_rules(&rules)?;
            match goal {
                Some(goal) => {
                    let proof = backward_chain(&goal, &facts, base.rules(), config.max_depth);
                    match (format, proof) {
                        (Format::Structured, Ok(p)) => json_line(out, &p)?,
                        (Format::Structured, Err(f)) => json_line(out, &f)?,
                        (Format::Text, Ok(p)) => {
                            writeln!(
                                out,
                                "proved {} (depth {}, confidence {})",
                                p.goal, p.depth, p.confidence
                            )?;
                            for (i, step) in p.trace.steps.iter().enumerate() {
                                writeln!(out, "  {}. {} {}", i + 1, step.rule_id, step.rule_text)?;
                            }
                        }
                        (Format::Text, Err(f)) => {
                            writeln!(out, "cannot prove {}", f.goal)?;
                            if !f.missing.is_empty() {
                                let missing: Vec<_> = f.missing.into_iter().collect();
                                writeln!(out, "  missing: {}", missing.join(", "))?;
                            }
                            if f.depth_limited {
                                writeln!(out, "  a proof exists beyond max depth {}", config.max_depth)?;
                            }
                        }
                    }
                }
                None => {
                    let outcome = forward_chain(&facts, base.rules(), config.strategy, config.max_depth);
                    match format {
                        Format::Structured => json_line(out, &outcome)?,
                        Format::Text => {
                            for fact in outcome.derived_facts() {
                                let trace = outcome.trace(&fact.statement).expect("derived facts have traces");
                                writeln!(out, "{} ({}) {}", fact.statement, fact.confidence, trace.trace_id)?;
                                for step in &trace.steps {
                                    writeln!(out, "  {} {}", step.rule_id, step.rule_text)?;
                                }
                            }
                            writeln!(out, "{} firings", outcome.firings.len())?;
                        }
                    }
                }
            }
        }
        Command::Compile {
            query,
            rules,
            direction,
            format,
        } => {
            let mut config = config;
            if rules.is_some() {
                config.rules_file = rules;
            }
            if config.rules_file.is_none() {
                bail!("no rules: pass --rules or --rules-file");
            }
            let engine = engine_for(config)?;
            let set = engine.compile_query(&query, direction)?;
            match format {
                Format::Structured => writeln!(out, "{}", set.to_canonical_json())?,
                Format::Text => {
                    let enabled: Vec<_> = set.enabled_rule_ids.iter().map(|id| id.0.as_str()).collect();
                    writeln!(out, "key {}", set.key)?;
                    writeln!(out, "enabled {}", enabled.join(" "))?;
                    for rule in &set.rules {
                        let tag = match rule {
                            CompiledRule::Rule(_) => "rule",
                            CompiledRule::Compressed(_) => "compressed",
                        };
                        writeln!(out, "{tag}\t{}\t{}", rule.id(), rule.to_rule())?;
                    }
                }
            }
        }
        Command::Serve => {
            let engine = Arc::new(Engine::from_config(config)?);
            tokio::runtime::Runtime::new()?.block_on(crate::http::serve(engine))?;
        }
    }
    Ok(())
}
