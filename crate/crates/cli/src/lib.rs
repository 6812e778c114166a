//! Batch commands behind the `scenewright` binary.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use scenewright_core::annotator::{build_parse_prompt, build_summary_prompt, DeterministicFallback};
use scenewright_core::characters::Catalog;
use scenewright_core::model::{AssetKind, CastAssignment, CastMember, RawScript};
use scenewright_core::motion::GestureAdapter;
use scenewright_core::pipeline::{
    default_cast, generate_bundle, new_bundle, remote_annotation, remote_speech, BundleDir, Engine, JobCell, JobKind,
    PipelineError, Stage, MANIFEST,
};
use scenewright_core::speech::OfflineSynth;
use scenewright_core::validate::validate_bundle;
use scenewright_server::ServerConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FATAL: u8 = 1;
pub const EXIT_PARTIAL: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "scenewright", version, about = "Turn dialogue scripts into voiced, gesturing, framed scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full pipeline on a script file and write a scene bundle.
    Generate(GenerateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Check every invariant of a bundle directory.
    Validate {
        bundle_dir: PathBuf,
    },
    /// Print the exact prompt sent to the annotation provider.
    Prompt {
        #[arg(value_enum)]
        kind: PromptKind,
        script: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    Offline,
    Remote,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AdapterKind {
    Procedural,
    External,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PromptKind {
    Parse,
    Summary,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Plain-text script, one `Speaker: line` per dialogue line.
    pub script: PathBuf,
    /// Bundle directory; created or overwritten.
    #[arg(long)]
    pub out: PathBuf,
    /// Annotation and speech backends; defaults to the environment.
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
    /// `speaker=voice:model`, repeatable. Unlisted speakers are cast round-robin.
    #[arg(long = "cast", value_parser = parse_cast_entry)]
    pub cast: Vec<(String, CastMember)>,
    /// Accepted for forward compatibility; offline generation is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub adapter: Option<AdapterKind>,
    /// Command or URL of the external gesture generator.
    #[arg(long)]
    pub adapter_endpoint: Option<String>,
    /// Lines processed at once.
    #[arg(long)]
    pub concurrency: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub concurrency: Option<usize>,
}

/// Parses `speaker=voice:model`. The speaker may contain `=` only if
/// quoted by the shell as a whole; the last `=` splits.
pub fn parse_cast_entry(s: &str) -> Result<(String, CastMember), String> {
    let (speaker, rest) = s.rsplit_once('=').ok_or_else(|| format!("expected speaker=voice:model, got {s:?}"))?;
    let (voice, model) = rest.split_once(':').ok_or_else(|| format!("expected voice:model after '=', got {rest:?}"))?;
    if speaker.trim().is_empty() || voice.is_empty() || model.is_empty() {
        return Err(format!("expected speaker=voice:model, got {s:?}"));
    }
    Ok((speaker.trim().to_string(), CastMember { voice_id: voice.to_string(), model_id: model.to_string() }))
}

fn engine_for(args: &GenerateArgs) -> Result<Engine, PipelineError> {
    let mut engine = match args.provider {
        None => Engine::from_env()?,
        Some(ProviderKind::Offline) => Engine::from_env()?
            .with_annotation(Arc::new(DeterministicFallback))
            .with_speech(Arc::new(OfflineSynth::default())),
        Some(ProviderKind::Remote) => Engine::from_env()?.with_annotation(remote_annotation()?).with_speech(remote_speech()?),
    };
    match (args.adapter, &args.adapter_endpoint) {
        (Some(AdapterKind::Procedural), _) => engine.adapter = GestureAdapter::Procedural,
        (Some(AdapterKind::External), Some(endpoint)) => engine.adapter = GestureAdapter::external(endpoint),
        (Some(AdapterKind::External), None) => match std::env::var("S2S_GESTURE_ENDPOINT") {
            Ok(endpoint) => engine.adapter = GestureAdapter::external(&endpoint),
            Err(_) => return Err(PipelineError::Io("--adapter external needs --adapter-endpoint or S2S_GESTURE_ENDPOINT".into())),
        },
        (None, _) => {}
    }
    if let Some(k) = args.concurrency {
        engine = engine.with_concurrency(k);
    }
    Ok(engine)
}

/// Final line counts of one generation run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenerateOutcome {
    pub scene_id: String,
    pub lines: usize,
    pub failed: usize,
}

/// Generates the bundle for `script` into `out`. Explicit cast entries win;
/// remaining speakers get the round-robin default.
pub fn generate_to_dir(
    engine: &Engine,
    script: &RawScript,
    out: &Path,
    explicit: &[(String, CastMember)],
) -> Result<GenerateOutcome, PipelineError> {
    let (bundle, warnings) = new_bundle(engine, script)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let mut cast: CastAssignment = default_cast(engine, &bundle.speakers)?;
    for (speaker, member) in explicit {
        if !bundle.speakers.contains(speaker) {
            eprintln!("warning: --cast names {speaker:?}, who has no lines");
            continue;
        }
        cast.insert(speaker.clone(), member.clone());
    }
    if out.join(MANIFEST).exists() {
        for kind in AssetKind::ALL {
            let _ = std::fs::remove_dir_all(out.join(kind.dir()));
        }
    }
    let dir = BundleDir::new(out);
    dir.write_manifest(&bundle)?;
    let n = scenewright_core::model::parse_speaker_lines(script)?.lines.len();
    let indices: Vec<usize> = (0..n).collect();
    let job = JobCell::new("cli", &bundle.scene_id, JobKind::Generate, &indices, Stage::Queued);
    let scene_id = bundle.scene_id.clone();
    let result = generate_bundle(engine, &dir, bundle, cast, &job);
    job.finish(result.as_ref().err().map(ToString::to_string));
    let final_bundle = result?;
    for line in job.snapshot().lines.iter().filter(|l| l.stage == Stage::Failed) {
        eprintln!("line {} failed: {}", line.index, line.reason.as_deref().unwrap_or("unknown"));
    }
    Ok(GenerateOutcome {
        scene_id,
        lines: final_bundle.lines.len(),
        failed: final_bundle.status.iter().filter(|s| matches!(s, scenewright_core::model::LineStatus::Failed { .. })).count(),
    })
}

pub fn cmd_generate(args: &GenerateArgs) -> u8 {
    let text = match std::fs::read_to_string(&args.script) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.script.display());
            return EXIT_FATAL;
        }
    };
    let engine = match engine_for(args) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FATAL;
        }
    };
    let script = RawScript::new(text).with_source(args.script.display().to_string());
    match generate_to_dir(&engine, &script, &args.out, &args.cast) {
        Ok(outcome) => {
            let summary = json!({
                "sceneId": outcome.scene_id,
                "outDir": args.out.display().to_string(),
                "lines": outcome.lines,
                "failed": outcome.failed,
            });
            println!("{summary}");
            if outcome.failed > 0 {
                EXIT_PARTIAL
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {}: {e}", args.script.display());
            EXIT_FATAL
        }
    }
}

pub fn cmd_validate(bundle_dir: &Path) -> u8 {
    let problems = validate_bundle(bundle_dir, &Catalog::default());
    for p in &problems {
        eprintln!("{}: {p}", bundle_dir.display());
    }
    let report = json!({ "valid": problems.is_empty(), "problems": problems.len() });
    println!("{report}");
    if problems.is_empty() {
        EXIT_OK
    } else {
        EXIT_FATAL
    }
}

pub fn cmd_prompt(kind: PromptKind, script: &Path) -> u8 {
    match std::fs::read_to_string(script) {
        Ok(text) => {
            let raw = RawScript::new(text);
            let prompt = match kind {
                PromptKind::Parse => build_parse_prompt(&raw),
                PromptKind::Summary => build_summary_prompt(&raw),
            };
            print!("{prompt}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", script.display());
            EXIT_FATAL
        }
    }
}

pub fn cmd_serve(args: &ServeArgs) -> u8 {
    let mut config = match ServerConfig::from_env() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FATAL;
        }
    };
    if let Some(p) = args.port {
        config.port = p;
    }
    if let Some(d) = &args.data_dir {
        config.data_dir = d.clone();
    }
    let mut engine = match Engine::from_env() {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FATAL;
        }
    };
    if let Some(k) = args.concurrency {
        engine = engine.with_concurrency(k);
    }
    match scenewright_server::run(config, engine) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FATAL
        }
    }
}

pub fn run(cli: Cli) -> u8 {
    match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Serve(args) => cmd_serve(args),
        Command::Validate { bundle_dir } => cmd_validate(bundle_dir),
        Command::Prompt { kind, script } => cmd_prompt(*kind, script),
    }
}
