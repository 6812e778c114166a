//! Scene generation: annotation once per script, then per line
//! speech → gesture → retarget → camera, fanned out across lines.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotator::{
    annotate_script, fallback_regenerate, fallback_summary, regenerate_line, summarize_script, AnnotateError,
    AnnotationProvider, AnnotationRequest, DeterministicFallback, RemoteChatProvider, ReplayProvider, TimeoutProvider,
    DEFAULT_PROVIDER_TIMEOUT,
};
use crate::camera::{frame_subject, two_shot_layout, CameraPose, SubjectBounds, CONVERSATION_SPACING};
use crate::characters::Catalog;
use crate::kinematics::{retarget, write_bvh, Vec3};
use crate::model::{
    missing_cast, parse_speaker_lines, AnnotatedLine, AssetKind, CastAssignment, LineAssets, LineStatus, RawScript,
    SceneBundle, ScriptError, StyleTag,
};
use crate::motion::GestureAdapter;
use crate::parallel::map_indexed;
use crate::speech::{encode_wav, OfflineSynth, RemoteSpeech, SpeechProvider};

pub const DEFAULT_CONCURRENCY: usize = 4;
pub const MANIFEST: &str = "scene.json";

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("scene {0:?} not found")]
    SceneNotFound(String),
    #[error("job {0:?} not found")]
    JobNotFound(String),
    #[error("asset not found: {0}")]
    AssetNotFound(String),
    #[error("line index {index} out of range (scene has {lines} lines)")]
    IndexOutOfRange { index: usize, lines: usize },
    #[error("cast is missing speakers: {}", .0.join(", "))]
    CastIncomplete(Vec<String>),
    #[error("unknown character model {0:?}")]
    UnknownModel(String),
    #[error("unknown style {0:?}")]
    UnknownStyle(String),
    #[error("invalid edit: {0}")]
    InvalidEdit(String),
    #[error("scene {0:?} is busy with another job")]
    Conflict(String),
    #[error("script is empty")]
    EmptyScript,
    #[error("no dialogue lines found")]
    NoDialogueFound,
    #[error(transparent)]
    Annotation(AnnotateError),
    #[error("speech provider unavailable: {0}")]
    SpeechUnavailable(String),
    #[error("bundle is corrupt: {0}")]
    CorruptBundle(String),
    #[error("storage error: {0}")]
    Io(String),
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Io(e.to_string())
    }
}

impl From<ScriptError> for PipelineError {
    fn from(e: ScriptError) -> Self {
        match e {
            ScriptError::EmptyScript => PipelineError::EmptyScript,
            ScriptError::NoDialogueFound => PipelineError::NoDialogueFound,
        }
    }
}

impl From<AnnotateError> for PipelineError {
    fn from(e: AnnotateError) -> Self {
        match e {
            AnnotateError::EmptyScript => PipelineError::EmptyScript,
            AnnotateError::NoDialogueFound => PipelineError::NoDialogueFound,
            other => PipelineError::Annotation(other),
        }
    }
}

/// Providers and settings shared by every job.
#[derive(Clone)]
pub struct Engine {
    pub annotation: Arc<dyn AnnotationProvider>,
    pub speech: Arc<dyn SpeechProvider>,
    pub adapter: GestureAdapter,
    pub catalog: Arc<Catalog>,
    /// Lines processed at once within one job.
    pub concurrency: usize,
}

impl Engine {
    /// Everything local and deterministic.
    pub fn offline() -> Self {
        Self {
            annotation: Arc::new(DeterministicFallback),
            speech: Arc::new(OfflineSynth::default()),
            adapter: GestureAdapter::Procedural,
            catalog: Arc::new(Catalog::default()),
            concurrency: DEFAULT_CONCURRENCY,
        }
    }

    pub fn with_annotation(mut self, provider: Arc<dyn AnnotationProvider>) -> Self {
        self.annotation = provider;
        self
    }

    pub fn with_speech(mut self, provider: Arc<dyn SpeechProvider>) -> Self {
        self.speech = provider;
        self
    }

    pub fn with_concurrency(mut self, k: usize) -> Self {
        self.concurrency = k.max(1);
        self
    }

    pub fn with_adapter(mut self, adapter: GestureAdapter) -> Self {
        self.adapter = adapter;
        self
    }

    /// Backends chosen by environment: annotation is replayed from
    /// `S2S_LLM_REPLAY_DIR`, else remote when `S2S_LLM_BASE_URL` is set,
    /// else offline; speech follows `S2S_TTS_PROVIDER`; gestures follow
    /// `S2S_GESTURE_ADAPTER`; fan-out width is `S2S_CONCURRENCY`.
    pub fn from_env() -> Result<Self, PipelineError> {
        let annotation: Arc<dyn AnnotationProvider> = if let Ok(dir) = std::env::var("S2S_LLM_REPLAY_DIR") {
            Arc::new(ReplayProvider::from_dir(Path::new(&dir))?)
        } else if std::env::var("S2S_LLM_BASE_URL").is_ok() {
            remote_annotation()?
        } else {
            Arc::new(DeterministicFallback)
        };
        let speech: Arc<dyn SpeechProvider> = match std::env::var("S2S_TTS_PROVIDER").as_deref() {
            Err(_) | Ok("") | Ok("offline") => Arc::new(OfflineSynth::default()),
            Ok("remote") => remote_speech()?,
            Ok(other) => return Err(PipelineError::SpeechUnavailable(format!("unknown S2S_TTS_PROVIDER {other:?}"))),
        };
        let adapter = GestureAdapter::from_env().map_err(|e| PipelineError::Io(e.to_string()))?;
        let concurrency = match std::env::var("S2S_CONCURRENCY") {
            Ok(v) => v.parse().map_err(|_| PipelineError::Io(format!("S2S_CONCURRENCY must be a positive integer, got {v:?}")))?,
            Err(_) => DEFAULT_CONCURRENCY,
        };
        Ok(Self { annotation, speech, adapter, catalog: Arc::new(Catalog::default()), concurrency }.with_concurrency(concurrency))
    }
}

/// The chat-completion provider configured by `S2S_LLM_*`, with the default timeout.
pub fn remote_annotation() -> Result<Arc<dyn AnnotationProvider>, PipelineError> {
    let remote = RemoteChatProvider::from_env().map_err(|e| PipelineError::Annotation(e.into()))?;
    Ok(Arc::new(TimeoutProvider::new(Arc::new(remote), DEFAULT_PROVIDER_TIMEOUT)))
}

/// The TTS service configured by `S2S_TTS_BASE_URL` and `S2S_TTS_API_KEY`.
pub fn remote_speech() -> Result<Arc<dyn SpeechProvider>, PipelineError> {
    RemoteSpeech::from_env(DEFAULT_PROVIDER_TIMEOUT)
        .map(|r| Arc::new(r) as Arc<dyn SpeechProvider>)
        .ok_or_else(|| PipelineError::SpeechUnavailable("S2S_TTS_BASE_URL is not set".into()))
}

/// `s-` plus the first 12 hex digits of the script's SHA-256.
pub fn scene_id_for(script: &str) -> String {
    let digest = Sha256::digest(script.as_bytes());
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("s-{hex}")
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes via a sibling temp file and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = dir.join(format!(".{name}.{}-{}.tmp", std::process::id(), TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

/// A scene bundle directory: `scene.json` plus `audio/`, `motion/`,
/// `anim/` and `camera/` assets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BundleDir {
    root: PathBuf,
}

impl BundleDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn exists(&self) -> bool {
        self.root.join(MANIFEST).is_file()
    }

    pub fn read_manifest(&self) -> Result<SceneBundle, PipelineError> {
        let text = std::fs::read_to_string(self.root.join(MANIFEST))?;
        SceneBundle::from_json(&text).map_err(|e| PipelineError::CorruptBundle(e.to_string()))
    }

    pub fn write_manifest(&self, bundle: &SceneBundle) -> Result<(), PipelineError> {
        write_atomic(&self.root.join(MANIFEST), bundle.to_json().as_bytes())?;
        Ok(())
    }

    /// Writes an asset and returns its bundle-relative path.
    pub fn write_asset(&self, kind: AssetKind, index: usize, bytes: &[u8]) -> Result<String, PipelineError> {
        let rel = kind.relative_path(index);
        write_atomic(&self.root.join(&rel), bytes)?;
        Ok(rel)
    }

    pub fn read_asset(&self, rel: &str) -> Result<Vec<u8>, PipelineError> {
        if rel.split('/').any(|part| part == ".." || part.is_empty()) {
            return Err(PipelineError::AssetNotFound(rel.to_string()));
        }
        std::fs::read(self.root.join(rel)).map_err(|_| PipelineError::AssetNotFound(rel.to_string()))
    }

    fn remove_assets(&self, index: usize) {
        for kind in AssetKind::ALL {
            let _ = std::fs::remove_file(self.root.join(kind.relative_path(index)));
        }
    }
}

/// Per-line progress through the generation stages, in order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Annotating,
    Queued,
    Speech,
    Gesture,
    Retarget,
    Done,
    Failed,
}

/// Stage timings in seconds since the job started.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    #[serde(rename = "speechStart", skip_serializing_if = "Option::is_none")]
    pub speech_start: Option<f64>,
    #[serde(rename = "speechEnd", skip_serializing_if = "Option::is_none")]
    pub speech_end: Option<f64>,
    #[serde(rename = "gestureStart", skip_serializing_if = "Option::is_none")]
    pub gesture_start: Option<f64>,
    #[serde(rename = "gestureEnd", skip_serializing_if = "Option::is_none")]
    pub gesture_end: Option<f64>,
    #[serde(rename = "retargetStart", skip_serializing_if = "Option::is_none")]
    pub retarget_start: Option<f64>,
    #[serde(rename = "retargetEnd", skip_serializing_if = "Option::is_none")]
    pub retarget_end: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineProgress {
    pub index: usize,
    pub stage: Stage,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub times: StageTimes,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    /// Every line completed.
    Done,
    /// Finished with at least one failed line.
    Partial,
    /// Stopped before line work began.
    Failed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Generate,
    Regenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationJob {
    #[serde(rename = "jobId")]
    pub job_id: String,
    #[serde(rename = "sceneId")]
    pub scene_id: String,
    pub kind: JobKind,
    pub state: JobState,
    pub lines: Vec<LineProgress>,
    #[serde(rename = "startedAt")]
    pub started_at: String,
    #[serde(rename = "finishedAt", skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl GenerationJob {
    pub fn failed_lines(&self) -> usize {
        self.lines.iter().filter(|l| l.stage == Stage::Failed).count()
    }
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Shared, observable job state. Transitions happen under one lock, so
/// snapshots are always consistent.
pub struct JobCell {
    job: Mutex<GenerationJob>,
    finished: Condvar,
    epoch: Instant,
}

impl JobCell {
    pub fn new(job_id: impl Into<String>, scene_id: impl Into<String>, kind: JobKind, indices: &[usize], initial: Stage) -> Self {
        let lines = indices
            .iter()
            .map(|&index| LineProgress { index, stage: initial, reason: None, times: StageTimes::default() })
            .collect();
        Self {
            job: Mutex::new(GenerationJob {
                job_id: job_id.into(),
                scene_id: scene_id.into(),
                kind,
                state: JobState::Running,
                lines,
                started_at: now_rfc3339(),
                finished_at: None,
                error: None,
            }),
            finished: Condvar::new(),
            epoch: Instant::now(),
        }
    }

    pub fn snapshot(&self) -> GenerationJob {
        self.job.lock().unwrap().clone()
    }

    pub fn job_id(&self) -> String {
        self.job.lock().unwrap().job_id.clone()
    }

    fn update(&self, index: usize, f: impl FnOnce(&mut LineProgress, f64)) {
        let t = self.epoch.elapsed().as_secs_f64();
        let mut job = self.job.lock().unwrap();
        if let Some(line) = job.lines.iter_mut().find(|l| l.index == index) {
            f(line, t);
        }
    }

    fn set_all(&self, stage: Stage) {
        for line in &mut self.job.lock().unwrap().lines {
            line.stage = stage;
        }
    }

    fn enter(&self, index: usize, stage: Stage) {
        self.update(index, |line, t| {
            line.stage = stage;
            let slot = match stage {
                Stage::Speech => &mut line.times.speech_start,
                Stage::Gesture => &mut line.times.gesture_start,
                Stage::Retarget => &mut line.times.retarget_start,
                _ => return,
            };
            *slot = Some(t);
        });
    }

    fn leave(&self, index: usize, stage: Stage) {
        self.update(index, |line, t| {
            let slot = match stage {
                Stage::Speech => &mut line.times.speech_end,
                Stage::Gesture => &mut line.times.gesture_end,
                Stage::Retarget => &mut line.times.retarget_end,
                _ => return,
            };
            *slot = Some(t);
        });
    }

    fn fail_line(&self, index: usize, reason: &str) {
        self.update(index, |line, _| {
            line.stage = Stage::Failed;
            line.reason = Some(reason.to_string());
        });
    }

    pub fn finish(&self, error: Option<String>) {
        let mut job = self.job.lock().unwrap();
        job.state = if error.is_some() {
            JobState::Failed
        } else if job.lines.iter().any(|l| l.stage == Stage::Failed) {
            JobState::Partial
        } else {
            JobState::Done
        };
        if error.is_some() {
            for line in &mut job.lines {
                if line.stage != Stage::Done {
                    line.stage = Stage::Failed;
                    line.reason = error.clone();
                }
            }
        }
        job.error = error;
        job.finished_at = Some(now_rfc3339());
        self.finished.notify_all();
    }

    /// Blocks until the job leaves the running state.
    pub fn wait(&self) -> GenerationJob {
        let mut job = self.job.lock().unwrap();
        while job.state == JobState::Running {
            job = self.finished.wait(job).unwrap();
        }
        job.clone()
    }
}

/// A new bundle with title and synopsis but no annotated lines yet. A
/// failing summary provider degrades to the rule-based summary and
/// yields a warning.
pub fn new_bundle(engine: &Engine, script: &RawScript) -> Result<(SceneBundle, Vec<String>), PipelineError> {
    let parsed = parse_speaker_lines(script)?;
    let mut warnings = Vec::new();
    let summary = match summarize_script(script, engine.annotation.as_ref()) {
        Ok(s) => s,
        Err(e) => {
            warnings.push(format!("summary provider failed ({e}); used the rule-based summary"));
            fallback_summary(script)?
        }
    };
    Ok((SceneBundle::new(scene_id_for(&script.text), summary, script, parsed.speakers), warnings))
}

/// Checks that every speaker is cast and every model exists.
pub fn check_cast(engine: &Engine, bundle: &SceneBundle, cast: &CastAssignment) -> Result<(), PipelineError> {
    let missing = missing_cast(cast, &bundle.speakers);
    if !missing.is_empty() {
        return Err(PipelineError::CastIncomplete(missing.into_iter().map(str::to_string).collect()));
    }
    for member in cast.values() {
        if engine.catalog.get(&member.model_id).is_none() {
            return Err(PipelineError::UnknownModel(member.model_id.clone()));
        }
    }
    Ok(())
}

/// Round-robin cast over the offline voices and bundled characters.
pub fn default_cast(engine: &Engine, speakers: &[String]) -> Result<CastAssignment, PipelineError> {
    let voices = engine.speech.list_voices().map_err(|e| PipelineError::SpeechUnavailable(e.to_string()))?;
    let models: Vec<&str> = engine.catalog.ids().collect();
    if voices.is_empty() || models.is_empty() {
        return Err(PipelineError::CastIncomplete(speakers.to_vec()));
    }
    Ok(speakers
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let member = crate::model::CastMember {
                voice_id: voices[i % voices.len()].voice_id.clone(),
                model_id: models[i % models.len()].to_string(),
            };
            (s.clone(), member)
        })
        .collect())
}

/// Stage positions: speakers side by side along X in order of appearance.
fn stage_position(bundle: &SceneBundle, speaker: &str) -> Vec3 {
    let n = bundle.speakers.len() as f64;
    let k = bundle.speakers.iter().position(|s| s == speaker).unwrap_or(0) as f64;
    Vec3::new((k - (n - 1.0) / 2.0) * CONVERSATION_SPACING, 0.0, 0.0)
}

/// The nearest other speaker before line `i`, else after it.
fn listener_for(bundle: &SceneBundle, i: usize) -> Option<&str> {
    let me = &bundle.lines[i].id;
    bundle.lines[..i]
        .iter()
        .rev()
        .chain(&bundle.lines[i + 1..])
        .map(|l| l.id.as_str())
        .find(|id| *id != me)
}

fn subject(engine: &Engine, bundle: &SceneBundle, speaker: &str) -> Result<SubjectBounds, String> {
    let member = bundle.cast.get(speaker).ok_or_else(|| format!("speaker {speaker:?} has no cast entry"))?;
    let character = engine.catalog.get(&member.model_id).ok_or_else(|| format!("unknown character model {:?}", member.model_id))?;
    Ok(SubjectBounds::new(stage_position(bundle, speaker), character.info.height_meters))
}

pub fn camera_for_line(engine: &Engine, bundle: &SceneBundle, i: usize) -> Result<CameraPose, String> {
    let line = &bundle.lines[i];
    let speaker = subject(engine, bundle, &line.id)?;
    match listener_for(bundle, i) {
        Some(other) => {
            let listener = subject(engine, bundle, other)?;
            two_shot_layout(&speaker, &listener, line.shot_type, line.shot_angle)
                .map(|t| t.camera)
                .map_err(|e| e.to_string())
        }
        None => frame_subject(&speaker, line.shot_type, line.shot_angle).map_err(|e| e.to_string()),
    }
}

fn commit(dir: &BundleDir, shared: &Mutex<SceneBundle>, f: impl FnOnce(&mut SceneBundle)) -> Result<(), PipelineError> {
    let mut bundle = shared.lock().unwrap();
    f(&mut bundle);
    dir.write_manifest(&bundle)
}

fn process_line(engine: &Engine, dir: &BundleDir, shared: &Mutex<SceneBundle>, job: &JobCell, i: usize) -> Result<(), String> {
    let snapshot = {
        let mut bundle = shared.lock().unwrap();
        bundle.assets[i] = LineAssets::default();
        bundle.status[i] = LineStatus::Pending;
        dir.write_manifest(&bundle).map_err(|e| e.to_string())?;
        bundle.clone()
    };
    let line = &snapshot.lines[i];
    let member = snapshot.cast.get(&line.id).ok_or_else(|| format!("speaker {:?} has no cast entry", line.id))?;

    job.enter(i, Stage::Speech);
    let voice = engine.speech.voice(&member.voice_id).map_err(|e| e.to_string())?;
    let audio = engine.speech.synthesize(&line.speech, &voice, line.style).map_err(|e| e.to_string())?;
    let wav = encode_wav(&audio);
    let audio_rel = dir.write_asset(AssetKind::Audio, i, &wav).map_err(|e| e.to_string())?;
    commit(dir, shared, |b| {
        b.assets[i].audio = Some(audio_rel);
        b.status[i] = LineStatus::AudioReady;
    })
    .map_err(|e| e.to_string())?;
    job.leave(i, Stage::Speech);

    job.enter(i, Stage::Gesture);
    let motion = engine.adapter.generate(&audio, line.style).map_err(|e| e.to_string())?;
    job.leave(i, Stage::Gesture);

    job.enter(i, Stage::Retarget);
    let character = engine.catalog.get(&member.model_id).ok_or_else(|| format!("unknown character model {:?}", member.model_id))?;
    let anim = retarget(&motion, &character.skeleton, &character.joint_map).map_err(|e| e.to_string())?;
    let camera = camera_for_line(engine, &snapshot, i)?;
    let motion_rel = dir.write_asset(AssetKind::Motion, i, write_bvh(&motion).map_err(|e| e.to_string())?.as_bytes());
    let anim_rel = dir.write_asset(AssetKind::Anim, i, write_bvh(&anim).map_err(|e| e.to_string())?.as_bytes());
    let camera_rel = dir.write_asset(AssetKind::Camera, i, camera.to_json().as_bytes());
    let (motion_rel, anim_rel, camera_rel) = (
        motion_rel.map_err(|e| e.to_string())?,
        anim_rel.map_err(|e| e.to_string())?,
        camera_rel.map_err(|e| e.to_string())?,
    );
    commit(dir, shared, |b| {
        b.assets[i].motion = Some(motion_rel);
        b.assets[i].anim = Some(anim_rel);
        b.assets[i].camera = Some(camera_rel);
        b.status[i] = LineStatus::Complete;
    })
    .map_err(|e| e.to_string())?;
    job.leave(i, Stage::Retarget);
    job.enter(i, Stage::Done);
    Ok(())
}

/// Runs the per-line stages for `indices`, at most `engine.concurrency`
/// lines at a time. A failing line is marked failed, its assets removed,
/// and its siblings continue.
pub fn run_lines(engine: &Engine, dir: &BundleDir, shared: &Mutex<SceneBundle>, job: &JobCell, indices: &[usize]) {
    map_indexed(indices.len(), engine.concurrency, |k| {
        let i = indices[k];
        if let Err(reason) = process_line(engine, dir, shared, job, i) {
            dir.remove_assets(i);
            let _ = commit(dir, shared, |b| {
                b.assets[i] = LineAssets::default();
                b.status[i] = LineStatus::Failed { reason: reason.clone() };
            });
            job.fail_line(i, &reason);
        }
    });
}

/// Annotates the whole script, records the cast and runs every line.
/// Returns the final bundle.
pub fn generate_bundle(
    engine: &Engine,
    dir: &BundleDir,
    mut bundle: SceneBundle,
    cast: CastAssignment,
    job: &JobCell,
) -> Result<SceneBundle, PipelineError> {
    check_cast(engine, &bundle, &cast)?;
    job.set_all(Stage::Annotating);
    let request = AnnotationRequest::new(bundle.raw_script(), engine.annotation.as_ref());
    let lines = annotate_script(&request)?;
    bundle.cast = cast;
    bundle.status = vec![LineStatus::Pending; lines.len()];
    bundle.assets = vec![LineAssets::default(); lines.len()];
    bundle.lines = lines;
    dir.write_manifest(&bundle)?;
    job.set_all(Stage::Queued);
    let indices: Vec<usize> = (0..bundle.lines.len()).collect();
    let shared = Mutex::new(bundle);
    run_lines(engine, dir, &shared, job, &indices);
    Ok(shared.into_inner().unwrap())
}

/// An author's change to one line.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineEdit {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speech: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<String>,
}

/// Applies an edit to the annotation of line `index`. A style change goes
/// through the regeneration prompt (rule-based when the provider fails);
/// edited speech is taken verbatim and wins over regenerated speech.
pub fn apply_edit(
    engine: &Engine,
    bundle: &SceneBundle,
    index: usize,
    edit: &LineEdit,
) -> Result<(AnnotatedLine, Vec<String>), PipelineError> {
    let Some(current) = bundle.lines.get(index) else {
        return Err(PipelineError::IndexOutOfRange { index, lines: bundle.lines.len() });
    };
    let style = match &edit.style {
        Some(s) => Some(s.parse::<StyleTag>().map_err(|_| PipelineError::UnknownStyle(s.clone()))?),
        None => None,
    };
    if let Some(speech) = &edit.speech {
        if speech.trim().is_empty() {
            return Err(PipelineError::InvalidEdit("speech must not be empty".into()));
        }
    }
    if style.is_none() && edit.speech.is_none() {
        return Err(PipelineError::InvalidEdit("edit must set speech or style".into()));
    }
    let mut warnings = Vec::new();
    let mut line = current.clone();
    if let Some(style) = style {
        line = match regenerate_line(current, style, &bundle.raw_script(), engine.annotation.as_ref()) {
            Ok(l) => l,
            Err(e) => {
                warnings.push(format!("regeneration provider failed ({e}); used the rule-based restyle"));
                fallback_regenerate(current, style)
            }
        };
    }
    if let Some(speech) = &edit.speech {
        line.speech = speech.clone();
    }
    Ok((line, warnings))
}
