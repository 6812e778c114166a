//! File-backed scene store and the operations the HTTP service exposes.
//!
//! Layout under the data directory: `scenes/<sceneId>/` holds one bundle
//! each, `meta/<sceneId>.json` holds service-only metadata (creation time,
//! warnings), so bundle bytes match what the CLI writes.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::characters::CharacterInfo;
use crate::model::{AnnotatedLine, AssetKind, CastAssignment, LineAssets, LineStatus, RawScript, SceneBundle};
use crate::parallel::Semaphore;
use crate::pipeline::{
    apply_edit, check_cast, generate_bundle, new_bundle, run_lines, write_atomic, BundleDir, Engine, GenerationJob,
    JobCell, JobKind, LineEdit, PipelineError, Stage,
};
use crate::speech::Voice;

/// Jobs allowed to run at once; further jobs wait with their lines queued.
pub const DEFAULT_MAX_JOBS: usize = 2;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneMeta {
    #[serde(rename = "sceneId")]
    pub scene_id: String,
    #[serde(rename = "createdAt")]
    pub created_at: String,
    /// Creation order; breaks timestamp ties.
    pub seq: u64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneListing {
    #[serde(rename = "sceneId")]
    pub scene_id: String,
    pub title: String,
    #[serde(rename = "createdAt")]
    pub created_at: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreatedScene {
    #[serde(rename = "sceneId")]
    pub scene_id: String,
    pub title: String,
    pub synopsis: String,
    pub speakers: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineUpdate {
    #[serde(rename = "jobId")]
    pub job_id: String,
    pub line: AnnotatedLine,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Marks a scene as owned by one writer until dropped.
struct SceneLock {
    busy: Arc<Mutex<HashSet<String>>>,
    scene_id: String,
}

impl Drop for SceneLock {
    fn drop(&mut self) {
        self.busy.lock().unwrap().remove(&self.scene_id);
    }
}

fn valid_scene_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
}

pub struct Studio {
    root: PathBuf,
    engine: Engine,
    jobs: Mutex<HashMap<String, Arc<JobCell>>>,
    busy: Arc<Mutex<HashSet<String>>>,
    create_lock: Mutex<()>,
    workers: Arc<Semaphore>,
}

impl Studio {
    pub fn open(root: impl Into<PathBuf>, engine: Engine) -> Result<Self, PipelineError> {
        let root = root.into();
        std::fs::create_dir_all(root.join("scenes"))?;
        std::fs::create_dir_all(root.join("meta"))?;
        Ok(Self {
            root,
            engine,
            jobs: Mutex::new(HashMap::new()),
            busy: Arc::new(Mutex::new(HashSet::new())),
            create_lock: Mutex::new(()),
            workers: Arc::new(Semaphore::new(DEFAULT_MAX_JOBS)),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn scene_dir(&self, scene_id: &str) -> Result<BundleDir, PipelineError> {
        if !valid_scene_id(scene_id) {
            return Err(PipelineError::SceneNotFound(scene_id.to_string()));
        }
        let dir = BundleDir::new(self.root.join("scenes").join(scene_id));
        if !dir.exists() {
            return Err(PipelineError::SceneNotFound(scene_id.to_string()));
        }
        Ok(dir)
    }

    fn meta_path(&self, scene_id: &str) -> PathBuf {
        self.root.join("meta").join(format!("{scene_id}.json"))
    }

    fn read_metas(&self) -> Vec<SceneMeta> {
        let Ok(entries) = std::fs::read_dir(self.root.join("meta")) else {
            return Vec::new();
        };
        entries
            .filter_map(Result::ok)
            .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
            .filter_map(|e| std::fs::read_to_string(e.path()).ok())
            .filter_map(|t| serde_json::from_str(&t).ok())
            .collect()
    }

    pub fn scene_meta(&self, scene_id: &str) -> Option<SceneMeta> {
        let text = std::fs::read_to_string(self.meta_path(scene_id)).ok()?;
        serde_json::from_str(&text).ok()
    }

    /// Parses and summarizes a script and persists it as a new scene.
    pub fn create_scene(&self, script: &str) -> Result<CreatedScene, PipelineError> {
        let raw = RawScript::new(script);
        let (mut bundle, warnings) = new_bundle(&self.engine, &raw)?;
        let _guard = self.create_lock.lock().unwrap();
        let base = bundle.scene_id.clone();
        let mut n = 1;
        while self.root.join("scenes").join(&bundle.scene_id).exists() {
            n += 1;
            bundle.scene_id = format!("{base}-{n}");
        }
        let seq = self.read_metas().iter().map(|m| m.seq).max().map_or(1, |m| m + 1);
        let meta = SceneMeta {
            scene_id: bundle.scene_id.clone(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            seq,
            warnings: warnings.clone(),
        };
        BundleDir::new(self.root.join("scenes").join(&bundle.scene_id)).write_manifest(&bundle)?;
        let meta_json = serde_json::to_string_pretty(&meta).expect("meta serializes");
        write_atomic(&self.meta_path(&bundle.scene_id), meta_json.as_bytes())?;
        Ok(CreatedScene {
            scene_id: bundle.scene_id,
            title: bundle.summary.title,
            synopsis: bundle.summary.synopsis,
            speakers: bundle.speakers,
            warnings,
        })
    }

    fn lock_scene(&self, scene_id: &str) -> Result<SceneLock, PipelineError> {
        let mut busy = self.busy.lock().unwrap();
        if !busy.insert(scene_id.to_string()) {
            return Err(PipelineError::Conflict(scene_id.to_string()));
        }
        Ok(SceneLock { busy: Arc::clone(&self.busy), scene_id: scene_id.to_string() })
    }

    fn register(&self, cell: Arc<JobCell>) -> String {
        let id = cell.job_id();
        self.jobs.lock().unwrap().insert(id.clone(), cell);
        id
    }

    /// Starts a generation job for the whole scene and returns its id.
    pub fn generate_scene(&self, scene_id: &str, cast: CastAssignment) -> Result<String, PipelineError> {
        let dir = self.scene_dir(scene_id)?;
        let lock = self.lock_scene(scene_id)?;
        let bundle = dir.read_manifest()?;
        check_cast(&self.engine, &bundle, &cast)?;
        let n = crate::model::parse_speaker_lines(&bundle.raw_script())?.lines.len();
        let indices: Vec<usize> = (0..n).collect();
        let cell = Arc::new(JobCell::new(
            format!("j-{}", uuid::Uuid::new_v4().simple()),
            scene_id,
            JobKind::Generate,
            &indices,
            Stage::Queued,
        ));
        let job_id = self.register(Arc::clone(&cell));
        let engine = self.engine.clone();
        let workers = Arc::clone(&self.workers);
        std::thread::spawn(move || {
            let _lock = lock;
            let _slot = workers.acquire();
            let result = generate_bundle(&engine, &dir, bundle, cast, &cell);
            cell.finish(result.err().map(|e| e.to_string()));
        });
        Ok(job_id)
    }

    /// Edits one line and regenerates its assets in the background.
    pub fn update_line(&self, scene_id: &str, index: usize, edit: &LineEdit) -> Result<LineUpdate, PipelineError> {
        let dir = self.scene_dir(scene_id)?;
        let lock = self.lock_scene(scene_id)?;
        let mut bundle = dir.read_manifest()?;
        let (line, warnings) = apply_edit(&self.engine, &bundle, index, edit)?;
        check_cast(&self.engine, &bundle, &bundle.cast)?;
        bundle.lines[index] = line.clone();
        bundle.status[index] = LineStatus::Pending;
        bundle.assets[index] = LineAssets::default();
        dir.write_manifest(&bundle)?;
        let cell = Arc::new(JobCell::new(
            format!("j-{}", uuid::Uuid::new_v4().simple()),
            scene_id,
            JobKind::Regenerate,
            &[index],
            Stage::Queued,
        ));
        let job_id = self.register(Arc::clone(&cell));
        let engine = self.engine.clone();
        let workers = Arc::clone(&self.workers);
        std::thread::spawn(move || {
            let _lock = lock;
            let _slot = workers.acquire();
            let shared = Mutex::new(bundle);
            run_lines(&engine, &dir, &shared, &cell, &[index]);
            cell.finish(None);
        });
        Ok(LineUpdate { job_id, line, warnings })
    }

    pub fn get_scene(&self, scene_id: &str) -> Result<SceneBundle, PipelineError> {
        self.scene_dir(scene_id)?.read_manifest()
    }

    pub fn get_job(&self, job_id: &str) -> Result<GenerationJob, PipelineError> {
        self.job_cell(job_id).map(|c| c.snapshot())
    }

    /// Blocks until the job finishes.
    pub fn wait_job(&self, job_id: &str) -> Result<GenerationJob, PipelineError> {
        self.job_cell(job_id).map(|c| c.wait())
    }

    fn job_cell(&self, job_id: &str) -> Result<Arc<JobCell>, PipelineError> {
        self.jobs
            .lock()
            .unwrap()
            .get(job_id)
            .cloned()
            .ok_or_else(|| PipelineError::JobNotFound(job_id.to_string()))
    }

    pub fn get_asset(&self, scene_id: &str, kind: AssetKind, index: usize) -> Result<Vec<u8>, PipelineError> {
        let dir = self.scene_dir(scene_id)?;
        let bundle = dir.read_manifest()?;
        if index >= bundle.lines.len() {
            return Err(PipelineError::IndexOutOfRange { index, lines: bundle.lines.len() });
        }
        let rel = bundle.assets[index]
            .get(kind)
            .ok_or_else(|| PipelineError::AssetNotFound(kind.relative_path(index)))?;
        dir.read_asset(rel)
    }

    /// Newest first.
    pub fn list_scenes(&self) -> Vec<SceneListing> {
        let mut metas = self.read_metas();
        metas.sort_by_key(|m| std::cmp::Reverse(m.seq));
        metas
            .into_iter()
            .filter_map(|m| {
                let bundle = self.get_scene(&m.scene_id).ok()?;
                Some(SceneListing { scene_id: m.scene_id, title: bundle.summary.title, created_at: m.created_at })
            })
            .collect()
    }

    pub fn list_voices(&self) -> Result<Vec<Voice>, PipelineError> {
        self.engine.speech.list_voices().map_err(|e| PipelineError::SpeechUnavailable(e.to_string()))
    }

    pub fn list_characters(&self) -> Vec<CharacterInfo> {
        self.engine.catalog.infos()
    }
}
