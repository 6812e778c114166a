//! Shared domain types: scripts, annotated dialogue lines, controlled
//! vocabularies and the persisted scene bundle.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

/// Longest speaker label accepted by the `Name: utterance` grammar.
pub const MAX_SPEAKER_LEN: usize = 40;

/// A user script: dialogue lines plus optional free-form context prose.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawScript {
    pub text: String,
    pub source_name: Option<String>,
}

impl RawScript {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into(), source_name: None }
    }

    pub fn with_source(mut self, name: impl Into<String>) -> Self {
        self.source_name = Some(name.into());
        self
    }

    pub fn is_blank(&self) -> bool {
        self.text.trim().is_empty()
    }
}

macro_rules! vocabulary {
    (
        $(#[$meta:meta])*
        $name:ident, $err:ident { $($variant:ident => $label:literal),+ $(,)? }
    ) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = VocabularyError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($label => Ok($name::$variant),)+
                    other => Err(VocabularyError::$err(other.to_string())),
                }
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(self.name())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

vocabulary! {
    /// Gesture and emotion style attached to a dialogue line.
    StyleTag, UnknownStyle {
        Agreement => "Agreement",
        Angry => "Angry",
        Disagreement => "Disagreement",
        Distracted => "Distracted",
        Flirty => "Flirty",
        Happy => "Happy",
        Laughing => "Laughing",
        Oration => "Oration",
        Neutral => "Neutral",
        Old => "Old",
        Pensive => "Pensive",
        Relaxed => "Relaxed",
        Sad => "Sad",
        Sarcastic => "Sarcastic",
        Scared => "Scared",
        Sneaky => "Sneaky",
        Still => "Still",
        Threatening => "Threatening",
        Tired => "Tired",
    }
}

vocabulary! {
    /// Shot size. Extreme close-ups are deliberately not representable.
    ShotType, UnknownShot {
        CloseUp => "Close-up",
        Medium => "Medium shot",
        Long => "Long shot",
    }
}

vocabulary! {
    /// Vertical camera angle. Dutch (rolled) angles are not representable.
    ShotAngle, UnknownAngle {
        EyeLevel => "Eye level",
        High => "High angle",
        Low => "Low angle",
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum VocabularyError {
    #[error("unknown style {0:?}")]
    UnknownStyle(String),
    #[error("unknown shot type {0:?}")]
    UnknownShot(String),
    #[error("unknown shot angle {0:?}")]
    UnknownAngle(String),
}

/// One dialogue card.
///
/// `index` is positional and never serialized; list decoders assign it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedLine {
    #[serde(skip)]
    pub index: usize,
    pub id: String,
    pub text: String,
    pub speech: String,
    pub style: StyleTag,
    #[serde(rename = "emotionAnalysis")]
    pub emotion_analysis: String,
    #[serde(rename = "shotType")]
    pub shot_type: ShotType,
    #[serde(rename = "shotAngle")]
    pub shot_angle: ShotAngle,
    #[serde(rename = "shotAnalysis")]
    pub shot_analysis: String,
}

/// Serialized field names of [`AnnotatedLine`], in order.
pub const LINE_FIELDS: [&str; 8] = [
    "id",
    "text",
    "speech",
    "style",
    "emotionAnalysis",
    "shotType",
    "shotAngle",
    "shotAnalysis",
];

/// A single schema violation found by [`validate_line`].
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum LineViolation {
    #[error("missing field \"{0}\"")]
    MissingField(&'static str),
    #[error("field \"{0}\" must be a string")]
    NotAString(&'static str),
    #[error("field \"{0}\" must not be empty")]
    EmptyField(&'static str),
    #[error("unknown style {0:?}")]
    UnknownStyle(String),
    #[error("unknown shot type {0:?}")]
    UnknownShot(String),
    #[error("unknown shot angle {0:?}")]
    UnknownAngle(String),
    #[error("line is not a JSON object")]
    NotAnObject,
}

/// Every violation found in one candidate record.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("invalid line: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ValidationErrors(pub Vec<LineViolation>);

impl ValidationErrors {
    pub fn violations(&self) -> &[LineViolation] {
        &self.0
    }
}

/// Checks a decoded record against the line schema and vocabularies,
/// collecting every violation rather than stopping at the first.
pub fn validate_line(candidate: &Value) -> Result<AnnotatedLine, ValidationErrors> {
    let Some(obj) = candidate.as_object() else {
        return Err(ValidationErrors(vec![LineViolation::NotAnObject]));
    };
    let mut errors = Vec::new();

    let mut field = |name: &'static str, non_empty: bool| -> Option<String> {
        match obj.get(name) {
            None => {
                errors.push(LineViolation::MissingField(name));
                None
            }
            Some(Value::String(s)) => {
                if non_empty && s.trim().is_empty() {
                    errors.push(LineViolation::EmptyField(name));
                    None
                } else {
                    Some(s.clone())
                }
            }
            Some(_) => {
                errors.push(LineViolation::NotAString(name));
                None
            }
        }
    };

    let id = field("id", true);
    let text = field("text", true);
    let speech = field("speech", true);
    let style = field("style", false);
    let emotion_analysis = field("emotionAnalysis", false);
    let shot_type = field("shotType", false);
    let shot_angle = field("shotAngle", false);
    let shot_analysis = field("shotAnalysis", false);

    let style = style.and_then(|s| match s.parse::<StyleTag>() {
        Ok(v) => Some(v),
        Err(_) => {
            errors.push(LineViolation::UnknownStyle(s));
            None
        }
    });
    let shot_type = shot_type.and_then(|s| match s.parse::<ShotType>() {
        Ok(v) => Some(v),
        Err(_) => {
            errors.push(LineViolation::UnknownShot(s));
            None
        }
    });
    let shot_angle = shot_angle.and_then(|s| match s.parse::<ShotAngle>() {
        Ok(v) => Some(v),
        Err(_) => {
            errors.push(LineViolation::UnknownAngle(s));
            None
        }
    });

    if !errors.is_empty() {
        return Err(ValidationErrors(errors));
    }
    // All fields are Some when no violation was recorded.
    Ok(AnnotatedLine {
        index: 0,
        id: id.unwrap(),
        text: text.unwrap(),
        speech: speech.unwrap(),
        style: style.unwrap(),
        emotion_analysis: emotion_analysis.unwrap(),
        shot_type: shot_type.unwrap(),
        shot_angle: shot_angle.unwrap(),
        shot_analysis: shot_analysis.unwrap(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DialogueLine {
    pub speaker: String,
    pub utterance: String,
}

/// Result of splitting a script into speaker lines and context prose.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedScript {
    pub lines: Vec<DialogueLine>,
    /// Distinct speakers in order of first appearance.
    pub speakers: Vec<String>,
    /// Non-dialogue lines joined with `\n`, in script order.
    pub context_prose: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("script is empty")]
    EmptyScript,
    #[error("no dialogue lines found (expected `Name: utterance`)")]
    NoDialogueFound,
}

fn speaker_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| {
        Regex::new(r"^\s*([^:()\s][^:()]*?)\s*(?:\(([^():]*)\))?\s*:\s*(\S.*?)\s*$").unwrap()
    })
}

/// Splits `Name: utterance` lines (optionally `Name (aside): utterance`)
/// from surrounding prose. Asides are stripped from the speaker and
/// appended to the utterance.
pub fn parse_speaker_lines(script: &RawScript) -> Result<ParsedScript, ScriptError> {
    if script.is_blank() {
        return Err(ScriptError::EmptyScript);
    }
    let mut lines = Vec::new();
    let mut speakers: Vec<String> = Vec::new();
    let mut prose = Vec::new();

    for raw in script.text.lines() {
        let matched = speaker_pattern().captures(raw).and_then(|caps| {
            let name = caps.get(1)?.as_str().trim();
            if name.chars().count() > MAX_SPEAKER_LEN {
                return None;
            }
            let mut utterance = caps.get(3)?.as_str().to_string();
            if let Some(aside) = caps.get(2) {
                let aside = aside.as_str().trim();
                if !aside.is_empty() {
                    utterance.push_str(" (");
                    utterance.push_str(aside);
                    utterance.push(')');
                }
            }
            Some((name.to_string(), utterance))
        });
        match matched {
            Some((speaker, utterance)) => {
                if !speakers.contains(&speaker) {
                    speakers.push(speaker.clone());
                }
                lines.push(DialogueLine { speaker, utterance });
            }
            None => {
                let trimmed = raw.trim();
                if !trimmed.is_empty() {
                    prose.push(trimmed);
                }
            }
        }
    }

    if lines.is_empty() {
        return Err(ScriptError::NoDialogueFound);
    }
    Ok(ParsedScript { lines, speakers, context_prose: prose.join("\n") })
}

/// Title and logline for a scene.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub title: String,
    pub synopsis: String,
}

impl SceneSummary {
    /// Decodes and checks a summary record; both fields must be non-empty strings.
    pub fn from_value(value: &Value) -> Result<Self, ValidationErrors> {
        let Some(obj) = value.as_object() else {
            return Err(ValidationErrors(vec![LineViolation::NotAnObject]));
        };
        let mut errors = Vec::new();
        let mut get = |name: &'static str| match obj.get(name) {
            None => {
                errors.push(LineViolation::MissingField(name));
                None
            }
            Some(Value::String(s)) if s.trim().is_empty() => {
                errors.push(LineViolation::EmptyField(name));
                None
            }
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                errors.push(LineViolation::NotAString(name));
                None
            }
        };
        let title = get("title");
        let synopsis = get("synopsis");
        match (title, synopsis) {
            (Some(title), Some(synopsis)) => Ok(Self { title, synopsis }),
            _ => Err(ValidationErrors(errors)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CastMember {
    #[serde(rename = "voiceId")]
    pub voice_id: String,
    #[serde(rename = "modelId")]
    pub model_id: String,
}

/// Speaker id to voice and character model.
pub type CastAssignment = BTreeMap<String, CastMember>;

/// Speakers in `speakers` that have no cast entry.
pub fn missing_cast<'a>(cast: &CastAssignment, speakers: &'a [String]) -> Vec<&'a str> {
    speakers
        .iter()
        .filter(|s| !cast.contains_key(s.as_str()))
        .map(String::as_str)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum LineStatus {
    Pending,
    AudioReady,
    Complete,
    Failed { reason: String },
}

impl LineStatus {
    pub fn has_audio(&self) -> bool {
        matches!(self, LineStatus::AudioReady | LineStatus::Complete)
    }

    pub fn is_complete(&self) -> bool {
        matches!(self, LineStatus::Complete)
    }
}

/// Bundle-relative asset paths for one line.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineAssets {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub audio: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub motion: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub anim: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub camera: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AssetKind {
    Audio,
    Motion,
    Anim,
    Camera,
}

impl AssetKind {
    pub const ALL: [AssetKind; 4] = [AssetKind::Audio, AssetKind::Motion, AssetKind::Anim, AssetKind::Camera];

    pub fn dir(self) -> &'static str {
        match self {
            AssetKind::Audio => "audio",
            AssetKind::Motion => "motion",
            AssetKind::Anim => "anim",
            AssetKind::Camera => "camera",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            AssetKind::Audio => "wav",
            AssetKind::Motion | AssetKind::Anim => "bvh",
            AssetKind::Camera => "json",
        }
    }

    pub fn content_type(self) -> &'static str {
        match self {
            AssetKind::Audio => "audio/wav",
            AssetKind::Motion | AssetKind::Anim => "text/plain; charset=utf-8",
            AssetKind::Camera => "application/json",
        }
    }

    /// Bundle-relative path, e.g. `audio/line-3.wav`.
    pub fn relative_path(self, index: usize) -> String {
        format!("{}/line-{}.{}", self.dir(), index, self.extension())
    }
}

impl LineAssets {
    pub fn get(&self, kind: AssetKind) -> Option<&str> {
        match kind {
            AssetKind::Audio => self.audio.as_deref(),
            AssetKind::Motion => self.motion.as_deref(),
            AssetKind::Anim => self.anim.as_deref(),
            AssetKind::Camera => self.camera.as_deref(),
        }
    }

    pub fn set(&mut self, kind: AssetKind, path: Option<String>) {
        match kind {
            AssetKind::Audio => self.audio = path,
            AssetKind::Motion => self.motion = path,
            AssetKind::Anim => self.anim = path,
            AssetKind::Camera => self.camera = path,
        }
    }
}

/// The persisted scene (`scene.json`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneBundle {
    #[serde(rename = "sceneId")]
    pub scene_id: String,
    pub summary: SceneSummary,
    pub script: String,
    pub speakers: Vec<String>,
    #[serde(deserialize_with = "deserialize_lines")]
    pub lines: Vec<AnnotatedLine>,
    pub cast: CastAssignment,
    pub assets: Vec<LineAssets>,
    pub status: Vec<LineStatus>,
}

fn deserialize_lines<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<AnnotatedLine>, D::Error> {
    let mut lines = Vec::<AnnotatedLine>::deserialize(d)?;
    for (i, line) in lines.iter_mut().enumerate() {
        line.index = i;
    }
    Ok(lines)
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum BundleViolation {
    #[error("lines ({lines}), status ({status}) and assets ({assets}) lengths differ")]
    LengthMismatch { lines: usize, status: usize, assets: usize },
    #[error("line {0}: audio asset recorded before audio was ready")]
    PrematureAudio(usize),
    #[error("line {0}: motion asset recorded before the line completed")]
    PrematureMotion(usize),
    #[error("line {0}: completed line is missing asset {1}")]
    MissingAsset(usize, &'static str),
    #[error("line {0}: index field is {1}")]
    IndexMismatch(usize, usize),
    #[error("speaker {0:?} has no cast entry")]
    Uncast(String),
}

impl SceneBundle {
    pub fn new(scene_id: impl Into<String>, summary: SceneSummary, script: &RawScript, speakers: Vec<String>) -> Self {
        Self {
            scene_id: scene_id.into(),
            summary,
            script: script.text.clone(),
            speakers,
            lines: Vec::new(),
            cast: CastAssignment::new(),
            assets: Vec::new(),
            status: Vec::new(),
        }
    }

    pub fn raw_script(&self) -> RawScript {
        RawScript::new(self.script.clone())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Structural invariants that hold for every committed bundle.
    pub fn check_invariants(&self) -> Vec<BundleViolation> {
        let mut out = Vec::new();
        let (l, s, a) = (self.lines.len(), self.status.len(), self.assets.len());
        if l != s || l != a {
            out.push(BundleViolation::LengthMismatch { lines: l, status: s, assets: a });
            return out;
        }
        for (i, line) in self.lines.iter().enumerate() {
            if line.index != i {
                out.push(BundleViolation::IndexMismatch(i, line.index));
            }
            let status = &self.status[i];
            let assets = &self.assets[i];
            if assets.audio.is_some() && !status.has_audio() {
                out.push(BundleViolation::PrematureAudio(i));
            }
            if (assets.motion.is_some() || assets.anim.is_some() || assets.camera.is_some()) && !status.is_complete() {
                out.push(BundleViolation::PrematureMotion(i));
            }
            if status.is_complete() {
                for kind in AssetKind::ALL {
                    if assets.get(kind).is_none() {
                        out.push(BundleViolation::MissingAsset(i, kind.dir()));
                    }
                }
            }
        }
        if !self.lines.is_empty() {
            for speaker in &self.speakers {
                if !self.cast.contains_key(speaker) {
                    out.push(BundleViolation::Uncast(speaker.clone()));
                }
            }
        }
        out
    }
}
