//! Script annotation through a language-model provider: prompt
//! construction, response extraction, validation with one repair round, and
//! a rule-based offline annotator.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{mpsc, Arc};
use std::time::Duration;

use regex::Regex;
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{
    parse_speaker_lines, validate_line, AnnotatedLine, LineViolation, ParsedScript, RawScript, SceneSummary,
    ScriptError, ShotAngle, ShotType, StyleTag,
};
use crate::parallel::Semaphore;

pub const DEFAULT_PROVIDER_TIMEOUT: Duration = Duration::from_secs(60);
pub const DEFAULT_MAX_CONCURRENT: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("provider did not answer within {0:?}")]
    Timeout(Duration),
    #[error("provider unavailable: {0}")]
    Unavailable(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum AnnotateError {
    #[error("annotation provider timed out")]
    ProviderTimeout,
    #[error("annotation provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("unparseable provider response: {0}")]
    UnparseableResponse(String),
    #[error("script is empty")]
    EmptyScript,
    #[error("no dialogue lines found")]
    NoDialogueFound,
}

impl From<ProviderError> for AnnotateError {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::Timeout(_) => AnnotateError::ProviderTimeout,
            ProviderError::Unavailable(m) => AnnotateError::ProviderUnavailable(m),
        }
    }
}

impl From<ScriptError> for AnnotateError {
    fn from(e: ScriptError) -> Self {
        match e {
            ScriptError::EmptyScript => AnnotateError::EmptyScript,
            ScriptError::NoDialogueFound => AnnotateError::NoDialogueFound,
        }
    }
}

/// A text-completion backend. Implementations are shared across threads.
pub trait AnnotationProvider: Send + Sync {
    fn name(&self) -> &str;
    fn complete_structured(&self, prompt: &str) -> Result<String, ProviderError>;
}

impl<P: AnnotationProvider + ?Sized> AnnotationProvider for Arc<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete_structured(&self, prompt: &str) -> Result<String, ProviderError> {
        (**self).complete_structured(prompt)
    }
}

/// Bounds any provider's latency by running each call on its own thread.
/// A late answer is dropped.
pub struct TimeoutProvider {
    inner: Arc<dyn AnnotationProvider>,
    timeout: Duration,
}

impl TimeoutProvider {
    pub fn new(inner: Arc<dyn AnnotationProvider>, timeout: Duration) -> Self {
        Self { inner, timeout }
    }
}

impl AnnotationProvider for TimeoutProvider {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete_structured(&self, prompt: &str) -> Result<String, ProviderError> {
        let (tx, rx) = mpsc::channel();
        let inner = Arc::clone(&self.inner);
        let prompt = prompt.to_string();
        std::thread::spawn(move || {
            let _ = tx.send(inner.complete_structured(&prompt));
        });
        match rx.recv_timeout(self.timeout) {
            Ok(r) => r,
            Err(mpsc::RecvTimeoutError::Timeout) => Err(ProviderError::Timeout(self.timeout)),
            Err(mpsc::RecvTimeoutError::Disconnected) => Err(ProviderError::Unavailable("provider thread panicked".into())),
        }
    }
}

/// Chat-completion client (`POST {base}/chat/completions`).
pub struct RemoteChatProvider {
    base_url: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    gate: Semaphore,
}

impl RemoteChatProvider {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: Option<String>, max_concurrent: usize, timeout: Duration) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key,
            client,
            gate: Semaphore::new(max_concurrent),
        })
    }

    /// Reads `S2S_LLM_BASE_URL`, `S2S_LLM_MODEL` and `S2S_LLM_API_KEY`.
    pub fn from_env() -> Result<Self, ProviderError> {
        let base = std::env::var("S2S_LLM_BASE_URL").map_err(|_| ProviderError::Unavailable("S2S_LLM_BASE_URL is not set".into()))?;
        let model = std::env::var("S2S_LLM_MODEL").map_err(|_| ProviderError::Unavailable("S2S_LLM_MODEL is not set".into()))?;
        let key = std::env::var("S2S_LLM_API_KEY").ok();
        Self::new(base, model, key, DEFAULT_MAX_CONCURRENT, DEFAULT_PROVIDER_TIMEOUT)
    }
}

impl AnnotationProvider for RemoteChatProvider {
    fn name(&self) -> &str {
        "remote"
    }

    fn complete_structured(&self, prompt: &str) -> Result<String, ProviderError> {
        let _slot = self.gate.acquire();
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": 0,
        });
        let mut req = self.client.post(format!("{}/chat/completions", self.base_url)).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout(DEFAULT_PROVIDER_TIMEOUT)
            } else {
                ProviderError::Unavailable(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ProviderError::Unavailable(format!("HTTP {}", status.as_u16())));
        }
        let v: Value = resp.json().map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Unavailable("response has no choices[0].message.content".into()))
    }
}

/// Hex SHA-256 of a prompt; the key under which replay fixtures are stored.
pub fn prompt_key(prompt: &str) -> String {
    Sha256::digest(prompt.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Serves recorded responses keyed by [`prompt_key`].
#[derive(Clone, Debug, Default)]
pub struct ReplayProvider {
    responses: HashMap<String, String>,
}

impl ReplayProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, prompt: &str, response: impl Into<String>) {
        self.responses.insert(prompt_key(prompt), response.into());
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut p = Self::new();
        for (prompt, response) in pairs {
            p.insert(prompt, response);
        }
        p
    }

    /// Loads a fixture directory. `<sha256>.txt` files are raw responses
    /// keyed by prompt hash. Named recordings pair `<name>.script.txt` with
    /// `<name>.parse.json`, `<name>.summary.json` and
    /// `<name>.regenerate-<index>-<style>.json`; their prompts are rebuilt
    /// from the script, the regeneration ones from the replayed annotation.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let invalid = |msg: String| std::io::Error::new(std::io::ErrorKind::InvalidData, msg);
        let mut p = Self::new();
        let mut names = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let Some(file) = path.file_name().and_then(|s| s.to_str()) else { continue };
            if let Some(name) = file.strip_suffix(".script.txt") {
                names.push(name.to_string());
            } else if let Some(stem) = file.strip_suffix(".txt") {
                if stem.len() == 64 && stem.bytes().all(|b| b.is_ascii_hexdigit()) {
                    p.responses.insert(stem.to_ascii_lowercase(), std::fs::read_to_string(&path)?);
                }
            }
        }
        names.sort();
        for name in &names {
            let script = RawScript::new(std::fs::read_to_string(dir.join(format!("{name}.script.txt")))?);
            let read = |suffix: &str| std::fs::read_to_string(dir.join(format!("{name}.{suffix}"))).ok();
            if let Some(r) = read("parse.json") {
                p.insert(&build_parse_prompt(&script), r);
            }
            if let Some(r) = read("summary.json") {
                p.insert(&build_summary_prompt(&script), r);
            }
            let prefix = format!("{name}.regenerate-");
            let mut regenerations = Vec::new();
            for entry in std::fs::read_dir(dir)? {
                let file = entry?.file_name().to_string_lossy().into_owned();
                let Some(rest) = file.strip_prefix(&prefix).and_then(|r| r.strip_suffix(".json")) else { continue };
                let (index, style) = rest
                    .split_once('-')
                    .and_then(|(i, s)| Some((i.parse::<usize>().ok()?, s.parse::<StyleTag>().ok()?)))
                    .ok_or_else(|| invalid(format!("{file}: expected regenerate-<index>-<style>.json")))?;
                regenerations.push((index, style, std::fs::read_to_string(dir.join(&file))?));
            }
            if regenerations.is_empty() {
                continue;
            }
            let lines = annotate_script(&AnnotationRequest::new(script.clone(), &p))
                .map_err(|e| invalid(format!("{name}: regeneration fixtures need a replayable parse: {e}")))?;
            for (index, style, response) in regenerations {
                let line = lines.get(index).ok_or_else(|| invalid(format!("{name}: no line {index}")))?;
                p.insert(&build_regenerate_prompt(line, style, &script), response);
            }
        }
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl AnnotationProvider for ReplayProvider {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete_structured(&self, prompt: &str) -> Result<String, ProviderError> {
        let key = prompt_key(prompt);
        self.responses
            .get(&key)
            .cloned()
            .ok_or_else(|| ProviderError::Unavailable(format!("no recorded response for prompt {key}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("{0} vocabulary is empty")]
    EmptyVocabulary(&'static str),
}

const PARSE_INSTRUCTIONS: &str = "Please parse the following script into JSON format. While parsing, adjust the text to sound more natural and conversational based on the context. Additionally, select appropriate gesture styles to accompany each line of the script. \n\
Utilize the context to ADD new filler words, hesitations, and repetitions to the speech. \n\
Designate gesture styles for the style of gesture associated with the speech. \n\
Choose a gesture style from the following list: {styles}.\n\
\n\
Explain the rationale behind the choice of gesture style for each line of the script. \n\
Please IGNORE non-verbal cues such as facial expressions, body language, and tone of voice, \n\
as well as scene description in the script.\n\
\n\
Comment on the choice of camera shot and camera angle for each line of script. \n\
Choose from the following camera shots: {shots} and camera angles: {angles}.\n\
\n\
For example, given the following script:\n\
Tom: Hello, how are you feeling after your all-nighter?\n\
Bob: I'm doing well, thank you.\n\
\n\
The output should be in the following JSON format:\n";

const PARSE_EXAMPLE: &str = r#"[
    {
        "id": "Tom",
        "text": "Hello, how are you feeling after your all-nighter?",
        "speech": "Hello! How are you feeling, after the all-nighter?",
        "style": "Happy",
        "emotionAnalysis": "Given the context of Bob just did an all-nighter, I chose a happy style to indicate Tom is being supportive.",
        "shotType": "Medium shot",
        "shotAngle": "Eye level",
        "shotAnalysis": "A medium shot at eye level is appropriate for a casual greeting."
    },
    {
        "id": "Bob",
        "text": "I'm doing well, thank you.",
        "speech": "Uh, I'm doing well... thank you.",
        "style": "Tired",
        "emotionAnalysis": "Bob is tired from the all-nighter, so I chose a tired style to indicate Bob is exhausted.",
        "shotType": "Medium shot",
        "shotAngle": "Eye level",
        "shotAnalysis": "A medium shot at eye level is appropriate for a casual greeting."
    }
]"#;

const SUMMARY_INSTRUCTIONS: &str = "Summarize the script with a caption and a synopsis in JSON format such as the following example:\n";

const SUMMARY_EXAMPLE: &str = r#"{
    "title": "Greeting After an All-Nighter",
    "synopsis": "Two friends greet each other after an all-nighter."
}"#;

const REGENERATE_INSTRUCTIONS: &str = "Please update the fields \"speech\", \"emotionAnalysis\", and \"shotAnalysis\" in the provided JSON \n\
to reflect the specified emotion, {style}, based on the context of the following script:\n\
\n";

/// Separates the instruction block from the user script.
pub const SCRIPT_MARKER: &str = "\n\nScript:\n";
/// Precedes the line record in a regeneration prompt.
pub const LINE_MARKER: &str = "\n\nJSON:\n";
/// Precedes validation feedback in a repair prompt.
pub const REPAIR_MARKER: &str = "\n\nYour previous response was:\n";

/// Vocabulary lists injected into the prompts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    styles: Vec<String>,
    shots: Vec<String>,
    angles: Vec<String>,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::new(
            StyleTag::ALL.iter().map(|s| s.name().to_string()).collect(),
            ShotType::ALL.iter().map(|s| s.name().to_string()).collect(),
            ShotAngle::ALL.iter().map(|s| s.name().to_string()).collect(),
        )
        .expect("built-in vocabularies are non-empty")
    }
}

impl PromptTemplate {
    pub fn new(styles: Vec<String>, shots: Vec<String>, angles: Vec<String>) -> Result<Self, PromptError> {
        if styles.is_empty() {
            return Err(PromptError::EmptyVocabulary("style"));
        }
        if shots.is_empty() {
            return Err(PromptError::EmptyVocabulary("shot"));
        }
        if angles.is_empty() {
            return Err(PromptError::EmptyVocabulary("angle"));
        }
        Ok(Self { styles, shots, angles })
    }

    pub fn parse_prompt(&self, script: &RawScript) -> String {
        let head = PARSE_INSTRUCTIONS
            .replace("{styles}", &self.styles.join(", "))
            .replace("{shots}", &self.shots.join(", "))
            .replace("{angles}", &self.angles.join(", "));
        format!("{head}{PARSE_EXAMPLE}{SCRIPT_MARKER}{}", script.text.trim())
    }

    pub fn summary_prompt(&self, script: &RawScript) -> String {
        format!("{SUMMARY_INSTRUCTIONS}{SUMMARY_EXAMPLE}{SCRIPT_MARKER}{}", script.text.trim())
    }

    pub fn regenerate_prompt(&self, line: &AnnotatedLine, style: StyleTag, script: &RawScript) -> String {
        let head = REGENERATE_INSTRUCTIONS.replace("{style}", style.name());
        let record = serde_json::to_string_pretty(line).expect("line serializes");
        format!("{head}{}{LINE_MARKER}{record}", script.text.trim())
    }
}

/// The parse prompt with the full built-in vocabularies.
pub fn build_parse_prompt(script: &RawScript) -> String {
    PromptTemplate::default().parse_prompt(script)
}

pub fn build_summary_prompt(script: &RawScript) -> String {
    PromptTemplate::default().summary_prompt(script)
}

pub fn build_regenerate_prompt(line: &AnnotatedLine, style: StyleTag, script: &RawScript) -> String {
    PromptTemplate::default().regenerate_prompt(line, style, script)
}

fn repair_prompt(prompt: &str, response: &str, problems: &[String]) -> String {
    let mut out = format!("{prompt}{REPAIR_MARKER}{response}\n\nIt failed validation:\n");
    for p in problems {
        out.push_str("- ");
        out.push_str(p);
        out.push('\n');
    }
    out.push_str("Return only the corrected JSON.");
    out
}

/// Finds and decodes the first balanced JSON block opening with `open`
/// (`[` or `{`), skipping code fences and surrounding prose.
pub fn extract_json_block(text: &str, open: char) -> Option<Value> {
    let close = match open {
        '[' => ']',
        '{' => '}',
        _ => return None,
    };
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    for (start_pos, &(start, c)) in bytes.iter().enumerate() {
        if c != open {
            continue;
        }
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        for &(i, ch) in &bytes[start_pos..] {
            if in_string {
                match ch {
                    _ if escaped => escaped = false,
                    '\\' => escaped = true,
                    '"' => in_string = false,
                    _ => {}
                }
                continue;
            }
            match ch {
                '"' => in_string = true,
                '[' | '{' => depth += 1,
                ']' | '}' => {
                    depth -= 1;
                    if depth == 0 {
                        if ch == close {
                            if let Ok(v) = serde_json::from_str(&text[start..i + 1]) {
                                return Some(v);
                            }
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    None
}

#[derive(Clone)]
pub struct AnnotationRequest<'a> {
    pub script: RawScript,
    pub provider: &'a dyn AnnotationProvider,
    pub max_repair_attempts: usize,
}

impl<'a> AnnotationRequest<'a> {
    pub fn new(script: RawScript, provider: &'a dyn AnnotationProvider) -> Self {
        Self { script, provider, max_repair_attempts: 1 }
    }
}

/// Problems with one decoded response, formatted for repair feedback.
fn line_problems(records: &[Value], parsed: &ParsedScript) -> Vec<String> {
    let mut out = Vec::new();
    if records.len() != parsed.lines.len() {
        out.push(format!("expected {} records, one per dialogue line, got {}", parsed.lines.len(), records.len()));
    }
    for (i, (rec, want)) in records.iter().zip(&parsed.lines).enumerate() {
        match validate_line(rec) {
            Ok(line) if line.id != want.speaker => {
                out.push(format!("record {i}: id {:?} should be {:?}", line.id, want.speaker));
            }
            Ok(_) => {}
            Err(errs) => out.extend(errs.violations().iter().map(|v| format!("record {i}: {v}"))),
        }
    }
    out
}

/// Repairs a record field by field after the retry budget is spent.
fn salvage_line(rec: &Value, want: &crate::model::DialogueLine) -> AnnotatedLine {
    let fallback = rule_line(&want.speaker, &want.utterance);
    let Some(obj) = rec.as_object() else {
        let mut line = fallback;
        line.emotion_analysis = format!("{} [record was not an object; rule-based annotation used]", line.emotion_analysis);
        return line;
    };
    let text = |k: &str| obj.get(k).and_then(Value::as_str).map(str::to_string);
    let mut emotion = text("emotionAnalysis").unwrap_or_default();
    let mut shot_note = text("shotAnalysis").unwrap_or_default();
    let note = |s: &mut String, msg: String| {
        if !s.is_empty() {
            s.push(' ');
        }
        s.push_str(&format!("[{msg}]"));
    };
    let raw_style = text("style");
    let style = match raw_style.as_deref().map(str::parse::<StyleTag>) {
        Some(Ok(s)) => s,
        _ => {
            note(&mut emotion, format!("style {:?} not in vocabulary; substituted Neutral", raw_style.unwrap_or_default()));
            StyleTag::Neutral
        }
    };
    let raw_shot = text("shotType");
    let shot_type = match raw_shot.as_deref().map(str::parse::<ShotType>) {
        Some(Ok(s)) => s,
        _ => {
            note(&mut shot_note, format!("shot type {:?} not in vocabulary; substituted Medium shot", raw_shot.unwrap_or_default()));
            ShotType::Medium
        }
    };
    let raw_angle = text("shotAngle");
    let shot_angle = match raw_angle.as_deref().map(str::parse::<ShotAngle>) {
        Some(Ok(s)) => s,
        _ => {
            note(&mut shot_note, format!("shot angle {:?} not in vocabulary; substituted Eye level", raw_angle.unwrap_or_default()));
            ShotAngle::EyeLevel
        }
    };
    let speech = match text("speech") {
        Some(s) if !s.trim().is_empty() => s,
        _ => {
            note(&mut emotion, "speech missing; original text used".into());
            want.utterance.clone()
        }
    };
    AnnotatedLine {
        index: 0,
        id: want.speaker.clone(),
        text: want.utterance.clone(),
        speech,
        style,
        emotion_analysis: emotion,
        shot_type,
        shot_angle,
        shot_analysis: shot_note,
    }
}

/// Annotates every dialogue line of the script through the provider.
pub fn annotate_script(req: &AnnotationRequest<'_>) -> Result<Vec<AnnotatedLine>, AnnotateError> {
    let parsed = parse_speaker_lines(&req.script)?;
    let base = build_parse_prompt(&req.script);
    let mut prompt = base.clone();
    let mut attempt = 0;
    loop {
        let response = req.provider.complete_structured(&prompt)?;
        let last = attempt >= req.max_repair_attempts;
        let records = match extract_json_block(&response, '[') {
            Some(Value::Array(records)) => records,
            _ => {
                if last {
                    return Err(AnnotateError::UnparseableResponse("no JSON array in response".into()));
                }
                prompt = repair_prompt(&base, &response, &["response must be a JSON array of line records".into()]);
                attempt += 1;
                continue;
            }
        };
        let problems = line_problems(&records, &parsed);
        if problems.is_empty() || last {
            if records.len() != parsed.lines.len() {
                return Err(AnnotateError::UnparseableResponse(format!(
                    "expected {} records, got {}",
                    parsed.lines.len(),
                    records.len()
                )));
            }
            let lines = records
                .iter()
                .zip(&parsed.lines)
                .enumerate()
                .map(|(i, (rec, want))| {
                    let mut line = match validate_line(rec) {
                        Ok(line) => line,
                        Err(_) => salvage_line(rec, want),
                    };
                    line.index = i;
                    line.id = want.speaker.clone();
                    line.text = want.utterance.clone();
                    line
                })
                .collect();
            return Ok(lines);
        }
        prompt = repair_prompt(&base, &response, &problems);
        attempt += 1;
    }
}

const NEGATIVE_WORDS: &[&str] = &[
    "insane", "hate", "terrible", "awful", "stupid", "idiot", "damn", "crap", "worst", "furious", "ridiculous", "doomed",
    "unbelievable", "disgusting", "shut",
];

fn negative_hit(utterance: &str) -> Option<&'static str> {
    utterance
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|w| !w.is_empty())
        .find_map(|w| {
            let w = w.to_lowercase();
            NEGATIVE_WORDS.iter().copied().find(|n| *n == w)
        })
}

/// The lexicon rule for one utterance and the note that explains it.
pub fn rule_style(utterance: &str) -> (StyleTag, String) {
    let bang = utterance.contains('!');
    if bang {
        if let Some(word) = negative_hit(utterance) {
            return (StyleTag::Angry, format!("Rule: exclamation with negative word \"{word}\" reads as Angry."));
        }
        return (StyleTag::Happy, "Rule: exclamation without negative words reads as Happy.".into());
    }
    if utterance.contains('?') {
        return (StyleTag::Pensive, "Rule: question reads as Pensive.".into());
    }
    if utterance.contains("...") || utterance.contains('…') {
        return (StyleTag::Tired, "Rule: trailing ellipsis reads as Tired.".into());
    }
    (StyleTag::Neutral, "Rule: no lexical cue, Neutral.".into())
}

const RULE_SHOT_NOTE: &str = "Rule: default framing, medium shot at eye level.";

fn rule_line(speaker: &str, utterance: &str) -> AnnotatedLine {
    let (style, note) = rule_style(utterance);
    AnnotatedLine {
        index: 0,
        id: speaker.to_string(),
        text: utterance.to_string(),
        speech: utterance.to_string(),
        style,
        emotion_analysis: note,
        shot_type: ShotType::Medium,
        shot_angle: ShotAngle::EyeLevel,
        shot_analysis: RULE_SHOT_NOTE.into(),
    }
}

/// Deterministic offline annotation by keyword rules.
pub fn fallback_annotate(script: &RawScript) -> Result<Vec<AnnotatedLine>, AnnotateError> {
    let parsed = parse_speaker_lines(script)?;
    Ok(parsed
        .lines
        .iter()
        .enumerate()
        .map(|(i, l)| AnnotatedLine { index: i, ..rule_line(&l.speaker, &l.utterance) })
        .collect())
}

fn join_names(names: &[String]) -> String {
    match names {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Deterministic title and synopsis.
pub fn fallback_summary(script: &RawScript) -> Result<SceneSummary, AnnotateError> {
    let parsed = parse_speaker_lines(script)?;
    let title = parsed.lines[0].utterance.split_whitespace().take(6).collect::<Vec<_>>().join(" ");
    let synopsis = if parsed.speakers.len() == 1 {
        format!("A monologue by {}.", parsed.speakers[0])
    } else {
        format!("A conversation between {}.", join_names(&parsed.speakers))
    };
    Ok(SceneSummary { title, synopsis })
}

/// Title and synopsis through the provider, with one repair round.
pub fn summarize_script(script: &RawScript, provider: &dyn AnnotationProvider) -> Result<SceneSummary, AnnotateError> {
    if script.is_blank() {
        return Err(AnnotateError::EmptyScript);
    }
    let base = build_summary_prompt(script);
    let mut prompt = base.clone();
    for attempt in 0..2 {
        let response = provider.complete_structured(&prompt)?;
        let problems = match extract_json_block(&response, '{') {
            None => vec!["response must be a JSON object with \"title\" and \"synopsis\"".to_string()],
            Some(v) => match SceneSummary::from_value(&v) {
                Ok(s) => return Ok(s),
                Err(e) => e.violations().iter().map(ToString::to_string).collect(),
            },
        };
        if attempt == 1 {
            return Err(AnnotateError::UnparseableResponse(problems.join("; ")));
        }
        prompt = repair_prompt(&base, &response, &problems);
    }
    unreachable!("loop returns on its last iteration")
}

/// Restyles one line. Whatever the provider returns, `id`, `text`, `index`,
/// `shot_type` and `shot_angle` are carried over and `style` is `new_style`.
pub fn regenerate_line(
    line: &AnnotatedLine,
    new_style: StyleTag,
    script_context: &RawScript,
    provider: &dyn AnnotationProvider,
) -> Result<AnnotatedLine, AnnotateError> {
    let base = build_regenerate_prompt(line, new_style, script_context);
    let mut prompt = base.clone();
    for attempt in 0..2 {
        let response = provider.complete_structured(&prompt)?;
        let problems = match extract_json_block(&response, '{') {
            None => vec!["response must be one JSON line record".to_string()],
            Some(v) => match validate_line(&v) {
                Ok(fresh) => {
                    return Ok(AnnotatedLine {
                        index: line.index,
                        id: line.id.clone(),
                        text: line.text.clone(),
                        speech: fresh.speech,
                        style: new_style,
                        emotion_analysis: fresh.emotion_analysis,
                        shot_type: line.shot_type,
                        shot_angle: line.shot_angle,
                        shot_analysis: fresh.shot_analysis,
                    });
                }
                // the style is forced anyway, so an off-vocabulary style is not worth a retry
                Err(e) if e.violations().iter().all(|v| matches!(v, LineViolation::UnknownStyle(_))) => {
                    let mut patched = v.clone();
                    patched["style"] = Value::String(new_style.name().into());
                    match validate_line(&patched) {
                        Ok(fresh) => {
                            return Ok(AnnotatedLine {
                                speech: fresh.speech,
                                emotion_analysis: fresh.emotion_analysis,
                                shot_analysis: fresh.shot_analysis,
                                style: new_style,
                                ..line.clone()
                            })
                        }
                        Err(e) => e.violations().iter().map(ToString::to_string).collect(),
                    }
                }
                Err(e) => e.violations().iter().map(ToString::to_string).collect(),
            },
        };
        if attempt == 1 {
            return Err(AnnotateError::UnparseableResponse(problems.join("; ")));
        }
        prompt = repair_prompt(&base, &response, &problems);
    }
    unreachable!("loop returns on its last iteration")
}

/// Offline restyle: speech and shot analysis kept, emotion analysis from a template.
pub fn fallback_regenerate(line: &AnnotatedLine, new_style: StyleTag) -> AnnotatedLine {
    AnnotatedLine {
        style: new_style,
        emotion_analysis: format!("Style set to {new_style} by the author."),
        ..line.clone()
    }
}

/// Provider that answers the three prompt kinds with the rule-based
/// functions, recovering the script from the prompt text.
#[derive(Clone, Copy, Debug, Default)]
pub struct DeterministicFallback;

fn strip_repair(prompt: &str) -> &str {
    prompt.find(REPAIR_MARKER).map_or(prompt, |i| &prompt[..i])
}

fn script_after_marker(prompt: &str) -> Option<RawScript> {
    let i = prompt.find(SCRIPT_MARKER)?;
    Some(RawScript::new(&prompt[i + SCRIPT_MARKER.len()..]))
}

impl AnnotationProvider for DeterministicFallback {
    fn name(&self) -> &str {
        "offline"
    }

    fn complete_structured(&self, prompt: &str) -> Result<String, ProviderError> {
        let prompt = strip_repair(prompt);
        let unknown = || ProviderError::Unavailable("offline provider does not recognize this prompt".into());
        if prompt.starts_with("Please parse the following script") {
            let script = script_after_marker(prompt).ok_or_else(unknown)?;
            let lines = fallback_annotate(&script).map_err(|e| ProviderError::Unavailable(e.to_string()))?;
            return Ok(serde_json::to_string_pretty(&lines).expect("lines serialize"));
        }
        if prompt.starts_with(SUMMARY_INSTRUCTIONS) {
            let script = script_after_marker(prompt).ok_or_else(unknown)?;
            let summary = fallback_summary(&script).map_err(|e| ProviderError::Unavailable(e.to_string()))?;
            return Ok(serde_json::to_string_pretty(&summary).expect("summary serializes"));
        }
        if prompt.starts_with("Please update the fields") {
            let style_re = Regex::new(r"specified emotion, ([A-Za-z]+), based on").expect("static regex");
            let style: StyleTag = style_re
                .captures(prompt)
                .and_then(|c| c[1].parse().ok())
                .ok_or_else(unknown)?;
            let at = prompt.rfind(LINE_MARKER).ok_or_else(unknown)?;
            let record: Value = serde_json::from_str(&prompt[at + LINE_MARKER.len()..]).map_err(|_| unknown())?;
            let line = validate_line(&record).map_err(|_| unknown())?;
            let out = fallback_regenerate(&line, style);
            return Ok(serde_json::to_string_pretty(&out).expect("line serializes"));
        }
        Err(unknown())
    }
}
