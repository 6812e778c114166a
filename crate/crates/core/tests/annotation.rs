use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Instant;

use serde_json::Value;

use scenewright_core::annotator::{
    annotate_script, regenerate_line, summarize_script, AnnotateError, AnnotationProvider, AnnotationRequest,
    ProviderError, ReplayProvider, REPAIR_MARKER,
};
use scenewright_core::model::{validate_line, RawScript, ShotAngle, ShotType, StyleTag, LINE_FIELDS};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/replay")
}

fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixtures().join(name)).unwrap()
}

fn replay() -> ReplayProvider {
    ReplayProvider::from_dir(&fixtures()).unwrap()
}

#[test]
fn tom_bob_replay_reproduces_recorded_json() {
    let provider = replay();
    let t = Instant::now();
    let lines = annotate_script(&AnnotationRequest::new(RawScript::new(fixture("tom-bob.script.txt")), &provider)).unwrap();
    let elapsed = t.elapsed();
    let got = serde_json::to_value(&lines).unwrap();
    let want: Value = serde_json::from_str(&fixture("tom-bob.parse.json")).unwrap();
    assert_eq!(got, want);
    for record in want.as_array().unwrap() {
        assert_eq!(record.as_object().unwrap().len(), 8);
        validate_line(record).unwrap();
    }
    assert!(elapsed.as_secs_f64() < 1.0, "{elapsed:?}");
}

#[test]
fn renamed_fields_are_rejected() {
    let want: Value = serde_json::from_str(&fixture("tom-bob.parse.json")).unwrap();
    for record in want.as_array().unwrap() {
        for field in LINE_FIELDS {
            for renamed in [field.to_uppercase(), format!("{field}_"), field[1..].to_string()] {
                let mut obj = record.as_object().unwrap().clone();
                let v = obj.remove(field).unwrap();
                obj.insert(renamed.clone(), v);
                assert!(validate_line(&Value::Object(obj)).is_err(), "{field} -> {renamed}");
            }
        }
    }
}

#[test]
fn summary_replay_is_byte_exact() {
    let summary = summarize_script(&RawScript::new(fixture("tom-bob.script.txt")), &replay()).unwrap();
    assert_eq!(summary.title, "Greeting After an All-Nighter");
    assert_eq!(summary.synopsis, "Two friends greet each other after an all-nighter.");
}

fn line_with(style: &str, shot: &str, angle: &str) -> Value {
    serde_json::json!({
        "id": "A", "text": "Hi.", "speech": "Hi.", "style": style, "emotionAnalysis": "",
        "shotType": shot, "shotAngle": angle, "shotAnalysis": "",
    })
}

#[test]
fn vocabulary_is_closed() {
    assert_eq!(StyleTag::ALL.len(), 19);
    for style in StyleTag::ALL {
        assert!(validate_line(&line_with(style.name(), "Medium shot", "Eye level")).is_ok());
    }
    for shot in ShotType::ALL {
        for angle in ShotAngle::ALL {
            assert!(validate_line(&line_with("Neutral", shot.name(), angle.name())).is_ok());
        }
    }
    for bad in ["Dutch angle", "Extreme close-up"] {
        assert!(validate_line(&line_with("Neutral", bad, "Eye level")).is_err());
        assert!(validate_line(&line_with("Neutral", "Medium shot", bad)).is_err());
    }
    assert!(validate_line(&line_with("neutral", "Medium shot", "Eye level")).is_err());
    assert!(validate_line(&line_with("Excited", "Medium shot", "Eye level")).is_err());
}

#[test]
fn added_context_changes_alice_style() {
    let provider = replay();
    let annotate = |name: &str| {
        annotate_script(&AnnotationRequest::new(RawScript::new(fixture(name)), &provider)).unwrap()
    };
    let plain = annotate("stairs.script.txt");
    assert_eq!(plain[0].id, "Alice");
    assert_eq!(plain[0].style, StyleTag::Threatening);
    assert_eq!(
        plain[0].speech,
        "Hey Bob! So, um, you remember we're doing the stairs this weekend, right? You really better not have, like, made any plans with friends."
    );
    let context = annotate("stairs-context.script.txt");
    assert_eq!(context[0].style, StyleTag::Neutral);
    assert_eq!(
        context[0].speech,
        "Hey, Bob! So, you remember we're tackling the stairs this weekend, right? You haven't gone and made any plans with your friends, have you?"
    );
    assert_eq!(plain[1].id, "Bob");
}

#[test]
fn regeneration_replay_keeps_identity_fields() {
    let provider = replay();
    let script = RawScript::new(fixture("stairs.script.txt"));
    let lines = annotate_script(&AnnotationRequest::new(script.clone(), &provider)).unwrap();
    let fresh = regenerate_line(&lines[0], StyleTag::Neutral, &script, &provider).unwrap();
    assert_eq!(fresh.style, StyleTag::Neutral);
    assert_eq!(fresh.id, lines[0].id);
    assert_eq!(fresh.text, lines[0].text);
    assert_eq!(fresh.shot_type, lines[0].shot_type);
    assert_eq!(fresh.shot_angle, lines[0].shot_angle);
    assert_ne!(fresh.speech, lines[0].speech);
}

/// Returns queued responses in order and records every prompt.
struct Scripted {
    responses: Mutex<Vec<String>>,
    prompts: Mutex<Vec<String>>,
}

impl Scripted {
    fn new(responses: &[&str]) -> Self {
        Self {
            responses: Mutex::new(responses.iter().rev().map(|s| s.to_string()).collect()),
            prompts: Mutex::new(Vec::new()),
        }
    }
}

impl AnnotationProvider for Scripted {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete_structured(&self, prompt: &str) -> Result<String, ProviderError> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        self.responses.lock().unwrap().pop().ok_or_else(|| ProviderError::Unavailable("exhausted".into()))
    }
}

const TWO: &str = "Tom: Hello, how are you feeling after your all-nighter?\nBob: I'm doing well, thank you.";

#[test]
fn invalid_response_gets_one_repair_round() {
    let good = fixture("tom-bob.parse.json");
    let bad = good.replace("\"Tired\"", "\"Sleepy\"");
    let provider = Scripted::new(&[&format!("Sure! Here it is:\n```json\n{bad}\n```"), &good]);
    let lines = annotate_script(&AnnotationRequest::new(RawScript::new(TWO), &provider)).unwrap();
    assert_eq!(lines[1].style, StyleTag::Tired);
    let prompts = provider.prompts.lock().unwrap();
    assert_eq!(prompts.len(), 2);
    assert!(prompts[1].contains(REPAIR_MARKER));
    assert!(prompts[1].contains("Sleepy"));
}

#[test]
fn persistent_vocabulary_errors_are_salvaged_with_notes() {
    let bad = fixture("tom-bob.parse.json").replace("\"Eye level\"", "\"Dutch angle\"");
    let provider = Scripted::new(&[&bad, &bad]);
    let lines = annotate_script(&AnnotationRequest::new(RawScript::new(TWO), &provider)).unwrap();
    for line in &lines {
        assert_eq!(line.shot_angle, ShotAngle::EyeLevel);
        assert!(line.shot_analysis.contains("Dutch angle"));
    }
    assert_eq!(lines[0].style, StyleTag::Happy);
}

#[test]
fn wrong_record_count_after_repair_is_unparseable() {
    let one = r#"[{"id":"Tom","text":"x","speech":"x","style":"Happy","emotionAnalysis":"","shotType":"Medium shot","shotAngle":"Eye level","shotAnalysis":""}]"#;
    let provider = Scripted::new(&[one, one]);
    let err = annotate_script(&AnnotationRequest::new(RawScript::new(TWO), &provider)).unwrap_err();
    assert!(matches!(err, AnnotateError::UnparseableResponse(_)), "{err:?}");
    let provider = Scripted::new(&["no json at all", "still none"]);
    let err = annotate_script(&AnnotationRequest::new(RawScript::new(TWO), &provider)).unwrap_err();
    assert!(matches!(err, AnnotateError::UnparseableResponse(_)), "{err:?}");
}

#[test]
fn scripts_without_dialogue_never_reach_the_provider() {
    let provider = Scripted::new(&[]);
    let err = annotate_script(&AnnotationRequest::new(RawScript::new("A quiet room. Nobody speaks."), &provider)).unwrap_err();
    assert!(matches!(err, AnnotateError::NoDialogueFound));
    let err = annotate_script(&AnnotationRequest::new(RawScript::new("   "), &provider)).unwrap_err();
    assert!(matches!(err, AnnotateError::EmptyScript));
    assert!(provider.prompts.lock().unwrap().is_empty());
}

#[test]
fn missing_recording_is_a_provider_error() {
    let err = annotate_script(&AnnotationRequest::new(RawScript::new("A: unrecorded line."), &replay())).unwrap_err();
    assert!(matches!(err, AnnotateError::ProviderUnavailable(_)), "{err:?}");
}
