//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
//!
//! Run alone with `cargo test -p scenewright-cli --test acceptance`.

// negated comparisons are deliberate: NaN must fail a check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

use scenewright_cli::generate_to_dir;
use scenewright_core::annotator::{annotate_script, summarize_script, AnnotationRequest, ReplayProvider};
use scenewright_core::camera::{frame_subject, SubjectBounds};
use scenewright_core::characters::builtin_characters;
use scenewright_core::kinematics::{forward_kinematics, parse_bvh, retarget, write_bvh, Channel, MotionClip, Skeleton, Vec3};
use scenewright_core::model::{
    validate_line, AssetKind, RawScript, ShotAngle, ShotType, StyleTag, LINE_FIELDS,
};
use scenewright_core::motion::{
    canonical_skeleton, compute_envelope, detect_onsets, plan_strokes, synthesize_gestures, EnvelopeParams, OnsetParams,
};
use scenewright_core::pipeline::{default_cast, Engine, JobState, LineEdit};
use scenewright_core::speech::{AudioClip, OfflineSynth, SpeechError, SpeechProvider, Voice, DEFAULT_SAMPLE_RATE};
use scenewright_core::store::Studio;
use scenewright_core::validate::max_bone_stretch;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/replay")
}

fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixtures().join(name)).unwrap()
}

fn replay() -> ReplayProvider {
    ReplayProvider::from_dir(&fixtures()).unwrap()
}

fn c1_parse_replay() -> Outcome {
    let provider = replay();
    let t = Instant::now();
    let lines = annotate_script(&AnnotationRequest::new(RawScript::new(fixture("tom-bob.script.txt")), &provider))
        .map_err(|e| e.to_string())?;
    let elapsed = t.elapsed().as_secs_f64();
    let got = serde_json::to_value(&lines).unwrap();
    let want: Value = serde_json::from_str(&fixture("tom-bob.parse.json")).unwrap();
    ensure!(got == want, "replayed JSON differs:\n{got:#}");
    let mut mutations = 0;
    for record in want.as_array().unwrap() {
        ensure!(record.as_object().unwrap().len() == 8, "record does not have 8 fields");
        validate_line(record).map_err(|e| e.to_string())?;
        for field in LINE_FIELDS {
            let mut obj = record.as_object().unwrap().clone();
            let v = obj.remove(field).unwrap();
            obj.insert(format!("{field}X"), v);
            ensure!(validate_line(&Value::Object(obj)).is_err(), "renamed {field} accepted");
            mutations += 1;
        }
    }
    ensure!(elapsed < 1.0, "took {elapsed:.3} s");
    Ok(format!("2 lines x 8 fields exact, {mutations} field renames rejected, {:.1} ms", elapsed * 1e3))
}

fn c2_summary_replay() -> Outcome {
    let s = summarize_script(&RawScript::new(fixture("tom-bob.script.txt")), &replay()).map_err(|e| e.to_string())?;
    ensure!(s.title == "Greeting After an All-Nighter", "title {:?}", s.title);
    ensure!(s.synopsis == "Two friends greet each other after an all-nighter.", "synopsis {:?}", s.synopsis);
    Ok(format!("title {:?}", s.title))
}

fn line_with(style: &str, shot: &str, angle: &str) -> Value {
    json!({
        "id": "A", "text": "Hi.", "speech": "Hi.", "style": style, "emotionAnalysis": "",
        "shotType": shot, "shotAngle": angle, "shotAnalysis": "",
    })
}

fn c3_vocabulary() -> Outcome {
    ensure!(StyleTag::ALL.len() == 19, "{} styles", StyleTag::ALL.len());
    for style in StyleTag::ALL {
        ensure!(validate_line(&line_with(style.name(), "Medium shot", "Eye level")).is_ok(), "{} rejected", style.name());
    }
    let mut pairs = 0;
    for shot in ShotType::ALL {
        for angle in ShotAngle::ALL {
            ensure!(validate_line(&line_with("Neutral", shot.name(), angle.name())).is_ok(), "{shot:?}/{angle:?} rejected");
            pairs += 1;
        }
    }
    for bad in ["Dutch angle", "Extreme close-up"] {
        ensure!(validate_line(&line_with("Neutral", bad, "Eye level")).is_err(), "{bad} accepted as shot");
        ensure!(validate_line(&line_with("Neutral", "Medium shot", bad)).is_err(), "{bad} accepted as angle");
    }
    Ok(format!("19 styles and {pairs} shot/angle pairs accepted, 2 removed options rejected"))
}

/// Serves `studio` on an ephemeral local port for the rest of the process.
fn spawn_server(studio: Arc<Studio>) -> String {
    let std_listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    std_listener.set_nonblocking(true).unwrap();
    let addr = std_listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(std_listener).unwrap();
            scenewright_server::serve(listener, studio).await.unwrap();
        });
    });
    format!("http://{addr}")
}

struct Api {
    base: String,
    client: reqwest::blocking::Client,
}

impl Api {
    fn send(&self, method: reqwest::Method, path: &str, body: Option<Value>) -> Result<(u16, Value), String> {
        let mut req = self.client.request(method, format!("{}{path}", self.base));
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.json::<Value>().map_err(|e| e.to_string())?;
        Ok((status, body))
    }

    fn wait_job(&self, job_id: &str) -> Result<Value, String> {
        for _ in 0..1200 {
            let (_, job) = self.send(reqwest::Method::GET, &format!("/api/jobs/{job_id}"), None)?;
            if job["state"] != "running" {
                return Ok(job);
            }
            std::thread::sleep(Duration::from_millis(25));
        }
        Err(format!("job {job_id} never finished"))
    }

    /// Creates and fully generates a scene; returns its id.
    fn create_and_generate(&self, script: &str) -> Result<String, String> {
        let (status, created) = self.send(reqwest::Method::POST, "/api/scenes", Some(json!({ "script": script })))?;
        ensure!(status == 201, "create returned {status}: {created}");
        let id = created["sceneId"].as_str().unwrap().to_string();
        let (_, voices) = self.send(reqwest::Method::GET, "/api/voices", None)?;
        let (_, chars) = self.send(reqwest::Method::GET, "/api/characters", None)?;
        let mut cast = serde_json::Map::new();
        for (k, speaker) in created["speakers"].as_array().unwrap().iter().enumerate() {
            let voice = &voices[k % voices.as_array().unwrap().len()]["voiceId"];
            let model = &chars[k % chars.as_array().unwrap().len()]["id"];
            cast.insert(speaker.as_str().unwrap().into(), json!({ "voiceId": voice, "modelId": model }));
        }
        let (status, accepted) =
            self.send(reqwest::Method::POST, &format!("/api/scenes/{id}/generate"), Some(json!({ "cast": cast })))?;
        ensure!(status == 202, "generate returned {status}: {accepted}");
        let job = self.wait_job(accepted["jobId"].as_str().unwrap())?;
        ensure!(job["state"] == "done", "job ended {}", job["state"]);
        Ok(id)
    }
}

fn c4_context_through_service() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let engine = Engine::offline().with_annotation(Arc::new(replay()));
    let studio = Arc::new(Studio::open(tmp.path(), engine).map_err(|e| e.to_string())?);
    let api = Api { base: spawn_server(studio), client: reqwest::blocking::Client::new() };

    let plain = api.create_and_generate(&fixture("stairs.script.txt"))?;
    let with_context = api.create_and_generate(&fixture("stairs-context.script.txt"))?;
    let style_of = |id: &str| -> Result<Value, String> {
        let (status, scene) = api.send(reqwest::Method::GET, &format!("/api/scenes/{id}"), None)?;
        ensure!(status == 200, "GET scene returned {status}");
        ensure!(scene["lines"][0]["id"] == "Alice", "line 0 speaker {}", scene["lines"][0]["id"]);
        Ok(scene["lines"][0]["style"].clone())
    };
    ensure!(style_of(&plain)? == "Threatening", "no-context style {}", style_of(&plain)?);
    ensure!(style_of(&with_context)? == "Neutral", "with-context style {}", style_of(&with_context)?);

    let (status, update) =
        api.send(reqwest::Method::PATCH, &format!("/api/scenes/{plain}/lines/0"), Some(json!({ "style": "Neutral" })))?;
    ensure!(status == 202, "PATCH returned {status}: {update}");
    ensure!(update.get("warnings").is_none(), "regeneration fell back: {}", update["warnings"]);
    let job = api.wait_job(update["jobId"].as_str().unwrap())?;
    ensure!(job["state"] == "done", "regeneration job ended {}", job["state"]);
    ensure!(style_of(&plain)? == "Neutral", "PATCHed style {}", style_of(&plain)?);
    let speech = update["line"]["speech"].as_str().unwrap_or_default();
    ensure!(!speech.contains("um,"), "regenerated speech kept fillers: {speech}");
    Ok("no context: Threatening, with context: Neutral, PATCH style -> Neutral via replayed regeneration".into())
}

/// `n` dialogue lines of identical length.
fn uniform_script(n: usize) -> String {
    (0..n)
        .map(|i| format!("{}: We should paint the fence before the rain starts, line {i}.", if i % 2 == 0 { "Ann" } else { "Ben" }))
        .collect::<Vec<_>>()
        .join("\n")
}

fn timed_generate(engine: &Engine, script: &str) -> Result<f64, String> {
    let out = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let outcome = generate_to_dir(engine, &RawScript::new(script), out.path(), &[]).map_err(|e| e.to_string())?;
    ensure!(outcome.failed == 0, "{} lines failed", outcome.failed);
    Ok(t.elapsed().as_secs_f64())
}

fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - (intercept + slope * x)).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

fn c5_latency() -> Outcome {
    let ten = timed_generate(&Engine::offline(), &uniform_script(10))?;
    ensure!(ten < 10.0, "10 lines took {ten:.2} s");
    let serial = Engine::offline().with_concurrency(1);
    let counts = [1usize, 2, 4, 8, 16];
    let mut times = Vec::new();
    for &n in &counts {
        let best = (0..3).map(|_| timed_generate(&serial, &uniform_script(n))).collect::<Result<Vec<_>, _>>()?;
        times.push(best.into_iter().fold(f64::INFINITY, f64::min));
    }
    let xs: Vec<f64> = counts.iter().map(|&n| n as f64).collect();
    let r2 = r_squared(&xs, &times);
    ensure!(r2 > 0.95, "R^2 {r2:.4} for times {times:?}");
    Ok(format!(
        "10 lines in {ten:.3} s; K=1 times {} s; R^2 = {r2:.4}",
        times.iter().map(|t| format!("{t:.3}")).collect::<Vec<_>>().join("/")
    ))
}

/// Offline speech behind a random per-call delay.
struct Jittery {
    seed: u64,
    max: Duration,
}

impl SpeechProvider for Jittery {
    fn name(&self) -> &str {
        "jittery"
    }

    fn list_voices(&self) -> Result<Vec<Voice>, SpeechError> {
        Ok(OfflineSynth::catalog())
    }

    fn synthesize(&self, text: &str, voice: &Voice, style: StyleTag) -> Result<AudioClip, SpeechError> {
        let h = text.bytes().fold(self.seed, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
        let delay = self.max.mul_f64((h % 1000) as f64 / 1000.0);
        std::thread::sleep(delay);
        OfflineSynth::default().synthesize(text, voice, style)
    }
}

fn c6_dependency_order() -> Outcome {
    let mut rng = StdRng::seed_from_u64(6);
    let mut checked = 0;
    for run in 0..20 {
        let tmp = tempfile::tempdir().unwrap();
        let engine = Engine::offline()
            .with_speech(Arc::new(Jittery { seed: rng.random(), max: Duration::from_millis(30) }))
            .with_concurrency(rng.random_range(1..=4));
        let studio = Studio::open(tmp.path(), engine).map_err(|e| e.to_string())?;
        let created = studio.create_scene(&random_script(&mut rng)).map_err(|e| e.to_string())?;
        let cast = default_cast(studio.engine(), &created.speakers).map_err(|e| e.to_string())?;
        let job_id = studio.generate_scene(&created.scene_id, cast).map_err(|e| e.to_string())?;
        let job = studio.wait_job(&job_id).map_err(|e| e.to_string())?;
        ensure!(job.state == JobState::Done, "run {run}: job {:?}", job.state);
        for line in &job.lines {
            let (Some(speech_end), Some(gesture_start)) = (line.times.speech_end, line.times.gesture_start) else {
                return Err(format!("run {run} line {}: missing timestamps", line.index));
            };
            ensure!(gesture_start >= speech_end, "run {run} line {}: gesture {gesture_start} < speech {speech_end}", line.index);
            checked += 1;
        }
    }
    Ok(format!("20 runs, {checked} lines, gesture start >= speech end on every line"))
}

const WORDS: [&str; 18] = [
    "well", "the", "stairs", "need", "paint", "you", "promised", "Suzie", "tomorrow", "honestly", "maybe", "we",
    "could", "leave", "early", "coffee", "now", "fine",
];
const PUNCT: [&str; 8] = ["", "", "", ",", ".", "!", "?", "..."];

fn random_sentence(rng: &mut impl Rng) -> String {
    let n = rng.random_range(1..14);
    let mut words: Vec<String> =
        (0..n).map(|_| format!("{}{}", WORDS[rng.random_range(0..WORDS.len())], PUNCT[rng.random_range(0..PUNCT.len())])).collect();
    if rng.random_bool(0.7) {
        let last = words.last_mut().unwrap();
        last.push(['.', '!', '?'][rng.random_range(0..3)]);
    }
    words.join(" ")
}

fn random_script(rng: &mut impl Rng) -> String {
    let names = ["Ann", "Ben", "Cleo", "Dev"];
    let cast = rng.random_range(1..=names.len());
    let mut lines = Vec::new();
    if rng.random_bool(0.5) {
        lines.push("A kitchen, late at night.".to_string());
    }
    for _ in 0..rng.random_range(1..9) {
        let who = names[rng.random_range(0..cast)];
        let aside = if rng.random_bool(0.2) { " (quietly)" } else { "" };
        lines.push(format!("{who}{aside}: {}", random_sentence(rng)));
    }
    lines.join("\n")
}

fn burst_clip(rng: &mut impl Rng) -> (AudioClip, usize) {
    let sr = DEFAULT_SAMPLE_RATE as f64;
    let mut samples = vec![0i16; (rng.random_range(0.05..0.3) * sr) as usize];
    let n = rng.random_range(1..10);
    for _ in 0..n {
        let (len, amp) = (rng.random_range(0.08..0.3), rng.random_range(0.5..0.9));
        samples.extend((0..(len * sr) as usize).map(|i| {
            (amp * (2.0 * std::f64::consts::PI * 220.0 * i as f64 / sr).sin() * i16::MAX as f64) as i16
        }));
        samples.resize(samples.len() + (rng.random_range(0.3..0.6) * sr) as usize, 0);
    }
    (AudioClip::new(samples, DEFAULT_SAMPLE_RATE), n)
}

fn c7_sync() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7);
    let voices = OfflineSynth::catalog();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let style = StyleTag::ALL[rng.random_range(0..StyleTag::ALL.len())];
        let voice = &voices[rng.random_range(0..voices.len())].voice_id;
        let audio = OfflineSynth::default().render(&random_sentence(&mut rng), voice, style).map_err(|e| e.to_string())?;
        let motion = synthesize_gestures(&audio, style).map_err(|e| e.to_string())?;
        worst = worst.max((motion.duration() - audio.duration()).abs());
    }
    ensure!(worst <= 0.0167, "worst drift {:.2} ms", worst * 1e3);
    let mut clips = 0;
    for _ in 0..50 {
        let (clip, bursts) = burst_clip(&mut rng);
        let onsets = detect_onsets(&compute_envelope(&clip, EnvelopeParams::default()).unwrap(), OnsetParams::default());
        let strokes = plan_strokes(&clip, StyleTag::Neutral).map_err(|e| e.to_string())?;
        ensure!(onsets.times.len() == bursts, "{} onsets for {bursts} bursts", onsets.times.len());
        ensure!(strokes.len() == onsets.times.len(), "{} strokes for {} onsets", strokes.len(), onsets.times.len());
        clips += 1;
    }
    Ok(format!("100 pairs, worst drift {:.3} ms; {clips} burst clips with strokes == onsets", worst * 1e3))
}

type M4 = [[f64; 4]; 4];

fn mul(a: &M4, b: &M4) -> M4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn homogeneous(channel: Channel, v: f64) -> M4 {
    let (s, c) = v.to_radians().sin_cos();
    let mut m = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    match channel {
        Channel::Xposition => m[0][3] = v,
        Channel::Yposition => m[1][3] = v,
        Channel::Zposition => m[2][3] = v,
        Channel::Xrotation => (m[1][1], m[1][2], m[2][1], m[2][2]) = (c, -s, s, c),
        Channel::Yrotation => (m[0][0], m[0][2], m[2][0], m[2][2]) = (c, s, -s, c),
        Channel::Zrotation => (m[0][0], m[0][1], m[1][0], m[1][1]) = (c, -s, s, c),
    }
    m
}

/// Joint positions from 4x4 products; translation channels commute with
/// the offset, so channel order alone is applied after the offset.
fn oracle_positions(clip: &MotionClip, frame: usize) -> Vec<Vec3> {
    let mut world: Vec<M4> = Vec::new();
    let mut cursor = 0;
    for joint in clip.skeleton.joints() {
        let mut t = homogeneous(Channel::Xposition, joint.offset.x);
        t = mul(&t, &homogeneous(Channel::Yposition, joint.offset.y));
        t = mul(&t, &homogeneous(Channel::Zposition, joint.offset.z));
        let mut translations = t;
        let mut rotations = homogeneous(Channel::Xposition, 0.0);
        for &c in &joint.channels {
            let m = homogeneous(c, clip.frames[frame][cursor]);
            cursor += 1;
            if c.position_axis().is_some() {
                translations = mul(&translations, &m);
            } else {
                rotations = mul(&rotations, &m);
            }
        }
        let local = mul(&translations, &rotations);
        world.push(match joint.parent {
            None => local,
            Some(p) => mul(&world[p], &local),
        });
    }
    world.iter().map(|m| Vec3::new(m[0][3], m[1][3], m[2][3])).collect()
}

fn random_clip(skel: &Skeleton, frames: usize, rng: &mut impl Rng) -> MotionClip {
    let rows = (0..frames)
        .map(|_| {
            skel.joints()
                .iter()
                .flat_map(|j| j.channels.iter())
                .map(|c| if c.position_axis().is_some() { rng.random_range(-100.0..100.0) } else { rng.random_range(-180.0..180.0) })
                .collect()
        })
        .collect();
    MotionClip { skeleton: skel.clone(), frames: rows, frame_time: 1.0 / 60.0 }
}

fn c8_kinematics() -> Outcome {
    let mut rng = StdRng::seed_from_u64(8);
    let mut structured = 0;
    for _ in 0..10_000 {
        let len = rng.random_range(0..400);
        let bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let parsed = catch_unwind(|| parse_bvh(&text)).map_err(|_| format!("parser panicked on {bytes:?}"))?;
        structured += parsed.is_err() as usize;
    }

    let mut skeletons = vec![canonical_skeleton()];
    skeletons.extend(builtin_characters().into_iter().map(|c| c.skeleton));
    let mut round_trip: f64 = 0.0;
    for skel in &skeletons {
        let clip = random_clip(skel, 20, &mut rng);
        let back = parse_bvh(&write_bvh(&clip).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        ensure!(back.skeleton.same_topology(skel), "round trip changed topology");
        for (a, b) in back.frames.iter().flatten().zip(clip.frames.iter().flatten()) {
            round_trip = round_trip.max((a - b).abs());
        }
        for (a, b) in back.skeleton.joints().iter().zip(skel.joints()) {
            round_trip = round_trip.max((a.offset - b.offset).amax());
        }
    }
    ensure!(round_trip <= 1e-5, "round trip error {round_trip:e}");

    let clip = random_clip(&canonical_skeleton(), 1000, &mut rng);
    let mut fk: f64 = 0.0;
    for f in 0..clip.frames.len() {
        let pose = forward_kinematics(&clip, f).map_err(|e| e.to_string())?;
        for (p, q) in pose.positions.iter().zip(oracle_positions(&clip, f)) {
            fk = fk.max((p - q).norm());
        }
    }
    ensure!(fk <= 1e-6, "FK deviates {fk:e} cm");

    let source = random_clip(&canonical_skeleton(), 120, &mut rng);
    let mut stretch: f64 = 0.0;
    for character in builtin_characters() {
        let out = retarget(&source, &character.skeleton, &character.joint_map).map_err(|e| e.to_string())?;
        let s = max_bone_stretch(&out);
        ensure!(s <= 1e-4, "{} bone stretch {s:e}", character.id());
        stretch = stretch.max(s);
    }
    Ok(format!(
        "10000 fuzz inputs ({structured} structured errors, no panics); round trip {round_trip:.1e}; FK {fk:.1e} cm over 1000 poses; bone stretch {stretch:.1e} on both characters"
    ))
}

fn c9_speech_duration() -> Outcome {
    let mut rng = StdRng::seed_from_u64(9);
    let voices = OfflineSynth::catalog();
    for i in 0..50 {
        // built token by token so the pause counts are known independently
        let (mut words, mut commas, mut enders) = (0u64, 0u64, 0u64);
        let tokens: Vec<String> = (0..rng.random_range(1..16))
            .map(|_| {
                words += 1;
                let (suffix, c, e) = [("", 0, 0), (",", 1, 0), (".", 0, 1), ("!", 0, 1), ("?", 0, 1), ("...", 1, 1)]
                    [rng.random_range(0..6)];
                commas += c;
                enders += e;
                format!("{}{suffix}", WORDS[rng.random_range(0..WORDS.len())])
            })
            .collect();
        let text = tokens.join(" ");
        let style = StyleTag::ALL[rng.random_range(0..StyleTag::ALL.len())];
        let clip = OfflineSynth::default()
            .render(&text, &voices[i % voices.len()].voice_id, style)
            .map_err(|e| e.to_string())?;
        // 0.4 s per word and per sentence ender, 0.2 s per comma
        let expected = ((2 * words + commas + 2 * enders) * DEFAULT_SAMPLE_RATE as u64 / 5) as usize;
        ensure!(clip.samples.len() == expected, "{text:?}: {} samples, expected {expected}", clip.samples.len());
    }
    Ok("50 sentences, sample counts exact".into())
}

fn c10_camera() -> Outcome {
    let bounds = SubjectBounds::new(Vec3::zeros(), 1.70);
    let medium = frame_subject(&bounds, ShotType::Medium, ShotAngle::EyeLevel).map_err(|e| e.to_string())?;
    let d = medium.distance();
    ensure!((d - 1.6347).abs() <= 1e-3, "medium eye-level distance {d}");
    let mut rng = StdRng::seed_from_u64(10);
    for _ in 0..200 {
        let b = SubjectBounds::new(Vec3::new(rng.random_range(-3.0..3.0), 0.0, rng.random_range(-3.0..3.0)), rng.random_range(0.5..2.5));
        for angle in ShotAngle::ALL {
            let dist = |shot| frame_subject(&b, shot, *angle).map(|p| p.distance()).map_err(|e| e.to_string());
            let (c, m, l) = (dist(ShotType::CloseUp)?, dist(ShotType::Medium)?, dist(ShotType::Long)?);
            ensure!(c < m && m < l, "distances {c} {m} {l} not increasing");
        }
        for shot in ShotType::ALL {
            let pitch = frame_subject(&b, *shot, ShotAngle::EyeLevel).map_err(|e| e.to_string())?.pitch();
            ensure!(pitch == 0.0, "eye-level pitch {pitch}");
        }
    }
    Ok(format!("medium eye-level d = {d:.4} m; monotone over 200 subjects; eye-level pitch exactly 0"))
}

fn bundle_files(dir: &Path, lines: usize) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for i in 0..lines {
        for kind in AssetKind::ALL {
            let rel = kind.relative_path(i);
            if let Ok(bytes) = std::fs::read(dir.join(&rel)) {
                out.insert(rel, bytes);
            }
        }
    }
    out
}

fn c11_bundle_closure() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_scenewright");
    let mut rng = StdRng::seed_from_u64(11);
    let tmp = tempfile::tempdir().unwrap();
    for k in 0..25 {
        let script_path = tmp.path().join(format!("script-{k}.txt"));
        std::fs::write(&script_path, random_script(&mut rng)).unwrap();
        let out = tmp.path().join(format!("bundle-{k}"));
        let gen = Command::new(bin)
            .args(["generate", script_path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--provider", "offline"])
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(gen.status.success(), "generate {k} exited {:?}: {}", gen.status.code(), String::from_utf8_lossy(&gen.stderr));
        let val = Command::new(bin).args(["validate", out.to_str().unwrap()]).output().map_err(|e| e.to_string())?;
        ensure!(val.status.code() == Some(0), "validate {k} exited {:?}: {}", val.status.code(), String::from_utf8_lossy(&val.stderr));
    }

    let mut edits = 0;
    for _ in 0..5 {
        let data = tempfile::tempdir().unwrap();
        let studio = Studio::open(data.path(), Engine::offline()).map_err(|e| e.to_string())?;
        let script = loop {
            let s = random_script(&mut rng);
            if s.lines().filter(|l| l.contains(": ")).count() >= 2 {
                break s;
            }
        };
        let created = studio.create_scene(&script).map_err(|e| e.to_string())?;
        let cast = default_cast(studio.engine(), &created.speakers).map_err(|e| e.to_string())?;
        let job = studio.generate_scene(&created.scene_id, cast).map_err(|e| e.to_string())?;
        studio.wait_job(&job).map_err(|e| e.to_string())?;
        let dir = data.path().join("scenes").join(&created.scene_id);
        let n = studio.get_scene(&created.scene_id).map_err(|e| e.to_string())?.lines.len();
        let before = bundle_files(&dir, n);
        let target = rng.random_range(0..n);
        let edit = if rng.random_bool(0.5) {
            LineEdit { speech: Some(random_sentence(&mut rng)), style: None }
        } else {
            LineEdit { speech: None, style: Some(StyleTag::ALL[rng.random_range(0..StyleTag::ALL.len())].name().into()) }
        };
        let update = studio.update_line(&created.scene_id, target, &edit).map_err(|e| e.to_string())?;
        studio.wait_job(&update.job_id).map_err(|e| e.to_string())?;
        let after = bundle_files(&dir, n);
        for (rel, bytes) in &before {
            let owner: usize = rel.rsplit("line-").next().and_then(|s| s.split('.').next()).and_then(|s| s.parse().ok()).unwrap();
            if owner != target {
                ensure!(after.get(rel) == Some(bytes), "{rel} changed by an edit to line {target}");
            }
        }
        let problems = scenewright_core::validate::validate_bundle(&dir, &studio.engine().catalog);
        ensure!(problems.is_empty(), "after edit: {problems:?}");
        edits += 1;
    }
    Ok(format!("25 scripts generated and validated (exit 0); {edits} single-line edits left other lines byte-identical"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("annotation replay fidelity", c1_parse_replay),
        ("summary replay fidelity", c2_summary_replay),
        ("vocabulary closure", c3_vocabulary),
        ("context sensitivity through the service", c4_context_through_service),
        ("latency envelope and linear scaling", c5_latency),
        ("speech-before-gesture ordering", c6_dependency_order),
        ("audio/motion synchronization", c7_sync),
        ("kinematics suite", c8_kinematics),
        ("offline speech duration model", c9_speech_duration),
        ("camera framing", c10_camera),
        ("bundle closure and line isolation", c11_bundle_closure),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
