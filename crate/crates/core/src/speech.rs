//! Text-to-speech: provider seam, voice catalog, the deterministic offline
//! synthesizer and WAV encoding.

use std::io::Cursor;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::StyleTag;
use crate::parallel::map_indexed;

pub const DEFAULT_SAMPLE_RATE: u32 = 22050;

/// Seconds of speech per whitespace-separated word.
pub const WORD_SECONDS: f64 = 0.40;
/// Seconds of silence per comma (and per ellipsis).
pub const COMMA_SECONDS: f64 = 0.20;
/// Seconds of silence per sentence-ending punctuation run.
pub const ENDER_SECONDS: f64 = 0.40;

/// Peak level of offline output relative to full scale (about -1.4 dBFS).
pub const OFFLINE_PEAK: f64 = 0.85;

/// Mono 16-bit PCM audio.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AudioClip {
    pub samples: Vec<i16>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<i16>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Self { samples, sample_rate }
    }

    pub fn silence(seconds: f64, sample_rate: u32) -> Self {
        let n = (seconds * sample_rate as f64).round() as usize;
        Self::new(vec![0; n], sample_rate)
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample `i` scaled to [-1, 1].
    pub fn normalized(&self, i: usize) -> f64 {
        self.samples[i] as f64 / i16::MAX as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().map(|s| (*s as f64).abs()).fold(0.0, f64::max) / i16::MAX as f64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Voice {
    #[serde(rename = "voiceId")]
    pub voice_id: String,
    #[serde(rename = "displayName")]
    pub display_name: String,
    pub provider: String,
}

#[derive(Debug, Error)]
pub enum SpeechError {
    #[error("speech text is empty")]
    EmptySpeech,
    #[error("batch is empty")]
    BatchEmpty,
    #[error("unknown voice {0:?}")]
    UnknownVoice(String),
    #[error("speech provider unavailable{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    ProviderUnavailable { status: Option<u16>, message: String },
    #[error("speech provider timed out")]
    ProviderTimeout,
    #[error("invalid audio: {0}")]
    BadAudio(#[from] WavError),
}

/// A text-to-speech backend. Implementations must be shareable across
/// concurrent syntheses.
pub trait SpeechProvider: Send + Sync {
    fn name(&self) -> &str;

    fn list_voices(&self) -> Result<Vec<Voice>, SpeechError>;

    /// `style` is forwarded as an optional delivery hint; providers may ignore it.
    fn synthesize(&self, text: &str, voice: &Voice, style: StyleTag) -> Result<AudioClip, SpeechError>;

    fn voice(&self, voice_id: &str) -> Result<Voice, SpeechError> {
        self.list_voices()?
            .into_iter()
            .find(|v| v.voice_id == voice_id)
            .ok_or_else(|| SpeechError::UnknownVoice(voice_id.to_string()))
    }
}

/// Pause structure of a speech string under the offline duration model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PauseCounts {
    pub words: usize,
    pub commas: usize,
    pub enders: usize,
}

impl PauseCounts {
    /// Duration in 0.2 s units.
    fn units(self) -> usize {
        self.words * 2 + self.commas + self.enders * 2
    }

    pub fn seconds(self) -> f64 {
        self.words as f64 * WORD_SECONDS + self.commas as f64 * COMMA_SECONDS + self.enders as f64 * ENDER_SECONDS
    }

    /// Exact sample count at `sample_rate`.
    pub fn samples(self, sample_rate: u32) -> usize {
        (self.units() as u64 * sample_rate as u64 / 5) as usize
    }
}

fn is_ender(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '…')
}

/// Counts words, commas and sentence enders. A run of `.!?…` is one ender;
/// a run holding an ellipsis also adds one comma pause.
pub fn count_pauses(token_or_text: &str) -> PauseCounts {
    let mut counts = PauseCounts { words: token_or_text.split_whitespace().count(), ..Default::default() };
    let mut run = String::new();
    let flush = |run: &mut String, counts: &mut PauseCounts| {
        if !run.is_empty() {
            counts.enders += 1;
            if run.contains("...") || run.contains('…') {
                counts.commas += 1;
            }
            run.clear();
        }
    };
    for c in token_or_text.chars() {
        if is_ender(c) {
            run.push(c);
            continue;
        }
        flush(&mut run, &mut counts);
        if c == ',' {
            counts.commas += 1;
        }
    }
    flush(&mut run, &mut counts);
    counts
}

/// Closed-form offline duration in seconds.
pub fn offline_duration(text: &str) -> f64 {
    count_pauses(text).seconds()
}

/// 64-bit FNV-1a; stable across platforms and releases.
pub(crate) fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.iter() {
            hash ^= *b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        hash ^= 0xff;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Deterministic network-free synthesizer: one enveloped tone per word,
/// silence for punctuation pauses.
#[derive(Clone, Debug)]
pub struct OfflineSynth {
    pub sample_rate: u32,
}

impl Default for OfflineSynth {
    fn default() -> Self {
        Self { sample_rate: DEFAULT_SAMPLE_RATE }
    }
}

const ATTACK_SECONDS: f64 = 0.015;
const RELEASE_SECONDS: f64 = 0.040;
const WORD_GAP_SECONDS: f64 = 0.030;

impl OfflineSynth {
    pub const PROVIDER: &'static str = "offline";

    pub fn catalog() -> Vec<Voice> {
        [
            ("stub-f1", "Stub Alto (bright)"),
            ("stub-f2", "Stub Alto (warm)"),
            ("stub-m1", "Stub Baritone (bright)"),
            ("stub-m2", "Stub Baritone (warm)"),
        ]
        .into_iter()
        .map(|(id, name)| Voice { voice_id: id.into(), display_name: name.into(), provider: Self::PROVIDER.into() })
        .collect()
    }

    /// Base tone frequency for a voice and style, in Hz.
    pub fn base_frequency(voice_id: &str, style: StyleTag) -> f64 {
        let register = if voice_id.starts_with("stub-m") { 110.0 } else { 190.0 };
        let h = fnv1a(&[voice_id.as_bytes(), style.name().as_bytes()]);
        register * (1.0 + (h % 1000) as f64 / 1000.0 * 0.5)
    }

    fn render_word(&self, out: &mut Vec<i16>, n: usize, freq: f64) {
        let sr = self.sample_rate as f64;
        let gap = (WORD_GAP_SECONDS * sr) as usize;
        let tone = n.saturating_sub(gap);
        let attack = ATTACK_SECONDS * sr;
        let release = RELEASE_SECONDS * sr;
        for i in 0..n {
            if i >= tone {
                out.push(0);
                continue;
            }
            let t = i as f64;
            let rise = (t / attack).min(1.0);
            let fall = ((tone as f64 - t) / release).min(1.0);
            let sustain = 1.0 - 0.25 * (t / tone as f64);
            let env = rise * fall * sustain;
            let x = OFFLINE_PEAK * env * (2.0 * std::f64::consts::PI * freq * t / sr).sin();
            out.push((x * i16::MAX as f64).round() as i16);
        }
    }

    pub fn render(&self, text: &str, voice_id: &str, style: StyleTag) -> Result<AudioClip, SpeechError> {
        if text.trim().is_empty() {
            return Err(SpeechError::EmptySpeech);
        }
        let unit = self.sample_rate as usize / 5;
        let base = Self::base_frequency(voice_id, style);
        let mut samples = Vec::with_capacity(count_pauses(text).samples(self.sample_rate));
        for (k, token) in text.split_whitespace().enumerate() {
            let wobble = 1.0 + 0.06 * ((k % 4) as f64 - 1.5) / 1.5;
            self.render_word(&mut samples, 2 * unit, base * wobble);
            let pauses = count_pauses(token);
            let silent = (pauses.commas + pauses.enders * 2) * unit;
            samples.resize(samples.len() + silent, 0);
        }
        Ok(AudioClip::new(samples, self.sample_rate))
    }
}

impl SpeechProvider for OfflineSynth {
    fn name(&self) -> &str {
        Self::PROVIDER
    }

    fn list_voices(&self) -> Result<Vec<Voice>, SpeechError> {
        Ok(Self::catalog())
    }

    fn synthesize(&self, text: &str, voice: &Voice, style: StyleTag) -> Result<AudioClip, SpeechError> {
        if !Self::catalog().iter().any(|v| v.voice_id == voice.voice_id) {
            return Err(SpeechError::UnknownVoice(voice.voice_id.clone()));
        }
        self.render(text, &voice.voice_id, style)
    }
}

/// One batch entry.
#[derive(Clone, Debug)]
pub struct SpeechRequest {
    pub text: String,
    pub voice: Voice,
    pub style: StyleTag,
}

/// Synthesizes every request with at most `concurrency` calls in flight.
/// Results are positionally aligned with `requests`; a failing line never
/// aborts its siblings.
pub fn synthesize_batch(
    requests: &[SpeechRequest],
    provider: &dyn SpeechProvider,
    concurrency: usize,
) -> Result<Vec<Result<AudioClip, SpeechError>>, SpeechError> {
    if requests.is_empty() {
        return Err(SpeechError::BatchEmpty);
    }
    Ok(map_indexed(requests.len(), concurrency, |i| {
        let req = &requests[i];
        if req.text.trim().is_empty() {
            return Err(SpeechError::EmptySpeech);
        }
        provider.synthesize(&req.text, &req.voice, req.style)
    }))
}

#[derive(Debug, Error)]
pub enum WavError {
    #[error("{0}")]
    Format(String),
    #[error("expected mono 16-bit PCM, found {channels} channel(s) at {bits} bits")]
    Unsupported { channels: u16, bits: u16 },
    #[error("data chunk truncated: header declares {declared} samples, found {found}")]
    Truncated { declared: usize, found: usize },
}

/// Encodes a clip as RIFF/WAVE PCM 16-bit mono with the canonical 44-byte header.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut buf = Cursor::new(Vec::with_capacity(44 + clip.samples.len() * 2));
    {
        let mut writer = hound::WavWriter::new(&mut buf, spec).expect("in-memory writer");
        let mut w16 = writer.get_i16_writer(clip.samples.len() as u32);
        for s in &clip.samples {
            w16.write_sample(*s);
        }
        w16.flush().expect("in-memory write");
        writer.finalize().expect("in-memory finalize");
    }
    buf.into_inner()
}

pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip, WavError> {
    let mut reader = hound::WavReader::new(Cursor::new(bytes)).map_err(|e| WavError::Format(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(WavError::Unsupported { channels: spec.channels, bits: spec.bits_per_sample });
    }
    if spec.sample_rate == 0 {
        return Err(WavError::Format("sample rate is zero".into()));
    }
    let declared = reader.len() as usize;
    let mut samples = Vec::with_capacity(declared.min(bytes.len() / 2));
    for s in reader.samples::<i16>() {
        match s {
            Ok(v) => samples.push(v),
            Err(_) => break,
        }
    }
    if samples.len() != declared {
        return Err(WavError::Truncated { declared, found: samples.len() });
    }
    Ok(AudioClip::new(samples, spec.sample_rate))
}

/// HTTP text-to-speech adapter.
///
/// `GET {base}/v1/voices` returns `{"voices":[{"voice_id","name"}]}`;
/// `POST {base}/v1/text-to-speech/{voice_id}` with `{"text","style_hint"}`
/// returns WAV bytes.
pub struct RemoteSpeech {
    base_url: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct RemoteVoiceList {
    voices: Vec<RemoteVoice>,
}

#[derive(Deserialize)]
struct RemoteVoice {
    voice_id: String,
    name: String,
}

impl RemoteSpeech {
    pub const PROVIDER: &'static str = "remote";

    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .expect("http client");
        Self { base_url: base_url.into().trim_end_matches('/').to_string(), api_key: api_key.into(), client }
    }

    /// Reads `S2S_TTS_BASE_URL` and `S2S_TTS_API_KEY`.
    pub fn from_env(timeout: Duration) -> Option<Self> {
        let base = std::env::var("S2S_TTS_BASE_URL").ok()?;
        let key = std::env::var("S2S_TTS_API_KEY").unwrap_or_default();
        Some(Self::new(base, key, timeout))
    }

    fn map_err(err: reqwest::Error) -> SpeechError {
        if err.is_timeout() {
            SpeechError::ProviderTimeout
        } else {
            SpeechError::ProviderUnavailable { status: err.status().map(|s| s.as_u16()), message: err.to_string() }
        }
    }

    fn check(resp: reqwest::blocking::Response) -> Result<reqwest::blocking::Response, SpeechError> {
        let status = resp.status();
        if status.is_success() {
            Ok(resp)
        } else {
            let body = resp.text().unwrap_or_default();
            Err(SpeechError::ProviderUnavailable { status: Some(status.as_u16()), message: body })
        }
    }
}

impl SpeechProvider for RemoteSpeech {
    fn name(&self) -> &str {
        Self::PROVIDER
    }

    fn list_voices(&self) -> Result<Vec<Voice>, SpeechError> {
        let resp = self
            .client
            .get(format!("{}/v1/voices", self.base_url))
            .bearer_auth(&self.api_key)
            .send()
            .map_err(Self::map_err)?;
        let list: RemoteVoiceList = Self::check(resp)?.json().map_err(Self::map_err)?;
        if list.voices.is_empty() {
            return Err(SpeechError::ProviderUnavailable { status: None, message: "empty voice catalog".into() });
        }
        Ok(list
            .voices
            .into_iter()
            .map(|v| Voice { voice_id: v.voice_id, display_name: v.name, provider: Self::PROVIDER.into() })
            .collect())
    }

    fn synthesize(&self, text: &str, voice: &Voice, style: StyleTag) -> Result<AudioClip, SpeechError> {
        if text.trim().is_empty() {
            return Err(SpeechError::EmptySpeech);
        }
        let resp = self
            .client
            .post(format!("{}/v1/text-to-speech/{}", self.base_url, voice.voice_id))
            .bearer_auth(&self.api_key)
            .header(reqwest::header::ACCEPT, "audio/wav")
            .json(&serde_json::json!({ "text": text, "style_hint": style.name() }))
            .send()
            .map_err(Self::map_err)?;
        let bytes = Self::check(resp)?.bytes().map_err(Self::map_err)?;
        Ok(decode_wav(&bytes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn voice(id: &str) -> Voice {
        OfflineSynth::catalog().into_iter().find(|v| v.voice_id == id).unwrap()
    }

    #[test]
    fn catalog_ids() {
        let ids: Vec<_> = OfflineSynth::default().list_voices().unwrap().into_iter().map(|v| v.voice_id).collect();
        assert_eq!(ids, ["stub-f1", "stub-f2", "stub-m1", "stub-m2"]);
    }

    #[test]
    fn duration_examples() {
        let synth = OfflineSynth::default();
        let clip = synth.synthesize("Hello world", &voice("stub-f1"), StyleTag::Neutral).unwrap();
        assert_eq!(clip.samples.len(), 17640);
        assert!((clip.duration() - 0.80).abs() < 1e-12);
        let clip = synth.synthesize("Hello, world.", &voice("stub-f1"), StyleTag::Neutral).unwrap();
        assert_eq!(clip.samples.len(), 30870);
    }

    #[test]
    fn empty_speech_rejected() {
        let synth = OfflineSynth::default();
        assert!(matches!(synth.synthesize("  ", &voice("stub-m1"), StyleTag::Sad), Err(SpeechError::EmptySpeech)));
    }

    #[test]
    fn unknown_voice_rejected() {
        let v = Voice { voice_id: "nope".into(), display_name: "x".into(), provider: "offline".into() };
        assert!(matches!(
            OfflineSynth::default().synthesize("hi", &v, StyleTag::Sad),
            Err(SpeechError::UnknownVoice(_))
        ));
    }

    #[test]
    fn pause_counting() {
        assert_eq!(count_pauses("Uh, I'm doing well... thank you."), PauseCounts { words: 6, commas: 2, enders: 2 });
        assert_eq!(count_pauses("Wait, what!?"), PauseCounts { words: 2, commas: 1, enders: 1 });
        assert_eq!(count_pauses("Ah… yes"), PauseCounts { words: 2, commas: 1, enders: 1 });
    }

    #[test]
    fn peak_has_headroom() {
        let clip = OfflineSynth::default().render("Hey! Listen, please... now?", "stub-m2", StyleTag::Angry).unwrap();
        assert!(clip.peak() <= 0.891);
        assert!(clip.peak() > 0.5);
    }

    #[test]
    fn style_changes_pitch_not_length() {
        let synth = OfflineSynth::default();
        let a = synth.render("one two", "stub-f1", StyleTag::Happy).unwrap();
        let b = synth.render("one two", "stub-f1", StyleTag::Sad).unwrap();
        assert_eq!(a.samples.len(), b.samples.len());
        assert_ne!(a.samples, b.samples);
    }

    #[test]
    fn wav_header_is_canonical() {
        let clip = AudioClip::new(vec![0, 1, -1, i16::MAX], 22050);
        let bytes = encode_wav(&clip);
        assert_eq!(bytes.len(), 44 + 8);
        assert_eq!(&bytes[0..4], b"RIFF");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 36 + 8);
        assert_eq!(&bytes[8..16], b"WAVEfmt ");
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 16);
        assert_eq!(u16::from_le_bytes(bytes[20..22].try_into().unwrap()), 1);
        assert_eq!(u16::from_le_bytes(bytes[22..24].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[24..28].try_into().unwrap()), 22050);
        assert_eq!(u32::from_le_bytes(bytes[28..32].try_into().unwrap()), 44100);
        assert_eq!(u16::from_le_bytes(bytes[32..34].try_into().unwrap()), 2);
        assert_eq!(u16::from_le_bytes(bytes[34..36].try_into().unwrap()), 16);
        assert_eq!(&bytes[36..40], b"data");
        assert_eq!(u32::from_le_bytes(bytes[40..44].try_into().unwrap()), 8);
        assert_eq!(decode_wav(&bytes).unwrap(), clip);
    }

    #[test]
    fn truncated_wav_detected() {
        let clip = OfflineSynth::default().render("hello there", "stub-f1", StyleTag::Neutral).unwrap();
        let bytes = encode_wav(&clip);
        let err = decode_wav(&bytes[..bytes.len() - 100]).unwrap_err();
        assert!(matches!(err, WavError::Truncated { .. }), "{err}");
        assert!(decode_wav(b"not a wav").is_err());
    }

    #[test]
    fn batch_isolates_failures() {
        let synth = OfflineSynth::default();
        let reqs: Vec<_> = (0..6)
            .map(|i| SpeechRequest {
                text: if i == 3 { String::new() } else { format!("line number {i}.") },
                voice: voice("stub-f2"),
                style: StyleTag::Neutral,
            })
            .collect();
        let out = synthesize_batch(&reqs, &synth, 4).unwrap();
        assert_eq!(out.len(), 6);
        for (i, r) in out.iter().enumerate() {
            if i == 3 {
                assert!(matches!(r, Err(SpeechError::EmptySpeech)));
            } else {
                assert_eq!(r.as_ref().unwrap().samples.len(), count_pauses(&reqs[i].text).samples(22050));
            }
        }
        assert!(matches!(synthesize_batch(&[], &synth, 4), Err(SpeechError::BatchEmpty)));
    }
}
