//! Speech output: normalization, the `/speak` wire format, and a
//! freshest-wins dispatcher that never overlaps utterances.

mod dispatch;
mod normalize;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dispatch::{DispatchStats, TtsDispatcher};
pub use normalize::{spell_integer, MAX_SPELLED_INTEGER};

/// Number of selectable voices; ids run `0..SPEAKER_COUNT`.
pub const SPEAKER_COUNT: u32 = 34;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TtsError {
    #[error("text is empty")]
    EmptyText,
    #[error("speaker id {0} outside 0..=33")]
    SpeakerOutOfRange(u32),
    #[error("text contains digits; normalize it first")]
    TextNotNormalized,
    #[error("invalid prosody: {0}")]
    InvalidProsody(String),
    #[error("tts endpoint unreachable: {0}")]
    TtsUnreachable(String),
    #[error("malformed tts acknowledgment: {0}")]
    MalformedAck(String),
}

/// Per-utterance scalar delivery controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prosody {
    /// Semitones, `[-12, 12]`.
    #[serde(rename = "pitch")]
    pub pitch_shift_semitones: f64,
    /// Speaking-rate multiplier, `(0.5, 2.0]`.
    #[serde(rename = "rate")]
    pub rate_factor: f64,
    /// Loudness multiplier, `(0, 2.0]`.
    #[serde(rename = "amplitude")]
    pub amplitude_gain: f64,
}

impl Default for Prosody {
    fn default() -> Self {
        Self {
            pitch_shift_semitones: 0.0,
            rate_factor: 1.0,
            amplitude_gain: 1.0,
        }
    }
}

impl Prosody {
    pub fn validate(&self) -> Result<(), TtsError> {
        let p = self.pitch_shift_semitones;
        if !(-12.0..=12.0).contains(&p) {
            return Err(TtsError::InvalidProsody(format!("pitch {p} outside [-12, 12]")));
        }
        let r = self.rate_factor;
        if !(r > 0.5 && r <= 2.0) {
            return Err(TtsError::InvalidProsody(format!("rate {r} outside (0.5, 2.0]")));
        }
        let a = self.amplitude_gain;
        if !(a > 0.0 && a <= 2.0) {
            return Err(TtsError::InvalidProsody(format!("amplitude {a} outside (0, 2.0]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
    pub speaker_id: u32,
    pub prosody: Prosody,
    pub created_at_ms: u64,
}

impl Utterance {
    pub fn new(text: String, speaker_id: u32, prosody: Prosody, created_at_ms: u64) -> Result<Self, TtsError> {
        check_request(&text, speaker_id, &prosody)?;
        Ok(Self {
            text,
            speaker_id,
            prosody,
            created_at_ms,
        })
    }
}

pub fn normalize_text(raw: &str) -> Result<String, TtsError> {
    if raw.trim().is_empty() {
        return Err(TtsError::EmptyText);
    }
    Ok(normalize::normalize(raw))
}

fn check_request(text: &str, speaker_id: u32, prosody: &Prosody) -> Result<(), TtsError> {
    if speaker_id >= SPEAKER_COUNT {
        return Err(TtsError::SpeakerOutOfRange(speaker_id));
    }
    prosody.validate()?;
    if text.trim().is_empty() {
        return Err(TtsError::EmptyText);
    }
    if text.chars().any(|c| c.is_ascii_digit()) {
        return Err(TtsError::TextNotNormalized);
    }
    Ok(())
}

#[derive(Serialize)]
struct SpeakRequest<'a> {
    text: &'a str,
    speaker_id: u32,
    prosody: Prosody,
}

/// Canonical `/speak` body. Key order is fixed, so equal inputs give equal bytes.
pub fn build_request(text: &str, speaker_id: u32, prosody: &Prosody) -> Result<String, TtsError> {
    check_request(text, speaker_id, prosody)?;
    // -0.0 and 0.0 are the same control; keep one spelling on the wire
    let canon = |v: f64| if v == 0.0 { 0.0 } else { v };
    let body = SpeakRequest {
        text,
        speaker_id,
        prosody: Prosody {
            pitch_shift_semitones: canon(prosody.pitch_shift_semitones),
            rate_factor: canon(prosody.rate_factor),
            amplitude_gain: canon(prosody.amplitude_gain),
        },
    };
    let mut out = Vec::with_capacity(128);
    let mut ser = serde_json::Serializer::with_formatter(&mut out, WireFormatter);
    body.serialize(&mut ser).expect("request serializes");
    Ok(String::from_utf8(out).expect("json is utf-8"))
}

/// Compact JSON with a single space after `:` and `,`, the layout of the
/// documented `/speak` body.
struct WireFormatter;

impl serde_json::ser::Formatter for WireFormatter {
    fn begin_object_key<W: ?Sized + std::io::Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        if first {
            Ok(())
        } else {
            w.write_all(b", ")
        }
    }

    fn begin_object_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        w.write_all(b": ")
    }

    fn begin_array_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        if first {
            Ok(())
        } else {
            w.write_all(b", ")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeakAck {
    pub duration_ms: u64,
}

pub fn parse_ack(status: u16, body: &str) -> Result<SpeakAck, TtsError> {
    if status != 200 {
        return Err(TtsError::MalformedAck(format!("status {status}")));
    }
    serde_json::from_str(body).map_err(|e| TtsError::MalformedAck(e.to_string()))
}

/// Something that can deliver one `/speak` body and return its ack.
pub trait TtsTransport: Send + Sync {
    fn send(&self, body: &str) -> Result<SpeakAck, TtsError>;
}

#[derive(Debug, Clone)]
pub struct HttpTtsTransport {
    url: String,
    timeout: Duration,
}

impl HttpTtsTransport {
    /// `endpoint` is the service base URL; `/speak` is appended if missing.
    pub fn new(endpoint: &str) -> Self {
        let base = endpoint.trim_end_matches('/');
        let url = if base.ends_with("/speak") {
            base.to_string()
        } else {
            format!("{base}/speak")
        };
        Self {
            url,
            timeout: Duration::from_secs(10),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl TtsTransport for HttpTtsTransport {
    fn send(&self, body: &str) -> Result<SpeakAck, TtsError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| TtsError::TtsUnreachable(e.to_string()))?;
        let resp = client
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_string())
            .send()
            .map_err(|e| TtsError::TtsUnreachable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| TtsError::MalformedAck(e.to_string()))?;
        parse_ack(status, &text)
    }
}

/// Sends one utterance synchronously.
pub fn send_utterance(transport: &dyn TtsTransport, utt: &Utterance) -> Result<SpeakAck, TtsError> {
    let body = build_request(&utt.text, utt.speaker_id, &utt.prosody)?;
    transport.send(&body)
}
