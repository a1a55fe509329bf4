use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{describe, forged, record_rng, system_prompt, user_prompt, validate_against, Backend, ForgeBackend,
    ForgeError, ForgeRecord, ForgeSettings, SourceRecord, VARIETY_INSTRUCTIONS};

/// Wire request: `{system, user, temperature}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RephraseRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RephraseResponse {
    revised_prompt: String,
}

/// Transport to a rephrasing service; returns the raw response body.
pub trait RephrasingClient: Send + Sync {
    fn send(&self, request: &RephraseRequest) -> Result<String, ForgeError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureRange {
    pub min: f64,
    pub max: f64,
}

impl TemperatureRange {
    pub fn check(&self, t: f64) -> Result<(), ForgeError> {
        if t.is_finite() && (self.min..=self.max).contains(&t) {
            Ok(())
        } else {
            Err(ForgeError::Temperature {
                value: t,
                min: self.min,
                max: self.max,
            })
        }
    }
}

fn parse_response(body: &str) -> Result<String, ForgeError> {
    serde_json::from_str::<RephraseResponse>(body.trim())
        .map(|r| r.revised_prompt)
        .map_err(|e| ForgeError::Parse(format!("{e} in {body:?}")))
}

/// Sends the task's system/user prompt pair, validates the revision, and
/// retries up to `max_retries` more times before rejecting.
pub fn forge_external(
    source: &SourceRecord,
    client: &dyn RephrasingClient,
    temperature: f64,
    range: TemperatureRange,
    instruction: &str,
    max_retries: usize,
) -> Result<ForgeRecord, ForgeError> {
    range.check(temperature)?;
    let request = RephraseRequest {
        system: system_prompt(source.task_type, instruction),
        user: user_prompt(source.task_type, &source.prompt),
        temperature,
    };
    let mut reason = String::new();
    for _ in 0..=max_retries {
        let revised = parse_response(&client.send(&request)?)?;
        let rec = forged(source, revised, Backend::External, temperature);
        let v = validate_against(&rec, source);
        if v.is_empty() {
            return Ok(rec);
        }
        reason = describe(&v);
    }
    Err(ForgeError::Rejected {
        id: source.id.clone(),
        reason: format!("{reason} after {} attempts", max_retries + 1),
    })
}

pub struct ExternalBackend {
    client: Box<dyn RephrasingClient>,
    range: TemperatureRange,
    max_retries: usize,
    instructions: Vec<String>,
}

impl ExternalBackend {
    pub fn new(client: Box<dyn RephrasingClient>, settings: &ForgeSettings) -> Result<Self, ForgeError> {
        let range = TemperatureRange {
            min: settings.temperature_min,
            max: settings.temperature_max,
        };
        if !(range.min <= range.max) || range.min < 0.0 {
            return Err(ForgeError::Config(format!("bad temperature range {range:?}")));
        }
        let mut instructions = settings.bank.variety_instructions.clone();
        if instructions.is_empty() {
            instructions = VARIETY_INSTRUCTIONS.iter().map(|s| s.to_string()).collect();
        }
        Ok(Self {
            client,
            range,
            max_retries: settings.max_retries,
            instructions,
        })
    }
}

impl ForgeBackend for ExternalBackend {
    fn kind(&self) -> Backend {
        Backend::External
    }

    /// Temperature and variety instruction are drawn per record from a
    /// stream seeded by `seed` and the record id.
    fn forge(&self, source: &SourceRecord, seed: u64) -> Result<ForgeRecord, ForgeError> {
        let mut rng = record_rng(seed, &source.id);
        let t = rng.random_range(self.range.min..=self.range.max);
        let instruction = self.instructions.choose(&mut rng).expect("non-empty");
        forge_external(source, self.client.as_ref(), t, self.range, instruction, self.max_retries)
    }
}

struct Gate {
    used: Mutex<usize>,
    freed: Condvar,
    max: usize,
}

impl Gate {
    fn enter(&self) -> GateGuard<'_> {
        let mut used = self.used.lock().expect("gate lock");
        while *used >= self.max {
            used = self.freed.wait(used).expect("gate lock");
        }
        *used += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.used.lock().expect("gate lock") -= 1;
        self.0.freed.notify_one();
    }
}

/// JSON-over-HTTP client with a bound on concurrent requests.
pub struct HttpRephraser {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    gate: Gate,
}

impl HttpRephraser {
    pub fn new(endpoint: String, api_key: Option<String>, timeout_s: u64, max_in_flight: usize) -> Result<Self, ForgeError> {
        if max_in_flight == 0 {
            return Err(ForgeError::Config("max_in_flight must be at least 1".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(timeout_s.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            endpoint,
            api_key,
            agent,
            gate: Gate {
                used: Mutex::new(0),
                freed: Condvar::new(),
                max: max_in_flight,
            },
        })
    }
}

impl RephrasingClient for HttpRephraser {
    fn send(&self, request: &RephraseRequest) -> Result<String, ForgeError> {
        let _slot = self.gate.enter();
        let body = serde_json::to_string(request).expect("request serializes");
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send(body.as_str())
            .map_err(|e| ForgeError::Client(format!("{}: {e}", self.endpoint)))?;
        let status = resp.status();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ForgeError::Client(format!("{}: {e}", self.endpoint)))?;
        if !status.is_success() {
            return Err(ForgeError::Client(format!("{}: HTTP {status}", self.endpoint)));
        }
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::tests::source;
    use crate::forge::TaskType;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};

    const RANGE: TemperatureRange = TemperatureRange { min: 0.7, max: 1.1 };

    struct Scripted {
        replies: Vec<&'static str>,
        calls: AtomicUsize,
    }

    impl RephrasingClient for Scripted {
        fn send(&self, _: &RephraseRequest) -> Result<String, ForgeError> {
            let i = self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.replies[i.min(self.replies.len() - 1)].to_string())
        }
    }

    fn scripted(replies: Vec<&'static str>) -> Scripted {
        Scripted {
            replies,
            calls: AtomicUsize::new(0),
        }
    }

    #[test]
    fn valid_revision_is_accepted() {
        let c = scripted(vec![r#"{"revised_prompt": "Consider [AUDIO]. What are its corresponding labels?"}"#]);
        let s = source("e", TaskType::LabelClassification, "Analyze audio events in clip given.");
        let r = forge_external(&s, &c, 0.9, RANGE, VARIETY_INSTRUCTIONS[2], 3).unwrap();
        assert_eq!(r.backend, Backend::External);
        assert_eq!(r.temperature_used, 0.9);
        assert_eq!(r.answer, s.answer);
    }

    #[test]
    fn double_placeholder_retries_then_rejects() {
        let c = scripted(vec![r#"{"revised_prompt": "[AUDIO] and [AUDIO]"}"#]);
        let s = source("e", TaskType::LabelClassification, "x");
        let err = forge_external(&s, &c, 0.7, RANGE, "x", 3).unwrap_err();
        assert!(matches!(err, ForgeError::Rejected { .. }));
        assert_eq!(c.calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn retry_can_recover() {
        let c = scripted(vec![r#"{"revised_prompt": "the clip [AUDIO]"}"#, r#"{"revised_prompt": "Hear [AUDIO]."}"#]);
        let s = source("e", TaskType::OpenEnded, "x");
        assert!(forge_external(&s, &c, 1.1, RANGE, "x", 3).is_ok());
        assert_eq!(c.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn temperature_bounds() {
        let c = scripted(vec!["{}"]);
        let s = source("e", TaskType::OpenEnded, "x");
        let err = forge_external(&s, &c, 1.2, RANGE, "x", 3).unwrap_err();
        assert!(matches!(err, ForgeError::Temperature { value, .. } if value == 1.2));
        assert_eq!(c.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn malformed_response() {
        for body in ["not json", r#"{"revised_prompt": "[AUDIO]", "extra": 1}"#, r#"{"prompt": "[AUDIO]"}"#] {
            let c = scripted(vec![body]);
            let s = source("e", TaskType::OpenEnded, "x");
            let err = forge_external(&s, &c, 0.8, RANGE, "x", 3).unwrap_err();
            assert!(matches!(err, ForgeError::Parse(_)), "{body}: {err}");
        }
    }

    #[test]
    fn backend_draws_temperature_in_range_deterministically() {
        let mk = || {
            ExternalBackend::new(
                Box::new(scripted(vec![r#"{"revised_prompt": "Consider [AUDIO]."}"#])),
                &ForgeSettings::default(),
            )
            .unwrap()
        };
        let s = source("t", TaskType::LabelClassification, "x");
        let a = mk().forge(&s, 5).unwrap();
        let b = mk().forge(&s, 5).unwrap();
        assert_eq!(a.temperature_used, b.temperature_used);
        assert!((0.7..=1.1).contains(&a.temperature_used));
    }

    fn read_request(stream: &mut std::net::TcpStream) -> (Vec<String>, String) {
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut headers = Vec::new();
        let mut len = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let line = line.trim_end().to_string();
            if line.is_empty() {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                len = v.trim().parse().unwrap();
            }
            headers.push(line);
        }
        let mut body = vec![0; len];
        reader.read_exact(&mut body).unwrap();
        (headers, String::from_utf8(body).unwrap())
    }

    #[test]
    fn http_client_against_local_mock() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let (headers, body) = read_request(&mut stream);
            let req: RephraseRequest = serde_json::from_str(&body).unwrap();
            let reply = r#"{"revised_prompt": "What is heard in [AUDIO]?"}"#;
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
            (headers, req)
        });
        let client = HttpRephraser::new(format!("http://{addr}/rephrase"), Some("k123".into()), 5, 2).unwrap();
        let s = source("h", TaskType::OpenEnded, "What is heard?");
        let rec = forge_external(&s, &client, 0.75, RANGE, VARIETY_INSTRUCTIONS[0], 0).unwrap();
        assert_eq!(rec.interleaved_prompt, "What is heard in [AUDIO]?");
        let (headers, req) = server.join().unwrap();
        assert!(headers.iter().any(|h| h == "authorization: Bearer k123" || h == "Authorization: Bearer k123"));
        assert_eq!(req.temperature, 0.75);
        assert!(req.user.contains("Old Prompt: \"What is heard?\""));
    }

    #[test]
    fn http_error_status_is_client_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            read_request(&mut stream);
            stream
                .write_all(b"HTTP/1.1 503 Service Unavailable\r\nContent-Length: 0\r\nConnection: close\r\n\r\n")
                .unwrap();
        });
        let client = HttpRephraser::new(format!("http://{addr}/"), None, 5, 1).unwrap();
        let req = RephraseRequest {
            system: "s".into(),
            user: "u".into(),
            temperature: 1.0,
        };
        assert!(matches!(client.send(&req), Err(ForgeError::Client(_))));
        server.join().unwrap();
    }
}
