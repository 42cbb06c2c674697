//! Chat-model Maker: prompt assembly in the chat-completions wire format,
//! lenient tool-call parsing, and pluggable transports (HTTP, recording,
//! replay).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::action::Action;
use crate::design::Design;
use crate::game::{AgentError, MakerAgent, MakerView, Round};
use crate::message::Message;
use crate::render::{design_png, RenderStyle};

pub const SYSTEM_PROMPT: &str = "You are an expert CAD software user playing a game called mrCAD. In this game, there is a designer and a maker. The two players work together to iteratively create a design over a sequence of turns. You will play the role of the maker in this game, and the user will play the role of the designer. In each turn the designer provides an instruction about how to modify the design on the canvas. The instruction may include language instructions, drawings on the canvas, or both. The drawings appear as red strokes on the canvas. The design appears in black strokes on the canvas. Your goal is to follow the designer's instructions. You have to take actions to edit the current state of the design. Each action is taken by calling a tool that performs the action. Each control point is a pair of floating point numbers between -20 and 20 that represent the coordinates of the point on the canvas.";
pub const NEW_GAME: &str = "New game:";
pub const EDIT_DIRECTIVE: &str =
    "Edit the design based on the designer's instructions using the provided tools. Make sure to follow the instructions carefully.";
pub const RESULT_HEADER: &str = "The resulting design is:";

pub fn round_header(i: usize) -> String {
    format!("Round {i}. ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    /// Full chat-completions URL.
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token. The
    /// value is read per request and never logged.
    pub api_key_env: Option<String>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: Option<u32>,
    pub timeout_secs: u64,
    /// Attempts per request, including the first.
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub max_concurrent: usize,
    /// Minimum spacing between request starts.
    pub min_interval_ms: u64,
    /// Append tool descriptions to the system message instead of sending a
    /// `tools` field.
    pub tools_in_system: bool,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            url: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "maker".into(),
            api_key_env: None,
            temperature: 1.0,
            top_p: 1.0,
            max_tokens: None,
            timeout_secs: 120,
            max_attempts: 4,
            backoff_ms: 500,
            max_concurrent: 4,
            min_interval_ms: 0,
            tools_in_system: false,
        }
    }
}

impl EndpointConfig {
    /// Sampling defaults used for locally served open-weights models.
    pub fn open_weights(url: impl Into<String>, model: impl Into<String>) -> Self {
        EndpointConfig {
            url: url.into(),
            model: model.into(),
            temperature: 0.7,
            top_p: 0.95,
            tools_in_system: true,
            ..EndpointConfig::default()
        }
    }
}

fn point_schema() -> Value {
    json!({"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2})
}

fn curve_properties() -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("type".into(), json!({"type": "string", "enum": ["line", "circle", "arc"]}));
    m.insert(
        "control_points".into(),
        json!({"type": "array", "items": point_schema(), "minItems": 2, "maxItems": 3}),
    );
    m
}

/// Function-tool descriptions for the five editing actions.
pub fn tool_specs() -> Vec<Value> {
    let func = |name: &str, description: &str, props: serde_json::Map<String, Value>| {
        let required: Vec<&String> = props.keys().collect();
        json!({
            "type": "function",
            "function": {
                "name": name,
                "description": description,
                "parameters": {"type": "object", "properties": props, "required": required},
            }
        })
    };
    let mut move_curve = curve_properties();
    move_curve.insert("delta".into(), point_schema());
    let mut move_point = serde_json::Map::new();
    move_point.insert("point".into(), point_schema());
    move_point.insert("new_point".into(), point_schema());
    let mut delete_point = serde_json::Map::new();
    delete_point.insert("point".into(), point_schema());
    vec![
        func(
            "make_curve",
            "Add a curve. Lines take two end points, circles two diameter end points, arcs start, middle and end points.",
            curve_properties(),
        ),
        func("remove_curve", "Remove the curve with exactly these control points.", curve_properties()),
        func("move_curve", "Translate a curve by delta, reshaping curves that share its points.", move_curve),
        func("move_point", "Move a control point, reshaping every curve that uses it.", move_point),
        func("delete_point", "Delete a control point and every curve that uses it.", delete_point),
    ]
}

fn png_data_url(design: &Design, message: Option<&Message>, style: &RenderStyle) -> Result<String, AgentError> {
    let png = design_png(design, message.map(|m| &m.drawing).filter(|d| !d.is_empty()), style)
        .map_err(|e| AgentError::new(format!("render failed: {e}")))?;
    Ok(format!(
        "data:image/png;base64,{}",
        base64::engine::general_purpose::STANDARD.encode(png)
    ))
}

fn instruction_turn(round: usize, current: &Design, message: &Message, style: &RenderStyle) -> Result<Value, AgentError> {
    let mut parts = vec![
        json!({"type": "text", "text": round_header(round)}),
        json!({"type": "image_url", "image_url": {"url": png_data_url(current, Some(message), style)?}}),
    ];
    if message.has_text() {
        parts.push(json!({"type": "text", "text": message.text}));
    }
    parts.push(json!({"type": "text", "text": EDIT_DIRECTIVE}));
    Ok(json!({"role": "user", "content": parts}))
}

fn actions_as_calls(actions: &[Action]) -> String {
    serde_json::to_string(actions).expect("actions serialize")
}

fn history_turns(i: usize, r: &Round, style: &RenderStyle) -> Result<Vec<Value>, AgentError> {
    Ok(vec![
        instruction_turn(i, &r.design_before, &r.message, style)?,
        json!({"role": "assistant", "content": actions_as_calls(&r.actions)}),
        json!({"role": "user", "content": [
            {"type": "text", "text": RESULT_HEADER},
            {"type": "image_url", "image_url": {"url": png_data_url(&r.design_after, None, style)?}},
            {"type": "text", "text": r.design_after.to_json()},
        ]}),
    ])
}

/// The full request body for one Maker turn.
pub fn build_request(cfg: &EndpointConfig, view: &MakerView<'_>, style: &RenderStyle) -> Result<Value, AgentError> {
    let mut system = SYSTEM_PROMPT.to_string();
    if cfg.tools_in_system {
        let _ = write!(
            system,
            "\n\nTools:\n{}",
            serde_json::to_string(&tool_specs()).expect("tool specs serialize")
        );
    }
    let mut messages = vec![
        json!({"role": "system", "content": system}),
        json!({"role": "user", "content": NEW_GAME}),
    ];
    for (i, r) in view.history.iter().enumerate() {
        messages.extend(history_turns(i + 1, r, style)?);
    }
    messages.push(instruction_turn(view.round, view.current, view.message, style)?);
    let mut body = json!({
        "model": cfg.model,
        "messages": messages,
        "temperature": cfg.temperature,
        "top_p": cfg.top_p,
        "seed": view.seed,
    });
    if !cfg.tools_in_system {
        body["tools"] = Value::Array(tool_specs());
    }
    if let Some(m) = cfg.max_tokens {
        body["max_tokens"] = json!(m);
    }
    Ok(body)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToolCallError {
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
    #[error("malformed call to {name}: {reason}")]
    Malformed { name: String, reason: String },
}

const TOOL_NAMES: [&str; 5] = ["make_curve", "remove_curve", "move_curve", "move_point", "delete_point"];

/// Parses one call; `arguments` may be an object or a JSON-encoded string.
pub fn parse_tool_call(name: &str, arguments: &Value) -> Result<Action, ToolCallError> {
    if !TOOL_NAMES.contains(&name) {
        return Err(ToolCallError::UnknownTool(name.to_string()));
    }
    let malformed = |reason: String| ToolCallError::Malformed {
        name: name.to_string(),
        reason,
    };
    let args = match arguments {
        Value::String(s) => serde_json::from_str(s).map_err(|e| malformed(e.to_string()))?,
        Value::Null => Value::Object(Default::default()),
        v => v.clone(),
    };
    serde_json::from_value(json!({"name": name, "arguments": args})).map_err(|e| malformed(e.to_string()))
}

fn call_parts(call: &Value) -> (&str, &Value) {
    let f = call.get("function").unwrap_or(call);
    let name = f.get("name").and_then(Value::as_str).unwrap_or("");
    (name, f.get("arguments").unwrap_or(&Value::Null))
}

/// Parses a list of calls in either `{"name", "arguments"}` or
/// `{"function": {"name", "arguments"}}` form. Bad calls are skipped,
/// logged, and returned alongside the good ones.
pub fn parse_tool_calls(calls: &[Value]) -> (Vec<Action>, Vec<ToolCallError>) {
    let mut actions = Vec::new();
    let mut errors = Vec::new();
    for call in calls {
        let (name, args) = call_parts(call);
        match parse_tool_call(name, args) {
            Ok(a) => actions.push(a),
            Err(e) => {
                log::warn!("skipping tool call: {e}");
                errors.push(e);
            }
        }
    }
    (actions, errors)
}

/// The outermost JSON array embedded in free text, if any.
fn embedded_array(text: &str) -> Option<Vec<Value>> {
    let start = text.find('[')?;
    let end = text.rfind(']')?;
    (end > start)
        .then(|| serde_json::from_str::<Vec<Value>>(&text[start..=end]).ok())
        .flatten()
}

/// Actions from a chat-completions response: structured `tool_calls`, or a
/// JSON list of calls written in the message content.
pub fn parse_response(response: &Value) -> (Vec<Action>, Vec<ToolCallError>) {
    let msg = &response["choices"][0]["message"];
    if let Some(calls) = msg.get("tool_calls").and_then(Value::as_array) {
        if !calls.is_empty() {
            return parse_tool_calls(calls);
        }
    }
    match msg.get("content").and_then(Value::as_str).and_then(embedded_array) {
        Some(calls) => parse_tool_calls(&calls),
        None => (Vec::new(), Vec::new()),
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("request failed: {0}")]
    Network(String),
    #[error("could not decode response: {0}")]
    Decode(String),
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("no recorded response for request {0}")]
    MissingRecording(String),
    #[error("transcript error: {0}")]
    Transcript(String),
}

impl TransportError {
    fn retryable(&self) -> bool {
        match self {
            TransportError::Network(_) => true,
            TransportError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &Value) -> Result<Value, TransportError>;
}

impl<T: ChatTransport + ?Sized> ChatTransport for Arc<T> {
    fn complete(&self, request: &Value) -> Result<Value, TransportError> {
        (**self).complete(request)
    }
}

/// Stable digest of a request body (object keys are serialized sorted).
pub fn request_digest(request: &Value) -> String {
    let digest = Sha256::digest(request.to_string().as_bytes());
    let mut hex = String::with_capacity(32);
    for b in &digest[..16] {
        let _ = write!(hex, "{b:02x}");
    }
    hex
}

struct Gate {
    state: Mutex<(usize, Option<Instant>)>,
    cv: Condvar,
    limit: usize,
    interval: Duration,
}

impl Gate {
    fn acquire(&self) {
        let mut g = self.state.lock().expect("gate lock");
        loop {
            if g.0 < self.limit {
                let wait = g.1.map_or(Duration::ZERO, |last| (last + self.interval).saturating_duration_since(Instant::now()));
                if wait.is_zero() {
                    g.0 += 1;
                    g.1 = Some(Instant::now());
                    return;
                }
                g = self.cv.wait_timeout(g, wait).expect("gate lock").0;
            } else {
                g = self.cv.wait(g).expect("gate lock");
            }
        }
    }

    fn release(&self) {
        self.state.lock().expect("gate lock").0 -= 1;
        self.cv.notify_all();
    }
}

/// Blocking HTTP transport with bounded concurrency, request spacing and
/// retry with exponential backoff.
pub struct HttpTransport {
    cfg: EndpointConfig,
    agent: ureq::Agent,
    gate: Gate,
}

impl std::fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpTransport")
            .field("url", &self.cfg.url)
            .field("model", &self.cfg.model)
            .finish_non_exhaustive()
    }
}

impl HttpTransport {
    pub fn new(cfg: EndpointConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let gate = Gate {
            state: Mutex::new((0, None)),
            cv: Condvar::new(),
            limit: cfg.max_concurrent.max(1),
            interval: Duration::from_millis(cfg.min_interval_ms),
        };
        HttpTransport { cfg, agent, gate }
    }

    fn once(&self, request: &Value) -> Result<Value, TransportError> {
        let mut req = self.agent.post(&self.cfg.url);
        if let Some(var) = &self.cfg.api_key_env {
            let key = std::env::var(var).map_err(|_| TransportError::MissingCredential(var.clone()))?;
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(request)
            .map_err(|e| TransportError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        if !(200..300).contains(&status) {
            let mut body = body;
            body.truncate(512);
            return Err(TransportError::Status { status, body });
        }
        serde_json::from_str(&body).map_err(|e| TransportError::Decode(e.to_string()))
    }
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &Value) -> Result<Value, TransportError> {
        let attempts = self.cfg.max_attempts.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.cfg.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            self.gate.acquire();
            let r = self.once(request);
            self.gate.release();
            match r {
                Ok(v) => return Ok(v),
                Err(e) if e.retryable() => {
                    log::warn!("attempt {}/{attempts} to {} failed: {e}", attempt + 1, self.cfg.url);
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptEntry {
    pub request_digest: String,
    pub response: Value,
}

/// Wraps a transport and records every successful exchange.
pub struct RecordingTransport<T> {
    inner: T,
    log: Mutex<BTreeMap<String, Value>>,
}

impl<T: ChatTransport> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        RecordingTransport {
            inner,
            log: Mutex::new(BTreeMap::new()),
        }
    }

    /// Recorded exchanges sorted by digest.
    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.log
            .lock()
            .expect("transcript lock")
            .iter()
            .map(|(k, v)| TranscriptEntry {
                request_digest: k.clone(),
                response: v.clone(),
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), TransportError> {
        let mut s = String::new();
        for e in self.entries() {
            s.push_str(&serde_json::to_string(&e).expect("entry serializes"));
            s.push('\n');
        }
        std::fs::write(path, s).map_err(|e| TransportError::Transcript(e.to_string()))
    }
}

impl<T: ChatTransport> ChatTransport for RecordingTransport<T> {
    fn complete(&self, request: &Value) -> Result<Value, TransportError> {
        let v = self.inner.complete(request)?;
        self.log
            .lock()
            .expect("transcript lock")
            .insert(request_digest(request), v.clone());
        Ok(v)
    }
}

/// Serves responses from a transcript keyed by request digest; no network.
#[derive(Debug, Clone, Default)]
pub struct ReplayTransport {
    map: BTreeMap<String, Value>,
}

impl ReplayTransport {
    pub fn from_entries(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        ReplayTransport {
            map: entries.into_iter().map(|e| (e.request_digest, e.response)).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, TransportError> {
        let text = std::fs::read_to_string(path).map_err(|e| TransportError::Transcript(e.to_string()))?;
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| TransportError::Transcript(e.to_string())))
            .collect::<Result<Vec<TranscriptEntry>, _>>()?;
        Ok(Self::from_entries(entries))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl ChatTransport for ReplayTransport {
    fn complete(&self, request: &Value) -> Result<Value, TransportError> {
        let d = request_digest(request);
        self.map.get(&d).cloned().ok_or(TransportError::MissingRecording(d))
    }
}

/// A Maker backed by a chat model.
pub struct ChatMaker {
    pub cfg: EndpointConfig,
    pub style: RenderStyle,
    transport: Box<dyn ChatTransport>,
}

impl ChatMaker {
    pub fn new(cfg: EndpointConfig, transport: Box<dyn ChatTransport>) -> Self {
        ChatMaker {
            cfg,
            style: RenderStyle::default(),
            transport,
        }
    }

    pub fn http(cfg: EndpointConfig) -> Self {
        let t = HttpTransport::new(cfg.clone());
        Self::new(cfg, Box::new(t))
    }
}

impl MakerAgent for ChatMaker {
    fn name(&self) -> String {
        format!("chat:{}", self.cfg.model)
    }

    fn propose_actions(&self, view: &MakerView<'_>) -> Result<Vec<Action>, AgentError> {
        let request = build_request(&self.cfg, view, &self.style)?;
        let response = self
            .transport
            .complete(&request)
            .map_err(|e| AgentError::new(e.to_string()))?;
        let (actions, errors) = parse_response(&response);
        if !errors.is_empty() {
            log::info!("{} of {} tool calls skipped", errors.len(), errors.len() + actions.len());
        }
        Ok(actions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Curve, Point};

    #[test]
    fn figure_tool_calls() {
        let calls: Vec<Value> = serde_json::from_str(
            r#"[{"name": "make_curve", "arguments": {"type": "circle", "control_points": [[0.0, -18.0], [0.0, 18.0]]}},
                {"name": "move_point", "arguments": {"point": [0.0, -15.0], "new_point": [0.0, -16.0]}},
                {"name": "teleport"}]"#,
        )
        .unwrap();
        let (actions, errors) = parse_tool_calls(&calls);
        assert_eq!(
            actions,
            vec![
                Action::MakeCurve(Curve::circle(Point::new(0.0, -18.0), Point::new(0.0, 18.0)).unwrap()),
                Action::MovePoint {
                    point: Point::new(0.0, -15.0),
                    new_point: Point::new(0.0, -16.0)
                },
            ]
        );
        assert_eq!(errors, vec![ToolCallError::UnknownTool("teleport".into())]);
    }

    #[test]
    fn openai_shape_with_string_arguments() {
        let resp = json!({"choices": [{"message": {"tool_calls": [
            {"id": "1", "type": "function", "function": {"name": "delete_point", "arguments": "{\"point\": [1, 2]}"}},
            {"id": "2", "type": "function", "function": {"name": "make_curve", "arguments": "{\"type\": \"line\"}"}}
        ]}}]});
        let (actions, errors) = parse_response(&resp);
        assert_eq!(actions, vec![Action::DeletePoint { point: Point::new(1.0, 2.0) }]);
        assert!(matches!(errors[0], ToolCallError::Malformed { .. }));
        let text = json!({"choices": [{"message": {"content": "Sure: [{\"name\": \"delete_point\", \"arguments\": {\"point\": [1, 2]}}]"}}]});
        assert_eq!(parse_response(&text).0.len(), 1);
        assert_eq!(parse_response(&json!({})).0, vec![]);
    }

    #[test]
    fn request_structure() {
        let msg = Message::text("big round circle");
        let history = vec![];
        let view = MakerView {
            round: 1,
            message: &msg,
            current: &Design::empty(),
            history: &history,
            seed: 3,
            privileged_target: None,
        };
        let req = build_request(&EndpointConfig::default(), &view, &RenderStyle::default()).unwrap();
        let m = req["messages"].as_array().unwrap();
        assert_eq!(m[0]["content"], SYSTEM_PROMPT);
        assert_eq!(m[1]["content"], NEW_GAME);
        let parts = m[2]["content"].as_array().unwrap();
        assert_eq!(parts[0]["text"], "Round 1. ");
        assert!(parts[1]["image_url"]["url"].as_str().unwrap().starts_with("data:image/png;base64,"));
        assert_eq!(parts[2]["text"], "big round circle");
        assert_eq!(parts[3]["text"], EDIT_DIRECTIVE);
        assert_eq!(req["tools"].as_array().unwrap().len(), 5);
        assert!(!req.to_string().contains("target"));
        assert_eq!(request_digest(&req), request_digest(&req.clone()));
    }

    #[test]
    fn replay_misses_are_errors() {
        let t = ReplayTransport::default();
        assert!(matches!(t.complete(&json!({"a": 1})), Err(TransportError::MissingRecording(_))));
    }
}
