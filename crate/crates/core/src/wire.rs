//! Versioned JSON wire protocol between the session server and a UI client.
//!
//! Every message is an envelope `{"type", "seq", "payload"}`. Client types:
//! Hello, CaseLoad, PoseUpdate, GripDown, GripUp, Advance. Server types:
//! Hello, Frame, Cue, Result, Error. `seq` is strictly increasing per
//! direction. The server side is a pure function of the client message
//! stream, so a recorded log replays to byte-identical output.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::cases::CaseSet;
use crate::explain::{Anatomy, ExplainConfig};
use crate::pose::ProbePose;
use crate::session::{
    step, EvalConfig, Evaluation, InputEvent, InputKind, Mode, OutputFrame, SessionCase, SessionContext, SessionState,
};
use crate::slicer::SliceGeometry;
use crate::volume::LabeledVolume;

pub const PROTOCOL_VERSION: u32 = 1;
pub const SUPPORTED_VERSIONS: &[u32] = &[PROTOCOL_VERSION];
/// Pose-driven frames are dropped when closer than this to the last frame.
pub const MAX_FRAME_RATE_HZ: u64 = 60;
pub const LOG_SCHEMA: &str = "probenav.session-log/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    #[serde(rename = "type")]
    pub kind: String,
    pub seq: u64,
    #[serde(default)]
    pub payload: Value,
}

impl WireMessage {
    pub fn new(kind: &str, seq: u64, payload: impl Serialize) -> Self {
        WireMessage {
            kind: kind.to_string(),
            seq,
            payload: serde_json::to_value(payload).expect("wire payloads serialize"),
        }
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("wire messages serialize")
    }

    pub fn parse<T: for<'de> Deserialize<'de>>(&self) -> Result<T, serde_json::Error> {
        T::deserialize(&self.payload)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloRequest {
    /// Protocol versions the client speaks.
    pub versions: Vec<u32>,
    #[serde(default)]
    pub client: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloReply {
    pub version: u32,
    pub server: String,
    pub cases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseLoad {
    pub case_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseUpdate {
    pub pose: ProbePose,
    pub t_ms: u64,
}

/// Payload of GripDown, GripUp and Advance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timed {
    pub t_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultStatus {
    Correct,
    Incorrect,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultPayload {
    pub status: ResultStatus,
    /// Subgoal the submission was evaluated against.
    pub subgoal_index: usize,
    pub evaluation: Evaluation,
    pub attempts: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    UnknownType,
    UnexpectedType,
    BadPayload,
    Sequence,
    Handshake,
    UnsupportedVersion,
    UnknownCase,
    NoCase,
    Protocol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: ErrorCode,
    pub message: String,
    /// The server closes the connection after a fatal error.
    pub fatal: bool,
    #[serde(default)]
    pub in_reply_to: Option<u64>,
}

/// Everything a session reads; shared by all connections.
pub struct ServerContext {
    pub volume: LabeledVolume,
    pub geometry: SliceGeometry,
    pub anatomy: Anatomy,
    pub explain: ExplainConfig,
    pub eval: EvalConfig,
    pub cases: BTreeMap<String, Arc<SessionCase>>,
}

impl ServerContext {
    pub fn new(volume: LabeledVolume, geometry: SliceGeometry, cases: BTreeMap<String, Arc<SessionCase>>) -> Self {
        ServerContext {
            anatomy: Anatomy::from_volume(&volume),
            volume,
            geometry,
            explain: ExplainConfig::default(),
            eval: EvalConfig::default(),
            cases,
        }
    }

    /// Uses each case's subgoal plan as the sequence of subgoals.
    pub fn from_case_set(volume: LabeledVolume, set: &CaseSet) -> Self {
        let cases = set
            .cases
            .iter()
            .map(|c| {
                let case = SessionCase {
                    start: c.start_pose,
                    plan: c.plan.clone(),
                };
                (c.id.clone(), Arc::new(case))
            })
            .collect();
        Self::new(volume, set.geometry, cases)
    }

    pub fn session_context(&self) -> SessionContext<'_> {
        SessionContext {
            volume: &self.volume,
            geometry: self.geometry,
            anatomy: &self.anatomy,
            explain: self.explain,
            eval: self.eval,
        }
    }
}

/// Server side of one connection.
pub struct ProtocolSession<'a> {
    ctx: &'a ServerContext,
    version: Option<u32>,
    state: Option<SessionState>,
    out_seq: u64,
    last_in_seq: Option<u64>,
    last_frame_ms: Option<u64>,
    closed: bool,
}

impl<'a> ProtocolSession<'a> {
    pub fn new(ctx: &'a ServerContext) -> Self {
        ProtocolSession {
            ctx,
            version: None,
            state: None,
            out_seq: 0,
            last_in_seq: None,
            last_frame_ms: None,
            closed: false,
        }
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn state(&self) -> Option<&SessionState> {
        self.state.as_ref()
    }

    fn emit(&mut self, out: &mut Vec<WireMessage>, kind: &str, payload: impl Serialize) {
        self.out_seq += 1;
        out.push(WireMessage::new(kind, self.out_seq, payload));
    }

    fn error(&mut self, out: &mut Vec<WireMessage>, code: ErrorCode, message: String, fatal: bool, seq: Option<u64>) {
        if fatal {
            self.closed = true;
        }
        self.emit(
            out,
            "Error",
            ErrorPayload {
                code,
                message,
                fatal,
                in_reply_to: seq,
            },
        );
    }

    /// Handles one raw client text message and returns the replies in order.
    pub fn handle_text(&mut self, text: &str) -> Vec<WireMessage> {
        let mut out = Vec::new();
        if self.closed {
            return out;
        }
        let msg: WireMessage = match serde_json::from_str(text) {
            Ok(m) => m,
            Err(e) => {
                self.error(&mut out, ErrorCode::Malformed, format!("not a wire envelope: {e}"), false, None);
                return out;
            }
        };
        let seq = Some(msg.seq);
        if self.last_in_seq.is_some_and(|last| msg.seq <= last) {
            let last = self.last_in_seq.unwrap_or_default();
            self.error(&mut out, ErrorCode::Sequence, format!("seq {} after {last}", msg.seq), false, seq);
            return out;
        }
        self.last_in_seq = Some(msg.seq);
        match msg.kind.as_str() {
            "Hello" => self.on_hello(&msg, &mut out),
            "CaseLoad" | "PoseUpdate" | "GripDown" | "GripUp" | "Advance" if self.version.is_none() => {
                self.error(&mut out, ErrorCode::Handshake, "Hello must come first".into(), false, seq)
            }
            "CaseLoad" => self.on_case_load(&msg, &mut out),
            "PoseUpdate" | "GripDown" | "GripUp" | "Advance" => self.on_input(&msg, &mut out),
            "Frame" | "Cue" | "Result" | "Error" => {
                self.error(&mut out, ErrorCode::UnexpectedType, format!("{} is server-only", msg.kind), false, seq)
            }
            other => self.error(&mut out, ErrorCode::UnknownType, format!("unknown message type {other:?}"), false, seq),
        }
        out
    }

    fn on_hello(&mut self, msg: &WireMessage, out: &mut Vec<WireMessage>) {
        let seq = Some(msg.seq);
        if self.version.is_some() {
            self.error(out, ErrorCode::Handshake, "Hello already negotiated".into(), false, seq);
            return;
        }
        let hello: HelloRequest = match msg.parse() {
            Ok(h) => h,
            Err(e) => return self.error(out, ErrorCode::BadPayload, format!("Hello: {e}"), true, seq),
        };
        let Some(v) = hello.versions.iter().copied().filter(|v| SUPPORTED_VERSIONS.contains(v)).max() else {
            let message = format!("client versions {:?}, server supports {SUPPORTED_VERSIONS:?}", hello.versions);
            return self.error(out, ErrorCode::UnsupportedVersion, message, true, seq);
        };
        self.version = Some(v);
        let reply = HelloReply {
            version: v,
            server: concat!("probenav/", env!("CARGO_PKG_VERSION")).to_string(),
            cases: self.ctx.cases.keys().cloned().collect(),
        };
        self.emit(out, "Hello", reply);
    }

    fn on_case_load(&mut self, msg: &WireMessage, out: &mut Vec<WireMessage>) {
        let seq = Some(msg.seq);
        let load: CaseLoad = match msg.parse() {
            Ok(l) => l,
            Err(e) => return self.error(out, ErrorCode::BadPayload, format!("CaseLoad: {e}"), false, seq),
        };
        let Some(case) = self.ctx.cases.get(&load.case_id) else {
            return self.error(out, ErrorCode::UnknownCase, format!("no case {:?}", load.case_id), false, seq);
        };
        let state = SessionState::new(case.clone());
        let frame = crate::session::render_frame(&self.ctx.session_context(), &state);
        self.state = Some(state);
        self.last_frame_ms = None;
        self.emit(out, "Frame", frame);
    }

    fn on_input(&mut self, msg: &WireMessage, out: &mut Vec<WireMessage>) {
        let seq = Some(msg.seq);
        let parsed = match msg.kind.as_str() {
            "PoseUpdate" => msg
                .parse::<PoseUpdate>()
                .map(|p| InputEvent::new(InputKind::PoseUpdate { pose: p.pose }, p.t_ms)),
            other => msg.parse::<Timed>().map(|t| {
                let kind = match other {
                    "GripDown" => InputKind::GripDown,
                    "GripUp" => InputKind::GripUp,
                    _ => InputKind::Advance,
                };
                InputEvent::new(kind, t.t_ms)
            }),
        };
        let ev = match parsed {
            Ok(ev) => ev,
            Err(e) => return self.error(out, ErrorCode::BadPayload, format!("{}: {e}", msg.kind), false, seq),
        };
        let Some(state) = self.state.as_ref() else {
            return self.error(out, ErrorCode::NoCase, "load a case first".into(), false, seq);
        };
        let (next, frames) = match step(&self.ctx.session_context(), state, &ev) {
            Ok(r) => r,
            Err(v) => return self.error(out, ErrorCode::Protocol, v.to_string(), false, seq),
        };
        let evaluated_index = state.subgoal_index;
        let attempts = next.attempts.clone();
        let complete = next.mode == Mode::Complete;
        self.state = Some(next);
        for frame in frames {
            self.send_frame(out, frame, &ev, evaluated_index, &attempts, complete);
        }
    }

    fn send_frame(
        &mut self,
        out: &mut Vec<WireMessage>,
        frame: OutputFrame,
        ev: &InputEvent,
        evaluated_index: usize,
        attempts: &[u32],
        complete: bool,
    ) {
        let pose_driven = matches!(ev.kind, InputKind::PoseUpdate { .. });
        if pose_driven {
            // Integer form of `dt < 1000 / MAX_FRAME_RATE_HZ`.
            if let Some(last) = self.last_frame_ms {
                if ev.t_ms.saturating_sub(last) * MAX_FRAME_RATE_HZ < 1000 {
                    return;
                }
            }
        }
        self.last_frame_ms = Some(ev.t_ms);
        let cue = frame.cue.clone();
        let evaluation = frame.evaluation;
        self.emit(out, "Frame", frame);
        if let Some(cue) = cue {
            self.emit(out, "Cue", cue);
        }
        if let Some(evaluation) = evaluation {
            let status = match (evaluation.correct, complete) {
                (false, _) => ResultStatus::Incorrect,
                (true, false) => ResultStatus::Correct,
                (true, true) => ResultStatus::Complete,
            };
            let payload = ResultPayload {
                status,
                subgoal_index: evaluated_index,
                evaluation,
                attempts: attempts.to_vec(),
            };
            self.emit(out, "Result", payload);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Client,
    Server,
}

/// One line of a session log: the raw text that crossed the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub dir: Direction,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct LogHeader {
    schema: String,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("first line must be the {LOG_SCHEMA} header")]
    Header,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionLog {
    pub records: Vec<LogRecord>,
}

impl SessionLog {
    pub fn push(&mut self, dir: Direction, text: impl Into<String>) {
        self.records.push(LogRecord { dir, text: text.into() });
    }

    pub fn to_jsonl(&self) -> String {
        let header = LogHeader {
            schema: LOG_SCHEMA.to_string(),
        };
        let mut s = serde_json::to_string(&header).expect("log header serializes");
        s.push('\n');
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("log records serialize"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LogError> {
        let mut records = Vec::new();
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next().map(|(_, l)| serde_json::from_str::<LogHeader>(l)) {
            Some(Ok(h)) if h.schema == LOG_SCHEMA => {}
            _ => return Err(LogError::Header),
        }
        for (i, line) in lines {
            let r = serde_json::from_str(line).map_err(|source| LogError::Parse { line: i + 1, source })?;
            records.push(r);
        }
        Ok(SessionLog { records })
    }

    pub fn client_texts(&self) -> impl Iterator<Item = &str> {
        self.records.iter().filter(|r| r.dir == Direction::Client).map(|r| r.text.as_str())
    }

    pub fn server_texts(&self) -> impl Iterator<Item = &str> {
        self.records.iter().filter(|r| r.dir == Direction::Server).map(|r| r.text.as_str())
    }
}

/// Feeds `client` through a fresh session, logging both directions.
pub fn run_script<'s>(ctx: &ServerContext, client: impl IntoIterator<Item = &'s str>) -> SessionLog {
    let mut session = ProtocolSession::new(ctx);
    let mut log = SessionLog::default();
    for text in client {
        if session.is_closed() {
            break;
        }
        log.push(Direction::Client, text);
        for m in session.handle_text(text) {
            log.push(Direction::Server, m.to_text());
        }
    }
    log
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayMismatch {
    #[error("server message {index} differs")]
    Differs { index: usize },
    #[error("replay produced {replayed} server messages, log has {recorded}")]
    Count { recorded: usize, replayed: usize },
}

/// Replays the client side of `log` and checks the server side byte for byte.
pub fn verify_replay(ctx: &ServerContext, log: &SessionLog) -> Result<(), ReplayMismatch> {
    let replayed = run_script(ctx, log.client_texts());
    let (a, b): (Vec<&str>, Vec<&str>) = (log.server_texts().collect(), replayed.server_texts().collect());
    if let Some(index) = a.iter().zip(&b).position(|(x, y)| x != y) {
        return Err(ReplayMismatch::Differs { index });
    }
    if a.len() != b.len() {
        return Err(ReplayMismatch::Count {
            recorded: a.len(),
            replayed: b.len(),
        });
    }
    Ok(())
}

/// Builds client texts with consecutive sequence numbers.
#[derive(Debug, Default)]
pub struct ClientScript {
    seq: u64,
    pub texts: Vec<String>,
}

impl ClientScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn send(&mut self, kind: &str, payload: impl Serialize) -> &mut Self {
        self.seq += 1;
        self.texts.push(WireMessage::new(kind, self.seq, payload).to_text());
        self
    }

    pub fn hello(&mut self) -> &mut Self {
        self.send(
            "Hello",
            HelloRequest {
                versions: vec![PROTOCOL_VERSION],
                client: None,
            },
        )
    }

    pub fn load(&mut self, case_id: &str) -> &mut Self {
        self.send("CaseLoad", CaseLoad { case_id: case_id.into() })
    }

    pub fn pose(&mut self, pose: ProbePose, t_ms: u64) -> &mut Self {
        self.send("PoseUpdate", PoseUpdate { pose, t_ms })
    }

    pub fn timed(&mut self, kind: &str, t_ms: u64) -> &mut Self {
        self.send(kind, Timed { t_ms })
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.texts.iter().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{Movement, PlanStep, SubgoalPlan};
    use crate::pose::MovementType;
    use crate::slicer::slice;
    use crate::structure::StructureId;

    fn toy() -> ServerContext {
        let n = 32;
        let mut labels = vec![0u8; n * n * n];
        for z in 8..24 {
            for y in 8..24 {
                for x in 4..16 {
                    labels[(z * n + y) * n + x] = StructureId::LV.id();
                }
                for x in 16..28 {
                    labels[(z * n + y) * n + x] = StructureId::RV.id();
                }
            }
        }
        let vol = LabeledVolume::new([n, n, n], labels, "toy").unwrap();
        let geom = SliceGeometry::default();
        let start = ProbePose::from_euler_deg([0.5, 0.5, 0.0], [0.0, 0.0, 0.0]);
        let goal = start.apply(MovementType::Slide, 0.2);
        let plan = SubgoalPlan {
            planner: "test".into(),
            start,
            target: goal,
            start_similarity: 0.0,
            steps: vec![PlanStep {
                pose: goal,
                view: slice(&vol, &goal, &geom),
                movement: Movement {
                    kind: MovementType::Slide,
                    amount: 0.2,
                },
                similarity_to_target: 12.0,
                phase: None,
                selection_b: None,
                via_familiar: None,
            }],
            converged: true,
            gimbal_warning: false,
        };
        let mut cases = BTreeMap::new();
        cases.insert("one".to_string(), Arc::new(SessionCase { start, plan }));
        ServerContext::new(vol, geom, cases)
    }

    fn kinds(msgs: &[WireMessage]) -> Vec<&str> {
        msgs.iter().map(|m| m.kind.as_str()).collect()
    }

    fn error_code(m: &WireMessage) -> ErrorCode {
        m.parse::<ErrorPayload>().unwrap().code
    }

    #[test]
    fn handshake_and_version() {
        let ctx = toy();
        let mut s = ProtocolSession::new(&ctx);
        let r = s.handle_text(r#"{"type":"CaseLoad","seq":1,"payload":{"case_id":"one"}}"#);
        assert_eq!(error_code(&r[0]), ErrorCode::Handshake);
        let r = s.handle_text(r#"{"type":"Hello","seq":2,"payload":{"versions":[7]}}"#);
        assert_eq!(error_code(&r[0]), ErrorCode::UnsupportedVersion);
        assert!(s.is_closed());
        assert!(s.handle_text(r#"{"type":"Hello","seq":3,"payload":{"versions":[1]}}"#).is_empty());

        let mut s = ProtocolSession::new(&ctx);
        let r = s.handle_text(r#"{"type":"Hello","seq":1,"payload":{"versions":[0,1]}}"#);
        let hello: HelloReply = r[0].parse().unwrap();
        assert_eq!((hello.version, hello.cases), (1, vec!["one".to_string()]));
    }

    #[test]
    fn bad_input_keeps_the_connection() {
        let ctx = toy();
        let mut s = ProtocolSession::new(&ctx);
        s.handle_text(r#"{"type":"Hello","seq":1,"payload":{"versions":[1]}}"#);
        assert_eq!(error_code(&s.handle_text("{not json")[0]), ErrorCode::Malformed);
        assert_eq!(error_code(&s.handle_text(r#"{"type":"Dance","seq":2}"#)[0]), ErrorCode::UnknownType);
        assert_eq!(error_code(&s.handle_text(r#"{"type":"Frame","seq":3}"#)[0]), ErrorCode::UnexpectedType);
        assert_eq!(error_code(&s.handle_text(r#"{"type":"Advance","seq":3,"payload":{"t_ms":0}}"#)[0]), ErrorCode::Sequence);
        assert_eq!(error_code(&s.handle_text(r#"{"type":"Advance","seq":4,"payload":{"t_ms":0}}"#)[0]), ErrorCode::NoCase);
        assert_eq!(error_code(&s.handle_text(r#"{"type":"CaseLoad","seq":5,"payload":{}}"#)[0]), ErrorCode::BadPayload);
        assert_eq!(
            error_code(&s.handle_text(r#"{"type":"CaseLoad","seq":6,"payload":{"case_id":"x"}}"#)[0]),
            ErrorCode::UnknownCase
        );
        let r = s.handle_text(r#"{"type":"CaseLoad","seq":7,"payload":{"case_id":"one"}}"#);
        assert_eq!(kinds(&r), ["Frame"]);
        assert_eq!(error_code(&s.handle_text(r#"{"type":"GripUp","seq":8,"payload":{"t_ms":0}}"#)[0]), ErrorCode::Protocol);
        assert!(!s.is_closed());
        assert_eq!(s.out_seq, 10);
    }

    fn complete_script(ctx: &ServerContext, wrong_first: bool) -> ClientScript {
        let case = &ctx.cases["one"];
        let goal = case.plan.steps[0].pose;
        let mut c = ClientScript::new();
        c.hello().load("one").timed("GripDown", 0).timed("Advance", 10);
        if wrong_first {
            let wrong = case.start.apply(MovementType::Slide, -0.1);
            c.pose(wrong, 30).timed("Advance", 50).pose(wrong, 70).timed("Advance", 90);
            c.timed("Advance", 110).timed("Advance", 130);
        }
        // Two updates 5 ms apart: the second is under the frame cap.
        c.pose(goal, 150).pose(goal, 155).timed("Advance", 170).pose(goal, 190).timed("Advance", 210);
        c
    }

    #[test]
    fn scripted_case_completes() {
        let ctx = toy();
        let log = run_script(&ctx, complete_script(&ctx, false).texts());
        let server: Vec<WireMessage> = log.server_texts().map(|t| serde_json::from_str(t).unwrap()).collect();
        assert_eq!(kinds(&server), ["Hello", "Frame", "Frame", "Frame", "Frame", "Frame", "Frame", "Result"]);
        let last: ResultPayload = server.last().unwrap().parse().unwrap();
        assert_eq!(last.status, ResultStatus::Complete);
        assert!(server.windows(2).all(|w| w[0].seq < w[1].seq));
    }

    #[test]
    fn incorrect_submission_sends_cue_and_replays() {
        let ctx = toy();
        let log = run_script(&ctx, complete_script(&ctx, true).texts());
        let server: Vec<WireMessage> = log.server_texts().map(|t| serde_json::from_str(t).unwrap()).collect();
        let k = kinds(&server);
        let cue = k.iter().position(|&x| x == "Cue").unwrap();
        assert_eq!(k[cue - 1], "Frame");
        let r: ResultPayload = server[cue + 1].parse().unwrap();
        assert_eq!((r.status, r.attempts.clone()), (ResultStatus::Incorrect, vec![1]));
        let text = log.to_jsonl();
        let back = SessionLog::from_jsonl(&text).unwrap();
        assert!(text.starts_with(&format!("{{\"schema\":\"{LOG_SCHEMA}\"}}\n")));
        assert!(matches!(SessionLog::from_jsonl(text.split_once('\n').unwrap().1), Err(LogError::Header)));
        verify_replay(&ctx, &back).unwrap();

        let mut tampered = back.clone();
        let i = tampered.records.iter().rposition(|r| r.dir == Direction::Server).unwrap();
        tampered.records[i].text.push(' ');
        assert!(matches!(verify_replay(&ctx, &tampered), Err(ReplayMismatch::Differs { .. })));
    }
}
