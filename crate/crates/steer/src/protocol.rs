//! Wire messages. Every message is one JSON object carrying `"v"` (the
//! protocol version) and `"type"`. See PROTOCOL.md for the field tables.

use mfswarm::analysis::UncertaintyReport;
use mfswarm::archive::{ArchiveCell, ArchiveHeader};
use mfswarm::sim::Arena;
use mfswarm::{Bin, RawDescriptor, Vec2};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u32 = 1;

/// Metrics computed by the service on the live world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RollingMetrics {
    /// Median visits per cell since the session started.
    pub exploration: f64,
    /// Distinct cells visited in the last completed sampling window.
    pub unique_cells: usize,
    /// Covered fraction at this tick.
    pub network: f64,
    /// `Var(x) + Var(y)` over the most recent predictions.
    pub localization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridState {
    pub cols: usize,
    pub rows: usize,
    /// Row-major visit counts, index `row * cols + col`.
    pub counts: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub session: String,
    pub archive: String,
    /// Sequence number of the last broadcast before this snapshot.
    pub seq: u64,
    pub t: f64,
    pub steps: u64,
    pub bin: Bin,
    pub paused: bool,
    pub rate: f64,
    pub decimation: u64,
    pub dt: f64,
    pub arena: Arena,
    pub cell_size: f64,
    pub comm_radius: f64,
    pub emitter: Vec2,
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub links: Vec<(usize, usize)>,
    pub grid: GridState,
    pub predictions: Vec<Vec2>,
    pub metrics: RollingMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Frame {
    pub seq: u64,
    pub t: f64,
    pub steps: u64,
    pub bin: Bin,
    pub positions: Vec<Vec2>,
    pub links: Vec<(usize, usize)>,
    /// `(cell index, new count)` for every cell changed since the previous
    /// frame.
    pub grid_delta: Vec<(usize, u32)>,
    /// Most recent prediction, if any.
    pub prediction: Option<Vec2>,
    /// Predictions made since the previous frame.
    pub new_predictions: Vec<Vec2>,
    pub metrics: RollingMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    SwitchBehavior,
    Pause,
    Resume,
    SetRate,
    Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ack {
    pub seq: u64,
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// Clock at which the command took effect.
    pub t: f64,
    pub steps: u64,
    pub bin: Bin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub previous_bin: Option<Bin>,
    pub paused: bool,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    UnknownSession,
    UnknownArchive,
    EmptyCell,
    BinOutOfRange,
    MalformedMessage,
    UnsupportedVersion,
    InvalidArgument,
    Lagged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorMessage {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

impl ErrorMessage {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ErrorMessage { code, message: message.into(), id: None }
    }

    pub fn with_id(mut self, id: Option<String>) -> Self {
        self.id = id;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Snapshot(Snapshot),
    Frame(Frame),
    Ack(Ack),
    Error(ErrorMessage),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    SwitchBehavior {
        bin: Bin,
        #[serde(default)]
        id: Option<String>,
    },
    Pause {
        #[serde(default)]
        id: Option<String>,
    },
    Resume {
        #[serde(default)]
        id: Option<String>,
    },
    SetRate {
        rate: f64,
        #[serde(default)]
        id: Option<String>,
    },
    /// Advance `count` ticks now, paused or not.
    Step {
        count: u64,
        #[serde(default)]
        id: Option<String>,
    },
}

impl ClientMessage {
    pub fn id(&self) -> Option<&String> {
        match self {
            ClientMessage::SwitchBehavior { id, .. }
            | ClientMessage::Pause { id }
            | ClientMessage::Resume { id }
            | ClientMessage::SetRate { id, .. }
            | ClientMessage::Step { id, .. } => id.as_ref(),
        }
    }
}

fn with_version<T: Serialize>(msg: &T) -> String {
    let mut value = serde_json::to_value(msg).expect("messages serialize");
    if let Value::Object(map) = &mut value {
        map.insert("v".into(), PROTOCOL_VERSION.into());
    }
    value.to_string()
}

fn strip_version(text: &str) -> Result<Value, ErrorMessage> {
    let mut value: Value = serde_json::from_str(text)
        .map_err(|e| ErrorMessage::new(ErrorCode::MalformedMessage, format!("not JSON: {e}")))?;
    let map = value
        .as_object_mut()
        .ok_or_else(|| ErrorMessage::new(ErrorCode::MalformedMessage, "expected a JSON object"))?;
    match map.remove("v") {
        None => Err(ErrorMessage::new(ErrorCode::MalformedMessage, "missing version field \"v\"")),
        Some(v) if v.as_u64() == Some(PROTOCOL_VERSION as u64) => Ok(value),
        Some(v) => Err(ErrorMessage::new(
            ErrorCode::UnsupportedVersion,
            format!("unsupported protocol version {v}, this server speaks {PROTOCOL_VERSION}"),
        )),
    }
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        with_version(self)
    }

    pub fn from_json(text: &str) -> Result<ServerMessage, ErrorMessage> {
        let value = strip_version(text)?;
        serde_json::from_value(value).map_err(|e| ErrorMessage::new(ErrorCode::MalformedMessage, e.to_string()))
    }

    pub fn seq(&self) -> Option<u64> {
        match self {
            ServerMessage::Snapshot(s) => Some(s.seq),
            ServerMessage::Frame(f) => Some(f.seq),
            ServerMessage::Ack(a) => Some(a.seq),
            ServerMessage::Error(_) => None,
        }
    }
}

impl ClientMessage {
    pub fn to_json(&self) -> String {
        with_version(self)
    }

    pub fn from_json(text: &str) -> Result<ClientMessage, ErrorMessage> {
        let value = strip_version(text)?;
        let id = value.get("id").and_then(Value::as_str).map(str::to_owned);
        serde_json::from_value(value)
            .map_err(|e| ErrorMessage::new(ErrorCode::MalformedMessage, e.to_string()).with_id(id))
    }
}

/// `GET /api/v1/archives` entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveSummary {
    pub name: String,
    pub dims: [usize; 3],
    pub cells: usize,
    pub config_hash: String,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub bins: Bin,
    pub raw: RawDescriptor,
    pub fitness: f64,
}

/// `GET /api/v1/archives/{name}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveView {
    pub name: String,
    pub header: ArchiveHeader,
    pub cells: Vec<CellSummary>,
}

/// `GET /api/v1/archives/{name}/cells/{i}/{j}/{k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDetail {
    pub archive: String,
    pub cell: ArchiveCell,
    /// Present when an uncertainty sidecar holds this bin.
    pub uncertainty: Option<UncertaintyReport>,
}

/// `POST /api/v1/sessions` body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartRequest {
    pub archive: String,
    pub bin: Bin,
    pub seed: u64,
    #[serde(default)]
    pub decimation: Option<u64>,
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub paused: Option<bool>,
}

/// Session state as reported over REST.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub archive: String,
    pub bin: Bin,
    pub seed: u64,
    pub t: f64,
    pub steps: u64,
    pub paused: bool,
    pub rate: f64,
    pub decimation: u64,
    pub seq: u64,
    pub pending_switches: usize,
    pub subscribers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateRequest {
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchRequest {
    pub bin: Bin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRequest {
    pub count: u64,
}

/// Body of every REST error response.
pub fn error_body(err: &ErrorMessage) -> String {
    ServerMessage::Error(err.clone()).to_json()
}
