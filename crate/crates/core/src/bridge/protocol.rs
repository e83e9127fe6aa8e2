use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::graph::{GraphSnapshot, LineageGraph, LinkEntry, LinkId, SpotEntry, SpotId};
use crate::trace::TimeDirection;

/// Bumped on any incompatible change to the message catalog.
pub const PROTOCOL_VERSION: u32 = 1;

/// Origin of edits made by the engine itself (playback, automatic ends).
pub const ENGINE: &str = "engine";

/// Wire message. Requests from clients are unstamped (`version` 0); every
/// message the session sends carries the session version it refers to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub version: u64,
    #[serde(default)]
    pub origin: String,
    #[serde(default)]
    pub payload: Value,
}

impl Envelope {
    pub fn new(kind: &str, version: u64, origin: &str, payload: Value) -> Self {
        Envelope { kind: kind.to_string(), version, origin: origin.to_string(), payload }
    }

    /// Unstamped request envelope.
    pub fn request(request: &Request) -> Self {
        let (kind, payload) = split(serde_json::to_value(request).expect("requests serialize"));
        Envelope { kind, version: 0, origin: String::new(), payload }
    }

    pub fn event(event: &Event, version: u64, origin: &str) -> Self {
        let (kind, payload) = split(serde_json::to_value(event).expect("events serialize"));
        Envelope { kind, version, origin: origin.to_string(), payload }
    }

    pub fn to_request(&self) -> Result<Request, String> {
        serde_json::from_value(self.joined()).map_err(|e| format!("bad {} request: {e}", self.kind))
    }

    pub fn to_event(&self) -> Result<Event, String> {
        serde_json::from_value(self.joined()).map_err(|e| format!("bad {} event: {e}", self.kind))
    }

    /// True for message types only the session sends.
    pub fn is_server_only(&self) -> bool {
        SERVER_ONLY.contains(&self.kind.as_str())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("envelopes serialize")
    }

    fn joined(&self) -> Value {
        let payload = if self.payload.is_null() { json!({}) } else { self.payload.clone() };
        json!({ "type": self.kind, "payload": payload })
    }
}

const SERVER_ONLY: [&str; 4] = ["ack", "reject", "welcome", "fullRedraw"];

fn split(v: Value) -> (String, Value) {
    let Value::Object(mut map) = v else { unreachable!("tagged enums serialize to objects") };
    let kind = match map.remove("type") {
        Some(Value::String(s)) => s,
        _ => unreachable!("tag is a string"),
    };
    (kind, map.remove("payload").unwrap_or_else(|| json!({})))
}

/// Client requests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "camelCase")]
pub enum Request {
    #[serde(rename_all = "camelCase")]
    Hello { protocol_version: u32 },
    AddSpot {
        timepoint: i64,
        position: [f64; 3],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        covariance: Option<[f64; 6]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u32>,
    },
    MoveSpot { id: u32, position: [f64; 3] },
    DeleteSpot { id: u32 },
    AddLink {
        source: u32,
        target: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u32>,
    },
    DeleteLink { id: u32 },
    SetTag { id: u32, tag: Option<String> },
    SetTimepoint { timepoint: i64 },
    SetDirection { direction: TimeDirection },
    /// Annotation click: place (or reuse) a spot and advance time.
    Annotate { position: [f64; 3] },
    TerminateTrack {},
    StartTrace {
        #[serde(default)]
        rate: Option<f64>,
    },
    /// Samples the volume at the session timepoint. `direction` is
    /// normalized; step and length default to the volume's.
    #[serde(rename_all = "camelCase")]
    AppendRay {
        origin: [f64; 3],
        direction: [f64; 3],
        #[serde(default)]
        step: Option<f64>,
        #[serde(default)]
        max_distance: Option<f64>,
    },
    EndTrace {},
    Play {
        #[serde(default)]
        rate: Option<f64>,
    },
    Pause {},
    Undo {},
    Redo {},
    Detect {
        #[serde(default)]
        timepoint: Option<i64>,
    },
    Link {
        #[serde(default)]
        timepoint: Option<i64>,
    },
    LabelTp {
        #[serde(default)]
        timepoint: Option<i64>,
    },
    Train {},
    RequestRedraw {},
}

impl Request {
    /// The request that would reproduce `event` on the session, if any.
    pub fn from_event(event: &Event) -> Option<Request> {
        Some(match event {
            Event::AddSpot(s) => Request::AddSpot {
                timepoint: s.timepoint as i64,
                position: s.position,
                covariance: Some(s.covariance),
                id: Some(s.id),
            },
            Event::MoveSpot { id, position } => Request::MoveSpot { id: *id, position: *position },
            Event::DeleteSpot { id, .. } => Request::DeleteSpot { id: *id },
            Event::AddLink(l) => Request::AddLink { source: l.source, target: l.target, id: Some(l.id) },
            Event::DeleteLink { id } => Request::DeleteLink { id: *id },
            Event::SetTag { id, tag } => Request::SetTag { id: *id, tag: tag.clone() },
            Event::SetTimepoint { timepoint, .. } => Request::SetTimepoint { timepoint: *timepoint as i64 },
            Event::FullRedraw { .. } => return None,
        })
    }
}

/// Events broadcast after a change.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "camelCase")]
pub enum Event {
    AddSpot(SpotEntry),
    MoveSpot { id: u32, position: [f64; 3] },
    /// `links` lists the incident links removed with the spot.
    DeleteSpot { id: u32, links: Vec<u32> },
    AddLink(LinkEntry),
    DeleteLink { id: u32 },
    SetTag { id: u32, tag: Option<String> },
    SetTimepoint { timepoint: i32, requested: i64, clamped: bool },
    FullRedraw { reason: String, snapshot: GraphSnapshot },
}

pub fn spot_entry(graph: &LineageGraph, id: SpotId) -> Option<SpotEntry> {
    let s = graph.spot(id)?;
    Some(SpotEntry {
        id: id.0,
        timepoint: s.timepoint,
        position: s.position,
        covariance: s.covariance.upper(),
        tag: graph.tag_name(id).map(str::to_string),
    })
}

pub fn link_entry(graph: &LineageGraph, id: LinkId) -> Option<LinkEntry> {
    let l = graph.link(id)?;
    Some(LinkEntry { id: id.0, source: l.source, target: l.target })
}
