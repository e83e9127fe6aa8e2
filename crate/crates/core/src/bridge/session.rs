use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::detect::{self, DetectionConfig, LinkingConfig};
use crate::graph::{Covariance, GraphError, LineageGraph, LinkId, SpotId};
use crate::render::{populate_pools, ColorMap, FrameStats, ScenePools, VisibilityWindow};
use crate::trace::{commit_track, commit::nearest_spot, RayProfile, SmoothingConfig, TimeDirection, TraceSession, TrackPoint};
use crate::volume::{normalize, VolumeTimeSeries};

use super::protocol::{link_entry, spot_entry, Envelope, Event, Request, ENGINE, PROTOCOL_VERSION};
use super::BridgeError;

/// Tunables shared by a session and a project manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SessionConfig {
    pub smoothing: SmoothingConfig,
    pub detection: DetectionConfig,
    pub linking: LinkingConfig,
    /// World units. Defaults to two of the smallest voxel edge.
    pub merge_radius: Option<f64>,
    /// Timepoints per second.
    pub playback_rate: f64,
    pub direction: TimeDirection,
    pub window_width: u32,
    pub colormap: String,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            smoothing: SmoothingConfig::default(),
            detection: DetectionConfig::default(),
            linking: LinkingConfig::default(),
            merge_radius: None,
            playback_rate: 4.0,
            direction: TimeDirection::Backwards,
            window_width: 5,
            colormap: "viridis".into(),
        }
    }
}

impl SessionConfig {
    /// The configured merge radius, or two voxels of edge `min_voxel`.
    pub fn merge_radius_for(&self, min_voxel: f64) -> f64 {
        self.merge_radius.unwrap_or(2.0 * min_voxel)
    }

    pub fn validate(&self) -> Result<(), BridgeError> {
        let bad = |m: &str| Err(BridgeError::Config(m.to_string()));
        self.smoothing.validate().map_err(|e| BridgeError::Config(e.to_string()))?;
        self.detection.validate().map_err(|e| BridgeError::Config(e.to_string()))?;
        self.linking.validate().map_err(|e| BridgeError::Config(e.to_string()))?;
        if let Some(r) = self.merge_radius {
            if !(r > 0.0 && r.is_finite()) {
                return bad("mergeRadius must be positive");
            }
        }
        if !(self.playback_rate > 0.0 && self.playback_rate.is_finite()) {
            return bad("playbackRate must be positive");
        }
        if ColorMap::preset(&self.colormap, 2).is_none() {
            return bad("unknown colormap");
        }
        Ok(())
    }
}

/// Guard set while listeners react to an emitted event. Anything applied
/// while it is held emits nothing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BridgeLock {
    pub updating: bool,
}

/// Spots placed by the current annotation track, in capture order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnnotationCursor {
    pub active_track: Vec<SpotId>,
}

/// In-process party that observes events, such as the other side of the
/// bridge. Returned envelopes are applied under the lock.
pub trait SessionListener: Send {
    fn on_event(&mut self, event: &Envelope) -> Vec<Envelope>;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BridgeStats {
    pub emitted: u64,
    pub rejected: u64,
    /// Echoes dropped and edits applied under the lock.
    pub suppressed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Audience {
    Others,
    All,
    Origin,
}

#[derive(Default)]
struct Outcome {
    events: Vec<(Event, Audience)>,
    result: Value,
}

impl Outcome {
    fn result(result: Value) -> Self {
        Outcome { events: Vec::new(), result }
    }
}

struct ActiveTrace {
    owner: String,
    session: TraceSession,
}

#[derive(Clone, Copy, Debug)]
struct Playback {
    playing: bool,
    rate: f64,
    pending: f64,
}

struct RenderState {
    pools: ScenePools,
    window: VisibilityWindow,
    cmap: ColorMap,
    drawn: Option<(i32, u64)>,
    last: Option<FrameStats>,
}

/// One editing session: owns the graph, serializes every mutation and fans
/// out the resulting events to connected clients.
pub struct Session {
    graph: LineageGraph,
    volume: Option<Arc<VolumeTimeSeries>>,
    config: SessionConfig,
    timepoint: i32,
    seq: u64,
    clients: BTreeMap<String, VecDeque<Envelope>>,
    next_client: u64,
    listeners: Vec<Box<dyn SessionListener>>,
    lock: BridgeLock,
    cursor: AnnotationCursor,
    trace: Option<ActiveTrace>,
    playback: Playback,
    log: Vec<Envelope>,
    log_enabled: bool,
    stats: BridgeStats,
    render: Option<RenderState>,
}

impl Session {
    pub fn new(graph: LineageGraph, volume: Option<Arc<VolumeTimeSeries>>, config: SessionConfig) -> Result<Self, BridgeError> {
        config.validate()?;
        if let Some(v) = &volume {
            if v.timepoints() != graph.timepoints() as usize {
                return Err(BridgeError::Config(format!(
                    "graph has {} timepoints, volume has {}",
                    graph.timepoints(),
                    v.timepoints()
                )));
            }
        }
        let playback = Playback { playing: false, rate: config.playback_rate, pending: 0.0 };
        Ok(Session {
            graph,
            volume,
            config,
            timepoint: 0,
            seq: 0,
            clients: BTreeMap::new(),
            next_client: 1,
            listeners: Vec::new(),
            lock: BridgeLock::default(),
            cursor: AnnotationCursor::default(),
            trace: None,
            playback,
            log: Vec::new(),
            log_enabled: true,
            stats: BridgeStats::default(),
            render: None,
        })
    }

    pub fn graph(&self) -> &LineageGraph {
        &self.graph
    }

    pub fn volume(&self) -> Option<&Arc<VolumeTimeSeries>> {
        self.volume.as_ref()
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn timepoint(&self) -> i32 {
        self.timepoint
    }

    /// Version of the most recent event.
    pub fn version(&self) -> u64 {
        self.seq
    }

    pub fn direction(&self) -> TimeDirection {
        self.config.direction
    }

    pub fn cursor(&self) -> &AnnotationCursor {
        &self.cursor
    }

    pub fn lock(&self) -> BridgeLock {
        self.lock
    }

    pub fn is_tracing(&self) -> bool {
        self.trace.is_some()
    }

    pub fn is_playing(&self) -> bool {
        self.playback.playing
    }

    pub fn playback_rate(&self) -> f64 {
        self.playback.rate
    }

    /// Every event emitted so far, in version order.
    pub fn log(&self) -> &[Envelope] {
        &self.log
    }

    /// Turns event recording off (long-running servers) or back on.
    pub fn set_log_enabled(&mut self, enabled: bool) {
        self.log_enabled = enabled;
    }

    pub fn stats(&self) -> BridgeStats {
        self.stats
    }

    pub fn merge_radius(&self) -> f64 {
        self.config.merge_radius_for(self.volume.as_ref().map_or(1.0, |v| v.header().min_voxel_size()))
    }

    pub fn clients(&self) -> impl Iterator<Item = &str> {
        self.clients.keys().map(String::as_str)
    }

    pub fn add_listener(&mut self, listener: Box<dyn SessionListener>) {
        self.listeners.push(listener);
    }

    /// Registers a client and queues its welcome message.
    pub fn connect(&mut self) -> String {
        let id = format!("c{}", self.next_client);
        self.next_client += 1;
        let welcome = Envelope::new(
            "welcome",
            self.seq,
            ENGINE,
            json!({
                "clientId": id,
                "protocolVersion": PROTOCOL_VERSION,
                "timepoint": self.timepoint,
                "timepoints": self.graph.timepoints(),
            }),
        );
        self.clients.insert(id.clone(), VecDeque::from([welcome]));
        id
    }

    pub fn disconnect(&mut self, client: &str) {
        self.clients.remove(client);
    }

    /// Takes every message queued for `client`.
    pub fn drain(&mut self, client: &str) -> Vec<Envelope> {
        self.clients.get_mut(client).map(|q| q.drain(..).collect()).unwrap_or_default()
    }

    /// Enables render-prep: instance pools are rebuilt now and updated on
    /// every timepoint or graph change.
    pub fn enable_render(&mut self) {
        let cmap = ColorMap::preset(&self.config.colormap, self.graph.timepoints()).expect("validated");
        self.render = Some(RenderState {
            pools: populate_pools(&self.graph),
            window: VisibilityWindow::build(&self.graph, self.config.window_width),
            cmap,
            drawn: None,
            last: None,
        });
        self.refresh_render();
    }

    pub fn frame_stats(&self) -> Option<FrameStats> {
        self.render.as_ref().and_then(|r| r.last)
    }

    pub fn pools(&self) -> Option<&ScenePools> {
        self.render.as_ref().map(|r| &r.pools)
    }

    /// Handles one raw text frame from `client`.
    pub fn handle_text(&mut self, client: &str, text: &str) {
        match serde_json::from_str::<Envelope>(text) {
            Ok(env) => self.handle(client, env),
            Err(e) => self.reject(client, None, &format!("malformed message: {e}")),
        }
    }

    /// Handles one message from `client`. Messages stamped with a version
    /// the session already issued, and message types only the session
    /// sends, are echoes and are dropped without any reply.
    pub fn handle(&mut self, client: &str, env: Envelope) {
        if env.version > 0 || env.is_server_only() {
            if env.version <= self.seq {
                self.stats.suppressed += 1;
            } else {
                self.reject(client, Some(&env.kind), &format!("unknown version {}", env.version));
            }
            return;
        }
        match env.to_request() {
            Ok(req) => self.submit(client, req),
            Err(e) => self.reject(client, Some(&env.kind), &e),
        }
    }

    /// Applies a request on behalf of `origin` (a client id or [`ENGINE`]).
    pub fn submit(&mut self, origin: &str, request: Request) {
        let kind = Envelope::request(&request).kind;
        let outcome = self.execute(origin, request);
        self.finish(origin, Some(origin), &kind, outcome);
    }

    /// Advances playback by `dt` seconds, emitting one setTimepoint per
    /// step. Reaching the end of the data stops playback; a running trace
    /// ends as if endTrace had been sent at the last timepoint.
    pub fn advance_playback(&mut self, dt: f64) {
        if !self.playback.playing || !(dt > 0.0) {
            return;
        }
        self.playback.pending += dt * self.playback.rate;
        while self.playback.pending >= 1.0 {
            self.playback.pending -= 1.0;
            let next = self.timepoint + self.config.direction.step();
            if self.in_range(next as i64) {
                self.timepoint = next;
                let ev = Event::SetTimepoint { timepoint: next, requested: next as i64, clamped: false };
                self.finish(ENGINE, None, "setTimepoint", Ok(Outcome { events: vec![(ev, Audience::All)], result: Value::Null }));
                continue;
            }
            self.playback.playing = false;
            self.playback.pending = 0.0;
            if let Some(owner) = self.trace.as_ref().map(|t| t.owner.clone()) {
                let outcome = self.end_trace();
                self.finish(ENGINE, Some(&owner), "endTrace", outcome);
            }
            break;
        }
    }

    /// Swaps in a new graph (e.g. a project reloaded from disk). Any track
    /// or trace in progress is dropped and every client gets a full redraw.
    pub fn replace_graph(&mut self, graph: LineageGraph) -> Result<(), BridgeError> {
        if let Some(v) = &self.volume {
            if v.timepoints() != graph.timepoints() as usize {
                return Err(BridgeError::Config("graph and volume timepoints differ".into()));
            }
        }
        self.cursor.active_track.clear();
        self.trace = None;
        self.playback.playing = false;
        self.graph = graph;
        self.timepoint = self.timepoint.clamp(0, (self.graph.timepoints() - 1).max(0));
        if let Some(r) = &mut self.render {
            r.pools = populate_pools(&self.graph);
            r.window.refresh(&self.graph);
            r.drawn = None;
        }
        let redraw = self.full_redraw("load");
        self.finish(ENGINE, None, "load", Ok(Outcome { events: vec![redraw], result: Value::Null }));
        Ok(())
    }

    // ---- dispatch ------------------------------------------------------

    fn finish(&mut self, origin: &str, reply_to: Option<&str>, kind: &str, outcome: Result<Outcome, String>) {
        if self.lock.updating {
            if let Ok(o) = &outcome {
                self.stats.suppressed += o.events.len() as u64;
            }
            self.stats.suppressed += 1;
            return;
        }
        match outcome {
            Err(reason) => {
                if let Some(to) = reply_to {
                    self.reject(to, Some(kind), &reason);
                }
            }
            Ok(outcome) => {
                let first = self.seq + 1;
                for (event, audience) in outcome.events {
                    self.emit(origin, event, audience);
                }
                self.refresh_render();
                if let Some(to) = reply_to.filter(|c| self.clients.contains_key(*c)) {
                    let ack = Envelope::new(
                        "ack",
                        self.seq,
                        origin,
                        json!({ "request": kind, "firstVersion": first, "result": outcome.result }),
                    );
                    self.push(to, ack);
                }
            }
        }
    }

    fn emit(&mut self, origin: &str, event: Event, audience: Audience) {
        self.seq += 1;
        let env = Envelope::event(&event, self.seq, origin);
        if self.log_enabled {
            self.log.push(env.clone());
        }
        self.stats.emitted += 1;
        let targets: Vec<String> = self
            .clients
            .keys()
            .filter(|c| match audience {
                Audience::All => true,
                Audience::Others => c.as_str() != origin,
                Audience::Origin => c.as_str() == origin,
            })
            .cloned()
            .collect();
        for c in targets {
            self.push(&c, env.clone());
        }

        let mut listeners = std::mem::take(&mut self.listeners);
        self.lock.updating = true;
        for l in &mut listeners {
            for reaction in l.on_event(&env) {
                self.apply_locked(reaction);
            }
        }
        self.lock.updating = false;
        listeners.append(&mut self.listeners);
        self.listeners = listeners;
    }

    /// Reaction arriving while the lock is held: echoes are dropped, other
    /// requests mutate the graph without emitting.
    fn apply_locked(&mut self, env: Envelope) {
        if env.version > 0 || env.is_server_only() {
            self.stats.suppressed += 1;
            return;
        }
        match env.to_request() {
            Ok(req) => {
                let outcome = self.execute(ENGINE, req);
                self.finish(ENGINE, None, &env.kind, outcome);
            }
            Err(_) => self.stats.suppressed += 1,
        }
    }

    fn push(&mut self, client: &str, env: Envelope) {
        if let Some(q) = self.clients.get_mut(client) {
            q.push_back(env);
        }
    }

    fn reject(&mut self, client: &str, kind: Option<&str>, reason: &str) {
        self.stats.rejected += 1;
        let env = Envelope::new("reject", self.seq, ENGINE, json!({ "request": kind, "reason": reason }));
        self.push(client, env);
    }

    fn refresh_render(&mut self) {
        let key = (self.timepoint, self.graph.version());
        if let Some(r) = &mut self.render {
            if r.drawn != Some(key) {
                r.last = Some(r.pools.update_for_timepoint(&self.graph, self.timepoint, &mut r.window, &r.cmap));
                r.drawn = Some(key);
            }
        }
    }

    fn in_range(&self, t: i64) -> bool {
        t >= 0 && t < self.graph.timepoints() as i64
    }

    fn check_timepoint(&self, t: Option<i64>) -> Result<i32, String> {
        let t = t.unwrap_or(self.timepoint as i64);
        if self.in_range(t) {
            Ok(t as i32)
        } else {
            Err(format!("timepoint {t} outside 0..{}", self.graph.timepoints()))
        }
    }

    fn require_volume(&self) -> Result<Arc<VolumeTimeSeries>, String> {
        self.volume.clone().ok_or_else(|| "session has no volume".to_string())
    }

    fn full_redraw(&self, reason: &str) -> (Event, Audience) {
        (Event::FullRedraw { reason: reason.to_string(), snapshot: self.graph.snapshot() }, Audience::All)
    }

    // ---- requests ------------------------------------------------------

    fn execute(&mut self, origin: &str, request: Request) -> Result<Outcome, String> {
        let g = |e: GraphError| e.to_string();
        match request {
            Request::Hello { protocol_version } => {
                if protocol_version != PROTOCOL_VERSION {
                    return Err(format!("protocol version {protocol_version} unsupported, server speaks {PROTOCOL_VERSION}"));
                }
                Ok(Outcome::result(json!({ "protocolVersion": PROTOCOL_VERSION })))
            }
            Request::AddSpot { timepoint, position, covariance, id } => {
                let t = self.check_timepoint(Some(timepoint))?;
                let cov = match covariance {
                    Some(c) => Covariance::from_upper(c).map_err(g)?,
                    None => Covariance::isotropic(self.merge_radius() / 2.0),
                };
                let id = match id {
                    Some(id) => {
                        let id = SpotId(id);
                        if let Some(s) = self.graph.spot(id) {
                            if s.timepoint == t && s.position == position && s.covariance == cov {
                                return Ok(Outcome::result(json!({ "id": id.0 })));
                            }
                        }
                        self.graph.add_spot_at(id, t, position, cov).map_err(g)?;
                        id
                    }
                    None => self.graph.add_spot(t, position, cov).map_err(g)?,
                };
                let ev = Event::AddSpot(spot_entry(&self.graph, id).expect("just added"));
                Ok(Outcome { events: vec![(ev, Audience::Others)], result: json!({ "id": id.0 }) })
            }
            Request::MoveSpot { id, position } => {
                self.graph.move_spot(SpotId(id), position).map_err(g)?;
                Ok(Outcome { events: vec![(Event::MoveSpot { id, position }, Audience::Others)], result: json!({ "id": id }) })
            }
            Request::DeleteSpot { id } => {
                let sid = SpotId(id);
                let links: Vec<u32> = self.graph.outgoing(sid).chain(self.graph.incoming(sid)).map(|l| l.0).collect();
                self.graph.delete_spot(sid).map_err(g)?;
                self.cursor.active_track.retain(|&s| s != sid);
                Ok(Outcome {
                    events: vec![(Event::DeleteSpot { id, links: links.clone() }, Audience::Others)],
                    result: json!({ "id": id, "links": links }),
                })
            }
            Request::AddLink { source, target, id } => {
                let (s, t) = (SpotId(source), SpotId(target));
                let id = match id {
                    Some(id) => {
                        let id = LinkId(id);
                        if let Some(l) = self.graph.link(id) {
                            if l.source == source && l.target == target {
                                return Ok(Outcome::result(json!({ "id": id.0 })));
                            }
                        }
                        self.graph.add_link_at(id, s, t).map_err(g)?;
                        id
                    }
                    None => self.graph.add_link(s, t).map_err(g)?,
                };
                let ev = Event::AddLink(link_entry(&self.graph, id).expect("just added"));
                Ok(Outcome { events: vec![(ev, Audience::Others)], result: json!({ "id": id.0 }) })
            }
            Request::DeleteLink { id } => {
                self.graph.delete_link(LinkId(id)).map_err(g)?;
                Ok(Outcome { events: vec![(Event::DeleteLink { id }, Audience::Others)], result: json!({ "id": id }) })
            }
            Request::SetTag { id, tag } => {
                let before = self.graph.version();
                self.graph.set_tag(SpotId(id), tag.as_deref()).map_err(g)?;
                let events = if self.graph.version() != before {
                    vec![(Event::SetTag { id, tag }, Audience::Others)]
                } else {
                    Vec::new()
                };
                Ok(Outcome { events, result: json!({ "id": id }) })
            }
            Request::SetTimepoint { timepoint } => {
                if self.trace.is_some() {
                    return Err("timepoint is driven by playback while tracing".into());
                }
                let mut events = self.close_track();
                let clamped_t = timepoint.clamp(0, (self.graph.timepoints() - 1).max(0) as i64) as i32;
                self.timepoint = clamped_t;
                let clamped = clamped_t as i64 != timepoint;
                events.push((Event::SetTimepoint { timepoint: clamped_t, requested: timepoint, clamped }, Audience::Others));
                Ok(Outcome { events, result: json!({ "timepoint": clamped_t, "clamped": clamped }) })
            }
            Request::SetDirection { direction } => {
                if self.trace.is_some() || !self.cursor.active_track.is_empty() {
                    return Err("direction cannot change during a track or trace".into());
                }
                self.config.direction = direction;
                Ok(Outcome::result(json!({ "direction": direction })))
            }
            Request::Annotate { position } => self.annotate(position),
            Request::TerminateTrack {} => {
                let events = self.close_track();
                let created = events.len();
                Ok(Outcome { events, result: json!({ "terminated": created > 0 }) })
            }
            Request::StartTrace { rate } => {
                if self.trace.is_some() {
                    return Err("a trace is already recording".into());
                }
                self.require_volume()?;
                let rate = rate.unwrap_or(self.playback.rate);
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err("rate must be positive".into());
                }
                let events = self.close_track();
                self.trace = Some(ActiveTrace {
                    owner: origin.to_string(),
                    session: TraceSession::new(self.config.direction, self.config.smoothing),
                });
                self.playback = Playback { playing: true, rate, pending: 0.0 };
                Ok(Outcome { events, result: json!({ "timepoint": self.timepoint, "rate": rate }) })
            }
            Request::AppendRay { origin: ray_origin, direction, step, max_distance } => {
                let volume = self.require_volume()?;
                let t = self.timepoint;
                let Some(trace) = self.trace.as_mut() else {
                    return Err("no trace is recording".into());
                };
                let header = volume.header();
                let step = step.unwrap_or(header.default_ray_step());
                let max_distance = max_distance.unwrap_or(header.diagonal());
                let ray = RayProfile::sample(&volume, t, ray_origin, normalize(direction), step, max_distance).map_err(|e| e.to_string())?;
                let samples = ray.raw.len();
                trace.session.push_ray(ray).map_err(|e| e.to_string())?;
                Ok(Outcome::result(json!({ "timepoint": t, "samples": samples, "rays": trace.session.rays().len() })))
            }
            Request::EndTrace {} => {
                if self.trace.is_none() {
                    return Err("no trace is recording".into());
                }
                self.end_trace()
            }
            Request::Play { rate } => {
                let rate = rate.unwrap_or(self.playback.rate);
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err("rate must be positive".into());
                }
                self.playback.playing = true;
                self.playback.rate = rate;
                Ok(Outcome::result(json!({ "playing": true, "rate": rate })))
            }
            Request::Pause {} => {
                if self.trace.is_some() {
                    return Err("playback cannot pause while tracing".into());
                }
                self.playback.playing = false;
                self.playback.pending = 0.0;
                Ok(Outcome::result(json!({ "playing": false })))
            }
            Request::Undo {} | Request::Redo {} => {
                if self.trace.is_some() {
                    return Err("undo is unavailable while tracing".into());
                }
                let undo = matches!(request, Request::Undo {});
                let mut events = self.close_track();
                let changed = if undo { self.graph.undo() } else { self.graph.redo() };
                if changed {
                    events.push(self.full_redraw(if undo { "undo" } else { "redo" }));
                }
                Ok(Outcome { events, result: json!({ "changed": changed }) })
            }
            Request::Detect { timepoint } => {
                let volume = self.require_volume()?;
                let t = self.check_timepoint(timepoint)?;
                let cfg = self.config.detection;
                let dets = detect::detect(&volume, t as i64, &cfg).map_err(|e| e.to_string())?;
                let voxel = volume.header().min_voxel_size();
                let spots = detect::add_detections(&mut self.graph, t, &dets, &cfg, voxel).map_err(|e| e.to_string())?;
                let events = if spots.is_empty() { Vec::new() } else { vec![self.full_redraw("detect")] };
                Ok(Outcome { events, result: json!({ "timepoint": t, "spots": spots.len() }) })
            }
            Request::Link { timepoint } => {
                let t = self.check_timepoint(timepoint)?;
                self.check_timepoint(Some(t as i64 + 1))?;
                let links = detect::link_timepoints(&mut self.graph, t, &self.config.linking).map_err(|e| e.to_string())?;
                let events = if links.is_empty() { Vec::new() } else { vec![self.full_redraw("link")] };
                Ok(Outcome { events, result: json!({ "from": t, "links": links.len() }) })
            }
            Request::LabelTp { timepoint } => {
                let t = self.check_timepoint(timepoint)?;
                let before = self.graph.version();
                let n = detect::label_all_true_positive(&mut self.graph, t);
                let events = if self.graph.version() != before { vec![self.full_redraw("labelTp")] } else { Vec::new() };
                Ok(Outcome { events, result: json!({ "timepoint": t, "spots": n }) })
            }
            Request::Train {} => Err("training is not available; use detect and link".into()),
            Request::RequestRedraw {} => Ok(Outcome {
                events: vec![(self.full_redraw("requested").0, Audience::Origin)],
                result: Value::Null,
            }),
        }
    }

    fn annotate(&mut self, position: [f64; 3]) -> Result<Outcome, String> {
        if self.trace.is_some() {
            return Err("cannot annotate while tracing".into());
        }
        if position.iter().any(|v| !v.is_finite()) {
            return Err("position must be finite".into());
        }
        // a remote edit may have removed the previous spot
        if let Some(&prev) = self.cursor.active_track.last() {
            if self.graph.spot(prev).is_none() {
                let mut events = self.close_track();
                let mut rest = self.annotate(position)?;
                events.append(&mut rest.events);
                return Ok(Outcome { events, result: rest.result });
            }
        }
        let t = self.timepoint;
        let radius = self.merge_radius();
        let prev = self.cursor.active_track.last().copied();
        let hit = nearest_spot(&self.graph, &TrackPoint { timepoint: t, position }, radius);
        let cov = Covariance::isotropic(radius / 2.0);
        if prev.is_none() {
            self.graph.begin_batch();
        }

        let step = self.graph.transaction(|g| {
            let (spot, created) = match hit {
                Some(h) => (h, false),
                None => (g.add_spot(t, position, cov)?, true),
            };
            let link = match prev {
                Some(p) => {
                    let (a, b) = if g.spot(p).expect("alive").timepoint < t { (p, spot) } else { (spot, p) };
                    match g.find_link(a, b) {
                        Some(_) => None,
                        None => Some(g.add_link(a, b)?),
                    }
                }
                None => None,
            };
            Ok::<_, GraphError>((spot, created, link))
        });
        let (spot, created, link) = match step {
            Ok(v) => v,
            Err(e) => {
                if prev.is_none() {
                    self.graph.end_batch();
                }
                return Err(e.to_string());
            }
        };

        let mut events = Vec::new();
        if created {
            events.push((Event::AddSpot(spot_entry(&self.graph, spot).expect("alive")), Audience::Others));
        }
        if let Some(l) = link {
            events.push((Event::AddLink(link_entry(&self.graph, l).expect("alive")), Audience::Others));
        }
        self.cursor.active_track.push(spot);
        let merged = hit.is_some() && prev.is_some();
        let next = t + self.config.direction.step();
        let terminated = merged || !self.in_range(next as i64);
        if !terminated {
            self.timepoint = next;
            events.push((Event::SetTimepoint { timepoint: next, requested: next as i64, clamped: false }, Audience::Others));
        }
        if terminated {
            events.extend(self.close_track());
        }
        Ok(Outcome {
            events,
            result: json!({
                "spot": spot.0,
                "created": created,
                "link": link.map(|l| l.0),
                "merged": merged,
                "terminated": terminated,
                "timepoint": self.timepoint,
            }),
        })
    }

    /// Seals the active annotation track into one undo batch.
    fn close_track(&mut self) -> Vec<(Event, Audience)> {
        if self.cursor.active_track.is_empty() {
            return Vec::new();
        }
        self.cursor.active_track.clear();
        self.graph.end_batch();
        vec![self.full_redraw("terminateTrack")]
    }

    fn end_trace(&mut self) -> Result<Outcome, String> {
        let mut active = self.trace.take().expect("caller checked");
        self.playback.playing = false;
        self.playback.pending = 0.0;
        active.session.analyze().map_err(|e| e.to_string())?;
        let track = active.session.extract_track().map_err(|e| e.to_string())?;
        let radius = self.merge_radius();
        let summary = commit_track(&track, &mut self.graph, radius).map_err(|e| e.to_string())?;
        active.session.mark_committed();
        Ok(Outcome {
            events: vec![self.full_redraw("endTrace")],
            result: serde_json::to_value(&summary).expect("summary serializes"),
        })
    }
}
