use std::time::Duration;

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use celltrace::bridge::{Envelope, Request};
use celltrace::graph::LineageGraph;
use celltrace::project::{Project, ProjectManifest};
use celltrace::volume::{VolumeHeader, VolumeTimeSeries};
use celltrace_service::server::{playback_clock, router, AppState};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn start() -> (String, std::sync::Arc<AppState>, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let h = VolumeHeader::new([8, 8, 4], [1.0; 3], 20).unwrap();
    let p = Project::create(dir.path(), ProjectManifest::new("ws"), LineageGraph::new(20), VolumeTimeSeries::zeros(h).unwrap()).unwrap();
    let st = AppState::new(p).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("ws://{}/api/v1/ws", listener.local_addr().unwrap());
    let app = router(st.clone());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    tokio::spawn(playback_clock(st.clone()));
    (url, st, dir)
}

async fn recv(ws: &mut Ws) -> Envelope {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next()).await.expect("timed out").unwrap().unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

async fn send(ws: &mut Ws, r: &Request) {
    ws.send(Message::Text(Envelope::request(r).to_json().into())).await.unwrap();
}

async fn client(url: &str) -> Ws {
    let (mut ws, _) = connect_async(url).await.unwrap();
    let welcome = recv(&mut ws).await;
    assert_eq!(welcome.kind, "welcome");
    assert_eq!(welcome.payload["protocolVersion"], 1);
    send(&mut ws, &Request::Hello { protocol_version: 1 }).await;
    assert_eq!(recv(&mut ws).await.kind, "ack");
    ws
}

#[tokio::test]
async fn handshake_rejects_wrong_version() {
    let (url, _st, _dir) = start().await;
    let (mut ws, _) = connect_async(&url).await.unwrap();
    recv(&mut ws).await;
    send(&mut ws, &Request::Hello { protocol_version: 99 }).await;
    let r = recv(&mut ws).await;
    assert_eq!(r.kind, "reject");
    let next = tokio::time::timeout(Duration::from_secs(5), ws.next()).await.unwrap();
    assert!(matches!(next, Some(Ok(Message::Close(_))) | None | Some(Err(_))));

    let (mut ws, _) = connect_async(&url).await.unwrap();
    recv(&mut ws).await;
    send(&mut ws, &Request::Undo {}).await;
    assert_eq!(recv(&mut ws).await.kind, "reject");
}

#[tokio::test]
async fn edits_fan_out_between_sockets() {
    let (url, st, _dir) = start().await;
    let mut a = client(&url).await;
    let mut b = client(&url).await;
    send(&mut a, &Request::AddSpot { timepoint: 3, position: [1.0, 2.0, 1.0], covariance: None, id: None }).await;
    let ack = recv(&mut a).await;
    assert_eq!(ack.kind, "ack");
    let ev = recv(&mut b).await;
    assert_eq!(ev.kind, "addSpot");
    assert_eq!(ev.version, ack.version);
    assert_eq!(ev.payload["timepoint"], 3);

    send(&mut b, &Request::SetTimepoint { timepoint: -3 }).await;
    assert_eq!(recv(&mut b).await.kind, "ack");
    let ev = recv(&mut a).await;
    assert_eq!(ev.payload, json!({"timepoint": 0, "requested": -3, "clamped": true}));
    assert_eq!(st.session().graph().spot_count(), 1);
}

#[tokio::test]
async fn playback_reaches_clients() {
    let (url, st, _dir) = start().await;
    let mut a = client(&url).await;
    let mut b = client(&url).await;
    send(&mut a, &Request::SetTimepoint { timepoint: 3 }).await;
    recv(&mut a).await;
    recv(&mut b).await;
    send(&mut a, &Request::Play { rate: Some(40.0) }).await;
    recv(&mut a).await;
    let mut seen = Vec::new();
    while seen.last() != Some(&0) {
        let ev = recv(&mut b).await;
        assert_eq!(ev.kind, "setTimepoint");
        seen.push(ev.payload["timepoint"].as_i64().unwrap());
    }
    assert_eq!(seen, [2, 1, 0]);
    tokio::time::sleep(Duration::from_millis(100)).await;
    assert!(!st.session().is_playing());
}

#[tokio::test]
async fn malformed_flood_is_survived() {
    let (url, st, _dir) = start().await;
    let mut a = client(&url).await;
    let junk = ["{", "null", r#"{"type":"nope"}"#, r#"{"type":"addSpot","payload":{"timepoint":99,"position":[0,0,0]}}"#, r#"{"type":"moveSpot","payload":{"id":5,"position":[0,0,0]}}"#];
    for i in 0..10_000 {
        a.send(Message::Text(junk[i % junk.len()].into())).await.unwrap();
    }
    for _ in 0..10_000 {
        let r = recv(&mut a).await;
        assert_eq!(r.kind, "reject");
    }
    send(&mut a, &Request::AddSpot { timepoint: 1, position: [1.0; 3], covariance: None, id: None }).await;
    assert_eq!(recv(&mut a).await.kind, "ack");
    let s = st.session();
    assert!(s.graph().validate().is_ok());
    assert_eq!(s.graph().spot_count(), 1);
    assert_eq!(s.stats().rejected, 10_000);
    let _: Value = serde_json::to_value(s.stats()).unwrap();
}
