//! Tracker in a child process, connected over a local TCP socket.
//!
//! The parent listens on an ephemeral loopback port and starts
//! `<exe> tracker-worker --connect <addr>`. The first frame on the connection is a JSON
//! [`WorkerInit`]; after that the parent sends frame messages and the worker answers
//! each with its tracker messages, the last of which is always on the tracks topic.

use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::bus::{BusMessage, Payload, Publisher, Topic};
use super::components::{tracker_payloads, tracker_subscriptions, TrackerCore};
use super::wire;
use super::{Component, ComponentError, ComponentSpec, PipelineConfig, PipelineError, TRACKER};
use crate::scenegen::{Scenario, Scene};

const CONNECT_TIMEOUT: Duration = Duration::from_secs(20);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkerInit {
    pub config: PipelineConfig,
    pub scenario: Option<Scenario>,
    pub base_dir: Option<PathBuf>,
    pub generation: u32,
}

pub struct BridgedTracker {
    child: Child,
    stream: TcpStream,
}

impl BridgedTracker {
    pub fn spawn(exe: &Path, init: &WorkerInit) -> Result<Self, PipelineError> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let mut child = Command::new(exe)
            .args(["tracker-worker", "--connect", &addr.to_string()])
            .stdin(Stdio::null())
            .spawn()?;
        listener.set_nonblocking(true)?;
        let start = Instant::now();
        let stream = loop {
            match listener.accept() {
                Ok((s, _)) => break s,
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    if let Some(status) = child.try_wait()? {
                        return Err(PipelineError::Bridge(format!(
                            "worker exited early: {status}"
                        )));
                    }
                    if start.elapsed() > CONNECT_TIMEOUT {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Err(PipelineError::Bridge("worker did not connect".into()));
                    }
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(e.into()),
            }
        };
        stream.set_nonblocking(false)?;
        stream.set_nodelay(true)?;
        let mut this = Self { child, stream };
        let body = serde_json::to_vec(init).map_err(|e| PipelineError::Bridge(e.to_string()))?;
        wire::write_frame(&mut this.stream, &body)
            .map_err(|e| PipelineError::Bridge(e.to_string()))?;
        Ok(this)
    }
}

impl Drop for BridgedTracker {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Component for BridgedTracker {
    fn handle(&mut self, msg: &BusMessage, out: &Publisher) -> Result<(), ComponentError> {
        if msg.topic != Topic::Frames {
            return Ok(());
        }
        wire::send(&mut self.stream, msg)?;
        loop {
            let reply = wire::recv(&mut self.stream)?.ok_or("worker closed the connection")?;
            let last = reply.topic == Topic::Tracks;
            out.publish(reply.tick, reply.payload);
            if last {
                return Ok(());
            }
        }
    }
}

pub fn bridged_tracker_spec(cfg: &PipelineConfig, scenario: &Scenario) -> ComponentSpec {
    let config = cfg.clone();
    let scenario = scenario.clone();
    ComponentSpec::new(
        TRACKER,
        false,
        tracker_subscriptions(cfg),
        Box::new(move |generation| {
            let exe = match &config.tracking.worker_exe {
                Some(p) => p.clone(),
                None => std::env::current_exe()?,
            };
            let init = WorkerInit {
                config: config.clone(),
                base_dir: scenario.base_dir.clone(),
                scenario: Some(scenario.clone()),
                generation,
            };
            Ok(Box::new(BridgedTracker::spawn(&exe, &init)?))
        }),
    )
    .with_restart(cfg.restart)
}

/// Worker side: serves tracker requests until the parent disconnects.
pub fn run_worker(addr: SocketAddr) -> Result<(), PipelineError> {
    let bridge = |e: wire::WireError| PipelineError::Bridge(e.to_string());
    let mut stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;
    let body = wire::read_frame(&mut stream)
        .map_err(bridge)?
        .ok_or_else(|| PipelineError::Bridge("no init message".into()))?;
    let init: WorkerInit =
        serde_json::from_slice(&body).map_err(|e| PipelineError::Bridge(e.to_string()))?;
    let scene = match init.scenario {
        Some(mut s) => {
            s.base_dir = init.base_dir;
            Some(Arc::new(Scene::new(s)?))
        }
        None => None,
    };
    let mut core = TrackerCore::new(&init.config, scene, init.generation)?;
    let mut seq = 0;
    while let Some(msg) = wire::recv(&mut stream).map_err(bridge)? {
        let Payload::Frames(frames) = &msg.payload else {
            continue;
        };
        let r = core
            .process(msg.tick, frames)
            .map_err(|e| PipelineError::Bridge(e.to_string()))?;
        for payload in tracker_payloads(TRACKER, msg.tick, r) {
            seq += 1;
            let reply = BusMessage {
                topic: payload.topic(),
                tick: msg.tick,
                publisher: TRACKER.to_string(),
                seq,
                payload,
            };
            wire::send(&mut stream, &reply).map_err(bridge)?;
        }
    }
    Ok(())
}
