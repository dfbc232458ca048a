use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::detect::Detection;
use crate::exposure::SeamMaps;
use crate::geom::{Category, Frame};
use crate::tracker::{TrackEvent, TrackedObject};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topic {
    Frames,
    ExposureMaps,
    Detections,
    Tracks,
    Positions,
    Health,
}

impl Topic {
    pub const ALL: [Topic; 6] = [
        Topic::Frames,
        Topic::ExposureMaps,
        Topic::Detections,
        Topic::Tracks,
        Topic::Positions,
        Topic::Health,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Topic::Frames => "frames",
            Topic::ExposureMaps => "exposure-maps",
            Topic::Detections => "detections",
            Topic::Tracks => "tracks",
            Topic::Positions => "positions",
            Topic::Health => "health",
        }
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Topic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Topic::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown topic `{s}`"))
    }
}

/// Tracker output for one processed frame.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackUpdate {
    pub tick: u64,
    pub objects: Vec<TrackedObject>,
    pub events: Vec<TrackEvent>,
}

/// World position of a tracked object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub tick: u64,
    pub id: u64,
    pub category: Category,
    pub east: f64,
    pub north: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum HealthEvent {
    Down {
        component: String,
        tick: u64,
        reason: String,
    },
    Up {
        component: String,
        tick: u64,
        restart: u32,
    },
    Degraded {
        component: String,
        tick: u64,
    },
}

#[derive(Debug, Clone)]
pub enum Payload {
    Frames(Arc<Vec<Frame>>),
    ExposureMaps(Arc<Vec<SeamMaps>>),
    Detections(Vec<Detection>),
    Tracks(Arc<TrackUpdate>),
    Positions(Vec<Position>),
    Health(HealthEvent),
}

impl Payload {
    pub fn topic(&self) -> Topic {
        match self {
            Payload::Frames(_) => Topic::Frames,
            Payload::ExposureMaps(_) => Topic::ExposureMaps,
            Payload::Detections(_) => Topic::Detections,
            Payload::Tracks(_) => Topic::Tracks,
            Payload::Positions(_) => Topic::Positions,
            Payload::Health(_) => Topic::Health,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BusMessage {
    pub topic: Topic,
    pub tick: u64,
    pub publisher: String,
    /// Strictly increasing per publisher and topic.
    pub seq: u64,
    pub payload: Payload,
}

/// Which messages an inbox queue accepts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscription {
    pub topic: Topic,
    /// Only messages from this publisher, if set.
    pub publisher: Option<String>,
    /// Queue length; the oldest message is dropped when full. 1 gives a latest-wins slot.
    pub capacity: usize,
}

impl Subscription {
    pub fn latest(topic: Topic) -> Self {
        Self {
            topic,
            publisher: None,
            capacity: 1,
        }
    }

    pub fn queue(topic: Topic, capacity: usize) -> Self {
        Self {
            topic,
            publisher: None,
            capacity: capacity.max(1),
        }
    }

    pub fn from_publisher(mut self, publisher: &str) -> Self {
        self.publisher = Some(publisher.to_string());
        self
    }

    fn accepts(&self, msg: &BusMessage) -> bool {
        self.topic == msg.topic && self.publisher.as_ref().is_none_or(|p| *p == msg.publisher)
    }
}

struct SubQueue {
    sub: Subscription,
    items: VecDeque<BusMessage>,
    delivered: u64,
    dropped: u64,
}

struct InboxState {
    queues: Vec<SubQueue>,
    closed: bool,
}

/// Per-component set of bounded queues, drained in subscription order.
pub struct Inbox {
    pub owner: String,
    state: Mutex<InboxState>,
    ready: Condvar,
}

pub enum Recv {
    Message(BusMessage),
    Timeout,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueStats {
    pub subscriber: String,
    pub topic: Topic,
    pub publisher: Option<String>,
    pub delivered: u64,
    pub dropped: u64,
}

impl Inbox {
    fn offer(&self, msg: &BusMessage) {
        let mut st = self.state.lock().unwrap();
        if st.closed {
            return;
        }
        let mut any = false;
        for q in st.queues.iter_mut().filter(|q| q.sub.accepts(msg)) {
            if q.items.len() >= q.sub.capacity {
                q.items.pop_front();
                q.dropped += 1;
            }
            q.items.push_back(msg.clone());
            any = true;
        }
        if any {
            self.ready.notify_all();
        }
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Recv {
        let mut st = self.state.lock().unwrap();
        loop {
            if let Some(q) = st.queues.iter_mut().find(|q| !q.items.is_empty()) {
                q.delivered += 1;
                return Recv::Message(q.items.pop_front().expect("non-empty queue"));
            }
            if st.closed {
                return Recv::Closed;
            }
            let (next, res) = self.ready.wait_timeout(st, timeout).unwrap();
            st = next;
            if res.timed_out() && st.queues.iter().all(|q| q.items.is_empty()) {
                return if st.closed {
                    Recv::Closed
                } else {
                    Recv::Timeout
                };
            }
        }
    }

    pub fn pending(&self) -> usize {
        self.state
            .lock()
            .unwrap()
            .queues
            .iter()
            .map(|q| q.items.len())
            .sum()
    }

    /// Drops everything queued, e.g. while the owner restarts.
    pub fn clear(&self) {
        let mut st = self.state.lock().unwrap();
        for q in &mut st.queues {
            q.dropped += q.items.len() as u64;
            q.items.clear();
        }
    }

    pub fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.ready.notify_all();
    }

    pub fn stats(&self) -> Vec<QueueStats> {
        let st = self.state.lock().unwrap();
        st.queues
            .iter()
            .map(|q| QueueStats {
                subscriber: self.owner.clone(),
                topic: q.sub.topic,
                publisher: q.sub.publisher.clone(),
                delivered: q.delivered,
                dropped: q.dropped,
            })
            .collect()
    }
}

#[derive(Default)]
struct BusState {
    inboxes: Vec<Arc<Inbox>>,
    seqs: HashMap<(String, Topic), u64>,
    published: HashMap<Topic, u64>,
}

/// In-process publish/subscribe hub.
#[derive(Clone, Default)]
pub struct Bus {
    state: Arc<Mutex<BusState>>,
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn inbox(&self, owner: &str, subs: Vec<Subscription>) -> Arc<Inbox> {
        let inbox = Arc::new(Inbox {
            owner: owner.to_string(),
            state: Mutex::new(InboxState {
                queues: subs
                    .into_iter()
                    .map(|sub| SubQueue {
                        sub,
                        items: VecDeque::new(),
                        delivered: 0,
                        dropped: 0,
                    })
                    .collect(),
                closed: false,
            }),
            ready: Condvar::new(),
        });
        self.state.lock().unwrap().inboxes.push(inbox.clone());
        inbox
    }

    pub fn publisher(&self, name: &str) -> Publisher {
        Publisher {
            bus: self.clone(),
            name: name.to_string(),
        }
    }

    fn publish(&self, publisher: &str, tick: u64, payload: Payload) -> u64 {
        let topic = payload.topic();
        let mut st = self.state.lock().unwrap();
        let seq = st.seqs.entry((publisher.to_string(), topic)).or_insert(0);
        *seq += 1;
        let seq = *seq;
        *st.published.entry(topic).or_insert(0) += 1;
        let msg = BusMessage {
            topic,
            tick,
            publisher: publisher.to_string(),
            seq,
            payload,
        };
        // delivering under the bus lock keeps sequence order equal to delivery order
        for inbox in &st.inboxes {
            inbox.offer(&msg);
        }
        seq
    }

    pub fn close(&self) {
        for inbox in &self.state.lock().unwrap().inboxes {
            inbox.close();
        }
    }

    pub fn published(&self) -> Vec<(Topic, u64)> {
        let st = self.state.lock().unwrap();
        let mut v: Vec<(Topic, u64)> = st.published.iter().map(|(t, n)| (*t, *n)).collect();
        v.sort();
        v
    }

    pub fn queue_stats(&self) -> Vec<QueueStats> {
        let st = self.state.lock().unwrap();
        st.inboxes.iter().flat_map(|i| i.stats()).collect()
    }
}

/// Publishing handle bound to a component name.
#[derive(Clone)]
pub struct Publisher {
    bus: Bus,
    name: String,
}

impl Publisher {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Returns the sequence number assigned to the message.
    pub fn publish(&self, tick: u64, payload: Payload) -> u64 {
        self.bus.publish(&self.name, tick, payload)
    }
}
