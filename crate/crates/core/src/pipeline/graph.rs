//! Graph assembly, supervision and the paced frame source.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::bus::{
    Bus, HealthEvent, Inbox, Payload, Position, Publisher, QueueStats, Recv, Subscription, Topic,
    TrackUpdate,
};
use super::components::{self, SinkRecord};
use super::config::check_fault_target;
use super::{
    bridge, BusMessage, Component, ComponentSpec, FaultKind, FaultSpec, PipelineConfig,
    PipelineError,
};
use super::{APPLIER, SINK, SOURCE};
use crate::detect::Detection;
use crate::geom::Frame;
use crate::scenegen::{Scene, SceneRenderer};

/// Maps ticks to wall-clock instants for a run.
#[derive(Debug, Clone, Copy)]
pub struct Clock {
    pub start: Instant,
    /// Wall-clock length of one tick.
    pub period: Duration,
    pub speed: f64,
}

impl Clock {
    pub fn new(start: Instant, tick_ms: u64, speed: f64) -> Self {
        Self {
            start,
            period: Duration::from_secs_f64(tick_ms as f64 / 1000.0 / speed),
            speed,
        }
    }

    pub fn scheduled(&self, tick: u64) -> Instant {
        self.start + self.period.mul_f64(tick as f64)
    }

    /// Tick whose slot contains `now`.
    pub fn tick_at(&self, now: Instant) -> u64 {
        let d = now.saturating_duration_since(self.start);
        (d.as_secs_f64() / self.period.as_secs_f64()) as u64
    }

    pub fn to_sim_ms(&self, d: Duration) -> f64 {
        d.as_secs_f64() * 1000.0 * self.speed
    }

    pub fn real(&self, sim_ms: u64) -> Duration {
        Duration::from_secs_f64(sim_ms as f64 / 1000.0 / self.speed)
    }
}

/// Produces the synchronized camera frames of each tick.
pub trait FrameSource: Send + 'static {
    fn frames(&mut self, tick: u64) -> Vec<Frame>;
}

impl FrameSource for SceneRenderer {
    fn frames(&mut self, tick: u64) -> Vec<Frame> {
        self.render_tick(tick).frames
    }
}

impl<F> FrameSource for F
where
    F: FnMut(u64) -> Vec<Frame> + Send + 'static,
{
    fn frames(&mut self, tick: u64) -> Vec<Frame> {
        self(tick)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub ticks: u64,
    pub tick_ms: u64,
    pub speed: f64,
    /// Wall-clock limit on waiting for consumers after the last tick.
    pub drain: Duration,
    pub seam_cost: bool,
    /// Frame sets rendered ahead of their publication.
    pub lookahead: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            ticks: 100,
            tick_ms: 33,
            speed: 1.0,
            drain: Duration::from_secs(2),
            seam_cost: true,
            lookahead: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub name: String,
    pub vital: bool,
    pub restarts: u32,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: usize,
    pub median_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

impl LatencySummary {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut v = samples.to_vec();
        v.sort_by(f64::total_cmp);
        let rank = |q: f64| v[((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Self {
            count: v.len(),
            median_ms: rank(0.5),
            p99_ms: rank(0.99),
            max_ms: v[v.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicCount {
    pub topic: Topic,
    pub published: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub ticks: u64,
    pub tick_ms: u64,
    pub speed: f64,
    pub frames_delivered: u64,
    /// Ticks delivered to the sink within one period of their scheduled time.
    pub on_schedule: u64,
    pub on_schedule_ratio: f64,
    /// Vital-path delivery latency in simulated milliseconds.
    pub latency: LatencySummary,
    /// Mean seam cost per seam over delivered ticks.
    pub mean_seam_cost: Vec<f64>,
    pub topics: Vec<TopicCount>,
    pub queues: Vec<QueueStats>,
    pub components: Vec<ComponentReport>,
    pub health: Vec<HealthEvent>,
    /// Messages seen out of sequence per publisher and topic.
    pub order_violations: u64,
    /// Diagnostic of the vital failure that stopped the run.
    pub aborted: Option<String>,
}

impl RunReport {
    pub fn component(&self, name: &str) -> Option<&ComponentReport> {
        self.components.iter().find(|c| c.name == name)
    }

    pub fn dropped(&self, subscriber: &str) -> u64 {
        self.queues
            .iter()
            .filter(|q| q.subscriber == subscriber)
            .map(|q| q.dropped)
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub tracks: Vec<Arc<TrackUpdate>>,
    pub positions: Vec<Position>,
    pub detections: Vec<(u64, Vec<Detection>)>,
    pub sink: Vec<SinkRecord>,
}

type AbortFlag = Arc<Mutex<Option<String>>>;

struct Supervised {
    spec: ComponentSpec,
    inbox: Arc<Inbox>,
    faults: Vec<FaultSpec>,
    clock: Clock,
    bus: Bus,
    abort: AbortFlag,
    busy: Arc<AtomicBool>,
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

fn supervise(s: Supervised) -> ComponentReport {
    let name = s.spec.name.clone();
    let out = s.bus.publisher(&name);
    let health = s.bus.publisher("supervisor");
    let mut report = ComponentReport {
        name: name.clone(),
        vital: s.spec.vital,
        restarts: 0,
        failures: Vec::new(),
    };
    let mut fired = vec![false; s.faults.len()];
    let mut generation = 0u32;
    loop {
        let built = catch_unwind(AssertUnwindSafe(|| (s.spec.factory)(generation)));
        let (tick, reason) = match built {
            Ok(Ok(mut comp)) => {
                if generation > 0 {
                    let tick = s.clock.tick_at(Instant::now());
                    health.publish(
                        tick,
                        Payload::Health(HealthEvent::Up {
                            component: name.clone(),
                            tick,
                            restart: generation,
                        }),
                    );
                }
                match run_until_failure(&s, comp.as_mut(), &out, &mut fired) {
                    Some(f) => f,
                    None => return report,
                }
            }
            Ok(Err(e)) => (
                s.clock.tick_at(Instant::now()),
                format!("start failed: {e}"),
            ),
            Err(p) => (
                s.clock.tick_at(Instant::now()),
                format!("start panicked: {}", panic_message(p)),
            ),
        };
        tracing::warn!(component = %name, tick, %reason, "component failed");
        report.failures.push(format!("tick {tick}: {reason}"));
        health.publish(
            tick,
            Payload::Health(HealthEvent::Down {
                component: name.clone(),
                tick,
                reason: reason.clone(),
            }),
        );
        if s.spec.vital {
            *s.abort.lock().unwrap() = Some(format!(
                "vital component `{name}` failed at tick {tick}: {reason}"
            ));
            s.bus.close();
            return report;
        }
        if report.restarts >= s.spec.restart.max_restarts {
            tracing::error!(component = %name, "restart limit reached; component stays down");
            return report;
        }
        thread::sleep(s.clock.real(s.spec.restart.backoff_ms));
        s.inbox.clear();
        report.restarts += 1;
        generation += 1;
    }
}

/// `None` once the inbox closes; otherwise the failing tick and reason.
fn run_until_failure(
    s: &Supervised,
    comp: &mut dyn Component,
    out: &Publisher,
    fired: &mut [bool],
) -> Option<(u64, String)> {
    loop {
        let msg = match s.inbox.recv_timeout(Duration::from_millis(50)) {
            Recv::Message(m) => m,
            Recv::Timeout => continue,
            Recv::Closed => return None,
        };
        s.busy.store(true, Ordering::SeqCst);
        let r = catch_unwind(AssertUnwindSafe(|| {
            inject(s, &msg, fired);
            comp.handle(&msg, out)
        }));
        s.busy.store(false, Ordering::SeqCst);
        match r {
            Ok(Ok(())) => {}
            Ok(Err(e)) => return Some((msg.tick, e.to_string())),
            Err(p) => return Some((msg.tick, panic_message(p))),
        }
    }
}

fn inject(s: &Supervised, msg: &BusMessage, fired: &mut [bool]) {
    for (f, done) in s.faults.iter().zip(fired.iter_mut()) {
        if *done || msg.tick < f.at_tick {
            continue;
        }
        *done = true;
        match f.kind {
            FaultKind::Crash => panic!("injected crash at tick {}", msg.tick),
            FaultKind::Stall => {
                tracing::info!(component = %s.spec.name, tick = msg.tick, ms = f.duration_ms, "injected stall");
                thread::sleep(s.clock.real(f.duration_ms));
            }
        }
    }
}

/// Components wired to one bus. The frame source and the sink are added by [`Graph::run`].
#[derive(Default)]
pub struct Graph {
    bus: Bus,
    specs: Vec<ComponentSpec>,
    faults: Vec<FaultSpec>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn add(&mut self, spec: ComponentSpec) -> &mut Self {
        self.specs.push(spec);
        self
    }

    pub fn inject_fault(&mut self, fault: FaultSpec) -> Result<&mut Self, PipelineError> {
        let non_vital: Vec<&str> = self
            .specs
            .iter()
            .filter(|s| !s.vital)
            .map(|s| s.name.as_str())
            .collect();
        if self
            .specs
            .iter()
            .any(|s| s.vital && s.name == fault.component)
        {
            return Err(PipelineError::VitalFault(fault.component));
        }
        check_fault_target(&fault.component, &non_vital)?;
        self.faults.push(fault);
        Ok(self)
    }

    pub fn run(
        mut self,
        mut source: impl FrameSource,
        opts: RunOptions,
    ) -> Result<RunOutput, PipelineError> {
        if !(opts.speed.is_finite() && opts.speed > 0.0) || opts.tick_ms == 0 {
            return Err(PipelineError::Config(
                "speed and tick length must be positive".into(),
            ));
        }
        let bus = self.bus.clone();
        let recorder = bus.inbox(
            "recorder",
            [
                Topic::Detections,
                Topic::Tracks,
                Topic::Positions,
                Topic::Health,
            ]
            .into_iter()
            .map(|t| Subscription::queue(t, usize::MAX))
            .collect(),
        );
        let clock = Clock::new(
            Instant::now() + Duration::from_millis(20),
            opts.tick_ms,
            opts.speed,
        );
        let (tx, sink_rx) = mpsc::channel();
        let seam = opts.seam_cost;
        // first on the bus, so a frame publication wakes the sink before other consumers
        self.specs.insert(
            0,
            ComponentSpec::new(
                SINK,
                true,
                vec![Subscription::latest(Topic::Frames).from_publisher(APPLIER)],
                Box::new(move |_| {
                    Ok(Box::new(components::Sink {
                        clock,
                        seam_cost: seam,
                        records: tx.clone(),
                    }))
                }),
            ),
        );
        let abort: AbortFlag = Arc::default();
        let mut workers = Vec::new();
        let mut watched = Vec::new();
        for spec in self.specs {
            let inbox = bus.inbox(&spec.name, spec.subscriptions.clone());
            let busy = Arc::new(AtomicBool::new(false));
            watched.push((inbox.clone(), busy.clone()));
            let faults = self
                .faults
                .iter()
                .filter(|f| f.component == spec.name)
                .cloned()
                .collect();
            let sup = Supervised {
                spec,
                inbox,
                faults,
                clock,
                bus: bus.clone(),
                abort: abort.clone(),
                busy,
            };
            let name = sup.spec.name.clone();
            workers.push(
                thread::Builder::new()
                    .name(name)
                    .spawn(move || supervise(sup))?,
            );
        }

        let (frame_tx, frame_rx) = mpsc::sync_channel::<Vec<Frame>>(opts.lookahead.max(1));
        let ticks = opts.ticks;
        let ahead = opts.lookahead.max(1) as u64;
        let renderer = thread::Builder::new()
            .name("render".into())
            .spawn(move || {
                for t in 0..ticks {
                    // render in the second half of a period, away from the vital path's work
                    if t >= ahead {
                        let at = clock.scheduled(t - ahead) + clock.period / 2;
                        if let Some(wait) = at.checked_duration_since(Instant::now()) {
                            thread::sleep(wait);
                        }
                    }
                    if frame_tx.send(source.frames(t)).is_err() {
                        break;
                    }
                }
            })?;

        let publisher = bus.publisher(SOURCE);
        for t in 0..ticks {
            if let Some(wait) = clock.scheduled(t).checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
            if abort.lock().unwrap().is_some() {
                break;
            }
            let Ok(frames) = frame_rx.recv() else { break };
            publisher.publish(t, Payload::Frames(Arc::new(frames)));
        }
        drop(frame_rx);

        let deadline = Instant::now() + opts.drain;
        let mut idle_checks = 0;
        while Instant::now() < deadline && idle_checks < 3 && abort.lock().unwrap().is_none() {
            thread::sleep(Duration::from_millis(10));
            let idle = watched
                .iter()
                .all(|(i, b)| i.pending() == 0 && !b.load(Ordering::SeqCst));
            idle_checks = if idle { idle_checks + 1 } else { 0 };
        }
        bus.close();
        let components: Vec<ComponentReport> = workers
            .into_iter()
            .map(|w| w.join().expect("supervisors catch component panics"))
            .collect();
        renderer
            .join()
            .map_err(|_| PipelineError::Config("frame source panicked".into()))?;

        let mut tracks = Vec::new();
        let mut positions = Vec::new();
        let mut detections = Vec::new();
        let mut health = Vec::new();
        let mut last_seq: HashMap<(String, Topic), u64> = HashMap::new();
        let mut order_violations = 0;
        while let Recv::Message(m) = recorder.recv_timeout(Duration::ZERO) {
            let prev = last_seq.insert((m.publisher.clone(), m.topic), m.seq);
            if prev.is_some_and(|p| p >= m.seq) {
                order_violations += 1;
            }
            match m.payload {
                Payload::Tracks(u) => tracks.push(u),
                Payload::Positions(p) => positions.extend(p),
                Payload::Detections(d) => detections.push((m.tick, d)),
                Payload::Health(h) => health.push(h),
                _ => {}
            }
        }
        let sink: Vec<SinkRecord> = sink_rx.try_iter().collect();
        let report = build_report(
            &opts,
            &bus,
            &sink,
            components,
            health,
            order_violations,
            abort.lock().unwrap().clone(),
        );
        Ok(RunOutput {
            report,
            tracks,
            positions,
            detections,
            sink,
        })
    }
}

fn build_report(
    opts: &RunOptions,
    bus: &Bus,
    sink: &[SinkRecord],
    components: Vec<ComponentReport>,
    health: Vec<HealthEvent>,
    order_violations: u64,
    aborted: Option<String>,
) -> RunReport {
    let period = opts.tick_ms as f64;
    let on_schedule = sink.iter().filter(|r| r.latency_ms <= period).count() as u64;
    let latencies: Vec<f64> = sink.iter().map(|r| r.latency_ms).collect();
    let seams = sink.iter().map(|r| r.seam_costs.len()).max().unwrap_or(0);
    let mean_seam_cost = (0..seams)
        .map(|i| {
            let v: Vec<f64> = sink
                .iter()
                .filter_map(|r| r.seam_costs.get(i).copied())
                .collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        })
        .collect();
    RunReport {
        ticks: opts.ticks,
        tick_ms: opts.tick_ms,
        speed: opts.speed,
        frames_delivered: sink.len() as u64,
        on_schedule,
        on_schedule_ratio: if opts.ticks == 0 {
            1.0
        } else {
            on_schedule as f64 / opts.ticks as f64
        },
        latency: LatencySummary::from_samples(&latencies),
        mean_seam_cost,
        topics: bus
            .published()
            .into_iter()
            .map(|(topic, published)| TopicCount { topic, published })
            .collect(),
        queues: bus
            .queue_stats()
            .into_iter()
            .filter(|q| q.subscriber != "recorder")
            .collect(),
        components,
        health,
        order_violations,
        aborted,
    }
}

/// Builds the standard graph for `scene` and runs it.
pub fn run_graph(scene: Arc<Scene>, cfg: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let renderer = SceneRenderer::new(scene.clone());
    let mut g = Graph::new();
    g.add(components::applier_spec());
    g.add(components::exposure_fit_spec(cfg, scene.scenario.tick_ms));
    if cfg.tracking.enabled {
        if cfg.tracking.process {
            g.add(bridge::bridged_tracker_spec(cfg, &scene.scenario));
        } else {
            g.add(components::tracker_spec(cfg, Some(scene.clone())));
        }
        if cfg.positioning {
            g.add(components::positioning_spec(
                cfg,
                &scene,
                renderer.depth_maps().to_vec(),
            ));
        }
    }
    for f in &cfg.faults {
        g.inject_fault(f.clone())?;
    }
    let opts = RunOptions {
        ticks: cfg.ticks.unwrap_or(scene.scenario.ticks),
        tick_ms: scene.scenario.tick_ms,
        speed: cfg.speed,
        drain: Duration::from_millis(cfg.drain_ms),
        seam_cost: cfg.exposure.seam_cost,
        lookahead: 4,
    };
    g.run(renderer, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::components::applier_spec;

    fn gray_source(w: usize, h: usize) -> impl FrameSource {
        move |t: u64| {
            (0..2)
                .map(|c| Frame::filled(c, w, h, [100 + 20 * c as u8; 3]).with_index(t, t * 10))
                .collect()
        }
    }

    fn opts(ticks: u64) -> RunOptions {
        RunOptions {
            ticks,
            tick_ms: 10,
            speed: 1.0,
            drain: Duration::from_millis(500),
            seam_cost: true,
            lookahead: 2,
        }
    }

    #[test]
    fn latency_summary_uses_nearest_rank() {
        let s = LatencySummary::from_samples(&[4.0, 1.0, 3.0, 2.0]);
        assert_eq!(
            (s.count, s.median_ms, s.p99_ms, s.max_ms),
            (4, 2.0, 4.0, 4.0)
        );
        assert_eq!(LatencySummary::from_samples(&[]), LatencySummary::default());
    }

    #[test]
    fn vital_path_delivers_every_tick() {
        let mut g = Graph::new();
        g.add(applier_spec());
        let out = g.run(gray_source(64, 32), opts(30)).unwrap();
        assert_eq!(out.report.frames_delivered, 30);
        assert!(out.report.aborted.is_none());
        assert_eq!(
            out.sink.iter().map(|r| r.tick).collect::<Vec<_>>(),
            (0..30).collect::<Vec<_>>()
        );
        assert_eq!(out.sink[0].seam_costs.len(), 1);
    }

    #[test]
    fn vital_failure_aborts_the_run() {
        let mut g = Graph::new();
        g.add(ComponentSpec::new(
            APPLIER,
            true,
            vec![Subscription::latest(Topic::Frames).from_publisher(SOURCE)],
            Box::new(|_| {
                Ok(Box::new(|m: &BusMessage, _: &Publisher| {
                    if m.tick == 5 {
                        return Err("boom".into());
                    }
                    Ok(())
                }))
            }),
        ));
        let out = g.run(gray_source(16, 16), opts(1000)).unwrap();
        let why = out.report.aborted.unwrap();
        assert!(
            why.contains("exposure-apply") && why.contains("boom"),
            "{why}"
        );
        assert!(out
            .report
            .health
            .iter()
            .any(|h| matches!(h, HealthEvent::Down { .. })));
    }

    #[test]
    fn faults_cannot_target_vital_components() {
        let mut g = Graph::new();
        g.add(applier_spec());
        assert!(matches!(
            g.inject_fault(FaultSpec::crash(APPLIER, 3)),
            Err(PipelineError::VitalFault(_))
        ));
        assert!(matches!(
            g.inject_fault(FaultSpec::stall(SOURCE, 3, 100)),
            Err(PipelineError::VitalFault(_))
        ));
        assert!(matches!(
            g.inject_fault(FaultSpec::crash("ghost", 3)),
            Err(PipelineError::UnknownComponent(_))
        ));
    }

    #[test]
    fn non_vital_crash_restarts_with_new_generation() {
        let mut g = Graph::new();
        g.add(applier_spec());
        let (tx, rx) = mpsc::channel();
        g.add(
            ComponentSpec::new(
                "counter",
                false,
                vec![Subscription::queue(Topic::Frames, 8).from_publisher(APPLIER)],
                Box::new(move |generation| {
                    let tx = tx.clone();
                    Ok(Box::new(move |m: &BusMessage, _: &Publisher| {
                        tx.send((generation, m.tick)).unwrap();
                        Ok(())
                    }))
                }),
            )
            .with_restart(super::super::RestartPolicy {
                max_restarts: 2,
                backoff_ms: 50,
            }),
        );
        g.inject_fault(FaultSpec::crash("counter", 10)).unwrap();
        let out = g.run(gray_source(16, 16), opts(40)).unwrap();
        assert!(out.report.aborted.is_none());
        assert_eq!(out.report.component("counter").unwrap().restarts, 1);
        let seen: Vec<(u32, u64)> = rx.try_iter().collect();
        assert!(seen.iter().all(|&(g, t)| (g == 0) == (t < 10)), "{seen:?}");
        assert!(seen.iter().any(|&(g, _)| g == 1));
        let states: Vec<&str> = out
            .report
            .health
            .iter()
            .map(|h| match h {
                HealthEvent::Down { .. } => "down",
                HealthEvent::Up { .. } => "up",
                HealthEvent::Degraded { .. } => "degraded",
            })
            .collect();
        assert_eq!(states, vec!["down", "up"]);
        assert_eq!(out.report.frames_delivered, 40);
    }
}
