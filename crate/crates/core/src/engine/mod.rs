//! Discrete-event core: clock, event queue, links with drop-tail queues,
//! failure injection, route-server control plane, and traffic.
//!
//! One engine instance runs one scenario in one mode, single-threaded. Events
//! are totally ordered by `(time, scheduling order)`, so a run is a pure
//! function of the scenario, the mode and the seed.

pub mod bundled;
pub mod parse;
pub mod report;
pub mod scenario;
pub mod trace;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adaptive_router::{
    dv_forward, AdaptiveRouter, DropReason, DvTables, FlowEntry, FlowKey, FlowUpdate,
    ForwardAction, LabelAllocator, LocalFailure, UpdateOutcome,
};
use crate::anycast::{Address, AddressPlan, AnycastSession};
use crate::metric::ParameterSet;
use crate::route_server::{FailureHint, LivenessEvent, RerouteOutcome, RouteServer, Stream};
use crate::time::SimTime;
use crate::topology::{LinkId, NodeId, NodeKind, Topology};
use crate::transport::{AckKind, CbrSender, TcpConfig, TcpReceiver, TcpSender};

use scenario::{ActionKind, Destination, Traffic};
pub use scenario::{Scenario, ValidationError};
use trace::{DeliveryRecord, SampleRow, TraceEvent, TraceKind};

const INITIAL_TTL: u8 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// Route servers active, adaptive routers honour flow tables.
    Adaptive,
    /// Route servers silent, every router forwards by distance vector.
    DvBaseline,
}

impl Mode {
    pub fn keyword(self) -> &'static str {
        match self {
            Mode::Adaptive => "adaptive",
            Mode::DvBaseline => "dv-baseline",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown mode `{0}` (expected adaptive or dv-baseline)")]
pub struct ModeParseError(String);

impl FromStr for Mode {
    type Err = ModeParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adaptive" => Ok(Mode::Adaptive),
            "dv-baseline" | "baseline" | "dv" => Ok(Mode::DvBaseline),
            _ => Err(ModeParseError(s.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
struct Packet {
    flow: usize,
    key: FlowKey,
    ack: bool,
    seq: u64,
    dst: NodeId,
    size: u32,
    sent_at: SimTime,
    ttl: u8,
    path: Vec<NodeId>,
}

#[derive(Debug, Clone)]
enum ControlBody {
    RouteRequest { flow: FlowKey, link: LinkId },
    LinkRestored { link: LinkId },
    Update(FlowUpdate),
    Probe { k: u64 },
    Echo { k: u64 },
}

#[derive(Debug, Clone)]
struct ControlMsg {
    id: u64,
    src: NodeId,
    dst: NodeId,
    body: ControlBody,
    ttl: u8,
}

impl ControlMsg {
    fn describe(&self) -> String {
        let what = match &self.body {
            ControlBody::RouteRequest { flow, .. } => format!("route-request {flow}"),
            ControlBody::LinkRestored { .. } => "link-restored".to_string(),
            ControlBody::Update(u) => format!("flow-update {}", u.key),
            ControlBody::Probe { k } => format!("probe {k}"),
            ControlBody::Echo { k } => format!("echo {k}"),
        };
        format!("msg={} {what} {}->{}", self.id, self.src, self.dst)
    }
}

#[derive(Debug, Clone)]
enum Ev {
    Action(usize),
    FlowStart(usize),
    FlowStop(usize),
    TxDone {
        link: LinkId,
        gen: u64,
    },
    Arrive {
        link: LinkId,
        gen: u64,
        pkt: Packet,
    },
    Control {
        link: LinkId,
        gen: u64,
        msg: ControlMsg,
    },
    RtoCheck {
        flow: usize,
    },
    CbrSend {
        flow: usize,
    },
    DvRound,
    KeepAlive {
        rs: NodeId,
        k: u64,
    },
    RsCompute {
        rs: NodeId,
        flow: FlowKey,
        hint: Option<FailureHint>,
    },
    Window {
        k: u64,
    },
}

struct Scheduled {
    time: SimTime,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Scheduled {
    fn eq(&self, o: &Self) -> bool {
        (self.time, self.seq) == (o.time, o.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Scheduled {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, o: &Self) -> Ordering {
        (o.time, o.seq).cmp(&(self.time, self.seq))
    }
}

#[derive(Debug, Default)]
struct LinkRt {
    queue: VecDeque<Packet>,
    in_tx: Option<Packet>,
    gen: u64,
    prop: SimTime,
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
enum TrafficRt {
    Tcp {
        sender: TcpSender,
        receiver: TcpReceiver,
    },
    Cbr {
        sender: CbrSender,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PacketCounts {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// Still queued, transmitting or propagating when the run ended.
    pub in_network: u64,
}

impl PacketCounts {
    pub fn conserved(&self) -> bool {
        self.sent == self.delivered + self.dropped + self.in_network
    }
}

struct FlowRt {
    name: String,
    decl: usize,
    src: NodeId,
    dst: NodeId,
    key: FlowKey,
    session: Option<AnycastSession>,
    traffic: TrafficRt,
    params: ParameterSet,
    rs: Option<NodeId>,
    active: bool,
    started: bool,
    meter: crate::transport::ThroughputMeter,
    counts: PacketCounts,
    data_sent: u64,
    timer_at: Option<SimTime>,
    srtt_at_failure: Option<f64>,
    labels: Vec<u32>,
    snapshots: Vec<(Option<f64>, Option<f64>, String)>,
}

/// Per-flow summary of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSummary {
    pub name: String,
    /// Acknowledged bytes for TCP, delivered bytes for constant-rate flows.
    pub bytes: u64,
    pub data: PacketCounts,
    pub acks: PacketCounts,
    pub srtt_at_failure: Option<f64>,
    /// Every label the flow used, in order.
    pub labels: Vec<u32>,
    pub timeouts: u64,
    pub fast_retransmits: u64,
}

/// DV state after one synchronous round.
#[derive(Debug, Clone, PartialEq)]
pub struct DvRoundRecord {
    pub time: SimTime,
    /// 1-based index within the current reconvergence episode.
    pub index: usize,
    pub changed: bool,
    /// Per flow: whether DV alone forwards both directions end to end.
    pub flow_paths_valid: Vec<(String, bool)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouterStats {
    pub router: NodeId,
    pub lookups: u64,
    pub packets: u64,
}

/// Everything a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    pub duration: SimTime,
    pub window: SimTime,
    pub segment_size: u32,
    /// Canonical text of the topology and action list; equal fingerprints mean comparable runs.
    pub fingerprint: String,
    pub failure_at: Option<SimTime>,
    pub repair_at: Option<SimTime>,
    pub events: Vec<TraceEvent>,
    pub samples: Vec<SampleRow>,
    pub deliveries: Vec<DeliveryRecord>,
    pub flows: Vec<FlowSummary>,
    pub dv_rounds: Vec<DvRoundRecord>,
    pub routers: Vec<RouterStats>,
    /// Flow tables of every adaptive router at the end of the run.
    pub tables: BTreeMap<NodeId, Vec<FlowEntry>>,
}

impl RunOutput {
    pub fn events_csv(&self) -> String {
        trace::events_csv(&self.events)
    }

    pub fn throughput_csv(&self) -> String {
        trace::throughput_csv(&self.samples)
    }

    pub fn events_of(&self, kind: TraceKind) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn flow(&self, name: &str) -> Option<&FlowSummary> {
        self.flows.iter().find(|f| f.name == name)
    }

    pub fn samples_of<'a>(&'a self, flow: &'a str) -> impl Iterator<Item = &'a SampleRow> + 'a {
        self.samples.iter().filter(move |s| s.flow == flow)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("{0}")]
    Validation(#[from] ValidationError),
}

/// A ready-to-run simulation.
pub struct Engine {
    scenario: Scenario,
    mode: Mode,
    plan: AddressPlan,
    topo: Topology,
    dv: DvTables,
    now: SimTime,
    end: SimTime,
    window: SimTime,
    heap: BinaryHeap<Scheduled>,
    seq: u64,
    links: Vec<LinkRt>,
    routers: BTreeMap<NodeId, AdaptiveRouter>,
    servers: BTreeMap<NodeId, RouteServer>,
    echoes: BTreeMap<(NodeId, NodeId), u64>,
    restored_to: BTreeMap<(NodeId, LinkId), BTreeSet<NodeId>>,
    flows: Vec<FlowRt>,
    labels: LabelAllocator,
    tcp: TcpConfig,
    control_ids: u64,
    dv_pending: bool,
    dv_index: usize,
    failure_seen: bool,
    events: Vec<TraceEvent>,
    deliveries: Vec<DeliveryRecord>,
    dv_rounds: Vec<DvRoundRecord>,
}

impl Engine {
    pub fn new(scenario: &Scenario, mode: Mode) -> Result<Self, EngineError> {
        scenario.validate()?;
        let sc = scenario.clone();
        let mut topo = sc.topology()?;
        let mut rng = ChaCha8Rng::seed_from_u64(sc.sim.seed);
        rng.set_stream(1);
        // jitter: one draw per directed link, in declaration order
        for l in &sc.links {
            if l.jitter <= 0.0 {
                continue;
            }
            let dirs: Vec<(NodeId, NodeId)> = if l.bidirectional {
                vec![(l.a, l.b), (l.b, l.a)]
            } else {
                vec![(l.a, l.b)]
            };
            for (a, b) in dirs {
                let id = topo.link_between(a, b).expect("validated link");
                let extra: f64 = rng.gen_range(0.0..=l.jitter);
                topo.set_link_delay(id, l.spec.delay + extra);
            }
        }
        let links = topo
            .links()
            .map(|(_, l)| LinkRt {
                prop: SimTime::from_secs_f64(l.delay),
                ..LinkRt::default()
            })
            .collect();
        let authorized: Vec<NodeId> = sc
            .route_servers
            .iter()
            .filter(|r| r.config.authorized)
            .map(|r| r.node)
            .collect();
        let routers = topo
            .nodes_of_kind(NodeKind::AdaptiveRouter)
            .map(|r| (r, AdaptiveRouter::new(r, authorized.iter().copied())))
            .collect();
        let mut servers = BTreeMap::new();
        if mode == Mode::Adaptive {
            for r in sc.route_servers.iter().filter(|r| r.config.authorized) {
                let mut rs = RouteServer::new(r.node, r.config.clone());
                for a in topo.nodes_of_kind(NodeKind::AdaptiveRouter) {
                    rs.monitor(a);
                }
                servers.insert(r.node, rs);
            }
        }
        let window = SimTime::from_secs_f64(sc.sim.window);
        let tcp = TcpConfig {
            segment_size: sc.sim.segment_size,
            ..TcpConfig::default()
        };
        let plan = sc.plan();
        let default_rs = sc.default_route_server();
        let flows = sc
            .flows
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let dst = match f.dst {
                    Destination::Node(n) => n,
                    Destination::Group(_) => f.src,
                };
                FlowRt {
                    name: f.name.clone(),
                    decl: i,
                    src: f.src,
                    dst,
                    key: FlowKey::new(0, plan.unicast(f.src), plan.unicast(dst)),
                    session: None,
                    traffic: match f.traffic {
                        Traffic::Tcp(v) => TrafficRt::Tcp {
                            sender: TcpSender::new(v, tcp),
                            receiver: TcpReceiver::new(),
                        },
                        Traffic::Cbr(rate) => TrafficRt::Cbr {
                            sender: CbrSender::new(rate * 1000.0, sc.sim.segment_size),
                        },
                    },
                    params: sc.params_of(f),
                    rs: f.rs.or(default_rs),
                    active: false,
                    started: false,
                    meter: crate::transport::ThroughputMeter::new(window),
                    counts: PacketCounts::default(),
                    data_sent: 0,
                    timer_at: None,
                    srtt_at_failure: None,
                    labels: Vec::new(),
                    snapshots: Vec::new(),
                }
            })
            .collect();
        let dv = DvTables::converged(&topo);
        let mut e = Self {
            end: SimTime::from_secs_f64(sc.sim.duration),
            scenario: sc,
            mode,
            plan,
            topo,
            dv,
            now: SimTime::ZERO,
            window,
            heap: BinaryHeap::new(),
            seq: 0,
            links,
            routers,
            servers,
            echoes: BTreeMap::new(),
            restored_to: BTreeMap::new(),
            flows,
            labels: LabelAllocator::default(),
            tcp,
            control_ids: 0,
            dv_pending: false,
            dv_index: 0,
            failure_seen: false,
            events: Vec::new(),
            deliveries: Vec::new(),
            dv_rounds: Vec::new(),
        };
        e.schedule_initial();
        Ok(e)
    }

    fn schedule_initial(&mut self) {
        let actions: Vec<f64> = self.scenario.actions.iter().map(|a| a.time).collect();
        for (i, t) in actions.into_iter().enumerate() {
            self.at(SimTime::from_secs_f64(t), Ev::Action(i));
        }
        let flows: Vec<(f64, Option<f64>)> = self
            .scenario
            .flows
            .iter()
            .map(|f| (f.start, f.stop))
            .collect();
        for (i, (start, stop)) in flows.into_iter().enumerate() {
            self.at(SimTime::from_secs_f64(start), Ev::FlowStart(i));
            if let Some(s) = stop {
                self.at(SimTime::from_secs_f64(s), Ev::FlowStop(i));
            }
        }
        let servers: Vec<(NodeId, f64)> = self
            .servers
            .values()
            .map(|s| (s.id, s.config.keepalive_phase))
            .collect();
        for (rs, phase) in servers {
            self.at(SimTime::from_secs_f64(phase), Ev::KeepAlive { rs, k: 0 });
        }
        let mut k = 1;
        while SimTime(k * self.window.nanos()) <= self.end {
            self.at(SimTime(k * self.window.nanos()), Ev::Window { k });
            k += 1;
        }
    }

    fn at(&mut self, time: SimTime, ev: Ev) {
        debug_assert!(time >= self.now, "event scheduled in the past");
        self.seq += 1;
        self.heap.push(Scheduled {
            time,
            seq: self.seq,
            ev,
        });
    }

    fn after(&mut self, delay: SimTime, ev: Ev) {
        self.at(self.now + delay, ev);
    }

    fn log(&mut self, node: Option<NodeId>, kind: TraceKind, detail: impl Into<String>) {
        self.events.push(TraceEvent {
            time: self.now,
            node,
            kind,
            detail: detail.into(),
        });
    }

    /// Runs to the scenario duration and collects the outputs.
    pub fn run(mut self) -> RunOutput {
        while let Some(top) = self.heap.peek() {
            if top.time > self.end {
                break;
            }
            let Scheduled { time, ev, .. } = self.heap.pop().expect("peeked");
            debug_assert!(time >= self.now);
            self.now = time;
            self.dispatch(ev);
        }
        self.now = self.end;
        self.finish()
    }

    fn dispatch(&mut self, ev: Ev) {
        match ev {
            Ev::Action(i) => self.on_action(i),
            Ev::FlowStart(i) => self.on_flow_start(i),
            Ev::FlowStop(i) => self.on_flow_stop(i),
            Ev::TxDone { link, gen } => self.on_tx_done(link, gen),
            Ev::Arrive { link, gen, pkt } => self.on_arrive(link, gen, pkt),
            Ev::Control { link, gen, msg } => self.on_control_arrive(link, gen, msg),
            Ev::RtoCheck { flow } => self.on_rto_check(flow),
            Ev::CbrSend { flow } => self.on_cbr_send(flow),
            Ev::DvRound => self.on_dv_round(),
            Ev::KeepAlive { rs, k } => self.on_keepalive(rs, k),
            Ev::RsCompute { rs, flow, hint } => self.on_rs_compute(rs, flow, hint),
            Ev::Window { k } => self.on_window(k),
        }
    }

    // ---- links and forwarding ----

    fn tx_time(&self, link: LinkId, size: u32) -> SimTime {
        let bw = self.topo.link(link).bandwidth * 1000.0;
        SimTime::from_secs_f64(f64::from(size) / bw)
    }

    fn drop_packet(&mut self, pkt: Packet, reason: DropReason, node: NodeId) {
        self.flows[pkt.flow].counts.dropped += 1;
        let detail = format!(
            "flow={} label={} {}={} reason={}",
            self.flows[pkt.flow].name,
            pkt.key.label.value(),
            if pkt.ack { "ack" } else { "seq" },
            pkt.seq,
            reason.as_str()
        );
        self.log(Some(node), TraceKind::Drop, detail);
    }

    fn enqueue(&mut self, link: LinkId, pkt: Packet) {
        let src = self.topo.link(link).src;
        if !self.topo.is_up(link) {
            return self.drop_packet(pkt, DropReason::LinkDown, src);
        }
        let rt = &mut self.links[link.index()];
        if rt.in_tx.is_none() {
            self.start_tx(link, pkt);
        } else if rt.queue.len() >= self.scenario.sim.queue_capacity {
            self.drop_packet(pkt, DropReason::QueueOverflow, src);
        } else {
            rt.queue.push_back(pkt);
        }
    }

    fn start_tx(&mut self, link: LinkId, pkt: Packet) {
        let t = self.tx_time(link, pkt.size);
        let gen = self.links[link.index()].gen;
        self.links[link.index()].in_tx = Some(pkt);
        self.after(t, Ev::TxDone { link, gen });
    }

    fn on_tx_done(&mut self, link: LinkId, gen: u64) {
        let rt = &mut self.links[link.index()];
        if rt.gen != gen {
            return;
        }
        let Some(pkt) = rt.in_tx.take() else { return };
        let prop = rt.prop;
        let next = rt.queue.pop_front();
        self.after(prop, Ev::Arrive { link, gen, pkt });
        if let Some(n) = next {
            self.start_tx(link, n);
        }
    }

    fn on_arrive(&mut self, link: LinkId, gen: u64, pkt: Packet) {
        let dst = self.topo.link(link).dst;
        if self.links[link.index()].gen != gen {
            return self.drop_packet(pkt, DropReason::LinkDown, dst);
        }
        self.receive(dst, pkt);
    }

    fn receive(&mut self, at: NodeId, mut pkt: Packet) {
        pkt.path.push(at);
        if at == pkt.dst {
            return self.deliver(pkt);
        }
        if !self.topo.kind(at).is_router() {
            return self.drop_packet(pkt, DropReason::NotForMe, at);
        }
        if pkt.ttl == 0 {
            return self.drop_packet(pkt, DropReason::HopLimit, at);
        }
        pkt.ttl -= 1;
        self.route(at, pkt);
    }

    fn route(&mut self, at: NodeId, pkt: Packet) {
        let action = match (self.mode, self.routers.get_mut(&at)) {
            (Mode::Adaptive, Some(r)) => {
                let f = r.forward(&self.topo, &self.dv, Some(&pkt.key), pkt.dst);
                if let Some(failure) = f.failure {
                    self.local_failure(failure);
                }
                f.action
            }
            (_, Some(r)) => {
                r.stats.packets += 1;
                dv_forward(&self.topo, &self.dv, at, pkt.dst)
            }
            _ => dv_forward(&self.topo, &self.dv, at, pkt.dst),
        };
        match action {
            ForwardAction::Forward { link, .. } => self.enqueue(link, pkt),
            ForwardAction::Drop(r) => self.drop_packet(pkt, r, at),
        }
    }

    /// Injects a packet at its source host.
    fn emit(&mut self, fi: usize, ack: bool, seq: u64) {
        let f = &mut self.flows[fi];
        let (key, src, dst, size) = if ack {
            (f.key.reverse(), f.dst, f.src, self.tcp.ack_size)
        } else {
            (f.key, f.src, f.dst, self.tcp.segment_size)
        };
        f.counts.sent += 1;
        if !ack {
            f.data_sent += 1;
        }
        let pkt = Packet {
            flow: fi,
            key,
            ack,
            seq,
            dst,
            size,
            sent_at: self.now,
            ttl: INITIAL_TTL,
            path: vec![src],
        };
        match dv_forward(&self.topo, &self.dv, src, dst) {
            ForwardAction::Forward { link, .. } => self.enqueue(link, pkt),
            ForwardAction::Drop(r) => self.drop_packet(pkt, r, src),
        }
    }

    fn kill_link(&mut self, link: LinkId) {
        let src = self.topo.link(link).src;
        let rt = &mut self.links[link.index()];
        rt.gen += 1;
        let mut dead: Vec<Packet> = rt.in_tx.take().into_iter().collect();
        dead.extend(rt.queue.drain(..));
        for p in dead {
            self.drop_packet(p, DropReason::LinkDown, src);
        }
    }

    // ---- delivery and transport ----

    fn deliver(&mut self, pkt: Packet) {
        let fi = pkt.flow;
        let expected = if pkt.ack {
            self.flows[fi].key.reverse()
        } else {
            self.flows[fi].key
        };
        if pkt.key != expected {
            let at = pkt.dst;
            return self.drop_packet(pkt, DropReason::StreamClosed, at);
        }
        let f = &mut self.flows[fi];
        f.counts.delivered += 1;
        self.deliveries.push(DeliveryRecord {
            time: self.now,
            flow: f.name.clone(),
            label: pkt.key.label.value(),
            ack: pkt.ack,
            seq: pkt.seq,
            dst: pkt.dst,
            sent_at: pkt.sent_at,
            path: pkt.path.clone(),
        });
        if !pkt.ack {
            let detail = format!(
                "flow={} label={} seq={} dst={}",
                f.name,
                pkt.key.label.value(),
                pkt.seq,
                pkt.dst
            );
            self.log(Some(pkt.dst), TraceKind::Deliver, detail);
        }
        let now = self.now;
        let f = &mut self.flows[fi];
        match &mut f.traffic {
            TrafficRt::Cbr { .. } => {
                f.meter.record(now, u64::from(pkt.size));
            }
            TrafficRt::Tcp { receiver, .. } if !pkt.ack => {
                let (ack, _) = receiver.on_segment(pkt.seq);
                self.emit(fi, true, ack);
            }
            TrafficRt::Tcp { sender, .. } => {
                let before = sender.high_ack;
                let kind = sender.on_ack(pkt.seq, now);
                let newly = sender.high_ack - before;
                f.meter
                    .record(now, newly * u64::from(self.tcp.segment_size));
                if let AckKind::FastRetransmit { seq } = kind {
                    let reno = sender.variant == crate::transport::TcpVariant::Reno;
                    let detail = format!("flow={} seq={seq}", f.name);
                    let src = f.src;
                    self.log(Some(src), TraceKind::FastRetransmit, detail);
                    if reno && self.flows[fi].active {
                        self.emit(fi, false, seq);
                    }
                }
                self.pump(fi);
            }
        }
    }

    /// Sends whatever the TCP window allows and keeps the timer event in sync.
    fn pump(&mut self, fi: usize) {
        let now = self.now;
        let f = &mut self.flows[fi];
        let TrafficRt::Tcp { sender, .. } = &mut f.traffic else {
            return;
        };
        let segs = if f.active {
            sender.poll_send(now)
        } else {
            Vec::new()
        };
        let deadline = sender.rto_deadline;
        for s in segs {
            self.emit(fi, false, s);
        }
        let f = &mut self.flows[fi];
        if let Some(d) = deadline {
            if f.timer_at != Some(d) {
                f.timer_at = Some(d);
                self.at(d, Ev::RtoCheck { flow: fi });
            }
        }
    }

    fn on_rto_check(&mut self, fi: usize) {
        let now = self.now;
        let f = &mut self.flows[fi];
        if !f.active {
            return;
        }
        let TrafficRt::Tcp { sender, .. } = &mut f.traffic else {
            return;
        };
        if sender.rto_deadline != Some(now) || sender.in_flight() == 0 {
            return;
        }
        let seq = sender.on_timeout(now);
        let detail = format!("flow={} seq={seq} rto={}", f.name, sender.rto);
        let src = f.src;
        self.log(Some(src), TraceKind::Timeout, detail);
        self.pump(fi);
    }

    fn on_cbr_send(&mut self, fi: usize) {
        let f = &mut self.flows[fi];
        if !f.active {
            return;
        }
        let TrafficRt::Cbr { sender } = &mut f.traffic else {
            return;
        };
        let seq = sender.next_packet();
        let dt = sender.interval();
        self.emit(fi, false, seq);
        self.after(dt, Ev::CbrSend { flow: fi });
    }

    fn on_window(&mut self, _k: u64) {
        for f in &mut self.flows {
            let snap = match &f.traffic {
                TrafficRt::Tcp { sender, .. } if f.started => (
                    Some(sender.cwnd),
                    Some(sender.ssthresh),
                    sender.state.to_string(),
                ),
                TrafficRt::Tcp { .. } => (None, None, "idle".to_string()),
                TrafficRt::Cbr { .. } => (None, None, "cbr".to_string()),
            };
            f.snapshots.push(snap);
        }
    }

    // ---- flows ----

    fn on_flow_start(&mut self, fi: usize) {
        let decl = self.scenario.flows[self.flows[fi].decl].clone();
        let src = decl.src;
        let src_addr = self.plan.unicast(src);
        match &decl.dst {
            Destination::Node(d) => {
                let label = self.labels.next(src_addr, self.plan.unicast(*d));
                self.flows[fi].key = FlowKey::new(label, src_addr, self.plan.unicast(*d));
            }
            Destination::Group(g) => {
                let Some(group) = self.scenario.anycast_group(&self.topo, g) else {
                    return self.log(
                        Some(src),
                        TraceKind::ActionRejected,
                        format!("flow={} unknown group", decl.name),
                    );
                };
                match AnycastSession::open(group, src, src_addr, &mut self.labels, &self.topo) {
                    Ok(s) => {
                        let f = &mut self.flows[fi];
                        f.key = s.current();
                        f.dst = s.resolved_member().host;
                        f.session = Some(s);
                    }
                    Err(e) => {
                        return self.log(
                            Some(src),
                            TraceKind::FlowStalled,
                            format!("flow={} {e}", decl.name),
                        );
                    }
                }
                let f = &self.flows[fi];
                let detail = format!("flow={} member={}", f.name, self.plan.unicast(f.dst));
                self.log(Some(src), TraceKind::AnycastResolved, detail);
            }
        }
        let f = &mut self.flows[fi];
        f.active = true;
        f.started = true;
        f.labels.push(f.key.label.value());
        let (name, key) = (f.name.clone(), f.key);
        self.log(Some(src), TraceKind::FlowStart, format!("flow={name}"));
        self.log(
            Some(src),
            TraceKind::StreamOpen,
            format!("flow={name} key={key}"),
        );
        self.register_streams(fi);
        match self.flows[fi].traffic {
            TrafficRt::Tcp { .. } => self.pump(fi),
            TrafficRt::Cbr { .. } => self.on_cbr_send(fi),
        }
    }

    fn on_flow_stop(&mut self, fi: usize) {
        let f = &mut self.flows[fi];
        if !f.active {
            return;
        }
        f.active = false;
        let (src, name) = (f.src, f.name.clone());
        self.log(Some(src), TraceKind::FlowStop, format!("flow={name}"));
        self.unregister_streams(fi);
    }

    fn streams_of(&self, fi: usize) -> [Stream; 2] {
        let f = &self.flows[fi];
        let excluded: BTreeSet<Address> = f
            .session
            .as_ref()
            .map(|s| s.exclusions.excluded.clone())
            .unwrap_or_default();
        let mk = |key: FlowKey, src, dst| Stream {
            key,
            src,
            dst,
            params: f.params,
            excluded_addresses: excluded.clone(),
            route: None,
        };
        [mk(f.key, f.src, f.dst), mk(f.key.reverse(), f.dst, f.src)]
    }

    fn register_streams(&mut self, fi: usize) {
        let Some(rs) = self.flows[fi].rs else { return };
        if !self.servers.contains_key(&rs) {
            return;
        }
        for s in self.streams_of(fi) {
            let server = self.servers.get_mut(&rs).expect("checked");
            if let Ok(out) = server.register(&self.topo, s) {
                self.apply_outcome(rs, out);
            }
        }
    }

    fn unregister_streams(&mut self, fi: usize) {
        let Some(rs) = self.flows[fi].rs else { return };
        let Some(server) = self.servers.get_mut(&rs) else {
            return;
        };
        let f = &self.flows[fi];
        let mut updates = server.unregister(&self.topo, &f.key);
        updates.extend(server.unregister(&self.topo, &f.key.reverse()));
        for u in updates {
            self.send_control(rs, u.router, ControlBody::Update(u));
        }
    }

    fn flow_name_of(&self, key: &FlowKey) -> String {
        self.flows
            .iter()
            .find(|f| f.key == *key || f.key.reverse() == *key)
            .map(|f| f.name.clone())
            .unwrap_or_else(|| key.to_string())
    }

    fn apply_outcome(&mut self, rs: NodeId, out: RerouteOutcome) {
        for (key, route) in &out.rerouted {
            let path: Vec<String> = route
                .nodes(&self.topo)
                .iter()
                .map(|n| n.to_string())
                .collect();
            let detail = format!(
                "flow={} key={key} path={} cost={}",
                self.flow_name_of(key),
                path.join("-"),
                route.total_cost
            );
            self.log(Some(rs), TraceKind::RouteComputed, detail);
        }
        for key in &out.stalled {
            let detail = format!("flow={} key={key}", self.flow_name_of(key));
            self.log(Some(rs), TraceKind::FlowStalled, detail);
        }
        for u in out.updates {
            self.send_control(rs, u.router, ControlBody::Update(u));
        }
    }

    // ---- control plane ----

    fn send_control(&mut self, src: NodeId, dst: NodeId, body: ControlBody) {
        self.control_ids += 1;
        let msg = ControlMsg {
            id: self.control_ids,
            src,
            dst,
            body,
            ttl: INITIAL_TTL,
        };
        self.forward_control(src, msg);
    }

    /// Control traffic follows DV next hops, pays propagation delay only, and
    /// is lost on down links.
    fn forward_control(&mut self, at: NodeId, mut msg: ControlMsg) {
        if at == msg.dst {
            return self.handle_control(msg);
        }
        if at != msg.src && !self.topo.kind(at).is_router() || msg.ttl == 0 {
            let d = msg.describe();
            return self.log(
                Some(at),
                TraceKind::ControlDrop,
                format!("{d} reason=no-route"),
            );
        }
        msg.ttl -= 1;
        let link = self
            .dv
            .next_hop(at, msg.dst)
            .and_then(|n| self.topo.link_between(at, n));
        match link {
            Some(l) if self.topo.is_up(l) => {
                let gen = self.links[l.index()].gen;
                let prop = self.links[l.index()].prop;
                self.after(prop, Ev::Control { link: l, gen, msg });
            }
            Some(_) => {
                let d = msg.describe();
                self.log(
                    Some(at),
                    TraceKind::ControlDrop,
                    format!("{d} reason=link-down"),
                );
            }
            None => {
                let d = msg.describe();
                self.log(
                    Some(at),
                    TraceKind::ControlDrop,
                    format!("{d} reason=no-route"),
                );
            }
        }
    }

    fn on_control_arrive(&mut self, link: LinkId, gen: u64, msg: ControlMsg) {
        let at = self.topo.link(link).dst;
        if self.links[link.index()].gen != gen {
            let d = msg.describe();
            return self.log(
                Some(at),
                TraceKind::ControlDrop,
                format!("{d} reason=link-down"),
            );
        }
        self.forward_control(at, msg);
    }

    fn handle_control(&mut self, msg: ControlMsg) {
        let at = msg.dst;
        match msg.body {
            ControlBody::RouteRequest { flow, link } => {
                let Some(rs) = self.servers.get(&at) else {
                    return;
                };
                let latency = SimTime::from_secs_f64(rs.config.response_latency);
                let l = self.topo.link(link);
                let detail = format!(
                    "flow={} key={flow} from={} link={}->{}",
                    self.flow_name_of(&flow),
                    msg.src,
                    l.src,
                    l.dst
                );
                self.log(Some(at), TraceKind::RouteRequest, detail);
                let hint = FailureHint {
                    link,
                    reported_at: self.now,
                };
                self.after(
                    latency,
                    Ev::RsCompute {
                        rs: at,
                        flow,
                        hint: Some(hint),
                    },
                );
            }
            ControlBody::LinkRestored { link } => {
                let now = self.now;
                if let Some(rs) = self.servers.get_mut(&at) {
                    rs.handle_link_restored(&self.topo, link, now);
                }
            }
            ControlBody::Update(u) => self.apply_update(at, u),
            ControlBody::Probe { k } => {
                self.send_control(at, msg.src, ControlBody::Echo { k });
            }
            ControlBody::Echo { k } => {
                let slot = self.echoes.entry((at, msg.src)).or_insert(k);
                *slot = (*slot).max(k);
            }
        }
    }

    fn apply_update(&mut self, at: NodeId, u: FlowUpdate) {
        let now = self.now;
        let Some(router) = self.routers.get_mut(&at) else {
            return self.log(
                Some(at),
                TraceKind::ActionRejected,
                format!("flow-update for non-adaptive node {at}"),
            );
        };
        let outcome = router.apply_flow_update(&self.topo, &u, now);
        let name = self.flow_name_of(&u.key);
        let via = u
            .next_hop
            .map(|n| n.to_string())
            .unwrap_or_else(|| "-".into());
        let detail = format!("flow={name} key={} via={via} issuer={}", u.key, u.issuer);
        let kind = match outcome {
            UpdateOutcome::Installed => TraceKind::FlowUpdate,
            UpdateOutcome::Withdrawn => TraceKind::FlowWithdraw,
            UpdateOutcome::Refused => TraceKind::SecurityRefusal,
            UpdateOutcome::Invalid => TraceKind::ActionRejected,
        };
        self.log(Some(at), kind, detail);
    }

    fn local_failure(&mut self, f: LocalFailure) {
        let l = self.topo.link(f.link);
        let detail = format!(
            "flow={} key={} link={}->{}",
            self.flow_name_of(&f.flow),
            f.flow,
            l.src,
            l.dst
        );
        self.log(Some(f.router), TraceKind::LocalFailureDetected, detail);
        let rs = self
            .routers
            .get(&f.router)
            .and_then(|r| r.entry(&f.flow))
            .map(|e| e.installed_by);
        if let Some(rs) = rs {
            self.restored_to
                .entry((f.router, f.link))
                .or_default()
                .insert(rs);
            self.send_control(
                f.router,
                rs,
                ControlBody::RouteRequest {
                    flow: f.flow,
                    link: f.link,
                },
            );
        }
    }

    fn on_rs_compute(&mut self, rs: NodeId, flow: FlowKey, hint: Option<FailureHint>) {
        let now = self.now;
        let Some(server) = self.servers.get_mut(&rs) else {
            return;
        };
        match server.handle_reroute_request(&self.topo, flow, hint, now) {
            Ok(out) => self.apply_outcome(rs, out),
            Err(e) => self.log(Some(rs), TraceKind::ActionRejected, e.to_string()),
        }
    }

    fn on_keepalive(&mut self, rs: NodeId, k: u64) {
        let now = self.now;
        let Some(server) = self.servers.get(&rs) else {
            return;
        };
        let monitored: Vec<NodeId> = server.monitored().collect();
        let interval = SimTime::from_secs_f64(server.config.keepalive_interval);
        let phase = SimTime::from_secs_f64(server.config.keepalive_phase);
        for r in monitored {
            if k > 0 {
                let responded = self.echoes.get(&(rs, r)) == Some(&(k - 1));
                let server = self.servers.get_mut(&rs).expect("present");
                let (ev, out) = server.on_keepalive(&self.topo, r, responded, now);
                match ev {
                    Some(LivenessEvent::RouterPresumedDead(x)) => self.log(
                        Some(rs),
                        TraceKind::RouterPresumedDead,
                        format!("router={x}"),
                    ),
                    Some(LivenessEvent::RouterRecovered(x)) => {
                        self.log(Some(rs), TraceKind::RouterRecovered, format!("router={x}"))
                    }
                    None => {}
                }
                self.apply_outcome(rs, out);
            }
            self.send_control(rs, r, ControlBody::Probe { k });
        }
        let next = phase + SimTime(interval.nanos() * (k + 1));
        if next <= self.end {
            self.at(next, Ev::KeepAlive { rs, k: k + 1 });
        }
    }

    // ---- topology changes ----

    fn schedule_dv(&mut self) {
        if !self.dv_pending {
            self.dv_pending = true;
            self.dv_index = 0;
            let d = SimTime::from_secs_f64(self.scenario.sim.dv_round);
            self.after(d, Ev::DvRound);
        }
    }

    fn dv_path_valid(&self, from: NodeId, to: NodeId) -> bool {
        let mut at = from;
        for _ in 0..INITIAL_TTL {
            if at == to {
                return true;
            }
            match dv_forward(&self.topo, &self.dv, at, to) {
                ForwardAction::Forward { next_hop, .. } => at = next_hop,
                ForwardAction::Drop(_) => return false,
            }
        }
        false
    }

    fn on_dv_round(&mut self) {
        self.dv_pending = false;
        self.dv_index += 1;
        let changed = self.dv.round(&self.topo);
        let flow_paths_valid = self
            .flows
            .iter()
            .map(|f| {
                let ok = self.dv_path_valid(f.src, f.dst) && self.dv_path_valid(f.dst, f.src);
                (f.name.clone(), ok)
            })
            .collect();
        self.dv_rounds.push(DvRoundRecord {
            time: self.now,
            index: self.dv_index,
            changed,
            flow_paths_valid,
        });
        let idx = self.dv_index;
        self.log(
            None,
            TraceKind::DvRound,
            format!("round={idx} changed={changed}"),
        );
        if changed {
            self.dv_pending = true;
            let d = SimTime::from_secs_f64(self.scenario.sim.dv_round);
            self.after(d, Ev::DvRound);
        } else {
            self.log(None, TraceKind::DvConverged, format!("rounds={idx}"));
        }
    }

    fn link_down(&mut self, link: LinkId) {
        self.kill_link(link);
        if self.mode != Mode::Adaptive {
            return;
        }
        let src = self.topo.link(link).src;
        let failures = match self.routers.get_mut(&src) {
            Some(r) => r.on_link_down(link),
            None => Vec::new(),
        };
        for f in failures {
            self.local_failure(f);
        }
    }

    fn link_up(&mut self, link: LinkId) {
        if self.mode != Mode::Adaptive {
            return;
        }
        let src = self.topo.link(link).src;
        if let Some(r) = self.routers.get_mut(&src) {
            r.on_link_up(link);
        }
        if let Some(servers) = self.restored_to.remove(&(src, link)) {
            for rs in servers {
                self.send_control(src, rs, ControlBody::LinkRestored { link });
            }
        }
    }

    fn note_failure_time(&mut self) {
        if self.failure_seen {
            return;
        }
        self.failure_seen = true;
        for f in &mut self.flows {
            if let TrafficRt::Tcp { sender, .. } = &f.traffic {
                f.srtt_at_failure = sender.srtt;
            }
        }
    }

    fn on_action(&mut self, i: usize) {
        let kind = self.scenario.actions[i].kind.clone();
        match kind {
            ActionKind::PairDown { a, b } | ActionKind::PairUp { a, b } => {
                let up = matches!(kind, ActionKind::PairUp { .. });
                if !up {
                    self.note_failure_time();
                }
                self.topo.set_pair_state(a, b, up).expect("validated pair");
                let k = if up {
                    TraceKind::LinkPairUp
                } else {
                    TraceKind::LinkPairDown
                };
                self.log(Some(a), k, format!("{a}<->{b}"));
                for (x, y) in [(a, b), (b, a)] {
                    let l = self.topo.link_between(x, y).expect("validated pair");
                    if up {
                        self.link_up(l);
                    } else {
                        self.link_down(l);
                    }
                }
                self.schedule_dv();
            }
            ActionKind::LinkDown { a, b } | ActionKind::LinkUp { a, b } => {
                let up = matches!(kind, ActionKind::LinkUp { .. });
                if !up {
                    self.note_failure_time();
                }
                self.topo.set_link_state(a, b, up).expect("validated link");
                let k = if up {
                    TraceKind::LinkUp
                } else {
                    TraceKind::LinkDown
                };
                self.log(Some(a), k, format!("{a}->{b}"));
                let l = self.topo.link_between(a, b).expect("validated link");
                if up {
                    self.link_up(l);
                } else {
                    self.link_down(l);
                }
                self.schedule_dv();
            }
            ActionKind::Exclude { ref flow, member } | ActionKind::Readmit { ref flow, member } => {
                let exclude = matches!(kind, ActionKind::Exclude { .. });
                self.on_exclusion(flow, member, exclude);
            }
            ActionKind::RogueUpdate {
                rs,
                router,
                flow,
                via,
            } => {
                let Some(f) = self.flows.iter().find(|f| f.name == flow && f.started) else {
                    return self.log(
                        Some(rs),
                        TraceKind::ActionRejected,
                        format!("flow={flow} not running"),
                    );
                };
                let u = FlowUpdate {
                    router,
                    key: f.key,
                    next_hop: Some(via),
                    issuer: rs,
                };
                self.send_control(rs, router, ControlBody::Update(u));
            }
        }
    }

    fn on_exclusion(&mut self, flow: &str, member: Address, exclude: bool) {
        let Some(fi) = self.flows.iter().position(|f| f.name == flow) else {
            return;
        };
        let src = self.flows[fi].src;
        let f = &mut self.flows[fi];
        let Some(session) = f.session.as_mut().filter(|_| f.active) else {
            return self.log(
                Some(src),
                TraceKind::ActionRejected,
                format!("flow={flow} has no open anycast stream"),
            );
        };
        let old = f.key;
        let res = if exclude {
            session.exclude(member, &mut self.labels, &self.topo)
        } else {
            session.readmit(member, &mut self.labels, &self.topo)
        };
        let new = match res {
            Ok(k) => k,
            Err(e) => {
                return self.log(
                    Some(src),
                    TraceKind::ActionRejected,
                    format!("flow={flow} member={member} {e}"),
                );
            }
        };
        let host = session.resolved_member().host;
        let kind = if exclude {
            TraceKind::Exclude
        } else {
            TraceKind::Readmit
        };
        let detail = format!(
            "flow={flow} member={member} label={}->{}",
            old.label.value(),
            new.label.value()
        );
        self.log(Some(src), kind, detail);
        self.log(
            Some(src),
            TraceKind::StreamClose,
            format!("flow={flow} key={old}"),
        );
        self.unregister_streams(fi);
        let f = &mut self.flows[fi];
        f.key = new;
        f.dst = host;
        f.labels.push(new.label.value());
        if let TrafficRt::Tcp { sender, receiver } = &mut f.traffic {
            *sender = TcpSender::new(sender.variant, self.tcp);
            *receiver = TcpReceiver::new();
            f.timer_at = None;
        }
        let resolved = self.plan.unicast(f.dst);
        self.log(
            Some(src),
            TraceKind::StreamOpen,
            format!("flow={flow} key={new}"),
        );
        self.log(
            Some(src),
            TraceKind::AnycastResolved,
            format!("flow={flow} member={resolved}"),
        );
        self.register_streams(fi);
        self.pump(fi);
    }

    // ---- wrap-up ----

    fn finish(mut self) -> RunOutput {
        let mut in_net: BTreeMap<(usize, bool), u64> = BTreeMap::new();
        for l in &self.links {
            for p in l.queue.iter().chain(l.in_tx.iter()) {
                *in_net.entry((p.flow, p.ack)).or_default() += 1;
            }
        }
        for s in self.heap.iter() {
            if let Ev::Arrive { pkt, .. } = &s.ev {
                *in_net.entry((pkt.flow, pkt.ack)).or_default() += 1;
            }
        }
        let windows = self.window_count();
        let mut samples = Vec::new();
        for f in &self.flows {
            for w in 0..windows {
                let bytes = f.meter.bucket(w);
                let (cwnd, ssthresh, state) = f
                    .snapshots
                    .get(w)
                    .cloned()
                    .or_else(|| f.snapshots.last().cloned())
                    .unwrap_or((None, None, "idle".into()));
                samples.push(SampleRow {
                    window_start: SimTime(w as u64 * self.window.nanos()),
                    flow: f.name.clone(),
                    bytes,
                    rate: bytes as f64 / self.window.as_secs_f64(),
                    cwnd,
                    ssthresh,
                    state,
                });
            }
        }
        samples.sort_by(|a, b| {
            a.window_start
                .cmp(&b.window_start)
                .then_with(|| a.flow.cmp(&b.flow))
        });

        let flows = self
            .flows
            .iter()
            .enumerate()
            .map(|(fi, f)| {
                let in_data = in_net.get(&(fi, false)).copied().unwrap_or(0);
                let in_ack = in_net.get(&(fi, true)).copied().unwrap_or(0);
                let (timeouts, fast_retransmits) = match &f.traffic {
                    TrafficRt::Tcp { sender, .. } => (sender.timeouts, sender.fast_retransmits),
                    TrafficRt::Cbr { .. } => (0, 0),
                };
                let (data, acks) = self.split_counts(fi, in_data, in_ack);
                FlowSummary {
                    name: f.name.clone(),
                    bytes: (0..windows).map(|w| f.meter.bucket(w)).sum(),
                    data,
                    acks,
                    srtt_at_failure: f.srtt_at_failure,
                    labels: f.labels.clone(),
                    timeouts,
                    fast_retransmits,
                }
            })
            .collect();

        let routers = self
            .routers
            .values()
            .map(|r| RouterStats {
                router: r.id,
                lookups: r.stats.lookups,
                packets: r.stats.packets,
            })
            .collect();
        let tables = self
            .routers
            .values()
            .map(|r| (r.id, r.entries().cloned().collect()))
            .collect();
        let fingerprint = self.fingerprint();
        let sc = std::mem::take(&mut self.scenario);
        RunOutput {
            scenario: sc.name.clone(),
            mode: self.mode,
            seed: sc.sim.seed,
            duration: self.end,
            window: self.window,
            segment_size: self.tcp.segment_size,
            fingerprint,
            failure_at: sc.first_failure().map(SimTime::from_secs_f64),
            repair_at: sc.first_repair().map(SimTime::from_secs_f64),
            events: self.events,
            samples,
            deliveries: self.deliveries,
            flows,
            dv_rounds: self.dv_rounds,
            routers,
            tables,
        }
    }

    fn window_count(&self) -> usize {
        self.end.nanos().div_ceil(self.window.nanos()) as usize
    }

    fn split_counts(&self, fi: usize, in_data: u64, in_ack: u64) -> (PacketCounts, PacketCounts) {
        let name = &self.flows[fi].name;
        let mut data = PacketCounts {
            in_network: in_data,
            ..PacketCounts::default()
        };
        let mut acks = PacketCounts {
            in_network: in_ack,
            ..PacketCounts::default()
        };
        for d in self.deliveries.iter().filter(|d| &d.flow == name) {
            if d.ack {
                acks.delivered += 1;
            } else {
                data.delivered += 1;
            }
        }
        let needle = format!("flow={name} ");
        for e in self
            .events
            .iter()
            .filter(|e| e.kind == TraceKind::Drop && e.detail.starts_with(&needle))
        {
            if e.detail.contains(" ack=") {
                acks.dropped += 1;
            } else {
                data.dropped += 1;
            }
        }
        let total = self.flows[fi].counts;
        data.sent = self.flows[fi].data_sent;
        acks.sent = total.sent - data.sent;
        (data, acks)
    }

    fn fingerprint(&self) -> String {
        let sc = &self.scenario;
        let stripped = Scenario {
            nodes: sc.nodes.clone(),
            links: sc.links.clone(),
            actions: sc.actions.clone(),
            ..Scenario::default()
        }
        .without_lines();
        parse::write_scenario(&stripped)
    }
}

/// Validates and runs a scenario in one mode.
pub fn run(scenario: &Scenario, mode: Mode) -> Result<RunOutput, EngineError> {
    Ok(Engine::new(scenario, mode)?.run())
}
