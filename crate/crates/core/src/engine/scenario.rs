//! Declarative scenario model and its validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::anycast::{Address, AddressPlan, AnycastGroup, Member};
use crate::metric::ParameterSet;
use crate::route_server::RouteServerConfig;
use crate::topology::{LinkSpec, NodeId, NodeKind, Topology};
use crate::transport::TcpVariant;

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub duration: f64,
    pub seed: u64,
    /// Throughput sample window in seconds.
    pub window: f64,
    pub segment_size: u32,
    pub queue_capacity: usize,
    pub dv_round: f64,
    pub prefix: u16,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            duration: 60.0,
            seed: 1,
            window: 0.5,
            segment_size: 1000,
            queue_capacity: 50,
            dv_round: 1.0,
            prefix: 0xfd00,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkDecl {
    pub a: NodeId,
    pub b: NodeId,
    /// `a <-> b` when true, `a -> b` otherwise.
    pub bidirectional: bool,
    pub spec: LinkSpec,
    /// Amplitude of the per-run uniform delay perturbation, seconds.
    pub jitter: f64,
    pub down: bool,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileDecl {
    pub name: String,
    pub params: ParameterSet,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteServerDecl {
    pub node: NodeId,
    pub config: RouteServerConfig,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupDecl {
    pub name: String,
    pub service: u32,
    pub members: Vec<NodeId>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Destination {
    Node(NodeId),
    Group(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Traffic {
    Tcp(TcpVariant),
    /// Constant rate in kB/s.
    Cbr(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowDecl {
    pub name: String,
    pub src: NodeId,
    pub dst: Destination,
    pub traffic: Traffic,
    pub start: f64,
    pub stop: Option<f64>,
    pub profile: Option<String>,
    pub rs: Option<NodeId>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionKind {
    PairDown {
        a: NodeId,
        b: NodeId,
    },
    PairUp {
        a: NodeId,
        b: NodeId,
    },
    LinkDown {
        a: NodeId,
        b: NodeId,
    },
    LinkUp {
        a: NodeId,
        b: NodeId,
    },
    Exclude {
        flow: String,
        member: Address,
    },
    Readmit {
        flow: String,
        member: Address,
    },
    /// A route server pushes a flow-table entry for `flow` at `router` pointing to `via`.
    RogueUpdate {
        rs: NodeId,
        router: NodeId,
        flow: String,
        via: NodeId,
    },
}

impl ActionKind {
    pub fn is_failure(&self) -> bool {
        matches!(
            self,
            ActionKind::PairDown { .. } | ActionKind::LinkDown { .. }
        )
    }

    pub fn is_topology_change(&self) -> bool {
        matches!(
            self,
            ActionKind::PairDown { .. }
                | ActionKind::PairUp { .. }
                | ActionKind::LinkDown { .. }
                | ActionKind::LinkUp { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionDecl {
    pub time: f64,
    pub kind: ActionKind,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// 1-based source line, when the scenario came from a file.
    pub line: Option<usize>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: (line > 0).then_some(line),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// All problems found in a scenario.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ValidationError {
    pub diagnostics: Vec<Diagnostic>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub name: String,
    pub sim: SimSettings,
    pub nodes: Vec<NodeKind>,
    pub links: Vec<LinkDecl>,
    pub profiles: Vec<ProfileDecl>,
    pub route_servers: Vec<RouteServerDecl>,
    pub groups: Vec<GroupDecl>,
    pub flows: Vec<FlowDecl>,
    pub actions: Vec<ActionDecl>,
}

impl Scenario {
    pub fn plan(&self) -> AddressPlan {
        AddressPlan::new(self.sim.prefix)
    }

    pub fn flow(&self, name: &str) -> Option<&FlowDecl> {
        self.flows.iter().find(|f| f.name == name)
    }

    pub fn profile(&self, name: &str) -> Option<&ProfileDecl> {
        self.profiles.iter().find(|p| p.name == name)
    }

    pub fn params_of(&self, flow: &FlowDecl) -> ParameterSet {
        flow.profile
            .as_deref()
            .and_then(|p| self.profile(p))
            .map(|p| p.params)
            .unwrap_or_default()
    }

    /// Schedules a pair failure, and its repair when `up_at` is given.
    pub fn inject_pair_failure(
        &mut self,
        a: NodeId,
        b: NodeId,
        down_at: f64,
        up_at: Option<f64>,
    ) -> Result<(), ValidationError> {
        let fail = |m: String| ValidationError {
            diagnostics: vec![Diagnostic {
                line: None,
                message: m,
            }],
        };
        if let Some(up) = up_at {
            if !(down_at < up) {
                return Err(fail(format!(
                    "failure ends at {up}, not after it starts at {down_at}"
                )));
            }
        }
        if !(self.has_link(a, b) && self.has_link(b, a)) {
            return Err(fail(format!("no link pair between {a} and {b}")));
        }
        self.actions.push(ActionDecl {
            time: down_at,
            kind: ActionKind::PairDown { a, b },
            line: 0,
        });
        if let Some(up) = up_at {
            self.actions.push(ActionDecl {
                time: up,
                kind: ActionKind::PairUp { a, b },
                line: 0,
            });
        }
        Ok(())
    }

    pub fn has_link(&self, a: NodeId, b: NodeId) -> bool {
        self.links
            .iter()
            .any(|l| (l.a, l.b) == (a, b) || (l.bidirectional && (l.a, l.b) == (b, a)))
    }

    /// Time of the first scripted failure.
    pub fn first_failure(&self) -> Option<f64> {
        self.actions
            .iter()
            .filter(|a| a.kind.is_failure())
            .map(|a| a.time)
            .min_by(f64::total_cmp)
    }

    /// Time of the first scripted repair after the first failure.
    pub fn first_repair(&self) -> Option<f64> {
        let tf = self.first_failure()?;
        self.actions
            .iter()
            .filter(|a| {
                matches!(
                    a.kind,
                    ActionKind::PairUp { .. } | ActionKind::LinkUp { .. }
                )
            })
            .map(|a| a.time)
            .filter(|t| *t >= tf)
            .min_by(f64::total_cmp)
    }

    /// Authorized route server with the lowest id.
    pub fn default_route_server(&self) -> Option<NodeId> {
        self.route_servers
            .iter()
            .filter(|r| r.config.authorized)
            .map(|r| r.node)
            .min()
    }

    pub fn route_server(&self, node: NodeId) -> Option<&RouteServerDecl> {
        self.route_servers.iter().find(|r| r.node == node)
    }

    /// Builds the initial topology; assumes a validated scenario.
    pub fn topology(&self) -> Result<Topology, ValidationError> {
        let mut t = Topology::new();
        for k in &self.nodes {
            t.add_node(*k);
        }
        let mut diags = Vec::new();
        for l in &self.links {
            let r = if l.bidirectional {
                t.add_pair(l.a, l.b, l.spec).and_then(|_| {
                    if l.down {
                        t.set_pair_state(l.a, l.b, false)
                    } else {
                        Ok(())
                    }
                })
            } else {
                t.add_link(l.a, l.b, l.spec).and_then(|_| {
                    if l.down {
                        t.set_link_state(l.a, l.b, false)
                    } else {
                        Ok(())
                    }
                })
            };
            if let Err(e) = r {
                diags.push(Diagnostic::new(l.line, e.to_string()));
            }
        }
        if diags.is_empty() {
            Ok(t)
        } else {
            Err(ValidationError { diagnostics: diags })
        }
    }

    /// Attachment router of a host: its lowest-id router neighbour.
    pub fn attachment_router(topology: &Topology, host: NodeId) -> Option<NodeId> {
        topology
            .all_links_from(host)
            .map(|(n, _)| n)
            .find(|n| topology.kind(*n).is_router())
    }

    pub fn anycast_group(&self, topology: &Topology, name: &str) -> Option<AnycastGroup> {
        let g = self.groups.iter().find(|g| g.name == name)?;
        let plan = self.plan();
        let members = g
            .members
            .iter()
            .map(|m| {
                Some(Member {
                    unicast: plan.unicast(*m),
                    host: *m,
                    attachment_router: Self::attachment_router(topology, *m)?,
                })
            })
            .collect::<Option<Vec<_>>>()?;
        AnycastGroup::new(
            g.name.clone(),
            Address::anycast(self.sim.prefix, g.service),
            members,
        )
        .ok()
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut d = Vec::new();
        self.validate_into(&mut d);
        if d.is_empty() {
            Ok(())
        } else {
            Err(ValidationError { diagnostics: d })
        }
    }

    fn validate_into(&self, d: &mut Vec<Diagnostic>) {
        let s = &self.sim;
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(s.duration) {
            d.push(Diagnostic::new(
                0,
                format!("duration must be positive, got {}", s.duration),
            ));
        }
        if !positive(s.window) {
            d.push(Diagnostic::new(
                0,
                format!("window must be positive, got {}", s.window),
            ));
        }
        if !positive(s.dv_round) {
            d.push(Diagnostic::new(
                0,
                format!("dv_round must be positive, got {}", s.dv_round),
            ));
        }
        if s.segment_size == 0 {
            d.push(Diagnostic::new(0, "segment size must be positive"));
        }
        if s.queue_capacity == 0 {
            d.push(Diagnostic::new(0, "queue capacity must be at least 1"));
        }
        if self.nodes.is_empty() {
            d.push(Diagnostic::new(0, "scenario declares no nodes"));
        }
        let n = self.nodes.len() as u32;
        let exists = |x: NodeId| x.0 < n;
        let kind = |x: NodeId| self.nodes[x.index()];
        let in_time = |t: f64| t >= 0.0 && t <= s.duration && t.is_finite();

        let mut pairs = BTreeSet::new();
        for l in &self.links {
            let mut ok = true;
            for x in [l.a, l.b] {
                if !exists(x) {
                    d.push(Diagnostic::new(
                        l.line,
                        format!("link references unknown node {x}"),
                    ));
                    ok = false;
                }
            }
            if l.a == l.b {
                d.push(Diagnostic::new(
                    l.line,
                    format!("self-loop on node {}", l.a),
                ));
                ok = false;
            }
            if !(l.jitter >= 0.0) || !l.jitter.is_finite() {
                d.push(Diagnostic::new(l.line, "jitter must be non-negative"));
            }
            if ok {
                let dirs: &[(NodeId, NodeId)] = if l.bidirectional {
                    &[(l.a, l.b), (l.b, l.a)]
                } else {
                    &[(l.a, l.b)]
                };
                for dir in dirs {
                    if !pairs.insert(*dir) {
                        d.push(Diagnostic::new(
                            l.line,
                            format!("duplicate link {} -> {}", dir.0, dir.1),
                        ));
                    }
                }
            }
        }
        if d.is_empty() {
            if let Err(e) = self.topology() {
                d.extend(e.diagnostics);
            }
        }
        let adjacent = |a: NodeId, b: NodeId| pairs.contains(&(a, b));
        let neighbours_router = |h: NodeId| {
            pairs
                .iter()
                .any(|(x, y)| *x == h && exists(*y) && kind(*y).is_router())
        };

        let mut names = BTreeSet::new();
        for p in &self.profiles {
            if !names.insert(p.name.as_str()) {
                d.push(Diagnostic::new(
                    p.line,
                    format!("duplicate profile `{}`", p.name),
                ));
            }
            if let Err(e) = p.params.validate() {
                d.push(Diagnostic::new(
                    p.line,
                    format!("profile `{}`: {e}", p.name),
                ));
            }
        }

        let mut seen_rs = BTreeSet::new();
        for r in &self.route_servers {
            if !exists(r.node) {
                d.push(Diagnostic::new(r.line, format!("unknown node {}", r.node)));
                continue;
            }
            if kind(r.node) != NodeKind::RouteServer {
                d.push(Diagnostic::new(
                    r.line,
                    format!("node {} is not a route server", r.node),
                ));
            }
            if !seen_rs.insert(r.node) {
                d.push(Diagnostic::new(
                    r.line,
                    format!("route server {} declared twice", r.node),
                ));
            }
            if let Err(e) = r.config.validate() {
                d.push(Diagnostic::new(r.line, e.to_string()));
            }
        }

        let mut groups: BTreeMap<&str, &GroupDecl> = BTreeMap::new();
        for g in &self.groups {
            if groups.insert(g.name.as_str(), g).is_some() {
                d.push(Diagnostic::new(
                    g.line,
                    format!("duplicate anycast group `{}`", g.name),
                ));
            }
            if g.members.is_empty() {
                d.push(Diagnostic::new(g.line, "anycast group has no members"));
            }
            let mut m = BTreeSet::new();
            for x in &g.members {
                if !exists(*x) {
                    d.push(Diagnostic::new(g.line, format!("unknown member node {x}")));
                } else if kind(*x) != NodeKind::Host {
                    d.push(Diagnostic::new(g.line, format!("member {x} is not a host")));
                } else if !neighbours_router(*x) {
                    d.push(Diagnostic::new(
                        g.line,
                        format!("member {x} has no attachment router"),
                    ));
                }
                if !m.insert(*x) {
                    d.push(Diagnostic::new(g.line, format!("member {x} listed twice")));
                }
            }
        }

        let mut flow_names = BTreeSet::new();
        for f in &self.flows {
            if !flow_names.insert(f.name.as_str()) {
                d.push(Diagnostic::new(
                    f.line,
                    format!("duplicate flow `{}`", f.name),
                ));
            }
            if !exists(f.src) {
                d.push(Diagnostic::new(
                    f.line,
                    format!("flow source {} does not exist", f.src),
                ));
            } else if kind(f.src) != NodeKind::Host {
                d.push(Diagnostic::new(
                    f.line,
                    format!("flow source {} is not a host", f.src),
                ));
            }
            match &f.dst {
                Destination::Node(x) => {
                    if !exists(*x) {
                        d.push(Diagnostic::new(
                            f.line,
                            format!("flow destination {x} does not exist"),
                        ));
                    } else if kind(*x) != NodeKind::Host {
                        d.push(Diagnostic::new(
                            f.line,
                            format!("flow destination {x} is not a host"),
                        ));
                    } else if *x == f.src {
                        d.push(Diagnostic::new(f.line, "flow source equals destination"));
                    }
                }
                Destination::Group(g) => {
                    if !groups.contains_key(g.as_str()) {
                        d.push(Diagnostic::new(
                            f.line,
                            format!("unknown anycast group `{g}`"),
                        ));
                    }
                }
            }
            if let Traffic::Cbr(rate) = f.traffic {
                if !(rate > 0.0) || !rate.is_finite() {
                    d.push(Diagnostic::new(f.line, "constant rate must be positive"));
                }
            }
            if !in_time(f.start) {
                d.push(Diagnostic::new(
                    f.line,
                    format!("flow start {} outside [0, duration]", f.start),
                ));
            }
            if let Some(stop) = f.stop {
                if !(stop > f.start) || !in_time(stop) {
                    d.push(Diagnostic::new(
                        f.line,
                        format!("flow stop {stop} must be after start and within duration"),
                    ));
                }
            }
            if let Some(p) = &f.profile {
                if self.profile(p).is_none() {
                    d.push(Diagnostic::new(f.line, format!("unknown profile `{p}`")));
                }
            }
            if let Some(rs) = f.rs {
                if !seen_rs.contains(&rs) {
                    d.push(Diagnostic::new(
                        f.line,
                        format!("{rs} is not a declared route server"),
                    ));
                }
            }
        }

        for a in &self.actions {
            if !in_time(a.time) {
                d.push(Diagnostic::new(
                    a.line,
                    format!("action time {} outside [0, duration]", a.time),
                ));
            }
            match &a.kind {
                ActionKind::PairDown { a: x, b: y } | ActionKind::PairUp { a: x, b: y } => {
                    if !(adjacent(*x, *y) && adjacent(*y, *x)) {
                        d.push(Diagnostic::new(
                            a.line,
                            format!("no link pair between {x} and {y}"),
                        ));
                    }
                }
                ActionKind::LinkDown { a: x, b: y } | ActionKind::LinkUp { a: x, b: y } => {
                    if !adjacent(*x, *y) {
                        d.push(Diagnostic::new(a.line, format!("no link {x} -> {y}")));
                    }
                }
                ActionKind::Exclude { flow, member } | ActionKind::Readmit { flow, member } => {
                    match self.flow(flow) {
                        None => d.push(Diagnostic::new(a.line, format!("unknown flow `{flow}`"))),
                        Some(f) => match &f.dst {
                            Destination::Group(g) => {
                                let in_group = groups.get(g.as_str()).is_some_and(|g| {
                                    g.members.iter().any(|m| self.plan().unicast(*m) == *member)
                                });
                                if !in_group {
                                    d.push(Diagnostic::new(
                                        a.line,
                                        format!("{member} is not a member of group `{g}`"),
                                    ));
                                }
                            }
                            Destination::Node(_) => d.push(Diagnostic::new(
                                a.line,
                                format!("flow `{flow}` is not addressed to an anycast group"),
                            )),
                        },
                    }
                }
                ActionKind::RogueUpdate {
                    rs,
                    router,
                    flow,
                    via,
                } => {
                    if !exists(*rs) || kind(*rs) != NodeKind::RouteServer {
                        d.push(Diagnostic::new(
                            a.line,
                            format!("{rs} is not a route server"),
                        ));
                    }
                    if !exists(*router) || kind(*router) != NodeKind::AdaptiveRouter {
                        d.push(Diagnostic::new(
                            a.line,
                            format!("{router} is not an adaptive router"),
                        ));
                    } else if !adjacent(*router, *via) {
                        d.push(Diagnostic::new(
                            a.line,
                            format!("{via} is not adjacent to {router}"),
                        ));
                    }
                    if self.flow(flow).is_none() {
                        d.push(Diagnostic::new(a.line, format!("unknown flow `{flow}`")));
                    }
                }
            }
        }
        self.validate_failure_windows(d);
    }

    /// A pair cannot come up before it went down.
    fn validate_failure_windows(&self, d: &mut Vec<Diagnostic>) {
        for down in &self.actions {
            let ActionKind::PairDown { a, b } = down.kind else {
                continue;
            };
            for up in &self.actions {
                let ActionKind::PairUp { a: x, b: y } = up.kind else {
                    continue;
                };
                if up.line > 0 && up.line == down.line && (x, y) == (a, b) && !(down.time < up.time)
                {
                    d.push(Diagnostic::new(
                        up.line,
                        format!(
                            "repair at {} is not after the failure at {}",
                            up.time, down.time
                        ),
                    ));
                }
            }
        }
    }
}
