//! Route servers: minimum hybrid-cost route discovery, keep-alive liveness
//! tracking of adaptive routers, and authorized flow-table updates.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::adaptive_router::{FlowKey, FlowUpdate};
use crate::anycast::{Address, AddressKind};
use crate::metric::{ParameterSet, Route};
use crate::time::SimTime;
use crate::topology::{LinkId, NodeId, NodeKind, Topology};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RouteError {
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("invalid query: {0}")]
    InvalidQuery(&'static str),
    #[error("no route from {src} to {dst}")]
    NoRoute { src: NodeId, dst: NodeId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteQuery {
    pub src: NodeId,
    pub dst: NodeId,
    pub params: ParameterSet,
    /// Routers presumed dead.
    pub excluded_nodes: BTreeSet<NodeId>,
    /// Links reported failed, treated as down whatever their actual state.
    pub excluded_links: BTreeSet<LinkId>,
    /// Unicast addresses a flow must not touch; the host part names the node.
    pub excluded_addresses: BTreeSet<Address>,
}

impl RouteQuery {
    pub fn new(src: NodeId, dst: NodeId, params: ParameterSet) -> Self {
        Self {
            src,
            dst,
            params,
            excluded_nodes: BTreeSet::new(),
            excluded_links: BTreeSet::new(),
            excluded_addresses: BTreeSet::new(),
        }
    }

    pub fn excluding_nodes(mut self, nodes: impl IntoIterator<Item = NodeId>) -> Self {
        self.excluded_nodes.extend(nodes);
        self
    }

    pub fn excluding_links(mut self, links: impl IntoIterator<Item = LinkId>) -> Self {
        self.excluded_links.extend(links);
        self
    }

    pub fn excluding_addresses(mut self, addrs: impl IntoIterator<Item = Address>) -> Self {
        self.excluded_addresses.extend(addrs);
        self
    }

    pub fn node_excluded(&self, n: NodeId) -> bool {
        self.excluded_nodes.contains(&n)
            || self
                .excluded_addresses
                .iter()
                .any(|a| a.kind == AddressKind::Unicast && a.suffix == n.0)
    }

    /// Checks endpoints and parameters; shared with the brute-force oracle.
    pub fn check(&self, topology: &Topology) -> Result<(), RouteError> {
        for n in [self.src, self.dst] {
            if !topology.contains(n) {
                return Err(RouteError::UnknownNode(n));
            }
        }
        if self.src == self.dst {
            return Err(RouteError::InvalidQuery("source equals destination"));
        }
        if self.node_excluded(self.src) || self.node_excluded(self.dst) {
            return Err(RouteError::InvalidQuery("endpoint is excluded"));
        }
        if self.params.validate().is_err() {
            return Err(RouteError::InvalidQuery("invalid parameter set"));
        }
        Ok(())
    }

    /// Whether a link may be used at all: up, not reported, and not entering
    /// an excluded node.
    pub fn link_usable(&self, topology: &Topology, id: LinkId) -> bool {
        let l = topology.link(id);
        l.up && !self.excluded_links.contains(&id) && !self.node_excluded(l.dst)
    }

    /// Only routers forward; hosts and route servers terminate paths.
    pub fn may_transit(&self, topology: &Topology, n: NodeId) -> bool {
        n == self.src || topology.kind(n).is_router()
    }
}

/// The shared tie-break: lower cost, then fewer hops, then the
/// lexicographically smaller node sequence.
pub fn compare_candidates(a: (f64, &[NodeId]), b: (f64, &[NodeId])) -> Ordering {
    a.0.total_cmp(&b.0)
        .then(a.1.len().cmp(&b.1.len()))
        .then_with(|| a.1.cmp(b.1))
}

#[derive(Debug, Clone)]
struct Label {
    additive: f64,
    nodes: Vec<NodeId>,
    links: Vec<LinkId>,
}

impl Label {
    fn key(&self) -> (f64, &[NodeId]) {
        (self.additive, &self.nodes)
    }
}

/// Least-additive-cost path over links with bandwidth at least `threshold`.
fn additive_search(topology: &Topology, query: &RouteQuery, threshold: f64) -> Option<Vec<LinkId>> {
    let n = topology.node_count();
    let mut best: Vec<Option<Label>> = vec![None; n];
    let mut settled = vec![false; n];
    best[query.src.index()] = Some(Label {
        additive: 0.0,
        nodes: vec![query.src],
        links: Vec::new(),
    });
    loop {
        let u = (0..n)
            .filter(|&i| !settled[i] && best[i].is_some())
            .min_by(|&a, &b| {
                compare_candidates(
                    best[a].as_ref().unwrap().key(),
                    best[b].as_ref().unwrap().key(),
                )
            })?;
        settled[u] = true;
        let node = NodeId(u as u32);
        if node == query.dst {
            return best[u].take().map(|l| l.links);
        }
        if !query.may_transit(topology, node) {
            continue;
        }
        let here = best[u].clone().unwrap();
        for (v, id) in topology.up_links_from(node) {
            let link = topology.link(id);
            if settled[v.index()] || link.bandwidth < threshold || !query.link_usable(topology, id)
            {
                continue;
            }
            let mut nodes = here.nodes.clone();
            nodes.push(v);
            let cand = Label {
                additive: here.additive + query.params.link_weight(link),
                nodes,
                links: {
                    let mut l = here.links.clone();
                    l.push(id);
                    l
                },
            };
            let better = match &best[v.index()] {
                None => true,
                Some(cur) => compare_candidates(cand.key(), cur.key()) == Ordering::Less,
            };
            if better {
                best[v.index()] = Some(cand);
            }
        }
    }
}

/// Minimum hybrid-cost simple path.
///
/// The bandwidth term depends on the path minimum, so a single shortest-path
/// pass is not enough. For each distinct bandwidth `b` among usable links the
/// graph is pruned to links of bandwidth `>= b` and the least-additive path is
/// found; the best of these candidates under the full metric is optimal.
pub fn find_optimal_route(topology: &Topology, query: &RouteQuery) -> Result<Route, RouteError> {
    query.check(topology)?;
    let mut thresholds: Vec<f64> = topology
        .links()
        .filter(|(id, _)| query.link_usable(topology, *id))
        .map(|(_, l)| l.bandwidth)
        .collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let mut best: Option<(Route, Vec<NodeId>)> = None;
    for b in thresholds {
        let Some(links) = additive_search(topology, query, b) else {
            continue;
        };
        let route = Route::from_links(topology, links, &query.params)
            .expect("search yields simple paths of up links");
        let nodes = route.nodes(topology);
        let better = match &best {
            None => true,
            Some((r, n)) => {
                compare_candidates((route.total_cost, &nodes), (r.total_cost, n)) == Ordering::Less
            }
        };
        if better {
            best = Some((route, nodes));
        }
    }
    best.map(|(r, _)| r).ok_or(RouteError::NoRoute {
        src: query.src,
        dst: query.dst,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteServerConfig {
    pub authorized: bool,
    pub keepalive_interval: f64,
    pub keepalive_threshold: u32,
    pub response_latency: f64,
    /// Offset of the first probe.
    pub keepalive_phase: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("keep-alive interval must be positive, got {0}")]
    Interval(f64),
    #[error("keep-alive threshold must be at least 1")]
    Threshold,
    #[error("response latency must be non-negative, got {0}")]
    Latency(f64),
    #[error("keep-alive phase must be non-negative, got {0}")]
    Phase(f64),
}

impl RouteServerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.keepalive_interval > 0.0) || !self.keepalive_interval.is_finite() {
            return Err(ConfigError::Interval(self.keepalive_interval));
        }
        if self.keepalive_threshold < 1 {
            return Err(ConfigError::Threshold);
        }
        if !(self.response_latency >= 0.0) || !self.response_latency.is_finite() {
            return Err(ConfigError::Latency(self.response_latency));
        }
        if !(self.keepalive_phase >= 0.0) || !self.keepalive_phase.is_finite() {
            return Err(ConfigError::Phase(self.keepalive_phase));
        }
        Ok(())
    }
}

impl Default for RouteServerConfig {
    fn default() -> Self {
        Self {
            authorized: true,
            keepalive_interval: 1.0,
            keepalive_threshold: 3,
            response_latency: 0.1,
            keepalive_phase: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeepAliveState {
    pub router: NodeId,
    pub interval: SimTime,
    pub missed: u32,
    pub threshold: u32,
    pub last_seen: SimTime,
}

impl KeepAliveState {
    pub fn new(router: NodeId, interval: SimTime, threshold: u32) -> Self {
        Self {
            router,
            interval,
            missed: 0,
            threshold,
            last_seen: SimTime::ZERO,
        }
    }

    pub fn is_dead(&self) -> bool {
        self.missed >= self.threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LivenessEvent {
    RouterPresumedDead(NodeId),
    RouterRecovered(NodeId),
}

/// One poll: `responded` says whether the echo to the previous probe came back.
pub fn keepalive_tick(
    state: KeepAliveState,
    responded: bool,
    now: SimTime,
) -> (KeepAliveState, Option<LivenessEvent>) {
    let mut next = state;
    if responded {
        next.missed = 0;
        next.last_seen = now;
        let ev = state
            .is_dead()
            .then_some(LivenessEvent::RouterRecovered(state.router));
        (next, ev)
    } else {
        next.missed = (state.missed + 1).min(state.threshold);
        let ev = (!state.is_dead() && next.is_dead())
            .then_some(LivenessEvent::RouterPresumedDead(state.router));
        (next, ev)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RouteServerError {
    #[error("route server {0} is not authorized")]
    Unauthorized(NodeId),
    #[error("flow {0} is not registered")]
    UnknownFlow(FlowKey),
    #[error(transparent)]
    Route(#[from] RouteError),
}

/// A unidirectional stream known to a route server.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub key: FlowKey,
    pub src: NodeId,
    pub dst: NodeId,
    pub params: ParameterSet,
    pub excluded_addresses: BTreeSet<Address>,
    pub route: Option<Route>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RerouteOutcome {
    pub updates: Vec<FlowUpdate>,
    pub rerouted: Vec<(FlowKey, Route)>,
    /// Streams left without any route.
    pub stalled: Vec<FlowKey>,
}

impl RerouteOutcome {
    fn merge(&mut self, other: RerouteOutcome) {
        self.updates.extend(other.updates);
        self.rerouted.extend(other.rerouted);
        self.stalled.extend(other.stalled);
    }
}

/// A failed link as reported by a router, stamped with when the report arrived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FailureHint {
    pub link: LinkId,
    pub reported_at: SimTime,
}

#[derive(Debug, Clone)]
pub struct RouteServer {
    pub id: NodeId,
    pub config: RouteServerConfig,
    streams: BTreeMap<FlowKey, Stream>,
    keepalive: BTreeMap<NodeId, KeepAliveState>,
    // latest report per link: (down?, when)
    link_reports: BTreeMap<LinkId, (bool, SimTime)>,
}

impl RouteServer {
    pub fn new(id: NodeId, config: RouteServerConfig) -> Self {
        Self {
            id,
            config,
            streams: BTreeMap::new(),
            keepalive: BTreeMap::new(),
            link_reports: BTreeMap::new(),
        }
    }

    pub fn stream(&self, key: &FlowKey) -> Option<&Stream> {
        self.streams.get(key)
    }

    pub fn streams(&self) -> impl Iterator<Item = &Stream> {
        self.streams.values()
    }

    pub fn monitor(&mut self, router: NodeId) {
        let interval = SimTime::from_secs_f64(self.config.keepalive_interval);
        self.keepalive.entry(router).or_insert_with(|| {
            KeepAliveState::new(router, interval, self.config.keepalive_threshold)
        });
    }

    pub fn monitored(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.keepalive.keys().copied()
    }

    pub fn keepalive_state(&self, router: NodeId) -> Option<&KeepAliveState> {
        self.keepalive.get(&router)
    }

    pub fn presumed_dead(&self) -> BTreeSet<NodeId> {
        self.keepalive
            .values()
            .filter(|s| s.is_dead())
            .map(|s| s.router)
            .collect()
    }

    pub fn reported_down(&self) -> BTreeSet<LinkId> {
        self.link_reports
            .iter()
            .filter(|(_, (down, _))| *down)
            .map(|(l, _)| *l)
            .collect()
    }

    /// Records a link report; an older report never overrides a newer one.
    pub fn note_link_report(&mut self, link: LinkId, down: bool, at: SimTime) {
        let slot = self.link_reports.entry(link).or_insert((down, at));
        if at >= slot.1 {
            *slot = (down, at);
        }
    }

    fn note_pair(&mut self, topology: &Topology, link: LinkId, down: bool, at: SimTime) {
        self.note_link_report(link, down, at);
        let l = topology.link(link);
        if let Some(rev) = topology.link_between(l.dst, l.src) {
            self.note_link_report(rev, down, at);
        }
    }

    fn ensure_authorized(&self) -> Result<(), RouteServerError> {
        if self.config.authorized {
            Ok(())
        } else {
            Err(RouteServerError::Unauthorized(self.id))
        }
    }

    fn compute(&self, topology: &Topology, s: &Stream) -> Result<Route, RouteError> {
        let q = RouteQuery::new(s.src, s.dst, s.params)
            .excluding_nodes(self.presumed_dead())
            .excluding_links(self.reported_down())
            .excluding_addresses(s.excluded_addresses.iter().copied());
        find_optimal_route(topology, &q)
    }

    fn route_updates(
        &self,
        topology: &Topology,
        key: FlowKey,
        old: Option<&Route>,
        new: Option<&Route>,
    ) -> Vec<FlowUpdate> {
        let mut updates = Vec::new();
        let mut on_new = BTreeSet::new();
        if let Some(r) = new {
            for id in &r.links {
                let l = topology.link(*id);
                if topology.kind(l.src) == NodeKind::AdaptiveRouter {
                    on_new.insert(l.src);
                    updates.push(FlowUpdate {
                        router: l.src,
                        key,
                        next_hop: Some(l.dst),
                        issuer: self.id,
                    });
                }
            }
        }
        if let Some(r) = old {
            for id in &r.links {
                let src = topology.link(*id).src;
                if topology.kind(src) == NodeKind::AdaptiveRouter && !on_new.contains(&src) {
                    updates.push(FlowUpdate {
                        router: src,
                        key,
                        next_hop: None,
                        issuer: self.id,
                    });
                }
            }
        }
        updates
    }

    /// Starts tracking a stream and computes its first route.
    pub fn register(
        &mut self,
        topology: &Topology,
        stream: Stream,
    ) -> Result<RerouteOutcome, RouteServerError> {
        self.ensure_authorized()?;
        let key = stream.key;
        self.streams.insert(
            key,
            Stream {
                route: None,
                ..stream
            },
        );
        Ok(self.recompute(topology, key))
    }

    /// Forgets a stream and withdraws its entries.
    pub fn unregister(&mut self, topology: &Topology, key: &FlowKey) -> Vec<FlowUpdate> {
        match self.streams.remove(key) {
            Some(s) if self.config.authorized => {
                self.route_updates(topology, *key, s.route.as_ref(), None)
            }
            _ => Vec::new(),
        }
    }

    fn recompute(&mut self, topology: &Topology, key: FlowKey) -> RerouteOutcome {
        let s = &self.streams[&key];
        let old = s.route.clone();
        let mut out = RerouteOutcome::default();
        match self.compute(topology, s) {
            Ok(route) => {
                out.updates = self.route_updates(topology, key, old.as_ref(), Some(&route));
                out.rerouted.push((key, route.clone()));
                self.streams.get_mut(&key).unwrap().route = Some(route);
            }
            Err(_) => {
                out.updates = self.route_updates(topology, key, old.as_ref(), None);
                out.stalled.push(key);
                self.streams.get_mut(&key).unwrap().route = None;
            }
        }
        out
    }

    /// Recomputes the named stream, and every other stream whose route uses
    /// the hinted link in either direction, around all reported failures and
    /// presumed-dead routers.
    pub fn handle_reroute_request(
        &mut self,
        topology: &Topology,
        flow: FlowKey,
        hint: Option<FailureHint>,
        _now: SimTime,
    ) -> Result<RerouteOutcome, RouteServerError> {
        self.ensure_authorized()?;
        if !self.streams.contains_key(&flow) {
            return Err(RouteServerError::UnknownFlow(flow));
        }
        let mut affected = BTreeSet::from([flow]);
        if let Some(h) = hint {
            self.note_pair(topology, h.link, true, h.reported_at);
            let l = topology.link(h.link);
            let pair: Vec<LinkId> = [Some(h.link), topology.link_between(l.dst, l.src)]
                .into_iter()
                .flatten()
                .collect();
            affected.extend(
                self.streams
                    .values()
                    .filter(|s| {
                        s.route
                            .as_ref()
                            .is_some_and(|r| r.links.iter().any(|x| pair.contains(x)))
                    })
                    .map(|s| s.key),
            );
        }
        let mut out = RerouteOutcome::default();
        for key in affected {
            out.merge(self.recompute(topology, key));
        }
        Ok(out)
    }

    /// Restoration report from a router; no rerouting happens.
    pub fn handle_link_restored(&mut self, topology: &Topology, link: LinkId, at: SimTime) {
        self.note_pair(topology, link, false, at);
    }

    /// Feeds one keep-alive poll result; a router that just died has every
    /// stream through it rerouted.
    pub fn on_keepalive(
        &mut self,
        topology: &Topology,
        router: NodeId,
        responded: bool,
        now: SimTime,
    ) -> (Option<LivenessEvent>, RerouteOutcome) {
        let Some(state) = self.keepalive.get(&router).copied() else {
            return (None, RerouteOutcome::default());
        };
        let (next, ev) = keepalive_tick(state, responded, now);
        self.keepalive.insert(router, next);
        let mut out = RerouteOutcome::default();
        if let (Some(LivenessEvent::RouterPresumedDead(r)), true) = (ev, self.config.authorized) {
            let through: Vec<FlowKey> = self
                .streams
                .values()
                .filter(|s| s.route.as_ref().is_some_and(|route| route.contains_node(r)))
                .map(|s| s.key)
                .collect();
            for key in through {
                out.merge(self.recompute(topology, key));
            }
        }
        (ev, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anycast::AddressPlan;
    use crate::topology::LinkSpec;
    use proptest::prelude::*;

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    /// 0 - 1 - 2 - 3 (fat, 3 hops) and 0 - 4 - 3 (thin, 2 hops) with routers in between.
    fn diamond() -> Topology {
        let mut t = Topology::new();
        t.add_node(NodeKind::Host);
        t.add_node(NodeKind::StandardRouter);
        t.add_node(NodeKind::StandardRouter);
        t.add_node(NodeKind::Host);
        t.add_node(NodeKind::StandardRouter);
        for (a, b) in [(0, 1), (1, 2), (2, 3)] {
            t.add_pair(n(a), n(b), LinkSpec::new(100.0, 0.0)).unwrap();
        }
        for (a, b) in [(0, 4), (4, 3)] {
            t.add_pair(n(a), n(b), LinkSpec::new(10.0, 0.0)).unwrap();
        }
        t
    }

    #[test]
    fn chain_has_its_only_route() {
        let mut t = Topology::new();
        for _ in 0..4 {
            t.add_node(NodeKind::StandardRouter);
        }
        for i in 0..3 {
            t.add_pair(n(i), n(i + 1), LinkSpec::new(8.0, 0.5)).unwrap();
        }
        let p = ParameterSet::new(16.0, 2.0, 0.0, 1.0, 0.0).unwrap();
        let r = find_optimal_route(&t, &RouteQuery::new(n(0), n(3), p)).unwrap();
        assert_eq!(r.hops, vec![n(1), n(2)]);
        // 16/8 + 3 * (2*0.5 + 1)
        assert_eq!(r.total_cost, 8.0);
    }

    #[test]
    fn bandwidth_weight_trades_hops_for_capacity() {
        let t = diamond();
        let hops = ParameterSet::hop_count();
        let r = find_optimal_route(&t, &RouteQuery::new(n(0), n(3), hops)).unwrap();
        assert_eq!(r.nodes(&t), vec![n(0), n(4), n(3)]);

        let fat = ParameterSet::new(1000.0, 0.0, 0.0, 1.0, 0.0).unwrap();
        let r = find_optimal_route(&t, &RouteQuery::new(n(0), n(3), fat)).unwrap();
        assert_eq!(r.nodes(&t), vec![n(0), n(1), n(2), n(3)]);
        assert_eq!(r.total_cost, 13.0);
    }

    #[test]
    fn exclusions_are_respected() {
        let t = diamond();
        let q = RouteQuery::new(n(0), n(3), ParameterSet::hop_count()).excluding_nodes([n(4)]);
        let r = find_optimal_route(&t, &q).unwrap();
        assert!(!r.contains_node(n(4)));
        let l = t.link_between(n(1), n(2)).unwrap();
        let q = q.excluding_links([l]);
        assert_eq!(
            find_optimal_route(&t, &q),
            Err(RouteError::NoRoute {
                src: n(0),
                dst: n(3)
            })
        );
        let q = RouteQuery::new(n(0), n(3), ParameterSet::hop_count())
            .excluding_addresses([AddressPlan::default().unicast(n(4))]);
        assert_eq!(find_optimal_route(&t, &q).unwrap().hops, vec![n(1), n(2)]);
    }

    #[test]
    fn hosts_are_never_intermediates() {
        let mut t = Topology::new();
        t.add_node(NodeKind::StandardRouter);
        t.add_node(NodeKind::Host);
        t.add_node(NodeKind::StandardRouter);
        t.add_pair(n(0), n(1), LinkSpec::new(1.0, 0.0)).unwrap();
        t.add_pair(n(1), n(2), LinkSpec::new(1.0, 0.0)).unwrap();
        assert!(matches!(
            find_optimal_route(&t, &RouteQuery::new(n(0), n(2), ParameterSet::hop_count())),
            Err(RouteError::NoRoute { .. })
        ));
    }

    #[test]
    fn bad_queries() {
        let t = diamond();
        let p = ParameterSet::hop_count();
        assert_eq!(
            find_optimal_route(&t, &RouteQuery::new(n(0), n(9), p)),
            Err(RouteError::UnknownNode(n(9)))
        );
        assert!(matches!(
            find_optimal_route(&t, &RouteQuery::new(n(0), n(0), p)),
            Err(RouteError::InvalidQuery(_))
        ));
        assert!(matches!(
            find_optimal_route(&t, &RouteQuery::new(n(0), n(3), p).excluding_nodes([n(3)])),
            Err(RouteError::InvalidQuery(_))
        ));
    }

    #[test]
    fn equal_cost_routes_break_ties_by_node_sequence() {
        let mut t = Topology::new();
        t.add_node(NodeKind::Host);
        for _ in 0..2 {
            t.add_node(NodeKind::StandardRouter);
        }
        t.add_node(NodeKind::Host);
        for (a, b) in [(0, 2), (2, 3), (0, 1), (1, 3)] {
            t.add_pair(n(a), n(b), LinkSpec::new(4.0, 0.0)).unwrap();
        }
        let r = find_optimal_route(&t, &RouteQuery::new(n(0), n(3), ParameterSet::hop_count()))
            .unwrap();
        assert_eq!(r.hops, vec![n(1)]);
    }

    fn ka(missed: u32) -> KeepAliveState {
        KeepAliveState {
            missed,
            ..KeepAliveState::new(n(1), SimTime::from_secs_f64(1.0), 3)
        }
    }

    #[test]
    fn keepalive_threshold_crossing() {
        let (s, ev) = keepalive_tick(ka(2), false, SimTime(5));
        assert_eq!(s.missed, 3);
        assert!(s.is_dead());
        assert_eq!(ev, Some(LivenessEvent::RouterPresumedDead(n(1))));

        let (s, ev) = keepalive_tick(ka(2), true, SimTime(5));
        assert_eq!((s.missed, s.last_seen, ev), (0, SimTime(5), None));

        let (s, ev) = keepalive_tick(ka(3), false, SimTime(6));
        assert_eq!((s.missed, ev), (3, None));

        let (s, ev) = keepalive_tick(ka(3), true, SimTime(7));
        assert_eq!(s.missed, 0);
        assert_eq!(ev, Some(LivenessEvent::RouterRecovered(n(1))));
    }

    proptest! {
        /// Polls at phase + k*interval; the router goes silent at `silent_at`.
        /// Each poll checks the echo of the previous probe, which returns after
        /// `rtt` if the router was still alive when the probe reached it.
        #[test]
        fn detection_latency_bounds(
            threshold in 1u32..6,
            interval_ms in 100u64..3000,
            phase_frac in 0.0f64..1.0,
            silent_ms in 0u64..20_000,
            rtt_frac in 0.0f64..0.9,
        ) {
            let interval = interval_ms * 1_000_000;
            let phase = (phase_frac * interval as f64) as u64;
            let rtt = (rtt_frac * interval as f64) as u64;
            let silent = silent_ms * 1_000_000 + interval;
            let mut st = KeepAliveState::new(n(1), SimTime(interval), threshold);
            let mut last_probe_before: Option<u64> = None;
            let mut dead_at = None;
            for k in 0..200u64 {
                let now = phase + k * interval;
                if k > 0 {
                    let prev = now - interval;
                    let responded = prev + rtt / 2 < silent;
                    let (s, ev) = keepalive_tick(st, responded, SimTime(now));
                    st = s;
                    if let Some(LivenessEvent::RouterPresumedDead(_)) = ev {
                        dead_at = Some(now);
                        break;
                    }
                }
                if now < silent {
                    last_probe_before = Some(now);
                }
            }
            let td = dead_at.unwrap();
            let lp = last_probe_before.unwrap();
            prop_assert!(td - lp >= threshold as u64 * interval);
            prop_assert!(td - lp <= (threshold as u64 + 1) * interval);
        }
    }

    /// 0 host, 1 adaptive, 2/3 standard, 4 adaptive, 5 host, 6 server.
    fn square() -> Topology {
        let mut t = Topology::new();
        for k in [
            NodeKind::Host,
            NodeKind::AdaptiveRouter,
            NodeKind::StandardRouter,
            NodeKind::StandardRouter,
            NodeKind::AdaptiveRouter,
            NodeKind::Host,
            NodeKind::RouteServer,
        ] {
            t.add_node(k);
        }
        for (a, b) in [(0, 1), (1, 2), (2, 4), (1, 3), (3, 4), (4, 5), (6, 1)] {
            t.add_pair(n(a), n(b), LinkSpec::new(10.0, 0.0)).unwrap();
        }
        t
    }

    fn stream(label: u32, src: u32, dst: u32) -> Stream {
        let plan = AddressPlan::default();
        Stream {
            key: FlowKey::new(label, plan.unicast(n(src)), plan.unicast(n(dst))),
            src: n(src),
            dst: n(dst),
            params: ParameterSet::hop_count(),
            excluded_addresses: BTreeSet::new(),
            route: None,
        }
    }

    #[test]
    fn register_installs_on_adaptive_hops_only() {
        let t = square();
        let mut rs = RouteServer::new(n(6), RouteServerConfig::default());
        let out = rs.register(&t, stream(1, 0, 5)).unwrap();
        let hops: Vec<(NodeId, Option<NodeId>)> =
            out.updates.iter().map(|u| (u.router, u.next_hop)).collect();
        assert_eq!(hops, vec![(n(1), Some(n(2))), (n(4), Some(n(5)))]);
    }

    #[test]
    fn reroute_avoids_hint_and_moves_reverse_stream() {
        let t = square();
        let mut rs = RouteServer::new(n(6), RouteServerConfig::default());
        let fwd = stream(1, 0, 5);
        let rev = stream(1, 5, 0);
        rs.register(&t, fwd.clone()).unwrap();
        rs.register(&t, rev.clone()).unwrap();
        let hint = FailureHint {
            link: t.link_between(n(1), n(2)).unwrap(),
            reported_at: SimTime(10),
        };
        let out = rs
            .handle_reroute_request(&t, fwd.key, Some(hint), SimTime(10))
            .unwrap();
        assert_eq!(out.rerouted.len(), 2);
        for (_, r) in &out.rerouted {
            assert!(r.contains_node(n(3)));
        }
        assert!(out.updates.contains(&FlowUpdate {
            router: n(1),
            key: fwd.key,
            next_hop: Some(n(3)),
            issuer: n(6),
        }));
        assert!(out.updates.contains(&FlowUpdate {
            router: n(4),
            key: rev.key,
            next_hop: Some(n(3)),
            issuer: n(6),
        }));
    }

    #[test]
    fn stale_hint_loses_to_newer_restoration() {
        let t = square();
        let mut rs = RouteServer::new(n(6), RouteServerConfig::default());
        let fwd = stream(1, 0, 5);
        rs.register(&t, fwd.clone()).unwrap();
        let link = t.link_between(n(1), n(2)).unwrap();
        rs.handle_link_restored(&t, link, SimTime(12));
        let hint = FailureHint {
            link,
            reported_at: SimTime(10),
        };
        let out = rs
            .handle_reroute_request(&t, fwd.key, Some(hint), SimTime(15))
            .unwrap();
        assert!(out.rerouted[0].1.contains_node(n(2)));
    }

    #[test]
    fn unauthorized_server_emits_nothing() {
        let t = square();
        let cfg = RouteServerConfig {
            authorized: false,
            ..RouteServerConfig::default()
        };
        let mut rs = RouteServer::new(n(6), cfg);
        let s = stream(1, 0, 5);
        assert_eq!(
            rs.register(&t, s.clone()),
            Err(RouteServerError::Unauthorized(n(6)))
        );
        assert_eq!(
            rs.handle_reroute_request(&t, s.key, None, SimTime(0)),
            Err(RouteServerError::Unauthorized(n(6)))
        );
    }

    #[test]
    fn no_alternate_marks_stream_stalled_and_withdraws() {
        let mut t = square();
        let mut rs = RouteServer::new(n(6), RouteServerConfig::default());
        let s = stream(1, 0, 5);
        rs.register(&t, s.clone()).unwrap();
        t.set_pair_state(n(1), n(3), false).unwrap();
        let hint = FailureHint {
            link: t.link_between(n(1), n(2)).unwrap(),
            reported_at: SimTime(1),
        };
        let out = rs
            .handle_reroute_request(&t, s.key, Some(hint), SimTime(1))
            .unwrap();
        assert_eq!(out.stalled, vec![s.key]);
        assert!(out.updates.iter().all(|u| u.next_hop.is_none()));
        assert!(rs.stream(&s.key).unwrap().route.is_none());
    }

    #[test]
    fn dead_router_triggers_reroute_of_its_streams() {
        let t = square();
        let mut rs = RouteServer::new(n(6), RouteServerConfig::default());
        rs.monitor(n(4));
        // a stream from 0 to 2 avoids 4 and must not move
        rs.register(&t, stream(1, 0, 2)).unwrap();
        let mut t2 = t.clone();
        t2.add_node(NodeKind::Host);
        t2.add_pair(n(3), n(7), LinkSpec::new(10.0, 0.0)).unwrap();
        t2.add_pair(n(2), n(7), LinkSpec::new(10.0, 0.0)).unwrap();
        rs.register(&t2, stream(2, 0, 5)).unwrap();
        let mut out = RerouteOutcome::default();
        for k in 1..=3 {
            let (ev, o) = rs.on_keepalive(&t2, n(4), false, SimTime(k));
            if k == 3 {
                assert_eq!(ev, Some(LivenessEvent::RouterPresumedDead(n(4))));
            }
            out.merge(o);
        }
        // 5 hangs off 4 only, so the stream stalls; the other one is untouched
        assert_eq!(out.stalled.len(), 1);
        assert_eq!(out.rerouted.len(), 0);
        assert_eq!(rs.presumed_dead(), BTreeSet::from([n(4)]));
    }
}
