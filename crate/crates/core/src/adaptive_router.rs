//! Flow-label forwarding, the distance-vector baseline, and local failure detection.
//!
//! An adaptive router keeps a table keyed by the `<label, src, dst>` triplet.
//! A matching entry pins the flow to one outgoing interface no matter what the
//! distance-vector table prefers. Unlabeled traffic and flows without an entry
//! fall back to distance vector, exactly like a standard router. Only route
//! servers on the router's authorized list may write the table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::anycast::Address;
use crate::time::SimTime;
use crate::topology::{LinkId, NodeId, Topology};

/// Flow labels are 20 bits wide; zero means "unlabeled".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowLabel(u32);

impl FlowLabel {
    pub const MASK: u32 = 0xF_FFFF;
    pub const UNLABELED: FlowLabel = FlowLabel(0);

    pub fn new(v: u32) -> Self {
        FlowLabel(v & Self::MASK)
    }

    pub fn value(self) -> u32 {
        self.0
    }

    pub fn is_unlabeled(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for FlowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:05x}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub label: FlowLabel,
    pub src: Address,
    pub dst: Address,
}

impl FlowKey {
    pub fn new(label: u32, src: Address, dst: Address) -> Self {
        Self {
            label: FlowLabel::new(label),
            src,
            dst,
        }
    }

    /// Key of the return stream (acknowledgments) of the same connection.
    pub fn reverse(&self) -> Self {
        Self {
            label: self.label,
            src: self.dst,
            dst: self.src,
        }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{},{}>", self.label, self.src, self.dst)
    }
}

/// Per-source label counters, one per (src, dst) pair. Labels start at 1 and
/// strictly increase.
#[derive(Debug, Clone, Default)]
pub struct LabelAllocator {
    next: BTreeMap<(Address, Address), u32>,
}

impl LabelAllocator {
    pub fn next(&mut self, src: Address, dst: Address) -> u32 {
        let slot = self.next.entry((src, dst)).or_insert(0);
        *slot += 1;
        assert!(*slot <= FlowLabel::MASK, "flow label space exhausted");
        *slot
    }

    pub fn last(&self, src: Address, dst: Address) -> u32 {
        self.next.get(&(src, dst)).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowEntry {
    pub key: FlowKey,
    pub out_interface: LinkId,
    pub installed_by: NodeId,
    pub installed_at: SimTime,
}

/// A request to (re)bind or withdraw a flow at one router.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowUpdate {
    pub router: NodeId,
    pub key: FlowKey,
    /// `None` withdraws the entry.
    pub next_hop: Option<NodeId>,
    pub issuer: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Installed,
    Withdrawn,
    /// The issuer is not authorized; the table is untouched.
    Refused,
    /// The named next hop is not adjacent to this router.
    Invalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    NoRoute,
    LinkDown,
    InterfaceDown,
    QueueOverflow,
    HopLimit,
    StreamClosed,
    NotForMe,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NoRoute => "no-route",
            DropReason::LinkDown => "link-down",
            DropReason::InterfaceDown => "interface-down",
            DropReason::QueueOverflow => "queue-overflow",
            DropReason::HopLimit => "hop-limit",
            DropReason::StreamClosed => "stream-closed",
            DropReason::NotForMe => "not-for-me",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardAction {
    Forward {
        link: LinkId,
        next_hop: NodeId,
        pinned: bool,
    },
    Drop(DropReason),
}

/// Emitted when a pinned interface is found down. The router asks its route
/// server for a new route for `flow`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalFailure {
    pub router: NodeId,
    pub flow: FlowKey,
    pub link: LinkId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Forwarding {
    pub action: ForwardAction,
    pub failure: Option<LocalFailure>,
}

/// Distance-vector next hop for nodes without a usable flow entry.
pub fn dv_forward(topology: &Topology, dv: &DvTables, node: NodeId, dst: NodeId) -> ForwardAction {
    match dv.next_hop(node, dst) {
        None => ForwardAction::Drop(DropReason::NoRoute),
        Some(next) => match topology.link_between(node, next) {
            Some(l) if topology.is_up(l) => ForwardAction::Forward {
                link: l,
                next_hop: next,
                pinned: false,
            },
            _ => ForwardAction::Drop(DropReason::LinkDown),
        },
    }
}

#[derive(Debug, Clone, Default)]
pub struct RouterStats {
    pub lookups: u64,
    pub packets: u64,
}

#[derive(Debug, Clone)]
pub struct AdaptiveRouter {
    pub id: NodeId,
    authorized: BTreeSet<NodeId>,
    table: BTreeMap<FlowKey, FlowEntry>,
    reported: BTreeSet<(FlowKey, LinkId)>,
    pub stats: RouterStats,
}

impl AdaptiveRouter {
    pub fn new(id: NodeId, authorized: impl IntoIterator<Item = NodeId>) -> Self {
        Self {
            id,
            authorized: authorized.into_iter().collect(),
            table: BTreeMap::new(),
            reported: BTreeSet::new(),
            stats: RouterStats::default(),
        }
    }

    pub fn entry(&self, key: &FlowKey) -> Option<&FlowEntry> {
        self.table.get(key)
    }

    pub fn entries(&self) -> impl Iterator<Item = &FlowEntry> {
        self.table.values()
    }

    pub fn is_authorized(&self, rs: NodeId) -> bool {
        self.authorized.contains(&rs)
    }

    fn report_once(&mut self, flow: FlowKey, link: LinkId) -> Option<LocalFailure> {
        self.reported.insert((flow, link)).then_some(LocalFailure {
            router: self.id,
            flow,
            link,
        })
    }

    pub fn forward(
        &mut self,
        topology: &Topology,
        dv: &DvTables,
        key: Option<&FlowKey>,
        dst: NodeId,
    ) -> Forwarding {
        self.stats.packets += 1;
        let key = key.filter(|k| !k.label.is_unlabeled());
        if let Some(key) = key {
            self.stats.lookups += 1;
            if let Some(entry) = self.table.get(key) {
                let link = entry.out_interface;
                if topology.is_up(link) {
                    return Forwarding {
                        action: ForwardAction::Forward {
                            link,
                            next_hop: topology.link(link).dst,
                            pinned: true,
                        },
                        failure: None,
                    };
                }
                let failure = self.report_once(*key, link);
                return Forwarding {
                    action: ForwardAction::Drop(DropReason::InterfaceDown),
                    failure,
                };
            }
        }
        Forwarding {
            action: dv_forward(topology, dv, self.id, dst),
            failure: None,
        }
    }

    pub fn apply_flow_update(
        &mut self,
        topology: &Topology,
        update: &FlowUpdate,
        now: SimTime,
    ) -> UpdateOutcome {
        if !self.is_authorized(update.issuer) {
            return UpdateOutcome::Refused;
        }
        match update.next_hop {
            None => {
                self.table.remove(&update.key);
                UpdateOutcome::Withdrawn
            }
            Some(next) => match topology.link_between(self.id, next) {
                None => UpdateOutcome::Invalid,
                Some(link) => {
                    self.table.insert(
                        update.key,
                        FlowEntry {
                            key: update.key,
                            out_interface: link,
                            installed_by: update.issuer,
                            installed_at: now,
                        },
                    );
                    // a fresh binding may fail again later
                    self.reported.retain(|(k, _)| *k != update.key);
                    UpdateOutcome::Installed
                }
            },
        }
    }

    /// Interface monitoring: flows pinned to a link that just went down.
    pub fn on_link_down(&mut self, link: LinkId) -> Vec<LocalFailure> {
        let pinned: Vec<FlowKey> = self
            .table
            .values()
            .filter(|e| e.out_interface == link)
            .map(|e| e.key)
            .collect();
        pinned
            .into_iter()
            .filter_map(|k| self.report_once(k, link))
            .collect()
    }

    /// Forgets failure reports for a restored link. Returns whether there were any.
    pub fn on_link_up(&mut self, link: LinkId) -> bool {
        let before = self.reported.len();
        self.reported.retain(|(_, l)| *l != link);
        before != self.reported.len()
    }
}

/// RIP-style infinity.
pub const MAX_METRIC: u8 = 16;

/// Hop-count distance-vector state for every node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DvTables {
    dist: Vec<Vec<u8>>,
    next: Vec<Vec<Option<NodeId>>>,
}

impl DvTables {
    /// Each node knows only itself.
    pub fn initial(n: usize) -> Self {
        let mut dist = vec![vec![MAX_METRIC; n]; n];
        for (i, row) in dist.iter_mut().enumerate() {
            row[i] = 0;
        }
        Self {
            dist,
            next: vec![vec![None; n]; n],
        }
    }

    /// Runs rounds from scratch until nothing changes.
    pub fn converged(topology: &Topology) -> Self {
        let mut t = Self::initial(topology.node_count());
        while t.round(topology) {}
        t
    }

    pub fn distance(&self, from: NodeId, to: NodeId) -> u8 {
        self.dist[from.index()][to.index()]
    }

    pub fn next_hop(&self, from: NodeId, to: NodeId) -> Option<NodeId> {
        if self.dist[from.index()][to.index()] >= MAX_METRIC {
            return None;
        }
        self.next[from.index()][to.index()]
    }

    /// What `from` tells neighbour `to` about `dst`: hosts and route servers
    /// only advertise themselves, and routes learned through `to` are
    /// poisoned (split horizon).
    fn advertised(&self, topology: &Topology, from: NodeId, to: NodeId, dst: NodeId) -> u8 {
        if from == dst {
            return 0;
        }
        if !topology.kind(from).is_router() {
            return MAX_METRIC;
        }
        if self.next[from.index()][dst.index()] == Some(to) {
            return MAX_METRIC;
        }
        self.dist[from.index()][dst.index()]
    }

    /// One synchronous Bellman-Ford round over up links. Returns whether any
    /// entry changed.
    pub fn round(&mut self, topology: &Topology) -> bool {
        let n = topology.node_count();
        let prev = self.clone();
        let mut changed = false;
        for v in 0..n {
            let v = NodeId(v as u32);
            for d in 0..n {
                let d = NodeId(d as u32);
                if v == d {
                    continue;
                }
                let mut best = (MAX_METRIC, None);
                for (u, _) in topology.up_links_from(v) {
                    let adv = prev.advertised(topology, u, v, d);
                    let cand = adv.saturating_add(1).min(MAX_METRIC);
                    // neighbours come in ascending id order, so strict < keeps the lowest id on ties
                    if cand < best.0 {
                        best = (cand, Some(u));
                    }
                }
                let (dist, next) = if best.0 >= MAX_METRIC {
                    (MAX_METRIC, None)
                } else {
                    best
                };
                if self.dist[v.index()][d.index()] != dist
                    || self.next[v.index()][d.index()] != next
                {
                    self.dist[v.index()][d.index()] = dist;
                    self.next[v.index()][d.index()] = next;
                    changed = true;
                }
            }
        }
        changed
    }
}

/// Result of [`dv_step`]: the final tables and how many rounds changed something.
#[derive(Debug, Clone)]
pub struct DvConvergence {
    pub tables: DvTables,
    pub rounds: usize,
}

/// Iterates synchronous rounds from `start` until a fixpoint.
pub fn dv_step(topology: &Topology, start: &DvTables) -> DvConvergence {
    let mut tables = start.clone();
    let mut rounds = 0;
    while tables.round(topology) {
        rounds += 1;
    }
    DvConvergence { tables, rounds }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anycast::AddressPlan;
    use crate::topology::{LinkSpec, NodeKind};
    use proptest::prelude::*;

    fn chain(kinds: &[NodeKind]) -> Topology {
        let mut t = Topology::new();
        for k in kinds {
            t.add_node(*k);
        }
        for i in 1..kinds.len() {
            t.add_pair(
                NodeId(i as u32 - 1),
                NodeId(i as u32),
                LinkSpec::new(100.0, 0.001),
            )
            .unwrap();
        }
        t
    }

    /// 0 -> {1, 2} -> 3, plus the far side 3 - 4
    fn diamond() -> Topology {
        let mut t = Topology::new();
        t.add_node(NodeKind::Host);
        for _ in 0..3 {
            t.add_node(NodeKind::StandardRouter);
        }
        t.add_node(NodeKind::Host);
        for (a, b) in [(0, 1), (0, 2), (1, 3), (2, 3), (3, 4)] {
            t.add_pair(NodeId(a), NodeId(b), LinkSpec::new(100.0, 0.001))
                .unwrap();
        }
        t
    }

    fn key(label: u32) -> FlowKey {
        let plan = AddressPlan::default();
        FlowKey::new(label, plan.unicast(NodeId(0)), plan.unicast(NodeId(4)))
    }

    #[test]
    fn labels_increase_per_pair() {
        let plan = AddressPlan::default();
        let (a, b, c) = (
            plan.unicast(NodeId(0)),
            plan.unicast(NodeId(1)),
            plan.unicast(NodeId(2)),
        );
        let mut alloc = LabelAllocator::default();
        assert_eq!(alloc.next(a, b), 1);
        assert_eq!(alloc.next(a, b), 2);
        assert_eq!(alloc.next(a, c), 1);
        assert_eq!(alloc.last(a, b), 2);
        assert_eq!(FlowLabel::new(0x12_3456).value(), 0x2_3456);
    }

    #[test]
    fn chain_distance() {
        let t = chain(&[NodeKind::StandardRouter; 4]);
        let dv = DvTables::converged(&t);
        assert_eq!(dv.distance(NodeId(0), NodeId(3)), 3);
        assert_eq!(dv.next_hop(NodeId(0), NodeId(3)), Some(NodeId(1)));
    }

    #[test]
    fn hosts_do_not_carry_transit() {
        let t = chain(&[
            NodeKind::StandardRouter,
            NodeKind::Host,
            NodeKind::StandardRouter,
        ]);
        let dv = DvTables::converged(&t);
        assert_eq!(dv.distance(NodeId(0), NodeId(1)), 1);
        assert_eq!(dv.next_hop(NodeId(0), NodeId(2)), None);
    }

    #[test]
    fn losing_the_only_path_goes_to_infinity() {
        let mut t = chain(&[NodeKind::StandardRouter; 4]);
        let mut dv = DvTables::converged(&t);
        t.set_pair_state(NodeId(1), NodeId(2), false).unwrap();
        let conv = dv_step(&t, &dv);
        dv = conv.tables;
        assert_eq!(dv.distance(NodeId(0), NodeId(3)), MAX_METRIC);
        assert_eq!(dv.next_hop(NodeId(0), NodeId(3)), None);
        assert!(conv.rounds >= 1);
    }

    #[test]
    fn diamond_arm_failure_reroutes_after_one_round_not_before() {
        let mut t = diamond();
        let mut dv = DvTables::converged(&t);
        // lowest-id tie break picks arm 1
        assert_eq!(dv.next_hop(NodeId(0), NodeId(4)), Some(NodeId(1)));
        t.set_pair_state(NodeId(1), NodeId(3), false).unwrap();
        // tables are stale until a round runs: the pinned next hop still names 1
        assert_eq!(dv.next_hop(NodeId(0), NodeId(4)), Some(NodeId(1)));
        // hand-simulated round 1: node 1 loses 3 (its only way), node 0 still
        // hears 1's old distance 2 and keeps it; round 2: 1 advertises 16 so 0
        // switches to arm 2
        assert!(dv.round(&t));
        assert_eq!(dv.distance(NodeId(1), NodeId(4)), MAX_METRIC);
        assert_eq!(dv.next_hop(NodeId(0), NodeId(4)), Some(NodeId(1)));
        assert!(dv.round(&t));
        assert_eq!(dv.next_hop(NodeId(0), NodeId(4)), Some(NodeId(2)));
        assert_eq!(dv.distance(NodeId(0), NodeId(4)), 3);
    }

    fn bfs_hops(t: &Topology, from: NodeId) -> Vec<u8> {
        crate::anycast::hop_distances(t, from)
            .into_iter()
            .map(|d| d.map_or(MAX_METRIC, |d| (d as u8).min(MAX_METRIC)))
            .collect()
    }

    proptest! {
        #[test]
        fn converged_distances_match_bfs(
            n in 2usize..9,
            edges in prop::collection::vec((0u32..9, 0u32..9), 0..20),
            hosts in prop::collection::vec(any::<bool>(), 9),
            downs in prop::collection::vec((0u32..9, 0u32..9), 0..4),
        ) {
            let mut t = Topology::new();
            for &h in &hosts[..n] {
                t.add_node(if h { NodeKind::Host } else { NodeKind::StandardRouter });
            }
            for (a, b) in edges {
                let (a, b) = (a % n as u32, b % n as u32);
                if a != b && t.link_between(NodeId(a), NodeId(b)).is_none() {
                    t.add_pair(NodeId(a), NodeId(b), LinkSpec::new(1.0, 0.0)).unwrap();
                }
            }
            let dv0 = DvTables::converged(&t);
            for (a, b) in downs {
                let _ = t.set_pair_state(NodeId(a % n as u32), NodeId(b % n as u32), false);
            }
            // reconvergence from the stale tables lands on the same fixpoint as from scratch
            let dv = dv_step(&t, &dv0).tables;
            for v in 0..n as u32 {
                let hops = bfs_hops(&t, NodeId(v));
                for d in 0..n as u32 {
                    prop_assert_eq!(dv.distance(NodeId(v), NodeId(d)), hops[d as usize]);
                }
            }
        }
    }

    fn adaptive_world() -> (Topology, DvTables, AdaptiveRouter) {
        let mut t = diamond();
        let rs = t.add_node(NodeKind::RouteServer);
        t.add_pair(rs, NodeId(0), LinkSpec::new(1.0, 0.0)).unwrap();
        let dv = DvTables::converged(&t);
        (t, dv, AdaptiveRouter::new(NodeId(0), [rs]))
    }

    fn update(to: u32, issuer: NodeId) -> FlowUpdate {
        FlowUpdate {
            router: NodeId(0),
            key: key(7),
            next_hop: Some(NodeId(to)),
            issuer,
        }
    }

    #[test]
    fn pinned_flow_ignores_dv_preference() {
        let (t, dv, mut r) = adaptive_world();
        let rs = NodeId(5);
        assert_eq!(
            r.apply_flow_update(&t, &update(2, rs), SimTime(1)),
            UpdateOutcome::Installed
        );
        let f = r.forward(&t, &dv, Some(&key(7)), NodeId(4));
        assert!(matches!(
            f.action,
            ForwardAction::Forward {
                next_hop: NodeId(2),
                pinned: true,
                ..
            }
        ));
        // other flows and unlabeled traffic follow DV
        let f = r.forward(&t, &dv, Some(&key(8)), NodeId(4));
        assert!(matches!(
            f.action,
            ForwardAction::Forward {
                next_hop: NodeId(1),
                pinned: false,
                ..
            }
        ));
        let f = r.forward(&t, &dv, None, NodeId(4));
        assert_eq!(f.action, dv_forward(&t, &dv, NodeId(0), NodeId(4)));
    }

    #[test]
    fn unauthorized_update_is_refused() {
        let (t, _, mut r) = adaptive_world();
        let rogue = NodeId(3);
        assert_eq!(
            r.apply_flow_update(&t, &update(2, rogue), SimTime(1)),
            UpdateOutcome::Refused
        );
        assert_eq!(r.entries().count(), 0);
    }

    #[test]
    fn update_for_unknown_flow_creates_entry_and_withdraw_removes_it() {
        let (t, _, mut r) = adaptive_world();
        let rs = NodeId(5);
        r.apply_flow_update(&t, &update(1, rs), SimTime(3))
            .unwrap_installed();
        let e = r.entry(&key(7)).unwrap();
        assert_eq!(e.installed_by, rs);
        assert_eq!(e.installed_at, SimTime(3));
        let mut w = update(1, rs);
        w.next_hop = None;
        assert_eq!(
            r.apply_flow_update(&t, &w, SimTime(4)),
            UpdateOutcome::Withdrawn
        );
        assert!(r.entry(&key(7)).is_none());
        assert_eq!(
            r.apply_flow_update(&t, &update(4, rs), SimTime(4)),
            UpdateOutcome::Invalid
        );
    }

    trait Installed {
        fn unwrap_installed(self);
    }
    impl Installed for UpdateOutcome {
        fn unwrap_installed(self) {
            assert_eq!(self, UpdateOutcome::Installed);
        }
    }

    #[test]
    fn failed_pinned_interface_drops_and_reports_once() {
        let (mut t, dv, mut r) = adaptive_world();
        r.apply_flow_update(&t, &update(1, NodeId(5)), SimTime(0))
            .unwrap_installed();
        t.set_pair_state(NodeId(0), NodeId(1), false).unwrap();
        let link = t.link_between(NodeId(0), NodeId(1)).unwrap();
        let f = r.forward(&t, &dv, Some(&key(7)), NodeId(4));
        assert_eq!(f.action, ForwardAction::Drop(DropReason::InterfaceDown));
        assert_eq!(
            f.failure,
            Some(LocalFailure {
                router: NodeId(0),
                flow: key(7),
                link
            })
        );
        let again = r.forward(&t, &dv, Some(&key(7)), NodeId(4));
        assert_eq!(again.failure, None);
        assert!(r.on_link_down(link).is_empty());
    }

    #[test]
    fn link_down_reports_pinned_flows() {
        let (mut t, _, mut r) = adaptive_world();
        r.apply_flow_update(&t, &update(1, NodeId(5)), SimTime(0))
            .unwrap_installed();
        t.set_pair_state(NodeId(0), NodeId(1), false).unwrap();
        let link = t.link_between(NodeId(0), NodeId(1)).unwrap();
        let other = t.link_between(NodeId(0), NodeId(2)).unwrap();
        assert!(r.on_link_down(other).is_empty());
        assert_eq!(r.on_link_down(link).len(), 1);
        assert!(r.on_link_down(link).is_empty());
    }

    #[test]
    fn one_lookup_per_labeled_packet() {
        let (t, dv, mut r) = adaptive_world();
        for label in 1..=5 {
            r.forward(&t, &dv, Some(&key(label)), NodeId(4));
        }
        r.forward(&t, &dv, None, NodeId(4));
        assert_eq!(r.stats.lookups, 5);
        assert_eq!(r.stats.packets, 6);
    }
}
