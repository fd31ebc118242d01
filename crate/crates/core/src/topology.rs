//! Network graph: nodes, directed attributed links and their up/down state.
//!
//! Every link is a separate directed record, so `a -> b` and `b -> a` can carry
//! different attributes and fail independently. Adjacency queries only ever
//! report links that are currently up, in ascending destination order.

use std::collections::BTreeMap;
use std::fmt;

/// Dense, zero-based node ordinal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Handle to a directed link inside a [`Topology`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub u32);

impl LinkId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    Host,
    StandardRouter,
    AdaptiveRouter,
    RouteServer,
}

impl NodeKind {
    /// Only routers carry transit traffic; hosts and route servers are endpoints.
    pub fn is_router(self) -> bool {
        matches!(self, NodeKind::StandardRouter | NodeKind::AdaptiveRouter)
    }

    pub fn keyword(self) -> &'static str {
        match self {
            NodeKind::Host => "host",
            NodeKind::StandardRouter => "router",
            NodeKind::AdaptiveRouter => "adaptive",
            NodeKind::RouteServer => "route_server",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "host" => Some(NodeKind::Host),
            "router" => Some(NodeKind::StandardRouter),
            "adaptive" => Some(NodeKind::AdaptiveRouter),
            "route_server" | "rs" => Some(NodeKind::RouteServer),
            _ => None,
        }
    }
}

/// Static attributes supplied when a link is created.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSpec {
    /// kB/s
    pub bandwidth: f64,
    /// seconds
    pub delay: f64,
    /// seconds; the reference delay jitter is measured against
    pub nominal_delay: f64,
    pub monetary_cost: f64,
}

impl LinkSpec {
    pub fn new(bandwidth: f64, delay: f64) -> Self {
        Self {
            bandwidth,
            delay,
            nominal_delay: delay,
            monetary_cost: 0.0,
        }
    }

    pub fn with_nominal_delay(mut self, nominal: f64) -> Self {
        self.nominal_delay = nominal;
        self
    }

    pub fn with_monetary_cost(mut self, cost: f64) -> Self {
        self.monetary_cost = cost;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub src: NodeId,
    pub dst: NodeId,
    pub bandwidth: f64,
    pub delay: f64,
    pub nominal_delay: f64,
    pub monetary_cost: f64,
    pub up: bool,
}

impl Link {
    /// Delay variation against the nominal delay, as an absolute deviation.
    pub fn jitter(&self) -> f64 {
        (self.delay - self.nominal_delay).abs()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TopologyError {
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("a link {src} -> {dst} already exists")]
    DuplicateLink { src: NodeId, dst: NodeId },
    #[error("link {src} -> {dst} has non-positive bandwidth {bandwidth}")]
    NonPositiveBandwidth {
        src: NodeId,
        dst: NodeId,
        bandwidth: f64,
    },
    #[error("link {src} -> {dst}: {what} must be finite and non-negative, got {value}")]
    InvalidAttribute {
        src: NodeId,
        dst: NodeId,
        what: &'static str,
        value: f64,
    },
    #[error("link {src} -> {dst} does not exist")]
    UnknownLink { src: NodeId, dst: NodeId },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Topology {
    kinds: Vec<NodeKind>,
    links: Vec<Link>,
    index: BTreeMap<(NodeId, NodeId), LinkId>,
    // outgoing links per node, sorted by destination id
    out: Vec<Vec<LinkId>>,
}

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, kind: NodeKind) -> NodeId {
        let id = NodeId(self.kinds.len() as u32);
        self.kinds.push(kind);
        self.out.push(Vec::new());
        id
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn contains(&self, n: NodeId) -> bool {
        n.index() < self.kinds.len()
    }

    pub fn node_kind(&self, n: NodeId) -> Result<NodeKind, TopologyError> {
        self.kinds
            .get(n.index())
            .copied()
            .ok_or(TopologyError::UnknownNode(n))
    }

    /// Kind lookup for ids already known to be valid.
    pub fn kind(&self, n: NodeId) -> NodeKind {
        self.kinds[n.index()]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, NodeKind)> + '_ {
        self.kinds
            .iter()
            .enumerate()
            .map(|(i, k)| (NodeId(i as u32), *k))
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes()
            .filter(move |(_, k)| *k == kind)
            .map(|(n, _)| n)
    }

    pub fn add_link(
        &mut self,
        src: NodeId,
        dst: NodeId,
        spec: LinkSpec,
    ) -> Result<LinkId, TopologyError> {
        for n in [src, dst] {
            if !self.contains(n) {
                return Err(TopologyError::UnknownNode(n));
            }
        }
        if self.index.contains_key(&(src, dst)) {
            return Err(TopologyError::DuplicateLink { src, dst });
        }
        if !(spec.bandwidth > 0.0) || !spec.bandwidth.is_finite() {
            return Err(TopologyError::NonPositiveBandwidth {
                src,
                dst,
                bandwidth: spec.bandwidth,
            });
        }
        for (what, value) in [
            ("delay", spec.delay),
            ("nominal delay", spec.nominal_delay),
            ("monetary cost", spec.monetary_cost),
        ] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(TopologyError::InvalidAttribute {
                    src,
                    dst,
                    what,
                    value,
                });
            }
        }
        let id = LinkId(self.links.len() as u32);
        self.links.push(Link {
            src,
            dst,
            bandwidth: spec.bandwidth,
            delay: spec.delay,
            nominal_delay: spec.nominal_delay,
            monetary_cost: spec.monetary_cost,
            up: true,
        });
        self.index.insert((src, dst), id);
        let links = &self.links;
        let out = &mut self.out[src.index()];
        let pos = out.partition_point(|l| links[l.index()].dst < dst);
        out.insert(pos, id);
        Ok(id)
    }

    /// Adds `a -> b` and `b -> a` with identical attributes.
    pub fn add_pair(
        &mut self,
        a: NodeId,
        b: NodeId,
        spec: LinkSpec,
    ) -> Result<(LinkId, LinkId), TopologyError> {
        if self.index.contains_key(&(b, a)) {
            return Err(TopologyError::DuplicateLink { src: b, dst: a });
        }
        let ab = self.add_link(a, b, spec)?;
        let ba = self.add_link(b, a, spec)?;
        Ok((ab, ba))
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.index()]
    }

    pub fn links(&self) -> impl Iterator<Item = (LinkId, &Link)> + '_ {
        self.links
            .iter()
            .enumerate()
            .map(|(i, l)| (LinkId(i as u32), l))
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn link_between(&self, src: NodeId, dst: NodeId) -> Option<LinkId> {
        self.index.get(&(src, dst)).copied()
    }

    fn require_link(&self, src: NodeId, dst: NodeId) -> Result<LinkId, TopologyError> {
        self.link_between(src, dst)
            .ok_or(TopologyError::UnknownLink { src, dst })
    }

    pub fn is_up(&self, id: LinkId) -> bool {
        self.links[id.index()].up
    }

    /// Sets both directions of a link pair at once. Either both change or neither does.
    pub fn set_pair_state(&mut self, a: NodeId, b: NodeId, up: bool) -> Result<(), TopologyError> {
        let ab = self.require_link(a, b)?;
        let ba = self.require_link(b, a)?;
        self.links[ab.index()].up = up;
        self.links[ba.index()].up = up;
        Ok(())
    }

    /// Changes a single direction; the reverse link keeps its state.
    pub fn set_link_state(
        &mut self,
        src: NodeId,
        dst: NodeId,
        up: bool,
    ) -> Result<(), TopologyError> {
        let id = self.require_link(src, dst)?;
        self.links[id.index()].up = up;
        Ok(())
    }

    /// Overrides the instantaneous delay of a link (nominal delay is untouched).
    pub fn set_link_delay(&mut self, id: LinkId, delay: f64) {
        self.links[id.index()].delay = delay;
    }

    pub fn neighbors_out(&self, n: NodeId) -> Result<Vec<(NodeId, LinkId)>, TopologyError> {
        if !self.contains(n) {
            return Err(TopologyError::UnknownNode(n));
        }
        Ok(self.up_links_from(n).collect())
    }

    /// Up outgoing links of a node known to exist, ascending by destination.
    pub fn up_links_from(&self, n: NodeId) -> impl Iterator<Item = (NodeId, LinkId)> + '_ {
        self.out[n.index()]
            .iter()
            .filter(|l| self.links[l.index()].up)
            .map(|l| (self.links[l.index()].dst, *l))
    }

    /// All outgoing links regardless of state.
    pub fn all_links_from(&self, n: NodeId) -> impl Iterator<Item = (NodeId, LinkId)> + '_ {
        self.out[n.index()]
            .iter()
            .map(|l| (self.links[l.index()].dst, *l))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> LinkSpec {
        LinkSpec::new(100.0, 0.010).with_monetary_cost(1.0)
    }

    #[test]
    fn first_node_is_zero_and_ids_are_distinct() {
        let mut t = Topology::new();
        let a = t.add_node(NodeKind::Host);
        let b = t.add_node(NodeKind::StandardRouter);
        assert_eq!(a, NodeId(0));
        assert_ne!(a, b);
    }

    #[test]
    fn node_kind_round_trip() {
        let mut t = Topology::new();
        let rs = t.add_node(NodeKind::RouteServer);
        assert_eq!(t.node_kind(rs).unwrap(), NodeKind::RouteServer);
        assert_eq!(
            t.node_kind(NodeId(9)),
            Err(TopologyError::UnknownNode(NodeId(9)))
        );
    }

    #[test]
    fn new_link_is_up_with_zero_jitter() {
        let mut t = Topology::new();
        let a = t.add_node(NodeKind::Host);
        let b = t.add_node(NodeKind::Host);
        let l = t.add_link(a, b, spec()).unwrap();
        assert!(t.is_up(l));
        assert_eq!(t.link(l).jitter(), 0.0);
    }

    #[test]
    fn link_guards() {
        let mut t = Topology::new();
        let a = t.add_node(NodeKind::Host);
        let b = t.add_node(NodeKind::Host);
        t.add_link(a, b, spec()).unwrap();
        assert_eq!(
            t.add_link(a, b, spec()),
            Err(TopologyError::DuplicateLink { src: a, dst: b })
        );
        assert!(matches!(
            t.add_link(b, a, LinkSpec::new(0.0, 0.01)),
            Err(TopologyError::NonPositiveBandwidth { .. })
        ));
        assert!(matches!(
            t.add_link(b, a, LinkSpec::new(1.0, -0.01)),
            Err(TopologyError::InvalidAttribute { .. })
        ));
        assert_eq!(
            t.add_link(a, NodeId(7), spec()),
            Err(TopologyError::UnknownNode(NodeId(7)))
        );
        // the reverse direction is a distinct record
        assert!(t.add_link(b, a, spec()).is_ok());
    }

    fn pair() -> (Topology, NodeId, NodeId) {
        let mut t = Topology::new();
        let a = t.add_node(NodeKind::StandardRouter);
        let b = t.add_node(NodeKind::StandardRouter);
        t.add_pair(a, b, spec()).unwrap();
        (t, a, b)
    }

    #[test]
    fn pair_state_is_symmetric_and_idempotent() {
        let (mut t, a, b) = pair();
        t.set_pair_state(a, b, false).unwrap();
        assert!(t.neighbors_out(a).unwrap().is_empty());
        assert!(t.neighbors_out(b).unwrap().is_empty());
        t.set_pair_state(a, b, false).unwrap();
        assert!(!t.is_up(t.link_between(a, b).unwrap()));
        t.set_pair_state(b, a, true).unwrap();
        assert_eq!(t.neighbors_out(a).unwrap().len(), 1);
        assert_eq!(t.neighbors_out(b).unwrap().len(), 1);
    }

    #[test]
    fn pair_state_needs_both_directions() {
        let mut t = Topology::new();
        let a = t.add_node(NodeKind::StandardRouter);
        let b = t.add_node(NodeKind::StandardRouter);
        t.add_link(a, b, spec()).unwrap();
        assert_eq!(
            t.set_pair_state(a, b, false),
            Err(TopologyError::UnknownLink { src: b, dst: a })
        );
        // nothing changed
        assert!(t.is_up(t.link_between(a, b).unwrap()));
    }

    #[test]
    fn single_direction_leaves_reverse_up() {
        let (mut t, a, b) = pair();
        let before = t.link(t.link_between(a, b).unwrap()).clone();
        t.set_link_state(a, b, false).unwrap();
        assert!(t.neighbors_out(a).unwrap().is_empty());
        assert_eq!(t.neighbors_out(b).unwrap()[0].0, a);
        t.set_link_state(a, b, true).unwrap();
        assert_eq!(t.link(t.link_between(a, b).unwrap()), &before);
        assert_eq!(
            t.set_link_state(a, NodeId(5), false),
            Err(TopologyError::UnknownLink {
                src: a,
                dst: NodeId(5)
            })
        );
    }

    #[test]
    fn neighbors_are_sorted_and_filtered() {
        let mut t = Topology::new();
        let n = t.add_node(NodeKind::StandardRouter);
        let x1 = t.add_node(NodeKind::Host);
        let _x2 = t.add_node(NodeKind::Host);
        let x3 = t.add_node(NodeKind::Host);
        assert!(t.neighbors_out(n).unwrap().is_empty());
        t.add_link(n, x3, spec()).unwrap();
        t.add_link(n, x1, spec()).unwrap();
        let got: Vec<_> = t.neighbors_out(n).unwrap().iter().map(|p| p.0).collect();
        assert_eq!(got, vec![x1, x3]);
        t.set_link_state(n, x3, false).unwrap();
        let got: Vec<_> = t.neighbors_out(n).unwrap().iter().map(|p| p.0).collect();
        // oracle: filter the full link set by hand
        let expect: Vec<_> = t
            .links()
            .filter(|(_, l)| l.src == n && l.up)
            .map(|(_, l)| l.dst)
            .collect();
        assert_eq!(got, expect);
        assert_eq!(got, vec![x1]);
    }
}
