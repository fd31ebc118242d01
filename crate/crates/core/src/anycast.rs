//! Service-oriented anycast addressing with per-flow member exclusion.
//!
//! A flow towards an anycast group is resolved by its source host to the
//! nearest member (by hop count) that is not in the flow's exclusion set.
//! Members are always identified by their unicast address, never by where they
//! sit on a path. Any change to the exclusion set closes the current stream and
//! opens a successor with a fresh flow label.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::adaptive_router::{FlowKey, LabelAllocator};
use crate::topology::{NodeId, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AddressKind {
    Unicast,
    Anycast,
}

/// Network prefix plus either a host identifier (unicast) or a service
/// identifier (anycast).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address {
    pub prefix: u16,
    pub suffix: u32,
    pub kind: AddressKind,
}

impl Address {
    pub fn unicast(prefix: u16, host: u32) -> Self {
        Self {
            prefix,
            suffix: host,
            kind: AddressKind::Unicast,
        }
    }

    pub fn anycast(prefix: u16, service: u32) -> Self {
        Self {
            prefix,
            suffix: service,
            kind: AddressKind::Anycast,
        }
    }

    pub fn is_anycast(&self) -> bool {
        self.kind == AddressKind::Anycast
    }
}

/// `fd00::5` for unicast, `fd00::svc:50` for anycast (hex fields).
impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            AddressKind::Unicast => write!(f, "{:x}::{:x}", self.prefix, self.suffix),
            AddressKind::Anycast => write!(f, "{:x}::svc:{:x}", self.prefix, self.suffix),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed address `{0}`")]
pub struct AddressParseError(pub String);

impl FromStr for Address {
    type Err = AddressParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || AddressParseError(s.to_string());
        let (prefix, rest) = s.split_once("::").ok_or_else(err)?;
        let prefix = u16::from_str_radix(prefix, 16).map_err(|_| err())?;
        match rest.strip_prefix("svc:") {
            Some(svc) => Ok(Address::anycast(
                prefix,
                u32::from_str_radix(svc, 16).map_err(|_| err())?,
            )),
            None => Ok(Address::unicast(
                prefix,
                u32::from_str_radix(rest, 16).map_err(|_| err())?,
            )),
        }
    }
}

/// Maps host nodes to their unicast addresses under a single prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddressPlan {
    pub prefix: u16,
}

impl AddressPlan {
    pub fn new(prefix: u16) -> Self {
        Self { prefix }
    }

    pub fn unicast(&self, node: NodeId) -> Address {
        Address::unicast(self.prefix, node.0)
    }

    pub fn node_of(&self, addr: &Address) -> Option<NodeId> {
        (addr.kind == AddressKind::Unicast && addr.prefix == self.prefix)
            .then_some(NodeId(addr.suffix))
    }
}

impl Default for AddressPlan {
    fn default() -> Self {
        Self { prefix: 0xfd00 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Member {
    pub unicast: Address,
    pub host: NodeId,
    pub attachment_router: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnycastGroup {
    pub name: String,
    pub address: Address,
    members: Vec<Member>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnycastError {
    #[error("anycast group has no members")]
    EmptyGroup,
    #[error("group address {0} is not an anycast address")]
    NotAnycast(Address),
    #[error("member {0} is listed twice")]
    DuplicateMember(Address),
    #[error("every member of the group is excluded")]
    AllMembersExcluded,
    #[error("no non-excluded member is reachable")]
    NoReachableMember,
    #[error("{0} is not a member of the group")]
    UnknownMember(Address),
    #[error("excluding {0} would leave no members")]
    WouldExcludeAll(Address),
    #[error("{0} is not excluded")]
    NotExcluded(Address),
}

impl AnycastGroup {
    pub fn new(
        name: impl Into<String>,
        address: Address,
        members: Vec<Member>,
    ) -> Result<Self, AnycastError> {
        if !address.is_anycast() {
            return Err(AnycastError::NotAnycast(address));
        }
        if members.is_empty() {
            return Err(AnycastError::EmptyGroup);
        }
        let mut seen = BTreeSet::new();
        for m in &members {
            if !seen.insert(m.unicast) {
                return Err(AnycastError::DuplicateMember(m.unicast));
            }
        }
        Ok(Self {
            name: name.into(),
            address,
            members,
        })
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn member(&self, unicast: &Address) -> Option<&Member> {
        self.members.iter().find(|m| m.unicast == *unicast)
    }
}

/// The exclusion header of one flow: member unicast addresses it must not reach.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExclusionSet {
    pub excluded: BTreeSet<Address>,
    pub owner_flow: FlowKey,
}

impl ExclusionSet {
    pub fn new(owner_flow: FlowKey) -> Self {
        Self {
            excluded: BTreeSet::new(),
            owner_flow,
        }
    }

    pub fn contains(&self, a: &Address) -> bool {
        self.excluded.contains(a)
    }

    pub fn len(&self) -> usize {
        self.excluded.len()
    }

    pub fn is_empty(&self) -> bool {
        self.excluded.is_empty()
    }
}

/// Hop distances from `source`, transiting routers only.
pub(crate) fn hop_distances(topology: &Topology, source: NodeId) -> Vec<Option<u32>> {
    let mut dist = vec![None; topology.node_count()];
    dist[source.index()] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        if u != source && !topology.kind(u).is_router() {
            continue;
        }
        let du = dist[u.index()].unwrap_or(0);
        for (v, _) in topology.up_links_from(u) {
            if dist[v.index()].is_none() {
                dist[v.index()] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Nearest non-excluded member whose attachment router is reachable from
/// `source`; ties go to the lowest unicast address.
pub fn resolve<'g>(
    group: &'g AnycastGroup,
    source: NodeId,
    exclusions: &ExclusionSet,
    topology: &Topology,
) -> Result<&'g Member, AnycastError> {
    let candidates: Vec<&Member> = group
        .members
        .iter()
        .filter(|m| !exclusions.contains(&m.unicast))
        .collect();
    if candidates.is_empty() {
        return Err(AnycastError::AllMembersExcluded);
    }
    let dist = hop_distances(topology, source);
    candidates
        .into_iter()
        .filter_map(|m| {
            dist.get(m.attachment_router.index())
                .copied()
                .flatten()
                .map(|d| (d, m))
        })
        .min_by(|(da, a), (db, b)| da.cmp(db).then(a.unicast.cmp(&b.unicast)))
        .map(|(_, m)| m)
        .ok_or(AnycastError::NoReachableMember)
}

/// Source-host state for a flow addressed to an anycast group.
///
/// Only the owning source host holds one of these, so only it can change
/// which members are excluded.
#[derive(Debug, Clone)]
pub struct AnycastSession {
    pub group: AnycastGroup,
    pub source: NodeId,
    pub source_address: Address,
    pub exclusions: ExclusionSet,
    current: FlowKey,
}

impl AnycastSession {
    /// Resolves the group and mints the first flow label.
    pub fn open(
        group: AnycastGroup,
        source: NodeId,
        source_address: Address,
        labels: &mut LabelAllocator,
        topology: &Topology,
    ) -> Result<Self, AnycastError> {
        let placeholder = FlowKey::new(0, source_address, group.address);
        let exclusions = ExclusionSet::new(placeholder);
        let target = resolve(&group, source, &exclusions, topology)?.unicast;
        let label = labels.next(source_address, group.address);
        let current = FlowKey::new(label, source_address, target);
        Ok(Self {
            group,
            source,
            source_address,
            exclusions: ExclusionSet {
                owner_flow: current,
                ..exclusions
            },
            current,
        })
    }

    pub fn current(&self) -> FlowKey {
        self.current
    }

    pub fn resolved_member(&self) -> &Member {
        self.group
            .member(&self.current.dst)
            .expect("current flow always targets a member")
    }

    fn reopen(
        &mut self,
        labels: &mut LabelAllocator,
        topology: &Topology,
    ) -> Result<FlowKey, AnycastError> {
        let target = resolve(&self.group, self.source, &self.exclusions, topology)?.unicast;
        let label = labels.next(self.source_address, self.group.address);
        self.current = FlowKey::new(label, self.source_address, target);
        self.exclusions.owner_flow = self.current;
        Ok(self.current)
    }

    /// Adds `member` to the exclusion set and opens a successor flow.
    /// Excluding an already-excluded member still opens a new flow.
    pub fn exclude(
        &mut self,
        member: Address,
        labels: &mut LabelAllocator,
        topology: &Topology,
    ) -> Result<FlowKey, AnycastError> {
        if self.group.member(&member).is_none() {
            return Err(AnycastError::UnknownMember(member));
        }
        let newly = self.exclusions.excluded.insert(member);
        if self.exclusions.len() == self.group.members.len() {
            if newly {
                self.exclusions.excluded.remove(&member);
            }
            return Err(AnycastError::WouldExcludeAll(member));
        }
        self.reopen(labels, topology).inspect_err(|_| {
            if newly {
                self.exclusions.excluded.remove(&member);
            }
        })
    }

    /// Removes `member` from the exclusion set and opens a successor flow.
    pub fn readmit(
        &mut self,
        member: Address,
        labels: &mut LabelAllocator,
        topology: &Topology,
    ) -> Result<FlowKey, AnycastError> {
        if !self.exclusions.excluded.remove(&member) {
            return Err(AnycastError::NotExcluded(member));
        }
        self.reopen(labels, topology).inspect_err(|_| {
            self.exclusions.excluded.insert(member);
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{LinkSpec, NodeKind};

    const PLAN: AddressPlan = AddressPlan { prefix: 0xfd00 };

    /// src(0) - r1 - r2 - h3 ; r1 - r4 - r5 - r6 - h7
    /// member h3 is 2 hops from src to its router, h7 is 4.
    fn world() -> (Topology, AnycastGroup) {
        let mut t = Topology::new();
        let kinds = [
            NodeKind::Host,
            NodeKind::StandardRouter,
            NodeKind::StandardRouter,
            NodeKind::Host,
            NodeKind::StandardRouter,
            NodeKind::StandardRouter,
            NodeKind::StandardRouter,
            NodeKind::Host,
        ];
        for k in kinds {
            t.add_node(k);
        }
        for (a, b) in [(0, 1), (1, 2), (2, 3), (1, 4), (4, 5), (5, 6), (6, 7)] {
            t.add_pair(NodeId(a), NodeId(b), LinkSpec::new(100.0, 0.001))
                .unwrap();
        }
        let members = vec![
            Member {
                unicast: PLAN.unicast(NodeId(7)),
                host: NodeId(7),
                attachment_router: NodeId(6),
            },
            Member {
                unicast: PLAN.unicast(NodeId(3)),
                host: NodeId(3),
                attachment_router: NodeId(2),
            },
        ];
        let g = AnycastGroup::new("web", Address::anycast(0xfd00, 0x50), members).unwrap();
        (t, g)
    }

    fn session(t: &Topology, g: &AnycastGroup, labels: &mut LabelAllocator) -> AnycastSession {
        AnycastSession::open(g.clone(), NodeId(0), PLAN.unicast(NodeId(0)), labels, t).unwrap()
    }

    #[test]
    fn address_text_round_trip() {
        for a in [
            Address::unicast(0xfd00, 0x1f),
            Address::anycast(0x2001, 0x50),
        ] {
            assert_eq!(a.to_string().parse::<Address>().unwrap(), a);
        }
        assert_eq!(Address::anycast(0xfd00, 80).to_string(), "fd00::svc:50");
        assert!("nonsense".parse::<Address>().is_err());
    }

    #[test]
    fn group_guards() {
        let any = Address::anycast(1, 1);
        assert_eq!(
            AnycastGroup::new("g", any, vec![]),
            Err(AnycastError::EmptyGroup)
        );
        let m = Member {
            unicast: Address::unicast(1, 2),
            host: NodeId(2),
            attachment_router: NodeId(1),
        };
        assert_eq!(
            AnycastGroup::new("g", any, vec![m.clone(), m.clone()]),
            Err(AnycastError::DuplicateMember(m.unicast))
        );
        assert!(matches!(
            AnycastGroup::new("g", Address::unicast(1, 1), vec![m]),
            Err(AnycastError::NotAnycast(_))
        ));
    }

    #[test]
    fn nearest_member_wins() {
        let (t, g) = world();
        let none = ExclusionSet::new(FlowKey::new(1, PLAN.unicast(NodeId(0)), g.address));
        assert_eq!(resolve(&g, NodeId(0), &none, &t).unwrap().host, NodeId(3));
    }

    #[test]
    fn excluded_nearest_falls_through_to_next() {
        let (t, g) = world();
        let mut ex = ExclusionSet::new(FlowKey::new(1, PLAN.unicast(NodeId(0)), g.address));
        ex.excluded.insert(PLAN.unicast(NodeId(3)));
        assert_eq!(resolve(&g, NodeId(0), &ex, &t).unwrap().host, NodeId(7));
        ex.excluded.insert(PLAN.unicast(NodeId(7)));
        assert_eq!(
            resolve(&g, NodeId(0), &ex, &t),
            Err(AnycastError::AllMembersExcluded)
        );
    }

    #[test]
    fn unreachable_members_are_skipped() {
        let (mut t, g) = world();
        t.set_pair_state(NodeId(1), NodeId(2), false).unwrap();
        let none = ExclusionSet::new(FlowKey::new(1, PLAN.unicast(NodeId(0)), g.address));
        assert_eq!(resolve(&g, NodeId(0), &none, &t).unwrap().host, NodeId(7));
        t.set_pair_state(NodeId(1), NodeId(4), false).unwrap();
        assert_eq!(
            resolve(&g, NodeId(0), &none, &t),
            Err(AnycastError::NoReachableMember)
        );
    }

    #[test]
    fn equal_distance_ties_break_on_lowest_address() {
        let mut t = Topology::new();
        let src = t.add_node(NodeKind::Host);
        let r = t.add_node(NodeKind::StandardRouter);
        let h_hi = t.add_node(NodeKind::Host);
        let h_lo = t.add_node(NodeKind::Host);
        for (a, b) in [(src, r), (r, h_hi), (r, h_lo)] {
            t.add_pair(a, b, LinkSpec::new(1.0, 0.0)).unwrap();
        }
        let m = |h: NodeId, u: u32| Member {
            unicast: Address::unicast(1, u),
            host: h,
            attachment_router: r,
        };
        let g =
            AnycastGroup::new("g", Address::anycast(1, 9), vec![m(h_hi, 9), m(h_lo, 3)]).unwrap();
        let none = ExclusionSet::new(FlowKey::new(1, Address::unicast(1, 0), g.address));
        assert_eq!(resolve(&g, src, &none, &t).unwrap().host, h_lo);
    }

    #[test]
    fn exclude_mints_successor_and_readmit_restores() {
        let (t, g) = world();
        let mut labels = LabelAllocator::default();
        let mut s = session(&t, &g, &mut labels);
        let first = s.current();
        assert_eq!(s.resolved_member().host, NodeId(3));

        let near = PLAN.unicast(NodeId(3));
        let second = s.exclude(near, &mut labels, &t).unwrap();
        assert!(second.label > first.label);
        assert_eq!(second.dst, PLAN.unicast(NodeId(7)));
        assert_eq!(s.exclusions.owner_flow, second);

        // repeated exclusion: same set, new label
        let third = s.exclude(near, &mut labels, &t).unwrap();
        assert!(third.label > second.label);
        assert_eq!(s.exclusions.len(), 1);

        let back = s.readmit(near, &mut labels, &t).unwrap();
        assert!(back.label > third.label);
        assert_eq!(back.dst, first.dst);
        assert!(s.exclusions.is_empty());
        assert_eq!(
            s.readmit(near, &mut labels, &t),
            Err(AnycastError::NotExcluded(near))
        );
    }

    #[test]
    fn exclusion_guards_leave_flow_unchanged() {
        let (t, g) = world();
        let mut labels = LabelAllocator::default();
        let mut s = session(&t, &g, &mut labels);
        let stranger = PLAN.unicast(NodeId(5));
        assert_eq!(
            s.exclude(stranger, &mut labels, &t),
            Err(AnycastError::UnknownMember(stranger))
        );
        s.exclude(PLAN.unicast(NodeId(3)), &mut labels, &t).unwrap();
        let before = s.current();
        let last = PLAN.unicast(NodeId(7));
        assert_eq!(
            s.exclude(last, &mut labels, &t),
            Err(AnycastError::WouldExcludeAll(last))
        );
        assert_eq!(s.current(), before);
        assert_eq!(s.exclusions.len(), 1);
    }
}
