//! Brute-force references for tests and benches.
//!
//! Every simple path is enumerated depth-first and costed with the same
//! metric code as the optimizer, so the two agree bit for bit.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::metric::{ParameterSet, Route};
use crate::route_server::{compare_candidates, RouteError, RouteQuery};
use crate::topology::{LinkId, LinkSpec, NodeId, NodeKind, Topology};

/// Larger graphs are refused; enumeration is factorial.
pub const MAX_NODES: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("{0} nodes exceed the enumeration limit of {MAX_NODES}")]
    TooLarge(usize),
    #[error(transparent)]
    Route(#[from] RouteError),
}

/// Every simple path from `query.src` to `query.dst` that respects the query's
/// exclusions, in DFS order.
pub fn enumerate_paths(
    topology: &Topology,
    query: &RouteQuery,
) -> Result<Vec<Vec<LinkId>>, OracleError> {
    if topology.node_count() > MAX_NODES {
        return Err(OracleError::TooLarge(topology.node_count()));
    }
    query.check(topology)?;
    let mut out = Vec::new();
    let mut on_path = vec![false; topology.node_count()];
    let mut stack = Vec::new();
    on_path[query.src.index()] = true;
    dfs(
        topology,
        query,
        query.src,
        &mut on_path,
        &mut stack,
        &mut out,
    );
    Ok(out)
}

fn dfs(
    topology: &Topology,
    query: &RouteQuery,
    at: NodeId,
    on_path: &mut [bool],
    stack: &mut Vec<LinkId>,
    out: &mut Vec<Vec<LinkId>>,
) {
    if at == query.dst {
        out.push(stack.clone());
        return;
    }
    if !query.may_transit(topology, at) {
        return;
    }
    for (next, id) in topology.all_links_from(at) {
        if on_path[next.index()] || !query.link_usable(topology, id) {
            continue;
        }
        on_path[next.index()] = true;
        stack.push(id);
        dfs(topology, query, next, on_path, stack, out);
        stack.pop();
        on_path[next.index()] = false;
    }
}

/// Exact optimum over all simple paths, with the optimizer's tie-break.
pub fn brute_force_optimal(
    topology: &Topology,
    query: &RouteQuery,
) -> Result<(f64, Route), OracleError> {
    let mut best: Option<(Route, Vec<NodeId>)> = None;
    for links in enumerate_paths(topology, query)? {
        let route = Route::from_links(topology, links, &query.params)
            .expect("enumerated paths are simple and up");
        let nodes = route.nodes(topology);
        let replace = best.as_ref().is_none_or(|(r, n)| {
            compare_candidates((route.total_cost, &nodes), (r.total_cost, n)) == Ordering::Less
        });
        if replace {
            best = Some((route, nodes));
        }
    }
    best.map(|(r, _)| (r.total_cost, r))
        .ok_or(OracleError::Route(RouteError::NoRoute {
            src: query.src,
            dst: query.dst,
        }))
}

/// A random instance for cross-checking the optimizer.
#[derive(Debug, Clone)]
pub struct RandomCase {
    pub topology: Topology,
    pub query: RouteQuery,
}

/// Bounds for [`random_case`].
#[derive(Debug, Clone, Copy)]
pub struct CaseShape {
    pub max_nodes: usize,
    pub max_links: usize,
    pub max_bandwidths: usize,
}

impl Default for CaseShape {
    fn default() -> Self {
        Self {
            max_nodes: 8,
            max_links: 14,
            max_bandwidths: 3,
        }
    }
}

/// Random graph with dyadic attributes: bandwidths are powers of two and every
/// weight and delay is a small multiple of 1/4, so all costs are exact in
/// binary floating point and ties are genuine ties.
pub fn random_case<R: Rng>(rng: &mut R, shape: CaseShape) -> RandomCase {
    let n = rng.gen_range(2..=shape.max_nodes);
    let mut t = Topology::new();
    let src = t.add_node(NodeKind::Host);
    for _ in 1..n - 1 {
        let kind = match rng.gen_range(0..6) {
            0 => NodeKind::Host,
            1 | 2 => NodeKind::AdaptiveRouter,
            _ => NodeKind::StandardRouter,
        };
        t.add_node(kind);
    }
    let dst = t.add_node(NodeKind::Host);

    let mut pool: Vec<f64> = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0].to_vec();
    pool.shuffle(rng);
    pool.truncate(rng.gen_range(1..=shape.max_bandwidths));
    let quarter = |rng: &mut R, max: u32| f64::from(rng.gen_range(0..=max)) / 4.0;

    let target = rng.gen_range(n - 1..=shape.max_links.max(n - 1));
    let mut attempts = 0;
    while t.link_count() < target && attempts < 200 {
        attempts += 1;
        let a = NodeId(rng.gen_range(0..n as u32));
        let b = NodeId(rng.gen_range(0..n as u32));
        if a == b || t.link_between(a, b).is_some() {
            continue;
        }
        let delay = quarter(rng, 8);
        let spec = LinkSpec::new(*pool.choose(rng).unwrap(), delay)
            .with_nominal_delay(quarter(rng, 8))
            .with_monetary_cost(quarter(rng, 8));
        if t.link_count() + 2 <= target && t.link_between(b, a).is_none() && rng.gen_bool(0.7) {
            t.add_pair(a, b, spec).unwrap();
        } else {
            t.add_link(a, b, spec).unwrap();
        }
        if rng.gen_bool(0.08) {
            let id = t.link_between(a, b).unwrap();
            t.set_link_state(a, b, false).unwrap();
            debug_assert!(!t.is_up(id));
        }
    }

    let params = loop {
        let p = ParameterSet {
            p0: quarter(rng, 64),
            p_delay: quarter(rng, 8),
            p_jitter: quarter(rng, 8),
            p_hop: quarter(rng, 8),
            p_money: quarter(rng, 8),
        };
        if p.validate().is_ok() {
            break p;
        }
    };
    RandomCase {
        topology: t,
        query: RouteQuery::new(src, dst, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn guard_and_no_route() {
        let mut t = Topology::new();
        for _ in 0..13 {
            t.add_node(NodeKind::StandardRouter);
        }
        let q = RouteQuery::new(NodeId(0), NodeId(1), ParameterSet::hop_count());
        assert_eq!(
            brute_force_optimal(&t, &q).unwrap_err(),
            OracleError::TooLarge(13)
        );

        let mut t = Topology::new();
        t.add_node(NodeKind::Host);
        t.add_node(NodeKind::Host);
        assert!(matches!(
            brute_force_optimal(&t, &q),
            Err(OracleError::Route(RouteError::NoRoute { .. }))
        ));
    }

    #[test]
    fn random_cases_stay_in_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let c = random_case(&mut rng, CaseShape::default());
            assert!(c.topology.node_count() <= 8);
            assert!(c.topology.link_count() <= 14);
            let mut bws: Vec<f64> = c.topology.links().map(|(_, l)| l.bandwidth).collect();
            bws.sort_by(f64::total_cmp);
            bws.dedup();
            assert!(bws.len() <= 3);
        }
    }
}
