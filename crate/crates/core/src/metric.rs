//! Hybrid route metric.
//!
//! A route's cost is a bandwidth term evaluated once against the end-to-end
//! bottleneck, plus the sum of additive per-hop costs:
//!
//! ```text
//! cost(R) = p0 / min_i(bandwidth_i) + sum_i hop_cost(link_i)
//! hop_cost(l) = p_delay * delay + p_jitter * |delay - nominal| + p_hop + p_money * money
//! ```
//!
//! The sum is always folded left to right starting from `0.0`, and the
//! bandwidth term is added last. The route server and the brute-force oracle
//! both go through [`route_cost`], so equal routes give bit-identical costs.

use crate::topology::{Link, LinkId, NodeId, Topology};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("parameter weights must be finite and non-negative")]
    NegativeWeight,
    #[error("at least one parameter weight must be positive")]
    AllZero,
    #[error("route has no links")]
    EmptyRoute,
    #[error("link {src} -> {dst} is down")]
    LinkDown { src: NodeId, dst: NodeId },
    #[error("links do not form a simple connected path")]
    NotAPath,
}

/// Weights of the hybrid metric. `p0` has data-size units (kB) so that
/// `p0 / bandwidth` is a time comparable with the delay terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterSet {
    pub p0: f64,
    pub p_delay: f64,
    pub p_jitter: f64,
    pub p_hop: f64,
    pub p_money: f64,
}

impl ParameterSet {
    pub fn new(
        p0: f64,
        p_delay: f64,
        p_jitter: f64,
        p_hop: f64,
        p_money: f64,
    ) -> Result<Self, MetricError> {
        let params = Self {
            p0,
            p_delay,
            p_jitter,
            p_hop,
            p_money,
        };
        params.validate()?;
        Ok(params)
    }

    /// Pure hop count.
    pub fn hop_count() -> Self {
        Self {
            p0: 0.0,
            p_delay: 0.0,
            p_jitter: 0.0,
            p_hop: 1.0,
            p_money: 0.0,
        }
    }

    pub fn weights(&self) -> [f64; 5] {
        [
            self.p0,
            self.p_delay,
            self.p_jitter,
            self.p_hop,
            self.p_money,
        ]
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let w = self.weights();
        if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(MetricError::NegativeWeight);
        }
        if w.iter().all(|x| *x == 0.0) {
            return Err(MetricError::AllZero);
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            p0: self.p0 * c,
            p_delay: self.p_delay * c,
            p_jitter: self.p_jitter * c,
            p_hop: self.p_hop * c,
            p_money: self.p_money * c,
        }
    }

    /// Additive cost of one link, without the up check.
    pub(crate) fn link_weight(&self, link: &Link) -> f64 {
        self.p_delay * link.delay
            + self.p_jitter * link.jitter()
            + self.p_hop
            + self.p_money * link.monetary_cost
    }
}

impl Default for ParameterSet {
    fn default() -> Self {
        Self::hop_count()
    }
}

pub fn hop_cost(link: &Link, params: &ParameterSet) -> Result<f64, MetricError> {
    if !link.up {
        return Err(MetricError::LinkDown {
            src: link.src,
            dst: link.dst,
        });
    }
    Ok(params.link_weight(link))
}

pub fn effective_bandwidth(links: &[&Link]) -> Result<f64, MetricError> {
    links
        .iter()
        .map(|l| l.bandwidth)
        .reduce(f64::min)
        .ok_or(MetricError::EmptyRoute)
}

/// Sum of per-hop costs, folded in path order.
pub fn additive_cost(links: &[&Link], params: &ParameterSet) -> Result<f64, MetricError> {
    links
        .iter()
        .try_fold(0.0, |acc, l| Ok(acc + hop_cost(l, params)?))
}

pub fn route_cost(links: &[&Link], params: &ParameterSet) -> Result<f64, MetricError> {
    let bandwidth = effective_bandwidth(links)?;
    let additive = additive_cost(links, params)?;
    Ok(params.p0 / bandwidth + additive)
}

/// A concrete path together with its cached cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    /// Intermediate systems only; excludes the two endpoints.
    pub hops: Vec<NodeId>,
    /// Every traversed link, first hop to last.
    pub links: Vec<LinkId>,
    pub total_cost: f64,
    pub bottleneck_bandwidth: f64,
}

impl Route {
    /// Builds a route from an ordered link list, checking it is a simple path of up links.
    pub fn from_links(
        topology: &Topology,
        links: Vec<LinkId>,
        params: &ParameterSet,
    ) -> Result<Self, MetricError> {
        let refs: Vec<&Link> = links.iter().map(|l| topology.link(*l)).collect();
        if refs.is_empty() {
            return Err(MetricError::EmptyRoute);
        }
        let mut seen = vec![refs[0].src];
        for w in refs.windows(2) {
            if w[0].dst != w[1].src {
                return Err(MetricError::NotAPath);
            }
        }
        for l in &refs {
            if seen.contains(&l.dst) {
                return Err(MetricError::NotAPath);
            }
            seen.push(l.dst);
        }
        let total_cost = route_cost(&refs, params)?;
        let bottleneck_bandwidth = effective_bandwidth(&refs)?;
        let hops = seen[1..seen.len() - 1].to_vec();
        Ok(Self {
            hops,
            links,
            total_cost,
            bottleneck_bandwidth,
        })
    }

    /// Full node sequence from source to destination.
    pub fn nodes(&self, topology: &Topology) -> Vec<NodeId> {
        let mut v = Vec::with_capacity(self.links.len() + 1);
        if let Some(first) = self.links.first() {
            v.push(topology.link(*first).src);
        }
        v.extend(self.links.iter().map(|l| topology.link(*l).dst));
        v
    }

    pub fn recompute_cost(
        &self,
        topology: &Topology,
        params: &ParameterSet,
    ) -> Result<f64, MetricError> {
        let refs: Vec<&Link> = self.links.iter().map(|l| topology.link(*l)).collect();
        route_cost(&refs, params)
    }

    pub fn contains_node(&self, n: NodeId) -> bool {
        self.hops.contains(&n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{LinkSpec, NodeKind};
    use approx_eq::assert_close;
    use proptest::prelude::*;

    mod approx_eq {
        macro_rules! assert_close {
            ($a:expr, $b:expr) => {{
                let (a, b): (f64, f64) = ($a, $b);
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} != {b}");
            }};
        }
        pub(crate) use assert_close;
    }

    fn link(bw: f64, delay: f64, nominal: f64, money: f64) -> Link {
        Link {
            src: NodeId(0),
            dst: NodeId(1),
            bandwidth: bw,
            delay,
            nominal_delay: nominal,
            monetary_cost: money,
            up: true,
        }
    }

    fn params(p0: f64, d: f64, j: f64, h: f64, m: f64) -> ParameterSet {
        ParameterSet::new(p0, d, j, h, m).unwrap()
    }

    #[test]
    fn parameter_guards() {
        assert_eq!(
            ParameterSet::new(0.0, 0.0, 0.0, 0.0, 0.0),
            Err(MetricError::AllZero)
        );
        assert_eq!(
            ParameterSet::new(-1.0, 0.0, 0.0, 1.0, 0.0),
            Err(MetricError::NegativeWeight)
        );
        assert_eq!(
            ParameterSet::new(f64::NAN, 0.0, 0.0, 1.0, 0.0),
            Err(MetricError::NegativeWeight)
        );
    }

    #[test]
    fn hop_cost_examples() {
        let l = link(100.0, 0.010, 0.010, 3.0);
        assert_eq!(hop_cost(&l, &ParameterSet::hop_count()).unwrap(), 1.0);
        assert_eq!(
            hop_cost(&l, &params(0.0, 1.0, 0.0, 0.0, 0.0)).unwrap(),
            0.010
        );
        let l = link(100.0, 0.02, 0.01, 4.0);
        // 2*0.02 + 1*0.01 + 1 + 0.5*4
        assert_close!(
            hop_cost(&l, &params(0.0, 2.0, 1.0, 1.0, 0.5)).unwrap(),
            3.05
        );
    }

    #[test]
    fn jitter_is_absolute_deviation() {
        let fast = link(1.0, 0.005, 0.010, 0.0);
        let slow = link(1.0, 0.015, 0.010, 0.0);
        let p = params(0.0, 0.0, 1.0, 0.0, 0.0);
        assert_close!(hop_cost(&fast, &p).unwrap(), 0.005);
        assert_close!(hop_cost(&slow, &p).unwrap(), 0.005);
        // opposite deviations add up instead of cancelling
        assert_close!(additive_cost(&[&fast, &slow], &p).unwrap(), 0.010);
    }

    #[test]
    fn down_link_is_rejected() {
        let mut l = link(1.0, 0.0, 0.0, 0.0);
        l.up = false;
        assert!(matches!(
            hop_cost(&l, &ParameterSet::hop_count()),
            Err(MetricError::LinkDown { .. })
        ));
        assert!(matches!(
            route_cost(&[&l], &ParameterSet::hop_count()),
            Err(MetricError::LinkDown { .. })
        ));
    }

    #[test]
    fn effective_bandwidth_is_min() {
        let ls = [
            link(100.0, 0.0, 0.0, 0.0),
            link(5.0, 0.0, 0.0, 0.0),
            link(20.0, 0.0, 0.0, 0.0),
        ];
        let refs: Vec<&Link> = ls.iter().collect();
        assert_eq!(effective_bandwidth(&refs).unwrap(), 5.0);
        assert_eq!(
            effective_bandwidth(&[&link(42.0, 0.0, 0.0, 0.0)]).unwrap(),
            42.0
        );
        let eq = [link(10.0, 0.0, 0.0, 0.0), link(10.0, 0.0, 0.0, 0.0)];
        assert_eq!(effective_bandwidth(&[&eq[0], &eq[1]]).unwrap(), 10.0);
        assert_eq!(effective_bandwidth(&[]), Err(MetricError::EmptyRoute));
        assert_eq!(
            route_cost(&[], &ParameterSet::hop_count()),
            Err(MetricError::EmptyRoute)
        );
    }

    #[test]
    fn route_cost_examples() {
        let ls = [link(10.0, 0.01, 0.01, 1.0), link(20.0, 0.02, 0.02, 2.0)];
        let refs: Vec<&Link> = ls.iter().collect();
        let p = params(0.0, 1.0, 0.0, 1.0, 1.0);
        assert_eq!(
            route_cost(&refs, &p).unwrap(),
            additive_cost(&refs, &p).unwrap()
        );
        let single = link(50.0, 0.0, 0.0, 0.0);
        assert_eq!(
            route_cost(&[&single], &params(100.0, 0.0, 0.0, 0.0, 0.0)).unwrap(),
            2.0
        );
    }

    #[test]
    fn bandwidth_term_uses_bottleneck_not_each_hop() {
        let ls = [
            link(100.0, 0.0, 0.0, 0.0),
            link(25.0, 0.0, 0.0, 0.0),
            link(50.0, 0.0, 0.0, 0.0),
        ];
        let refs: Vec<&Link> = ls.iter().collect();
        let p = params(100.0, 0.0, 0.0, 0.0, 0.0);
        let per_hop: f64 = ls.iter().map(|l| p.p0 / l.bandwidth).sum();
        assert_eq!(per_hop, 7.0);
        assert_eq!(route_cost(&refs, &p).unwrap(), 4.0);
    }

    fn diamond() -> (Topology, Vec<LinkId>, Vec<LinkId>) {
        // 0 -> 1 -> 3 is short but thin; 0 -> 2 -> 3 is wide
        let mut t = Topology::new();
        for _ in 0..4 {
            t.add_node(NodeKind::StandardRouter);
        }
        let n = |i| NodeId(i);
        let a = t.add_link(n(0), n(1), LinkSpec::new(10.0, 0.0)).unwrap();
        let b = t.add_link(n(1), n(3), LinkSpec::new(10.0, 0.0)).unwrap();
        let c = t.add_link(n(0), n(2), LinkSpec::new(100.0, 0.0)).unwrap();
        let d = t
            .add_link(
                n(2),
                n(3),
                LinkSpec::new(100.0, 0.0).with_monetary_cost(5.0),
            )
            .unwrap();
        (t, vec![a, b], vec![c, d])
    }

    #[test]
    fn p0_trades_bandwidth_against_additive_cost() {
        let (t, thin, wide) = diamond();
        let cost = |links: &Vec<LinkId>, p: &ParameterSet| {
            Route::from_links(&t, links.clone(), p).unwrap().total_cost
        };
        let cheap = params(0.0, 0.0, 0.0, 1.0, 1.0);
        // thin: 2 hops = 2; wide: 2 hops + 5 money = 7
        assert!(cost(&thin, &cheap) < cost(&wide, &cheap));
        let fat = params(1000.0, 0.0, 0.0, 1.0, 1.0);
        // thin: 100 + 2; wide: 10 + 7
        assert!(cost(&wide, &fat) < cost(&thin, &fat));
    }

    #[test]
    fn route_construction_checks_path() {
        let (t, thin, wide) = diamond();
        let p = ParameterSet::hop_count();
        let r = Route::from_links(&t, thin.clone(), &p).unwrap();
        assert_eq!(r.hops, vec![NodeId(1)]);
        assert_eq!(r.nodes(&t), vec![NodeId(0), NodeId(1), NodeId(3)]);
        assert_eq!(r.bottleneck_bandwidth, 10.0);
        assert_eq!(
            Route::from_links(&t, vec![thin[0], wide[1]], &p),
            Err(MetricError::NotAPath)
        );
        assert_eq!(
            Route::from_links(&t, vec![], &p),
            Err(MetricError::EmptyRoute)
        );
    }

    fn arb_link() -> impl Strategy<Value = Link> {
        (1.0f64..1000.0, 0.0f64..0.1, 0.0f64..0.1, 0.0f64..10.0)
            .prop_map(|(bw, d, n, m)| link(bw, d, n, m))
    }

    fn arb_params() -> impl Strategy<Value = ParameterSet> {
        (
            0.0f64..500.0,
            0.0f64..10.0,
            0.0f64..10.0,
            0.0f64..5.0,
            0.0f64..5.0,
        )
            .prop_filter_map("all zero", |(a, b, c, d, e)| {
                ParameterSet::new(a, b, c, d, e).ok()
            })
    }

    proptest! {
        #[test]
        fn appending_a_link_never_lowers_cost(
            links in prop::collection::vec(arb_link(), 1..6),
            extra in arb_link(),
            p in arb_params(),
        ) {
            let mut refs: Vec<&Link> = links.iter().collect();
            let before = route_cost(&refs, &p).unwrap();
            refs.push(&extra);
            prop_assert!(route_cost(&refs, &p).unwrap() >= before);
        }

        #[test]
        fn power_of_two_scaling_is_exact(
            links in prop::collection::vec(arb_link(), 1..6),
            p in arb_params(),
            k in -3i32..4,
        ) {
            let c = 2f64.powi(k);
            let refs: Vec<&Link> = links.iter().collect();
            prop_assert_eq!(
                route_cost(&refs, &p.scaled(c)).unwrap(),
                c * route_cost(&refs, &p).unwrap()
            );
        }
    }
}
