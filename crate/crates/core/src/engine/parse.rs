//! Line-oriented scenario format: reader and canonical writer.
//!
//! See `docs/scenario-format.md` for the grammar.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::anycast::Address;
use crate::metric::ParameterSet;
use crate::route_server::RouteServerConfig;
use crate::topology::{LinkSpec, NodeId, NodeKind, Topology};
use crate::transport::TcpVariant;

use super::scenario::{
    ActionDecl, ActionKind, Destination, Diagnostic, FlowDecl, GroupDecl, LinkDecl, ProfileDecl,
    RouteServerDecl, Scenario, Traffic, ValidationError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Sim,
    Nodes,
    Links,
    Profiles,
    RouteServers,
    Groups,
    Flows,
    Actions,
}

impl Section {
    fn from_header(s: &str) -> Option<Self> {
        Some(match s {
            "sim" => Section::Sim,
            "nodes" => Section::Nodes,
            "links" => Section::Links,
            "profiles" => Section::Profiles,
            "route_servers" => Section::RouteServers,
            "anycast_groups" => Section::Groups,
            "flows" => Section::Flows,
            "actions" => Section::Actions,
            _ => return None,
        })
    }
}

type LineResult<T> = Result<T, String>;

fn num<T: FromStr>(what: &str, s: &str) -> LineResult<T> {
    s.parse().map_err(|_| format!("invalid {what} `{s}`"))
}

fn node(s: &str) -> LineResult<NodeId> {
    num::<u32>("node id", s).map(NodeId)
}

fn finite(what: &str, s: &str) -> LineResult<f64> {
    let v: f64 = num(what, s)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{what} must be finite, got `{s}`"))
    }
}

/// `key=value` attributes after the positional tokens.
struct Attrs<'a> {
    pairs: Vec<(&'a str, &'a str)>,
    used: Vec<bool>,
}

impl<'a> Attrs<'a> {
    fn parse(tokens: &[&'a str]) -> LineResult<Self> {
        let mut pairs = Vec::new();
        for t in tokens {
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, found `{t}`"))?;
            if pairs.iter().any(|(x, _)| *x == k) {
                return Err(format!("attribute `{k}` given twice"));
            }
            pairs.push((k, v));
        }
        let used = vec![false; pairs.len()];
        Ok(Self { pairs, used })
    }

    fn get(&mut self, key: &str) -> Option<&'a str> {
        let i = self.pairs.iter().position(|(k, _)| *k == key)?;
        self.used[i] = true;
        Some(self.pairs[i].1)
    }

    fn require(&mut self, key: &str) -> LineResult<&'a str> {
        self.get(key).ok_or_else(|| format!("missing `{key}=`"))
    }

    fn f64_or(&mut self, key: &str, default: f64) -> LineResult<f64> {
        self.get(key).map_or(Ok(default), |v| finite(key, v))
    }

    fn finish(self) -> LineResult<()> {
        match self.pairs.iter().zip(&self.used).find(|(_, u)| !**u) {
            Some(((k, _), _)) => Err(format!("unknown attribute `{k}`")),
            None => Ok(()),
        }
    }
}

fn yes_no(s: &str) -> LineResult<bool> {
    match s {
        "yes" | "true" => Ok(true),
        "no" | "false" => Ok(false),
        _ => Err(format!("expected yes or no, found `{s}`")),
    }
}

fn parse_sim(sc: &mut Scenario, line: &str) -> LineResult<()> {
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| format!("expected `key = value`, found `{line}`"))?;
    let (k, v) = (k.trim(), v.trim());
    let s = &mut sc.sim;
    match k {
        "name" => sc.name = v.to_string(),
        "duration" => s.duration = finite(k, v)?,
        "seed" => s.seed = num(k, v)?,
        "window" => s.window = finite(k, v)?,
        "segment" => s.segment_size = num(k, v)?,
        "queue" => s.queue_capacity = num(k, v)?,
        "dv_round" => s.dv_round = finite(k, v)?,
        "prefix" => {
            s.prefix = u16::from_str_radix(v, 16).map_err(|_| format!("invalid prefix `{v}`"))?
        }
        _ => return Err(format!("unknown setting `{k}`")),
    }
    Ok(())
}

fn parse_node(sc: &mut Scenario, toks: &[&str]) -> LineResult<()> {
    let [id, kind] = toks else {
        return Err("expected `<id> <kind>`".into());
    };
    let id = node(id)?;
    if id.index() != sc.nodes.len() {
        return Err(format!(
            "node ids must be dense and ascending: expected {}, found {id}",
            sc.nodes.len()
        ));
    }
    let kind = NodeKind::from_keyword(kind).ok_or_else(|| format!("unknown node kind `{kind}`"))?;
    sc.nodes.push(kind);
    Ok(())
}

fn parse_link(toks: &[&str], line: usize) -> LineResult<LinkDecl> {
    if toks.len() < 3 {
        return Err("expected `<a> <-> <b> bw=.. delay=..`".into());
    }
    let bidirectional = match toks[1] {
        "<->" => true,
        "->" => false,
        other => return Err(format!("expected `<->` or `->`, found `{other}`")),
    };
    let (a, b) = (node(toks[0])?, node(toks[2])?);
    let mut at = Attrs::parse(&toks[3..])?;
    let bw = finite("bandwidth", at.require("bw")?)?;
    let delay = finite("delay", at.require("delay")?)?;
    let nominal = at.f64_or("nominal", delay)?;
    let cost = at.f64_or("cost", 0.0)?;
    let jitter = at.f64_or("jitter", 0.0)?;
    let down = match at.get("state") {
        None | Some("up") => false,
        Some("down") => true,
        Some(o) => return Err(format!("invalid state `{o}`")),
    };
    at.finish()?;
    Ok(LinkDecl {
        a,
        b,
        bidirectional,
        spec: LinkSpec::new(bw, delay)
            .with_nominal_delay(nominal)
            .with_monetary_cost(cost),
        jitter,
        down,
        line,
    })
}

fn parse_profile(toks: &[&str], line: usize) -> LineResult<ProfileDecl> {
    let (name, rest) = toks.split_first().ok_or("expected a profile name")?;
    let mut at = Attrs::parse(rest)?;
    let params = ParameterSet {
        p0: at.f64_or("p0", 0.0)?,
        p_delay: at.f64_or("delay", 0.0)?,
        p_jitter: at.f64_or("jitter", 0.0)?,
        p_hop: at.f64_or("hop", 0.0)?,
        p_money: at.f64_or("money", 0.0)?,
    };
    at.finish()?;
    Ok(ProfileDecl {
        name: name.to_string(),
        params,
        line,
    })
}

fn parse_rs(toks: &[&str], line: usize) -> LineResult<RouteServerDecl> {
    let (id, rest) = toks.split_first().ok_or("expected a route server id")?;
    let mut at = Attrs::parse(rest)?;
    let d = RouteServerConfig::default();
    let config = RouteServerConfig {
        authorized: at.get("authorized").map_or(Ok(true), yes_no)?,
        keepalive_interval: at.f64_or("interval", d.keepalive_interval)?,
        keepalive_threshold: at
            .get("threshold")
            .map_or(Ok(d.keepalive_threshold), |v| num("threshold", v))?,
        response_latency: at.f64_or("latency", d.response_latency)?,
        keepalive_phase: at.f64_or("phase", d.keepalive_phase)?,
    };
    at.finish()?;
    Ok(RouteServerDecl {
        node: node(id)?,
        config,
        line,
    })
}

fn parse_group(toks: &[&str], line: usize) -> LineResult<GroupDecl> {
    let (name, rest) = toks.split_first().ok_or("expected a group name")?;
    let mut at = Attrs::parse(rest)?;
    let service = num("service", at.require("service")?)?;
    let members = at
        .require("members")?
        .split(',')
        .filter(|s| !s.is_empty())
        .map(node)
        .collect::<LineResult<Vec<_>>>()?;
    at.finish()?;
    Ok(GroupDecl {
        name: name.to_string(),
        service,
        members,
        line,
    })
}

fn parse_flow(toks: &[&str], line: usize) -> LineResult<FlowDecl> {
    let (name, rest) = toks.split_first().ok_or("expected a flow name")?;
    let mut at = Attrs::parse(rest)?;
    let src = node(at.require("src")?)?;
    let dst = at.require("dst")?;
    let dst = match dst.strip_prefix('@') {
        Some(g) => Destination::Group(g.to_string()),
        None => Destination::Node(node(dst)?),
    };
    let traffic = match (at.get("tcp"), at.get("cbr")) {
        (Some("reno"), None) => Traffic::Tcp(TcpVariant::Reno),
        (Some("tahoe"), None) => Traffic::Tcp(TcpVariant::Tahoe),
        (Some(v), None) => return Err(format!("unknown tcp variant `{v}`")),
        (None, Some(rate)) => Traffic::Cbr(finite("rate", rate)?),
        (None, None) => return Err("missing `tcp=` or `cbr=`".into()),
        (Some(_), Some(_)) => return Err("`tcp=` and `cbr=` are exclusive".into()),
    };
    let start = finite("start", at.require("start")?)?;
    let stop = at.get("stop").map(|v| finite("stop", v)).transpose()?;
    let profile = at.get("profile").map(str::to_string);
    let rs = at.get("rs").map(node).transpose()?;
    at.finish()?;
    Ok(FlowDecl {
        name: name.to_string(),
        src,
        dst,
        traffic,
        start,
        stop,
        profile,
        rs,
        line,
    })
}

fn member(s: &str) -> LineResult<Address> {
    if s.contains("::") {
        s.parse().map_err(|e| format!("{e}"))
    } else {
        Err(format!("expected a member address, found `{s}`"))
    }
}

fn parse_action(toks: &[&str], line: usize, prefix: u16) -> LineResult<Vec<ActionDecl>> {
    let [time, verb, args @ ..] = toks else {
        return Err("expected `<time> <action> ...`".into());
    };
    let time = finite("time", time)?;
    let one = |kind| Ok(vec![ActionDecl { time, kind, line }]);
    let pair = |args: &[&str]| -> LineResult<(NodeId, NodeId)> {
        match args {
            [a, b] => Ok((node(a)?, node(b)?)),
            _ => Err(format!("`{verb}` takes two node ids")),
        }
    };
    let flow_member = |args: &[&str]| -> LineResult<(String, Address)> {
        match args {
            [f, m] => {
                let m = member(m).or_else(|_| node(m).map(|n| Address::unicast(prefix, n.0)))?;
                Ok((f.to_string(), m))
            }
            _ => Err(format!("`{verb}` takes a flow name and a member")),
        }
    };
    match *verb {
        "fail" => {
            let (a, b) = pair(args.get(..2).unwrap_or(args))?;
            let mut at = Attrs::parse(args.get(2..).unwrap_or(&[]))?;
            let until = at.get("until").map(|v| finite("until", v)).transpose()?;
            at.finish()?;
            let mut out = vec![ActionDecl {
                time,
                kind: ActionKind::PairDown { a, b },
                line,
            }];
            if let Some(up) = until {
                if !(time < up) {
                    return Err(format!("repair at {up} is not after the failure at {time}"));
                }
                out.push(ActionDecl {
                    time: up,
                    kind: ActionKind::PairUp { a, b },
                    line,
                });
            }
            Ok(out)
        }
        "pair_down" => pair(args).and_then(|(a, b)| one(ActionKind::PairDown { a, b })),
        "pair_up" => pair(args).and_then(|(a, b)| one(ActionKind::PairUp { a, b })),
        "link_down" => pair(args).and_then(|(a, b)| one(ActionKind::LinkDown { a, b })),
        "link_up" => pair(args).and_then(|(a, b)| one(ActionKind::LinkUp { a, b })),
        "exclude" => {
            flow_member(args).and_then(|(flow, member)| one(ActionKind::Exclude { flow, member }))
        }
        "readmit" => {
            flow_member(args).and_then(|(flow, member)| one(ActionKind::Readmit { flow, member }))
        }
        "rogue_update" => match args {
            [rs, router, flow, via] => one(ActionKind::RogueUpdate {
                rs: node(rs)?,
                router: node(router)?,
                flow: flow.to_string(),
                via: node(via)?,
            }),
            _ => Err("`rogue_update` takes <rs> <router> <flow> <via>".into()),
        },
        other => Err(format!("unknown action `{other}`")),
    }
}

/// Parses without semantic validation; syntax errors from every line are collected.
pub fn parse_unchecked(text: &str) -> Result<Scenario, ValidationError> {
    let mut sc = Scenario::default();
    let mut section = None;
    let mut diags = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('[') {
            let name = h.strip_suffix(']').unwrap_or(h).trim();
            match Section::from_header(name) {
                Some(s) => section = Some(s),
                None => {
                    diags.push(Diagnostic::new(
                        line_no,
                        format!("unknown section `[{name}]`"),
                    ));
                    section = None;
                }
            }
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let res = match section {
            None => Err("content outside any section".to_string()),
            Some(Section::Sim) => parse_sim(&mut sc, line),
            Some(Section::Nodes) => parse_node(&mut sc, &toks),
            Some(Section::Links) => parse_link(&toks, line_no).map(|l| sc.links.push(l)),
            Some(Section::Profiles) => parse_profile(&toks, line_no).map(|p| sc.profiles.push(p)),
            Some(Section::RouteServers) => {
                parse_rs(&toks, line_no).map(|r| sc.route_servers.push(r))
            }
            Some(Section::Groups) => parse_group(&toks, line_no).map(|g| sc.groups.push(g)),
            Some(Section::Flows) => parse_flow(&toks, line_no).map(|f| sc.flows.push(f)),
            Some(Section::Actions) => {
                parse_action(&toks, line_no, sc.sim.prefix).map(|a| sc.actions.extend(a))
            }
        };
        if let Err(m) = res {
            diags.push(Diagnostic::new(line_no, m));
        }
    }
    if diags.is_empty() {
        Ok(sc)
    } else {
        Err(ValidationError { diagnostics: diags })
    }
}

/// Parses and validates.
pub fn parse_scenario(text: &str) -> Result<Scenario, ValidationError> {
    let sc = parse_unchecked(text)?;
    sc.validate()?;
    Ok(sc)
}

fn write_link(
    out: &mut String,
    a: NodeId,
    arrow: &str,
    b: NodeId,
    spec: &LinkSpec,
    jitter: f64,
    down: bool,
) {
    let _ = write!(
        out,
        "{a} {arrow} {b} bw={} delay={} nominal={} cost={}",
        spec.bandwidth, spec.delay, spec.nominal_delay, spec.monetary_cost
    );
    if jitter != 0.0 {
        let _ = write!(out, " jitter={jitter}");
    }
    if down {
        out.push_str(" state=down");
    }
    out.push('\n');
}

fn write_nodes(out: &mut String, kinds: impl Iterator<Item = NodeKind>) {
    out.push_str("[nodes]\n");
    for (i, k) in kinds.enumerate() {
        let _ = writeln!(out, "{i} {}", k.keyword());
    }
}

/// Canonical text for a topology: one directed link per line, in link-id order.
pub fn write_topology(t: &Topology) -> String {
    let mut out = String::new();
    write_nodes(&mut out, t.nodes().map(|(_, k)| k));
    out.push_str("\n[links]\n");
    for (_, l) in t.links() {
        let spec = LinkSpec::new(l.bandwidth, l.delay)
            .with_nominal_delay(l.nominal_delay)
            .with_monetary_cost(l.monetary_cost);
        write_link(&mut out, l.src, "->", l.dst, &spec, 0.0, !l.up);
    }
    out
}

/// Reads back what [`write_topology`] produced (or any nodes/links-only text).
pub fn parse_topology(text: &str) -> Result<Topology, ValidationError> {
    parse_unchecked(text)?.topology()
}

/// Canonical text for a scenario; parsing it yields the same scenario.
pub fn write_scenario(sc: &Scenario) -> String {
    let mut out = String::new();
    let s = &sc.sim;
    out.push_str("[sim]\n");
    if !sc.name.is_empty() {
        let _ = writeln!(out, "name = {}", sc.name);
    }
    let _ = writeln!(out, "duration = {}", s.duration);
    let _ = writeln!(out, "seed = {}", s.seed);
    let _ = writeln!(out, "window = {}", s.window);
    let _ = writeln!(out, "segment = {}", s.segment_size);
    let _ = writeln!(out, "queue = {}", s.queue_capacity);
    let _ = writeln!(out, "dv_round = {}", s.dv_round);
    let _ = writeln!(out, "prefix = {:x}", s.prefix);
    out.push('\n');
    write_nodes(&mut out, sc.nodes.iter().copied());
    out.push_str("\n[links]\n");
    for l in &sc.links {
        let arrow = if l.bidirectional { "<->" } else { "->" };
        write_link(&mut out, l.a, arrow, l.b, &l.spec, l.jitter, l.down);
    }
    if !sc.profiles.is_empty() {
        out.push_str("\n[profiles]\n");
        for p in &sc.profiles {
            let w = p.params;
            let _ = writeln!(
                out,
                "{} p0={} delay={} jitter={} hop={} money={}",
                p.name, w.p0, w.p_delay, w.p_jitter, w.p_hop, w.p_money
            );
        }
    }
    if !sc.route_servers.is_empty() {
        out.push_str("\n[route_servers]\n");
        for r in &sc.route_servers {
            let c = &r.config;
            let _ = writeln!(
                out,
                "{} authorized={} interval={} threshold={} latency={} phase={}",
                r.node,
                if c.authorized { "yes" } else { "no" },
                c.keepalive_interval,
                c.keepalive_threshold,
                c.response_latency,
                c.keepalive_phase
            );
        }
    }
    if !sc.groups.is_empty() {
        out.push_str("\n[anycast_groups]\n");
        for g in &sc.groups {
            let members: Vec<String> = g.members.iter().map(|m| m.to_string()).collect();
            let _ = writeln!(
                out,
                "{} service={} members={}",
                g.name,
                g.service,
                members.join(",")
            );
        }
    }
    if !sc.flows.is_empty() {
        out.push_str("\n[flows]\n");
        for f in &sc.flows {
            let dst = match &f.dst {
                Destination::Node(n) => n.to_string(),
                Destination::Group(g) => format!("@{g}"),
            };
            let traffic = match f.traffic {
                Traffic::Tcp(v) => format!("tcp={}", v.keyword()),
                Traffic::Cbr(r) => format!("cbr={r}"),
            };
            let _ = write!(
                out,
                "{} src={} dst={dst} {traffic} start={}",
                f.name, f.src, f.start
            );
            if let Some(s) = f.stop {
                let _ = write!(out, " stop={s}");
            }
            if let Some(p) = &f.profile {
                let _ = write!(out, " profile={p}");
            }
            if let Some(r) = f.rs {
                let _ = write!(out, " rs={r}");
            }
            out.push('\n');
        }
    }
    if !sc.actions.is_empty() {
        out.push_str("\n[actions]\n");
        for a in &sc.actions {
            let _ = write!(out, "{} ", a.time);
            let _ = match &a.kind {
                ActionKind::PairDown { a, b } => writeln!(out, "pair_down {a} {b}"),
                ActionKind::PairUp { a, b } => writeln!(out, "pair_up {a} {b}"),
                ActionKind::LinkDown { a, b } => writeln!(out, "link_down {a} {b}"),
                ActionKind::LinkUp { a, b } => writeln!(out, "link_up {a} {b}"),
                ActionKind::Exclude { flow, member } => writeln!(out, "exclude {flow} {member}"),
                ActionKind::Readmit { flow, member } => writeln!(out, "readmit {flow} {member}"),
                ActionKind::RogueUpdate {
                    rs,
                    router,
                    flow,
                    via,
                } => {
                    writeln!(out, "rogue_update {rs} {router} {flow} {via}")
                }
            };
        }
    }
    out
}

impl Scenario {
    /// Copy with all source line numbers cleared, for structural comparison.
    pub fn without_lines(&self) -> Scenario {
        let mut s = self.clone();
        s.links.iter_mut().for_each(|x| x.line = 0);
        s.profiles.iter_mut().for_each(|x| x.line = 0);
        s.route_servers.iter_mut().for_each(|x| x.line = 0);
        s.groups.iter_mut().for_each(|x| x.line = 0);
        s.flows.iter_mut().for_each(|x| x.line = 0);
        s.actions.iter_mut().for_each(|x| x.line = 0);
        s
    }
}
