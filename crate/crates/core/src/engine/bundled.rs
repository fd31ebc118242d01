//! Scenarios shipped with the crate.

use super::parse::parse_scenario;
use super::Scenario;

/// `(name, source text)` for every bundled scenario.
pub const BUNDLED: [(&str, &str); 6] = [
    ("scenario1", include_str!("../../scenarios/scenario1.scn")),
    ("scenario2", include_str!("../../scenarios/scenario2.scn")),
    (
        "scenario3-fast",
        include_str!("../../scenarios/scenario3_fr.scn"),
    ),
    (
        "scenario3-slow",
        include_str!("../../scenarios/scenario3_sr.scn"),
    ),
    ("anycast", include_str!("../../scenarios/anycast.scn")),
    ("rogue", include_str!("../../scenarios/rogue.scn")),
];

pub fn source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Parses a bundled scenario. Bundled sources are known to be valid.
pub fn load(name: &str) -> Option<Scenario> {
    source(name).map(|s| parse_scenario(s).expect("bundled scenario is valid"))
}

pub fn names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}
