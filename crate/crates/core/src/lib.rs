//! Deterministic discrete-event simulator for adaptive flow-label routing.
//!
//! Route servers compute minimum hybrid-cost routes and pin flows onto them by
//! writing the flow tables of adaptive routers; standard routers run a
//! hop-count distance-vector protocol that also serves as the baseline.
//! Selective anycast lets a source host steer a flow away from group members
//! it has excluded.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive_router;
pub mod anycast;
pub mod batch;
pub mod engine;
pub mod metric;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod route_server;
pub mod time;
pub mod topology;
pub mod transport;
