//! Staged event trees for causal discovery.
//!
//! A [`StagedTree`] describes a sequence of categorical variables whose
//! conditional distributions are shared across groups of contexts (stages).
//! The crate fits trees to data for a fixed order ([`staging::fit_order`]),
//! searches for the best order ([`order::best_order_dp`]), computes
//! interventional distributions ([`probability::interventional`]) and
//! compares causal structures ([`metrics::cid`], [`metrics::sid`]).

pub mod convert;
pub mod data;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod model;
pub mod order;
pub mod probability;
pub mod randgen;
pub mod rng;
pub mod staging;
pub mod stats;

pub use data::Dataset;
pub use error::{Error, Result};
pub use graph::{Dag, Pdag};
pub use metrics::{cid, kendall_distance, sid, CidReport};
pub use model::{validate_tree, Context, StageId, StagedTree, Staging, VariableMeta};
pub use order::{best_order_dp, best_order_exhaustive, DiscoveryResult};
pub use probability::{Intervention, DistributionVector};
pub use staging::{fit_order, Method, SearchOptions};
