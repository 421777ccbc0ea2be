//! Distances between true and estimated causal structures.

pub mod cid;
pub mod cid_sid;
pub mod kendall;
pub mod sid;

pub use cid::{cid, cid_oracle, CidReport, VariableCid};
pub use cid_sid::{cid_vs_sid, CidSidRow, CidSidSummary, CidSidTable};
pub use kendall::kendall_distance;
pub use sid::{sid, sid_pairs};
