//! Multi-armed bandits where every episode is one user session that ends
//! when the user departs.
//!
//! A recommender picks a content category at every step. A user of a
//! hidden type clicks with a category- and type-dependent probability and,
//! after a no-click, leaves with a category- and type-dependent
//! probability. The crate covers exact planning for known instances,
//! simulation, UCB-style learning over policy sets, and Monte Carlo and
//! brute-force oracles.

pub mod dp;
pub mod environment;
pub mod error;
pub mod experiment;
pub mod instances;
pub mod learning;
pub mod model;
pub mod oracle;
pub mod planning;
pub mod structure;

pub use environment::{Environment, Learner, RngStream, Simulator};
pub use error::{Error, Result};
pub use model::{EpisodeResult, Instance, Policy};
pub use structure::Structure;
