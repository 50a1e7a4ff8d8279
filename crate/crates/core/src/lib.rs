//! Occupancy-number models of ideal lattice Bose and Fermi gases, and the
//! machinery to check that Lempel–Ziv word counts of canonical-ensemble
//! configurations track the entropy rate `h = ∫ g(y) dy`.
//!
//! The crate is organised bottom-up:
//!
//! * [`ensemble`]: dispersion relation, marginal mean/entropy profiles,
//!   thermodynamic integrals and the chemical-potential solver.
//! * [`disttab`]: finite pmf algebra in log space, the suffix-sum dynamic
//!   program for fixed-sum conditioning, and exact structural checks (log-concavity, negative association, local CLT).
//! * [`sampler`]: seeded grand-canonical and canonical string generation.
//! * [`lzparse`]: LZ78 incremental parsing over integer alphabets, the rate
//!   statistic and typical-set word classification.

pub mod disttab;
pub mod ensemble;
mod error;
pub mod lzparse;
pub mod quad;
pub mod sampler;

pub use disttab::{DistTable, SuffixSumDp, Summary};
pub use ensemble::{Dispersion, EnsembleSpec, Statistics};
pub use error::{Error, Result};
pub use lzparse::{LzParse, TypicalParams, TypicalRule};
pub use sampler::{EnsembleKind, OccupancyString, ParticleTarget};
