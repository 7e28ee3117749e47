//! Almost-sure Assouad-type dimensions of random one-variable Moran measures.
//!
//! A random one-variable Moran construction subdivides every interval of
//! generation `n` with the same randomly drawn configuration (an [`param_space::Atom`]:
//! contraction ratios plus branching probabilities), drawn independently per
//! level. For the resulting random measures this crate computes the
//! almost-sure upper and lower dimensions in the two regimes that matter:
//!
//! * large dimension functions (quasi-Assouad and friends), via the
//!   expectation-ratio function `G(theta)` and its diagonal crossing
//!   ([`gfunction`], [`solver`]);
//! * small dimension functions (Assouad and lower Assouad), via essential
//!   bounds of the level distribution ([`solver::small_phi_dims`]).
//!
//! The analytic values are cross-checked empirically: [`moran_sim`] samples
//! seeded realizations, computes extremal mass/length window ratios, and
//! estimates the same dimensions from finite depth. The `moran-dim` binary
//! ([`cli`]) exposes solver reports, G-curves, parameter sweeps, simulation
//! comparisons, and explicit interval geometry as JSON/CSV/SVG.
//!
//! All randomness flows through explicit seeds; identical inputs produce
//! byte-identical outputs.

pub mod cli;
pub mod gfunction;
pub mod moran_sim;
pub mod param_space;
pub mod solver;
