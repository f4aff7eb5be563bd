//! Sharp testable implications of support restrictions on potential-response
//! models.
//!
//! A restriction on latent types becomes a K-partite graph whose vertices are
//! observable (input, response) cells. Maximal independent sets give moment
//! inequalities with right-hand side one; when the graph is perfect and its
//! maximal cliques are exactly the latent types, those inequalities are sharp.
//! Otherwise level-k sets grown from odd holes supply the missing ones.

pub mod bitset;
pub mod budget;
pub mod combinatorics;
pub mod error;
pub mod graph;
pub mod inference;
pub mod inequalities;
pub mod levelk;
pub mod model;
pub mod polytope;
pub mod regularity;

pub use bitset::VertexSet;
pub use error::{Error, Result};
