//! Near-perfect K_{t,t}-packings and perfect subdivision packings of dense
//! regular graphs.

pub mod graph;
pub mod decompose;
pub mod matching;
pub mod hamilton;
pub mod ktt;
pub mod cluster;
pub mod balance;
pub mod subdivide;
pub mod harness;
