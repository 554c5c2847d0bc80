//! Object clustering algorithms for object-oriented databases and a
//! discrete-event simulator that compares them.

pub mod cactis;
pub mod ck;
pub mod config;
pub mod generator;
pub mod golden;
pub mod object_model;
pub mod orion;
pub mod sim;
pub mod storage;
pub mod workload;
