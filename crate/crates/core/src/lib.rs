//! Adaptive constrained kinematic control of serial manipulators with
//! partial measurements.

pub mod constraints;
pub mod controller;
pub mod dq;
pub mod kinematics;
pub mod linalg;
pub mod measurement;
pub mod qp;
pub mod scenario;
pub mod selftest;
pub mod simulator;
