//! Deterministic simulator for a platoon of connected automated vehicles
//! changing lanes among scripted human-driven traffic, controlled by a
//! CLF-CBF-QP per vehicle and a rule-based platoon state machine.

pub mod certificates;
pub mod cli;
pub mod controller;
pub mod coordination;
pub mod io;
pub mod qp;
pub mod sim;
pub mod vehicle;
