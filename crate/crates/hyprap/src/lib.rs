//! Planning laboratory for risk-routed hybrid prediction: a differential-drive
//! agent navigates dense dynamic obstacles under receding-horizon MPC whose
//! collision margins come from split-conformal calibration of two predictors
//! with opposite accuracy/cost trade-offs. A risk index routes each sensed
//! obstacle to a predictor (or to none), and a Monte Carlo harness measures
//! the resulting efficiency/safety trade-offs.

pub mod artifact;
pub mod config;
pub mod conformal;
pub mod geometry;
pub mod harness;
pub mod planner;
pub mod predictors;
pub mod risk;
pub mod sim;
