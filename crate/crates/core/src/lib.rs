pub mod harness;
pub mod models;
pub mod neural;
pub mod par;
pub mod planner;
pub mod scenario;
pub mod sim;
