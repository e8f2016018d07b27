pub mod math;
pub mod rigidbody2d;
pub mod charscene;
pub mod motionlib;
pub mod observation;
pub mod reward;
pub mod learner;
pub mod evalmetrics;
pub mod harness;
