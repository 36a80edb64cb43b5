#![allow(dead_code)]

pub mod fuzz;
pub mod oracle;
pub mod sampler;
