#![no_std]

extern crate alloc;

pub mod harness;
pub mod kg;
pub mod model;
pub mod pretrain;
pub mod rng;
pub mod subgraph;
pub mod tensor;
