//! Reference implementations used as test oracles.
//!
//! Nothing here calls into the library. Each oracle is written for clarity over
//! speed so disagreements point at the library.

#![allow(dead_code)]

pub mod algorithm1;
pub mod brute;
