#![allow(dead_code)]

pub mod gbt;
pub mod leakage;
