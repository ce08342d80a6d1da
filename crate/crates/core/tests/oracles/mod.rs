//! Test-side reference implementations shared by the integration suites.
#![allow(dead_code)]

pub mod grad;
pub mod numeric;
