//! Energy-rating classifiers for dwellings and minimum-cost retrofit planning.

pub mod checkpoint;
pub mod classifiers;
pub mod epc;
pub mod metrics;
pub mod nn;
pub mod report;
pub mod retrofit;
pub mod scarf;
pub mod trees;
