pub mod finite_diff;
pub mod instances;
pub mod oracle;
