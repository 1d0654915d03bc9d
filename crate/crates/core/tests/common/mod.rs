#![allow(dead_code)]

pub mod fixtures;
pub mod metric_oracle;
pub mod oracle;
