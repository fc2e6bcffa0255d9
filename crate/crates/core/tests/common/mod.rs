#![allow(dead_code)]

pub mod mock;
pub mod operator_props;
pub mod rouge_oracle;
