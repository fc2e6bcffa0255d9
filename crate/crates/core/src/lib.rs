pub mod campaign;
pub mod canonical;
pub mod classifier;
pub mod corpus;
pub mod demo;
pub mod driver;
pub mod http;
pub mod metrics;
pub mod operator;
pub mod perturb_doc;
pub mod perturb_query;
pub mod perturb_return;
pub mod replay;
pub mod report;
pub mod rouge;
pub mod runner;
