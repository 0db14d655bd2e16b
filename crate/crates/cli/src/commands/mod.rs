pub mod ingest;
pub mod patterns;
pub mod report;
pub mod run;
pub mod simulate;
