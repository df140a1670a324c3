//! Evaluation machinery for aligned chat systems: verdict proportions,
//! refusal and language-following rates, language detection, score
//! aggregation, pluggable judges and the bench runner.

pub mod bench;
mod error;
pub mod judge;
pub mod langdetect;
pub mod metrics;
pub mod refusal;

pub use bench::{
    assemble_report, read_items, read_raw, run_bench, write_raw, BenchModule, EvalItem, EvalReport, RawResult,
    RunMeta, System,
};
pub use error::{EvalError, Result};
pub use judge::{HttpJudge, Judge, Judgment, LabelJudge, RuleJudge, Verdict};
pub use langdetect::{detect_language, CharSets};
pub use metrics::*;
pub use refusal::RefusalDetector;
