//! Partial component matching metrics for SQL, with the dataset tooling
//! around them: normalization, parsing, log cleaning and corpus statistics.

pub mod cleaner;
pub mod dataset;
pub mod lexer;
pub mod metrics;
pub mod parser;
pub mod serialize;
pub mod subtree;
pub mod templates;
pub mod text;
pub mod tree;

pub use cleaner::{clean, CleanConfig, CleanReport, FilterName, FilterOutcome};
pub use dataset::{DatasetExample, RawLogEntry};
pub use metrics::{
    evaluate_corpus, evaluate_pair, CategoryScore, CorpusReport, CountUnit, MetricReport,
};
pub use parser::{parse, ParseError};
pub use serialize::serialize;
pub use subtree::{element_sets, ClauseCategory, ElementSets};
pub use templates::{dataset_stats, to_template, StatsReport, Template};
pub use text::{normalize_text, QueryText};
pub use tree::{NodeKind, SyntaxTree, TreeNode};
