//! Benchmark synthesis, run/corpus persistence and ingestion of external
//! percept logs.
//!
//! Corpus files are newline-delimited JSON: a header record followed by one
//! run per line. Percept sets are written as sorted category-index arrays.

mod ingest;
mod io;
mod synth;

pub use ingest::{ingest_percepts, read_percepts, write_percepts, IngestedObservation, PerceptRecord};
pub use io::{CorpusHeader, CorpusReader, CorpusWriter, RunRecord, SCHEMA_VERSION};
pub use synth::{synthesize_corpus, synthesize_run, synthesize_run_seeded, Corpus, Run};
