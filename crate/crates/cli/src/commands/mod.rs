mod ingest;
mod report;
mod run;
mod synth;

pub use ingest::{cmd_ingest, read_vocabulary, Inferences, ObservationInference, RateEstimate, INFERENCES_FILE};
pub use report::{cmd_report, ReportOutput, NOISE_HALFWIDTH};
pub use run::{cmd_run, read_results, ResultsHeader, RunSummary, RESULTS_FILE, SUMMARY_FILE};
pub use synth::{cmd_synth, sha256_file, SynthOutput, CORPUS_FILE, MANIFEST_FILE};
