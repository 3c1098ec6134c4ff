use std::fs::{self, File};
use std::io::{BufWriter, Read};
use std::path::{Path, PathBuf};

use log::info;
use metacog_core::dataset::{synthesize_corpus, CorpusHeader, CorpusWriter, SCHEMA_VERSION};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub corpus: PathBuf,
    pub manifest: PathBuf,
    pub sha256: String,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let mut file = File::open(path).map_err(CliError::io(path))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(CliError::io(path))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Writes `corpus.jsonl` and `manifest.json` under the configured output
/// directory.
pub fn cmd_synth(config: &ExperimentConfig) -> CliResult<SynthOutput> {
    config.validate()?;
    let categories = config.category_set()?;
    fs::create_dir_all(&config.out).map_err(CliError::io(&config.out))?;
    let corpus = config.out.join(CORPUS_FILE);
    let header = CorpusHeader::new(
        categories,
        config.prior.clone(),
        config.num_systems,
        config.world_states_per_system,
        config.root_seed,
    );
    let file = File::create(&corpus).map_err(CliError::io(&corpus))?;
    let mut writer = CorpusWriter::new(BufWriter::new(file), &header).map_err(CliError::reading(&corpus))?;
    let mut percepts = 0usize;
    synthesize_corpus(
        config.num_systems,
        &config.prior,
        categories,
        config.world_states_per_system,
        config.root_seed,
        |run| {
            percepts += run.percept_count();
            if (run.run_id + 1) % 1000 == 0 {
                info!("synthesized {} runs", run.run_id + 1);
            }
            writer.write_run(&run)
        },
    )
    .map_err(CliError::reading(&corpus))?;
    writer.finish().map_err(CliError::reading(&corpus))?;

    let sha256 = sha256_file(&corpus)?;
    let manifest = config.out.join(MANIFEST_FILE);
    let body = json!({
        "kind": "manifest",
        "schema": SCHEMA_VERSION,
        "config": config.echo(),
        "corpus": {
            "file": CORPUS_FILE,
            "sha256": sha256,
            "runs": config.num_systems,
            "world_states_per_system": config.world_states_per_system,
            "percepts": percepts,
        },
    });
    let mut text = serde_json::to_string_pretty(&body).expect("manifest serializes");
    text.push('\n');
    fs::write(&manifest, text).map_err(CliError::io(&manifest))?;
    info!("wrote {} runs to {}", config.num_systems, corpus.display());
    Ok(SynthOutput { corpus, manifest, sha256 })
}
