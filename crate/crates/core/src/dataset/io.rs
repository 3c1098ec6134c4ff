use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::synth::Run;
use crate::error::{Error, Result};
use crate::model::{CategorySet, Observation, PriorConfig, VisualSystem, WorldState};

pub const SCHEMA_VERSION: u32 = 1;

/// First line of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusHeader {
    pub schema: u32,
    pub kind: String,
    pub categories: usize,
    pub prior: PriorConfig,
    pub num_systems: u64,
    pub world_states_per_system: usize,
    pub root_seed: u64,
}

impl CorpusHeader {
    pub fn new(
        categories: CategorySet,
        prior: PriorConfig,
        num_systems: u64,
        world_states_per_system: usize,
        root_seed: u64,
    ) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            kind: "corpus".into(),
            categories: categories.size(),
            prior,
            num_systems,
            world_states_per_system,
            root_seed,
        }
    }
}

/// On-disk form of a run: rates flattened as `[fa.., miss..]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub schema: u32,
    pub run_id: u64,
    pub seed: u64,
    pub v_true: Vec<f64>,
    pub world_states: Vec<WorldState>,
    pub observations: Vec<Observation>,
}

impl From<&Run> for RunRecord {
    fn from(run: &Run) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            run_id: run.run_id,
            seed: run.seed,
            v_true: run.v_true.to_flat(),
            world_states: run.world_states.clone(),
            observations: run.observations.clone(),
        }
    }
}

impl RunRecord {
    pub fn into_run(self) -> Result<Run> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Run {
                run_id: self.run_id,
                message: format!("unsupported schema version {}", self.schema),
            });
        }
        let v_true = VisualSystem::from_flat(&self.v_true)
            .map_err(|e| Error::Run { run_id: self.run_id, message: e.to_string() })?;
        Ok(Run {
            run_id: self.run_id,
            seed: self.seed,
            v_true,
            world_states: self.world_states,
            observations: self.observations,
        })
    }
}

pub struct CorpusWriter<W: Write> {
    inner: W,
}

impl<W: Write> CorpusWriter<W> {
    pub fn new(mut inner: W, header: &CorpusHeader) -> Result<Self> {
        serde_json::to_writer(&mut inner, header).map_err(std::io::Error::from)?;
        inner.write_all(b"\n")?;
        Ok(Self { inner })
    }

    pub fn write_run(&mut self, run: &Run) -> Result<()> {
        serde_json::to_writer(&mut self.inner, &RunRecord::from(run)).map_err(std::io::Error::from)?;
        self.inner.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Reads the header eagerly and runs lazily; each run is validated against
/// the header's category count.
pub struct CorpusReader<R: BufRead> {
    header: CorpusHeader,
    categories: CategorySet,
    lines: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let first = lines.next().ok_or_else(|| Error::Empty("corpus file is empty".into()))??;
        let header: CorpusHeader =
            serde_json::from_str(&first).map_err(|e| Error::Malformed { line: 1, message: e.to_string() })?;
        if header.schema != SCHEMA_VERSION || header.kind != "corpus" {
            return Err(Error::Malformed {
                line: 1,
                message: format!("expected corpus header schema {SCHEMA_VERSION}"),
            });
        }
        let categories = CategorySet::new(header.categories)?;
        header.prior.validate(categories)?;
        Ok(Self { header, categories, lines, line_no: 1 })
    }

    pub fn header(&self) -> &CorpusHeader {
        &self.header
    }

    fn parse(&self, line: &str) -> Result<Run> {
        let record: RunRecord = serde_json::from_str(line).map_err(|e| {
            // Surface the run id of a damaged record when it is still readable.
            let run_id = serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v.get("run_id").and_then(serde_json::Value::as_u64));
            match run_id {
                Some(run_id) => Error::Run { run_id, message: e.to_string() },
                None => Error::Malformed { line: self.line_no, message: e.to_string() },
            }
        })?;
        let run = record.into_run()?;
        run.validate(self.categories)?;
        Ok(run)
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<Run>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse(&line));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthesize_run_seeded;
    use proptest::prelude::*;

    fn write_corpus(runs: &[Run]) -> Vec<u8> {
        let header = CorpusHeader::new(CategorySet::default(), PriorConfig::default(), runs.len() as u64, 75, 0);
        let mut w = CorpusWriter::new(Vec::new(), &header).unwrap();
        for r in runs {
            w.write_run(r).unwrap();
        }
        w.finish().unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn corpus_round_trip(seed in any::<u64>(), n in 1usize..4, states in 1usize..20) {
            let runs: Vec<Run> = (0..n as u64)
                .map(|i| synthesize_run_seeded(i, seed.wrapping_add(i), &PriorConfig::default(), CategorySet::default(), states).unwrap())
                .collect();
            let bytes = write_corpus(&runs);
            let reader = CorpusReader::new(bytes.as_slice()).unwrap();
            prop_assert_eq!(reader.header().num_systems, n as u64);
            let back: Vec<Run> = reader.collect::<Result<_>>().unwrap();
            prop_assert_eq!(&back, &runs);
            prop_assert_eq!(write_corpus(&back), bytes);
        }
    }

    #[test]
    fn record_layout() {
        let run = synthesize_run_seeded(7, 1, &PriorConfig::default(), CategorySet::default(), 2).unwrap();
        let json: serde_json::Value = serde_json::to_value(RunRecord::from(&run)).unwrap();
        assert_eq!(json["schema"], 1);
        assert_eq!(json["run_id"], 7);
        assert_eq!(json["v_true"].as_array().unwrap().len(), 10);
        assert!(json["observations"][0][0].is_array());
    }

    #[test]
    fn damaged_record_reports_run_id() {
        let run = synthesize_run_seeded(4, 1, &PriorConfig::default(), CategorySet::default(), 2).unwrap();
        let mut text = String::from_utf8(write_corpus(&[run])).unwrap();
        text = text.replace("\"v_true\":[", "\"v_true\":[\"x\",");
        text.push_str("{not json\n");
        let results: Vec<_> = CorpusReader::new(text.as_bytes()).unwrap().collect();
        assert!(matches!(results[0], Err(Error::Run { run_id: 4, .. })));
        assert!(matches!(results[1], Err(Error::Malformed { line: 3, .. })));
    }

    #[test]
    fn category_mismatch_is_rejected() {
        let run = synthesize_run_seeded(0, 1, &PriorConfig::default(), CategorySet::default(), 2).unwrap();
        let mut text = String::from_utf8(write_corpus(&[run])).unwrap();
        text = text.replacen("\"categories\":5", "\"categories\":6", 1);
        let results: Vec<_> = CorpusReader::new(text.as_bytes()).unwrap().collect();
        assert!(matches!(results[0], Err(Error::Run { run_id: 0, .. })));
    }
}
