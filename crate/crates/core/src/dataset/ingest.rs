use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Observation, Percept};

/// One frame of an external percept log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerceptRecord {
    pub observation_id: String,
    pub frame_index: u64,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestedObservation {
    pub id: String,
    pub observation: Observation,
}

/// Reads a percept log: one JSON record per frame. Frames are grouped by
/// `observation_id` (groups in order of first appearance, frames by
/// `frame_index`) and labels are mapped to indices by vocabulary position.
pub fn read_percepts<R: BufRead>(reader: R, vocabulary: &[String]) -> Result<Vec<IngestedObservation>> {
    let index: HashMap<&str, usize> = vocabulary.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<(u64, Percept, usize)>> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PerceptRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Malformed { line: line_no, message: e.to_string() })?;
        let mut percept = Percept::EMPTY;
        for label in &record.labels {
            let &c = index
                .get(label.as_str())
                .ok_or_else(|| Error::UnknownLabel { line: line_no, label: label.clone() })?;
            percept.insert(c);
        }
        let frames = groups.entry(record.observation_id.clone()).or_insert_with(|| {
            order.push(record.observation_id.clone());
            Vec::new()
        });
        if let Some(&(_, _, first)) = frames.iter().find(|(f, _, _)| *f == record.frame_index) {
            return Err(Error::Malformed {
                line: line_no,
                message: format!(
                    "frame {} of observation {:?} already given on line {first}",
                    record.frame_index, record.observation_id
                ),
            });
        }
        frames.push((record.frame_index, percept, line_no));
    }
    order
        .into_iter()
        .map(|id| {
            let mut frames = groups.remove(&id).unwrap_or_default();
            frames.sort_by_key(|(f, _, _)| *f);
            let observation = Observation::new(frames.into_iter().map(|(_, p, _)| p).collect())
                .map_err(|_| Error::Empty(format!("observation {id:?} has no frames")))?;
            Ok(IngestedObservation { id, observation })
        })
        .collect()
}

pub fn ingest_percepts(path: &Path, vocabulary: &[String]) -> Result<Vec<IngestedObservation>> {
    if vocabulary.is_empty() {
        return Err(Error::Empty("vocabulary".into()));
    }
    read_percepts(BufReader::new(File::open(path)?), vocabulary)
}

/// Writes observations in the percept-log format.
pub fn write_percepts<W: Write>(mut out: W, observations: &[IngestedObservation], vocabulary: &[String]) -> Result<()> {
    for item in observations {
        for (f, x) in item.observation.percepts.iter().enumerate() {
            let labels = x
                .indices()
                .into_iter()
                .map(|c| {
                    vocabulary
                        .get(c)
                        .cloned()
                        .ok_or_else(|| Error::Parameter(format!("category {c} has no vocabulary label")))
                })
                .collect::<Result<Vec<_>>>()?;
            let record = PerceptRecord { observation_id: item.id.clone(), frame_index: f as u64, labels };
            serde_json::to_writer(&mut out, &record).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthesize_run_seeded;
    use crate::model::{CategorySet, PriorConfig};

    fn vocab() -> Vec<String> {
        ["cone", "cube", "cylinder", "prism", "sphere"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn two_frames_one_observation() {
        let text = r#"{"observation_id":"a","frame_index":1,"labels":["cube"]}
{"observation_id":"a","frame_index":0,"labels":["cone","sphere"]}
"#;
        let obs = read_percepts(text.as_bytes(), &vocab()).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].observation.frame_count(), 2);
        assert_eq!(obs[0].observation.percepts[0], Percept::from_bits(0b10001));
        assert_eq!(obs[0].observation.percepts[1], Percept::from_bits(0b00010));
    }

    #[test]
    fn unknown_label_is_named() {
        let text = "{\"observation_id\":\"a\",\"frame_index\":0,\"labels\":[\"cone\"]}\n{\"observation_id\":\"a\",\"frame_index\":1,\"labels\":[\"truck\"]}\n";
        let err = read_percepts(text.as_bytes(), &vocab()).unwrap_err();
        assert!(matches!(&err, Error::UnknownLabel { line: 2, label } if label == "truck"));
        assert!(err.to_string().contains("truck"));
    }

    #[test]
    fn malformed_and_duplicate_lines() {
        let err = read_percepts("{\"observation_id\":\"a\"}\n".as_bytes(), &vocab()).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 1, .. }));
        let dup = "{\"observation_id\":\"a\",\"frame_index\":0,\"labels\":[]}\n{\"observation_id\":\"a\",\"frame_index\":0,\"labels\":[]}\n";
        assert!(matches!(read_percepts(dup.as_bytes(), &vocab()), Err(Error::Malformed { line: 2, .. })));
    }

    #[test]
    fn synthesized_run_round_trips() {
        let run = synthesize_run_seeded(0, 12, &PriorConfig::default(), CategorySet::default(), 30).unwrap();
        let items: Vec<IngestedObservation> = run
            .observations
            .iter()
            .enumerate()
            .map(|(t, o)| IngestedObservation { id: format!("obs-{t}"), observation: o.clone() })
            .collect();
        let mut buf = Vec::new();
        write_percepts(&mut buf, &items, &vocab()).unwrap();
        let back = read_percepts(buf.as_slice(), &vocab()).unwrap();
        assert_eq!(back, items);
    }
}
