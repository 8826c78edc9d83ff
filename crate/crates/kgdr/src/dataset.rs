//! Dataset ingestion: one JSON record per line, each carrying a question,
//! its gold answers, and the question's own textual graph.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, TextualGraph};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: invalid record: {source}")]
    BadRecord {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("record {id}: invalid graph: {source}")]
    BadGraph {
        id: String,
        #[source]
        source: GraphError,
    },
    #[error("dataset is empty")]
    Empty,
}

/// One benchmark question with its associated graph.
///
/// `nodes[i]` is the text of node id `i`; each edge is a
/// `[src, relation, dst]` triple indexing into `nodes`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub question: String,
    pub nodes: Vec<String>,
    pub edges: Vec<(usize, String, usize)>,
    pub answers: Vec<String>,
}

impl DatasetRecord {
    pub fn to_graph(&self) -> Result<Arc<TextualGraph>, DatasetError> {
        TextualGraph::new(self.nodes.clone(), self.edges.clone())
            .map(Arc::new)
            .map_err(|source| DatasetError::BadGraph { id: self.id.clone(), source })
    }
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord = serde_json::from_str(&line)
            .map_err(|source| DatasetError::BadRecord { line: idx + 1, source })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(records)
}

pub fn save_dataset(path: &Path, records: &[DatasetRecord]) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut writer = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record).expect("record serialization cannot fail");
        writeln!(writer, "{line}").map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.jsonl");
        let records = vec![DatasetRecord {
            id: "q0".into(),
            question: "Where was the author of '1984' born?".into(),
            nodes: vec!["George Orwell".into(), "Motihari".into()],
            edges: vec![(0, "born in".into(), 1)],
            answers: vec!["Motihari".into()],
        }];
        save_dataset(&path, &records).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].question, records[0].question);
        let g = loaded[0].to_graph().unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.edge(0).relation, "born in");
    }

    #[test]
    fn reports_bad_lines_with_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"id\": 3}\n").unwrap();
        match load_dataset(&path) {
            Err(DatasetError::BadRecord { line: 1, .. }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn rejects_records_with_dangling_edges() {
        let record = DatasetRecord {
            id: "q1".into(),
            question: "?".into(),
            nodes: vec!["a".into()],
            edges: vec![(0, "r".into(), 7)],
            answers: vec!["a".into()],
        };
        assert!(matches!(record.to_graph(), Err(DatasetError::BadGraph { .. })));
    }
}
