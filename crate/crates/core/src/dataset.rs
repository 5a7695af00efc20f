//! Readers for generated datasets, label files and event files.

use std::io::Read;
use std::path::Path;

use crate::schedule::AnomalyEvent;

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("missing column '{0}'")]
    MissingColumn(String),
}

fn parse_err(line: u64, message: impl Into<String>) -> ReadError {
    ReadError::Parse {
        line,
        message: message.into(),
    }
}

fn csv_err(e: csv::Error) -> ReadError {
    let line = e.position().map_or(0, |p| p.line());
    parse_err(line, e.to_string())
}

/// A dataset CSV loaded column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub t: Vec<u64>,
    pub names: Vec<String>,
    /// One vector per entry in `names`.
    pub columns: Vec<Vec<f64>>,
    pub labels: Option<Vec<bool>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }
}

fn open(path: &Path) -> Result<std::fs::File, ReadError> {
    std::fs::File::open(path).map_err(|source| ReadError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_label(field: &str, line: u64) -> Result<bool, ReadError> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(parse_err(line, format!("label must be 0 or 1, got '{other}'"))),
    }
}

/// Reads a dataset with a `t` column, value columns and an optional `label`
/// column.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset, ReadError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let t_idx = headers.iter().position(|h| h == "t").ok_or_else(|| ReadError::MissingColumn("t".into()))?;
    let label_idx = headers.iter().position(|h| h == "label");
    let value_idx: Vec<usize> = (0..headers.len()).filter(|&i| i != t_idx && Some(i) != label_idx).collect();

    let mut ds = Dataset {
        t: Vec::new(),
        names: value_idx.iter().map(|&i| headers[i].to_string()).collect(),
        columns: vec![Vec::new(); value_idx.len()],
        labels: label_idx.map(|_| Vec::new()),
    };
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        ds.t.push(
            rec[t_idx]
                .parse()
                .map_err(|_| parse_err(line, format!("bad timestamp '{}'", &rec[t_idx])))?,
        );
        for (col, &i) in ds.columns.iter_mut().zip(&value_idx) {
            col.push(
                rec[i]
                    .parse()
                    .map_err(|_| parse_err(line, format!("bad value '{}' in column '{}'", &rec[i], &headers[i])))?,
            );
        }
        if let (Some(labels), Some(i)) = (ds.labels.as_mut(), label_idx) {
            labels.push(parse_label(&rec[i], line)?);
        }
    }
    Ok(ds)
}

pub fn read_dataset_file(path: &Path) -> Result<Dataset, ReadError> {
    read_dataset(open(path)?)
}

/// Reads the `label` column of a CSV: either a single-column label file or
/// a full dataset.
pub fn read_labels<R: Read>(reader: R) -> Result<Vec<bool>, ReadError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let idx = headers
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| ReadError::MissingColumn("label".into()))?;
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        labels.push(parse_label(&rec[idx], line)?);
    }
    Ok(labels)
}

pub fn read_labels_file(path: &Path) -> Result<Vec<bool>, ReadError> {
    read_labels(open(path)?)
}

/// Reads a `start,length` events CSV.
pub fn read_events<R: Read>(reader: R) -> Result<Vec<AnomalyEvent>, ReadError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ReadError::MissingColumn(name.into()))
    };
    let (si, li) = (col("start")?, col("length")?);
    let mut events = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| {
            rec[i]
                .trim()
                .parse::<u64>()
                .map_err(|_| parse_err(line, format!("bad integer '{}'", &rec[i])))
        };
        let length = num(li)?;
        if length == 0 {
            return Err(parse_err(line, "event length must be positive"));
        }
        events.push(AnomalyEvent::new(num(si)?, length));
    }
    Ok(events)
}

pub fn read_events_file(path: &Path) -> Result<Vec<AnomalyEvent>, ReadError> {
    read_events(open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_full_dataset() {
        let text = "t,a,b,label\n0,1.5,2,0\n1,-0.25,3,1\n";
        let ds = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(ds.t, vec![0, 1]);
        assert_eq!(ds.names, vec!["a", "b"]);
        assert_eq!(ds.column("a").unwrap(), &[1.5, -0.25]);
        assert_eq!(ds.labels, Some(vec![false, true]));
        assert_eq!(read_labels(text.as_bytes()).unwrap(), vec![false, true]);
    }

    #[test]
    fn dataset_without_labels() {
        let ds = read_dataset("t,a\n0,1\n".as_bytes()).unwrap();
        assert_eq!(ds.labels, None);
    }

    #[test]
    fn bad_label_reports_line() {
        let err = read_labels("label\n0\n1\n2\n".as_bytes()).unwrap_err();
        match err {
            ReadError::Parse { line, message } => {
                assert_eq!(line, 4);
                assert!(message.contains("'2'"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_label_column() {
        assert!(matches!(read_labels("x\n1\n".as_bytes()), Err(ReadError::MissingColumn(_))));
    }

    #[test]
    fn events() {
        let ev = read_events("start,length\n3,4\n10,1\n".as_bytes()).unwrap();
        assert_eq!(ev, vec![AnomalyEvent::new(3, 4), AnomalyEvent::new(10, 1)]);
        assert!(read_events("start,length\n3,0\n".as_bytes()).is_err());
        assert!(read_events("start,length\n3,x\n".as_bytes()).is_err());
    }
}
