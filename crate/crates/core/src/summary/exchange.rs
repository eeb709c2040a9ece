//! Embedding-exchange JSONL: one patch per line.
//!
//! `{"video_id": str, "frame_id": str, "patch_index": int, "embedding": [..], "box": [x_min, y_min, x_max, y_max]}`
//!
//! An optional `"timestamp"` (seconds) is accepted on input.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BoundingBox;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ExchangeRecord<T> {
    pub video_id: String,
    pub frame_id: String,
    pub patch_index: u32,
    pub embedding: Vec<T>,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<f64>,
}

/// Parses every non-blank line; errors carry the 1-based line number.
pub fn read_exchange<T: Scalar, R: BufRead>(reader: R) -> Result<Vec<ExchangeRecord<T>>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        out.push(record);
    }
    Ok(out)
}

pub fn read_exchange_file<T: Scalar>(path: &Path) -> Result<Vec<ExchangeRecord<T>>> {
    read_exchange(BufReader::new(File::open(path)?))
}

pub fn write_exchange<T: Scalar, W: Write>(mut writer: W, records: &[ExchangeRecord<T>]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_exchange_file<T: Scalar>(path: &Path, records: &[ExchangeRecord<T>]) -> Result<()> {
    write_exchange(BufWriter::new(File::create(path)?), records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_schema_and_reports_line_numbers() {
        let text = concat!(
            r#"{"video_id":"v","frame_id":"f0","patch_index":0,"embedding":[0.5,-1.0],"box":[0,0,32,32]}"#,
            "\n\n",
            r#"{"video_id":"v","frame_id":"f0","patch_index":1,"embedding":[1.0,0.0],"box":[32,0,64,32],"timestamp":0.5}"#,
            "\n",
        );
        let recs: Vec<ExchangeRecord<f32>> = read_exchange(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].timestamp, Some(0.5));
        assert_eq!(recs[0].bbox.to_array(), [0.0, 0.0, 32.0, 32.0]);

        let bad = format!("{}\n{{not json\n", text.lines().next().unwrap());
        match read_exchange::<f32, _>(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn writes_exact_schema() {
        let r = ExchangeRecord {
            video_id: "v".into(),
            frame_id: "f".into(),
            patch_index: 3,
            embedding: vec![0.25f32, 1.0],
            bbox: BoundingBox::new(0.0, 1.0, 2.0, 3.0).unwrap(),
            timestamp: None,
        };
        let mut buf = Vec::new();
        write_exchange(&mut buf, &[r]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"video_id\":\"v\",\"frame_id\":\"f\",\"patch_index\":3,\"embedding\":[0.25,1.0],\"box\":[0.0,1.0,2.0,3.0]}\n"
        );
    }
}
