use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Sample, TapLabel};
use crate::features::{FeatureVector, DEVICE_VECTOR_LEN};
use crate::{Error, Result};

pub const DATASET_FORMAT: &str = "tapnet-dataset";
pub const DATASET_SCHEMA_VERSION: u32 = 1;

/// First line of a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub schema_version: u32,
    /// SHA-256 of the generator config for synthetic sets.
    pub synth_config_hash: Option<String>,
}

impl DatasetHeader {
    pub fn new(synth_config_hash: Option<String>) -> Self {
        Self {
            format: DATASET_FORMAT.into(),
            schema_version: DATASET_SCHEMA_VERSION,
            synth_config_hash,
        }
    }
}

/// On-disk row: features at single precision.
#[derive(Serialize, Deserialize)]
struct Row {
    feature: Vec<f32>,
    device: [f64; DEVICE_VECTOR_LEN],
    label: TapLabel,
}

pub fn write_dataset<W: Write>(mut w: W, header: &DatasetHeader, samples: &[Sample]) -> Result<()> {
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for s in samples {
        let row = Row {
            feature: s.feature.values().iter().map(|&v| v as f32).collect(),
            device: s.device,
            label: s.label.clone(),
        };
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(
    path: impl AsRef<Path>,
    header: &DatasetHeader,
    samples: &[Sample],
) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), header, samples)
}

/// Reads a dataset; malformed rows are reported with their 1-based line
/// number and the byte offset where the line starts.
pub fn read_dataset<R: BufRead>(mut r: R) -> Result<(DatasetHeader, Vec<Sample>)> {
    let mut line = String::new();
    let mut offset = 0u64;
    let n = r.read_line(&mut line)?;
    if n == 0 {
        return Ok((DatasetHeader::new(None), Vec::new()));
    }
    let corrupt = |line: usize, offset: u64, message: String| Error::Corrupt {
        line,
        offset,
        message,
    };
    let header: DatasetHeader = serde_json::from_str(line.trim_end())
        .map_err(|e| corrupt(1, 0, format!("bad header: {e}")))?;
    if header.format != DATASET_FORMAT {
        return Err(Error::Schema {
            expected: DATASET_FORMAT.into(),
            found: header.format,
        });
    }
    if header.schema_version != DATASET_SCHEMA_VERSION {
        return Err(Error::Schema {
            expected: format!("schema version {DATASET_SCHEMA_VERSION}"),
            found: format!("schema version {}", header.schema_version),
        });
    }
    offset += n as u64;
    let mut samples = Vec::new();
    let mut number = 1;
    loop {
        line.clear();
        let n = r.read_line(&mut line)?;
        if n == 0 {
            break;
        }
        number += 1;
        let start = offset;
        offset += n as u64;
        let text = line.trim_end();
        if text.is_empty() {
            continue;
        }
        if !line.ends_with('\n') {
            // A final row without newline is accepted only if it parses.
            log::debug!("dataset ends without newline at line {number}");
        }
        let row: Row =
            serde_json::from_str(text).map_err(|e| corrupt(number, start, e.to_string()))?;
        if row.feature.iter().any(|v| !v.is_finite()) {
            return Err(corrupt(number, start, "non-finite feature value".into()));
        }
        let feature = FeatureVector::new(row.feature.iter().map(|&v| v as f64).collect())
            .map_err(|e| corrupt(number, start, e.to_string()))?;
        row.label
            .validate()
            .map_err(|e| corrupt(number, start, e.to_string()))?;
        samples.push(Sample {
            feature,
            device: row.device,
            label: row.label,
        });
    }
    Ok((header, samples))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<(DatasetHeader, Vec<Sample>)> {
    read_dataset(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize, SynthConfig};

    fn encode(samples: &[Sample]) -> Vec<u8> {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &DatasetHeader::new(Some("abc".into())), samples).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_lossless() {
        let samples = synthesize(&SynthConfig::default(), 200).unwrap();
        let (header, back) = read_dataset(encode(&samples).as_slice()).unwrap();
        assert_eq!(header.synth_config_hash.as_deref(), Some("abc"));
        assert_eq!(back, samples);
    }

    #[test]
    fn empty_inputs() {
        assert!(read_dataset(&b""[..]).unwrap().1.is_empty());
        assert!(read_dataset(encode(&[]).as_slice()).unwrap().1.is_empty());
    }

    #[test]
    fn truncated_row_reports_line_and_offset() {
        let samples = synthesize(&SynthConfig::default(), 3).unwrap();
        let bytes = encode(&samples);
        let cut = bytes.len() - 40;
        let starts: Vec<usize> = std::iter::once(0)
            .chain(
                bytes
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| **b == b'\n')
                    .map(|(i, _)| i + 1),
            )
            .collect();
        match read_dataset(&bytes[..cut]) {
            Err(Error::Corrupt { line, offset, .. }) => {
                assert_eq!(line, 4);
                assert_eq!(offset as usize, starts[3]);
            }
            other => panic!("expected corrupt row, got {other:?}"),
        }
    }

    #[test]
    fn wrong_schema_version() {
        let text =
            b"{\"format\":\"tapnet-dataset\",\"schema_version\":7,\"synth_config_hash\":null}\n";
        assert!(matches!(read_dataset(&text[..]), Err(Error::Schema { .. })));
    }
}
