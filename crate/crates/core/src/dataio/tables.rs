use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{format_feature, ClipKind, EmbeddingRecord, Modality};
use crate::annotation::{AnnotationRow, LabeledClip};
use crate::error::{invalid, Error, Result};
use crate::evaluation::ResultRecord;
use crate::features::{FeatureTable, FusionLayout};

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line() as usize).unwrap_or(0);
    let reason = match err.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => format!("ragged row: {len} cells, header has {expected_len}"),
        csv::ErrorKind::Io(e) => e.to_string(),
        _ => err.to_string(),
    };
    Error::parse(path, line, reason)
}

fn parse_real(path: &Path, line: usize, cell: &str) -> Result<f64> {
    cell.trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(path, line, format!("non-numeric cell {cell:?}")))
}

fn read_serde<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv_reader(path)?;
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        rows.push(row.map_err(|e| csv_error(path, e))?);
    }
    Ok(rows)
}

fn write_serde<T: serde::Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut wtr = csv_writer(path)?;
    if rows.is_empty() {
        wtr.write_record(header).map_err(|e| csv_error(path, e))?;
    }
    for row in rows {
        wtr.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// Reads `clip_id,modality,v0..v{n-1}`.
///
/// The header is as wide as the widest modality; narrower rows leave their
/// trailing cells empty. A modality cell may carry a participant qualifier
/// (`face:P2`).
pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < 3 || &header[0] != "clip_id" || &header[1] != "modality" {
        return Err(Error::parse(path, 1, "header must be clip_id,modality,v0,..."));
    }
    for (j, name) in header.iter().skip(2).enumerate() {
        if name != format!("v{j}") {
            return Err(Error::parse(path, 1, format!("expected column v{j}, found {name:?}")));
        }
    }

    let mut dims: HashMap<Modality, usize> = HashMap::new();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let clip_id = row[0].to_string();
        let (modality, participant) = match row[1].split_once(':') {
            Some((m, p)) => (m, Some(p.to_string())),
            None => (&row[1], None),
        };
        let modality: Modality = modality
            .parse()
            .map_err(|e: Error| Error::parse(path, line, e.to_string()))?;

        let cells: Vec<&str> = row.iter().skip(2).collect();
        let width = cells.iter().rposition(|c| !c.trim().is_empty()).map_or(0, |i| i + 1);
        let mut vector = Vec::with_capacity(width);
        for cell in &cells[..width] {
            if cell.trim().is_empty() {
                return Err(Error::parse(path, line, format!("clip {clip_id}: empty cell inside vector")));
            }
            let v = parse_real(path, line, cell)?;
            if !v.is_finite() {
                return Err(Error::parse(path, line, format!("clip {clip_id}: non-finite value {cell}")));
            }
            vector.push(v);
        }
        if vector.is_empty() {
            return Err(Error::parse(path, line, format!("clip {clip_id}: empty vector")));
        }
        let expected = *dims.entry(modality).or_insert(vector.len());
        if expected != vector.len() {
            return Err(Error::parse(
                path,
                line,
                format!(
                    "dimension mismatch for {modality}: clip {clip_id} has {}, expected {expected}",
                    vector.len()
                ),
            ));
        }
        records.push(EmbeddingRecord {
            clip_id,
            modality,
            participant,
            vector,
        });
    }
    Ok(records)
}

pub fn write_embeddings(records: &[EmbeddingRecord], path: &Path) -> Result<()> {
    let width = records.iter().map(|r| r.dims()).max().unwrap_or(0);
    let mut wtr = csv_writer(path)?;
    let mut header = vec!["clip_id".to_string(), "modality".to_string()];
    header.extend((0..width).map(|j| format!("v{j}")));
    wtr.write_record(&header).map_err(|e| csv_error(path, e))?;
    for r in records {
        let modality = match &r.participant {
            Some(p) => format!("{}:{p}", r.modality),
            None => r.modality.to_string(),
        };
        let mut row = vec![r.clip_id.clone(), modality];
        row.extend(r.vector.iter().map(|&v| format_feature(v)));
        row.resize(width + 2, String::new());
        wtr.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRow>> {
    let rows: Vec<AnnotationRow> = read_serde(path)?;
    for (i, r) in rows.iter().enumerate() {
        for (scale, v) in [("fluidity", r.fluidity), ("enjoyment", r.enjoyment)] {
            if !(1..=5).contains(&v) {
                return Err(Error::parse(
                    path,
                    i + 2,
                    format!("{scale} rating {v} outside 1..5"),
                ));
            }
        }
    }
    Ok(rows)
}

pub fn write_annotations(rows: &[AnnotationRow], path: &Path) -> Result<()> {
    write_serde(path, rows, &["clip_id", "annotator_id", "fluidity", "enjoyment"])
}

pub fn read_labels(path: &Path) -> Result<Vec<LabeledClip>> {
    read_serde(path)
}

pub fn write_labels(rows: &[LabeledClip], path: &Path) -> Result<()> {
    write_serde(
        path,
        rows,
        &[
            "clip_id",
            "mean_fluidity",
            "mean_enjoyment",
            "n_annotators",
            "label_fluidity",
            "label_enjoyment",
        ],
    )
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>> {
    read_serde(path)
}

pub fn write_results(rows: &[ResultRecord], path: &Path) -> Result<()> {
    write_serde(path, rows, &ResultRecord::HEADER)
}

const FLAG_COLUMNS: [&str; 3] = ["has_audio", "has_face", "has_text"];

/// Columns: `clip_id,session_id,kind,a0..,f0..,t0..,has_audio,has_face,has_text`.
pub fn write_features(table: &FeatureTable, path: &Path) -> Result<()> {
    let layout = table.layout;
    let mut wtr = csv_writer(path)?;
    let mut header = vec!["clip_id".to_string(), "session_id".into(), "kind".into()];
    header.extend((0..layout.audio).map(|j| format!("a{j}")));
    header.extend((0..layout.face).map(|j| format!("f{j}")));
    header.extend((0..layout.text).map(|j| format!("t{j}")));
    header.extend(FLAG_COLUMNS.iter().map(|s| s.to_string()));
    wtr.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (i, row) in table.values.rows().into_iter().enumerate() {
        let mut out = vec![
            table.clip_ids[i].clone(),
            table.session_ids[i].clone(),
            table.kinds[i].to_string(),
        ];
        out.extend(row.iter().map(|&v| format_feature(v)));
        wtr.write_record(&out).map_err(|e| csv_error(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<FeatureTable> {
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 6 || names[..3] != ["clip_id", "session_id", "kind"] {
        return Err(Error::parse(path, 1, "header must start with clip_id,session_id,kind"));
    }
    let value_cols = &names[3..];
    if value_cols[value_cols.len() - 3..] != FLAG_COLUMNS {
        return Err(Error::parse(path, 1, "header must end with has_audio,has_face,has_text"));
    }
    let block_cols = &value_cols[..value_cols.len() - 3];
    let count = |prefix: char| -> Result<usize> {
        let cols: Vec<&&str> = block_cols.iter().filter(|c| c.starts_with(prefix)).collect();
        for (j, c) in cols.iter().enumerate() {
            if **c != format!("{prefix}{j}") {
                return Err(Error::parse(path, 1, format!("unexpected column {c:?}")));
            }
        }
        Ok(cols.len())
    };
    let layout = FusionLayout {
        audio: count('a')?,
        face: count('f')?,
        text: count('t')?,
    };
    if layout.audio + layout.face + layout.text != block_cols.len() {
        return Err(Error::parse(path, 1, "unrecognized feature columns"));
    }
    let expected_order: Vec<String> = (0..layout.audio)
        .map(|j| format!("a{j}"))
        .chain((0..layout.face).map(|j| format!("f{j}")))
        .chain((0..layout.text).map(|j| format!("t{j}")))
        .collect();
    if expected_order.iter().map(String::as_str).ne(block_cols.iter().copied()) {
        return Err(Error::parse(path, 1, "feature blocks must be ordered audio, face, text"));
    }

    let width = layout.total();
    let mut clip_ids = Vec::new();
    let mut session_ids = Vec::new();
    let mut kinds = Vec::new();
    let mut values = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        clip_ids.push(row[0].to_string());
        session_ids.push(row[1].to_string());
        kinds.push(
            row[2]
                .parse::<ClipKind>()
                .map_err(|e| Error::parse(path, line, e.to_string()))?,
        );
        for cell in row.iter().skip(3) {
            let v = parse_real(path, line, cell)?;
            if !v.is_finite() {
                return Err(Error::parse(path, line, format!("clip {}: non-finite value", &row[0])));
            }
            values.push(v);
        }
    }
    let n = clip_ids.len();
    let values = Array2::from_shape_vec((n, width), values)
        .map_err(|e| invalid!("{}: {e}", path.display()))?;
    FeatureTable::new(clip_ids, session_ids, kinds, layout, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(path: &Path, text: &str) {
        fs::write(path, text).unwrap();
    }

    fn header(n: usize) -> String {
        let cols: Vec<String> = (0..n).map(|j| format!("v{j}")).collect();
        format!("clip_id,modality,{}\n", cols.join(","))
    }

    fn row(clip: &str, modality: &str, n: usize, width: usize) -> String {
        let mut cells: Vec<String> = (0..n).map(|j| format!("{}", j as f64 * 0.5)).collect();
        cells.resize(width, String::new());
        format!("{clip},{modality},{}\n", cells.join(","))
    }

    #[test]
    fn two_audio_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        write(&p, &(header(128) + &row("c1", "audio", 128, 128) + &row("c2", "audio", 128, 128)));
        let recs = read_embeddings(&p).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs.iter().all(|r| r.dims() == 128 && r.modality == Modality::Audio));
    }

    #[test]
    fn dimension_mismatch_within_modality() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        write(&p, &(header(128) + &row("c1", "audio", 128, 128) + &row("c2", "audio", 127, 128)));
        let err = read_embeddings(&p).unwrap_err().to_string();
        assert!(err.contains("dimension mismatch"), "{err}");
    }

    #[test]
    fn nan_rejected_with_clip_id() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        write(&p, &(header(2) + "c1,audio,0.5,1\nbad,audio,NaN,1\n"));
        let err = read_embeddings(&p).unwrap_err().to_string();
        assert!(err.contains("bad"), "{err}");
    }

    #[test]
    fn ragged_and_non_numeric_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        write(&p, &(header(2) + "c1,audio,0.5\n"));
        assert!(read_embeddings(&p).unwrap_err().to_string().contains("ragged"));
        write(&p, &(header(2) + "c1,audio,0.5,abc\n"));
        assert!(read_embeddings(&p).unwrap_err().to_string().contains("non-numeric"));
    }

    #[test]
    fn mixed_modalities_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let recs = vec![
            EmbeddingRecord {
                clip_id: "c1".into(),
                modality: Modality::Audio,
                participant: None,
                vector: vec![0.1, -2.5e-7, 3.0, 4.0],
            },
            EmbeddingRecord {
                clip_id: "c1".into(),
                modality: Modality::Face,
                participant: Some("P2".into()),
                vector: vec![1.0, 2.0],
            },
        ];
        write_embeddings(&recs, &p).unwrap();
        assert_eq!(read_embeddings(&p).unwrap(), recs);
    }
}
