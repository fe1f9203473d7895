use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{DataError, FeatureSource, FeatureStore};

fn parse_err(path: &str, line: u64, message: impl Into<String>) -> DataError {
    DataError::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

/// Reads `video_id,snippet_idx,f0,...,f{d-1}`. Rows may come in any order
/// but each video's indices must be contiguous from 0.
pub fn parse_features(reader: impl Read, name: &str) -> Result<FeatureStore, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(name, 1, e.to_string()))?
        .clone();
    let dim = headers.len().saturating_sub(2);
    let well_formed = headers.get(0) == Some("video_id")
        && headers.get(1) == Some("snippet_idx")
        && (0..dim).all(|i| headers.get(i + 2) == Some(format!("f{i}").as_str()));
    if dim == 0 || !well_formed {
        return Err(parse_err(name, 1, "expected header video_id,snippet_idx,f0,...,f{d-1}"));
    }
    let mut grouped: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| parse_err(name, line, e.to_string()))?;
        if rec.len() != dim + 2 {
            return Err(parse_err(name, line, format!("expected {} fields, got {}", dim + 2, rec.len())));
        }
        let idx: usize = rec[1]
            .parse()
            .map_err(|e| parse_err(name, line, format!("snippet_idx: {e}")))?;
        let row = rec
            .iter()
            .skip(2)
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| parse_err(name, line, e.to_string()))?;
        if grouped.entry(rec[0].to_string()).or_default().insert(idx, row).is_some() {
            return Err(parse_err(name, line, format!("duplicate snippet {idx}")));
        }
    }
    let mut store = FeatureStore::new(dim, FeatureSource::Ingested);
    for (video, rows) in grouped {
        if rows.keys().enumerate().any(|(i, &k)| i != k) {
            return Err(parse_err(name, 0, format!("video {video}: snippet indices not contiguous from 0")));
        }
        store.insert(video, rows.into_values().collect())?;
    }
    Ok(store)
}

pub fn read_features(path: &Path) -> Result<FeatureStore, DataError> {
    let f = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_features(f, &path.display().to_string())
}

pub fn write_features(store: &FeatureStore, writer: impl Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["video_id".to_string(), "snippet_idx".to_string()];
    header.extend((0..store.dim()).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for (video, rows) in store.videos() {
        for (i, row) in rows.iter().enumerate() {
            let mut rec = vec![video.to_string(), i.to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
