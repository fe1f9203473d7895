//! CSV/TSV readers and writers for annotations, vocabularies, knowledge
//! edges, and matrices.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    AnnotationCorpus, CooccurError, KnowledgeEdgeSet, MatrixKind, Segment, UncertaintyMatrix,
    Video, Vocabulary,
};

/// One row of `video_id,start_s,stop_s,verb_id,noun_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub video_id: String,
    pub start_s: f64,
    pub stop_s: f64,
    pub verb_id: u32,
    pub noun_id: u32,
}

fn open(path: &Path) -> Result<File, CooccurError> {
    File::open(path).map_err(|source| CooccurError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn csv_error(path: &str, e: csv::Error) -> CooccurError {
    let line = e.position().map_or(0, |p| p.line());
    CooccurError::Parse {
        path: path.to_string(),
        line,
        message: e.to_string(),
    }
}

pub fn parse_annotations(reader: impl Read, name: &str) -> Result<Vec<AnnotationRow>, CooccurError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(name, e))?.clone();
    let expected = ["video_id", "start_s", "stop_s", "verb_id", "noun_id"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(CooccurError::Parse {
            path: name.to_string(),
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e| csv_error(name, e)))
        .collect()
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRow>, CooccurError> {
    parse_annotations(open(path)?, &path.display().to_string())
}

pub fn write_annotations(rows: &[AnnotationRow], writer: impl Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an `<id_column>,lemma` file.
pub fn parse_lemmas(
    reader: impl Read,
    name: &str,
    id_column: &str,
) -> Result<BTreeMap<u32, String>, CooccurError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(name, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != [id_column, "lemma"] {
        return Err(CooccurError::Parse {
            path: name.to_string(),
            line: 1,
            message: format!("expected header {id_column},lemma"),
        });
    }
    let mut out = BTreeMap::new();
    for rec in rdr.deserialize::<(u32, String)>() {
        let (id, lemma) = rec.map_err(|e| csv_error(name, e))?;
        out.insert(id, lemma);
    }
    Ok(out)
}

pub fn read_lemmas(path: &Path, id_column: &str) -> Result<BTreeMap<u32, String>, CooccurError> {
    parse_lemmas(open(path)?, &path.display().to_string(), id_column)
}

pub fn write_lemmas(
    lemmas: &BTreeMap<u32, String>,
    id_column: &str,
    writer: impl Write,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([id_column, "lemma"])?;
    for (id, lemma) in lemmas {
        w.write_record([id.to_string().as_str(), lemma.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

/// Vocabulary whose activities are the unique pairs in `rows`.
pub fn vocabulary_from_rows(
    verbs: BTreeMap<u32, String>,
    nouns: BTreeMap<u32, String>,
    rows: &[AnnotationRow],
) -> Result<Vocabulary, CooccurError> {
    Vocabulary::new(verbs, nouns, rows.iter().map(|r| (r.verb_id, r.noun_id)))
}

/// Groups rows into videos (sorted by id, segments by start). Rows whose pair
/// is not a vocabulary activity are dropped and counted.
pub fn corpus_from_rows(
    rows: &[AnnotationRow],
    vocab: &Vocabulary,
) -> Result<(AnnotationCorpus, usize), CooccurError> {
    let mut grouped: BTreeMap<&str, Vec<Segment>> = BTreeMap::new();
    let mut dropped = 0;
    for r in rows {
        match vocab.activity_id(r.verb_id, r.noun_id) {
            Some(activity) => grouped.entry(&r.video_id).or_default().push(Segment {
                start: r.start_s,
                stop: r.stop_s,
                activity,
            }),
            None => dropped += 1,
        }
    }
    let videos = grouped
        .into_iter()
        .map(|(id, mut segments)| {
            segments.sort_by(|a, b| a.start.total_cmp(&b.start));
            Video {
                id: id.to_string(),
                segments,
            }
        })
        .collect();
    Ok((AnnotationCorpus::new(videos)?, dropped))
}

/// Parses `head<TAB>relation<TAB>tail` lines. Blank lines and lines starting
/// with `#` are skipped; extra trailing columns are ignored.
pub fn parse_edges(
    reader: impl Read,
    name: &str,
    mut into: KnowledgeEdgeSet,
) -> Result<KnowledgeEdgeSet, CooccurError> {
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|source| CooccurError::Io {
            path: name.to_string(),
            source,
        })?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(CooccurError::Parse {
                path: name.to_string(),
                line: line_no,
                message: format!("expected 3 tab-separated fields, got {}", fields.len()),
            });
        }
        into.insert(fields[0], fields[1], fields[2])
            .map_err(|message| CooccurError::Parse {
                path: name.to_string(),
                line: line_no,
                message,
            })?;
    }
    Ok(into)
}

pub fn read_edges(path: &Path, into: KnowledgeEdgeSet) -> Result<KnowledgeEdgeSet, CooccurError> {
    parse_edges(open(path)?, &path.display().to_string(), into)
}

pub fn write_edges(edges: &KnowledgeEdgeSet, mut writer: impl Write) -> std::io::Result<()> {
    for (h, r, t) in edges.edges() {
        writeln!(writer, "{h}\t{r}\t{t}")?;
    }
    Ok(())
}

/// Header `class,<id0>,<id1>,...` then one row per class id.
pub fn write_matrix(
    matrix: &UncertaintyMatrix,
    ids: &[String],
    mut writer: impl Write,
) -> std::io::Result<()> {
    assert_eq!(ids.len(), matrix.size(), "one id per matrix row");
    writeln!(writer, "class,{}", ids.join(","))?;
    for (i, id) in ids.iter().enumerate() {
        let row: Vec<String> = matrix.row(i).iter().map(u64::to_string).collect();
        writeln!(writer, "{id},{}", row.join(","))?;
    }
    Ok(())
}

pub fn parse_matrix(
    reader: impl Read,
    name: &str,
    kind: MatrixKind,
) -> Result<(Vec<String>, UncertaintyMatrix), CooccurError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(name, e))?.clone();
    let ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let n = ids.len();
    let mut values = Vec::with_capacity(n * n);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(name, e))?;
        let line = i as u64 + 2;
        if rec.len() != n + 1 || rec.get(0) != Some(ids[i.min(n.saturating_sub(1))].as_str()) {
            return Err(CooccurError::Parse {
                path: name.to_string(),
                line,
                message: "row label or width does not match header".into(),
            });
        }
        for field in rec.iter().skip(1) {
            values.push(field.parse::<u64>().map_err(|e| CooccurError::Parse {
                path: name.to_string(),
                line,
                message: e.to_string(),
            })?);
        }
    }
    let m = UncertaintyMatrix::from_values(kind, n, values)?;
    Ok((ids, m))
}

pub fn read_matrix(path: &Path, kind: MatrixKind) -> Result<(Vec<String>, UncertaintyMatrix), CooccurError> {
    parse_matrix(open(path)?, &path.display().to_string(), kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annotations_parse_and_group() {
        let text = "video_id,start_s,stop_s,verb_id,noun_id\nb,2.0,3.0,1,1\na,1.0,2.0,0,0\nb,0.5,1.5,0,0\n";
        let rows = parse_annotations(text.as_bytes(), "ann").unwrap();
        let verbs = BTreeMap::from([(0, "open".into()), (1, "take".into())]);
        let nouns = BTreeMap::from([(0, "fridge".into()), (1, "milk".into())]);
        let vocab = vocabulary_from_rows(verbs, nouns, &rows).unwrap();
        let (corpus, dropped) = corpus_from_rows(&rows, &vocab).unwrap();
        assert_eq!(dropped, 0);
        assert_eq!(corpus.videos()[0].id, "a");
        let b = &corpus.videos()[1];
        assert_eq!(b.segments[0].start, 0.5);
        assert_eq!(b.segments[1].activity, 1);
    }

    #[test]
    fn bad_annotation_row_reports_line() {
        let text = "video_id,start_s,stop_s,verb_id,noun_id\na,1.0,2.0,0,0\na,x,2.0,0,0\n";
        match parse_annotations(text.as_bytes(), "ann") {
            Err(CooccurError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_edge_reports_line() {
        let text = "cut\tUsedFor\tknife\nslice UsedFor knife\n";
        match parse_edges(text.as_bytes(), "edges", KnowledgeEdgeSet::new()) {
            Err(CooccurError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_relation_is_malformed() {
        let text = "cut\tFrobnicates\tknife\n";
        assert!(parse_edges(text.as_bytes(), "edges", KnowledgeEdgeSet::new()).is_err());
    }

    #[test]
    fn matrix_csv_round_trip() {
        let m = UncertaintyMatrix::from_values(MatrixKind::Internal, 3, vec![0, 2, 0, 2, 0, 7, 0, 7, 0])
            .unwrap();
        let ids: Vec<String> = (0..3).map(|i| i.to_string()).collect();
        let mut buf = Vec::new();
        write_matrix(&m, &ids, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "class,0,1,2\n0,0,2,0\n1,2,0,7\n2,0,7,0\n"
        );
        let (ids2, m2) = parse_matrix(buf.as_slice(), "m", MatrixKind::Internal).unwrap();
        assert_eq!(ids2, ids);
        assert_eq!(m2, m);
    }
}
