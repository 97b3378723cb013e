//! `.ddig` matrix files and JSON Lines manifests.
//!
//! ```text
//! offset  size  field
//! 0       4     magic b"DDIG"
//! 4       2     version u16 LE (1)
//! 6       4     dimension u32 LE
//! 10      4     row count u32 LE
//! 14      n*d*4 row-major f32 LE payload
//! ```

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{EmbeddingPaths, EmbeddingRecord, EmbeddingSet, Result, StoreError, View};

pub const DDIG_MAGIC: [u8; 4] = *b"DDIG";
pub const DDIG_VERSION: u16 = 1;
pub const DDIG_HEADER_LEN: usize = 14;

/// Raw contents of one `.ddig` file.
#[derive(Debug, Clone, PartialEq)]
pub struct DdigMatrix {
    pub dimension: usize,
    pub rows: usize,
    pub data: Vec<f32>,
}

impl DdigMatrix {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dimension..(i + 1) * self.dimension]
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_ddig(path: &Path) -> Result<DdigMatrix> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() < 4 || bytes[..4] != DDIG_MAGIC {
        return Err(StoreError::MagicMismatch {
            path: path.to_path_buf(),
        });
    }
    if bytes.len() < DDIG_HEADER_LEN {
        return Err(StoreError::TruncatedPayload {
            path: path.to_path_buf(),
            expected: DDIG_HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != DDIG_VERSION {
        return Err(StoreError::VersionUnsupported {
            path: path.to_path_buf(),
            version,
        });
    }
    let dimension = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let rows = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    if dimension == 0 {
        return Err(StoreError::InvalidRecord(format!(
            "{}: header dimension is 0",
            path.display()
        )));
    }
    let expected = DDIG_HEADER_LEN as u64 + rows as u64 * dimension as u64 * 4;
    if bytes.len() as u64 != expected {
        return Err(StoreError::TruncatedPayload {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    let data: Vec<f32> = bytes[DDIG_HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(StoreError::NonFiniteValue {
            row: pos / dimension,
            column: pos % dimension,
        });
    }
    Ok(DdigMatrix {
        dimension,
        rows,
        data,
    })
}

/// Writes `rows` vectors of width `dimension` taken from `data`.
pub fn write_ddig(path: &Path, dimension: usize, data: &[f32]) -> Result<()> {
    if dimension == 0 || !data.len().is_multiple_of(dimension) {
        return Err(StoreError::InvalidRecord(format!(
            "{} values do not form rows of width {dimension}",
            data.len()
        )));
    }
    let rows = data.len() / dimension;
    let too_big = |what: &str| StoreError::InvalidRecord(format!("{what} exceeds u32"));
    let dim32 = u32::try_from(dimension).map_err(|_| too_big("dimension"))?;
    let rows32 = u32::try_from(rows).map_err(|_| too_big("row count"))?;

    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::with_capacity(1 << 20, file);
    let mut header = [0u8; DDIG_HEADER_LEN];
    header[..4].copy_from_slice(&DDIG_MAGIC);
    header[4..6].copy_from_slice(&DDIG_VERSION.to_le_bytes());
    header[6..10].copy_from_slice(&dim32.to_le_bytes());
    header[10..14].copy_from_slice(&rows32.to_le_bytes());
    out.write_all(&header).map_err(io_err(path))?;
    for v in data {
        out.write_all(&v.to_le_bytes()).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_manifest(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let file = File::open(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            StoreError::ManifestMismatch(format!("manifest not found: {}", path.display()))
        } else {
            io_err(path)(source)
        }
    })?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| StoreError::ManifestParse {
            line: i + 1,
            source,
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_manifest(path: &Path, records: &[EmbeddingRecord]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut out, record).map_err(|e| StoreError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Loads the three view matrices and the manifest into one validated set.
/// Records keep manifest order.
pub fn read_embedding_file(paths: &EmbeddingPaths) -> Result<EmbeddingSet> {
    let records = read_manifest(&paths.manifest)?;
    let mut dimension = None;
    let mut matrices = Vec::with_capacity(3);
    for view in View::ALL {
        let m = read_ddig(paths.view(view))?;
        match dimension {
            None => dimension = Some(m.dimension),
            Some(d) if d != m.dimension => {
                return Err(StoreError::DimensionMismatch {
                    expected: d,
                    found: m.dimension,
                })
            }
            Some(_) => {}
        }
        let listed = records.iter().filter(|r| r.view == view).count();
        if listed != m.rows {
            return Err(StoreError::ManifestMismatch(format!(
                "manifest lists {listed} {view} rows but {} holds {}",
                paths.view(view).display(),
                m.rows
            )));
        }
        matrices.push(m);
    }
    let dimension = dimension.expect("three views read");

    let mut vectors = Vec::with_capacity(records.len() * dimension);
    for r in &records {
        let m = &matrices[r.view as usize];
        if r.row_index >= m.rows {
            return Err(StoreError::ManifestMismatch(format!(
                "item {:?} points at {} row {} of {}",
                r.item_id, r.view, r.row_index, m.rows
            )));
        }
        vectors.extend_from_slice(m.row(r.row_index));
    }
    let set = EmbeddingSet::new(dimension, vectors, records)?;
    set.check_contiguous()?;
    Ok(set)
}

/// Writes one `.ddig` per view plus the manifest. Each view file is ordered
/// by `row_index`.
pub fn write_embedding_file(set: &EmbeddingSet, paths: &EmbeddingPaths) -> Result<()> {
    set.check_contiguous()?;
    let d = set.dimension();
    for view in View::ALL {
        let n = set.view_len(view);
        let mut data = vec![0f32; n * d];
        for (record, row) in set.rows().filter(|(r, _)| r.view == view) {
            data[record.row_index * d..(record.row_index + 1) * d].copy_from_slice(row);
        }
        write_ddig(paths.view(view), d, &data)?;
    }
    write_manifest(&paths.manifest, set.records())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedstore::Split;

    fn tiny_set(n: usize, d: usize) -> EmbeddingSet {
        let mut records = Vec::new();
        for i in 0..n {
            for (view, has) in [(View::Full, true), (View::Background, true)] {
                records.push(EmbeddingRecord {
                    item_id: format!("g{i}"),
                    split: Split::Generated,
                    region: if i % 2 == 0 { "Africa" } else { "Europe" }.into(),
                    object_class: "car".into(),
                    view,
                    row_index: i,
                    has_object_segmentation: has && i != 0,
                });
            }
            if i != 0 {
                records.push(EmbeddingRecord {
                    item_id: format!("g{i}"),
                    split: Split::Generated,
                    region: if i % 2 == 0 { "Africa" } else { "Europe" }.into(),
                    object_class: "car".into(),
                    view: View::Object,
                    row_index: i - 1,
                    has_object_segmentation: true,
                });
            }
        }
        let vectors = (0..records.len() * d).map(|v| v as f32 * 0.25 - 3.0).collect();
        EmbeddingSet::new(d, vectors, records).unwrap()
    }

    #[test]
    fn round_trip_two_rows() {
        let dir = tempfile::tempdir().unwrap();
        let paths = EmbeddingPaths::from_stem(dir.path().join("gen"));
        let set = tiny_set(2, 4);
        write_embedding_file(&set, &paths).unwrap();
        let back = read_embedding_file(&paths).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.view_len(View::Full), 2);
        assert_eq!(back.view_len(View::Object), 1);
    }

    #[test]
    fn file_size_matches_header_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ddig");
        write_ddig(&path, 768, &vec![1.5; 100 * 768]).unwrap();
        // 14-byte header + 100 * 768 * 4
        assert_eq!(fs::metadata(&path).unwrap().len(), 307_214);
        let m = read_ddig(&path).unwrap();
        assert_eq!((m.rows, m.dimension), (100, 768));
    }

    #[test]
    fn truncation_and_trailing_bytes_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ddig");
        write_ddig(&path, 4, &[0.0; 8]).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_ddig(&path),
            Err(StoreError::TruncatedPayload { expected: 46, actual: 45, .. })
        ));
        bytes.extend_from_slice(&[0, 0]);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_ddig(&path), Err(StoreError::TruncatedPayload { .. })));
    }

    #[test]
    fn header_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ddig");
        fs::write(&path, b"DDIX\x01\x00").unwrap();
        assert!(matches!(read_ddig(&path), Err(StoreError::MagicMismatch { .. })));

        let mut bytes = b"DDIG".to_vec();
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_ddig(&path),
            Err(StoreError::VersionUnsupported { version: 2, .. })
        ));
    }

    #[test]
    fn nan_row_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ddig");
        let mut data = vec![0.0f32; 5 * 3];
        data[3 * 3 + 2] = f32::NAN;
        write_ddig(&path, 3, &data).unwrap();
        assert!(matches!(
            read_ddig(&path),
            Err(StoreError::NonFiniteValue { row: 3, column: 2 })
        ));
    }

    #[test]
    fn manifest_row_count_must_match_header() {
        let dir = tempfile::tempdir().unwrap();
        let paths = EmbeddingPaths::from_stem(dir.path().join("gen"));
        let set = tiny_set(3, 2);
        write_embedding_file(&set, &paths).unwrap();
        write_ddig(&paths.full, 2, &[0.0; 8]).unwrap();
        assert!(matches!(
            read_embedding_file(&paths),
            Err(StoreError::ManifestMismatch(_))
        ));
    }

    #[test]
    fn missing_manifest_is_a_manifest_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let paths = EmbeddingPaths::from_stem(dir.path().join("nothing"));
        let err = read_embedding_file(&paths).unwrap_err();
        assert!(matches!(err, StoreError::ManifestMismatch(_)), "{err}");
    }

    #[test]
    fn non_contiguous_rows_rejected_before_write() {
        let dir = tempfile::tempdir().unwrap();
        let paths = EmbeddingPaths::from_stem(dir.path().join("gen"));
        let mut records = tiny_set(2, 1).records().to_vec();
        records[0].row_index = 5;
        let n = records.len();
        let set = EmbeddingSet::new(1, vec![0.0; n], records).unwrap();
        assert!(matches!(
            write_embedding_file(&set, &paths),
            Err(StoreError::ManifestMismatch(_))
        ));
    }
}
