//! Embedding and manifest ingestion.
//!
//! Two input artifacts feed the pipeline:
//!
//! * an `EMB1` matrix file — magic `"EMB1"`, `u32` little-endian row count N,
//!   `u32` little-endian dimension d, then N·d IEEE-754 `f32` little-endian
//!   values in row-major order;
//! * a manifest CSV with header `row_index,image_id,identity,age,gender`
//!   whose `row_index` column must run 0..N-1 in file order.
//!
//! [`load_embeddings`] joins the two, normalizes every row to unit length and
//! validates the result. Raw matrix I/O ([`read_emb1`] / [`write_emb1`])
//! round-trips bit-exactly; the normalization applied on load is idempotent.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

const EMB1_MAGIC: &[u8; 4] = b"EMB1";
const MANIFEST_HEADER: [&str; 5] = ["row_index", "image_id", "identity", "age", "gender"];

/// Maximum accepted age in years.
pub const MAX_AGE: u32 = 130;

/// Rows with squared norm below this are rejected as zero vectors.
pub const ZERO_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },
    #[error("manifest has {manifest_rows} rows but matrix has {matrix_rows}")]
    CountMismatch { manifest_rows: usize, matrix_rows: usize },
    #[error("row {row} has L2 norm below {ZERO_NORM_EPS:e} (zero vector)")]
    ZeroVector { row: usize },
    #[error("duplicate image_id {image_id:?} at rows {first} and {second}")]
    DuplicateImageId { image_id: String, first: usize, second: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl IngestError {
    fn format(path: &Path, reason: impl Into<String>) -> Self {
        IngestError::Format { path: path.display().to_string(), reason: reason.into() }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io { path: path.display().to_string(), source }
    }
}

/// Subject gender as recorded in the manifest. Stored for fidelity; no
/// computation in this crate consumes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gender {
    Male,
    Female,
    Unspecified,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "M",
            Gender::Female => "F",
            Gender::Unspecified => "U",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "M" => Some(Gender::Male),
            "F" => Some(Gender::Female),
            "U" => Some(Gender::Unspecified),
            _ => None,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-image metadata, aligned by row index with the embedding matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub image_id: String,
    pub identity: String,
    /// Age in integer years, in `[0, 130]`.
    pub age: u32,
    pub gender: Gender,
}

/// A raw `f32` matrix as stored in an EMB1 file. Kept separate from
/// [`EmbeddingSet`] so the file format round-trips bit-exactly before any
/// normalization touches the values.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMatrix {
    pub rows: u32,
    pub cols: u32,
    /// Row-major, `rows * cols` values.
    pub data: Vec<f32>,
}

/// Reads an EMB1 file. Fails on a bad magic, truncation or trailing bytes.
pub fn read_emb1(path: &Path) -> Result<RawMatrix, IngestError> {
    let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    let mut reader = BufReader::new(file);

    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic).map_err(|_| IngestError::format(path, "file shorter than header"))?;
    if &magic != EMB1_MAGIC {
        return Err(IngestError::format(path, format!("bad magic {magic:?}, expected \"EMB1\"")));
    }
    let mut word = [0u8; 4];
    reader.read_exact(&mut word).map_err(|_| IngestError::format(path, "truncated row count"))?;
    let rows = u32::from_le_bytes(word);
    reader.read_exact(&mut word).map_err(|_| IngestError::format(path, "truncated dimension"))?;
    let cols = u32::from_le_bytes(word);

    let count = (rows as usize)
        .checked_mul(cols as usize)
        .ok_or_else(|| IngestError::format(path, "row count * dimension overflows"))?;
    let mut payload = vec![0u8; count * 4];
    reader.read_exact(&mut payload).map_err(|_| {
        IngestError::format(path, format!("truncated payload, expected {count} f32 values"))
    })?;
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing).map_err(|e| IngestError::io(path, e))? != 0 {
        return Err(IngestError::format(path, "trailing bytes after payload"));
    }

    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(RawMatrix { rows, cols, data })
}

/// Writes an EMB1 file. `write_emb1(read_emb1(p)) == p` byte for byte.
pub fn write_emb1(path: &Path, matrix: &RawMatrix) -> Result<(), IngestError> {
    assert_eq!(matrix.data.len(), matrix.rows as usize * matrix.cols as usize);
    let file = File::create(path).map_err(|e| IngestError::io(path, e))?;
    let mut writer = BufWriter::new(file);
    let emit = |w: &mut BufWriter<File>, bytes: &[u8]| w.write_all(bytes).map_err(|e| IngestError::io(path, e));
    emit(&mut writer, EMB1_MAGIC)?;
    emit(&mut writer, &matrix.rows.to_le_bytes())?;
    emit(&mut writer, &matrix.cols.to_le_bytes())?;
    for v in &matrix.data {
        emit(&mut writer, &v.to_le_bytes())?;
    }
    writer.flush().map_err(|e| IngestError::io(path, e))
}

/// Reads a manifest CSV, enforcing the exact header and `row_index` order.
pub fn read_manifest(path: &Path) -> Result<Vec<ImageRecord>, IngestError> {
    let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| IngestError::format(path, format!("unreadable header: {e}")))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(IngestError::format(
            path,
            format!("header must be {:?}, found {:?}", MANIFEST_HEADER.join(","), headers),
        ));
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| IngestError::format(path, format!("row {i}: {e}")))?;
        if row.len() != 5 {
            return Err(IngestError::format(path, format!("row {i}: expected 5 fields, found {}", row.len())));
        }
        let row_index: usize = row[0]
            .parse()
            .map_err(|_| IngestError::format(path, format!("row {i}: bad row_index {:?}", &row[0])))?;
        if row_index != i {
            return Err(IngestError::format(path, format!("row {i}: row_index {row_index} out of order")));
        }
        let identity = row[2].to_string();
        if identity.is_empty() {
            return Err(IngestError::format(path, format!("row {i}: empty identity")));
        }
        let age: u32 = row[3]
            .parse()
            .map_err(|_| IngestError::format(path, format!("row {i}: bad age {:?}", &row[3])))?;
        if age > MAX_AGE {
            return Err(IngestError::format(path, format!("row {i}: age {age} exceeds {MAX_AGE}")));
        }
        let gender = Gender::parse(&row[4])
            .ok_or_else(|| IngestError::format(path, format!("row {i}: bad gender {:?}", &row[4])))?;
        records.push(ImageRecord { image_id: row[1].to_string(), identity, age, gender });
    }
    Ok(records)
}

/// Writes a manifest CSV with the canonical header and 0..N-1 row indices.
pub fn write_manifest(path: &Path, records: &[ImageRecord]) -> Result<(), IngestError> {
    let file = File::create(path).map_err(|e| IngestError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    writer
        .write_record(MANIFEST_HEADER)
        .map_err(|e| IngestError::format(path, e.to_string()))?;
    for (i, r) in records.iter().enumerate() {
        writer
            .write_record([
                i.to_string().as_str(),
                &r.image_id,
                &r.identity,
                r.age.to_string().as_str(),
                r.gender.as_str(),
            ])
            .map_err(|e| IngestError::format(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| IngestError::io(path, e))
}

/// Row-normalized embedding matrix plus aligned per-image metadata.
///
/// Invariants held after construction: every row has unit L2 norm (within
/// 1e-6), the record count equals the row count, and — unless built through
/// [`load_embeddings_keep_duplicates`] — image ids are unique.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    vectors: DMatrix<f64>,
    records: Vec<ImageRecord>,
}

impl EmbeddingSet {
    /// Builds a set from raw rows, normalizing each to unit length.
    /// Does not check image-id uniqueness; see [`EmbeddingSet::check_unique_ids`].
    pub fn from_raw(matrix: &RawMatrix, records: Vec<ImageRecord>) -> Result<Self, IngestError> {
        if matrix.rows as usize != records.len() {
            return Err(IngestError::CountMismatch {
                manifest_rows: records.len(),
                matrix_rows: matrix.rows as usize,
            });
        }
        let n = matrix.rows as usize;
        let d = matrix.cols as usize;
        let mut vectors = DMatrix::<f64>::zeros(n, d);
        for i in 0..n {
            let row = &matrix.data[i * d..(i + 1) * d];
            let norm = row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
            if norm < ZERO_NORM_EPS {
                return Err(IngestError::ZeroVector { row: i });
            }
            for j in 0..d {
                vectors[(i, j)] = f64::from(row[j]) / norm;
            }
        }
        Ok(EmbeddingSet { vectors, records })
    }

    /// Errors with the offending id if any two records share an image_id.
    pub fn check_unique_ids(&self) -> Result<(), IngestError> {
        let mut seen: HashSet<&str> = HashSet::with_capacity(self.records.len());
        for (i, r) in self.records.iter().enumerate() {
            if !seen.insert(&r.image_id) {
                let first = self.records.iter().position(|p| p.image_id == r.image_id).unwrap();
                return Err(IngestError::DuplicateImageId {
                    image_id: r.image_id.clone(),
                    first,
                    second: i,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> nalgebra::DVectorView<'_, f64> {
        // nalgebra stores column-major; rows are strided views.
        self.vectors.row(i).transpose_view()
    }

    /// Saves the set as an EMB1 file, casting values to `f32`.
    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        let n = self.len();
        let d = self.dim();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                data.push(self.vectors[(i, j)] as f32);
            }
        }
        write_emb1(path, &RawMatrix { rows: n as u32, cols: d as u32, data })
    }
}

/// Loads and validates an embedding set: rows are unit-normalized, zero rows
/// and duplicate image ids are rejected.
pub fn load_embeddings(matrix_path: &Path, manifest_path: &Path) -> Result<EmbeddingSet, IngestError> {
    let set = load_embeddings_keep_duplicates(matrix_path, manifest_path)?;
    set.check_unique_ids()?;
    Ok(set)
}

/// Like [`load_embeddings`] but tolerates duplicate image ids, for callers
/// that intend to pass the result through [`deduplicate`].
pub fn load_embeddings_keep_duplicates(
    matrix_path: &Path,
    manifest_path: &Path,
) -> Result<EmbeddingSet, IngestError> {
    let matrix = read_emb1(matrix_path)?;
    let records = read_manifest(manifest_path)?;
    EmbeddingSet::from_raw(&matrix, records)
}

/// Removes rows whose image_id already appeared earlier; first occurrence
/// wins and surviving rows keep their relative order.
pub fn deduplicate(set: &EmbeddingSet) -> EmbeddingSet {
    let mut seen: HashSet<&str> = HashSet::with_capacity(set.len());
    let keep: Vec<usize> = (0..set.len())
        .filter(|&i| seen.insert(&set.records[i].image_id))
        .collect();
    let d = set.dim();
    let mut vectors = DMatrix::<f64>::zeros(keep.len(), d);
    for (new_i, &old_i) in keep.iter().enumerate() {
        for j in 0..d {
            vectors[(new_i, j)] = set.vectors[(old_i, j)];
        }
    }
    let records = keep.iter().map(|&i| set.records[i].clone()).collect();
    EmbeddingSet { vectors, records }
}
