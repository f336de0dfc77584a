//! Embedding-bundle I/O: the `RSPC1` binary matrix format plus its
//! JSON-lines sidecar manifest.
//!
//! # Format
//!
//! A matrix file is a 24-byte header followed by the payload:
//!
//! | bytes  | content                                          |
//! |--------|--------------------------------------------------|
//! | 0–3    | magic `52 53 50 43` (`"RSPC"`)                   |
//! | 4–7    | format version, u32 little-endian (currently 1)  |
//! | 8–11   | dimension z, u32 little-endian                   |
//! | 12–19  | row count N, u64 little-endian                   |
//! | 20     | dtype code (1 = IEEE-754 binary32 little-endian) |
//! | 21–23  | zero padding                                     |
//! | 24–    | N·z values, row-major                            |
//!
//! The sidecar manifest lives next to the matrix at `<path>.jsonl`: one
//! JSON object per row, in row order, with required key `"id"` and
//! optional `"text"` and `"meta"`.
//!
//! Round trips are bitwise lossless because in-memory embeddings are
//! kept binary32-canonical (see [`crate::embedding`]).

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::{Embedding, EmbeddingMatrix};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"RSPC";
pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 1;
const HEADER_LEN: usize = 24;

/// One sidecar manifest row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

/// Sidecar manifest path for a matrix path: `<path>.jsonl`.
pub fn sidecar_path(matrix_path: &Path) -> PathBuf {
    let mut name = matrix_path.as_os_str().to_owned();
    name.push(".jsonl");
    PathBuf::from(name)
}

fn encode_header(dim: u32, rows: u64) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[0..4].copy_from_slice(&MAGIC);
    h[4..8].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    h[8..12].copy_from_slice(&dim.to_le_bytes());
    h[12..20].copy_from_slice(&rows.to_le_bytes());
    h[20] = DTYPE_F32;
    h
}

fn decode_header(buf: &[u8], path: &str) -> Result<(usize, u64)> {
    if buf.len() < HEADER_LEN {
        return Err(Error::TruncatedFile {
            path: path.to_owned(),
            expected: HEADER_LEN as u64,
            got: buf.len() as u64,
        });
    }
    let magic: [u8; 4] = buf[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_owned(),
            found: magic,
        });
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::VersionUnsupported {
            path: path.to_owned(),
            version,
        });
    }
    let dim = u32::from_le_bytes(buf[8..12].try_into().unwrap());
    let rows = u64::from_le_bytes(buf[12..20].try_into().unwrap());
    if buf[20] != DTYPE_F32 {
        return Err(Error::UnsupportedDtype {
            path: path.to_owned(),
            code: buf[20],
        });
    }
    Ok((dim as usize, rows))
}

/// Serialize a matrix (header + binary32 payload) to bytes.
pub fn encode_matrix(matrix: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + matrix.as_flat().len() * 4);
    out.extend_from_slice(&encode_header(matrix.dim() as u32, matrix.nrows() as u64));
    for &v in matrix.as_flat() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Write a matrix (header + binary32 payload) to `path`.
pub fn write_matrix(matrix: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let p = path.display().to_string();
    std::fs::write(path, encode_matrix(matrix)).map_err(|e| Error::io(&p, e))
}

/// Read a whole matrix file into memory. Rows are ingested through the
/// near-unit window (accepted bit-for-bit when within 1e-4 of unit norm,
/// renormalized beyond, rejected below the 1e-6 floor).
pub fn read_matrix(path: &Path) -> Result<EmbeddingMatrix> {
    let p = path.display().to_string();
    let buf = std::fs::read(path).map_err(|e| Error::io(&p, e))?;
    parse_matrix(&buf, &p)
}

/// Parse matrix bytes already in memory; `label` names the source in
/// errors.
pub fn parse_matrix(buf: &[u8], label: &str) -> Result<EmbeddingMatrix> {
    let p = label;
    let (dim, rows) = decode_header(buf, p)?;
    let expected = rows
        .checked_mul(dim as u64)
        .and_then(|n| n.checked_mul(4))
        .unwrap_or(u64::MAX);
    let payload = &buf[HEADER_LEN..];
    if (payload.len() as u64) < expected {
        return Err(Error::TruncatedFile {
            path: p.to_owned(),
            expected,
            got: payload.len() as u64,
        });
    }
    if rows == 0 {
        return Err(Error::EmptyInput {
            context: "matrix file with zero rows",
        });
    }
    let mut data = Vec::with_capacity((rows as usize) * dim);
    for r in 0..rows as usize {
        let start = r * dim * 4;
        let raw: Vec<f64> = payload[start..start + dim * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let row = Embedding::ingest_near_unit(raw).map_err(|e| match e {
            Error::ZeroNorm { norm } => Error::BadRecord {
                id: format!("{p} row {r}"),
                reason: format!("near-zero norm {norm:.3e}"),
            },
            other => other,
        })?;
        data.extend_from_slice(row.values());
    }
    EmbeddingMatrix::from_flat(data, dim)
}

/// Read the sidecar manifest rows for a matrix path, if the sidecar
/// exists. `expected_rows`, when given, is enforced with
/// [`Error::CountMismatch`].
pub fn read_manifest(matrix_path: &Path, expected_rows: Option<usize>) -> Result<Option<Vec<ManifestRow>>> {
    let side = sidecar_path(matrix_path);
    if !side.exists() {
        return Ok(None);
    }
    let rows = read_manifest_file(&side)?;
    if let Some(n) = expected_rows {
        if rows.len() != n {
            return Err(Error::CountMismatch {
                path: side.display().to_string(),
                sidecar_rows: rows.len(),
                matrix_rows: n,
            });
        }
    }
    Ok(Some(rows))
}

/// Read a JSON-lines manifest file directly.
pub fn read_manifest_file(path: &Path) -> Result<Vec<ManifestRow>> {
    let p = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&p, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&p, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ManifestRow = serde_json::from_str(&line)
            .map_err(|e| Error::json(format!("{p}:{}", lineno + 1), e))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Write a matrix and, when given, its sidecar manifest.
///
/// Manifest rows must match the matrix row count one-to-one and in order.
pub fn write_bundle(
    matrix: &EmbeddingMatrix,
    manifest: Option<&[ManifestRow]>,
    path: &Path,
) -> Result<()> {
    if let Some(rows) = manifest {
        if rows.len() != matrix.nrows() {
            return Err(Error::CountMismatch {
                path: path.display().to_string(),
                sidecar_rows: rows.len(),
                matrix_rows: matrix.nrows(),
            });
        }
    }
    write_matrix(matrix, path)?;
    if let Some(rows) = manifest {
        write_manifest_file(rows, &sidecar_path(path))?;
    }
    Ok(())
}

/// Write manifest rows as JSON lines to an explicit path.
pub fn write_manifest_file(rows: &[ManifestRow], path: &Path) -> Result<()> {
    let p = path.display().to_string();
    let file = File::create(path).map_err(|e| Error::io(&p, e))?;
    let mut w = std::io::BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(row).map_err(|e| Error::json(&p, e))?;
        w.write_all(line.as_bytes()).map_err(|e| Error::io(&p, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(&p, e))?;
    }
    w.flush().map_err(|e| Error::io(&p, e))
}

/// Read a matrix and its sidecar manifest (when present).
pub fn read_bundle(path: &Path) -> Result<(EmbeddingMatrix, Option<Vec<ManifestRow>>)> {
    let matrix = read_matrix(path)?;
    let manifest = read_manifest(path, Some(matrix.nrows()))?;
    Ok((matrix, manifest))
}

/// Streaming row reader over a matrix file; used by the engine so a
/// stream pass never materializes the whole matrix.
pub struct MatrixRowReader {
    reader: BufReader<File>,
    path: String,
    dim: usize,
    rows: u64,
    next: u64,
}

impl MatrixRowReader {
    pub fn open(path: &Path) -> Result<MatrixRowReader> {
        let p = path.display().to_string();
        let file = File::open(path).map_err(|e| Error::io(&p, e))?;
        let mut reader = BufReader::new(file);
        let mut header = [0u8; HEADER_LEN];
        let mut filled = 0;
        while filled < HEADER_LEN {
            match reader.read(&mut header[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) => return Err(Error::io(&p, e)),
            }
        }
        let (dim, rows) = decode_header(&header[..filled], &p)?;
        Ok(MatrixRowReader {
            reader,
            path: p,
            dim,
            rows,
            next: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }
}

impl Iterator for MatrixRowReader {
    type Item = Result<Embedding>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.rows {
            return None;
        }
        let mut raw = vec![0u8; self.dim * 4];
        if let Err(e) = self.reader.read_exact(&mut raw) {
            self.next = self.rows; // stop iteration after the error
            let err = if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::TruncatedFile {
                    path: self.path.clone(),
                    expected: self.rows * self.dim as u64 * 4,
                    got: self.next * self.dim as u64 * 4,
                }
            } else {
                Error::io(&self.path, e)
            };
            return Some(Err(err));
        }
        self.next += 1;
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Some(Embedding::ingest_near_unit(values))
    }
}
