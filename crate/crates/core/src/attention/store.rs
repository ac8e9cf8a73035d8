//! On-disk matrix store: `index.tsv` plus `matrices.bin`.
//!
//! Each binary record is the magic `ATNM`, then `L` and `H` as little-endian
//! `u32`, then `L * H` little-endian `f32` values, layer-major. The index
//! has one row per record: `example_id, set_label, pattern, direction,
//! offset`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{AttentionError, AttentionMatrix, Direction};
use crate::dataset::SetLabel;

pub const MAGIC: &[u8; 4] = b"ATNM";
pub const INDEX_FILE: &str = "index.tsv";
pub const DATA_FILE: &str = "matrices.bin";
pub const META_FILE: &str = "store.meta";
pub const PARTIAL_MARKER: &str = "PARTIAL";
const INDEX_HEADER: &str = "example_id\tset_label\tpattern\tdirection\toffset";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreRecord {
    pub example_id: u64,
    pub set_label: SetLabel,
    pub pattern: u8,
    pub direction: Direction,
    pub offset: u64,
}

pub fn encode_record(matrix: &AttentionMatrix<f32>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + 4 * matrix.values().len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(matrix.layers() as u32).to_le_bytes());
    buf.extend_from_slice(&(matrix.heads() as u32).to_le_bytes());
    for v in matrix.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

/// Decodes the record at the start of `bytes`; returns it with its length.
pub fn decode_record(
    bytes: &[u8],
    direction: Direction,
    example_id: u64,
) -> Result<(AttentionMatrix<f32>, usize), String> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err("bad record magic".into());
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let (layers, heads) = (word(4) as usize, word(8) as usize);
    let len = 12 + 4 * layers * heads;
    if bytes.len() < len {
        return Err("truncated record".into());
    }
    let values = bytes[12..len]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let m = AttentionMatrix::new(layers, heads, values, direction, example_id)
        .map_err(|e| e.to_string())?;
    Ok((m, len))
}

/// Appends records; a single writer per store.
pub struct MatrixStoreWriter {
    dir: PathBuf,
    index: BufWriter<File>,
    data: BufWriter<File>,
    offset: u64,
    records: usize,
}

impl MatrixStoreWriter {
    /// Creates a fresh store in `dir`. An existing store is only replaced
    /// when `overwrite` is set.
    pub fn create(dir: impl AsRef<Path>, overwrite: bool) -> Result<Self, AttentionError> {
        let dir = dir.as_ref().to_path_buf();
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| AttentionError::Io { path, source }
        };
        if dir.join(INDEX_FILE).exists() && !overwrite {
            return Err(AttentionError::StoreExists(dir));
        }
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        for stale in [META_FILE, PARTIAL_MARKER] {
            let p = dir.join(stale);
            if p.exists() {
                fs::remove_file(&p).map_err(io(&p))?;
            }
        }
        let index_path = dir.join(INDEX_FILE);
        let data_path = dir.join(DATA_FILE);
        let mut index = BufWriter::new(File::create(&index_path).map_err(io(&index_path))?);
        let data = BufWriter::new(File::create(&data_path).map_err(io(&data_path))?);
        writeln!(index, "{INDEX_HEADER}").map_err(io(&index_path))?;
        Ok(MatrixStoreWriter {
            dir,
            index,
            data,
            offset: 0,
            records: 0,
        })
    }

    pub fn append(
        &mut self,
        set_label: SetLabel,
        pattern: u8,
        matrix: &AttentionMatrix<f32>,
    ) -> Result<StoreRecord, AttentionError> {
        let bytes = encode_record(matrix);
        let record = StoreRecord {
            example_id: matrix.example_id,
            set_label,
            pattern,
            direction: matrix.direction,
            offset: self.offset,
        };
        let io = |source| AttentionError::Io {
            path: self.dir.clone(),
            source,
        };
        self.data.write_all(&bytes).map_err(io)?;
        writeln!(
            self.index,
            "{}\t{}\t{}\t{}\t{}",
            record.example_id, record.set_label, record.pattern, record.direction, record.offset
        )
        .map_err(io)?;
        self.offset += bytes.len() as u64;
        self.records += 1;
        Ok(record)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Flushes both files and returns the number of records written.
    pub fn finish(mut self) -> Result<usize, AttentionError> {
        let dir = self.dir.clone();
        self.index
            .flush()
            .and_then(|_| self.data.flush())
            .map_err(|source| AttentionError::Io { path: dir, source })?;
        Ok(self.records)
    }

    /// Leaves a marker so readers know the store is incomplete.
    pub fn abort(mut self, reason: &str) -> Result<(), AttentionError> {
        let _ = self.index.flush();
        let _ = self.data.flush();
        let marker = self.dir.join(PARTIAL_MARKER);
        fs::write(&marker, format!("{reason}\n")).map_err(|source| AttentionError::Io {
            path: marker,
            source,
        })
    }
}

/// Read-only view of a finished store.
#[derive(Debug, Clone)]
pub struct MatrixStore {
    dir: PathBuf,
    records: Vec<StoreRecord>,
    data: Vec<u8>,
}

impl MatrixStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, AttentionError> {
        let dir = dir.as_ref().to_path_buf();
        let store_err = |message: String| AttentionError::Store {
            path: dir.clone(),
            message,
        };
        let index_path = dir.join(INDEX_FILE);
        let index = fs::read_to_string(&index_path).map_err(|source| AttentionError::Io {
            path: index_path.clone(),
            source,
        })?;
        let data_path = dir.join(DATA_FILE);
        let data = fs::read(&data_path).map_err(|source| AttentionError::Io {
            path: data_path,
            source,
        })?;

        let mut lines = index.lines();
        if lines.next() != Some(INDEX_HEADER) {
            return Err(store_err("unexpected index header".into()));
        }
        let mut records = Vec::new();
        for (n, line) in lines.enumerate() {
            let bad = |what: &str| store_err(format!("index line {}: bad {what}", n + 2));
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(bad("column count"));
            }
            let record = StoreRecord {
                example_id: cols[0].parse().map_err(|_| bad("example_id"))?,
                set_label: cols[1].parse().map_err(|_| bad("set_label"))?,
                pattern: cols[2].parse().map_err(|_| bad("pattern"))?,
                direction: cols[3].parse().map_err(|_| bad("direction"))?,
                offset: cols[4].parse().map_err(|_| bad("offset"))?,
            };
            if record.offset as usize + 12 > data.len() {
                return Err(bad("offset"));
            }
            records.push(record);
        }
        Ok(MatrixStore { dir, records, data })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn is_partial(&self) -> bool {
        self.dir.join(PARTIAL_MARKER).exists()
    }

    pub fn records(&self) -> &[StoreRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn read(&self, record: &StoreRecord) -> Result<AttentionMatrix<f32>, AttentionError> {
        let start = record.offset as usize;
        decode_record(&self.data[start..], record.direction, record.example_id)
            .map(|(m, _)| m)
            .map_err(|message| AttentionError::Store {
                path: self.dir.clone(),
                message: format!("record at offset {start}: {message}"),
            })
    }

    /// Matrices matching the filters, in store order.
    pub fn select(
        &self,
        set_label: Option<SetLabel>,
        pattern: Option<u8>,
        direction: Direction,
    ) -> Result<Vec<(StoreRecord, AttentionMatrix<f32>)>, AttentionError> {
        self.records
            .iter()
            .filter(|r| r.direction == direction)
            .filter(|r| set_label.is_none_or(|l| r.set_label == l))
            .filter(|r| pattern.is_none_or(|p| r.pattern == p))
            .map(|r| self.read(r).map(|m| (r.clone(), m)))
            .collect()
    }

    /// Distinct pattern ids present, ascending.
    pub fn patterns(&self) -> Vec<u8> {
        let mut p: Vec<u8> = self.records.iter().map(|r| r.pattern).collect();
        p.sort_unstable();
        p.dedup();
        p
    }

    pub fn labels(&self) -> Vec<SetLabel> {
        let mut l: Vec<SetLabel> = self.records.iter().map(|r| r.set_label).collect();
        l.sort_unstable();
        l.dedup();
        l
    }
}
