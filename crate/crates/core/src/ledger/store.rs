//! Append-only block file: a sequence of records, each a big-endian `u32`
//! length followed by one canonically encoded [`CommittedBlock`].

use std::fs::{File, OpenOptions};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::codec::{Canonical, CodecError};
use crate::ledger::block::CommittedBlock;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("block file i/o: {0}")]
    Io(#[from] io::Error),
    #[error("block file record {index} is corrupt: {source}")]
    Corrupt { index: usize, source: CodecError },
}

#[derive(Debug, Clone)]
pub struct BlockFile {
    path: PathBuf,
}

impl BlockFile {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        BlockFile { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, blocks: &[CommittedBlock]) -> Result<(), StoreError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)?;
        let mut w = BufWriter::new(file);
        for b in blocks {
            let bytes = b.to_canonical_bytes();
            let len = u32::try_from(bytes.len())
                .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "block too large"))?;
            w.write_all(&len.to_be_bytes())?;
            w.write_all(&bytes)?;
        }
        w.flush()?;
        w.get_ref().sync_data()?;
        Ok(())
    }

    /// Reads every record. A missing file is an empty chain.
    pub fn read_all(&self) -> Result<Vec<CommittedBlock>, StoreError> {
        let file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut r = BufReader::new(file);
        let mut out = Vec::new();
        loop {
            let mut len = [0u8; 4];
            match r.read_exact(&mut len) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(e.into()),
            }
            let mut buf = vec![0u8; u32::from_be_bytes(len) as usize];
            r.read_exact(&mut buf).map_err(|_| StoreError::Corrupt {
                index: out.len(),
                source: CodecError::UnexpectedEof,
            })?;
            let block = CommittedBlock::from_canonical_bytes(&buf).map_err(|source| {
                StoreError::Corrupt {
                    index: out.len(),
                    source,
                }
            })?;
            out.push(block);
        }
        Ok(out)
    }
}

/// JSON rendering for `ledger dump`. Not canonical; for people.
pub fn dump_json(blocks: &[CommittedBlock]) -> serde_json::Value {
    serde_json::to_value(blocks).expect("blocks serialize")
}
