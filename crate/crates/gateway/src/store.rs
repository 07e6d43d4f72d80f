use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use hailchain_core::ledger::BlockFile;
use hailchain_netsim::{NetworkIdentities, Topology};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::GatewayError;

/// Layout of a gateway data directory.
///
/// `identities.json` holds the signing keys of every node and client, so the
/// directory must be treated as a wallet.
#[derive(Debug, Clone)]
pub struct Store {
    dir: PathBuf,
}

impl Store {
    pub fn new(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Store { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// True once a network has been bootstrapped in this directory.
    pub fn is_initialized(&self) -> bool {
        self.dir.join("identities.json").exists()
    }

    pub fn blocks(&self) -> BlockFile {
        BlockFile::new(self.dir.join("ledger.blocks"))
    }

    pub fn load_topology(&self) -> Result<Topology, GatewayError> {
        Ok(Topology::load(self.dir.join("topology.json"))?)
    }

    pub fn save_topology(&self, t: &Topology) -> Result<(), GatewayError> {
        self.write_json("topology.json", t)
    }

    pub fn load_identities(&self) -> Result<NetworkIdentities, GatewayError> {
        self.read_json("identities.json")?
            .ok_or_else(|| GatewayError::BadRequest("identities.json is missing".into()))
    }

    pub fn save_identities(&self, ids: &NetworkIdentities) -> Result<(), GatewayError> {
        self.write_json("identities.json", ids)
    }

    pub(crate) fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<Option<T>, GatewayError> {
        match fs::read(self.dir.join(name)) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| GatewayError::BadRequest(format!("{name}: {e}"))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Writes through a temporary file so a crash never leaves half a file.
    pub(crate) fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<(), GatewayError> {
        let tmp = self.dir.join(format!(".{name}.tmp"));
        let text = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
        fs::write(&tmp, text)?;
        fs::rename(tmp, self.dir.join(name))?;
        Ok(())
    }
}
