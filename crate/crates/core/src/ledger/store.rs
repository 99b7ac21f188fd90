//! Content-addressed paper storage: files named by the hex SHA-256 of their
//! contents, or an in-memory map when no directory is configured.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::tx::{PaperRef, HASH_LEN};

#[derive(Debug, Clone, Default)]
pub struct ContentStore {
    dir: Option<PathBuf>,
    mem: BTreeMap<[u8; HASH_LEN], Vec<u8>>,
}

impl ContentStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn in_dir(dir: impl AsRef<Path>) -> io::Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self {
            dir: Some(dir.as_ref().to_owned()),
            mem: BTreeMap::new(),
        })
    }

    pub fn put(&mut self, content: &[u8]) -> io::Result<PaperRef> {
        let r = PaperRef::of(content);
        if let Some(dir) = &self.dir {
            let path = dir.join(hex::encode(r.content_hash));
            if !path.exists() {
                fs::write(path, content)?;
            }
        } else {
            self.mem.insert(r.content_hash, content.to_vec());
        }
        Ok(r)
    }

    /// Fetches content, rejecting anything whose hash or length no longer
    /// matches the reference.
    pub fn get(&self, r: &PaperRef) -> Option<Vec<u8>> {
        let bytes = match &self.dir {
            Some(dir) => fs::read(dir.join(hex::encode(r.content_hash))).ok()?,
            None => self.mem.get(&r.content_hash)?.clone(),
        };
        (PaperRef::of(&bytes) == *r).then_some(bytes)
    }

    pub fn len(&self) -> usize {
        match &self.dir {
            Some(dir) => fs::read_dir(dir).map(|d| d.count()).unwrap_or(0),
            None => self.mem.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
