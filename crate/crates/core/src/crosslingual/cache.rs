//! Persistent cache of translation responses.
//!
//! Remote translation is billed, rate-limited, and not stable over time,
//! so every response is recorded on disk and replayed byte-identically on
//! later runs. The file is append-only: a crash mid-write loses at most
//! the final record, which recovery truncates away.
//!
//! # File layout
//!
//! All integers are little-endian.
//!
//! ```text
//! header:  magic "RKTC" (4 bytes), format version u32 (= 1)
//! record:  key hash   32 bytes   sha256(text, 0x00, source_lang, 0x00, target_lang)
//!          src_len    u8         source language tag length
//!          src        src_len bytes
//!          tgt_len    u8         target language tag length
//!          tgt        tgt_len bytes
//!          text_len   u32        translated text length, at most 16 MiB
//!          text       text_len bytes (UTF-8)
//! ```
//!
//! The source text is stored only as its hash; the language tags are kept
//! verbatim so the file can be audited without the original dataset.
//! Replay is last-wins: a later record for the same key shadows an
//! earlier one.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RKTC";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8;
const MAX_TEXT_LEN: usize = 16 * 1024 * 1024;
const MAX_LANG_LEN: usize = 255;

/// Cache key: the translation request, hashed. NUL separators make the
/// (text, source, target) encoding injective for NUL-free inputs.
fn cache_key(text: &str, source_lang: &str, target_lang: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hasher.update([0u8]);
    hasher.update(source_lang.as_bytes());
    hasher.update([0u8]);
    hasher.update(target_lang.as_bytes());
    hasher.finalize().into()
}

/// On-disk map from translation requests to responses.
pub struct TranslationCache {
    path: PathBuf,
    entries: HashMap<[u8; 32], String>,
    file: File,
}

impl std::fmt::Debug for TranslationCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TranslationCache")
            .field("path", &self.path)
            .field("entries", &self.entries.len())
            .finish()
    }
}

impl TranslationCache {
    /// Opens a cache file, creating it if absent. An existing file is
    /// replayed into memory; a truncated final record (crash artifact) is
    /// dropped with a warning, any other inconsistency is an error.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        let mut valid_len = 0u64;
        let mut on_disk = 0u64;
        if path.exists() {
            let bytes = std::fs::read(&path)?;
            on_disk = bytes.len() as u64;
            if !bytes.is_empty() {
                valid_len = replay(&bytes, &mut entries)?;
                if valid_len < on_disk {
                    log::warn!(
                        "translation cache {} has a truncated final record, dropping {} byte(s)",
                        path.display(),
                        on_disk - valid_len
                    );
                }
            }
        }
        if valid_len < on_disk {
            // Appending after a torn record would corrupt every later
            // replay, so cut the file back to its last whole record.
            let file = OpenOptions::new().write(true).open(&path)?;
            file.set_len(valid_len)?;
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        if valid_len < HEADER_LEN as u64 {
            file.write_all(MAGIC)?;
            file.write_all(&VERSION.to_le_bytes())?;
            file.flush()?;
        }
        Ok(Self {
            path,
            entries,
            file,
        })
    }

    /// The translated text recorded for this request, if any. Byte-equal
    /// to what `insert` stored.
    pub fn get(&self, text: &str, source_lang: &str, target_lang: &str) -> Option<&str> {
        self.entries
            .get(&cache_key(text, source_lang, target_lang))
            .map(String::as_str)
    }

    /// Records a response, appending it to the file before updating the
    /// in-memory map.
    pub fn insert(
        &mut self,
        text: &str,
        source_lang: &str,
        target_lang: &str,
        translated: &str,
    ) -> Result<()> {
        if source_lang.len() > MAX_LANG_LEN || target_lang.len() > MAX_LANG_LEN {
            return Err(Error::Dataset(format!(
                "language tag longer than {MAX_LANG_LEN} bytes cannot be cached"
            )));
        }
        if translated.len() > MAX_TEXT_LEN {
            return Err(Error::Dataset(format!(
                "translated text of {} bytes exceeds the cache record limit",
                translated.len()
            )));
        }
        let key = cache_key(text, source_lang, target_lang);
        let mut record =
            Vec::with_capacity(32 + 2 + source_lang.len() + target_lang.len() + 4 + translated.len());
        record.extend_from_slice(&key);
        record.push(source_lang.len() as u8);
        record.extend_from_slice(source_lang.as_bytes());
        record.push(target_lang.len() as u8);
        record.extend_from_slice(target_lang.as_bytes());
        record.extend_from_slice(&(translated.len() as u32).to_le_bytes());
        record.extend_from_slice(translated.as_bytes());
        self.file.write_all(&record)?;
        self.file.flush()?;
        self.entries.insert(key, translated.to_string());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Replays file bytes into `entries`, returning the length of the valid
/// prefix. Anything after that length is a torn final record.
fn replay(bytes: &[u8], entries: &mut HashMap<[u8; 32], String>) -> Result<u64> {
    let corrupt = |message: String| Error::Dataset(format!("translation cache: {message}"));
    if bytes.len() < HEADER_LEN {
        // A file shorter than the header is acceptable only if it is a
        // prefix of the header (interrupted creation); anything else is
        // not a cache file and must not be clobbered.
        if MAGIC.starts_with(&bytes[..bytes.len().min(4)]) {
            return Ok(0);
        }
        return Err(corrupt("file does not start with the RKTC magic".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(corrupt("file does not start with the RKTC magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(corrupt(format!("unsupported format version {version}")));
    }
    let mut offset = HEADER_LEN;
    loop {
        let start = offset;
        let mut take = |n: usize| -> Option<&[u8]> {
            let slice = bytes.get(offset..offset + n)?;
            offset += n;
            Some(slice)
        };
        let Some(hash) = take(32) else {
            return Ok(start as u64);
        };
        let key: [u8; 32] = hash.try_into().unwrap();
        let Some(&[src_len]) = take(1).map(|s| <&[u8; 1]>::try_from(s).unwrap()) else {
            return Ok(start as u64);
        };
        if take(src_len as usize).is_none() {
            return Ok(start as u64);
        }
        let Some(&[tgt_len]) = take(1).map(|s| <&[u8; 1]>::try_from(s).unwrap()) else {
            return Ok(start as u64);
        };
        if take(tgt_len as usize).is_none() {
            return Ok(start as u64);
        }
        let Some(len_bytes) = take(4) else {
            return Ok(start as u64);
        };
        let text_len = u32::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
        if text_len > MAX_TEXT_LEN {
            return Err(corrupt(format!(
                "record at byte {start} declares an implausible text length {text_len}"
            )));
        }
        let Some(text_bytes) = take(text_len) else {
            return Ok(start as u64);
        };
        let text = std::str::from_utf8(text_bytes)
            .map_err(|_| corrupt(format!("record at byte {start} holds invalid UTF-8")))?;
        entries.insert(key, text.to_string());
        if offset == bytes.len() {
            return Ok(offset as u64);
        }
    }
}
