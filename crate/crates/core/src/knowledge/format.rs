//! On-disk formats for top-k knowledge.
//!
//! Binary layout (little-endian, fixed stride):
//!
//! ```text
//! header:  magic [u8; 8] | version u32 | vocab_size u32 | k u16 | record_count u64
//! record:  sequence_id u32 | position u32 | k x (token_id u32, probability f32)
//! ```
//!
//! The fixed stride makes streaming reads and offset arithmetic trivial.
//! A JSONL mirror (`{"seq":..,"pos":..,"topk":[[token_id,prob],...]}`) is
//! provided for debugging; the binary format is canonical.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{KnowledgeError, TopKEntry, TopKRecord};

/// Magic tag opening every binary knowledge file.
pub const MAGIC: &[u8; 8] = b"TOPKKNOW";
/// Current binary format version.
pub const FORMAT_VERSION: u32 = 1;
/// Header byte length: magic + version + vocab_size + k + record_count.
pub const HEADER_LEN: u64 = 8 + 4 + 4 + 2 + 8;

/// Byte length of one record at a given `k`.
pub fn record_stride(k: u16) -> u64 {
    8 + 8 * k as u64
}

/// Header metadata of a knowledge file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KnowledgeHeader {
    pub version: u32,
    pub vocab_size: u32,
    pub k: u16,
    pub record_count: u64,
}

/// A fully loaded knowledge file.
#[derive(Debug, Clone)]
pub struct KnowledgeFile {
    pub header: KnowledgeHeader,
    pub records: Vec<TopKRecord>,
}

/// Summary returned by [`write_knowledge`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WriteSummary {
    pub vocab_size: u32,
    pub k: u16,
    pub record_count: u64,
    pub bytes_written: u64,
}

/// Serializes records to the binary format after validating each against
/// `k` and `vocab_size`. Probabilities are narrowed to `f32`.
pub fn write_knowledge(
    records: &[TopKRecord],
    vocab_size: u32,
    k: u16,
    destination: &mut impl Write,
) -> Result<WriteSummary, KnowledgeError> {
    if vocab_size == 0 || k == 0 {
        return Err(KnowledgeError::InvalidArgument(
            "vocab_size and k must be positive".into(),
        ));
    }
    for record in records {
        record.validate_against(k, vocab_size)?;
    }
    destination.write_all(MAGIC)?;
    destination.write_all(&FORMAT_VERSION.to_le_bytes())?;
    destination.write_all(&vocab_size.to_le_bytes())?;
    destination.write_all(&k.to_le_bytes())?;
    destination.write_all(&(records.len() as u64).to_le_bytes())?;
    for record in records {
        destination.write_all(&record.sequence_id.to_le_bytes())?;
        destination.write_all(&record.position.to_le_bytes())?;
        for entry in record.entries() {
            destination.write_all(&entry.token_id.to_le_bytes())?;
            destination.write_all(&(entry.probability as f32).to_le_bytes())?;
        }
    }
    Ok(WriteSummary {
        vocab_size,
        k,
        record_count: records.len() as u64,
        bytes_written: HEADER_LEN + records.len() as u64 * record_stride(k),
    })
}

/// Streaming reader over a binary knowledge file.
///
/// Yields records one at a time without buffering the whole file. Safe to
/// share behind a reference once constructed; iteration requires `&mut`.
pub struct KnowledgeReader<R: Read> {
    source: R,
    header: KnowledgeHeader,
    remaining: u64,
    offset: u64,
}

impl<R: Read> KnowledgeReader<R> {
    /// Reads and validates the header.
    pub fn new(mut source: R) -> Result<Self, KnowledgeError> {
        let mut buf = [0u8; HEADER_LEN as usize];
        let got = read_up_to(&mut source, &mut buf)?;
        if got < buf.len() {
            return Err(KnowledgeError::Truncated { offset: got as u64 });
        }
        if &buf[0..8] != MAGIC {
            return Err(KnowledgeError::BadMagic);
        }
        let version = u32::from_le_bytes(buf[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(KnowledgeError::UnsupportedVersion(version));
        }
        let vocab_size = u32::from_le_bytes(buf[12..16].try_into().unwrap());
        let k = u16::from_le_bytes(buf[16..18].try_into().unwrap());
        let record_count = u64::from_le_bytes(buf[18..26].try_into().unwrap());
        Ok(Self {
            source,
            header: KnowledgeHeader {
                version,
                vocab_size,
                k,
                record_count,
            },
            remaining: record_count,
            offset: HEADER_LEN,
        })
    }

    pub fn header(&self) -> &KnowledgeHeader {
        &self.header
    }

    fn read_record(&mut self) -> Result<TopKRecord, KnowledgeError> {
        let stride = record_stride(self.header.k) as usize;
        let mut buf = vec![0u8; stride];
        let got = read_up_to(&mut self.source, &mut buf)?;
        if got < stride {
            return Err(KnowledgeError::Truncated {
                offset: self.offset + got as u64,
            });
        }
        self.offset += stride as u64;
        let sequence_id = u32::from_le_bytes(buf[0..4].try_into().unwrap());
        let position = u32::from_le_bytes(buf[4..8].try_into().unwrap());
        let mut entries = Vec::with_capacity(self.header.k as usize);
        for chunk in buf[8..].chunks_exact(8) {
            let token_id = u32::from_le_bytes(chunk[0..4].try_into().unwrap());
            let probability = f32::from_le_bytes(chunk[4..8].try_into().unwrap()) as f64;
            entries.push(TopKEntry {
                token_id,
                probability,
            });
        }
        let record = TopKRecord::new(sequence_id, position, entries)?;
        record.validate_against(self.header.k, self.header.vocab_size)?;
        Ok(record)
    }
}

impl<R: Read> Iterator for KnowledgeReader<R> {
    type Item = Result<TopKRecord, KnowledgeError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(self.read_record())
    }
}

/// Reads all bytes that fit into `buf`, returning how many were read.
/// Unlike `read_exact`, a short read is reported, not an error.
fn read_up_to(source: &mut impl Read, buf: &mut [u8]) -> Result<usize, KnowledgeError> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}

/// Loads a whole knowledge file into memory.
pub fn read_knowledge(source: impl Read) -> Result<KnowledgeFile, KnowledgeError> {
    let mut reader = KnowledgeReader::new(source)?;
    let header = *reader.header();
    let records = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    Ok(KnowledgeFile { header, records })
}

#[derive(Serialize, Deserialize)]
struct JsonlRecord {
    seq: u32,
    pos: u32,
    topk: Vec<(u32, f64)>,
}

/// Writes records as one JSON object per line (debugging mirror).
pub fn write_knowledge_jsonl(
    records: &[TopKRecord],
    destination: &mut impl Write,
) -> Result<(), KnowledgeError> {
    for record in records {
        let line = JsonlRecord {
            seq: record.sequence_id,
            pos: record.position,
            topk: record
                .entries()
                .iter()
                .map(|e| (e.token_id, e.probability))
                .collect(),
        };
        serde_json::to_writer(&mut *destination, &line)?;
        destination.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads the JSONL mirror format.
pub fn read_knowledge_jsonl(source: impl Read) -> Result<Vec<TopKRecord>, KnowledgeError> {
    use std::io::BufRead;
    let reader = std::io::BufReader::new(source);
    let mut records = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: JsonlRecord = serde_json::from_str(&line)?;
        records.push(TopKRecord::from_pairs(parsed.seq, parsed.pos, &parsed.topk)?);
    }
    Ok(records)
}
