//! Append-only broker journal.
//!
//! Each record is `len: u32 | body | crc32(body): u32`, little endian, where
//! the body is `kind: u8 | at: i64 | message-id | topic | subscriber | payload`
//! and every variable field carries a `u32` length prefix. For subscription
//! records the topic field holds the subscription pattern.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use bytes::{Buf, BufMut, Bytes, BytesMut};

use crate::time::Timestamp;

use super::BusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Publish = 1,
    Ack = 2,
    Requeue = 3,
    Subscribe = 4,
    Unsubscribe = 5,
    /// Floor for the next local sequence number, written by compaction.
    Sequence = 6,
}

impl RecordKind {
    fn from_u8(b: u8) -> Option<RecordKind> {
        Some(match b {
            1 => RecordKind::Publish,
            2 => RecordKind::Ack,
            3 => RecordKind::Requeue,
            4 => RecordKind::Subscribe,
            5 => RecordKind::Unsubscribe,
            6 => RecordKind::Sequence,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JournalRecord {
    pub kind: RecordKind,
    pub at: Timestamp,
    pub message_id: String,
    pub topic: String,
    pub subscriber: String,
    pub payload: Bytes,
}

impl JournalRecord {
    pub fn encode(&self) -> Bytes {
        let mut body = BytesMut::with_capacity(32 + self.message_id.len() + self.topic.len() + self.payload.len());
        body.put_u8(self.kind as u8);
        body.put_i64_le(self.at.0);
        for field in [self.message_id.as_bytes(), self.topic.as_bytes(), self.subscriber.as_bytes(), &self.payload] {
            body.put_u32_le(field.len() as u32);
            body.put_slice(field);
        }
        let mut out = BytesMut::with_capacity(body.len() + 8);
        out.put_u32_le(body.len() as u32);
        out.put_slice(&body);
        out.put_u32_le(crc32fast::hash(&body));
        out.freeze()
    }

    fn decode_body(mut body: &[u8]) -> Option<JournalRecord> {
        if body.remaining() < 9 {
            return None;
        }
        let kind = RecordKind::from_u8(body.get_u8())?;
        let at = Timestamp(body.get_i64_le());
        let mut fields: Vec<&[u8]> = Vec::with_capacity(4);
        for _ in 0..4 {
            if body.remaining() < 4 {
                return None;
            }
            let n = body.get_u32_le() as usize;
            if body.remaining() < n {
                return None;
            }
            fields.push(&body[..n]);
            body.advance(n);
        }
        if body.has_remaining() {
            return None;
        }
        let text = |b: &[u8]| std::str::from_utf8(b).ok().map(str::to_string);
        Some(JournalRecord {
            kind,
            at,
            message_id: text(fields[0])?,
            topic: text(fields[1])?,
            subscriber: text(fields[2])?,
            payload: Bytes::copy_from_slice(fields[3]),
        })
    }
}

/// Decodes records from the front of `data`. Returns the records and the
/// length of the valid prefix; decoding stops at the first short, corrupt or
/// unparseable record.
pub fn decode_all(data: &[u8]) -> (Vec<JournalRecord>, usize) {
    let mut records = Vec::new();
    let mut pos = 0;
    while data.len() - pos >= 4 {
        let len = u32::from_le_bytes(data[pos..pos + 4].try_into().expect("4 bytes")) as usize;
        let end = match pos.checked_add(8 + len) {
            Some(end) if end <= data.len() => end,
            _ => break,
        };
        let body = &data[pos + 4..pos + 4 + len];
        let crc = u32::from_le_bytes(data[end - 4..end].try_into().expect("4 bytes"));
        if crc32fast::hash(body) != crc {
            break;
        }
        match JournalRecord::decode_body(body) {
            Some(r) => records.push(r),
            None => break,
        }
        pos = end;
    }
    (records, pos)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SyncPolicy {
    /// `fsync` after every record.
    Always,
    #[default]
    Never,
}

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
    sync: SyncPolicy,
}

fn io_err(e: io::Error) -> BusError {
    BusError::Journal(e.to_string())
}

impl Journal {
    /// Opens (creating if needed) the journal at `path`, returning the intact
    /// records and the number of trailing bytes that were cut off.
    pub fn open(path: impl AsRef<Path>, sync: SyncPolicy) -> Result<(Journal, Vec<JournalRecord>, u64), BusError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path).map_err(io_err)?;
        let mut data = Vec::new();
        file.read_to_end(&mut data).map_err(io_err)?;
        let (records, valid) = decode_all(&data);
        let cut = (data.len() - valid) as u64;
        if cut > 0 {
            file.set_len(valid as u64).map_err(io_err)?;
            file.sync_all().map_err(io_err)?;
        }
        Ok((Journal { path, file, sync }, records, cut))
    }

    pub fn append(&mut self, record: &JournalRecord) -> Result<(), BusError> {
        self.file.write_all(&record.encode()).map_err(io_err)?;
        if self.sync == SyncPolicy::Always {
            self.file.sync_data().map_err(io_err)?;
        }
        Ok(())
    }

    /// Atomically replaces the journal contents with `records`.
    pub fn rewrite(&mut self, records: &[JournalRecord]) -> Result<(), BusError> {
        let tmp = self.path.with_extension("compact");
        {
            let mut out = File::create(&tmp).map_err(io_err)?;
            let mut buf = Vec::new();
            for r in records {
                buf.extend_from_slice(&r.encode());
            }
            out.write_all(&buf).map_err(io_err)?;
            out.sync_all().map_err(io_err)?;
        }
        fs::rename(&tmp, &self.path).map_err(io_err)?;
        self.file = OpenOptions::new().append(true).open(&self.path).map_err(io_err)?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
