//! Append-only binary segment holding one (subject, channel) series.
//!
//! Layout: a 6-byte header (`b"VSRA"`, version `0x01`, one reserved zero
//! byte) followed by 16-byte records, each a little-endian `i64` timestamp
//! and `f64` value. A file whose body length is not a multiple of 16 ends in
//! a torn record; readers ignore it and writers cut it off before appending.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"VSRA";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: u64 = 6;
pub const RECORD_LEN: u64 = 16;

pub fn header() -> [u8; 6] {
    [MAGIC[0], MAGIC[1], MAGIC[2], MAGIC[3], VERSION, 0]
}

pub fn encode_record(t_ms: i64, value: f64) -> [u8; 16] {
    let mut rec = [0u8; 16];
    rec[..8].copy_from_slice(&t_ms.to_le_bytes());
    rec[8..].copy_from_slice(&value.to_le_bytes());
    rec
}

fn bad_header(path: &Path) -> io::Error {
    io::Error::new(
        io::ErrorKind::InvalidData,
        format!("{} is not a version-1 segment file", path.display()),
    )
}

/// Decodes every complete record from raw file bytes.
pub fn decode(bytes: &[u8]) -> Option<Vec<(i64, f64)>> {
    if bytes.len() < HEADER_LEN as usize || bytes[..6] != header() {
        return None;
    }
    Some(
        bytes[HEADER_LEN as usize..]
            .chunks_exact(RECORD_LEN as usize)
            .map(|rec| {
                let t = i64::from_le_bytes(rec[..8].try_into().unwrap());
                let v = f64::from_le_bytes(rec[8..].try_into().unwrap());
                (t, v)
            })
            .collect(),
    )
}

/// Reads all complete records in file order.
pub fn read_all(path: &Path) -> io::Result<Vec<(i64, f64)>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN as usize {
        // torn header from a crash during creation: no records yet
        if MAGIC.starts_with(&bytes[..bytes.len().min(4)]) {
            return Ok(Vec::new());
        }
        return Err(bad_header(path));
    }
    decode(&bytes).ok_or_else(|| bad_header(path))
}

/// Appends records and syncs. The caller must hold the segment's write lock.
pub fn append(path: &Path, records: &[(i64, f64)]) -> io::Result<()> {
    let mut file = OpenOptions::new()
        .read(true)
        .write(true)
        .create(true)
        .truncate(false)
        .open(path)?;
    let len = file.metadata()?.len();
    if len < HEADER_LEN {
        file.set_len(0)?;
        file.write_all(&header())?;
    } else {
        let mut head = [0u8; 6];
        file.read_exact(&mut head)?;
        if head != header() {
            return Err(bad_header(path));
        }
        let aligned = HEADER_LEN + (len - HEADER_LEN) / RECORD_LEN * RECORD_LEN;
        if aligned != len {
            file.set_len(aligned)?;
        }
    }
    let mut buf = Vec::with_capacity(records.len() * RECORD_LEN as usize);
    for &(t, v) in records {
        buf.extend_from_slice(&encode_record(t, v));
    }
    // append mode is not used because the torn-tail repair needs set_len
    use std::io::Seek;
    file.seek(io::SeekFrom::End(0))?;
    file.write_all(&buf)?;
    file.sync_data()
}
