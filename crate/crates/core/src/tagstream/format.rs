//! Tag files. CSV has the header `channel,timestamp_ps`; the binary form is
//! the 4-byte magic `TTV1` followed by 9-byte little-endian records
//! `(u8 channel, u64 timestamp_ps)`. Both must be sorted by time.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{is_sorted, TimeTag};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TTV1";
const RECORD: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagFormat {
    Csv,
    Binary,
}

impl TagFormat {
    /// `.bin`/`.ttv` are binary, everything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("ttv") => Self::Binary,
            _ => Self::Csv,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    channel: u8,
    timestamp_ps: u64,
}

fn check_sorted(tags: Vec<TimeTag>) -> Result<Vec<TimeTag>> {
    if let Some(k) = tags.windows(2).position(|w| w[1].timestamp < w[0].timestamp) {
        return Err(Error::Format(format!(
            "tags not sorted by time at record {} ({} after {})",
            k + 1,
            tags[k + 1].timestamp,
            tags[k].timestamp
        )));
    }
    Ok(tags)
}

pub fn write_tags_csv<W: Write>(tags: &[TimeTag], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for t in tags {
        wr.serialize(CsvRow {
            channel: t.channel,
            timestamp_ps: t.timestamp,
        })?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_tags_csv<R: Read>(r: R) -> Result<Vec<TimeTag>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["channel", "timestamp_ps"] {
        return Err(Error::Format(format!(
            "expected header 'channel,timestamp_ps', found '{}'",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut tags = Vec::new();
    for row in rd.deserialize::<CsvRow>() {
        let row = row?;
        tags.push(TimeTag::new(row.channel, row.timestamp_ps));
    }
    check_sorted(tags)
}

pub fn write_tags_bin<W: Write>(tags: &[TimeTag], w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    w.write_all(MAGIC)?;
    for t in tags {
        w.write_all(&[t.channel])?;
        w.write_all(&t.timestamp.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tags_bin<R: Read>(r: R) -> Result<Vec<TimeTag>> {
    let mut buf = Vec::new();
    BufReader::new(r).read_to_end(&mut buf)?;
    parse_bin(&buf)
}

fn parse_bin(buf: &[u8]) -> Result<Vec<TimeTag>> {
    let body = buf
        .strip_prefix(MAGIC.as_slice())
        .ok_or_else(|| Error::Format("missing TTV1 header".into()))?;
    if body.len() % RECORD != 0 {
        return Err(Error::Format(format!(
            "truncated binary tag file: {} trailing bytes",
            body.len() % RECORD
        )));
    }
    let tags = body
        .chunks_exact(RECORD)
        .map(|c| TimeTag::new(c[0], u64::from_le_bytes(c[1..].try_into().unwrap())))
        .collect();
    check_sorted(tags)
}

/// Reads either format, sniffing the magic header.
pub fn read_tags<R: Read>(r: R) -> Result<Vec<TimeTag>> {
    let mut buf = Vec::new();
    BufReader::new(r).read_to_end(&mut buf)?;
    if buf.starts_with(MAGIC) {
        parse_bin(&buf)
    } else {
        read_tags_csv(buf.as_slice())
    }
}

pub fn write_tags<W: Write>(tags: &[TimeTag], fmt: TagFormat, w: W) -> Result<()> {
    debug_assert!(is_sorted(tags));
    match fmt {
        TagFormat::Csv => write_tags_csv(tags, w),
        TagFormat::Binary => write_tags_bin(tags, w),
    }
}
