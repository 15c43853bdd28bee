//! Binary instance files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! header:  magic "BCINST\0\0" | version u32 | max_seq_len u32 | max_predictions u32 | vocab checksum u64
//! record:  byte length u32 | n u16 | ids n*u32 | segment ids n*u8
//!          | m u16 | positions m*u16 | labels m*u32 | is_random_next u8
//! ```

use std::fs;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::PretrainingInstance;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"BCINST\0\0";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 4 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceHeader {
    pub version: u32,
    pub max_seq_len: u32,
    pub max_predictions: u32,
    pub vocab_checksum: u64,
}

impl InstanceHeader {
    pub fn new(max_seq_len: usize, max_predictions: usize, vocab_checksum: u64) -> Self {
        Self {
            version: FORMAT_VERSION,
            max_seq_len: max_seq_len as u32,
            max_predictions: max_predictions as u32,
            vocab_checksum,
        }
    }

    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut buf = [0u8; HEADER_LEN];
        buf[..8].copy_from_slice(&MAGIC);
        buf[8..12].copy_from_slice(&self.version.to_le_bytes());
        buf[12..16].copy_from_slice(&self.max_seq_len.to_le_bytes());
        buf[16..20].copy_from_slice(&self.max_predictions.to_le_bytes());
        buf[20..28].copy_from_slice(&self.vocab_checksum.to_le_bytes());
        buf
    }

    fn decode(buf: &[u8; HEADER_LEN]) -> Result<Self> {
        if buf[..8] != MAGIC {
            return Err(Error::BadMagic);
        }
        let u32_at = |i: usize| u32::from_le_bytes(buf[i..i + 4].try_into().expect("4 bytes"));
        let version = u32_at(8);
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        Ok(Self {
            version,
            max_seq_len: u32_at(12),
            max_predictions: u32_at(16),
            vocab_checksum: u64::from_le_bytes(buf[20..28].try_into().expect("8 bytes")),
        })
    }
}

pub fn encode_record(inst: &PretrainingInstance, out: &mut Vec<u8>) {
    let n = inst.ids.len();
    let m = inst.masked_positions.len();
    let body_len = 2 + 5 * n + 2 + 6 * m + 1;
    out.extend_from_slice(&(body_len as u32).to_le_bytes());
    out.extend_from_slice(&(n as u16).to_le_bytes());
    for id in &inst.ids {
        out.extend_from_slice(&id.to_le_bytes());
    }
    out.extend_from_slice(&inst.segment_ids);
    out.extend_from_slice(&(m as u16).to_le_bytes());
    for p in &inst.masked_positions {
        out.extend_from_slice(&(*p as u16).to_le_bytes());
    }
    for l in &inst.masked_labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out.push(u8::from(inst.is_random_next));
}

fn decode_record(body: &[u8]) -> Result<PretrainingInstance> {
    let corrupt = |what: &str| Error::Corrupt(what.to_string());
    let mut cur = body;
    let mut take = |k: usize| -> Result<&[u8]> {
        if cur.len() < k {
            return Err(corrupt("record shorter than its fields"));
        }
        let (head, tail) = cur.split_at(k);
        cur = tail;
        Ok(head)
    };
    let n = u16::from_le_bytes(take(2)?.try_into().expect("2")) as usize;
    let ids = take(4 * n)?
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4")))
        .collect();
    let segment_ids = take(n)?.to_vec();
    let m = u16::from_le_bytes(take(2)?.try_into().expect("2")) as usize;
    let masked_positions = take(2 * m)?
        .chunks_exact(2)
        .map(|c| u32::from(u16::from_le_bytes(c.try_into().expect("2"))))
        .collect();
    let masked_labels = take(4 * m)?
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4")))
        .collect();
    let flag = take(1)?[0];
    if !cur.is_empty() {
        return Err(corrupt("trailing bytes in record"));
    }
    let is_random_next = match flag {
        0 => false,
        1 => true,
        _ => return Err(corrupt("next-sentence flag is not 0 or 1")),
    };
    Ok(PretrainingInstance {
        ids,
        segment_ids,
        masked_positions,
        masked_labels,
        is_random_next,
    })
}

pub struct InstanceWriter<W: Write> {
    out: W,
    buf: Vec<u8>,
    written: usize,
}

impl<W: Write> InstanceWriter<W> {
    pub fn new(mut out: W, header: &InstanceHeader) -> io::Result<Self> {
        out.write_all(&header.encode())?;
        Ok(Self {
            out,
            buf: Vec::with_capacity(1024),
            written: 0,
        })
    }

    pub fn write(&mut self, inst: &PretrainingInstance) -> io::Result<()> {
        self.buf.clear();
        encode_record(inst, &mut self.buf);
        self.written += 1;
        self.out.write_all(&self.buf)
    }

    pub fn finish(mut self) -> io::Result<usize> {
        self.out.flush()?;
        Ok(self.written)
    }
}

pub struct InstanceReader<R: Read> {
    input: R,
    pub header: InstanceHeader,
}

impl<R: Read> InstanceReader<R> {
    /// Reads and checks the header. With `expected_checksum`, a file built
    /// against another vocabulary is refused.
    pub fn new(mut input: R, expected_checksum: Option<u64>) -> Result<Self> {
        let mut buf = [0u8; HEADER_LEN];
        input.read_exact(&mut buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::BadMagic,
            _ => Error::io("<instance stream>", e),
        })?;
        let header = InstanceHeader::decode(&buf)?;
        if let Some(expected) = expected_checksum {
            if header.vocab_checksum != expected {
                return Err(Error::VocabMismatch {
                    found: header.vocab_checksum,
                    expected,
                });
            }
        }
        Ok(Self { input, header })
    }

    fn next_record(&mut self) -> Result<Option<PretrainingInstance>> {
        let mut len = [0u8; 4];
        match self.input.read(&mut len[..1]) {
            Ok(0) => return Ok(None),
            Ok(_) => {}
            Err(e) => return Err(Error::io("<instance stream>", e)),
        }
        self.input
            .read_exact(&mut len[1..])
            .map_err(|_| Error::Corrupt("truncated record length".into()))?;
        let mut body = vec![0u8; u32::from_le_bytes(len) as usize];
        self.input
            .read_exact(&mut body)
            .map_err(|_| Error::Corrupt("truncated record".into()))?;
        decode_record(&body).map(Some)
    }
}

impl<R: Read> Iterator for InstanceReader<R> {
    type Item = Result<PretrainingInstance>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record().transpose()
    }
}

pub fn write_instances<'a>(
    path: &Path,
    header: &InstanceHeader,
    instances: impl IntoIterator<Item = &'a PretrainingInstance>,
) -> Result<usize> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = InstanceWriter::new(BufWriter::new(file), header).map_err(|e| Error::io(path, e))?;
    for inst in instances {
        w.write(inst).map_err(|e| Error::io(path, e))?;
    }
    w.finish().map_err(|e| Error::io(path, e))
}

pub fn open_instances(
    path: &Path,
    expected_checksum: Option<u64>,
) -> Result<InstanceReader<BufReader<fs::File>>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    InstanceReader::new(BufReader::new(file), expected_checksum)
}

pub fn read_instances(
    path: &Path,
    expected_checksum: Option<u64>,
) -> Result<(InstanceHeader, Vec<PretrainingInstance>)> {
    let reader = open_instances(path, expected_checksum)?;
    let header = reader.header;
    let instances = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, instances))
}
