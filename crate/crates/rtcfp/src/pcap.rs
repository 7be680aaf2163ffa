//! Classic libpcap files: reading in either byte order with micro- or
//! nanosecond timestamps, writing little-endian microsecond files.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rtcfp_core::{LinkType, RawPacket, Timestamp};

const MAGIC_MICROS: u32 = 0xa1b2_c3d4;
const MAGIC_NANOS: u32 = 0xa1b2_3c4d;
/// Refuse records larger than this; real snap lengths are far smaller.
const MAX_RECORD: u32 = 16 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum PcapError {
    #[error("cannot read capture: {0}")]
    Io(#[from] io::Error),
    #[error("not a classic pcap file (magic {0:#010x})")]
    UnsupportedFormat(u32),
    #[error("file too short for a pcap header")]
    ShortHeader,
    #[error("unsupported link type {0}")]
    UnsupportedLinkType(u32),
    #[error("record {index}: captured length {length} is implausible")]
    BadRecordLength { index: u64, length: u32 },
    #[error("record {index} is cut short")]
    TruncatedRecord { index: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PcapHeader {
    pub big_endian: bool,
    pub nanosecond: bool,
    pub version: (u16, u16),
    pub snaplen: u32,
    pub link_type: LinkType,
}

/// Reads until `buf` is full or EOF; returns the count read.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}

pub struct PcapReader<R> {
    inner: R,
    header: PcapHeader,
    index: u64,
    done: bool,
}

impl PcapReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, PcapError> {
        PcapReader::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R) -> Result<Self, PcapError> {
        let mut h = [0u8; 24];
        let n = read_full(&mut inner, &mut h)?;
        if n < 4 {
            return Err(PcapError::UnsupportedFormat(0));
        }
        let le = u32::from_le_bytes([h[0], h[1], h[2], h[3]]);
        let be = u32::from_be_bytes([h[0], h[1], h[2], h[3]]);
        let (big_endian, nanosecond) = match (le, be) {
            (MAGIC_MICROS, _) => (false, false),
            (MAGIC_NANOS, _) => (false, true),
            (_, MAGIC_MICROS) => (true, false),
            (_, MAGIC_NANOS) => (true, true),
            _ => return Err(PcapError::UnsupportedFormat(le)),
        };
        if n < 24 {
            return Err(PcapError::ShortHeader);
        }
        let u16_at = |i: usize| {
            let b = [h[i], h[i + 1]];
            if big_endian { u16::from_be_bytes(b) } else { u16::from_le_bytes(b) }
        };
        let u32_at = |i: usize| {
            let b = [h[i], h[i + 1], h[i + 2], h[i + 3]];
            if big_endian { u32::from_be_bytes(b) } else { u32::from_le_bytes(b) }
        };
        let code = u32_at(20) & 0x0fff_ffff;
        let link_type = LinkType::from_code(code).ok_or(PcapError::UnsupportedLinkType(code))?;
        let header = PcapHeader {
            big_endian,
            nanosecond,
            version: (u16_at(4), u16_at(6)),
            snaplen: u32_at(16),
            link_type,
        };
        Ok(PcapReader { inner, header, index: 0, done: false })
    }

    pub fn header(&self) -> &PcapHeader {
        &self.header
    }

    fn u32_of(&self, b: &[u8]) -> u32 {
        let b = [b[0], b[1], b[2], b[3]];
        if self.header.big_endian { u32::from_be_bytes(b) } else { u32::from_le_bytes(b) }
    }

    fn next_packet(&mut self) -> Result<Option<RawPacket>, PcapError> {
        let index = self.index;
        let mut rh = [0u8; 16];
        match read_full(&mut self.inner, &mut rh)? {
            0 => return Ok(None),
            16 => {}
            _ => return Err(PcapError::TruncatedRecord { index }),
        }
        let secs = self.u32_of(&rh[0..4]);
        let frac = self.u32_of(&rh[4..8]);
        let caplen = self.u32_of(&rh[8..12]);
        if caplen > MAX_RECORD {
            return Err(PcapError::BadRecordLength { index, length: caplen });
        }
        let mut payload = vec![0u8; caplen as usize];
        if read_full(&mut self.inner, &mut payload)? < payload.len() {
            return Err(PcapError::TruncatedRecord { index });
        }
        self.index += 1;
        let timestamp = if self.header.nanosecond {
            Timestamp::from_nanos_parts(u64::from(secs), frac)
        } else {
            Timestamp::from_parts(u64::from(secs), frac)
        };
        Ok(Some(RawPacket { timestamp, link_type: self.header.link_type, payload }))
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<RawPacket, PcapError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.next_packet().transpose();
        if !matches!(item, Some(Ok(_))) {
            self.done = true;
        }
        item
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PcapFormat {
    pub big_endian: bool,
    pub nanosecond: bool,
    pub link_type: LinkType,
}

impl Default for PcapFormat {
    fn default() -> Self {
        PcapFormat { big_endian: false, nanosecond: false, link_type: LinkType::Ethernet }
    }
}

pub struct PcapWriter<W: Write> {
    inner: W,
    format: PcapFormat,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut inner: W, format: PcapFormat) -> io::Result<Self> {
        let magic = if format.nanosecond { MAGIC_NANOS } else { MAGIC_MICROS };
        let mut h = Vec::with_capacity(24);
        let u16b = |v: u16| if format.big_endian { v.to_be_bytes() } else { v.to_le_bytes() };
        let u32b = |v: u32| if format.big_endian { v.to_be_bytes() } else { v.to_le_bytes() };
        h.extend_from_slice(&u32b(magic));
        h.extend_from_slice(&u16b(2));
        h.extend_from_slice(&u16b(4));
        h.extend_from_slice(&u32b(0));
        h.extend_from_slice(&u32b(0));
        h.extend_from_slice(&u32b(65_535));
        h.extend_from_slice(&u32b(format.link_type.code()));
        inner.write_all(&h)?;
        Ok(PcapWriter { inner, format })
    }

    pub fn write_packet(&mut self, timestamp: Timestamp, data: &[u8]) -> io::Result<()> {
        let len = u32::try_from(data.len())
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "packet too large for pcap"))?;
        let secs = u32::try_from(timestamp.secs())
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "timestamp beyond 32-bit seconds"))?;
        let frac = if self.format.nanosecond { timestamp.subsec_micros() * 1000 } else { timestamp.subsec_micros() };
        for v in [secs, frac, len, len] {
            let b = if self.format.big_endian { v.to_be_bytes() } else { v.to_le_bytes() };
            self.inner.write_all(&b)?;
        }
        self.inner.write_all(data)
    }

    pub fn into_inner(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Writes a whole capture through a temporary file in the target
/// directory, so a failure never leaves a partial file at `path`.
pub fn write_pcap_file<'a, I>(path: &Path, format: PcapFormat, packets: I) -> io::Result<u64>
where
    I: IntoIterator<Item = (Timestamp, &'a [u8])>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    let mut w = PcapWriter::new(BufWriter::new(tmp), format)?;
    let mut count = 0;
    for (ts, data) in packets {
        w.write_packet(ts, data)?;
        count += 1;
    }
    let tmp = w.into_inner()?.into_inner().map_err(|e| e.into_error())?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(format: PcapFormat) {
        let mut w = PcapWriter::new(Vec::new(), format).unwrap();
        w.write_packet(Timestamp::from_parts(1_459_468_800, 123_456), &[1, 2, 3]).unwrap();
        let bytes = w.into_inner().unwrap();
        let mut r = PcapReader::new(bytes.as_slice()).unwrap();
        assert_eq!(r.header().big_endian, format.big_endian);
        assert_eq!(r.header().nanosecond, format.nanosecond);
        let p = r.next().unwrap().unwrap();
        assert_eq!(p.timestamp, Timestamp::from_parts(1_459_468_800, 123_456));
        assert_eq!(p.payload, vec![1, 2, 3]);
        assert!(r.next().is_none());
    }

    #[test]
    fn all_four_variants() {
        for big_endian in [false, true] {
            for nanosecond in [false, true] {
                roundtrip(PcapFormat { big_endian, nanosecond, link_type: LinkType::Ethernet });
            }
        }
    }

    #[test]
    fn nanoseconds_truncate_to_micros() {
        // hand-built nanosecond file: ts 10 s + 999_999_999 ns
        let mut f = Vec::new();
        f.extend_from_slice(&MAGIC_NANOS.to_le_bytes());
        f.extend_from_slice(&[2, 0, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0xff, 0xff, 0, 0, 1, 0, 0, 0]);
        f.extend_from_slice(&10u32.to_le_bytes());
        f.extend_from_slice(&999_999_999u32.to_le_bytes());
        f.extend_from_slice(&1u32.to_le_bytes());
        f.extend_from_slice(&1u32.to_le_bytes());
        f.push(0xaa);
        let p = PcapReader::new(f.as_slice()).unwrap().next().unwrap().unwrap();
        assert_eq!(p.timestamp, Timestamp::from_parts(10, 999_999));
    }

    #[test]
    fn empty_capture_and_garbage() {
        let bytes = PcapWriter::new(Vec::new(), PcapFormat::default()).unwrap().into_inner().unwrap();
        assert_eq!(bytes.len(), 24);
        assert_eq!(PcapReader::new(bytes.as_slice()).unwrap().count(), 0);
        let garbage = [0x13u8, 0x37, 0, 1, 2, 3, 4, 5, 6, 7];
        assert!(matches!(PcapReader::new(&garbage[..]), Err(PcapError::UnsupportedFormat(_))));
    }

    #[test]
    fn unknown_link_type_names_code() {
        let mut bytes = PcapWriter::new(Vec::new(), PcapFormat::default()).unwrap().into_inner().unwrap();
        bytes[20..24].copy_from_slice(&147u32.to_le_bytes());
        assert!(matches!(PcapReader::new(bytes.as_slice()), Err(PcapError::UnsupportedLinkType(147))));
    }

    #[test]
    fn cut_record_is_reported_once() {
        let mut w = PcapWriter::new(Vec::new(), PcapFormat::default()).unwrap();
        w.write_packet(Timestamp::from_parts(1, 0), &[0; 10]).unwrap();
        let mut bytes = w.into_inner().unwrap();
        bytes.truncate(bytes.len() - 3);
        let mut r = PcapReader::new(bytes.as_slice()).unwrap();
        assert!(matches!(r.next(), Some(Err(PcapError::TruncatedRecord { index: 0 }))));
        assert!(r.next().is_none());
    }
}
