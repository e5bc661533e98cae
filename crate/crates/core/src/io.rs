//! Signal files: CSV, 16-bit PGM and a small little-endian binary format.
//!
//! Binary layout: `b"MRSC"`, version `u32`, ndim `u32`, one `u32` per
//! dimension, then the values as `f64`, all little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::{Shape, Signal};

pub const BINARY_MAGIC: &[u8; 4] = b"MRSC";
pub const BINARY_VERSION: u32 = 1;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// One value per line for 1D, comma-separated rows for 2D.
pub fn signal_to_csv(s: &Signal) -> String {
    let mut out = String::with_capacity(s.len() * 12);
    match s.shape().dims() {
        [_] => {
            for v in s.values() {
                out.push_str(&format!("{v}\n"));
            }
        }
        _ => {
            let (_, cols) = s.shape().rows_cols();
            for row in s.values().chunks(cols) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                out.push_str(&line.join(","));
                out.push('\n');
            }
        }
    }
    out
}

/// Parses CSV text. A single column is read as 1D; anything wider as 2D.
pub fn signal_from_csv(text: &str, origin: &Path) -> Result<Signal> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(origin, e.to_string()))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(Error::parse(
                    origin,
                    format!("row {} has {} fields, expected {c}", line + 1, rec.len()),
                ))
            }
            _ => {}
        }
        for f in rec.iter() {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(origin, format!("row {}: `{f}` is not a number", line + 1)))?;
            values.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::parse(origin, "no values"))?;
    let shape = if cols == 1 { Shape::d1(rows) } else { Shape::d2(rows, cols) };
    Signal::new(values, shape).map_err(|e| Error::parse(origin, e.to_string()))
}

pub fn write_csv(path: &Path, s: &Signal) -> Result<()> {
    write_bytes(path, signal_to_csv(s).as_bytes())
}

pub fn read_csv(path: &Path) -> Result<Signal> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::parse(path, "not UTF-8"))?;
    signal_from_csv(&text, path)
}

pub fn encode_binary(s: &Signal) -> Vec<u8> {
    let dims = s.shape().dims();
    let mut out = Vec::with_capacity(12 + 4 * dims.len() + 8 * s.len());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in s.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8], origin: &Path) -> Result<Signal> {
    let bad = |m: &str| Error::parse(origin, m.to_string());
    let u32_at = |off: usize| -> Result<u32> {
        bytes
            .get(off..off + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| bad("truncated header"))
    };
    if bytes.len() < 12 || &bytes[..4] != BINARY_MAGIC {
        return Err(bad("missing MRSC magic"));
    }
    let version = u32_at(4)?;
    if version != BINARY_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let ndim = u32_at(8)? as usize;
    if !(1..=2).contains(&ndim) {
        return Err(bad(&format!("unsupported ndim {ndim}")));
    }
    let dims: Vec<usize> = (0..ndim).map(|i| u32_at(12 + 4 * i).map(|d| d as usize)).collect::<Result<_>>()?;
    let shape = Shape::new(&dims).map_err(|e| bad(&e.to_string()))?;
    let start = 12 + 4 * ndim;
    let body = &bytes[start..];
    if body.len() != 8 * shape.len() {
        return Err(bad(&format!("expected {} values, found {} bytes", shape.len(), body.len())));
    }
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Signal::new(values, shape).map_err(|e| bad(&e.to_string()))
}

pub fn write_binary(path: &Path, s: &Signal) -> Result<()> {
    write_bytes(path, &encode_binary(s))
}

pub fn read_binary(path: &Path) -> Result<Signal> {
    decode_binary(&read_bytes(path)?, path)
}

/// Affine intensity map used for a PGM: `min → 0`, `max → 65535`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgmMapping {
    pub min: f64,
    pub max: f64,
}

impl PgmMapping {
    pub fn of(s: &Signal) -> Self {
        let (min, max) = s
            .values()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        PgmMapping { min, max }
    }

    pub fn level(&self, v: f64) -> u16 {
        if self.max > self.min {
            ((v - self.min) / (self.max - self.min) * 65535.0).round().clamp(0.0, 65535.0) as u16
        } else {
            0
        }
    }
}

/// 16-bit binary PGM. 1D signals are written as a single row.
pub fn encode_pgm(s: &Signal) -> (Vec<u8>, PgmMapping) {
    let (h, w) = s.shape().rows_cols();
    let map = PgmMapping::of(s);
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    for &v in s.values() {
        out.extend_from_slice(&map.level(v).to_be_bytes());
    }
    (out, map)
}

pub fn write_pgm(path: &Path, s: &Signal) -> Result<PgmMapping> {
    let (bytes, map) = encode_pgm(s);
    write_bytes(path, &bytes)?;
    Ok(map)
}

/// Reads binary (P5) or ASCII (P2) PGM; values are raw gray levels.
pub fn decode_pgm(bytes: &[u8], origin: &Path) -> Result<Signal> {
    let bad = |m: String| Error::parse(origin, m);
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(origin, "truncated PGM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let num = |t: String| t.parse::<usize>().map_err(|_| Error::parse(origin, format!("bad header field `{t}`")));
    let w = num(token()?)?;
    let h = num(token()?)?;
    let maxval = num(token()?)?;
    if !(1..=65535).contains(&maxval) {
        return Err(bad(format!("maxval {maxval} out of range")));
    }
    let shape = Shape::new(&[h, w]).map_err(|e| bad(e.to_string()))?;
    let values: Vec<f64> = match magic.as_str() {
        "P5" => {
            let body = &bytes[pos + 1..];
            let bpp = if maxval > 255 { 2 } else { 1 };
            if body.len() < bpp * shape.len() {
                return Err(bad("truncated PGM data".into()));
            }
            body.chunks_exact(bpp)
                .take(shape.len())
                .map(|c| if bpp == 2 { u16::from_be_bytes([c[0], c[1]]) as f64 } else { c[0] as f64 })
                .collect()
        }
        "P2" => {
            let text = String::from_utf8_lossy(&bytes[pos..]);
            let vals: std::result::Result<Vec<f64>, _> = text.split_ascii_whitespace().map(|t| t.parse::<f64>()).collect();
            let vals = vals.map_err(|_| bad("bad ASCII PGM value".into()))?;
            if vals.len() != shape.len() {
                return Err(bad(format!("expected {} values, found {}", shape.len(), vals.len())));
            }
            vals
        }
        other => return Err(bad(format!("unsupported PGM magic `{other}`"))),
    };
    Signal::new(values, shape).map_err(|e| bad(e.to_string()))
}

pub fn read_pgm(path: &Path) -> Result<Signal> {
    decode_pgm(&read_bytes(path)?, path)
}

/// Dispatches on the extension: `.csv`, `.f64`/`.bin`, `.pgm`.
pub fn read_signal(path: &Path) -> Result<Signal> {
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
        Some("csv") | Some("txt") => read_csv(path),
        Some("f64") | Some("bin") => read_binary(path),
        Some("pgm") => read_pgm(path),
        _ => Err(Error::parse(path, "unknown signal file extension (expected .csv, .f64 or .pgm)")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn here() -> &'static Path {
        Path::new("<memory>")
    }

    #[test]
    fn csv_layouts() {
        let s = Signal::from_vec(vec![1.0, -0.5, 3.25e-7]).unwrap();
        assert_eq!(signal_to_csv(&s), "1\n-0.5\n0.000000325\n");
        let m = Signal::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], Shape::d2(2, 3)).unwrap();
        assert_eq!(signal_to_csv(&m), "1,2,3\n4,5,6\n");
        assert_eq!(signal_from_csv("1,2,3\n4,5,6\n", here()).unwrap(), m);
        assert!(signal_from_csv("1,2\n3\n", here()).is_err());
        assert!(signal_from_csv("1\nfoo\n", here()).is_err());
        assert!(signal_from_csv("", here()).is_err());
    }

    #[test]
    fn binary_header_layout() {
        let s = Signal::from_vec(vec![1.5, -2.0]).unwrap();
        let b = encode_binary(&s);
        assert_eq!(&b[..4], b"MRSC");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 2);
        assert_eq!(b.len(), 16 + 16);
        assert_eq!(f64::from_le_bytes(b[16..24].try_into().unwrap()), 1.5);
        let m = Signal::new(vec![0.0; 6], Shape::d2(2, 3)).unwrap();
        assert_eq!(encode_binary(&m).len(), 20 + 48);
        let mut broken = b.clone();
        broken[0] = b'X';
        assert!(decode_binary(&broken, here()).is_err());
        assert!(decode_binary(&b[..20], here()).is_err());
    }

    #[test]
    fn pgm_mapping_and_header() {
        let s = Signal::new(vec![-1.0, 0.0, 1.0, 0.5], Shape::d2(2, 2)).unwrap();
        let (bytes, map) = encode_pgm(&s);
        assert!(bytes.starts_with(b"P5\n2 2\n65535\n"));
        assert_eq!(map, PgmMapping { min: -1.0, max: 1.0 });
        let back = decode_pgm(&bytes, here()).unwrap();
        assert_eq!(back.values(), &[0.0, 32768.0, 65535.0, 49151.0]);
        let flat = Signal::new(vec![2.0; 4], Shape::d2(2, 2)).unwrap();
        assert!(encode_pgm(&flat).0.ends_with(&[0, 0, 0, 0, 0, 0, 0, 0]));
        let ascii = b"P2\n# comment\n3 1\n255\n0 128 255\n";
        assert_eq!(decode_pgm(ascii, here()).unwrap().values(), &[0.0, 128.0, 255.0]);
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = Signal::new((0..12).map(|i| (i as f64).sqrt()).collect(), Shape::d2(3, 4)).unwrap();
        for name in ["a.csv", "a.f64"] {
            let p = dir.path().join(name);
            if name.ends_with("csv") {
                write_csv(&p, &s).unwrap();
            } else {
                write_binary(&p, &s).unwrap();
            }
            assert_eq!(read_signal(&p).unwrap(), s);
        }
        let missing = dir.path().join("nope.csv");
        assert!(matches!(read_signal(&missing), Err(Error::Io { .. })));
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(v in proptest::collection::vec(-1e6f64..1e6, 1..50)) {
            let s = Signal::from_vec(v).unwrap();
            let text = signal_to_csv(&s);
            let back = signal_from_csv(&text, here()).unwrap();
            prop_assert_eq!(&back, &s);
            prop_assert_eq!(signal_to_csv(&back), text);
        }

        #[test]
        fn binary_round_trip_is_exact(v in proptest::collection::vec(-1e300f64..1e300, 1..50)) {
            let s = Signal::from_vec(v).unwrap();
            prop_assert_eq!(decode_binary(&encode_binary(&s), here()).unwrap(), s);
        }
    }
}
