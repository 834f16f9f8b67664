//! File formats: PGM masks and probability maps, point-cloud CSV
//! (`x,y`) and diagram CSV (`degree,birth,death`).
//!
//! Floats are written with 17 significant digits in the style of C's
//! `%.17g`, which round-trips every finite `f64` bit-exactly while still
//! printing integers without a fractional part.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{BinaryMask, Point2, PointCloud};
use crate::rips::{PersistenceDiagram, PersistencePair};
use crate::toploss::ProbabilityMap;

/// Raw grey levels read from a PGM file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

impl GrayImage {
    /// Foreground where the grey level is at least 128 (on the 8-bit scale).
    pub fn to_mask(&self) -> Result<BinaryMask> {
        let data = self
            .pixels
            .iter()
            .map(|&v| {
                let eight_bit = if self.maxval > 255 {
                    (u32::from(v) * 255 / u32::from(self.maxval)) as u16
                } else {
                    v
                };
                u8::from(eight_bit >= 128)
            })
            .collect();
        BinaryMask::new(self.width, self.height, data)
    }

    /// Grey level divided by `maxval`: 8-bit files scale by 1/255, 16-bit
    /// files by 1/65535.
    pub fn to_probability_map(&self) -> Result<ProbabilityMap> {
        let max = f64::from(self.maxval);
        let probs = self.pixels.iter().map(|&v| f64::from(v) / max).collect();
        ProbabilityMap::new(self.width, self.height, probs)
    }
}

fn parse_err(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        offset: offset as u64,
        message: message.into(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(parse_err(self.path, start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(self.path, start, format!("{what} out of range")))
    }
}

/// Parses a binary (P5) or ASCII (P2) PGM with maxval up to 65535.
pub fn parse_pgm(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    if bytes.len() < 2 || bytes[0] != b'P' || !matches!(bytes[1], b'2' | b'5') {
        return Err(parse_err(
            path,
            0,
            "not a PGM file (expected magic P2 or P5)",
        ));
    }
    let binary = bytes[1] == b'5';
    let mut cur = HeaderCursor {
        bytes,
        pos: 2,
        path,
    };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(parse_err(path, 2, "image dimensions must be positive"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(parse_err(
            path,
            maxval_at,
            format!("maxval {maxval} outside 1..=65535"),
        ));
    }
    let count = width * height;
    let mut pixels = Vec::with_capacity(count);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(parse_err(path, cur.pos, "missing whitespace after header"));
        }
        let start = cur.pos + 1;
        let sample = if maxval > 255 { 2 } else { 1 };
        let needed = count * sample;
        if bytes.len() - start < needed {
            return Err(parse_err(
                path,
                bytes.len(),
                format!(
                    "raster truncated: expected {needed} bytes, found {}",
                    bytes.len() - start
                ),
            ));
        }
        for i in 0..count {
            let at = start + i * sample;
            let v = if sample == 2 {
                u16::from_be_bytes([bytes[at], bytes[at + 1]])
            } else {
                u16::from(bytes[at])
            };
            if u32::from(v) > maxval {
                return Err(parse_err(
                    path,
                    at,
                    format!("sample {v} exceeds maxval {maxval}"),
                ));
            }
            pixels.push(v);
        }
    } else {
        for _ in 0..count {
            cur.skip_whitespace_and_comments();
            let at = cur.pos;
            let v = cur.number("pixel value")?;
            if v > maxval {
                return Err(parse_err(
                    path,
                    at,
                    format!("sample {v} exceeds maxval {maxval}"),
                ));
            }
            pixels.push(v as u16);
        }
    }
    Ok(GrayImage {
        width,
        height,
        maxval: maxval as u16,
        pixels,
    })
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    parse_pgm(&bytes, path)
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    read_pgm(path)?.to_mask()
}

/// Binary PGM with foreground 255 and background 0.
pub fn encode_mask_pgm(mask: &BinaryMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.data().iter().map(|&v| v * 255));
    out
}

/// 16-bit binary PGM with each probability scaled by 65535 and rounded.
pub fn encode_probability_pgm(map: &ProbabilityMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", map.width(), map.height()).into_bytes();
    for &p in map.probs() {
        let v = (p * 65535.0).round() as u16;
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Formats like C's `%.17g`: 17 significant digits, trailing zeros removed,
/// exponent form outside `1e-4 <= |x| < 1e17`. Non-finite values become
/// `inf`, `-inf` and `nan`.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (16 - exp).max(0) as usize;
    trim_fraction(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn parse_float(field: &str) -> Option<f64> {
    match field.trim() {
        "inf" | "+inf" | "Inf" | "infinity" => Some(f64::INFINITY),
        other => other.parse().ok(),
    }
}

fn csv_reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes)
}

fn check_header(reader: &mut csv::Reader<&[u8]>, expected: &[&str], path: &Path) -> Result<()> {
    let header = reader
        .headers()
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        return Err(parse_err(
            path,
            0,
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                found.join(",")
            ),
        ));
    }
    Ok(())
}

fn record_offset(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.byte() as usize)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| io_err(path, e))
}

pub fn parse_cloud_csv(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    let mut reader = csv_reader(bytes);
    check_header(&mut reader, &["x", "y"], path)?;
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let offset = e.position().map_or(0, |p| p.byte() as usize);
            parse_err(path, offset, e.to_string())
        })?;
        let at = record_offset(&record);
        let x = record.get(0).and_then(parse_float);
        let y = record.get(1).and_then(parse_float);
        match (x, y) {
            (Some(x), Some(y)) if x.is_finite() && y.is_finite() => points.push(Point2 { x, y }),
            _ => return Err(parse_err(path, at, "expected two finite numbers `x,y`")),
        }
    }
    PointCloud::new(points)
}

pub fn read_cloud_csv(path: &Path) -> Result<PointCloud> {
    parse_cloud_csv(&read_file(path)?, path)
}

pub fn encode_cloud_csv(cloud: &PointCloud) -> String {
    let mut out = String::from("x,y\n");
    for p in cloud.points() {
        out.push_str(&format!("{},{}\n", format_float(p.x), format_float(p.y)));
    }
    out
}

/// Reads every row of a diagram CSV, grouped by degree (index 0 and 1).
pub fn parse_diagram_csv(bytes: &[u8], path: &Path) -> Result<[Vec<PersistencePair>; 2]> {
    let mut reader = csv_reader(bytes);
    check_header(&mut reader, &["degree", "birth", "death"], path)?;
    let mut by_degree: [Vec<PersistencePair>; 2] = [Vec::new(), Vec::new()];
    for record in reader.records() {
        let record = record.map_err(|e| {
            let offset = e.position().map_or(0, |p| p.byte() as usize);
            parse_err(path, offset, e.to_string())
        })?;
        let at = record_offset(&record);
        let degree = match record.get(0) {
            Some("0") => 0,
            Some("1") => 1,
            _ => return Err(parse_err(path, at, "degree must be 0 or 1")),
        };
        let birth = record.get(1).and_then(parse_float);
        let death = record.get(2).and_then(parse_float);
        let (Some(birth), Some(death)) = (birth, death) else {
            return Err(parse_err(path, at, "expected numeric birth and death"));
        };
        let pair =
            PersistencePair::new(birth, death).map_err(|e| parse_err(path, at, e.to_string()))?;
        by_degree[degree].push(pair);
    }
    Ok(by_degree)
}

/// Reads a diagram CSV holding a single degree, or selects `degree` from a
/// file holding both.
pub fn read_diagram_csv(path: &Path, degree: Option<u8>) -> Result<PersistenceDiagram> {
    let [h0, h1] = parse_diagram_csv(&read_file(path)?, path)?;
    let pick = match degree {
        Some(d) if d <= 1 => d,
        Some(d) => {
            return Err(Error::InvalidConfig(format!(
                "degree must be 0 or 1, got {d}"
            )))
        }
        None if !h0.is_empty() && !h1.is_empty() => {
            return Err(parse_err(
                path,
                0,
                "file holds both degrees; select one explicitly",
            ))
        }
        None if !h1.is_empty() => 1,
        None => 0,
    };
    let pairs = if pick == 0 { h0 } else { h1 };
    PersistenceDiagram::new(pick, pairs)
}

pub fn encode_diagram_csv(diagrams: &[&PersistenceDiagram]) -> String {
    let mut out = String::from("degree,birth,death\n");
    for d in diagrams {
        for p in d.pairs() {
            out.push_str(&format!(
                "{},{},{}\n",
                d.degree(),
                format_float(p.birth),
                format_float(p.death)
            ));
        }
    }
    out
}

/// Path helper used in diagnostics for in-memory inputs.
pub fn memory_path() -> PathBuf {
    PathBuf::from("<memory>")
}
