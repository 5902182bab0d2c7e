//! Binary cube (RDC1) and map (RAM1) files, JSON helpers and PGM export.
//!
//! All binary fields are little-endian.
//!
//! RDC1 header, 62 bytes:
//!
//! | offset | field       | type     |
//! |--------|-------------|----------|
//! | 0      | magic       | `RDC1`   |
//! | 4      | version     | u16 (1)  |
//! | 6      | n_rx        | u32      |
//! | 10     | n_chirps    | u32      |
//! | 14     | n_fast      | u32      |
//! | 18     | frame_index | u32      |
//! | 22     | pri (s)     | f64      |
//! | 30     | params hash | 32 bytes |
//!
//! followed by `n_rx * n_chirps * n_fast` interleaved f32 (re, im) pairs in
//! (rx, chirp, fast) order.
//!
//! RAM1 header, 47 bytes:
//!
//! | offset | field   | type                         |
//! |--------|---------|------------------------------|
//! | 0      | magic   | `RAM1`                       |
//! | 4      | version | u16 (1)                      |
//! | 6      | kind    | u8 (0 polar, 1 Cartesian)    |
//! | 7      | dims    | u32 x 2                      |
//! | 15     | axis 0  | f64 origin, f64 step         |
//! | 31     | axis 1  | f64 origin, f64 step         |
//!
//! followed by `dim0 * dim1` f32 dB values, dim0-major.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::angle::{MapAxis, MapKind, RangeAzimuthMap, MAP_FLOOR_DB};
use crate::error::{RadarError, Result};
use crate::sim::DataCube;

pub const CUBE_MAGIC: [u8; 4] = *b"RDC1";
pub const MAP_MAGIC: [u8; 4] = *b"RAM1";
pub const FORMAT_VERSION: u16 = 1;
pub const CUBE_HEADER_LEN: usize = 62;
pub const MAP_HEADER_LEN: usize = 47;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubeFileHeader {
    pub version: u16,
    pub n_rx: u32,
    pub n_chirps: u32,
    pub n_fast: u32,
    pub frame_index: u32,
    pub pri: f64,
    pub params_digest: [u8; 32],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapFileHeader {
    pub version: u16,
    pub kind: MapKind,
    pub dims: (u32, u32),
    pub axis0: (f64, f64),
    pub axis1: (f64, f64),
}

/// Sequential little-endian reader that reports absolute offsets.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(RadarError::Truncated {
                offset: self.bytes.len() as u64,
                needed: (n - available) as u64,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let offset = self.pos as u64;
        let mut found = [0u8; 4];
        let got = &self.bytes[self.pos..self.bytes.len().min(self.pos + 4)];
        found[..got.len()].copy_from_slice(got);
        if got.len() == 4 && found != expected || got.len() < 4 && got != &expected[..got.len()] {
            return Err(RadarError::BadMagic {
                offset,
                expected,
                found,
            });
        }
        self.take(4)?;
        Ok(())
    }

    fn version(&mut self) -> Result<u16> {
        let offset = self.pos as u64;
        let version = self.u16()?;
        if version != FORMAT_VERSION {
            return Err(RadarError::UnsupportedVersion { offset, version });
        }
        Ok(version)
    }

    fn dim(&mut self, name: &str) -> Result<u32> {
        let offset = self.pos as u64;
        let v = self.u32()?;
        if v == 0 {
            return Err(RadarError::MalformedHeader {
                offset,
                reason: format!("{name} must be positive"),
            });
        }
        Ok(v)
    }
}

fn payload_len(dims: &[u32], bytes_per_item: u64, offset: u64) -> Result<usize> {
    dims.iter()
        .try_fold(bytes_per_item, |acc, &d| acc.checked_mul(d as u64))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| RadarError::MalformedHeader {
            offset,
            reason: "payload size overflows".into(),
        })
}

pub fn encode_cube(cube: &DataCube, params_digest: &[u8; 32]) -> Result<Vec<u8>> {
    let (n_rx, n_chirps, n_fast) = cube.samples.dim();
    let dim = |n: usize, name: &str| {
        u32::try_from(n)
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| RadarError::invalid(format!("{name} = {n} cannot be stored")))
    };
    let mut out = Vec::with_capacity(CUBE_HEADER_LEN + cube.samples.len() * 8);
    out.extend_from_slice(&CUBE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&dim(n_rx, "n_rx")?.to_le_bytes());
    out.extend_from_slice(&dim(n_chirps, "n_chirps")?.to_le_bytes());
    out.extend_from_slice(&dim(n_fast, "n_fast")?.to_le_bytes());
    out.extend_from_slice(&cube.frame_index.to_le_bytes());
    out.extend_from_slice(&cube.slot_interval.to_le_bytes());
    out.extend_from_slice(params_digest);
    for v in cube.samples.iter() {
        out.extend_from_slice(&(v.re as f32).to_le_bytes());
        out.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_cube(bytes: &[u8]) -> Result<(CubeFileHeader, DataCube)> {
    let mut r = Reader { bytes, pos: 0 };
    r.magic(CUBE_MAGIC)?;
    let version = r.version()?;
    let n_rx = r.dim("n_rx")?;
    let n_chirps = r.dim("n_chirps")?;
    let n_fast = r.dim("n_fast")?;
    let frame_index = r.u32()?;
    let pri_offset = r.pos as u64;
    let pri = r.f64()?;
    if !(pri > 0.0) || !pri.is_finite() {
        return Err(RadarError::MalformedHeader {
            offset: pri_offset,
            reason: format!("pri must be positive, found {pri}"),
        });
    }
    let params_digest: [u8; 32] = r.take(32)?.try_into().unwrap();
    let len = payload_len(&[n_rx, n_chirps, n_fast], 8, 6)?;
    let payload = r.take(len)?;
    if r.pos != bytes.len() {
        return Err(RadarError::MalformedHeader {
            offset: r.pos as u64,
            reason: format!("{} trailing bytes after payload", bytes.len() - r.pos),
        });
    }
    let values: Vec<Complex64> = payload
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[..4].try_into().unwrap());
            let im = f32::from_le_bytes(c[4..].try_into().unwrap());
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    let samples =
        Array3::from_shape_vec((n_rx as usize, n_chirps as usize, n_fast as usize), values)
            .expect("payload length matches header");
    let header = CubeFileHeader {
        version,
        n_rx,
        n_chirps,
        n_fast,
        frame_index,
        pri,
        params_digest,
    };
    Ok((
        header,
        DataCube {
            samples,
            frame_index,
            slot_interval: pri,
        },
    ))
}

pub fn write_cube(cube: &DataCube, params_digest: &[u8; 32], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, &encode_cube(cube, params_digest)?)
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<(CubeFileHeader, DataCube)> {
    let path = path.as_ref();
    decode_cube(&fs::read(path).map_err(|e| RadarError::io(path, e))?)
}

/// The cube exactly as it reads back from an RDC1 file (samples rounded to f32).
pub fn quantize_cube(cube: &DataCube) -> DataCube {
    DataCube {
        samples: cube
            .samples
            .mapv(|v| Complex64::new(v.re as f32 as f64, v.im as f32 as f64)),
        ..cube.clone()
    }
}

pub fn encode_map(map: &RangeAzimuthMap) -> Result<Vec<u8>> {
    let (n0, n1) = map.power_db.dim();
    let dim = |n: usize| {
        u32::try_from(n)
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| RadarError::invalid(format!("map dimension {n} cannot be stored")))
    };
    let mut out = Vec::with_capacity(MAP_HEADER_LEN + n0 * n1 * 4);
    out.extend_from_slice(&MAP_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(match map.kind {
        MapKind::Polar => 0,
        MapKind::Cartesian => 1,
    });
    out.extend_from_slice(&dim(n0)?.to_le_bytes());
    out.extend_from_slice(&dim(n1)?.to_le_bytes());
    for v in [
        map.axis0.origin,
        map.axis0.step,
        map.axis1.origin,
        map.axis1.step,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in map.power_db.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_map(bytes: &[u8]) -> Result<(MapFileHeader, RangeAzimuthMap)> {
    let mut r = Reader { bytes, pos: 0 };
    r.magic(MAP_MAGIC)?;
    let version = r.version()?;
    let kind_offset = r.pos as u64;
    let kind = match r.u8()? {
        0 => MapKind::Polar,
        1 => MapKind::Cartesian,
        k => {
            return Err(RadarError::MalformedHeader {
                offset: kind_offset,
                reason: format!("unknown map kind {k}"),
            })
        }
    };
    let n0 = r.dim("dim0")?;
    let n1 = r.dim("dim1")?;
    let mut axes = [0.0; 4];
    for (i, a) in axes.iter_mut().enumerate() {
        let offset = r.pos as u64;
        *a = r.f64()?;
        if !a.is_finite() || (i % 2 == 1 && *a <= 0.0) {
            return Err(RadarError::MalformedHeader {
                offset,
                reason: format!("axis field {a} is not a finite origin / positive step"),
            });
        }
    }
    let len = payload_len(&[n0, n1], 4, 7)?;
    let payload = r.take(len)?;
    if r.pos != bytes.len() {
        return Err(RadarError::MalformedHeader {
            offset: r.pos as u64,
            reason: format!("{} trailing bytes after payload", bytes.len() - r.pos),
        });
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let power_db = Array2::from_shape_vec((n0 as usize, n1 as usize), values)
        .expect("payload length matches header");
    let header = MapFileHeader {
        version,
        kind,
        dims: (n0, n1),
        axis0: (axes[0], axes[1]),
        axis1: (axes[2], axes[3]),
    };
    Ok((
        header,
        RangeAzimuthMap {
            kind,
            power_db,
            axis0: MapAxis {
                origin: axes[0],
                step: axes[1],
                len: n0 as usize,
            },
            axis1: MapAxis {
                origin: axes[2],
                step: axes[3],
                len: n1 as usize,
            },
        },
    ))
}

pub fn write_map(map: &RangeAzimuthMap, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_map(map)?)
}

pub fn read_map(path: impl AsRef<Path>) -> Result<(MapFileHeader, RangeAzimuthMap)> {
    let path = path.as_ref();
    decode_map(&fs::read(path).map_err(|e| RadarError::io(path, e))?)
}

/// Binary 16-bit PGM. Columns follow dim0, rows follow dim1 with the
/// largest dim1 value on the top row. dB values are clipped to
/// [floor_db, peak] and scaled to the full 16-bit range.
pub fn encode_pgm(map: &RangeAzimuthMap, floor_db: f64) -> Vec<u8> {
    let (n0, n1) = map.power_db.dim();
    let peak = map.peak_db();
    let span = peak - floor_db;
    let mut out = format!("P5\n{n0} {n1}\n65535\n").into_bytes();
    out.reserve(n0 * n1 * 2);
    for row in (0..n1).rev() {
        for col in 0..n0 {
            let v = map.power_db[[col, row]];
            let level = if span > 0.0 {
                ((v.clamp(floor_db, peak) - floor_db) / span * 65535.0).round() as u16
            } else {
                0
            };
            out.extend_from_slice(&level.to_be_bytes());
        }
    }
    out
}

pub fn export_pgm(
    map: &RangeAzimuthMap,
    path: impl AsRef<Path>,
    floor_db: Option<f64>,
) -> Result<()> {
    write_bytes(
        path.as_ref(),
        &encode_pgm(map, floor_db.unwrap_or(MAP_FLOOR_DB)),
    )
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| RadarError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).map_err(|e| RadarError::io(path, e))?;
    w.flush().map_err(|e| RadarError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read(path).map_err(|e| RadarError::io(path, e))?;
    serde_json::from_slice(&text).map_err(|source| RadarError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_vec_pretty(value).map_err(|source| RadarError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push(b'\n');
    write_bytes(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::RadarParams;

    fn sample_cube(n_rx: usize, n_chirps: usize, n_fast: usize) -> DataCube {
        DataCube {
            samples: Array3::from_shape_fn((n_rx, n_chirps, n_fast), |(a, b, c)| {
                Complex64::new(a as f64 + 0.25 * b as f64, -(c as f64) / 3.0)
            }),
            frame_index: 1,
            slot_interval: 27.2e-6,
        }
    }

    fn sample_map() -> RangeAzimuthMap {
        RangeAzimuthMap {
            kind: MapKind::Cartesian,
            power_db: Array2::from_shape_fn((5, 3), |(i, j)| i as f64 * 1.5 - j as f64),
            axis0: MapAxis {
                origin: -1.0,
                step: 0.5,
                len: 5,
            },
            axis1: MapAxis {
                origin: 0.15,
                step: 0.3,
                len: 3,
            },
        }
    }

    #[test]
    fn cube_round_trip_is_bit_identical() {
        let cube = quantize_cube(&sample_cube(2, 6, 4));
        let digest = RadarParams::default().digest();
        let bytes = encode_cube(&cube, &digest).unwrap();
        assert_eq!(bytes.len(), CUBE_HEADER_LEN + 2 * 6 * 4 * 8);
        let (header, back) = decode_cube(&bytes).unwrap();
        assert_eq!(back, cube);
        assert_eq!(header.params_digest, digest);
        assert_eq!(header.pri, 27.2e-6);
        assert_eq!(encode_cube(&back, &digest).unwrap(), bytes);
    }

    #[test]
    fn cube_file_size_for_full_frame() {
        let len = payload_len(&[16, 1152, 512], 8, 0).unwrap();
        assert_eq!(len, 16 * 1152 * 512 * 8);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.rdc");
        let cube = DataCube {
            samples: Array3::zeros((16, 1152, 512)),
            frame_index: 0,
            slot_interval: 21e-6,
        };
        write_cube(&cube, &[0; 32], &path).unwrap();
        assert_eq!(
            fs::metadata(&path).unwrap().len() as usize,
            CUBE_HEADER_LEN + len
        );
    }

    #[test]
    fn cube_parse_errors_name_offsets() {
        let bytes = encode_cube(&sample_cube(1, 2, 2), &[7; 32]).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_cube(&bad),
            Err(RadarError::BadMagic { offset: 0, .. })
        ));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            decode_cube(&bad),
            Err(RadarError::UnsupportedVersion {
                offset: 4,
                version: 9
            })
        ));

        let mut bad = bytes.clone();
        bad[10..14].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(
            decode_cube(&bad),
            Err(RadarError::MalformedHeader { offset: 10, .. })
        ));

        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(
            decode_cube(cut),
            Err(RadarError::Truncated { needed: 3, .. })
        ));
        assert!(matches!(
            decode_cube(&bytes[..20]),
            Err(RadarError::Truncated { offset: 20, .. })
        ));
        assert!(matches!(
            decode_cube(b"RD"),
            Err(RadarError::Truncated { .. })
        ));
        assert!(matches!(
            decode_cube(b"XY"),
            Err(RadarError::BadMagic { .. })
        ));

        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            decode_cube(&long),
            Err(RadarError::MalformedHeader { .. })
        ));
    }

    #[test]
    fn map_round_trip() {
        let map = sample_map();
        let bytes = encode_map(&map).unwrap();
        assert_eq!(bytes.len(), MAP_HEADER_LEN + 15 * 4);
        let (header, back) = decode_map(&bytes).unwrap();
        assert_eq!(header.kind, MapKind::Cartesian);
        assert_eq!(header.dims, (5, 3));
        assert_eq!(back, map);
        assert_eq!(encode_map(&back).unwrap(), bytes);

        let mut bad = bytes.clone();
        bad[6] = 4;
        assert!(matches!(
            decode_map(&bad),
            Err(RadarError::MalformedHeader { offset: 6, .. })
        ));
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"RDC1");
        assert!(matches!(decode_map(&bad), Err(RadarError::BadMagic { .. })));
    }

    #[test]
    fn pgm_peak_pixel_at_peak_cell() {
        let mut map = sample_map();
        map.power_db.fill(-50.0);
        map.power_db[[3, 1]] = 10.0;
        let pgm = encode_pgm(&map, MAP_FLOOR_DB);
        let header = b"P5\n5 3\n65535\n";
        assert_eq!(&pgm[..header.len()], header);
        let pixels: Vec<u16> = pgm[header.len()..]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect();
        assert_eq!(pixels.len(), 15);
        let brightest = pixels.iter().enumerate().max_by_key(|(_, &v)| v).unwrap().0;
        // Row 0 is the largest dim1 index.
        let (row, col) = (brightest / 5, brightest % 5);
        assert_eq!((col, 2 - row), (3, 1));
        assert_eq!(pixels[brightest], 65535);
    }

    #[test]
    fn json_errors_carry_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        fs::write(&path, "{not json").unwrap();
        let err = read_json::<RadarParams>(&path).unwrap_err();
        assert!(matches!(err, RadarError::Json { .. }));
        assert!(err.to_string().contains("p.json"));
        assert!(matches!(
            read_json::<RadarParams>(dir.path().join("missing.json")),
            Err(RadarError::Io { .. })
        ));
        write_json(&RadarParams::default(), &path).unwrap();
        assert_eq!(
            read_json::<RadarParams>(&path).unwrap(),
            RadarParams::default()
        );
    }
}
