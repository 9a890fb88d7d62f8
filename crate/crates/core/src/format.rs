//! Binary network container.
//!
//! Layout, all integers and reals little-endian:
//!
//! ```text
//! "ACNN"  u32 version
//! config      f64 K, u8 flags (bit0 pooling, bit1 image channels),
//!             f64 thin value, u32 thin distance, u32 kernel size, u32 scan step
//! provenance  u32 n, n × u32 exemplar index, u64 built_at, f64 build seconds
//! counts      u32 layer-1 kernels, u32 layer-2 kernels, u32 classes,
//!             u32 final rows, u32 final cols
//! layer 1     per kernel: u32 row, u32 col, i32 owner (-1 merged), f64 bias, 25 × f64
//! layer 2     per kernel: u32 row, u32 col, i32 owner, f64 bias, C × 25 × f64
//! head        per ordered pair: u32 n1, u32 n2, f64 threshold, L2 × rows × cols × f64
//!             i32 second-layer threshold, classes × pairs × u8
//! u32 CRC-32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use crate::conv_builder::{BuildConfig, ConvKernel, MultiKernel, SCAN_STEP};
use crate::error::{FormatError, Result};
use crate::feature_scan::{FeaturePoint, Owner, KERNEL_SIZE};
use crate::grid::Grid;
use crate::metric_head::{ordered_pairs, FirstLayer, MetricHead, SecondLayer};
use crate::network::{AnalyticNetwork, Provenance};

pub const MAGIC: [u8; 4] = *b"ACNN";
pub const VERSION: u32 = 1;
const TAPS: usize = KERNEL_SIZE * KERNEL_SIZE;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }
    fn usize(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("count fits in u32"));
    }
    fn point(&mut self, p: &FeaturePoint) {
        self.usize(p.row);
        self.usize(p.col);
        self.i32(match p.owner {
            Owner::Exemplar(e) => e as i32,
            Owner::Merged => -1,
        });
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> FormatError {
    FormatError::Corrupt(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| corrupt(format!("unexpected end of data at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn i32(&mut self) -> Result<i32, FormatError> {
        Ok(i32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn usize(&mut self) -> Result<usize, FormatError> {
        self.u32().map(|v| v as usize)
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| corrupt("length overflow"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
    fn point(&mut self) -> Result<FeaturePoint, FormatError> {
        let row = self.usize()?;
        let col = self.usize()?;
        let owner = match self.i32()? {
            -1 => Owner::Merged,
            e if e >= 0 => Owner::Exemplar(e as usize),
            e => return Err(corrupt(format!("bad owner {e}"))),
        };
        Ok(FeaturePoint { row, col, owner })
    }
}

pub fn to_bytes(net: &AnalyticNetwork) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(&MAGIC);
    w.u32(VERSION);

    let cfg = &net.config;
    w.f64(cfg.k_percent);
    w.u8(u8::from(cfg.use_pooling) | (u8::from(cfg.use_image_channels) << 1));
    w.f64(cfg.thin_min_value);
    w.usize(cfg.thin_min_distance);
    w.usize(KERNEL_SIZE);
    w.usize(SCAN_STEP);

    let prov = &net.provenance;
    w.usize(prov.exemplar_indices.len());
    for &i in &prov.exemplar_indices {
        w.usize(i);
    }
    w.u64(prov.built_at);
    w.f64(prov.build_seconds);

    let (_, (rows, cols)) = net.head.first.input_shape();
    w.usize(net.layer1_kernels.len());
    w.usize(net.layer2_kernels.len());
    w.usize(net.head.classes());
    w.usize(rows);
    w.usize(cols);

    for k in &net.layer1_kernels {
        w.point(&k.source);
        w.f64(k.bias);
        w.f64s(k.weights.as_slice());
    }
    for mk in &net.layer2_kernels {
        w.point(&mk.source);
        w.f64(mk.bias);
        w.f64s(&mk.weights);
    }

    let first = &net.head.first;
    for ((&(n1, n2), weights), &th) in first.pairs.iter().zip(&first.weights).zip(&first.thresholds) {
        w.usize(n1);
        w.usize(n2);
        w.f64(th);
        for g in weights {
            w.f64s(g.as_slice());
        }
    }
    w.i32(net.head.second.threshold);
    for row in &net.head.second.weights {
        w.0.extend_from_slice(row);
    }

    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    w.0
}

pub fn from_bytes(bytes: &[u8]) -> Result<AnalyticNetwork, FormatError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.array().map_err(|_| FormatError::Magic([0; 4]))?;
    if magic != MAGIC {
        return Err(FormatError::Magic(magic));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(FormatError::Version {
            found: version,
            supported: VERSION,
        });
    }
    if bytes.len() < 12 {
        return Err(corrupt("file too short"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(FormatError::Checksum { stored, computed });
    }
    let mut r = Reader {
        bytes: body,
        pos: r.pos,
    };

    let k_percent = r.f64()?;
    let flags = r.u8()?;
    let thin_min_value = r.f64()?;
    let thin_min_distance = r.usize()?;
    let kernel_size = r.usize()?;
    let scan_step = r.usize()?;
    if kernel_size != KERNEL_SIZE || scan_step != SCAN_STEP {
        return Err(corrupt(format!(
            "kernel size {kernel_size} / scan step {scan_step} unsupported"
        )));
    }
    let config = BuildConfig {
        k_percent,
        use_pooling: flags & 1 != 0,
        use_image_channels: flags & 2 != 0,
        thin_min_value,
        thin_min_distance,
    };

    let n_ex = r.usize()?;
    let exemplar_indices = (0..n_ex).map(|_| r.usize()).collect::<Result<_, _>>()?;
    let built_at = r.u64()?;
    let build_seconds = r.f64()?;

    let n1 = r.usize()?;
    let n2 = r.usize()?;
    let classes = r.usize()?;
    let rows = r.usize()?;
    let cols = r.usize()?;
    if classes < 2 {
        return Err(corrupt(format!("{classes} classes")));
    }

    let mut layer1_kernels = Vec::with_capacity(n1);
    for _ in 0..n1 {
        let source = r.point()?;
        let bias = r.f64()?;
        let weights = Grid::from_vec(KERNEL_SIZE, KERNEL_SIZE, r.f64s(TAPS)?).expect("25 taps");
        layer1_kernels.push(ConvKernel {
            weights,
            bias,
            source,
        });
    }
    let mut layer2_kernels = Vec::with_capacity(n2);
    for _ in 0..n2 {
        let source = r.point()?;
        let bias = r.f64()?;
        let weights = r.f64s(n1 * TAPS)?;
        layer2_kernels.push(MultiKernel {
            weights,
            channels: n1,
            bias,
            source,
        });
    }

    let pairs = ordered_pairs(classes);
    let mut weights = Vec::with_capacity(pairs.len());
    let mut thresholds = Vec::with_capacity(pairs.len());
    for &expected in &pairs {
        let pair = (r.usize()?, r.usize()?);
        if pair != expected {
            return Err(corrupt(format!("pair {pair:?} out of order, expected {expected:?}")));
        }
        thresholds.push(r.f64()?);
        let mut tables = Vec::with_capacity(n2);
        for _ in 0..n2 {
            tables.push(Grid::from_vec(rows, cols, r.f64s(rows * cols)?).expect("dims"));
        }
        weights.push(tables);
    }
    let threshold = r.i32()?;
    let mut second_weights = Vec::with_capacity(classes);
    for _ in 0..classes {
        second_weights.push(r.take(pairs.len())?.to_vec());
    }
    if r.pos != body.len() {
        return Err(corrupt(format!("{} trailing bytes", body.len() - r.pos)));
    }

    Ok(AnalyticNetwork {
        config,
        layer1_kernels,
        layer2_kernels,
        head: MetricHead {
            first: FirstLayer {
                classes,
                pairs,
                weights,
                thresholds,
            },
            second: SecondLayer {
                weights: second_weights,
                threshold,
            },
        },
        provenance: Provenance {
            exemplar_indices,
            built_at,
            build_seconds,
        },
    })
}

pub fn save(net: &AnalyticNetwork, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(net))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<AnalyticNetwork> {
    let bytes = fs::read(path)?;
    Ok(from_bytes(&bytes)?)
}

/// Writes the JSON manifest that accompanies a saved network.
pub fn save_manifest(net: &AnalyticNetwork, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(&net.manifest()).expect("manifest serializes");
    fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric_head::build_second_layer;

    fn tiny_net() -> AnalyticNetwork {
        let src = FeaturePoint {
            row: 2,
            col: 4,
            owner: Owner::Exemplar(1),
        };
        let pairs = ordered_pairs(2);
        AnalyticNetwork {
            config: BuildConfig::default(),
            layer1_kernels: vec![ConvKernel {
                weights: Grid::from_fn(5, 5, |r, c| (r as f64 - c as f64) / 7.0),
                bias: 12.5,
                source: src,
            }],
            layer2_kernels: vec![MultiKernel {
                weights: (0..25).map(|i| i as f64 * 0.01 - 0.1).collect(),
                channels: 1,
                bias: 0.0,
                source: FeaturePoint {
                    owner: Owner::Merged,
                    ..src
                },
            }],
            head: MetricHead {
                first: FirstLayer {
                    classes: 2,
                    pairs: pairs.clone(),
                    weights: vec![
                        vec![Grid::filled(8, 8, 0.1)],
                        vec![Grid::filled(8, 8, -0.1)],
                    ],
                    thresholds: vec![-3.25, 3.25],
                },
                second: build_second_layer(2, &pairs),
            },
            provenance: Provenance {
                exemplar_indices: vec![3, 157],
                built_at: 1_700_000_000,
                build_seconds: 0.25,
            },
        }
    }

    #[test]
    fn round_trip() {
        let net = tiny_net();
        let bytes = to_bytes(&net);
        assert_eq!(&bytes[..4], b"ACNN");
        assert_eq!(from_bytes(&bytes).unwrap(), net);
    }

    #[test]
    fn truncation_is_checksum_error() {
        let bytes = to_bytes(&tiny_net());
        let cut = &bytes[..bytes.len() - 100];
        assert!(matches!(from_bytes(cut), Err(FormatError::Checksum { .. })));
    }

    #[test]
    fn flipped_byte_is_checksum_error() {
        let mut bytes = to_bytes(&tiny_net());
        bytes[40] ^= 0x01;
        assert!(matches!(from_bytes(&bytes), Err(FormatError::Checksum { .. })));
    }

    #[test]
    fn other_version_rejected() {
        let mut bytes = to_bytes(&tiny_net());
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        let n = bytes.len();
        let crc = crc32fast::hash(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(
            from_bytes(&bytes),
            Err(FormatError::Version { found: 2, supported: 1 })
        ));
    }

    #[test]
    fn wrong_magic() {
        assert!(matches!(from_bytes(b"PK\x03\x04rest"), Err(FormatError::Magic(_))));
        assert!(matches!(from_bytes(b""), Err(FormatError::Magic(_))));
    }
}
