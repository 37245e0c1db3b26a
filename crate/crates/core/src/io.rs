//! Binary and text artifact formats.
//!
//! Three little-endian binary containers guarantee bit-exact reloads:
//!
//! * `TOPD`: a dense matrix with magic, u64 rows, u64 cols, row-major f64.
//! * `RFM1`: a random feature map with magic, u32 input dim, u32 layer count,
//!   u32 widths, u8 activation id, u8 distribution id, f64 weight scale,
//!   f64 bias scale, u64 seed, then per layer row-major f64 weights and
//!   biases.
//! * `SPM1`: a spectral model appended after its `RFM1` block, holding magic,
//!   u8 mode id, u8 symmetrize flag, u8 companion flag, u32 n, u32 N,
//!   f64 rank tolerance, f64 values, column-major f64 weights (and companion
//!   weights when flagged).
//!
//! Datasets are a pair of `TOPD` files plus a `key = value` text sidecar;
//! CSV interchange writes 17 significant digits so floats round-trip exactly.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};

use crate::dynamics::{SnapshotDataset, SourceInfo};
use crate::error::{CoreError, Result};
use crate::features::{
    Activation, DistFamily, DistributionSpec, RandomFeatureMap, RandomLayer,
};
use crate::operator::{SpectralMode, SpectralModel};

const TOPD_MAGIC: &[u8; 4] = b"TOPD";
const RFM_MAGIC: &[u8; 4] = b"RFM1";
const SPM_MAGIC: &[u8; 4] = b"SPM1";

/// Writes a file atomically: the payload lands in a temporary sibling first
/// and is renamed into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = PathBuf::from(dir);
    let stem = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "artifact".into());
    tmp.push(format!(".{stem}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(CoreError::Format("unexpected end of file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, expect: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != expect {
            return Err(CoreError::Format(format!(
                "bad magic: expected {:?}, got {:?}",
                String::from_utf8_lossy(expect),
                String::from_utf8_lossy(got)
            )));
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(8 * n)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn push_f64s(out: &mut Vec<u8>, values: impl IntoIterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

// ---------------------------------------------------------------------------
// TOPD matrix container
// ---------------------------------------------------------------------------

pub fn matrix_to_bytes(m: &Array2<f64>) -> Vec<u8> {
    let (rows, cols) = m.dim();
    let mut out = Vec::with_capacity(20 + 8 * rows * cols);
    out.extend_from_slice(TOPD_MAGIC);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    push_f64s(&mut out, m.iter().copied());
    out
}

pub fn matrix_from_bytes(bytes: &[u8]) -> Result<Array2<f64>> {
    let mut r = Reader::new(bytes);
    r.magic(TOPD_MAGIC)?;
    let rows = r.u64()? as usize;
    let cols = r.u64()? as usize;
    let data = r.f64_vec(rows * cols)?;
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| CoreError::Format(format!("matrix shape: {e}")))
}

pub fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    atomic_write(path, &matrix_to_bytes(m))
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    matrix_from_bytes(&fs::read(path)?)
}

// ---------------------------------------------------------------------------
// CSV interchange (samples as rows, header x1,...,xd)
// ---------------------------------------------------------------------------

/// Formats a float with 17 significant digits, enough for exact f64
/// round-trips.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a `d×m` matrix as CSV with one sample per row.
pub fn matrix_to_csv(m: &Array2<f64>) -> String {
    let d = m.nrows();
    let mut out = String::new();
    let header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for j in 0..m.ncols() {
        let row: Vec<String> = (0..d).map(|i| fmt_f64(m[[i, j]])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parses CSV produced by [`matrix_to_csv`] (or any numeric CSV with a
/// header row) back into a `d×m` matrix.
pub fn matrix_from_csv(text: &str) -> Result<Array2<f64>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CoreError::Format("empty CSV".into()))?;
    let d = header.split(',').count();
    let mut values: Vec<f64> = Vec::new();
    let mut m = 0usize;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d {
            return Err(CoreError::Format(format!(
                "line {}: expected {d} fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        for f in fields {
            values.push(f.trim().parse::<f64>().map_err(|e| {
                CoreError::Format(format!("line {}: bad float '{f}': {e}", lineno + 2))
            })?);
        }
        m += 1;
    }
    let rows = Array2::from_shape_vec((m, d), values)
        .map_err(|e| CoreError::Format(format!("csv shape: {e}")))?;
    Ok(rows.t().to_owned())
}

pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    atomic_write(path, matrix_to_csv(m).as_bytes())
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    matrix_from_csv(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Dataset stem: <stem>_x.topd, <stem>_y.topd, <stem>.meta
// ---------------------------------------------------------------------------

/// Files belonging to a dataset stem.
pub fn dataset_paths(stem: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let base = stem.to_string_lossy();
    (
        PathBuf::from(format!("{base}_x.topd")),
        PathBuf::from(format!("{base}_y.topd")),
        PathBuf::from(format!("{base}.meta")),
    )
}

pub fn save_dataset(stem: &Path, data: &SnapshotDataset) -> Result<Vec<PathBuf>> {
    let (xp, yp, mp) = dataset_paths(stem);
    let mut written = vec![xp.clone(), mp.clone()];
    write_matrix(&xp, &data.x)?;
    if let Some(y) = &data.y {
        write_matrix(&yp, y)?;
        written.insert(1, yp);
    }
    let mut meta = String::new();
    meta.push_str(&format!("system = {}\n", data.source.system));
    meta.push_str(&format!("seed = {}\n", data.source.seed));
    if let Some(tau) = data.lag_time {
        meta.push_str(&format!("lag_time = {}\n", fmt_f64(tau)));
    }
    for (k, v) in &data.source.params {
        meta.push_str(&format!("param.{k} = {}\n", fmt_f64(*v)));
    }
    atomic_write(&mp, meta.as_bytes())?;
    Ok(written)
}

pub fn load_dataset(stem: &Path) -> Result<SnapshotDataset> {
    let (xp, yp, mp) = dataset_paths(stem);
    let x = read_matrix(&xp)?;
    let y = if yp.exists() { Some(read_matrix(&yp)?) } else { None };
    let mut source = SourceInfo::default();
    let mut lag_time = None;
    if mp.exists() {
        for line in fs::read_to_string(&mp)?.lines() {
            let Some((key, value)) = line.split_once('=') else {
                continue;
            };
            let key = key.trim();
            let value = value.trim();
            match key {
                "system" => source.system = value.to_string(),
                "seed" => {
                    source.seed = value
                        .parse()
                        .map_err(|e| CoreError::Format(format!("meta seed: {e}")))?
                }
                "lag_time" => {
                    lag_time = Some(
                        value
                            .parse()
                            .map_err(|e| CoreError::Format(format!("meta lag_time: {e}")))?,
                    )
                }
                _ => {
                    if let Some(name) = key.strip_prefix("param.") {
                        let v: f64 = value
                            .parse()
                            .map_err(|e| CoreError::Format(format!("meta {key}: {e}")))?;
                        source.params.push((name.to_string(), v));
                    }
                }
            }
        }
    }
    if let Some(y) = &y {
        if y.dim() != x.dim() {
            return Err(CoreError::Format(format!(
                "X is {:?} but Y is {:?}",
                x.dim(),
                y.dim()
            )));
        }
    }
    Ok(SnapshotDataset {
        x,
        y,
        lag_time,
        source,
    })
}

// ---------------------------------------------------------------------------
// RFM1
// ---------------------------------------------------------------------------

pub fn rfm_to_bytes(rfm: &RandomFeatureMap) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(RFM_MAGIC);
    out.extend_from_slice(&(rfm.input_dim() as u32).to_le_bytes());
    let widths = rfm.layer_widths();
    out.extend_from_slice(&(widths.len() as u32).to_le_bytes());
    for w in &widths {
        out.extend_from_slice(&(*w as u32).to_le_bytes());
    }
    out.push(rfm.activation().id());
    let dist = rfm.distribution();
    out.push(dist.family.id());
    out.extend_from_slice(&dist.weight_scale.to_le_bytes());
    out.extend_from_slice(&dist.bias_scale.to_le_bytes());
    out.extend_from_slice(&rfm.seed().to_le_bytes());
    for layer in rfm.layers() {
        push_f64s(&mut out, layer.weights.iter().copied());
        push_f64s(&mut out, layer.bias.iter().copied());
    }
    out
}

fn rfm_from_reader(r: &mut Reader) -> Result<RandomFeatureMap> {
    r.magic(RFM_MAGIC)?;
    let input_dim = r.u32()? as usize;
    let n_layers = r.u32()? as usize;
    let mut widths = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        widths.push(r.u32()? as usize);
    }
    let activation = Activation::from_id(r.u8()?)?;
    let family = DistFamily::from_id(r.u8()?)?;
    let weight_scale = r.f64()?;
    let bias_scale = r.f64()?;
    let seed = r.u64()?;
    let dist = DistributionSpec {
        family,
        weight_scale,
        bias_scale,
    };
    let mut layers = Vec::with_capacity(n_layers);
    let mut fan_in = input_dim;
    for &w in &widths {
        let weights = Array2::from_shape_vec((w, fan_in), r.f64_vec(w * fan_in)?)
            .map_err(|e| CoreError::Format(format!("layer weights: {e}")))?;
        let bias = Array1::from(r.f64_vec(w)?);
        layers.push(RandomLayer {
            weights,
            bias,
            seed,
            distribution: dist,
        });
        fan_in = w;
    }
    RandomFeatureMap::from_layers(layers, activation, input_dim, seed)
}

pub fn rfm_from_bytes(bytes: &[u8]) -> Result<RandomFeatureMap> {
    rfm_from_reader(&mut Reader::new(bytes))
}

pub fn write_rfm(path: &Path, rfm: &RandomFeatureMap) -> Result<()> {
    atomic_write(path, &rfm_to_bytes(rfm))
}

pub fn read_rfm(path: &Path) -> Result<RandomFeatureMap> {
    rfm_from_bytes(&fs::read(path)?)
}

// ---------------------------------------------------------------------------
// SPM1 (spectral model = RFM1 block + companion block)
// ---------------------------------------------------------------------------

pub fn model_to_bytes(model: &SpectralModel) -> Vec<u8> {
    let mut out = rfm_to_bytes(&model.rfm);
    out.extend_from_slice(SPM_MAGIC);
    out.push(model.mode.id());
    out.push(model.symmetrized as u8);
    out.push(model.companion_weights.is_some() as u8);
    let (big_n, n) = model.weights.dim();
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(big_n as u32).to_le_bytes());
    out.extend_from_slice(&model.rank_tol.to_le_bytes());
    push_f64s(&mut out, model.values.iter().copied());
    for j in 0..n {
        push_f64s(&mut out, model.weights.column(j).iter().copied());
    }
    if let Some(companion) = &model.companion_weights {
        for j in 0..n {
            push_f64s(&mut out, companion.column(j).iter().copied());
        }
    }
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<SpectralModel> {
    let mut r = Reader::new(bytes);
    let rfm = rfm_from_reader(&mut r)?;
    r.magic(SPM_MAGIC)?;
    let mode = SpectralMode::from_id(r.u8()?)?;
    let symmetrized = r.u8()? != 0;
    let has_companion = r.u8()? != 0;
    let n = r.u32()? as usize;
    let big_n = r.u32()? as usize;
    if big_n != rfm.output_dim() {
        return Err(CoreError::Format(format!(
            "weight rows {big_n} do not match feature dim {}",
            rfm.output_dim()
        )));
    }
    let rank_tol = r.f64()?;
    let values = Array1::from(r.f64_vec(n)?);
    let mut weights = Array2::zeros((big_n, n));
    for j in 0..n {
        let col = r.f64_vec(big_n)?;
        for (i, v) in col.into_iter().enumerate() {
            weights[[i, j]] = v;
        }
    }
    let companion_weights = if has_companion {
        let mut c = Array2::zeros((big_n, n));
        for j in 0..n {
            let col = r.f64_vec(big_n)?;
            for (i, v) in col.into_iter().enumerate() {
                c[[i, j]] = v;
            }
        }
        Some(c)
    } else {
        None
    };
    Ok(SpectralModel {
        rfm,
        weights,
        values,
        mode,
        companion_weights,
        rank_tol,
        symmetrized,
    })
}

pub fn write_model(path: &Path, model: &SpectralModel) -> Result<()> {
    atomic_write(path, &model_to_bytes(model))
}

pub fn read_model(path: &Path) -> Result<SpectralModel> {
    model_from_bytes(&fs::read(path)?)
}

/// Convenience used by binary writers that stream into a `Vec` first.
pub fn write_all(w: &mut dyn Write, bytes: &[u8]) -> Result<()> {
    w.write_all(bytes)?;
    Ok(())
}

/// Convenience mirror of [`write_all`].
pub fn read_all(r: &mut dyn Read) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    Ok(buf)
}
