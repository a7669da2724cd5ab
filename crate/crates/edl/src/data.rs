//! Dataset ingestion and synthesis.
//!
//! IDX is the MNIST container: big-endian magic, dimension sizes, raw
//! bytes. Gzipped files are detected by their two magic bytes and
//! decompressed transparently. Pixels become features in [0,1] by
//! dividing by 255.

use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};
use flate2::read::GzDecoder;
use std::io::Read;
use std::path::Path;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Feature matrix in [0,1], integer labels, and where it came from.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub provenance: String,
}

impl LabeledDataset {
    pub fn new(
        features: Tensor,
        labels: Vec<usize>,
        class_count: usize,
        provenance: String,
    ) -> Result<Self> {
        let (n, _) = features.dims2();
        if n == 0 {
            return Err(Error::Shape("dataset is empty".into()));
        }
        if labels.len() != n {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                n,
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Domain(format!(
                "label {bad} outside [0, {class_count})"
            )));
        }
        if features
            .data()
            .iter()
            .any(|&v| !v.is_finite() || !(0.0..=1.0).contains(&v))
        {
            return Err(Error::Domain("features must lie in [0,1]".into()));
        }
        Ok(LabeledDataset {
            features,
            labels,
            class_count,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.dims2().1
    }

    /// One-hot label matrix for the given sample indices.
    pub fn one_hot_rows(&self, indices: &[usize]) -> Tensor {
        let k = self.class_count;
        let mut y = Tensor::zeros(&[indices.len(), k]);
        for (row, &i) in indices.iter().enumerate() {
            y.data_mut()[row * k + self.labels[i]] = 1.0;
        }
        y
    }

    /// Feature rows for the given sample indices.
    pub fn feature_rows(&self, indices: &[usize]) -> Tensor {
        let d = self.feature_dim();
        let mut x = Tensor::zeros(&[indices.len(), d]);
        for (row, &i) in indices.iter().enumerate() {
            x.row_mut(row).copy_from_slice(self.features.row(i));
        }
        x
    }
}

/// Read a file, decompressing if the gzip magic bytes lead.
fn read_maybe_gzipped(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::IdxTruncated {
            path: path.display().to_string(),
            offset,
            needed: 4,
        })
}

/// Parse a pair of IDX files (images + labels) into a dataset.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let img = read_maybe_gzipped(images_path)?;
    let magic = be_u32(&img, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::IdxBadMagic {
            path: images_path.display().to_string(),
            offset: 0,
            found: magic,
            expected: IDX_IMAGES_MAGIC,
        });
    }
    let n = be_u32(&img, 4, images_path)? as usize;
    let rows = be_u32(&img, 8, images_path)? as usize;
    let cols = be_u32(&img, 12, images_path)? as usize;
    let pixel_count = n * rows * cols;
    if img.len() < 16 + pixel_count {
        return Err(Error::IdxTruncated {
            path: images_path.display().to_string(),
            offset: img.len(),
            needed: 16 + pixel_count - img.len(),
        });
    }

    let lab = read_maybe_gzipped(labels_path)?;
    let magic = be_u32(&lab, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::IdxBadMagic {
            path: labels_path.display().to_string(),
            offset: 0,
            found: magic,
            expected: IDX_LABELS_MAGIC,
        });
    }
    let n_labels = be_u32(&lab, 4, labels_path)? as usize;
    if lab.len() < 8 + n_labels {
        return Err(Error::IdxTruncated {
            path: labels_path.display().to_string(),
            offset: lab.len(),
            needed: 8 + n_labels - lab.len(),
        });
    }
    if n != n_labels {
        return Err(Error::IdxCountMismatch {
            images: n,
            labels: n_labels,
        });
    }

    let features: Vec<f64> = img[16..16 + pixel_count]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    let labels: Vec<usize> = lab[8..8 + n_labels].iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().copied().max().unwrap_or(0) + 1;
    LabeledDataset::new(
        Tensor::from_vec(&[n, rows * cols], features)?,
        labels,
        class_count.max(2),
        format!("idx:{}", images_path.display()),
    )
}

/// Serialize a dataset back to a pair of uncompressed IDX files.
///
/// Pixels are written as round(value·255); a dataset loaded by
/// `load_idx` re-serializes to the original bytes.
pub fn save_idx(
    ds: &LabeledDataset,
    images_path: &Path,
    labels_path: &Path,
    rows: usize,
    cols: usize,
) -> Result<()> {
    let (n, d) = ds.features.dims2();
    if rows * cols != d {
        return Err(Error::Shape(format!(
            "{rows}×{cols} does not match feature dim {d}"
        )));
    }
    let mut img = Vec::with_capacity(16 + n * d);
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(n as u32).to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    img.extend(ds.features.data().iter().map(|&v| (v * 255.0).round() as u8));
    std::fs::write(images_path, img)?;

    let mut lab = Vec::with_capacity(8 + n);
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(n as u32).to_be_bytes());
    lab.extend(ds.labels.iter().map(|&l| l as u8));
    std::fs::write(labels_path, lab)?;
    Ok(())
}

/// Keep only samples whose label is in `keep`; optionally renumber
/// classes 0..|keep| in `keep` order.
pub fn filter_classes(ds: &LabeledDataset, keep: &[usize], relabel: bool) -> Result<LabeledDataset> {
    if keep.is_empty() {
        return Err(Error::Config("empty class list".into()));
    }
    if let Some(&bad) = keep.iter().find(|&&c| c >= ds.class_count) {
        return Err(Error::Config(format!(
            "class {bad} outside [0, {})",
            ds.class_count
        )));
    }
    let mut remap = vec![None; ds.class_count];
    for (new, &old) in keep.iter().enumerate() {
        if remap[old].is_some() {
            return Err(Error::Config(format!("class {old} listed twice")));
        }
        remap[old] = Some(if relabel { new } else { old });
    }
    let indices: Vec<usize> = (0..ds.len())
        .filter(|&i| remap[ds.labels[i]].is_some())
        .collect();
    if indices.is_empty() {
        return Err(Error::Config("no samples left after class filter".into()));
    }
    let features = ds.feature_rows(&indices);
    let labels: Vec<usize> = indices
        .iter()
        .map(|&i| remap[ds.labels[i]].unwrap())
        .collect();
    let class_count = if relabel { keep.len() } else { ds.class_count };
    LabeledDataset::new(
        features,
        labels,
        class_count.max(2),
        format!("{}|classes{:?}", ds.provenance, keep),
    )
}

/// K unit-variance Gaussian blobs, means on a circle sized so adjacent
/// means sit `separation` standard deviations apart, affinely squashed
/// into [0,1].
pub fn synth_gaussians(
    k: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if k < 2 {
        return Err(Error::Config(format!("need K ≥ 2 classes, got {k}")));
    }
    if per_class < 1 || dim < 2 {
        return Err(Error::Config(format!(
            "need per_class ≥ 1 and dim ≥ 2, got {per_class}, {dim}"
        )));
    }
    if !(separation >= 0.0) {
        return Err(Error::Config(format!(
            "separation must be non-negative, got {separation}"
        )));
    }
    let radius = if separation == 0.0 {
        0.0
    } else {
        separation / (2.0 * (std::f64::consts::PI / k as f64).sin())
    };
    // Everything lands in [−(radius+6), radius+6] except ~1e-9 tails,
    // which are clamped after the affine squash.
    let half_range = radius + 6.0;
    let scale = 1.0 / (2.0 * half_range);

    let mut rng = Rng::new(seed);
    let n = k * per_class;
    let mut features = vec![0.0; n * dim];
    let mut labels = vec![0usize; n];
    for class in 0..k {
        let angle = 2.0 * std::f64::consts::PI * class as f64 / k as f64;
        let (mean_x, mean_y) = (radius * angle.cos(), radius * angle.sin());
        for s in 0..per_class {
            let i = class * per_class + s;
            labels[i] = class;
            let row = &mut features[i * dim..(i + 1) * dim];
            for (j, v) in row.iter_mut().enumerate() {
                let mean = match j {
                    0 => mean_x,
                    1 => mean_y,
                    _ => 0.0,
                };
                let raw = mean + rng.normal();
                *v = ((raw + half_range) * scale).clamp(0.0, 1.0);
            }
        }
    }
    LabeledDataset::new(
        Tensor::from_vec(&[n, dim], features)?,
        labels,
        k,
        format!("synth:k={k},per_class={per_class},dim={dim},separation={separation},seed={seed}"),
    )
}
