//! Datasets, backdoor triggers and erased/remaining splits.
//!
//! Images are stored flattened row-major with pixels in `[0, 1]`. Labels
//! are only consumed by the downstream classifier; codec training never
//! sees them.

use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::codec::gather_rows;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Idx,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub images: Vec<f64>,
    pub labels: Vec<usize>,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub provenance: Provenance,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let p = self.pixels();
        &self.images[i * p..(i + 1) * p]
    }

    /// Rows `indices` as a constant `k × pixels` tensor.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::contract(format!("index {bad} out of range for {} samples", self.len())));
        }
        gather_rows(&self.images, self.pixels(), indices)
    }

    pub fn labels_of(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let mut images = Vec::with_capacity(indices.len() * self.pixels());
        for &i in indices {
            images.extend_from_slice(self.image(i));
        }
        LabeledDataset {
            images,
            labels: self.labels_of(indices),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> LabeledDataset {
        LabeledDataset {
            images: Vec::new(),
            labels: Vec::new(),
            height: self.height,
            width: self.width,
            classes: self.classes,
            provenance: self.provenance,
        }
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            offset: offset as u64,
            message: "truncated header".into(),
        })
}

/// Parses an IDX image file and its label file (`u8` pixels scaled by 1/255).
pub fn parse_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<LabeledDataset> {
    let magic = read_u32(image_bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let n = read_u32(image_bytes, 4)? as usize;
    let height = read_u32(image_bytes, 8)? as usize;
    let width = read_u32(image_bytes, 12)? as usize;
    let expected = 16 + n * height * width;
    if image_bytes.len() < expected {
        return Err(Error::Format {
            offset: image_bytes.len() as u64,
            message: format!("image data truncated, expected {expected} bytes"),
        });
    }
    let magic = read_u32(label_bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let n_labels = read_u32(label_bytes, 4)? as usize;
    if n_labels != n {
        return Err(Error::Format {
            offset: 4,
            message: format!("label count {n_labels} does not match image count {n}"),
        });
    }
    if label_bytes.len() < 8 + n {
        return Err(Error::Format {
            offset: label_bytes.len() as u64,
            message: format!("label data truncated, expected {} bytes", 8 + n),
        });
    }
    let images = image_bytes[16..expected].iter().map(|&b| f64::from(b) / 255.0).collect();
    let labels: Vec<usize> = label_bytes[8..8 + n].iter().map(|&b| usize::from(b)).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    Ok(LabeledDataset {
        images,
        labels,
        height,
        width,
        classes,
        provenance: Provenance::Idx,
    })
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    parse_idx(&fs::read(images_path)?, &fs::read(labels_path)?)
}

/// Serialises to IDX bytes, quantising pixels to `round(255·x)`.
pub fn encode_idx(ds: &LabeledDataset) -> Result<(Vec<u8>, Vec<u8>)> {
    if ds.labels.iter().any(|&l| l > 255) {
        return Err(Error::contract("IDX labels must fit in a byte"));
    }
    let mut images = Vec::with_capacity(16 + ds.images.len());
    for word in [IDX_IMAGES_MAGIC, ds.len() as u32, ds.height as u32, ds.width as u32] {
        images.extend_from_slice(&word.to_be_bytes());
    }
    images.extend(ds.images.iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
    let mut labels = Vec::with_capacity(8 + ds.len());
    for word in [IDX_LABELS_MAGIC, ds.len() as u32] {
        labels.extend_from_slice(&word.to_be_bytes());
    }
    labels.extend(ds.labels.iter().map(|&l| l as u8));
    Ok((images, labels))
}

pub fn write_idx(ds: &LabeledDataset, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let (images, labels) = encode_idx(ds)?;
    fs::write(images_path, images)?;
    fs::write(labels_path, labels)?;
    Ok(())
}

/// Centre of class `k`'s blob: evenly spaced on a ring around the image
/// centre, away from the bottom-right trigger corner.
fn blob_centre(k: usize, classes: usize, h: usize, w: usize) -> (f64, f64) {
    let angle = std::f64::consts::TAU * k as f64 / classes.max(1) as f64;
    let radius = 0.35 * h.min(w) as f64;
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    (cy + radius * angle.sin(), cx + radius * angle.cos())
}

/// Class-conditional Gaussian blobs with additive `N(0, 0.1²)` pixel noise.
/// Labels cycle through the classes, so every class is equally represented.
pub fn generate_synthetic(n: usize, height: usize, width: usize, classes: usize, seed: u64) -> Result<LabeledDataset> {
    if height == 0 || width == 0 || classes == 0 {
        return Err(Error::contract("synthetic dataset needs positive height, width and classes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1).expect("valid noise sigma");
    let spread = 0.12 * height.min(width) as f64;
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(&mut rng);
    let mut images = Vec::with_capacity(n * height * width);
    for &label in &labels {
        let (cy, cx) = blob_centre(label, classes, height, width);
        let jy: f64 = rng.random_range(-0.3..0.3);
        let jx: f64 = rng.random_range(-0.3..0.3);
        let amplitude = 0.9 + 0.1 * rng.random::<f64>();
        for y in 0..height {
            for x in 0..width {
                let d2 = (y as f64 - cy - jy).powi(2) + (x as f64 - cx - jx).powi(2);
                let v = amplitude * (-d2 / (2.0 * spread * spread)).exp() + rng.sample(noise);
                images.push(v.clamp(0.0, 1.0));
            }
        }
    }
    Ok(LabeledDataset {
        images,
        labels,
        height,
        width,
        classes,
        provenance: Provenance::Synthetic,
    })
}

/// A square trigger stamped into the bottom-right corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackdoorSpec {
    pub patch_side: usize,
    pub patch_value: f64,
    pub target_label: usize,
}

impl Default for BackdoorSpec {
    fn default() -> Self {
        BackdoorSpec {
            patch_side: 2,
            patch_value: 1.0,
            target_label: 0,
        }
    }
}

/// Stamps the trigger on `indices` and relabels them to the target.
pub fn inject_backdoor(ds: &LabeledDataset, indices: &[usize], spec: &BackdoorSpec) -> Result<LabeledDataset> {
    if spec.patch_side == 0 || spec.patch_side > ds.height.min(ds.width) {
        return Err(Error::contract(format!(
            "patch side {} does not fit a {}x{} image",
            spec.patch_side, ds.height, ds.width
        )));
    }
    if !(0.0..=1.0).contains(&spec.patch_value) {
        return Err(Error::contract("patch value must lie in [0, 1]"));
    }
    if spec.target_label >= ds.classes {
        return Err(Error::contract(format!("target label {} out of range", spec.target_label)));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= ds.len()) {
        return Err(Error::contract(format!("index {bad} out of range for {} samples", ds.len())));
    }
    let mut out = ds.clone();
    let (h, w, p) = (ds.height, ds.width, ds.pixels());
    for &i in indices {
        for y in h - spec.patch_side..h {
            for x in w - spec.patch_side..w {
                out.images[i * p + y * w + x] = spec.patch_value;
            }
        }
        out.labels[i] = spec.target_label;
    }
    Ok(out)
}

/// Erased set `D_e` and remaining set `D_r`, both sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub erased_indices: Vec<usize>,
    pub remaining_indices: Vec<usize>,
    pub edr: f64,
}

/// Uniformly picks `round(edr·n)` samples to erase.
pub fn split_erased(n: usize, edr: f64, seed: u64) -> Result<SplitDataset> {
    let all: Vec<usize> = (0..n).collect();
    split_erased_among(n, &all, edr, seed)
}

/// Like [`split_erased`], but draws the `round(edr·n)` erased samples only
/// from `eligible`. Used to poison only samples outside the backdoor's
/// target class.
pub fn split_erased_among(n: usize, eligible: &[usize], edr: f64, seed: u64) -> Result<SplitDataset> {
    if !(edr > 0.0 && edr < 1.0) {
        return Err(Error::contract(format!("erased data ratio must be in (0, 1), got {edr}")));
    }
    let n_erased = (edr * n as f64).round() as usize;
    if n_erased == 0 {
        return Err(Error::contract(format!("erased data ratio {edr} selects no samples out of {n}")));
    }
    if n_erased >= n {
        return Err(Error::contract(format!("erased data ratio {edr} leaves no remaining samples")));
    }
    if let Some(&bad) = eligible.iter().find(|&&i| i >= n) {
        return Err(Error::contract(format!("eligible index {bad} out of range for {n} samples")));
    }
    if n_erased > eligible.len() {
        return Err(Error::contract(format!(
            "erased data ratio {edr} needs {n_erased} samples but only {} are eligible",
            eligible.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = eligible.to_vec();
    order.shuffle(&mut rng);
    let mut erased = order[..n_erased].to_vec();
    erased.sort_unstable();
    let mut remaining = Vec::with_capacity(n - n_erased);
    for i in 0..n {
        if erased.binary_search(&i).is_err() {
            remaining.push(i);
        }
    }
    Ok(SplitDataset {
        erased_indices: erased,
        remaining_indices: remaining,
        edr,
    })
}

/// `k` indices from `pool`: without replacement when `k ≤ |pool|`,
/// otherwise with replacement.
pub fn sample_batch<R: Rng + ?Sized>(pool: &[usize], k: usize, rng: &mut R) -> Vec<usize> {
    if k <= pool.len() {
        pool.choose_multiple(rng, k).copied().collect()
    } else {
        (0..k).map(|_| pool[rng.random_range(0..pool.len())]).collect()
    }
}

/// Standard-normal helper shared by tests and benches.
pub fn standard_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idx_fixture_scales_pixels() {
        let mut img = Vec::new();
        for w in [IDX_IMAGES_MAGIC, 1, 2, 2] {
            img.extend_from_slice(&w.to_be_bytes());
        }
        img.extend_from_slice(&[0, 85, 170, 255]);
        let mut lab = Vec::new();
        for w in [IDX_LABELS_MAGIC, 1] {
            lab.extend_from_slice(&w.to_be_bytes());
        }
        lab.push(3);
        let ds = parse_idx(&img, &lab).unwrap();
        for (got, want) in ds.images.iter().zip([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]) {
            assert!((got - want).abs() < 1e-9);
        }
        assert_eq!(ds.labels, vec![3]);
        assert_eq!((ds.height, ds.width, ds.classes), (2, 2, 4));
    }

    #[test]
    fn idx_errors_name_offsets() {
        let (img, lab) = encode_idx(&generate_synthetic(3, 2, 2, 2, 0).unwrap()).unwrap();
        let mut bad = img.clone();
        bad[3] = 0x02;
        assert!(matches!(parse_idx(&bad, &lab), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(parse_idx(&img[..18], &lab), Err(Error::Format { offset: 18, .. })));
        let mut short = lab.clone();
        short[7] = 2;
        assert!(matches!(parse_idx(&img, &short), Err(Error::Format { offset: 4, .. })));
        assert!(matches!(parse_idx(&img[..6], &lab), Err(Error::Format { .. })));
    }

    #[test]
    fn synthetic_empty_and_seeded() {
        assert!(generate_synthetic(0, 8, 8, 10, 1).unwrap().is_empty());
        let a = generate_synthetic(50, 8, 8, 10, 1).unwrap();
        let b = generate_synthetic(50, 8, 8, 10, 1).unwrap();
        assert_eq!(encode_idx(&a).unwrap(), encode_idx(&b).unwrap());
        assert!(a.images.iter().all(|p| (0.0..=1.0).contains(p)));
        assert!(a.labels.iter().all(|&l| l < 10));
    }

    #[test]
    fn full_patch_fills_image() {
        let ds = generate_synthetic(2, 4, 4, 3, 2).unwrap();
        let spec = BackdoorSpec {
            patch_side: 4,
            patch_value: 0.25,
            target_label: 1,
        };
        let out = inject_backdoor(&ds, &[1], &spec).unwrap();
        assert!(out.image(1).iter().all(|&p| p == 0.25));
        assert_eq!(out.image(0), ds.image(0));
    }

    #[test]
    fn empty_index_list_is_identity() {
        let ds = generate_synthetic(5, 4, 4, 3, 2).unwrap();
        assert_eq!(inject_backdoor(&ds, &[], &BackdoorSpec::default()).unwrap(), ds);
    }

    #[test]
    fn patch_covers_exact_corner() {
        let mut ds = generate_synthetic(1, 4, 4, 2, 3).unwrap();
        ds.images = vec![0.0; 16];
        let out = inject_backdoor(&ds, &[0], &BackdoorSpec::default()).unwrap();
        let mut set = Vec::new();
        for y in 0..4 {
            for x in 0..4 {
                if out.images[y * 4 + x] == 1.0 {
                    set.push((y, x));
                }
            }
        }
        assert_eq!(set, vec![(2, 2), (2, 3), (3, 2), (3, 3)]);
        assert_eq!(out.labels[0], 0);
    }

    #[test]
    fn backdoor_is_idempotent_and_checks_range() {
        let ds = generate_synthetic(6, 8, 8, 10, 4).unwrap();
        let spec = BackdoorSpec::default();
        let once = inject_backdoor(&ds, &[0, 3], &spec).unwrap();
        assert_eq!(inject_backdoor(&once, &[0, 3], &spec).unwrap(), once);
        assert!(inject_backdoor(&ds, &[6], &spec).is_err());
    }

    #[test]
    fn split_counts_and_errors() {
        let s = split_erased(10, 0.5, 1).unwrap();
        assert_eq!(s.erased_indices.len(), 5);
        assert_eq!(split_erased(10, 0.5, 1).unwrap(), s);
        assert!(split_erased(10, 0.01, 1).is_err());
        assert!(split_erased(10, 0.0, 1).is_err());
        assert!(split_erased(10, 1.0, 1).is_err());
    }

    #[test]
    fn oversized_batch_samples_with_replacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pool = [4, 9, 11];
        let b = sample_batch(&pool, 8, &mut rng);
        assert_eq!(b.len(), 8);
        assert!(b.iter().all(|i| pool.contains(i)));
        let small = sample_batch(&pool, 2, &mut rng);
        assert_ne!(small[0], small[1]);
    }
}
