//! MNIST (IDX) and CIFAR-10 (binary batch) readers, standardization and
//! seeded mini-batching.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::tensor::{Scalar, Tensor};

pub const MNIST_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const MNIST_LABEL_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_RECORD_BYTES: usize = 1 + 3 * 32 * 32;

/// Per-channel `(x/255 − mean) / std`.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn mnist() -> Self {
        Self {
            mean: vec![0.1307],
            std: vec![0.3081],
        }
    }

    pub fn cifar10() -> Self {
        Self {
            mean: vec![0.4914, 0.4822, 0.4465],
            std: vec![0.2470, 0.2435, 0.2616],
        }
    }

    pub fn apply(&self, channel: usize, pixel: u8) -> f32 {
        ((f64::from(pixel) / 255.0 - self.mean[channel]) / self.std[channel]) as f32
    }

    /// Back to the `[0, 1]` pixel scale.
    pub fn invert(&self, channel: usize, value: f32) -> f64 {
        f64::from(value) * self.std[channel] + self.mean[channel]
    }
}

/// Images (standardized, `[n, ..image_shape]`) with labels in `0..10`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Tensor<f32>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(images: Tensor<f32>, labels: Vec<u8>) -> Result<Self> {
        let n = images.shape().first().copied().unwrap_or(0);
        if n != labels.len() {
            return Err(Error::CountMismatch {
                images: n,
                labels: labels.len(),
            });
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l > 9) {
            return Err(Error::LabelOutOfRange { index, label });
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    fn example_len(&self) -> usize {
        self.image_shape().iter().product()
    }

    /// The examples at `indices`, in that order, as a batch tensor.
    pub fn gather<T: Scalar>(&self, indices: &[usize]) -> (Tensor<T>, Vec<usize>) {
        let m = self.example_len();
        let src = self.images.data();
        let mut data = Vec::with_capacity(indices.len() * m);
        for &i in indices {
            data.extend(src[i * m..(i + 1) * m].iter().map(|&v| T::from_f64_lossy(f64::from(v))));
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.image_shape());
        let labels = indices.iter().map(|&i| usize::from(self.labels[i])).collect();
        (Tensor::new(shape, data).expect("gathered shape"), labels)
    }

    /// The first `n` examples after a seeded shuffle (all of them if `n`
    /// exceeds the dataset size).
    pub fn subset(&self, n: usize, seed: u64) -> Dataset {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng_from_seed(derive_seed(seed, stream::SUBSET)));
        order.truncate(n.min(self.len()));
        let (images, labels) = self.gather::<f32>(&order);
        Dataset {
            images,
            labels: labels.into_iter().map(|l| l as u8).collect(),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(Error::from)
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn truncated(path: &Path, detail: impl Into<String>) -> Error {
    Error::Truncated {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Parses an IDX image file (magic 0x00000803, dims n×rows×cols, u8 pixels)
/// and its label file (magic 0x00000801). Images are flattened to
/// `[n, rows·cols]` and standardized with the MNIST constants.
pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let image_bytes = read_file(ip)?;
    let (count, rows, cols, pixels) = parse_idx_images(ip, &image_bytes)?;
    let labels = parse_idx_labels(lp, &read_file(lp)?)?;
    if labels.len() != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    let norm = Standardization::mnist();
    let data = pixels.iter().map(|&p| norm.apply(0, p)).collect();
    Dataset::new(Tensor::new(vec![count, rows * cols], data)?, labels)
}

fn parse_idx_images<'a>(path: &Path, bytes: &'a [u8]) -> Result<(usize, usize, usize, &'a [u8])> {
    if bytes.len() < 16 {
        return Err(truncated(path, format!("{} bytes is shorter than the 16-byte header", bytes.len())));
    }
    let magic = be_u32(bytes, 0);
    if magic != MNIST_IMAGE_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: MNIST_IMAGE_MAGIC,
            found: magic,
        });
    }
    let (n, r, c) = (be_u32(bytes, 4) as usize, be_u32(bytes, 8) as usize, be_u32(bytes, 12) as usize);
    let need = 16 + n * r * c;
    if bytes.len() < need {
        return Err(truncated(path, format!("header declares {need} bytes, file has {}", bytes.len())));
    }
    Ok((n, r, c, &bytes[16..need]))
}

fn parse_idx_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    if bytes.len() < 8 {
        return Err(truncated(path, format!("{} bytes is shorter than the 8-byte header", bytes.len())));
    }
    let magic = be_u32(bytes, 0);
    if magic != MNIST_LABEL_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: MNIST_LABEL_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(bytes, 4) as usize;
    if bytes.len() < 8 + n {
        return Err(truncated(path, format!("header declares {n} labels, file has {}", bytes.len() - 8)));
    }
    Ok(bytes[8..8 + n].to_vec())
}

/// Reads CIFAR-10 binary batches: 3073-byte records of one label byte then
/// the R, G and B planes (32×32 each). Images are `[n, 3, 32, 32]`,
/// standardized per channel.
pub fn load_cifar10_binary<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset> {
    let norm = Standardization::cifar10();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let bytes = read_file(path)?;
        if bytes.len() % CIFAR_RECORD_BYTES != 0 {
            return Err(truncated(
                path,
                format!("{} bytes is not a multiple of the {CIFAR_RECORD_BYTES}-byte record", bytes.len()),
            ));
        }
        for record in bytes.chunks_exact(CIFAR_RECORD_BYTES) {
            if record[0] > 9 {
                return Err(Error::LabelOutOfRange {
                    index: labels.len(),
                    label: record[0],
                });
            }
            labels.push(record[0]);
            for (i, &p) in record[1..].iter().enumerate() {
                data.push(norm.apply(i / 1024, p));
            }
        }
    }
    let n = labels.len();
    Dataset::new(Tensor::new(vec![n, 3, 32, 32], data)?, labels)
}

/// Canonical file locations below a data directory.
#[derive(Clone, Debug)]
pub struct DataPaths {
    pub root: PathBuf,
}

impl DataPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn mnist_train(&self) -> Result<Dataset> {
        let d = self.root.join("mnist");
        load_mnist_idx(d.join("train-images-idx3-ubyte"), d.join("train-labels-idx1-ubyte"))
    }

    pub fn mnist_test(&self) -> Result<Dataset> {
        let d = self.root.join("mnist");
        load_mnist_idx(d.join("t10k-images-idx3-ubyte"), d.join("t10k-labels-idx1-ubyte"))
    }

    pub fn cifar10_train(&self) -> Result<Dataset> {
        let d = self.root.join("cifar-10-batches-bin");
        let paths: Vec<PathBuf> = (1..=5).map(|i| d.join(format!("data_batch_{i}.bin"))).collect();
        load_cifar10_binary(&paths)
    }

    pub fn cifar10_test(&self) -> Result<Dataset> {
        load_cifar10_binary(&[self.root.join("cifar-10-batches-bin").join("test_batch.bin")])
    }
}

/// Batch size plus the seed/epoch that determine the visiting order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub seed: u64,
    pub epoch: u64,
}

impl BatchPlan {
    /// Permutation of `0..n`; a pure function of `(seed, epoch)`.
    pub fn order(&self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = rng_from_seed(derive_seed(self.seed, stream::EPOCH.wrapping_add(self.epoch)));
        idx.shuffle(&mut rng);
        idx
    }

    /// Index groups of `batch_size` (the last one may be short).
    pub fn index_batches(&self, n: usize) -> Vec<Vec<usize>> {
        let size = self.batch_size.max(1);
        self.order(n).chunks(size).map(<[usize]>::to_vec).collect()
    }
}

/// Iterates the batches of one epoch.
pub fn batches<'a, T: Scalar>(
    dataset: &'a Dataset,
    plan: BatchPlan,
) -> impl Iterator<Item = (Tensor<T>, Vec<usize>)> + 'a {
    plan.index_batches(dataset.len())
        .into_iter()
        .map(move |idx| dataset.gather::<T>(&idx))
}
