mod common;

use std::io::Write;

use common::*;
use prunelab::data::*;
use prunelab::Error;

fn write(dir: &tempfile::TempDir, name: &str, bytes: &[u8]) -> std::path::PathBuf {
    let p = dir.path().join(name);
    std::fs::File::create(&p).unwrap().write_all(bytes).unwrap();
    p
}

fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
    std::iter::once(magic).chain(dims.iter().copied()).flat_map(u32::to_be_bytes).collect()
}

#[test]
fn idx_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let mut images = header(0x803, &[2, 2, 2]);
    images.extend([0u8, 255, 10, 20, 30, 40, 50, 60]);
    let mut labels = header(0x801, &[2]);
    labels.extend([3u8, 7]);
    let ip = write(&dir, "img", &images);
    let lp = write(&dir, "lbl", &labels);
    let ds = load_mnist_idx(&ip, &lp).unwrap();
    assert_eq!(ds.images.shape(), &[2, 4]);
    assert_eq!(ds.labels, vec![3, 7]);

    let bad = write(&dir, "bad", &header(0x804, &[2, 2, 2]));
    assert!(matches!(load_mnist_idx(&bad, &lp), Err(Error::BadMagic { found: 0x804, .. })));
    let short = write(&dir, "short", &images[..images.len() - 1]);
    assert!(matches!(load_mnist_idx(&short, &lp), Err(Error::Truncated { .. })));
    let mut three = header(0x801, &[3]);
    three.extend([1u8, 2, 3]);
    let lp3 = write(&dir, "lbl3", &three);
    assert!(matches!(load_mnist_idx(&ip, &lp3), Err(Error::CountMismatch { images: 2, labels: 3 })));
}

#[test]
fn cifar_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let mut rec = vec![4u8];
    rec.extend(std::iter::repeat_n(128u8, 3072));
    let ok = write(&dir, "ok.bin", &rec);
    let ds = load_cifar10_binary(&[&ok]).unwrap();
    assert_eq!(ds.images.shape(), &[1, 3, 32, 32]);
    let short = write(&dir, "short.bin", &rec[..3000]);
    assert!(matches!(load_cifar10_binary(&[&short]), Err(Error::Truncated { .. })));
    rec[0] = 10;
    let bad = write(&dir, "bad.bin", &rec);
    assert!(matches!(load_cifar10_binary(&[&bad]), Err(Error::LabelOutOfRange { label: 10, .. })));
}

#[test]
fn standardization_round_trips() {
    for norm in [Standardization::mnist(), Standardization::cifar10()] {
        for c in 0..norm.mean.len() {
            for p in 0..=255u8 {
                assert!((norm.invert(c, norm.apply(c, p)) - f64::from(p) / 255.0).abs() <= 1e-6);
            }
        }
    }
}

#[test]
fn real_files_have_expected_shapes() {
    if !mnist_available() || !cifar_available() {
        eprintln!("datasets not found under {}; skipping", data_dir().display());
        return;
    }
    let paths = DataPaths::new(data_dir());
    let m = paths.mnist_test().unwrap();
    assert_eq!(m.images.shape(), &[10_000, 784]);
    let c = paths.cifar10_test().unwrap();
    assert_eq!(c.images.shape(), &[10_000, 3, 32, 32]);
    let mut counts = [0usize; 10];
    for &l in &c.labels {
        counts[usize::from(l)] += 1;
    }
    assert!(counts.iter().all(|&n| n == 1000));
}
