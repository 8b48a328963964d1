//! Dataset loading, label masking and batch streams.

use std::collections::HashSet;
use std::sync::Arc;

use maven::data::{
    batch_stream, load_cifar10, load_image_folder, make_glyphs, make_toy_ring, mask_labels,
    normalize_u8, ring_centers, DatasetSplit, Split, StreamKind,
};
use ndarray::Array4;
use proptest::prelude::*;

fn labeled_split(counts: &[usize]) -> Arc<DatasetSplit> {
    let labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
        .collect();
    let n = labels.len();
    let images = Array4::zeros((n, 1, 1, 1));
    let names = (0..counts.len()).map(|c| format!("c{c}")).collect();
    Arc::new(DatasetSplit::new(images, labels, Split::Train, names).unwrap())
}

#[test]
fn masking_stays_within_one_of_proportional_over_1000_seeds() {
    let counts = [120, 37, 80, 9, 254];
    let split = labeled_split(&counts);
    for fraction in [0.1, 0.25] {
        for seed in 0..1000 {
            let view = mask_labels(split.clone(), fraction, seed).unwrap();
            for (c, (&got, &n)) in view.labeled_per_class().iter().zip(&counts).enumerate() {
                let want = fraction * n as f64;
                assert!(
                    (got as f64 - want).abs() <= 1.0,
                    "seed {seed} class {c}: {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn masking_depends_only_on_the_seed() {
    let split = labeled_split(&[50, 50, 50]);
    let a = mask_labels(split.clone(), 0.1, 3).unwrap();
    let b = mask_labels(split.clone(), 0.1, 3).unwrap();
    let c = mask_labels(split, 0.1, 4).unwrap();
    assert_eq!(a.labeled_indices(), b.labeled_indices());
    assert_ne!(a.labeled_indices(), c.labeled_indices());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn streams_never_repeat_within_an_epoch(n in 20usize..120, batch in 1usize..16, seed in 0u64..1000) {
        let split = labeled_split(&[n / 2, n - n / 2]);
        let view = mask_labels(split, 0.5, seed).unwrap();
        for kind in [StreamKind::Any, StreamKind::Labeled, StreamKind::Unlabeled] {
            let Ok(mut stream) = batch_stream(&view, batch, kind, seed) else { continue };
            for _ in 0..2 {
                let mut seen = HashSet::new();
                for _ in 0..stream.batches_per_epoch() {
                    let (idx, b) = stream.next_indexed();
                    prop_assert_eq!(b.len(), batch);
                    for i in idx {
                        prop_assert!(seen.insert(i), "item {} repeated", i);
                    }
                }
            }
        }
    }

    #[test]
    fn pixel_mapping_is_affine_and_invertible(v in 0u8..=255) {
        let x = normalize_u8(v);
        prop_assert!((-1.0..=1.0).contains(&x));
        prop_assert_eq!(((x + 1.0) * 127.5).round() as u8, v);
        if v < 255 {
            prop_assert!((normalize_u8(v + 1) - x - 1.0 / 127.5).abs() < 1e-12);
        }
    }
}

#[test]
fn ring_samples_sit_near_their_generating_mode() {
    let (radius, modes) = (2.0, 8);
    let split = make_toy_ring(modes, 500, radius, radius / 20.0, 11).unwrap();
    let centers = ring_centers(modes, radius);
    for (k, c) in centers.iter().enumerate() {
        let a = 2.0 * std::f64::consts::PI * k as f64 / modes as f64;
        assert!((c[0] - radius * a.cos()).abs() < 1e-9 && (c[1] - radius * a.sin()).abs() < 1e-9);
    }
    let rows = split.rows();
    let hits = rows
        .rows()
        .into_iter()
        .zip(split.labels())
        .filter(|(p, &y)| {
            let nearest = (0..modes)
                .min_by(|&i, &j| {
                    let d = |m: usize| (p[0] - centers[m][0]).hypot(p[1] - centers[m][1]);
                    d(i).total_cmp(&d(j))
                })
                .unwrap();
            nearest == y
        })
        .count();
    assert!(
        hits as f64 >= 0.99 * split.len() as f64,
        "{hits}/{}",
        split.len()
    );

    let exact = make_toy_ring(modes, 3, radius, 0.0, 1).unwrap();
    for (p, &y) in exact.rows().rows().into_iter().zip(exact.labels()) {
        assert_eq!([p[0], p[1]], centers[y]);
    }
}

#[test]
fn glyphs_are_balanced_and_in_range() {
    let g = make_glyphs(7, 16, 0.2, 2, Split::Test).unwrap();
    assert_eq!(g.len(), 70);
    assert_eq!(g.class_counts(), vec![7; 10]);
    assert!(g.images().iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn image_folder_loads_grayscale_in_range() {
    let dir = tempfile::tempdir().unwrap();
    for (c, shade) in [("normal", 30u8), ("pneumonia", 220u8)] {
        let class_dir = dir.path().join(c);
        std::fs::create_dir_all(&class_dir).unwrap();
        for i in 0..3 {
            let img = image::RgbImage::from_pixel(
                40,
                24,
                image::Rgb([shade, shade.saturating_add(i), shade]),
            );
            img.save(class_dir.join(format!("{i}.png"))).unwrap();
        }
    }
    let split = load_image_folder(dir.path(), 16, 1, Split::Train).unwrap();
    assert_eq!(split.len(), 6);
    assert_eq!(split.class_names, vec!["normal", "pneumonia"]);
    assert_eq!(split.shape(), maven::ImageShape::new(16, 16, 1));
    assert!(split.images().iter().all(|v| (-1.0..=1.0).contains(v)));
    let means = split.mean_intensities();
    assert!(means[0] < -0.5 && means[5] > 0.5);
}

#[test]
fn cifar_binary_records_load_as_hwc() {
    let dir = tempfile::tempdir().unwrap();
    let mut record = vec![3u8];
    // Channel-major planes: R all 0, G all 255, B ramps.
    record.extend(std::iter::repeat_n(0u8, 1024));
    record.extend(std::iter::repeat_n(255u8, 1024));
    record.extend((0..1024).map(|i| (i % 256) as u8));
    let mut file = Vec::new();
    for _ in 0..2 {
        file.extend(&record);
    }
    std::fs::write(dir.path().join("test_batch.bin"), &file).unwrap();
    let split = load_cifar10(dir.path(), Split::Test).unwrap();
    assert_eq!(split.len(), 2);
    assert_eq!(split.labels(), &[3, 3]);
    let img = split.images();
    assert_eq!(img[[0, 0, 0, 0]], -1.0);
    assert_eq!(img[[0, 0, 0, 1]], 1.0);
    assert_eq!(img[[0, 0, 5, 2]], normalize_u8(5));
    assert_eq!(img[[1, 1, 0, 2]], normalize_u8(32));
}
