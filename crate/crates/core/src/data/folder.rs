use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::DynamicImage;
use ndarray::Array4;

use super::{normalize_u8, DatasetSplit, Split};
use crate::error::{Error, Result};

const EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

fn is_image(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Loads `root/<class>/<file>.{png,jpg,bmp}`. Classes are indexed in
/// lexicographic directory order and files are read in lexicographic order.
/// Images are converted to `channels` (1 = grayscale, 3 = RGB), resized to
/// `size x size` and mapped to `[-1, 1]`.
pub fn load_image_folder(
    root: &Path,
    size: usize,
    channels: usize,
    split: Split,
) -> Result<DatasetSplit> {
    if channels != 1 && channels != 3 {
        return Err(Error::Config(format!(
            "channels must be 1 or 3, got {channels}"
        )));
    }
    if size == 0 {
        return Err(Error::Config("image size must be positive".into()));
    }
    let class_dirs: Vec<PathBuf> = sorted_entries(root)?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect();
    if class_dirs.is_empty() {
        return Err(Error::Data(format!(
            "{} has no class subdirectories",
            root.display()
        )));
    }
    let per_image = size * size * channels;
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    let mut class_names = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        class_names.push(
            dir.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
        let files: Vec<PathBuf> = sorted_entries(dir)?
            .into_iter()
            .filter(|p| is_image(p))
            .collect();
        if files.is_empty() {
            return Err(Error::Data(format!(
                "class directory {} contains no images",
                dir.display()
            )));
        }
        for file in files {
            let img = image::open(&file).map_err(|source| Error::Decode {
                path: file.clone(),
                source,
            })?;
            let img = if img.width() as usize != size || img.height() as usize != size {
                img.resize_exact(size as u32, size as u32, FilterType::Triangle)
            } else {
                img
            };
            let raw = match channels {
                1 => DynamicImage::ImageLuma8(img.to_luma8()).into_bytes(),
                _ => DynamicImage::ImageRgb8(img.to_rgb8()).into_bytes(),
            };
            debug_assert_eq!(raw.len(), per_image);
            pixels.extend(raw.into_iter().map(normalize_u8));
            labels.push(label);
        }
    }
    let n = labels.len();
    let images =
        Array4::from_shape_vec((n, size, size, channels), pixels).expect("sized per image");
    DatasetSplit::new(images, labels, split, class_names)
}
