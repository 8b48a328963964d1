//! Checksum-verified downloads of the benchmark archives. Kept out of the
//! library so loading and training never touch the network.

use std::fs::{self, File};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use md5::{Digest, Md5};

use maven::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Asset {
    pub url: &'static str,
    pub file: &'static str,
    pub md5: &'static str,
}

pub const SVHN: [Asset; 2] = [
    Asset {
        url: "http://ufldl.stanford.edu/housenumbers/train_32x32.mat",
        file: "train_32x32.mat",
        md5: "e26dedcc434d2e4c54c9b2d4a06d8373",
    },
    Asset {
        url: "http://ufldl.stanford.edu/housenumbers/test_32x32.mat",
        file: "test_32x32.mat",
        md5: "eb5a983be6a315427106f1b164d9cef3",
    },
];

pub const CIFAR10: [Asset; 1] = [Asset {
    url: "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz",
    file: "cifar-10-binary.tar.gz",
    md5: "c32a1d4ab5d03f1284b67883e8d87530",
}];

/// Hex MD5 of everything `reader` yields.
pub fn md5_hex(mut reader: impl Read) -> io::Result<String> {
    let mut hasher = Md5::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

pub fn verify(path: &Path, expected: &str) -> Result<bool> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(md5_hex(f).map_err(|e| Error::io(path, e))? == expected)
}

/// Downloads `asset` into `dir` unless a file with the right checksum is
/// already there. A checksum mismatch after download is an error and the
/// partial file is removed.
pub fn fetch(asset: &Asset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let dest = dir.join(asset.file);
    if dest.exists() && verify(&dest, asset.md5)? {
        log::info!("{} already present", dest.display());
        return Ok(dest);
    }
    let partial = dir.join(format!("{}.part", asset.file));
    let response = ureq::get(asset.url)
        .call()
        .map_err(|e| Error::Fetch(format!("{}: {e}", asset.url)))?;
    let mut body = response.into_body().into_reader();
    let mut out = File::create(&partial).map_err(|e| Error::io(&partial, e))?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = body
            .read(&mut buf)
            .map_err(|e| Error::Fetch(format!("{}: {e}", asset.url)))?;
        if n == 0 {
            break;
        }
        out.write_all(&buf[..n])
            .map_err(|e| Error::io(&partial, e))?;
    }
    drop(out);
    if !verify(&partial, asset.md5)? {
        let _ = fs::remove_file(&partial);
        return Err(Error::Fetch(format!("checksum mismatch for {}", asset.url)));
    }
    fs::rename(&partial, &dest).map_err(|e| Error::io(&dest, e))?;
    Ok(dest)
}

/// Unpacks a `.tar.gz` archive into `dir`.
pub fn extract_tar_gz(archive: &Path, dir: &Path) -> Result<()> {
    let f = File::open(archive).map_err(|e| Error::io(archive, e))?;
    tar::Archive::new(flate2::read::GzDecoder::new(f))
        .unpack(dir)
        .map_err(|e| Error::io(archive, e))
}

/// Fetches a named dataset (`svhn` or `cifar10`) into `dir`; returns the
/// directory to point `dataset.path` at.
pub fn fetch_dataset(name: &str, dir: &Path) -> Result<PathBuf> {
    match name {
        "svhn" => {
            let out = dir.join("svhn");
            for a in &SVHN {
                fetch(a, &out)?;
            }
            Ok(out)
        }
        "cifar10" => {
            let archive = fetch(&CIFAR10[0], dir)?;
            extract_tar_gz(&archive, dir)?;
            Ok(dir.join("cifar-10-batches-bin"))
        }
        other => Err(Error::Config(format!(
            "unknown dataset {other:?}; expected svhn or cifar10"
        ))),
    }
}
