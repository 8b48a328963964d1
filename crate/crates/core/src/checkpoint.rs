//! On-disk checkpoints.
//!
//! Each network is stored as `<name>.json` (a manifest echoing the network
//! configuration with one entry per tensor) next to `<name>.bin`, the tensors
//! concatenated as little-endian `f32`. Optimizer moments use the same layout.
//! A full model state is a directory holding every network, every optimizer
//! and `state.json` with the model configuration and counters.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::networks::{Network, NetworkConfig};
use crate::optim::Adam;
use crate::training::{ModelConfig, ModelState, TrainingConfig};

pub const FORMAT: &str = "maven-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the blob, in elements.
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub network: String,
    pub dtype: String,
    pub endianness: String,
    pub config: NetworkConfig,
    pub params: Vec<TensorEntry>,
    pub buffers: Vec<TensorEntry>,
}

fn write_blob(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    let bytes: Vec<u8> = values.flat_map(|v| (v as f32).to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_blob(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Checkpoint(format!(
            "{} is not a whole number of f32 values",
            path.display()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn entries(
    tensors: impl Iterator<Item = (String, Vec<usize>, usize)>,
    offset: &mut usize,
) -> Vec<TensorEntry> {
    tensors
        .map(|(name, shape, len)| {
            let e = TensorEntry {
                name,
                shape,
                offset: *offset,
                len,
            };
            *offset += len;
            e
        })
        .collect()
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `<dir>/<name>.json` and `<dir>/<name>.bin`.
pub fn save_network<N: Network>(
    net: &N,
    name: &str,
    config: &NetworkConfig,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let params = net.params();
    let buffers = net.buffers();
    let mut offset = 0;
    let p = entries(
        params
            .iter()
            .map(|t| (t.name.clone(), t.shape.clone(), t.data.len())),
        &mut offset,
    );
    let b = entries(
        buffers
            .iter()
            .map(|t| (t.name.clone(), t.shape.clone(), t.data.len())),
        &mut offset,
    );
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        network: name.into(),
        dtype: "f32".into(),
        endianness: "little".into(),
        config: config.clone(),
        params: p,
        buffers: b,
    };
    write_json(&dir.join(format!("{name}.json")), &manifest)?;
    write_blob(
        &dir.join(format!("{name}.bin")),
        params
            .iter()
            .chain(buffers.iter())
            .flat_map(|t| t.data.iter().copied()),
    )
}

fn check_entries(
    what: &str,
    saved: &[TensorEntry],
    live: &[(String, Vec<usize>)],
    blob_len: usize,
) -> Result<()> {
    if saved.len() != live.len() {
        return Err(Error::Checkpoint(format!(
            "{what}: manifest lists {} tensors, model has {}",
            saved.len(),
            live.len()
        )));
    }
    for (e, (name, shape)) in saved.iter().zip(live) {
        if &e.name != name || &e.shape != shape {
            return Err(Error::Checkpoint(format!(
                "{what}: tensor {} {:?} does not match model tensor {name} {shape:?}",
                e.name, e.shape
            )));
        }
        if e.len != shape.iter().product::<usize>() || e.offset + e.len > blob_len {
            return Err(Error::Checkpoint(format!(
                "{what}: tensor {} has an inconsistent extent",
                e.name
            )));
        }
    }
    Ok(())
}

/// Reads the manifest of a saved network.
pub fn read_manifest(dir: &Path, name: &str) -> Result<Manifest> {
    let m: Manifest = read_json(&dir.join(format!("{name}.json")))?;
    if m.format != FORMAT || m.version != VERSION || m.dtype != "f32" || m.endianness != "little" {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint {} v{} ({} {})",
            m.format, m.version, m.dtype, m.endianness
        )));
    }
    Ok(m)
}

/// Loads tensors saved by [`save_network`] into `net`, whose architecture must
/// match the manifest exactly.
pub fn load_network_into<N: Network>(net: &mut N, name: &str, dir: &Path) -> Result<()> {
    let manifest = read_manifest(dir, name)?;
    let blob = read_blob(&dir.join(format!("{name}.bin")))?;
    let live_p: Vec<(String, Vec<usize>)> = net
        .params()
        .iter()
        .map(|t| (t.name.clone(), t.shape.clone()))
        .collect();
    let live_b: Vec<(String, Vec<usize>)> = net
        .buffers()
        .iter()
        .map(|t| (t.name.clone(), t.shape.clone()))
        .collect();
    check_entries(name, &manifest.params, &live_p, blob.len())?;
    check_entries(name, &manifest.buffers, &live_b, blob.len())?;
    for (dst, e) in net.params_mut().into_iter().zip(&manifest.params) {
        dst.copy_from_slice(&blob[e.offset..e.offset + e.len]);
    }
    for (dst, e) in net.buffers_mut().into_iter().zip(&manifest.buffers) {
        dst.copy_from_slice(&blob[e.offset..e.offset + e.len]);
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OptimizerManifest {
    format: String,
    version: u32,
    steps: u64,
    learning_rate: f64,
    beta1: f64,
    first: Vec<TensorEntry>,
    second: Vec<TensorEntry>,
}

/// Writes Adam's clock and moment estimates as `<name>.json` / `<name>.bin`.
pub fn save_optimizer(opt: &Adam, name: &str, dir: &Path) -> Result<()> {
    let mut offset = 0;
    let shapes = |ms: &[Vec<f64>]| -> Vec<(String, Vec<usize>, usize)> {
        ms.iter()
            .enumerate()
            .map(|(i, m)| (i.to_string(), vec![m.len()], m.len()))
            .collect()
    };
    let first = entries(shapes(opt.first_moments()).into_iter(), &mut offset);
    let second = entries(shapes(opt.second_moments()).into_iter(), &mut offset);
    let manifest = OptimizerManifest {
        format: FORMAT.into(),
        version: VERSION,
        steps: opt.steps(),
        learning_rate: opt.learning_rate(),
        beta1: opt.beta1(),
        first,
        second,
    };
    write_json(&dir.join(format!("{name}.json")), &manifest)?;
    write_blob(
        &dir.join(format!("{name}.bin")),
        opt.first_moments()
            .iter()
            .chain(opt.second_moments())
            .flatten()
            .copied(),
    )
}

/// Restores moments saved by [`save_optimizer`] into `opt`.
pub fn load_optimizer_into(opt: &mut Adam, name: &str, dir: &Path) -> Result<()> {
    let m: OptimizerManifest = read_json(&dir.join(format!("{name}.json")))?;
    let blob = read_blob(&dir.join(format!("{name}.bin")))?;
    let live: Vec<(String, Vec<usize>)> = opt
        .first_moments()
        .iter()
        .enumerate()
        .map(|(i, v)| (i.to_string(), vec![v.len()]))
        .collect();
    check_entries(name, &m.first, &live, blob.len())?;
    check_entries(name, &m.second, &live, blob.len())?;
    let take = |es: &[TensorEntry]| {
        es.iter()
            .map(|e| blob[e.offset..e.offset + e.len].to_vec())
            .collect()
    };
    opt.restore(m.steps, take(&m.first), take(&m.second))?;
    opt.set_learning_rate(m.learning_rate)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StateManifest {
    format: String,
    version: u32,
    model: ModelConfig,
    epoch: usize,
    step: usize,
    rng_seed: [u8; 32],
    rng_stream: u64,
    rng_word_pos: u128,
}

fn discriminator_name(k: usize) -> String {
    format!("discriminator-{k}")
}

/// Writes the full state to `<root>/step-<step>` and returns that directory.
pub fn save_state(state: &ModelState, root: &Path) -> Result<PathBuf> {
    let dir = root.join(format!("step-{:08}", state.step));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let cfg = &state.config.network;
    if let (Some(e), Some(o)) = (&state.encoder, &state.opt_e) {
        save_network(e, "encoder", cfg, &dir)?;
        save_optimizer(o, "encoder-adam", &dir)?;
    }
    save_network(&state.generator, "generator", cfg, &dir)?;
    save_optimizer(&state.opt_g, "generator-adam", &dir)?;
    for (k, (d, o)) in state.discriminators.iter().zip(&state.opt_d).enumerate() {
        save_network(d, &discriminator_name(k), cfg, &dir)?;
        save_optimizer(o, &format!("{}-adam", discriminator_name(k)), &dir)?;
    }
    let manifest = StateManifest {
        format: FORMAT.into(),
        version: VERSION,
        model: state.config.clone(),
        epoch: state.epoch,
        step: state.step,
        rng_seed: state.rng.get_seed(),
        rng_stream: state.rng.get_stream(),
        rng_word_pos: state.rng.get_word_pos(),
    };
    write_json(&dir.join("state.json"), &manifest)?;
    Ok(dir)
}

/// Rebuilds a state written by [`save_state`]. Parameters round-trip through
/// `f32`.
pub fn load_state(dir: &Path) -> Result<ModelState> {
    let m: StateManifest = read_json(&dir.join("state.json"))?;
    if m.format != FORMAT || m.version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported state {} v{}",
            m.format, m.version
        )));
    }
    let mut state = ModelState::new(m.model, &TrainingConfig::default(), 0)?;
    if let (Some(e), Some(o)) = (&mut state.encoder, &mut state.opt_e) {
        load_network_into(e, "encoder", dir)?;
        load_optimizer_into(o, "encoder-adam", dir)?;
    }
    load_network_into(&mut state.generator, "generator", dir)?;
    load_optimizer_into(&mut state.opt_g, "generator-adam", dir)?;
    for (k, (d, o)) in state
        .discriminators
        .iter_mut()
        .zip(&mut state.opt_d)
        .enumerate()
    {
        load_network_into(d, &discriminator_name(k), dir)?;
        load_optimizer_into(o, &format!("{}-adam", discriminator_name(k)), dir)?;
    }
    state.epoch = m.epoch;
    state.step = m.step;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::from_seed(m.rng_seed);
    rng.set_stream(m.rng_stream);
    rng.set_word_pos(m.rng_word_pos);
    state.rng = rng;
    Ok(state)
}
