//! Model bundle: one directory holding everything scoring needs.
//!
//! Layout:
//!   meta.json     versioned metadata (dims, lambda, alpha, k, D, R, seeds,
//!                 provider id, training loss curve)
//!   clusters.json serialized PCA basis + centroids + tau
//!   vectors.txt   the word-vector table (may be empty; OOV hashing covers
//!                 the rest)
//!   params.bin    discriminator parameters: plain-text header, then the
//!                 flat parameter vector as little-endian f64
//!
//! `params.bin` stores the vector produced by
//! `DiscriminatorModel::param_vector` (layer weights row-major, then biases,
//! in branch order, centers last).

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::discriminator::DiscriminatorModel;
use crate::embed::VectorTable;
use crate::reduce::ClusterModel;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const PROVIDER_ID: &str = "token-mean-v1";
const PARAMS_MAGIC: &str = "logsphere-params";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleMeta {
    pub schema_version: u32,
    pub provider: String,
    pub d_rich: usize,
    pub d_abs: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub leak: f64,
    pub threshold_factor: f64,
    pub threshold: f64,
    pub radius_train: f64,
    pub seed: u64,
    pub oov_seed: u64,
    pub context_radius: usize,
    pub version_tag: Option<String>,
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub meta: BundleMeta,
    pub clusters: ClusterModel,
    pub table: VectorTable,
    pub disc: DiscriminatorModel,
}

impl ModelBundle {
    pub fn new(
        cfg: &PipelineConfig,
        clusters: ClusterModel,
        table: VectorTable,
        disc: DiscriminatorModel,
    ) -> Self {
        let meta = BundleMeta {
            schema_version: SCHEMA_VERSION,
            provider: PROVIDER_ID.to_string(),
            d_rich: cfg.d_rich,
            d_abs: cfg.d_abs,
            hidden_dim: cfg.hidden_dim,
            out_dim: cfg.out_dim,
            lambda: disc.lambda,
            alpha: disc.alpha,
            leak: disc.leak,
            threshold_factor: disc.threshold_factor,
            threshold: disc.threshold,
            radius_train: disc.radius_train,
            seed: cfg.seed,
            oov_seed: cfg.oov_seed,
            context_radius: cfg.context_radius,
            version_tag: cfg.version_tag.clone(),
            epoch_losses: disc.epoch_losses.clone(),
        };
        ModelBundle {
            meta,
            clusters,
            table,
            disc,
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta_json = serde_json::to_string_pretty(&self.meta)
            .map_err(|e| Error::Internal(e.to_string()))?;
        std::fs::write(dir.join("meta.json"), meta_json)
            .map_err(|e| Error::io(dir.join("meta.json"), e))?;
        let clusters_json =
            serde_json::to_string(&self.clusters).map_err(|e| Error::Internal(e.to_string()))?;
        std::fs::write(dir.join("clusters.json"), clusters_json)
            .map_err(|e| Error::io(dir.join("clusters.json"), e))?;
        crate::embed::save_vectors(dir.join("vectors.txt"), &self.table)?;
        write_params(&dir.join("params.bin"), &self.disc.param_vector())?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta_text = std::fs::read_to_string(dir.join("meta.json"))
            .map_err(|e| Error::io(dir.join("meta.json"), e))?;
        let meta: BundleMeta =
            serde_json::from_str(&meta_text).map_err(|e| Error::Data(format!("meta.json: {e}")))?;
        if meta.schema_version != SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "bundle schema version {} does not match supported version {}",
                meta.schema_version, SCHEMA_VERSION
            )));
        }
        let clusters_text = std::fs::read_to_string(dir.join("clusters.json"))
            .map_err(|e| Error::io(dir.join("clusters.json"), e))?;
        let clusters: ClusterModel = serde_json::from_str(&clusters_text)
            .map_err(|e| Error::Data(format!("clusters.json: {e}")))?;
        let vectors_path = dir.join("vectors.txt");
        let table = if std::fs::metadata(&vectors_path)
            .map(|m| m.len() > 0)
            .unwrap_or(false)
        {
            crate::embed::load_vectors(&vectors_path, meta.oov_seed)?
        } else {
            VectorTable::empty(meta.d_rich, meta.oov_seed)
        };
        let params = read_params(&dir.join("params.bin"))?;
        let mut disc = DiscriminatorModel::new(
            meta.d_rich,
            meta.d_abs,
            meta.hidden_dim,
            meta.out_dim,
            meta.lambda,
            meta.alpha,
            meta.leak,
            meta.seed,
        )?;
        let expected = disc.param_vector().len();
        if params.len() != expected {
            return Err(Error::Data(format!(
                "params.bin holds {} values, model shape needs {expected}",
                params.len()
            )));
        }
        disc.set_param_vector(&params);
        disc.threshold = meta.threshold;
        disc.radius_train = meta.radius_train;
        disc.threshold_factor = meta.threshold_factor;
        disc.epoch_losses = meta.epoch_losses.clone();
        Ok(ModelBundle {
            meta,
            clusters,
            table,
            disc,
        })
    }
}

fn write_params(path: &Path, params: &[f64]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write!(w, "{PARAMS_MAGIC} v{SCHEMA_VERSION}\ncount {}\nencoding f64-le\n\n", params.len())
        .map_err(|e| Error::io(path, e))?;
    for p in params {
        w.write_all(&p.to_le_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_params(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::io(path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    // header ends at the first blank line
    let sep = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::Data(format!("{}: missing header separator", path.display())))?;
    let header = std::str::from_utf8(&bytes[..sep])
        .map_err(|_| Error::Data(format!("{}: non-UTF-8 header", path.display())))?;
    let mut lines = header.lines();
    let magic = lines.next().unwrap_or("");
    if !magic.starts_with(PARAMS_MAGIC) {
        return Err(Error::Data(format!("{}: bad magic {magic:?}", path.display())));
    }
    let count: usize = lines
        .find_map(|l| l.strip_prefix("count "))
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| Error::Data(format!("{}: missing count", path.display())))?;
    let body = &bytes[sep + 2..];
    if body.len() != count * 8 {
        return Err(Error::Data(format!(
            "{}: expected {} bytes of parameters, found {}",
            path.display(),
            count * 8,
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
