//! `.spnet` checkpoints: container magic `SPNET001`, a JSON header with the
//! architecture, training settings and the parameter table, and each
//! parameter tensor as an f32 array (column-major) named `param.<name>`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::contact::{ContactCvae, ContactCvaeConfig};
use super::nn::Params;
use super::pose::{PoseCvae, PoseCvaeConfig};
use super::{ContactLossWeights, PoseLossWeights};
use crate::container::{ContainerReader, ContainerWriter};
use crate::error::{Error, Result};

pub const NET_MAGIC: &[u8; 8] = b"SPNET001";
const FORMAT_VERSION: u32 = 1;

/// How a checkpoint was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo<W> {
    pub seed: u64,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss_weights: W,
}

#[derive(Serialize, Deserialize)]
struct Header<C, W> {
    format_version: u32,
    kind: String,
    config: C,
    training: CheckpointInfo<W>,
    /// `(name, rows, cols)` in parameter order.
    parameters: Vec<(String, usize, usize)>,
}

fn write_params(w: &mut ContainerWriter, params: &Params) -> Vec<(String, usize, usize)> {
    params
        .names()
        .iter()
        .zip(params.tensors())
        .map(|(name, t)| {
            w.f32s(&format!("param.{name}"), t.iter().map(|&v| v as f32));
            (name.clone(), t.nrows(), t.ncols())
        })
        .collect()
}

fn read_params(
    r: &ContainerReader,
    table: &[(String, usize, usize)],
) -> std::result::Result<Params, String> {
    let mut params = Params::default();
    for (name, rows, cols) in table {
        let values = r.f32s(&format!("param.{name}"))?;
        if values.len() != rows * cols {
            return Err(format!(
                "`{name}` has {} values, expected {rows} x {cols}",
                values.len()
            ));
        }
        params.push(
            name.clone(),
            DMatrix::from_iterator(*rows, *cols, values.into_iter().map(f64::from)),
        );
    }
    Ok(params)
}

fn save<C: Serialize, W: Serialize + Clone>(
    path: &Path,
    kind: &str,
    config: &C,
    info: &CheckpointInfo<W>,
    params: &Params,
    extra: impl FnOnce(&mut ContainerWriter),
) -> Result<()> {
    let mut w = ContainerWriter::new();
    let parameters = write_params(&mut w, params);
    extra(&mut w);
    let header = Header {
        format_version: FORMAT_VERSION,
        kind: kind.to_string(),
        config,
        training: info.clone(),
        parameters,
    };
    w.save(
        path,
        NET_MAGIC,
        serde_json::to_value(&header).expect("header serializes"),
    )
}

fn open<C: DeserializeOwned, W: DeserializeOwned>(
    path: &Path,
    kind: &str,
) -> Result<(ContainerReader, Header<C, W>, Params)> {
    let r = ContainerReader::open(path, NET_MAGIC)?;
    let bad = |m: String| Error::parse(path, m);
    let header: Header<C, W> =
        serde_json::from_value(r.header.clone()).map_err(|e| bad(e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    if header.kind != kind {
        return Err(bad(format!(
            "checkpoint holds a `{}` network, expected `{kind}`",
            header.kind
        )));
    }
    let params = read_params(&r, &header.parameters).map_err(bad)?;
    Ok((r, header, params))
}

pub fn save_pose_cvae(
    path: &Path,
    model: &PoseCvae,
    info: &CheckpointInfo<PoseLossWeights>,
) -> Result<()> {
    save(path, "pose", model.config(), info, model.params(), |_| {})
}

pub fn load_pose_cvae(path: &Path) -> Result<(PoseCvae, CheckpointInfo<PoseLossWeights>)> {
    let (_, header, params) = open::<PoseCvaeConfig, PoseLossWeights>(path, "pose")?;
    let model = PoseCvae::from_params(header.config, params)?;
    Ok((model, header.training))
}

pub fn save_contact_cvae(
    path: &Path,
    model: &ContactCvae,
    info: &CheckpointInfo<ContactLossWeights>,
) -> Result<()> {
    save(path, "contact", model.config(), info, model.params(), |w| {
        w.u32s("spiral", model.spiral().iter().copied())
    })
}

pub fn load_contact_cvae(path: &Path) -> Result<(ContactCvae, CheckpointInfo<ContactLossWeights>)> {
    let (r, header, params) = open::<ContactCvaeConfig, ContactLossWeights>(path, "contact")?;
    let spiral = r.u32s("spiral").map_err(|m| Error::parse(path, m))?;
    let model = ContactCvae::from_params(header.config, spiral, params)?;
    Ok((model, header.training))
}
