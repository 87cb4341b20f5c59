//! Segmentation network: conv backbone, deformable encoder neck, head.

mod backbone;
mod checkpoint;
mod config;
mod encoder;
mod head;
mod neck;

pub use backbone::backbone_forward;
pub use checkpoint::{read_records, write_records};
pub use config::{EncoderConfig, ModelConfig, NUM_LEVELS};
pub use encoder::{
    build_embeddings, deformable_attention, encoder_forward, generate_reference_points,
    positional_encoding, AttentionParams, EncoderParams, FfnParams, LinearParams,
    ReferencePoints,
};
pub use head::head_forward;
pub use neck::{dten_forward, fa_block, project_and_flatten, split_levels, ConvUnit, NeckParams};

use crate::autodiff::{Tape, Tensor, TensorId};
use crate::error::{Error, Result};
use crate::rng::Rng;
use std::collections::BTreeMap;
use std::path::Path;

/// Three feature maps ordered coarsest (l=1) to finest (l=3).
#[derive(Debug, Clone)]
pub struct MultiScaleFeatures {
    pub maps: [TensorId; NUM_LEVELS],
    pub shapes: [(usize, usize); NUM_LEVELS],
}

impl MultiScaleFeatures {
    pub fn new(tape: &Tape, maps: [TensorId; NUM_LEVELS]) -> Result<Self> {
        let mut shapes = [(0usize, 0usize); NUM_LEVELS];
        for (i, &m) in maps.iter().enumerate() {
            let s = tape.shape(m);
            if s.len() != 3 {
                return Err(Error::shape(format!("feature level {i} must be [c, h, w], got {s:?}")));
            }
            shapes[i] = (s[1], s[2]);
        }
        for i in 1..NUM_LEVELS {
            if shapes[i].0 <= shapes[i - 1].0 || shapes[i].1 <= shapes[i - 1].1 {
                return Err(Error::shape(format!(
                    "feature levels must grow strictly finer, got {shapes:?}"
                )));
            }
        }
        Ok(MultiScaleFeatures { maps, shapes })
    }
}

/// Whether a model acts as the pseudo-label source or the trainee.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Teacher,
    Student,
}

enum Init {
    KaimingUniform { fan_in: usize },
    Zero,
    One,
    Const(f64),
    Uniform(f64),
}

fn conv_unit(specs: &mut Vec<(String, Vec<usize>, Init)>, name: &str, cin: usize, cout: usize, k: usize) {
    specs.push((
        format!("{name}.weight"),
        vec![cout, cin, k, k],
        Init::KaimingUniform { fan_in: cin * k * k },
    ));
    specs.push((format!("{name}.bias"), vec![cout], Init::Zero));
    specs.push((format!("{name}.slope"), vec![1], Init::Const(0.25)));
}

fn conv_layer(specs: &mut Vec<(String, Vec<usize>, Init)>, name: &str, cin: usize, cout: usize, k: usize) {
    specs.push((
        format!("{name}.weight"),
        vec![cout, cin, k, k],
        Init::KaimingUniform { fan_in: cin * k * k },
    ));
    specs.push((format!("{name}.bias"), vec![cout], Init::Zero));
}

fn linear_layer(specs: &mut Vec<(String, Vec<usize>, Init)>, name: &str, fin: usize, fout: usize, zero: bool) {
    let init = if zero {
        Init::Zero
    } else {
        Init::KaimingUniform { fan_in: fin }
    };
    specs.push((format!("{name}.weight"), vec![fin, fout], init));
    specs.push((format!("{name}.bias"), vec![fout], Init::Zero));
}

fn norm_layer(specs: &mut Vec<(String, Vec<usize>, Init)>, name: &str, dim: usize) {
    specs.push((format!("{name}.gamma"), vec![dim], Init::One));
    specs.push((format!("{name}.beta"), vec![dim], Init::Zero));
}

/// Parameter shapes and initializers, in a fixed construction order so a
/// seed fully determines the initial weights.
fn param_specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let [c1, c2, c3] = cfg.backbone_channels;
    let mut specs = Vec::new();

    conv_unit(&mut specs, "backbone.conv1", 3, c3, 3);
    conv_unit(&mut specs, "backbone.conv2", c3, c3, 3);
    conv_unit(&mut specs, "backbone.conv3", c3, c2, 3);
    conv_unit(&mut specs, "backbone.conv4", c2, c1, 3);

    if cfg.use_dten {
        let enc = &cfg.encoder;
        let c = enc.hidden_dim;
        let hlp = enc.heads * enc.levels * enc.points;
        for (l, &cl) in [c1, c2, c3].iter().enumerate() {
            conv_layer(&mut specs, &format!("neck.input_proj.{l}"), cl, c, 1);
            norm_layer(&mut specs, &format!("neck.input_norm.{l}"), c);
        }
        for l in 0..NUM_LEVELS {
            specs.push((
                format!("neck.level_embed.{l}"),
                vec![c],
                Init::Uniform(1.0 / (c as f64).sqrt()),
            ));
        }
        linear_layer(&mut specs, "neck.attn.value", c, c, false);
        // offsets start at the reference points and weights start uniform
        linear_layer(&mut specs, "neck.attn.offset", c, hlp * 2, true);
        linear_layer(&mut specs, "neck.attn.weight", c, hlp, true);
        linear_layer(&mut specs, "neck.attn.out", c, c, false);
        norm_layer(&mut specs, "neck.norm1", c);
        linear_layer(&mut specs, "neck.ffn.fc1", c, enc.ffn_dim, false);
        specs.push(("neck.ffn.slope".into(), vec![1], Init::Const(0.25)));
        linear_layer(&mut specs, "neck.ffn.fc2", enc.ffn_dim, c, false);
        norm_layer(&mut specs, "neck.norm2", c);
        conv_unit(&mut specs, "neck.fa.0", c1, c, 3);
        conv_unit(&mut specs, "neck.fa.1", c2, c, 3);
        conv_unit(&mut specs, "neck.fa.2", c3, c, 3);
    }

    let hc = cfg.head_in_channels();
    conv_unit(&mut specs, "head.conv1", hc, hc, 3);
    conv_layer(&mut specs, "head.conv2", hc, 1, 1);

    specs
}

/// Named parameter store for one network instance. Teacher and student share
/// the architecture; they differ only in weights and role tag.
#[derive(Clone)]
pub struct SegModel {
    pub role: Role,
    pub cfg: ModelConfig,
    params: BTreeMap<String, Tensor>,
}

/// Tape handles for every parameter of a bound model.
pub struct BoundParams {
    pub ids: BTreeMap<String, TensorId>,
}

impl BoundParams {
    pub fn id(&self, name: &str) -> TensorId {
        *self
            .ids
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }
}

impl SegModel {
    pub fn new(cfg: ModelConfig, role: Role, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::new(seed);
        let mut params = BTreeMap::new();
        for (name, shape, init) in param_specs(&cfg) {
            let numel: usize = shape.iter().product();
            let data: Vec<f64> = match init {
                Init::KaimingUniform { fan_in } => {
                    let bound = (6.0 / fan_in as f64).sqrt();
                    (0..numel).map(|_| rng.uniform(-bound, bound)).collect()
                }
                Init::Zero => vec![0.0; numel],
                Init::One => vec![1.0; numel],
                Init::Const(v) => vec![v; numel],
                Init::Uniform(b) => (0..numel).map(|_| rng.uniform(-b, b)).collect(),
            };
            params.insert(name, Tensor::new(shape, data)?);
        }
        Ok(SegModel { role, cfg, params })
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut BTreeMap<String, Tensor> {
        &mut self.params
    }

    /// Copies every parameter onto a tape. With `trainable` set the leaves
    /// collect gradients during `backward`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Result<BoundParams> {
        let mut ids = BTreeMap::new();
        for (name, tensor) in &self.params {
            let mut t = tensor.clone();
            t.requires_grad = trainable;
            t.grad = None;
            ids.insert(name.clone(), tape.leaf(t)?);
        }
        Ok(BoundParams { ids })
    }

    /// Full forward pass: image `[3, h, w]` (extents divisible by 16) to a
    /// sigmoid probability map `[1, h, w]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        image: TensorId,
        training: bool,
        rng: &mut Rng,
    ) -> Result<TensorId> {
        let shape = tape.shape(image).to_vec();
        if shape.len() != 3 || shape[0] != 3 {
            return Err(Error::shape(format!("image must be [3, h, w], got {shape:?}")));
        }
        let (h, w) = (shape[1], shape[2]);
        let feats = backbone_forward(tape, bound, image)?;
        let head_in = if self.cfg.use_dten {
            let neck = NeckParams::from_bound(bound);
            dten_forward(tape, &feats, &neck, &self.cfg.encoder, training, rng)?
        } else {
            feats.maps[2]
        };
        head_forward(tape, bound, head_in, h, w)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let records: Vec<(&str, &Tensor)> = self
            .params
            .iter()
            .map(|(n, t)| (n.as_str(), t))
            .collect();
        checkpoint::write_records(path, &records)
    }

    /// Rebuilds a model from a checkpoint; the parameter table must match the
    /// architecture implied by `cfg` exactly.
    pub fn load(path: &Path, cfg: ModelConfig, role: Role) -> Result<Self> {
        let mut model = SegModel::new(cfg, role, 0)?;
        let records = checkpoint::read_records(path)?;
        if records.len() != model.params.len() {
            return Err(Error::checkpoint(format!(
                "{}: checkpoint has {} parameters, architecture expects {}",
                path.display(),
                records.len(),
                model.params.len()
            )));
        }
        for (name, tensor) in records {
            match model.params.get_mut(&name) {
                Some(dst) if dst.shape == tensor.shape => *dst = tensor,
                Some(dst) => {
                    return Err(Error::checkpoint(format!(
                        "{}: parameter {name} has shape {:?}, architecture expects {:?}",
                        path.display(),
                        tensor.shape,
                        dst.shape
                    )))
                }
                None => {
                    return Err(Error::checkpoint(format!(
                        "{}: unknown parameter {name}",
                        path.display()
                    )))
                }
            }
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn teacher_student_same_parameter_names() {
        let t = SegModel::new(ModelConfig::tiny(), Role::Teacher, 1).unwrap();
        let s = SegModel::new(ModelConfig::tiny(), Role::Student, 2).unwrap();
        let tn: Vec<_> = t.param_names().collect();
        let sn: Vec<_> = s.param_names().collect();
        assert_eq!(tn, sn);
    }

    #[test]
    fn same_seed_same_weights() {
        let a = SegModel::new(ModelConfig::tiny(), Role::Teacher, 9).unwrap();
        let b = SegModel::new(ModelConfig::tiny(), Role::Teacher, 9).unwrap();
        for (name, t) in a.params() {
            assert_eq!(t.data, b.param(name).unwrap().data, "{name}");
        }
    }

    #[test]
    fn three_fa_blocks_exist() {
        let m = SegModel::new(ModelConfig::tiny(), Role::Teacher, 1).unwrap();
        let fa: Vec<_> = m.param_names().filter(|n| n.starts_with("neck.fa.")).collect();
        assert_eq!(fa.len(), 9); // weight + bias + slope per block
        for l in 0..3 {
            assert!(fa.iter().any(|n| n.starts_with(&format!("neck.fa.{l}."))));
        }
    }

    #[test]
    fn offset_and_weight_linears_start_at_zero() {
        let m = SegModel::new(ModelConfig::tiny(), Role::Teacher, 4).unwrap();
        for name in ["neck.attn.offset.weight", "neck.attn.offset.bias", "neck.attn.weight.weight"] {
            assert!(m.param(name).unwrap().data.iter().all(|&v| v == 0.0), "{name}");
        }
    }
}
