use super::encoder::{build_embeddings, encoder_forward, generate_reference_points, EncoderParams};
use super::{BoundParams, EncoderConfig, MultiScaleFeatures, NUM_LEVELS};
use crate::autodiff::{Tape, TensorId};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Conv + bias (+ optional PReLU slope) handles for one block.
#[derive(Debug, Clone, Copy)]
pub struct ConvUnit {
    pub weight: TensorId,
    pub bias: TensorId,
    pub slope: TensorId,
}

impl ConvUnit {
    fn from_bound(bound: &BoundParams, name: &str) -> Self {
        ConvUnit {
            weight: bound.id(&format!("{name}.weight")),
            bias: bound.id(&format!("{name}.bias")),
            slope: bound.id(&format!("{name}.slope")),
        }
    }
}

pub struct NeckParams {
    pub input_proj: [(TensorId, TensorId); NUM_LEVELS],
    pub input_norm: [(TensorId, TensorId); NUM_LEVELS],
    pub level_embed: [TensorId; NUM_LEVELS],
    pub encoder: EncoderParams,
    pub fa: [ConvUnit; NUM_LEVELS],
}

impl NeckParams {
    pub fn from_bound(bound: &BoundParams) -> Self {
        let idx = |l: usize, stem: &str, field: &str| bound.id(&format!("{stem}.{l}.{field}"));
        NeckParams {
            input_proj: std::array::from_fn(|l| {
                (idx(l, "neck.input_proj", "weight"), idx(l, "neck.input_proj", "bias"))
            }),
            input_norm: std::array::from_fn(|l| {
                (idx(l, "neck.input_norm", "gamma"), idx(l, "neck.input_norm", "beta"))
            }),
            level_embed: std::array::from_fn(|l| bound.id(&format!("neck.level_embed.{l}"))),
            encoder: EncoderParams::from_bound(bound),
            fa: std::array::from_fn(|l| ConvUnit::from_bound(bound, &format!("neck.fa.{l}"))),
        }
    }
}

/// Projects each level to the shared channel count with a 1x1 conv, layer
/// normalizes per level so every level contributes equally, flattens
/// row-major and concatenates in level order. Output `[c, n_in]`.
pub fn project_and_flatten(
    tape: &mut Tape,
    feats: &MultiScaleFeatures,
    neck: &NeckParams,
    cfg: &EncoderConfig,
) -> Result<TensorId> {
    let c = cfg.hidden_dim;
    let mut parts = Vec::with_capacity(NUM_LEVELS);
    for l in 0..NUM_LEVELS {
        let (h, w) = feats.shapes[l];
        let cl = tape.shape(feats.maps[l])[0];
        let x = tape.reshape(feats.maps[l], vec![1, cl, h, w])?;
        let (pw, pb) = neck.input_proj[l];
        let y = tape.conv2d(x, pw, 1, 0)?;
        let y = tape.add_chan_bias(y, pb)?;
        let flat = tape.reshape(y, vec![c, h * w])?;
        let (gamma, beta) = neck.input_norm[l];
        parts.push(tape.layer_norm(flat, gamma, beta, 0)?);
    }
    tape.concat_cols(&parts)
}

/// Inverse of the flatten+concat: slices the column blocks back into
/// `[c, h_l, w_l]` maps.
pub fn split_levels(
    tape: &mut Tape,
    flat: TensorId,
    shapes: &[(usize, usize); NUM_LEVELS],
) -> Result<[TensorId; NUM_LEVELS]> {
    let n_in: usize = shapes.iter().map(|&(h, w)| h * w).sum();
    let s = tape.shape(flat).to_vec();
    if s.len() != 2 || s[1] != n_in {
        return Err(Error::shape(format!(
            "split_levels: {s:?} does not hold {n_in} pixels"
        )));
    }
    let c = s[0];
    let mut out = [flat; NUM_LEVELS];
    let mut start = 0usize;
    for (l, &(h, w)) in shapes.iter().enumerate() {
        let cols = tape.slice_cols(flat, start, h * w)?;
        out[l] = tape.reshape(cols, vec![c, h, w])?;
        start += h * w;
    }
    Ok(out)
}

/// Feature-Add block: embeds the original map through a 3x3 conv and PReLU,
/// resizes the enhanced map to the original resolution, and sums.
pub fn fa_block(
    tape: &mut Tape,
    original: TensorId,
    enhanced: TensorId,
    params: &ConvUnit,
) -> Result<TensorId> {
    let os = tape.shape(original).to_vec();
    let (cl, h, w) = (os[0], os[1], os[2]);
    let x = tape.reshape(original, vec![1, cl, h, w])?;
    let emb = tape.conv2d(x, params.weight, 1, 1)?;
    let emb = tape.add_chan_bias(emb, params.bias)?;
    let emb = tape.prelu(emb, params.slope)?;
    let c = tape.shape(emb)[1];
    let emb = tape.reshape(emb, vec![c, h, w])?;

    let es = tape.shape(enhanced).to_vec();
    let resized = if (es[1], es[2]) == (h, w) {
        enhanced
    } else {
        tape.interpolate_bilinear(enhanced, h, w)?
    };
    tape.add(emb, resized)
}

/// Deformable Transformer Encoder Neck. Flattens the three levels through
/// the encoder, takes the finest enhanced map o_3, then stacks the three FA
/// blocks coarse to fine so each original level compensates the running
/// enhanced map. Output `[c, h_3, w_3]`.
pub fn dten_forward(
    tape: &mut Tape,
    feats: &MultiScaleFeatures,
    neck: &NeckParams,
    cfg: &EncoderConfig,
    training: bool,
    rng: &mut Rng,
) -> Result<TensorId> {
    let m_f = project_and_flatten(tape, feats, neck, cfg)?;
    let refs = generate_reference_points(&feats.shapes);
    let e = build_embeddings(tape, &feats.shapes, cfg.hidden_dim, &neck.level_embed)?;
    let o = encoder_forward(tape, m_f, e, &refs, &neck.encoder, cfg, training, rng)?;
    let levels = split_levels(tape, o, &feats.shapes)?;

    let mut running = levels[NUM_LEVELS - 1];
    for l in 0..NUM_LEVELS {
        running = fa_block(tape, feats.maps[l], running, &neck.fa[l])?;
    }
    Ok(running)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::model::{ModelConfig, Role, SegModel};
    use crate::rng::Rng;

    fn toy_features(tape: &mut Tape, channels: [usize; 3], grad: bool) -> MultiScaleFeatures {
        let mut rng = Rng::new(21);
        let shapes = [(2usize, 2usize), (4, 4), (8, 8)];
        let maps = std::array::from_fn(|l| {
            let (h, w) = shapes[l];
            let data: Vec<f64> = (0..channels[l] * h * w).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let mut t = Tensor::new(vec![channels[l], h, w], data).unwrap();
            t.requires_grad = grad;
            tape.leaf(t).unwrap()
        });
        MultiScaleFeatures::new(tape, maps).unwrap()
    }

    #[test]
    fn flatten_split_round_trip() {
        let model = SegModel::new(ModelConfig::tiny(), Role::Teacher, 5).unwrap();
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false).unwrap();
        let neck = NeckParams::from_bound(&bound);
        let feats = toy_features(&mut tape, model.cfg.backbone_channels, false);
        let flat = project_and_flatten(&mut tape, &feats, &neck, &model.cfg.encoder).unwrap();
        assert_eq!(tape.shape(flat), &[8, 4 + 16 + 64]);
        let parts = split_levels(&mut tape, flat, &feats.shapes).unwrap();
        assert_eq!(tape.shape(parts[0]), &[8, 2, 2]);
        assert_eq!(tape.shape(parts[1]), &[8, 4, 4]);
        assert_eq!(tape.shape(parts[2]), &[8, 8, 8]);
        // block re-assembly matches the flat layout
        let mut start = 0;
        for (l, &(h, w)) in feats.shapes.iter().enumerate() {
            let flat_data = tape.data(flat);
            let n_in = 84;
            for row in 0..8 {
                for k in 0..h * w {
                    let a = flat_data[row * n_in + start + k];
                    let b = tape.data(parts[l])[row * h * w + k];
                    assert_eq!(a, b);
                }
            }
            start += h * w;
        }
    }

    #[test]
    fn level_blocks_are_normalized_per_column() {
        let model = SegModel::new(ModelConfig::tiny(), Role::Teacher, 6).unwrap();
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false).unwrap();
        let neck = NeckParams::from_bound(&bound);
        let feats = toy_features(&mut tape, model.cfg.backbone_channels, false);
        let flat = project_and_flatten(&mut tape, &feats, &neck, &model.cfg.encoder).unwrap();
        let data = tape.data(flat);
        let n_in = 84;
        for col in 0..n_in {
            let mean: f64 = (0..8).map(|r| data[r * n_in + col]).sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-10, "column {col} mean {mean}");
        }
    }

    #[test]
    fn fa_block_zero_conv_passes_enhanced_through() {
        let mut tape = Tape::new();
        let original = tape.constant(Tensor::full(vec![2, 4, 4], 3.0)).unwrap();
        let enhanced = tape.constant(Tensor::full(vec![3, 4, 4], 1.5)).unwrap();
        let params = ConvUnit {
            weight: tape.constant(Tensor::zeros(vec![3, 2, 3, 3])).unwrap(),
            bias: tape.constant(Tensor::zeros(vec![3])).unwrap(),
            slope: tape.constant(Tensor::scalar(0.25)).unwrap(),
        };
        let out = fa_block(&mut tape, original, enhanced, &params).unwrap();
        assert_eq!(tape.shape(out), &[3, 4, 4]);
        assert!(tape.data(out).iter().all(|&v| (v - 1.5).abs() < 1e-12));
    }

    #[test]
    fn dten_output_is_finest_resolution() {
        let model = SegModel::new(ModelConfig::tiny(), Role::Teacher, 8).unwrap();
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false).unwrap();
        let neck = NeckParams::from_bound(&bound);
        let feats = toy_features(&mut tape, model.cfg.backbone_channels, false);
        let mut rng = Rng::new(0);
        let out = dten_forward(&mut tape, &feats, &neck, &model.cfg.encoder, false, &mut rng).unwrap();
        assert_eq!(tape.shape(out), &[8, 8, 8]);
    }
}
