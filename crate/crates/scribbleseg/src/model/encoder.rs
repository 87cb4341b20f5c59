use super::{BoundParams, EncoderConfig, NUM_LEVELS};
use crate::autodiff::{DeformMeta, Tape, Tensor, TensorId};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Normalized base coordinates of every flattened query pixel.
#[derive(Debug, Clone)]
pub struct ReferencePoints {
    /// `[n_in, 2]`, x then y, every coordinate strictly inside (0, 1).
    pub points: Tensor,
    pub level_shapes: Vec<(usize, usize)>,
    pub level_starts: Vec<usize>,
}

/// One reference point per pixel, at the pixel center, in the same row order
/// as the flattened+concatenated feature tensor.
pub fn generate_reference_points(shapes: &[(usize, usize)]) -> ReferencePoints {
    let n_in: usize = shapes.iter().map(|&(h, w)| h * w).sum();
    let mut data = Vec::with_capacity(n_in * 2);
    let mut starts = Vec::with_capacity(shapes.len());
    let mut offset = 0usize;
    for &(h, w) in shapes {
        starts.push(offset);
        for y in 0..h {
            for x in 0..w {
                data.push((x as f64 + 0.5) / w as f64);
                data.push((y as f64 + 0.5) / h as f64);
            }
        }
        offset += h * w;
    }
    ReferencePoints {
        points: Tensor::new(vec![n_in, 2], data).expect("reference point table"),
        level_shapes: shapes.to_vec(),
        level_starts: starts,
    }
}

/// Fixed sinusoidal 2-D positional signal, `[c, n_in]`. Half the channels
/// encode the y coordinate, half the x coordinate, as sin/cos pairs over a
/// geometric frequency ladder.
pub fn positional_encoding(shapes: &[(usize, usize)], c: usize) -> Tensor {
    assert!(c % 4 == 0, "positional encoding needs c divisible by 4");
    let n_in: usize = shapes.iter().map(|&(h, w)| h * w).sum();
    let pairs = c / 4;
    let mut data = vec![0.0; c * n_in];
    let mut col = 0usize;
    for &(h, w) in shapes {
        for y in 0..h {
            for x in 0..w {
                let ny = (y as f64 + 0.5) / h as f64;
                let nx = (x as f64 + 0.5) / w as f64;
                for j in 0..pairs {
                    let freq = 2.0 * std::f64::consts::PI / 10000f64.powf(j as f64 / pairs as f64);
                    data[(2 * j) * n_in + col] = (ny * freq).sin();
                    data[(2 * j + 1) * n_in + col] = (ny * freq).cos();
                    data[(c / 2 + 2 * j) * n_in + col] = (nx * freq).sin();
                    data[(c / 2 + 2 * j + 1) * n_in + col] = (nx * freq).cos();
                }
                col += 1;
            }
        }
    }
    Tensor::new(vec![c, n_in], data).expect("positional encoding table")
}

/// Positional + learned per-level embedding, `[c, n_in]`.
pub fn build_embeddings(
    tape: &mut Tape,
    shapes: &[(usize, usize)],
    c: usize,
    level_embed: &[TensorId; NUM_LEVELS],
) -> Result<TensorId> {
    let mut parts = Vec::with_capacity(shapes.len());
    for (l, &(h, w)) in shapes.iter().enumerate() {
        let pos = positional_encoding(&[(h, w)], c);
        let pos_id = tape.constant(pos)?;
        parts.push(tape.add_col_vec(pos_id, level_embed[l])?);
    }
    tape.concat_cols(&parts)
}

/// Linear layer handles.
#[derive(Debug, Clone, Copy)]
pub struct LinearParams {
    pub weight: TensorId,
    pub bias: TensorId,
}

impl LinearParams {
    fn from_bound(bound: &BoundParams, name: &str) -> Self {
        LinearParams {
            weight: bound.id(&format!("{name}.weight")),
            bias: bound.id(&format!("{name}.bias")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionParams {
    pub value: LinearParams,
    pub offset: LinearParams,
    pub weight: LinearParams,
    pub out: LinearParams,
}

#[derive(Debug, Clone, Copy)]
pub struct FfnParams {
    pub fc1: LinearParams,
    pub slope: TensorId,
    pub fc2: LinearParams,
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderParams {
    pub attn: AttentionParams,
    pub norm1_gamma: TensorId,
    pub norm1_beta: TensorId,
    pub ffn: FfnParams,
    pub norm2_gamma: TensorId,
    pub norm2_beta: TensorId,
}

impl EncoderParams {
    pub fn from_bound(bound: &BoundParams) -> Self {
        EncoderParams {
            attn: AttentionParams {
                value: LinearParams::from_bound(bound, "neck.attn.value"),
                offset: LinearParams::from_bound(bound, "neck.attn.offset"),
                weight: LinearParams::from_bound(bound, "neck.attn.weight"),
                out: LinearParams::from_bound(bound, "neck.attn.out"),
            },
            norm1_gamma: bound.id("neck.norm1.gamma"),
            norm1_beta: bound.id("neck.norm1.beta"),
            ffn: FfnParams {
                fc1: LinearParams::from_bound(bound, "neck.ffn.fc1"),
                slope: bound.id("neck.ffn.slope"),
                fc2: LinearParams::from_bound(bound, "neck.ffn.fc2"),
            },
            norm2_gamma: bound.id("neck.norm2.gamma"),
            norm2_beta: bound.id("neck.norm2.beta"),
        }
    }
}

/// Core attention in pixel-rows layout. `m_rows`/`e_rows` are `[n_in, c]`.
/// Returns the aggregated+projected feature rows and the softmaxed attention
/// weights `[n_in * heads, levels * points]`.
fn attention_rows(
    tape: &mut Tape,
    m_rows: TensorId,
    e_rows: TensorId,
    refs: &ReferencePoints,
    params: &AttentionParams,
    cfg: &EncoderConfig,
) -> Result<(TensorId, TensorId)> {
    let n_in = tape.shape(m_rows)[0];
    let c = cfg.hidden_dim;
    let levels = refs.level_shapes.len();
    let hlp = cfg.heads * levels * cfg.points;

    // query = feature + embedding
    let q = tape.add(m_rows, e_rows)?;
    let value = tape.linear(m_rows, params.value.weight, params.value.bias)?;
    let offsets = tape.linear(q, params.offset.weight, params.offset.bias)?;
    let wlogits = tape.linear(q, params.weight.weight, params.weight.bias)?;
    // normalize jointly over (level, point) per head
    let wl = tape.reshape(wlogits, vec![n_in * cfg.heads, levels * cfg.points])?;
    let wnorm = tape.softmax(wl, 1)?;
    let weights = tape.reshape(wnorm, vec![n_in, hlp])?;

    let meta = DeformMeta {
        ref_points: refs.points.data.clone(),
        level_shapes: refs.level_shapes.clone(),
        level_starts: refs.level_starts.clone(),
        heads: cfg.heads,
        points_per_level: cfg.points,
    };
    let agg = tape.deform_agg(value, offsets, weights, meta)?;
    let out = tape.linear(agg, params.out.weight, params.out.bias)?;
    debug_assert_eq!(tape.shape(out), &[n_in, c]);
    Ok((out, wnorm))
}

/// Multi-scale deformable attention over the flattened feature `m_f [c, n_in]`
/// with embeddings `e [c, n_in]` and pre-generated reference points.
/// Returns the attended features `[c, n_in]` and the attention weights
/// `[n_in * heads, levels * points]` (rows sum to one).
pub fn deformable_attention(
    tape: &mut Tape,
    m_f: TensorId,
    e: TensorId,
    refs: &ReferencePoints,
    params: &AttentionParams,
    cfg: &EncoderConfig,
) -> Result<(TensorId, TensorId)> {
    let shape = tape.shape(m_f).to_vec();
    let n_in: usize = refs.level_shapes.iter().map(|&(h, w)| h * w).sum();
    if shape != [cfg.hidden_dim, n_in] {
        return Err(Error::shape(format!(
            "deformable_attention: m_f {shape:?}, expected [{}, {n_in}]",
            cfg.hidden_dim
        )));
    }
    if tape.shape(e) != [cfg.hidden_dim, n_in] {
        return Err(Error::shape("deformable_attention: embedding shape mismatch"));
    }
    let m_rows = tape.transpose(m_f)?;
    let e_rows = tape.transpose(e)?;
    let (out_rows, w) = attention_rows(tape, m_rows, e_rows, refs, params, cfg)?;
    let out = tape.transpose(out_rows)?;
    Ok((out, w))
}

/// Single encoder layer: deformable attention, dropout+residual+layer norm,
/// then an FFN (linear, PReLU, dropout, linear) with its own residual and
/// layer norm. Input and output are `[c, n_in]`.
#[allow(clippy::too_many_arguments)]
pub fn encoder_forward(
    tape: &mut Tape,
    m_f: TensorId,
    e: TensorId,
    refs: &ReferencePoints,
    params: &EncoderParams,
    cfg: &EncoderConfig,
    training: bool,
    rng: &mut Rng,
) -> Result<TensorId> {
    let m_rows = tape.transpose(m_f)?;
    let e_rows = tape.transpose(e)?;
    let (oda, _w) = attention_rows(tape, m_rows, e_rows, refs, &params.attn, cfg)?;

    let oda = tape.dropout(oda, cfg.dropout_rate, training, rng)?;
    let res = tape.add(oda, m_rows)?;
    let ln1 = tape.layer_norm(res, params.norm1_gamma, params.norm1_beta, 1)?;

    let h = tape.linear(ln1, params.ffn.fc1.weight, params.ffn.fc1.bias)?;
    let h = tape.prelu(h, params.ffn.slope)?;
    let h = tape.dropout(h, cfg.dropout_rate, training, rng)?;
    let h = tape.linear(h, params.ffn.fc2.weight, params.ffn.fc2.bias)?;
    let res2 = tape.add(h, ln1)?;
    let out_rows = tape.layer_norm(res2, params.norm2_gamma, params.norm2_beta, 1)?;
    tape.transpose(out_rows)
}
