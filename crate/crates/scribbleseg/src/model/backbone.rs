use super::{BoundParams, MultiScaleFeatures};
use crate::autodiff::{Tape, TensorId};
use crate::error::{Error, Result};

fn conv_prelu(
    tape: &mut Tape,
    bound: &BoundParams,
    name: &str,
    x: TensorId,
    stride: usize,
) -> Result<TensorId> {
    let y = tape.conv2d(x, bound.id(&format!("{name}.weight")), stride, 1)?;
    let y = tape.add_chan_bias(y, bound.id(&format!("{name}.bias")))?;
    tape.prelu(y, bound.id(&format!("{name}.slope")))
}

/// Stand-in multi-scale backbone: four stride-2 3x3 conv+PReLU stages that
/// tap feature maps at strides 4, 8 and 16 of the input.
/// Returns levels ordered coarse to fine (stride 16, 8, 4).
pub fn backbone_forward(
    tape: &mut Tape,
    bound: &BoundParams,
    image: TensorId,
) -> Result<MultiScaleFeatures> {
    let shape = tape.shape(image).to_vec();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(Error::shape(format!("backbone input must be [3, h, w], got {shape:?}")));
    }
    let (h, w) = (shape[1], shape[2]);
    if h % 16 != 0 || w % 16 != 0 {
        return Err(Error::shape(format!(
            "backbone input extents must be divisible by 16, got {h}x{w}"
        )));
    }
    let x = tape.reshape(image, vec![1, 3, h, w])?;
    let s1 = conv_prelu(tape, bound, "backbone.conv1", x, 2)?;
    let s2 = conv_prelu(tape, bound, "backbone.conv2", s1, 2)?; // stride 4, finest
    let s3 = conv_prelu(tape, bound, "backbone.conv3", s2, 2)?; // stride 8
    let s4 = conv_prelu(tape, bound, "backbone.conv4", s3, 2)?; // stride 16, coarsest

    let squeeze = |tape: &mut Tape, t: TensorId| -> Result<TensorId> {
        let s = tape.shape(t).to_vec();
        tape.reshape(t, vec![s[1], s[2], s[3]])
    };
    let m3 = squeeze(tape, s2)?;
    let m2 = squeeze(tape, s3)?;
    let m1 = squeeze(tape, s4)?;
    MultiScaleFeatures::new(tape, [m1, m2, m3])
}
