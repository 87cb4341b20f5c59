use super::BoundParams;
use crate::autodiff::{Tape, TensorId};
use crate::error::Result;

/// Vanilla segmentation head: 3x3 conv + PReLU, 1x1 conv to a single
/// channel, bilinear upsample to the requested size, sigmoid.
/// Output `[1, out_h, out_w]` with values strictly inside (0, 1).
pub fn head_forward(
    tape: &mut Tape,
    bound: &BoundParams,
    x: TensorId,
    out_h: usize,
    out_w: usize,
) -> Result<TensorId> {
    let s = tape.shape(x).to_vec();
    let (c, h, w) = (s[0], s[1], s[2]);
    let x4 = tape.reshape(x, vec![1, c, h, w])?;
    let y = tape.conv2d(x4, bound.id("head.conv1.weight"), 1, 1)?;
    let y = tape.add_chan_bias(y, bound.id("head.conv1.bias"))?;
    let y = tape.prelu(y, bound.id("head.conv1.slope"))?;
    let y = tape.conv2d(y, bound.id("head.conv2.weight"), 1, 0)?;
    let y = tape.add_chan_bias(y, bound.id("head.conv2.bias"))?;
    let y = tape.reshape(y, vec![1, h, w])?;
    let y = tape.interpolate_bilinear(y, out_h, out_w)?;
    tape.sigmoid(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::model::{ModelConfig, Role, SegModel};
    use crate::rng::Rng;

    #[test]
    fn output_in_open_unit_interval_and_requested_size() {
        let model = SegModel::new(ModelConfig::tiny(), Role::Teacher, 2).unwrap();
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false).unwrap();
        let mut rng = Rng::new(4);
        let c = model.cfg.head_in_channels();
        let data: Vec<f64> = (0..c * 8 * 8).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let x = tape.constant(Tensor::new(vec![c, 8, 8], data).unwrap()).unwrap();
        let y = head_forward(&mut tape, &bound, x, 32, 32).unwrap();
        assert_eq!(tape.shape(y), &[1, 32, 32]);
        assert!(tape.data(y).iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn zeroed_head_yields_uniform_half() {
        let mut model = SegModel::new(ModelConfig::tiny(), Role::Teacher, 2).unwrap();
        for name in ["head.conv2.weight", "head.conv2.bias"] {
            let p = model.params_mut().get_mut(name).unwrap();
            p.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false).unwrap();
        let c = model.cfg.head_in_channels();
        let x = tape.constant(Tensor::full(vec![c, 4, 4], 0.3)).unwrap();
        let y = head_forward(&mut tape, &bound, x, 16, 16).unwrap();
        assert!(tape.data(y).iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }
}
