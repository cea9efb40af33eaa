//! 3-D convolution (cross-correlation) with zero padding and a fused ReLU.

use rand_chacha::ChaCha8Rng;

use super::{init_uniform, xavier_bound, FeatureMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv3DLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub pad: [usize; 3],
    /// Weights laid out as (out_channel, in_channel, kd, kh, kw).
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Conv3DLayer {
    pub fn init(
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 3],
        pad: [usize; 3],
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let volume: usize = kernel.iter().product();
        let bound = xavier_bound(in_channels * volume, out_channels * volume);
        Conv3DLayer {
            in_channels,
            out_channels,
            kernel,
            pad,
            weights: init_uniform(rng, out_channels * in_channels * volume, bound),
            biases: vec![0.0; out_channels],
        }
    }

    #[inline]
    fn widx(&self, o: usize, i: usize, p: usize, q: usize, r: usize) -> usize {
        let [_, kh, kw] = self.kernel;
        (((o * self.in_channels + i) * self.kernel[0] + p) * kh + q) * kw + r
    }

    /// Output spatial dims after zero padding, or a shape error if the
    /// kernel does not fit.
    fn out_dims(&self, input: &FeatureMap, stage: &str) -> Result<[usize; 3]> {
        let mut dims = [0usize; 3];
        for axis in 0..3 {
            let padded = input.spatial()[axis] + 2 * self.pad[axis];
            if padded < self.kernel[axis] {
                return Err(Error::shape(
                    stage,
                    format!(
                        "kernel {:?} does not fit input {:?} with padding {:?}",
                        self.kernel,
                        input.spatial(),
                        self.pad
                    ),
                ));
            }
            dims[axis] = padded - self.kernel[axis] + 1;
        }
        Ok(dims)
    }

    /// Valid cross-correlation over the zero-padded input, then bias and
    /// ReLU. With kernel 3 and padding 1 the spatial shape is preserved.
    pub fn forward(&self, input: &FeatureMap, stage: &str) -> Result<FeatureMap> {
        if input.channels != self.in_channels {
            return Err(Error::shape(
                stage,
                format!(
                    "expected {} input channels, got {}",
                    self.in_channels, input.channels
                ),
            ));
        }
        let [od, oh, ow] = self.out_dims(input, stage)?;
        let [kd, kh, kw] = self.kernel;
        let [pd, ph, pw] = self.pad;
        let mut out = FeatureMap::zeros(self.out_channels, od, oh, ow);
        for o in 0..self.out_channels {
            for zd in 0..od {
                for zh in 0..oh {
                    for zw in 0..ow {
                        let mut acc = self.biases[o];
                        for i in 0..self.in_channels {
                            for p in 0..kd {
                                let d = zd + p;
                                if d < pd || d >= pd + input.depth {
                                    continue;
                                }
                                for q in 0..kh {
                                    let h = zh + q;
                                    if h < ph || h >= ph + input.height {
                                        continue;
                                    }
                                    for r in 0..kw {
                                        let w = zw + r;
                                        if w < pw || w >= pw + input.width {
                                            continue;
                                        }
                                        acc += self.weights[self.widx(o, i, p, q, r)]
                                            * input.get(i, d - pd, h - ph, w - pw);
                                    }
                                }
                            }
                        }
                        out.set(o, zd, zh, zw, acc.max(0.0));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Gradients for weights, biases, and the input, given the gradient
    /// with respect to the post-ReLU output. A cell with output 0 was
    /// clipped by the ReLU and contributes nothing.
    pub fn backward(
        &self,
        input: &FeatureMap,
        output: &FeatureMap,
        dout: &FeatureMap,
    ) -> (Vec<f64>, Vec<f64>, FeatureMap) {
        let mut dweights = vec![0.0; self.weights.len()];
        let mut dbiases = vec![0.0; self.biases.len()];
        let mut dinput = FeatureMap::zeros(input.channels, input.depth, input.height, input.width);
        let [kd, kh, kw] = self.kernel;
        let [pd, ph, pw] = self.pad;
        for o in 0..self.out_channels {
            for zd in 0..output.depth {
                for zh in 0..output.height {
                    for zw in 0..output.width {
                        if output.get(o, zd, zh, zw) <= 0.0 {
                            continue;
                        }
                        let g = dout.get(o, zd, zh, zw);
                        if g == 0.0 {
                            continue;
                        }
                        dbiases[o] += g;
                        for i in 0..self.in_channels {
                            for p in 0..kd {
                                let d = zd + p;
                                if d < pd || d >= pd + input.depth {
                                    continue;
                                }
                                for q in 0..kh {
                                    let h = zh + q;
                                    if h < ph || h >= ph + input.height {
                                        continue;
                                    }
                                    for r in 0..kw {
                                        let w = zw + r;
                                        if w < pw || w >= pw + input.width {
                                            continue;
                                        }
                                        let widx = self.widx(o, i, p, q, r);
                                        let iidx = dinput.idx(i, d - pd, h - ph, w - pw);
                                        dweights[widx] += g * input.data[iidx];
                                        dinput.data[iidx] += g * self.weights[widx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        (dweights, dbiases, dinput)
    }
}
