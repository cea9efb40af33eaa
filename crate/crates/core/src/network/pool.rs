//! Dynamic max pooling: the window size adapts to the input so the output
//! always has the configured target shape, whatever tensor size came in.

use super::FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DynamicPoolConfig {
    pub target: [usize; 3],
}

impl DynamicPoolConfig {
    /// Per-axis window sizes for a given input shape: ceil(in / target).
    pub fn window(&self, spatial: [usize; 3]) -> [usize; 3] {
        [
            spatial[0].div_ceil(self.target[0]),
            spatial[1].div_ceil(self.target[1]),
            spatial[2].div_ceil(self.target[2]),
        ]
        .map(|d| d.max(1))
    }

    /// Pools each channel down to the target shape. Window (i, j, k)
    /// covers input cells [i*wd, (i+1)*wd) x ... clipped to the input;
    /// positions past the input edge are ignored. A window with no cells
    /// at all (target dim larger than input dim) produces 0.
    ///
    /// Also returns, per output cell, the flat input index of the maximum
    /// (the first one in scan order on ties), which the backward pass
    /// routes gradients through.
    pub fn forward(&self, input: &FeatureMap) -> (FeatureMap, Vec<Option<usize>>) {
        let [t0, t1, t2] = self.target;
        let [wd, wh, ww] = self.window(input.spatial());
        let mut out = FeatureMap::zeros(input.channels, t0, t1, t2);
        let mut argmax = vec![None; out.len()];
        for c in 0..input.channels {
            for i in 0..t0 {
                for j in 0..t1 {
                    for k in 0..t2 {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = None;
                        for p in i * wd..((i + 1) * wd).min(input.depth) {
                            for q in j * wh..((j + 1) * wh).min(input.height) {
                                for r in k * ww..((k + 1) * ww).min(input.width) {
                                    let idx = input.idx(c, p, q, r);
                                    let v = input.data[idx];
                                    if best_idx.is_none() || v > best {
                                        best = v;
                                        best_idx = Some(idx);
                                    }
                                }
                            }
                        }
                        let flat = out.idx(c, i, j, k);
                        out.data[flat] = if best_idx.is_some() { best } else { 0.0 };
                        argmax[flat] = best_idx;
                    }
                }
            }
        }
        (out, argmax)
    }
}

/// Routes each output-cell gradient to the input cell that won the max.
/// Empty windows carried no value, so they pass no gradient.
pub fn backward(
    input: &FeatureMap,
    argmax: &[Option<usize>],
    dout: &FeatureMap,
) -> FeatureMap {
    let mut dinput = FeatureMap::zeros(input.channels, input.depth, input.height, input.width);
    for (cell, &src) in argmax.iter().enumerate() {
        if let Some(idx) = src {
            dinput.data[idx] += dout.data[cell];
        }
    }
    dinput
}
