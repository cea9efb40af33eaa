//! From-scratch 3D convolutional matcher: two conv3d layers with ReLU,
//! two dynamic max-pooling layers, and an MLP head ending in a sigmoid.
//! Forward passes cache what the hand-written backward passes need; there
//! is no general autodiff.

mod checkpoint;
mod conv;
mod loss;
mod mlp;
mod pool;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use conv::Conv3DLayer;
pub use loss::{bce_grad_single, bce_loss, bce_loss_single, LossReduction, PROB_CLAMP};
pub use mlp::{Linear, MlpHead};
pub use pool::DynamicPoolConfig;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::InteractiveTensor;

/// Dense 4-D activation block: (channels, depth, height, width).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub depth: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, depth: usize, height: usize, width: usize) -> Self {
        FeatureMap {
            channels,
            depth,
            height,
            width,
            data: vec![0.0; channels * depth * height * width],
        }
    }

    #[inline]
    pub fn idx(&self, c: usize, d: usize, h: usize, w: usize) -> usize {
        ((c * self.depth + d) * self.height + h) * self.width + w
    }

    #[inline]
    pub fn get(&self, c: usize, d: usize, h: usize, w: usize) -> f64 {
        self.data[self.idx(c, d, h, w)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, d: usize, h: usize, w: usize, v: f64) {
        let i = self.idx(c, d, h, w);
        self.data[i] = v;
    }

    pub fn spatial(&self) -> [usize; 3] {
        [self.depth, self.height, self.width]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Network shape parameters. The two pooled target shapes are what make
/// the pipeline independent of the incoming tensor dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchConfig {
    pub input_channels: usize,
    pub conv1_out: usize,
    pub conv2_out: usize,
    pub kernel: [usize; 3],
    pub pad: [usize; 3],
    pub pool1: [usize; 3],
    pub pool2: [usize; 3],
    pub mlp_hidden: Vec<usize>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            input_channels: 2,
            conv1_out: 8,
            conv2_out: 8,
            kernel: [3, 3, 3],
            pad: [1, 1, 1],
            pool1: [8, 8, 8],
            pool2: [4, 4, 4],
            mlp_hidden: vec![64],
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_channels < 1 || self.conv1_out < 1 || self.conv2_out < 1 {
            return Err(Error::Config("channel counts must be at least 1".to_string()));
        }
        if self.kernel.iter().any(|&k| k < 1) {
            return Err(Error::Config("kernel dims must be at least 1".to_string()));
        }
        if self.pool1.iter().chain(&self.pool2).any(|&t| t < 1) {
            return Err(Error::Config("pool target dims must be at least 1".to_string()));
        }
        Ok(())
    }

    /// Flattened feature length entering the MLP.
    pub fn mlp_input_dim(&self) -> usize {
        self.conv2_out * self.pool2.iter().product::<usize>()
    }

    /// Full MLP dimension chain, ending in the single output unit.
    pub fn mlp_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.mlp_input_dim()];
        dims.extend(&self.mlp_hidden);
        dims.push(1);
        dims
    }
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    input: FeatureMap,
    conv1_out: FeatureMap,
    pool1_out: FeatureMap,
    pool1_argmax: Vec<Option<usize>>,
    conv2_out: FeatureMap,
    pool2_out: FeatureMap,
    pool2_argmax: Vec<Option<usize>>,
    mlp_acts: Vec<Vec<f64>>,
    pub prob: f64,
}

/// Parameter gradients in the same declaration order as the model, plus
/// the gradient with respect to the input tensor.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
    pub mlp: Vec<(Vec<f64>, Vec<f64>)>,
    pub input: FeatureMap,
}

impl Gradients {
    pub fn add_assign(&mut self, other: &Gradients) {
        fn add(a: &mut [f64], b: &[f64]) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        add(&mut self.conv1_w, &other.conv1_w);
        add(&mut self.conv1_b, &other.conv1_b);
        add(&mut self.conv2_w, &other.conv2_w);
        add(&mut self.conv2_b, &other.conv2_b);
        for ((w, b), (ow, ob)) in self.mlp.iter_mut().zip(&other.mlp) {
            add(w, ow);
            add(b, ob);
        }
        add(&mut self.input.data, &other.input.data);
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self
            .conv1_w
            .iter_mut()
            .chain(&mut self.conv1_b)
            .chain(&mut self.conv2_w)
            .chain(&mut self.conv2_b)
            .chain(self.mlp.iter_mut().flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut())))
            .chain(&mut self.input.data)
        {
            *v *= factor;
        }
    }

    /// Parameter gradients flattened in declaration order (input gradient
    /// excluded), matching [`Model::flatten_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.conv1_w);
        out.extend_from_slice(&self.conv1_b);
        out.extend_from_slice(&self.conv2_w);
        out.extend_from_slice(&self.conv2_b);
        for (w, b) in &self.mlp {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

/// The full matcher: conv1 -> pool1 -> conv2 -> pool2 -> flatten -> MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: ArchConfig,
    pub conv1: Conv3DLayer,
    pub conv2: Conv3DLayer,
    pub mlp: MlpHead,
}

impl Model {
    /// Seeded initialization: weights uniform in
    /// +-sqrt(6 / (fan_in + fan_out)) per layer, biases zero.
    pub fn new(arch: ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conv1 = Conv3DLayer::init(
            arch.input_channels,
            arch.conv1_out,
            arch.kernel,
            arch.pad,
            &mut rng,
        );
        let conv2 = Conv3DLayer::init(arch.conv1_out, arch.conv2_out, arch.kernel, arch.pad, &mut rng);
        let mlp = MlpHead::init(&arch.mlp_dims(), &mut rng)?;
        Ok(Model {
            arch,
            conv1,
            conv2,
            mlp,
        })
    }

    pub fn pool1(&self) -> DynamicPoolConfig {
        DynamicPoolConfig {
            target: self.arch.pool1,
        }
    }

    pub fn pool2(&self) -> DynamicPoolConfig {
        DynamicPoolConfig {
            target: self.arch.pool2,
        }
    }

    /// Full forward pass, returning the linkage probability and the tape
    /// for a subsequent backward pass.
    pub fn forward(&self, input: &FeatureMap) -> Result<(f64, Tape)> {
        let conv1_out = self.conv1.forward(input, "conv1")?;
        let (pool1_out, pool1_argmax) = self.pool1().forward(&conv1_out);
        let conv2_out = self.conv2.forward(&pool1_out, "conv2")?;
        let (pool2_out, pool2_argmax) = self.pool2().forward(&conv2_out);
        let (prob, mlp_acts) = self.mlp.forward(&pool2_out.data, "mlp")?;
        Ok((
            prob,
            Tape {
                input: input.clone(),
                conv1_out,
                pool1_out,
                pool1_argmax,
                conv2_out,
                pool2_out,
                pool2_argmax,
                mlp_acts,
                prob,
            },
        ))
    }

    /// Forward without keeping the tape.
    pub fn predict_map(&self, input: &FeatureMap) -> Result<f64> {
        Ok(self.forward(input)?.0)
    }

    /// Scores one interactive tensor.
    pub fn predict(&self, tensor: &InteractiveTensor) -> Result<f64> {
        self.predict_map(&tensor.to_feature_map())
    }

    /// Backward pass through the whole pipeline given d(loss)/d(prob).
    /// Max-pooling routes each gradient to the window's argmax cell.
    pub fn backward(&self, tape: &Tape, dprob: f64) -> Gradients {
        let (mlp_grads, dflat) = self.mlp.backward(&tape.mlp_acts, dprob);

        let mut dpool2 = FeatureMap::zeros(
            tape.pool2_out.channels,
            tape.pool2_out.depth,
            tape.pool2_out.height,
            tape.pool2_out.width,
        );
        dpool2.data.copy_from_slice(&dflat);
        let dconv2_out = pool::backward(&tape.conv2_out, &tape.pool2_argmax, &dpool2);

        let (conv2_w, conv2_b, dpool1_out) =
            self.conv2.backward(&tape.pool1_out, &tape.conv2_out, &dconv2_out);
        let dconv1_out = pool::backward(&tape.conv1_out, &tape.pool1_argmax, &dpool1_out);
        let (conv1_w, conv1_b, dinput) =
            self.conv1.backward(&tape.input, &tape.conv1_out, &dconv1_out);

        Gradients {
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            mlp: mlp_grads,
            input: dinput,
        }
    }

    pub fn param_count(&self) -> usize {
        self.conv1.weights.len()
            + self.conv1.biases.len()
            + self.conv2.weights.len()
            + self.conv2.biases.len()
            + self
                .mlp
                .layers
                .iter()
                .map(|l| l.weights.len() + l.biases.len())
                .sum::<usize>()
    }

    /// All parameters in declaration order: conv1 weights, conv1 biases,
    /// conv2 weights, conv2 biases, then each MLP layer's weights and
    /// biases.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(&self.conv1.weights);
        out.extend_from_slice(&self.conv1.biases);
        out.extend_from_slice(&self.conv2.weights);
        out.extend_from_slice(&self.conv2.biases);
        for layer in &self.mlp.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.biases);
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::shape(
                "parameters",
                format!("expected {} values, got {}", self.param_count(), params.len()),
            ));
        }
        let mut offset = 0;
        let mut take = |dest: &mut [f64]| {
            dest.copy_from_slice(&params[offset..offset + dest.len()]);
            offset += dest.len();
        };
        take(&mut self.conv1.weights);
        take(&mut self.conv1.biases);
        take(&mut self.conv2.weights);
        take(&mut self.conv2.biases);
        for layer in &mut self.mlp.layers {
            take(&mut layer.weights);
            take(&mut layer.biases);
        }
        Ok(())
    }
}

/// Thresholded decision: strict inequality, so a probability exactly at
/// the threshold maps to the negative class.
pub fn classify(prob: f64, threshold: f64) -> u8 {
    u8::from(prob > threshold)
}

fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn init_uniform(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mini_arch() -> ArchConfig {
        ArchConfig {
            input_channels: 2,
            conv1_out: 3,
            conv2_out: 3,
            kernel: [3, 3, 3],
            pad: [1, 1, 1],
            pool1: [3, 3, 5],
            pool2: [2, 2, 2],
            mlp_hidden: vec![4],
        }
    }

    fn random_map(shape: (usize, usize, usize, usize), seed: u64) -> FeatureMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut map = FeatureMap::zeros(shape.0, shape.1, shape.2, shape.3);
        for v in &mut map.data {
            *v = rng.random_range(-1.0..1.0);
        }
        map
    }

    #[test]
    fn default_arch_dimensions_chain() {
        let arch = ArchConfig::default();
        assert_eq!(arch.mlp_input_dim(), 8 * 64);
        assert_eq!(arch.mlp_dims(), vec![512, 64, 1]);
    }

    #[test]
    fn zero_head_predicts_half() {
        let arch = ArchConfig::default();
        let mut model = Model::new(arch, 1).unwrap();
        // Zero the final layer: sigmoid(0) = 0.5 regardless of input.
        let last = model.mlp.layers.last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w = 0.0);
        last.biases.iter_mut().for_each(|b| *b = 0.0);
        let input = random_map((2, 8, 8, 6), 3);
        assert_eq!(model.predict_map(&input).unwrap(), 0.5);
    }

    #[test]
    fn classify_tie_goes_negative() {
        assert_eq!(classify(0.7, 0.5), 1);
        assert_eq!(classify(0.5, 0.5), 0);
        assert_eq!(classify(0.3, 0.5), 0);
    }

    #[test]
    fn forward_shapes_follow_arch() {
        let model = Model::new(mini_arch(), 5).unwrap();
        let input = random_map((2, 6, 6, 10), 7);
        let (prob, tape) = model.forward(&input).unwrap();
        assert!(prob > 0.0 && prob < 1.0);
        assert_eq!(tape.conv1_out.spatial(), [6, 6, 10]);
        assert_eq!(tape.pool1_out.spatial(), [3, 3, 5]);
        assert_eq!(tape.pool2_out.spatial(), [2, 2, 2]);
        assert_eq!(tape.pool2_out.len(), 24);
    }

    #[test]
    fn wrong_channel_count_names_the_stage() {
        let model = Model::new(mini_arch(), 5).unwrap();
        let input = random_map((3, 6, 6, 10), 7);
        match model.forward(&input) {
            Err(Error::Shape { stage, .. }) => assert_eq!(stage, "conv1"),
            other => panic!("expected conv1 shape error, got {other:?}"),
        }
    }

    #[test]
    fn flatten_set_round_trip() {
        let model = Model::new(mini_arch(), 5).unwrap();
        let params = model.flatten_params();
        assert_eq!(params.len(), model.param_count());
        let mut other = Model::new(mini_arch(), 99).unwrap();
        assert_ne!(other.flatten_params(), params);
        other.set_flat_params(&params).unwrap();
        assert_eq!(other.flatten_params(), params);
        assert!(other.set_flat_params(&params[1..]).is_err());
    }

    #[test]
    fn param_gradients_match_finite_differences() {
        // Small-scale version of the full gradient audit.
        let model = Model::new(mini_arch(), 11).unwrap();
        let input = random_map((2, 6, 6, 10), 13);
        let y = 1.0;

        let (prob, tape) = model.forward(&input).unwrap();
        let mut grads = model.backward(&tape, bce_grad_single(prob, y));
        let analytic = grads.flatten();

        let mut probe = model.clone();
        let base_params = model.flatten_params();
        let h = 1e-5;
        for idx in (0..base_params.len()).step_by(17) {
            let mut params = base_params.clone();
            params[idx] += h;
            probe.set_flat_params(&params).unwrap();
            let up = bce_loss_single(probe.predict_map(&input).unwrap(), y);
            params[idx] -= 2.0 * h;
            probe.set_flat_params(&params).unwrap();
            let down = bce_loss_single(probe.predict_map(&input).unwrap(), y);
            let fd = (up - down) / (2.0 * h);
            let rel = (analytic[idx] - fd).abs() / fd.abs().max(1e-8);
            assert!(
                rel <= 1e-4,
                "param {idx}: analytic {} vs fd {fd}",
                analytic[idx]
            );
        }

        // Zero incoming gradient produces zero parameter gradients.
        grads = model.backward(&tape, 0.0);
        assert!(grads.flatten().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let model = Model::new(mini_arch(), 21).unwrap();
        let input = random_map((2, 6, 6, 10), 23);
        let y = 0.0;
        let (prob, tape) = model.forward(&input).unwrap();
        let grads = model.backward(&tape, bce_grad_single(prob, y));
        let h = 1e-5;
        for idx in (0..input.data.len()).step_by(101) {
            let mut up_in = input.clone();
            up_in.data[idx] += h;
            let up = bce_loss_single(model.predict_map(&up_in).unwrap(), y);
            let mut down_in = input.clone();
            down_in.data[idx] -= h;
            let down = bce_loss_single(model.predict_map(&down_in).unwrap(), y);
            let fd = (up - down) / (2.0 * h);
            let rel = (grads.input.data[idx] - fd).abs() / fd.abs().max(1e-8);
            assert!(rel <= 1e-4, "input {idx}: {} vs {fd}", grads.input.data[idx]);
        }
    }
}
