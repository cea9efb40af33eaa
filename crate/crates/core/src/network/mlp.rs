//! Fully connected head: ReLU hidden layers, sigmoid output unit.

use rand_chacha::ChaCha8Rng;

use super::{init_uniform, xavier_bound};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major (out_dim x in_dim).
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Linear {
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            in_dim,
            out_dim,
            weights: init_uniform(rng, out_dim * in_dim, xavier_bound(in_dim, out_dim)),
            biases: vec![0.0; out_dim],
        }
    }

    fn affine(&self, input: &[f64]) -> Vec<f64> {
        let mut out = self.biases.clone();
        for (o, acc) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            for (w, x) in row.iter().zip(input) {
                *acc += w * x;
            }
        }
        out
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    pub layers: Vec<Linear>,
}

impl MlpHead {
    /// Builds layers from a dimension chain, e.g. [512, 64, 1]. The chain
    /// must end in a single output unit.
    pub fn init(dims: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config("MLP needs at least input and output dims".to_string()));
        }
        if *dims.last().unwrap() != 1 {
            return Err(Error::Config("MLP must end in a single output unit".to_string()));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("MLP dims must be nonzero".to_string()));
        }
        let layers = dims
            .windows(2)
            .map(|pair| Linear::init(pair[0], pair[1], rng))
            .collect();
        Ok(MlpHead { layers })
    }

    /// Returns the sigmoid output plus every layer's activation (input
    /// first, probability last), which backward consumes.
    pub fn forward(&self, input: &[f64], stage: &str) -> Result<(f64, Vec<Vec<f64>>)> {
        let expect = self.layers[0].in_dim;
        if input.len() != expect {
            return Err(Error::shape(
                stage,
                format!("expected {} features, got {}", expect, input.len()),
            ));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = layer.affine(acts.last().unwrap());
            if li + 1 == self.layers.len() {
                z.iter_mut().for_each(|v| *v = sigmoid(*v));
            } else {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        let prob = acts.last().unwrap()[0];
        Ok((prob, acts))
    }

    /// Per-layer (weight, bias) gradients plus the gradient with respect
    /// to the flattened input, given d(loss)/d(prob).
    pub fn backward(&self, acts: &[Vec<f64>], dprob: f64) -> (Vec<(Vec<f64>, Vec<f64>)>, Vec<f64>) {
        let prob = acts.last().unwrap()[0];
        // Sigmoid derivative folded into the seed gradient.
        let mut dz = vec![dprob * prob * (1.0 - prob)];
        let mut grads = vec![(Vec::new(), Vec::new()); self.layers.len()];
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let a_in = &acts[li];
            let mut dw = vec![0.0; layer.weights.len()];
            for (o, &g) in dz.iter().enumerate() {
                for (i, &a) in a_in.iter().enumerate() {
                    dw[o * layer.in_dim + i] = g * a;
                }
            }
            let mut da_in = vec![0.0; layer.in_dim];
            for (o, &g) in dz.iter().enumerate() {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (slot, &w) in da_in.iter_mut().zip(row) {
                    *slot += w * g;
                }
            }
            grads[li] = (dw, dz.clone());
            if li > 0 {
                // a_in is the post-ReLU output of the previous layer.
                for (slot, &a) in da_in.iter_mut().zip(a_in) {
                    if a <= 0.0 {
                        *slot = 0.0;
                    }
                }
            }
            dz = da_in;
        }
        (grads, dz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn sigmoid_fixed_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3.0_f64.ln()) - 0.75).abs() < 1e-15);
        assert!((sigmoid(-3.0_f64.ln()) - 0.25).abs() < 1e-15);
        assert!(sigmoid(40.0) > 1.0 - 1e-15);
        assert!(sigmoid(-40.0) < 1e-15);
    }

    #[test]
    fn hand_built_two_layer_forward() {
        // Hidden: relu([1*2 + (-1)*1, 0.5*2 + 0.5*1]) = [1, 1.5].
        // Output: sigmoid(2*1 + (-2)*1.5 + 1) = sigmoid(0) = 0.5.
        let head = MlpHead {
            layers: vec![
                Linear {
                    in_dim: 2,
                    out_dim: 2,
                    weights: vec![1.0, -1.0, 0.5, 0.5],
                    biases: vec![0.0, 0.0],
                },
                Linear {
                    in_dim: 2,
                    out_dim: 1,
                    weights: vec![2.0, -2.0],
                    biases: vec![1.0],
                },
            ],
        };
        let (prob, acts) = head.forward(&[2.0, 1.0], "t").unwrap();
        assert_eq!(prob, 0.5);
        assert_eq!(acts[1], vec![1.0, 1.5]);
    }

    #[test]
    fn hidden_relu_clips_negatives() {
        let head = MlpHead {
            layers: vec![
                Linear {
                    in_dim: 1,
                    out_dim: 2,
                    weights: vec![-1.0, 1.0],
                    biases: vec![0.0, 0.0],
                },
                Linear {
                    in_dim: 2,
                    out_dim: 1,
                    weights: vec![10.0, 0.0],
                    biases: vec![0.0],
                },
            ],
        };
        // Input 5: hidden = [relu(-5), relu(5)] = [0, 5]; output uses only
        // the clipped unit, so sigmoid(0) = 0.5.
        let (prob, _) = head.forward(&[5.0], "t").unwrap();
        assert_eq!(prob, 0.5);
    }

    #[test]
    fn wrong_input_length_is_a_shape_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let head = MlpHead::init(&[4, 3, 1], &mut rng).unwrap();
        assert!(matches!(
            head.forward(&[1.0, 2.0], "head"),
            Err(Error::Shape { ref stage, .. }) if stage == "head"
        ));
    }

    #[test]
    fn init_validates_dimension_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(MlpHead::init(&[4], &mut rng).is_err());
        assert!(MlpHead::init(&[4, 2], &mut rng).is_err());
        assert!(MlpHead::init(&[4, 0, 1], &mut rng).is_err());
        let head = MlpHead::init(&[4, 2, 1], &mut rng).unwrap();
        assert_eq!(head.layers.len(), 2);
        assert!(head.layers.iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let head = MlpHead::init(&[6, 4, 1], &mut rng).unwrap();
        let input: Vec<f64> = (0..6).map(|i| (i as f64 - 2.5) / 3.0).collect();
        let (_, acts) = head.forward(&input, "t").unwrap();
        // Loss = prob itself, so dprob = 1.
        let (grads, dinput) = head.backward(&acts, 1.0);

        let h = 1e-6;
        let prob_of = |head: &MlpHead, input: &[f64]| head.forward(input, "t").unwrap().0;
        for li in 0..head.layers.len() {
            for wi in 0..head.layers[li].weights.len() {
                let mut up = head.clone();
                up.layers[li].weights[wi] += h;
                let mut down = head.clone();
                down.layers[li].weights[wi] -= h;
                let fd = (prob_of(&up, &input) - prob_of(&down, &input)) / (2.0 * h);
                let got = grads[li].0[wi];
                assert!(
                    (got - fd).abs() / fd.abs().max(1e-8) < 1e-4,
                    "layer {li} weight {wi}: {got} vs {fd}"
                );
            }
            for bi in 0..head.layers[li].biases.len() {
                let mut up = head.clone();
                up.layers[li].biases[bi] += h;
                let mut down = head.clone();
                down.layers[li].biases[bi] -= h;
                let fd = (prob_of(&up, &input) - prob_of(&down, &input)) / (2.0 * h);
                let got = grads[li].1[bi];
                assert!((got - fd).abs() / fd.abs().max(1e-8) < 1e-4);
            }
        }
        for ii in 0..input.len() {
            let mut up = input.clone();
            up[ii] += h;
            let mut down = input.clone();
            down[ii] -= h;
            let fd = (prob_of(&head, &up) - prob_of(&head, &down)) / (2.0 * h);
            assert!((dinput[ii] - fd).abs() / fd.abs().max(1e-8) < 1e-4);
        }
    }
}
