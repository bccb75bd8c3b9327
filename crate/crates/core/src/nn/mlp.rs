//! Stacked linear layers with a smooth nonlinearity between them and an
//! identity output, so the final layer can emit unbounded values.

use super::{silu, silu_prime, LinearGrads, LinearLayer};
use crate::Result;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<LinearLayer>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each linear layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each hidden linear layer.
    preacts: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<LinearGrads>,
}

impl Mlp {
    /// Build from a size chain, e.g. `[in, hidden, out]`.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least one layer");
        let layers = sizes
            .windows(2)
            .map(|w| LinearLayer::new(w[1], w[0], rng))
            .collect();
        Mlp { layers }
    }

    pub fn from_layers(layers: Vec<LinearLayer>) -> Self {
        Mlp { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(last);
        let mut cur = x.to_vec();
        for (idx, layer) in self.layers.iter().enumerate() {
            inputs.push(cur.clone());
            let (pre, _) = layer.forward(&cur)?;
            if idx < last {
                preacts.push(pre.clone());
                cur = pre.iter().map(|&v| silu(v)).collect();
            } else {
                cur = pre;
            }
        }
        Ok((cur, MlpCache { inputs, preacts }))
    }

    pub fn backward(&self, cache: &MlpCache, dy: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        let last = self.layers.len() - 1;
        let mut grads: Vec<Option<LinearGrads>> = vec![None; self.layers.len()];
        let mut d = dy.to_vec();
        for idx in (0..self.layers.len()).rev() {
            if idx < last {
                // Backprop through the activation that followed this layer.
                for (dv, &pre) in d.iter_mut().zip(&cache.preacts[idx]) {
                    *dv *= silu_prime(pre);
                }
            }
            let layer = &self.layers[idx];
            let lcache = super::LinearCache {
                x: cache.inputs[idx].clone(),
            };
            let (g, dx) = layer.backward(&lcache, &d)?;
            grads[idx] = Some(g);
            d = dx;
        }
        Ok((
            MlpGrads {
                layers: grads.into_iter().map(|g| g.unwrap()).collect(),
            },
            d,
        ))
    }
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGrads {
            layers: mlp.layers.iter().map(LinearGrads::zeros_like).collect(),
        }
    }

    pub fn accumulate(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.accumulate(b);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for l in self.layers.iter_mut() {
            l.scale(c);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::DenseMatrix;

    #[test]
    fn single_identity_layer_passthrough() {
        let mlp = Mlp::from_layers(vec![LinearLayer {
            w: DenseMatrix::identity(3),
            bias: vec![0.0; 3],
        }]);
        let x = vec![0.1, -0.2, 5.0];
        let (y, _) = mlp.forward(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_weights_output_final_bias() {
        let mut l1 = LinearLayer::zeros(4, 3);
        l1.bias = vec![0.0; 4];
        let mut l2 = LinearLayer::zeros(2, 4);
        l2.bias = vec![7.0, -3.0];
        let mlp = Mlp::from_layers(vec![l1, l2]);
        let (y, _) = mlp.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y, vec![7.0, -3.0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // 3-layer net, scalar loss = sum of squared outputs, 20 probes.
        let mut rng = crate::rng::stream(21, "test-mlp", 0);
        let mlp = Mlp::new(&[5, 8, 6, 4], &mut rng);
        let x = crate::rng::normal_vec(&mut rng, 5);

        let loss = |m: &Mlp| -> f64 {
            let (y, _) = m.forward(&x).unwrap();
            y.iter().map(|v| v * v).sum()
        };
        let (y, cache) = mlp.forward(&x).unwrap();
        let dy: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let (grads, _) = mlp.backward(&cache, &dy).unwrap();

        let h = 1e-5;
        let mut max_rel = 0.0f64;
        for probe in 0..20 {
            // Walk probes over layers and coordinates deterministically.
            let li = probe % mlp.layers.len();
            let layer_len = mlp.layers[li].w.values.len();
            let ci = (probe * 37) % layer_len;
            let mut plus = mlp.clone();
            plus.layers[li].w.values[ci] += h;
            let mut minus = mlp.clone();
            minus.layers[li].w.values[ci] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let an = grads.layers[li].dw.values[ci];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < 1e-5, "max relative error {max_rel}");
    }
}
