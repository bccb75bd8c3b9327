//! Single-head scaled dot-product attention over reshaped tokens.
//!
//! The three projections each emit `tokens * token_dim` values which are
//! viewed as `tokens` rows of width `token_dim`. With `tokens = 1` the
//! softmax collapses to a single weight of 1 and the output reduces exactly
//! to the value projection.

use super::{check_dim, DenseMatrix};
use crate::error::CoreError;
use crate::Result;
use rand::Rng;

/// Numerically stable softmax (max subtraction). Errors on non-finite input.
pub fn softmax(x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite {
            context: "softmax".to_string(),
            detail: "input contains a non-finite value".to_string(),
        });
    }
    Ok(softmax_unchecked(x))
}

fn softmax_unchecked(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= sum;
    }
    out
}

#[derive(Debug, Clone)]
pub struct Attention {
    pub wq: DenseMatrix,
    pub wk: DenseMatrix,
    pub wv: DenseMatrix,
    /// Token count L.
    pub tokens: usize,
    /// Token width d.
    pub token_dim: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    q_in: Vec<f64>,
    k_in: Vec<f64>,
    v_in: Vec<f64>,
    q_proj: Vec<f64>,
    k_proj: Vec<f64>,
    v_proj: Vec<f64>,
    /// Row-softmaxed score matrix, L x L row-major.
    probs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AttentionGrads {
    pub dwq: DenseMatrix,
    pub dwk: DenseMatrix,
    pub dwv: DenseMatrix,
}

impl Attention {
    pub fn new(
        tokens: usize,
        token_dim: usize,
        query_in: usize,
        key_in: usize,
        value_in: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let width = tokens * token_dim;
        Attention {
            wq: DenseMatrix::init_fan_in(width, query_in, rng),
            wk: DenseMatrix::init_fan_in(width, key_in, rng),
            wv: DenseMatrix::init_fan_in(width, value_in, rng),
            tokens,
            token_dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.tokens * self.token_dim
    }

    pub fn param_count(&self) -> usize {
        self.wq.values.len() + self.wk.values.len() + self.wv.values.len()
    }

    pub fn forward(
        &self,
        query_in: &[f64],
        key_in: &[f64],
        value_in: &[f64],
    ) -> Result<(Vec<f64>, AttentionCache)> {
        check_dim("attention query input", self.wq.cols, query_in.len())?;
        check_dim("attention key input", self.wk.cols, key_in.len())?;
        check_dim("attention value input", self.wv.cols, value_in.len())?;
        let (l, d) = (self.tokens, self.token_dim);
        let q_proj = self.wq.matvec(query_in);
        let k_proj = self.wk.matvec(key_in);
        let v_proj = self.wv.matvec(value_in);
        let scale = 1.0 / (d as f64).sqrt();

        // scores[i][j] = q_i . k_j / sqrt(d), then row softmax.
        let mut probs = vec![0.0; l * l];
        for i in 0..l {
            let qi = &q_proj[i * d..(i + 1) * d];
            let mut row = vec![0.0; l];
            for j in 0..l {
                let kj = &k_proj[j * d..(j + 1) * d];
                row[j] = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
            }
            probs[i * l..(i + 1) * l].copy_from_slice(&softmax_unchecked(&row));
        }

        // out_i = sum_j probs[i][j] * v_j, flattened.
        let mut out = vec![0.0; l * d];
        for i in 0..l {
            let oi = &mut out[i * d..(i + 1) * d];
            for j in 0..l {
                let p = probs[i * l + j];
                let vj = &v_proj[j * d..(j + 1) * d];
                for (o, v) in oi.iter_mut().zip(vj) {
                    *o += p * v;
                }
            }
        }

        Ok((
            out,
            AttentionCache {
                q_in: query_in.to_vec(),
                k_in: key_in.to_vec(),
                v_in: value_in.to_vec(),
                q_proj,
                k_proj,
                v_proj,
                probs,
            },
        ))
    }

    /// Gradients w.r.t. the three projections and the three inputs.
    #[allow(clippy::type_complexity)]
    pub fn backward(
        &self,
        cache: &AttentionCache,
        d_out: &[f64],
    ) -> Result<(AttentionGrads, Vec<f64>, Vec<f64>, Vec<f64>)> {
        check_dim("attention cotangent", self.out_dim(), d_out.len())?;
        let (l, d) = (self.tokens, self.token_dim);
        let scale = 1.0 / (d as f64).sqrt();

        // d_probs[i][j] = d_out_i . v_j ; dv_j = sum_i probs[i][j] d_out_i
        let mut d_probs = vec![0.0; l * l];
        let mut dv_proj = vec![0.0; l * d];
        for i in 0..l {
            let doi = &d_out[i * d..(i + 1) * d];
            for j in 0..l {
                let vj = &cache.v_proj[j * d..(j + 1) * d];
                d_probs[i * l + j] = doi.iter().zip(vj).map(|(a, b)| a * b).sum();
                let p = cache.probs[i * l + j];
                let dvj = &mut dv_proj[j * d..(j + 1) * d];
                for (dv, o) in dvj.iter_mut().zip(doi) {
                    *dv += p * o;
                }
            }
        }

        // Row-softmax backward: ds_j = p_j (dp_j - sum_k dp_k p_k).
        let mut d_scores = vec![0.0; l * l];
        for i in 0..l {
            let p = &cache.probs[i * l..(i + 1) * l];
            let dp = &d_probs[i * l..(i + 1) * l];
            let dot: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
            for j in 0..l {
                d_scores[i * l + j] = p[j] * (dp[j] - dot);
            }
        }

        // dq_i = scale * sum_j ds[i][j] k_j ; dk_j = scale * sum_i ds[i][j] q_i
        let mut dq_proj = vec![0.0; l * d];
        let mut dk_proj = vec![0.0; l * d];
        for i in 0..l {
            for j in 0..l {
                let ds = d_scores[i * l + j] * scale;
                if ds == 0.0 {
                    continue;
                }
                let kj = &cache.k_proj[j * d..(j + 1) * d];
                let qi = &cache.q_proj[i * d..(i + 1) * d];
                let dqi = i * d;
                let dkj = j * d;
                for c in 0..d {
                    dq_proj[dqi + c] += ds * kj[c];
                    dk_proj[dkj + c] += ds * qi[c];
                }
            }
        }

        let mut dwq = DenseMatrix::zeros(self.wq.rows, self.wq.cols);
        dwq.add_outer(&dq_proj, &cache.q_in);
        let mut dwk = DenseMatrix::zeros(self.wk.rows, self.wk.cols);
        dwk.add_outer(&dk_proj, &cache.k_in);
        let mut dwv = DenseMatrix::zeros(self.wv.rows, self.wv.cols);
        dwv.add_outer(&dv_proj, &cache.v_in);

        let dq_in = self.wq.matvec_t(&dq_proj);
        let dk_in = self.wk.matvec_t(&dk_proj);
        let dv_in = self.wv.matvec_t(&dv_proj);

        Ok((AttentionGrads { dwq, dwk, dwv }, dq_in, dk_in, dv_in))
    }
}

impl AttentionGrads {
    pub fn zeros_like(attn: &Attention) -> Self {
        AttentionGrads {
            dwq: DenseMatrix::zeros(attn.wq.rows, attn.wq.cols),
            dwk: DenseMatrix::zeros(attn.wk.rows, attn.wk.cols),
            dwv: DenseMatrix::zeros(attn.wv.rows, attn.wv.cols),
        }
    }

    pub fn accumulate(&mut self, other: &AttentionGrads) {
        for (a, b) in self.dwq.values.iter_mut().zip(&other.dwq.values) {
            *a += b;
        }
        for (a, b) in self.dwk.values.iter_mut().zip(&other.dwk.values) {
            *a += b;
        }
        for (a, b) in self.dwv.values.iter_mut().zip(&other.dwv.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in self.dwq.values.iter_mut() {
            *v *= c;
        }
        for v in self.dwk.values.iter_mut() {
            *v *= c;
        }
        for v in self.dwv.values.iter_mut() {
            *v *= c;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_symmetry() {
        let p = softmax(&[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_large_values_do_not_overflow() {
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!(p[0] > 0.999_999);
        assert!(p[1] < 1e-6);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut rng = crate::rng::stream(31, "test-softmax", 0);
        let x = crate::rng::normal_vec(&mut rng, 6);
        for &c in &[-17.5, 0.3, 42.0] {
            let shifted: Vec<f64> = x.iter().map(|&v| v + c).collect();
            let a = softmax(&x).unwrap();
            let b = softmax(&shifted).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_rejects_nan() {
        assert!(softmax(&[0.0, f64::NAN]).is_err());
    }

    #[test]
    fn single_token_reduces_to_value_projection() {
        let mut rng = crate::rng::stream(32, "test-attn", 0);
        let attn = Attention::new(1, 6, 4, 5, 5, &mut rng);
        let q = crate::rng::normal_vec(&mut rng, 4);
        let kv = crate::rng::normal_vec(&mut rng, 5);
        let (out, _) = attn.forward(&q, &kv, &kv).unwrap();
        let v_proj = attn.wv.matvec(&kv);
        for (o, v) in out.iter().zip(&v_proj) {
            assert!((o - v).abs() < 1e-14);
        }
    }

    #[test]
    fn identical_keys_give_uniform_attention() {
        // All key tokens identical => each query row attends uniformly,
        // so every output row equals the mean of the value tokens.
        let mut rng = crate::rng::stream(33, "test-attn", 1);
        let (l, d) = (3, 4);
        let mut attn = Attention::new(l, d, 5, 5, 5, &mut rng);
        // Force k tokens identical by making every token row of Wk the same.
        let first_token_rows: Vec<f64> = attn.wk.values[0..d * attn.wk.cols].to_vec();
        for t in 1..l {
            attn.wk.values[t * d * attn.wk.cols..(t + 1) * d * attn.wk.cols]
                .copy_from_slice(&first_token_rows);
        }
        let q = crate::rng::normal_vec(&mut rng, 5);
        let v = crate::rng::normal_vec(&mut rng, 5);
        let (out, _) = attn.forward(&q, &v, &v).unwrap();
        let v_proj = attn.wv.matvec(&v);
        let mut mean = vec![0.0; d];
        for t in 0..l {
            for c in 0..d {
                mean[c] += v_proj[t * d + c] / l as f64;
            }
        }
        for t in 0..l {
            for c in 0..d {
                assert!((out[t * d + c] - mean[c]).abs() < 1e-12);
            }
        }
    }
}
