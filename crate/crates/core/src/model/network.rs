//! Forward and backward passes of the pre-norm causal decoder.
//!
//! A sample is cut at its first ASK token, so every sequence is processed
//! at its own length and no padding reaches the network. Only the ASK row
//! is supervised; the last block therefore computes keys and values for
//! every row but queries, projection and feed-forward for the ASK row only.

use super::kernels::{
    add_bias, add_col_sums, gelu, gelu_grad, gemm, layernorm_bwd, layernorm_fwd, log_sum_exp,
    softmax_in_place, Real, View,
};
use super::params::{LayerLayout, Model};
use crate::error::{Error, Result};
use crate::synth::Specials;

struct LayerCache<T> {
    /// First query row; rows `[s, n)` are carried to the next block.
    s: usize,
    xhat1: Vec<T>,
    rstd1: Vec<T>,
    h1: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// Attention weights, `heads × R × n`, zero above the diagonal.
    probs: Vec<T>,
    att: Vec<T>,
    xhat2: Vec<T>,
    rstd2: Vec<T>,
    h2: Vec<T>,
    pre: Vec<T>,
    act: Vec<T>,
}

struct Trace<T> {
    ids: Vec<usize>,
    layers: Vec<LayerCache<T>>,
    xhat_f: Vec<T>,
    rstd_f: Vec<T>,
    h_f: Vec<T>,
    logits: Vec<T>,
}

/// Length of the prefix up to and including the first ASK token.
pub fn ask_prefix(ids: &[usize], ask: usize) -> Result<usize> {
    ids.iter()
        .position(|&t| t == ask)
        .map(|p| p + 1)
        .ok_or_else(|| Error::data("input has no ASK token"))
}

fn slice<'a, T>(p: &'a [T], r: &std::ops::Range<usize>) -> &'a [T] {
    &p[r.clone()]
}

impl<T: Real> Model<T> {
    fn check_ids(&self, ids: &[usize]) -> Result<usize> {
        let n = ask_prefix(ids, Specials::default().ask)?;
        if n > self.cfg.context {
            return Err(Error::data(format!(
                "sequence of {n} tokens exceeds context {}",
                self.cfg.context
            )));
        }
        if let Some(&bad) = ids[..n].iter().find(|&&t| t >= self.cfg.vocab) {
            return Err(Error::data(format!(
                "token id {bad} outside vocabulary of {}",
                self.cfg.vocab
            )));
        }
        Ok(n)
    }

    fn layer_forward(&self, ll: &LayerLayout, x: &[T], n: usize, s: usize) -> (Vec<T>, LayerCache<T>) {
        let p = &self.params;
        let d = self.cfg.dim;
        let f = self.cfg.ff_dim;
        let heads = self.cfg.heads;
        let dh = self.cfg.head_dim();
        let r = n - s;
        let zero = T::zero();

        let mut h1 = vec![zero; n * d];
        let mut xhat1 = vec![zero; n * d];
        let mut rstd1 = vec![zero; n];
        layernorm_fwd(x, slice(p, &ll.ln1_g), slice(p, &ll.ln1_b), &mut h1, &mut xhat1, &mut rstd1);

        let w = ll.w_qkv.start;
        let b = &p[ll.b_qkv.clone()];
        let mut q = vec![zero; r * d];
        let mut k = vec![zero; n * d];
        let mut v = vec![zero; n * d];
        gemm(View::rm(&h1, s * d, r, d, d), View::rm(p, w, d, d, 3 * d), &mut q, 0, d, zero);
        gemm(View::rm(&h1, 0, n, d, d), View::rm(p, w + d, d, d, 3 * d), &mut k, 0, d, zero);
        gemm(View::rm(&h1, 0, n, d, d), View::rm(p, w + 2 * d, d, d, 3 * d), &mut v, 0, d, zero);
        add_bias(&mut q, &b[..d]);
        add_bias(&mut k, &b[d..2 * d]);
        add_bias(&mut v, &b[2 * d..]);

        let scale = T::from_f64c(1.0 / (dh as f64).sqrt());
        let mut probs = vec![zero; heads * r * n];
        let mut att = vec![zero; r * d];
        for hd in 0..heads {
            let pr = &mut probs[hd * r * n..(hd + 1) * r * n];
            gemm(
                View::rm(&q, hd * dh, r, dh, d),
                View::rm(&k, hd * dh, n, dh, d).t(),
                pr,
                0,
                n,
                zero,
            );
            for i in 0..r {
                let row = &mut pr[i * n..(i + 1) * n];
                let last = s + i;
                row[..=last].iter_mut().for_each(|x| *x *= scale);
                softmax_in_place(&mut row[..=last]);
                row[last + 1..].iter_mut().for_each(|x| *x = zero);
            }
            gemm(View::rm(pr, 0, r, n, n), View::rm(&v, hd * dh, n, dh, d), &mut att, hd * dh, d, zero);
        }

        let mut x1 = x[s * d..].to_vec();
        gemm(View::rm(&att, 0, r, d, d), View::rm(p, ll.w_o.start, d, d, d), &mut x1, 0, d, T::one());
        add_bias(&mut x1, slice(p, &ll.b_o));

        let mut h2 = vec![zero; r * d];
        let mut xhat2 = vec![zero; r * d];
        let mut rstd2 = vec![zero; r];
        layernorm_fwd(&x1, slice(p, &ll.ln2_g), slice(p, &ll.ln2_b), &mut h2, &mut xhat2, &mut rstd2);
        let mut pre = vec![zero; r * f];
        gemm(View::rm(&h2, 0, r, d, d), View::rm(p, ll.w_fc1.start, d, f, f), &mut pre, 0, f, zero);
        add_bias(&mut pre, slice(p, &ll.b_fc1));
        let act: Vec<T> = pre.iter().map(|&z| gelu(z)).collect();
        let mut out = x1;
        gemm(View::rm(&act, 0, r, f, f), View::rm(p, ll.w_fc2.start, f, d, d), &mut out, 0, d, T::one());
        add_bias(&mut out, slice(p, &ll.b_fc2));

        let cache = LayerCache {
            s,
            xhat1,
            rstd1,
            h1,
            q,
            k,
            v,
            probs,
            att,
            xhat2,
            rstd2,
            h2,
            pre,
            act,
        };
        (out, cache)
    }

    /// Returns `dx` for all `n` input rows given `dout` for rows `[s, n)`.
    fn layer_backward(&self, ll: &LayerLayout, c: &LayerCache<T>, n: usize, dout: &[T], g: &mut [T]) -> Vec<T> {
        let p = &self.params;
        let d = self.cfg.dim;
        let f = self.cfg.ff_dim;
        let heads = self.cfg.heads;
        let dh = self.cfg.head_dim();
        let s = c.s;
        let r = n - s;
        let zero = T::zero();
        let one = T::one();

        // Feed-forward.
        gemm(View::rm(&c.act, 0, r, f, f).t(), View::rm(dout, 0, r, d, d), g, ll.w_fc2.start, d, one);
        add_col_sums(dout, &mut g[ll.b_fc2.clone()]);
        let mut dpre = vec![zero; r * f];
        gemm(View::rm(dout, 0, r, d, d), View::rm(p, ll.w_fc2.start, f, d, d).t(), &mut dpre, 0, f, zero);
        for (dz, &z) in dpre.iter_mut().zip(&c.pre) {
            *dz *= gelu_grad(z);
        }
        gemm(View::rm(&c.h2, 0, r, d, d).t(), View::rm(&dpre, 0, r, f, f), g, ll.w_fc1.start, f, one);
        add_col_sums(&dpre, &mut g[ll.b_fc1.clone()]);
        let mut dh2 = vec![zero; r * d];
        gemm(View::rm(&dpre, 0, r, f, f), View::rm(p, ll.w_fc1.start, d, f, f).t(), &mut dh2, 0, d, zero);
        let mut dx1 = dout.to_vec();
        {
            let (gg, gb) = split_two(g, &ll.ln2_g, &ll.ln2_b);
            layernorm_bwd(&dh2, &c.xhat2, &c.rstd2, slice(p, &ll.ln2_g), gg, gb, &mut dx1);
        }

        // Attention output projection.
        gemm(View::rm(&c.att, 0, r, d, d).t(), View::rm(&dx1, 0, r, d, d), g, ll.w_o.start, d, one);
        add_col_sums(&dx1, &mut g[ll.b_o.clone()]);
        let mut datt = vec![zero; r * d];
        gemm(View::rm(&dx1, 0, r, d, d), View::rm(p, ll.w_o.start, d, d, d).t(), &mut datt, 0, d, zero);

        let scale = T::from_f64c(1.0 / (dh as f64).sqrt());
        let mut dq = vec![zero; r * d];
        let mut dk = vec![zero; n * d];
        let mut dv = vec![zero; n * d];
        let mut dp = vec![zero; r * n];
        for hd in 0..heads {
            let pr = &c.probs[hd * r * n..(hd + 1) * r * n];
            gemm(View::rm(&datt, hd * dh, r, dh, d), View::rm(&c.v, hd * dh, n, dh, d).t(), &mut dp, 0, n, zero);
            gemm(View::rm(pr, 0, r, n, n).t(), View::rm(&datt, hd * dh, r, dh, d), &mut dv, hd * dh, d, one);
            for i in 0..r {
                let last = s + i;
                let prow = &pr[i * n..i * n + last + 1];
                let drow = &mut dp[i * n..i * n + last + 1];
                let dot: T = prow.iter().zip(drow.iter()).map(|(&a, &b)| a * b).sum();
                for (ds, &pv) in drow.iter_mut().zip(prow) {
                    *ds = pv * (*ds - dot) * scale;
                }
                dp[i * n + last + 1..(i + 1) * n].iter_mut().for_each(|x| *x = zero);
            }
            gemm(View::rm(&dp, 0, r, n, n), View::rm(&c.k, hd * dh, n, dh, d), &mut dq, hd * dh, d, zero);
            gemm(View::rm(&dp, 0, r, n, n).t(), View::rm(&c.q, hd * dh, r, dh, d), &mut dk, hd * dh, d, zero);
        }

        let w = ll.w_qkv.start;
        gemm(View::rm(&c.h1, s * d, r, d, d).t(), View::rm(&dq, 0, r, d, d), g, w, 3 * d, one);
        gemm(View::rm(&c.h1, 0, n, d, d).t(), View::rm(&dk, 0, n, d, d), g, w + d, 3 * d, one);
        gemm(View::rm(&c.h1, 0, n, d, d).t(), View::rm(&dv, 0, n, d, d), g, w + 2 * d, 3 * d, one);
        {
            let gb = &mut g[ll.b_qkv.clone()];
            add_col_sums(&dq, &mut gb[..d]);
            add_col_sums(&dk, &mut gb[d..2 * d]);
            add_col_sums(&dv, &mut gb[2 * d..]);
        }
        let mut dh1 = vec![zero; n * d];
        gemm(View::rm(&dk, 0, n, d, d), View::rm(p, w + d, d, d, 3 * d).t(), &mut dh1, 0, d, zero);
        gemm(View::rm(&dv, 0, n, d, d), View::rm(p, w + 2 * d, d, d, 3 * d).t(), &mut dh1, 0, d, one);
        gemm(View::rm(&dq, 0, r, d, d), View::rm(p, w, d, d, 3 * d).t(), &mut dh1, s * d, d, one);

        let mut dx = vec![zero; n * d];
        dx[s * d..].iter_mut().zip(&dx1).for_each(|(a, &b)| *a = b);
        let (gg, gb) = split_two(g, &ll.ln1_g, &ll.ln1_b);
        layernorm_bwd(&dh1, &c.xhat1, &c.rstd1, slice(p, &ll.ln1_g), gg, gb, &mut dx);
        dx
    }

    fn trace(&self, ids: &[usize]) -> Result<Trace<T>> {
        let n = self.check_ids(ids)?;
        let ids = ids[..n].to_vec();
        let d = self.cfg.dim;
        let p = &self.params;
        let tok = self.layout.tok_emb.start;
        let pos = self.layout.pos_emb.start;
        let mut x = vec![T::zero(); n * d];
        for (t, &id) in ids.iter().enumerate() {
            for j in 0..d {
                x[t * d + j] = p[tok + id * d + j] + p[pos + t * d + j];
            }
        }
        let mut layers = Vec::with_capacity(self.cfg.layers);
        for (l, ll) in self.layout.layers.iter().enumerate() {
            let s = if l + 1 == self.cfg.layers { n - 1 } else { 0 };
            let (out, cache) = self.layer_forward(ll, &x, n, s);
            layers.push(cache);
            x = out;
        }
        // x is now the single ASK row.
        let mut h_f = vec![T::zero(); d];
        let mut xhat_f = vec![T::zero(); d];
        let mut rstd_f = vec![T::zero(); 1];
        layernorm_fwd(
            &x,
            slice(p, &self.layout.lnf_g),
            slice(p, &self.layout.lnf_b),
            &mut h_f,
            &mut xhat_f,
            &mut rstd_f,
        );
        let v = self.cfg.vocab;
        let mut logits = p[self.layout.head_b.clone()].to_vec();
        gemm(
            View::rm(&h_f, 0, 1, d, d),
            View::rm(p, self.layout.head_w.start, d, v, v),
            &mut logits,
            0,
            v,
            T::one(),
        );
        Ok(Trace {
            ids,
            layers,
            xhat_f,
            rstd_f,
            h_f,
            logits,
        })
    }

    /// Vocabulary logits at the first ASK position.
    pub fn forward(&self, ids: &[usize]) -> Result<Vec<T>> {
        Ok(self.trace(ids)?.logits)
    }

    /// Cross-entropy at the ASK position; adds `scale·∂CE/∂θ` into `grad`.
    pub fn loss_and_grad(&self, ids: &[usize], target: usize, scale: T, grad: &mut [T]) -> Result<T> {
        assert_eq!(grad.len(), self.layout.total, "gradient buffer size");
        if target >= self.cfg.vocab {
            return Err(Error::data(format!("target {target} outside vocabulary")));
        }
        let tr = self.trace(ids)?;
        let p = &self.params;
        let d = self.cfg.dim;
        let v = self.cfg.vocab;
        let n = tr.ids.len();
        let loss = log_sum_exp(&tr.logits) - tr.logits[target];

        let mut dlogits = tr.logits.clone();
        softmax_in_place(&mut dlogits);
        dlogits[target] -= T::one();
        dlogits.iter_mut().for_each(|x| *x *= scale);

        add_col_sums(&dlogits, &mut grad[self.layout.head_b.clone()]);
        gemm(
            View::rm(&tr.h_f, 0, 1, d, d).t(),
            View::rm(&dlogits, 0, 1, v, v),
            grad,
            self.layout.head_w.start,
            v,
            T::one(),
        );
        let mut dh = vec![T::zero(); d];
        gemm(
            View::rm(&dlogits, 0, 1, v, v),
            View::rm(p, self.layout.head_w.start, d, v, v).t(),
            &mut dh,
            0,
            d,
            T::zero(),
        );
        let mut dx = vec![T::zero(); d];
        {
            let (gg, gb) = split_two(grad, &self.layout.lnf_g, &self.layout.lnf_b);
            layernorm_bwd(&dh, &tr.xhat_f, &tr.rstd_f, slice(p, &self.layout.lnf_g), gg, gb, &mut dx);
        }
        for (ll, cache) in self.layout.layers.iter().zip(&tr.layers).rev() {
            dx = self.layer_backward(ll, cache, n, &dx, grad);
        }
        let tok = self.layout.tok_emb.start;
        let pos = self.layout.pos_emb.start;
        for (t, &id) in tr.ids.iter().enumerate() {
            for j in 0..d {
                grad[tok + id * d + j] += dx[t * d + j];
                grad[pos + t * d + j] += dx[t * d + j];
            }
        }
        Ok(loss)
    }

    /// Mean cross-entropy of a batch without gradients.
    pub fn ce_loss(&self, batch: &[(Vec<usize>, usize)]) -> Result<f64> {
        let mut total = 0.0;
        for (ids, target) in batch {
            let logits = self.forward(ids)?;
            total += ce_from_logits(&logits, *target).to_f64c();
        }
        Ok(total / batch.len() as f64)
    }
}

/// `−log softmax(logits)[target]`.
pub fn ce_from_logits<T: Real>(logits: &[T], target: usize) -> T {
    log_sum_exp(logits) - logits[target]
}

fn split_two<'a, T>(
    g: &'a mut [T],
    a: &std::ops::Range<usize>,
    b: &std::ops::Range<usize>,
) -> (&'a mut [T], &'a mut [T]) {
    assert!(a.end <= b.start, "ranges must be ordered and disjoint");
    let (lo, hi) = g.split_at_mut(b.start);
    (&mut lo[a.clone()], &mut hi[..b.len()])
}
