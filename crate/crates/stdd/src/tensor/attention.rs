//! Multi-head self-attention over a single token sequence.

use std::time::Instant;

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Projection weights for one attention layer. All four projections map
/// the model width to itself; heads are carved out of the channel axis.
#[derive(Clone)]
pub struct AttentionWeights {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub heads: usize,
}

/// Scaled dot-product self-attention of `z` (`n` tokens × `d` channels)
/// against itself.
///
/// Every call records `n * n` query-key token pairs on the tape's
/// interaction counter (pairs are shared across heads, not multiplied by
/// them) and adds its wall time to the tape's attention clock.
pub fn mhsa(z: &Tensor, w: &AttentionWeights) -> Result<Tensor> {
    let start = Instant::now();
    let [n, d] = <[usize; 2]>::try_from(z.shape())
        .map_err(|_| Error::dim(format!("mhsa: input rank {} != 2", z.shape().len())))?;
    if w.heads == 0 || d % w.heads != 0 {
        return Err(Error::config(format!(
            "mhsa: width {d} not divisible by {} heads",
            w.heads
        )));
    }
    let dh = d / w.heads;
    let scale = 1.0 / (dh as Real).sqrt();

    let q = z.matmul(&w.wq)?.add_bias(&w.bq)?;
    let k = z.matmul(&w.wk)?.add_bias(&w.bk)?;
    let v = z.matmul(&w.wv)?.add_bias(&w.bv)?;

    let mut head_outs = Vec::with_capacity(w.heads);
    for h in 0..w.heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let qh = q.slice_last(lo, hi)?;
        let kh = k.slice_last(lo, hi)?;
        let vh = v.slice_last(lo, hi)?;
        let scores = qh.matmul(&kh.transpose2()?)?.scale(scale);
        let attn = scores.softmax_last()?;
        head_outs.push(attn.matmul(&vh)?);
    }
    let merged = Tensor::concat_last(&head_outs)?;
    let out = merged.matmul(&w.wo)?.add_bias(&w.bo)?;

    z.tape().add_pairs((n as u64) * (n as u64));
    z.tape().add_attn_nanos(start.elapsed().as_nanos());
    Ok(out)
}
