//! Fine-grained frame-to-prompt alignment scores and training losses.
//!
//! A video is a bag of per-frame features, a class is a bag of prompt
//! embeddings; the two directed scores average best-match similarities
//! over frames and over prompts respectively, and zero-shot inference
//! ranks classes by their mean.

use crate::error::{Error, Result};
use crate::tensor::{Array, Real, Tape, Tensor};

/// Per-class prompt embedding matrices (`[N^st_k, D]`, unit rows).
/// Classes may have different prompt counts; no padding rows exist, so a
/// pad value can never win a max.
pub struct TextBank {
    classes: Vec<Array>,
}

impl TextBank {
    pub fn new(classes: Vec<Array>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::validation("text bank has no classes".to_string()));
        }
        let d = classes[0].shape().last().copied().unwrap_or(0);
        for (k, c) in classes.iter().enumerate() {
            let [n, dk] = <[usize; 2]>::try_from(c.shape())
                .map_err(|_| Error::dim(format!("class {k}: bank must be rank 2")))?;
            if n == 0 {
                return Err(Error::validation(format!("class {k}: empty prompt bank")));
            }
            if dk != d {
                return Err(Error::dim(format!(
                    "class {k}: width {dk} != {d} of class 0"
                )));
            }
            for row in 0..n {
                let norm: Real = c.data()[row * d..(row + 1) * d]
                    .iter()
                    .map(|v| v * v)
                    .sum::<Real>()
                    .sqrt();
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(Error::validation(format!(
                        "class {k} prompt {row}: norm {norm} is not 1"
                    )));
                }
            }
        }
        Ok(TextBank { classes })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class(&self, k: usize) -> &Array {
        &self.classes[k]
    }

    /// Bind every class matrix as an untracked constant on `tape` (prompt
    /// embeddings receive no gradients).
    pub fn bind(&self, tape: &Tape) -> Vec<Tensor> {
        self.classes.iter().map(|c| tape.constant(c)).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LossConfig {
    pub lambda_distill: Real,
    pub logit_scale: Real,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_distill: 1.0,
            logit_scale: 100.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_distill.is_finite() && self.lambda_distill >= 0.0) {
            return Err(Error::config(format!(
                "distillation weight {} must be finite and nonnegative",
                self.lambda_distill
            )));
        }
        if !(self.logit_scale.is_finite() && self.logit_scale > 0.0) {
            return Err(Error::config(format!(
                "logit scale {} must be finite and positive",
                self.logit_scale
            )));
        }
        Ok(())
    }
}

fn scores_matrix<F>(z: &[Tensor], banks: &[Tensor], mut cell: F) -> Result<Tensor>
where
    F: FnMut(&Tensor, &Tensor) -> Result<Tensor>,
{
    if z.is_empty() || banks.is_empty() {
        return Err(Error::dim("scoring needs at least one video and one class".to_string()));
    }
    let mut rows = Vec::with_capacity(z.len());
    for zn in z {
        let mut entries = Vec::with_capacity(banks.len());
        for bank in banks {
            entries.push(cell(zn, bank)?.reshape(vec![1])?);
        }
        rows.push(Tensor::concat_last(&entries)?.reshape(vec![1, banks.len()])?);
    }
    Tensor::concat_rows(&rows)
}

/// Video-to-text direction: for each frame take its best prompt, average
/// over frames, times the logit scale. `z` holds one `[T, D]` tensor per
/// video; `banks` one `[N^st_k, D]` tensor per class. Returns `[B, K]`.
pub fn score_v2t(z: &[Tensor], banks: &[Tensor], logit_scale: Real) -> Result<Tensor> {
    scores_matrix(z, banks, |zn, bank| {
        let sims = zn.matmul(&bank.transpose2()?)?;
        Ok(sims.max_last()?.mean_all().scale(logit_scale))
    })
}

/// Text-to-video direction: for each prompt take its best frame, average
/// over the class's prompts, times the logit scale. Returns `[B, K]`.
pub fn score_t2v(z: &[Tensor], banks: &[Tensor], logit_scale: Real) -> Result<Tensor> {
    scores_matrix(z, banks, |zn, bank| {
        let sims = zn.matmul(&bank.transpose2()?)?;
        Ok(sims.transpose2()?.max_last()?.mean_all().scale(logit_scale))
    })
}

/// Elementwise mean of the two directed score matrices; this is also the
/// zero-shot inference score.
pub fn overall_score(v2t: &Tensor, t2v: &Tensor) -> Result<Tensor> {
    Ok(v2t.add(t2v)?.scale(0.5))
}

/// Mean cross-entropy of score rows against integer labels.
pub fn ce_loss(scores: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let [b, k] = <[usize; 2]>::try_from(scores.shape())
        .map_err(|_| Error::dim("ce_loss: scores must be rank 2".to_string()))?;
    if labels.len() != b {
        return Err(Error::dim(format!(
            "ce_loss: {} labels for {b} rows",
            labels.len()
        )));
    }
    for &l in labels {
        if l >= k {
            return Err(Error::validation(format!("ce_loss: label {l} out of {k} classes")));
        }
    }
    let lse = scores.lse_last()?;
    let picked = scores.select_per_row(labels)?;
    Ok(lse.sub(&picked)?.mean_all())
}

/// Simplified feature distillation: mean squared L2 distance between
/// corresponding unit-normalized frame features of the tuned and frozen
/// encoders. The frozen features must come from untracked leaves so no
/// gradient reaches them.
pub fn distill_loss(z_tuned: &[Tensor], z_frozen: &[Tensor]) -> Result<Tensor> {
    if z_tuned.len() != z_frozen.len() || z_tuned.is_empty() {
        return Err(Error::dim(format!(
            "distill_loss: {} tuned vs {} frozen videos",
            z_tuned.len(),
            z_frozen.len()
        )));
    }
    let mut per_video = Vec::with_capacity(z_tuned.len());
    for (a, b) in z_tuned.iter().zip(z_frozen) {
        if a.shape() != b.shape() {
            return Err(Error::dim(format!(
                "distill_loss: shape {:?} vs {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let frames = a.shape()[0] as Real;
        let diff = a.l2_normalize_last()?.sub(&b.l2_normalize_last()?)?;
        per_video.push(diff.mul(&diff)?.sum_all().scale(1.0 / frames));
    }
    Ok(Tensor::mean_of(&per_video)?)
}

/// Cross-entropy plus weighted distillation.
pub fn total_loss(
    scores: &Tensor,
    labels: &[usize],
    z_tuned: &[Tensor],
    z_frozen: &[Tensor],
    cfg: &LossConfig,
) -> Result<Tensor> {
    cfg.validate()?;
    let ce = ce_loss(scores, labels)?;
    let distill = distill_loss(z_tuned, z_frozen)?;
    ce.add(&distill.scale(cfg.lambda_distill))
}

/// Mean per-class scores over views and the winning class (ties go to
/// the lowest index).
pub fn zero_shot_predict(view_scores: &[Vec<Real>]) -> Result<(usize, Vec<Real>)> {
    let Some(first) = view_scores.first() else {
        return Err(Error::validation("zero_shot_predict: no views".to_string()));
    };
    let k = first.len();
    if k == 0 {
        return Err(Error::validation("zero_shot_predict: empty score vector".to_string()));
    }
    let mut agg = vec![0.0; k];
    for view in view_scores {
        if view.len() != k {
            return Err(Error::dim(format!(
                "zero_shot_predict: view length {} != {k}",
                view.len()
            )));
        }
        for (a, v) in agg.iter_mut().zip(view) {
            *a += v;
        }
    }
    for a in &mut agg {
        *a /= view_scores.len() as Real;
    }
    let mut best = 0;
    for i in 1..k {
        if agg[i] > agg[best] {
            best = i;
        }
    }
    Ok((best, agg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: Vec<Real>) -> Vec<Real> {
        let n: Real = v.iter().map(|x| x * x).sum::<Real>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    fn bank_of(rows: Vec<Vec<Real>>) -> Array {
        let d = rows[0].len();
        let n = rows.len();
        Array::new(vec![n, d], rows.into_iter().flat_map(unit).collect()).unwrap()
    }

    #[test]
    fn degenerate_single_frame_single_prompt() {
        let tape = Tape::new();
        let z = vec![tape.constant(&bank_of(vec![vec![3.0, 4.0]]))];
        let bank = TextBank::new(vec![bank_of(vec![vec![1.0, 0.0]])]).unwrap();
        let banks = bank.bind(&tape);
        let v2t = score_v2t(&z, &banks, 100.0).unwrap();
        let t2v = score_t2v(&z, &banks, 100.0).unwrap();
        // Single frame, single prompt: both directions are the plain
        // scaled dot product 100 * 0.6.
        assert!((v2t.value()[0] - 60.0).abs() < 1e-12);
        assert_eq!(v2t.value(), t2v.value());
    }

    #[test]
    fn self_similarity_saturates_at_scale() {
        let tape = Tape::new();
        let row = unit(vec![0.2, -0.7, 0.4]);
        let z = vec![tape.constant(&Array::new(vec![2, 3], [row.clone(), row.clone()].concat()).unwrap())];
        let bank = TextBank::new(vec![Array::new(vec![1, 3], row).unwrap()]).unwrap();
        let banks = bank.bind(&tape);
        let s = score_v2t(&z, &banks, 100.0).unwrap();
        assert!((s.value()[0] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_scores_give_ln_k() {
        let tape = Tape::new();
        let s = tape.constant(&Array::full(vec![3, 5], 0.37));
        let loss = ce_loss(&s, &[0, 2, 4]).unwrap();
        assert!((loss.scalar().unwrap() - (5.0 as Real).ln()).abs() < 1e-12);
    }

    #[test]
    fn huge_margin_drives_ce_to_zero() {
        let tape = Tape::new();
        let mut data = vec![0.0; 4];
        data[1] = 200.0;
        let s = tape.constant(&Array::new(vec![1, 4], data).unwrap());
        assert!(ce_loss(&s, &[1]).unwrap().scalar().unwrap() < 1e-12);
    }

    #[test]
    fn ce_rejects_out_of_range_label() {
        let tape = Tape::new();
        let s = tape.constant(&Array::zeros(vec![1, 3]));
        assert!(matches!(ce_loss(&s, &[3]), Err(Error::Validation(_))));
    }

    #[test]
    fn distill_identity_and_orthogonal_cases() {
        let tape = Tape::new();
        let a = tape.constant(&bank_of(vec![vec![1.0, 0.0], vec![0.5, 0.5]]));
        assert_eq!(
            distill_loss(&[a.clone()], &[a.clone()]).unwrap().scalar().unwrap(),
            0.0
        );
        let b = tape.constant(&bank_of(vec![vec![0.0, 1.0], vec![0.5, -0.5]]));
        // Both row pairs orthogonal: squared distance 2 each.
        let loss = distill_loss(&[a], &[b]).unwrap().scalar().unwrap();
        assert!((loss - 2.0).abs() < 1e-12);
    }

    #[test]
    fn distill_gradient_skips_frozen_leaf() {
        let tape = Tape::new();
        let tuned = tape.param(&bank_of(vec![vec![0.3, 0.9]]));
        let frozen = tape.constant(&bank_of(vec![vec![1.0, 0.2]]));
        let loss = distill_loss(&[tuned.clone()], &[frozen.clone()]).unwrap();
        let grads = loss.backward().unwrap();
        assert!(grads.contains(&tuned));
        assert!(!grads.contains(&frozen));
    }

    #[test]
    fn total_loss_composes_linearly() {
        let tape = Tape::new();
        let s = tape.constant(&Array::new(vec![2, 3], vec![0.1, 0.9, -0.4, 1.2, 0.0, 0.3]).unwrap());
        let zt = vec![tape.constant(&bank_of(vec![vec![1.0, 1.0]]))];
        let zf = vec![tape.constant(&bank_of(vec![vec![1.0, 0.0]]))];
        let cfg = LossConfig { lambda_distill: 0.7, logit_scale: 100.0 };
        let total = total_loss(&s, &[1, 0], &zt, &zf, &cfg).unwrap().scalar().unwrap();
        let ce = ce_loss(&s, &[1, 0]).unwrap().scalar().unwrap();
        let di = distill_loss(&zt, &zf).unwrap().scalar().unwrap();
        assert!((total - (ce + 0.7 * di)).abs() < 1e-12);
        let lambda0 = LossConfig { lambda_distill: 0.0, logit_scale: 100.0 };
        let t0 = total_loss(&s, &[1, 0], &zt, &zf, &lambda0).unwrap().scalar().unwrap();
        assert_eq!(t0, ce);
    }

    #[test]
    fn prediction_aggregates_views_with_low_index_ties() {
        let (c, agg) = zero_shot_predict(&[vec![1.0, -2.0, 0.5]]).unwrap();
        assert_eq!(c, 0);
        assert_eq!(agg, vec![1.0, -2.0, 0.5]);
        // Opposite preferences of equal magnitude tie; class 0 wins.
        let (c, agg) = zero_shot_predict(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        assert_eq!(c, 0);
        assert_eq!(agg, vec![0.0, 0.0]);
        assert!(zero_shot_predict(&[]).is_err());
    }
}
