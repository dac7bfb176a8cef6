//! Multi-scale channel mixing of window-shifted tokens.
//!
//! Each temporal scale exchanges a fixed slice of channels with the
//! frames at ±δ; per-scale attention outputs are then averaged.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{mhsa, AttentionWeights, Real, Tensor};

/// How the donated channel budget 2·d is split across offsets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixMode {
    /// One block of d channels each from frames −δ and +δ.
    Separate,
    /// d/δ channels from every offset in −δ..−1 and +1..+δ.
    Continual,
}

/// What to source when a frame offset falls outside the clip.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryPolicy {
    /// Missing source frames contribute zeros (default).
    ZeroFill,
    /// Missing source frames fall back to the frame's own channels.
    SelfFill,
}

/// Temporal scales, mixed-channel fraction, and mixing mode.
#[derive(Clone, Debug)]
pub struct MixSpec {
    pub scales: Vec<usize>,
    pub gamma: Real,
    pub mode: MixMode,
    pub boundary: BoundaryPolicy,
    /// Test hook: rotate each sourced segment's channels by one, which
    /// must break the collapse-equivalence check. Never set in normal use.
    pub misalign: bool,
}

impl MixSpec {
    pub fn new(scales: Vec<usize>, gamma: Real, mode: MixMode, boundary: BoundaryPolicy) -> Self {
        MixSpec {
            scales,
            gamma,
            mode,
            boundary,
            misalign: false,
        }
    }

    /// Mixed-channel width d = γ·D; must be a positive integer with
    /// 2d ≤ D, and in continual mode divisible by every scale.
    pub fn mixed_width(&self, d_model: usize) -> Result<usize> {
        if !(self.gamma > 0.0 && self.gamma < 0.5) {
            return Err(Error::config(format!(
                "channel fraction gamma = {} outside (0, 0.5)",
                self.gamma
            )));
        }
        let w = self.gamma * d_model as Real;
        let rounded = w.round();
        if (w - rounded).abs() > 1e-9 || rounded < 1.0 {
            return Err(Error::config(format!(
                "gamma * D = {} * {d_model} is not a positive integer",
                self.gamma
            )));
        }
        let w = rounded as usize;
        if 2 * w > d_model {
            return Err(Error::config(format!(
                "mixed width {w} takes 2*{w} > {d_model} channels"
            )));
        }
        if self.mode == MixMode::Continual {
            for &s in &self.scales {
                if s == 0 || w % s != 0 {
                    return Err(Error::config(format!(
                        "continual mixing needs width {w} divisible by scale {s}"
                    )));
                }
            }
        }
        Ok(w)
    }

    fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::config("mix spec has no temporal scales".to_string()));
        }
        if self.scales.contains(&0) {
            return Err(Error::config("temporal scale 0 is not meaningful".to_string()));
        }
        Ok(())
    }
}

/// One contiguous channel range sourced from a fixed frame offset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub offset: i64,
    pub start: usize,
    pub end: usize,
}

/// Ordered channel segments covering `[0, D)` exactly once; the
/// zero-offset (self) segment is always last.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelPlan {
    segments: Vec<Segment>,
    d_model: usize,
}

impl ChannelPlan {
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn d_model(&self) -> usize {
        self.d_model
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.segments).expect("segment serialization cannot fail")
    }
}

/// Build the channel plan for one scale `delta`.
pub fn plan_channels(d_model: usize, delta: usize, spec: &MixSpec) -> Result<ChannelPlan> {
    spec.validate()?;
    if delta == 0 {
        return Err(Error::config("temporal scale 0 is not meaningful".to_string()));
    }
    let d = spec.mixed_width(d_model)?;
    let mut segments = Vec::new();
    match spec.mode {
        MixMode::Separate => {
            segments.push(Segment { offset: -(delta as i64), start: 0, end: d });
            segments.push(Segment { offset: delta as i64, start: d, end: 2 * d });
        }
        MixMode::Continual => {
            if d % delta != 0 {
                return Err(Error::config(format!(
                    "continual mixing needs width {d} divisible by scale {delta}"
                )));
            }
            let step = d / delta;
            let mut start = 0;
            for k in 0..delta {
                segments.push(Segment {
                    offset: -((delta - k) as i64),
                    start,
                    end: start + step,
                });
                start += step;
            }
            for k in 0..delta {
                segments.push(Segment {
                    offset: (k + 1) as i64,
                    start,
                    end: start + step,
                });
                start += step;
            }
        }
    }
    segments.push(Segment { offset: 0, start: 2 * d, end: d_model });
    Ok(ChannelPlan { segments, d_model })
}

/// Reassemble `tokens` (per-frame [N′, D] tensors) so that each plan
/// segment's channels come from the frame at its offset. Out-of-range
/// sources follow the boundary policy.
pub fn mix(
    tokens: &[Tensor],
    plan: &ChannelPlan,
    boundary: BoundaryPolicy,
    misalign: bool,
) -> Result<Vec<Tensor>> {
    let frames = tokens.len() as i64;
    if frames == 0 {
        return Err(Error::dim("mix: empty frame list".to_string()));
    }
    let shape = tokens[0].shape().to_vec();
    if shape.len() != 2 || shape[1] != plan.d_model {
        return Err(Error::dim(format!(
            "mix: token shape {shape:?} does not match plan width {}",
            plan.d_model
        )));
    }
    for tok in tokens {
        if tok.shape() != shape.as_slice() {
            return Err(Error::dim(format!(
                "mix: inconsistent frame shapes {:?} vs {shape:?}",
                tok.shape()
            )));
        }
        tokens[0].check_same_tape(tok)?;
    }
    let tape = tokens[0].tape().clone();
    let mut out = Vec::with_capacity(tokens.len());
    for t in 0..frames {
        let mut parts = Vec::with_capacity(plan.segments.len());
        for seg in &plan.segments {
            let src = t + seg.offset;
            let piece = if (0..frames).contains(&src) {
                tokens[src as usize].slice_last(seg.start, seg.end)?
            } else {
                match boundary {
                    BoundaryPolicy::ZeroFill => {
                        tape.zeros(vec![shape[0], seg.end - seg.start])
                    }
                    BoundaryPolicy::SelfFill => {
                        tokens[t as usize].slice_last(seg.start, seg.end)?
                    }
                }
            };
            let piece = if misalign && seg.end - seg.start > 1 {
                // Sabotage hook: rotate the segment's channels by one.
                let head = piece.slice_last(1, seg.end - seg.start)?;
                let tail = piece.slice_last(0, 1)?;
                Tensor::concat_last(&[head, tail])?
            } else {
                piece
            };
            parts.push(piece);
        }
        out.push(Tensor::concat_last(&parts)?);
    }
    Ok(out)
}

/// Per-scale: mix, then per-frame attention with a residual; finally the
/// unweighted mean over scales. Attention runs over the N′ window-shifted
/// tokens of each frame independently — no class token — and reuses the
/// block's spatial attention weights and first layer norm (`ln`), so the
/// mixed path adds no parameters.
pub fn multiscale_attend(
    tokens: &[Tensor],
    spec: &MixSpec,
    attn: &AttentionWeights,
    ln: &(Tensor, Tensor),
    ln_eps: Real,
) -> Result<Vec<Tensor>> {
    spec.validate()?;
    if tokens.is_empty() {
        return Err(Error::dim("multiscale_attend: empty frame list".to_string()));
    }
    let d_model = *tokens[0]
        .shape()
        .last()
        .ok_or_else(|| Error::dim("multiscale_attend: rank-0 tokens".to_string()))?;
    let mut per_scale: Vec<Vec<Tensor>> = Vec::with_capacity(spec.scales.len());
    for &delta in &spec.scales {
        let plan = plan_channels(d_model, delta, spec)?;
        let mixed = mix(tokens, &plan, spec.boundary, spec.misalign)?;
        let mut outs = Vec::with_capacity(mixed.len());
        for zt in &mixed {
            let attended = mhsa(&zt.layer_norm(&ln.0, &ln.1, ln_eps)?, attn)?;
            outs.push(attended.add(zt)?);
        }
        per_scale.push(outs);
    }
    let frames = tokens.len();
    let mut result = Vec::with_capacity(frames);
    for t in 0..frames {
        let at_t: Vec<Tensor> = per_scale.iter().map(|s| s[t].clone()).collect();
        result.push(Tensor::mean_of(&at_t)?);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Array, Tape};

    fn spec(mode: MixMode, gamma: Real, scales: Vec<usize>) -> MixSpec {
        MixSpec::new(scales, gamma, mode, BoundaryPolicy::ZeroFill)
    }

    #[test]
    fn separate_plan_matches_hand_instance() {
        let p = plan_channels(8, 1, &spec(MixMode::Separate, 0.25, vec![1])).unwrap();
        assert_eq!(
            p.segments(),
            &[
                Segment { offset: -1, start: 0, end: 2 },
                Segment { offset: 1, start: 2, end: 4 },
                Segment { offset: 0, start: 4, end: 8 },
            ]
        );
    }

    #[test]
    fn continual_plan_matches_hand_instance() {
        let p = plan_channels(16, 2, &spec(MixMode::Continual, 0.25, vec![2])).unwrap();
        assert_eq!(
            p.segments(),
            &[
                Segment { offset: -2, start: 0, end: 2 },
                Segment { offset: -1, start: 2, end: 4 },
                Segment { offset: 1, start: 4, end: 6 },
                Segment { offset: 2, start: 6, end: 8 },
                Segment { offset: 0, start: 8, end: 16 },
            ]
        );
    }

    #[test]
    fn continual_at_scale_one_equals_separate() {
        let c = plan_channels(8, 1, &spec(MixMode::Continual, 0.25, vec![1])).unwrap();
        let s = plan_channels(8, 1, &spec(MixMode::Separate, 0.25, vec![1])).unwrap();
        assert_eq!(c, s);
    }

    #[test]
    fn continual_rejects_indivisible_width() {
        // gamma*D = 1, not divisible by scale 2.
        assert!(matches!(
            plan_channels(8, 2, &spec(MixMode::Continual, 0.125, vec![2])),
            Err(Error::Config(_))
        ));
    }

    fn frames_tensor(tape: &Tape, frames: usize, n: usize, d: usize, f: impl Fn(usize, usize, usize) -> Real) -> Vec<Tensor> {
        (0..frames)
            .map(|t| {
                let data: Vec<Real> = (0..n * d).map(|i| f(t, i / d, i % d)).collect();
                tape.constant(&Array::new(vec![n, d], data).unwrap())
            })
            .collect()
    }

    #[test]
    fn zero_fill_boundary_hand_trace() {
        let tape = Tape::new();
        let toks = frames_tensor(&tape, 3, 1, 8, |t, _, c| (t * 8 + c) as Real + 1.0);
        let plan = plan_channels(8, 1, &spec(MixMode::Separate, 0.25, vec![1])).unwrap();
        let mixed = mix(&toks, &plan, BoundaryPolicy::ZeroFill, false).unwrap();
        // Frame 0 has no predecessor: channels [0,2) zero-filled.
        assert_eq!(mixed[0].value()[..2], [0.0, 0.0]);
        // Frame 1 sources channels [0,2) from frame 0.
        assert_eq!(mixed[1].value()[..2], [1.0, 2.0]);
        // Last frame has no successor: channels [2,4) zero-filled.
        assert_eq!(mixed[2].value()[2..4], [0.0, 0.0]);
        // Self channels untouched everywhere.
        assert_eq!(mixed[2].value()[4..], toks[2].value()[4..]);
    }

    #[test]
    fn time_constant_input_is_fixed_point_under_self_fill() {
        let tape = Tape::new();
        let toks = frames_tensor(&tape, 4, 3, 8, |_, p, c| (p * 8 + c) as Real * 0.3 - 1.0);
        for mode in [MixMode::Separate, MixMode::Continual] {
            let plan = plan_channels(8, 2, &spec(mode, 0.25, vec![2])).unwrap();
            let mixed = mix(&toks, &plan, BoundaryPolicy::SelfFill, false).unwrap();
            for (m, t) in mixed.iter().zip(&toks) {
                assert_eq!(m.value(), t.value());
            }
        }
    }

    #[test]
    fn mix_is_linear_in_its_input() {
        let tape = Tape::new();
        let xs = frames_tensor(&tape, 3, 2, 8, |t, p, c| ((t + 2 * p) * 13 + c) as Real * 0.17);
        let ys = frames_tensor(&tape, 3, 2, 8, |t, p, c| ((t * 7 + p) * 5 + c) as Real * -0.09);
        let plan = plan_channels(8, 1, &spec(MixMode::Separate, 0.25, vec![1])).unwrap();
        let (a, b) = (2.5, -0.75);
        let combo: Vec<Tensor> = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| x.scale(a).add(&y.scale(b)).unwrap())
            .collect();
        let lhs = mix(&combo, &plan, BoundaryPolicy::ZeroFill, false).unwrap();
        let mx = mix(&xs, &plan, BoundaryPolicy::ZeroFill, false).unwrap();
        let my = mix(&ys, &plan, BoundaryPolicy::ZeroFill, false).unwrap();
        for t in 0..3 {
            let rhs = mx[t].scale(a).add(&my[t].scale(b)).unwrap();
            assert_eq!(lhs[t].value(), rhs.value());
        }
    }

    #[test]
    fn interior_frames_are_pure_reindexings() {
        let tape = Tape::new();
        let toks = frames_tensor(&tape, 5, 2, 8, |t, p, c| ((t * 31 + p * 7) * 11 + c) as Real * 0.01);
        let plan = plan_channels(8, 1, &spec(MixMode::Separate, 0.25, vec![1])).unwrap();
        let mixed = mix(&toks, &plan, BoundaryPolicy::ZeroFill, false).unwrap();
        // Interior output values, sorted, equal the input values they were
        // sourced from: frames 1..4 pull channels [0,2) from 0..3, [2,4)
        // from 2..5, and [4,8) from themselves.
        let mut expected: Vec<Real> = Vec::new();
        for t in 1..4usize {
            expected.extend((0..2).flat_map(|p| toks[t - 1].value()[p * 8..p * 8 + 2].to_vec()));
            expected.extend((0..2).flat_map(|p| toks[t + 1].value()[p * 8 + 2..p * 8 + 4].to_vec()));
            expected.extend((0..2).flat_map(|p| toks[t].value()[p * 8 + 4..p * 8 + 8].to_vec()));
        }
        let mut got: Vec<Real> = (1..4).flat_map(|t| mixed[t].value()).collect();
        expected.sort_by(Real::total_cmp);
        got.sort_by(Real::total_cmp);
        assert_eq!(got, expected);
    }
}
