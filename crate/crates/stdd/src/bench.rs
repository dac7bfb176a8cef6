//! Measurement and verification harness: interaction-count identities,
//! runtime scaling, end-to-end self-checks, and toy training.

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::alignment::{
    ce_loss, distill_loss, overall_score, score_t2v, score_v2t, TextBank,
};
use crate::encoder::{
    closed_form_pairs, init_weights, Model, EncoderConfig, Variant, WeightMap,
};
use crate::error::{Error, Result};
use crate::mcm::{BoundaryPolicy, MixMode, MixSpec};
use crate::synth::{generate_video, SynthClass};
use crate::tensor::{
    finite_diff_gradients, max_rel_error, Array, Real, Tape,
};
use crate::wsm::{build_mask_schedule, visible_count, MaskStrategy, TokenGrid, WindowSpec};

/// Outcome of one named self-check.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn cheap_video(cfg: &EncoderConfig) -> Array {
    let numel = cfg.frames * cfg.height * cfg.width * 3;
    let data = (0..numel).map(|i| ((i * 37 + 11) % 101) as Real / 101.0).collect();
    Array::new(vec![cfg.frames, cfg.height, cfg.width, 3], data)
        .expect("shape and data length agree by construction")
}

fn measured_pairs(cfg: &EncoderConfig, weights: &WeightMap) -> Result<u64> {
    let tape = Tape::new();
    let model = Model::bind(&tape, cfg, weights, false)?;
    tape.reset_pair_count();
    model.encode_video(&cheap_video(cfg))?;
    Ok(tape.pair_count())
}

/// Random valid geometries for the interaction-count identity check.
fn random_configs(seed: u64, count: usize) -> Vec<EncoderConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let (l1, l2) = *[(2usize, 2usize), (4, 4), (2, 4), (4, 2)]
            .iter()
            .nth(rng.gen_range(0..4))
            .unwrap();
        let (w1, w2) = *[(1usize, 1usize), (2, 2), (1, 2), (2, 1)]
            .iter()
            .nth(rng.gen_range(0..4))
            .unwrap();
        if l1 % w1 != 0 || l2 % w2 != 0 {
            continue;
        }
        let r = *[0.25, 0.5, 0.75, 1.0].iter().nth(rng.gen_range(0..4)).unwrap();
        let keep = r * (w1 * w2) as Real;
        if (keep - keep.round()).abs() > 1e-9 || keep.round() < 1.0 {
            continue;
        }
        let d_model = *[8usize, 16].iter().nth(rng.gen_range(0..2)).unwrap();
        let scales = if rng.gen_bool(0.5) { vec![1] } else { vec![1, 2] };
        out.push(EncoderConfig {
            frames: *[2usize, 4, 8].iter().nth(rng.gen_range(0..3)).unwrap(),
            height: l1 * 4,
            width: l2 * 4,
            patch: 4,
            d_model,
            layers: rng.gen_range(1..=2),
            heads: *[1usize, 2].iter().nth(rng.gen_range(0..2)).unwrap(),
            window: WindowSpec::new(w1, w2, r),
            mix: MixSpec::new(scales, 1.0 / d_model as Real, MixMode::Separate, BoundaryPolicy::ZeroFill),
            mask_strategy: MaskStrategy::RepeatWindowShift,
            variant: Variant::Stca,
            ln_eps: 1e-5,
        });
    }
    out
}

const VARIANTS: [Variant; 4] = [
    Variant::SpatialOnly,
    Variant::Stca,
    Variant::FullSpacetime,
    Variant::Factorized,
];

/// Exact-count identity over random configs plus the closed-form
/// spatial-cost ratio bound at the published defaults (two scales, half
/// retention: bound 1 + S·r² = 1.5).
pub fn flops_report(seed: u64, count: usize) -> Result<serde_json::Value> {
    let mut entries = Vec::new();
    let mut all_exact = true;
    for base in random_configs(seed, count) {
        let weights = init_weights(&base, seed)?;
        let mut per_variant = Vec::new();
        for variant in VARIANTS {
            let cfg = EncoderConfig { variant, ..base.clone() };
            let closed = closed_form_pairs(&cfg)?;
            let measured = measured_pairs(&cfg, &weights)?;
            all_exact &= closed == measured;
            per_variant.push(json!({
                "variant": variant.name(),
                "closed_form": closed,
                "measured": measured,
                "exact": closed == measured,
            }));
        }
        entries.push(json!({
            "frames": base.frames,
            "tokens": base.n_tokens()?,
            "window": [base.window.w1, base.window.w2],
            "keep_fraction": base.window.r,
            "scales": base.mix.scales,
            "layers": base.layers,
            "variants": per_variant,
        }));
    }

    // Ratio bound at the published defaults, closed forms only.
    let mut ratios = Vec::new();
    let mut ratio_ok = true;
    for frames in [4usize, 8, 16] {
        for grid in [2usize, 4, 8] {
            // grid x grid patches at the default 2x2 window, half kept.
            let cfg = EncoderConfig {
                frames,
                height: grid * 4,
                width: grid * 4,
                patch: 4,
                d_model: 16,
                layers: 1,
                heads: 1,
                window: WindowSpec::new(2, 2, 0.5),
                mix: MixSpec::new(vec![1, 2], 1.0 / 16.0, MixMode::Separate, BoundaryPolicy::ZeroFill),
                ..EncoderConfig::default()
            };
            let stca = closed_form_pairs(&EncoderConfig { variant: Variant::Stca, ..cfg.clone() })? as f64;
            let spatial =
                closed_form_pairs(&EncoderConfig { variant: Variant::SpatialOnly, ..cfg })? as f64;
            let ratio = stca / spatial;
            ratio_ok &= ratio <= 1.5;
            ratios.push(json!({
                "frames": frames,
                "tokens": grid * grid,
                "ratio": ratio,
            }));
        }
    }
    Ok(json!({
        "kind": "bench_flops",
        "configs": entries,
        "all_exact": all_exact,
        "ratio_bound": 1.5,
        "ratios": ratios,
        "ratio_ok": ratio_ok,
        "pass": all_exact && ratio_ok,
    }))
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Wall-time scaling of the attention path over frame counts {4, 8, 16,
/// 32} at 16 patch tokens, width 64, 4 blocks. Times are accumulated
/// inside attention evaluations only, so the fit isolates the quantity
/// the closed forms describe (the surrounding projections and MLPs are
/// linear in T for every variant and would flatten all slopes alike).
pub fn runtime_report(repeats: usize) -> Result<serde_json::Value> {
    let frame_counts = [4usize, 8, 16, 32];
    let mut series = Vec::new();
    let mut slopes = IndexMap::new();
    let mut inconclusive = false;
    for variant in [Variant::SpatialOnly, Variant::Stca, Variant::FullSpacetime] {
        let mut medians = Vec::new();
        for &frames in &frame_counts {
            let cfg = EncoderConfig {
                frames,
                height: 16,
                width: 16,
                patch: 4, // 4x4 patch grid: 16 tokens
                variant,
                ..EncoderConfig::default()
            };
            let weights = init_weights(&cfg, 7)?;
            let video = cheap_video(&cfg);
            let run_once = || -> Result<f64> {
                let tape = Tape::new();
                let model = Model::bind(&tape, &cfg, &weights, false)?;
                model.encode_video(&video)?;
                Ok(tape.attn_seconds())
            };
            run_once()?; // warm-up: allocator and cache effects
            let mut times = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                // Amortize each sample over a few forwards to damp
                // scheduler jitter at the small end of the grid.
                let inner = 3;
                let mut total = 0.0;
                for _ in 0..inner {
                    total += run_once()?;
                }
                times.push(total / inner as f64);
            }
            let m = median(times);
            if m < 1e-6 {
                inconclusive = true;
            }
            medians.push(m);
        }
        let xs: Vec<f64> = frame_counts.iter().map(|&t| (t as f64).ln()).collect();
        let ys: Vec<f64> = medians.iter().map(|&t| t.max(1e-12).ln()).collect();
        let slope = fit_slope(&xs, &ys);
        slopes.insert(variant.name(), slope);
        series.push(json!({
            "variant": variant.name(),
            "frames": frame_counts,
            "median_seconds": medians,
            "slope": slope,
        }));
    }
    let stca = slopes["stca"];
    let full = slopes["full_spacetime"];
    let pass = inconclusive || ((0.8..=1.3).contains(&stca) && full >= 1.6);
    Ok(json!({
        "kind": "bench_runtime",
        "series": series,
        "stca_slope": stca,
        "full_spacetime_slope": full,
        "inconclusive": inconclusive,
        "pass": pass,
    }))
}

/// The 2-frame micro geometry used by the gradient check: 4 patch
/// tokens, width 8, 2 blocks.
pub fn micro_config() -> EncoderConfig {
    EncoderConfig {
        frames: 2,
        height: 16,
        width: 16,
        patch: 8,
        d_model: 8,
        layers: 2,
        heads: 2,
        window: WindowSpec::new(2, 2, 0.5),
        mix: MixSpec::new(vec![1], 0.125, MixMode::Separate, BoundaryPolicy::ZeroFill),
        ..EncoderConfig::default()
    }
}

fn random_unit_bank(rng: &mut ChaCha8Rng, classes: usize, prompts: usize, d: usize) -> TextBank {
    let mut mats = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut data = Vec::with_capacity(prompts * d);
        for _ in 0..prompts {
            let row: Vec<Real> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = row.iter().map(|v| v * v).sum::<Real>().sqrt().max(1e-12);
            data.extend(row.into_iter().map(|v| v / norm));
        }
        mats.push(Array::new(vec![prompts, d], data).expect("lengths agree"));
    }
    TextBank::new(mats).expect("rows are unit-normalized")
}

/// Full-pipeline loss on the micro config for a given tuned weight map:
/// encode two videos with the masked-path encoder, score against a fixed
/// bank, cross-entropy plus distillation against a frozen spatial twin.
fn micro_loss(
    weights: &WeightMap,
    frozen: &WeightMap,
    videos: &[Array],
    labels: &[usize],
    bank: &TextBank,
    trainable: bool,
) -> Result<(Real, Option<Vec<Array>>, WeightMap)> {
    let cfg = micro_config();
    let frozen_cfg = EncoderConfig { variant: Variant::SpatialOnly, ..micro_config() };
    let tape = Tape::new();
    let model = Model::bind(&tape, &cfg, weights, trainable)?;
    let twin = Model::bind(&tape, &frozen_cfg, frozen, false)?;
    let z: Vec<_> = videos.iter().map(|v| model.encode_video(v)).collect::<Result<_>>()?;
    let zf: Vec<_> = videos.iter().map(|v| twin.encode_video(v)).collect::<Result<_>>()?;
    let banks = bank.bind(&tape);
    let logit_scale = 10.0;
    let scores = overall_score(
        &score_v2t(&z, &banks, logit_scale)?,
        &score_t2v(&z, &banks, logit_scale)?,
    )?;
    let loss = ce_loss(&scores, labels)?.add(&distill_loss(&z, &zf)?)?;
    let value = loss.scalar()?;
    if !trainable {
        return Ok((value, None, IndexMap::new()));
    }
    let grads = loss.backward()?;
    let mut ordered = Vec::with_capacity(model.params().len());
    let mut named = IndexMap::new();
    for (name, leaf) in model.params() {
        let g = grads
            .get(leaf)
            .cloned()
            .unwrap_or_else(|| Array::zeros(leaf.shape().to_vec()));
        ordered.push(g.clone());
        named.insert(name.clone(), g);
    }
    Ok((value, Some(ordered), named))
}

/// Maximum relative discrepancy between the analytic gradient of the
/// full micro pipeline and central finite differences over every
/// parameter entry.
pub fn gradient_check_micro(seed: u64) -> Result<Real> {
    let cfg = micro_config();
    let weights = init_weights(&cfg, seed)?;
    let frozen = init_weights(&cfg, seed ^ 0x5a5a)?;
    let videos = vec![
        generate_video(SynthClass::MovingSquare, 2, 16, 16, seed)?,
        generate_video(SynthClass::StaticTexture, 2, 16, 16, seed + 1)?,
    ];
    let labels = [0usize, 1];
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
    let bank = random_unit_bank(&mut rng, 2, 2, cfg.d_model);

    let (_, analytic, _) = micro_loss(&weights, &frozen, &videos, &labels, &bank, true)?;
    let analytic = analytic.expect("trainable run returns gradients");

    let params: Vec<Array> = weights.values().cloned().collect();
    let names: Vec<&String> = weights.keys().collect();
    let numeric = finite_diff_gradients(&params, 1e-5, |arrays| {
        let mut w = IndexMap::new();
        for (name, a) in names.iter().zip(arrays) {
            w.insert((*name).clone(), a.clone());
        }
        Ok(micro_loss(&w, &frozen, &videos, &labels, &bank, false)?.0)
    })?;
    Ok(max_rel_error(&analytic, &numeric))
}

/// Largest elementwise gap between the masked-path encoder and the
/// spatial-only encoder on input where every token of every frame is the
/// same vector (constant video, zeroed projection and positional
/// embeddings, class embedding equal to the patch bias) with self-fill
/// boundaries. In that regime masking selects copies, mixing is the
/// identity, and attention output is independent of token count, so the
/// two paths must agree to rounding error. `sabotage` rotates each mixed
/// channel segment by one, which must break the agreement.
pub fn collapse_gap(sabotage: bool) -> Result<Real> {
    let mut cfg = EncoderConfig::default();
    cfg.mix.boundary = BoundaryPolicy::SelfFill;
    cfg.mix.misalign = sabotage;
    let mut weights = init_weights(&cfg, 42)?;
    for key in ["patch.weight", "pos"] {
        let shape = weights[key].shape().to_vec();
        weights[key] = Array::zeros(shape);
    }
    weights["cls"] = weights["patch.bias"].clone();
    let video = Array::full(vec![cfg.frames, cfg.height, cfg.width, 3], 0.5);

    let run = |variant: Variant| -> Result<Vec<Real>> {
        let cfg = EncoderConfig { variant, ..cfg.clone() };
        let tape = Tape::new();
        let model = Model::bind(&tape, &cfg, &weights, false)?;
        Ok(model.encode_video(&video)?.value())
    };
    let a = run(Variant::Stca)?;
    let b = run(Variant::SpatialOnly)?;
    Ok(a.iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, Real::max))
}

/// Periodicity, per-cell balance, and the retained-count formula for the
/// canonical schedule across a sweep of window shapes and fractions.
pub fn mask_balance_check() -> Result<()> {
    // Published default: 2x2 window at half retention on a 4x4 grid.
    let grid = TokenGrid::from_extents(4, 4)?;
    let win = WindowSpec::new(2, 2, 0.5);
    let s = build_mask_schedule(grid, win, 12, 1, MaskStrategy::RepeatWindowShift)?;
    if s.period() != 4 {
        return Err(Error::contract(format!("expected period 4, got {}", s.period())));
    }
    for start in 0..(12 - 4) {
        for cell in 0..grid.n() {
            let kept: usize = (start..start + 4)
                .filter(|&t| s.map(t)[cell] == 1)
                .count();
            if kept != 2 {
                return Err(Error::contract(format!(
                    "cell {cell} retained {kept} times in frames {start}..{}",
                    start + 4
                )));
            }
        }
    }
    // Retained-count formula and periodicity across a sweep.
    for (w1, w2) in [(1usize, 1usize), (1, 2), (2, 2), (2, 4), (4, 4)] {
        for r in [0.25, 0.5, 0.75, 1.0] {
            let keep = r * (w1 * w2) as Real;
            if (keep - keep.round()).abs() > 1e-9 || keep.round() < 1.0 {
                continue;
            }
            let grid = TokenGrid::from_extents(4, 4)?;
            if 4 % w1 != 0 || 4 % w2 != 0 {
                continue;
            }
            let win = WindowSpec::new(w1, w2, r);
            let expect = (r * grid.n() as Real).round() as usize;
            if visible_count(grid, win)? != expect {
                return Err(Error::contract(format!(
                    "retained-count mismatch at window {w1}x{w2}, r={r}"
                )));
            }
            let frames = 3 * w1 * w2;
            let s = build_mask_schedule(grid, win, frames, 2, MaskStrategy::RepeatWindowShift)?;
            for t in 0..frames.saturating_sub(s.period()) {
                if s.map(t) != s.map(t + s.period()) {
                    return Err(Error::contract(format!(
                        "schedule not periodic at window {w1}x{w2}, r={r}, frame {t}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Brute-force both directed alignment scores for one instance.
pub fn alignment_oracle(
    z: &[Vec<Vec<Real>>],
    banks: &[Vec<Vec<Real>>],
    logit_scale: Real,
) -> (Vec<Vec<Real>>, Vec<Vec<Real>>) {
    let dot = |a: &[Real], b: &[Real]| a.iter().zip(b).map(|(x, y)| x * y).sum::<Real>();
    let mut v2t = Vec::with_capacity(z.len());
    let mut t2v = Vec::with_capacity(z.len());
    for zn in z {
        let mut row_v = Vec::with_capacity(banks.len());
        let mut row_t = Vec::with_capacity(banks.len());
        for bank in banks {
            let mut sum_v = 0.0;
            for frame in zn {
                let mut best = Real::NEG_INFINITY;
                for prompt in bank {
                    best = best.max(dot(frame, prompt));
                }
                sum_v += best;
            }
            row_v.push(logit_scale * sum_v / zn.len() as Real);
            let mut sum_t = 0.0;
            for prompt in bank {
                let mut best = Real::NEG_INFINITY;
                for frame in zn {
                    best = best.max(dot(frame, prompt));
                }
                sum_t += best;
            }
            row_t.push(logit_scale * sum_t / bank.len() as Real);
        }
        v2t.push(row_v);
        t2v.push(row_t);
    }
    (v2t, t2v)
}

/// Largest deviation between the tensor implementation and the
/// brute-force oracle over `instances` random problems.
pub fn alignment_oracle_gap(seed: u64, instances: usize) -> Result<Real> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Real = 0.0;
    for _ in 0..instances {
        let b = rng.gen_range(1..=4);
        let t = rng.gen_range(1..=4);
        let k = rng.gen_range(1..=5);
        let d = rng.gen_range(2..=6);
        let logit_scale = 100.0;
        let unit_rows = |rng: &mut ChaCha8Rng, rows: usize, d: usize| -> Vec<Vec<Real>> {
            (0..rows)
                .map(|_| {
                    let v: Vec<Real> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let n = v.iter().map(|x| x * x).sum::<Real>().sqrt().max(1e-12);
                    v.into_iter().map(|x| x / n).collect()
                })
                .collect()
        };
        let z_host: Vec<Vec<Vec<Real>>> = (0..b).map(|_| unit_rows(&mut rng, t, d)).collect();
        let banks_host: Vec<Vec<Vec<Real>>> = (0..k)
            .map(|_| {
                let n_st = rng.gen_range(1..=4);
                unit_rows(&mut rng, n_st, d)
            })
            .collect();
        let (oracle_v2t, oracle_t2v) = alignment_oracle(&z_host, &banks_host, logit_scale);

        let tape = Tape::new();
        let z: Vec<_> = z_host
            .iter()
            .map(|rows| {
                tape.constant(
                    &Array::new(vec![rows.len(), d], rows.concat()).expect("lengths agree"),
                )
            })
            .collect();
        let banks: Vec<_> = banks_host
            .iter()
            .map(|rows| {
                tape.constant(
                    &Array::new(vec![rows.len(), d], rows.concat()).expect("lengths agree"),
                )
            })
            .collect();
        let v2t = score_v2t(&z, &banks, logit_scale)?.value();
        let t2v = score_t2v(&z, &banks, logit_scale)?.value();
        for (i, row) in oracle_v2t.iter().enumerate() {
            for (j, &o) in row.iter().enumerate() {
                worst = worst.max((v2t[i * k + j] - o).abs());
            }
        }
        for (i, row) in oracle_t2v.iter().enumerate() {
            for (j, &o) in row.iter().enumerate() {
                worst = worst.max((t2v[i * k + j] - o).abs());
            }
        }
    }
    Ok(worst)
}

/// Geometry used by the toy training run: 2 frames, 4 patch tokens,
/// width 16, one block.
pub fn toy_train_config() -> EncoderConfig {
    EncoderConfig {
        frames: 2,
        height: 16,
        width: 16,
        patch: 8,
        d_model: 16,
        layers: 1,
        heads: 2,
        window: WindowSpec::new(2, 2, 0.5),
        mix: MixSpec::new(vec![1], 0.125, MixMode::Separate, BoundaryPolicy::ZeroFill),
        ..EncoderConfig::default()
    }
}

/// Cross-entropy training curve of the toy encoder on the two synthetic
/// classes: full-batch gradient descent, fixed random prompt embeddings.
/// Returns the loss before each step plus the final loss
/// (`steps + 1` values), the trained weights, and the prompt bank.
pub fn train_toy(
    seed: u64,
    steps: usize,
    lr: Real,
    logit_scale: Real,
) -> Result<(Vec<Real>, WeightMap, TextBank)> {
    let cfg = toy_train_config();
    let per_class = 8;
    let mut videos = Vec::new();
    let mut labels = Vec::new();
    for (k, class) in [SynthClass::MovingSquare, SynthClass::StaticTexture]
        .iter()
        .enumerate()
    {
        for i in 0..per_class {
            videos.push(generate_video(*class, cfg.frames, cfg.height, cfg.width, seed * 1000 + (k * per_class + i) as u64)?);
            labels.push(k);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 17);
    let bank = random_unit_bank(&mut rng, 2, 2, cfg.d_model);

    let mut weights = init_weights(&cfg, seed)?;
    let mut losses = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let tape = Tape::new();
        let model = Model::bind(&tape, &cfg, &weights, true)?;
        let z: Vec<_> = videos.iter().map(|v| model.encode_video(v)).collect::<Result<_>>()?;
        let banks = bank.bind(&tape);
        let scores = overall_score(
            &score_v2t(&z, &banks, logit_scale)?,
            &score_t2v(&z, &banks, logit_scale)?,
        )?;
        let loss = ce_loss(&scores, &labels)?;
        losses.push(loss.scalar()?);
        if step == steps {
            break;
        }
        let grads = loss.backward()?;
        for (name, leaf) in model.params() {
            if let Some(g) = grads.get(leaf) {
                let w = weights
                    .get_mut(name)
                    .expect("model params mirror the weight map");
                for (wv, gv) in w.data_mut().iter_mut().zip(g.data()) {
                    *wv -= lr * gv;
                }
            }
        }
    }
    Ok((losses, weights, bank))
}

/// Run every self-check. `sabotage` activates the channel-misalignment
/// hook, which must make the collapse check fail (negative control).
pub fn selftest(sabotage: bool) -> Vec<CheckResult> {
    let mut results = Vec::new();

    let grad = gradient_check_micro(3);
    results.push(match grad {
        Ok(err) => CheckResult {
            name: "gradient_integrity",
            pass: err < 1e-4,
            detail: format!("max relative error {err:.3e} (tolerance 1e-4)"),
        },
        Err(e) => CheckResult {
            name: "gradient_integrity",
            pass: false,
            detail: e.to_string(),
        },
    });

    results.push(match collapse_gap(sabotage) {
        Ok(gap) => CheckResult {
            name: "collapse_equivalence",
            pass: gap < 1e-10,
            detail: format!("max elementwise gap {gap:.3e} (tolerance 1e-10)"),
        },
        Err(e) => CheckResult {
            name: "collapse_equivalence",
            pass: false,
            detail: e.to_string(),
        },
    });

    results.push(match mask_balance_check() {
        Ok(()) => CheckResult {
            name: "mask_schedule_balance",
            pass: true,
            detail: "period, balance, and retained counts verified".to_string(),
        },
        Err(e) => CheckResult {
            name: "mask_schedule_balance",
            pass: false,
            detail: e.to_string(),
        },
    });

    results.push(match alignment_oracle_gap(5, 100) {
        Ok(gap) => CheckResult {
            name: "alignment_oracle",
            pass: gap < 1e-12,
            detail: format!("max deviation {gap:.3e} over 100 instances (tolerance 1e-12)"),
        },
        Err(e) => CheckResult {
            name: "alignment_oracle",
            pass: false,
            detail: e.to_string(),
        },
    });

    results
}

/// Minimal standalone SVG line chart (log-free axes, one polyline per
/// series) for benchmark reports.
pub fn svg_line_chart(title: &str, xs: &[f64], series: &[(&str, Vec<f64>)]) -> String {
    let (w, h, margin) = (640.0, 400.0, 60.0);
    let xmax = xs.iter().fold(1e-12_f64, |m, &v| m.max(v));
    let ymax = series
        .iter()
        .flat_map(|(_, ys)| ys.iter())
        .fold(1e-12_f64, |m, &v| m.max(v));
    let px = |x: f64| margin + (w - 2.0 * margin) * x / xmax;
    let py = |y: f64| h - margin - (h - 2.0 * margin) * y / ymax;
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{title}</text>\n\
         <line x1=\"{margin}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{margin}\" y1=\"{margin}\" x2=\"{margin}\" y2=\"{}\" stroke=\"black\"/>\n",
        w / 2.0,
        h - margin,
        w - margin,
        h - margin,
        h - margin,
    );
    for (i, (name, ys)) in series.iter().enumerate() {
        let pts: Vec<String> = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        let color = colors[i % colors.len()];
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{name}</text>\n",
            pts.join(" "),
            w - margin + 4.0,
            py(*ys.last().unwrap_or(&0.0)),
        ));
    }
    out.push_str("</svg>\n");
    out
}
