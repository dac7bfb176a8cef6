//! Toy vision transformer with space-time cross attention blocks.
//!
//! Each block runs plain spatial attention per frame (the short-cut
//! path) and, in the `Stca` variant, a parameter-free dynamic path:
//! mask most patch tokens away, mix the survivors' channels across
//! neighboring frames at several temporal scales, attend, and pad the
//! results back into their original grid positions. Two further
//! variants (`FullSpacetime`, `Factorized`) exist only so the
//! interaction-count benchmark has reference points.

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mcm::{multiscale_attend, MixMode, MixSpec, BoundaryPolicy};
use crate::tensor::{mhsa, Array, AttentionWeights, Real, Tape, Tensor};
use crate::wsm::{apply_mask, build_mask_schedule, MaskSchedule, MaskStrategy, TokenGrid, WindowSpec};

/// Which attention wiring the encoder blocks use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Four-step masked/mixed dynamic path beside spatial attention.
    Stca,
    /// Per-frame spatial attention only.
    SpatialOnly,
    /// One joint attention over all frames' tokens (benchmark reference).
    FullSpacetime,
    /// Spatial then per-position temporal attention (benchmark reference).
    Factorized,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "stca" => Ok(Variant::Stca),
            "spatial_only" => Ok(Variant::SpatialOnly),
            "full_spacetime" => Ok(Variant::FullSpacetime),
            "factorized" => Ok(Variant::Factorized),
            other => Err(Error::config(format!("unknown encoder variant {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Stca => "stca",
            Variant::SpatialOnly => "spatial_only",
            Variant::FullSpacetime => "full_spacetime",
            Variant::Factorized => "factorized",
        }
    }
}

#[derive(Clone, Debug)]
pub struct EncoderConfig {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub patch: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub window: WindowSpec,
    pub mix: MixSpec,
    pub mask_strategy: MaskStrategy,
    pub variant: Variant,
    pub ln_eps: Real,
}

impl Default for EncoderConfig {
    /// Toy defaults: 8 frames of 32x32 pixels, 8-pixel patches (16 patch
    /// tokens), width 64, 4 blocks of 4 heads, 2x2 windows keeping half
    /// the tokens, temporal scales {1, 2}.
    fn default() -> Self {
        EncoderConfig {
            frames: 8,
            height: 32,
            width: 32,
            patch: 8,
            d_model: 64,
            layers: 4,
            heads: 4,
            window: WindowSpec::new(2, 2, 0.5),
            mix: MixSpec::new(
                vec![1, 2],
                0.125,
                MixMode::Continual,
                BoundaryPolicy::ZeroFill,
            ),
            mask_strategy: MaskStrategy::RepeatWindowShift,
            variant: Variant::Stca,
            ln_eps: 1e-5,
        }
    }
}

impl EncoderConfig {
    pub fn grid(&self) -> Result<TokenGrid> {
        TokenGrid::new(self.height, self.width, self.patch)
    }

    pub fn validate(&self) -> Result<TokenGrid> {
        let grid = self.grid()?;
        if self.frames == 0 {
            return Err(Error::config("encoder needs at least one frame".to_string()));
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(Error::config(format!(
                "width {} not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.variant == Variant::Stca {
            self.window.keep_per_window()?;
            self.mix.mixed_width(self.d_model)?;
        }
        Ok(grid)
    }

    /// Patch tokens per frame.
    pub fn n_tokens(&self) -> Result<usize> {
        Ok(self.grid()?.n())
    }
}

pub type WeightMap = IndexMap<String, Array>;

fn uniform_init(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize) -> Array {
    let bound = 1.0 / (fan_in as Real).sqrt();
    let numel: usize = shape.iter().product();
    let data = (0..numel).map(|_| rng.gen_range(-bound..bound)).collect();
    Array::new(shape, data).expect("shape/data length match by construction")
}

/// Fresh weights for the given config, seeded. The named-parameter set
/// depends only on the geometry, never on the variant, so the masked
/// variant provably adds no parameters over the spatial-only one.
pub fn init_weights(cfg: &EncoderConfig, seed: u64) -> Result<WeightMap> {
    let grid = cfg.validate()?;
    let n = grid.n();
    let d = cfg.d_model;
    let patch_in = cfg.patch * cfg.patch * 3;
    let hidden = 4 * d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = IndexMap::new();
    w.insert("patch.weight".to_string(), uniform_init(&mut rng, vec![patch_in, d], patch_in));
    w.insert("patch.bias".to_string(), uniform_init(&mut rng, vec![d], patch_in));
    w.insert("cls".to_string(), uniform_init(&mut rng, vec![d], d));
    w.insert("pos".to_string(), uniform_init(&mut rng, vec![n, d], d));
    for l in 0..cfg.layers {
        let p = |s: &str| format!("block{l}.{s}");
        w.insert(p("ln1.gain"), Array::full(vec![d], 1.0));
        w.insert(p("ln1.bias"), Array::zeros(vec![d]));
        for proj in ["wq", "wk", "wv", "wo"] {
            w.insert(p(&format!("attn.{proj}")), uniform_init(&mut rng, vec![d, d], d));
            let b = proj.replace('w', "b");
            w.insert(p(&format!("attn.{b}")), uniform_init(&mut rng, vec![d], d));
        }
        w.insert(p("ln2.gain"), Array::full(vec![d], 1.0));
        w.insert(p("ln2.bias"), Array::zeros(vec![d]));
        w.insert(p("mlp.w1"), uniform_init(&mut rng, vec![d, hidden], d));
        w.insert(p("mlp.b1"), uniform_init(&mut rng, vec![hidden], d));
        w.insert(p("mlp.w2"), uniform_init(&mut rng, vec![hidden, d], hidden));
        w.insert(p("mlp.b2"), uniform_init(&mut rng, vec![d], hidden));
    }
    Ok(w)
}

/// Total scalar parameter count of a weight map.
pub fn parameter_count(w: &WeightMap) -> usize {
    w.values().map(Array::numel).sum()
}

/// An encoder's weights bound onto one tape, either as tracked
/// parameters (trainable) or untracked constants (frozen twin).
pub struct Model {
    tape: Tape,
    cfg: EncoderConfig,
    grid: TokenGrid,
    schedule: MaskSchedule,
    params: IndexMap<String, Tensor>,
}

impl Model {
    pub fn bind(tape: &Tape, cfg: &EncoderConfig, weights: &WeightMap, trainable: bool) -> Result<Model> {
        let grid = cfg.validate()?;
        let schedule = build_mask_schedule(
            grid,
            cfg.window,
            cfg.frames,
            cfg.layers.max(1),
            cfg.mask_strategy,
        )?;
        let mut params = IndexMap::new();
        for (name, arr) in weights {
            let t = if trainable { tape.param(arr) } else { tape.constant(arr) };
            params.insert(name.clone(), t);
        }
        Ok(Model {
            tape: tape.clone(),
            cfg: cfg.clone(),
            grid,
            schedule,
            params,
        })
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn schedule(&self) -> &MaskSchedule {
        &self.schedule
    }

    pub fn params(&self) -> &IndexMap<String, Tensor> {
        &self.params
    }

    fn p(&self, name: &str) -> Result<Tensor> {
        self.params
            .get(name)
            .cloned()
            .ok_or_else(|| Error::contract(format!("missing weight {name:?}")))
    }

    fn attn(&self, l: usize) -> Result<AttentionWeights> {
        let g = |s: &str| self.p(&format!("block{l}.attn.{s}"));
        Ok(AttentionWeights {
            wq: g("wq")?,
            bq: g("bq")?,
            wk: g("wk")?,
            bk: g("bk")?,
            wv: g("wv")?,
            bv: g("bv")?,
            wo: g("wo")?,
            bo: g("bo")?,
            heads: self.cfg.heads,
        })
    }

    fn ln(&self, l: usize, which: &str) -> Result<(Tensor, Tensor)> {
        Ok((
            self.p(&format!("block{l}.{which}.gain"))?,
            self.p(&format!("block{l}.{which}.bias"))?,
        ))
    }

    fn mlp(&self, l: usize, x: &Tensor) -> Result<Tensor> {
        let h = x
            .matmul(&self.p(&format!("block{l}.mlp.w1"))?)?
            .add_bias(&self.p(&format!("block{l}.mlp.b1"))?)?
            .gelu();
        h.matmul(&self.p(&format!("block{l}.mlp.w2"))?)?
            .add_bias(&self.p(&format!("block{l}.mlp.b2"))?)
    }

    /// Flatten non-overlapping patches of one frame, row-major over the
    /// patch grid and pixel-row-major (channel-fastest) within a patch.
    fn frame_patches(&self, video: &Array, t: usize) -> Result<Array> {
        let (h, w, p) = (self.cfg.height, self.cfg.width, self.cfg.patch);
        let [vt, vh, vw, vc] = <[usize; 4]>::try_from(video.shape())
            .map_err(|_| Error::dim(format!("video rank {} != 4", video.shape().len())))?;
        if vt != self.cfg.frames || vh != h || vw != w || vc != 3 {
            return Err(Error::dim(format!(
                "video shape {:?} does not match config {}x{}x{}x3",
                video.shape(),
                self.cfg.frames,
                h,
                w
            )));
        }
        let n = self.grid.n();
        let patch_in = p * p * 3;
        let mut data = Vec::with_capacity(n * patch_in);
        let frame = &video.data()[t * h * w * 3..(t + 1) * h * w * 3];
        for gi in 0..self.grid.l1() {
            for gj in 0..self.grid.l2() {
                for pi in 0..p {
                    for pj in 0..p {
                        let px = ((gi * p + pi) * w + gj * p + pj) * 3;
                        data.extend_from_slice(&frame[px..px + 3]);
                    }
                }
            }
        }
        Array::new(vec![n, patch_in], data)
    }

    /// Project patches, prepend the class token, add frame-shared spatial
    /// positional embeddings. Returns per-frame `[N+1, D]` tensors.
    pub fn patch_embed(&self, video: &Array) -> Result<Vec<Tensor>> {
        let pw = self.p("patch.weight")?;
        let pb = self.p("patch.bias")?;
        let cls = self.p("cls")?.reshape(vec![1, self.cfg.d_model])?;
        let pos = self.p("pos")?;
        let mut frames = Vec::with_capacity(self.cfg.frames);
        for t in 0..self.cfg.frames {
            let patches = self.tape.constant(&self.frame_patches(video, t)?);
            let tokens = patches.matmul(&pw)?.add_bias(&pb)?.add(&pos)?;
            frames.push(Tensor::concat_rows(&[cls.clone(), tokens])?);
        }
        Ok(frames)
    }

    /// Spatial attention path of Eq-style block wiring: one attention
    /// pass per frame over all N+1 tokens, with a residual.
    fn spatial_path(&self, z: &[Tensor], l: usize) -> Result<Vec<Tensor>> {
        let attn = self.attn(l)?;
        let ln1 = self.ln(l, "ln1")?;
        z.iter()
            .map(|zt| {
                let a = mhsa(&zt.layer_norm(&ln1.0, &ln1.1, self.cfg.ln_eps)?, &attn)?;
                a.add(zt)
            })
            .collect()
    }

    /// One encoder block; input and output are per-frame `[N+1, D]`.
    pub fn block_forward(&self, z: &[Tensor], l: usize) -> Result<Vec<Tensor>> {
        match self.cfg.variant {
            Variant::SpatialOnly => {
                let zp = self.spatial_path(z, l)?;
                let ln2 = self.ln(l, "ln2")?;
                zp.iter()
                    .map(|zt| {
                        self.mlp(l, &zt.layer_norm(&ln2.0, &ln2.1, self.cfg.ln_eps)?)?.add(zt)
                    })
                    .collect()
            }
            Variant::Stca => {
                let zp = self.spatial_path(z, l)?;
                // Dynamic path: mask, mix across frames, attend, pad back.
                let mut kept = Vec::with_capacity(z.len());
                let mut dots = Vec::with_capacity(z.len());
                for (t, zt) in z.iter().enumerate() {
                    let (zdot, kept_idx) = apply_mask(zt, self.schedule.map(t % self.schedule.frames()))?;
                    dots.push(zdot);
                    kept.push(kept_idx);
                }
                let attn = self.attn(l)?;
                let ln1 = self.ln(l, "ln1")?;
                let zbar = multiscale_attend(&dots, &self.cfg.mix, &attn, &ln1, self.cfg.ln_eps)?;
                let ln2 = self.ln(l, "ln2")?;
                let mut out = Vec::with_capacity(z.len());
                for (t, zpt) in zp.iter().enumerate() {
                    let ztilde = pad_and_fuse(zpt, &zbar[t], &kept[t])?;
                    let m = self.mlp(l, &zpt.layer_norm(&ln2.0, &ln2.1, self.cfg.ln_eps)?)?;
                    out.push(m.add(&ztilde)?);
                }
                Ok(out)
            }
            Variant::FullSpacetime => {
                let cat = Tensor::concat_rows(z)?;
                let attn = self.attn(l)?;
                let ln1 = self.ln(l, "ln1")?;
                let zp = mhsa(&cat.layer_norm(&ln1.0, &ln1.1, self.cfg.ln_eps)?, &attn)?.add(&cat)?;
                let ln2 = self.ln(l, "ln2")?;
                let out = self.mlp(l, &zp.layer_norm(&ln2.0, &ln2.1, self.cfg.ln_eps)?)?.add(&zp)?;
                let rows = z[0].shape()[0];
                (0..z.len())
                    .map(|t| {
                        let idx: Vec<usize> = (t * rows..(t + 1) * rows).collect();
                        out.gather_rows(&idx)
                    })
                    .collect()
            }
            Variant::Factorized => {
                let zp = self.spatial_path(z, l)?;
                // Temporal pass: attend across frames at each token position.
                let attn = self.attn(l)?;
                let ln1 = self.ln(l, "ln1")?;
                let rows = z[0].shape()[0];
                let mut per_pos = Vec::with_capacity(rows);
                for p in 0..rows {
                    let seq = Tensor::concat_rows(
                        &zp.iter().map(|zt| zt.gather_rows(&[p])).collect::<Result<Vec<_>>>()?,
                    )?;
                    let a = mhsa(&seq.layer_norm(&ln1.0, &ln1.1, self.cfg.ln_eps)?, &attn)?;
                    per_pos.push(a.add(&seq)?);
                }
                let ln2 = self.ln(l, "ln2")?;
                (0..z.len())
                    .map(|t| {
                        let zt = Tensor::concat_rows(
                            &per_pos.iter().map(|s| s.gather_rows(&[t])).collect::<Result<Vec<_>>>()?,
                        )?;
                        self.mlp(l, &zt.layer_norm(&ln2.0, &ln2.1, self.cfg.ln_eps)?)?.add(&zt)
                    })
                    .collect()
            }
        }
    }

    /// Full forward pass: per-frame class-token features, L2-normalized.
    /// Returns a `[T, D]` tensor.
    pub fn encode_video(&self, video: &Array) -> Result<Tensor> {
        let mut z = self.patch_embed(video)?;
        for l in 0..self.cfg.layers {
            z = self.block_forward(&z, l)?;
        }
        let cls_rows = z
            .iter()
            .map(|zt| zt.gather_rows(&[0]))
            .collect::<Result<Vec<_>>>()?;
        Tensor::concat_rows(&cls_rows)?.l2_normalize_last()
    }
}

/// Restore masked grid positions: class row and masked patch rows come
/// from the spatial path `z_prime`; retained positions carry the dynamic
/// rows `z_bar`, in `kept_idx` order.
pub fn pad_and_fuse(z_prime: &Tensor, z_bar: &Tensor, kept_idx: &[usize]) -> Result<Tensor> {
    let rows: Vec<usize> = kept_idx.iter().map(|&i| i + 1).collect();
    z_prime.scatter_rows(z_bar, &rows)
}

/// Exact query-key token-pair counts for a full forward pass of each
/// variant, to compare against the tape's measured counter.
pub fn closed_form_pairs(cfg: &EncoderConfig) -> Result<u64> {
    let grid = cfg.validate()?;
    let n = grid.n() as u64;
    let t = cfg.frames as u64;
    let l = cfg.layers as u64;
    let tokens = n + 1;
    Ok(match cfg.variant {
        Variant::SpatialOnly => l * t * tokens * tokens,
        Variant::Stca => {
            let np = crate::wsm::visible_count(grid, cfg.window)? as u64;
            let s = cfg.mix.scales.len() as u64;
            l * (t * tokens * tokens + s * t * np * np)
        }
        Variant::FullSpacetime => l * (t * tokens) * (t * tokens),
        Variant::Factorized => l * (t * tokens * tokens + tokens * t * t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro_cfg(variant: Variant) -> EncoderConfig {
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
            variant,
            ..EncoderConfig::default()
        }
    }

    fn ramp_video(cfg: &EncoderConfig) -> Array {
        let numel = cfg.frames * cfg.height * cfg.width * 3;
        let data = (0..numel).map(|i| (i % 97) as Real / 97.0).collect();
        Array::new(vec![cfg.frames, cfg.height, cfg.width, 3], data).unwrap()
    }

    #[test]
    fn patch_embed_geometry_and_frame_sharing() {
        let cfg = EncoderConfig {
            frames: 2,
            height: 32,
            width: 32,
            patch: 16,
            d_model: 8,
            layers: 0,
            heads: 2,
            ..micro_cfg(Variant::SpatialOnly)
        };
        let w = init_weights(&cfg, 3).unwrap();
        let tape = Tape::new();
        let m = Model::bind(&tape, &cfg, &w, false).unwrap();
        // Two identical frames.
        let frame: Vec<Real> = (0..32 * 32 * 3).map(|i| (i % 11) as Real / 11.0).collect();
        let mut data = frame.clone();
        data.extend_from_slice(&frame);
        let video = Array::new(vec![2, 32, 32, 3], data).unwrap();
        let z = m.patch_embed(&video).unwrap();
        assert_eq!(z.len(), 2);
        assert_eq!(z[0].shape(), &[5, 8]); // 4 patch tokens + 1 class token
        assert_eq!(z[0].value(), z[1].value());
    }

    #[test]
    fn zero_weights_give_zero_patches_and_cls_embedding() {
        let cfg = micro_cfg(Variant::SpatialOnly);
        let mut w = init_weights(&cfg, 0).unwrap();
        for key in ["patch.weight", "patch.bias", "pos"] {
            let shape = w[key].shape().to_vec();
            w[key] = Array::zeros(shape);
        }
        let tape = Tape::new();
        let m = Model::bind(&tape, &cfg, &w, false).unwrap();
        let video = Array::zeros(vec![2, 16, 16, 3]);
        let z = m.patch_embed(&video).unwrap();
        let v = z[0].value();
        assert_eq!(v[..8], w["cls"].data()[..]);
        assert!(v[8..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pad_and_fuse_placement_and_round_trip() {
        let tape = Tape::new();
        let zp = tape.constant(&Array::new(vec![5, 2], (0..10).map(|v| v as Real).collect()).unwrap());
        let zb = tape.constant(&Array::new(vec![2, 2], vec![100.0, 101.0, 102.0, 103.0]).unwrap());
        let fused = pad_and_fuse(&zp, &zb, &[0, 1]).unwrap();
        assert_eq!(
            fused.value(),
            vec![0.0, 1.0, 100.0, 101.0, 102.0, 103.0, 6.0, 7.0, 8.0, 9.0]
        );
        // Identity fill: scatter back the rows that were gathered.
        let (rows, kept) = apply_mask(&zp, &[1, 0, 1, 0]).unwrap();
        let rt = pad_and_fuse(&zp, &rows, &kept).unwrap();
        assert_eq!(rt.value(), zp.value());
        // Degenerate empty dynamic path.
        let empty = tape.constant(&Array::zeros(vec![0, 2]));
        let same = pad_and_fuse(&zp, &empty, &[]).unwrap();
        assert_eq!(same.value(), zp.value());
    }

    #[test]
    fn token_counts_preserved_across_blocks() {
        for variant in [Variant::Stca, Variant::SpatialOnly, Variant::FullSpacetime, Variant::Factorized] {
            let cfg = micro_cfg(variant);
            let w = init_weights(&cfg, 5).unwrap();
            let tape = Tape::new();
            let m = Model::bind(&tape, &cfg, &w, false).unwrap();
            let mut z = m.patch_embed(&ramp_video(&cfg)).unwrap();
            for l in 0..cfg.layers {
                z = m.block_forward(&z, l).unwrap();
                for zt in &z {
                    assert_eq!(zt.shape(), &[5, 8], "{variant:?} layer {l}");
                }
            }
        }
    }

    #[test]
    fn encode_video_rows_are_unit_norm_and_finite() {
        let cfg = micro_cfg(Variant::Stca);
        let w = init_weights(&cfg, 11).unwrap();
        let tape = Tape::new();
        let m = Model::bind(&tape, &cfg, &w, false).unwrap();
        let feats = m.encode_video(&ramp_video(&cfg)).unwrap();
        assert_eq!(feats.shape(), &[2, 8]);
        let v = feats.value();
        for t in 0..2 {
            let norm: Real = v[t * 8..(t + 1) * 8].iter().map(|x| x * x).sum::<Real>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
            assert!(v[t * 8..(t + 1) * 8].iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn measured_pairs_equal_closed_forms_for_micro_configs() {
        for variant in [Variant::Stca, Variant::SpatialOnly, Variant::FullSpacetime, Variant::Factorized] {
            let cfg = micro_cfg(variant);
            let w = init_weights(&cfg, 2).unwrap();
            let tape = Tape::new();
            let m = Model::bind(&tape, &cfg, &w, false).unwrap();
            tape.reset_pair_count();
            m.encode_video(&ramp_video(&cfg)).unwrap();
            assert_eq!(
                tape.pair_count(),
                closed_form_pairs(&cfg).unwrap(),
                "{variant:?}"
            );
        }
    }

    #[test]
    fn variant_does_not_change_parameter_set() {
        let a = init_weights(&micro_cfg(Variant::Stca), 9).unwrap();
        let b = init_weights(&micro_cfg(Variant::SpatialOnly), 9).unwrap();
        assert_eq!(a, b);
    }
}
