//! Synthetic video generation and raw frame-file ingest.
//!
//! No video codec: clips are either generated in-process (a bright
//! square drifting across a dark field, or a fixed sinusoidal texture)
//! or read from a directory of flat RGB frame files.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Array, Real};

/// The two built-in clip families. They differ both spatially and
/// temporally, so even a tiny encoder can tell them apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthClass {
    MovingSquare,
    StaticTexture,
}

impl SynthClass {
    pub fn parse(s: &str) -> Result<SynthClass> {
        match s {
            "moving_square" => Ok(SynthClass::MovingSquare),
            "static_texture" => Ok(SynthClass::StaticTexture),
            other => Err(Error::config(format!("unknown synthetic class {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SynthClass::MovingSquare => "moving_square",
            SynthClass::StaticTexture => "static_texture",
        }
    }
}

/// Generate one clip of shape `[frames, height, width, 3]`, values in
/// [0, 1]. The class pattern is deterministic; `seed` adds small
/// per-instance noise so distinct videos of a class are not identical.
pub fn generate_video(
    class: SynthClass,
    frames: usize,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<Array> {
    if frames == 0 || height == 0 || width == 0 {
        return Err(Error::config("synthetic clip extents must be positive".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(frames * height * width * 3);
    match class {
        SynthClass::MovingSquare => {
            let side = (height.min(width) / 4).max(1);
            for t in 0..frames {
                // The square drifts one step down-right per frame,
                // wrapping at the border.
                let top = (t * 2) % (height - side + 1).max(1);
                let left = (t * 2) % (width - side + 1).max(1);
                for y in 0..height {
                    for x in 0..width {
                        let inside =
                            y >= top && y < top + side && x >= left && x < left + side;
                        let base: [Real; 3] = if inside {
                            [0.9, 0.8, 0.2]
                        } else {
                            [0.1, 0.1, 0.15]
                        };
                        for b in base {
                            let noise: Real = rng.gen_range(-0.05..0.05);
                            data.push((b + noise).clamp(0.0, 1.0));
                        }
                    }
                }
            }
        }
        SynthClass::StaticTexture => {
            let mut frame = Vec::with_capacity(height * width * 3);
            for y in 0..height {
                for x in 0..width {
                    let u = (y as Real * 0.7).sin() * 0.5 + 0.5;
                    let v = (x as Real * 0.9).cos() * 0.5 + 0.5;
                    frame.extend_from_slice(&[u * 0.6 + 0.2, v * 0.6 + 0.2, (u * v) * 0.6 + 0.2]);
                }
            }
            for _ in 0..frames {
                // Same texture every frame, fresh noise per frame.
                for &b in &frame {
                    let noise: Real = rng.gen_range(-0.05..0.05);
                    data.push((b + noise).clamp(0.0, 1.0));
                }
            }
        }
    }
    Array::new(vec![frames, height, width, 3], data)
}

/// Write each frame of `video` to `dir` as `frame_NNNN.rgb`:
/// width u32, height u32 (little-endian), then row-major RGB8 bytes.
pub fn save_video_frames(dir: &Path, video: &Array) -> Result<()> {
    let [t, h, w, c] = <[usize; 4]>::try_from(video.shape())
        .map_err(|_| Error::dim(format!("video rank {} != 4", video.shape().len())))?;
    if c != 3 {
        return Err(Error::dim(format!("video has {c} channels, need 3")));
    }
    fs::create_dir_all(dir)?;
    let frame_len = h * w * 3;
    for f in 0..t {
        let mut bytes = Vec::with_capacity(8 + frame_len);
        bytes.extend_from_slice(&(w as u32).to_le_bytes());
        bytes.extend_from_slice(&(h as u32).to_le_bytes());
        for &v in &video.data()[f * frame_len..(f + 1) * frame_len] {
            bytes.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        fs::write(dir.join(format!("frame_{f:04}.rgb")), bytes)?;
    }
    Ok(())
}

/// Read a directory written by [`save_video_frames`] (any `.rgb` files,
/// lexicographic frame order) back into a `[T, H, W, 3]` array with
/// values in [0, 1].
pub fn load_video_frames(dir: &Path) -> Result<Array> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "rgb"))
        .collect();
    if paths.is_empty() {
        return Err(Error::parse(format!("{}: no .rgb frame files", dir.display())));
    }
    paths.sort();
    let mut dims: Option<(usize, usize)> = None;
    let mut data: Vec<Real> = Vec::new();
    for p in &paths {
        let bytes = fs::read(p)?;
        if bytes.len() < 8 {
            return Err(Error::parse(format!("{}: truncated header", p.display())));
        }
        let w = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if bytes.len() != 8 + h * w * 3 {
            return Err(Error::parse(format!(
                "{}: payload {} bytes, expected {} for {w}x{h} RGB8",
                p.display(),
                bytes.len() - 8,
                h * w * 3
            )));
        }
        match dims {
            None => dims = Some((h, w)),
            Some(d) if d != (h, w) => {
                return Err(Error::parse(format!(
                    "{}: frame size {w}x{h} differs from earlier frames",
                    p.display()
                )))
            }
            _ => {}
        }
        data.extend(bytes[8..].iter().map(|&b| b as Real / 255.0));
    }
    let (h, w) = dims.expect("at least one frame was read");
    Array::new(vec![paths.len(), h, w, 3], data)
}
