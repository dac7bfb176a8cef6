//! Independent transcription of the full masked-path encoder forward
//! pass on the 2-frame micro geometry, written as straight-line loops
//! with no shared code beyond the weight initializer. Every constant
//! (mask rows, channel plan, normalization) is hand-derived here.

use stdd::bench::micro_config;
use stdd::encoder::{init_weights, Model, WeightMap};
use stdd::tensor::{Array, Real, Tape};

type Mat = Vec<Vec<Real>>;

fn get<'a>(w: &'a WeightMap, name: &str) -> &'a [Real] {
    w.get(name).unwrap().data()
}

fn matmul(a: &Mat, b: &[Real], cols: usize) -> Mat {
    let inner = a[0].len();
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k * cols + j]).sum())
                .collect()
        })
        .collect()
}

fn add_bias(a: &mut Mat, b: &[Real]) {
    for row in a.iter_mut() {
        for (v, bv) in row.iter_mut().zip(b) {
            *v += bv;
        }
    }
}

fn layer_norm(a: &Mat, gain: &[Real], bias: &[Real], eps: Real) -> Mat {
    a.iter()
        .map(|row| {
            let d = row.len() as Real;
            let mu = row.iter().sum::<Real>() / d;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<Real>() / d;
            let sigma = (var + eps).sqrt();
            row.iter()
                .enumerate()
                .map(|(c, v)| gain[c] * (v - mu) / sigma + bias[c])
                .collect()
        })
        .collect()
}

fn gelu(x: Real) -> Real {
    let u = 0.7978845608028654 * (x + 0.044715 * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

/// Two-head scaled dot-product self-attention, d = 8, head width 4.
fn mhsa(z: &Mat, w: &WeightMap, l: usize) -> Mat {
    let p = |s: &str| get(w, &format!("block{l}.attn.{s}"));
    let d = 8;
    let heads = 2;
    let dh = d / heads;
    let mut q = matmul(z, p("wq"), d);
    add_bias(&mut q, p("bq"));
    let mut k = matmul(z, p("wk"), d);
    add_bias(&mut k, p("bk"));
    let mut v = matmul(z, p("wv"), d);
    add_bias(&mut v, p("bv"));
    let n = z.len();
    let mut merged = vec![vec![0.0; d]; n];
    for h in 0..heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        for i in 0..n {
            // Row i of softmax(q_h k_h^T / sqrt(dh)).
            let scores: Vec<Real> = (0..n)
                .map(|j| (lo..hi).map(|c| q[i][c] * k[j][c]).sum::<Real>() / (dh as Real).sqrt())
                .collect();
            let m = scores.iter().fold(Real::NEG_INFINITY, |a, &b| a.max(b));
            let exps: Vec<Real> = scores.iter().map(|s| (s - m).exp()).collect();
            let sum: Real = exps.iter().sum();
            for c in lo..hi {
                merged[i][c] = (0..n).map(|j| exps[j] / sum * v[j][c]).sum();
            }
        }
    }
    let mut out = matmul(&merged, p("wo"), d);
    add_bias(&mut out, p("bo"));
    out
}

fn mlp(z: &Mat, w: &WeightMap, l: usize) -> Mat {
    let mut h = matmul(z, get(w, &format!("block{l}.mlp.w1")), 32);
    add_bias(&mut h, get(w, &format!("block{l}.mlp.b1")));
    for row in h.iter_mut() {
        for v in row.iter_mut() {
            *v = gelu(*v);
        }
    }
    let mut out = matmul(&h, get(w, &format!("block{l}.mlp.w2")), 8);
    add_bias(&mut out, get(w, &format!("block{l}.mlp.b2")));
    out
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect())
        .collect()
}

#[test]
fn straight_line_forward_matches_encoder() {
    // Geometry: 2 frames of 16x16x3, 8-pixel patches -> 2x2 patch grid
    // (4 tokens + class), width 8, 2 blocks of 2 heads. One temporal
    // scale (offset 1), separate mode, mixed width gamma*D = 1, zero
    // boundary. The 2x2 window at half retention covers the whole grid,
    // so the retained in-window positions at frame t are
    // {t mod 4, (t+1) mod 4}: frame 0 keeps cells {0,1}, frame 1 keeps
    // {1,2} (token rows are cell index + 1 past the class row).
    let cfg = micro_config();
    let weights = init_weights(&cfg, 17).unwrap();

    let numel = 2 * 16 * 16 * 3;
    let pixels: Vec<Real> = (0..numel).map(|i| ((i * 13 + 5) % 89) as Real / 89.0).collect();
    let video = Array::new(vec![2, 16, 16, 3], pixels.clone()).unwrap();

    // --- library forward ---
    let tape = Tape::new();
    let model = Model::bind(&tape, &cfg, &weights, false).unwrap();
    let lib = model.encode_video(&video).unwrap().value();

    // --- straight-line oracle ---
    let pw = get(&weights, "patch.weight");
    let pb = get(&weights, "patch.bias");
    let cls = get(&weights, "cls");
    let pos = get(&weights, "pos");

    let kept_rows: [Vec<usize>; 2] = [vec![1, 2], vec![2, 3]];

    let mut z: Vec<Mat> = Vec::new();
    for t in 0..2 {
        let frame = &pixels[t * 16 * 16 * 3..(t + 1) * 16 * 16 * 3];
        let mut tokens: Mat = vec![cls.to_vec()];
        for gi in 0..2 {
            for gj in 0..2 {
                // Flatten one 8x8 patch channel-fastest, then project.
                let mut patch = Vec::with_capacity(192);
                for pi in 0..8 {
                    for pj in 0..8 {
                        let px = ((gi * 8 + pi) * 16 + gj * 8 + pj) * 3;
                        patch.extend_from_slice(&frame[px..px + 3]);
                    }
                }
                let cell = gi * 2 + gj;
                let row: Vec<Real> = (0..8)
                    .map(|j| {
                        (0..192).map(|k| patch[k] * pw[k * 8 + j]).sum::<Real>()
                            + pb[j]
                            + pos[cell * 8 + j]
                    })
                    .collect();
                tokens.push(row);
            }
        }
        z.push(tokens);
    }

    for l in 0..2 {
        let ln1g = get(&weights, &format!("block{l}.ln1.gain"));
        let ln1b = get(&weights, &format!("block{l}.ln1.bias"));
        let ln2g = get(&weights, &format!("block{l}.ln2.gain"));
        let ln2b = get(&weights, &format!("block{l}.ln2.bias"));

        // Spatial path with residual.
        let zp: Vec<Mat> = z
            .iter()
            .map(|zt| add(&mhsa(&layer_norm(zt, ln1g, ln1b, 1e-5), &weights, l), zt))
            .collect();

        // Dynamic path: gather retained rows of the block input.
        let dots: Vec<Mat> = (0..2)
            .map(|t| kept_rows[t].iter().map(|&r| z[t][r].clone()).collect())
            .collect();
        // Channel plan for offset 1: channel 0 from frame t-1, channel 1
        // from frame t+1, channels 2..8 from frame t; missing frames are
        // zeros.
        let mixed: Vec<Mat> = (0..2usize)
            .map(|t| {
                (0..2usize)
                    .map(|row| {
                        let mut v = vec![0.0; 8];
                        if t >= 1 {
                            v[0] = dots[t - 1][row][0];
                        }
                        if t + 1 < 2 {
                            v[1] = dots[t + 1][row][1];
                        }
                        v[2..8].copy_from_slice(&dots[t][row][2..8]);
                        v
                    })
                    .collect()
            })
            .collect();
        let zbar: Vec<Mat> = mixed
            .iter()
            .map(|mt| add(&mhsa(&layer_norm(mt, ln1g, ln1b, 1e-5), &weights, l), mt))
            .collect();

        // Fuse and apply the MLP with its residual on the fused tokens.
        let mut next = Vec::new();
        for t in 0..2 {
            let mut fused = zp[t].clone();
            for (slot, &r) in kept_rows[t].iter().enumerate() {
                fused[r] = zbar[t][slot].clone();
            }
            let m = mlp(&layer_norm(&zp[t], ln2g, ln2b, 1e-5), &weights, l);
            next.push(add(&m, &fused));
        }
        z = next;
    }

    let mut oracle = Vec::new();
    for zt in &z {
        let row = &zt[0];
        let norm = row.iter().map(|v| v * v).sum::<Real>().sqrt().max(1e-12);
        oracle.extend(row.iter().map(|v| v / norm));
    }

    assert_eq!(lib.len(), oracle.len());
    let worst = lib
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, Real::max);
    assert!(worst < 1e-10, "max deviation {worst:.3e}");
}
