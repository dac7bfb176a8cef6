//! Primitive tensor operations and their backward rules.

use std::rc::Rc;

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Row-major matrix product of `a` (m×k) and `b` (k×n).
pub(crate) fn mm(a: &[Real], m: usize, k: usize, b: &[Real], n: usize) -> Vec<Real> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

/// a (m×k) times transpose of b (n×k), giving m×n.
pub(crate) fn mm_nt(a: &[Real], m: usize, k: usize, b: &[Real], n: usize) -> Vec<Real> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for p in 0..k {
                s += arow[p] * brow[p];
            }
            out[i * n + j] = s;
        }
    }
    out
}

/// Transpose of a (k×m) times b (k×n), giving m×n.
pub(crate) fn mm_tn(a: &[Real], k: usize, m: usize, b: &[Real], n: usize) -> Vec<Real> {
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = arow[i];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

fn rows_last(shape: &[usize]) -> Result<(usize, usize)> {
    let Some(&last) = shape.last() else {
        return Err(Error::dim("operation requires rank >= 1".to_string()));
    };
    let rows = shape[..shape.len() - 1].iter().product::<usize>();
    Ok((rows, last))
}

const GELU_C: Real = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: Real = 0.044_715;

impl Tensor {
    fn check_same_shape(&self, other: &Tensor, op: &str) -> Result<()> {
        self.check_same_tape(other)?;
        if self.shape != other.shape {
            return Err(Error::dim(format!(
                "{op}: shape mismatch {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "add")?;
        let a = self.data_rc();
        let b = other.data_rc();
        let data = a.iter().zip(b.iter()).map(|(x, y)| x + y).collect();
        Ok(self.push_op(
            self.shape.clone(),
            data,
            vec![self.idx, other.idx],
            Box::new(|g| vec![g.to_vec(), g.to_vec()]),
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "sub")?;
        let a = self.data_rc();
        let b = other.data_rc();
        let data = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
        Ok(self.push_op(
            self.shape.clone(),
            data,
            vec![self.idx, other.idx],
            Box::new(|g| vec![g.to_vec(), g.iter().map(|v| -v).collect()]),
        ))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "mul")?;
        let a = self.data_rc();
        let b = other.data_rc();
        let data = a.iter().zip(b.iter()).map(|(x, y)| x * y).collect();
        let (ac, bc) = (Rc::clone(&a), Rc::clone(&b));
        Ok(self.push_op(
            self.shape.clone(),
            data,
            vec![self.idx, other.idx],
            Box::new(move |g| {
                vec![
                    g.iter().zip(bc.iter()).map(|(gv, bv)| gv * bv).collect(),
                    g.iter().zip(ac.iter()).map(|(gv, av)| gv * av).collect(),
                ]
            }),
        ))
    }

    pub fn scale(&self, c: Real) -> Tensor {
        let a = self.data_rc();
        let data = a.iter().map(|x| x * c).collect();
        self.push_op(
            self.shape.clone(),
            data,
            vec![self.idx],
            Box::new(move |g| vec![g.iter().map(|v| v * c).collect()]),
        )
    }

    /// Broadcast-add a rank-1 bias over the trailing axis.
    pub fn add_bias(&self, bias: &Tensor) -> Result<Tensor> {
        self.check_same_tape(bias)?;
        let (rows, last) = rows_last(&self.shape)?;
        if bias.shape != [last] {
            return Err(Error::dim(format!(
                "add_bias: bias shape {:?} does not match trailing axis {last}",
                bias.shape
            )));
        }
        let a = self.data_rc();
        let b = bias.data_rc();
        let mut data = Vec::with_capacity(a.len());
        for r in 0..rows {
            for c in 0..last {
                data.push(a[r * last + c] + b[c]);
            }
        }
        Ok(self.push_op(
            self.shape.clone(),
            data,
            vec![self.idx, bias.idx],
            Box::new(move |g| {
                let mut db = vec![0.0; last];
                for r in 0..rows {
                    for c in 0..last {
                        db[c] += g[r * last + c];
                    }
                }
                vec![g.to_vec(), db]
            }),
        ))
    }

    /// Standard 2-D matrix product.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_tape(other)?;
        let ([m, k], [k2, n]) = (
            <[usize; 2]>::try_from(self.shape.as_slice())
                .map_err(|_| Error::dim(format!("matmul: lhs rank {} != 2", self.shape.len())))?,
            <[usize; 2]>::try_from(other.shape.as_slice())
                .map_err(|_| Error::dim(format!("matmul: rhs rank {} != 2", other.shape.len())))?,
        );
        if k != k2 {
            return Err(Error::dim(format!(
                "matmul: inner extents differ ({m}x{k} vs {k2}x{n})"
            )));
        }
        let a = self.data_rc();
        let b = other.data_rc();
        let data = mm(&a, m, k, &b, n);
        Ok(self.push_op(
            vec![m, n],
            data,
            vec![self.idx, other.idx],
            Box::new(move |g| {
                vec![mm_nt(g, m, n, &b, k), mm_tn(&a, m, k, g, n)]
            }),
        ))
    }

    pub fn transpose2(&self) -> Result<Tensor> {
        let [m, n] = <[usize; 2]>::try_from(self.shape.as_slice())
            .map_err(|_| Error::dim(format!("transpose2: rank {} != 2", self.shape.len())))?;
        let a = self.data_rc();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = a[i * n + j];
            }
        }
        Ok(self.push_op(
            vec![n, m],
            data,
            vec![self.idx],
            Box::new(move |g| {
                let mut dg = vec![0.0; m * n];
                for j in 0..n {
                    for i in 0..m {
                        dg[i * n + j] = g[j * m + i];
                    }
                }
                vec![dg]
            }),
        ))
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(Error::dim(format!(
                "reshape: {:?} -> {:?} changes element count",
                self.shape, shape
            )));
        }
        let data = self.value();
        Ok(self.push_op(
            shape,
            data,
            vec![self.idx],
            Box::new(|g| vec![g.to_vec()]),
        ))
    }

    /// Concatenate tensors along the trailing (channel) axis.
    pub fn concat_last(parts: &[Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::contract("concat_last: empty input".to_string()));
        }
        let lead = &parts[0].shape[..parts[0].shape.len() - 1];
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            parts[0].check_same_tape(p)?;
            let (_, w) = rows_last(&p.shape)?;
            if &p.shape[..p.shape.len() - 1] != lead {
                return Err(Error::dim(format!(
                    "concat_last: leading dims differ ({:?} vs {:?})",
                    parts[0].shape, p.shape
                )));
            }
            widths.push(w);
        }
        let rows: usize = lead.iter().product();
        let total: usize = widths.iter().sum();
        let datas: Vec<Rc<Vec<Real>>> = parts.iter().map(|p| p.data_rc()).collect();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (d, &w) in datas.iter().zip(&widths) {
                data.extend_from_slice(&d[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let widths_c = widths.clone();
        Ok(parts[0].push_op(
            shape,
            data,
            parts.iter().map(|p| p.idx).collect(),
            Box::new(move |g| {
                let mut out: Vec<Vec<Real>> =
                    widths_c.iter().map(|w| Vec::with_capacity(rows * w)).collect();
                for r in 0..rows {
                    let mut off = r * total;
                    for (i, &w) in widths_c.iter().enumerate() {
                        out[i].extend_from_slice(&g[off..off + w]);
                        off += w;
                    }
                }
                out
            }),
        ))
    }

    /// Slice `[start, end)` of the trailing axis.
    pub fn slice_last(&self, start: usize, end: usize) -> Result<Tensor> {
        let (rows, last) = rows_last(&self.shape)?;
        if start > end || end > last {
            return Err(Error::dim(format!(
                "slice_last: [{start}, {end}) out of range for axis {last}"
            )));
        }
        let w = end - start;
        let a = self.data_rc();
        let mut data = Vec::with_capacity(rows * w);
        for r in 0..rows {
            data.extend_from_slice(&a[r * last + start..r * last + end]);
        }
        let mut shape = self.shape[..self.shape.len() - 1].to_vec();
        shape.push(w);
        Ok(self.push_op(
            shape,
            data,
            vec![self.idx],
            Box::new(move |g| {
                let mut dg = vec![0.0; rows * last];
                for r in 0..rows {
                    dg[r * last + start..r * last + end]
                        .copy_from_slice(&g[r * w..(r + 1) * w]);
                }
                vec![dg]
            }),
        ))
    }

    /// Concatenate 2-D tensors along the row axis.
    pub fn concat_rows(parts: &[Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::contract("concat_rows: empty input".to_string()));
        }
        let [_, d] = <[usize; 2]>::try_from(parts[0].shape.as_slice())
            .map_err(|_| Error::dim("concat_rows: inputs must be rank 2".to_string()))?;
        let mut row_counts = Vec::with_capacity(parts.len());
        let mut data = Vec::new();
        for p in parts {
            parts[0].check_same_tape(p)?;
            let [m, d2] = <[usize; 2]>::try_from(p.shape.as_slice())
                .map_err(|_| Error::dim("concat_rows: inputs must be rank 2".to_string()))?;
            if d2 != d {
                return Err(Error::dim(format!(
                    "concat_rows: widths differ ({d} vs {d2})"
                )));
            }
            row_counts.push(m);
            data.extend_from_slice(&p.data_rc());
        }
        let total: usize = row_counts.iter().sum();
        let rc = row_counts.clone();
        Ok(parts[0].push_op(
            vec![total, d],
            data,
            parts.iter().map(|p| p.idx).collect(),
            Box::new(move |g| {
                let mut out = Vec::with_capacity(rc.len());
                let mut off = 0;
                for &m in &rc {
                    out.push(g[off * d..(off + m) * d].to_vec());
                    off += m;
                }
                out
            }),
        ))
    }

    /// Gather rows of a 2-D tensor by index list, in the given order.
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Tensor> {
        let [m, d] = <[usize; 2]>::try_from(self.shape.as_slice())
            .map_err(|_| Error::dim("gather_rows: input must be rank 2".to_string()))?;
        for &i in idx {
            if i >= m {
                return Err(Error::dim(format!("gather_rows: row {i} out of {m}")));
            }
        }
        let a = self.data_rc();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(&a[i * d..(i + 1) * d]);
        }
        let idx_c = idx.to_vec();
        Ok(self.push_op(
            vec![idx.len(), d],
            data,
            vec![self.idx],
            Box::new(move |g| {
                let mut dg = vec![0.0; m * d];
                for (r, &i) in idx_c.iter().enumerate() {
                    for c in 0..d {
                        dg[i * d + c] += g[r * d + c];
                    }
                }
                vec![dg]
            }),
        ))
    }

    /// Copy of `self` with `rows[i]` placed at row `idx[i]`. Indices must
    /// be distinct.
    pub fn scatter_rows(&self, rows: &Tensor, idx: &[usize]) -> Result<Tensor> {
        self.check_same_tape(rows)?;
        let [m, d] = <[usize; 2]>::try_from(self.shape.as_slice())
            .map_err(|_| Error::dim("scatter_rows: base must be rank 2".to_string()))?;
        let [k, d2] = <[usize; 2]>::try_from(rows.shape.as_slice())
            .map_err(|_| Error::dim("scatter_rows: rows must be rank 2".to_string()))?;
        if d != d2 || k != idx.len() {
            return Err(Error::dim(format!(
                "scatter_rows: rows {k}x{d2} vs {} indices into base {m}x{d}",
                idx.len()
            )));
        }
        let mut seen = vec![false; m];
        for &i in idx {
            if i >= m {
                return Err(Error::dim(format!("scatter_rows: row {i} out of {m}")));
            }
            if seen[i] {
                return Err(Error::contract(format!(
                    "scatter_rows: duplicate index {i}"
                )));
            }
            seen[i] = true;
        }
        let mut data = self.value();
        let r = rows.data_rc();
        for (j, &i) in idx.iter().enumerate() {
            data[i * d..(i + 1) * d].copy_from_slice(&r[j * d..(j + 1) * d]);
        }
        let idx_c = idx.to_vec();
        Ok(self.push_op(
            vec![m, d],
            data,
            vec![self.idx, rows.idx],
            Box::new(move |g| {
                let mut dbase = g.to_vec();
                let mut drows = vec![0.0; idx_c.len() * d];
                for (j, &i) in idx_c.iter().enumerate() {
                    drows[j * d..(j + 1) * d].copy_from_slice(&g[i * d..(i + 1) * d]);
                    dbase[i * d..(i + 1) * d].fill(0.0);
                }
                vec![dbase, drows]
            }),
        ))
    }

    /// Stack tensors of identical shape along a new leading axis.
    pub fn stack(parts: &[Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::contract("stack: empty input".to_string()));
        }
        let inner = parts[0].shape.clone();
        let numel = parts[0].numel();
        let mut data = Vec::with_capacity(parts.len() * numel);
        for p in parts {
            parts[0].check_same_tape(p)?;
            if p.shape != inner {
                return Err(Error::dim(format!(
                    "stack: shapes differ ({:?} vs {:?})",
                    inner, p.shape
                )));
            }
            data.extend_from_slice(&p.data_rc());
        }
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(&inner);
        let n = parts.len();
        Ok(parts[0].push_op(
            shape,
            data,
            parts.iter().map(|p| p.idx).collect(),
            Box::new(move |g| {
                (0..n).map(|i| g[i * numel..(i + 1) * numel].to_vec()).collect()
            }),
        ))
    }

    /// Unweighted arithmetic mean of tensors with identical shape, summed
    /// in the given order.
    pub fn mean_of(parts: &[Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::config("mean_of: empty input".to_string()));
        }
        let mut acc = parts[0].clone();
        for p in &parts[1..] {
            acc = acc.add(p)?;
        }
        Ok(acc.scale(1.0 / parts.len() as Real))
    }

    pub fn gelu(&self) -> Tensor {
        let a = self.data_rc();
        let data: Vec<Real> = a
            .iter()
            .map(|&x| {
                let u = GELU_C * (x + GELU_A * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            })
            .collect();
        let ac = Rc::clone(&a);
        self.push_op(
            self.shape.clone(),
            data,
            vec![self.idx],
            Box::new(move |g| {
                vec![g
                    .iter()
                    .zip(ac.iter())
                    .map(|(&gv, &x)| {
                        let u = GELU_C * (x + GELU_A * x * x * x);
                        let t = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                        gv * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
                    })
                    .collect()]
            }),
        )
    }

    /// Numerically stabilized softmax over the trailing axis. Each slice
    /// is nonnegative and sums to 1.
    pub fn softmax_last(&self) -> Result<Tensor> {
        let (rows, last) = rows_last(&self.shape)?;
        let a = self.data_rc();
        let mut data = vec![0.0; a.len()];
        for r in 0..rows {
            let x = &a[r * last..(r + 1) * last];
            let m = x.iter().fold(Real::NEG_INFINITY, |m, &v| m.max(v));
            let mut sum = 0.0;
            for (o, &v) in data[r * last..(r + 1) * last].iter_mut().zip(x) {
                *o = (v - m).exp();
                sum += *o;
            }
            for o in &mut data[r * last..(r + 1) * last] {
                *o /= sum;
            }
        }
        let y = Rc::new(data.clone());
        Ok(self.push_op(
            self.shape.clone(),
            data,
            vec![self.idx],
            Box::new(move |g| {
                let mut dg = vec![0.0; g.len()];
                for r in 0..rows {
                    let ys = &y[r * last..(r + 1) * last];
                    let gs = &g[r * last..(r + 1) * last];
                    let dot: Real = ys.iter().zip(gs).map(|(yv, gv)| yv * gv).sum();
                    for c in 0..last {
                        dg[r * last + c] = ys[c] * (gs[c] - dot);
                    }
                }
                vec![dg]
            }),
        ))
    }

    /// Per-slice normalization over the trailing (channel) axis followed
    /// by an affine transform.
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor, eps: Real) -> Result<Tensor> {
        self.check_same_tape(gain)?;
        self.check_same_tape(bias)?;
        let (rows, d) = rows_last(&self.shape)?;
        if gain.shape != [d] || bias.shape != [d] {
            return Err(Error::dim(format!(
                "layer_norm: gain/bias shapes {:?}/{:?} do not match channel axis {d}",
                gain.shape, bias.shape
            )));
        }
        let a = self.data_rc();
        let gn = gain.data_rc();
        let bs = bias.data_rc();
        let mut data = vec![0.0; a.len()];
        let mut xhat = vec![0.0; a.len()];
        let mut sigmas = vec![0.0; rows];
        for r in 0..rows {
            let x = &a[r * d..(r + 1) * d];
            let mu: Real = x.iter().sum::<Real>() / d as Real;
            let var: Real = x.iter().map(|&v| (v - mu) * (v - mu)).sum::<Real>() / d as Real;
            let sigma = (var + eps).sqrt();
            sigmas[r] = sigma;
            for c in 0..d {
                let h = (x[c] - mu) / sigma;
                xhat[r * d + c] = h;
                data[r * d + c] = gn[c] * h + bs[c];
            }
        }
        let xhat = Rc::new(xhat);
        let sigmas = Rc::new(sigmas);
        let gnc = Rc::clone(&gn);
        Ok(self.push_op(
            self.shape.clone(),
            data,
            vec![self.idx, gain.idx, bias.idx],
            Box::new(move |g| {
                let mut dx = vec![0.0; g.len()];
                let mut dgain = vec![0.0; d];
                let mut dbias = vec![0.0; d];
                for r in 0..rows {
                    let hs = &xhat[r * d..(r + 1) * d];
                    let gs = &g[r * d..(r + 1) * d];
                    let mut mean_dh = 0.0;
                    let mut mean_dh_h = 0.0;
                    for c in 0..d {
                        let dh = gs[c] * gnc[c];
                        mean_dh += dh;
                        mean_dh_h += dh * hs[c];
                        dgain[c] += gs[c] * hs[c];
                        dbias[c] += gs[c];
                    }
                    mean_dh /= d as Real;
                    mean_dh_h /= d as Real;
                    let inv_sigma = 1.0 / sigmas[r];
                    for c in 0..d {
                        let dh = gs[c] * gnc[c];
                        dx[r * d + c] = inv_sigma * (dh - mean_dh - hs[c] * mean_dh_h);
                    }
                }
                vec![dx, dgain, dbias]
            }),
        ))
    }

    /// L2-normalize each slice over the trailing axis. Norms below 1e-12
    /// are clamped to keep the map defined at the origin.
    pub fn l2_normalize_last(&self) -> Result<Tensor> {
        let (rows, d) = rows_last(&self.shape)?;
        let a = self.data_rc();
        let mut data = vec![0.0; a.len()];
        let mut norms = vec![0.0; rows];
        for r in 0..rows {
            let x = &a[r * d..(r + 1) * d];
            let n = x.iter().map(|&v| v * v).sum::<Real>().sqrt().max(1e-12);
            norms[r] = n;
            for c in 0..d {
                data[r * d + c] = x[c] / n;
            }
        }
        let y = Rc::new(data.clone());
        let norms = Rc::new(norms);
        Ok(self.push_op(
            self.shape.clone(),
            data,
            vec![self.idx],
            Box::new(move |g| {
                let mut dg = vec![0.0; g.len()];
                for r in 0..rows {
                    let ys = &y[r * d..(r + 1) * d];
                    let gs = &g[r * d..(r + 1) * d];
                    let dot: Real = ys.iter().zip(gs).map(|(yv, gv)| yv * gv).sum();
                    for c in 0..d {
                        dg[r * d + c] = (gs[c] - ys[c] * dot) / norms[r];
                    }
                }
                vec![dg]
            }),
        ))
    }

    pub fn sum_all(&self) -> Tensor {
        let a = self.data_rc();
        let s: Real = a.iter().sum();
        let n = a.len();
        self.push_op(
            vec![],
            vec![s],
            vec![self.idx],
            Box::new(move |g| vec![vec![g[0]; n]]),
        )
    }

    pub fn mean_all(&self) -> Tensor {
        let n = self.numel() as Real;
        self.sum_all().scale(1.0 / n)
    }

    /// Maximum over the trailing axis; ties broken by lowest index.
    pub fn max_last(&self) -> Result<Tensor> {
        let (rows, last) = rows_last(&self.shape)?;
        if last == 0 {
            return Err(Error::dim("max_last: empty trailing axis".to_string()));
        }
        let a = self.data_rc();
        let mut data = vec![0.0; rows];
        let mut arg = vec![0usize; rows];
        for r in 0..rows {
            let x = &a[r * last..(r + 1) * last];
            let mut best = 0;
            for c in 1..last {
                if x[c] > x[best] {
                    best = c;
                }
            }
            arg[r] = best;
            data[r] = x[best];
        }
        let shape = self.shape[..self.shape.len() - 1].to_vec();
        Ok(self.push_op(
            shape,
            data,
            vec![self.idx],
            Box::new(move |g| {
                let mut dg = vec![0.0; rows * last];
                for r in 0..rows {
                    dg[r * last + arg[r]] = g[r];
                }
                vec![dg]
            }),
        ))
    }

    /// Stable log-sum-exp over the trailing axis.
    pub fn lse_last(&self) -> Result<Tensor> {
        let (rows, last) = rows_last(&self.shape)?;
        if last == 0 {
            return Err(Error::dim("lse_last: empty trailing axis".to_string()));
        }
        let a = self.data_rc();
        let mut data = vec![0.0; rows];
        let mut soft = vec![0.0; rows * last];
        for r in 0..rows {
            let x = &a[r * last..(r + 1) * last];
            let m = x.iter().fold(Real::NEG_INFINITY, |m, &v| m.max(v));
            let mut sum = 0.0;
            for c in 0..last {
                let e = (x[c] - m).exp();
                soft[r * last + c] = e;
                sum += e;
            }
            for c in 0..last {
                soft[r * last + c] /= sum;
            }
            data[r] = m + sum.ln();
        }
        let soft = Rc::new(soft);
        let shape = self.shape[..self.shape.len() - 1].to_vec();
        Ok(self.push_op(
            shape,
            data,
            vec![self.idx],
            Box::new(move |g| {
                let mut dg = vec![0.0; rows * last];
                for r in 0..rows {
                    for c in 0..last {
                        dg[r * last + c] = g[r] * soft[r * last + c];
                    }
                }
                vec![dg]
            }),
        ))
    }

    /// For a 2-D tensor, pick one element per row.
    pub fn select_per_row(&self, idx: &[usize]) -> Result<Tensor> {
        let [m, n] = <[usize; 2]>::try_from(self.shape.as_slice())
            .map_err(|_| Error::dim("select_per_row: input must be rank 2".to_string()))?;
        if idx.len() != m {
            return Err(Error::dim(format!(
                "select_per_row: {} indices for {m} rows",
                idx.len()
            )));
        }
        for &i in idx {
            if i >= n {
                return Err(Error::validation(format!(
                    "select_per_row: column {i} out of {n}"
                )));
            }
        }
        let a = self.data_rc();
        let data: Vec<Real> = idx.iter().enumerate().map(|(r, &c)| a[r * n + c]).collect();
        let idx_c = idx.to_vec();
        Ok(self.push_op(
            vec![m],
            data,
            vec![self.idx],
            Box::new(move |g| {
                let mut dg = vec![0.0; m * n];
                for (r, &c) in idx_c.iter().enumerate() {
                    dg[r * n + c] = g[r];
                }
                vec![dg]
            }),
        ))
    }
}
