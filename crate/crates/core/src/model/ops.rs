//! Dense kernels with explicit backward passes. Everything is row-major `f64`.

/// `C = alpha * A * B + beta * C` for strided operands. `A` is `m x k`, `B` is
/// `k x n`, `C` is `m x n`. With `beta == 0` the prior contents of `C` are
/// ignored.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            for i in 0..m {
                for j in 0..n {
                    c[i * rsc + j * csc] = 0.0;
                }
            }
        }
        return;
    }
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() > (m - 1) * rsc + (n - 1) * csc);
    // SAFETY: the asserts above bound every element the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// `y = x W + b` with `x: rows x fan_in`, `W: fan_in x fan_out`.
pub fn linear_forward(x: &[f64], w: &[f64], b: &[f64], rows: usize, fan_in: usize, fan_out: usize, y: &mut [f64]) {
    for r in 0..rows {
        y[r * fan_out..(r + 1) * fan_out].copy_from_slice(b);
    }
    gemm(rows, fan_in, fan_out, 1.0, x, (fan_in, 1), w, (fan_out, 1), 1.0, y, (fan_out, 1));
}

/// Accumulates `dW += x^T dy`, `db += sum_rows dy`, and if given,
/// `dx = dy W^T + beta * dx`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    rows: usize,
    fan_in: usize,
    fan_out: usize,
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<(&mut [f64], f64)>,
) {
    gemm(fan_in, rows, fan_out, 1.0, x, (1, fan_in), dy, (fan_out, 1), 1.0, dw, (fan_out, 1));
    for r in 0..rows {
        for (g, d) in db.iter_mut().zip(&dy[r * fan_out..(r + 1) * fan_out]) {
            *g += d;
        }
    }
    if let Some((dx, beta)) = dx {
        gemm(rows, fan_out, fan_in, 1.0, dy, (fan_out, 1), w, (1, fan_out), beta, dx, (fan_in, 1));
    }
}

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Default)]
pub struct LnCache {
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
}

pub fn layer_norm_forward(x: &[f64], g: &[f64], b: &[f64], rows: usize, h: usize, y: &mut [f64], cache: Option<&mut LnCache>) {
    let mut cache = cache;
    if let Some(c) = cache.as_deref_mut() {
        c.xhat.resize(rows * h, 0.0);
        c.rstd.resize(rows, 0.0);
    }
    for r in 0..rows {
        let row = &x[r * h..(r + 1) * h];
        let mean = row.iter().sum::<f64>() / h as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
        let rstd = 1.0 / (var + LN_EPS).sqrt();
        let out = &mut y[r * h..(r + 1) * h];
        for j in 0..h {
            let xh = (row[j] - mean) * rstd;
            out[j] = g[j] * xh + b[j];
            if let Some(c) = cache.as_deref_mut() {
                c.xhat[r * h + j] = xh;
            }
        }
        if let Some(c) = cache.as_deref_mut() {
            c.rstd[r] = rstd;
        }
    }
}

/// Accumulates `dg`, `db` and adds the input gradient into `dx`.
pub fn layer_norm_backward(cache: &LnCache, g: &[f64], dy: &[f64], rows: usize, h: usize, dg: &mut [f64], db: &mut [f64], dx: &mut [f64]) {
    let mut dxhat = vec![0.0; h];
    for r in 0..rows {
        let xh = &cache.xhat[r * h..(r + 1) * h];
        let d = &dy[r * h..(r + 1) * h];
        let mut mean_d = 0.0;
        let mut mean_dx = 0.0;
        for j in 0..h {
            dg[j] += d[j] * xh[j];
            db[j] += d[j];
            dxhat[j] = d[j] * g[j];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xh[j];
        }
        mean_d /= h as f64;
        mean_dx /= h as f64;
        let rstd = cache.rstd[r];
        let out = &mut dx[r * h..(r + 1) * h];
        for j in 0..h {
            out[j] += rstd * (dxhat[j] - mean_d - xh[j] * mean_dx);
        }
    }
}

/// Row-strided view of per-head vectors: row `r`, head `hd` lives at
/// `data[r * stride + offset + hd * head_dim ..][..head_dim]`.
#[derive(Clone, Copy)]
pub struct HeadView {
    pub stride: usize,
    pub offset: usize,
}

impl HeadView {
    #[inline]
    pub fn at(&self, r: usize, hd: usize, dh: usize) -> usize {
        r * self.stride + self.offset + hd * dh
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (o, v) in y.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

pub struct AttnShape<'a> {
    pub heads: usize,
    pub head_dim: usize,
    pub q_segs: &'a [Segment],
    pub k_segs: &'a [Segment],
    pub causal: bool,
}

/// Scaled dot-product attention over packed sequences. Writes `out` as
/// `rows_q x (heads * head_dim)` and appends the attention probabilities
/// (segment-major, then head, then `len_q x len_k`) to `probs`.
#[allow(clippy::too_many_arguments)]
pub fn attention_forward(
    shape: &AttnShape,
    q: &[f64],
    qv: HeadView,
    k: &[f64],
    kv: HeadView,
    v: &[f64],
    vv: HeadView,
    out: &mut [f64],
    probs: &mut Vec<f64>,
) {
    let (heads, dh) = (shape.heads, shape.head_dim);
    let h = heads * dh;
    let scale = 1.0 / (dh as f64).sqrt();
    probs.clear();
    for (qs, ks) in shape.q_segs.iter().zip(shape.k_segs) {
        for hd in 0..heads {
            let base = probs.len();
            probs.resize(base + qs.len * ks.len, 0.0);
            for i in 0..qs.len {
                let p = &mut probs[base + i * ks.len..base + (i + 1) * ks.len];
                let limit = if shape.causal { (i + 1).min(ks.len) } else { ks.len };
                let qi = &q[qv.at(qs.start + i, hd, dh)..][..dh];
                let mut max = f64::NEG_INFINITY;
                for j in 0..limit {
                    let kj = &k[kv.at(ks.start + j, hd, dh)..][..dh];
                    p[j] = dot(qi, kj) * scale;
                    max = max.max(p[j]);
                }
                let mut sum = 0.0;
                for pj in p[..limit].iter_mut() {
                    *pj = (*pj - max).exp();
                    sum += *pj;
                }
                let inv = 1.0 / sum;
                for pj in p[..limit].iter_mut() {
                    *pj *= inv;
                }
                let o = &mut out[(qs.start + i) * h + hd * dh..][..dh];
                o.iter_mut().for_each(|x| *x = 0.0);
                for j in 0..limit {
                    axpy(p[j], &v[vv.at(ks.start + j, hd, dh)..][..dh], o);
                }
            }
        }
    }
}

/// Backward of [`attention_forward`]. Gradients are accumulated into `dq`,
/// `dk`, `dv`, which share the layouts of `q`, `k`, `v`.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward(
    shape: &AttnShape,
    q: &[f64],
    qv: HeadView,
    k: &[f64],
    kv: HeadView,
    v: &[f64],
    vv: HeadView,
    probs: &[f64],
    dout: &[f64],
    dq: &mut [f64],
    dk: &mut [f64],
    dv: &mut [f64],
) {
    let (heads, dh) = (shape.heads, shape.head_dim);
    let h = heads * dh;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut base = 0;
    let mut dp = Vec::new();
    for (qs, ks) in shape.q_segs.iter().zip(shape.k_segs) {
        dp.resize(ks.len, 0.0);
        for hd in 0..heads {
            for i in 0..qs.len {
                let p = &probs[base + i * ks.len..base + (i + 1) * ks.len];
                let limit = if shape.causal { (i + 1).min(ks.len) } else { ks.len };
                let doi = &dout[(qs.start + i) * h + hd * dh..][..dh];
                let mut weighted = 0.0;
                for j in 0..limit {
                    let vrow = vv.at(ks.start + j, hd, dh);
                    dp[j] = dot(doi, &v[vrow..vrow + dh]);
                    weighted += p[j] * dp[j];
                    axpy(p[j], doi, &mut dv[vrow..vrow + dh]);
                }
                let qi_at = qv.at(qs.start + i, hd, dh);
                for j in 0..limit {
                    let ds = p[j] * (dp[j] - weighted) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let krow = kv.at(ks.start + j, hd, dh);
                    axpy(ds, &k[krow..krow + dh], &mut dq[qi_at..qi_at + dh]);
                    axpy(ds, &q[qi_at..qi_at + dh], &mut dk[krow..krow + dh]);
                }
            }
            base += qs.len * ks.len;
        }
    }
}

pub fn log_softmax_row(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    for (o, l) in out.iter_mut().zip(logits) {
        *o = l - lse;
    }
}

/// Sinusoidal position table, `len x dim`.
pub fn sinusoidal_positions(len: usize, dim: usize) -> Vec<f64> {
    let mut pe = vec![0.0; len * dim];
    for pos in 0..len {
        for i in 0..dim / 2 {
            let freq = (-((2 * i) as f64) * (10_000f64).ln() / dim as f64).exp();
            let angle = pos as f64 * freq;
            pe[pos * dim + 2 * i] = angle.sin();
            pe[pos * dim + 2 * i + 1] = angle.cos();
        }
    }
    pe
}
