use super::ops::sigmoid;
use super::shape::split_at_axis;
use super::{Float, SpikeTensor, Tensor};
use crate::error::{Error, Result};

/// Batch-norm statistics mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize with batch statistics and update the running estimates.
    Train,
    /// Normalize with the running estimates.
    Eval,
}

/// Running mean/variance of a batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<F> {
    pub mean: Vec<F>,
    pub var: Vec<F>,
    pub momentum: f64,
    pub eps: f64,
}

impl<F: Float> RunningStats<F> {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![F::zero(); channels],
            var: vec![F::one(); channels],
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

fn im2col<F: Float>(
    img: &[F],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    cols: &mut [F],
) {
    let hw = ho * wo;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let line = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        line.fill(F::zero());
                        continue;
                    }
                    let src = &img[(ci * h + iy as usize) * w..(ci * h + iy as usize + 1) * w];
                    for (ox, d) in line.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        *d = if ix < 0 || ix >= w as isize { F::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im<F: Float>(
    cols: &[F],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    img: &mut [F],
) {
    let hw = ho * wo;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = (ci * h + iy as usize) * w;
                    for ox in 0..wo {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            img[base + ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

impl<F: Float> Tensor<F> {
    /// 2-D cross-correlation of `[B, C, H, W]` with a square kernel
    /// `[C_out, C, k, k]`.
    pub fn conv2d(&self, kernel: &Tensor<F>, bias: Option<&Tensor<F>>, stride: usize, pad: usize) -> Result<Tensor<F>> {
        let (xs, ks) = (self.shape(), kernel.shape());
        if xs.len() != 4 || ks.len() != 4 || xs[1] != ks[1] || ks[2] != ks[3] || stride == 0 {
            return Err(Error::shape("conv2d", xs, ks));
        }
        let (bn, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (co, k) = (ks[0], ks[2]);
        if k > h + 2 * pad || k > w + 2 * pad {
            return Err(Error::KernelTooLarge {
                kernel: [k, k],
                input: [h + 2 * pad, w + 2 * pad],
            });
        }
        if let Some(b) = bias {
            if b.shape() != [co] {
                return Err(Error::shape("conv2d bias", b.shape(), &[co]));
            }
        }
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        let (ckk, hw) = (c * k * k, ho * wo);
        let mut cols = vec![F::zero(); bn * ckk * hw];
        let mut out = vec![F::zero(); bn * co * hw];
        {
            let x = self.values();
            let wt = kernel.values();
            for i in 0..bn {
                let col = &mut cols[i * ckk * hw..(i + 1) * ckk * hw];
                im2col(&x[i * c * h * w..(i + 1) * c * h * w], c, h, w, k, stride, pad, ho, wo, col);
                F::gemm(
                    co,
                    ckk,
                    hw,
                    F::one(),
                    &wt,
                    ckk as isize,
                    1,
                    col,
                    hw as isize,
                    1,
                    F::zero(),
                    &mut out[i * co * hw..(i + 1) * co * hw],
                    hw as isize,
                    1,
                );
            }
            if let Some(b) = bias {
                let b = b.values();
                for (j, chunk) in out.chunks_mut(hw).enumerate() {
                    let bj = b[j % co];
                    chunk.iter_mut().for_each(|v| *v += bj);
                }
            }
        }
        let mut parents = vec![self.clone(), kernel.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        let kernel_t = kernel.clone();
        Ok(Tensor::from_op(
            "conv2d",
            vec![bn, co, ho, wo],
            out,
            parents,
            Box::new(move |g, needs| {
                let wt = kernel_t.values();
                let mut gx = needs[0].then(|| vec![F::zero(); bn * c * h * w]);
                let mut gw = needs[1].then(|| vec![F::zero(); co * ckk]);
                let mut gcol = vec![F::zero(); if gx.is_some() { ckk * hw } else { 0 }];
                for i in 0..bn {
                    let gi = &g[i * co * hw..(i + 1) * co * hw];
                    let col = &cols[i * ckk * hw..(i + 1) * ckk * hw];
                    if let Some(gw) = gw.as_mut() {
                        // gW += g_i [co, hw] @ col^T [hw, ckk]
                        F::gemm(co, hw, ckk, F::one(), gi, hw as isize, 1, col, 1, hw as isize, F::one(), gw, ckk as isize, 1);
                    }
                    if let Some(gx) = gx.as_mut() {
                        // gcol = W^T [ckk, co] @ g_i [co, hw]
                        F::gemm(ckk, co, hw, F::one(), &wt, 1, ckk as isize, gi, hw as isize, 1, F::zero(), &mut gcol, hw as isize, 1);
                        col2im(&gcol, c, h, w, k, stride, pad, ho, wo, &mut gx[i * c * h * w..(i + 1) * c * h * w]);
                    }
                }
                let mut grads = vec![gx, gw];
                if needs.len() > 2 {
                    grads.push(needs[2].then(|| {
                        let mut gb = vec![F::zero(); co];
                        for (j, chunk) in g.chunks(hw).enumerate() {
                            gb[j % co] += chunk.iter().copied().sum::<F>();
                        }
                        gb
                    }));
                }
                grads
            }),
        ))
    }

    /// Max pooling over `k x k` windows of `[B, C, H, W]` with stride `s`.
    /// Ties route the gradient to the first maximum in row-major order.
    pub fn maxpool2d(&self, k: usize, s: usize) -> Result<Tensor<F>> {
        let xs = self.shape();
        if xs.len() != 4 || k == 0 || s == 0 {
            return Err(Error::InvalidArgument(format!("maxpool2d: input {xs:?}, window {k}, stride {s}")));
        }
        let (bn, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        if k > h || k > w {
            return Err(Error::WindowTooLarge { window: k, input: [h, w] });
        }
        let ho = (h - k) / s + 1;
        let wo = (w - k) / s + 1;
        let planes = bn * c;
        let mut out = Vec::with_capacity(planes * ho * wo);
        let mut arg = Vec::with_capacity(planes * ho * wo);
        {
            let x = self.values();
            for p in 0..planes {
                let plane = &x[p * h * w..(p + 1) * h * w];
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut best = oy * s * w + ox * s;
                        for ky in 0..k {
                            for kx in 0..k {
                                let idx = (oy * s + ky) * w + ox * s + kx;
                                if plane[idx] > plane[best] {
                                    best = idx;
                                }
                            }
                        }
                        out.push(plane[best]);
                        arg.push(p * h * w + best);
                    }
                }
            }
        }
        let len = self.numel();
        Ok(Tensor::from_op(
            "maxpool2d",
            vec![bn, c, ho, wo],
            out,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![F::zero(); len];
                for (&a, &gi) in arg.iter().zip(g) {
                    gx[a] += gi;
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Batch normalization over `channel_axis`. Every other axis is pooled
    /// into the statistics, so time folded into batch shares one estimate.
    pub fn batch_norm(
        &self,
        gamma: &Tensor<F>,
        beta: &Tensor<F>,
        stats: &mut RunningStats<F>,
        mode: BnMode,
        channel_axis: usize,
    ) -> Result<Tensor<F>> {
        let (outer, ch, inner) = split_at_axis("batch_norm", self.shape(), channel_axis)?;
        if gamma.shape() != [ch] || beta.shape() != [ch] || stats.mean.len() != ch || stats.var.len() != ch {
            return Err(Error::shape("batch_norm", self.shape(), gamma.shape()));
        }
        let count = outer * inner;
        let eps = F::c(stats.eps);
        let x = self.values();
        let (mean, var) = match mode {
            BnMode::Train => {
                if count < 2 {
                    return Err(Error::DegenerateBatch { count });
                }
                let mut mean = vec![F::zero(); ch];
                let mut var = vec![F::zero(); ch];
                chan_fold(&x, &x, ch, inner, &mut mean, &vec![(); ch], |v, _, ()| v);
                let n = F::c(count as f64);
                mean.iter_mut().for_each(|m| *m /= n);
                chan_fold(&x, &x, ch, inner, &mut var, &mean, |v, _, m| (v - m) * (v - m));
                var.iter_mut().for_each(|v| *v /= n);
                let mom = F::c(stats.momentum);
                let unbias = F::c(count as f64 / (count as f64 - 1.0));
                for c in 0..ch {
                    stats.mean[c] = (F::one() - mom) * stats.mean[c] + mom * mean[c];
                    stats.var[c] = (F::one() - mom) * stats.var[c] + mom * var[c] * unbias;
                }
                (mean, var)
            }
            BnMode::Eval => (stats.mean.clone(), stats.var.clone()),
        };
        let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v + eps).sqrt()).collect();
        let g = gamma.values();
        let b = beta.values();
        let mut xhat = vec![F::zero(); x.len()];
        let mut out = vec![F::zero(); x.len()];
        let norm: Vec<(F, F)> = mean.iter().copied().zip(inv_std.iter().copied()).collect();
        chan_map(&x, &x, ch, inner, &mut xhat, &norm, |v, _, (m, is)| (v - m) * is);
        let affine: Vec<(F, F)> = g.iter().copied().zip(b.iter().copied()).collect();
        chan_map(&xhat, &xhat, ch, inner, &mut out, &affine, |h, _, (g, b)| g * h + b);
        drop((x, g, b));
        let gamma_t = gamma.clone();
        Ok(Tensor::from_op(
            "batch_norm",
            self.shape().to_vec(),
            out,
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(move |gout, needs| {
                let gam = gamma_t.values();
                let mut sum_g = vec![F::zero(); ch];
                let mut sum_gx = vec![F::zero(); ch];
                let unit = vec![(); ch];
                chan_fold(gout, gout, ch, inner, &mut sum_g, &unit, |g, _, ()| g);
                chan_fold(gout, &xhat, ch, inner, &mut sum_gx, &unit, |g, h, ()| g * h);
                let gx = needs[0].then(|| {
                    let mut gx = vec![F::zero(); gout.len()];
                    let n = F::c(count as f64);
                    let scale: Vec<F> = gam.iter().zip(&inv_std).map(|(&g, &is)| g * is).collect();
                    match mode {
                        BnMode::Train => {
                            let p: Vec<(F, F, F)> = (0..ch).map(|c| (scale[c], sum_g[c] / n, sum_gx[c] / n)).collect();
                            chan_map(gout, &xhat, ch, inner, &mut gx, &p, |g, h, (s, mg, mgx)| s * (g - mg - h * mgx));
                        }
                        BnMode::Eval => chan_map(gout, gout, ch, inner, &mut gx, &scale, |g, _, s| s * g),
                    }
                    gx
                });
                vec![gx, needs[1].then_some(sum_gx), needs[2].then_some(sum_g)]
            }),
        ))
    }

    /// Spike function: forward is the step `v >= 0`, backward uses the
    /// derivative of `sigmoid(slope * v)`.
    pub fn heaviside_surrogate(&self, slope: f64) -> SpikeTensor<F> {
        let data: Vec<F> = self.values().iter().map(|&v| if v >= F::zero() { F::one() } else { F::zero() }).collect();
        let input = self.clone();
        let k = F::c(slope);
        SpikeTensor::new_unchecked(Tensor::from_op(
            "heaviside_surrogate",
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g, _| {
                let v = input.values();
                vec![Some(g.iter().zip(v.iter()).map(|(&gi, &vi)| gi * surrogate_grad(vi, k)).collect())]
            }),
        ))
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax of
    /// `[B, C]` logits.
    pub fn cross_entropy(&self, labels: &[usize]) -> Result<Tensor<F>> {
        let s = self.shape();
        if s.len() != 2 || s[0] != labels.len() || s[0] == 0 {
            return Err(Error::shape("cross_entropy", s, &[labels.len()]));
        }
        let (b, c) = (s[0], s[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::LabelOutOfRange { label: bad, classes: c });
        }
        let x = self.values();
        let mut probs = vec![F::zero(); b * c];
        let mut loss = F::zero();
        for i in 0..b {
            let row = &x[i * c..(i + 1) * c];
            let mx = row.iter().copied().fold(F::neg_infinity(), F::max);
            let z: F = row.iter().map(|&v| (v - mx).exp()).sum();
            let lse = mx + z.ln();
            loss += lse - row[labels[i]];
            for j in 0..c {
                probs[i * c + j] = (row[j] - lse).exp();
            }
        }
        drop(x);
        let n = F::c(b as f64);
        let labels = labels.to_vec();
        Ok(Tensor::from_op(
            "cross_entropy",
            Vec::new(),
            vec![loss / n],
            vec![self.clone()],
            Box::new(move |g, _| {
                let scale = g[0] / n;
                let mut gx: Vec<F> = probs.iter().map(|&p| p * scale).collect();
                for (i, &l) in labels.iter().enumerate() {
                    gx[i * c + l] -= scale;
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Normalizes each vector along the last axis to unit L2 norm. Zero
    /// vectors pass through unchanged.
    pub fn l2_normalize(&self) -> Result<Tensor<F>> {
        let d = *self.shape().last().ok_or(Error::EmptyInput("l2_normalize on scalar"))?;
        if d == 0 {
            return Err(Error::EmptyInput("l2_normalize"));
        }
        let x = self.values();
        let rows = x.len() / d;
        let mut norms = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(x.len());
        for r in x.chunks(d) {
            let nrm = r.iter().map(|&v| v * v).sum::<F>().sqrt();
            norms.push(nrm);
            if nrm > F::zero() {
                out.extend(r.iter().map(|&v| v / nrm));
            } else {
                out.extend_from_slice(r);
            }
        }
        drop(x);
        let y = out.clone();
        Ok(Tensor::from_op(
            "l2_normalize",
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = Vec::with_capacity(g.len());
                for ((gr, yr), &nrm) in g.chunks(d).zip(y.chunks(d)).zip(&norms) {
                    if nrm > F::zero() {
                        let dot: F = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                        gx.extend(gr.iter().zip(yr).map(|(&gi, &yi)| (gi - yi * dot) / nrm));
                    } else {
                        gx.extend_from_slice(gr);
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }
}

/// Calls `f(index, channel)` for every element of a `[outer, ch, inner]`
/// buffer, in memory order.
#[inline(always)]
/// `acc[c] += f(a, b, params[c])` over every element of channel `c`, in
/// memory order. `a` and `b` are `[outer, ch, inner]`.
fn chan_fold<F: Float, P: Copy>(a: &[F], b: &[F], ch: usize, inner: usize, acc: &mut [F], params: &[P], f: impl Fn(F, F, P) -> F) {
    let block = ch * inner;
    for (ra, rb) in a.chunks_exact(block).zip(b.chunks_exact(block)) {
        if inner == 1 {
            for (((s, &x), &y), &p) in acc.iter_mut().zip(ra).zip(rb).zip(params) {
                *s += f(x, y, p);
            }
        } else {
            for (((s, sa), sb), &p) in acc.iter_mut().zip(ra.chunks_exact(inner)).zip(rb.chunks_exact(inner)).zip(params) {
                for (&x, &y) in sa.iter().zip(sb) {
                    *s += f(x, y, p);
                }
            }
        }
    }
}

/// `out = f(a, b, params[c])` elementwise.
fn chan_map<F: Float, P: Copy>(a: &[F], b: &[F], ch: usize, inner: usize, out: &mut [F], params: &[P], f: impl Fn(F, F, P) -> F) {
    let block = ch * inner;
    for ((ra, rb), ro) in a.chunks_exact(block).zip(b.chunks_exact(block)).zip(out.chunks_exact_mut(block)) {
        if inner == 1 {
            for (((o, &x), &y), &p) in ro.iter_mut().zip(ra).zip(rb).zip(params) {
                *o = f(x, y, p);
            }
        } else {
            for (((so, sa), sb), &p) in ro.chunks_exact_mut(inner).zip(ra.chunks_exact(inner)).zip(rb.chunks_exact(inner)).zip(params) {
                for ((o, &x), &y) in so.iter_mut().zip(sa).zip(sb) {
                    *o = f(x, y, p);
                }
            }
        }
    }
}

/// `slope * sigma(slope * v) * (1 - sigma(slope * v))`.
#[inline]
pub(crate) fn surrogate_grad<F: Float>(v: F, slope: F) -> F {
    let s = sigmoid(slope * v);
    slope * s * (F::one() - s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    fn conv_out_extent(extent: usize, k: usize, stride: usize, pad: usize) -> usize {
        (extent + 2 * pad - k) / stride + 1
    }

    #[test]
    fn conv_zero_input_zero_output() {
        let x = Tensor::<f64>::zeros(&[1, 2, 4, 4]);
        let k = t(&[3, 2, 3, 3], &(0..54).map(|i| i as f64 * 0.1 - 2.0).collect::<Vec<_>>());
        let y = x.conv2d(&k, None, 1, 1).unwrap();
        assert_eq!(y.shape(), &[1, 3, 4, 4]);
        assert!(y.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_unit_kernel_is_identity() {
        let v: Vec<f64> = (0..9).map(|i| i as f64 - 3.5).collect();
        let x = t(&[1, 1, 3, 3], &v);
        let k = t(&[1, 1, 1, 1], &[1.0]);
        assert_eq!(x.conv2d(&k, None, 1, 0).unwrap().to_vec(), v);
    }

    #[test]
    fn conv_ones_sliding_window() {
        let x = Tensor::<f64>::ones(&[1, 1, 3, 3]);
        let k = Tensor::<f64>::ones(&[1, 1, 2, 2]);
        let y = x.conv2d(&k, None, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.to_vec(), vec![4.0; 4]);
    }

    #[test]
    fn conv_matches_direct_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (b, c, h, w, co, k, s, p) = (2, 2, 5, 4, 3, 3, 2, 1);
        let xv: Vec<f64> = (0..b * c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let kv: Vec<f64> = (0..co * c * k * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bias = [0.5, -0.25, 1.0];
        let y = t(&[b, c, h, w], &xv).conv2d(&t(&[co, c, k, k], &kv), Some(&t(&[co], &bias)), s, p).unwrap();
        let ho = conv_out_extent(h, k, s, p);
        let wo = conv_out_extent(w, k, s, p);
        assert_eq!(y.shape(), &[b, co, ho, wo]);
        let yv = y.to_vec();
        for bi in 0..b {
            for o in 0..co {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = bias[o];
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * s + ky) as isize - p as isize;
                                    let ix = (ox * s + kx) as isize - p as isize;
                                    if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                        acc += xv[((bi * c + ci) * h + iy as usize) * w + ix as usize]
                                            * kv[((o * c + ci) * k + ky) * k + kx];
                                    }
                                }
                            }
                        }
                        let got = yv[((bi * co + o) * ho + oy) * wo + ox];
                        assert!((got - acc).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn conv_kernel_too_large() {
        let x = Tensor::<f64>::zeros(&[1, 1, 2, 2]);
        let k = Tensor::<f64>::zeros(&[1, 1, 3, 3]);
        assert!(matches!(x.conv2d(&k, None, 1, 0), Err(Error::KernelTooLarge { .. })));
        assert!(x.conv2d(&k, None, 1, 1).is_ok());
    }

    #[test]
    fn maxpool_basics() {
        let x = Tensor::<f64>::full(&[1, 1, 4, 4], 2.5);
        let y = x.maxpool2d(2, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert!(y.values().iter().all(|&v| v == 2.5));
        let x = t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(x.maxpool2d(2, 2).unwrap().to_vec(), vec![4.0]);
        assert!(matches!(x.maxpool2d(3, 1), Err(Error::WindowTooLarge { .. })));
    }

    #[test]
    fn maxpool_tie_goes_to_first_row_major() {
        let x = Tensor::<f64>::param(&[1, 1, 2, 2], vec![1.0, 4.0, 4.0, 0.0]).unwrap();
        x.maxpool2d(2, 2).unwrap().sum_all().backward().unwrap();
        // enumerate the window in row-major order and pick the first max
        let v = [1.0, 4.0, 4.0, 0.0];
        let mut first = 0;
        for (i, &val) in v.iter().enumerate() {
            if val > v[first] {
                first = i;
            }
        }
        let mut expect = vec![0.0; 4];
        expect[first] = 1.0;
        assert_eq!(x.grad().unwrap(), expect);
    }

    #[test]
    fn batchnorm_hand_values() {
        let x = t(&[3, 1], &[1.0, 2.0, 3.0]);
        let mut st = RunningStats::new(1);
        let y = x.batch_norm(&Tensor::ones(&[1]), &Tensor::zeros(&[1]), &mut st, BnMode::Train, 1).unwrap();
        // population variance 2/3
        let sd = (2.0f64 / 3.0 + 1e-5).sqrt();
        let expect = [-1.0 / sd, 0.0, 1.0 / sd];
        for (a, b) in y.to_vec().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((y.values()[0] + 1.2247).abs() < 1e-4);
        // running stats updated with momentum 0.1
        assert!((st.mean[0] - 0.2).abs() < 1e-12);
        assert!((st.var[0] - (0.9 + 0.1 * 1.0)).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_zero_gamma_gives_beta() {
        let x = t(&[4, 2], &[1.0, -3.0, 2.0, 5.0, 0.5, 0.0, 7.0, 1.0]);
        let mut st = RunningStats::new(2);
        let y = x.batch_norm(&Tensor::zeros(&[2]), &t(&[2], &[0.3, -0.7]), &mut st, BnMode::Train, 1).unwrap();
        for (i, &v) in y.values().iter().enumerate() {
            assert_eq!(v, if i % 2 == 0 { 0.3 } else { -0.7 });
        }
    }

    #[test]
    fn batchnorm_standardized_input_nearly_unchanged() {
        let x = t(&[4, 1], &[-1.0, 1.0, -1.0, 1.0]);
        let mut st = RunningStats::new(1);
        let y = x.batch_norm(&Tensor::ones(&[1]), &Tensor::zeros(&[1]), &mut st, BnMode::Train, 1).unwrap();
        for (a, b) in y.to_vec().iter().zip(x.to_vec()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn batchnorm_single_element_train_errors() {
        let x = t(&[1, 3], &[1.0, 2.0, 3.0]);
        let mut st = RunningStats::new(3);
        let r = x.batch_norm(&Tensor::ones(&[3]), &Tensor::zeros(&[3]), &mut st, BnMode::Train, 1);
        assert!(matches!(r, Err(Error::DegenerateBatch { count: 1 })));
        assert!(x.batch_norm(&Tensor::ones(&[3]), &Tensor::zeros(&[3]), &mut st, BnMode::Eval, 1).is_ok());
    }

    #[test]
    fn heaviside_values_and_surrogate() {
        let v = Tensor::<f64>::param(&[3], vec![-0.3, 0.7, 0.0]).unwrap();
        let s = v.heaviside_surrogate(4.0);
        assert_eq!(s.to_vec(), vec![0.0, 1.0, 1.0]);
        s.sum_all().backward().unwrap();
        let g = v.grad().unwrap();
        assert!((g[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_values() {
        let u = Tensor::<f64>::zeros(&[2, 6]);
        assert!((u.cross_entropy(&[0, 5]).unwrap().item() - 6f64.ln()).abs() < 1e-12);
        let x = t(&[1, 3], &[1.0, 2.0, 3.0]);
        let expect = -(3f64.exp() / (1f64.exp() + 2f64.exp() + 3f64.exp())).ln();
        let got = x.cross_entropy(&[2]).unwrap().item();
        assert!((got - expect).abs() < 1e-12);
        assert!((got - 0.40761).abs() < 1e-5);
        let sharp = t(&[1, 2], &[1e4, 0.0]);
        assert!(sharp.cross_entropy(&[0]).unwrap().item() < 1e-12);
        assert!(matches!(x.cross_entropy(&[3]), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn l2_normalize_cases() {
        let x = t(&[3, 2], &[0.6, 0.8, 3.0, 4.0, 0.0, 0.0]);
        let y = x.l2_normalize().unwrap().to_vec();
        assert!((y[0] - 0.6).abs() < 1e-15 && (y[1] - 0.8).abs() < 1e-15);
        assert!((y[2] - 0.6).abs() < 1e-15 && (y[3] - 0.8).abs() < 1e-15);
        assert_eq!(&y[4..], &[0.0, 0.0]);
    }
}
