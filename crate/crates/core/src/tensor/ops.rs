use super::shape::{broadcast_shapes, numel, split_at_axis, strides, sum_to_shape, BroadcastMap};
use super::{Float, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

impl Binary {
    fn name(self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
            Binary::Div => "div",
        }
    }

    #[inline]
    fn apply<F: Float>(self, a: F, b: F) -> F {
        match self {
            Binary::Add => a + b,
            Binary::Sub => a - b,
            Binary::Mul => a * b,
            Binary::Div => a / b,
        }
    }
}

impl<F: Float> Tensor<F> {
    fn binary(&self, other: &Tensor<F>, op: Binary) -> Result<Tensor<F>> {
        let out_shape =
            broadcast_shapes(self.shape(), other.shape()).ok_or_else(|| Error::shape(op.name(), self.shape(), other.shape()))?;
        let n = numel(&out_shape);
        let ma = BroadcastMap::new(self.shape(), &out_shape);
        let mb = BroadcastMap::new(other.shape(), &out_shape);
        let data = {
            let a = self.values();
            let b = other.values();
            match (&ma, &mb) {
                (BroadcastMap::Same, BroadcastMap::Same) => a.iter().zip(b.iter()).map(|(&x, &y)| op.apply(x, y)).collect(),
                (BroadcastMap::Same, BroadcastMap::Suffix(p)) => a
                    .chunks(*p)
                    .flat_map(|chunk| chunk.iter().zip(b.iter()).map(|(&x, &y)| op.apply(x, y)))
                    .collect(),
                _ => (0..n).map(|i| op.apply(a[ma.index(i)], b[mb.index(i)])).collect::<Vec<F>>(),
            }
        };
        let (a_t, b_t) = (self.clone(), other.clone());
        let (sa, sb, so) = (self.shape().to_vec(), other.shape().to_vec(), out_shape.clone());
        Ok(Tensor::from_op(
            op.name(),
            out_shape,
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |g, needs| {
                let a = a_t.values();
                let b = b_t.values();
                let ma = BroadcastMap::new(&sa, &so);
                let mb = BroadcastMap::new(&sb, &so);
                let ga = needs[0].then(|| {
                    let full: Vec<F> = match op {
                        Binary::Add | Binary::Sub => g.to_vec(),
                        Binary::Mul => g.iter().enumerate().map(|(i, &gi)| gi * b[mb.index(i)]).collect(),
                        Binary::Div => g.iter().enumerate().map(|(i, &gi)| gi / b[mb.index(i)]).collect(),
                    };
                    sum_to_shape(&full, &so, &sa)
                });
                let gb = needs[1].then(|| {
                    let full: Vec<F> = match op {
                        Binary::Add => g.to_vec(),
                        Binary::Sub => g.iter().map(|&gi| -gi).collect(),
                        Binary::Mul => g.iter().enumerate().map(|(i, &gi)| gi * a[ma.index(i)]).collect(),
                        Binary::Div => g
                            .iter()
                            .enumerate()
                            .map(|(i, &gi)| {
                                let bv = b[mb.index(i)];
                                -gi * a[ma.index(i)] / (bv * bv)
                            })
                            .collect(),
                    };
                    sum_to_shape(&full, &so, &sb)
                });
                vec![ga, gb]
            }),
        ))
    }

    pub fn add(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        self.binary(other, Binary::Add)
    }

    pub fn sub(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        self.binary(other, Binary::Sub)
    }

    pub fn mul(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        self.binary(other, Binary::Mul)
    }

    pub fn div(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        self.binary(other, Binary::Div)
    }

    /// Elementwise map with a derivative expressed through input and output.
    fn unary(
        &self,
        name: &'static str,
        f: impl Fn(F) -> F,
        df: impl Fn(F, F) -> F + 'static,
    ) -> Tensor<F> {
        let data: Vec<F> = self.values().iter().map(|&x| f(x)).collect();
        let input = self.clone();
        let out = data.clone();
        Tensor::from_op(
            name,
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g, _| {
                let x = input.values();
                vec![Some(g.iter().zip(x.iter()).zip(&out).map(|((&gi, &xi), &yi)| gi * df(xi, yi)).collect())]
            }),
        )
    }

    pub fn scale(&self, c: f64) -> Tensor<F> {
        let c = F::c(c);
        self.unary("scale", move |x| x * c, move |_, _| c)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor<F> {
        let c = F::c(c);
        self.unary("add_scalar", move |x| x + c, |_, _| F::one())
    }

    pub fn neg(&self) -> Tensor<F> {
        self.scale(-1.0)
    }

    pub fn exp(&self) -> Tensor<F> {
        self.unary("exp", |x| x.exp(), |_, y| y)
    }

    pub fn ln(&self) -> Tensor<F> {
        self.unary("ln", |x| x.ln(), |x, _| F::one() / x)
    }

    pub fn square(&self) -> Tensor<F> {
        self.unary("square", |x| x * x, |x, _| x + x)
    }

    pub fn sigmoid(&self) -> Tensor<F> {
        self.unary("sigmoid", sigmoid, |_, y| y * (F::one() - y))
    }

    pub fn sum_all(&self) -> Tensor<F> {
        let s: F = self.values().iter().copied().sum();
        let n = self.numel();
        Tensor::from_op("sum_all", Vec::new(), vec![s], vec![self.clone()], Box::new(move |g, _| vec![Some(vec![g[0]; n])]))
    }

    pub fn mean_all(&self) -> Tensor<F> {
        let n = self.numel();
        self.sum_all().scale(1.0 / n as f64)
    }

    /// Sums out `axis`; the axis is removed from the shape.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor<F>> {
        self.reduce_axis("sum_axis", axis, F::one())
    }

    /// Arithmetic mean over `axis`; the axis is removed from the shape.
    pub fn reduce_mean(&self, axis: usize) -> Result<Tensor<F>> {
        let (_, extent, _) = split_at_axis("reduce_mean", self.shape(), axis)?;
        self.reduce_axis("reduce_mean", axis, F::one() / F::c(extent as f64))
    }

    fn reduce_axis(&self, name: &'static str, axis: usize, weight: F) -> Result<Tensor<F>> {
        let (outer, extent, inner) = split_at_axis(name, self.shape(), axis)?;
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        let mut out = vec![F::zero(); outer * inner];
        {
            let x = self.values();
            for o in 0..outer {
                let dst = &mut out[o * inner..(o + 1) * inner];
                for e in 0..extent {
                    let src = &x[(o * extent + e) * inner..(o * extent + e + 1) * inner];
                    dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
                }
            }
        }
        if weight != F::one() {
            out.iter_mut().for_each(|v| *v *= weight);
        }
        Ok(Tensor::from_op(
            name,
            shape,
            out,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = Vec::with_capacity(outer * extent * inner);
                for o in 0..outer {
                    let src = &g[o * inner..(o + 1) * inner];
                    for _ in 0..extent {
                        gx.extend(src.iter().map(|&v| v * weight));
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Inserts a new axis at `axis` holding `extent` copies of the input.
    pub fn broadcast_expand(&self, axis: usize, extent: usize) -> Result<Tensor<F>> {
        if extent < 1 {
            return Err(Error::InvalidArgument("broadcast_expand: extent must be >= 1".into()));
        }
        if axis > self.rank() {
            return Err(Error::InvalidAxis {
                op: "broadcast_expand",
                axis,
                rank: self.rank(),
            });
        }
        let outer = numel(&self.shape()[..axis]);
        let inner = numel(&self.shape()[axis..]);
        let mut shape = self.shape().to_vec();
        shape.insert(axis, extent);
        let mut out = Vec::with_capacity(outer * extent * inner);
        {
            let x = self.values();
            for o in 0..outer {
                let src = &x[o * inner..(o + 1) * inner];
                for _ in 0..extent {
                    out.extend_from_slice(src);
                }
            }
        }
        Ok(Tensor::from_op(
            "broadcast_expand",
            shape,
            out,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![F::zero(); outer * inner];
                for o in 0..outer {
                    let dst = &mut gx[o * inner..(o + 1) * inner];
                    for e in 0..extent {
                        let src = &g[(o * extent + e) * inner..(o * extent + e + 1) * inner];
                        dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<F>> {
        if numel(shape) != self.numel() {
            return Err(Error::shape("reshape", self.shape(), shape));
        }
        Ok(Tensor::from_op(
            "reshape",
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            Box::new(|g, _| vec![Some(g.to_vec())]),
        ))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor<F>> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::InvalidArgument(format!("permute: {axes:?} is not a permutation of rank {rank}")));
        }
        let in_shape = self.shape().to_vec();
        let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
        let data = permute_data(&self.values(), &in_shape, axes);
        let mut inverse = vec![0; rank];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        let grad_shape = out_shape.clone();
        Ok(Tensor::from_op(
            "permute",
            out_shape,
            data,
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(permute_data(g, &grad_shape, &inverse))]),
        ))
    }

    pub fn transpose(&self, a: usize, b: usize) -> Result<Tensor<F>> {
        let mut axes: Vec<usize> = (0..self.rank()).collect();
        if a >= axes.len() || b >= axes.len() {
            return Err(Error::InvalidAxis {
                op: "transpose",
                axis: a.max(b),
                rank: self.rank(),
            });
        }
        axes.swap(a, b);
        self.permute(&axes)
    }

    /// Batched matrix product `[.., M, K] @ [.., K, P] -> [.., M, P]` with
    /// broadcasting over the leading axes.
    pub fn matmul(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        if sa.len() < 2 || sb.len() < 2 || sa[sa.len() - 1] != sb[sb.len() - 2] {
            return Err(Error::shape("matmul", &sa, &sb));
        }
        let (m, k, p) = (sa[sa.len() - 2], sa[sa.len() - 1], sb[sb.len() - 1]);
        let (ba, bb) = (&sa[..sa.len() - 2], &sb[..sb.len() - 2]);
        let batch = broadcast_shapes(ba, bb).ok_or_else(|| Error::shape("matmul", &sa, &sb))?;
        let nb = numel(&batch);
        let map_a = BroadcastMap::new(ba, &batch);
        let map_b = BroadcastMap::new(bb, &batch);

        let mut out_shape = batch.clone();
        out_shape.extend([m, p]);
        let mut out = vec![F::zero(); nb * m * p];
        {
            let a = self.values();
            let b = other.values();
            if numel(bb) == 1 && numel(ba) == nb {
                // [.., M, K] @ [K, P] collapses into one product.
                F::gemm(nb * m, k, p, F::one(), &a, k as isize, 1, &b, p as isize, 1, F::zero(), &mut out, p as isize, 1);
            } else {
                for i in 0..nb {
                    let ai = map_a.index(i) * m * k;
                    let bi = map_b.index(i) * k * p;
                    F::gemm(
                        m,
                        k,
                        p,
                        F::one(),
                        &a[ai..ai + m * k],
                        k as isize,
                        1,
                        &b[bi..bi + k * p],
                        p as isize,
                        1,
                        F::zero(),
                        &mut out[i * m * p..(i + 1) * m * p],
                        p as isize,
                        1,
                    );
                }
            }
        }
        let (a_t, b_t) = (self.clone(), other.clone());
        let (ba, bb) = (ba.to_vec(), bb.to_vec());
        Ok(Tensor::from_op(
            "matmul",
            out_shape,
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g, needs| {
                let a = a_t.values();
                let b = b_t.values();
                let map_a = BroadcastMap::new(&ba, &batch);
                let map_b = BroadcastMap::new(&bb, &batch);
                let mut ga = needs[0].then(|| vec![F::zero(); a.len()]);
                let mut gb = needs[1].then(|| vec![F::zero(); b.len()]);
                let collapsed = numel(&bb) == 1 && numel(&ba) == nb;
                if collapsed {
                    let rows = nb * m;
                    if let Some(ga) = ga.as_mut() {
                        // g [rows, P] @ b^T [P, K]
                        F::gemm(rows, p, k, F::one(), g, p as isize, 1, &b, 1, p as isize, F::zero(), ga, k as isize, 1);
                    }
                    if let Some(gb) = gb.as_mut() {
                        // a^T [K, rows] @ g [rows, P]
                        F::gemm(k, rows, p, F::one(), &a, 1, k as isize, g, p as isize, 1, F::zero(), gb, p as isize, 1);
                    }
                } else {
                    for i in 0..nb {
                        let ai = map_a.index(i) * m * k;
                        let bi = map_b.index(i) * k * p;
                        let gi = &g[i * m * p..(i + 1) * m * p];
                        if let Some(ga) = ga.as_mut() {
                            F::gemm(
                                m,
                                p,
                                k,
                                F::one(),
                                gi,
                                p as isize,
                                1,
                                &b[bi..bi + k * p],
                                1,
                                p as isize,
                                F::one(),
                                &mut ga[ai..ai + m * k],
                                k as isize,
                                1,
                            );
                        }
                        if let Some(gb) = gb.as_mut() {
                            F::gemm(
                                k,
                                m,
                                p,
                                F::one(),
                                &a[ai..ai + m * k],
                                1,
                                k as isize,
                                gi,
                                p as isize,
                                1,
                                F::one(),
                                &mut gb[bi..bi + k * p],
                                p as isize,
                                1,
                            );
                        }
                    }
                }
                vec![ga, gb]
            }),
        ))
    }
}

#[inline]
pub(crate) fn sigmoid<F: Float>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

pub(crate) fn permute_data<F: Float>(x: &[F], shape: &[usize], axes: &[usize]) -> Vec<F> {
    let rank = shape.len();
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_stride: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let total = x.len();
    let mut out = Vec::with_capacity(total);
    if total == 0 {
        return out;
    }
    if rank == 0 {
        out.push(x[0]);
        return out;
    }
    // Innermost output axis handled as a strided run.
    let last = rank - 1;
    let (run, run_stride) = (out_shape[last], src_stride[last]);
    let mut idx = vec![0usize; rank];
    let mut base = 0usize;
    while out.len() < total {
        if run_stride == 1 {
            out.extend_from_slice(&x[base..base + run]);
        } else {
            out.extend((0..run).map(|j| x[base + j * run_stride]));
        }
        let mut ax = last;
        loop {
            if ax == 0 {
                break;
            }
            ax -= 1;
            idx[ax] += 1;
            base += src_stride[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            base -= src_stride[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let x = t(&[2, 2], &[0.3, -1.5, 2.0, 7.25]);
        let i = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(i.matmul(&x).unwrap().to_vec(), x.to_vec());
    }

    #[test]
    fn matmul_hand_contraction() {
        let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[2, 2], &[5.0, 6.0, 7.0, 8.0]);
        assert_eq!(a.matmul(&b).unwrap().to_vec(), vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_shapes() {
        let a = t(&[2, 3], &[0.0; 6]);
        let b = t(&[2, 3], &[0.0; 6]);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn batched_matmul_broadcasts() {
        // [2,1,2] @ [3,2,1] -> [2,3,1,1]... leading [2] vs [3] do not broadcast
        let a = t(&[2, 1, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[3, 2, 1], &[1.0, 1.0, 2.0, 0.0, 0.0, 1.0]);
        assert!(a.matmul(&b).is_err());
        let a = t(&[2, 1, 1, 2], &[1.0, 2.0, 3.0, 4.0]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 3, 1, 1]);
        assert_eq!(c.to_vec(), vec![3.0, 2.0, 2.0, 7.0, 6.0, 4.0]);
    }

    #[test]
    fn permute_roundtrip_and_values() {
        let x = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = x.transpose(0, 1).unwrap();
        assert_eq!(y.shape(), &[3, 2]);
        assert_eq!(y.to_vec(), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let v: Vec<f64> = (0..24).map(|i| i as f64).collect();
        let z = t(&[2, 3, 4], &v);
        let p = z.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        // p[k,i,j] = z[i,j,k]
        assert_eq!(p.values()[1 * 6 + 1 * 3 + 2], v[1 * 12 + 2 * 4 + 1]);
        let back = p.permute(&[1, 2, 0]).unwrap();
        assert_eq!(back.to_vec(), v);
    }

    #[test]
    fn reduce_mean_basics() {
        let ones = Tensor::<f64>::ones(&[3, 4, 2]);
        let m = ones.reduce_mean(1).unwrap();
        assert_eq!(m.shape(), &[3, 2]);
        assert!(m.values().iter().all(|&v| v == 1.0));
        let x = t(&[2], &[1.0, 3.0]);
        assert_eq!(x.reduce_mean(0).unwrap().to_vec(), vec![2.0]);
        assert!(matches!(x.reduce_mean(1), Err(Error::InvalidAxis { .. })));
    }

    #[test]
    fn reduce_mean_matches_loop_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..12).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let x = t(&[3, 4], &v);
        let over_rows = x.reduce_mean(0).unwrap().to_vec();
        let over_cols = x.reduce_mean(1).unwrap().to_vec();
        for j in 0..4 {
            let mut s = 0.0;
            for i in 0..3 {
                s += v[i * 4 + j];
            }
            assert!((over_rows[j] - s / 3.0).abs() < 1e-12);
        }
        for i in 0..3 {
            let mut s = 0.0;
            for j in 0..4 {
                s += v[i * 4 + j];
            }
            assert!((over_cols[i] - s / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn broadcast_expand_basics() {
        let s = Tensor::<f64>::scalar(2.0);
        let e = s.broadcast_expand(0, 3).unwrap();
        assert_eq!(e.shape(), &[3]);
        assert_eq!(e.to_vec(), vec![2.0; 3]);
        let x = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let one = x.broadcast_expand(1, 1).unwrap();
        assert_eq!(one.shape(), &[2, 1, 2]);
        assert_eq!(one.to_vec(), x.to_vec());
        assert!(x.broadcast_expand(0, 0).is_err());
    }

    #[test]
    fn reduce_then_expand_is_identity_on_constant_axis() {
        // [2,3,2] constant along axis 1
        let base = [1.5, -2.0, 0.25, 4.0];
        let mut v = Vec::new();
        for o in 0..2 {
            for _ in 0..3 {
                v.extend_from_slice(&base[o * 2..o * 2 + 2]);
            }
        }
        let x = t(&[2, 3, 2], &v);
        let y = x.reduce_mean(1).unwrap().broadcast_expand(1, 3).unwrap();
        assert_eq!(y.to_vec(), v);
    }

    #[test]
    fn broadcast_add_backward_sums() {
        let x = Tensor::<f64>::param(&[2, 3], vec![0.0; 6]).unwrap();
        let b = Tensor::<f64>::param(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let y = x.add(&b).unwrap();
        assert_eq!(y.to_vec(), vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        y.sum_all().backward().unwrap();
        assert_eq!(b.grad().unwrap(), vec![2.0; 3]);
        assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
    }
}
