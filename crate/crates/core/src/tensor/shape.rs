use crate::error::{Error, Result};

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Numpy-style broadcast of two shapes, aligned at the trailing axis.
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// How an operand of shape `src` maps onto a broadcast output of shape `out`.
pub(crate) enum BroadcastMap {
    Same,
    Scalar,
    /// `src` equals the trailing `period` elements of `out` (modulo leading ones).
    Suffix(usize),
    General(Vec<usize>),
}

impl BroadcastMap {
    pub(crate) fn new(src: &[usize], out: &[usize]) -> Self {
        let n = numel(src);
        if src == out {
            return Self::Same;
        }
        if n == 1 {
            return Self::Scalar;
        }
        let trimmed: Vec<usize> = src.iter().copied().skip_while(|&d| d == 1).collect();
        if trimmed.len() <= out.len() && out[out.len() - trimmed.len()..] == trimmed[..] {
            return Self::Suffix(n);
        }
        Self::General(index_map(src, out))
    }

    #[inline]
    pub(crate) fn index(&self, i: usize) -> usize {
        match self {
            Self::Same => i,
            Self::Scalar => 0,
            Self::Suffix(p) => i % p,
            Self::General(m) => m[i],
        }
    }
}

/// For every flat output index, the flat index of the broadcast source element.
fn index_map(src: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let offset = rank - src.len();
    let src_strides = strides(src);
    let mut eff = vec![0usize; rank];
    for i in 0..src.len() {
        eff[offset + i] = if src[i] == 1 { 0 } else { src_strides[i] };
    }
    let total = numel(out);
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    let mut cur = 0usize;
    for _ in 0..total {
        map.push(cur);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            cur += eff[ax];
            if idx[ax] < out[ax] {
                break;
            }
            cur -= eff[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    map
}

/// Sums a gradient of the broadcast output shape back onto the source shape.
pub(crate) fn sum_to_shape<F: crate::tensor::Float>(grad: &[F], out: &[usize], src: &[usize]) -> Vec<F> {
    let map = BroadcastMap::new(src, out);
    match map {
        BroadcastMap::Same => grad.to_vec(),
        _ => {
            let mut acc = vec![F::zero(); numel(src)];
            for (i, &g) in grad.iter().enumerate() {
                acc[map.index(i)] += g;
            }
            acc
        }
    }
}

/// Splits `shape` around `axis` into (outer, extent, inner).
pub(crate) fn split_at_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::InvalidAxis {
            op,
            axis,
            rank: shape.len(),
        });
    }
    Ok((numel(&shape[..axis]), shape[axis], numel(&shape[axis + 1..])))
}
