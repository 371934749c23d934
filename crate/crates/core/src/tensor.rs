//! Small dense tensors of rank 0 to 5 with every axis of the same dimension.

use std::ops::{Index, IndexMut};

use crate::error::GeomError;
use crate::jet::Jet;
use crate::scalar::Scalar;

/// Dense row-major tensor with `rank` axes of length `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f64> {
    n: usize,
    rank: usize,
    data: Vec<T>,
}

fn for_each_index(n: usize, rank: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; rank];
    let total = n.pow(rank as u32);
    for _ in 0..total {
        f(&idx);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            if idx[ax] < n {
                break;
            }
            idx[ax] = 0;
        }
    }
}

impl<T: Clone> Tensor<T> {
    pub fn from_fn(n: usize, rank: usize, mut f: impl FnMut(&[usize]) -> T) -> Self {
        let mut data = Vec::with_capacity(n.pow(rank as u32));
        for_each_index(n, rank, |i| data.push(f(i)));
        Tensor { n, rank, data }
    }

    pub fn from_vec(n: usize, rank: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n.pow(rank as u32), "tensor data length");
        Tensor { n, rank, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank);
        idx.iter().fold(0, |o, &i| o * self.n + i)
    }

    pub fn at(&self, idx: &[usize]) -> &T {
        &self.data[self.offset(idx)]
    }

    pub fn at_mut(&mut self, idx: &[usize]) -> &mut T {
        let o = self.offset(idx);
        &mut self.data[o]
    }

    pub fn map<U: Clone>(&self, f: impl FnMut(&T) -> U) -> Tensor<U> {
        Tensor {
            n: self.n,
            rank: self.rank,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Reorders axes: `out[i_0..] = self[i_perm[0]..]` where axis `k` of the
    /// result is axis `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.rank);
        let mut src = vec![0usize; self.rank];
        Tensor::from_fn(self.n, self.rank, |idx| {
            for (k, &p) in perm.iter().enumerate() {
                src[p] = idx[k];
            }
            self.at(&src).clone()
        })
    }
}

macro_rules! fixed_index {
    ($($r:literal),*) => {$(
        impl<T: Clone> Index<[usize; $r]> for Tensor<T> {
            type Output = T;
            fn index(&self, idx: [usize; $r]) -> &T {
                self.at(&idx)
            }
        }
        impl<T: Clone> IndexMut<[usize; $r]> for Tensor<T> {
            fn index_mut(&mut self, idx: [usize; $r]) -> &mut T {
                self.at_mut(&idx)
            }
        }
    )*};
}
fixed_index!(0, 1, 2, 3, 4, 5);

impl Tensor<f64> {
    pub fn zeros(n: usize, rank: usize) -> Self {
        Tensor::from_vec(n, rank, vec![0.0; n.pow(rank as u32)])
    }

    pub fn identity(n: usize) -> Self {
        Tensor::from_fn(n, 2, |i| if i[0] == i[1] { 1.0 } else { 0.0 })
    }

    pub fn vector(v: &[f64]) -> Self {
        Tensor::from_vec(v.len(), 1, v.to_vec())
    }

    pub fn scalar(n: usize, v: f64) -> Self {
        Tensor::from_vec(n, 0, vec![v])
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn add(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a - b)
    }

    pub fn zip(&self, o: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!((self.n, self.rank), (o.n, o.rank), "tensor shape mismatch");
        Tensor {
            n: self.n,
            rank: self.rank,
            data: self.data.iter().zip(&o.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    /// Maximum absolute entry of `self - o`.
    pub fn max_diff(&self, o: &Self) -> f64 {
        self.sub(o).max_abs()
    }

    /// Average over the two orderings of axes `a` and `b`.
    pub fn symmetrize(&self, a: usize, b: usize) -> Self {
        self.add(&self.swap_axes(a, b)).scale(0.5)
    }

    pub fn antisymmetrize(&self, a: usize, b: usize) -> Self {
        self.sub(&self.swap_axes(a, b)).scale(0.5)
    }

    pub fn swap_axes(&self, a: usize, b: usize) -> Self {
        let mut perm: Vec<usize> = (0..self.rank).collect();
        perm.swap(a, b);
        self.permute(&perm)
    }

    /// Trace over axes `a` and `b`.
    pub fn trace(&self, a: usize, b: usize) -> Self {
        assert!(a != b && a < self.rank && b < self.rank);
        let mut full = vec![0usize; self.rank];
        Tensor::from_fn(self.n, self.rank - 2, |idx| {
            let mut it = idx.iter();
            for (ax, slot) in full.iter_mut().enumerate() {
                if ax != a && ax != b {
                    *slot = *it.next().unwrap();
                }
            }
            (0..self.n)
                .map(|k| {
                    full[a] = k;
                    full[b] = k;
                    self.at(&full)
                })
                .sum()
        })
    }

    pub fn as_matrix_rows(&self) -> Vec<Vec<f64>> {
        assert_eq!(self.rank, 2);
        self.data.chunks(self.n).map(|r| r.to_vec()).collect()
    }
}

impl Tensor<Jet> {
    /// Plain values at the expansion point.
    pub fn val(&self) -> Tensor<f64> {
        self.map(|j| j.value())
    }

    /// Partial derivative of every entry with respect to jet variable `var`.
    pub fn d(&self, var: usize) -> Tensor<Jet> {
        self.map(|j| j.d(var))
    }

    /// Derivatives with respect to the variables `first..first+n`, appended as
    /// a new last axis.
    pub fn grad(&self, first: usize) -> Tensor<Jet> {
        let parts: Vec<Tensor<Jet>> = (0..self.n).map(|k| self.d(first + k)).collect();
        let r = self.rank;
        Tensor::from_fn(self.n, r + 1, |idx| parts[idx[r]].at(&idx[..r]).clone())
    }

    pub fn truncate(&self, order: usize) -> Tensor<Jet> {
        self.map(|j| j.truncate(order))
    }

    pub fn order(&self) -> usize {
        self.data.iter().map(|j| j.order()).min().unwrap_or(0)
    }
}

impl<S: Scalar> Tensor<S> {
    pub fn plus(&self, o: &Self) -> Self {
        assert_eq!((self.n, self.rank), (o.n, o.rank), "tensor shape mismatch");
        Tensor {
            n: self.n,
            rank: self.rank,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a.clone() + b).collect(),
        }
    }

    pub fn minus(&self, o: &Self) -> Self {
        assert_eq!((self.n, self.rank), (o.n, o.rank), "tensor shape mismatch");
        Tensor {
            n: self.n,
            rank: self.rank,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a.clone() - b).collect(),
        }
    }

    pub fn times(&self, s: &S) -> Self {
        self.map(|v| v.clone() * s)
    }

    pub fn times_f(&self, s: f64) -> Self {
        self.map(|v| v.clone() * s)
    }

    /// Entry values as plain reals.
    pub fn re(&self) -> Tensor<f64> {
        self.map(|v| v.re())
    }
}

/// Index contraction in Einstein notation, e.g. `einsum("ij,jk->ik", &[&a, &b])`.
///
/// Every axis has the tensors' common dimension. Letters absent from the output
/// are summed. Cost is `n^(distinct letters)`, intended for small tensors.
pub fn einsum<S: Scalar>(spec: &str, ops: &[&Tensor<S>]) -> Tensor<S> {
    let (lhs, out) = spec.split_once("->").expect("einsum spec needs '->'");
    let inputs: Vec<&str> = lhs.split(',').collect();
    assert_eq!(inputs.len(), ops.len(), "einsum operand count");
    let n = ops[0].n;
    let mut letters: Vec<char> = out.chars().collect();
    for s in &inputs {
        for c in s.chars() {
            if !letters.contains(&c) {
                letters.push(c);
            }
        }
    }
    let pos = |c: char| letters.iter().position(|&l| l == c).unwrap();
    let op_axes: Vec<Vec<usize>> = inputs
        .iter()
        .zip(ops)
        .map(|(s, t)| {
            assert_eq!(s.len(), t.rank, "einsum operand rank for '{s}'");
            assert_eq!(t.n, n, "einsum dimension mismatch");
            s.chars().map(pos).collect()
        })
        .collect();
    let out_rank = out.chars().count();
    let nfree = letters.len() - out_rank;
    let zero = ops[0].data[0].cst(0.0);
    let mut idx = vec![0usize; letters.len()];
    Tensor::from_fn(n, out_rank, |o| {
        idx[..out_rank].copy_from_slice(o);
        for v in idx[out_rank..].iter_mut() {
            *v = 0;
        }
        let mut acc = zero.clone();
        for _ in 0..n.pow(nfree as u32) {
            let mut prod: Option<S> = None;
            for (t, axes) in ops.iter().zip(&op_axes) {
                let off = axes.iter().fold(0, |a, &k| a * n + idx[k]);
                let v = &t.data[off];
                prod = Some(match prod {
                    None => v.clone(),
                    Some(p) => p * v,
                });
            }
            acc = acc + prod.unwrap();
            for ax in (out_rank..letters.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < n {
                    break;
                }
                idx[ax] = 0;
            }
        }
        acc
    })
}

/// Outer product `a ⊗ b`.
pub fn outer<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let nb = b.data.len();
    Tensor::from_vec(
        a.n,
        a.rank + b.rank,
        (0..a.data.len() * nb)
            .map(|k| a.data[k / nb].clone() * &b.data[k % nb])
            .collect(),
    )
}

/// Default bound on the ∞-norm condition number accepted by [`invert`].
pub const MAX_CONDITION: f64 = 1e12;

/// Inverse of a rank-2 tensor by Gauss–Jordan elimination with partial pivoting
/// on the plain values.
pub fn invert<S: Scalar>(m: &Tensor<S>) -> Result<Tensor<S>, GeomError> {
    invert_with_bound(m, MAX_CONDITION)
}

pub fn invert_with_bound<S: Scalar>(m: &Tensor<S>, max_cond: f64) -> Result<Tensor<S>, GeomError> {
    assert_eq!(m.rank, 2, "invert needs a rank-2 tensor");
    let n = m.n;
    let mut a: Vec<Vec<S>> = m.data.chunks(n).map(|r| r.to_vec()).collect();
    let one = m.data[0].cst(1.0);
    let zero = m.data[0].cst(0.0);
    let mut inv: Vec<Vec<S>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { one.clone() } else { zero.clone() }).collect())
        .collect();
    let norm_a = (0..n)
        .map(|i| a[i].iter().map(|v| v.re().abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if !norm_a.is_finite() {
        return Err(GeomError::NonFinite("matrix to invert"));
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].re().abs().total_cmp(&a[j][col].re().abs()))
            .unwrap();
        if a[piv][col].re().abs() <= f64::MIN_POSITIVE * 1e10 * norm_a.max(1.0) {
            return Err(GeomError::Singular { condition: f64::INFINITY });
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        let p = a[col][col].recip();
        for v in a[col].iter_mut() {
            *v = v.clone() * &p;
        }
        for v in inv[col].iter_mut() {
            *v = v.clone() * &p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r][col].clone();
            for c in 0..n {
                let t = f.clone() * &a[col][c];
                a[r][c] = a[r][c].clone() - t;
                let t = f.clone() * &inv[col][c];
                inv[r][c] = inv[r][c].clone() - t;
            }
        }
    }
    let norm_inv = (0..n)
        .map(|i| inv[i].iter().map(|v| v.re().abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let cond = norm_a * norm_inv;
    if !cond.is_finite() || cond > max_cond {
        return Err(GeomError::Singular { condition: cond });
    }
    Ok(Tensor::from_vec(n, 2, inv.into_iter().flatten().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_inverts_to_identity() {
        let i = Tensor::identity(3);
        assert_eq!(invert(&i).unwrap(), i);
    }

    #[test]
    fn diagonal_inverse() {
        let d = Tensor::from_fn(3, 2, |i| if i[0] == i[1] { [2.0, 4.0, 5.0][i[0]] } else { 0.0 });
        let inv = invert(&d).unwrap();
        let want = Tensor::from_fn(3, 2, |i| if i[0] == i[1] { [0.5, 0.25, 0.2][i[0]] } else { 0.0 });
        assert!(inv.max_diff(&want) < 1e-15);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = Tensor::from_vec(2, 2, vec![1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(invert(&m), Err(GeomError::Singular { .. })));
        let near = Tensor::from_vec(2, 2, vec![1.0, 2.0, 2.0, 4.0 + 1e-14]);
        assert!(matches!(invert(&near), Err(GeomError::Singular { .. })));
    }

    #[test]
    fn einsum_matrix_product_and_trace() {
        let a = Tensor::from_fn(3, 2, |i| (i[0] * 3 + i[1]) as f64);
        let id = Tensor::identity(3);
        assert_eq!(einsum("ij,jk->ik", &[&a, &id]), a);
        let tr = einsum("ij,ij->", &[&a, &id]);
        assert_eq!(tr[[]], 0.0 + 4.0 + 8.0);
        assert_eq!(a.trace(0, 1)[[]], 12.0);
    }

    #[test]
    fn symmetrize_is_symmetric() {
        let t = Tensor::from_fn(3, 3, |i| (i[0] as f64).sin() + 2.0 * i[1] as f64 - i[2] as f64 * 0.3);
        let s = t.symmetrize(0, 2);
        assert!(s.max_diff(&s.swap_axes(0, 2)) < 1e-12);
        let a = t.antisymmetrize(1, 2);
        assert!(a.add(&a.swap_axes(1, 2)).max_abs() < 1e-12);
    }

    #[test]
    fn permute_moves_axes() {
        let t = Tensor::from_fn(2, 3, |i| (i[0] * 100 + i[1] * 10 + i[2]) as f64);
        let p = t.permute(&[2, 0, 1]);
        assert_eq!(p[[1, 0, 1]], t[[0, 1, 1]]);
    }
}
