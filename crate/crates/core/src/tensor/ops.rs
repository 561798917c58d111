//! Elementwise ops, reductions, matmul, and small structural ops.

use super::{Graph, TensorId};
use crate::error::{Error, Result};
use crate::scalar::Real;

impl<T: Real> Graph<T> {
    fn same_shape(&self, a: TensorId, b: TensorId, op: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension(format!(
                "{op}: shape {:?} vs {:?} (no broadcasting)",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape(a, b, "add")?;
        let out: Vec<T> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| *x + *y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push_op(
            shape,
            out,
            vec![a, b],
            Box::new(|g| vec![g.to_vec(), g.to_vec()]),
        ))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape(a, b, "sub")?;
        let out: Vec<T> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| *x - *y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push_op(
            shape,
            out,
            vec![a, b],
            Box::new(|g| vec![g.to_vec(), g.iter().map(|v| -*v).collect()]),
        ))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape(a, b, "mul")?;
        let av = self.value_arc(a);
        let bv = self.value_arc(b);
        let out: Vec<T> = av.iter().zip(bv.iter()).map(|(x, y)| *x * *y).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push_op(
            shape,
            out,
            vec![a, b],
            Box::new(move |g| {
                vec![
                    g.iter().zip(bv.iter()).map(|(gi, y)| *gi * *y).collect(),
                    g.iter().zip(av.iter()).map(|(gi, x)| *gi * *x).collect(),
                ]
            }),
        ))
    }

    pub fn scale(&mut self, x: TensorId, c: T) -> TensorId {
        let out: Vec<T> = self.value(x).iter().map(|v| *v * c).collect();
        let shape = self.shape(x).to_vec();
        self.push_op(
            shape,
            out,
            vec![x],
            Box::new(move |g| vec![g.iter().map(|v| *v * c).collect()]),
        )
    }

    pub fn relu(&mut self, x: TensorId) -> TensorId {
        let xv = self.value_arc(x);
        let out: Vec<T> = xv.iter().map(|v| v.max(T::zero())).collect();
        let shape = self.shape(x).to_vec();
        self.push_op(
            shape,
            out,
            vec![x],
            Box::new(move |g| {
                vec![g
                    .iter()
                    .zip(xv.iter())
                    .map(|(gi, v)| if *v > T::zero() { *gi } else { T::zero() })
                    .collect()]
            }),
        )
    }

    /// Sum over the given axes; `None` reduces to a scalar.
    pub fn sum(&mut self, x: TensorId, axes: Option<&[usize]>) -> Result<TensorId> {
        self.reduce(x, axes, false)
    }

    /// Mean over the given axes; `None` reduces to a scalar.
    pub fn mean(&mut self, x: TensorId, axes: Option<&[usize]>) -> Result<TensorId> {
        self.reduce(x, axes, true)
    }

    pub fn sum_all(&mut self, x: TensorId) -> TensorId {
        self.reduce(x, None, false).expect("full reduce is valid")
    }

    pub fn mean_all(&mut self, x: TensorId) -> TensorId {
        self.reduce(x, None, true).expect("full reduce is valid")
    }

    fn reduce(&mut self, x: TensorId, axes: Option<&[usize]>, mean: bool) -> Result<TensorId> {
        let in_shape = self.shape(x).to_vec();
        let rank = in_shape.len();
        let mut reduced = vec![false; rank];
        match axes {
            None => reduced.iter_mut().for_each(|r| *r = true),
            Some(axes) => {
                for &ax in axes {
                    if ax >= rank {
                        return Err(Error::Dimension(format!(
                            "reduce axis {ax} out of range for rank {rank}"
                        )));
                    }
                    reduced[ax] = true;
                }
            }
        }
        let out_shape: Vec<usize> = in_shape
            .iter()
            .zip(&reduced)
            .filter(|(_, r)| !**r)
            .map(|(d, _)| *d)
            .collect();
        let count: usize = in_shape
            .iter()
            .zip(&reduced)
            .filter(|(_, r)| **r)
            .map(|(d, _)| *d)
            .product();
        let out_numel: usize = out_shape.iter().product();

        // map flat input index -> flat output index
        let in_strides = strides(&in_shape);
        let kept_axes: Vec<usize> = (0..rank).filter(|i| !reduced[*i]).collect();
        let out_strides = strides(&out_shape);
        let index_map = move |flat: usize| -> usize {
            let mut out = 0;
            for (k, &ax) in kept_axes.iter().enumerate() {
                let coord = (flat / in_strides[ax]) % in_shape[ax];
                out += coord * out_strides[k];
            }
            out
        };

        let xv = self.value(x);
        let mut out = vec![T::zero(); out_numel];
        for (i, v) in xv.iter().enumerate() {
            out[index_map(i)] += *v;
        }
        let inv = T::of(1.0 / count as f64);
        if mean {
            for v in &mut out {
                *v *= inv;
            }
        }
        let in_numel = xv.len();
        Ok(self.push_op(
            out_shape,
            out,
            vec![x],
            Box::new(move |g| {
                let mut gi = vec![T::zero(); in_numel];
                for (i, slot) in gi.iter_mut().enumerate() {
                    let v = g[index_map(i)];
                    *slot = if mean { v * inv } else { v };
                }
                vec![gi]
            }),
        ))
    }

    /// Matrix product of `[M,K] x [K,N]`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension(format!(
                "matmul: incompatible shapes {sa:?} x {sb:?}"
            )));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let av = self.value_arc(a);
        let bv = self.value_arc(b);
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for p in 0..k {
                let x = av[i * k + p];
                let brow = &bv[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, bval) in orow.iter_mut().zip(brow) {
                    *o += x * *bval;
                }
            }
        }
        Ok(self.push_op(
            vec![m, n],
            out,
            vec![a, b],
            Box::new(move |g| {
                // dA = G B^T; dB = A^T G
                let mut da = vec![T::zero(); m * k];
                let mut db = vec![T::zero(); k * n];
                for i in 0..m {
                    for p in 0..k {
                        let mut acc = T::zero();
                        let grow = &g[i * n..(i + 1) * n];
                        let brow = &bv[p * n..(p + 1) * n];
                        for (gv, bvl) in grow.iter().zip(brow) {
                            acc += *gv * *bvl;
                        }
                        da[i * k + p] = acc;
                        let x = av[i * k + p];
                        let dbrow = &mut db[p * n..(p + 1) * n];
                        for (d, gv) in dbrow.iter_mut().zip(grow) {
                            *d += x * *gv;
                        }
                    }
                }
                vec![da, db]
            }),
        ))
    }

    /// Add a `[N]` bias row-wise to a `[B,N]` matrix (linear-layer bias).
    pub fn add_row_bias(&mut self, x: TensorId, bias: TensorId) -> Result<TensorId> {
        let (sx, sb) = (self.shape(x).to_vec(), self.shape(bias).to_vec());
        if sx.len() != 2 || sb.len() != 1 || sx[1] != sb[0] {
            return Err(Error::Dimension(format!(
                "add_row_bias: {sx:?} with bias {sb:?}"
            )));
        }
        let (rows, cols) = (sx[0], sx[1]);
        let bv = self.value(bias);
        let out: Vec<T> = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, v)| *v + bv[i % cols])
            .collect();
        Ok(self.push_op(
            vec![rows, cols],
            out,
            vec![x, bias],
            Box::new(move |g| {
                let mut gb = vec![T::zero(); cols];
                for (i, v) in g.iter().enumerate() {
                    gb[i % cols] += *v;
                }
                vec![g.to_vec(), gb]
            }),
        ))
    }

    /// Mean over the spatial dims of `[N,C,H,W]`, yielding `[N,C]`.
    pub fn global_avg_pool(&mut self, x: TensorId) -> Result<TensorId> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(Error::Dimension(format!(
                "global_avg_pool expects [N,C,H,W], got {s:?}"
            )));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let hw = h * w;
        let inv = T::of(1.0 / hw as f64);
        let xv = self.value(x);
        let mut out = vec![T::zero(); n * c];
        for (i, slot) in out.iter_mut().enumerate() {
            let base = i * hw;
            let mut acc = T::zero();
            for v in &xv[base..base + hw] {
                acc += *v;
            }
            *slot = acc * inv;
        }
        Ok(self.push_op(
            vec![n, c],
            out,
            vec![x],
            Box::new(move |g| {
                let mut gi = vec![T::zero(); n * c * hw];
                for (i, gv) in g.iter().enumerate() {
                    let scaled = *gv * inv;
                    for slot in &mut gi[i * hw..(i + 1) * hw] {
                        *slot = scaled;
                    }
                }
                vec![gi]
            }),
        ))
    }

    /// Reinterpret the flat data under a new shape (same element count).
    pub fn reshape(&mut self, x: TensorId, new_shape: Vec<usize>) -> Result<TensorId> {
        if new_shape.iter().product::<usize>() != self.numel(x) {
            return Err(Error::Dimension(format!(
                "reshape: {:?} -> {new_shape:?} changes element count",
                self.shape(x)
            )));
        }
        let data = self.value(x).to_vec();
        Ok(self.push_op(
            new_shape,
            data,
            vec![x],
            Box::new(|g| vec![g.to_vec()]),
        ))
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}
