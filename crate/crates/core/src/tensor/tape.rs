use alloc::collections::BTreeMap;
use alloc::format;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use super::param::{ParamId, ParamStore};
use super::{matmul_into, shape_err, Real, Tensor, TensorError};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bcast {
    Full,
    Row,
    Col,
    Scalar,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param,
    MatMul(usize, usize),
    Add(usize, usize, Bcast),
    Sub(usize, usize, Bcast),
    Mul(usize, usize, Bcast),
    Scale(usize, T),
    AddScalar(usize),
    Concat(Vec<usize>, usize),
    Transpose(usize),
    Reshape(usize),
    Sum(usize, Option<usize>),
    Mean(usize, Option<usize>),
    Sigmoid(usize),
    Relu(usize),
    Log(usize),
    Exp(usize),
    Pow(usize, T),
    Clamp(usize, T, T),
    NormRows(usize),
    Cosine(usize, usize),
    SoftmaxCe(usize, Rc<[usize]>),
    Gather(usize, Rc<[usize]>),
    ScatterAdd(usize, Rc<[usize]>),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Records primitive operations for one forward pass.
///
/// A tape is single-owner; build a new one per forward/backward step.
pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
    params: BTreeMap<ParamId, usize>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of one scalar output with respect to every recorded value.
pub struct Gradients<T> {
    tape: u64,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        if var.tape != self.tape {
            return None;
        }
        self.grads.get(var.index).and_then(Option::as_ref)
    }
}

fn bcast_kind(a: &[usize], b: &[usize], op: &'static str) -> Result<Bcast, TensorError> {
    match (a, b) {
        ([m, n], [bm, bn]) if m == bm && n == bn => Ok(Bcast::Full),
        ([_, n], [1, bn]) if n == bn => Ok(Bcast::Row),
        ([m, _], [bm, 1]) if m == bm => Ok(Bcast::Col),
        ([_, _], [1, 1]) => Ok(Bcast::Scalar),
        _ => Err(shape_err(op, format!("cannot broadcast {:?} into {:?}", b, a))),
    }
}

#[inline]
fn bidx(kind: Bcast, i: usize, j: usize, n: usize) -> usize {
    match kind {
        Bcast::Full => i * n + j,
        Bcast::Row => j,
        Bcast::Col => i,
        Bcast::Scalar => 0,
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed), nodes: Vec::new(), params: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> Result<usize, TensorError> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(TensorError::NotOnTape);
        }
        Ok(v.index)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var { tape: self.id, index: self.nodes.len() - 1 }
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        assert_eq!(v.tape, self.id, "variable from another tape");
        &self.nodes[v.index].value
    }

    pub fn scalar_value(&self, v: Var) -> T {
        self.value(v).data()[0]
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same leaf.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&i) = self.params.get(&id) {
            return Var { tape: self.id, index: i };
        }
        let v = self.push(store.value(id).clone(), Op::Param);
        self.params.insert(id, v.index);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let out = self.nodes[ia].value.matmul(&self.nodes[ib].value)?;
        Ok(self.push(out, Op::MatMul(ia, ib)))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        mk: impl Fn(usize, usize, Bcast) -> Op<T>,
    ) -> Result<Var, TensorError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let av = &self.nodes[ia].value;
        let bv = &self.nodes[ib].value;
        av.dims(name)?;
        bv.dims(name)?;
        let kind = bcast_kind(av.shape(), bv.shape(), name)?;
        let (m, n) = av.rows_cols();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                out.push(f(av.data[i * n + j], bv.data[bidx(kind, i, j, n)]));
            }
        }
        let value = Tensor { shape: av.shape.clone(), data: out };
        Ok(self.push(value, mk(ia, ib, kind)))
    }

    /// Elementwise `a + b`; `b` may broadcast as a row, column or scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var, TensorError> {
        let ia = self.idx(a)?;
        let out = self.nodes[ia].value.map(|x| x * c);
        Ok(self.push(out, Op::Scale(ia, c)))
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Result<Var, TensorError> {
        let ia = self.idx(a)?;
        let out = self.nodes[ia].value.map(|x| x + c);
        Ok(self.push(out, Op::AddScalar(ia)))
    }

    /// Concatenate along `axis` (0 stacks rows, 1 joins columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(shape_err("concat", "no inputs".into()));
        }
        let idxs = parts.iter().map(|&p| self.idx(p)).collect::<Result<Vec<_>, _>>()?;
        let dims = idxs
            .iter()
            .map(|&i| self.nodes[i].value.dims("concat"))
            .collect::<Result<Vec<_>, _>>()?;
        let out = match axis {
            0 => {
                let n = dims[0].1;
                if dims.iter().any(|d| d.1 != n) {
                    return Err(shape_err("concat", format!("column mismatch {:?}", dims)));
                }
                let m: usize = dims.iter().map(|d| d.0).sum();
                let mut data = Vec::with_capacity(m * n);
                for &i in &idxs {
                    data.extend_from_slice(&self.nodes[i].value.data);
                }
                Tensor { shape: vec![m, n], data }
            }
            1 => {
                let m = dims[0].0;
                if dims.iter().any(|d| d.0 != m) {
                    return Err(shape_err("concat", format!("row mismatch {:?}", dims)));
                }
                let n: usize = dims.iter().map(|d| d.1).sum();
                let mut data = Vec::with_capacity(m * n);
                for r in 0..m {
                    for (&i, d) in idxs.iter().zip(&dims) {
                        data.extend_from_slice(&self.nodes[i].value.data[r * d.1..(r + 1) * d.1]);
                    }
                }
                Tensor { shape: vec![m, n], data }
            }
            _ => return Err(shape_err("concat", format!("axis {axis} out of range"))),
        };
        Ok(self.push(out, Op::Concat(idxs, axis)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let ia = self.idx(a)?;
        let out = self.nodes[ia].value.transpose()?;
        Ok(self.push(out, Op::Transpose(ia)))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, TensorError> {
        let ia = self.idx(a)?;
        let v = &self.nodes[ia].value;
        if v.numel() != rows * cols {
            return Err(shape_err("reshape", format!("{:?} -> [{rows},{cols}]", v.shape())));
        }
        let out = Tensor { shape: vec![rows, cols], data: v.data.clone() };
        Ok(self.push(out, Op::Reshape(ia)))
    }

    fn reduce(&self, ia: usize, axis: Option<usize>, name: &'static str) -> Result<Tensor<T>, TensorError> {
        let v = &self.nodes[ia].value;
        let (m, n) = v.dims(name)?;
        Ok(match axis {
            None => {
                let mut s = T::zero();
                for &x in &v.data {
                    s = s + x;
                }
                Tensor::scalar(s)
            }
            Some(0) => {
                let mut out = vec![T::zero(); n];
                for i in 0..m {
                    for j in 0..n {
                        out[j] = out[j] + v.data[i * n + j];
                    }
                }
                Tensor { shape: vec![1, n], data: out }
            }
            Some(1) => {
                let mut out = vec![T::zero(); m];
                for i in 0..m {
                    let mut s = T::zero();
                    for j in 0..n {
                        s = s + v.data[i * n + j];
                    }
                    out[i] = s;
                }
                Tensor { shape: vec![m, 1], data: out }
            }
            Some(a) => return Err(shape_err(name, format!("axis {a} out of range"))),
        })
    }

    /// Sum over `axis`, or over everything when `None`.
    pub fn sum(&mut self, a: Var, axis: Option<usize>) -> Result<Var, TensorError> {
        let ia = self.idx(a)?;
        let out = self.reduce(ia, axis, "sum")?;
        Ok(self.push(out, Op::Sum(ia, axis)))
    }

    pub fn mean(&mut self, a: Var, axis: Option<usize>) -> Result<Var, TensorError> {
        let ia = self.idx(a)?;
        let (m, n) = self.nodes[ia].value.dims("mean")?;
        let count = match axis {
            None => m * n,
            Some(0) => m,
            _ => n,
        };
        if count == 0 {
            return Err(shape_err("mean", "mean over an empty axis".into()));
        }
        let inv = T::one() / T::from_f64(count as f64);
        let out = self.reduce(ia, axis, "mean")?.map(|x| x * inv);
        Ok(self.push(out, Op::Mean(ia, axis)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        let ia = self.idx(a)?;
        let out = self.nodes[ia].value.map(sigmoid);
        Ok(self.push(out, Op::Sigmoid(ia)))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        let ia = self.idx(a)?;
        let out = self.nodes[ia].value.map(|x| if x > T::zero() { x } else { T::zero() });
        Ok(self.push(out, Op::Relu(ia)))
    }

    pub fn log(&mut self, a: Var) -> Result<Var, TensorError> {
        let ia = self.idx(a)?;
        let v = &self.nodes[ia].value;
        if let Some(bad) = v.data.iter().find(|&&x| x <= T::zero()) {
            return Err(TensorError::Domain { op: "log", detail: format!("non-positive input {:?}", bad) });
        }
        let out = v.map(|x| x.ln());
        Ok(self.push(out, Op::Log(ia)))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, TensorError> {
        let ia = self.idx(a)?;
        let out = self.nodes[ia].value.map(|x| x.exp());
        Ok(self.push(out, Op::Exp(ia)))
    }

    /// Elementwise `a^p`; negative powers require positive inputs.
    pub fn pow(&mut self, a: Var, p: T) -> Result<Var, TensorError> {
        let ia = self.idx(a)?;
        let v = &self.nodes[ia].value;
        if p < T::zero() && v.data.iter().any(|&x| x <= T::zero()) {
            return Err(TensorError::Domain { op: "pow", detail: "negative power of non-positive value".into() });
        }
        let out = v.map(|x| x.powf(p));
        Ok(self.push(out, Op::Pow(ia, p)))
    }

    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Result<Var, TensorError> {
        let ia = self.idx(a)?;
        let out = self.nodes[ia].value.map(|x| x.max(lo).min(hi));
        Ok(self.push(out, Op::Clamp(ia, lo, hi)))
    }

    /// Euclidean norm of every row, `[m,n] -> [m,1]`.
    pub fn norm_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let ia = self.idx(a)?;
        let v = &self.nodes[ia].value;
        let (m, n) = v.dims("norm_rows")?;
        let out = (0..m)
            .map(|i| v.data[i * n..(i + 1) * n].iter().fold(T::zero(), |s, &x| s + x * x).sqrt())
            .collect();
        Ok(self.push(Tensor { shape: vec![m, 1], data: out }, Op::NormRows(ia)))
    }

    /// Pairwise cosine similarity between the rows of `a` `[m,d]` and `b` `[k,d]`, giving `[m,k]`.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (av, bv) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let (m, d) = av.dims("cosine")?;
        let (k, d2) = bv.dims("cosine")?;
        if d != d2 {
            return Err(shape_err("cosine", format!("row widths {d} and {d2}")));
        }
        let na = row_norms(av, m, d);
        let nb = row_norms(bv, k, d);
        if na.iter().chain(&nb).any(|&x| x == T::zero()) {
            return Err(TensorError::Domain { op: "cosine", detail: "zero-norm input vector".into() });
        }
        let mut out = vec![T::zero(); m * k];
        for i in 0..m {
            for j in 0..k {
                let dot = dot(&av.data[i * d..(i + 1) * d], &bv.data[j * d..(j + 1) * d]);
                out[i * k + j] = dot / (na[i] * nb[j]);
            }
        }
        Ok(self.push(Tensor { shape: vec![m, k], data: out }, Op::Cosine(ia, ib)))
    }

    /// Row-wise softmax cross-entropy against integer targets, `[m,c] -> [m,1]`.
    ///
    /// Uses a max-shifted log-sum-exp so large logits stay finite.
    pub fn softmax_ce(&mut self, logits: Var, targets: &[usize]) -> Result<Var, TensorError> {
        let ia = self.idx(logits)?;
        let v = &self.nodes[ia].value;
        let (m, c) = v.dims("softmax_ce")?;
        if targets.len() != m {
            return Err(shape_err("softmax_ce", format!("{} targets for {} rows", targets.len(), m)));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= c) {
            return Err(shape_err("softmax_ce", format!("target {t} out of {c} classes")));
        }
        let mut out = Vec::with_capacity(m);
        for (i, &t) in targets.iter().enumerate() {
            let row = &v.data[i * c..(i + 1) * c];
            out.push(log_sum_exp(row) - row[t]);
        }
        let targets: Rc<[usize]> = targets.into();
        Ok(self.push(Tensor { shape: vec![m, 1], data: out }, Op::SoftmaxCe(ia, targets)))
    }

    /// Select rows of `a` by index (repeats allowed).
    pub fn gather(&mut self, a: Var, rows: &[usize]) -> Result<Var, TensorError> {
        let ia = self.idx(a)?;
        let v = &self.nodes[ia].value;
        let (m, n) = v.dims("gather")?;
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if r >= m {
                return Err(shape_err("gather", format!("row {r} out of {m}")));
            }
            data.extend_from_slice(&v.data[r * n..(r + 1) * n]);
        }
        let rows: Rc<[usize]> = rows.into();
        Ok(self.push(Tensor { shape: vec![rows.len(), n], data }, Op::Gather(ia, rows)))
    }

    /// Sum rows of `a` into an `[out_rows, n]` tensor at positions `rows[i]`.
    pub fn scatter_add(&mut self, a: Var, rows: &[usize], out_rows: usize) -> Result<Var, TensorError> {
        let ia = self.idx(a)?;
        let v = &self.nodes[ia].value;
        let (m, n) = v.dims("scatter_add")?;
        if rows.len() != m {
            return Err(shape_err("scatter_add", format!("{} indices for {} rows", rows.len(), m)));
        }
        let mut data = vec![T::zero(); out_rows * n];
        for (i, &r) in rows.iter().enumerate() {
            if r >= out_rows {
                return Err(shape_err("scatter_add", format!("row {r} out of {out_rows}")));
            }
            for j in 0..n {
                data[r * n + j] = data[r * n + j] + v.data[i * n + j];
            }
        }
        let rows: Rc<[usize]> = rows.into();
        Ok(self.push(Tensor { shape: vec![out_rows, n], data }, Op::ScatterAdd(ia, rows)))
    }

    /// Reverse sweep from a single-element output.
    pub fn gradients(&self, output: Var) -> Result<Gradients<T>, TensorError> {
        let out = self.idx(output)?;
        if self.nodes[out].value.numel() != 1 {
            return Err(TensorError::NotScalar(self.nodes[out].value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=out).map(|_| None).collect();
        grads[out] = Some(Tensor { shape: self.nodes[out].value.shape.clone(), data: vec![T::one()] });
        for i in (0..=out).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { tape: self.id, grads })
    }

    /// Accumulate `d output / d param` into the gradients held by `store`.
    pub fn backward(&self, output: Var, store: &mut ParamStore<T>) -> Result<(), TensorError> {
        let grads = self.gradients(output)?;
        for (&pid, &node) in &self.params {
            if let Some(Some(g)) = grads.grads.get(node) {
                store.get_mut(pid).grad.add_assign(g);
            }
        }
        Ok(())
    }

    fn backprop(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<(), TensorError> {
        let node = &self.nodes[i];
        let val = |j: usize| &self.nodes[j].value;
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (m, k) = val(*a).rows_cols();
                let (_, n) = val(*b).rows_cols();
                // da = g b^T
                let bt = val(*b).transpose()?;
                let mut da = vec![T::zero(); m * k];
                matmul_into(&g.data, &bt.data, &mut da, m, n, k);
                accumulate(grads, *a, Tensor { shape: vec![m, k], data: da });
                // db = a^T g
                let at = val(*a).transpose()?;
                let mut db = vec![T::zero(); k * n];
                matmul_into(&at.data, &g.data, &mut db, k, m, n);
                accumulate(grads, *b, Tensor { shape: vec![k, n], data: db });
            }
            Op::Add(a, b, kind) | Op::Sub(a, b, kind) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -T::one() } else { T::one() };
                accumulate(grads, *a, g.clone());
                let gb = reduce_bcast(g, *kind, val(*b).shape(), |gv, _, _| gv * sign);
                accumulate(grads, *b, gb);
            }
            Op::Mul(a, b, kind) => {
                let (m, n) = g.rows_cols();
                let (av, bv) = (val(*a), val(*b));
                let mut ga = Vec::with_capacity(m * n);
                for ii in 0..m {
                    for jj in 0..n {
                        ga.push(g.data[ii * n + jj] * bv.data[bidx(*kind, ii, jj, n)]);
                    }
                }
                accumulate(grads, *a, Tensor { shape: g.shape.clone(), data: ga });
                let gb = reduce_bcast(g, *kind, bv.shape(), |gv, ii, jj| gv * av.data[ii * n + jj]);
                accumulate(grads, *b, gb);
            }
            Op::Scale(a, c) => accumulate(grads, *a, g.map(|x| x * *c)),
            Op::AddScalar(a) => accumulate(grads, *a, g.clone()),
            Op::Concat(parts, axis) => {
                let (m, n) = g.rows_cols();
                let mut offset = 0;
                for &p in parts {
                    let (pm, pn) = val(p).rows_cols();
                    let data = if *axis == 0 {
                        g.data[offset * n..(offset + pm) * n].to_vec()
                    } else {
                        let mut d = Vec::with_capacity(pm * pn);
                        for r in 0..m {
                            d.extend_from_slice(&g.data[r * n + offset..r * n + offset + pn]);
                        }
                        d
                    };
                    offset += if *axis == 0 { pm } else { pn };
                    accumulate(grads, p, Tensor { shape: vec![pm, pn], data });
                }
            }
            Op::Transpose(a) => accumulate(grads, *a, g.transpose()?),
            Op::Reshape(a) => {
                accumulate(grads, *a, Tensor { shape: val(*a).shape.clone(), data: g.data.clone() })
            }
            Op::Sum(a, axis) | Op::Mean(a, axis) => {
                let (m, n) = val(*a).rows_cols();
                let scale = if matches!(node.op, Op::Mean(..)) {
                    let count = match axis {
                        None => m * n,
                        Some(0) => m,
                        _ => n,
                    };
                    T::one() / T::from_f64(count as f64)
                } else {
                    T::one()
                };
                let mut data = Vec::with_capacity(m * n);
                for ii in 0..m {
                    for jj in 0..n {
                        let gv = match axis {
                            None => g.data[0],
                            Some(0) => g.data[jj],
                            _ => g.data[ii],
                        };
                        data.push(gv * scale);
                    }
                }
                accumulate(grads, *a, Tensor { shape: vec![m, n], data });
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                accumulate(grads, *a, zip_map(g, y, |gv, s| gv * s * (T::one() - s)));
            }
            Op::Relu(a) => {
                accumulate(grads, *a, zip_map(g, val(*a), |gv, x| if x > T::zero() { gv } else { T::zero() }));
            }
            Op::Log(a) => accumulate(grads, *a, zip_map(g, val(*a), |gv, x| gv / x)),
            Op::Exp(a) => accumulate(grads, *a, zip_map(g, &node.value, |gv, y| gv * y)),
            Op::Pow(a, p) => {
                let p = *p;
                accumulate(grads, *a, zip_map(g, val(*a), |gv, x| gv * p * x.powf(p - T::one())));
            }
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                accumulate(
                    grads,
                    *a,
                    zip_map(g, val(*a), |gv, x| if x >= lo && x <= hi { gv } else { T::zero() }),
                );
            }
            Op::NormRows(a) => {
                let av = val(*a);
                let (m, n) = av.rows_cols();
                let mut data = Vec::with_capacity(m * n);
                for ii in 0..m {
                    let norm = node.value.data[ii];
                    for jj in 0..n {
                        let x = av.data[ii * n + jj];
                        data.push(if norm > T::zero() { g.data[ii] * x / norm } else { T::zero() });
                    }
                }
                accumulate(grads, *a, Tensor { shape: av.shape.clone(), data });
            }
            Op::Cosine(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, d) = av.rows_cols();
                let (k, _) = bv.rows_cols();
                let na = row_norms(av, m, d);
                let nb = row_norms(bv, k, d);
                let mut ga = vec![T::zero(); m * d];
                let mut gb = vec![T::zero(); k * d];
                for ii in 0..m {
                    let arow = &av.data[ii * d..(ii + 1) * d];
                    for jj in 0..k {
                        let gv = g.data[ii * k + jj];
                        if gv == T::zero() {
                            continue;
                        }
                        let brow = &bv.data[jj * d..(jj + 1) * d];
                        let s = node.value.data[ii * k + jj];
                        let inv = T::one() / (na[ii] * nb[jj]);
                        let sa = s / (na[ii] * na[ii]);
                        let sb = s / (nb[jj] * nb[jj]);
                        for t in 0..d {
                            ga[ii * d + t] = ga[ii * d + t] + gv * (brow[t] * inv - arow[t] * sa);
                            gb[jj * d + t] = gb[jj * d + t] + gv * (arow[t] * inv - brow[t] * sb);
                        }
                    }
                }
                accumulate(grads, *a, Tensor { shape: av.shape.clone(), data: ga });
                accumulate(grads, *b, Tensor { shape: bv.shape.clone(), data: gb });
            }
            Op::SoftmaxCe(a, targets) => {
                let av = val(*a);
                let (m, c) = av.rows_cols();
                let mut data = Vec::with_capacity(m * c);
                for (ii, &t) in targets.iter().enumerate() {
                    let row = &av.data[ii * c..(ii + 1) * c];
                    let lse = log_sum_exp(row);
                    for (jj, &z) in row.iter().enumerate() {
                        let p = (z - lse).exp();
                        let onehot = if jj == t { T::one() } else { T::zero() };
                        data.push(g.data[ii] * (p - onehot));
                    }
                }
                accumulate(grads, *a, Tensor { shape: av.shape.clone(), data });
            }
            Op::Gather(a, rows) => {
                let (m, n) = val(*a).rows_cols();
                let mut data = vec![T::zero(); m * n];
                for (ii, &r) in rows.iter().enumerate() {
                    for jj in 0..n {
                        data[r * n + jj] = data[r * n + jj] + g.data[ii * n + jj];
                    }
                }
                accumulate(grads, *a, Tensor { shape: vec![m, n], data });
            }
            Op::ScatterAdd(a, rows) => {
                let (_, n) = g.rows_cols();
                let mut data = Vec::with_capacity(rows.len() * n);
                for &r in rows.iter() {
                    data.extend_from_slice(&g.data[r * n..(r + 1) * n]);
                }
                accumulate(grads, *a, Tensor { shape: val(*a).shape.clone(), data });
            }
        }
        Ok(())
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], i: usize, g: Tensor<T>) {
    match &mut grads[i] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map<T: Real>(g: &Tensor<T>, x: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    Tensor { shape: g.shape.clone(), data: g.data.iter().zip(&x.data).map(|(&a, &b)| f(a, b)).collect() }
}

/// Fold an output-shaped gradient back onto a broadcast right operand.
fn reduce_bcast<T: Real>(
    g: &Tensor<T>,
    kind: Bcast,
    shape: &[usize],
    f: impl Fn(T, usize, usize) -> T,
) -> Tensor<T> {
    let (m, n) = g.rows_cols();
    let len: usize = shape.iter().product();
    let mut data = vec![T::zero(); len];
    for i in 0..m {
        for j in 0..n {
            let k = bidx(kind, i, j, n);
            data[k] = data[k] + f(g.data[i * n + j], i, j);
        }
    }
    Tensor { shape: shape.to_vec(), data }
}

fn row_norms<T: Real>(t: &Tensor<T>, m: usize, d: usize) -> Vec<T> {
    (0..m).map(|i| t.data[i * d..(i + 1) * d].iter().fold(T::zero(), |s, &x| s + x * x).sqrt()).collect()
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

fn log_sum_exp<T: Real>(row: &[T]) -> T {
    let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let s = row.iter().fold(T::zero(), |s, &x| s + (x - max).exp());
    max + s.ln()
}
