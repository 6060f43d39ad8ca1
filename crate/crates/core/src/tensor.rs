//! Dense `f64` tensors with a dynamic reverse-mode tape and an Adam
//! optimizer.
//!
//! Every forward op records its inputs when any of them requires a gradient;
//! [`Tensor::backward`] walks the recorded graph in reverse topological
//! order. Leaf gradients accumulate across backward calls until
//! [`Tensor::zero_grad`]. Broadcasting is limited to a right operand whose
//! shape is a suffix of the left operand's shape (e.g. a bias row added to
//! every row of a matrix).

use std::cell::{Ref, RefCell};
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone)]
pub struct Tensor(Rc<Node>);

struct Node {
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: bool,
    op: Op,
    parents: Vec<Tensor>,
}

enum Op {
    Leaf,
    MatMul,
    Add,
    Mul,
    Scale(f64),
    AddScalar,
    Relu,
    Gelu,
    Softmax,
    LayerNorm {
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Concat {
        axis: usize,
    },
    Slice {
        axis: usize,
        start: usize,
    },
    Mean,
    Sum,
    Transpose,
    Scatter {
        mask: Vec<f64>,
    },
    /// Scalar output with a precomputed gradient w.r.t. its single parent.
    External {
        grad: Vec<f64>,
    },
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn check_finite(data: &[f64], op: &str) -> Result<()> {
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "{op} produced non-finite value {} at index {i}",
            data[i]
        )));
    }
    Ok(())
}

fn shape_err(op: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

// C[m,n] += A[m,k] * B[k,n]
fn mm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

// C[m,k] += G[m,n] * B[k,n]^T
fn mm_nt(g: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut s = 0.0;
            for (gv, bv) in grow.iter().zip(brow) {
                s += gv * bv;
            }
            c[i * k + p] += s;
        }
    }
}

// C[k,n] += A[m,k]^T * G[m,n]
fn mm_tn(a: &[f64], g: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, gv) in crow.iter_mut().zip(grow) {
                *cv += av * gv;
            }
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let th = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du
}

impl Tensor {
    fn build(
        shape: Vec<usize>,
        data: Vec<f64>,
        op: Op,
        parents: Vec<Tensor>,
        name: &str,
    ) -> Result<Tensor> {
        debug_assert_eq!(numel(&shape), data.len());
        check_finite(&data, name)?;
        let requires_grad = parents.iter().any(|p| p.0.requires_grad);
        let (op, parents) = if requires_grad {
            (op, parents)
        } else {
            (Op::Leaf, Vec::new())
        };
        Ok(Tensor(Rc::new(Node {
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            op,
            parents,
        })))
    }

    fn leaf(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Result<Tensor> {
        if numel(&shape) != data.len() {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {shape:?}",
                data.len()
            )));
        }
        check_finite(&data, "leaf")?;
        Ok(Tensor(Rc::new(Node {
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            op: Op::Leaf,
            parents: Vec::new(),
        })))
    }

    /// Constant tensor (no gradient).
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        Self::leaf(shape.to_vec(), data, false)
    }

    /// Trainable leaf tensor.
    pub fn param(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        Self::leaf(shape.to_vec(), data, true)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Self::leaf(shape.to_vec(), vec![0.0; numel(shape)], false).expect("zeros are finite")
    }

    pub fn scalar(v: f64) -> Result<Tensor> {
        Self::leaf(Vec::new(), vec![v], false)
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        numel(&self.0.shape)
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.0.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.borrow().clone()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        self.0.data.borrow()[0]
    }

    /// Overwrite values in place (used by optimizers and weight loading).
    pub fn set_data(&self, data: &[f64]) -> Result<()> {
        if data.len() != self.numel() {
            return Err(Error::Shape(format!(
                "set_data: {} values for shape {:?}",
                data.len(),
                self.0.shape
            )));
        }
        self.0.data.borrow_mut().copy_from_slice(data);
        Ok(())
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Same values, detached from any graph.
    pub fn detach(&self) -> Tensor {
        Self::leaf(self.0.shape.clone(), self.to_vec(), false).expect("finite")
    }

    fn last_dim(&self) -> usize {
        *self.0.shape.last().unwrap_or(&1)
    }

    /// `a @ b` over the last two axes; `b` may be 2-D (shared by every
    /// leading batch) or carry the same leading axes as `a`.
    pub fn matmul(&self, b: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), b.shape());
        if sa.len() < 2 || sb.len() < 2 {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        let batch_a = numel(&sa[..sa.len() - 2]);
        let shared_b = sb.len() == 2;
        if k != k2 || (!shared_b && sa[..sa.len() - 2] != sb[..sb.len() - 2]) {
            return Err(shape_err("matmul", sa, sb));
        }
        let mut out = vec![0.0; batch_a * m * n];
        {
            let (ad, bd) = (self.data(), b.data());
            for bi in 0..batch_a {
                let boff = if shared_b { 0 } else { bi * k * n };
                mm_nn(
                    &ad[bi * m * k..(bi + 1) * m * k],
                    &bd[boff..boff + k * n],
                    &mut out[bi * m * n..(bi + 1) * m * n],
                    m,
                    k,
                    n,
                );
            }
        }
        let mut shape = sa[..sa.len() - 2].to_vec();
        shape.extend([m, n]);
        Self::build(
            shape,
            out,
            Op::MatMul,
            vec![self.clone(), b.clone()],
            "matmul",
        )
    }

    fn check_suffix(&self, b: &Tensor, op: &str) -> Result<()> {
        let (sa, sb) = (self.shape(), b.shape());
        if sb.len() > sa.len()
            || sa[sa.len() - sb.len()..] != *sb
            || sb.is_empty() && !sa.is_empty()
        {
            return Err(shape_err(op, sa, sb));
        }
        Ok(())
    }

    /// Elementwise sum; `b` broadcasts over the leading axes of `self`.
    pub fn add(&self, b: &Tensor) -> Result<Tensor> {
        self.check_suffix(b, "add")?;
        let bd = b.data();
        let nb = bd.len();
        let out: Vec<f64> = self
            .data()
            .iter()
            .enumerate()
            .map(|(i, a)| a + bd[i % nb])
            .collect();
        drop(bd);
        Self::build(
            self.0.shape.clone(),
            out,
            Op::Add,
            vec![self.clone(), b.clone()],
            "add",
        )
    }

    pub fn sub(&self, b: &Tensor) -> Result<Tensor> {
        self.add(&b.scale(-1.0)?)
    }

    /// Elementwise product; `b` broadcasts over the leading axes of `self`.
    pub fn mul(&self, b: &Tensor) -> Result<Tensor> {
        self.check_suffix(b, "mul")?;
        let bd = b.data();
        let nb = bd.len();
        let out: Vec<f64> = self
            .data()
            .iter()
            .enumerate()
            .map(|(i, a)| a * bd[i % nb])
            .collect();
        drop(bd);
        Self::build(
            self.0.shape.clone(),
            out,
            Op::Mul,
            vec![self.clone(), b.clone()],
            "mul",
        )
    }

    pub fn scale(&self, s: f64) -> Result<Tensor> {
        let out = self.data().iter().map(|a| a * s).collect();
        Self::build(
            self.0.shape.clone(),
            out,
            Op::Scale(s),
            vec![self.clone()],
            "scale",
        )
    }

    pub fn add_scalar(&self, s: f64) -> Result<Tensor> {
        let out = self.data().iter().map(|a| a + s).collect();
        Self::build(
            self.0.shape.clone(),
            out,
            Op::AddScalar,
            vec![self.clone()],
            "add_scalar",
        )
    }

    pub fn relu(&self) -> Result<Tensor> {
        let out = self.data().iter().map(|a| a.max(0.0)).collect();
        Self::build(
            self.0.shape.clone(),
            out,
            Op::Relu,
            vec![self.clone()],
            "relu",
        )
    }

    /// GELU, tanh approximation.
    pub fn gelu(&self) -> Result<Tensor> {
        let out = self.data().iter().map(|&a| gelu(a)).collect();
        Self::build(
            self.0.shape.clone(),
            out,
            Op::Gelu,
            vec![self.clone()],
            "gelu",
        )
    }

    pub fn softmax(&self) -> Result<Tensor> {
        self.softmax_masked(None)
    }

    /// Softmax over the last axis. Positions where `key_mask` is false get
    /// probability exactly 0, equivalent to a logit of negative infinity.
    pub fn softmax_masked(&self, key_mask: Option<&[bool]>) -> Result<Tensor> {
        let n = self.last_dim();
        if let Some(mask) = key_mask {
            if mask.len() != n {
                return Err(Error::Shape(format!(
                    "softmax: mask of length {} for last axis {n}",
                    mask.len()
                )));
            }
        }
        let visible = |j: usize| key_mask.map_or(true, |m| m[j]);
        let x = self.data();
        let mut out = vec![0.0; x.len()];
        for (row, orow) in x.chunks(n.max(1)).zip(out.chunks_mut(n.max(1))) {
            let mx = (0..n)
                .filter(|&j| visible(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if mx == f64::NEG_INFINITY {
                continue;
            }
            let mut z = 0.0;
            for j in 0..n {
                if visible(j) {
                    orow[j] = (row[j] - mx).exp();
                    z += orow[j];
                }
            }
            for v in orow.iter_mut() {
                *v /= z;
            }
        }
        drop(x);
        Self::build(
            self.0.shape.clone(),
            out,
            Op::Softmax,
            vec![self.clone()],
            "softmax",
        )
    }

    /// Normalise over the last axis, then apply `gain` and `bias` (both
    /// shaped like the last axis).
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
        let n = self.last_dim();
        if gain.shape() != [n] || bias.shape() != [n] {
            return Err(shape_err("layer_norm", self.shape(), gain.shape()));
        }
        let x = self.data();
        let (g, b) = (gain.data(), bias.data());
        let rows = x.len() / n;
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; x.len()];
        for r in 0..rows {
            let row = &x[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..n {
                let h = (row[j] - mean) * is;
                xhat[r * n + j] = h;
                out[r * n + j] = h * g[j] + b[j];
            }
        }
        drop((x, g, b));
        Self::build(
            self.0.shape.clone(),
            out,
            Op::LayerNorm { xhat, inv_std },
            vec![self.clone(), gain.clone(), bias.clone()],
            "layer_norm",
        )
    }

    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let rank = first.shape().len();
        if axis >= rank {
            return Err(Error::Shape(format!("concat axis {axis} for rank {rank}")));
        }
        for p in parts {
            let s = p.shape();
            if s.len() != rank || (0..rank).any(|d| d != axis && s[d] != first.shape()[d]) {
                return Err(shape_err("concat", first.shape(), s));
            }
        }
        let outer = numel(&first.shape()[..axis]);
        let inner = numel(&first.shape()[axis + 1..]);
        let mut shape = first.shape().to_vec();
        shape[axis] = parts.iter().map(|p| p.shape()[axis]).sum();
        let mut out = Vec::with_capacity(numel(&shape));
        for o in 0..outer {
            for p in parts {
                let chunk = p.shape()[axis] * inner;
                out.extend_from_slice(&p.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        Self::build(shape, out, Op::Concat { axis }, parts.to_vec(), "concat")
    }

    /// `len` entries starting at `start` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let s = self.shape();
        if axis >= s.len() || start + len > s[axis] {
            return Err(Error::Shape(format!(
                "slice [{start}, {}) on axis {axis} of shape {s:?}",
                start + len
            )));
        }
        let outer = numel(&s[..axis]);
        let inner = numel(&s[axis + 1..]);
        let mut shape = s.to_vec();
        shape[axis] = len;
        let mut out = Vec::with_capacity(numel(&shape));
        {
            let d = self.data();
            for o in 0..outer {
                let base = (o * s[axis] + start) * inner;
                out.extend_from_slice(&d[base..base + len * inner]);
            }
        }
        Self::build(
            shape,
            out,
            Op::Slice { axis, start },
            vec![self.clone()],
            "slice",
        )
    }

    /// Mean of all entries, as a scalar.
    pub fn mean(&self) -> Result<Tensor> {
        let n = self.numel();
        if n == 0 {
            return Err(Error::Shape("mean of empty tensor".into()));
        }
        let s = self.data().iter().sum::<f64>() / n as f64;
        Self::build(Vec::new(), vec![s], Op::Mean, vec![self.clone()], "mean")
    }

    pub fn sum(&self) -> Result<Tensor> {
        let s = self.data().iter().sum::<f64>();
        Self::build(Vec::new(), vec![s], Op::Sum, vec![self.clone()], "sum")
    }

    /// Swap the last two axes.
    pub fn transpose(&self) -> Result<Tensor> {
        let s = self.shape();
        if s.len() < 2 {
            return Err(Error::Shape(format!("transpose of shape {s:?}")));
        }
        let (m, n) = (s[s.len() - 2], s[s.len() - 1]);
        let batch = numel(&s[..s.len() - 2]);
        let mut out = vec![0.0; self.numel()];
        {
            let d = self.data();
            for b in 0..batch {
                for i in 0..m {
                    for j in 0..n {
                        out[b * m * n + j * m + i] = d[b * m * n + i * n + j];
                    }
                }
            }
        }
        let mut shape = s.to_vec();
        let r = shape.len();
        shape.swap(r - 2, r - 1);
        Self::build(shape, out, Op::Transpose, vec![self.clone()], "transpose")
    }

    /// Zero every row (index along axis 0) where `keep` is false.
    pub fn mask_rows(&self, keep: &[bool]) -> Result<Tensor> {
        let s = self.shape();
        if s.is_empty() || s[0] != keep.len() {
            return Err(Error::Shape(format!(
                "mask_rows: {} flags for shape {s:?}",
                keep.len()
            )));
        }
        let inner = self.numel() / s[0];
        let mask: Vec<f64> = keep
            .iter()
            .flat_map(|&k| std::iter::repeat(if k { 1.0 } else { 0.0 }).take(inner))
            .collect();
        self.scatter(mask, "mask_rows")
    }

    /// Inverted dropout with keep-probability `1 - p`.
    pub fn dropout<R: Rng>(&self, p: f64, rng: &mut R) -> Result<Tensor> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        if p == 0.0 {
            return Ok(self.clone());
        }
        let keep = 1.0 / (1.0 - p);
        let mask = (0..self.numel())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        self.scatter(mask, "dropout")
    }

    fn scatter(&self, mask: Vec<f64>, name: &str) -> Result<Tensor> {
        let out = self.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        Self::build(
            self.0.shape.clone(),
            out,
            Op::Scatter { mask },
            vec![self.clone()],
            name,
        )
    }

    /// Scalar node whose value and gradient w.r.t. `input` were computed
    /// outside the tape (e.g. by a dynamic program).
    pub fn external_scalar(input: &Tensor, value: f64, grad: Vec<f64>) -> Result<Tensor> {
        if grad.len() != input.numel() {
            return Err(Error::Shape(format!(
                "external gradient of length {} for shape {:?}",
                grad.len(),
                input.shape()
            )));
        }
        Self::build(
            Vec::new(),
            vec![value],
            Op::External { grad },
            vec![input.clone()],
            "external",
        )
    }

    /// Reverse-mode sweep from a one-element tensor.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.0.requires_grad {
            return Ok(());
        }
        // iterative post-order DFS
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited: HashMap<*const Node, ()> = HashMap::new();
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            let key = Rc::as_ptr(&t.0);
            if expanded {
                order.push(t);
                continue;
            }
            if visited.insert(key, ()).is_some() {
                continue;
            }
            stack.push((t.clone(), true));
            for p in &t.0.parents {
                if p.0.requires_grad && !visited.contains_key(&Rc::as_ptr(&p.0)) {
                    stack.push((p.clone(), false));
                }
            }
        }

        let mut grads: HashMap<*const Node, Vec<f64>> = HashMap::new();
        grads.insert(Rc::as_ptr(&self.0), vec![1.0]);
        for t in order.iter().rev() {
            let key = Rc::as_ptr(&t.0);
            let Some(g) = grads.remove(&key) else {
                continue;
            };
            if let Op::Leaf = t.0.op {
                let mut slot = t.0.grad.borrow_mut();
                match slot.as_mut() {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => *slot = Some(g),
                }
                continue;
            }
            t.propagate(&g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, g: &[f64], grads: &mut HashMap<*const Node, Vec<f64>>) {
        let node = &self.0;
        let parents = &node.parents;
        let mut acc = |p: &Tensor, f: &mut dyn FnMut(&mut [f64])| {
            if !p.0.requires_grad {
                return;
            }
            let e = grads
                .entry(Rc::as_ptr(&p.0))
                .or_insert_with(|| vec![0.0; p.numel()]);
            f(e);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul => {
                let (a, b) = (&parents[0], &parents[1]);
                let (sa, sb) = (a.shape(), b.shape());
                let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
                let n = sb[sb.len() - 1];
                let batch = numel(&sa[..sa.len() - 2]);
                let shared_b = sb.len() == 2;
                let (ad, bd) = (a.data(), b.data());
                acc(a, &mut |ga| {
                    for bi in 0..batch {
                        let boff = if shared_b { 0 } else { bi * k * n };
                        mm_nt(
                            &g[bi * m * n..(bi + 1) * m * n],
                            &bd[boff..boff + k * n],
                            &mut ga[bi * m * k..(bi + 1) * m * k],
                            m,
                            k,
                            n,
                        );
                    }
                });
                acc(b, &mut |gb| {
                    for bi in 0..batch {
                        let boff = if shared_b { 0 } else { bi * k * n };
                        mm_tn(
                            &ad[bi * m * k..(bi + 1) * m * k],
                            &g[bi * m * n..(bi + 1) * m * n],
                            &mut gb[boff..boff + k * n],
                            m,
                            k,
                            n,
                        );
                    }
                });
            }
            Op::Add => {
                let nb = parents[1].numel();
                acc(&parents[0], &mut |ga| {
                    ga.iter_mut().zip(g).for_each(|(a, v)| *a += v)
                });
                acc(&parents[1], &mut |gb| {
                    for (i, v) in g.iter().enumerate() {
                        gb[i % nb] += v;
                    }
                });
            }
            Op::Mul => {
                let (a, b) = (&parents[0], &parents[1]);
                let nb = b.numel();
                let (ad, bd) = (a.data(), b.data());
                acc(a, &mut |ga| {
                    for (i, v) in g.iter().enumerate() {
                        ga[i] += v * bd[i % nb];
                    }
                });
                acc(b, &mut |gb| {
                    for (i, v) in g.iter().enumerate() {
                        gb[i % nb] += v * ad[i];
                    }
                });
            }
            Op::Scale(s) => acc(&parents[0], &mut |ga| {
                ga.iter_mut().zip(g).for_each(|(a, v)| *a += v * s)
            }),
            Op::AddScalar => acc(&parents[0], &mut |ga| {
                ga.iter_mut().zip(g).for_each(|(a, v)| *a += v)
            }),
            Op::Relu => {
                let x = parents[0].data();
                acc(&parents[0], &mut |ga| {
                    for i in 0..g.len() {
                        if x[i] > 0.0 {
                            ga[i] += g[i];
                        }
                    }
                });
            }
            Op::Gelu => {
                let x = parents[0].data();
                acc(&parents[0], &mut |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] * gelu_grad(x[i]);
                    }
                });
            }
            Op::Softmax => {
                let y = node.data.borrow();
                let n = self.last_dim().max(1);
                acc(&parents[0], &mut |ga| {
                    for r in 0..y.len() / n {
                        let (yr, gr) = (&y[r * n..(r + 1) * n], &g[r * n..(r + 1) * n]);
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            ga[r * n + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::LayerNorm { xhat, inv_std } => {
                let (gain, n) = (parents[1].data(), self.last_dim());
                let rows = xhat.len() / n;
                acc(&parents[0], &mut |gx| {
                    for r in 0..rows {
                        let xh = &xhat[r * n..(r + 1) * n];
                        let gr = &g[r * n..(r + 1) * n];
                        let dxh: Vec<f64> = (0..n).map(|j| gr[j] * gain[j]).collect();
                        let m1 = dxh.iter().sum::<f64>() / n as f64;
                        let m2 = dxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                        for j in 0..n {
                            gx[r * n + j] += inv_std[r] * (dxh[j] - m1 - xh[j] * m2);
                        }
                    }
                });
                acc(&parents[1], &mut |gg| {
                    for (i, v) in g.iter().enumerate() {
                        gg[i % n] += v * xhat[i];
                    }
                });
                acc(&parents[2], &mut |gb| {
                    for (i, v) in g.iter().enumerate() {
                        gb[i % n] += v;
                    }
                });
            }
            Op::Concat { axis } => {
                let axis = *axis;
                let outer = numel(&node.shape[..axis]);
                let inner = numel(&node.shape[axis + 1..]);
                let total = node.shape[axis] * inner;
                let mut offset = 0;
                for p in parents {
                    let chunk = p.shape()[axis] * inner;
                    acc(p, &mut |gp| {
                        for o in 0..outer {
                            let src = &g[o * total + offset..o * total + offset + chunk];
                            gp[o * chunk..(o + 1) * chunk]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(a, v)| *a += v);
                        }
                    });
                    offset += chunk;
                }
            }
            Op::Slice { axis, start } => {
                let p = &parents[0];
                let s = p.shape();
                let outer = numel(&s[..*axis]);
                let inner = numel(&s[axis + 1..]);
                let len = node.shape[*axis];
                acc(p, &mut |gp| {
                    for o in 0..outer {
                        let base = (o * s[*axis] + start) * inner;
                        gp[base..base + len * inner]
                            .iter_mut()
                            .zip(&g[o * len * inner..(o + 1) * len * inner])
                            .for_each(|(a, v)| *a += v);
                    }
                });
            }
            Op::Mean => {
                let n = parents[0].numel() as f64;
                acc(&parents[0], &mut |ga| {
                    ga.iter_mut().for_each(|a| *a += g[0] / n)
                });
            }
            Op::Sum => acc(&parents[0], &mut |ga| {
                ga.iter_mut().for_each(|a| *a += g[0])
            }),
            Op::Transpose => {
                let s = &node.shape;
                // output is [.., n, m]; parent is [.., m, n]
                let (n, m) = (s[s.len() - 2], s[s.len() - 1]);
                let batch = numel(&s[..s.len() - 2]);
                acc(&parents[0], &mut |ga| {
                    for b in 0..batch {
                        for i in 0..m {
                            for j in 0..n {
                                ga[b * m * n + i * n + j] += g[b * m * n + j * m + i];
                            }
                        }
                    }
                });
            }
            Op::Scatter { mask } => acc(&parents[0], &mut |ga| {
                for i in 0..g.len() {
                    ga[i] += g[i] * mask[i];
                }
            }),
            Op::External { grad } => acc(&parents[0], &mut |ga| {
                ga.iter_mut().zip(grad).for_each(|(a, v)| *a += g[0] * v)
            }),
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &[Tensor], lr: f64) -> Result<Self> {
        Self::with_betas(params, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(
        params: &[Tensor],
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Result<Self> {
        if !(0.0 < beta1 && beta1 < 1.0 && 0.0 < beta2 && beta2 < 1.0) {
            return Err(Error::Optimizer(format!(
                "betas must lie in (0, 1): {beta1}, {beta2}"
            )));
        }
        if !(lr > 0.0 && eps > 0.0) {
            return Err(Error::Optimizer("lr and eps must be > 0".into()));
        }
        Ok(Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        })
    }

    /// One update from the gradients currently stored on `params`.
    pub fn step(&mut self, params: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::Optimizer(format!(
                "optimizer tracks {} parameters, got {}",
                self.m.len(),
                params.len()
            )));
        }
        let grads: Vec<Vec<f64>> = params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                p.grad().ok_or_else(|| {
                    Error::Optimizer(format!("parameter {i} {:?} has no gradient", p.shape()))
                })
            })
            .collect::<Result<_>>()?;
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, (p, g)) in params.iter().zip(&grads).enumerate() {
            if g.len() != self.m[i].len() {
                return Err(Error::Optimizer(format!("parameter {i} changed size")));
            }
            let mut data = p.0.data.borrow_mut();
            for j in 0..g.len() {
                let m = &mut self.m[i][j];
                let v = &mut self.v[i][j];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g[j];
                *v = self.beta2 * *v + (1.0 - self.beta2) * g[j] * g[j];
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                data[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
