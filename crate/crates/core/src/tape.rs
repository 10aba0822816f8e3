//! Define-by-run reverse-mode differentiation over [`Tensor`] values.
//!
//! Every primitive evaluates eagerly and appends a node to the [`Tape`].
//! [`Tape::backward`] walks the nodes in reverse, accumulating adjoints, so a
//! value used in several places receives the sum of all its contributions.
//! A fresh tape is built for every forward pass.

use crate::error::{dim_err, Error, Result};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Tanh(usize),
    Sigmoid(usize),
    Log(usize),
    Concat(Vec<usize>),
    Stack(Vec<usize>),
    Slice(usize, usize, usize),
    Sum(usize),
    Softmax(usize),
    Transpose(usize),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Recorded computation; see the module docs.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; zeros when `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Tensor {
        let shape = self.shapes[v.0].clone();
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(&shape),
        }
    }

    pub fn contributes(&self, v: Var) -> bool {
        self.grads[v.0].is_some()
    }
}

fn broadcast_ok(a: &Tensor, b: &Tensor) -> bool {
    a.shape() == b.shape() || a.is_scalar() || b.is_scalar()
}

fn out_shape(a: &Tensor, b: &Tensor) -> Vec<usize> {
    if a.shape() == b.shape() || b.is_scalar() {
        a.shape().to_vec()
    } else {
        b.shape().to_vec()
    }
}

fn zip_broadcast(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let shape = out_shape(a, b);
    let (ad, bd) = (a.data(), b.data());
    let data: Vec<f64> = if ad.len() == bd.len() {
        ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect()
    } else if bd.len() == 1 {
        ad.iter().map(|&x| f(x, bd[0])).collect()
    } else {
        bd.iter().map(|&y| f(ad[0], y)).collect()
    };
    Tensor::new(shape, data).expect("broadcast shape")
}

fn tanh_kernel(x: f64) -> f64 {
    x.tanh()
}

fn sigmoid_kernel(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn matmul_values(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 {
        return Err(dim_err("matmul", format!("lhs must be a matrix, got {:?}", a.shape())));
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let ad = a.data();
    let bd = b.data();
    match b.rank() {
        1 => {
            if b.shape()[0] != k {
                return Err(dim_err("matmul", format!("{:?} x {:?}", a.shape(), b.shape())));
            }
            let out = (0..m)
                .map(|i| {
                    let row = &ad[i * k..(i + 1) * k];
                    row.iter().zip(bd).map(|(x, y)| x * y).sum()
                })
                .collect();
            Ok(Tensor::vector(out))
        }
        2 => {
            if b.shape()[0] != k {
                return Err(dim_err("matmul", format!("{:?} x {:?}", a.shape(), b.shape())));
            }
            let n = b.shape()[1];
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                let orow = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    let aip = ad[i * k + p];
                    let brow = &bd[p * n..(p + 1) * n];
                    for (o, &bv) in orow.iter_mut().zip(brow) {
                        *o += aip * bv;
                    }
                }
            }
            Tensor::matrix(m, n, out)
        }
        _ => Err(dim_err("matmul", format!("rhs rank {}", b.rank()))),
    }
}

fn softmax_values(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn eval_op<'a>(op: &Op, t: impl Fn(usize) -> &'a Tensor) -> Result<Tensor> {
    Ok(match op {
        Op::Leaf => unreachable!("leaves are not re-evaluated"),
        Op::MatMul(a, b) => matmul_values(t(*a), t(*b))?,
        Op::Add(a, b) => zip_broadcast(t(*a), t(*b), |x, y| x + y),
        Op::Sub(a, b) => zip_broadcast(t(*a), t(*b), |x, y| x - y),
        Op::Mul(a, b) => zip_broadcast(t(*a), t(*b), |x, y| x * y),
        Op::Scale(a, c) => t(*a).map(|x| x * c),
        Op::Tanh(a) => t(*a).map(tanh_kernel),
        Op::Sigmoid(a) => t(*a).map(sigmoid_kernel),
        Op::Log(a) => t(*a).map(f64::ln),
        Op::Concat(parts) => {
            let data: Vec<f64> = parts.iter().flat_map(|&p| t(p).data().iter().copied()).collect();
            Tensor::vector(data)
        }
        Op::Stack(rows) => {
            let cols = t(rows[0]).len();
            let data: Vec<f64> = rows.iter().flat_map(|&p| t(p).data().iter().copied()).collect();
            Tensor::matrix(rows.len(), cols, data)?
        }
        Op::Slice(a, start, len) => Tensor::vector(t(*a).data()[*start..start + len].to_vec()),
        Op::Sum(a) => Tensor::scalar(t(*a).sum()),
        Op::Softmax(a) => Tensor::vector(softmax_values(t(*a).data())),
        Op::Transpose(a) => t(*a).transpose()?,
    })
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Records an input tensor. Gradients are available for every leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    /// Records a value that is not meant to be differentiated; identical to
    /// [`Tape::leaf`] apart from intent.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn record(&mut self, op: Op) -> Result<Var> {
        let nodes = &self.nodes;
        let value = eval_op(&op, |i| &nodes[i].value)?;
        Ok(self.push(op, value))
    }

    fn check_binary(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (ta, tb) = (self.value(a), self.value(b));
        if broadcast_ok(ta, tb) {
            Ok(())
        } else {
            Err(dim_err(op, format!("{:?} vs {:?}", ta.shape(), tb.shape())))
        }
    }

    /// Matrix product; a rank-1 right operand is treated as a column vector
    /// and yields a rank-1 result.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::MatMul(a.0, b.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_binary("add", a, b)?;
        self.record(Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_binary("sub", a, b)?;
        self.record(Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_binary("mul", a, b)?;
        self.record(Op::Mul(a.0, b.0))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.record(Op::Scale(a.0, c)).expect("scale is total")
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.record(Op::Tanh(a.0)).expect("tanh is total")
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.record(Op::Sigmoid(a.0)).expect("sigmoid is total")
    }

    /// Natural log; every input entry must be strictly positive.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data().iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::Numeric(format!("log of non-positive value {bad}")));
        }
        self.record(Op::Log(a.0))
    }

    /// Flattens and concatenates the inputs into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        self.record(Op::Concat(parts.iter().map(|p| p.0).collect()))
            .expect("concat is total")
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let Some(first) = rows.first() else {
            return Err(dim_err("stack", "no rows"));
        };
        let width = self.value(*first).len();
        if rows.iter().any(|r| self.value(*r).len() != width) {
            return Err(dim_err("stack", "rows differ in length"));
        }
        self.record(Op::Stack(rows.iter().map(|p| p.0).collect()))
    }

    /// Contiguous range of the flattened input, as a vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.value(a).len();
        if start + len > n {
            return Err(dim_err("slice", format!("{start}..{} of {n}", start + len)));
        }
        self.record(Op::Slice(a.0, start, len))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.record(Op::Sum(a.0)).expect("sum is total")
    }

    /// Softmax over all entries of the input.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        if self.value(a).is_empty() {
            return Err(dim_err("softmax", "empty input"));
        }
        self.record(Op::Softmax(a.0))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Transpose(a.0))
    }

    /// Re-evaluates every recorded operation from the stored leaf values.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut vals: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Leaf => node.value.clone(),
                ref op => eval_op(op, |i| &vals[i])?,
            };
            vals.push(v);
        }
        Ok(vals)
    }

    /// Reverse accumulation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(Var(*a)), self.value(Var(*b)));
                    let (m, k) = (av.shape()[0], av.shape()[1]);
                    let ad = av.data();
                    let bd = bv.data();
                    let ncols = if bv.rank() == 1 { 1 } else { bv.shape()[1] };
                    // dA = G · Bᵀ
                    let mut da = vec![0.0; m * k];
                    for r in 0..m {
                        let grow = &g[r * ncols..(r + 1) * ncols];
                        for p in 0..k {
                            let brow = &bd[p * ncols..(p + 1) * ncols];
                            da[r * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    // dB = Aᵀ · G
                    let mut db = vec![0.0; k * ncols];
                    for r in 0..m {
                        let grow = &g[r * ncols..(r + 1) * ncols];
                        for p in 0..k {
                            let arp = ad[r * k + p];
                            if arp == 0.0 {
                                continue;
                            }
                            for (d, &gv) in db[p * ncols..(p + 1) * ncols].iter_mut().zip(grow) {
                                *d += arp * gv;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, &da);
                    accumulate(&mut grads, *b, &db);
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    let ga = reduce_to(&g, self.value(Var(*a)).len());
                    accumulate(&mut grads, *a, &ga);
                    let gb: Vec<f64> = reduce_to(&g, self.value(Var(*b)).len())
                        .into_iter()
                        .map(|v| sign * v)
                        .collect();
                    accumulate(&mut grads, *b, &gb);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(Var(*a)), self.value(Var(*b)));
                    let ga_full = expand_mul(&g, bv.data());
                    let gb_full = expand_mul(&g, av.data());
                    accumulate(&mut grads, *a, &reduce_to(&ga_full, av.len()));
                    accumulate(&mut grads, *b, &reduce_to(&gb_full, bv.len()));
                }
                Op::Scale(a, c) => {
                    let ga: Vec<f64> = g.iter().map(|v| v * c).collect();
                    accumulate(&mut grads, *a, &ga);
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    let ga: Vec<f64> = g.iter().zip(y).map(|(gv, yv)| gv * (1.0 - yv * yv)).collect();
                    accumulate(&mut grads, *a, &ga);
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    let ga: Vec<f64> = g.iter().zip(y).map(|(gv, yv)| gv * yv * (1.0 - yv)).collect();
                    accumulate(&mut grads, *a, &ga);
                }
                Op::Log(a) => {
                    let x = self.value(Var(*a)).data();
                    let ga: Vec<f64> = g.iter().zip(x).map(|(gv, xv)| gv / xv).collect();
                    accumulate(&mut grads, *a, &ga);
                }
                Op::Concat(parts) | Op::Stack(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let len = self.value(Var(p)).len();
                        accumulate(&mut grads, p, &g[off..off + len]);
                        off += len;
                    }
                }
                Op::Slice(a, start, len) => {
                    let mut ga = vec![0.0; self.value(Var(*a)).len()];
                    ga[*start..start + len].copy_from_slice(&g);
                    accumulate(&mut grads, *a, &ga);
                }
                Op::Sum(a) => {
                    let ga = vec![g[0]; self.value(Var(*a)).len()];
                    accumulate(&mut grads, *a, &ga);
                }
                Op::Softmax(a) => {
                    let y = node.value.data();
                    let dot: f64 = g.iter().zip(y).map(|(gv, yv)| gv * yv).sum();
                    let ga: Vec<f64> = g.iter().zip(y).map(|(gv, yv)| yv * (gv - dot)).collect();
                    accumulate(&mut grads, *a, &ga);
                }
                Op::Transpose(a) => {
                    let gt = Tensor::new(node.value.shape().to_vec(), g.clone())?.transpose()?;
                    accumulate(&mut grads, *a, gt.data());
                }
            }
            grads[i] = Some(g);
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], idx: usize, g: &[f64]) {
    match &mut grads[idx] {
        Some(acc) => {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
        slot @ None => *slot = Some(g.to_vec()),
    }
}

/// Sums a broadcast gradient back down to a scalar operand when needed.
fn reduce_to(g: &[f64], len: usize) -> Vec<f64> {
    if g.len() == len {
        g.to_vec()
    } else {
        vec![g.iter().sum()]
    }
}

fn expand_mul(g: &[f64], other: &[f64]) -> Vec<f64> {
    if other.len() == g.len() {
        g.iter().zip(other).map(|(a, b)| a * b).collect()
    } else {
        g.iter().map(|a| a * other[0]).collect()
    }
}
