//! Minimal reverse-mode automatic differentiation over dense row-major
//! matrices.
//!
//! A [`Tape`] records every operation as it is evaluated. Because operands
//! always precede their results on the tape, walking it backwards visits the
//! nodes in reverse topological order.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn scalar(x: f64) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![x],
        }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Tensor {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn add_assign(&mut self, other: &Tensor) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    fn matmul(&self, other: &Tensor) -> Tensor {
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b = &other.data[p * m..(p + 1) * m];
                for (o, &bv) in row.iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        }
        Tensor { rows: n, cols: m, data: out }
    }

    fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }
}

/// Neighbor lists used by [`Tape::neighbor_sum`].
#[derive(Clone, Debug)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Adjacency {
    pub fn from_graph(g: &Graph) -> Rc<Self> {
        let (offsets, targets) = g.csr();
        Rc::new(Adjacency {
            offsets: offsets.to_vec(),
            targets: targets.to_vec(),
        })
    }

    fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    fn neighbors(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Relu(Var),
    NeighborSum(Var, Rc<Adjacency>),
    MeanRows(Var),
    Sum(Var),
    GaussianLogDensity { mean: Var, x: Vec<f64>, sigma: f64 },
}

#[derive(Default)]
pub struct Tape {
    values: Vec<Tensor>,
    ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::ShapeMismatch { op, lhs: sa, rhs: sb });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.1 != sb.0 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let v = self.value(a).matmul(self.value(b));
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// Adds a `1 × c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (sa, sr) = (self.value(a).shape(), self.value(row).shape());
        if sr.0 != 1 || sr.1 != sa.1 {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                lhs: sa,
                rhs: sr,
            });
        }
        let r = self.value(row).data.clone();
        let mut v = self.value(a).clone();
        for chunk in v.data.chunks_mut(sa.1.max(1)) {
            for (x, b) in chunk.iter_mut().zip(&r) {
                *x += b;
            }
        }
        Ok(self.push(v, Op::AddRow(a, row)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    /// Row `i` of the result is the sum of rows `j` over neighbors `j ~ i`.
    pub fn neighbor_sum(&mut self, adj: &Rc<Adjacency>, h: Var) -> Result<Var> {
        let hv = self.value(h);
        if hv.rows != adj.node_count() {
            return Err(Error::ShapeMismatch {
                op: "neighbor_sum",
                lhs: hv.shape(),
                rhs: (adj.node_count(), hv.cols),
            });
        }
        let c = hv.cols;
        let mut out = Tensor::zeros(hv.rows, c);
        for i in 0..hv.rows {
            for &j in adj.neighbors(i) {
                let src = &hv.data[j * c..(j + 1) * c];
                for (o, &x) in out.data[i * c..(i + 1) * c].iter_mut().zip(src) {
                    *o += x;
                }
            }
        }
        Ok(self.push(out, Op::NeighborSum(h, Rc::clone(adj))))
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.rows == 0 {
            return Err(Error::InvalidParameter("mean over zero rows".into()));
        }
        let mut out = Tensor::zeros(1, av.cols);
        for r in 0..av.rows {
            for (o, &x) in out.data.iter_mut().zip(av.row(r)) {
                *o += x;
            }
        }
        let inv = 1.0 / av.rows as f64;
        out.data.iter_mut().for_each(|x| *x *= inv);
        Ok(self.push(out, Op::MeanRows(a)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Log-density of the constant `x` under `N(mean, sigma² I)`; `mean` is a
    /// `1 × m` row.
    pub fn gaussian_log_density(&mut self, mean: Var, x: &[f64], sigma: f64) -> Result<Var> {
        let mv = self.value(mean);
        if mv.rows != 1 || mv.cols != x.len() {
            return Err(Error::ShapeMismatch {
                op: "gaussian_log_density",
                lhs: mv.shape(),
                rhs: (1, x.len()),
            });
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        let v = gaussian_log_density(&mv.data, x, sigma);
        Ok(self.push(
            Tensor::scalar(v),
            Op::GaussianLogDensity {
                mean,
                x: x.to_vec(),
                sigma,
            },
        ))
    }

    /// Gradients of the scalar `out` with respect to every node on the tape.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        let shape = self.value(out).shape();
        if shape != (1, 1) {
            return Err(Error::NonScalarOutput(shape));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.values.len()];
        grads[out.0] = Some(Tensor::scalar(1.0));
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.ops[i] {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = g.matmul(&self.value(*b).transpose());
                    let db = self.value(*a).transpose().matmul(&g);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|x| -x));
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    accumulate(&mut grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                    accumulate(&mut grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
                }
                Op::AddRow(a, row) => {
                    let mut dr = Tensor::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (o, &x) in dr.data.iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *row, dr);
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.map(|x| x * s)),
                Op::Tanh(a) => {
                    let y = &self.values[i];
                    accumulate(&mut grads, *a, g.zip_map(y, |d, y| d * (1.0 - y * y)));
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    accumulate(&mut grads, *a, g.zip_map(x, |d, x| if x > 0.0 { d } else { 0.0 }));
                }
                Op::NeighborSum(h, adj) => {
                    let c = g.cols;
                    let mut dh = Tensor::zeros(g.rows, c);
                    for r in 0..g.rows {
                        for &j in adj.neighbors(r) {
                            for (o, &x) in dh.data[j * c..(j + 1) * c].iter_mut().zip(g.row(r)) {
                                *o += x;
                            }
                        }
                    }
                    accumulate(&mut grads, *h, dh);
                }
                Op::MeanRows(a) => {
                    let rows = self.value(*a).rows;
                    let inv = 1.0 / rows as f64;
                    let mut da = Tensor::zeros(rows, g.cols);
                    for r in 0..rows {
                        for (o, &x) in da.data[r * g.cols..(r + 1) * g.cols].iter_mut().zip(&g.data) {
                            *o = x * inv;
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    let s = g.data[0];
                    accumulate(&mut grads, *a, Tensor { rows: r, cols: c, data: vec![s; r * c] });
                }
                Op::GaussianLogDensity { mean, x, sigma } => {
                    let s = g.data[0];
                    let m = self.value(*mean);
                    let inv = 1.0 / (sigma * sigma);
                    let dm: Vec<f64> = m.data.iter().zip(x).map(|(&mu, &xv)| s * (xv - mu) * inv).collect();
                    accumulate(&mut grads, *mean, Tensor::row_vector(dm));
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients(grads))
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// `Σ_j −(x_j − m_j)² / 2σ² − m (ln σ + ½ ln 2π)`.
pub fn gaussian_log_density(mean: &[f64], x: &[f64], sigma: f64) -> f64 {
    let quad: f64 = mean.iter().zip(x).map(|(m, v)| (v - m) * (v - m)).sum();
    let norm = sigma.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln();
    -quad / (2.0 * sigma * sigma) - mean.len() as f64 * norm
}

pub struct Gradients(Vec<Option<Tensor>>);

impl Gradients {
    /// Gradient for `v`, or zeros of the right shape when `v` did not
    /// influence the output.
    pub fn get(&self, tape: &Tape, v: Var) -> Tensor {
        match &self.0[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = tape.value(v).shape();
                Tensor::zeros(r, c)
            }
        }
    }
}
