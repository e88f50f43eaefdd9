//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of a computation. Values are row-major
//! `n x k` matrices (one row per sample), scalars are `1 x 1`. After the
//! forward pass, [`Tape::backward`] walks the records in reverse and returns
//! the adjoint of every parameter leaf.

use ndarray::{s, Array2, Axis, Zip};

use crate::error::{Error, Result};

pub type Mat = Array2<f64>;

/// Handle to a recorded value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(usize),
    Linear { x: Var, w: Var, b: Var },
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    /// `a + c * b`
    AddScaled(Var, Var, f64),
    Relu(Var),
    Tanh(Var),
    /// Elementwise product with a fixed matrix (dropout masks).
    MulConst(Var, Mat),
    Concat(Vec<Var>),
    StackRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    GatherRows(Var, Vec<usize>),
    /// `base` with `rows` replaced by the rows of `src`.
    ScatterRows { base: Var, rows: Vec<usize>, src: Var },
    /// `a` plus `x` zero-padded or truncated to the width of `a`.
    AddEmbed(Var, Var, usize),
    /// Each row read as a `d x m` matrix `G`, mapped to `G G^T`.
    Gram { a: Var, d: usize, m: usize },
    /// Euclidean norm of every row, `n x 1`.
    RowNorm(Var),
    Square(Var),
    /// `sum_ij w_i a_ij`.
    WeightedSum(Var, Vec<f64>),
    /// `c * tanh(a / c)`
    SoftClamp(Var, f64),
}

struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    n_params: usize,
}

fn shape_err(what: &str, a: &Mat, b: &Mat) -> Error {
    Error::Shape(format!("{what}: {:?} vs {:?}", a.dim(), b.dim()))
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    fn push(&mut self, value: Mat, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.nodes.push(Node { value, op: Op::Constant, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Registers a differentiable leaf; gradients are returned in registration order.
    pub fn param(&mut self, value: Mat) -> Var {
        self.nodes.push(Node { value, op: Op::Param(self.n_params), needs_grad: true });
        self.n_params += 1;
        Var(self.nodes.len() - 1)
    }

    /// A copy of `v` that gradients do not flow through.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.ncols() != wv.nrows() || bv.dim() != (1, wv.ncols()) {
            return Err(shape_err("linear", xv, wv));
        }
        let mut out = xv.dot(wv);
        out += bv;
        Ok(self.push(out, Op::Linear { x, w, b }, &[x, w, b]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.ncols() != bv.nrows() {
            return Err(shape_err("matmul", av, bv));
        }
        let out = av.dot(bv);
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    fn same_shape(&self, what: &str, a: Var, b: Var) -> Result<()> {
        if self.value(a).dim() != self.value(b).dim() {
            return Err(shape_err(what, self.value(a), self.value(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a) + self.value(b);
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a) - self.value(b);
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a) * self.value(b);
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) * c;
        self.push(out, Op::Scale(a, c), &[a])
    }

    pub fn add_scaled(&mut self, a: Var, b: Var, c: f64) -> Result<Var> {
        self.same_shape("add_scaled", a, b)?;
        let mut out = self.value(a).clone();
        out.scaled_add(c, self.value(b));
        Ok(self.push(out, Op::AddScaled(a, b, c), &[a, b]))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|v| v.max(0.0));
        self.push(out, Op::Relu(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::tanh);
        self.push(out, Op::Tanh(a), &[a])
    }

    pub fn soft_clamp(&mut self, a: Var, bound: f64) -> Var {
        let out = self.value(a).mapv(|v| bound * (v / bound).tanh());
        self.push(out, Op::SoftClamp(a, bound), &[a])
    }

    pub fn mul_const(&mut self, a: Var, m: Mat) -> Result<Var> {
        if self.value(a).dim() != m.dim() {
            return Err(shape_err("mul_const", self.value(a), &m));
        }
        let out = self.value(a) * &m;
        Ok(self.push(out, Op::MulConst(a, m), &[a]))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).nrows();
        if parts.iter().any(|p| self.value(*p).nrows() != rows) {
            return Err(Error::Shape("concat: row counts differ".into()));
        }
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.push(out, Op::Concat(parts.to_vec()), parts))
    }

    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let out = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.push(out, Op::StackRows(parts.to_vec()), parts))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        if start > end || end > self.value(a).ncols() {
            return Err(Error::Shape(format!("slice {start}..{end} of {} columns", self.value(a).ncols())));
        }
        let out = self.value(a).slice(s![.., start..end]).to_owned();
        Ok(self.push(out, Op::SliceCols(a, start, end), &[a]))
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let out = self.value(a).select(Axis(0), rows);
        self.push(out, Op::GatherRows(a, rows.to_vec()), &[a])
    }

    pub fn scatter_rows(&mut self, base: Var, rows: &[usize], src: Var) -> Result<Var> {
        let (bv, sv) = (self.value(base), self.value(src));
        if bv.ncols() != sv.ncols() || sv.nrows() != rows.len() {
            return Err(shape_err("scatter_rows", bv, sv));
        }
        let mut out = bv.clone();
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(r).assign(&sv.row(i));
        }
        Ok(self.push(out, Op::ScatterRows { base, rows: rows.to_vec(), src }, &[base, src]))
    }

    /// `a` plus the first `cols` columns of `x` added onto its leading columns.
    pub fn add_embed(&mut self, a: Var, x: Var, cols: usize) -> Result<Var> {
        let (av, xv) = (self.value(a), self.value(x));
        if av.nrows() != xv.nrows() {
            return Err(shape_err("add_embed", av, xv));
        }
        let k = av.ncols().min(xv.ncols()).min(cols);
        let mut out = av.clone();
        out.slice_mut(s![.., ..k]).zip_mut_with(&xv.slice(s![.., ..k]), |o, v| *o += v);
        Ok(self.push(out, Op::AddEmbed(a, x, k), &[a, x]))
    }

    pub fn gram(&mut self, a: Var, d: usize, m: usize) -> Result<Var> {
        let av = self.value(a);
        if av.ncols() != d * m {
            return Err(Error::Shape(format!("gram: {} columns, expected {d} x {m}", av.ncols())));
        }
        let mut out = Mat::zeros((av.nrows(), d * d));
        for (row, mut o) in av.outer_iter().zip(out.outer_iter_mut()) {
            for i in 0..d {
                for j in 0..d {
                    o[i * d + j] = (0..m).map(|k| row[i * m + k] * row[j * m + k]).sum();
                }
            }
        }
        Ok(self.push(out, Op::Gram { a, d, m }, &[a]))
    }

    pub fn row_norm(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut out = Mat::zeros((av.nrows(), 1));
        for (r, row) in av.outer_iter().enumerate() {
            out[[r, 0]] = row.dot(&row).sqrt();
        }
        self.push(out, Op::RowNorm(a), &[a])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|v| v * v);
        self.push(out, Op::Square(a), &[a])
    }

    pub fn weighted_sum(&mut self, a: Var, weights: &[f64]) -> Result<Var> {
        let av = self.value(a);
        if av.nrows() != weights.len() {
            return Err(Error::Shape(format!("weighted_sum: {} rows, {} weights", av.nrows(), weights.len())));
        }
        let total: f64 = av.outer_iter().zip(weights).map(|(row, w)| w * row.sum()).sum();
        Ok(self.push(Mat::from_elem((1, 1), total), Op::WeightedSum(a, weights.to_vec()), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let n = self.value(a).nrows();
        self.weighted_sum(a, &vec![1.0; n]).expect("weights match rows")
    }

    /// Adjoints of all parameter leaves with respect to the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Vec<Mat>> {
        if self.value(loss).dim() != (1, 1) {
            return Err(Error::Shape(format!("loss must be scalar, got {:?}", self.value(loss).dim())));
        }
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut params: Vec<Option<Mat>> = (0..self.n_params).map(|_| None).collect();
        grads[loss.0] = Some(Mat::ones((1, 1)));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let mut acc = |v: Var, delta: Mat| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => *existing += &delta,
                    slot => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Constant => {}
                Op::Param(i) => params[*i] = Some(g),
                Op::Linear { x, w, b } => {
                    if self.nodes[x.0].needs_grad {
                        acc(*x, g.dot(&self.value(*w).t()));
                    }
                    acc(*w, self.value(*x).t().dot(&g));
                    acc(*b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                Op::MatMul(a, b) => {
                    acc(*a, g.dot(&self.value(*b).t()));
                    acc(*b, self.value(*a).t().dot(&g));
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*b, -&g);
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    acc(*a, &g * self.value(*b));
                    acc(*b, &g * self.value(*a));
                }
                Op::Scale(a, c) => acc(*a, g * *c),
                Op::AddScaled(a, b, c) => {
                    acc(*b, &g * *c);
                    acc(*a, g);
                }
                Op::Relu(a) => {
                    let mut d = g;
                    Zip::from(&mut d).and(self.value(*a)).for_each(|d, &x| {
                        if x <= 0.0 {
                            *d = 0.0
                        }
                    });
                    acc(*a, d);
                }
                Op::Tanh(a) => {
                    let mut d = g;
                    Zip::from(&mut d).and(&node.value).for_each(|d, &y| *d *= 1.0 - y * y);
                    acc(*a, d);
                }
                Op::SoftClamp(a, c) => {
                    let mut d = g;
                    Zip::from(&mut d).and(&node.value).for_each(|d, &y| {
                        let t = y / c;
                        *d *= 1.0 - t * t
                    });
                    acc(*a, d);
                }
                Op::MulConst(a, m) => acc(*a, g * m),
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        acc(*p, g.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::StackRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let n = self.value(*p).nrows();
                        acc(*p, g.slice(s![start..start + n, ..]).to_owned());
                        start += n;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let mut d = Mat::zeros(self.value(*a).dim());
                    d.slice_mut(s![.., *start..*end]).assign(&g);
                    acc(*a, d);
                }
                Op::GatherRows(a, rows) => {
                    let mut d = Mat::zeros(self.value(*a).dim());
                    for (i, &r) in rows.iter().enumerate() {
                        let mut dr = d.row_mut(r);
                        dr += &g.row(i);
                    }
                    acc(*a, d);
                }
                Op::ScatterRows { base, rows, src } => {
                    acc(*src, g.select(Axis(0), rows));
                    let mut d = g;
                    for &r in rows {
                        d.row_mut(r).fill(0.0);
                    }
                    acc(*base, d);
                }
                Op::AddEmbed(a, x, k) => {
                    let xv = self.value(*x);
                    let k = *k;
                    let mut dx = Mat::zeros(xv.dim());
                    dx.slice_mut(s![.., ..k]).assign(&g.slice(s![.., ..k]));
                    acc(*x, dx);
                    acc(*a, g);
                }
                Op::Gram { a, d, m } => {
                    let (d, m) = (*d, *m);
                    let av = self.value(*a);
                    let mut da = Mat::zeros(av.dim());
                    for ((row, grow), mut out) in av.outer_iter().zip(g.outer_iter()).zip(da.outer_iter_mut()) {
                        // d(G G^T) : dG = (S + S^T) G with S the upstream adjoint
                        for i in 0..d {
                            for k in 0..m {
                                let mut acc_ik = 0.0;
                                for j in 0..d {
                                    acc_ik += (grow[i * d + j] + grow[j * d + i]) * row[j * m + k];
                                }
                                out[i * m + k] = acc_ik;
                            }
                        }
                    }
                    acc(*a, da);
                }
                Op::RowNorm(a) => {
                    let av = self.value(*a);
                    let mut d = Mat::zeros(av.dim());
                    for r in 0..av.nrows() {
                        let n = node.value[[r, 0]];
                        if n > 0.0 {
                            let f = g[[r, 0]] / n;
                            d.row_mut(r).zip_mut_with(&av.row(r), |d, &x| *d = f * x);
                        }
                    }
                    acc(*a, d);
                }
                Op::Square(a) => acc(*a, &g * &(self.value(*a) * 2.0)),
                Op::WeightedSum(a, w) => {
                    let av = self.value(*a);
                    let gs = g[[0, 0]];
                    let mut d = Mat::zeros(av.dim());
                    for (mut row, wi) in d.outer_iter_mut().zip(w) {
                        row.fill(gs * wi);
                    }
                    acc(*a, d);
                }
            }
        }
        params
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.or_else(|| {
                    let leaf = self.nodes.iter().find(|n| matches!(n.op, Op::Param(j) if j == i))?;
                    Some(Mat::zeros(leaf.value.dim()))
                })
                .ok_or_else(|| Error::Shape("unknown parameter".into()))
            })
            .collect()
    }
}

/// Evaluates `loss` on a fresh tape with `params` as leaves and returns the
/// loss value and its gradient with respect to every parameter.
pub fn grad<F>(params: &[Mat], loss: F) -> Result<(f64, Vec<Mat>)>
where
    F: FnOnce(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = loss(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    Ok((tape.scalar(out), grads))
}
