//! Reverse-mode differentiation over a fixed vocabulary of matrix ops.
//!
//! Every node is a row-major `rows x cols` matrix. Parameters are borrowed, not
//! copied, so one set of weights can back many tapes at once (one per batch
//! member). Scalar losses computed outside the tape (CTC, alignment and
//! teacher-student terms) are attached with [`Tape::external`], which records
//! the analytic gradient of the loss with respect to its inputs.

use std::borrow::Cow;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    LogSoftmaxRows(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    StackRows(Vec<Var>),
    Row(Var, usize),
    Sum(Var),
    External(Vec<(Var, Vec<f64>)>),
}

#[derive(Debug)]
struct Node<'p> {
    rows: usize,
    cols: usize,
    value: Cow<'p, [f64]>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

/// Gradients of one scalar with respect to every node of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads[v.0].take()
    }
}

fn shape_err(what: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::Shape(format!("{what}: {}x{} vs {}x{}", a.0, a.1, b.0, b.1))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Cow<'p, [f64]>, op: Op) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node { rows, cols, value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Borrowed leaf; gradients for it are available after [`Tape::backward`].
    pub fn param(&mut self, rows: usize, cols: usize, values: &'p [f64]) -> Result<Var> {
        if rows * cols != values.len() {
            return Err(Error::Shape(format!("param {rows}x{cols} with {} values", values.len())));
        }
        Ok(self.push(rows, cols, Cow::Borrowed(values), Op::Leaf))
    }

    pub fn constant(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Result<Var> {
        if rows * cols != values.len() {
            return Err(Error::Shape(format!("constant {rows}x{cols} with {} values", values.len())));
        }
        Ok(self.push(rows, cols, Cow::Owned(values), Op::Leaf))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(shape_err("matmul", (m, k), (k2, n)));
        }
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for (p, &aip) in av[i * k..(i + 1) * k].iter().enumerate() {
                if aip == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, &bpj) in orow.iter_mut().zip(brow) {
                    *o += aip * bpj;
                }
            }
        }
        Ok(self.push(m, n, Cow::Owned(out), Op::MatMul(a, b)))
    }

    fn zip_same(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(what, self.shape(a), self.shape(b)));
        }
        Ok(self.nodes[a.0]
            .value
            .iter()
            .zip(self.nodes[b.0].value.iter())
            .map(|(&x, &y)| f(x, y))
            .collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "add", |x, y| x + y)?;
        let (r, c) = self.shape(a);
        Ok(self.push(r, c, Cow::Owned(out), Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let (r, c) = self.shape(a);
        Ok(self.push(r, c, Cow::Owned(out), Op::Mul(a, b)))
    }

    /// `a + 1ᵀ·row`: adds a 1×n row to every row of an m×n matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        let (r1, n2) = self.shape(row);
        if r1 != 1 || n2 != n {
            return Err(shape_err("add_row", (m, n), (r1, n2)));
        }
        let bias = &self.nodes[row.0].value;
        let mut out = self.nodes[a.0].value.to_vec();
        for chunk in out.chunks_mut(n.max(1)) {
            for (o, &b) in chunk.iter_mut().zip(bias.iter()) {
                *o += b;
            }
        }
        Ok(self.push(m, n, Cow::Owned(out), Op::AddRow(a, row)))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let (r, c) = self.shape(a);
        let out = self.nodes[a.0].value.iter().map(|&x| scale * x + shift).collect();
        self.push(r, c, Cow::Owned(out), Op::Affine(a, scale))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.shape(a);
        let out = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        self.push(r, c, Cow::Owned(out), op)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let mut out = self.nodes[a.0].value.to_vec();
        for row in out.chunks_mut(c.max(1)) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|x| *x -= lse);
        }
        self.push(r, c, Cow::Owned(out), Op::LogSoftmaxRows(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start + len > c {
            return Err(Error::Shape(format!("slice {start}..{} of {c} columns", start + len)));
        }
        let v = &self.nodes[a.0].value;
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&v[i * c + start..i * c + start + len]);
        }
        Ok(self.push(r, len, Cow::Owned(out), Op::SliceCols(a, start)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let r = self.shape(*parts.first().ok_or(Error::Empty("concat_cols"))?).0;
        if parts.iter().any(|&p| self.shape(p).0 != r) {
            return Err(Error::Shape("concat_cols row mismatch".into()));
        }
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                let c = self.nodes[p.0].cols;
                out.extend_from_slice(&self.nodes[p.0].value[i * c..(i + 1) * c]);
            }
        }
        Ok(self.push(r, total, Cow::Owned(out), Op::ConcatCols(parts.to_vec())))
    }

    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let c = self.shape(*parts.first().ok_or(Error::Empty("stack_rows"))?).1;
        if parts.iter().any(|&p| self.shape(p).1 != c) {
            return Err(Error::Shape("stack_rows column mismatch".into()));
        }
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            out.extend_from_slice(&self.nodes[p.0].value);
            rows += self.nodes[p.0].rows;
        }
        Ok(self.push(rows, c, Cow::Owned(out), Op::StackRows(parts.to_vec())))
    }

    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if i >= r {
            return Err(Error::Shape(format!("row {i} of {r}")));
        }
        let out = self.nodes[a.0].value[i * c..(i + 1) * c].to_vec();
        Ok(self.push(1, c, Cow::Owned(out), Op::Row(a, i)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.iter().sum();
        self.push(1, 1, Cow::Owned(vec![s]), Op::Sum(a))
    }

    /// Scalar computed outside the tape, with its gradient wrt each input.
    pub fn external(&mut self, value: f64, inputs: Vec<(Var, Vec<f64>)>) -> Result<Var> {
        for (v, g) in &inputs {
            if g.len() != self.nodes[v.0].value.len() {
                return Err(Error::Shape(format!(
                    "external gradient of length {} for node of length {}",
                    g.len(),
                    self.nodes[v.0].value.len()
                )));
            }
        }
        Ok(self.push(1, 1, Cow::Owned(vec![value]), Op::External(inputs)))
    }

    /// Gradients of the scalar `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.shape(output) != (1, 1) {
            return Err(Error::Shape("backward from a non-scalar".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let (rows, cols) = (node.rows, node.cols);
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (m, k) = self.shape(*a);
                    let n = cols;
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    {
                        let ga = acc(&mut grads, *a, m * k);
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                let brow = &bv[p * n..(p + 1) * n];
                                ga[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                            }
                        }
                    }
                    let gb = acc(&mut grads, *b, k * n);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = av[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            for (o, &x) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += aip * x;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        let ga = acc(&mut grads, v, g.len());
                        ga.iter_mut().zip(&g).for_each(|(o, x)| *o += x);
                    }
                }
                Op::AddRow(a, row) => {
                    {
                        let ga = acc(&mut grads, *a, g.len());
                        ga.iter_mut().zip(&g).for_each(|(o, x)| *o += x);
                    }
                    let gr = acc(&mut grads, *row, cols);
                    for chunk in g.chunks(cols.max(1)) {
                        gr.iter_mut().zip(chunk).for_each(|(o, x)| *o += x);
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let bv = &self.nodes[b.0].value;
                    {
                        let ga = acc(&mut grads, a, g.len());
                        for ((o, x), y) in ga.iter_mut().zip(&g).zip(bv.iter()) {
                            *o += x * y;
                        }
                    }
                    let av = &self.nodes[a.0].value;
                    let gb = acc(&mut grads, b, g.len());
                    for ((o, x), y) in gb.iter_mut().zip(&g).zip(av.iter()) {
                        *o += x * y;
                    }
                }
                Op::Affine(a, scale) => {
                    let ga = acc(&mut grads, *a, g.len());
                    ga.iter_mut().zip(&g).for_each(|(o, x)| *o += scale * x);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let ga = acc(&mut grads, *a, g.len());
                    for ((o, x), &y) in ga.iter_mut().zip(&g).zip(y.iter()) {
                        *o += x * y * (1.0 - y);
                    }
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let ga = acc(&mut grads, *a, g.len());
                    for ((o, x), &y) in ga.iter_mut().zip(&g).zip(y.iter()) {
                        *o += x * (1.0 - y * y);
                    }
                }
                Op::Exp(a) => {
                    let y = &node.value;
                    let ga = acc(&mut grads, *a, g.len());
                    for ((o, x), &y) in ga.iter_mut().zip(&g).zip(y.iter()) {
                        *o += x * y;
                    }
                }
                Op::LogSoftmaxRows(a) => {
                    let y = &node.value;
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..rows {
                        let gr = &g[i * cols..(i + 1) * cols];
                        let yr = &y[i * cols..(i + 1) * cols];
                        let total: f64 = gr.iter().sum();
                        for j in 0..cols {
                            ga[i * cols + j] += gr[j] - yr[j].exp() * total;
                        }
                    }
                }
                Op::SliceCols(a, start) => {
                    let src_cols = self.nodes[a.0].cols;
                    let ga = acc(&mut grads, *a, rows * src_cols);
                    for i in 0..rows {
                        for j in 0..cols {
                            ga[i * src_cols + start + j] += g[i * cols + j];
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.nodes[p.0].cols;
                        let gp = acc(&mut grads, p, rows * pc);
                        for i in 0..rows {
                            for j in 0..pc {
                                gp[i * pc + j] += g[i * cols + offset + j];
                            }
                        }
                        offset += pc;
                    }
                }
                Op::StackRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.nodes[p.0].value.len();
                        let gp = acc(&mut grads, p, len);
                        gp.iter_mut().zip(&g[offset..offset + len]).for_each(|(o, x)| *o += x);
                        offset += len;
                    }
                }
                Op::Row(a, i) => {
                    let len = self.nodes[a.0].value.len();
                    let ga = acc(&mut grads, *a, len);
                    ga[i * cols..(i + 1) * cols].iter_mut().zip(&g).for_each(|(o, x)| *o += x);
                }
                Op::Sum(a) => {
                    let len = self.nodes[a.0].value.len();
                    let ga = acc(&mut grads, *a, len);
                    ga.iter_mut().for_each(|o| *o += g[0]);
                }
                Op::External(inputs) => {
                    for (v, dg) in inputs {
                        let gv = acc(&mut grads, *v, dg.len());
                        gv.iter_mut().zip(dg).for_each(|(o, x)| *o += g[0] * x);
                    }
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }
}
