//! Reverse-mode automatic differentiation on a linear tape.
//!
//! A computation is recorded by appending nodes to a [`Tape`]; each node
//! stores the operation that produced it, the forward value, and a gradient
//! accumulator of the same length. [`Var`] is an index into the tape.
//! Because nodes are appended in evaluation order, every node's inputs have
//! smaller indices, so a single reverse sweep from the loss node visits the
//! graph in reverse topological order and each node is processed exactly
//! once. Graphs are rebuilt from scratch for every example (define-by-run).

use super::{DiffError, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    /// Matrix * matrix.
    MatMul(Var, Var),
    /// Matrix * column vector.
    MatVec(Var, Var),
    /// Row vector * matrix.
    VecMat(Var, Var),
    /// Inner product of two vectors; yields shape `[1]`.
    Dot(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    Ln(Var),
    Concat(Vec<Var>),
    Slice { src: Var, start: usize },
    Row { src: Var, row: usize },
    Pick { src: Var, index: usize },
    Sum(Var),
    Max { src: Var, arg: usize },
    Scale { src: Var, factor: f64 },
    /// Elementwise division of a vector by a `[1]`-shaped scalar.
    DivScalar { num: Var, den: Var },
    /// Same data, different shape.
    Reshape { src: Var },
}

struct Node {
    op: Op,
    value: Tensor,
    grad: Vec<f64>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        let grad = vec![0.0; value.len()];
        self.nodes.push(Node { op, value, grad });
        Var(self.nodes.len() - 1)
    }

    /// Records an input node. Leaves receive gradients but propagate nothing.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.leaf(Tensor::scalar(v))
    }

    /// Forward value of a node.
    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a node (zeros before `backward`).
    pub fn grad(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].grad
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    // ----- shape guards -------------------------------------------------

    fn want_vector(&self, op: &'static str, v: Var) -> Result<(), DiffError> {
        if !self.val(v).is_vector() {
            return Err(DiffError::BadShape {
                op,
                expected: "a vector",
                shape: self.val(v).shape().to_vec(),
            });
        }
        Ok(())
    }

    fn want_matrix(&self, op: &'static str, v: Var) -> Result<(), DiffError> {
        if !self.val(v).is_matrix() {
            return Err(DiffError::BadShape {
                op,
                expected: "a matrix",
                shape: self.val(v).shape().to_vec(),
            });
        }
        Ok(())
    }

    fn want_same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), DiffError> {
        if self.val(a).shape() != self.val(b).shape() {
            return Err(DiffError::ShapeMismatch {
                op,
                lhs: self.val(a).shape().to_vec(),
                rhs: self.val(b).shape().to_vec(),
            });
        }
        Ok(())
    }

    // ----- operations ---------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.want_matrix("matmul", a)?;
        self.want_matrix("matmul", b)?;
        let (m, k) = (self.val(a).rows(), self.val(a).cols());
        let (k2, n) = (self.val(b).rows(), self.val(b).cols());
        if k != k2 {
            return Err(DiffError::ShapeMismatch {
                op: "matmul",
                lhs: vec![m, k],
                rhs: vec![k2, n],
            });
        }
        let mut out = vec![0.0; m * n];
        let (av, bv) = (self.val(a).data(), self.val(b).data());
        for i in 0..m {
            for p in 0..k {
                let x = av[i * k + p];
                for j in 0..n {
                    out[i * n + j] += x * bv[p * n + j];
                }
            }
        }
        Ok(self.push(Op::MatMul(a, b), Tensor::new(vec![m, n], out)?))
    }

    pub fn matvec(&mut self, m: Var, v: Var) -> Result<Var, DiffError> {
        self.want_matrix("matvec", m)?;
        self.want_vector("matvec", v)?;
        let (rows, cols) = (self.val(m).rows(), self.val(m).cols());
        if cols != self.val(v).len() {
            return Err(DiffError::ShapeMismatch {
                op: "matvec",
                lhs: vec![rows, cols],
                rhs: self.val(v).shape().to_vec(),
            });
        }
        let mut out = vec![0.0; rows];
        let (mv, vv) = (self.val(m).data(), self.val(v).data());
        for r in 0..rows {
            let mut acc = 0.0;
            for c in 0..cols {
                acc += mv[r * cols + c] * vv[c];
            }
            out[r] = acc;
        }
        Ok(self.push(Op::MatVec(m, v), Tensor::vector(out)))
    }

    pub fn vecmat(&mut self, v: Var, m: Var) -> Result<Var, DiffError> {
        self.want_vector("vecmat", v)?;
        self.want_matrix("vecmat", m)?;
        let (rows, cols) = (self.val(m).rows(), self.val(m).cols());
        if rows != self.val(v).len() {
            return Err(DiffError::ShapeMismatch {
                op: "vecmat",
                lhs: self.val(v).shape().to_vec(),
                rhs: vec![rows, cols],
            });
        }
        let mut out = vec![0.0; cols];
        let (vv, mv) = (self.val(v).data(), self.val(m).data());
        for r in 0..rows {
            let x = vv[r];
            for c in 0..cols {
                out[c] += x * mv[r * cols + c];
            }
        }
        Ok(self.push(Op::VecMat(v, m), Tensor::vector(out)))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.want_vector("dot", a)?;
        self.want_vector("dot", b)?;
        self.want_same_shape("dot", a, b)?;
        let s: f64 = self
            .val(a)
            .data()
            .iter()
            .zip(self.val(b).data())
            .map(|(x, y)| x * y)
            .sum();
        Ok(self.push(Op::Dot(a, b), Tensor::scalar(s)))
    }

    fn zip(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, DiffError> {
        self.want_same_shape(op, a, b)?;
        let data: Vec<f64> = self
            .val(a)
            .data()
            .iter()
            .zip(self.val(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(self.val(a).shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let t = self.zip("add", a, b, |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), t))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let t = self.zip("sub", a, b, |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), t))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let t = self.zip("mul", a, b, |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), t))
    }

    fn map(&mut self, src: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let data: Vec<f64> = self.val(src).data().iter().map(|&x| f(x)).collect();
        Tensor::new(self.val(src).shape().to_vec(), data).expect("shape preserved")
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.map(x, |v| 1.0 / (1.0 + (-v).exp()));
        self.push(Op::Sigmoid(x), t)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.map(x, f64::tanh);
        self.push(Op::Tanh(x), t)
    }

    /// Numerically stable softmax over a non-empty vector.
    pub fn softmax(&mut self, x: Var) -> Result<Var, DiffError> {
        self.want_vector("softmax", x)?;
        if self.val(x).is_empty() {
            return Err(DiffError::EmptyInput { op: "softmax" });
        }
        let data = self.val(x).data();
        let m = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = data.iter().map(|&v| (v - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        let t = Tensor::vector(exps.into_iter().map(|e| e / z).collect());
        Ok(self.push(Op::Softmax(x), t))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let t = self.map(x, f64::ln);
        self.push(Op::Ln(x), t)
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        if parts.is_empty() {
            return Err(DiffError::EmptyInput { op: "concat" });
        }
        let mut data = Vec::new();
        for &p in parts {
            self.want_vector("concat", p)?;
            data.extend_from_slice(self.val(p).data());
        }
        Ok(self.push(Op::Concat(parts.to_vec()), Tensor::vector(data)))
    }

    /// Contiguous sub-vector `src[start .. start+len]`.
    pub fn slice(&mut self, src: Var, start: usize, len: usize) -> Result<Var, DiffError> {
        self.want_vector("slice", src)?;
        let n = self.val(src).len();
        if start + len > n {
            return Err(DiffError::BadShape {
                op: "slice",
                expected: "a range inside the source vector",
                shape: vec![start, len, n],
            });
        }
        let data = self.val(src).data()[start..start + len].to_vec();
        Ok(self.push(Op::Slice { src, start }, Tensor::vector(data)))
    }

    /// One row of a matrix, as a vector.
    pub fn row(&mut self, src: Var, row: usize) -> Result<Var, DiffError> {
        self.want_matrix("row", src)?;
        let (rows, cols) = (self.val(src).rows(), self.val(src).cols());
        if row >= rows {
            return Err(DiffError::BadShape {
                op: "row",
                expected: "a row index inside the matrix",
                shape: vec![row, rows, cols],
            });
        }
        let data = self.val(src).data()[row * cols..(row + 1) * cols].to_vec();
        Ok(self.push(Op::Row { src, row }, Tensor::vector(data)))
    }

    /// Single element of a vector as a `[1]` tensor.
    pub fn pick(&mut self, src: Var, index: usize) -> Result<Var, DiffError> {
        self.want_vector("pick", src)?;
        if index >= self.val(src).len() {
            return Err(DiffError::BadShape {
                op: "pick",
                expected: "an index inside the vector",
                shape: vec![index, self.val(src).len()],
            });
        }
        let v = self.val(src).data()[index];
        Ok(self.push(Op::Pick { src, index }, Tensor::scalar(v)))
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, src: Var) -> Result<Var, DiffError> {
        self.want_vector("sum", src)?;
        let s: f64 = self.val(src).data().iter().sum();
        Ok(self.push(Op::Sum(src), Tensor::scalar(s)))
    }

    /// Maximum element, as a `[1]` tensor. The subgradient flows to the
    /// first (lowest-index) maximal element.
    pub fn max(&mut self, src: Var) -> Result<Var, DiffError> {
        self.want_vector("max", src)?;
        if self.val(src).is_empty() {
            return Err(DiffError::EmptyInput { op: "max" });
        }
        let arg = self.val(src).argmax();
        let v = self.val(src).data()[arg];
        Ok(self.push(Op::Max { src, arg }, Tensor::scalar(v)))
    }

    pub fn scale(&mut self, src: Var, factor: f64) -> Var {
        let t = self.map(src, |v| v * factor);
        self.push(Op::Scale { src, factor }, t)
    }

    /// Elementwise `num / den` where `den` has shape `[1]`.
    pub fn div_scalar(&mut self, num: Var, den: Var) -> Result<Var, DiffError> {
        self.want_vector("div_scalar", num)?;
        if self.val(den).len() != 1 {
            return Err(DiffError::BadShape {
                op: "div_scalar",
                expected: "a [1]-shaped divisor",
                shape: self.val(den).shape().to_vec(),
            });
        }
        let d = self.val(den).item();
        let t = self.map(num, |v| v / d);
        Ok(self.push(Op::DivScalar { num, den }, t))
    }

    /// Reinterprets a node's data under a new shape with the same element
    /// count.
    pub fn reshape(&mut self, src: Var, shape: Vec<usize>) -> Result<Var, DiffError> {
        let want: usize = shape.iter().product();
        if want != self.val(src).len() {
            return Err(DiffError::BadShape {
                op: "reshape",
                expected: "a shape with the same element count",
                shape,
            });
        }
        let t = Tensor::new(shape, self.val(src).data().to_vec())?;
        Ok(self.push(Op::Reshape { src }, t))
    }

    // ----- backward -----------------------------------------------------

    /// Accumulates `d loss / d node` into every node's gradient buffer.
    ///
    /// `loss` must be scalar-shaped. Each call propagates through a fresh
    /// scratch buffer and then *adds* the result, so calling `backward` on
    /// several losses recorded on one tape sums their gradients.
    pub fn backward(&mut self, loss: Var) -> Result<(), DiffError> {
        if self.val(loss).len() != 1 {
            return Err(DiffError::NonScalarLoss {
                shape: self.val(loss).shape().to_vec(),
            });
        }
        let mut adj: Vec<Vec<f64>> = self.nodes[..=loss.0]
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        adj[loss.0][0] = 1.0;
        for id in (0..=loss.0).rev() {
            // Split the adjoints so this node's can be read while its
            // inputs' (always at smaller indices) are updated.
            let (head, tail) = adj.split_at_mut(id);
            let g: &[f64] = &tail[0];
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (m, k) = (self.nodes[a.0].value.rows(), self.nodes[a.0].value.cols());
                    let n = self.nodes[b.0].value.cols();
                    let av = self.nodes[a.0].value.data();
                    let bv = self.nodes[b.0].value.data();
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += g[i * n + j] * bv[p * n + j];
                            }
                            head[a.0][i * k + p] += acc;
                        }
                    }
                    for p in 0..k {
                        for j in 0..n {
                            let mut acc = 0.0;
                            for i in 0..m {
                                acc += av[i * k + p] * g[i * n + j];
                            }
                            head[b.0][p * n + j] += acc;
                        }
                    }
                }
                Op::MatVec(m_, v_) => {
                    let (rows, cols) = (self.nodes[m_.0].value.rows(), self.nodes[m_.0].value.cols());
                    let mv = self.nodes[m_.0].value.data();
                    let vv = self.nodes[v_.0].value.data();
                    for r in 0..rows {
                        let gr = g[r];
                        for c in 0..cols {
                            head[m_.0][r * cols + c] += gr * vv[c];
                        }
                    }
                    for c in 0..cols {
                        let mut acc = 0.0;
                        for r in 0..rows {
                            acc += mv[r * cols + c] * g[r];
                        }
                        head[v_.0][c] += acc;
                    }
                }
                Op::VecMat(v_, m_) => {
                    let (rows, cols) = (self.nodes[m_.0].value.rows(), self.nodes[m_.0].value.cols());
                    let mv = self.nodes[m_.0].value.data();
                    let vv = self.nodes[v_.0].value.data();
                    for r in 0..rows {
                        let mut acc = 0.0;
                        for c in 0..cols {
                            acc += mv[r * cols + c] * g[c];
                        }
                        head[v_.0][r] += acc;
                    }
                    for r in 0..rows {
                        let x = vv[r];
                        for c in 0..cols {
                            head[m_.0][r * cols + c] += x * g[c];
                        }
                    }
                }
                Op::Dot(a, b) => {
                    let gs = g[0];
                    let av = self.nodes[a.0].value.data();
                    let bv = self.nodes[b.0].value.data();
                    for (ga, y) in head[a.0].iter_mut().zip(bv) {
                        *ga += gs * y;
                    }
                    for (gb, x) in head[b.0].iter_mut().zip(av) {
                        *gb += gs * x;
                    }
                }
                Op::Add(a, b) => {
                    for (i, &gi) in g.iter().enumerate() {
                        head[a.0][i] += gi;
                    }
                    for (i, &gi) in g.iter().enumerate() {
                        head[b.0][i] += gi;
                    }
                }
                Op::Sub(a, b) => {
                    for (i, &gi) in g.iter().enumerate() {
                        head[a.0][i] += gi;
                    }
                    for (i, &gi) in g.iter().enumerate() {
                        head[b.0][i] -= gi;
                    }
                }
                Op::Mul(a, b) => {
                    let av = self.nodes[a.0].value.data();
                    let bv = self.nodes[b.0].value.data();
                    for (i, &gi) in g.iter().enumerate() {
                        head[a.0][i] += gi * bv[i];
                    }
                    for (i, &gi) in g.iter().enumerate() {
                        head[b.0][i] += gi * av[i];
                    }
                }
                Op::Sigmoid(x) => {
                    let y = node.value.data();
                    for i in 0..g.len() {
                        head[x.0][i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                }
                Op::Tanh(x) => {
                    let y = node.value.data();
                    for i in 0..g.len() {
                        head[x.0][i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                }
                Op::Softmax(x) => {
                    let y = node.value.data();
                    let gy: f64 = g.iter().zip(y).map(|(gi, yi)| gi * yi).sum();
                    for i in 0..g.len() {
                        head[x.0][i] += y[i] * (g[i] - gy);
                    }
                }
                Op::Ln(x) => {
                    let xv = self.nodes[x.0].value.data();
                    for (i, &gi) in g.iter().enumerate() {
                        head[x.0][i] += gi / xv[i];
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.nodes[p.0].value.len();
                        for i in 0..n {
                            head[p.0][i] += g[off + i];
                        }
                        off += n;
                    }
                }
                Op::Slice { src, start } => {
                    for (i, &gi) in g.iter().enumerate() {
                        head[src.0][start + i] += gi;
                    }
                }
                Op::Row { src, row } => {
                    let cols = self.nodes[src.0].value.cols();
                    for (i, &gi) in g.iter().enumerate() {
                        head[src.0][row * cols + i] += gi;
                    }
                }
                Op::Pick { src, index } => {
                    head[src.0][*index] += g[0];
                }
                Op::Sum(src) => {
                    let gs = g[0];
                    for gi in head[src.0].iter_mut() {
                        *gi += gs;
                    }
                }
                Op::Max { src, arg } => {
                    head[src.0][*arg] += g[0];
                }
                Op::Scale { src, factor } => {
                    for (i, &gi) in g.iter().enumerate() {
                        head[src.0][i] += gi * factor;
                    }
                }
                Op::Reshape { src } => {
                    for (i, &gi) in g.iter().enumerate() {
                        head[src.0][i] += gi;
                    }
                }
                Op::DivScalar { num, den } => {
                    let d = self.nodes[den.0].value.item();
                    let nv = self.nodes[num.0].value.data();
                    let mut den_acc = 0.0;
                    for (i, &gi) in g.iter().enumerate() {
                        head[num.0][i] += gi / d;
                        den_acc -= gi * nv[i] / (d * d);
                    }
                    head[den.0][0] += den_acc;
                }
            }
        }
        for (node, a) in self.nodes.iter_mut().zip(adj) {
            for (g, d) in node.grad.iter_mut().zip(a) {
                *g += d;
            }
        }
        Ok(())
    }
}
