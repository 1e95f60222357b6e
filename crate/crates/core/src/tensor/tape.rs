use super::{cosine, dot, matmul_into, norm, Result, Tensor, TensorError, NORM_EPS};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which slices a normalization runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Every row is normalized independently (runs across columns).
    WithinRow,
    /// Every column is normalized independently (runs across rows).
    WithinColumn,
}

/// Slices with `max - min` below this are treated as constant.
const TIE_EPS: f64 = 1e-12;
/// Slices whose sum has magnitude below this normalize to uniform.
const SUM_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRowBroadcast(Var, Var),
    Relu(Var),
    Transpose(Var),
    ConcatCols(Var, Var),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    L2NormalizeRows(Var),
    CosineSim(Var, Var),
    MinMax { input: Var, axis: Axis, grad: bool },
    L1Normalize(Var, Axis),
    SumPool(Var),
    Sum(Var),
    Stack(Vec<Var>),
    ContrastiveCce(Var),
    WeightedSum(Vec<(Var, f64)>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Records operations in execution order so that a single reverse sweep can
/// produce gradients.
///
/// A tape supports exactly one [`Tape::backward`] call; after that it is
/// finalized and must be [`Tape::reset`] before recording again.
#[derive(Debug, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    finalized: bool,
    grad_through_norm: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

/// Gradients produced by one backward sweep, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if `v` required one and was
    /// reachable from the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`] but yields zeros for unreachable inputs.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

fn rows_cols(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

fn require_matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    if t.shape().len() != 2 {
        return Err(TensorError::dim(op, format!("expected a matrix, got shape {:?}", t.shape())));
    }
    Ok(rows_cols(t))
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            finalized: false,
            grad_through_norm: true,
        }
    }

    /// Controls whether min-max normalization passes gradients (default on).
    pub fn with_grad_through_norm(mut self, on: bool) -> Self {
        self.grad_through_norm = on;
        self
    }

    pub fn grad_through_norm(&self) -> bool {
        self.grad_through_norm
    }

    /// Clears all recorded nodes so the tape can be reused.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.finalized = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Result<Var> {
        if self.finalized {
            return Err(TensorError::State(
                "tape already consumed by backward; reset it before recording".into(),
            ));
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        if self.finalized {
            return Err(TensorError::State(
                "tape already consumed by backward; reset it before recording".into(),
            ));
        }
        self.nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(out, Op::MatMul(a, b), &[a, b])
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(TensorError::dim(
                op,
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_map(a, b, |x, y| x + y);
        self.push(out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_map(a, b, |x, y| x - y);
        self.push(out, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_map(a, b, |x, y| x * y);
        self.push(out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x * factor);
        self.push(out, Op::Scale(a, factor), &[a])
    }

    /// Adds a length-`c` bias to every row of an `r x c` matrix.
    pub fn add_row_broadcast(&mut self, m: Var, bias: Var) -> Result<Var> {
        let (r, c) = require_matrix("add_row_broadcast", self.value(m))?;
        if self.value(bias).numel() != c {
            return Err(TensorError::dim(
                "add_row_broadcast",
                format!("bias of {} values for {} columns", self.value(bias).numel(), c),
            ));
        }
        let mut out = self.value(m).clone();
        let b = self.value(bias).data().to_vec();
        for i in 0..r {
            for j in 0..c {
                out.data_mut()[i * c + j] += b[j];
            }
        }
        self.push(out, Op::AddRowBroadcast(m, bias), &[m, bias])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        require_matrix("transpose", self.value(a))?;
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a), &[a])
    }

    /// `[a | b]` for matrices with equal row counts.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = require_matrix("concat_cols", self.value(a))?;
        let (rb, cb) = require_matrix("concat_cols", self.value(b))?;
        if ra != rb {
            return Err(TensorError::dim("concat_cols", format!("{} vs {} rows", ra, rb)));
        }
        let (ta, tb) = (self.value(a), self.value(b));
        let mut data = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            data.extend_from_slice(ta.row(i));
            data.extend_from_slice(tb.row(i));
        }
        let out = Tensor::new(vec![ra, ca + cb], data)?;
        self.push(out, Op::ConcatCols(a, b), &[a, b])
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = require_matrix("slice_rows", self.value(a))?;
        if start >= end || end > r {
            return Err(TensorError::dim("slice_rows", format!("{}..{} of {} rows", start, end, r)));
        }
        let data = self.value(a).data()[start * c..end * c].to_vec();
        let out = Tensor::new(vec![end - start, c], data)?;
        self.push(out, Op::SliceRows(a, start), &[a])
    }

    /// Row lookup, e.g. an embedding table indexed by token ids.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (r, c) = require_matrix("gather_rows", self.value(table))?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= r) {
            return Err(TensorError::dim("gather_rows", format!("index {} out of {} rows", bad, r)));
        }
        let t = self.value(table);
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::new(vec![indices.len(), c], data)?;
        self.push(out, Op::GatherRows(table, indices.to_vec()), &[table])
    }

    /// Scales each row to unit Euclidean norm; near-zero rows become zero.
    pub fn l2_normalize_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = require_matrix("l2_normalize_rows", self.value(a))?;
        let mut out = self.value(a).clone();
        for i in 0..r {
            let row = &mut out.data_mut()[i * c..(i + 1) * c];
            let n = norm(row);
            if n < NORM_EPS {
                row.iter_mut().for_each(|x| *x = 0.0);
            } else {
                row.iter_mut().for_each(|x| *x /= n);
            }
        }
        self.push(out, Op::L2NormalizeRows(a), &[a])
    }

    /// Cosine similarity of two equal-length tensors, as a scalar.
    pub fn cosine_sim(&mut self, u: Var, v: Var) -> Result<Var> {
        let (tu, tv) = (self.value(u), self.value(v));
        if tu.numel() != tv.numel() {
            return Err(TensorError::dim(
                "cosine_sim",
                format!("lengths {} and {}", tu.numel(), tv.numel()),
            ));
        }
        let out = Tensor::scalar(cosine(tu.data(), tv.data()));
        self.push(out, Op::CosineSim(u, v), &[u, v])
    }

    /// Pairwise cosine matrix between the rows of `x` (`r x d`) and `y` (`c x d`).
    pub fn cosine_matrix(&mut self, x: Var, y: Var) -> Result<Var> {
        let dx = require_matrix("cosine_matrix", self.value(x))?.1;
        let dy = require_matrix("cosine_matrix", self.value(y))?.1;
        if dx != dy {
            return Err(TensorError::dim("cosine_matrix", format!("widths {} and {}", dx, dy)));
        }
        let xn = self.l2_normalize_rows(x)?;
        let yn = self.l2_normalize_rows(y)?;
        let yt = self.transpose(yn)?;
        self.matmul(xn, yt)
    }

    /// Maps each slice to `(x - min) / (max - min)`; constant slices map to zero.
    pub fn min_max_normalize(&mut self, m: Var, axis: Axis) -> Result<Var> {
        require_matrix("min_max_normalize", self.value(m))?;
        let out = apply_along(self.value(m), axis, min_max_slice);
        let grad = self.grad_through_norm;
        self.push(out, Op::MinMax { input: m, axis, grad }, &[m])
    }

    /// Divides each slice by its sum; zero-sum slices become uniform.
    pub fn l1_normalize(&mut self, m: Var, axis: Axis) -> Result<Var> {
        require_matrix("l1_normalize", self.value(m))?;
        let out = apply_along(self.value(m), axis, l1_slice);
        self.push(out, Op::L1Normalize(m, axis), &[m])
    }

    /// Column-wise sum of an `r x d` matrix, giving a length-`d` vector.
    pub fn sum_pool(&mut self, m: Var) -> Result<Var> {
        let (r, c) = require_matrix("sum_pool", self.value(m))?;
        if r == 0 {
            return Err(TensorError::dim("sum_pool", "empty input"));
        }
        let t = self.value(m);
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, x) in out.iter_mut().zip(t.row(i)) {
                *o += x;
            }
        }
        self.push(Tensor::vector(out), Op::SumPool(m), &[m])
    }

    /// Sum of every element, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), &[a])
    }

    /// Packs scalar vars into a tensor of the given shape, row-major.
    pub fn stack(&mut self, scalars: &[Var], shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != scalars.len() {
            return Err(TensorError::dim("stack", format!("{} scalars into {:?}", scalars.len(), shape)));
        }
        let mut data = Vec::with_capacity(n);
        for &s in scalars {
            let t = self.value(s);
            if !t.is_scalar() {
                return Err(TensorError::dim("stack", format!("non-scalar input {:?}", t.shape())));
            }
            data.push(t.item());
        }
        let out = Tensor::new(shape.to_vec(), data)?;
        self.push(out, Op::Stack(scalars.to_vec()), scalars)
    }

    /// Symmetric cross-entropy over a square similarity matrix whose diagonal
    /// holds the matched pairs. Row `q` is query `q`, column `k` candidate `k`.
    pub fn contrastive_cce(&mut self, s: Var) -> Result<Var> {
        let (r, c) = require_matrix("contrastive_cce", self.value(s))?;
        if r != c || r == 0 {
            return Err(TensorError::Contract(format!(
                "contrastive loss needs a non-empty square matrix, got {}x{}",
                r, c
            )));
        }
        let (_, _, loss) = cce_parts(self.value(s));
        self.push(Tensor::scalar(loss), Op::ContrastiveCce(s), &[s])
    }

    /// `sum_i w_i * s_i` over scalar vars.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        if terms.is_empty() {
            return Err(TensorError::Contract("weighted_sum of no terms".into()));
        }
        let mut total = 0.0;
        for &(v, w) in terms {
            let t = self.value(v);
            if !t.is_scalar() {
                return Err(TensorError::dim("weighted_sum", format!("non-scalar input {:?}", t.shape())));
            }
            total += w * t.item();
        }
        let parents: Vec<Var> = terms.iter().map(|t| t.0).collect();
        self.push(Tensor::scalar(total), Op::WeightedSum(terms.to_vec()), &parents)
    }

    /// Runs the reverse sweep from a scalar `loss` and finalizes the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.finalized {
            return Err(TensorError::State("backward already ran on this tape".into()));
        }
        if !self.value(loss).is_scalar() {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.finalized = true;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accum(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.requires_grad(*a) {
                    // dA = dC * B^T
                    let bt = tb.transpose();
                    let mut da = vec![0.0; m * k];
                    matmul_into(g.data(), bt.data(), &mut da, m, n, k);
                    self.accum(grads, *a, Tensor::new(vec![m, k], da).unwrap());
                }
                if self.requires_grad(*b) {
                    // dB = A^T * dC
                    let at = ta.transpose();
                    let mut db = vec![0.0; k * n];
                    matmul_into(at.data(), g.data(), &mut db, k, m, n);
                    self.accum(grads, *b, Tensor::new(vec![k, n], db).unwrap());
                }
            }
            Op::Add(a, b) => {
                self.accum(grads, *a, g.clone());
                self.accum(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accum(grads, *a, g.clone());
                self.accum(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    let d = g.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                    self.accum(grads, *a, Tensor::new(ta.shape().to_vec(), d).unwrap());
                }
                if self.requires_grad(*b) {
                    let d = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                    self.accum(grads, *b, Tensor::new(tb.shape().to_vec(), d).unwrap());
                }
            }
            Op::Scale(a, f) => self.accum(grads, *a, g.map(|x| x * f)),
            Op::AddRowBroadcast(m, bias) => {
                self.accum(grads, *m, g.clone());
                if self.requires_grad(*bias) {
                    let (r, c) = rows_cols(g);
                    let mut db = vec![0.0; c];
                    for i in 0..r {
                        for (d, x) in db.iter_mut().zip(g.row(i)) {
                            *d += x;
                        }
                    }
                    let shape = self.value(*bias).shape().to_vec();
                    self.accum(grads, *bias, Tensor::new(shape, db).unwrap());
                }
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                let d = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                    .collect();
                self.accum(grads, *a, Tensor::new(x.shape().to_vec(), d).unwrap());
            }
            Op::Transpose(a) => self.accum(grads, *a, g.transpose()),
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                let r = g.rows();
                let mut da = Vec::with_capacity(r * ca);
                let mut db = Vec::with_capacity(r * cb);
                for i in 0..r {
                    let row = g.row(i);
                    da.extend_from_slice(&row[..ca]);
                    db.extend_from_slice(&row[ca..]);
                }
                self.accum(grads, *a, Tensor::new(vec![r, ca], da).unwrap());
                self.accum(grads, *b, Tensor::new(vec![r, cb], db).unwrap());
            }
            Op::SliceRows(a, start) => {
                let src = self.value(*a);
                let c = src.cols();
                let mut d = Tensor::zeros(src.shape());
                d.data_mut()[start * c..start * c + g.numel()].copy_from_slice(g.data());
                self.accum(grads, *a, d);
            }
            Op::GatherRows(table, indices) => {
                let src = self.value(*table);
                let c = src.cols();
                let mut d = Tensor::zeros(src.shape());
                for (k, &i) in indices.iter().enumerate() {
                    let dst = &mut d.data_mut()[i * c..(i + 1) * c];
                    for (o, x) in dst.iter_mut().zip(g.row(k)) {
                        *o += x;
                    }
                }
                self.accum(grads, *table, d);
            }
            Op::L2NormalizeRows(a) => {
                let x = self.value(*a);
                let y = &node.value;
                let (r, c) = rows_cols(x);
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    let n = norm(x.row(i));
                    if n < NORM_EPS {
                        continue;
                    }
                    let (yi, gi) = (y.row(i), g.row(i));
                    let yg = dot(yi, gi);
                    for j in 0..c {
                        d[i * c + j] = (gi[j] - yi[j] * yg) / n;
                    }
                }
                self.accum(grads, *a, Tensor::new(x.shape().to_vec(), d).unwrap());
            }
            Op::CosineSim(u, v) => {
                let (tu, tv) = (self.value(*u), self.value(*v));
                let (nu, nv) = (norm(tu.data()), norm(tv.data()));
                if nu < NORM_EPS || nv < NORM_EPS {
                    return;
                }
                let gs = g.item();
                let c = node.value.item();
                let du = tu
                    .data()
                    .iter()
                    .zip(tv.data())
                    .map(|(&a, &b)| gs * (b / (nu * nv) - c * a / (nu * nu)))
                    .collect();
                let dv = tv
                    .data()
                    .iter()
                    .zip(tu.data())
                    .map(|(&b, &a)| gs * (a / (nu * nv) - c * b / (nv * nv)))
                    .collect();
                self.accum(grads, *u, Tensor::new(tu.shape().to_vec(), du).unwrap());
                self.accum(grads, *v, Tensor::new(tv.shape().to_vec(), dv).unwrap());
            }
            Op::MinMax { input, axis, grad } => {
                if !grad {
                    return;
                }
                let d = backward_along(self.value(*input), &node.value, g, *axis, min_max_slice_grad);
                self.accum(grads, *input, d);
            }
            Op::L1Normalize(input, axis) => {
                let d = backward_along(self.value(*input), &node.value, g, *axis, l1_slice_grad);
                self.accum(grads, *input, d);
            }
            Op::SumPool(m) => {
                let src = self.value(*m);
                let (r, c) = rows_cols(src);
                let mut d = Vec::with_capacity(r * c);
                for _ in 0..r {
                    d.extend_from_slice(g.data());
                }
                self.accum(grads, *m, Tensor::new(src.shape().to_vec(), d).unwrap());
            }
            Op::Sum(a) => {
                let src = self.value(*a);
                self.accum(grads, *a, Tensor::full(src.shape(), g.item()));
            }
            Op::Stack(parts) => {
                for (k, &p) in parts.iter().enumerate() {
                    let shape = self.value(p).shape().to_vec();
                    self.accum(grads, p, Tensor::full(&shape, g.data()[k]));
                }
            }
            Op::ContrastiveCce(s) => {
                let sv = self.value(*s);
                let b = sv.rows();
                let (col_lse, row_lse, _) = cce_parts(sv);
                let scale = g.item() / (2.0 * b as f64);
                let mut d = vec![0.0; b * b];
                for i in 0..b {
                    for j in 0..b {
                        let x = sv.get(i, j);
                        let p_col = (x - col_lse[j]).exp();
                        let p_row = (x - row_lse[i]).exp();
                        let diag = if i == j { 2.0 } else { 0.0 };
                        d[i * b + j] = scale * (p_col + p_row - diag);
                    }
                }
                self.accum(grads, *s, Tensor::new(vec![b, b], d).unwrap());
            }
            Op::WeightedSum(terms) => {
                for &(v, w) in terms {
                    let shape = self.value(v).shape().to_vec();
                    self.accum(grads, v, Tensor::full(&shape, w * g.item()));
                }
            }
        }
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Per-column and per-row log-sum-exp plus the loss value.
fn cce_parts(s: &Tensor) -> (Vec<f64>, Vec<f64>, f64) {
    let b = s.rows();
    let col_lse: Vec<f64> = (0..b).map(|k| log_sum_exp((0..b).map(|q| s.get(q, k)))).collect();
    let row_lse: Vec<f64> = (0..b).map(|k| log_sum_exp((0..b).map(|q| s.get(k, q)))).collect();
    let mut total = 0.0;
    for k in 0..b {
        let diag = s.get(k, k);
        total += (diag - col_lse[k]) + (diag - row_lse[k]);
    }
    let loss = -total / (2.0 * b as f64);
    (col_lse, row_lse, loss)
}

fn apply_along(m: &Tensor, axis: Axis, f: fn(&[f64], &mut [f64])) -> Tensor {
    match axis {
        Axis::WithinRow => {
            let (r, c) = rows_cols(m);
            let mut out = Tensor::zeros(m.shape());
            for i in 0..r {
                f(m.row(i), &mut out.data_mut()[i * c..(i + 1) * c]);
            }
            out
        }
        Axis::WithinColumn => apply_along(&m.transpose(), Axis::WithinRow, f).transpose(),
    }
}

type SliceGrad = fn(x: &[f64], y: &[f64], g: &[f64], dx: &mut [f64]);

fn backward_along(x: &Tensor, y: &Tensor, g: &Tensor, axis: Axis, f: SliceGrad) -> Tensor {
    match axis {
        Axis::WithinRow => {
            let (r, c) = rows_cols(x);
            let mut d = Tensor::zeros(x.shape());
            for i in 0..r {
                f(x.row(i), y.row(i), g.row(i), &mut d.data_mut()[i * c..(i + 1) * c]);
            }
            d
        }
        Axis::WithinColumn => {
            backward_along(&x.transpose(), &y.transpose(), &g.transpose(), Axis::WithinRow, f).transpose()
        }
    }
}

fn arg_extremes(x: &[f64]) -> (usize, usize) {
    let (mut lo, mut hi) = (0, 0);
    for (i, &v) in x.iter().enumerate() {
        if v < x[lo] {
            lo = i;
        }
        if v > x[hi] {
            hi = i;
        }
    }
    (lo, hi)
}

fn min_max_slice(x: &[f64], out: &mut [f64]) {
    let (lo, hi) = arg_extremes(x);
    let range = x[hi] - x[lo];
    if range < TIE_EPS {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - x[lo]) / range;
    }
}

fn min_max_slice_grad(x: &[f64], y: &[f64], g: &[f64], dx: &mut [f64]) {
    let (lo, hi) = arg_extremes(x);
    let range = x[hi] - x[lo];
    if range < TIE_EPS {
        return;
    }
    let g_sum: f64 = g.iter().sum();
    let gy = dot(g, y);
    for (d, &gv) in dx.iter_mut().zip(g) {
        *d = gv / range;
    }
    dx[lo] -= (g_sum - gy) / range;
    dx[hi] -= gy / range;
}

fn l1_slice(x: &[f64], out: &mut [f64]) {
    let s: f64 = x.iter().sum();
    if s.abs() < SUM_EPS {
        let u = 1.0 / x.len() as f64;
        out.iter_mut().for_each(|o| *o = u);
        return;
    }
    for (o, &v) in out.iter_mut().zip(x) {
        *o = v / s;
    }
}

fn l1_slice_grad(x: &[f64], y: &[f64], g: &[f64], dx: &mut [f64]) {
    let s: f64 = x.iter().sum();
    if s.abs() < SUM_EPS {
        return;
    }
    let gy = dot(g, y);
    for (d, &gv) in dx.iter_mut().zip(g) {
        *d = (gv - gy) / s;
    }
}
