use std::collections::{BTreeMap, HashMap};

use super::{ParamId, ParamSet, Tensor, TensorError};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Storage {
    Owned(Vec<f64>),
    Param(ParamId),
}

enum Op {
    Leaf,
    Param,
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulScalar(Var, Var),
    OneMinus(Var),
    Tanh(Var),
    Sigmoid(Var),
    Log(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    ConcatCols(Vec<Var>),
    StackRows(Vec<Var>),
    Slice(Var, usize),
    GatherRows(Var, Vec<usize>),
    Sum(Var),
    Pick(Var, usize),
    Pad(Var),
    ScatterAdd(Var, Vec<usize>),
}

struct Node {
    shape: Vec<usize>,
    storage: Storage,
    op: Op,
    requires_grad: bool,
}

/// Gradient buffer of one node. Embedding lookups produce row-sparse
/// gradients so large tables are never densified per example.
#[derive(Clone, Debug, PartialEq)]
pub enum GradBuf {
    Dense(Vec<f64>),
    Rows {
        cols: usize,
        rows: BTreeMap<usize, Vec<f64>>,
    },
}

impl GradBuf {
    pub fn to_dense(&self, numel: usize) -> Vec<f64> {
        match self {
            GradBuf::Dense(g) => g.clone(),
            GradBuf::Rows { cols, rows } => {
                let mut out = vec![0.0; numel];
                for (r, g) in rows {
                    out[r * cols..(r + 1) * cols].copy_from_slice(g);
                }
                out
            }
        }
    }
}

fn dense_slot(slot: &mut Option<GradBuf>, numel: usize) -> &mut Vec<f64> {
    if let Some(GradBuf::Rows { .. }) = slot {
        let dense = slot.as_ref().unwrap().to_dense(numel);
        *slot = Some(GradBuf::Dense(dense));
    }
    match slot.get_or_insert_with(|| GradBuf::Dense(vec![0.0; numel])) {
        GradBuf::Dense(g) => g,
        GradBuf::Rows { .. } => unreachable!(),
    }
}

/// Result of [`Graph::backward`]: gradients of every leaf that requires them.
pub struct Gradients {
    nodes: Vec<Option<GradBuf>>,
    numels: Vec<usize>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Dense gradient with respect to a leaf, or `None` if it does not
    /// influence the loss or does not require gradients.
    pub fn wrt(&self, v: Var) -> Option<Vec<f64>> {
        self.nodes[v.0].as_ref().map(|b| b.to_dense(self.numels[v.0]))
    }

    pub fn param(&self, id: ParamId) -> Option<Vec<f64>> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|(_, v)| self.wrt(*v))
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &GradBuf)> {
        self.params
            .iter()
            .filter_map(|(p, v)| self.nodes[v.0].as_ref().map(|b| (*p, b)))
    }
}

/// Operation tape for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so the tape is a topological order
/// by construction and backward walks it once in reverse.
pub struct Graph<'p> {
    nodes: Vec<Node>,
    params: Option<&'p ParamSet>,
    param_vars: HashMap<ParamId, Var>,
    param_grads: bool,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Graph<'p> {
    /// A graph without parameters; leaves come from [`Graph::leaf`].
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: None,
            param_vars: HashMap::new(),
            param_grads: false,
        }
    }

    /// A graph that reads parameters from `params` and differentiates them.
    pub fn with_params(params: &'p ParamSet) -> Self {
        Self {
            params: Some(params),
            param_grads: true,
            ..Self::new()
        }
    }

    /// A graph that reads parameters but records no parameter gradients.
    pub fn inference(params: &'p ParamSet) -> Self {
        Self {
            params: Some(params),
            param_grads: false,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn numel(&self, v: Var) -> usize {
        self.nodes[v.0].shape.iter().product()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match &self.nodes[v.0].storage {
            Storage::Owned(d) => d,
            Storage::Param(id) => self
                .params
                .expect("param node without a parameter set")
                .get(*id)
                .data(),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec())
            .expect("graph nodes always hold consistent shapes")
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a leaf holding a copy of `t`; differentiable iff
    /// `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            storage: Storage::Owned(t.data().to_vec()),
            op: Op::Leaf,
            requires_grad: t.requires_grad(),
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a non-differentiable leaf.
    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var, TensorError> {
        let t = Tensor::new(shape.to_vec(), data)?;
        Ok(self.leaf(&t))
    }

    /// Node for a registered parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars.get(&id) {
            return *v;
        }
        let params = self.params.expect("graph has no parameter set");
        let shape = params.get(id).shape().to_vec();
        self.nodes.push(Node {
            shape,
            storage: Storage::Param(id),
            op: Op::Param,
            requires_grad: self.param_grads,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    fn push(
        &mut self,
        name: &'static str,
        shape: Vec<usize>,
        data: Vec<f64>,
        op: Op,
        parents: &[Var],
    ) -> Result<Var, TensorError> {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        if data.iter().any(|x| !x.is_finite()) {
            return Err(TensorError::NonFinite(name));
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            shape,
            storage: Storage::Owned(data),
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> TensorError {
        TensorError::ShapeMismatch {
            op,
            left: self.shape(a).to_vec(),
            right: self.shape(b).to_vec(),
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        if self.shape(a) == self.shape(b) {
            Ok(())
        } else {
            Err(self.mismatch(op, a, b))
        }
    }

    /// Matrix product. A rank-1 left operand is a row vector, a rank-1 right
    /// operand a column vector; the corresponding output axis is dropped.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (m, k) = match sa.as_slice() {
            [k] => (1, *k),
            [m, k] => (*m, *k),
            _ => return Err(TensorError::UnsupportedRank(sa)),
        };
        let (k2, n) = match sb.as_slice() {
            [k] => (*k, 1),
            [k, n] => (*k, *n),
            _ => return Err(TensorError::UnsupportedRank(sb)),
        };
        if k != k2 {
            return Err(self.mismatch("matmul", a, b));
        }
        let shape = match (sa.len(), sb.len()) {
            (2, 2) => vec![m, n],
            (2, 1) => vec![m],
            (1, 2) => vec![n],
            _ => vec![1],
        };
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![0.0; m * n];
        if n == 1 {
            for (i, o) in out.iter_mut().enumerate() {
                let row = &av[i * k..(i + 1) * k];
                let mut acc = 0.0;
                for (x, y) in row.iter().zip(bv) {
                    acc += x * y;
                }
                *o = acc;
            }
        } else {
            for i in 0..m {
                let orow = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    let aip = av[i * k + p];
                    if aip == 0.0 {
                        continue;
                    }
                    let brow = &bv[p * n..(p + 1) * n];
                    for (o, bj) in orow.iter_mut().zip(brow) {
                        *o += aip * bj;
                    }
                }
            }
        }
        self.push("matmul", shape, out, Op::MatMul { a, b, m, k, n }, &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let s = self.shape(a).to_vec();
        let (m, n) = match s.as_slice() {
            [m, n] => (*m, *n),
            _ => return Err(TensorError::UnsupportedRank(s)),
        };
        let av = self.value(a);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = av[i * n + j];
            }
        }
        self.push("transpose", vec![n, m], out, Op::Transpose(a), &[a])
    }

    fn zip_with(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var, TensorError> {
        self.same_shape(name, a, b)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(name, shape, out, op, &[a, b])
    }

    fn map(
        &mut self,
        name: &'static str,
        a: Var,
        op: Op,
        f: impl Fn(f64) -> f64,
    ) -> Result<Var, TensorError> {
        let out = self.value(a).iter().map(|x| f(*x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(name, shape, out, op, &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds the vector `row` to every row of matrix `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, TensorError> {
        let (sa, sr) = (self.shape(a).to_vec(), self.shape(row).to_vec());
        match (sa.as_slice(), sr.as_slice()) {
            ([_, n], [n2]) if n == n2 => {}
            _ => return Err(self.mismatch("add_row", a, row)),
        }
        let n = sa[1];
        let rv = self.value(row);
        let out = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(i, x)| x + rv[i % n])
            .collect();
        self.push("add_row", sa, out, Op::AddRow(a, row), &[a, row])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, TensorError> {
        self.map("scale", a, Op::Scale(a, c), |x| x * c)
    }

    /// Multiplies every element of `a` by the single-element tensor `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var, TensorError> {
        if self.numel(s) != 1 {
            return Err(TensorError::NotScalar(self.shape(s).to_vec()));
        }
        let c = self.scalar(s);
        let out = self.value(a).iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        self.push("mul_scalar", shape, out, Op::MulScalar(a, s), &[a, s])
    }

    pub fn one_minus(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map("one_minus", a, Op::OneMinus(a), |x| 1.0 - x)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map("tanh", a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map("sigmoid", a, Op::Sigmoid(a), sigmoid)
    }

    pub fn log(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map("log", a, Op::Log(a), f64::ln)
    }

    /// Softmax of a vector, computed with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        let s = self.shape(a).to_vec();
        if s.len() != 1 || s[0] == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "softmax",
                left: s,
                right: vec![],
            });
        }
        let out = softmax(self.value(a));
        self.push("softmax", s, out, Op::Softmax(a), &[a])
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let mut out = Vec::new();
        for &p in parts {
            if self.shape(p).len() != 1 {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    left: self.shape(p).to_vec(),
                    right: vec![],
                });
            }
            out.extend_from_slice(self.value(p));
        }
        let n = out.len();
        self.push("concat", vec![n], out, Op::Concat(parts.to_vec()), parts)
    }

    /// Joins matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let rows = match parts.first().map(|p| self.shape(*p)) {
            Some([r, _]) => *r,
            _ => {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    left: vec![],
                    right: vec![],
                })
            }
        };
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            match self.shape(p) {
                [r, c] if *r == rows => widths.push(*c),
                _ => return Err(self.mismatch("concat_cols", parts[0], p)),
            }
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[r * w..(r + 1) * w]);
            }
        }
        self.push(
            "concat_cols",
            vec![rows, total],
            out,
            Op::ConcatCols(parts.to_vec()),
            parts,
        )
    }

    /// Stacks equally long vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var, TensorError> {
        let n = match rows.first() {
            Some(r) => self.numel(*r),
            None => {
                return Err(TensorError::ShapeMismatch {
                    op: "stack_rows",
                    left: vec![],
                    right: vec![],
                })
            }
        };
        let mut out = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if self.shape(r) != [n] {
                return Err(self.mismatch("stack_rows", rows[0], r));
            }
            out.extend_from_slice(self.value(r));
        }
        self.push(
            "stack_rows",
            vec![rows.len(), n],
            out,
            Op::StackRows(rows.to_vec()),
            rows,
        )
    }

    /// Contiguous sub-vector `[start, start + len)`.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let s = self.shape(a).to_vec();
        if s.len() != 1 || start + len > s[0] {
            return Err(TensorError::IndexOutOfRange {
                index: start + len,
                len: s.iter().product(),
            });
        }
        let out = self.value(a)[start..start + len].to_vec();
        self.push("slice", vec![len], out, Op::Slice(a, start), &[a])
    }

    /// Selects rows of a matrix; the result is `[ids.len() x cols]`.
    pub fn gather_rows(&mut self, a: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let (rows, cols) = match self.shape(a) {
            [r, c] => (*r, *c),
            s => return Err(TensorError::UnsupportedRank(s.to_vec())),
        };
        let av = self.value(a);
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(TensorError::IndexOutOfRange {
                    index: id,
                    len: rows,
                });
            }
            out.extend_from_slice(&av[id * cols..(id + 1) * cols]);
        }
        self.push(
            "gather_rows",
            vec![ids.len(), cols],
            out,
            Op::GatherRows(a, ids.to_vec()),
            &[a],
        )
    }

    /// Single row of a matrix as a vector.
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var, TensorError> {
        let g = self.gather_rows(a, &[i])?;
        let n = self.numel(g);
        self.nodes[g.0].shape = vec![n];
        Ok(g)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let s: f64 = self.value(a).iter().sum();
        self.push("sum", vec![1], vec![s], Op::Sum(a), &[a])
    }

    /// Element `i` of a vector as a scalar.
    pub fn pick(&mut self, a: Var, i: usize) -> Result<Var, TensorError> {
        let n = self.numel(a);
        if i >= n {
            return Err(TensorError::IndexOutOfRange { index: i, len: n });
        }
        let x = self.value(a)[i];
        self.push("pick", vec![1], vec![x], Op::Pick(a, i), &[a])
    }

    /// Extends a vector with trailing zeros up to `len`.
    pub fn pad(&mut self, a: Var, len: usize) -> Result<Var, TensorError> {
        let n = self.numel(a);
        if len < n || self.shape(a).len() != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "pad",
                left: self.shape(a).to_vec(),
                right: vec![len],
            });
        }
        let mut out = self.value(a).to_vec();
        out.resize(len, 0.0);
        self.push("pad", vec![len], out, Op::Pad(a), &[a])
    }

    /// `out[index[i]] += a[i]` into a zero vector of length `size`.
    pub fn scatter_add(
        &mut self,
        a: Var,
        index: &[usize],
        size: usize,
    ) -> Result<Var, TensorError> {
        if self.shape(a) != [index.len()] {
            return Err(TensorError::ShapeMismatch {
                op: "scatter_add",
                left: self.shape(a).to_vec(),
                right: vec![index.len()],
            });
        }
        let mut out = vec![0.0; size];
        for (x, &i) in self.value(a).iter().zip(index) {
            if i >= size {
                return Err(TensorError::IndexOutOfRange { index: i, len: size });
            }
            out[i] += x;
        }
        self.push(
            "scatter_add",
            vec![size],
            out,
            Op::ScatterAdd(a, index.to_vec()),
            &[a],
        )
    }

    /// Reverse pass from a single-element `loss`.
    ///
    /// Gradients are returned fresh for every call; accumulation across
    /// passes happens in [`ParamSet::accumulate`] and [`Tensor::accumulate_grad`].
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        if self.numel(loss) != 1 {
            return Err(TensorError::NotScalar(self.shape(loss).to_vec()));
        }
        let numels: Vec<usize> = self
            .nodes
            .iter()
            .map(|n| n.shape.iter().product())
            .collect();
        let mut grads: Vec<Option<GradBuf>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(GradBuf::Dense(vec![1.0]));
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf | Op::Param) {
                continue;
            }
            let Some(buf) = grads[i].take() else {
                continue;
            };
            let g = match buf {
                GradBuf::Dense(g) => g,
                other => other.to_dense(numels[i]),
            };
            self.backprop_node(i, &g, &mut grads, &numels);
        }
        let params = self.param_vars.iter().map(|(p, v)| (*p, *v)).collect();
        let mut params: Vec<(ParamId, Var)> = params;
        params.sort();
        Ok(Gradients {
            nodes: grads,
            numels,
            params,
        })
    }

    fn backprop_node(
        &self,
        i: usize,
        g: &[f64],
        grads: &mut [Option<GradBuf>],
        numels: &[usize],
    ) {
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let out = self.value(Var(i));
        macro_rules! slot {
            ($v:expr) => {
                dense_slot(&mut grads[$v.0], numels[$v.0])
            };
        }
        match &self.nodes[i].op {
            Op::Leaf | Op::Param => {}
            &Op::MatMul { a, b, m, k, n } => {
                let av = self.value(a);
                let bv = self.value(b);
                if wants(a) {
                    let da = slot!(a);
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            let mut acc = 0.0;
                            for (x, y) in grow.iter().zip(brow) {
                                acc += x * y;
                            }
                            da[r * k + p] += acc;
                        }
                    }
                }
                if wants(b) {
                    let db = slot!(b);
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let arp = av[r * k + p];
                            if arp == 0.0 {
                                continue;
                            }
                            for (d, x) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *d += arp * x;
                            }
                        }
                    }
                }
            }
            &Op::Transpose(a) => {
                if wants(a) {
                    let (m, n) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                    let da = slot!(a);
                    for r in 0..m {
                        for c in 0..n {
                            da[r * n + c] += g[c * m + r];
                        }
                    }
                }
            }
            &Op::Add(a, b) => {
                for v in [a, b] {
                    if wants(v) {
                        add_into(slot!(v), g);
                    }
                }
            }
            &Op::Sub(a, b) => {
                if wants(a) {
                    add_into(slot!(a), g);
                }
                if wants(b) {
                    for (d, x) in slot!(b).iter_mut().zip(g) {
                        *d -= x;
                    }
                }
            }
            &Op::AddRow(a, row) => {
                if wants(a) {
                    add_into(slot!(a), g);
                }
                if wants(row) {
                    let n = numels[row.0];
                    let dr = slot!(row);
                    for (j, x) in g.iter().enumerate() {
                        dr[j % n] += x;
                    }
                }
            }
            &Op::Mul(a, b) => {
                if wants(a) {
                    let bv = self.value(b);
                    for ((d, x), y) in slot!(a).iter_mut().zip(g).zip(bv) {
                        *d += x * y;
                    }
                }
                if wants(b) {
                    let av = self.value(a);
                    for ((d, x), y) in slot!(b).iter_mut().zip(g).zip(av) {
                        *d += x * y;
                    }
                }
            }
            &Op::Scale(a, c) => {
                if wants(a) {
                    for (d, x) in slot!(a).iter_mut().zip(g) {
                        *d += c * x;
                    }
                }
            }
            &Op::MulScalar(a, s) => {
                let c = self.scalar(s);
                if wants(a) {
                    for (d, x) in slot!(a).iter_mut().zip(g) {
                        *d += c * x;
                    }
                }
                if wants(s) {
                    let av = self.value(a);
                    let dot: f64 = g.iter().zip(av).map(|(x, y)| x * y).sum();
                    slot!(s)[0] += dot;
                }
            }
            &Op::OneMinus(a) => {
                if wants(a) {
                    for (d, x) in slot!(a).iter_mut().zip(g) {
                        *d -= x;
                    }
                }
            }
            &Op::Tanh(a) => {
                if wants(a) {
                    for ((d, x), y) in slot!(a).iter_mut().zip(g).zip(out) {
                        *d += x * (1.0 - y * y);
                    }
                }
            }
            &Op::Sigmoid(a) => {
                if wants(a) {
                    for ((d, x), y) in slot!(a).iter_mut().zip(g).zip(out) {
                        *d += x * y * (1.0 - y);
                    }
                }
            }
            &Op::Log(a) => {
                if wants(a) {
                    let av = self.value(a);
                    for ((d, x), y) in slot!(a).iter_mut().zip(g).zip(av) {
                        *d += x / y;
                    }
                }
            }
            &Op::Softmax(a) => {
                if wants(a) {
                    let dot: f64 = g.iter().zip(out).map(|(x, y)| x * y).sum();
                    for ((d, x), y) in slot!(a).iter_mut().zip(g).zip(out) {
                        *d += y * (x - dot);
                    }
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = numels[p.0];
                    if wants(p) {
                        add_into(slot!(p), &g[off..off + n]);
                    }
                    off += n;
                }
            }
            Op::ConcatCols(parts) => {
                let rows = self.nodes[i].shape[0];
                let total = self.nodes[i].shape[1];
                let mut off = 0;
                for &p in parts {
                    let w = self.nodes[p.0].shape[1];
                    if wants(p) {
                        let dp = slot!(p);
                        for r in 0..rows {
                            add_into(
                                &mut dp[r * w..(r + 1) * w],
                                &g[r * total + off..r * total + off + w],
                            );
                        }
                    }
                    off += w;
                }
            }
            Op::StackRows(rows) => {
                for (r, &p) in rows.iter().enumerate() {
                    if wants(p) {
                        let n = numels[p.0];
                        add_into(slot!(p), &g[r * n..(r + 1) * n]);
                    }
                }
            }
            &Op::Slice(a, start) => {
                if wants(a) {
                    add_into(&mut slot!(a)[start..start + g.len()], g);
                }
            }
            Op::GatherRows(a, ids) => {
                let a = *a;
                if wants(a) {
                    let cols = self.nodes[a.0].shape[1];
                    let slot = &mut grads[a.0];
                    match slot {
                        Some(GradBuf::Dense(d)) => {
                            for (r, &id) in ids.iter().enumerate() {
                                add_into(
                                    &mut d[id * cols..(id + 1) * cols],
                                    &g[r * cols..(r + 1) * cols],
                                );
                            }
                        }
                        _ => {
                            let buf = slot.get_or_insert_with(|| GradBuf::Rows {
                                cols,
                                rows: BTreeMap::new(),
                            });
                            if let GradBuf::Rows { rows, .. } = buf {
                                for (r, &id) in ids.iter().enumerate() {
                                    let e = rows.entry(id).or_insert_with(|| vec![0.0; cols]);
                                    add_into(e, &g[r * cols..(r + 1) * cols]);
                                }
                            }
                        }
                    }
                }
            }
            &Op::Sum(a) => {
                if wants(a) {
                    for d in slot!(a).iter_mut() {
                        *d += g[0];
                    }
                }
            }
            &Op::Pick(a, idx) => {
                if wants(a) {
                    slot!(a)[idx] += g[0];
                }
            }
            &Op::Pad(a) => {
                if wants(a) {
                    let n = numels[a.0];
                    add_into(slot!(a), &g[..n]);
                }
            }
            Op::ScatterAdd(a, index) => {
                let a = *a;
                if wants(a) {
                    for (d, &j) in slot!(a).iter_mut().zip(index) {
                        *d += g[j];
                    }
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= z);
    out
}
