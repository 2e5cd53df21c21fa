//! Reverse-mode automatic differentiation over dense real vectors.
//!
//! A [`Tape`] records one forward pass per minibatch; node values live in a
//! single flat arena so clearing the tape between optimizer steps reuses the
//! allocation. Parameters live in a [`ParamStore`] with per-array Adam
//! moments; a tape references them through leaf nodes, and
//! [`Tape::backward`] accumulates gradients per parameter array.
//!
//! The op catalog is exactly what the two MLPs and the losses need. Binary
//! elementwise ops broadcast a length-1 operand against a vector.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Handle to a recorded node: index into its tape plus the vector length.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    pub id: u32,
    pub len: u32,
}

/// Handle to a named parameter array in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(pub u32);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AdError {
    ShapeMismatch { op: &'static str, lhs: usize, rhs: usize },
    /// Division by a value with magnitude below 1e-12.
    NumericalDomain { op: &'static str },
    NonScalarRoot { len: usize },
}

impl core::fmt::Display for AdError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            AdError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "shape mismatch in {op}: {lhs} vs {rhs}")
            }
            AdError::NumericalDomain { op } => write!(f, "numerical domain error in {op}"),
            AdError::NonScalarRoot { len } => {
                write!(f, "backward root must be scalar, got length {len}")
            }
        }
    }
}

/// Operation kinds accepted by [`Tape::record`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Sin,
    Cos,
    Abs,
    Square,
    Sqrt,
    Min,
    Max,
    Softplus,
    Sigmoid,
    /// `a` is a row-major matrix with `a.len = rows * b.len`; result has
    /// length `rows`.
    MatVec,
    Dot,
    Sum,
    Mean,
    ClampMin(f64),
    Concat,
    /// Contiguous sub-vector `[start, start+len)` of the input.
    Slice { start: u32, len: u32 },
}

#[derive(Clone, Copy, Debug)]
enum Node {
    Const,
    Param(ParamId),
    Unary { kind: OpKind, a: u32 },
    Binary { kind: OpKind, a: u32, b: u32 },
}

struct NodeRec {
    node: Node,
    off: usize,
    len: usize,
}

/// Append-only record of one differentiable program.
pub struct Tape {
    nodes: Vec<NodeRec>,
    values: Vec<f64>,
    grad: Vec<f64>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), values: Vec::new(), grad: Vec::new() }
    }

    /// Drop all recorded nodes, keeping allocations for the next pass.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.values.clear();
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    pub fn value(&self, v: Var) -> &[f64] {
        let rec = &self.nodes[v.id as usize];
        &self.values[rec.off..rec.off + rec.len]
    }

    #[inline]
    pub fn scalar_value(&self, v: Var) -> f64 {
        debug_assert_eq!(v.len, 1);
        self.value(v)[0]
    }

    fn push(&mut self, node: Node, len: usize) -> Var {
        let off = self.values.len();
        self.values.resize(off + len, 0.0);
        let id = self.nodes.len() as u32;
        self.nodes.push(NodeRec { node, off, len });
        Var { id, len: len as u32 }
    }

    pub fn constant(&mut self, data: &[f64]) -> Var {
        let v = self.push(Node::Const, data.len());
        let rec = &self.nodes[v.id as usize];
        self.values[rec.off..rec.off + rec.len].copy_from_slice(data);
        v
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.constant(&[x])
    }

    /// Load a parameter array as a differentiable leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let data = store.data(id);
        let v = self.push(Node::Param(id), data.len());
        let rec = &self.nodes[v.id as usize];
        self.values[rec.off..rec.off + rec.len].copy_from_slice(data);
        v
    }

    /// Record one operation, validating shapes (and the divisor domain for
    /// `Div`).
    pub fn record(&mut self, kind: OpKind, a: Var, b: Option<Var>) -> Result<Var, AdError> {
        use OpKind::*;
        match kind {
            Add | Sub | Mul | Div | Min | Max => {
                let b = b.ok_or(AdError::ShapeMismatch { op: "binary", lhs: a.len as usize, rhs: 0 })?;
                let out_len = if a.len == b.len {
                    a.len
                } else if a.len == 1 {
                    b.len
                } else if b.len == 1 {
                    a.len
                } else {
                    return Err(AdError::ShapeMismatch {
                        op: op_name(kind),
                        lhs: a.len as usize,
                        rhs: b.len as usize,
                    });
                };
                if kind == Div {
                    let denom = self.value(b);
                    if denom.iter().any(|d| math::abs(*d) < 1e-12) {
                        return Err(AdError::NumericalDomain { op: "div" });
                    }
                }
                let out = self.push(Node::Binary { kind, a: a.id, b: b.id }, out_len as usize);
                self.eval_binary(kind, a, b, out);
                Ok(out)
            }
            Neg | Exp | Sin | Cos | Abs | Square | Sqrt | Softplus | Sigmoid => {
                let out = self.push(Node::Unary { kind, a: a.id }, a.len as usize);
                self.eval_unary(kind, a, out);
                Ok(out)
            }
            ClampMin(_) => {
                let out = self.push(Node::Unary { kind, a: a.id }, a.len as usize);
                self.eval_unary(kind, a, out);
                Ok(out)
            }
            MatVec => {
                let x = b.ok_or(AdError::ShapeMismatch { op: "matvec", lhs: a.len as usize, rhs: 0 })?;
                if x.len == 0 || a.len % x.len != 0 {
                    return Err(AdError::ShapeMismatch {
                        op: "matvec",
                        lhs: a.len as usize,
                        rhs: x.len as usize,
                    });
                }
                let rows = (a.len / x.len) as usize;
                let out = self.push(Node::Binary { kind, a: a.id, b: x.id }, rows);
                self.eval_binary(kind, a, x, out);
                Ok(out)
            }
            Dot => {
                let b = b.ok_or(AdError::ShapeMismatch { op: "dot", lhs: a.len as usize, rhs: 0 })?;
                if a.len != b.len {
                    return Err(AdError::ShapeMismatch {
                        op: "dot",
                        lhs: a.len as usize,
                        rhs: b.len as usize,
                    });
                }
                let out = self.push(Node::Binary { kind, a: a.id, b: b.id }, 1);
                self.eval_binary(kind, a, b, out);
                Ok(out)
            }
            Sum | Mean => {
                let out = self.push(Node::Unary { kind, a: a.id }, 1);
                self.eval_unary(kind, a, out);
                Ok(out)
            }
            Concat => {
                let b = b.ok_or(AdError::ShapeMismatch { op: "concat", lhs: a.len as usize, rhs: 0 })?;
                let out =
                    self.push(Node::Binary { kind, a: a.id, b: b.id }, (a.len + b.len) as usize);
                self.eval_binary(kind, a, b, out);
                Ok(out)
            }
            Slice { start, len } => {
                if start + len > a.len {
                    return Err(AdError::ShapeMismatch {
                        op: "slice",
                        lhs: a.len as usize,
                        rhs: (start + len) as usize,
                    });
                }
                let out = self.push(Node::Unary { kind, a: a.id }, len as usize);
                self.eval_unary(kind, a, out);
                Ok(out)
            }
        }
    }

    fn eval_unary(&mut self, kind: OpKind, a: Var, out: Var) {
        let a_rec = (self.nodes[a.id as usize].off, self.nodes[a.id as usize].len);
        let out_rec = (self.nodes[out.id as usize].off, self.nodes[out.id as usize].len);
        let (before, after) = self.values.split_at_mut(out_rec.0);
        let ain = &before[a_rec.0..a_rec.0 + a_rec.1];
        let o = &mut after[..out_rec.1];
        use OpKind::*;
        match kind {
            Neg => {
                for (y, x) in o.iter_mut().zip(ain) {
                    *y = -*x;
                }
            }
            Exp => {
                for (y, x) in o.iter_mut().zip(ain) {
                    *y = math::exp(*x);
                }
            }
            Sin => {
                for (y, x) in o.iter_mut().zip(ain) {
                    *y = math::sin(*x);
                }
            }
            Cos => {
                for (y, x) in o.iter_mut().zip(ain) {
                    *y = math::cos(*x);
                }
            }
            Abs => {
                for (y, x) in o.iter_mut().zip(ain) {
                    *y = math::abs(*x);
                }
            }
            Square => {
                for (y, x) in o.iter_mut().zip(ain) {
                    *y = *x * *x;
                }
            }
            Sqrt => {
                for (y, x) in o.iter_mut().zip(ain) {
                    *y = math::sqrt(*x);
                }
            }
            Softplus => {
                for (y, x) in o.iter_mut().zip(ain) {
                    *y = math::softplus(*x);
                }
            }
            Sigmoid => {
                for (y, x) in o.iter_mut().zip(ain) {
                    *y = math::sigmoid(*x);
                }
            }
            ClampMin(lo) => {
                for (y, x) in o.iter_mut().zip(ain) {
                    *y = x.max(lo);
                }
            }
            Sum => o[0] = ain.iter().sum(),
            Mean => o[0] = ain.iter().sum::<f64>() / ain.len() as f64,
            Slice { start, .. } => {
                o.copy_from_slice(&ain[start as usize..start as usize + out_rec.1]);
            }
            _ => unreachable!("not unary: {kind:?}"),
        }
    }

    fn eval_binary(&mut self, kind: OpKind, a: Var, b: Var, out: Var) {
        let a_rec = (self.nodes[a.id as usize].off, self.nodes[a.id as usize].len);
        let b_rec = (self.nodes[b.id as usize].off, self.nodes[b.id as usize].len);
        let out_rec = (self.nodes[out.id as usize].off, self.nodes[out.id as usize].len);
        let (before, after) = self.values.split_at_mut(out_rec.0);
        let ain = &before[a_rec.0..a_rec.0 + a_rec.1];
        let bin = &before[b_rec.0..b_rec.0 + b_rec.1];
        let o = &mut after[..out_rec.1];
        use OpKind::*;
        match kind {
            Add | Sub | Mul | Div | Min | Max => {
                let n = o.len();
                for i in 0..n {
                    let x = ain[if ain.len() == 1 { 0 } else { i }];
                    let y = bin[if bin.len() == 1 { 0 } else { i }];
                    o[i] = match kind {
                        Add => x + y,
                        Sub => x - y,
                        Mul => x * y,
                        Div => x / y,
                        Min => x.min(y),
                        Max => x.max(y),
                        _ => unreachable!(),
                    };
                }
            }
            MatVec => {
                let cols = bin.len();
                for (r, y) in o.iter_mut().enumerate() {
                    *y = math::dot4(&ain[r * cols..(r + 1) * cols], bin);
                }
            }
            Dot => {
                o[0] = math::dot4(ain, bin);
            }
            Concat => {
                o[..ain.len()].copy_from_slice(ain);
                o[ain.len()..].copy_from_slice(bin);
            }
            _ => unreachable!("not binary: {kind:?}"),
        }
    }

    /// Reverse sweep from a scalar root; returns per-parameter gradients.
    /// Leaves with no path to the root get zero gradient.
    pub fn backward(&mut self, root: Var, store: &ParamStore) -> Result<Gradients, AdError> {
        if root.len != 1 {
            return Err(AdError::NonScalarRoot { len: root.len as usize });
        }
        self.grad.clear();
        self.grad.resize(self.values.len(), 0.0);
        let root_off = self.nodes[root.id as usize].off;
        self.grad[root_off] = 1.0;

        let mut out = Gradients::zeros_like(store);

        for idx in (0..=root.id as usize).rev() {
            let rec = &self.nodes[idx];
            let (off, len) = (rec.off, rec.len);
            match rec.node {
                Node::Const => {}
                Node::Param(pid) => {
                    let g = &self.grad[off..off + len];
                    let acc = &mut out.per_param[pid.0 as usize];
                    for i in 0..len {
                        acc[i] += g[i];
                    }
                }
                Node::Unary { kind, a } => {
                    let a_rec = (self.nodes[a as usize].off, self.nodes[a as usize].len);
                    let (gbefore, gafter) = self.grad.split_at_mut(off);
                    let g = &gafter[..len];
                    let ga = &mut gbefore[a_rec.0..a_rec.0 + a_rec.1];
                    let ain = &self.values[a_rec.0..a_rec.0 + a_rec.1];
                    let oval = &self.values[off..off + len];
                    use OpKind::*;
                    match kind {
                        Neg => {
                            for i in 0..len {
                                ga[i] -= g[i];
                            }
                        }
                        Exp => {
                            for i in 0..len {
                                ga[i] += g[i] * oval[i];
                            }
                        }
                        Sin => {
                            for i in 0..len {
                                ga[i] += g[i] * math::cos(ain[i]);
                            }
                        }
                        Cos => {
                            for i in 0..len {
                                ga[i] -= g[i] * math::sin(ain[i]);
                            }
                        }
                        Abs => {
                            for i in 0..len {
                                let s = if ain[i] > 0.0 {
                                    1.0
                                } else if ain[i] < 0.0 {
                                    -1.0
                                } else {
                                    0.0
                                };
                                ga[i] += g[i] * s;
                            }
                        }
                        Square => {
                            for i in 0..len {
                                ga[i] += g[i] * 2.0 * ain[i];
                            }
                        }
                        Sqrt => {
                            for i in 0..len {
                                ga[i] += g[i] * 0.5 / oval[i];
                            }
                        }
                        Softplus => {
                            for i in 0..len {
                                ga[i] += g[i] * math::sigmoid(ain[i]);
                            }
                        }
                        Sigmoid => {
                            for i in 0..len {
                                ga[i] += g[i] * oval[i] * (1.0 - oval[i]);
                            }
                        }
                        // Zero gradient in the clamped region (subgradient
                        // convention).
                        ClampMin(lo) => {
                            for i in 0..len {
                                if ain[i] > lo {
                                    ga[i] += g[i];
                                }
                            }
                        }
                        Sum => {
                            for x in ga.iter_mut() {
                                *x += g[0];
                            }
                        }
                        Mean => {
                            let w = g[0] / a_rec.1 as f64;
                            for x in ga.iter_mut() {
                                *x += w;
                            }
                        }
                        Slice { start, .. } => {
                            for i in 0..len {
                                ga[start as usize + i] += g[i];
                            }
                        }
                        _ => unreachable!(),
                    }
                }
                Node::Binary { kind, a, b } => {
                    let a_rec = (self.nodes[a as usize].off, self.nodes[a as usize].len);
                    let b_rec = (self.nodes[b as usize].off, self.nodes[b as usize].len);
                    let (gbefore, gafter) = self.grad.split_at_mut(off);
                    let g = &gafter[..len];
                    let ain = &self.values[a_rec.0..a_rec.0 + a_rec.1];
                    let bin = &self.values[b_rec.0..b_rec.0 + b_rec.1];
                    use OpKind::*;
                    match kind {
                        Add | Sub | Mul | Div | Min | Max => {
                            for i in 0..len {
                                let ia = if a_rec.1 == 1 { 0 } else { i };
                                let ib = if b_rec.1 == 1 { 0 } else { i };
                                let (da, db) = match kind {
                                    Add => (1.0, 1.0),
                                    Sub => (1.0, -1.0),
                                    Mul => (bin[ib], ain[ia]),
                                    Div => {
                                        let inv = 1.0 / bin[ib];
                                        (inv, -ain[ia] * inv * inv)
                                    }
                                    // Ties route the gradient to the first
                                    // operand.
                                    Min => {
                                        if ain[ia] <= bin[ib] {
                                            (1.0, 0.0)
                                        } else {
                                            (0.0, 1.0)
                                        }
                                    }
                                    Max => {
                                        if ain[ia] >= bin[ib] {
                                            (1.0, 0.0)
                                        } else {
                                            (0.0, 1.0)
                                        }
                                    }
                                    _ => unreachable!(),
                                };
                                gbefore[a_rec.0 + ia] += g[i] * da;
                                gbefore[b_rec.0 + ib] += g[i] * db;
                            }
                        }
                        MatVec => {
                            let cols = b_rec.1;
                            // Two contiguous passes (rank-one update, then
                            // W^T g) so the inner loops vectorize.
                            for r in 0..len {
                                let gr = g[r];
                                if gr == 0.0 {
                                    continue;
                                }
                                let row_off = a_rec.0 + r * cols;
                                let (wrow, x) = (
                                    &mut gbefore[row_off..row_off + cols],
                                    &bin[..cols],
                                );
                                for c in 0..cols {
                                    wrow[c] += gr * x[c];
                                }
                            }
                            let gx_off = b_rec.0;
                            for r in 0..len {
                                let gr = g[r];
                                if gr == 0.0 {
                                    continue;
                                }
                                let row = &ain[r * cols..(r + 1) * cols];
                                let gx = &mut gbefore[gx_off..gx_off + cols];
                                for c in 0..cols {
                                    gx[c] += gr * row[c];
                                }
                            }
                        }
                        Dot => {
                            let gr = g[0];
                            for i in 0..a_rec.1 {
                                gbefore[a_rec.0 + i] += gr * bin[i];
                                gbefore[b_rec.0 + i] += gr * ain[i];
                            }
                        }
                        Concat => {
                            for i in 0..a_rec.1 {
                                gbefore[a_rec.0 + i] += g[i];
                            }
                            for i in 0..b_rec.1 {
                                gbefore[b_rec.0 + i] += g[a_rec.1 + i];
                            }
                        }
                        _ => unreachable!(),
                    }
                }
            }
        }
        Ok(out)
    }
}

fn op_name(kind: OpKind) -> &'static str {
    use OpKind::*;
    match kind {
        Add => "add",
        Sub => "sub",
        Mul => "mul",
        Div => "div",
        Neg => "neg",
        Exp => "exp",
        Sin => "sin",
        Cos => "cos",
        Abs => "abs",
        Square => "square",
        Sqrt => "sqrt",
        Min => "min",
        Max => "max",
        Softplus => "softplus",
        Sigmoid => "sigmoid",
        MatVec => "matvec",
        Dot => "dot",
        Sum => "sum",
        Mean => "mean",
        ClampMin(_) => "clamp_min",
        Concat => "concat",
        Slice { .. } => "slice",
    }
}

// Infallible builders for program construction; shape errors here are
// programming bugs, so they panic rather than thread Results through every
// network layer.
macro_rules! unary_builder {
    ($($fn_name:ident => $kind:expr),* $(,)?) => {
        impl Tape {
            $(pub fn $fn_name(&mut self, a: Var) -> Var {
                self.record($kind, a, None).expect(stringify!($fn_name))
            })*
        }
    };
}

macro_rules! binary_builder {
    ($($fn_name:ident => $kind:expr),* $(,)?) => {
        impl Tape {
            $(pub fn $fn_name(&mut self, a: Var, b: Var) -> Var {
                self.record($kind, a, Some(b)).expect(stringify!($fn_name))
            })*
        }
    };
}

unary_builder! {
    neg => OpKind::Neg,
    exp => OpKind::Exp,
    sin => OpKind::Sin,
    cos => OpKind::Cos,
    abs => OpKind::Abs,
    square => OpKind::Square,
    sqrt => OpKind::Sqrt,
    softplus => OpKind::Softplus,
    sigmoid => OpKind::Sigmoid,
    sum => OpKind::Sum,
    mean => OpKind::Mean,
}

binary_builder! {
    add => OpKind::Add,
    sub => OpKind::Sub,
    mul => OpKind::Mul,
    div => OpKind::Div,
    min => OpKind::Min,
    max => OpKind::Max,
    matvec => OpKind::MatVec,
    dot => OpKind::Dot,
    concat => OpKind::Concat,
}

impl Tape {
    pub fn clamp_min(&mut self, a: Var, lo: f64) -> Var {
        self.record(OpKind::ClampMin(lo), a, None).expect("clamp_min")
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        self.record(OpKind::Slice { start: start as u32, len: len as u32 }, a, None)
            .expect("slice")
    }
}

/// Per-parameter gradient accumulator, shaped like a [`ParamStore`].
pub struct Gradients {
    per_param: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Gradients { per_param: store.entries.iter().map(|e| vec![0.0; e.data.len()]).collect() }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.per_param[id.0 as usize]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.per_param[id.0 as usize]
    }

    /// Accumulate `other` into `self` (shapes must match).
    pub fn accumulate(&mut self, other: &Gradients) {
        for (dst, src) in self.per_param.iter_mut().zip(&other.per_param) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += *s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.per_param.iter().all(|g| g.iter().all(|x| x.is_finite()))
    }
}

/// One named dense array with its Adam moments.
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Named parameter arrays plus optimizer state.
#[derive(Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    step: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new(), step: 0 }
    }

    pub fn add_param(&mut self, name: &str, rows: usize, cols: usize, data: Vec<f64>) -> ParamId {
        assert_eq!(data.len(), rows * cols, "param {name}: data length != rows*cols");
        assert!(self.by_name(name).is_none(), "duplicate param name {name}");
        let n = data.len();
        self.entries.push(ParamEntry {
            name: String::from(name),
            rows,
            cols,
            data,
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        ParamId(self.entries.len() as u32 - 1)
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(|i| ParamId(i as u32))
    }

    pub fn data(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0 as usize].data
    }

    pub fn data_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.entries[id.0 as usize].data
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0 as usize]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len() as u32).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn total_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.data.len()).sum()
    }

    /// Copy of all parameter values (used for checkpoint/rollback).
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|e| e.data.clone()).collect()
    }

    pub fn restore(&mut self, snap: &[Vec<f64>]) {
        assert_eq!(snap.len(), self.entries.len());
        for (e, s) in self.entries.iter_mut().zip(snap) {
            e.data.copy_from_slice(s);
        }
    }

    /// Bias-corrected Adam update, applied in place.
    pub fn adam_step(&mut self, grads: &Gradients, cfg: &AdamConfig) -> Result<(), AdError> {
        if grads.per_param.len() != self.entries.len() {
            return Err(AdError::ShapeMismatch {
                op: "adam_step",
                lhs: grads.per_param.len(),
                rhs: self.entries.len(),
            });
        }
        for (e, g) in self.entries.iter().zip(&grads.per_param) {
            if e.data.len() != g.len() {
                return Err(AdError::ShapeMismatch {
                    op: "adam_step",
                    lhs: g.len(),
                    rhs: e.data.len(),
                });
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - math::powi(cfg.beta1, t as i32);
        let bc2 = 1.0 - math::powi(cfg.beta2, t as i32);
        for (e, g) in self.entries.iter_mut().zip(&grads.per_param) {
            for i in 0..e.data.len() {
                e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g[i];
                e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let m_hat = e.m[i] / bc1;
                let v_hat = e.v[i] / bc2;
                e.data[i] -= cfg.lr * m_hat / (math::sqrt(v_hat) + cfg.eps);
            }
        }
        Ok(())
    }
}

/// Max relative error between the tape gradient of `f` and central
/// differences, over every parameter coordinate.
///
/// `f` must record a scalar program for the given store.
pub fn gradient_check<F>(store: &mut ParamStore, eps: f64, mut f: F) -> f64
where
    F: FnMut(&mut Tape, &ParamStore) -> Var,
{
    let mut tape = Tape::new();
    let root = f(&mut tape, store);
    let grads = tape.backward(root, store).expect("gradient_check root must be scalar");

    let mut worst: f64 = 0.0;
    for pid in store.ids().collect::<Vec<_>>() {
        for i in 0..store.data(pid).len() {
            let orig = store.data(pid)[i];

            store.data_mut(pid)[i] = orig + eps;
            let mut t = Tape::new();
            let r = f(&mut t, store);
            let f_plus = t.scalar_value(r);

            store.data_mut(pid)[i] = orig - eps;
            let mut t = Tape::new();
            let r = f(&mut t, store);
            let f_minus = t.scalar_value(r);

            store.data_mut(pid)[i] = orig;

            let fd = (f_plus - f_minus) / (2.0 * eps);
            let analytic = grads.get(pid)[i];
            let err = math::abs(analytic - fd) / math::abs(analytic).max(1.0);
            worst = worst.max(err);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;

    #[test]
    fn softplus_at_zero_is_ln2() {
        let mut tape = Tape::new();
        let x = tape.scalar(0.0);
        let y = tape.softplus(x);
        assert!((tape.scalar_value(y) - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let mut tape = Tape::new();
        let x = tape.scalar(0.0);
        let y = tape.sigmoid(x);
        assert_eq!(tape.scalar_value(y), 0.5);
    }

    #[test]
    fn matvec_identity() {
        let mut tape = Tape::new();
        let eye = tape.constant(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let x = tape.constant(&[1.0, 2.0, 3.0]);
        let y = tape.matvec(eye, x);
        assert_eq!(tape.value(y), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn product_rule() {
        let mut store = ParamStore::new();
        let px = store.add_param("x", 1, 1, vec![3.0]);
        let py = store.add_param("y", 1, 1, vec![4.0]);
        let mut tape = Tape::new();
        let x = tape.param(&store, px);
        let y = tape.param(&store, py);
        let xy = tape.mul(x, y);
        let grads = tape.backward(xy, &store).unwrap();
        assert_eq!(grads.get(px), &[4.0]);
        assert_eq!(grads.get(py), &[3.0]);
    }

    #[test]
    fn softplus_gradient_at_zero() {
        let mut store = ParamStore::new();
        let w = store.add_param("w", 2, 1, vec![0.0, 0.0]);
        let mut tape = Tape::new();
        let wv = tape.param(&store, w);
        let sp = tape.softplus(wv);
        let s = tape.sum(sp);
        let grads = tape.backward(s, &store).unwrap();
        assert_eq!(grads.get(w), &[0.5, 0.5]);
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut store = ParamStore::new();
        let used = store.add_param("used", 1, 1, vec![2.0]);
        let unused = store.add_param("unused", 3, 1, vec![1.0, 1.0, 1.0]);
        let mut tape = Tape::new();
        let x = tape.param(&store, used);
        let _ = tape.param(&store, unused);
        let y = tape.square(x);
        let grads = tape.backward(y, &store).unwrap();
        assert_eq!(grads.get(used), &[4.0]);
        assert_eq!(grads.get(unused), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut store = ParamStore::new();
        let p = store.add_param("p", 2, 1, vec![1.0, 2.0]);
        let mut tape = Tape::new();
        let v = tape.param(&store, p);
        assert_eq!(tape.backward(v, &store).err(), Some(AdError::NonScalarRoot { len: 2 }));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut tape = Tape::new();
        let a = tape.constant(&[1.0, 2.0]);
        let b = tape.constant(&[1.0, 2.0, 3.0]);
        assert!(matches!(
            tape.record(OpKind::Add, a, Some(b)),
            Err(AdError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn div_domain_guard() {
        let mut tape = Tape::new();
        let a = tape.constant(&[1.0]);
        let b = tape.constant(&[1e-13]);
        assert_eq!(
            tape.record(OpKind::Div, a, Some(b)),
            Err(AdError::NumericalDomain { op: "div" })
        );
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut store = ParamStore::new();
        let p = store.add_param("p", 2, 1, vec![1.5, -0.5]);
        let grads = Gradients::zeros_like(&store);
        store.adam_step(&grads, &AdamConfig::with_lr(0.1)).unwrap();
        assert_eq!(store.data(p), &[1.5, -0.5]);
        assert_eq!(store.step_count(), 1);
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        for &g in &[0.3, -2.0, 17.0] {
            let mut store = ParamStore::new();
            let p = store.add_param("p", 1, 1, vec![1.0]);
            let mut grads = Gradients::zeros_like(&store);
            grads.get_mut(p)[0] = g;
            let lr = 1e-2;
            store.adam_step(&grads, &AdamConfig::with_lr(lr)).unwrap();
            let delta = store.data(p)[0] - 1.0;
            // Bias-corrected first step is -lr * sign(g) up to eps rounding.
            assert!((delta.abs() - lr).abs() < 1e-6, "g={g} delta={delta}");
            assert_eq!(delta < 0.0, g > 0.0);
        }
    }

    #[test]
    fn adam_identical_arrays_update_identically() {
        let mut store = ParamStore::new();
        let a = store.add_param("a", 2, 2, vec![0.5, -1.0, 2.0, 0.1]);
        let b = store.add_param("b", 2, 2, vec![0.5, -1.0, 2.0, 0.1]);
        let mut grads = Gradients::zeros_like(&store);
        grads.get_mut(a).copy_from_slice(&[1.0, 2.0, -0.3, 0.7]);
        grads.get_mut(b).copy_from_slice(&[1.0, 2.0, -0.3, 0.7]);
        store.adam_step(&grads, &AdamConfig::with_lr(1e-3)).unwrap();
        assert_eq!(store.data(a), store.data(b));
    }

    #[test]
    fn adam_lr_zero_is_identity() {
        let mut store = ParamStore::new();
        let p = store.add_param("p", 3, 1, vec![1.0, 2.0, 3.0]);
        let mut grads = Gradients::zeros_like(&store);
        grads.get_mut(p).copy_from_slice(&[9.0, -9.0, 0.5]);
        store.adam_step(&grads, &AdamConfig::with_lr(0.0)).unwrap();
        assert_eq!(store.data(p), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn gradient_check_sin() {
        let mut store = ParamStore::new();
        let p = store.add_param("x", 1, 1, vec![1.0]);
        let err = gradient_check(&mut store, 1e-4, |tape, store| {
            let x = tape.param(store, p);
            tape.sin(x)
        });
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn gradient_check_constant_function() {
        let mut store = ParamStore::new();
        let _p = store.add_param("x", 1, 1, vec![0.7]);
        let err = gradient_check(&mut store, 1e-4, |tape, _| tape.scalar(2.5));
        assert_eq!(err, 0.0);
    }

    /// Random two-layer softplus MLP used in several gradient tests.
    fn random_mlp_loss(
        store: &ParamStore,
        tape: &mut Tape,
        ids: &[ParamId; 4],
        input: &[f64],
    ) -> Var {
        let [w1, b1, w2, b2] = *ids;
        let x = tape.constant(input);
        let w1 = tape.param(store, w1);
        let b1 = tape.param(store, b1);
        let w2 = tape.param(store, w2);
        let b2 = tape.param(store, b2);
        let h = tape.matvec(w1, x);
        let h = tape.add(h, b1);
        let h = tape.softplus(h);
        let o = tape.matvec(w2, h);
        let o = tape.add(o, b2);
        let sq = tape.square(o);
        tape.sum(sq)
    }

    fn build_random_mlp(store: &mut ParamStore, rng: &mut DetRng, hidden: usize) -> [ParamId; 4] {
        let mk = |rng: &mut DetRng, n: usize| (0..n).map(|_| rng.uniform(-0.8, 0.8)).collect();
        [
            store.add_param("w1", hidden, 3, mk(rng, hidden * 3)),
            store.add_param("b1", hidden, 1, mk(rng, hidden)),
            store.add_param("w2", 2, hidden, mk(rng, 2 * hidden)),
            store.add_param("b2", 2, 1, mk(rng, 2)),
        ]
    }

    #[test]
    fn gradient_check_random_mlps() {
        let mut rng = DetRng::new(1234);
        for seed in 0..20 {
            let mut fork = rng.fork(seed);
            let mut store = ParamStore::new();
            let hidden = 2 + (seed as usize % 4);
            let ids = build_random_mlp(&mut store, &mut fork, hidden);
            let input = [fork.uniform(-1.0, 1.0), fork.uniform(-1.0, 1.0), fork.uniform(-1.0, 1.0)];
            let err = gradient_check(&mut store, 1e-4, |tape, store| {
                random_mlp_loss(store, tape, &ids, &input)
            });
            assert!(err < 1e-4, "seed {seed}: err {err}");
        }
    }

    #[test]
    fn backward_is_linear() {
        // grad(a*f + b*g) == a*grad(f) + b*grad(g)
        let mut rng = DetRng::new(77);
        for _ in 0..20 {
            let mut store = ParamStore::new();
            let p = store.add_param(
                "p",
                3,
                1,
                vec![rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0)],
            );
            let (a, b) = (rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));

            let f = |tape: &mut Tape, store: &ParamStore| {
                let x = tape.param(store, p);
                let s = tape.sin(x);
                tape.sum(s)
            };
            let g = |tape: &mut Tape, store: &ParamStore| {
                let x = tape.param(store, p);
                let s = tape.square(x);
                tape.mean(s)
            };

            let mut t1 = Tape::new();
            let r = f(&mut t1, &store);
            let gf = t1.backward(r, &store).unwrap();
            let mut t2 = Tape::new();
            let r = g(&mut t2, &store);
            let gg = t2.backward(r, &store).unwrap();

            let mut t3 = Tape::new();
            let rf = f(&mut t3, &store);
            let rg = g(&mut t3, &store);
            let ca = t3.scalar(a);
            let cb = t3.scalar(b);
            let fa = t3.mul(ca, rf);
            let gb = t3.mul(cb, rg);
            let tot = t3.add(fa, gb);
            let gt = t3.backward(tot, &store).unwrap();

            for i in 0..3 {
                let want = a * gf.get(p)[i] + b * gg.get(p)[i];
                assert!((gt.get(p)[i] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn forward_and_backward_are_deterministic() {
        let mut rng = DetRng::new(5);
        let mut store = ParamStore::new();
        let ids = build_random_mlp(&mut store, &mut rng, 4);
        let input = [0.3, -0.2, 0.9];
        let run = |store: &ParamStore| {
            let mut tape = Tape::new();
            let root = random_mlp_loss(store, &mut tape, &ids, &input);
            let val = tape.scalar_value(root);
            let grads = tape.backward(root, store).unwrap();
            let flat: Vec<f64> =
                ids.iter().flat_map(|&id| grads.get(id).to_vec()).collect();
            (val.to_bits(), flat.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
        };
        assert_eq!(run(&store), run(&store));
    }

    #[test]
    fn clamp_min_blocks_gradient_in_clamped_region() {
        let mut store = ParamStore::new();
        let p = store.add_param("p", 2, 1, vec![-1.0, 2.0]);
        let mut tape = Tape::new();
        let x = tape.param(&store, p);
        let c = tape.clamp_min(x, 0.0);
        let s = tape.sum(c);
        let grads = tape.backward(s, &store).unwrap();
        assert_eq!(grads.get(p), &[0.0, 1.0]);
    }

    #[test]
    fn broadcast_scalar_ops() {
        let mut store = ParamStore::new();
        let s = store.add_param("s", 1, 1, vec![2.0]);
        let mut tape = Tape::new();
        let v = tape.constant(&[1.0, 2.0, 3.0]);
        let k = tape.param(&store, s);
        let scaled = tape.mul(v, k);
        assert_eq!(tape.value(scaled), &[2.0, 4.0, 6.0]);
        let total = tape.sum(scaled);
        let grads = tape.backward(total, &store).unwrap();
        assert_eq!(grads.get(s), &[6.0]);
    }

    #[test]
    fn slice_and_concat_roundtrip_gradients() {
        let mut store = ParamStore::new();
        let p = store.add_param("p", 4, 1, vec![1.0, 2.0, 3.0, 4.0]);
        let mut tape = Tape::new();
        let x = tape.param(&store, p);
        let head = tape.slice(x, 0, 2);
        let tail = tape.slice(x, 2, 2);
        let back = tape.concat(head, tail);
        let w = tape.constant(&[1.0, 10.0, 100.0, 1000.0]);
        let d = tape.dot(back, w);
        let grads = tape.backward(d, &store).unwrap();
        assert_eq!(grads.get(p), &[1.0, 10.0, 100.0, 1000.0]);
    }
}
