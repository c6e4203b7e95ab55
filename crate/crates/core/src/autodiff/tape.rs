use std::sync::atomic::{AtomicU64, Ordering};

use super::counter::{MacCounter, Phase};
use super::tensor::{matmul_at_into, matmul_bt_into, matmul_into, sigmoid, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    node: usize,
    tape: u64,
}

impl Var {
    /// Position of the node on its tape; stable for the tape's lifetime.
    pub fn node_id(self) -> usize {
        self.node
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    ColAffine(usize, Vec<f64>),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    Exp(usize),
    Log(usize),
    Mean(usize),
    Sum(usize),
    ConcatCols(Vec<usize>),
    SliceCols(usize, usize),
    GatherRows(usize, Vec<usize>),
    LogMeanExp(usize),
    Reshape(usize),
    Surrogate(usize, Tensor),
    LstmCell(LstmSaved),
}

#[derive(Debug, Clone)]
struct LstmSaved {
    x: usize,
    h: usize,
    c: usize,
    w: usize,
    b: usize,
    /// Post-activation gates `[i | f | g | o]`, `N × 4H`.
    gates: Vec<f64>,
    /// `tanh(c')`, `N × H`.
    tanh_c: Vec<f64>,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Single-threaded record of primitive operations for reverse-mode
/// differentiation. Nodes are appended in execution order, so the record is
/// topologically sorted by construction.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    consumed: bool,
    counter: Option<(MacCounter, Phase)>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], keyed by node id.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    shapes: Vec<Vec<usize>>,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `var`; zero if the loss does not depend
    /// on it.
    pub fn get(&self, var: Var) -> Result<Tensor> {
        if var.tape != self.tape || var.node >= self.grads.len() {
            return Err(Error::Detached);
        }
        Ok(self.grads[var.node]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[var.node])))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            consumed: false,
            counter: None,
        }
    }

    /// Charge the forward cost of every subsequent operation to `phase`.
    pub fn with_counter(mut self, counter: MacCounter, phase: Phase) -> Self {
        self.counter = Some((counter, phase));
        self
    }

    /// A fresh tape charging `phase` when a counter is given.
    pub fn counted(counter: Option<&MacCounter>, phase: Phase) -> Self {
        match counter {
            Some(c) => Self::new().with_counter(c.clone(), phase),
            None => Self::new(),
        }
    }

    pub fn set_phase(&mut self, phase: Phase) {
        if let Some((_, p)) = self.counter.as_mut() {
            *p = phase;
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drop every recorded node so the tape can be reused.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.consumed = false;
        self.id = NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed);
    }

    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.tape, self.id, "variable from another tape");
        &self.nodes[v.node].value
    }

    fn check(&self, v: Var) -> Result<&Tensor> {
        if v.tape != self.id || v.node >= self.nodes.len() {
            return Err(Error::Detached);
        }
        Ok(&self.nodes[v.node].value)
    }

    fn charge(&self, macs: usize) {
        if let Some((c, p)) = &self.counter {
            c.add(*p, macs as u64);
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            node: self.nodes.len() - 1,
            tape: self.id,
        }
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.node].requires_grad
    }

    /// Trainable input: gradients are reported for it.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input treated as a constant; backward never visits it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: impl FnOnce(usize) -> Op) -> Result<Var> {
        let av = self.check(a)?;
        let data: Vec<f64> = av.data().iter().map(|&x| f(x)).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        self.charge(out.numel());
        let rg = self.rg(a);
        Ok(self.push(out, op(a.node), rg))
    }

    fn binary_same(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let av = self.check(a)?;
        let bv = self.check(b)?;
        if av.shape() != bv.shape() {
            return Err(Error::Shape {
                op: name,
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        self.charge(out.numel());
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, op, rg))
    }

    fn matrix_dims(t: &Tensor) -> (usize, usize) {
        (t.rows(), t.cols())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let av = self.check(a)?;
        let bv = self.check(b)?;
        let (n, k) = Self::matrix_dims(av);
        let (k2, m) = Self::matrix_dims(bv);
        if av.shape().len() != 2 || bv.shape().len() != 2 || k != k2 {
            return Err(Error::Shape {
                op: "matmul",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; n * m];
        matmul_into(av.data(), bv.data(), &mut out, n, k, m);
        self.charge(n * k * m);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::MatMul(a.node, b.node), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same("add", a, b, |x, y| x + y, Op::Add(a.node, b.node))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same("sub", a, b, |x, y| x - y, Op::Sub(a.node, b.node))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same("mul", a, b, |x, y| x * y, Op::Mul(a.node, b.node))
    }

    /// Broadcast add of a length-`m` bias to every row of an `n × m` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let av = self.check(a)?;
        let bv = self.check(bias)?;
        let m = av.cols();
        if av.shape().len() != 2 || bv.numel() != m {
            return Err(Error::Shape {
                op: "add_row",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let mut data = av.data().to_vec();
        for row in data.chunks_mut(m) {
            for (x, b) in row.iter_mut().zip(bv.data()) {
                *x += b;
            }
        }
        self.charge(data.len());
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(out, Op::AddRow(a.node, bias.node), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, move |x| c * x, move |i| Op::Scale(i, c))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, move |x| x + c, Op::AddScalar)
    }

    /// Constant per-column affine map `x[:, j] * scale[j] + shift[j]`.
    pub fn col_affine(&mut self, a: Var, scale: &[f64], shift: &[f64]) -> Result<Var> {
        let av = self.check(a)?;
        let m = av.cols();
        if scale.len() != m || shift.len() != m {
            return Err(Error::Shape {
                op: "col_affine",
                lhs: av.shape().to_vec(),
                rhs: vec![scale.len(), shift.len()],
            });
        }
        let mut data = av.data().to_vec();
        for row in data.chunks_mut(m) {
            for j in 0..m {
                row[j] = row[j] * scale[j] + shift[j];
            }
        }
        self.charge(data.len());
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::ColAffine(a.node, scale.to_vec()), rg))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::tanh, Op::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, sigmoid, Op::Sigmoid)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| x.max(0.0), Op::Relu)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::exp, Op::Exp)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::ln, Op::Log)
    }

    /// Mean over every element, producing a scalar.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let av = self.check(a)?;
        let v = av.data().iter().sum::<f64>() / av.numel() as f64;
        self.charge(av.numel());
        let rg = self.rg(a);
        Ok(self.push(Tensor::scalar(v), Op::Mean(a.node), rg))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let av = self.check(a)?;
        let v = av.data().iter().sum::<f64>();
        self.charge(av.numel());
        let rg = self.rg(a);
        Ok(self.push(Tensor::scalar(v), Op::Sum(a.node), rg))
    }

    /// Numerically stable `log(mean(exp(a)))` over every element.
    pub fn log_mean_exp(&mut self, a: Var) -> Result<Var> {
        let av = self.check(a)?;
        let v = super::tensor::log_mean_exp(av.data());
        self.charge(2 * av.numel());
        let rg = self.rg(a);
        Ok(self.push(Tensor::scalar(v), Op::LogMeanExp(a.node), rg))
    }

    /// Concatenate 2-D tensors with equal row counts along the last axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat_cols of nothing"))?;
        let n = self.check(*first)?.rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let pv = self.check(p)?;
            if pv.shape().len() != 2 || pv.rows() != n {
                return Err(Error::Shape {
                    op: "concat_cols",
                    lhs: self.nodes[first.node].value.shape().to_vec(),
                    rhs: pv.shape().to_vec(),
                });
            }
            widths.push(pv.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for i in 0..n {
            for &p in parts {
                data.extend_from_slice(self.nodes[p.node].value.row(i));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        let ids = parts.iter().map(|p| p.node).collect();
        Ok(self.push(Tensor::new(vec![n, total], data)?, Op::ConcatCols(ids), rg))
    }

    /// Columns `start..end` of a 2-D tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let av = self.check(a)?;
        let (n, m) = (av.rows(), av.cols());
        if av.shape().len() != 2 || start >= end || end > m {
            return Err(Error::Shape {
                op: "slice_cols",
                lhs: av.shape().to_vec(),
                rhs: vec![start, end],
            });
        }
        let mut data = Vec::with_capacity(n * (end - start));
        for i in 0..n {
            data.extend_from_slice(&av.row(i)[start..end]);
        }
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::new(vec![n, end - start], data)?,
            Op::SliceCols(a.node, start),
            rg,
        ))
    }

    /// Select rows by index (repetition allowed); backward scatter-adds.
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let av = self.check(a)?;
        let n = av.rows();
        if index.is_empty() || index.iter().any(|&i| i >= n) {
            return Err(Error::Shape {
                op: "gather_rows",
                lhs: av.shape().to_vec(),
                rhs: vec![index.len()],
            });
        }
        let m = av.cols();
        let mut data = Vec::with_capacity(index.len() * m);
        for &i in index {
            data.extend_from_slice(av.row(i));
        }
        let mut shape = av.shape().to_vec();
        shape[0] = index.len();
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(shape, data)?, Op::GatherRows(a.node, index.to_vec()), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let av = self.check(a)?.clone();
        let out = av.reshape(shape)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Reshape(a.node), rg))
    }

    /// Row-wise function evaluated outside the tape.
    ///
    /// `values[i]` is the function at row `i` of `a` and `jacobian` (same
    /// shape as `a`) holds its gradient w.r.t. that row. The result is
    /// `n × 1`; backward scales each Jacobian row by the incoming gradient.
    pub fn surrogate(&mut self, a: Var, values: Vec<f64>, jacobian: Tensor) -> Result<Var> {
        let av = self.check(a)?;
        if av.shape().len() != 2 || jacobian.shape() != av.shape() || values.len() != av.rows() {
            return Err(Error::Shape {
                op: "surrogate",
                lhs: av.shape().to_vec(),
                rhs: jacobian.shape().to_vec(),
            });
        }
        let n = values.len();
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(vec![n, 1], values)?, Op::Surrogate(a.node, jacobian), rg))
    }

    /// Fused LSTM cell.
    ///
    /// `x: N×I`, `h, c: N×H`, `w: (I+H)×4H`, `b: 4H` with gate blocks ordered
    /// input, forget, candidate, output. Returns `N×2H` holding `[h' | c']`.
    pub fn lstm_cell(&mut self, x: Var, h: Var, c: Var, w: Var, b: Var) -> Result<Var> {
        let xv = self.check(x)?;
        let hv = self.check(h)?;
        let cv = self.check(c)?;
        let wv = self.check(w)?;
        let bv = self.check(b)?;
        let n = xv.rows();
        let inp = xv.cols();
        let hid = hv.cols();
        let bad = |lhs: &Tensor, rhs: &Tensor| Error::Shape {
            op: "lstm_cell",
            lhs: lhs.shape().to_vec(),
            rhs: rhs.shape().to_vec(),
        };
        if hv.rows() != n || cv.shape() != hv.shape() {
            return Err(bad(xv, hv));
        }
        if wv.shape() != [inp + hid, 4 * hid] || bv.numel() != 4 * hid {
            return Err(bad(xv, wv));
        }
        let g4 = 4 * hid;
        let mut gates = vec![0.0; n * g4];
        for row in gates.chunks_mut(g4) {
            row.copy_from_slice(bv.data());
        }
        matmul_into(xv.data(), &wv.data()[..inp * g4], &mut gates, n, inp, g4);
        matmul_into(hv.data(), &wv.data()[inp * g4..], &mut gates, n, hid, g4);
        let mut out = vec![0.0; n * 2 * hid];
        let mut tanh_c = vec![0.0; n * hid];
        for r in 0..n {
            let g = &mut gates[r * g4..(r + 1) * g4];
            for k in 0..hid {
                g[k] = sigmoid(g[k]);
                g[hid + k] = sigmoid(g[hid + k]);
                g[2 * hid + k] = g[2 * hid + k].tanh();
                g[3 * hid + k] = sigmoid(g[3 * hid + k]);
                let c_new = g[hid + k] * cv.data()[r * hid + k] + g[k] * g[2 * hid + k];
                let tc = c_new.tanh();
                tanh_c[r * hid + k] = tc;
                out[r * 2 * hid + k] = g[3 * hid + k] * tc;
                out[r * 2 * hid + hid + k] = c_new;
            }
        }
        self.charge(n * (inp + hid) * g4 + n * 10 * hid);
        let rg = [x, h, c, w, b].iter().any(|&v| self.rg(v));
        let saved = LstmSaved {
            x: x.node,
            h: h.node,
            c: c.node,
            w: w.node,
            b: b.node,
            gates,
            tanh_c,
        };
        Ok(self.push(Tensor::new(vec![n, 2 * hid], out)?, Op::LstmCell(saved), rg))
    }

    /// Reverse pass from a scalar `loss`. The tape can be differentiated
    /// once; record a fresh graph (or [`Tape::clear`]) before the next call.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        let shape = self.check(loss)?.shape().to_vec();
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarLoss(shape));
        }
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.node] = Some(Tensor::filled(&shape, 1.0));

        for idx in (0..=loss.node).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(idx, &g, &mut grads);
            if matches!(self.nodes[idx].op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }

        // Keep leaf gradients only.
        for (i, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) {
                grads[i] = None;
            }
        }
        Ok(Gradients {
            tape: self.id,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            grads,
        })
    }

    fn backprop_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let nodes = &self.nodes;
        let out = &nodes[idx].value;
        let mut acc = |target: usize, contrib: Tensor| {
            if !nodes[target].requires_grad {
                return;
            }
            match &mut grads[target] {
                Some(existing) => existing.add_assign(&contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        let like =
            |t: usize, data: Vec<f64>| Tensor::new(nodes[t].value.shape().to_vec(), data).expect("gradient shape");
        let map_in = |t: usize, f: &dyn Fn(f64, f64, f64) -> f64| -> Tensor {
            let data = nodes[t]
                .value
                .data()
                .iter()
                .zip(out.data())
                .zip(g.data())
                .map(|((&x, &y), &gy)| f(x, y, gy))
                .collect();
            like(t, data)
        };

        match &nodes[idx].op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let av = &nodes[*a].value;
                let bv = &nodes[*b].value;
                let (n, k) = (av.rows(), av.cols());
                let m = bv.cols();
                if nodes[*a].requires_grad {
                    let mut da = vec![0.0; n * k];
                    matmul_bt_into(g.data(), bv.data(), &mut da, n, m, k);
                    acc(*a, like(*a, da));
                }
                if nodes[*b].requires_grad {
                    let mut db = vec![0.0; k * m];
                    matmul_at_into(av.data(), g.data(), &mut db, n, k, m);
                    acc(*b, like(*b, db));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, like(*b, g.data().iter().map(|v| -v).collect()));
            }
            Op::Mul(a, b) => {
                let av = nodes[*a].value.data();
                let bv = nodes[*b].value.data();
                acc(*a, like(*a, g.data().iter().zip(bv).map(|(x, y)| x * y).collect()));
                acc(*b, like(*b, g.data().iter().zip(av).map(|(x, y)| x * y).collect()));
            }
            Op::AddRow(a, bias) => {
                acc(*a, g.clone());
                let m = nodes[*bias].value.numel();
                let mut db = vec![0.0; m];
                for row in g.data().chunks(m) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                acc(*bias, like(*bias, db));
            }
            Op::Scale(a, c) => acc(*a, like(*a, g.data().iter().map(|v| v * c).collect())),
            Op::AddScalar(a) | Op::Reshape(a) => acc(*a, like(*a, g.data().to_vec())),
            Op::ColAffine(a, scale) => {
                let m = scale.len();
                let data = g.data().iter().enumerate().map(|(i, v)| v * scale[i % m]).collect();
                acc(*a, like(*a, data));
            }
            Op::Tanh(a) => acc(*a, map_in(*a, &|_, y, gy| gy * (1.0 - y * y))),
            Op::Sigmoid(a) => acc(*a, map_in(*a, &|_, y, gy| gy * y * (1.0 - y))),
            Op::Relu(a) => acc(*a, map_in(*a, &|x, _, gy| if x > 0.0 { gy } else { 0.0 })),
            Op::Exp(a) => acc(*a, map_in(*a, &|_, y, gy| gy * y)),
            Op::Log(a) => acc(*a, map_in(*a, &|x, _, gy| gy / x)),
            Op::Mean(a) => {
                let n = nodes[*a].value.numel();
                acc(*a, Tensor::filled(nodes[*a].value.shape(), g.item() / n as f64));
            }
            Op::Sum(a) => acc(*a, Tensor::filled(nodes[*a].value.shape(), g.item())),
            Op::LogMeanExp(a) => {
                // d/dv_i log(mean(exp v)) = softmax(v)_i
                let lme = out.item();
                let n = nodes[*a].value.numel() as f64;
                let data = nodes[*a]
                    .value
                    .data()
                    .iter()
                    .map(|v| g.item() * (v - lme).exp() / n)
                    .collect();
                acc(*a, like(*a, data));
            }
            Op::ConcatCols(parts) => {
                let n = out.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = nodes[p].value.cols();
                    if nodes[p].requires_grad {
                        let mut d = Vec::with_capacity(n * w);
                        for i in 0..n {
                            d.extend_from_slice(&g.row(i)[offset..offset + w]);
                        }
                        acc(p, like(p, d));
                    }
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let av = &nodes[*a].value;
                let (n, m) = (av.rows(), av.cols());
                let w = out.cols();
                let mut d = vec![0.0; n * m];
                for i in 0..n {
                    d[i * m + start..i * m + start + w].copy_from_slice(g.row(i));
                }
                acc(*a, like(*a, d));
            }
            Op::GatherRows(a, index) => {
                let m = nodes[*a].value.cols();
                let mut d = vec![0.0; nodes[*a].value.numel()];
                for (r, &src) in index.iter().enumerate() {
                    for (dst, v) in d[src * m..(src + 1) * m].iter_mut().zip(g.row(r)) {
                        *dst += v;
                    }
                }
                acc(*a, like(*a, d));
            }
            Op::Surrogate(a, jac) => {
                let m = jac.cols();
                let data = jac
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, j)| j * g.data()[i / m])
                    .collect();
                acc(*a, like(*a, data));
            }
            Op::LstmCell(s) => self.backprop_lstm(s, g, &mut acc),
        }
    }

    fn backprop_lstm(&self, s: &LstmSaved, g: &Tensor, acc: &mut impl FnMut(usize, Tensor)) {
        let nodes = &self.nodes;
        let xv = &nodes[s.x].value;
        let hv = &nodes[s.h].value;
        let cv = &nodes[s.c].value;
        let wv = &nodes[s.w].value;
        let n = xv.rows();
        let inp = xv.cols();
        let hid = hv.cols();
        let g4 = 4 * hid;

        let mut dz = vec![0.0; n * g4];
        let mut dc_prev = vec![0.0; n * hid];
        for r in 0..n {
            let gates = &s.gates[r * g4..(r + 1) * g4];
            let grow = g.row(r);
            for k in 0..hid {
                let (i, f, gg, o) = (gates[k], gates[hid + k], gates[2 * hid + k], gates[3 * hid + k]);
                let tc = s.tanh_c[r * hid + k];
                let dh = grow[k];
                let dc = grow[hid + k] + dh * o * (1.0 - tc * tc);
                let dzr = &mut dz[r * g4..(r + 1) * g4];
                dzr[k] = dc * gg * i * (1.0 - i);
                dzr[hid + k] = dc * cv.data()[r * hid + k] * f * (1.0 - f);
                dzr[2 * hid + k] = dc * i * (1.0 - gg * gg);
                dzr[3 * hid + k] = dh * tc * o * (1.0 - o);
                dc_prev[r * hid + k] = dc * f;
            }
        }
        let like =
            |t: usize, data: Vec<f64>| Tensor::new(nodes[t].value.shape().to_vec(), data).expect("gradient shape");
        if nodes[s.c].requires_grad {
            acc(s.c, like(s.c, dc_prev));
        }
        if nodes[s.w].requires_grad {
            let mut dw = vec![0.0; (inp + hid) * g4];
            matmul_at_into(xv.data(), &dz, &mut dw[..inp * g4], n, inp, g4);
            matmul_at_into(hv.data(), &dz, &mut dw[inp * g4..], n, hid, g4);
            acc(s.w, like(s.w, dw));
        }
        if nodes[s.b].requires_grad {
            let mut db = vec![0.0; g4];
            for row in dz.chunks(g4) {
                for (d, v) in db.iter_mut().zip(row) {
                    *d += v;
                }
            }
            acc(s.b, like(s.b, db));
        }
        if nodes[s.x].requires_grad {
            let mut dx = vec![0.0; n * inp];
            matmul_bt_into(&dz, &wv.data()[..inp * g4], &mut dx, n, g4, inp);
            acc(s.x, like(s.x, dx));
        }
        if nodes[s.h].requires_grad {
            let mut dh = vec![0.0; n * hid];
            matmul_bt_into(&dz, &wv.data()[inp * g4..], &mut dh, n, g4, hid);
            acc(s.h, like(s.h, dh));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn tanh_gradient_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let y = tape.tanh(x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 1.0);
    }

    #[test]
    fn identity_matmul() {
        let mut tape = Tape::new();
        let eye = tape.constant(t(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]));
        let a_data = [1.5, -2.0, 0.25, 4.0, 5.0, -6.0, 7.0, 8.5, 9.0];
        let a = tape.constant(t(&[3, 3], &a_data));
        let p = tape.matmul(eye, a).unwrap();
        assert_eq!(tape.value(p).data(), &a_data);
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3]));
        let b = tape.leaf(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
        let c = tape.leaf(Tensor::zeros(&[3, 2]));
        assert!(tape.add(a, c).unwrap_err().to_string().contains("add"));
    }

    #[test]
    fn backward_contract() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 2]));
        let b = tape.tanh(a).unwrap();
        assert!(matches!(tape.backward(b), Err(Error::NonScalarLoss(_))));
        let l = tape.mean(b).unwrap();
        tape.backward(l).unwrap();
        assert!(matches!(tape.backward(l), Err(Error::TapeConsumed)));

        let mut other = Tape::new();
        let foreign = other.leaf(Tensor::scalar(1.0));
        assert!(matches!(tape.backward(foreign), Err(Error::Detached)));
    }

    #[test]
    fn unreachable_leaf_has_zero_gradient() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::scalar(2.0));
        let unused = tape.leaf(Tensor::zeros(&[2, 2]));
        let l = tape.exp(a).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(unused).unwrap(), Tensor::zeros(&[2, 2]));
    }

    #[test]
    fn counter_charges_matmul_macs() {
        let counter = MacCounter::new();
        let mut tape = Tape::new().with_counter(counter.clone(), Phase::Evaluation);
        let a = tape.constant(Tensor::zeros(&[4, 3]));
        let b = tape.constant(Tensor::zeros(&[3, 5]));
        tape.matmul(a, b).unwrap();
        assert_eq!(counter.read(Phase::Evaluation), 4 * 3 * 5);
    }
}
