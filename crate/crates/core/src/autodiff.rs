//! Define-by-run reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] is rebuilt for every forward pass. Nodes are appended in
//! creation order, which is a valid topological order, and [`Graph::backward`]
//! walks them in strict reverse.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    ScalarMul(Var, f64),
    AddScalar(Var),
    DivScalar(Var, Var),
    Relu(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    AlphaNorm { input: Var, alpha: f64 },
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Knobs for building graphs with a deliberately broken backward rule.
///
/// Only used as a negative control for gradient checking.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GraphOptions {
    pub corrupt_matmul_backward: bool,
}

/// A tape of operations recorded during one forward pass.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    options: GraphOptions,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    Row,
}

fn broadcast(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    if a.shape() == b.shape() {
        Ok(Broadcast::Same)
    } else if a.shape().len() == 2 && b.shape().len() == 1 && a.shape()[1] == b.shape()[0] {
        Ok(Broadcast::Row)
    } else {
        Err(Error::Dimension {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })
    }
}

/// Applies `f` elementwise, cycling `b` along rows when broadcasting.
fn zip_broadcast(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let bv = b.values();
    let n = bv.len();
    let values = a
        .values()
        .iter()
        .enumerate()
        .map(|(i, &x)| f(x, bv[i % n]))
        .collect();
    // shape of `a` always wins: equal shapes, or the row-broadcast case
    Tensor::new(a.shape().to_vec(), values).expect("shape preserved")
}

/// Sums a `rows × n` gradient down to length `n` when `b` was broadcast.
fn reduce_rows(grad: Vec<f64>, mode: Broadcast, n: usize) -> Vec<f64> {
    match mode {
        Broadcast::Same => grad,
        Broadcast::Row => {
            let mut out = vec![0.0; n];
            for (i, g) in grad.iter().enumerate() {
                out[i % n] += g;
            }
            out
        }
    }
}

fn signum0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    #[doc(hidden)]
    pub fn with_options(options: GraphOptions) -> Self {
        Self {
            nodes: Vec::new(),
            options,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Adds a leaf that does not receive gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Adds a leaf that receives gradients.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.values()[0]
    }

    /// Gradient accumulated on `v` by the last backward pass.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() != 2 || bv.shape().len() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let (m, p, q) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let (x, y) = (av.values(), bv.values());
        let mut out = vec![0.0; m * q];
        for i in 0..m {
            let row = &mut out[i * q..(i + 1) * q];
            for k in 0..p {
                let aik = x[i * p + k];
                if aik == 0.0 {
                    continue;
                }
                for (o, &bkj) in row.iter_mut().zip(&y[k * q..(k + 1) * q]) {
                    *o += aik * bkj;
                }
            }
        }
        let value = Tensor::matrix(m, q, out)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        broadcast(name, av, bv)?;
        let value = zip_broadcast(av, bv, f);
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    /// `a + b`, with `b` optionally a row vector broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scalar_mul(&mut self, a: Var, c: f64) -> Var {
        let av = self.value(a);
        let value = Tensor::new(
            av.shape().to_vec(),
            av.values().iter().map(|x| x * c).collect(),
        )
        .expect("shape preserved");
        let rg = self.needs(&[a]);
        self.push(value, Op::ScalarMul(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let av = self.value(a);
        let value = Tensor::new(
            av.shape().to_vec(),
            av.values().iter().map(|x| x + c).collect(),
        )
        .expect("shape preserved");
        let rg = self.needs(&[a]);
        self.push(value, Op::AddScalar(a), rg)
    }

    /// `a / s` where `s` is a one-element node.
    pub fn div_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let sv = self.value(s);
        if !sv.is_scalar() {
            return Err(Error::Dimension {
                op: "div_scalar",
                lhs: self.value(a).shape().to_vec(),
                rhs: sv.shape().to_vec(),
            });
        }
        let d = sv.values()[0];
        let av = self.value(a);
        let value = Tensor::new(
            av.shape().to_vec(),
            av.values().iter().map(|x| x / d).collect(),
        )
        .expect("shape preserved");
        let rg = self.needs(&[a, s]);
        Ok(self.push(value, Op::DivScalar(a, s), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let value = Tensor::new(
            av.shape().to_vec(),
            av.values().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect(),
        )
        .expect("shape preserved");
        let rg = self.needs(&[a]);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let value = Tensor::new(
            av.shape().to_vec(),
            av.values().iter().map(|x| x * x).collect(),
        )
        .expect("shape preserved");
        let rg = self.needs(&[a]);
        self.push(value, Op::Square(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).values().iter().sum();
        let rg = self.needs(&[a]);
        self.push(Tensor::scalar(total), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let n = av.len().max(1) as f64;
        let total: f64 = av.values().iter().sum();
        let rg = self.needs(&[a]);
        self.push(Tensor::scalar(total / n), Op::Mean(a), rg)
    }

    /// `(Σ|a_i|^α)^(1/α)`. An all-zero input is rejected rather than smoothed.
    pub fn alpha_norm(&mut self, a: Var, alpha: f64) -> Result<Var> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Contract(format!("norm order must be positive, got {alpha}")));
        }
        let av = self.value(a);
        if !av.is_finite() {
            return Err(Error::NonFinite("alpha_norm input".into()));
        }
        let norm = alpha_norm_value(av.values(), alpha);
        if norm == 0.0 {
            return Err(Error::DegenerateGains(
                "norm of an all-zero vector is not differentiable; re-initialize the gains".into(),
            ));
        }
        let rg = self.needs(&[a]);
        Ok(self.push(Tensor::scalar(norm), Op::AlphaNorm { input: a, alpha }, rg))
    }

    /// Mean over rows of `-log softmax(logits)[label]`, max-shifted for stability.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.shape().len() != 2 || lv.shape()[0] != labels.len() {
            return Err(Error::Dimension {
                op: "cross_entropy",
                lhs: lv.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        let (rows, classes) = (lv.shape()[0], lv.shape()[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Contract(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        let mut probs = vec![0.0; rows * classes];
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = lv.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (p, &x) in probs[r * classes..(r + 1) * classes].iter_mut().zip(row) {
                *p = libm::exp(x - max);
                z += *p;
            }
            for p in &mut probs[r * classes..(r + 1) * classes] {
                *p /= z;
            }
            total += max + libm::log(z) - row[label];
        }
        let loss = total / rows.max(1) as f64;
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Backpropagates from a scalar root, resetting every gradient first.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        self.run_backward(root, true)
    }

    /// Backpropagates from a scalar root, adding to the gradients already on
    /// the leaves.
    pub fn backward_accumulate(&mut self, root: Var) -> Result<()> {
        self.run_backward(root, false)
    }

    fn run_backward(&mut self, root: Var, zero_leaves: bool) -> Result<()> {
        if !self.value(root).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        for node in &mut self.nodes {
            if zero_leaves || !matches!(node.op, Op::Leaf) {
                node.grad = None;
            }
        }
        if !self.nodes[root.0].requires_grad {
            return Ok(());
        }
        self.accumulate(root, &[1.0]);
        for i in (0..=root.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) || !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            self.propagate(i, &g);
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, contribution: &[f64]) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        let grad = node.grad.get_or_insert_with(|| vec![0.0; contribution.len()]);
        for (g, c) in grad.iter_mut().zip(contribution) {
            *g += c;
        }
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        let op = self.nodes[i].op.clone();
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                let (m, p, q) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                let (x, y) = (av.values(), bv.values());
                let mut da = vec![0.0; m * p];
                let mut db = vec![0.0; p * q];
                for r in 0..m {
                    let grow = &g[r * q..(r + 1) * q];
                    for k in 0..p {
                        let brow = &y[k * q..(k + 1) * q];
                        da[r * p + k] = grow.iter().zip(brow).map(|(u, v)| u * v).sum();
                        let aik = x[r * p + k];
                        for (d, &gj) in db[k * q..(k + 1) * q].iter_mut().zip(grow) {
                            *d += aik * gj;
                        }
                    }
                }
                if self.options.corrupt_matmul_backward {
                    db.iter_mut().for_each(|d| *d *= 1.1);
                }
                self.accumulate(a, &da);
                self.accumulate(b, &db);
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(self.nodes[i].op, Op::Sub(..)) { -1.0 } else { 1.0 };
                let mode = broadcast("", self.value(a), self.value(b)).expect("checked forward");
                let n = self.value(b).len();
                let db = reduce_rows(g.iter().map(|x| sign * x).collect(), mode, n);
                self.accumulate(a, g);
                self.accumulate(b, &db);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                let mode = broadcast("", av, bv).expect("checked forward");
                let n = bv.len();
                let (x, y) = (av.values(), bv.values());
                let da: Vec<f64> = g.iter().enumerate().map(|(j, gj)| gj * y[j % n]).collect();
                let db = reduce_rows(g.iter().zip(x).map(|(gj, xj)| gj * xj).collect(), mode, n);
                self.accumulate(a, &da);
                self.accumulate(b, &db);
            }
            Op::ScalarMul(a, c) => {
                let da: Vec<f64> = g.iter().map(|x| x * c).collect();
                self.accumulate(a, &da);
            }
            Op::AddScalar(a) => self.accumulate(a, g),
            Op::DivScalar(a, s) => {
                let d = self.value(s).values()[0];
                let da: Vec<f64> = g.iter().map(|x| x / d).collect();
                let ds: f64 = -g
                    .iter()
                    .zip(self.value(a).values())
                    .map(|(gj, xj)| gj * xj)
                    .sum::<f64>()
                    / (d * d);
                self.accumulate(a, &da);
                self.accumulate(s, &[ds]);
            }
            Op::Relu(a) => {
                let da: Vec<f64> = g
                    .iter()
                    .zip(self.value(a).values())
                    .map(|(gj, &xj)| if xj > 0.0 { *gj } else { 0.0 })
                    .collect();
                self.accumulate(a, &da);
            }
            Op::Square(a) => {
                let da: Vec<f64> = g
                    .iter()
                    .zip(self.value(a).values())
                    .map(|(gj, xj)| 2.0 * xj * gj)
                    .collect();
                self.accumulate(a, &da);
            }
            Op::Sum(a) => {
                let da = vec![g[0]; self.value(a).len()];
                self.accumulate(a, &da);
            }
            Op::Mean(a) => {
                let n = self.value(a).len();
                let da = vec![g[0] / n as f64; n];
                self.accumulate(a, &da);
            }
            Op::AlphaNorm { input, alpha } => {
                let norm = self.nodes[i].value.values()[0];
                let scale = libm::pow(norm, 1.0 - alpha);
                let da: Vec<f64> = self
                    .value(input)
                    .values()
                    .iter()
                    .map(|&x| {
                        let mag = libm::fabs(x);
                        if mag == 0.0 {
                            0.0
                        } else {
                            g[0] * signum0(x) * libm::pow(mag, alpha - 1.0) * scale
                        }
                    })
                    .collect();
                self.accumulate(input, &da);
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let classes = self.value(logits).cols();
                let rows = labels.len().max(1) as f64;
                let mut d = probs;
                for (r, &label) in labels.iter().enumerate() {
                    d[r * classes + label] -= 1.0;
                }
                d.iter_mut().for_each(|x| *x *= g[0] / rows);
                self.accumulate(logits, &d);
            }
        }
    }
}

/// `(Σ|a_i|^α)^(1/α)` on plain values.
pub fn alpha_norm_value(a: &[f64], alpha: f64) -> f64 {
    if alpha == 2.0 {
        return libm::sqrt(a.iter().map(|x| x * x).sum());
    }
    if alpha == 1.0 {
        return a.iter().map(|x| libm::fabs(*x)).sum();
    }
    let s: f64 = a.iter().map(|x| libm::pow(libm::fabs(*x), alpha)).sum();
    libm::pow(s, 1.0 / alpha)
}

/// Result of comparing autodiff gradients with central finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Max over coordinates of `|fd − ad| / max(1e-8, |fd| + |ad|)`.
    pub max_rel_error: f64,
    /// `(parameter index, coordinate)` of the worst coordinate.
    pub worst: (usize, usize),
    pub coordinates: usize,
}

/// Compares autodiff gradients of a scalar function against central
/// differences with step `h`.
///
/// `f` receives a fresh graph and one leaf per parameter and must return the
/// scalar root. It is called `1 + 2·Σ|p|` times and must be deterministic,
/// so any noise it uses has to be drawn in advance.
pub fn grad_check<F>(params: &[Tensor], h: f64, f: F) -> Result<GradCheck>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
{
    grad_check_with(GraphOptions::default(), params, h, f)
}

#[doc(hidden)]
pub fn grad_check_with<F>(
    options: GraphOptions,
    params: &[Tensor],
    h: f64,
    mut f: F,
) -> Result<GradCheck>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::with_options(options);
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let root = f(&mut g, &vars)?;
    check_finite(g.scalar(root), "objective at base point")?;
    g.backward(root)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| g.grad(v).map_or_else(|| vec![0.0; p.len()], <[f64]>::to_vec))
        .collect();

    let mut eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|p| g.constant(p.clone())).collect();
        let root = f(&mut g, &vars)?;
        let value = g.scalar(root);
        check_finite(value, "objective at perturbed point")?;
        Ok(value)
    };

    let mut work = params.to_vec();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: (0, 0),
        coordinates: 0,
    };
    for (p, grads) in analytic.iter().enumerate() {
        for (c, &ad) in grads.iter().enumerate() {
            let orig = params[p].values()[c];
            work[p].values_mut()[c] = orig + h;
            let plus = eval(&work)?;
            work[p].values_mut()[c] = orig - h;
            let minus = eval(&work)?;
            work[p].values_mut()[c] = orig;
            let fd = (plus - minus) / (2.0 * h);
            let err = libm::fabs(fd - ad) / f64::max(1e-8, libm::fabs(fd) + libm::fabs(ad));
            report.coordinates += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (p, c);
            }
        }
    }
    Ok(report)
}

fn check_finite(value: f64, what: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(String::from(what)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let i = g.constant(t2(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        let b = g.constant(t2(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let out = g.matmul(i, b).unwrap();
        assert_eq!(g.value(out), g.value(b));
    }

    #[test]
    fn hand_matmul() {
        let mut g = Graph::new();
        let a = g.constant(t2(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let b = g.constant(t2(2, 1, &[1.0, 1.0]));
        let out = g.matmul(a, b).unwrap();
        assert_eq!(g.value(out).values(), &[3.0, 7.0]);
        assert_eq!(g.value(out).shape(), &[2, 1]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            Error::Dimension {
                op: "matmul",
                lhs: vec![2, 3],
                rhs: vec![2, 3]
            }
        );
    }

    #[test]
    fn relu_values_and_zero_subgradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![-1.0, 0.0, 2.0]));
        let y = g.relu(x);
        assert_eq!(g.value(y).values(), &[0.0, 0.0, 2.0]);
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn mul_by_ones_is_identity() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![0.5, -1.5, 3.0]));
        let ones = g.constant(Tensor::filled(&[3], 1.0));
        let y = g.mul(x, ones).unwrap();
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn mean_square_derivative() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let sq = g.square(x);
        let m = g.mean(sq);
        g.backward(m).unwrap();
        let grad = g.grad(x).unwrap();
        for (got, want) in grad.iter().zip([2.0 / 3.0, 4.0 / 3.0, 2.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn illegal_broadcast_rejected() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2]));
        assert!(matches!(g.add(a, b), Err(Error::Dimension { op: "add", .. })));
        let c = g.constant(Tensor::zeros(&[3]));
        // (n) op (batch×n) is not a supported direction
        assert!(g.mul(c, a).is_err());
    }

    #[test]
    fn alpha_norm_values() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![3.0, 4.0]));
        let n = g.alpha_norm(a, 2.0).unwrap();
        assert_eq!(g.scalar(n), 5.0);
        let b = g.constant(Tensor::vector(vec![1.0; 4]));
        let n1 = g.alpha_norm(b, 1.0).unwrap();
        assert_eq!(g.scalar(n1), 4.0);
    }

    #[test]
    fn alpha_norm_of_zero_is_degenerate() {
        let mut g = Graph::new();
        let a = g.param(Tensor::zeros(&[3]));
        assert!(matches!(g.alpha_norm(a, 2.0), Err(Error::DegenerateGains(_))));
    }

    #[test]
    fn sum_root_gives_ones() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(&[2, 3]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn constant_root_is_noop() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::scalar(3.0));
        g.backward(c).unwrap();
        assert!(g.grad(c).is_none());
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(&[2]));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn accumulation_doubles() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, -2.0]));
        let w = g.constant(Tensor::vector(vec![3.0, 5.0]));
        let y = g.mul(x, w).unwrap();
        let sq = g.square(y);
        let s = g.sum(sq);
        g.backward(s).unwrap();
        let once = g.grad(x).unwrap().to_vec();
        g.backward_accumulate(s).unwrap();
        let twice = g.grad(x).unwrap();
        for (a, b) in once.iter().zip(twice) {
            assert_eq!(2.0 * a, *b);
        }
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), once.as_slice());
    }

    #[test]
    fn uniform_logits_cross_entropy_is_log_classes() {
        let mut g = Graph::new();
        let l = g.constant(Tensor::zeros(&[3, 4]));
        let ce = g.cross_entropy(l, &[0, 1, 3]).unwrap();
        assert!((g.scalar(ce) - libm::log(4.0)).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_decreases_with_margin() {
        let loss_at = |margin: f64| {
            let mut g = Graph::new();
            let l = g.constant(t2(1, 3, &[margin, 0.0, 0.0]));
            let ce = g.cross_entropy(l, &[0]).unwrap();
            g.scalar(ce)
        };
        let (l5, l10) = (loss_at(5.0), loss_at(10.0));
        assert!(l5 > l10 && l10 > 0.0);
        assert!(l10 < 1e-4);
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        let mut g = Graph::new();
        let l = g.constant(Tensor::zeros(&[1, 2]));
        assert!(matches!(g.cross_entropy(l, &[2]), Err(Error::Contract(_))));
    }

    #[test]
    fn quadratic_grad_check_is_exact() {
        let p = Tensor::vector(vec![0.3, -1.7, 1.1, 0.05]);
        let report = grad_check(&[p], 1e-5, |g, v| {
            let sq = g.square(v[0]);
            Ok(g.sum(sq))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-8, "{report:?}");
        assert_eq!(report.coordinates, 4);
    }

    #[test]
    fn grad_check_propagates_non_finite() {
        let p = Tensor::vector(vec![1.0]);
        let res = grad_check(&[p], 1e-5, |g, v| {
            let s = g.sum(v[0]);
            Ok(g.scalar_mul(s, f64::INFINITY))
        });
        assert!(matches!(res, Err(Error::NonFinite(_))));
    }

    #[test]
    fn corrupted_backward_is_detected() {
        let a = t2(2, 2, &[0.1, 0.2, -0.3, 0.4]);
        let b = t2(2, 2, &[1.0, -0.5, 0.25, 0.75]);
        let f = |g: &mut Graph, v: &[Var]| {
            let m = g.matmul(v[0], v[1])?;
            let sq = g.square(m);
            Ok(g.sum(sq))
        };
        let ok = grad_check(&[a.clone(), b.clone()], 1e-5, f).unwrap();
        assert!(ok.max_rel_error < 1e-8);
        let opts = GraphOptions {
            corrupt_matmul_backward: true,
        };
        let bad = grad_check_with(opts, &[a, b], 1e-5, f).unwrap();
        assert!(bad.max_rel_error > 1e-2);
    }
}
