//! A small tape-based reverse-mode differentiator over dense `f64` matrices.
//!
//! Every value lives on a [`Tape`]; operations append nodes. Gradients are
//! themselves built out of tape operations, so the result of [`Tape::grad`]
//! can be differentiated again. The critic's gradient penalty relies on this
//! (it needs the parameter gradient of an input-gradient norm).
//!
//! Binary operations broadcast: either operand may have extent 1 along an
//! axis where the other does not. Broadcast gradients are summed back to the
//! operand's shape.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use ndarray::{Array2, Axis, Zip};

pub type Matrix = Array2<f64>;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Exp(usize),
    Log(usize),
    Tanh(usize),
    Sqrt(usize),
    Abs(usize),
    SumTo(usize),
    BroadcastTo(usize),
    Transpose(usize),
    Gather(usize, Rc<Vec<usize>>),
    ScatterAdd(usize, Rc<Vec<usize>>),
    Concat(Vec<usize>),
}

struct Node {
    value: Rc<Matrix>,
    op: Op,
    tracked: bool,
}

/// Owns every intermediate value of one forward (and backward) computation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            x
        } else if x == 1 {
            y
        } else {
            panic!("incompatible shapes {a:?} and {b:?}")
        }
    };
    (dim(a.0, b.0), dim(a.1, b.1))
}

fn zip_broadcast(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let shape = broadcast_shape(a.dim(), b.dim());
    let av = a.broadcast(shape).expect("broadcast lhs");
    let bv = b.broadcast(shape).expect("broadcast rhs");
    Zip::from(&av).and(&bv).map_collect(|&x, &y| f(x, y))
}

fn sum_to(a: &Matrix, shape: (usize, usize)) -> Matrix {
    if a.dim() == shape {
        return a.clone();
    }
    let mut out = a.clone();
    if shape.0 == 1 && out.nrows() != 1 {
        out = out.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && out.ncols() != 1 {
        out = out.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    assert_eq!(out.dim(), shape, "cannot sum {:?} down to {shape:?}", a.dim());
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, value: Matrix, op: Op, tracked: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            tracked,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// A leaf that gradients can be taken with respect to.
    pub fn param(&self, value: Matrix) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&self, value: Matrix) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Matrix::from_elem((1, 1), value))
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn value_of(&self, id: usize) -> Rc<Matrix> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn tracked(&self, id: usize) -> bool {
        self.nodes.borrow()[id].tracked
    }

    fn var(&self, id: usize) -> Var<'_> {
        Var { tape: self, id }
    }

    /// Gradients of the scalar `root` with respect to each of `wrt`.
    ///
    /// The returned vars are recorded on the tape and may be differentiated
    /// again. Inputs that `root` does not depend on get a zero gradient.
    pub fn grad<'t>(&'t self, root: Var<'t>, wrt: &[Var<'t>]) -> Vec<Var<'t>> {
        assert_eq!(root.shape(), (1, 1), "gradient root must be a scalar");
        let mut grads: Vec<Option<Var<'t>>> = vec![None; root.id + 1];
        grads[root.id] = Some(self.constant(Matrix::ones((1, 1))));

        for id in (0..=root.id).rev() {
            let Some(g) = grads[id] else { continue };
            let (op, tracked) = {
                let nodes = self.nodes.borrow();
                (nodes[id].op.clone(), nodes[id].tracked)
            };
            if !tracked {
                continue;
            }
            let out = self.var(id);
            let mut send = |input: usize, contribution: &dyn Fn() -> Var<'t>| {
                if !self.tracked(input) {
                    return;
                }
                let c = contribution();
                grads[input] = Some(match grads[input] {
                    Some(prev) => prev.add(c),
                    None => c,
                });
            };
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.var(a), self.var(b));
                    send(a, &|| g.matmul(bv.t()));
                    send(b, &|| av.t().matmul(g));
                }
                Op::Add(a, b) => {
                    let (sa, sb) = (self.var(a).shape(), self.var(b).shape());
                    send(a, &|| g.sum_to(sa));
                    send(b, &|| g.sum_to(sb));
                }
                Op::Sub(a, b) => {
                    let (sa, sb) = (self.var(a).shape(), self.var(b).shape());
                    send(a, &|| g.sum_to(sa));
                    send(b, &|| g.neg().sum_to(sb));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.var(a), self.var(b));
                    send(a, &|| g.mul(bv).sum_to(av.shape()));
                    send(b, &|| g.mul(av).sum_to(bv.shape()));
                }
                Op::Div(a, b) => {
                    let (av, bv) = (self.var(a), self.var(b));
                    send(a, &|| g.div(bv).sum_to(av.shape()));
                    send(b, &|| g.mul(out).div(bv).neg().sum_to(bv.shape()));
                }
                Op::Neg(a) => send(a, &|| g.neg()),
                Op::Scale(a, c) => send(a, &|| g.scale(c)),
                Op::Exp(a) => send(a, &|| g.mul(out)),
                Op::Log(a) => {
                    let av = self.var(a);
                    send(a, &|| g.div(av));
                }
                Op::Tanh(a) => send(a, &|| g.sub(g.mul(out).mul(out))),
                Op::Sqrt(a) => {
                    // Subgradient 0 where the root is exactly zero.
                    let y = out.value();
                    let live = y.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    let pad = y.mapv(|v| if v > 0.0 { 0.0 } else { 1.0 });
                    send(a, &|| {
                        let denom = out.scale(2.0).add(self.constant(pad.clone()));
                        g.mul(self.constant(live.clone())).div(denom)
                    });
                }
                Op::Abs(a) => {
                    let sign = self.var(a).value().mapv(|v| {
                        if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    });
                    send(a, &|| g.mul(self.constant(sign.clone())));
                }
                Op::SumTo(a) => {
                    let sa = self.var(a).shape();
                    send(a, &|| g.broadcast_to(sa));
                }
                Op::BroadcastTo(a) => {
                    let sa = self.var(a).shape();
                    send(a, &|| g.sum_to(sa));
                }
                Op::Transpose(a) => send(a, &|| g.t()),
                Op::Gather(a, idx) => {
                    let width = self.var(a).shape().1;
                    send(a, &|| g.scatter_cols(Rc::clone(&idx), width));
                }
                Op::ScatterAdd(a, idx) => send(a, &|| g.gather_cols(Rc::clone(&idx))),
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let width = self.var(p).shape().1;
                        let idx = Rc::new((offset..offset + width).collect::<Vec<_>>());
                        send(p, &|| g.gather_cols(Rc::clone(&idx)));
                        offset += width;
                    }
                }
            }
        }

        wrt.iter()
            .map(|w| match grads.get(w.id).copied().flatten() {
                Some(g) => g,
                None => self.constant(Matrix::zeros(w.shape())),
            })
            .collect()
    }
}

#[allow(clippy::should_implement_trait)]
impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Matrix> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.dim()
    }

    /// Value of a 1×1 var.
    pub fn item(&self) -> f64 {
        let v = self.value();
        assert_eq!(v.dim(), (1, 1), "item() on a non-scalar");
        v[[0, 0]]
    }

    pub fn is_tracked(&self) -> bool {
        self.tape.tracked(self.id)
    }

    fn unary(self, value: Matrix, op: Op) -> Var<'t> {
        let tracked = self.is_tracked();
        self.tape.push(value, op, tracked)
    }

    fn binary(self, other: Var<'t>, value: Matrix, op: Op) -> Var<'t> {
        let tracked = self.is_tracked() || other.is_tracked();
        self.tape.push(value, op, tracked)
    }

    /// Same value, cut off from the graph.
    pub fn detach(self) -> Var<'t> {
        self.tape.constant((*self.value()).clone())
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        let v = self.value().dot(&*other.value());
        self.binary(other, v, Op::MatMul(self.id, other.id))
    }

    pub fn add(self, other: Var<'t>) -> Var<'t> {
        let v = zip_broadcast(&self.value(), &other.value(), |a, b| a + b);
        self.binary(other, v, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'t>) -> Var<'t> {
        let v = zip_broadcast(&self.value(), &other.value(), |a, b| a - b);
        self.binary(other, v, Op::Sub(self.id, other.id))
    }

    pub fn mul(self, other: Var<'t>) -> Var<'t> {
        let v = zip_broadcast(&self.value(), &other.value(), |a, b| a * b);
        self.binary(other, v, Op::Mul(self.id, other.id))
    }

    pub fn div(self, other: Var<'t>) -> Var<'t> {
        let v = zip_broadcast(&self.value(), &other.value(), |a, b| a / b);
        self.binary(other, v, Op::Div(self.id, other.id))
    }

    pub fn neg(self) -> Var<'t> {
        let v = self.value().mapv(|x| -x);
        self.unary(v, Op::Neg(self.id))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let v = self.value().mapv(|x| x * c);
        self.unary(v, Op::Scale(self.id, c))
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.add(self.tape.scalar(c))
    }

    pub fn square(self) -> Var<'t> {
        self.mul(self)
    }

    pub fn exp(self) -> Var<'t> {
        let v = self.value().mapv(f64::exp);
        self.unary(v, Op::Exp(self.id))
    }

    pub fn ln(self) -> Var<'t> {
        let v = self.value().mapv(f64::ln);
        self.unary(v, Op::Log(self.id))
    }

    pub fn tanh(self) -> Var<'t> {
        let v = self.value().mapv(f64::tanh);
        self.unary(v, Op::Tanh(self.id))
    }

    /// Square root whose gradient is taken as 0 at exactly 0.
    pub fn sqrt(self) -> Var<'t> {
        let v = self.value().mapv(f64::sqrt);
        self.unary(v, Op::Sqrt(self.id))
    }

    pub fn abs(self) -> Var<'t> {
        let v = self.value().mapv(f64::abs);
        self.unary(v, Op::Abs(self.id))
    }

    pub fn t(self) -> Var<'t> {
        let v = self.value().t().as_standard_layout().into_owned();
        self.unary(v, Op::Transpose(self.id))
    }

    /// Sum over broadcast axes down to `shape` (each target extent is 1 or unchanged).
    pub fn sum_to(self, shape: (usize, usize)) -> Var<'t> {
        if self.shape() == shape {
            return self;
        }
        let v = sum_to(&self.value(), shape);
        self.unary(v, Op::SumTo(self.id))
    }

    pub fn broadcast_to(self, shape: (usize, usize)) -> Var<'t> {
        if self.shape() == shape {
            return self;
        }
        let v = self
            .value()
            .broadcast(shape)
            .expect("broadcast_to: incompatible shape")
            .to_owned();
        self.unary(v, Op::BroadcastTo(self.id))
    }

    pub fn sum(self) -> Var<'t> {
        self.sum_to((1, 1))
    }

    pub fn mean(self) -> Var<'t> {
        let (r, c) = self.shape();
        self.sum().scale(1.0 / (r * c) as f64)
    }

    /// Column sums as a 1×c row.
    pub fn sum_rows(self) -> Var<'t> {
        let c = self.shape().1;
        self.sum_to((1, c))
    }

    /// Row sums as an r×1 column.
    pub fn sum_cols(self) -> Var<'t> {
        let r = self.shape().0;
        self.sum_to((r, 1))
    }

    /// Selects (and possibly repeats) columns.
    pub fn gather_cols(self, idx: Rc<Vec<usize>>) -> Var<'t> {
        let src = self.value();
        let mut v = Matrix::zeros((src.nrows(), idx.len()));
        for (j, &k) in idx.iter().enumerate() {
            v.column_mut(j).assign(&src.column(k));
        }
        self.unary(v, Op::Gather(self.id, idx))
    }

    /// Adds column `j` of `self` into column `idx[j]` of a zero matrix of `width` columns.
    pub fn scatter_cols(self, idx: Rc<Vec<usize>>, width: usize) -> Var<'t> {
        let src = self.value();
        let mut v = Matrix::zeros((src.nrows(), width));
        for (j, &k) in idx.iter().enumerate() {
            let mut col = v.column_mut(k);
            col += &src.column(j);
        }
        self.unary(v, Op::ScatterAdd(self.id, idx))
    }

    pub fn cols(self, start: usize, len: usize) -> Var<'t> {
        self.gather_cols(Rc::new((start..start + len).collect()))
    }

    pub fn concat_cols(parts: &[Var<'t>]) -> Var<'t> {
        assert!(!parts.is_empty(), "concat of nothing");
        let tape = parts[0].tape;
        let values: Vec<Rc<Matrix>> = parts.iter().map(|p| p.value()).collect();
        let views: Vec<_> = values.iter().map(|v| v.view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("concat: row counts differ");
        let tracked = parts.iter().any(|p| p.is_tracked());
        tape.push(v, Op::Concat(parts.iter().map(|p| p.id).collect()), tracked)
    }

    /// Row-wise softmax, numerically shifted by the (constant) row max.
    pub fn softmax_rows(self) -> Var<'t> {
        let shift = self
            .value()
            .map_axis(Axis(1), |row| row.fold(f64::NEG_INFINITY, |a, &b| a.max(b)))
            .insert_axis(Axis(1));
        let e = self.sub(self.tape.constant(shift)).exp();
        e.div(e.sum_cols())
    }

    /// Row-wise log-softmax.
    pub fn log_softmax_rows(self) -> Var<'t> {
        let shift = self
            .value()
            .map_axis(Axis(1), |row| row.fold(f64::NEG_INFINITY, |a, &b| a.max(b)))
            .insert_axis(Axis(1));
        let shifted = self.sub(self.tape.constant(shift));
        shifted.sub(shifted.exp().sum_cols().ln())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fd_check(f: impl for<'t> Fn(&'t Tape, Var<'t>) -> Var<'t>, x0: Matrix) {
        let tape = Tape::new();
        let x = tape.param(x0.clone());
        let y = f(&tape, x);
        let g = tape.grad(y, &[x])[0].value();
        let h = 1e-6;
        for idx in ndarray::indices(x0.dim()) {
            let mut plus = x0.clone();
            plus[idx] += h;
            let mut minus = x0.clone();
            minus[idx] -= h;
            let tp = Tape::new();
            let fp = f(&tp, tp.constant(plus)).item();
            let tm = Tape::new();
            let fm = f(&tm, tm.constant(minus)).item();
            let numeric = (fp - fm) / (2.0 * h);
            let analytic = g[idx];
            assert!(
                (numeric - analytic).abs() <= 1e-6 * (1.0 + numeric.abs()),
                "at {idx:?}: analytic {analytic}, numeric {numeric}"
            );
        }
    }

    #[test]
    fn elementwise_and_reductions() {
        let x0 = array![[0.3, -0.7, 1.2], [0.5, 0.9, -1.1]];
        fd_check(|_, x| x.exp().mul(x).sum(), x0.clone());
        fd_check(|_, x| x.tanh().square().mean(), x0.clone());
        fd_check(|_, x| x.abs().sum_rows().sqrt().sum(), x0.clone());
        fd_check(|_, x| x.square().add_scalar(1.0).ln().sum(), x0.clone());
        fd_check(|t, x| x.div(t.constant(array![[2.0, 3.0, -4.0]])).sum(), x0.clone());
        fd_check(|_, x| x.div(x.sum_cols().add_scalar(10.0)).sum(), x0);
    }

    #[test]
    fn matmul_gather_concat_softmax() {
        let x0 = array![[0.3, -0.7, 1.2], [0.5, 0.9, -1.1]];
        let w = array![[0.1, 0.2], [-0.4, 0.5], [0.3, -0.6]];
        fd_check(
            |t, x| x.matmul(t.constant(w.clone())).tanh().sum(),
            x0.clone(),
        );
        fd_check(
            |_, x| {
                let a = x.gather_cols(Rc::new(vec![0, 0, 2]));
                let b = x.cols(1, 2);
                Var::concat_cols(&[a, b]).softmax_rows().square().sum()
            },
            x0.clone(),
        );
        fd_check(
            |_, x| x.log_softmax_rows().mul(x).sum(),
            x0.clone(),
        );
        fd_check(
            |_, x| x.scatter_cols(Rc::new(vec![3, 1, 3]), 4).square().sum(),
            x0,
        );
    }

    #[test]
    fn second_order_gradient_of_cubic() {
        // f(x) = sum(x^3); df/dx = 3x^2; d/dx sum((df/dx)^2) = 36 x^3
        let tape = Tape::new();
        let x = tape.param(array![[0.5, -2.0]]);
        let y = x.mul(x).mul(x).sum();
        let g = tape.grad(y, &[x])[0];
        let gg = tape.grad(g.square().sum(), &[x])[0].value();
        assert!((gg[[0, 0]] - 36.0 * 0.125).abs() < 1e-12);
        assert!((gg[[0, 1]] - 36.0 * -8.0).abs() < 1e-12);
    }

    #[test]
    fn sqrt_at_zero_has_zero_gradient() {
        let tape = Tape::new();
        let x = tape.param(array![[0.0, 4.0]]);
        let g = tape.grad(x.sqrt().sum(), &[x])[0].value();
        assert_eq!(g[[0, 0]], 0.0);
        assert!((g[[0, 1]] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn untouched_input_gets_zero_gradient() {
        let tape = Tape::new();
        let x = tape.param(array![[1.0, 2.0]]);
        let y = tape.param(array![[3.0]]);
        let g = tape.grad(x.sum(), &[x, y]);
        assert_eq!(*g[1].value(), array![[0.0]]);
    }
}
