//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! Operations append records in topological order (inputs always precede
//! their consumers by construction); `backward` replays them once in reverse.
//! Forward math goes through the shared [`crate::mat`] kernels so taped and
//! untaped evaluation produce bitwise-identical values.

use crate::mat::Mat;
use crate::nn::Activation;
use crate::scalar::{cast, Scalar};
use crate::{Error, Result};

/// Handle to a value on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

#[derive(Debug, Clone)]
enum Op<T: Scalar> {
    Leaf,
    MatMul(VarId, VarId),
    /// a (MxN) + broadcast row vector (1xN node)
    AddRowVec(VarId, VarId),
    Add(VarId, VarId),
    Sub(VarId, VarId),
    MulElem(VarId, VarId),
    /// a (MxN) * broadcast row vector (1xN node)
    MulRowVec(VarId, VarId),
    /// f (BxD), e (NxD) -> (B*N)xD with out[b*N+i] = f[b] .* e[i]
    RowKron(VarId, VarId),
    Scale(VarId, T),
    AddScalar(VarId, T),
    /// const - a
    SubFromConst(Mat<T>, VarId),
    /// a .* const
    MulConst(VarId, Mat<T>),
    /// a + broadcast scalar node (1x1)
    AddScalarNode(VarId, VarId),
    Tanh(VarId),
    Elu(VarId),
    Relu(VarId),
    Cos(VarId),
    Exp(VarId),
    Clamp(VarId, T, T),
    MinPair(VarId, VarId),
    Sum(VarId),
    SumRows(VarId),
    /// Same data, different shape (row-major reinterpretation).
    Reshape(VarId),
    LogSoftmaxRows(VarId),
    /// out[r] = a[r][idx[r]]
    PickPerRow(VarId, Vec<usize>),
    /// cur (BxN), targets (BxN') -> (B*N')xN with out[b*N'+j][i] = t[b][j] - cur[b][i]
    BatchTdDeltas { cur: VarId, targets: Mat<T> },
    /// Quantile Huber loss reduced to a scalar; taus indexed by column.
    QuantileHuber {
        deltas: VarId,
        taus: Vec<T>,
        kappa: T,
        batch: usize,
    },
}

struct Node<T: Scalar> {
    value: Mat<T>,
    op: Op<T>,
}

/// Wengert tape: values plus the op records that produced them.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    params: Vec<VarId>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    fn push(&mut self, value: Mat<T>, op: Op<T>) -> VarId {
        let id = VarId(self.nodes.len());
        self.nodes.push(Node { value, op });
        id
    }

    /// Record a constant/input value. Not registered as a parameter.
    pub fn leaf(&mut self, value: Mat<T>) -> VarId {
        self.push(value, Op::Leaf)
    }

    /// Record a parameter; `backward` reports a gradient for every one of
    /// these (zero when disconnected from the loss).
    pub fn param(&mut self, value: Mat<T>) -> VarId {
        let id = self.push(value, Op::Leaf);
        self.params.push(id);
        id
    }

    pub fn params(&self) -> &[VarId] {
        &self.params
    }

    pub fn value(&self, id: VarId) -> &Mat<T> {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    // ---- ops ---------------------------------------------------------

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// x @ w + bias (bias broadcast across rows).
    pub fn affine(&mut self, x: VarId, w: VarId, b: VarId) -> Result<VarId> {
        let xw = self.matmul(x, w)?;
        self.add_row_vec(xw, b)
    }

    pub fn add_row_vec(&mut self, a: VarId, v: VarId) -> Result<VarId> {
        let out = self.value(a).add_row_broadcast(self.value(v))?;
        Ok(self.push(out, Op::AddRowVec(a, v)))
    }

    pub fn mul_row_vec(&mut self, a: VarId, v: VarId) -> Result<VarId> {
        let out = self.value(a).mul_row_broadcast(self.value(v))?;
        Ok(self.push(out, Op::MulRowVec(a, v)))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul_elem(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let v = self.value(a).mul_elem(self.value(b))?;
        Ok(self.push(v, Op::MulElem(a, b)))
    }

    /// f (BxD) x e (NxD) -> (B*N)xD rowwise products, row b*N+i = f[b] .* e[i].
    pub fn row_kron(&mut self, f: VarId, e: VarId) -> Result<VarId> {
        let (fb, fd) = self.value(f).shape();
        let (en, ed) = self.value(e).shape();
        if fd != ed {
            return Err(Error::Shape(format!(
                "row_kron: {fb}x{fd} vs {en}x{ed}"
            )));
        }
        let mut out = Mat::zeros(fb * en, fd);
        for b in 0..fb {
            let frow = self.value(f).row_slice(b).to_vec();
            for i in 0..en {
                for d in 0..fd {
                    out.set(b * en + i, d, frow[d] * self.value(e).get(i, d));
                }
            }
        }
        Ok(self.push(out, Op::RowKron(f, e)))
    }

    pub fn scale(&mut self, a: VarId, c: T) -> VarId {
        let v = self.value(a).scale(c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: VarId, c: T) -> VarId {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddScalar(a, c))
    }

    /// const - a, elementwise.
    pub fn sub_from_const(&mut self, c: Mat<T>, a: VarId) -> Result<VarId> {
        if c.shape() != self.value(a).shape() {
            return Err(Error::Shape(format!(
                "sub_from_const: {:?} vs {:?}",
                c.shape(),
                self.value(a).shape()
            )));
        }
        let v = c.sub(self.value(a))?;
        Ok(self.push(v, Op::SubFromConst(c, a)))
    }

    /// a .* const, elementwise.
    pub fn mul_const(&mut self, a: VarId, c: Mat<T>) -> Result<VarId> {
        let v = self.value(a).mul_elem(&c)?;
        Ok(self.push(v, Op::MulConst(a, c)))
    }

    /// a + s where s is a 1x1 node broadcast to every entry.
    pub fn add_scalar_node(&mut self, a: VarId, s: VarId) -> Result<VarId> {
        let sv = self.value(s).scalar()?;
        let v = self.value(a).map(|x| x + sv);
        Ok(self.push(v, Op::AddScalarNode(a, s)))
    }

    pub fn activation(&mut self, a: VarId, kind: Activation) -> VarId {
        match kind {
            Activation::Identity => a,
            Activation::Tanh => {
                let v = self.value(a).map(|x| x.tanh());
                self.push(v, Op::Tanh(a))
            }
            Activation::Elu => {
                let v = self.value(a).map(elu);
                self.push(v, Op::Elu(a))
            }
            Activation::Relu => {
                let v = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
                self.push(v, Op::Relu(a))
            }
        }
    }

    pub fn cos(&mut self, a: VarId) -> VarId {
        let v = self.value(a).map(|x| x.cos());
        self.push(v, Op::Cos(a))
    }

    pub fn exp(&mut self, a: VarId) -> VarId {
        let v = self.value(a).map(|x| x.exp());
        self.push(v, Op::Exp(a))
    }

    pub fn clamp(&mut self, a: VarId, lo: T, hi: T) -> VarId {
        let v = self.value(a).map(|x| x.max(lo).min(hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    pub fn min_pair(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let v = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data().iter())
            .map(|(&x, &y)| x.min(y))
            .collect();
        let (r, c) = self.value(a).shape();
        if self.value(b).shape() != (r, c) {
            return Err(Error::Shape("min_pair: shape mismatch".into()));
        }
        let m = Mat::from_vec(r, c, v)?;
        Ok(self.push(m, Op::MinPair(a, b)))
    }

    pub fn sum(&mut self, a: VarId) -> VarId {
        let v = Mat::filled(1, 1, self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: VarId) -> VarId {
        let n = self.value(a).len();
        let s = self.sum(a);
        self.scale(s, T::one() / cast::<T>(n as f64))
    }

    pub fn sum_rows(&mut self, a: VarId) -> VarId {
        let v = self.value(a).sum_rows();
        self.push(v, Op::SumRows(a))
    }

    pub fn reshape(&mut self, a: VarId, rows: usize, cols: usize) -> Result<VarId> {
        let src = self.value(a);
        if src.len() != rows * cols {
            return Err(Error::Shape(format!(
                "reshape: {}x{} into {rows}x{cols}",
                src.rows(),
                src.cols()
            )));
        }
        let v = Mat::from_vec(rows, cols, src.data().to_vec())?;
        Ok(self.push(v, Op::Reshape(a)))
    }

    pub fn log_softmax_rows(&mut self, a: VarId) -> VarId {
        let x = self.value(a);
        let (r, c) = x.shape();
        let mut out = Mat::zeros(r, c);
        for i in 0..r {
            let row = x.row_slice(i);
            let mx = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let lse = row.iter().map(|&v| (v - mx).exp()).sum::<T>().ln() + mx;
            for j in 0..c {
                out.set(i, j, row[j] - lse);
            }
        }
        self.push(out, Op::LogSoftmaxRows(a))
    }

    pub fn pick_per_row(&mut self, a: VarId, idx: &[usize]) -> Result<VarId> {
        let (r, c) = self.value(a).shape();
        if idx.len() != r {
            return Err(Error::Shape(format!(
                "pick_per_row: {} indices for {r} rows",
                idx.len()
            )));
        }
        if let Some(&bad) = idx.iter().find(|&&j| j >= c) {
            return Err(Error::Contract(format!("pick_per_row: index {bad} >= {c}")));
        }
        let mut out = Mat::zeros(r, 1);
        for i in 0..r {
            out.set(i, 0, self.value(a).get(i, idx[i]));
        }
        Ok(self.push(out, Op::PickPerRow(a, idx.to_vec())))
    }

    /// TD delta matrix for a batch of transitions sharing fraction draws.
    ///
    /// `cur` holds current quantile values (BxN), `targets` the Bellman
    /// targets (BxN', treated as constants). Output is (B*N')xN with
    /// `out[b*N'+j][i] = targets[b][j] - cur[b][i]`.
    pub fn batch_td_deltas(&mut self, cur: VarId, targets: Mat<T>) -> Result<VarId> {
        let (b, n) = self.value(cur).shape();
        let (bt, np) = targets.shape();
        if bt != b {
            return Err(Error::Shape(format!(
                "batch_td_deltas: {b} current rows vs {bt} target rows"
            )));
        }
        let mut out = Mat::zeros(b * np, n);
        for bi in 0..b {
            for j in 0..np {
                let t = targets.get(bi, j);
                for i in 0..n {
                    out.set(bi * np + j, i, t - self.value(cur).get(bi, i));
                }
            }
        }
        Ok(self.push(out, Op::BatchTdDeltas { cur, targets }))
    }

    /// Quantile Huber loss over a delta matrix, reduced to a scalar:
    /// mean over the batch of (1/N') sum_i sum_j |tau_i - 1{d<0}| L_kappa(d).
    pub fn quantile_huber(
        &mut self,
        deltas: VarId,
        taus: &[T],
        kappa: T,
        batch: usize,
    ) -> Result<VarId> {
        if kappa <= T::zero() {
            return Err(Error::Contract(format!("kappa must be > 0, got {kappa}")));
        }
        let (rows, n) = self.value(deltas).shape();
        if taus.len() != n {
            return Err(Error::Shape(format!(
                "quantile_huber: {} taus for {n} columns",
                taus.len()
            )));
        }
        if batch == 0 || rows % batch != 0 {
            return Err(Error::Contract(format!(
                "quantile_huber: {rows} rows not divisible by batch {batch}"
            )));
        }
        let np = rows / batch;
        let mut acc = T::zero();
        for r in 0..rows {
            for i in 0..n {
                let d = self.value(deltas).get(r, i);
                acc += rho_kappa(d, taus[i], kappa);
            }
        }
        let v = Mat::filled(1, 1, acc / cast::<T>((batch * np) as f64));
        Ok(self.push(
            v,
            Op::QuantileHuber {
                deltas,
                taus: taus.to_vec(),
                kappa,
                batch,
            },
        ))
    }

    // ---- backward ----------------------------------------------------

    /// Reverse pass from a scalar loss node. Every registered parameter gets
    /// a gradient (zeros when the loss does not depend on it).
    pub fn backward(&self, loss: VarId) -> Result<Gradients<T>> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward: loss must be scalar, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Mat<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Mat::filled(1, 1, T::one()));

        for id in (0..=loss.0).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.backward_op(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(grads: &mut [Option<Mat<T>>], id: VarId, delta: Mat<T>) {
        match &mut grads[id.0] {
            Some(existing) => {
                let sum = existing.add(&delta).expect("gradient shape");
                *existing = sum;
            }
            None => grads[id.0] = Some(delta),
        }
    }

    fn backward_op(&self, id: usize, g: &Mat<T>, grads: &mut [Option<Mat<T>>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let da = g.matmul(&self.value(*b).transpose()).unwrap();
                let db = self.value(*a).transpose().matmul(g).unwrap();
                Self::accumulate(grads, *a, da);
                Self::accumulate(grads, *b, db);
            }
            Op::AddRowVec(a, v) => {
                Self::accumulate(grads, *a, g.clone());
                let mut dv = Mat::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        let acc = dv.get(0, c) + g.get(r, c);
                        dv.set(0, c, acc);
                    }
                }
                Self::accumulate(grads, *v, dv);
            }
            Op::Add(a, b) => {
                Self::accumulate(grads, *a, g.clone());
                Self::accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                Self::accumulate(grads, *a, g.clone());
                Self::accumulate(grads, *b, g.scale(-T::one()));
            }
            Op::MulElem(a, b) => {
                Self::accumulate(grads, *a, g.mul_elem(self.value(*b)).unwrap());
                Self::accumulate(grads, *b, g.mul_elem(self.value(*a)).unwrap());
            }
            Op::MulRowVec(a, v) => {
                Self::accumulate(grads, *a, g.mul_row_broadcast(self.value(*v)).unwrap());
                let av = self.value(*a);
                let mut dv = Mat::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        let acc = dv.get(0, c) + g.get(r, c) * av.get(r, c);
                        dv.set(0, c, acc);
                    }
                }
                Self::accumulate(grads, *v, dv);
            }
            Op::RowKron(f, e) => {
                let fv = self.value(*f);
                let ev = self.value(*e);
                let (b, d) = fv.shape();
                let n = ev.rows();
                let mut df = Mat::zeros(b, d);
                let mut de = Mat::zeros(n, d);
                for bi in 0..b {
                    for i in 0..n {
                        for k in 0..d {
                            let gv = g.get(bi * n + i, k);
                            df.set(bi, k, df.get(bi, k) + gv * ev.get(i, k));
                            de.set(i, k, de.get(i, k) + gv * fv.get(bi, k));
                        }
                    }
                }
                Self::accumulate(grads, *f, df);
                Self::accumulate(grads, *e, de);
            }
            Op::Scale(a, c) => Self::accumulate(grads, *a, g.scale(*c)),
            Op::AddScalar(a, _) => Self::accumulate(grads, *a, g.clone()),
            Op::SubFromConst(_, a) => Self::accumulate(grads, *a, g.scale(-T::one())),
            Op::MulConst(a, c) => Self::accumulate(grads, *a, g.mul_elem(c).unwrap()),
            Op::AddScalarNode(a, s) => {
                Self::accumulate(grads, *a, g.clone());
                Self::accumulate(grads, *s, Mat::filled(1, 1, g.sum()));
            }
            Op::Tanh(a) => {
                let out = &self.nodes[id].value;
                let da = g
                    .mul_elem(&out.map(|y| T::one() - y * y))
                    .unwrap();
                Self::accumulate(grads, *a, da);
            }
            Op::Elu(a) => {
                let x = self.value(*a);
                let da = g
                    .mul_elem(&x.map(|v| if v > T::zero() { T::one() } else { v.exp() }))
                    .unwrap();
                Self::accumulate(grads, *a, da);
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                let da = g
                    .mul_elem(&x.map(|v| if v > T::zero() { T::one() } else { T::zero() }))
                    .unwrap();
                Self::accumulate(grads, *a, da);
            }
            Op::Cos(a) => {
                let x = self.value(*a);
                let da = g.mul_elem(&x.map(|v| -v.sin())).unwrap();
                Self::accumulate(grads, *a, da);
            }
            Op::Exp(a) => {
                let out = &self.nodes[id].value;
                Self::accumulate(grads, *a, g.mul_elem(out).unwrap());
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a);
                let mask = x.map(|v| {
                    if v > *lo && v < *hi {
                        T::one()
                    } else {
                        T::zero()
                    }
                });
                Self::accumulate(grads, *a, g.mul_elem(&mask).unwrap());
            }
            Op::MinPair(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let mut da = Mat::zeros(av.rows(), av.cols());
                let mut db = Mat::zeros(av.rows(), av.cols());
                for r in 0..av.rows() {
                    for c in 0..av.cols() {
                        if av.get(r, c) <= bv.get(r, c) {
                            da.set(r, c, g.get(r, c));
                        } else {
                            db.set(r, c, g.get(r, c));
                        }
                    }
                }
                Self::accumulate(grads, *a, da);
                Self::accumulate(grads, *b, db);
            }
            Op::Sum(a) => {
                let gv = g.get(0, 0);
                let (r, c) = self.value(*a).shape();
                Self::accumulate(grads, *a, Mat::filled(r, c, gv));
            }
            Op::Reshape(a) => {
                let (r, c) = self.value(*a).shape();
                let back = Mat::from_vec(r, c, g.data().to_vec()).unwrap();
                Self::accumulate(grads, *a, back);
            }
            Op::SumRows(a) => {
                let (r, c) = self.value(*a).shape();
                let mut da = Mat::zeros(r, c);
                for i in 0..r {
                    for j in 0..c {
                        da.set(i, j, g.get(i, 0));
                    }
                }
                Self::accumulate(grads, *a, da);
            }
            Op::LogSoftmaxRows(a) => {
                let out = &self.nodes[id].value;
                let (r, c) = out.shape();
                let mut da = Mat::zeros(r, c);
                for i in 0..r {
                    let mut gsum = T::zero();
                    for j in 0..c {
                        gsum += g.get(i, j);
                    }
                    for j in 0..c {
                        let sm = out.get(i, j).exp();
                        da.set(i, j, g.get(i, j) - sm * gsum);
                    }
                }
                Self::accumulate(grads, *a, da);
            }
            Op::PickPerRow(a, idx) => {
                let (r, c) = self.value(*a).shape();
                let mut da = Mat::zeros(r, c);
                for i in 0..r {
                    da.set(i, idx[i], g.get(i, 0));
                }
                Self::accumulate(grads, *a, da);
            }
            Op::BatchTdDeltas { cur, targets } => {
                let (b, n) = self.value(*cur).shape();
                let np = targets.cols();
                let mut dc = Mat::zeros(b, n);
                for bi in 0..b {
                    for j in 0..np {
                        for i in 0..n {
                            let acc = dc.get(bi, i) - g.get(bi * np + j, i);
                            dc.set(bi, i, acc);
                        }
                    }
                }
                Self::accumulate(grads, *cur, dc);
            }
            Op::QuantileHuber {
                deltas,
                taus,
                kappa,
                batch,
            } => {
                let d = self.value(*deltas);
                let (rows, n) = d.shape();
                let np = rows / batch;
                let norm = g.get(0, 0) / cast::<T>((batch * np) as f64);
                let mut dd = Mat::zeros(rows, n);
                for r in 0..rows {
                    for i in 0..n {
                        let delta = d.get(r, i);
                        let w = (taus[i]
                            - if delta < T::zero() { T::one() } else { T::zero() })
                        .abs();
                        let lprime = delta.max(-*kappa).min(*kappa);
                        dd.set(r, i, norm * w * lprime);
                    }
                }
                Self::accumulate(grads, *deltas, dd);
            }
        }
    }
}

/// Gradients from one backward pass, indexed by `VarId`.
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Mat<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for a node, or `None` if the loss does not reach it.
    pub fn wrt(&self, id: VarId) -> Option<&Mat<T>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradients for the tape's registered parameters, zeros where
    /// disconnected, in registration order.
    pub fn param_grads(&self, tape: &Tape<T>) -> Vec<Mat<T>> {
        tape.params()
            .iter()
            .map(|&p| {
                self.wrt(p).cloned().unwrap_or_else(|| {
                    let (r, c) = tape.value(p).shape();
                    Mat::zeros(r, c)
                })
            })
            .collect()
    }
}

#[inline]
fn elu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp() - T::one()
    }
}

/// Quantile Huber term: |tau - 1{delta<0}| * L_kappa(delta).
pub fn rho_kappa<T: Scalar>(delta: T, tau: T, kappa: T) -> T {
    let ind = if delta < T::zero() { T::one() } else { T::zero() };
    let w = (tau - ind).abs();
    let half = cast::<T>(0.5);
    let l = if delta.abs() <= kappa {
        half * delta * delta
    } else {
        kappa * (delta.abs() - half * kappa)
    };
    w * l
}

#[cfg(test)]
mod tests {
    use super::*;

    type T64 = Tape<f64>;

    #[test]
    fn backward_sum_of_squares() {
        // loss = sum x_i^2 at x = [1, 2] -> grad [2, 4]
        let mut t = T64::new();
        let x = t.param(Mat::row(&[1.0, 2.0]));
        let sq = t.mul_elem(x, x).unwrap();
        let loss = t.sum(sq);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_constant_loss_gives_zero_grads() {
        let mut t = T64::new();
        let x = t.param(Mat::row(&[1.0, 2.0]));
        let c = t.leaf(Mat::filled(1, 1, 5.0));
        let loss = t.scale(c, 1.0);
        let g = t.backward(loss).unwrap();
        assert!(g.wrt(x).is_none());
        let pg = g.param_grads(&t);
        assert_eq!(pg[0].data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_linear_form_grad_is_input() {
        // loss = w . x with x fixed -> grad_w = x
        let mut t = T64::new();
        let w = t.param(Mat::row(&[0.5, -0.25, 2.0]));
        let x = t.leaf(Mat::col(&[3.0, 1.0, -2.0]));
        let loss = t.matmul(w, x).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.wrt(w).unwrap().data(), &[3.0, 1.0, -2.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut t = T64::new();
        let x = t.param(Mat::row(&[1.0, 2.0]));
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn affine_matches_hand_product() {
        // x=[[1,0]], w=[[0,1],[1,0]], b=[1,1] -> [[1,2]]
        let mut t = T64::new();
        let x = t.leaf(Mat::from_vec(1, 2, vec![1.0, 0.0]).unwrap());
        let w = t.param(Mat::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap());
        let b = t.param(Mat::row(&[1.0, 1.0]));
        let y = t.affine(x, w, b).unwrap();
        assert_eq!(t.value(y).data(), &[1.0, 2.0]);
    }

    #[test]
    fn affine_zero_input_passes_bias() {
        let mut t = T64::new();
        let x = t.leaf(Mat::from_vec(1, 2, vec![0.0, 0.0]).unwrap());
        let w = t.param(Mat::from_vec(2, 2, vec![0.3, -1.0, 4.0, 2.0]).unwrap());
        let b = t.param(Mat::row(&[3.0, 4.0]));
        let y = t.affine(x, w, b).unwrap();
        assert_eq!(t.value(y).data(), &[3.0, 4.0]);
    }

    #[test]
    fn affine_dimension_mismatch_reports_shapes() {
        let mut t = T64::new();
        let x = t.leaf(Mat::from_vec(1, 3, vec![0.0; 3]).unwrap());
        let w = t.param(Mat::from_vec(2, 2, vec![0.0; 4]).unwrap());
        let b = t.param(Mat::row(&[0.0, 0.0]));
        let err = t.affine(x, w, b).unwrap_err();
        assert!(err.to_string().contains("1x3"));
        assert!(err.to_string().contains("2x2"));
    }

    #[test]
    fn activation_values() {
        let mut t = T64::new();
        let x = t.leaf(Mat::row(&[0.0, -1.0, 2.0]));
        let th = t.activation(x, Activation::Tanh);
        assert!((t.value(th).get(0, 0) - 0.0).abs() < 1e-15);
        let el = t.activation(x, Activation::Elu);
        // elu(-1) = e^{-1} - 1
        assert!((t.value(el).get(0, 1) - ((-1.0f64).exp() - 1.0)).abs() < 1e-12);
        assert!((t.value(el).get(0, 1) + 0.6321).abs() < 1e-4);
        let idn = t.activation(x, Activation::Identity);
        assert_eq!(t.value(idn).data(), t.value(x).data());
    }

    #[test]
    fn disconnected_param_gets_exact_zero() {
        let mut t = T64::new();
        let used = t.param(Mat::row(&[2.0]));
        let unused = t.param(Mat::row(&[7.0, 8.0]));
        let loss = t.mul_elem(used, used).unwrap();
        let g = t.backward(loss).unwrap();
        let pg = g.param_grads(&t);
        assert_eq!(pg[0].data(), &[4.0]);
        assert_eq!(pg[1].data(), &[0.0, 0.0]);
        let _ = unused;
    }

    #[test]
    fn gradient_accumulates_over_multiple_uses() {
        // loss = x*x + x  -> d/dx = 2x + 1 = 7 at x=3
        let mut t = T64::new();
        let x = t.param(Mat::row(&[3.0]));
        let xx = t.mul_elem(x, x).unwrap();
        let s = t.add(xx, x).unwrap();
        let loss = t.sum(s);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[7.0]);
    }

    #[test]
    fn quantile_huber_hand_values() {
        // single delta = 2, tau = 0.5, kappa = 1 -> 0.75
        let mut t = T64::new();
        let d = t.leaf(Mat::filled(1, 1, 2.0));
        let l = t.quantile_huber(d, &[0.5], 1.0, 1).unwrap();
        assert!((t.value(l).get(0, 0) - 0.75).abs() < 1e-12);

        // single delta = -0.5, tau = 0.75, kappa = 1 -> 0.03125
        let mut t = T64::new();
        let d = t.leaf(Mat::filled(1, 1, -0.5));
        let l = t.quantile_huber(d, &[0.75], 1.0, 1).unwrap();
        assert!((t.value(l).get(0, 0) - 0.03125).abs() < 1e-12);
    }

    #[test]
    fn quantile_huber_zero_deltas_zero_loss() {
        let mut t = T64::new();
        let d = t.leaf(Mat::zeros(4, 3));
        let l = t.quantile_huber(d, &[0.1, 0.5, 0.9], 1.0, 2).unwrap();
        assert_eq!(t.value(l).get(0, 0), 0.0);
    }

    #[test]
    fn quantile_huber_rejects_bad_kappa() {
        let mut t = T64::new();
        let d = t.leaf(Mat::zeros(1, 1));
        assert!(matches!(
            t.quantile_huber(d, &[0.5], 0.0, 1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn log_softmax_rows_sums_to_one() {
        let mut t = T64::new();
        let x = t.leaf(Mat::row(&[1.0, 2.0, 3.0, 4.0]));
        let ls = t.log_softmax_rows(x);
        let total: f64 = t.value(ls).data().iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_td_deltas_layout() {
        let mut t = T64::new();
        // B=1, N=2 current values [1, 3]; N'=2 targets [2, 5].
        let cur = t.leaf(Mat::row(&[1.0, 3.0]));
        let targets = Mat::row(&[2.0, 5.0]);
        let d = t.batch_td_deltas(cur, targets).unwrap();
        // rows are targets j, cols current i: [[1, -1], [4, 2]]
        assert_eq!(t.value(d).data(), &[1.0, -1.0, 4.0, 2.0]);
    }

    #[test]
    fn clamp_blocks_gradient_outside_range() {
        let mut t = T64::new();
        let x = t.param(Mat::row(&[2.0, 0.5]));
        let c = t.clamp(x, 0.0, 1.0);
        let loss = t.sum(c);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn tape_is_generic_over_f32() {
        let mut t: Tape<f32> = Tape::new();
        let x = t.param(Mat::row(&[1.5f32, -0.5]));
        let sq = t.mul_elem(x, x).unwrap();
        let loss = t.sum(sq);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[3.0f32, -1.0]);
    }
}
