//! Reverse-mode tape over batched jets: parameter gradients of composite
//! losses in one backward sweep.
//!
//! Forward passes run whole point batches at once. A [`JetBatch`] holds the
//! jet coefficients of every feature at every batch point in a
//! `(rows, points, coeffs)` array, so the affine layers reduce to one GEMM per
//! coefficient plane (network weights are constants along the input
//! direction). Downstream of the networks, extracted derivative fields are
//! combined pointwise into residuals and reduced to scalar loss terms; the
//! tape records every operation and replays it in reverse, accumulating
//! adjoints. Network parameters can appear in several chains of the same tape
//! (several point sets, several jet directions); their gradients sum.

use crate::error::{Error, Result};
use crate::network::MlpParams;
use ndarray::{linalg::general_mat_mul, Array1, Array2, Array3, Axis};

/// Index of a tape node.
pub type NodeId = usize;

const NONE: usize = usize::MAX;
const FACT: [f64; 5] = [1.0, 1.0, 2.0, 6.0, 24.0];

/// Batched jets: `(rows, points, coeffs)` with coefficients contiguous.
#[derive(Clone, Debug)]
pub struct JetBatch {
    pub data: Array3<f64>,
}

impl JetBatch {
    /// Number of jet coefficients (truncation order + 1).
    pub fn n_coeff(&self) -> usize {
        self.data.dim().2
    }

    /// Number of batch points.
    pub fn n_points(&self) -> usize {
        self.data.dim().1
    }
}

/// Seeds input jets for a network over a batch of points.
///
/// Rows are input coordinates. Coefficient 0 is the normalized value
/// `(x - mu)/sigma`; if `direction` selects this row, coefficient 1 is seeded
/// with `1/sigma` so extracted derivatives refer to the physical coordinate.
pub fn seed_inputs(
    params: &MlpParams,
    points: &Array2<f64>,
    direction: Option<usize>,
    order: usize,
) -> JetBatch {
    let dim = params.dim_in();
    assert_eq!(points.ncols(), dim, "point dimension mismatch");
    let n = points.nrows();
    let mut data = Array3::zeros((dim, n, order + 1));
    for d in 0..dim {
        let (mu, sigma) = (params.norm.mu[d], params.norm.sigma[d]);
        for j in 0..n {
            data[[d, j, 0]] = (points[[j, d]] - mu) / sigma;
        }
        if direction == Some(d) && order >= 1 {
            let slope = 1.0 / sigma;
            for j in 0..n {
                data[[d, j, 1]] = slope;
            }
        }
    }
    JetBatch { data }
}

enum Op {
    /// Leaf jets (network inputs).
    Input,
    /// `z = W x + b` per coefficient plane (`b` enters plane 0 only).
    Affine {
        set: usize,
        layer: usize,
        w: Array2<f64>,
        b_len: usize,
    },
    /// Elementwise `tanh` across jets.
    TanhJets,
    /// Extract physical derivative of one row: `field = k! * jets[row, :, k]`.
    DerivField { row: usize, k: usize },
    /// Field arithmetic.
    AddField,
    SubField,
    MulField,
    ScaleField { c: f64 },
    /// `field - data` for a constant data vector.
    SubData,
    /// `scalar = scale * sum_i field_i^2`.
    SumSq { scale: f64 },
    /// Scalar arithmetic.
    AddScalar,
    ScaleScalar { c: f64 },
}

/// Runtime value of a node.
#[derive(Clone, Debug)]
pub enum Value {
    Jets(JetBatch),
    Field(Array1<f64>),
    Scalar(f64),
}

impl Value {
    fn as_jets(&self) -> &JetBatch {
        match self {
            Value::Jets(j) => j,
            _ => panic!("jet value expected"),
        }
    }
    fn as_field(&self) -> &Array1<f64> {
        match self {
            Value::Field(f) => f,
            _ => panic!("field value expected"),
        }
    }
    /// Scalar payload; panics on non-scalar nodes.
    pub fn scalar(&self) -> f64 {
        match self {
            Value::Scalar(s) => *s,
            _ => panic!("scalar value expected"),
        }
    }
}

struct Node {
    op: Op,
    a: usize,
    b: usize,
    val: Value,
}

/// Gradient of one dense layer.
#[derive(Clone, Debug)]
pub struct LayerGrad {
    pub dw: Array2<f64>,
    pub db: Array1<f64>,
}

/// Gradients for every registered parameter set, in registration order.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub sets: Vec<Vec<LayerGrad>>,
}

impl Gradients {
    /// Flattens one set's gradient in the same layout as
    /// [`MlpParams::flatten`].
    pub fn flatten_set(&self, set: usize) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &self.sets[set] {
            v.extend(l.dw.iter());
            v.extend(l.db.iter());
        }
        v
    }
}

/// Recording of one loss evaluation over batched jets.
pub struct Tape {
    nodes: Vec<Node>,
    param_shapes: Vec<Vec<(usize, usize)>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            param_shapes: Vec::new(),
        }
    }

    /// Registers a parameter set (one network); returns its set id.
    pub fn register_params(&mut self, params: &MlpParams) -> usize {
        let shapes = params
            .layers
            .iter()
            .map(|l| (l.w.nrows(), l.w.ncols()))
            .collect();
        self.param_shapes.push(shapes);
        self.param_shapes.len() - 1
    }

    /// Scalar value of a node (loss terms).
    pub fn value(&self, id: NodeId) -> f64 {
        self.nodes[id].val.scalar()
    }

    /// Field payload of a node.
    pub fn field(&self, id: NodeId) -> &Array1<f64> {
        self.nodes[id].val.as_field()
    }

    fn push(&mut self, op: Op, a: usize, b: usize, val: Value) -> NodeId {
        self.nodes.push(Node { op, a, b, val });
        self.nodes.len() - 1
    }

    /// Leaf node holding seeded input jets.
    pub fn input(&mut self, jets: JetBatch) -> NodeId {
        self.push(Op::Input, NONE, NONE, Value::Jets(jets))
    }

    /// Dense layer `W x + b` on every coefficient plane.
    pub fn affine(&mut self, set: usize, layer: usize, params: &MlpParams, x: NodeId) -> NodeId {
        let w = &params.layers[layer].w;
        let b = &params.layers[layer].b;
        assert_eq!(
            self.param_shapes[set][layer],
            (w.nrows(), w.ncols()),
            "affine shape mismatch for set {set} layer {layer}"
        );
        let xj = self.nodes[x].val.as_jets();
        let (rows_in, n, nc) = xj.data.dim();
        assert_eq!(rows_in, w.ncols(), "affine input rows mismatch");
        let mut out = Array3::zeros((w.nrows(), n, nc));
        {
            // coefficient planes are innermost, so the batch flattens to one
            // contiguous (rows × points·coeffs) GEMM
            let xflat = xj
                .data
                .view()
                .into_shape_with_order((rows_in, n * nc))
                .expect("jet batch must be contiguous");
            let mut zflat = out
                .view_mut()
                .into_shape_with_order((w.nrows(), n * nc))
                .expect("fresh output is contiguous");
            general_mat_mul(1.0, w, &xflat, 0.0, &mut zflat);
        }
        {
            let mut z0 = out.index_axis_mut(Axis(2), 0);
            for (r, mut row) in z0.rows_mut().into_iter().enumerate() {
                row += b[r];
            }
        }
        self.push(
            Op::Affine {
                set,
                layer,
                w: w.clone(),
                b_len: b.len(),
            },
            x,
            NONE,
            Value::Jets(JetBatch { data: out }),
        )
    }

    /// Elementwise `tanh` across every jet of the batch.
    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let xj = self.nodes[x].val.as_jets();
        let (rows, n, nc) = xj.data.dim();
        let mut out = Array3::zeros((rows, n, nc));
        for r in 0..rows {
            for j in 0..n {
                let a = xj.data.slice(ndarray::s![r, j, ..]);
                let mut z = [0.0; 5];
                let mut w = [0.0; 5];
                z[0] = a[0].tanh();
                w[0] = z[0] * z[0];
                for m in 0..nc - 1 {
                    let mut s = 0.0;
                    for i in 0..=m {
                        let omw = if i == 0 { 1.0 - w[0] } else { -w[i] };
                        s += omw * (m + 1 - i) as f64 * a[m + 1 - i];
                    }
                    z[m + 1] = s / (m + 1) as f64;
                    let mut wk = 0.0;
                    for i in 0..=m + 1 {
                        wk += z[i] * z[m + 1 - i];
                    }
                    w[m + 1] = wk;
                }
                for k in 0..nc {
                    out[[r, j, k]] = z[k];
                }
            }
        }
        self.push(Op::TanhJets, x, NONE, Value::Jets(JetBatch { data: out }))
    }

    /// Builds the full network chain for one seeded input batch; returns the
    /// output jet node (single row).
    pub fn mlp_chain(&mut self, set: usize, params: &MlpParams, jets: JetBatch) -> NodeId {
        let mut node = self.input(jets);
        let last = params.layers.len() - 1;
        for l in 0..params.layers.len() {
            node = self.affine(set, l, params, node);
            if l != last {
                node = self.tanh(node);
            }
        }
        node
    }

    /// Extracts the physical `k`-th derivative of one output row as a field.
    pub fn deriv_field(&mut self, x: NodeId, row: usize, k: usize) -> NodeId {
        let xj = self.nodes[x].val.as_jets();
        assert!(k < xj.n_coeff(), "coefficient {k} beyond jet order");
        let n = xj.n_points();
        let mut f = Array1::zeros(n);
        for j in 0..n {
            f[j] = FACT[k] * xj.data[[row, j, k]];
        }
        self.push(Op::DerivField { row, k }, x, NONE, Value::Field(f))
    }

    /// Convenience: network value (zeroth derivative) as a field.
    pub fn value_field(&mut self, x: NodeId) -> NodeId {
        self.deriv_field(x, 0, 0)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].val.as_field() + self.nodes[b].val.as_field();
        self.push(Op::AddField, a, b, Value::Field(v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].val.as_field() - self.nodes[b].val.as_field();
        self.push(Op::SubField, a, b, Value::Field(v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].val.as_field() * self.nodes[b].val.as_field();
        self.push(Op::MulField, a, b, Value::Field(v))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a].val.as_field() * c;
        self.push(Op::ScaleField { c }, a, NONE, Value::Field(v))
    }

    /// `field - data` for constant target data.
    pub fn sub_data(&mut self, a: NodeId, data: &Array1<f64>) -> NodeId {
        let v = self.nodes[a].val.as_field() - data;
        self.push(Op::SubData, a, NONE, Value::Field(v))
    }

    /// `scale * sum_i v_i^2` (means and quadrature sums of squares).
    pub fn sum_sq(&mut self, a: NodeId, scale: f64) -> NodeId {
        let f = self.nodes[a].val.as_field();
        let s = scale * f.iter().map(|&v| v * v).sum::<f64>();
        self.push(Op::SumSq { scale }, a, NONE, Value::Scalar(s))
    }

    pub fn add_scalar(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let s = self.nodes[a].val.scalar() + self.nodes[b].val.scalar();
        self.push(Op::AddScalar, a, b, Value::Scalar(s))
    }

    pub fn scale_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let s = c * self.nodes[a].val.scalar();
        self.push(Op::ScaleScalar { c }, a, NONE, Value::Scalar(s))
    }

    /// Sums a slice of scalar nodes (returns a chain of additions).
    pub fn sum_scalars(&mut self, ids: &[NodeId]) -> NodeId {
        assert!(!ids.is_empty());
        let mut acc = ids[0];
        for &id in &ids[1..] {
            acc = self.add_scalar(acc, id);
        }
        acc
    }

    /// Reverse sweep from `loss`; returns parameter gradients and per-node
    /// adjoints (input-node adjoints are read by the autodiff cross-checks).
    pub fn backward(&self, loss: NodeId) -> Result<(Gradients, Vec<Option<Value>>)> {
        if !matches!(self.nodes[loss].val, Value::Scalar(_)) {
            return Err(Error::InvalidArg("loss node must be scalar".into()));
        }
        let mut grads = Gradients {
            sets: self
                .param_shapes
                .iter()
                .map(|shapes| {
                    shapes
                        .iter()
                        .map(|&(o, i)| LayerGrad {
                            dw: Array2::zeros((o, i)),
                            db: Array1::zeros(o),
                        })
                        .collect()
                })
                .collect(),
        };
        let mut adj: Vec<Option<Value>> = vec![None; self.nodes.len()];
        adj[loss] = Some(Value::Scalar(1.0));

        for id in (0..=loss).rev() {
            let Some(zbar) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Input => {
                    adj[id] = Some(zbar); // keep for callers
                    continue;
                }
                Op::Affine { set, layer, w, b_len } => {
                    let zb = zbar.as_jets();
                    let (zrows, n, nc) = zb.data.dim();
                    let xj = self.nodes[node.a].val.as_jets();
                    let xadj = ensure_jets(&mut adj[node.a], xj);
                    let g = &mut grads.sets[*set][*layer];
                    {
                        // flattened contraction: the plane sum of zₖ·xₖᵀ is
                        // the product over the fused points·coeffs axis
                        let zbflat = zb
                            .data
                            .view()
                            .into_shape_with_order((zrows, n * nc))
                            .expect("jet batch must be contiguous");
                        let xflat = xj
                            .data
                            .view()
                            .into_shape_with_order((w.ncols(), n * nc))
                            .expect("jet batch must be contiguous");
                        let mut xaflat = xadj
                            .data
                            .view_mut()
                            .into_shape_with_order((w.ncols(), n * nc))
                            .expect("adjoint batch is contiguous");
                        general_mat_mul(1.0, &w.t(), &zbflat, 1.0, &mut xaflat);
                        general_mat_mul(1.0, &zbflat, &xflat.t(), 1.0, &mut g.dw);
                    }
                    let z0 = zb.data.index_axis(Axis(2), 0);
                    for r in 0..*b_len {
                        g.db[r] += z0.row(r).sum();
                    }
                    adj[id] = Some(zbar);
                }
                Op::TanhJets => {
                    let zb = zbar.as_jets();
                    let zj = node.val.as_jets();
                    let (rows, n, nc) = zj.data.dim();
                    let xj = self.nodes[node.a].val.as_jets();
                    let xadj = ensure_jets(&mut adj[node.a], xj);
                    for r in 0..rows {
                        for j in 0..n {
                            let z = zj.data.slice(ndarray::s![r, j, ..]);
                            let zb_ = zb.data.slice(ndarray::s![r, j, ..]);
                            // d = 1 - z^2 as a jet, then xbar_i += sum_k zbar_k d_{k-i}
                            let mut d = [0.0; 5];
                            for k in 0..nc {
                                let mut s = 0.0;
                                for i in 0..=k {
                                    s += z[i] * z[k - i];
                                }
                                d[k] = if k == 0 { 1.0 - s } else { -s };
                            }
                            let mut xa = xadj.data.slice_mut(ndarray::s![r, j, ..]);
                            for i in 0..nc {
                                let mut s = 0.0;
                                for k in i..nc {
                                    s += zb_[k] * d[k - i];
                                }
                                xa[i] += s;
                            }
                        }
                    }
                    adj[id] = Some(zbar);
                }
                Op::DerivField { row, k } => {
                    let fb = zbar.as_field();
                    let xj = self.nodes[node.a].val.as_jets();
                    let xadj = ensure_jets(&mut adj[node.a], xj);
                    for j in 0..fb.len() {
                        xadj.data[[*row, j, *k]] += FACT[*k] * fb[j];
                    }
                    adj[id] = Some(zbar);
                }
                Op::AddField => {
                    let fb = zbar.as_field().clone();
                    add_field(&mut adj[node.a], &fb, 1.0);
                    add_field(&mut adj[node.b], &fb, 1.0);
                }
                Op::SubField => {
                    let fb = zbar.as_field().clone();
                    add_field(&mut adj[node.a], &fb, 1.0);
                    add_field(&mut adj[node.b], &fb, -1.0);
                }
                Op::MulField => {
                    let fb = zbar.as_field().clone();
                    let av = self.nodes[node.a].val.as_field().clone();
                    let bv = self.nodes[node.b].val.as_field().clone();
                    add_field_prod(&mut adj[node.a], &fb, &bv);
                    add_field_prod(&mut adj[node.b], &fb, &av);
                }
                Op::ScaleField { c } => {
                    let fb = zbar.as_field().clone();
                    add_field(&mut adj[node.a], &fb, *c);
                }
                Op::SubData => {
                    let fb = zbar.as_field().clone();
                    add_field(&mut adj[node.a], &fb, 1.0);
                }
                Op::SumSq { scale } => {
                    let s = zbar.scalar();
                    let f = self.nodes[node.a].val.as_field();
                    let contrib = f * (2.0 * scale * s);
                    add_field(&mut adj[node.a], &contrib, 1.0);
                }
                Op::AddScalar => {
                    let s = zbar.scalar();
                    add_scalar_adj(&mut adj[node.a], s);
                    add_scalar_adj(&mut adj[node.b], s);
                }
                Op::ScaleScalar { c } => {
                    let s = zbar.scalar();
                    add_scalar_adj(&mut adj[node.a], c * s);
                }
            }
        }
        Ok((grads, adj))
    }
}

fn ensure_jets<'a>(slot: &'a mut Option<Value>, like: &JetBatch) -> &'a mut JetBatch {
    if slot.is_none() {
        *slot = Some(Value::Jets(JetBatch {
            data: Array3::zeros(like.data.dim()),
        }));
    }
    match slot.as_mut().unwrap() {
        Value::Jets(j) => j,
        _ => panic!("adjoint shape mismatch"),
    }
}

fn add_field(slot: &mut Option<Value>, f: &Array1<f64>, c: f64) {
    match slot {
        None => {
            *slot = Some(Value::Field(f * c));
        }
        Some(Value::Field(acc)) => {
            acc.zip_mut_with(f, |a, &b| *a += c * b);
        }
        _ => panic!("adjoint shape mismatch"),
    }
}

fn add_field_prod(slot: &mut Option<Value>, f: &Array1<f64>, g: &Array1<f64>) {
    match slot {
        None => {
            *slot = Some(Value::Field(f * g));
        }
        Some(Value::Field(acc)) => {
            for ((a, &x), &y) in acc.iter_mut().zip(f).zip(g) {
                *a += x * y;
            }
        }
        _ => panic!("adjoint shape mismatch"),
    }
}

fn add_scalar_adj(slot: &mut Option<Value>, s: f64) {
    match slot {
        None => *slot = Some(Value::Scalar(s)),
        Some(Value::Scalar(acc)) => *acc += s,
        _ => panic!("adjoint shape mismatch"),
    }
}

/// Runs the backward sweep and returns only the parameter gradients.
pub fn grad_params(tape: &Tape, loss_node: NodeId) -> Result<Gradients> {
    tape.backward(loss_node).map(|(g, _)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::pde_derivatives;
    use crate::network::init_glorot;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
    }

    fn net(sizes: &[usize], seed: u64) -> MlpParams {
        let mut p = init_glorot(sizes, seed).unwrap();
        let pts = Array2::from_shape_fn((100, sizes[0]), |(i, d)| {
            ((i * 3 + d) as f64 * 0.311).sin() * 1.5
        });
        p.set_normalization(&pts).unwrap();
        p
    }

    fn sample_points(n: usize, dim: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, dim), |_| rng.gen::<f64>() * 2.0 - 1.0)
    }

    /// mean((u_xx + u * u_x)^2) over the batch: exercises derivatives,
    /// products, and the reduction in one loss.
    fn build_loss(tape: &mut Tape, set: usize, p: &MlpParams, pts: &Array2<f64>) -> NodeId {
        let jets = seed_inputs(p, pts, Some(0), 2);
        let out = tape.mlp_chain(set, p, jets);
        let u = tape.value_field(out);
        let ux = tape.deriv_field(out, 0, 1);
        let uxx = tape.deriv_field(out, 0, 2);
        let uux = tape.mul(u, ux);
        let r = tape.add(uxx, uux);
        tape.sum_sq(r, 1.0 / pts.nrows() as f64)
    }

    fn loss_value(p: &MlpParams, pts: &Array2<f64>) -> f64 {
        let mut s = 0.0;
        for i in 0..pts.nrows() {
            let b = pde_derivatives(p, &[pts[[i, 0]], pts[[i, 1]]], 2, 0).unwrap();
            let r = b.d2u_dx2 + b.u * b.du_dx;
            s += r * r;
        }
        s / pts.nrows() as f64
    }

    #[test]
    fn batched_values_match_scalar_forward() {
        let p = net(&[2, 7, 7, 1], 21);
        let pts = sample_points(9, 2, 3);
        let mut tape = Tape::new();
        let set = tape.register_params(&p);
        let jets = seed_inputs(&p, &pts, None, 0);
        let out = tape.mlp_chain(set, &p, jets);
        let u = tape.value_field(out);
        for i in 0..9 {
            let expect = p.forward(&[pts[[i, 0]], pts[[i, 1]]]);
            assert!(rel(tape.field(u)[i], expect) < 1e-13);
        }
    }

    #[test]
    fn batched_derivatives_match_scalar_jet_path() {
        let p = net(&[2, 7, 7, 1], 22);
        let pts = sample_points(6, 2, 4);
        let mut tape = Tape::new();
        let set = tape.register_params(&p);
        let jets = seed_inputs(&p, &pts, Some(0), 4);
        let out = tape.mlp_chain(set, &p, jets);
        let ux = tape.deriv_field(out, 0, 1);
        let uxx = tape.deriv_field(out, 0, 2);
        let u4 = tape.deriv_field(out, 0, 4);
        for i in 0..6 {
            let b = pde_derivatives(&p, &[pts[[i, 0]], pts[[i, 1]]], 4, 0).unwrap();
            assert!(rel(tape.field(ux)[i], b.du_dx) < 1e-12);
            assert!(rel(tape.field(uxx)[i], b.d2u_dx2) < 1e-12);
            assert!(rel(tape.field(u4)[i], b.d4u_dx4) < 1e-11);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_along_random_directions() {
        let p = net(&[2, 6, 6, 1], 23);
        let pts = sample_points(8, 2, 5);
        let mut tape = Tape::new();
        let set = tape.register_params(&p);
        let loss = build_loss(&mut tape, set, &p, &pts);
        let g = grad_params(&tape, loss).unwrap();
        let gflat = g.flatten_set(set);
        assert!(rel(tape.value(loss), loss_value(&p, &pts)) < 1e-12);

        let theta = p.flatten();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let eps = 1e-5;
        for dir in 0..10 {
            let d: Vec<f64> = (0..theta.len())
                .map(|_| rng.gen::<f64>() * 2.0 - 1.0)
                .collect();
            let norm = (d.iter().map(|v| v * v).sum::<f64>()).sqrt();
            let d: Vec<f64> = d.iter().map(|v| v / norm).collect();
            let mut pp = p.clone();
            let tp: Vec<f64> = theta.iter().zip(&d).map(|(t, dd)| t + eps * dd).collect();
            pp.assign_from_flat(&tp);
            let lp = loss_value(&pp, &pts);
            let tm: Vec<f64> = theta.iter().zip(&d).map(|(t, dd)| t - eps * dd).collect();
            pp.assign_from_flat(&tm);
            let lm = loss_value(&pp, &pts);
            let fd = (lp - lm) / (2.0 * eps);
            let ip: f64 = gflat.iter().zip(&d).map(|(g, dd)| g * dd).sum();
            assert!(
                rel(fd, ip) < 1e-6,
                "direction {dir}: fd {fd} vs adjoint {ip} (rel {})",
                rel(fd, ip)
            );
        }
    }

    #[test]
    fn reverse_input_adjoint_agrees_with_forward_jet_derivative() {
        // du/dx via the jet pass equals the reverse-mode derivative of the
        // output with respect to the (normalized) input, rescaled by 1/sigma
        let p = net(&[2, 6, 6, 1], 24);
        let pts = sample_points(5, 2, 6);
        let mut tape = Tape::new();
        let set = tape.register_params(&p);
        let jets = seed_inputs(&p, &pts, None, 0);
        let input_id = tape.nodes.len(); // next node is the input leaf
        let out = tape.mlp_chain(set, &p, jets);
        let u = tape.value_field(out);
        let loss = tape.sum_sq(u, 1.0); // sum of u^2 -> dloss/du_j = 2 u_j
        let (_, adj) = tape.backward(loss).unwrap();
        let Some(Value::Jets(ia)) = &adj[input_id] else {
            panic!("input adjoint missing")
        };
        for j in 0..5 {
            let b = pde_derivatives(&p, &[pts[[j, 0]], pts[[j, 1]]], 1, 1).unwrap();
            let uj = tape.field(u)[j];
            for d in 0..2 {
                let reverse = ia.data[[d, j, 0]] / (2.0 * uj) / p.norm.sigma[d];
                let forward = if d == 0 { b.du_dx } else { b.du_dt };
                assert!(
                    rel(reverse, forward) < 1e-12,
                    "point {j} dim {d}: {reverse} vs {forward}"
                );
            }
        }
    }

    #[test]
    fn unreachable_parameter_sets_get_zero_gradients() {
        let p = net(&[2, 6, 6, 1], 25);
        let q = net(&[1, 4, 1], 26);
        let pts = sample_points(4, 2, 7);
        let mut tape = Tape::new();
        let set_p = tape.register_params(&p);
        let set_q = tape.register_params(&q);
        let loss = build_loss(&mut tape, set_p, &p, &pts);
        let g = grad_params(&tape, loss).unwrap();
        assert!(g.flatten_set(set_q).iter().all(|&v| v == 0.0));
        assert!(g.flatten_set(set_p).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn shared_parameters_accumulate_across_chains() {
        let p = net(&[2, 5, 5, 1], 27);
        let pts_a = sample_points(6, 2, 8);
        let pts_b = sample_points(6, 2, 9);

        let grad_of = |pts: &Array2<f64>| {
            let mut tape = Tape::new();
            let set = tape.register_params(&p);
            let loss = build_loss(&mut tape, set, &p, pts);
            grad_params(&tape, loss).unwrap().flatten_set(set)
        };
        let ga = grad_of(&pts_a);
        let gb = grad_of(&pts_b);

        let mut tape = Tape::new();
        let set = tape.register_params(&p);
        let la = build_loss(&mut tape, set, &p, &pts_a);
        let lb = build_loss(&mut tape, set, &p, &pts_b);
        let loss = tape.add_scalar(la, lb);
        let gsum = grad_params(&tape, loss).unwrap().flatten_set(set);

        for i in 0..gsum.len() {
            assert!(rel(gsum[i], ga[i] + gb[i]) < 1e-12);
        }
    }

    #[test]
    fn loss_must_be_scalar() {
        let p = net(&[2, 4, 1], 28);
        let pts = sample_points(3, 2, 10);
        let mut tape = Tape::new();
        let set = tape.register_params(&p);
        let jets = seed_inputs(&p, &pts, None, 0);
        let out = tape.mlp_chain(set, &p, jets);
        let u = tape.value_field(out);
        assert!(tape.backward(u).is_err());
    }
}
