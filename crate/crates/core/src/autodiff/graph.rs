//! Define-by-run operation recording and reverse-mode differentiation.
//!
//! A [`Graph`] is rebuilt for every forward pass: each operation validates
//! its inputs, computes output values eagerly, and appends a record. The
//! record list is therefore already in topological order, and
//! [`Graph::backward`] replays it in reverse, accumulating vector-Jacobian
//! products into the `grad` buffers of every tensor on the differentiation
//! path. Calling `backward` repeatedly without [`Tensor::zero_grad`]
//! accumulates gradients, which is what gradient accumulation over
//! mini-batches relies on.

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

enum OpKind {
    Matmul,
    Transpose,
    Add,
    AddRowBroadcast,
    Mul,
    MulRowBroadcast,
    Tanh,
    Gelu,
    Scale(f64),
    SoftmaxRows,
    GatherRows { ids: Vec<usize> },
    LayerNorm { eps: f64 },
    Dropout { mask: Vec<f64> },
    ConcatRows { row_counts: Vec<usize> },
    ConcatCols { col_counts: Vec<usize> },
    Sum,
    NllFromLogits { labels: Vec<u8> },
}

struct OpRecord {
    kind: OpKind,
    inputs: Vec<Tensor>,
    output: Tensor,
}

/// A recorded forward pass over 64-bit float tensors.
#[derive(Default)]
pub struct Graph {
    records: Vec<OpRecord>,
}

fn dims2(shape: &[usize]) -> Option<(usize, usize)> {
    match shape {
        [m, n] => Some((*m, *n)),
        _ => None,
    }
}

fn shape_err(op: &'static str, left: &[usize], right: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

impl Graph {
    pub fn new() -> Graph {
        Graph::default()
    }

    /// Number of recorded operations.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn push(
        &mut self,
        kind: OpKind,
        inputs: Vec<Tensor>,
        shape: Vec<usize>,
        values: Vec<f64>,
    ) -> Tensor {
        // non-finite values are allowed to flow: the training loop watches
        // the loss and reports divergence instead of crashing mid-graph
        let requires_grad = inputs.iter().any(Tensor::requires_grad);
        let output = Tensor::new(&shape, values, requires_grad).expect("op output shape");
        self.records.push(OpRecord {
            kind,
            inputs,
            output: output.clone(),
        });
        output
    }

    /// Matrix product of a `[m, n]` and a `[n, p]` tensor.
    pub fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (a.shape(), b.shape());
        let ((m, n), (n2, p)) = match (dims2(&sa), dims2(&sb)) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(shape_err("matmul", &sa, &sb)),
        };
        if n != n2 {
            return Err(shape_err("matmul", &sa, &sb));
        }
        let (ad, bd) = (a.data(), b.data());
        let mut out = vec![0.0; m * p];
        for i in 0..m {
            let arow = &ad.values[i * n..(i + 1) * n];
            let orow = &mut out[i * p..(i + 1) * p];
            for (k, &aik) in arow.iter().enumerate() {
                let brow = &bd.values[k * p..(k + 1) * p];
                for (o, &bkj) in orow.iter_mut().zip(brow) {
                    *o += aik * bkj;
                }
            }
        }
        drop((ad, bd));
        Ok(self.push(OpKind::Matmul, vec![a.clone(), b.clone()], vec![m, p], out))
    }

    /// Transpose of a 2-D tensor.
    pub fn transpose(&mut self, a: &Tensor) -> Result<Tensor> {
        let sa = a.shape();
        let (m, n) = dims2(&sa).ok_or_else(|| shape_err("transpose", &sa, &sa))?;
        let ad = a.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = ad.values[i * n + j];
            }
        }
        drop(ad);
        Ok(self.push(OpKind::Transpose, vec![a.clone()], vec![n, m], out))
    }

    /// Elementwise sum. Accepts equal shapes, or an `[m, n]` tensor plus a
    /// length-`n` vector broadcast over its rows (in either argument order).
    pub fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary_elementwise(a, b, "add")
    }

    /// Elementwise product, with the same broadcasting rules as [`Graph::add`].
    pub fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary_elementwise(a, b, "mul")
    }

    fn binary_elementwise(&mut self, a: &Tensor, b: &Tensor, op: &'static str) -> Result<Tensor> {
        let (sa, sb) = (a.shape(), b.shape());
        let is_add = op == "add";
        if sa == sb {
            let (ad, bd) = (a.data(), b.data());
            let out: Vec<f64> = ad
                .values
                .iter()
                .zip(&bd.values)
                .map(|(x, y)| if is_add { x + y } else { x * y })
                .collect();
            drop((ad, bd));
            let kind = if is_add { OpKind::Add } else { OpKind::Mul };
            return Ok(self.push(kind, vec![a.clone(), b.clone()], sa, out));
        }
        // Row broadcast: normalize to (matrix, vector).
        let (mat, vec_t) = if sa.len() == 2 && sb.len() == 1 {
            (a, b)
        } else if sb.len() == 2 && sa.len() == 1 {
            (b, a)
        } else {
            return Err(shape_err(if is_add { "add" } else { "mul" }, &sa, &sb));
        };
        let (sm, sv) = (mat.shape(), vec_t.shape());
        let (m, n) = dims2(&sm).expect("checked 2-D");
        if sv[0] != n {
            return Err(shape_err(if is_add { "add" } else { "mul" }, &sa, &sb));
        }
        let (md, vd) = (mat.data(), vec_t.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let (x, y) = (md.values[i * n + j], vd.values[j]);
                out[i * n + j] = if is_add { x + y } else { x * y };
            }
        }
        drop((md, vd));
        let kind = if is_add {
            OpKind::AddRowBroadcast
        } else {
            OpKind::MulRowBroadcast
        };
        Ok(self.push(kind, vec![mat.clone(), vec_t.clone()], vec![m, n], out))
    }

    /// Elementwise hyperbolic tangent.
    pub fn tanh(&mut self, a: &Tensor) -> Tensor {
        let shape = a.shape();
        let out: Vec<f64> = a.data().values.iter().map(|x| x.tanh()).collect();
        self.push(OpKind::Tanh, vec![a.clone()], shape, out)
    }

    /// Elementwise GELU (tanh approximation).
    pub fn gelu(&mut self, a: &Tensor) -> Tensor {
        let shape = a.shape();
        let out: Vec<f64> = a.data().values.iter().map(|&x| gelu(x)).collect();
        self.push(OpKind::Gelu, vec![a.clone()], shape, out)
    }

    /// Multiplication by a compile-time constant scalar.
    pub fn scale(&mut self, a: &Tensor, c: f64) -> Tensor {
        let shape = a.shape();
        let out: Vec<f64> = a.data().values.iter().map(|x| x * c).collect();
        self.push(OpKind::Scale(c), vec![a.clone()], shape, out)
    }

    /// Row-wise softmax of a 2-D tensor, with per-row max subtraction so
    /// saturated logits stay finite.
    pub fn softmax_rows(&mut self, a: &Tensor) -> Result<Tensor> {
        let sa = a.shape();
        let (m, n) = dims2(&sa).ok_or_else(|| shape_err("softmax_rows", &sa, &sa))?;
        let ad = a.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &ad.values[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let orow = &mut out[i * n..(i + 1) * n];
            let mut z = 0.0;
            for (o, &x) in orow.iter_mut().zip(row) {
                *o = (x - max).exp();
                z += *o;
            }
            for o in orow.iter_mut() {
                *o /= z;
            }
        }
        drop(ad);
        Ok(self.push(OpKind::SoftmaxRows, vec![a.clone()], vec![m, n], out))
    }

    /// Embedding lookup: selects rows of `table` by id. Repeated ids are
    /// allowed; their gradients scatter-add back onto the same row.
    pub fn gather_rows(&mut self, table: &Tensor, ids: &[usize]) -> Result<Tensor> {
        let st = table.shape();
        let (rows, n) = dims2(&st).ok_or_else(|| shape_err("gather_rows", &st, &st))?;
        let td = table.data();
        let mut out = Vec::with_capacity(ids.len() * n);
        for &id in ids {
            if id >= rows {
                return Err(Error::IndexOutOfRange { id, size: rows });
            }
            out.extend_from_slice(&td.values[id * n..(id + 1) * n]);
        }
        drop(td);
        Ok(self.push(
            OpKind::GatherRows { ids: ids.to_vec() },
            vec![table.clone()],
            vec![ids.len(), n],
            out,
        ))
    }

    /// Per-row layer normalization with learned gain and bias vectors.
    pub fn layer_norm(&mut self, x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
        debug_assert!(eps > 0.0, "layer_norm eps must be positive");
        let sx = x.shape();
        let (m, n) = dims2(&sx).ok_or_else(|| shape_err("layer_norm", &sx, &sx))?;
        if gain.shape() != [n] || bias.shape() != [n] {
            return Err(shape_err("layer_norm", &sx, &gain.shape()));
        }
        let (xd, gd, bd) = (x.data(), gain.data(), bias.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &xd.values[i * n..(i + 1) * n];
            let (mean, inv) = row_norm_stats(row, eps);
            for j in 0..n {
                out[i * n + j] = gd.values[j] * (row[j] - mean) * inv + bd.values[j];
            }
        }
        drop((xd, gd, bd));
        Ok(self.push(
            OpKind::LayerNorm { eps },
            vec![x.clone(), gain.clone(), bias.clone()],
            vec![m, n],
            out,
        ))
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1/(1-rate)`, so the
    /// expected output equals the input. In eval mode (or at rate 0) this is
    /// the identity and records nothing.
    pub fn dropout(
        &mut self,
        x: &Tensor,
        rate: f64,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<Tensor> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidParameter {
                name: "dropout rate",
                value: rate,
                requirement: "0 <= rate < 1",
            });
        }
        if !training || rate == 0.0 {
            return Ok(x.clone());
        }
        let shape = x.shape();
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        let xd = x.data();
        let mask: Vec<f64> = (0..xd.values.len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { scale })
            .collect();
        let out: Vec<f64> = xd.values.iter().zip(&mask).map(|(v, m)| v * m).collect();
        drop(xd);
        Ok(self.push(OpKind::Dropout { mask }, vec![x.clone()], shape, out))
    }

    /// Stacks 2-D tensors with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(shape_err("concat_rows", &[], &[]));
        }
        let first = parts[0].shape();
        let (_, n) = dims2(&first).ok_or_else(|| shape_err("concat_rows", &first, &first))?;
        let mut row_counts = Vec::with_capacity(parts.len());
        let mut total_rows = 0;
        let mut out = Vec::new();
        for p in parts {
            let sp = p.shape();
            let (m, np) = dims2(&sp).ok_or_else(|| shape_err("concat_rows", &first, &sp))?;
            if np != n {
                return Err(shape_err("concat_rows", &first, &sp));
            }
            out.extend_from_slice(&p.data().values);
            row_counts.push(m);
            total_rows += m;
        }
        Ok(self.push(
            OpKind::ConcatRows { row_counts },
            parts.to_vec(),
            vec![total_rows, n],
            out,
        ))
    }

    /// Concatenates 2-D tensors with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(shape_err("concat_cols", &[], &[]));
        }
        let first = parts[0].shape();
        let (m, _) = dims2(&first).ok_or_else(|| shape_err("concat_cols", &first, &first))?;
        let mut col_counts = Vec::with_capacity(parts.len());
        let mut total_cols = 0;
        for p in parts {
            let sp = p.shape();
            let (mp, np) = dims2(&sp).ok_or_else(|| shape_err("concat_cols", &first, &sp))?;
            if mp != m {
                return Err(shape_err("concat_cols", &first, &sp));
            }
            col_counts.push(np);
            total_cols += np;
        }
        let mut out = vec![0.0; m * total_cols];
        let mut col_off = 0;
        for p in parts {
            let sp = p.shape();
            let np = sp[1];
            let pd = p.data();
            for i in 0..m {
                out[i * total_cols + col_off..i * total_cols + col_off + np]
                    .copy_from_slice(&pd.values[i * np..(i + 1) * np]);
            }
            col_off += np;
        }
        Ok(self.push(
            OpKind::ConcatCols { col_counts },
            parts.to_vec(),
            vec![m, total_cols],
            out,
        ))
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, a: &Tensor) -> Tensor {
        let total: f64 = a.data().values.iter().sum();
        self.push(OpKind::Sum, vec![a.clone()], vec![1], vec![total])
    }

    /// Mean negative log-likelihood of binary labels under row-wise softmax
    /// of `[m, 2]` logits, fused through log-sum-exp for stability.
    pub fn nll_from_logits(&mut self, logits: &Tensor, labels: &[u8]) -> Result<Tensor> {
        let sl = logits.shape();
        let (m, n) = dims2(&sl).ok_or_else(|| shape_err("nll_from_logits", &sl, &sl))?;
        if n != 2 || m != labels.len() || m == 0 {
            return Err(shape_err("nll_from_logits", &sl, &[labels.len(), 2]));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::InvalidLabel(bad));
        }
        let ld = logits.data();
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = &ld.values[i * 2..i * 2 + 2];
            let max = row[0].max(row[1]);
            let lse = max + ((row[0] - max).exp() + (row[1] - max).exp()).ln();
            total += lse - row[y as usize];
        }
        drop(ld);
        Ok(self.push(
            OpKind::NllFromLogits {
                labels: labels.to_vec(),
            },
            vec![logits.clone()],
            vec![1],
            vec![total / m as f64],
        ))
    }

    /// Reverse pass from a scalar loss. Seeds the loss gradient with 1 and
    /// replays the records in reverse insertion order (which is reverse
    /// topological order, since every operand exists before its consumer).
    ///
    /// Gradients accumulate into leaf buffers, so callers control reset
    /// points via [`Tensor::zero_grad`]; intermediate (op-output) gradients
    /// are cleared on entry so that running backward again contributes
    /// exactly one more gradient, not compounded stale flow.
    pub fn backward(&self, loss: &Tensor) -> Result<()> {
        if loss.shape() != [1] {
            return Err(Error::NonScalarLoss(loss.shape()));
        }
        if !loss.requires_grad() {
            return Ok(());
        }
        for record in &self.records {
            record.output.zero_grad();
        }
        loss.accumulate_grad(&[1.0]);
        for record in self.records.iter().rev() {
            // The output cell is always distinct from every input cell (ops
            // never return an operand), so holding this borrow while the
            // inputs accumulate their gradients cannot conflict.
            let out = record.output.data();
            if !out.requires_grad {
                continue;
            }
            let Some(g_out) = out.grad.as_deref() else {
                continue;
            };
            backprop_record(record, g_out);
        }
        Ok(())
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn row_norm_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + eps).sqrt())
}

fn backprop_record(record: &OpRecord, g_out: &[f64]) {
    let inputs = &record.inputs;
    match &record.kind {
        OpKind::Matmul => {
            let (a, b) = (&inputs[0], &inputs[1]);
            let (m, n) = dims2(&a.shape()).expect("2-D");
            let p = b.shape()[1];
            if a.requires_grad() {
                // dA = dC·Bᵀ, computed against an explicit transpose so the
                // inner loop walks contiguous memory instead of reducing a
                // strided dot product. Additions still run over ascending j,
                // so the result is bit-identical to the naive form.
                let bd = b.data();
                let mut bt = vec![0.0; n * p];
                for k in 0..n {
                    for j in 0..p {
                        bt[j * n + k] = bd.values[k * p + j];
                    }
                }
                drop(bd);
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    let grow = &g_out[i * p..(i + 1) * p];
                    let darow = &mut da[i * n..(i + 1) * n];
                    for (j, &g) in grow.iter().enumerate() {
                        let btrow = &bt[j * n..(j + 1) * n];
                        for (d, &bv) in darow.iter_mut().zip(btrow) {
                            *d += g * bv;
                        }
                    }
                }
                a.accumulate_grad(&da);
            }
            if b.requires_grad() {
                let ad = a.data();
                let mut db = vec![0.0; n * p];
                for i in 0..m {
                    let arow = &ad.values[i * n..(i + 1) * n];
                    let grow = &g_out[i * p..(i + 1) * p];
                    for (k, &aik) in arow.iter().enumerate() {
                        let drow = &mut db[k * p..(k + 1) * p];
                        for (d, &g) in drow.iter_mut().zip(grow) {
                            *d += aik * g;
                        }
                    }
                }
                drop(ad);
                b.accumulate_grad(&db);
            }
        }
        OpKind::Transpose => {
            let a = &inputs[0];
            if a.requires_grad() {
                let (m, n) = dims2(&a.shape()).expect("2-D");
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        da[i * n + j] = g_out[j * m + i];
                    }
                }
                a.accumulate_grad(&da);
            }
        }
        OpKind::Add => {
            for t in inputs {
                if t.requires_grad() {
                    t.accumulate_grad(g_out);
                }
            }
        }
        OpKind::AddRowBroadcast => {
            let (mat, vec_t) = (&inputs[0], &inputs[1]);
            let (m, n) = dims2(&mat.shape()).expect("2-D");
            if mat.requires_grad() {
                mat.accumulate_grad(g_out);
            }
            if vec_t.requires_grad() {
                let mut dv = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        dv[j] += g_out[i * n + j];
                    }
                }
                vec_t.accumulate_grad(&dv);
            }
        }
        OpKind::Mul => {
            let (a, b) = (&inputs[0], &inputs[1]);
            if a.requires_grad() {
                let bd = b.data();
                let da: Vec<f64> = g_out.iter().zip(&bd.values).map(|(g, y)| g * y).collect();
                drop(bd);
                a.accumulate_grad(&da);
            }
            if b.requires_grad() {
                let ad = a.data();
                let db: Vec<f64> = g_out.iter().zip(&ad.values).map(|(g, x)| g * x).collect();
                drop(ad);
                b.accumulate_grad(&db);
            }
        }
        OpKind::MulRowBroadcast => {
            let (mat, vec_t) = (&inputs[0], &inputs[1]);
            let (m, n) = dims2(&mat.shape()).expect("2-D");
            if mat.requires_grad() {
                let vd = vec_t.data();
                let mut dm = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        dm[i * n + j] = g_out[i * n + j] * vd.values[j];
                    }
                }
                drop(vd);
                mat.accumulate_grad(&dm);
            }
            if vec_t.requires_grad() {
                let md = mat.data();
                let mut dv = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        dv[j] += g_out[i * n + j] * md.values[i * n + j];
                    }
                }
                drop(md);
                vec_t.accumulate_grad(&dv);
            }
        }
        OpKind::Tanh => {
            let a = &inputs[0];
            if a.requires_grad() {
                let od = record.output.data();
                let da: Vec<f64> = g_out
                    .iter()
                    .zip(&od.values)
                    .map(|(g, y)| g * (1.0 - y * y))
                    .collect();
                drop(od);
                a.accumulate_grad(&da);
            }
        }
        OpKind::Gelu => {
            let a = &inputs[0];
            if a.requires_grad() {
                let ad = a.data();
                let da: Vec<f64> = g_out
                    .iter()
                    .zip(&ad.values)
                    .map(|(g, &x)| g * gelu_grad(x))
                    .collect();
                drop(ad);
                a.accumulate_grad(&da);
            }
        }
        OpKind::Scale(c) => {
            let a = &inputs[0];
            if a.requires_grad() {
                let da: Vec<f64> = g_out.iter().map(|g| g * c).collect();
                a.accumulate_grad(&da);
            }
        }
        OpKind::SoftmaxRows => {
            let a = &inputs[0];
            if a.requires_grad() {
                let (m, n) = dims2(&a.shape()).expect("2-D");
                let od = record.output.data();
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    let y = &od.values[i * n..(i + 1) * n];
                    let g = &g_out[i * n..(i + 1) * n];
                    let dot: f64 = y.iter().zip(g).map(|(yj, gj)| yj * gj).sum();
                    for j in 0..n {
                        da[i * n + j] = y[j] * (g[j] - dot);
                    }
                }
                drop(od);
                a.accumulate_grad(&da);
            }
        }
        OpKind::GatherRows { ids } => {
            let table = &inputs[0];
            if table.requires_grad() {
                let (rows, n) = dims2(&table.shape()).expect("2-D");
                let mut dt = vec![0.0; rows * n];
                for (r, &id) in ids.iter().enumerate() {
                    for j in 0..n {
                        dt[id * n + j] += g_out[r * n + j];
                    }
                }
                table.accumulate_grad(&dt);
            }
        }
        OpKind::LayerNorm { eps } => {
            let (x, gain, bias) = (&inputs[0], &inputs[1], &inputs[2]);
            let (m, n) = dims2(&x.shape()).expect("2-D");
            let xd = x.data();
            let gd = gain.data();
            let mut dx = vec![0.0; m * n];
            let mut dgain = vec![0.0; n];
            let mut dbias = vec![0.0; n];
            let mut xhat = vec![0.0; n];
            let mut dxhat = vec![0.0; n];
            for i in 0..m {
                let row = &xd.values[i * n..(i + 1) * n];
                let g = &g_out[i * n..(i + 1) * n];
                let (mean, inv) = row_norm_stats(row, *eps);
                for j in 0..n {
                    xhat[j] = (row[j] - mean) * inv;
                    dxhat[j] = g[j] * gd.values[j];
                    dgain[j] += g[j] * xhat[j];
                    dbias[j] += g[j];
                }
                let mean_dxhat = dxhat.iter().sum::<f64>() / n as f64;
                let mean_dxhat_xhat =
                    dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                for j in 0..n {
                    dx[i * n + j] = inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                }
            }
            drop((xd, gd));
            if x.requires_grad() {
                x.accumulate_grad(&dx);
            }
            if gain.requires_grad() {
                gain.accumulate_grad(&dgain);
            }
            if bias.requires_grad() {
                bias.accumulate_grad(&dbias);
            }
        }
        OpKind::Dropout { mask } => {
            let a = &inputs[0];
            if a.requires_grad() {
                let da: Vec<f64> = g_out.iter().zip(mask).map(|(g, m)| g * m).collect();
                a.accumulate_grad(&da);
            }
        }
        OpKind::ConcatRows { row_counts } => {
            let n = inputs[0].shape()[1];
            let mut offset = 0;
            for (part, &rows) in inputs.iter().zip(row_counts) {
                let span = rows * n;
                if part.requires_grad() {
                    part.accumulate_grad(&g_out[offset..offset + span]);
                }
                offset += span;
            }
        }
        OpKind::ConcatCols { col_counts } => {
            let m = inputs[0].shape()[0];
            let total_cols: usize = col_counts.iter().sum();
            let mut col_off = 0;
            for (part, &nc) in inputs.iter().zip(col_counts) {
                if part.requires_grad() {
                    let mut dp = vec![0.0; m * nc];
                    for i in 0..m {
                        dp[i * nc..(i + 1) * nc].copy_from_slice(
                            &g_out[i * total_cols + col_off..i * total_cols + col_off + nc],
                        );
                    }
                    part.accumulate_grad(&dp);
                }
                col_off += nc;
            }
        }
        OpKind::Sum => {
            let a = &inputs[0];
            if a.requires_grad() {
                let da = vec![g_out[0]; a.numel()];
                a.accumulate_grad(&da);
            }
        }
        OpKind::NllFromLogits { labels } => {
            let logits = &inputs[0];
            if logits.requires_grad() {
                let m = labels.len();
                let ld = logits.data();
                let mut dl = vec![0.0; m * 2];
                let scale = g_out[0] / m as f64;
                for (i, &y) in labels.iter().enumerate() {
                    let row = &ld.values[i * 2..i * 2 + 2];
                    let max = row[0].max(row[1]);
                    let e0 = (row[0] - max).exp();
                    let e1 = (row[1] - max).exp();
                    let z = e0 + e1;
                    dl[i * 2] = (e0 / z - if y == 0 { 1.0 } else { 0.0 }) * scale;
                    dl[i * 2 + 1] = (e1 / z - if y == 1 { 1.0 } else { 0.0 }) * scale;
                }
                drop(ld);
                logits.accumulate_grad(&dl);
            }
        }
    }
}
