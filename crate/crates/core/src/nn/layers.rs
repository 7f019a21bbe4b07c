//! Per-layer forward and backward kernels.
//!
//! Recurrent cell (Cho et al. gating, h0 = 0):
//!   z = sigmoid(Wz x + Uz h + bz)
//!   r = sigmoid(Wr x + Ur h + br)
//!   n = tanh(Wn x + Un (r * h) + bn)
//!   h' = (1 - z) * h + z * n
//! with W = [Wz; Wr; Wn] (3H x in), U = [Uz; Ur; Un] (3H x H), b (3H).

use alloc::vec;
use alloc::vec::Vec;

use super::{Layer, LayerSpec, Mat, Value};
use crate::error::{Error, Result};

pub(super) enum Cache {
    Recurrent {
        x: Mat,
        /// Hidden states including h0, `(steps + 1) x hidden`.
        h: Mat,
        z: Mat,
        r: Mat,
        n: Mat,
    },
    Dense {
        x: Mat,
        y: Mat,
        seq: bool,
    },
    Attention {
        x: Mat,
        k: Mat,
        v: Mat,
        alpha: Vec<f64>,
    },
    Flatten {
        steps: usize,
        dim: usize,
    },
}

#[inline]
fn matvec_add(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

#[inline]
fn matvec_t_add(w: &[f64], cols: usize, g: &[f64], out: &mut [f64]) {
    for (gr, row) in g.iter().zip(w.chunks_exact(cols)) {
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * gr;
        }
    }
}

#[inline]
fn outer_add(dw: &mut [f64], cols: usize, g: &[f64], x: &[f64]) {
    for (gr, row) in g.iter().zip(dw.chunks_exact_mut(cols)) {
        for (d, xv) in row.iter_mut().zip(x) {
            *d += gr * xv;
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn to_mat(v: Value) -> (Mat, bool) {
    match v {
        Value::Sequence(m) => (m, true),
        Value::Vector(v) => {
            let n = v.len();
            (Mat::from_vec(1, n, v).expect("row vector"), false)
        }
    }
}

fn expect_seq(v: Value, dim: usize) -> Result<Mat> {
    match v {
        Value::Sequence(m) if m.cols() == dim => Ok(m),
        other => Err(Error::ShapeMismatch {
            expected: dim,
            got: other.port().dim(),
        }),
    }
}

pub(super) fn forward(layer: &Layer, input: Value) -> Result<(Value, Cache)> {
    match layer.spec {
        LayerSpec::Recurrent { input: in_dim, hidden } => {
            let x = expect_seq(input, in_dim)?;
            let (w, u, b) = (
                layer.params[0].values(),
                layer.params[1].values(),
                layer.params[2].values(),
            );
            let steps = x.rows();
            let hd = hidden;
            let mut h = Mat::zeros(steps + 1, hd);
            let mut z = Mat::zeros(steps, hd);
            let mut r = Mat::zeros(steps, hd);
            let mut n = Mat::zeros(steps, hd);
            let mut a = vec![0.0; 3 * hd];
            let mut rh = vec![0.0; hd];
            for t in 0..steps {
                a.copy_from_slice(b);
                matvec_add(w, in_dim, x.row(t), &mut a);
                let hp = h.row(t).to_vec();
                matvec_add(&u[..2 * hd * hd], hd, &hp, &mut a[..2 * hd]);
                for j in 0..hd {
                    let zj = sigmoid(a[j]);
                    let rj = sigmoid(a[hd + j]);
                    z.row_mut(t)[j] = zj;
                    r.row_mut(t)[j] = rj;
                    rh[j] = rj * hp[j];
                }
                matvec_add(&u[2 * hd * hd..], hd, &rh, &mut a[2 * hd..]);
                let hn = h.row_mut(t + 1);
                for j in 0..hd {
                    let nj = libm::tanh(a[2 * hd + j]);
                    n.row_mut(t)[j] = nj;
                    let zj = z.get(t, j);
                    hn[j] = (1.0 - zj) * hp[j] + zj * nj;
                }
            }
            let out = Mat::from_vec(steps, hd, h.as_slice()[hd..].to_vec())?;
            Ok((Value::Sequence(out), Cache::Recurrent { x, h, z, r, n }))
        }
        LayerSpec::Dense {
            input: in_dim,
            output,
            activation,
        } => {
            let (x, seq) = to_mat(input);
            if x.cols() != in_dim {
                return Err(Error::ShapeMismatch {
                    expected: in_dim,
                    got: x.cols(),
                });
            }
            let (w, b) = (layer.params[0].values(), layer.params[1].values());
            let mut y = Mat::zeros(x.rows(), output);
            for t in 0..x.rows() {
                let yr = y.row_mut(t);
                yr.copy_from_slice(b);
                matvec_add(w, in_dim, x.row(t), yr);
                yr.iter_mut().for_each(|v| *v = activation.apply(*v));
            }
            let out = if seq {
                Value::Sequence(y.clone())
            } else {
                Value::Vector(y.as_slice().to_vec())
            };
            Ok((out, Cache::Dense { x, y, seq }))
        }
        LayerSpec::SelfAttentionCls { dim } => {
            let x = expect_seq(input, dim)?;
            let (q, wk, wv) = (
                layer.params[0].values(),
                layer.params[1].values(),
                layer.params[2].values(),
            );
            let steps = x.rows();
            let scale = 1.0 / libm::sqrt(dim as f64);
            let mut k = Mat::zeros(steps, dim);
            let mut v = Mat::zeros(steps, dim);
            let mut scores = vec![0.0; steps];
            for t in 0..steps {
                matvec_add(wk, dim, x.row(t), k.row_mut(t));
                matvec_add(wv, dim, x.row(t), v.row_mut(t));
                scores[t] = scale * k.row(t).iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
            }
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut alpha: Vec<f64> = scores.iter().map(|s| libm::exp(s - max)).collect();
            let total: f64 = alpha.iter().sum();
            alpha.iter_mut().for_each(|a| *a /= total);
            let mut out = vec![0.0; dim];
            for t in 0..steps {
                for (o, vv) in out.iter_mut().zip(v.row(t)) {
                    *o += alpha[t] * vv;
                }
            }
            Ok((Value::Vector(out), Cache::Attention { x, k, v, alpha }))
        }
        LayerSpec::Flatten { steps, dim } => {
            let x = expect_seq(input, dim)?;
            if x.rows() != steps {
                return Err(Error::ShapeMismatch {
                    expected: steps,
                    got: x.rows(),
                });
            }
            Ok((Value::Vector(x.into_vec()), Cache::Flatten { steps, dim }))
        }
    }
}

pub(super) fn backward(layer: &mut Layer, cache: Cache, d_out: Value) -> Value {
    match (layer.spec, cache) {
        (LayerSpec::Recurrent { input: in_dim, hidden: hd }, Cache::Recurrent { x, h, z, r, n }) => {
            let (dy, _) = to_mat(d_out);
            let [pw, pu, pb] = &mut layer.params[..] else {
                unreachable!("recurrent layer has three parameter tensors")
            };
            let (w, dw) = (&pw.values, &mut pw.grad);
            let (u, du) = (&pu.values, &mut pu.grad);
            let db = &mut pb.grad;
            let steps = x.rows();
            let mut dx = Mat::zeros(steps, in_dim);
            let mut dh_next = vec![0.0; hd];
            let mut da = vec![0.0; 3 * hd];
            let mut dhp = vec![0.0; hd];
            let mut drh = vec![0.0; hd];
            let mut rh = vec![0.0; hd];
            for t in (0..steps).rev() {
                let hp = h.row(t);
                let (zt, rt, nt) = (z.row(t), r.row(t), n.row(t));
                for j in 0..hd {
                    let dh = dy.get(t, j) + dh_next[j];
                    let dz = dh * (nt[j] - hp[j]);
                    let dn = dh * zt[j];
                    dhp[j] = dh * (1.0 - zt[j]);
                    da[j] = dz * zt[j] * (1.0 - zt[j]);
                    da[2 * hd + j] = dn * (1.0 - nt[j] * nt[j]);
                    rh[j] = rt[j] * hp[j];
                }
                let un = &u[2 * hd * hd..];
                drh.iter_mut().for_each(|v| *v = 0.0);
                matvec_t_add(un, hd, &da[2 * hd..], &mut drh);
                for j in 0..hd {
                    let dr = drh[j] * hp[j];
                    dhp[j] += drh[j] * rt[j];
                    da[hd + j] = dr * rt[j] * (1.0 - rt[j]);
                }
                outer_add(dw, in_dim, &da, x.row(t));
                for (g, d) in db.iter_mut().zip(&da) {
                    *g += d;
                }
                outer_add(&mut du[..2 * hd * hd], hd, &da[..2 * hd], hp);
                outer_add(&mut du[2 * hd * hd..], hd, &da[2 * hd..], &rh);
                matvec_t_add(&u[..2 * hd * hd], hd, &da[..2 * hd], &mut dhp);
                matvec_t_add(w, in_dim, &da, dx.row_mut(t));
                dh_next.copy_from_slice(&dhp);
            }
            Value::Sequence(dx)
        }
        (
            LayerSpec::Dense {
                input: in_dim,
                output,
                activation,
            },
            Cache::Dense { x, y, seq },
        ) => {
            let (dy, _) = to_mat(d_out);
            let [pw, pb] = &mut layer.params[..] else {
                unreachable!("dense layer has two parameter tensors")
            };
            let mut dx = Mat::zeros(x.rows(), in_dim);
            let mut da = vec![0.0; output];
            for t in 0..x.rows() {
                for j in 0..output {
                    da[j] = dy.get(t, j) * activation.derivative_from_output(y.get(t, j));
                }
                outer_add(&mut pw.grad, in_dim, &da, x.row(t));
                for (g, d) in pb.grad.iter_mut().zip(&da) {
                    *g += d;
                }
                matvec_t_add(&pw.values, in_dim, &da, dx.row_mut(t));
            }
            if seq {
                Value::Sequence(dx)
            } else {
                Value::Vector(dx.into_vec())
            }
        }
        (LayerSpec::SelfAttentionCls { dim }, Cache::Attention { x, k, v, alpha }) => {
            let dout = match d_out {
                Value::Vector(v) => v,
                Value::Sequence(m) => m.into_vec(),
            };
            let [pq, pk, pv] = &mut layer.params[..] else {
                unreachable!("attention layer has three parameter tensors")
            };
            let steps = x.rows();
            let scale = 1.0 / libm::sqrt(dim as f64);
            let dalpha: Vec<f64> = (0..steps)
                .map(|t| v.row(t).iter().zip(&dout).map(|(a, b)| a * b).sum())
                .collect();
            let mean: f64 = alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
            let mut dx = Mat::zeros(steps, dim);
            let mut dk = vec![0.0; dim];
            let mut dv = vec![0.0; dim];
            for t in 0..steps {
                let ds = alpha[t] * (dalpha[t] - mean);
                for j in 0..dim {
                    dk[j] = ds * scale * pq.values[j];
                    pq.grad[j] += ds * scale * k.get(t, j);
                    dv[j] = alpha[t] * dout[j];
                }
                outer_add(&mut pk.grad, dim, &dk, x.row(t));
                outer_add(&mut pv.grad, dim, &dv, x.row(t));
                matvec_t_add(&pk.values, dim, &dk, dx.row_mut(t));
                matvec_t_add(&pv.values, dim, &dv, dx.row_mut(t));
            }
            Value::Sequence(dx)
        }
        (LayerSpec::Flatten { .. }, Cache::Flatten { steps, dim }) => {
            let flat = match d_out {
                Value::Vector(v) => v,
                Value::Sequence(m) => m.into_vec(),
            };
            Value::Sequence(Mat::from_vec(steps, dim, flat).expect("flatten shape"))
        }
        _ => unreachable!("cache does not match layer kind"),
    }
}
