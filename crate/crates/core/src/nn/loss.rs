//! Triplet margin loss and the noisy pairwise ranking loss.

use alloc::vec::Vec;

fn l2(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// `max(0, |a - p| - |a - n| + margin)`.
pub fn triplet_margin_loss(a: &[f64], p: &[f64], n: &[f64], margin: f64) -> f64 {
    assert!(a.len() == p.len() && a.len() == n.len(), "triplet dims differ");
    (l2(a, p) - l2(a, n) + margin).max(0.0)
}

/// Loss and gradients w.r.t. anchor, positive and negative. At zero
/// distance the norm's subgradient is taken as 0.
pub fn triplet_margin_loss_grad(
    a: &[f64],
    p: &[f64],
    n: &[f64],
    margin: f64,
) -> (f64, [Vec<f64>; 3]) {
    let dim = a.len();
    let loss = triplet_margin_loss(a, p, n, margin);
    let mut ga = alloc::vec![0.0; dim];
    let mut gp = alloc::vec![0.0; dim];
    let mut gn = alloc::vec![0.0; dim];
    if loss > 0.0 {
        let dap = l2(a, p);
        let dan = l2(a, n);
        for i in 0..dim {
            if dap > 0.0 {
                let u = (a[i] - p[i]) / dap;
                ga[i] += u;
                gp[i] -= u;
            }
            if dan > 0.0 {
                let u = (a[i] - n[i]) / dan;
                ga[i] -= u;
                gn[i] += u;
            }
        }
    }
    (loss, [ga, gp, gn])
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Cross-entropy of the logistic preference `P = sigmoid(s_b - s_w)`
/// against the smoothed target `1 - label_noise`.
pub fn ranking_loss(score_better: f64, score_worse: f64, label_noise: f64) -> f64 {
    let d = score_better - score_worse;
    // -ln P = softplus(-d), -ln(1 - P) = softplus(d)
    (1.0 - label_noise) * softplus(-d) + label_noise * softplus(d)
}

/// Loss with its partial derivatives `(loss, d/ds_b, d/ds_w)`.
pub fn ranking_loss_grad(score_better: f64, score_worse: f64, label_noise: f64) -> (f64, f64, f64) {
    let d = score_better - score_worse;
    let g = sigmoid(d) - (1.0 - label_noise);
    (ranking_loss(score_better, score_worse, label_noise), g, -g)
}
