//! Reference implementations shared by the integration tests.

use fgc::graph::pairs;

/// Objective written out from the definition, independent of the library.
pub fn gl_value(p: &[f64], w: &[f64], d: usize, alpha: f64, beta: f64) -> f64 {
    let mut deg = vec![0.0; d];
    for (k, (i, j)) in pairs(d).enumerate() {
        deg[i] += w[k];
        deg[j] += w[k];
    }
    if deg.iter().any(|&v| v <= 0.0) {
        return f64::INFINITY;
    }
    p.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() - alpha * deg.iter().map(|v| v.ln()).sum::<f64>()
        + 2.0 * beta * w.iter().map(|v| v * v).sum::<f64>()
}

/// Projected gradient with backtracking, a fixed number of steps.
pub fn projected_gradient(p: &[f64], d: usize, alpha: f64, beta: f64, steps: usize) -> Vec<f64> {
    let m = p.len();
    let mut w = vec![1.0; m];
    let mut f = gl_value(p, &w, d, alpha, beta);
    let mut t = 0.1;
    let mut grad = vec![0.0; m];
    let mut trial = vec![0.0; m];
    for _ in 0..steps {
        let mut deg = vec![0.0; d];
        for (k, (i, j)) in pairs(d).enumerate() {
            deg[i] += w[k];
            deg[j] += w[k];
        }
        for (k, (i, j)) in pairs(d).enumerate() {
            grad[k] = p[k] - alpha * (1.0 / deg[i] + 1.0 / deg[j]) + 4.0 * beta * w[k];
        }
        loop {
            let mut lin = 0.0;
            let mut sq = 0.0;
            for k in 0..m {
                trial[k] = (w[k] - t * grad[k]).max(0.0);
                let step = trial[k] - w[k];
                lin += grad[k] * step;
                sq += step * step;
            }
            let ft = gl_value(p, &trial, d, alpha, beta);
            if ft <= f + lin + sq / (2.0 * t) {
                std::mem::swap(&mut w, &mut trial);
                f = ft;
                t *= 1.2;
                break;
            }
            t *= 0.5;
            if t < 1e-18 {
                return w;
            }
        }
    }
    w
}
