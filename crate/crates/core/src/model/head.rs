//! Cosine classifier: class scores are cosines between a feature and the rows of `W`.

/// Added to vector norms so zero vectors have a defined cosine (of zero).
pub const NORM_EPS: f64 = 1e-12;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / ((norm(a) + NORM_EPS) * (norm(b) + NORM_EPS))
}

/// Cosine and its gradients with respect to both arguments.
pub fn cosine_grad(a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let (na, nb) = (norm(a), norm(b));
    let (da_den, db_den) = (na + NORM_EPS, nb + NORM_EPS);
    let cos = dot(a, b) / (da_den * db_den);
    let side = |x: &[f64], nx: f64, dx: f64, y: &[f64], dy: f64| -> Vec<f64> {
        let self_term = if nx > 0.0 { cos / nx } else { 0.0 };
        x.iter().zip(y).map(|(xi, yi)| (yi / dy - self_term * xi) / dx).collect()
    };
    let ga = side(a, na, da_den, b, db_den);
    let gb = side(b, nb, db_den, a, da_den);
    (cos, ga, gb)
}

/// Scores `cos(W_c, f)` for every class row of `w` (`classes × dim`, row-major).
pub fn cosine_scores(w: &[f64], classes: usize, dim: usize, feat: &[f64]) -> Vec<f64> {
    debug_assert_eq!(w.len(), classes * dim);
    w.chunks_exact(dim).map(|row| cosine(row, feat)).collect()
}

/// Given `d_scores`, accumulates `dW` and returns the feature gradient.
pub fn cosine_scores_backward(w: &[f64], classes: usize, dim: usize, feat: &[f64], d_scores: &[f64], dw: &mut [f64]) -> Vec<f64> {
    debug_assert_eq!(d_scores.len(), classes);
    let mut d_feat = vec![0.0; dim];
    for (c, &ds) in d_scores.iter().enumerate() {
        if ds == 0.0 {
            continue;
        }
        let row = &w[c * dim..(c + 1) * dim];
        let (_, g_row, g_feat) = cosine_grad(row, feat);
        dw[c * dim..(c + 1) * dim].iter_mut().zip(&g_row).for_each(|(a, g)| *a += ds * g);
        d_feat.iter_mut().zip(&g_feat).for_each(|(a, g)| *a += ds * g);
    }
    d_feat
}
