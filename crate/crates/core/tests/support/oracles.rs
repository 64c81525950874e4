//! Direct, unoptimized transcriptions of every loss formula, written
//! without the crate's helpers so they can serve as independent references.

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b))
}

/// `-1/B sum_i log( e^{s(cos_iy - m)} / (e^{s(cos_iy - m)} + sum_{j != y} e^{s cos_ij}) )`
pub fn am_softmax(cosines: &[Vec<f64>], labels: &[usize], s: f64, m: f64) -> f64 {
    let mut total = 0.0;
    for (row, &y) in cosines.iter().zip(labels) {
        let target = (s * (row[y] - m)).exp();
        let others: f64 = row.iter().enumerate().filter(|(j, _)| *j != y).map(|(_, c)| (s * c).exp()).sum();
        total += -(target / (target + others)).ln();
    }
    total / cosines.len() as f64
}

/// Negative mean cosine similarity of paired features.
pub fn similarity(f: &[Vec<f64>], f_hat: &[Vec<f64>]) -> f64 {
    -f.iter().zip(f_hat).map(|(a, b)| cos(a, b)).sum::<f64>() / f.len() as f64
}

/// Margin-free class probabilities `e^{s cos_c} / sum_j e^{s cos_j}`.
pub fn predict(cosines: &[f64], s: f64) -> Vec<f64> {
    let denom: f64 = cosines.iter().map(|c| (s * c).exp()).sum();
    cosines.iter().map(|c| (s * c).exp() / denom).collect()
}

/// `1/B sum_i 1[max_c q_ic >= tau] * (-sum_c q_ic log q_hat_ic)`
pub fn consistency(q: &[Vec<f64>], q_hat: &[Vec<f64>], tau: f64) -> f64 {
    let mut total = 0.0;
    for (p, r) in q.iter().zip(q_hat) {
        let confident = p.iter().any(|&v| v >= tau);
        if confident {
            total -= p.iter().zip(r).map(|(a, b)| a * b.ln()).sum::<f64>();
        }
    }
    total / q.len() as f64
}

/// Class means over labeled source features and confidently pseudo-labeled
/// target features; `None` for classes without members.
pub fn class_means(
    source: &[Vec<f64>],
    labels: &[usize],
    target: &[Vec<f64>],
    q: &[Vec<f64>],
    tau: f64,
    classes: usize,
) -> Vec<Option<Vec<f64>>> {
    (0..classes)
        .map(|c| {
            let mut members: Vec<&Vec<f64>> = source.iter().zip(labels).filter(|(_, &y)| y == c).map(|(f, _)| f).collect();
            for (f, p) in target.iter().zip(q) {
                let best = (0..p.len()).fold(0, |b, j| if p[j] > p[b] { j } else { b });
                if best == c && p[best] >= tau {
                    members.push(f);
                }
            }
            if members.is_empty() {
                return None;
            }
            let dim = members[0].len();
            Some((0..dim).map(|d| members.iter().map(|f| f[d]).sum::<f64>() / members.len() as f64).collect())
        })
        .collect()
}

/// One exponential-moving-average step; an unseen class takes the batch value.
pub fn ema(previous: Option<&[f64]>, batch: &[f64], alpha: f64) -> Vec<f64> {
    match previous {
        None => batch.to_vec(),
        Some(p) => p.iter().zip(batch).map(|(z, b)| alpha * b + (1.0 - alpha) * z).collect(),
    }
}

/// AM-softmax between classifier rows `w[c]` and class centroids `z[c]`,
/// averaged over classes that have a centroid.
pub fn centroid(w: &[Vec<f64>], z: &[Option<Vec<f64>>], s: f64, m: f64) -> f64 {
    let active: Vec<usize> = (0..z.len()).filter(|&c| z[c].is_some()).collect();
    if active.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for &c in &active {
        let zc = z[c].as_ref().unwrap();
        let row: Vec<f64> = w.iter().map(|wj| cos(wj, zc)).collect();
        total += am_softmax(&[row], &[c], s, m);
    }
    total / active.len() as f64
}
