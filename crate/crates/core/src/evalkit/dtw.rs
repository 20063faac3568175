use super::EvalError;

/// Accumulated cost and warping path, `(i, j)` pairs from `(0, 0)` to
/// `(n - 1, m - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DtwResult {
    pub distance: f64,
    pub path: Vec<(usize, usize)>,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Dynamic time warping with Euclidean frame cost and steps
/// `(1, 0)`, `(0, 1)`, `(1, 1)`.
pub fn dtw(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<DtwResult, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::Input("DTW needs two non-empty sequences".into()));
    }
    let dim = a[0].len();
    if let Some(f) = a.iter().chain(b).find(|f| f.len() != dim) {
        return Err(EvalError::Input(format!("DTW frame dimension {} differs from {dim}", f.len())));
    }
    let (n, m) = (a.len(), b.len());
    let mut acc = vec![f64::INFINITY; n * m];
    let at = |i: usize, j: usize| i * m + j;
    for i in 0..n {
        for j in 0..m {
            let c = euclid(&a[i], &b[j]);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let mut best = f64::INFINITY;
                if i > 0 {
                    best = best.min(acc[at(i - 1, j)]);
                }
                if j > 0 {
                    best = best.min(acc[at(i, j - 1)]);
                }
                if i > 0 && j > 0 {
                    best = best.min(acc[at(i - 1, j - 1)]);
                }
                best
            };
            acc[at(i, j)] = c + best;
        }
    }
    // backtrack, preferring the diagonal on ties
    let (mut i, mut j) = (n - 1, m - 1);
    let mut path = vec![(i, j)];
    while i > 0 || j > 0 {
        let mut cand = Vec::with_capacity(3);
        if i > 0 && j > 0 {
            cand.push((i - 1, j - 1));
        }
        if i > 0 {
            cand.push((i - 1, j));
        }
        if j > 0 {
            cand.push((i, j - 1));
        }
        let next = cand
            .into_iter()
            .fold(None::<(usize, usize)>, |best, c| match best {
                Some(b) if acc[at(b.0, b.1)] <= acc[at(c.0, c.1)] => Some(b),
                _ => Some(c),
            })
            .expect("a predecessor exists");
        (i, j) = next;
        path.push(next);
    }
    path.reverse();
    Ok(DtwResult { distance: acc[at(n - 1, m - 1)], path })
}
