use super::EvalError;
use crate::adversary::STYLE_BINS;
use crate::metrics::MetricsTable;

#[derive(Debug, Clone, PartialEq)]
pub struct StyleSummary {
    pub count: u64,
    pub mean: f64,
    pub std: f64,
    pub bins: Vec<u64>,
}

/// Pools the per-iteration style statistics of iterations `first..=last`
/// (by the `iter` column).
pub fn style_histogram(table: &MetricsTable, first: usize, last: usize) -> Result<StyleSummary, EvalError> {
    let it = table.column_index("iter")?;
    let mi = table.column_index("style_mean")?;
    let si = table.column_index("style_std")?;
    let bi: Vec<usize> = (0..STYLE_BINS)
        .map(|k| table.column_index(&format!("style_bin_{k:02}")))
        .collect::<Result<_, _>>()?;
    let mut bins = vec![0u64; STYLE_BINS];
    let (mut n, mut s1, mut s2) = (0u64, 0.0, 0.0);
    for row in &table.rows {
        let i = row[it] as usize;
        if i < first || i > last {
            continue;
        }
        let c: u64 = bi.iter().map(|&b| row[b] as u64).sum();
        for (acc, &b) in bins.iter_mut().zip(&bi) {
            *acc += row[b] as u64;
        }
        let (m, s) = (row[mi], row[si]);
        n += c;
        s1 += c as f64 * m;
        s2 += c as f64 * (s * s + m * m);
    }
    if n == 0 {
        return Err(EvalError::Input(format!("no style samples in iterations {first}..={last}")));
    }
    let mean = s1 / n as f64;
    let var = (s2 / n as f64 - mean * mean).max(0.0);
    Ok(StyleSummary { count: n, mean, std: var.sqrt(), bins })
}
