//! Independent reference computations, written without reusing library code.

use newsstance::corpus::StanceLabel;

/// (accuracy, per-class f1, macro f1) by direct counting over the label lists.
pub fn metrics(gold: &[StanceLabel], pred: &[StanceLabel]) -> (f64, [f64; 3], f64) {
    let n = gold.len() as f64;
    let correct = gold.iter().zip(pred).filter(|(g, p)| g == p).count() as f64;
    let mut f1 = [0.0; 3];
    for (i, label) in StanceLabel::ALL.iter().enumerate() {
        let tp = gold.iter().zip(pred).filter(|(g, p)| *g == label && *p == label).count() as f64;
        let fp = gold.iter().zip(pred).filter(|(g, p)| *g != label && *p == label).count() as f64;
        let fn_ = gold.iter().zip(pred).filter(|(g, p)| *g == label && *p != label).count() as f64;
        // F1 = 2TP / (2TP + FP + FN), zero when the class never occurs
        f1[i] = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
    }
    (correct / n, f1, f1.iter().sum::<f64>() / 3.0)
}

/// Pearson chi-squared from expected counts, then V = sqrt(chi2 / (n (k-1))).
pub fn cramers_v(table: &[Vec<f64>]) -> f64 {
    let rows: Vec<&Vec<f64>> = table.iter().filter(|r| r.iter().sum::<f64>() > 0.0).collect();
    let keep: Vec<usize> = (0..table[0].len())
        .filter(|&j| table.iter().map(|r| r[j]).sum::<f64>() > 0.0)
        .collect();
    let n: f64 = rows.iter().map(|r| r.iter().sum::<f64>()).sum();
    let mut chi2 = 0.0;
    for r in &rows {
        let rt: f64 = r.iter().sum();
        for &j in &keep {
            let ct: f64 = rows.iter().map(|r| r[j]).sum();
            let e = rt * ct / n;
            chi2 += (r[j] - e) * (r[j] - e) / e;
        }
    }
    let k = rows.len().min(keep.len()) as f64 - 1.0;
    (chi2 / (n * k)).sqrt()
}

/// Krippendorff's alpha for nominal data via pairwise disagreement rates:
/// D_o averages within-unit mismatches, D_e counts mismatches over all
/// pairable values.
pub fn alpha(ratings: &[Vec<Option<u8>>]) -> f64 {
    let units: Vec<Vec<u8>> = ratings
        .iter()
        .map(|u| u.iter().flatten().copied().collect::<Vec<_>>())
        .filter(|u| u.len() >= 2)
        .collect();
    let all: Vec<u8> = units.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let mut d_o = 0.0;
    for u in &units {
        let m = u.len() as f64;
        let mut mismatches = 0.0;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j && u[i] != u[j] {
                    mismatches += 1.0;
                }
            }
        }
        d_o += mismatches / (m - 1.0);
    }
    d_o /= n;
    let mut e = 0.0;
    for i in 0..all.len() {
        for j in 0..all.len() {
            if i != j && all[i] != all[j] {
                e += 1.0;
            }
        }
    }
    let d_e = e / (n * (n - 1.0));
    if d_o == 0.0 {
        1.0
    } else {
        1.0 - d_o / d_e
    }
}

/// Normalised Shannon entropy of raw counts.
pub fn entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum();
    h / 3f64.log2()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Exhaustive greedy MMR: every step rescores all remaining candidates from
/// scratch against the whole selected set. Candidates are
/// `(id, vector, stance)`; ties go to the smaller id. `alpha` is `None` for
/// text-only similarity.
pub fn mmr(query: &[f64], cands: &[(usize, Vec<f64>, StanceLabel)], lambda: f64, alpha: Option<f64>) -> Vec<usize> {
    let sim = |a: &(usize, Vec<f64>, StanceLabel), b: &(usize, Vec<f64>, StanceLabel)| {
        let t = cos(&a.1, &b.1);
        match alpha {
            None => t,
            Some(w) => w * t + (1.0 - w) * if a.2 == b.2 { 1.0 } else { 0.0 },
        }
    };
    let mut picked: Vec<&(usize, Vec<f64>, StanceLabel)> = Vec::new();
    let mut left: Vec<&(usize, Vec<f64>, StanceLabel)> = cands.iter().collect();
    left.sort_by_key(|c| c.0);
    while !left.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for (pos, c) in left.iter().enumerate() {
            let rel = cos(&c.1, query);
            let score = if picked.is_empty() {
                rel
            } else {
                let red = picked.iter().map(|p| sim(c, p)).fold(f64::NEG_INFINITY, f64::max);
                (1.0 - lambda) * rel - lambda * red
            };
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((pos, score));
            }
        }
        picked.push(left.remove(best.unwrap().0));
    }
    picked.iter().map(|c| c.0).collect()
}
