//! Naive reference implementations for cross-checking the calibration library.
//!
//! Everything here works on plain `f64` slices and favours obviously-correct
//! loops over speed. Nothing in this crate may call into `cmcal-core`.

/// Membership test for bin `i` of `edges`: `[t0, t1]` for the first bin,
/// `(t_{i}, t_{i+1}]` for the rest. Values above the last edge belong to the
/// last bin.
pub fn in_bin(x: f64, edges: &[f64], i: usize) -> bool {
    let b = edges.len() - 1;
    let lo = edges[i];
    let hi = edges[i + 1];
    let above_lo = if i == 0 { x >= lo } else { x > lo };
    let below_hi = if i == b - 1 { true } else { x <= hi };
    above_lo && below_hi
}

pub fn uniform_edges(b: usize) -> Vec<f64> {
    let mut e: Vec<f64> = (0..=b).map(|i| i as f64 / b as f64).collect();
    e[b] = 1.0;
    e
}

/// Class order by descending probability, ties by ascending index, via
/// selection sort.
pub fn desc_order(p: &[f64]) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..p.len()).collect();
    let mut out = Vec::with_capacity(p.len());
    while !remaining.is_empty() {
        let mut best = 0;
        for j in 1..remaining.len() {
            let (a, c) = (remaining[best], remaining[j]);
            if p[c] > p[a] || (p[c] == p[a] && c < a) {
                best = j;
            }
        }
        out.push(remaining.remove(best));
    }
    out
}

/// 1-based rank of class `y` in the descending order.
pub fn rank_of(p: &[f64], y: usize) -> usize {
    1 + (0..p.len())
        .filter(|&j| p[j] > p[y] || (p[j] == p[y] && j < y))
        .count()
}

/// Mass of the top-`t` prefix, recomputed from scratch. The full prefix is
/// pinned to exactly 1.
pub fn prefix_mass(p: &[f64], t: usize) -> f64 {
    if t == p.len() {
        return 1.0;
    }
    let order = desc_order(p);
    let mut s = 0.0;
    for &c in order.iter().take(t) {
        s += p[c];
    }
    s.min(1.0)
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..p.len() {
        if p[j] > p[best] {
            best = j;
        }
    }
    best
}

fn binned_gap(items: &[(f64, f64)], edges: &[f64], weight_den: f64) -> (f64, f64) {
    // items: (value used for binning, outcome). Returns (weighted sum, max gap).
    let b = edges.len() - 1;
    let mut total = 0.0;
    let mut worst = 0.0_f64;
    for i in 0..b {
        let mut n = 0usize;
        let mut conf = 0.0;
        let mut acc = 0.0;
        for &(v, o) in items {
            if in_bin(v, edges, i) {
                n += 1;
                conf += v;
                acc += o;
            }
        }
        if n > 0 {
            let gap = (acc / n as f64 - conf / n as f64).abs();
            total += n as f64 / weight_den * gap;
            worst = worst.max(gap);
        }
    }
    (total, worst)
}

pub fn ece(probs: &[Vec<f64>], labels: &[usize], edges: &[f64]) -> f64 {
    let items: Vec<(f64, f64)> = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| {
            let a = argmax(p);
            (p[a], if a == y { 1.0 } else { 0.0 })
        })
        .collect();
    binned_gap(&items, edges, probs.len() as f64).0
}

pub fn mce(probs: &[Vec<f64>], labels: &[usize], edges: &[f64]) -> f64 {
    let items: Vec<(f64, f64)> = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| {
            let a = argmax(p);
            (p[a], if a == y { 1.0 } else { 0.0 })
        })
        .collect();
    binned_gap(&items, edges, probs.len() as f64).1
}

pub fn cwece(probs: &[Vec<f64>], labels: &[usize], edges: &[f64]) -> f64 {
    let k = probs[0].len();
    let den = (probs.len() * k) as f64;
    let mut total = 0.0;
    for j in 0..k {
        let items: Vec<(f64, f64)> = probs
            .iter()
            .zip(labels)
            .map(|(p, &y)| (p[j], if y == j { 1.0 } else { 0.0 }))
            .collect();
        total += binned_gap(&items, edges, den).0;
    }
    total
}

/// All `K * N` prefix sets as (mass, contains label).
pub fn prefix_sets(probs: &[Vec<f64>], labels: &[usize]) -> Vec<(f64, bool)> {
    let mut out = Vec::new();
    for (p, &y) in probs.iter().zip(labels) {
        let r = rank_of(p, y);
        for t in 1..=p.len() {
            out.push((prefix_mass(p, t), r <= t));
        }
    }
    out
}

pub fn cmce(probs: &[Vec<f64>], labels: &[usize], edges: &[f64]) -> f64 {
    let sets = prefix_sets(probs, labels);
    let items: Vec<(f64, f64)> = sets
        .iter()
        .map(|&(m, hit)| (m, if hit { 1.0 } else { 0.0 }))
        .collect();
    binned_gap(&items, edges, sets.len() as f64).0
}

pub fn coverage(probs: &[Vec<f64>], labels: &[usize], a: f64, b: f64) -> Option<f64> {
    let sets = prefix_sets(probs, labels);
    let mut n = 0usize;
    let mut hits = 0usize;
    for (m, hit) in sets {
        if m >= a && m <= b {
            n += 1;
            if hit {
                hits += 1;
            }
        }
    }
    if n == 0 {
        None
    } else {
        Some(hits as f64 / n as f64)
    }
}

/// Split-conformal rank `ceil((1 - a/1000)(n + 1))` in exact integer
/// arithmetic, for `alpha = alpha_permille / 1000`.
pub fn conformal_rank(n: usize, alpha_permille: u32) -> usize {
    let num = (1000 - alpha_permille as usize) * (n + 1);
    num.div_ceil(1000)
}

/// Sort-and-index threshold; `None` when the rank exceeds `n`.
pub fn quantile_threshold(scores: &[f64], alpha_permille: u32) -> Option<f64> {
    let mut s = scores.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let r = conformal_rank(s.len(), alpha_permille);
    if r > s.len() {
        None
    } else {
        Some(s[r - 1])
    }
}

/// Weighted least-squares isotonic fit by enumerating every contiguous
/// partition and keeping the feasible one with the least squared error.
pub fn isotonic_exhaustive(y: &[f64], w: &[f64]) -> Vec<f64> {
    let n = y.len();
    assert!((1..=16).contains(&n));
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        // bit i set => cut between i and i+1
        let mut fitted = vec![0.0; n];
        let mut start = 0;
        let mut prev = f64::NEG_INFINITY;
        let mut feasible = true;
        for end in 0..n {
            let cut = end == n - 1 || mask & (1 << end) != 0;
            if cut {
                let mut sw = 0.0;
                let mut swy = 0.0;
                for i in start..=end {
                    sw += w[i];
                    swy += w[i] * y[i];
                }
                let m = swy / sw;
                if m < prev {
                    feasible = false;
                    break;
                }
                prev = m;
                for v in fitted.iter_mut().take(end + 1).skip(start) {
                    *v = m;
                }
                start = end + 1;
            }
        }
        if !feasible {
            continue;
        }
        let sse: f64 = (0..n).map(|i| w[i] * (y[i] - fitted[i]).powi(2)).sum();
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, fitted));
        }
    }
    best.unwrap().1
}

/// Binary cross-entropy of `sigmoid(a z + b)` against soft targets.
pub fn platt_loss(z: &[f64], t: &[f64], a: f64, b: f64) -> f64 {
    z.iter()
        .zip(t)
        .map(|(&zi, &ti)| {
            let f = a * zi + b;
            // log(1 + e^{-f}) and log(1 + e^{f}) computed naively but guarded
            let lp = -(1.0 + (-f).exp()).ln();
            let lq = -(1.0 + f.exp()).ln();
            -(ti * lp + (1.0 - ti) * lq)
        })
        .sum()
}

/// Exhaustive grid over `[-range, range]^2`; returns `(a, b, loss)`.
pub fn platt_grid(z: &[f64], t: &[f64], range: f64, steps: usize) -> (f64, f64, f64) {
    let mut best = (0.0, 0.0, f64::INFINITY);
    for i in 0..=steps {
        let a = -range + 2.0 * range * i as f64 / steps as f64;
        for j in 0..=steps {
            let b = -range + 2.0 * range * j as f64 / steps as f64;
            let l = platt_loss(z, t, a, b);
            if l < best.2 {
                best = (a, b, l);
            }
        }
    }
    best
}

/// `KL(q || p)` with the `0 log 0 = 0` convention.
pub fn kl(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .filter(|(&qi, _)| qi > 0.0)
        .map(|(&qi, &pi)| qi * (qi / pi).ln())
        .sum()
}

/// In-set mass of `p^(1/tau)` normalised, via the power form rather than
/// log-softmax.
pub fn tempered_in_mass(p: &[f64], set: &[usize], tau: f64) -> f64 {
    let top = p.iter().cloned().fold(0.0, f64::max);
    let w: Vec<f64> = p.iter().map(|&x| (x / top).powf(1.0 / tau)).collect();
    let total: f64 = w.iter().sum();
    set.iter().map(|&i| w[i]).sum::<f64>() / total
}

/// Sample mean and unbiased standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mut mean = 0.0;
    for x in xs {
        mean += x;
    }
    mean /= n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let mut ss = 0.0;
    for x in xs {
        ss += (x - mean) * (x - mean);
    }
    (mean, (ss / (n - 1.0)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_rule() {
        assert_eq!(conformal_rank(9, 100), 9);
        assert_eq!(conformal_rank(3, 500), 2);
        assert_eq!(conformal_rank(3, 100), 4);
    }

    #[test]
    fn exhaustive_isotonic_pools_violators() {
        let f = isotonic_exhaustive(&[0.7, 0.2, 0.5], &[1.0; 3]);
        assert!((f[0] - 0.45).abs() < 1e-15 && (f[1] - 0.45).abs() < 1e-15);
        assert_eq!(f[2], 0.5);
    }

    #[test]
    fn order_ties_by_index() {
        assert_eq!(desc_order(&[0.2, 0.5, 0.3]), vec![1, 2, 0]);
        assert_eq!(desc_order(&[0.25; 4]), vec![0, 1, 2, 3]);
    }
}
