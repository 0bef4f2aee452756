//! Direct-from-definition metric implementations, written without the
//! library's helpers. Sums run in row order so results are comparable
//! bit for bit.

/// Distinct labels in first-appearance order.
fn labels<G: PartialEq + Clone>(groups: &[G]) -> Vec<G> {
    let mut out: Vec<G> = Vec::new();
    for g in groups {
        if !out.contains(g) {
            out.push(g.clone());
        }
    }
    out
}

fn mean_where<G: PartialEq>(values: &[f64], groups: &[G], g: &G) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..values.len() {
        if groups[i] == *g {
            sum += values[i];
            n += 1;
        }
    }
    sum / n as f64
}

fn abs_errors(actual: &[f64], predicted: &[f64]) -> Vec<f64> {
    (0..actual.len()).map(|i| (actual[i] - predicted[i]).abs()).collect()
}

/// Largest pairwise gap between group means.
fn max_pairwise_gap(means: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for a in means {
        for b in means {
            if a - b > best {
                best = a - b;
            }
        }
    }
    best
}

fn pop_variance(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in v {
        s += x;
    }
    let m = s / v.len() as f64;
    let mut ss = 0.0;
    for x in v {
        ss += (x - m) * (x - m);
    }
    ss / v.len() as f64
}

pub fn spd<G: PartialEq + Clone>(predicted: &[f64], groups: &[G]) -> f64 {
    let means: Vec<f64> = labels(groups).iter().map(|g| mean_where(predicted, groups, g)).collect();
    max_pairwise_gap(&means)
}

/// Groups are visited in sorted label order, which fixes the rounding of the
/// variance sum.
pub fn prediction_variance<G: PartialEq + Clone + Ord>(predicted: &[f64], groups: &[G]) -> f64 {
    let mut ls = labels(groups);
    ls.sort();
    let means: Vec<f64> = ls.iter().map(|g| mean_where(predicted, groups, g)).collect();
    pop_variance(&means)
}

pub fn equal_opportunity<G: PartialEq + Clone>(actual: &[f64], predicted: &[f64], groups: &[G]) -> f64 {
    let e = abs_errors(actual, predicted);
    let maes: Vec<f64> = labels(groups).iter().map(|g| mean_where(&e, groups, g)).collect();
    max_pairwise_gap(&maes)
}

pub fn regional_gap(actual: &[f64], predicted: &[f64], haor: &[bool]) -> f64 {
    let e = abs_errors(actual, predicted);
    (mean_where(&e, haor, &true) - mean_where(&e, haor, &false)).abs()
}

pub fn mse(actual: &[f64], predicted: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..actual.len() {
        s += (actual[i] - predicted[i]) * (actual[i] - predicted[i]);
    }
    s / actual.len() as f64
}

pub fn mae(actual: &[f64], predicted: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..actual.len() {
        s += (actual[i] - predicted[i]).abs();
    }
    s / actual.len() as f64
}

pub fn rmse(actual: &[f64], predicted: &[f64]) -> f64 {
    mse(actual, predicted).sqrt()
}

pub fn r2(actual: &[f64], predicted: &[f64]) -> f64 {
    let mut s = 0.0;
    for a in actual {
        s += a;
    }
    let m = s / actual.len() as f64;
    let (mut res, mut tot) = (0.0, 0.0);
    for i in 0..actual.len() {
        res += (actual[i] - predicted[i]) * (actual[i] - predicted[i]);
        tot += (actual[i] - m) * (actual[i] - m);
    }
    1.0 - res / tot
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for i in 0..x.len() {
        sx += x[i];
        sy += y[i];
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut cxy, mut cxx, mut cyy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        cxy += (x[i] - mx) * (y[i] - my);
        cxx += (x[i] - mx) * (x[i] - mx);
        cyy += (y[i] - my) * (y[i] - my);
    }
    cxy / (cxx * cyy).sqrt()
}

/// Rank by counting: 1 + #smaller + (#equal − 1) / 2.
pub fn mid_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|a| {
            let less = x.iter().filter(|b| *b < a).count() as f64;
            let equal = x.iter().filter(|b| *b == a).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&mid_ranks(x), &mid_ranks(y))
}
