use serde::{Deserialize, Serialize};

/// min / mean / max / p99 of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub p99: f64,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // nearest-rank
    let rank = ((0.99 * n as f64).ceil() as usize).clamp(1, n);
    Some(Summary {
        count: n,
        min: sorted[0],
        mean: sorted.iter().sum::<f64>() / n as f64,
        max: sorted[n - 1],
        p99: sorted[rank - 1],
    })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// `P(X >= successes)` for `X ~ Binomial(trials, 1/2)`.
pub fn sign_test_p_value(successes: usize, trials: usize) -> f64 {
    if successes == 0 {
        return 1.0;
    }
    if successes > trials {
        return 0.0;
    }
    // log C(n, k) accumulated to stay finite for large n
    let ln_half_n = trials as f64 * 0.5f64.ln();
    let mut ln_c = 0.0f64;
    let mut tail = 0.0;
    for k in 0..=trials {
        if k > 0 {
            ln_c += ((trials - k + 1) as f64).ln() - (k as f64).ln();
        }
        if k >= successes {
            tail += (ln_c + ln_half_n).exp();
        }
    }
    tail.min(1.0)
}

/// Paired one-sided sign test that `a` tends to be smaller than `b`.
/// Ties are dropped. Returns `(wins, non-tied pairs, p-value)`.
pub fn paired_sign_test(a: &[f64], b: &[f64]) -> (usize, usize, f64) {
    let mut wins = 0;
    let mut n = 0;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            wins += 1;
            n += 1;
        } else if x > y {
            n += 1;
        }
    }
    (wins, n, sign_test_p_value(wins, n))
}
