//! Least-squares harmonic models of a single cycle, used to continue a
//! signal past its ends.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

/// Harmonic count used for edge continuations.
pub const DEFAULT_HARMONICS: usize = 7;

/// A fitted `c0 + sum_k (a_k sin(k w n) + b_k cos(k w n))` model. Sample
/// index 0 is the first sample of the fitted segment.
#[derive(Debug, Clone)]
pub struct HarmonicFit {
    pub period: f64,
    pub coefs: Vec<f64>,
    pub sse: f64,
}

fn basis_row(n: f64, w: f64, harmonics: usize, row: &mut [f64]) {
    row[0] = 1.0;
    if harmonics == 0 {
        return;
    }
    let (s1, c1) = (w * n).sin_cos();
    let (mut s, mut c) = (s1, c1);
    for k in 1..=harmonics {
        row[2 * k - 1] = s;
        row[2 * k] = c;
        (s, c) = (s * c1 + c * s1, c * c1 - s * s1);
    }
}

fn design(len: usize, period: f64, harmonics: usize) -> DMatrix<f64> {
    let cols = 2 * harmonics + 1;
    let w = 2.0 * PI / period;
    let mut m = DMatrix::zeros(len, cols);
    let mut row = vec![0.0; cols];
    for n in 0..len {
        basis_row(n as f64, w, harmonics, &mut row);
        for (j, v) in row.iter().enumerate() {
            m[(n, j)] = *v;
        }
    }
    m
}

/// Fit at a fixed period. The model is linear in `seg`.
pub fn fit_fixed(seg: &[f64], period: f64, harmonics: usize) -> HarmonicFit {
    // keep the system overdetermined on short segments
    let harmonics = harmonics.min(seg.len().saturating_sub(1) / 2);
    let m = design(seg.len(), period, harmonics);
    let y = DVector::from_column_slice(seg);
    let mty = m.tr_mul(&y);
    // normal equations are well conditioned over a full cycle; fall back to
    // SVD on short or degenerate segments
    let coefs = match m.tr_mul(&m).cholesky() {
        Some(ch) if seg.len() as f64 >= period => ch.solve(&mty),
        _ => {
            let svd = m.clone().svd(true, true);
            let eps = 1e-10 * svd.singular_values.max().max(f64::MIN_POSITIVE);
            svd.solve(&y, eps).expect("svd computed with u and v")
        }
    };
    let sse = (&m * &coefs - y).norm_squared();
    HarmonicFit {
        period,
        coefs: coefs.as_slice().to_vec(),
        sse,
    }
}

/// Fit with the period refined by golden-section search on the residual
/// within `guess * (1 ± rel_span)`.
pub fn fit_free(seg: &[f64], guess: f64, rel_span: f64, harmonics: usize) -> HarmonicFit {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (guess * (1.0 - rel_span), guess * (1.0 + rel_span));
    let cost = |p: f64| fit_fixed(seg, p, harmonics).sse;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (cost(c), cost(d));
    while b - a > 1e-5 * guess {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = cost(d);
        }
    }
    fit_fixed(seg, 0.5 * (a + b), harmonics)
}

impl HarmonicFit {
    fn harmonics(&self) -> usize {
        (self.coefs.len() - 1) / 2
    }

    pub fn eval(&self, n: f64) -> f64 {
        let mut row = vec![0.0; self.coefs.len()];
        basis_row(n, 2.0 * PI / self.period, self.harmonics(), &mut row);
        row.iter().zip(&self.coefs).map(|(r, c)| r * c).sum()
    }

    /// Evaluate at `start, start+1, ..., start+count-1`.
    pub fn eval_range(&self, start: i64, count: usize) -> Vec<f64> {
        (0..count).map(|i| self.eval((start + i as i64) as f64)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(n: usize, p: f64) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / p;
                3.0 * t.sin() + 0.4 * (3.0 * t + 0.3).sin() + 0.1
            })
            .collect()
    }

    #[test]
    fn fixed_fit_extrapolates_exact_model() {
        let x = tone(400, 256.0);
        let fit = fit_fixed(&x[144..], 256.0, DEFAULT_HARMONICS);
        let ext = fit.eval_range(256, 10);
        let truth = tone(410, 256.0);
        for (a, b) in ext.iter().zip(&truth[400..]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn free_fit_recovers_period() {
        let x = tone(256, 259.3);
        let fit = fit_free(&x, 256.0, 0.03, DEFAULT_HARMONICS);
        assert!((fit.period - 259.3).abs() < 1e-3, "{}", fit.period);
        let back = fit.eval_range(-5, 5);
        let truth: Vec<f64> = (-5..0)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / 259.3;
                3.0 * t.sin() + 0.4 * (3.0 * t + 0.3).sin() + 0.1
            })
            .collect();
        for (a, b) in back.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}
