//! Error metrics and the paired t-test.

use serde::Serialize;

use crate::error::{Error, Result};

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} responses",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("no predictions to score".to_string()));
    }
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / pred.len() as f64)
}

/// `100 · (baseline − method) / baseline`; negative when the method is worse.
pub fn percent_improvement(mse_method: f64, mse_baseline: f64) -> Result<f64> {
    if !(mse_baseline > 0.0) {
        return Err(Error::Domain(format!(
            "improvement undefined for baseline MSE {mse_baseline}"
        )));
    }
    Ok(100.0 * (mse_baseline - mse_method) / mse_baseline)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Two-sided paired t-test on `a − b`. Differences with zero spread give
/// `t = ±∞, p = 0` (nonzero mean) or `t = 0, p = 1` (zero mean).
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "paired samples of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let m = a.len();
    if m < 2 {
        return Err(Error::Dimension(format!(
            "paired t-test needs 2 pairs, got {m}"
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "paired t-test input is not finite".to_string(),
        ));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mf = m as f64;
    let mean = d.iter().sum::<f64>() / mf;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (mf - 1.0);
    let df = mf - 1.0;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTest { t: 0.0, df, p: 1.0 }
        } else {
            TTest {
                t: mean.signum() * f64::INFINITY,
                df,
                p: 0.0,
            }
        });
    }
    let t = mean / (var / mf).sqrt();
    Ok(TTest {
        t,
        df,
        p: student_t_two_sided(t, df),
    })
}

/// `P(|T| ≥ |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_beta(x, 0.5 * df, 0.5).clamp(0.0, 1.0)
}

/// Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_fraction(1.0 - x, b, a) / b
    }
}

/// Continued fraction for the incomplete beta, modified Lentz method.
fn beta_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    #[test]
    fn metric_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(percent_improvement(0.0, 3.0).unwrap(), 100.0);
        assert_eq!(percent_improvement(1.0, 2.0).unwrap(), 50.0);
        assert!((percent_improvement(2.64, 2.0).unwrap() + 32.0).abs() <= 1e-12);
        assert!(matches!(
            percent_improvement(1.0, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn worked_example() {
        let r = paired_t_test(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
        assert!((r.t - 2.0 * 3f64.sqrt()).abs() <= 1e-12);
        assert_eq!(r.df, 2.0);
        // df = 2 has the closed form p = 1 − |t| / sqrt(2 + t²)
        let closed = 1.0 - r.t / (2.0 + r.t * r.t).sqrt();
        assert!((r.p - closed).abs() <= 1e-12, "{} {closed}", r.p);
        assert!((r.p - 0.0742).abs() <= 1e-3);
    }

    #[test]
    fn sentinels_and_antisymmetry() {
        let a = [1.0, 4.0, 2.0, 8.0];
        let r = paired_t_test(&a, &a).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
        let r = paired_t_test(&[2.0, 3.0], &[1.0, 2.0]).unwrap();
        assert_eq!((r.t, r.p), (f64::INFINITY, 0.0));
        let b = [0.5, 4.5, 1.0, 6.0];
        let ab = paired_t_test(&a, &b).unwrap();
        let ba = paired_t_test(&b, &a).unwrap();
        assert_eq!(ab.t, -ba.t);
        assert_eq!(ab.p, ba.p);
        assert!(paired_t_test(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn matches_reference_cdf() {
        for df in [1.0, 2.0, 3.0, 5.0, 10.0, 30.0, 100.0, 1000.0] {
            let dist = StudentsT::new(0.0, 1.0, df).unwrap();
            for t in [0.0, 0.1, 0.5, 1.0, 1.96, 2.5, 4.0, 10.0] {
                let want = 2.0 * (1.0 - dist.cdf(t));
                let got = student_t_two_sided(t, df);
                assert!((got - want).abs() <= 1e-6, "df {df} t {t}: {got} {want}");
            }
        }
    }

    #[test]
    fn gamma_values() {
        assert!(ln_gamma(1.0).abs() <= 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() <= 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() <= 1e-13);
    }
}
