//! Least-squares slopes and the slope-difference t-test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// p-values below this are reported as "< P_FLOOR" rather than as numbers.
pub const P_FLOOR: f64 = 1e-12;

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
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
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
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
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided p-value `P(|T| ≥ |t|)` for Student's t with `dof` degrees.
pub fn t_two_sided_p(t: f64, dof: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    inc_beta(dof / 2.0, 0.5, dof / (dof + t * t)).clamp(0.0, 1.0)
}

/// Student's t CDF.
pub fn t_cdf(t: f64, dof: f64) -> f64 {
    let tail = 0.5 * t_two_sided_p(t, dof);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub dof: usize,
    /// Two-sided test of zero slope.
    pub p_value: f64,
}

struct Moments {
    n: usize,
    sxx: f64,
    slope: f64,
    intercept: f64,
    rss: f64,
}

fn moments(xs: &[f64], ys: &[f64]) -> Result<Moments> {
    if xs.len() != ys.len() {
        return Err(Error::ShapeMismatch {
            op: "ols",
            lhs: vec![xs.len()],
            rhs: vec![ys.len()],
        });
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::Invalid(format!("regression needs >= 3 points, got {n}")));
    }
    let nf = n as f64;
    let mean_x = xs.iter().sum::<f64>() / nf;
    let mean_y = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Invalid("regression needs at least two distinct x values".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let rss = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(Moments {
        n,
        sxx,
        slope,
        intercept,
        rss,
    })
}

/// p-value of `estimate / se` under `dof` degrees of freedom, treating a zero
/// standard error as exact: p = 1 for a zero estimate, 0 otherwise.
fn p_from(estimate: f64, se: f64, dof: usize) -> f64 {
    if se == 0.0 {
        return if estimate == 0.0 { 1.0 } else { 0.0 };
    }
    t_two_sided_p(estimate / se, dof as f64)
}

pub fn ols(xs: &[f64], ys: &[f64]) -> Result<RegressionFit> {
    let m = moments(xs, ys)?;
    let dof = m.n - 2;
    let se = (m.rss / dof as f64 / m.sxx).sqrt();
    Ok(RegressionFit {
        slope: m.slope,
        intercept: m.intercept,
        slope_se: se,
        dof,
        p_value: p_from(m.slope, se, dof),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeTest {
    pub fit_a: RegressionFit,
    pub fit_b: RegressionFit,
    /// Interaction coefficient of `y ~ x + g + g·x`, i.e. slope_b − slope_a.
    pub interaction: f64,
    pub interaction_se: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl SlopeTest {
    pub fn below_floor(&self) -> bool {
        self.p_value < P_FLOOR
    }

    /// p-value as reported in tables.
    pub fn p_display(&self) -> String {
        if self.below_floor() {
            format!("<{P_FLOOR:e}")
        } else {
            format!("{:.4}", self.p_value)
        }
    }
}

/// Two-sided t-test on the method × n interaction of the pooled regression.
/// The full interaction model fits each curve's line separately, so its
/// coefficient is the slope difference and its residual sum of squares is
/// the sum of the two separate fits'.
pub fn slope_difference_test(xa: &[f64], ya: &[f64], xb: &[f64], yb: &[f64]) -> Result<SlopeTest> {
    let ma = moments(xa, ya)?;
    let mb = moments(xb, yb)?;
    let dof = ma.n + mb.n - 4;
    let s2 = (ma.rss + mb.rss) / dof as f64;
    let interaction = mb.slope - ma.slope;
    let interaction_se = (s2 * (1.0 / ma.sxx + 1.0 / mb.sxx)).sqrt();
    Ok(SlopeTest {
        fit_a: ols(xa, ya)?,
        fit_b: ols(xb, yb)?,
        interaction,
        interaction_se,
        dof,
        p_value: p_from(interaction, interaction_se, dof),
    })
}
