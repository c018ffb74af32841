//! Hypothesis-testing kernel: Shapiro-Wilk normality test (Royston 1995),
//! paired-samples t-test, and descriptive summaries.

use serde::Serialize;
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample too small: n = {n}, need at least {min}")]
    SampleTooSmall { n: usize, min: usize },
    #[error("sample too large: n = {n}, at most {max} supported")]
    SampleTooLarge { n: usize, max: usize },
    #[error("sample contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("sample has zero variance")]
    ConstantSample,
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("all paired differences are identical")]
    ZeroVarianceDifferences,
}

type Result<T> = std::result::Result<T, StatsError>;

/// Finite real observations in their original order.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleVector<T>(Vec<T>);

impl<T: Real> SampleVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<T: Real> TryFrom<Vec<T>> for SampleVector<T> {
    type Error = StatsError;

    fn try_from(values: Vec<T>) -> Result<Self> {
        Self::new(values)
    }
}

impl<T: Real> TryFrom<&[T]> for SampleVector<T> {
    type Error = StatsError;

    fn try_from(values: &[T]) -> Result<Self> {
        Self::new(values.to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult<T> {
    /// W for Shapiro-Wilk, T for the t-test.
    pub statistic: T,
    pub p_value: T,
    pub df: Option<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary<T> {
    pub n: usize,
    pub mean: T,
    /// Sample standard deviation (n - 1 denominator); absent for n = 1.
    pub sd: Option<T>,
}

pub fn mean<T: Real>(x: &[T]) -> Option<T> {
    if x.is_empty() {
        return None;
    }
    let n = T::from_usize(x.len())?;
    let rough = x.iter().fold(T::zero(), |acc, &v| acc + v) / n;
    // Second pass removes the rounding left by the naive sum.
    let correction = x.iter().fold(T::zero(), |acc, &v| acc + (v - rough)) / n;
    Some(rough + correction)
}

pub fn summarize<T: Real>(x: &SampleVector<T>) -> Result<Summary<T>> {
    let v = x.values();
    let m = mean(v).ok_or(StatsError::EmptySample)?;
    let sd = if v.len() >= 2 {
        let ss = v.iter().fold(T::zero(), |acc, &xi| acc + (xi - m) * (xi - m));
        Some((ss / T::lit((v.len() - 1) as f64)).sqrt())
    } else {
        None
    };
    Ok(Summary { n: v.len(), mean: m, sd })
}

// ---------------------------------------------------------------------------
// Shapiro-Wilk
// ---------------------------------------------------------------------------

const SW_MIN_N: usize = 3;
const SW_MAX_N: usize = 5000;

// Polynomial coefficients, ascending powers.
const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const G: [f64; 2] = [-2.273, 0.459];

fn poly<T: Real>(c: &[f64], x: T) -> T {
    c.iter().rev().fold(T::zero(), |acc, &ci| acc * x + T::lit(ci))
}

/// Half of the antisymmetric Shapiro-Wilk coefficient vector, largest first
/// (`a[0]` weights the extreme order statistics).
fn sw_coefficients<T: Real>(n: usize) -> Vec<T> {
    let half = n / 2;
    if n == 3 {
        return vec![T::FRAC_1_SQRT_2()];
    }
    let an = T::lit(n as f64);
    let an25 = an + T::lit(0.25);
    let m: Vec<T> = (0..half).map(|i| normal_quantile_as111(T::lit(i as f64 + 1.0 - 0.375) / an25)).collect();
    let summ2 = T::lit(2.0) * m.iter().fold(T::zero(), |acc, &v| acc + v * v);
    let ssumm2 = summ2.sqrt();
    let rsn = T::one() / an.sqrt();
    let two = T::lit(2.0);
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;

    let mut a = vec![T::zero(); half];
    let (first_free, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        let fac = ((summ2 - two * m[0] * m[0] - two * m[1] * m[1]) / (T::one() - two * a1 * a1 - two * a2 * a2)).sqrt();
        a[1] = a2;
        (2, fac)
    } else {
        let fac = ((summ2 - two * m[0] * m[0]) / (T::one() - two * a1 * a1)).sqrt();
        (1, fac)
    };
    a[0] = a1;
    for i in first_free..half {
        a[i] = -m[i] / fac;
    }
    a
}

/// Shapiro-Wilk W with Royston's coefficient approximation and normalizing
/// transform for the p-value. Valid for 3 <= n <= 5000.
pub fn shapiro_wilk<T: Real>(x: &SampleVector<T>) -> Result<TestResult<T>> {
    let n = x.len();
    if n < SW_MIN_N {
        return Err(StatsError::SampleTooSmall { n, min: SW_MIN_N });
    }
    if n > SW_MAX_N {
        return Err(StatsError::SampleTooLarge { n, max: SW_MAX_N });
    }
    let mut sorted = x.values().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    if sorted[0] == sorted[n - 1] {
        return Err(StatsError::ConstantSample);
    }

    let half = sw_coefficients::<T>(n);
    let xbar = mean(&sorted).expect("non-empty");
    let mut ss = T::zero();
    let mut num = T::zero();
    let mut norm = T::zero();
    for (i, &xi) in sorted.iter().enumerate() {
        let d = xi - xbar;
        ss = ss + d * d;
        let ai = if i < n / 2 {
            -half[i]
        } else if n - 1 - i < n / 2 {
            half[n - 1 - i]
        } else {
            T::zero()
        };
        num = num + ai * d;
        norm = norm + ai * ai;
    }
    if !(ss > T::zero()) {
        return Err(StatsError::ConstantSample);
    }
    let w = (num * num / (norm * ss)).min(T::one());
    Ok(TestResult { statistic: w, p_value: sw_p_value(w, n), df: None })
}

fn sw_p_value<T: Real>(w: T, n: usize) -> T {
    let an = T::lit(n as f64);
    if n == 3 {
        // Exact null distribution for n = 3; W cannot fall below 0.75.
        let w = w.max(T::lit(0.75));
        let p = T::one() - T::lit(6.0) / T::PI() * w.sqrt().acos();
        return p.max(T::zero()).min(T::one());
    }
    let y = (T::one() - w).ln();
    let z = if n <= 11 {
        let gamma = poly(&G, an);
        if y >= gamma {
            return T::zero();
        }
        let y = -(gamma - y).ln();
        let m = poly(&C3, an);
        let s = poly(&C4, an).exp();
        (y - m) / s
    } else {
        let xx = an.ln();
        let m = poly(&C5, xx);
        let s = poly(&C6, xx).exp();
        (y - m) / s
    };
    normal_upper_tail(z).max(T::zero()).min(T::one())
}

/// Normal quantile, algorithm AS 111 (the approximation Royston's
/// coefficient polynomials were fitted against).
fn normal_quantile_as111<T: Real>(p: T) -> T {
    const A: [f64; 4] = [2.50662823884, -18.61500062529, 41.39119773534, -25.44106049637];
    const B: [f64; 4] = [-8.47351093090, 23.08336743743, -21.06224101826, 3.13082909833];
    const C: [f64; 4] = [-2.78718931138, -2.29796479134, 4.85014127135, 2.32121276858];
    const D: [f64; 2] = [3.54388924762, 1.63706781897];
    let q = p - T::lit(0.5);
    if q.abs() <= T::lit(0.42) {
        let r = q * q;
        let num = ((T::lit(A[3]) * r + T::lit(A[2])) * r + T::lit(A[1])) * r + T::lit(A[0]);
        let den = (((T::lit(B[3]) * r + T::lit(B[2])) * r + T::lit(B[1])) * r + T::lit(B[0])) * r + T::one();
        return q * num / den;
    }
    let r = if q > T::zero() { T::one() - p } else { p };
    if !(r > T::zero()) {
        return T::zero();
    }
    let r = (-r.ln()).sqrt();
    let num = ((T::lit(C[3]) * r + T::lit(C[2])) * r + T::lit(C[1])) * r + T::lit(C[0]);
    let den = (T::lit(D[1]) * r + T::lit(D[0])) * r + T::one();
    let v = num / den;
    if q < T::zero() {
        -v
    } else {
        v
    }
}

/// Upper tail of the standard normal, algorithm AS 66.
pub fn normal_upper_tail<T: Real>(x: T) -> T {
    let (z, upper) = if x > T::zero() { (x, true) } else { (-x, false) };
    if z.is_nan() {
        return T::nan();
    }
    if z > T::lit(38.0) || (!upper && z > T::lit(7.0)) {
        return if upper { T::zero() } else { T::one() };
    }
    let y = T::lit(0.5) * z * z;
    let tail = if z <= T::lit(1.28) {
        T::lit(0.5)
            - z * (T::lit(0.398942280444)
                - T::lit(0.399903438504) * y
                    / (y + T::lit(5.75885480458)
                        - T::lit(29.8213557808)
                            / (y + T::lit(2.62433121679) + T::lit(48.6959930692) / (y + T::lit(5.92885724438)))))
    } else {
        T::lit(0.398942280385) * (-y).exp()
            / (z - T::lit(3.8052e-8)
                + T::lit(1.00000615302)
                    / (z + T::lit(3.98064794e-4)
                        + T::lit(1.98615381364)
                            / (z - T::lit(0.151679116635)
                                + T::lit(5.29330324926)
                                    / (z + T::lit(4.8385912808)
                                        - T::lit(15.1508972451)
                                            / (z + T::lit(0.742380924027)
                                                + T::lit(30.789933034) / (z + T::lit(3.99019417011)))))))
    };
    if upper {
        tail
    } else {
        T::one() - tail
    }
}

// ---------------------------------------------------------------------------
// Student t
// ---------------------------------------------------------------------------

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
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

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma<T: Real>(x: T) -> T {
    if x < T::lit(0.5) {
        // Reflection keeps the series in its accurate range.
        let pi = T::PI();
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (x + T::lit(i as f64));
    }
    let t = x + T::lit(LANCZOS_G + 0.5);
    T::lit(0.5) * (T::lit(2.0) * T::PI()).ln() + (x + T::lit(0.5)) * t.ln() - t + acc.ln()
}

const BETA_CF_MAX_ITERS: usize = 500;

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
pub fn regularized_incomplete_beta<T: Real>(x: T, a: T, b: T) -> T {
    if !(a > T::zero() && b > T::zero()) || x.is_nan() {
        return T::nan();
    }
    if x <= T::zero() {
        return T::zero();
    }
    if x >= T::one() {
        return T::one();
    }
    let ln_front = a * x.ln() + b * (T::one() - x).ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
    let front = ln_front.exp();
    if x < (a + T::one()) / (a + b + T::lit(2.0)) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        T::one() - front * beta_continued_fraction(T::one() - x, b, a) / b
    }
}

fn beta_continued_fraction<T: Real>(x: T, a: T, b: T) -> T {
    let tiny = T::min_positive_value() / T::epsilon();
    let tol = T::epsilon() * T::lit(4.0);
    let one = T::one();
    let two = T::lit(2.0);
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let clamp = |v: T| if v.abs() < tiny { tiny } else { v };
    let mut c = one;
    let mut d = one / clamp(one - qab * x / qap);
    let mut h = d;
    for m in 1..=BETA_CF_MAX_ITERS {
        let m = T::lit(m as f64);
        let m2 = two * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one / clamp(one + aa * d);
        c = clamp(one + aa / c);
        h = h * d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one / clamp(one + aa * d);
        c = clamp(one + aa / c);
        let del = d * c;
        h = h * del;
        if (del - one).abs() <= tol {
            break;
        }
    }
    h
}

/// Two-sided p-value P(|T_df| >= |t|).
pub fn student_t_two_sided_p<T: Real>(t: T, df: T) -> T {
    if t.is_nan() {
        return T::nan();
    }
    if t.is_infinite() {
        return T::zero();
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / T::lit(2.0), T::lit(0.5)).min(T::one())
}

/// Student-t cumulative distribution function.
pub fn student_t_cdf<T: Real>(t: T, df: T) -> T {
    let half_tail = student_t_two_sided_p(t, df) / T::lit(2.0);
    if t >= T::zero() {
        T::one() - half_tail
    } else {
        half_tail
    }
}

/// Paired-samples t-test on `a - b`, two-sided.
pub fn paired_t<T: Real>(a: &SampleVector<T>, b: &SampleVector<T>) -> Result<TestResult<T>> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::SampleTooSmall { n, min: 2 });
    }
    let diffs: Vec<T> = a.values().iter().zip(b.values()).map(|(&x, &y)| x - y).collect();
    if diffs.iter().all(|&d| d == diffs[0]) {
        return Err(StatsError::ZeroVarianceDifferences);
    }
    let summary = summarize(&SampleVector(diffs))?;
    let sd = summary.sd.expect("n >= 2");
    if !(sd > T::zero()) {
        return Err(StatsError::ZeroVarianceDifferences);
    }
    let nf = T::lit(n as f64);
    let t = summary.mean / (sd / nf.sqrt());
    let df = nf - T::one();
    Ok(TestResult { statistic: t, p_value: student_t_two_sided_p(t, df), df: Some(df) })
}
