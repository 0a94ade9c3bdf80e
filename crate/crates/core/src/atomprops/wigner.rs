//! Wigner 6j symbols from the Racah single-sum formula in exact arithmetic.
//!
//! Angular momenta are passed doubled (`2j`) so half-integers stay integral.
//! The symbol is returned as `sum * sqrt(radicand)` with both factors rational.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

#[derive(Debug, Clone, PartialEq)]
pub struct SixJ {
    pub sum: BigRational,
    pub radicand: BigRational,
}

impl SixJ {
    pub fn zero() -> Self {
        Self {
            sum: BigRational::zero(),
            radicand: BigRational::one(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sum.is_zero() || self.radicand.is_zero()
    }

    /// Exact square of the symbol, carrying its sign.
    pub fn signed_square(&self) -> BigRational {
        let sq = &self.sum * &self.sum * &self.radicand;
        if self.sum.is_negative() {
            -sq
        } else {
            sq
        }
    }

    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let s = rational_to_f64(&self.sum);
        let r = rational_to_f64(&self.radicand);
        s * r.sqrt()
    }
}

fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // fall back through logs for huge numerators/denominators
        let n = r.numer().to_f64().unwrap_or(f64::INFINITY);
        let d = r.denom().to_f64().unwrap_or(f64::INFINITY);
        n / d
    })
}

fn factorial(n: u32) -> BigInt {
    let mut acc = BigInt::one();
    for k in 2..=n {
        acc *= k;
    }
    acc
}

/// Triangle rule on doubled momenta: |a-b| <= c <= a+b and a+b+c even.
pub fn triangle(two_a: u32, two_b: u32, two_c: u32) -> bool {
    let (a, b, c) = (two_a as i64, two_b as i64, two_c as i64);
    c >= (a - b).abs() && c <= a + b && (a + b + c) % 2 == 0
}

fn delta_sq(two_a: u32, two_b: u32, two_c: u32) -> BigRational {
    let (a, b, c) = (two_a as i64, two_b as i64, two_c as i64);
    let n1 = ((a + b - c) / 2) as u32;
    let n2 = ((a - b + c) / 2) as u32;
    let n3 = ((-a + b + c) / 2) as u32;
    let d = ((a + b + c) / 2 + 1) as u32;
    BigRational::new(factorial(n1) * factorial(n2) * factorial(n3), factorial(d))
}

/// `{j1 j2 j3; j4 j5 j6}` with every argument doubled.
pub fn six_j(two: [u32; 6]) -> SixJ {
    let [j1, j2, j3, j4, j5, j6] = two;
    if !(triangle(j1, j2, j3) && triangle(j1, j5, j6) && triangle(j4, j2, j6) && triangle(j4, j5, j3)) {
        return SixJ::zero();
    }
    let radicand = delta_sq(j1, j2, j3) * delta_sq(j1, j5, j6) * delta_sq(j4, j2, j6) * delta_sq(j4, j5, j3);
    let a = [
        (j1 + j2 + j3) / 2,
        (j1 + j5 + j6) / 2,
        (j4 + j2 + j6) / 2,
        (j4 + j5 + j3) / 2,
    ];
    let b = [
        (j1 + j2 + j4 + j5) / 2,
        (j2 + j3 + j5 + j6) / 2,
        (j3 + j1 + j6 + j4) / 2,
    ];
    let t_min = *a.iter().max().unwrap();
    let t_max = *b.iter().min().unwrap();
    let mut sum = BigRational::zero();
    if t_min <= t_max {
        for t in t_min..=t_max {
            let mut den = BigInt::one();
            for &ai in &a {
                den *= factorial(t - ai);
            }
            for &bi in &b {
                den *= factorial(bi - t);
            }
            let term = BigRational::new(factorial(t + 1), den);
            if t % 2 == 0 {
                sum += term;
            } else {
                sum -= term;
            }
        }
    }
    SixJ { sum, radicand }
}

/// Doubled representation of a non-negative integer or half-integer.
pub fn doubled(j: f64) -> Option<u32> {
    let two = 2.0 * j;
    let r = two.round();
    if j < 0.0 || !j.is_finite() || (two - r).abs() > 1e-9 {
        None
    } else {
        Some(r as u32)
    }
}

pub fn six_j_f64(j: [f64; 6]) -> Option<f64> {
    let mut two = [0u32; 6];
    for (t, &v) in two.iter_mut().zip(j.iter()) {
        *t = doubled(v)?;
    }
    Some(six_j(two).to_f64())
}
