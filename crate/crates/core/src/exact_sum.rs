//! Exact summation of `f64` values.
//!
//! [`ExactSum`] is a fixed-point superaccumulator spanning the full double
//! range: 70 signed 64-bit limbs holding 32-bit digits, limb `j` weighing
//! `2^(32 j - 1088)`. Additions are exact, so the rounded total does not depend
//! on the order of the terms or on how they were split between accumulators.

const LIMBS: usize = 70;
const BASE_EXP: i32 = -1088;
/// Additions between carry normalizations; each addition moves a limb by
/// less than `2^32`, so limbs stay far from `i64` overflow.
const NORMALIZE_EVERY: u32 = 1 << 24;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactSum {
    limbs: [i64; LIMBS],
    pending: u32,
}

impl Default for ExactSum {
    fn default() -> Self {
        Self::new()
    }
}

impl ExactSum {
    pub fn new() -> Self {
        Self {
            limbs: [0; LIMBS],
            pending: 0,
        }
    }

    /// Adds a finite value exactly. Non-finite values are ignored by the
    /// caller's contract and trip a debug assertion.
    pub fn add(&mut self, v: f64) {
        debug_assert!(v.is_finite());
        if v == 0.0 || !v.is_finite() {
            return;
        }
        let bits = v.to_bits();
        let biased = ((bits >> 52) & 0x7ff) as i32;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, exp) = if biased == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), biased - 1075)
        };
        let shift = (exp - BASE_EXP) as usize;
        let (idx, off) = (shift / 32, shift % 32);
        let wide = (mant as u128) << off;
        let sign: i64 = if bits >> 63 == 1 { -1 } else { 1 };
        for c in 0..3 {
            let digit = ((wide >> (32 * c)) & 0xffff_ffff) as i64;
            self.limbs[idx + c] += sign * digit;
        }
        self.pending += 1;
        if self.pending >= NORMALIZE_EVERY {
            self.normalize();
        }
    }

    /// Adds another accumulator exactly.
    pub fn merge(&mut self, other: &ExactSum) {
        let mut other = other.clone();
        other.normalize();
        self.normalize();
        for (a, b) in self.limbs.iter_mut().zip(other.limbs) {
            *a += b;
        }
        self.normalize();
    }

    fn normalize(&mut self) {
        for j in 0..LIMBS - 1 {
            let carry = self.limbs[j] >> 32;
            self.limbs[j] -= carry << 32;
            self.limbs[j + 1] += carry;
        }
        self.pending = 0;
    }

    /// Total rounded to nearest.
    pub fn value(&self) -> f64 {
        let mut acc = self.clone();
        acc.normalize();
        let negative = acc.limbs[LIMBS - 1] < 0;
        if negative {
            for l in acc.limbs.iter_mut() {
                *l = -*l;
            }
            acc.normalize();
        }
        let Some(top) = acc.limbs.iter().rposition(|&l| l != 0) else {
            return 0.0;
        };
        let lo = top.saturating_sub(2);
        let mut head: u128 = 0;
        for j in (lo..=top).rev() {
            head = (head << 32) | acc.limbs[j] as u128;
        }
        // 96 significant bits leave room for a sticky bit below the rounding point
        if acc.limbs[..lo].iter().any(|&l| l != 0) {
            head |= 1;
        }
        let magnitude = scale_by_pow2(head as f64, 32 * lo as i32 + BASE_EXP);
        if negative {
            -magnitude
        } else {
            magnitude
        }
    }
}

fn scale_by_pow2(mut x: f64, mut e: i32) -> f64 {
    while e > 0 {
        let step = e.min(1000);
        x *= f64::from_bits(((1023 + step) as u64) << 52);
        e -= step;
    }
    while e < 0 {
        let step = (-e).min(1000);
        x *= f64::from_bits(((1023 - step) as u64) << 52);
        e += step;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum(values: &[f64]) -> f64 {
        let mut s = ExactSum::new();
        values.iter().for_each(|&v| s.add(v));
        s.value()
    }

    #[test]
    fn simple_sums() {
        assert_eq!(sum(&[]), 0.0);
        assert_eq!(sum(&[1.5, 2.25, -0.75]), 3.0);
        assert_eq!(sum(&[-1.0, -2.0]), -3.0);
        assert_eq!(sum(&[1e308, 1e308, -1e308]), 1e308);
    }

    #[test]
    fn catastrophic_cancellation_is_exact() {
        assert_eq!(sum(&[1e100, 1.0, -1e100]), 1.0);
        // the three doubles nearest 0.1, 0.2 and 0.3 sum to exactly 2^-55
        assert_eq!(sum(&[0.1, 0.2, -0.3]), 2f64.powi(-55));
        assert_eq!(sum(&[f64::MIN_POSITIVE * 1e-10, -f64::MIN_POSITIVE * 1e-10]), 0.0);
        let tiny = f64::from_bits(1);
        assert_eq!(sum(&[tiny, tiny, tiny]), 3.0 * tiny);
    }

    #[test]
    fn rounding_to_nearest() {
        // 1 + 2^-53 + 2^-80 rounds up to 1 + 2^-52
        let v = sum(&[1.0, 2f64.powi(-53), 2f64.powi(-80)]);
        assert_eq!(v, 1.0 + f64::EPSILON);
        // ties go to even
        assert_eq!(sum(&[1.0, 2f64.powi(-53)]), 1.0);
    }

    #[test]
    fn order_and_partition_independent() {
        let mut state = 88172645463325252u64;
        let values: Vec<f64> = (0..5000)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 10f64.powi((state % 20) as i32 - 10)
            })
            .collect();
        let forward = sum(&values);
        let mut reversed = values.clone();
        reversed.reverse();
        assert_eq!(forward.to_bits(), sum(&reversed).to_bits());
        for parts in [2, 3, 7] {
            let mut total = ExactSum::new();
            for chunk in values.chunks(values.len() / parts + 1) {
                let mut s = ExactSum::new();
                chunk.iter().for_each(|&v| s.add(v));
                total.merge(&s);
            }
            assert_eq!(total.value().to_bits(), forward.to_bits());
        }
    }
}
