//! Minimal double-double arithmetic.
//!
//! Used to compute residuals for the iteratively refined stationary solve,
//! where the drift matrix condition number can reach ~1/gamma and plain f64
//! residuals would limit the attainable componentwise accuracy.

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    // requires |a| >= |b|
    let s = a + b;
    let err = b - (s - a);
    (s, err)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let err = a.mul_add(b, -p);
    (p, err)
}

impl Dd {
    #[inline]
    pub fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    /// Exact product of two f64 values.
    #[inline]
    pub fn prod(a: f64, b: f64) -> Self {
        let (hi, lo) = two_prod(a, b);
        Dd { hi, lo }
    }

    #[inline]
    pub fn add(self, o: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, o.hi);
        let s2 = s2 + self.lo + o.lo;
        let (hi, lo) = quick_two_sum(s1, s2);
        Dd { hi, lo }
    }

    #[inline]
    pub fn sub(self, o: Dd) -> Dd {
        self.add(Dd { hi: -o.hi, lo: -o.lo })
    }

    #[inline]
    pub fn mul(self, o: Dd) -> Dd {
        let (p1, p2) = two_prod(self.hi, o.hi);
        let p2 = p2 + self.hi * o.lo + self.lo * o.hi;
        let (hi, lo) = quick_two_sum(p1, p2);
        Dd { hi, lo }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prod_is_exact() {
        let a = 0.1_f64;
        let b = 0.3_f64;
        let p = Dd::prod(a, b);
        // hi + lo reproduces the exact product of the two rounded inputs
        // better than f64 multiplication alone.
        let exact_err = a.mul_add(b, -(a * b));
        assert_eq!(p.hi, a * b);
        assert_eq!(p.lo, exact_err);
    }

    #[test]
    fn sum_tracks_cancellation() {
        let big = Dd::new(1.0e16);
        let tiny = Dd::new(1.0);
        let s = big.add(tiny).sub(big);
        assert_eq!(s.to_f64(), 1.0);
    }

    #[test]
    fn dot_product_residual_beats_f64() {
        // sum_i a_i * b_i with heavy cancellation
        let a = [1.0e8, 1.0, -1.0e8];
        let b = [1.0 + 1e-9, 1.0, 1.0];
        let mut acc = Dd::new(0.0);
        for (x, y) in a.iter().zip(&b) {
            acc = acc.add(Dd::prod(*x, *y));
        }
        // exact: 1e8*(1+1e-9) + 1 - 1e8 = 1e8*1e-9 + 1 = 1.1
        assert!((acc.to_f64() - 1.1).abs() < 1e-12);
    }
}
