/// Neumaier-compensated double-precision accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Adds `a * b` including the rounding error of the product.
    pub(crate) fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        self.add(p);
        self.add(a.mul_add(b, -p));
    }

    /// Adds `scale * other` without first collapsing `other` to one double.
    pub(crate) fn add_scaled(&mut self, scale: f64, other: &CompensatedSum) {
        self.add_product(scale, other.sum);
        self.add(scale * other.carry);
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_cancelled_low_bits() {
        let mut s = CompensatedSum::default();
        for x in [1e16, 1.0, -1e16, 1.0] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn product_error_is_kept() {
        let a = 1.0 + f64::EPSILON;
        let mut s = CompensatedSum::default();
        s.add_product(a, a);
        s.add(-(a * a));
        assert_eq!(s.value(), f64::EPSILON * f64::EPSILON);
    }
}
