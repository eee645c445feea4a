//! Small numeric helpers shared across modules.

/// Kahan compensated accumulator. Keeps long weighted sums stable at
/// truncation levels around 1e5.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let y = value - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

pub(crate) fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = KahanSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Compensated dot product of equal-length slices.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    kahan_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

/// Compensated squared Euclidean norm.
#[inline]
pub(crate) fn norm2_sq(a: &[f64]) -> f64 {
    kahan_sum(a.iter().map(|x| x * x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_beats_naive_on_adversarial_sum() {
        // 1 + 1e-16 added 1e6 times: naive summation drops every increment.
        let mut k = KahanSum::new();
        k.add(1.0);
        for _ in 0..1_000_000 {
            k.add(1e-16);
        }
        assert!((k.value() - (1.0 + 1e-10)).abs() < 1e-15);
    }

    #[test]
    fn dot_matches_hand_value() {
        assert_eq!(dot(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]), 32.0);
    }

    #[test]
    fn norm2_sq_matches_hand_value() {
        assert_eq!(norm2_sq(&[3.0, 4.0]), 25.0);
    }
}
