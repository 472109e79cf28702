//! Small combinatorial helpers shared by the optics code.

/// `n!` as a float. Exact for the photon numbers used here (n ≤ 20).
pub fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Binomial coefficient `C(n, k)`, zero when `k > n`.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `x^k` with the convention `0^0 = 1`.
pub fn powi(x: f64, k: u32) -> f64 {
    x.powi(k as i32)
}

/// Number of two-mode Fock states with at most `n_max` photons in total.
pub fn two_mode_state_count(n_max: u32) -> usize {
    ((n_max + 1) * (n_max + 2) / 2) as usize
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_keeps_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1.0);
        for _ in 0..1_000_000 {
            s.add(1e-17);
        }
        assert_eq!(s.value(), 1.0 + 1e-11);
        let plain = (0..1_000_000).fold(1.0, |acc, _| acc + 1e-17);
        assert_eq!(plain, 1.0);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(8, 0), 1.0);
        assert_eq!(binomial(8, 8), 1.0);
        assert_eq!(binomial(3, 5), 0.0);
        assert_eq!(binomial(10, 3), 120.0);
    }

    #[test]
    fn factorials() {
        assert_eq!(factorial(0), 1.0);
        assert_eq!(factorial(5), 120.0);
    }

    #[test]
    fn state_count() {
        assert_eq!(two_mode_state_count(0), 1);
        assert_eq!(two_mode_state_count(4), 15);
    }
}
