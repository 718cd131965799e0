//! `rho0(x) = exp(-1/x^2) 1{x < 0}`, `rho1(x) = rho0(x - 1) rho0(-1 - x)`,
//! `rho2` the normalized running integral of `rho1`, and
//! `rho(x) = rho2(2 + x) rho2(2 - x)`: 1 on `[-1, 1]`, 0 outside `(-3, 3)`.

use std::sync::{Arc, OnceLock};

pub const DEFAULT_RHO_STEP: f64 = 1e-4;

pub fn rho0(x: f64) -> f64 {
    if x < 0.0 {
        (-1.0 / (x * x)).exp()
    } else {
        0.0
    }
}

pub fn rho1(x: f64) -> f64 {
    rho0(x - 1.0) * rho0(-1.0 - x)
}

/// Tabulated `rho2` on `[-1, 1]`: per-interval Simpson sums, then a cubic
/// Hermite interpolant using the exact derivative `rho1 / Z`.
#[derive(Debug, Clone)]
pub struct RhoTable {
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl RhoTable {
    pub fn new(step: f64) -> Self {
        let intervals = (2.0 / step).round() as usize;
        let h = 2.0 / intervals as f64;
        let node = |i: usize| -1.0 + i as f64 * h;
        let mut values = Vec::with_capacity(intervals + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for i in 0..intervals {
            let (a, b) = (node(i), node(i + 1));
            acc += h / 6.0 * (rho1(a) + 4.0 * rho1(0.5 * (a + b)) + rho1(b));
            values.push(acc);
        }
        let z = acc;
        values.iter_mut().for_each(|v| *v /= z);
        *values.last_mut().unwrap() = 1.0;
        let slopes = (0..=intervals).map(|i| rho1(node(i)) / z).collect();
        RhoTable { step: h, values, slopes }
    }

    /// The default-step table, built once per process.
    pub fn shared() -> Arc<RhoTable> {
        static TABLE: OnceLock<Arc<RhoTable>> = OnceLock::new();
        TABLE.get_or_init(|| Arc::new(RhoTable::new(DEFAULT_RHO_STEP))).clone()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn rho2(&self, x: f64) -> f64 {
        if x <= -1.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let pos = (x + 1.0) / self.step;
        let i = (pos.floor() as usize).min(self.values.len() - 2);
        let s = pos - i as f64;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let delta = (y1 - y0) / self.step;
        let (mut m0, mut m1) = (self.slopes[i], self.slopes[i + 1]);
        if delta <= 0.0 {
            return y0;
        }
        // Fritsch-Carlson: keep (m0, m1)/delta inside the radius-3 disc.
        let (a, b) = (m0 / delta, m1 / delta);
        let r2 = a * a + b * b;
        if r2 > 9.0 {
            let tau = 3.0 / r2.sqrt();
            m0 *= tau;
            m1 *= tau;
        }
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        (h00 * y0 + h10 * self.step * m0 + h01 * y1 + h11 * self.step * m1).clamp(0.0, 1.0)
    }

    pub fn rho(&self, x: f64) -> f64 {
        self.rho2(2.0 + x) * self.rho2(2.0 - x)
    }

    /// `(x, rho(x))` rows on `[-3.5, 3.5]` for inspection.
    pub fn dump_csv(&self, points: usize) -> String {
        let mut out = String::from("# schema=rho_table/v1\nx,rho\n");
        for j in 0..points {
            let x = -3.5 + 7.0 * j as f64 / (points.max(2) - 1) as f64;
            out.push_str(&format!("{x:e},{:e}\n", self.rho(x)));
        }
        out
    }
}

pub fn rho2(x: f64) -> f64 {
    RhoTable::shared().rho2(x)
}

pub fn rho(x: f64) -> f64 {
    RhoTable::shared().rho(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct composite Simpson on `[-1, x]`, normalized the same way.
    fn rho2_direct(x: f64) -> f64 {
        let simpson = |lo: f64, hi: f64| {
            let n = 20_000;
            let h = (hi - lo) / n as f64;
            let mut s = rho1(lo) + rho1(hi);
            for i in 1..n {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * rho1(lo + i as f64 * h);
            }
            s * h / 3.0
        };
        simpson(-1.0, x.clamp(-1.0, 1.0)) / simpson(-1.0, 1.0)
    }

    #[test]
    fn examples() {
        assert_eq!(rho(0.5), 1.0);
        assert_eq!(rho(3.2), 0.0);
        let mid = rho(2.0);
        assert!(mid > 0.0 && mid < 1.0);
        assert!((mid - 0.5).abs() < 1e-12, "rho(2) = rho2(0) = 1/2 by symmetry: {mid}");
    }

    #[test]
    fn plateau_and_zero_exactness() {
        for j in 0..=1998 {
            let x = -0.999 + j as f64 * 1e-3;
            assert_eq!(rho(x), 1.0);
        }
        for x in [3.0, -3.0, 3.0001, -7.5, 100.0] {
            assert_eq!(rho(x), 0.0);
        }
    }

    #[test]
    fn nonincreasing_on_the_shoulder() {
        let mut prev = rho(1.0);
        for j in 1..=200 {
            let cur = rho(1.0 + j as f64 * 0.01);
            assert!(cur <= prev, "rho not monotone at {}", 1.0 + j as f64 * 0.01);
            prev = cur;
        }
    }

    #[test]
    fn table_matches_direct_quadrature() {
        for x in [-0.95, -0.5, -0.123, 0.0, 0.31, 0.77, 0.99] {
            assert!((rho2(x) - rho2_direct(x)).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn derivatives_are_moderate() {
        // Finite-difference derivatives of rho up to order 4 stay below 10 t^t.
        let h = 1e-2;
        for j in 0..1000 {
            let x = -3.2 + 6.4 * j as f64 / 999.0;
            let f = |k: f64| rho(x + k * h);
            let d1 = (f(1.0) - f(-1.0)) / (2.0 * h);
            let d2 = (f(1.0) - 2.0 * f(0.0) + f(-1.0)) / (h * h);
            let d3 = (f(2.0) - 2.0 * f(1.0) + 2.0 * f(-1.0) - f(-2.0)) / (2.0 * h.powi(3));
            let d4 = (f(2.0) - 4.0 * f(1.0) + 6.0 * f(0.0) - 4.0 * f(-1.0) + f(-2.0)) / h.powi(4);
            for (t, d) in [(1, d1), (2, d2), (3, d3), (4, d4)] {
                assert!(d.abs() <= 10.0 * (t as f64).powi(t), "t={t} x={x}: {d}");
            }
        }
    }

    #[test]
    fn csv_dump_has_schema_line() {
        let csv = RhoTable::shared().dump_csv(5);
        assert!(csv.starts_with("# schema=rho_table/v1\nx,rho\n"));
        assert_eq!(csv.lines().count(), 7);
    }
}
