//! The exp(-1/u) smooth step and cut-off functions built from it.

/// Smooth step S with S = 0 for u <= 0, S = 1 for u >= 1, returned with its
/// first two derivatives.
pub fn step(u: f64) -> (f64, f64, f64) {
    if u <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if u >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    // S = 1 / (1 + e^q) with q = 1/u - 1/(1-u).
    let v = 1.0 - u;
    let q = 1.0 / u - 1.0 / v;
    let (s, one_minus_s) = if q > 0.0 {
        let e = (-q).exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    } else {
        let e = q.exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    };
    let dq = -1.0 / (u * u) - 1.0 / (v * v);
    let ddq = 2.0 / (u * u * u) - 2.0 / (v * v * v);
    let ss = s * one_minus_s;
    let d1 = -ss * dq;
    let d2 = -(d1 * (1.0 - 2.0 * s) * dq + ss * ddq);
    (s, d1, d2)
}

/// Even cut-off rho(a, d): 0 on |v| <= a, 1 on |v| >= d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff {
    pub a: f64,
    pub d: f64,
}

impl Cutoff {
    pub fn new(a: f64, d: f64) -> Self {
        assert!(d > a && a >= 0.0, "cut-off needs 0 <= a < d");
        Cutoff { a, d }
    }

    /// Value, first and second derivative in v.
    pub fn eval(&self, v: f64) -> (f64, f64, f64) {
        let w = self.d - self.a;
        let (s, s1, s2) = step((v.abs() - self.a) / w);
        let sgn = if v < 0.0 { -1.0 } else { 1.0 };
        (s, sgn * s1 / w, s2 / (w * w))
    }
}
