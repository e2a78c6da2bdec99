use serde::{Deserialize, Serialize};

use crate::numeric::{smoothstep5, smoothstep5_deriv};

/// Decay regime of a warping profile beyond `r = 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarpTail {
    /// `a·(sinh 2 / sinh r)²`: finite volume, `sinh² r · b` constant.
    Example2,
    /// `2a/(1+r)`: infinite volume, `b → 0`.
    Example3,
}

/// Warping profile `b(r)`: equal to `a` on `[0, 1)`, a quintic blend on
/// `[1, 2]`, then the tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpProfile {
    pub a: f64,
    pub tail: WarpTail,
}

impl WarpProfile {
    pub fn new(a: f64, tail: WarpTail) -> Self {
        assert!(a > 0.0, "plateau value must be positive");
        Self { a, tail }
    }

    fn tail_value(&self, r: f64) -> f64 {
        match self.tail {
            WarpTail::Example2 => {
                let q = 2f64.sinh() / r.sinh();
                self.a * q * q
            }
            WarpTail::Example3 => 2.0 * self.a / (1.0 + r),
        }
    }

    fn tail_deriv(&self, r: f64) -> f64 {
        match self.tail {
            WarpTail::Example2 => {
                let s2 = 2f64.sinh();
                -2.0 * self.a * s2 * s2 * r.cosh() / r.sinh().powi(3)
            }
            WarpTail::Example3 => -2.0 * self.a / ((1.0 + r) * (1.0 + r)),
        }
    }

    /// Radii where the profile is only C².
    pub fn joins(&self) -> [f64; 2] {
        [1.0, 2.0]
    }

    pub fn b(&self, r: f64) -> f64 {
        let r = r.abs();
        if r < 1.0 {
            self.a
        } else if r < 2.0 {
            let s = smoothstep5(r - 1.0);
            self.a * (1.0 - s) + self.tail_value(r) * s
        } else {
            self.tail_value(r)
        }
    }

    pub fn db(&self, r: f64) -> f64 {
        let ra = r.abs();
        let d = if ra < 1.0 {
            0.0
        } else if ra < 2.0 {
            let u = ra - 1.0;
            let (s, ds) = (smoothstep5(u), smoothstep5_deriv(u));
            (self.tail_value(ra) - self.a) * ds + self.tail_deriv(ra) * s
        } else {
            self.tail_deriv(ra)
        };
        if r < 0.0 {
            -d
        } else {
            d
        }
    }
}
