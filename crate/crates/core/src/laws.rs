//! Coefficient laws: the degenerate diffusion `a(x) = x^gamma` and the
//! nonlocal multiplier `l(s)`.

use serde::{Deserialize, Serialize};

/// Power-law diffusion `a(x) = x^gamma` with `a(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionLaw {
    gamma: f64,
}

impl DiffusionLaw {
    pub fn power(gamma: f64) -> Self {
        Self { gamma }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Constant `K` in `x a'(x) <= K a(x)`; equal to `gamma` for a power law.
    pub fn k_constant(&self) -> f64 {
        self.gamma
    }

    pub fn a(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            x.powf(self.gamma)
        }
    }

    pub fn da(&self, x: f64) -> f64 {
        if x <= 0.0 {
            if self.gamma == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.gamma * x.powf(self.gamma - 1.0)
        }
    }

    /// `x a'(x)`, written as `gamma * a(x)` so the degeneracy ratio is exact.
    pub fn x_da(&self, x: f64) -> f64 {
        self.gamma * self.a(x)
    }

    /// Largest ratio `x a'(x) / a(x)` over the positive grid nodes.
    pub fn k_on_nodes(&self, nodes: &[f64]) -> f64 {
        nodes.iter().filter(|&&x| x > 0.0).map(|&x| self.x_da(x) / self.a(x)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `int_lo^hi s / a(s) ds`, exact for the power family.
    pub fn int_s_over_a(&self, lo: f64, hi: f64) -> f64 {
        let p = 2.0 - self.gamma;
        (hi.powf(p) - lo.powf(p)) / p
    }
}

/// Nonlocal diffusion multiplier `l(s)` from a parametric family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum NonlocalLaw {
    /// `l(s) = c0`.
    Constant { c0: f64 },
    /// `l(s) = c0 + c1 * atan(s)`.
    Atan { c0: f64, c1: f64 },
    /// `l(s) = c0 + c1 / (1 + exp(-k s))`.
    Logistic { c0: f64, c1: f64, k: f64 },
}

impl NonlocalLaw {
    pub fn value(&self, s: f64) -> f64 {
        match *self {
            NonlocalLaw::Constant { c0 } => c0,
            NonlocalLaw::Atan { c0, c1 } => c0 + c1 * s.atan(),
            NonlocalLaw::Logistic { c0, c1, k } => c0 + c1 * sigmoid(k * s),
        }
    }

    pub fn d1(&self, s: f64) -> f64 {
        match *self {
            NonlocalLaw::Constant { .. } => 0.0,
            NonlocalLaw::Atan { c1, .. } => c1 / (1.0 + s * s),
            NonlocalLaw::Logistic { c1, k, .. } => {
                let g = sigmoid(k * s);
                c1 * k * g * (1.0 - g)
            }
        }
    }

    pub fn d2(&self, s: f64) -> f64 {
        match *self {
            NonlocalLaw::Constant { .. } => 0.0,
            NonlocalLaw::Atan { c1, .. } => {
                let q = 1.0 + s * s;
                -2.0 * c1 * s / (q * q)
            }
            NonlocalLaw::Logistic { c1, k, .. } => {
                let g = sigmoid(k * s);
                c1 * k * k * g * (1.0 - g) * (1.0 - 2.0 * g)
            }
        }
    }

    pub fn bound_l0(&self) -> f64 {
        self.value(0.0)
    }

    /// Uniform bound on `|l'|` and `|l''|` over the real line.
    pub fn lip_bound(&self) -> f64 {
        match *self {
            NonlocalLaw::Constant { .. } => 0.0,
            // sup |2s/(1+s^2)^2| = 3 sqrt(3) / 8 < 1
            NonlocalLaw::Atan { c1, .. } => c1.abs(),
            // sup g(1-g) = 1/4, sup |g(1-g)(1-2g)| = sqrt(3)/18
            NonlocalLaw::Logistic { c1, k, .. } => {
                let k = k.abs();
                c1.abs() * (k / 4.0).max(k * k * 3f64.sqrt() / 18.0)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, NonlocalLaw::Constant { .. })
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}
