//! Memoryless test nonlinearities mapping `[0, N-1]` onto itself.
//!
//! Each kind is a shape `g: [0, 1] → [0, 1]` applied to `u = x / (N-1)` and
//! scaled back by `N-1`:
//!
//! | kind        | `g(u)`                                                  |
//! |-------------|---------------------------------------------------------|
//! | `identity`  | `u`                                                     |
//! | `sigmoid`   | logistic `1/(1+e^{-a(u-½)})` rescaled to hit 0 and 1    |
//! | `compander` | μ-law `ln(1+μu) / ln(1+μ)`                              |
//! | `sine`      | `sin(π p u / 2)`, `p = 1` is the monotone quarter period |
//! | `square`    | `u²`                                                    |
//! | `sqrt`      | `√u`                                                    |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dct::SampledFn;
use crate::error::{Error, Result};

pub const DEFAULT_SIGMOID_SLOPE: f64 = 10.0;
pub const DEFAULT_COMPANDER_MU: f64 = 255.0;
pub const DEFAULT_SINE_FRACTION: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Identity,
    Sigmoid {
        slope: f64,
    },
    Compander {
        mu: f64,
    },
    /// `fraction` is the covered part of a half period; monotone for `<= 1`.
    Sine {
        fraction: f64,
    },
    Square,
    Sqrt,
}

impl Shape {
    /// Stable configuration name.
    pub fn name(&self) -> &'static str {
        match self {
            Shape::Identity => "identity",
            Shape::Sigmoid { .. } => "sigmoid",
            Shape::Compander { .. } => "compander",
            Shape::Sine { .. } => "sine",
            Shape::Square => "square",
            Shape::Sqrt => "sqrt",
        }
    }

    pub fn is_monotone(&self) -> bool {
        match *self {
            Shape::Sine { fraction } => fraction <= 1.0,
            _ => true,
        }
    }

    fn unit(&self, u: f64) -> f64 {
        match *self {
            Shape::Identity => u,
            Shape::Sigmoid { slope } => {
                let s = |v: f64| 1.0 / (1.0 + (-slope * (v - 0.5)).exp());
                let (lo, hi) = (s(0.0), s(1.0));
                (s(u) - lo) / (hi - lo)
            }
            Shape::Compander { mu } => (mu * u).ln_1p() / mu.ln_1p(),
            Shape::Sine { fraction } => (std::f64::consts::FRAC_PI_2 * fraction * u).sin(),
            Shape::Square => u * u,
            Shape::Sqrt => u.sqrt(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shape::Sigmoid { slope } => slope.is_finite() && slope > 0.0,
            Shape::Compander { mu } => mu.is_finite() && mu > 0.0,
            Shape::Sine { fraction } => fraction.is_finite() && fraction > 0.0 && fraction <= 2.0,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(format!("invalid parameters for {self:?}")))
        }
    }
}

/// Parses a kind name with default parameters.
impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => Shape::Identity,
            "sigmoid" => Shape::Sigmoid { slope: DEFAULT_SIGMOID_SLOPE },
            "compander" => Shape::Compander { mu: DEFAULT_COMPANDER_MU },
            "sine" => Shape::Sine { fraction: DEFAULT_SINE_FRACTION },
            "square" => Shape::Square,
            "sqrt" => Shape::Sqrt,
            other => {
                return Err(Error::Contract(format!(
                    "unknown nonlinearity '{other}' (expected identity, sigmoid, compander, sine, square or sqrt)"
                )))
            }
        })
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A named nonlinearity on the domain `[0, N-1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearFn {
    pub shape: Shape,
    pub n: usize,
}

impl NonlinearFn {
    pub fn new(shape: Shape, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Contract(format!("domain size must be >= 2, got {n}")));
        }
        shape.validate()?;
        Ok(NonlinearFn { shape, n })
    }

    pub fn top(&self) -> f64 {
        (self.n - 1) as f64
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let top = self.top();
        if !(0.0..=top).contains(&x) {
            return Err(Error::Domain { value: x, lo: 0.0, hi: top });
        }
        Ok(self.eval_unchecked(x))
    }

    /// `eval` without the domain check; callers guarantee `x ∈ [0, N-1]`.
    pub fn eval_unchecked(&self, x: f64) -> f64 {
        let top = self.top();
        (top * self.shape.unit(x / top)).clamp(0.0, top)
    }

    /// Preimage of `y` by bisection; `y` outside the range maps to the
    /// nearest endpoint.
    pub fn invert(&self, y: f64) -> Result<f64> {
        if !self.shape.is_monotone() {
            return Err(Error::NotInvertible(format!("{:?} is not monotone on the domain", self.shape)));
        }
        if !y.is_finite() {
            return Err(Error::Numeric(format!("cannot invert non-finite value {y}")));
        }
        let (mut lo, mut hi) = (0.0, self.top());
        if y <= self.eval_unchecked(lo) {
            return Ok(lo);
        }
        if y >= self.eval_unchecked(hi) {
            return Ok(hi);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval_unchecked(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    pub fn tabulate(&self) -> SampledFn {
        SampledFn::from_fn(self.n, |x| self.eval_unchecked(x as f64)).expect("n >= 2 checked at construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    const N: usize = 128;

    fn all_kinds() -> Vec<Shape> {
        ["identity", "sigmoid", "compander", "sine", "square", "sqrt"].iter().map(|s| s.parse().unwrap()).collect()
    }

    #[test]
    fn identity_value() {
        let f = NonlinearFn::new(Shape::Identity, N).unwrap();
        assert_eq!(f.eval(37.5).unwrap(), 37.5);
        assert!((f.invert(12.25).unwrap() - 12.25).abs() < 1e-12);
    }

    #[test]
    fn endpoints() {
        for shape in all_kinds() {
            let f = NonlinearFn::new(shape, N).unwrap();
            assert_eq!(f.eval(0.0).unwrap(), 0.0, "{shape}");
            assert!((f.eval(127.0).unwrap() - 127.0).abs() < 1e-9, "{shape}");
        }
    }

    #[test]
    fn outside_domain_rejected() {
        let f = NonlinearFn::new(Shape::Square, N).unwrap();
        assert!(matches!(f.eval(-0.1), Err(Error::Domain { .. })));
        assert!(matches!(f.eval(127.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn square_inverse_analytic() {
        let f = NonlinearFn::new(Shape::Square, N).unwrap();
        for y in [0.0, 1.0, 17.3, 64.0, 126.9] {
            let want = 127.0 * (y / 127.0f64).sqrt();
            assert!((f.invert(y).unwrap() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn compander_round_trip() {
        let f = NonlinearFn::new("compander".parse().unwrap(), N).unwrap();
        let mut rng = Rng::new(17);
        for _ in 0..100 {
            let y = rng.uniform(0.0, 127.0);
            let x = f.invert(y).unwrap();
            assert!((f.eval(x).unwrap() - y).abs() <= 1e-9 * N as f64);
        }
    }

    #[test]
    fn half_period_sine_not_invertible() {
        let f = NonlinearFn::new(Shape::Sine { fraction: 2.0 }, N).unwrap();
        assert!(matches!(f.invert(10.0), Err(Error::NotInvertible(_))));
    }

    #[test]
    fn tabulate_matches_eval() {
        let f = NonlinearFn::new(Shape::Identity, 4).unwrap();
        assert_eq!(f.tabulate().values(), &[0.0, 1.0, 2.0, 3.0]);
        let s = NonlinearFn::new("sigmoid".parse().unwrap(), N).unwrap();
        let t = s.tabulate();
        for x in 0..N {
            assert_eq!(t.values()[x], s.eval(x as f64).unwrap());
        }
    }

    #[test]
    fn range_containment_and_monotonicity() {
        let mut rng = Rng::new(99);
        for shape in all_kinds() {
            let f = NonlinearFn::new(shape, N).unwrap();
            for _ in 0..10_000 {
                let y = f.eval(rng.uniform(0.0, 127.0)).unwrap();
                assert!((0.0..=127.0).contains(&y));
            }
            let grid: Vec<f64> = (0..10_000).map(|i| f.eval(127.0 * i as f64 / 9_999.0).unwrap()).collect();
            assert!(grid.windows(2).all(|w| w[1] > w[0]), "{shape} not increasing");
        }
    }

    #[test]
    fn invert_eval_identity_on_monotone_kinds() {
        let mut rng = Rng::new(5);
        for shape in all_kinds() {
            let f = NonlinearFn::new(shape, N).unwrap();
            for _ in 0..200 {
                let x = rng.uniform(0.0, 127.0);
                let back = f.invert(f.eval(x).unwrap()).unwrap();
                assert!((back - x).abs() <= 1e-9 * N as f64, "{shape}: {x} -> {back}");
            }
        }
    }

    #[test]
    fn unknown_name() {
        assert!("tanh".parse::<Shape>().is_err());
    }
}
