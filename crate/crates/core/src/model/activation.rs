use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Sine,
    /// CeLU with α = 1.
    Celu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn value(self, z: f64) -> f64 {
        match self {
            Activation::Sine => z.sin(),
            Activation::Celu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// `(σ, σ')`
    #[inline]
    pub fn value_d1(self, z: f64) -> (f64, f64) {
        match self {
            Activation::Sine => {
                let (s, c) = z.sin_cos();
                (s, c)
            }
            Activation::Celu => {
                if z > 0.0 {
                    (z, 1.0)
                } else {
                    let e = z.exp();
                    (z.exp_m1(), e)
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                (t, 1.0 - t * t)
            }
        }
    }

    /// `[σ, σ', σ'', σ''']`
    #[inline]
    pub fn derivatives(self, z: f64) -> [f64; 4] {
        match self {
            Activation::Sine => {
                let (s, c) = z.sin_cos();
                [s, c, -s, -c]
            }
            Activation::Celu => {
                if z > 0.0 {
                    [z, 1.0, 0.0, 0.0]
                } else {
                    let e = z.exp();
                    [z.exp_m1(), e, e, e]
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                let d1 = 1.0 - t * t;
                [t, d1, -2.0 * t * d1, d1 * (6.0 * t * t - 2.0)]
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sine => "sine",
            Activation::Celu => "celu",
            Activation::Tanh => "tanh",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sine" | "sin" | "siren" => Ok(Activation::Sine),
            "celu" => Ok(Activation::Celu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(format!("unknown activation {other:?}")),
        }
    }
}
