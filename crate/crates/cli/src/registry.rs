//! Registry of scalar data functions `c`, `f`, `ū` of `(t, x)`.

use serde::{Deserialize, Serialize};

use crate::Failure;

/// A registered scalar function and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarFn {
    pub id: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

/// `(id, parameter count, description)`.
pub const SCALAR_IDS: &[(&str, usize, &str)] = &[
    ("const", 1, "a"),
    ("time", 2, "a + b·t"),
    ("space_linear", 2, "a + b·x_0"),
    ("space_square", 1, "a·|x|²"),
    ("time_space", 1, "a·t·x_0"),
    ("sin_time", 3, "a + b·sin(w·t), params [a, w, b]"),
    ("cos_time", 3, "a + b·cos(w·t), params [a, w, b]"),
    ("sign_space", 1, "a·sign(x_0)"),
];

impl ScalarFn {
    pub fn new(id: &str, params: &[f64]) -> Self {
        Self { id: id.into(), params: params.to_vec() }
    }

    pub fn zero() -> Self {
        Self::new("const", &[0.0])
    }

    pub fn one() -> Self {
        Self::new("const", &[1.0])
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let Some((_, n, _)) = SCALAR_IDS.iter().find(|(id, _, _)| *id == self.id) else {
            let known: Vec<&str> = SCALAR_IDS.iter().map(|e| e.0).collect();
            return Err(Failure::Config(format!("unknown function id `{}` (known: {})", self.id, known.join(", "))));
        };
        if self.params.len() != *n {
            return Err(Failure::Config(format!("function `{}` needs {n} params, got {}", self.id, self.params.len())));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Failure::Config(format!("function `{}` has a non-finite parameter", self.id)));
        }
        Ok(())
    }

    /// True when the value does not depend on `x`.
    pub fn is_space_independent(&self) -> bool {
        matches!(self.id.as_str(), "const" | "time" | "sin_time" | "cos_time")
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        let p = &self.params;
        match self.id.as_str() {
            "const" => p[0],
            "time" => p[0] + p[1] * t,
            "space_linear" => p[0] + p[1] * x[0],
            "space_square" => p[0] * x.iter().map(|v| v * v).sum::<f64>(),
            "time_space" => p[0] * t * x[0],
            "sin_time" => p[0] + p[2] * (p[1] * t).sin(),
            "cos_time" => p[0] + p[2] * (p[1] * t).cos(),
            "sign_space" => {
                if x[0] > 0.0 {
                    p[0]
                } else if x[0] < 0.0 {
                    -p[0]
                } else {
                    0.0
                }
            }
            _ => f64::NAN,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_values() {
        assert_eq!(ScalarFn::new("time_space", &[1.0]).eval(0.5, &[2.0]), 1.0);
        assert_eq!(ScalarFn::new("space_square", &[1.0]).eval(0.0, &[-0.5]), 0.25);
        assert_eq!(ScalarFn::new("sign_space", &[2.0]).eval(0.0, &[-0.1]), -2.0);
        assert!(ScalarFn::new("nope", &[]).validate().is_err());
        assert!(ScalarFn::new("time", &[1.0]).validate().is_err());
    }
}
