use super::AttackError;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMethod {
    Fgsm,
    Pgdn,
    Cw,
    Mscw,
}

impl AttackMethod {
    pub const ALL: [AttackMethod; 4] = [AttackMethod::Fgsm, AttackMethod::Pgdn, AttackMethod::Cw, AttackMethod::Mscw];

    pub fn is_targeted(self) -> bool {
        matches!(self, AttackMethod::Cw | AttackMethod::Mscw)
    }

    pub fn is_iterative(self) -> bool {
        self != AttackMethod::Fgsm
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AttackMethod::Fgsm => "fgsm",
            AttackMethod::Pgdn => "pgdn",
            AttackMethod::Cw => "cw",
            AttackMethod::Mscw => "mscw",
        }
    }
}

impl fmt::Display for AttackMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackMethod {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['&', '-', '_'], "").as_str() {
            "fgsm" => Ok(AttackMethod::Fgsm),
            "pgdn" | "pgd" => Ok(AttackMethod::Pgdn),
            "cw" => Ok(AttackMethod::Cw),
            "mscw" => Ok(AttackMethod::Mscw),
            _ => Err(AttackError::Config(format!("unknown attack method {s:?}"))),
        }
    }
}

/// Hyperparameters of one attack. Fields a method does not use are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub method: AttackMethod,
    pub lambda: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub alpha: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self { method: AttackMethod::Pgdn, lambda: 0.0, epsilon: 0.0005, eta: 1e-5, alpha: 1.0, max_iters: 500, seed: 0 }
    }
}

impl AttackConfig {
    pub fn fgsm(lambda: f64) -> Self {
        Self { method: AttackMethod::Fgsm, lambda, ..Self::default() }
    }

    pub fn pgdn(epsilon: f64, eta: f64) -> Self {
        Self { method: AttackMethod::Pgdn, epsilon, eta, ..Self::default() }
    }

    pub fn cw(epsilon: f64, eta: f64, alpha: f64) -> Self {
        Self { method: AttackMethod::Cw, epsilon, eta, alpha, ..Self::default() }
    }

    pub fn mscw(epsilon: f64, eta: f64, alpha: f64) -> Self {
        Self { method: AttackMethod::Mscw, epsilon, eta, alpha, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        let bad = |m: &str| Err(AttackError::Config(format!("{}: {m}", self.method)));
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        match self.method {
            AttackMethod::Fgsm => {
                if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
                    return bad("lambda must be finite and >= 0");
                }
            }
            m => {
                if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
                    return bad("epsilon must be finite and >= 0");
                }
                if !(self.eta > 0.0 && self.eta.is_finite()) {
                    return bad("eta must be finite and > 0");
                }
                if m.is_targeted() && !(self.alpha >= 0.0 && self.alpha.is_finite()) {
                    return bad("alpha must be finite and >= 0");
                }
            }
        }
        Ok(())
    }
}
