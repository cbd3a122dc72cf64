//! Model parameters and the three model families.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five LGCP-Strauss parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Param {
    #[serde(rename = "mu")]
    Mu,
    #[serde(rename = "sigma2")]
    Sigma2,
    #[serde(rename = "s")]
    Scale,
    #[serde(rename = "gamma")]
    Gamma,
    #[serde(rename = "R")]
    Radius,
}

impl Param {
    pub const ALL: [Param; 5] = [Param::Mu, Param::Sigma2, Param::Scale, Param::Gamma, Param::Radius];

    pub fn name(self) -> &'static str {
        match self {
            Param::Mu => "mu",
            Param::Sigma2 => "sigma2",
            Param::Scale => "s",
            Param::Gamma => "gamma",
            Param::Radius => "R",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Param {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Param::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown parameter `{s}`")))
    }
}

/// `(mu, sigma2, s, gamma, R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mu: f64,
    pub sigma2: f64,
    pub s: f64,
    pub gamma: f64,
    #[serde(rename = "R")]
    pub r: f64,
}

impl ModelParams {
    pub fn new(mu: f64, sigma2: f64, s: f64, gamma: f64, r: f64) -> Result<Self> {
        let p = Self { mu, sigma2, s, gamma, r };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !self.mu.is_finite() {
            return bad("mu must be finite");
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return bad("sigma2 must be >= 0");
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return bad("s must be > 0");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return bad("R must be > 0");
        }
        Ok(())
    }

    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::Mu => self.mu,
            Param::Sigma2 => self.sigma2,
            Param::Scale => self.s,
            Param::Gamma => self.gamma,
            Param::Radius => self.r,
        }
    }

    pub fn set(&mut self, p: Param, v: f64) {
        match p {
            Param::Mu => self.mu = v,
            Param::Sigma2 => self.sigma2 = v,
            Param::Scale => self.s = v,
            Param::Gamma => self.gamma = v,
            Param::Radius => self.r = v,
        }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.mu, self.sigma2, self.s, self.gamma, self.r]
    }

    /// Upper bound `exp(mu + sigma2/2) |W|` on the expected count.
    pub fn dominating_mean(&self, area: f64) -> f64 {
        (self.mu + self.sigma2 / 2.0).exp() * area
    }
}

/// Model families compared in model choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    LgcpStrauss,
    Lgcp,
    Strauss,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::LgcpStrauss, ModelKind::Lgcp, ModelKind::Strauss];

    /// Free parameters, in canonical order.
    pub fn free_params(self) -> &'static [Param] {
        match self {
            ModelKind::LgcpStrauss => &Param::ALL,
            ModelKind::Lgcp => &[Param::Mu, Param::Sigma2, Param::Scale],
            ModelKind::Strauss => &[Param::Mu, Param::Gamma, Param::Radius],
        }
    }

    pub fn dim(self) -> usize {
        self.free_params().len()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::LgcpStrauss => "lgcp-strauss",
            ModelKind::Lgcp => "lgcp",
            ModelKind::Strauss => "strauss",
        }
    }

    /// Expand a free-parameter vector into full parameters. Fixed
    /// components: sigma2 = 0 for Strauss, gamma = 1 for LGCP. The
    /// irrelevant s (Strauss) and R (LGCP) are set to 1 and never used.
    pub fn expand(self, free: &[f64]) -> Result<ModelParams> {
        if free.len() != self.dim() {
            return Err(Error::Mismatch(format!(
                "{} expects {} parameters, got {}",
                self.name(),
                self.dim(),
                free.len()
            )));
        }
        let mut p = ModelParams { mu: 0.0, sigma2: 0.0, s: 1.0, gamma: 1.0, r: 1.0 };
        for (&param, &v) in self.free_params().iter().zip(free) {
            p.set(param, v);
        }
        p.validate()?;
        Ok(p)
    }

    pub fn project(self, params: &ModelParams) -> Vec<f64> {
        self.free_params().iter().map(|&p| params.get(p)).collect()
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "lgcp-strauss" | "lgcpstrauss" => Ok(ModelKind::LgcpStrauss),
            "lgcp" => Ok(ModelKind::Lgcp),
            "strauss" => Ok(ModelKind::Strauss),
            other => Err(Error::InvalidParameter(format!("unknown model `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariants_enforced() {
        assert!(ModelParams::new(5.0, 2.0, 0.3, 0.0, 0.03).is_ok());
        assert!(ModelParams::new(5.0, -1.0, 0.3, 0.5, 0.03).is_err());
        assert!(ModelParams::new(5.0, 1.0, 0.0, 0.5, 0.03).is_err());
        assert!(ModelParams::new(5.0, 1.0, 0.3, 1.5, 0.03).is_err());
        assert!(ModelParams::new(5.0, 1.0, 0.3, 0.5, 0.0).is_err());
    }

    #[test]
    fn submodels_fix_the_right_components() {
        let p = ModelKind::Lgcp.expand(&[5.0, 2.0, 0.3]).unwrap();
        assert_eq!((p.mu, p.sigma2, p.s, p.gamma), (5.0, 2.0, 0.3, 1.0));
        let p = ModelKind::Strauss.expand(&[5.0, 0.3, 0.03]).unwrap();
        assert_eq!((p.mu, p.sigma2, p.gamma, p.r), (5.0, 0.0, 0.3, 0.03));
        assert!(ModelKind::Strauss.expand(&[5.0]).is_err());
        assert_eq!(ModelKind::Strauss.project(&p), vec![5.0, 0.3, 0.03]);
    }

    #[test]
    fn names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        for p in Param::ALL {
            assert_eq!(p.name().parse::<Param>().unwrap(), p);
        }
    }
}
