use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::DEFAULT_CUTOFF;
use crate::scalar::Real;

/// Whether a node pumps (`G_j = a`, gain on `a†`) or damps (`G_j = −b`,
/// loss on `a`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Active,
    Inactive,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Active => "active",
            Role::Inactive => "inactive",
        }
    }
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "active" => Ok(Role::Active),
            "inactive" => Ok(Role::Inactive),
            other => Err(Error::InvalidConfig(format!("unknown role `{other}`"))),
        }
    }
}

/// Network-level parameters. Oscillators `0..n_active` are active, the
/// remaining `n_inactive` are inactive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetworkConfig<T> {
    pub n: usize,
    pub n_inactive: usize,
    pub a: T,
    pub b: T,
    pub omega: T,
    pub kappa: T,
    pub coupling: T,
    pub cutoff: usize,
}

impl<T: Real> NetworkConfig<T> {
    /// Parameters used throughout: N = 100, ω = 2, a = 4, b = 2, κ = 0.2.
    pub fn standard(coupling: T) -> Self {
        Self {
            n: 100,
            n_inactive: 0,
            a: T::lit(4.0),
            b: T::lit(2.0),
            omega: T::lit(2.0),
            kappa: T::lit(0.2),
            coupling,
            cutoff: DEFAULT_CUTOFF,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.n == 0 {
            bad.push("N must be positive".to_string());
        }
        if self.n_inactive > self.n {
            bad.push(format!("N_i = {} exceeds N = {}", self.n_inactive, self.n));
        }
        if !(self.a > T::zero()) {
            bad.push("a must be positive".into());
        }
        if !(self.b > T::zero()) {
            bad.push("b must be positive".into());
        }
        if !(self.kappa > T::zero()) {
            bad.push("kappa must be positive".into());
        }
        if !(self.coupling >= T::zero()) {
            bad.push("V must be nonnegative".into());
        }
        if !self.omega.is_finite() {
            bad.push("omega must be finite".into());
        }
        if self.cutoff < 2 {
            bad.push("cutoff must be at least 2".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(bad.join("; ")))
        }
    }

    pub fn n_active(&self) -> usize {
        self.n - self.n_inactive
    }

    /// Fraction of inactive nodes `N_i / N`.
    pub fn p(&self) -> T {
        T::from_usize_lossy(self.n_inactive) / T::from_usize_lossy(self.n)
    }

    /// Copy with `N_i = p·N`; `p·N` must be integral.
    pub fn with_p(&self, p: T) -> Result<Self> {
        let n_inactive = inactive_count(self.n, p)?;
        Ok(Self {
            n_inactive,
            ..*self
        })
    }

    pub fn with_coupling(&self, coupling: T) -> Self {
        Self { coupling, ..*self }
    }

    pub fn with_kappa(&self, kappa: T) -> Self {
        Self { kappa, ..*self }
    }

    pub fn role(&self, j: usize) -> Role {
        if j < self.n_active() {
            Role::Active
        } else {
            Role::Inactive
        }
    }

    /// Signed classical pumping rate `G_j`.
    pub fn gain(&self, role: Role) -> T {
        match role {
            Role::Active => self.a,
            Role::Inactive => -self.b,
        }
    }

    /// Nonnegative rate multiplying the quantum `D[O_j]` term.
    pub fn pump_rate(&self, role: Role) -> T {
        match role {
            Role::Active => self.a,
            Role::Inactive => self.b,
        }
    }
}

/// `N_i` for a fraction `p`, rejecting fractions that do not land on an
/// integer node count.
pub fn inactive_count<T: Real>(n: usize, p: T) -> Result<usize> {
    if !(p >= T::zero() && p <= T::one()) {
        return Err(Error::InvalidConfig(format!("p = {p} outside [0, 1]")));
    }
    let raw = p * T::from_usize_lossy(n);
    let rounded = raw.round();
    if (raw - rounded).abs() > T::lit(1e-6) {
        return Err(Error::InvalidConfig(format!(
            "p = {p} does not give an integer number of inactive nodes for N = {n}"
        )));
    }
    Ok(rounded.as_f64() as usize)
}
