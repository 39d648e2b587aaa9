//! Pointwise `r`-norms of control vectors and their duality maps.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RNorm {
    /// Exponent in `[1, ∞]`; infinity is `f64::INFINITY`.
    #[serde(with = "exponent")]
    pub r: f64,
}

impl RNorm {
    pub fn new(r: f64) -> Result<Self> {
        if r.is_nan() || r < 1.0 {
            return Err(invalid("r", format!("must lie in [1, inf], got {r}")));
        }
        Ok(Self { r })
    }

    /// Conjugate exponent with `1/r + 1/r′ = 1`.
    pub fn conjugate(&self) -> f64 {
        conjugate(self.r)
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        p_norm(x, self.r)
    }

    pub fn dual_norm(&self, x: &[f64]) -> f64 {
        p_norm(x, self.conjugate())
    }
}

/// Serde helper writing an infinite exponent as `"inf"`.
pub mod exponent {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &f64, s: S) -> Result<S::Ok, S::Error> {
        if r.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*r)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad exponent `{t}`"))),
        }
    }
}

pub fn conjugate(r: f64) -> f64 {
    if r == 1.0 {
        f64::INFINITY
    } else if r.is_infinite() {
        1.0
    } else {
        r / (r - 1.0)
    }
}

pub fn p_norm(x: &[f64], p: f64) -> f64 {
    let m = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if p.is_infinite() || m == 0.0 {
        return m;
    }
    if p == 1.0 {
        return x.iter().map(|v| v.abs()).sum();
    }
    if p == 2.0 {
        return x.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    // scaled to avoid overflow for large p
    m * x.iter().map(|v| (v.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
}

/// `argmax_{|v|_r ≤ 1} v·φ`.
///
/// For `r = 1` the unit mass sits on the first largest `|φ_i|`.
pub fn duality_map(phi: &[f64], r: f64) -> Result<Vec<f64>> {
    let rn = RNorm::new(r)?;
    if phi.iter().all(|&x| x == 0.0) {
        return Err(Error::Degenerate("duality map of the zero vector".into()));
    }
    if !phi.iter().all(|x| x.is_finite()) {
        return Err(invalid("phi", "must be finite"));
    }
    let mut v = vec![0.0; phi.len()];
    if rn.r.is_infinite() {
        for (vi, &p) in v.iter_mut().zip(phi) {
            *vi = if p > 0.0 {
                1.0
            } else if p < 0.0 {
                -1.0
            } else {
                0.0
            };
        }
    } else if rn.r == 1.0 {
        let mut k = 0;
        for (i, p) in phi.iter().enumerate() {
            if p.abs() > phi[k].abs() {
                k = i;
            }
        }
        v[k] = phi[k].signum();
    } else {
        let q = rn.conjugate();
        let nq = p_norm(phi, q);
        for (vi, &p) in v.iter_mut().zip(phi) {
            *vi = p.signum() * (p.abs() / nq).powf(q - 1.0);
        }
    }
    Ok(v)
}
