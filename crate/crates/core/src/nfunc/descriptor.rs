//! Plain-text descriptors: `family[:key=value,...]`.
//!
//! ```text
//! exp_star
//! exp:gamma=0.5,tau=20          exp*_{γ,τ}
//! exp_raw:gamma=0.5,tau=20      exp_{γ,τ}
//! tilde_exp:gamma=1,tau=15
//! power:p=2
//! exp_alpha:alpha=2
//! tilde_exp:gamma=0,tau=2tau0,lambda=2
//! ```
//!
//! `tau` accepts a number, `tau0`, or a multiple such as `2tau0`.
//! Any family accepts `lambda=<scale>`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::{find_tau0, Family, NFuncError, NFunction};
use crate::scalar::Scalar;

fn parse_err(descriptor: &str, reason: impl Into<String>) -> NFuncError {
    NFuncError::Parse {
        descriptor: descriptor.to_string(),
        reason: reason.into(),
    }
}

fn parse_number<T: Scalar>(descriptor: &str, key: &str, raw: &str) -> Result<T, NFuncError> {
    if key == "tau" {
        if let Some(mult) = raw.strip_suffix("tau0") {
            let mult = mult.trim_end_matches('*');
            let k: f64 = if mult.is_empty() {
                1.0
            } else {
                mult.parse()
                    .map_err(|_| parse_err(descriptor, format!("bad multiplier `{mult}` for tau0")))?
            };
            return Ok(T::c(k) * find_tau0::<T>());
        }
    }
    let v: f64 = raw
        .parse()
        .map_err(|_| parse_err(descriptor, format!("`{key}` has non-numeric value `{raw}`")))?;
    if !v.is_finite() {
        return Err(parse_err(descriptor, format!("`{key}` must be finite")));
    }
    Ok(T::c(v))
}

impl<T: Scalar> FromStr for NFunction<T> {
    type Err = NFuncError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let text = s.trim();
        let (name, rest) = match text.split_once(':') {
            Some((n, r)) => (n.trim(), Some(r)),
            None => (text, None),
        };
        let mut params: BTreeMap<String, T> = BTreeMap::new();
        if let Some(rest) = rest {
            for item in rest.split(',').map(str::trim).filter(|i| !i.is_empty()) {
                let (k, v) = item
                    .split_once('=')
                    .ok_or_else(|| parse_err(text, format!("expected key=value, got `{item}`")))?;
                let k = k.trim();
                let v = parse_number::<T>(text, k, v.trim())?;
                if params.insert(k.to_string(), v).is_some() {
                    return Err(parse_err(text, format!("duplicate key `{k}`")));
                }
            }
        }
        let allowed: &[&str] = match name {
            "exp_star" => &["lambda"],
            "exp" | "exp_raw" | "tilde_exp" => &["gamma", "tau", "lambda"],
            "power" => &["p", "lambda"],
            "exp_alpha" => &["alpha", "lambda"],
            other => return Err(parse_err(text, format!("unknown family `{other}`"))),
        };
        if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(parse_err(text, format!("unknown key `{bad}` for family `{name}`")));
        }
        let need = |k: &str| {
            params
                .get(k)
                .copied()
                .ok_or_else(|| parse_err(text, format!("missing key `{k}`")))
        };
        let family = match name {
            "exp_star" => Family::ExpStar,
            "exp" => Family::ExpGammaTauStar {
                gamma: need("gamma")?,
                tau: need("tau")?,
            },
            "exp_raw" => Family::ExpGammaTau {
                gamma: need("gamma")?,
                tau: need("tau")?,
            },
            "tilde_exp" => Family::TildeExpGammaTau {
                gamma: need("gamma")?,
                tau: need("tau")?,
            },
            "power" => Family::Power { p: need("p")? },
            _ => Family::ExpAlphaStar {
                alpha: need("alpha")?,
            },
        };
        let f = NFunction::new(family).map_err(|e| parse_err(text, e.to_string()))?;
        match params.get("lambda") {
            Some(&l) => f.scaled(l).map_err(|e| parse_err(text, e.to_string())),
            None => Ok(f),
        }
    }
}

impl<T: Scalar> fmt::Display for NFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::ExpStar => write!(f, "exp_star")?,
            Family::ExpGammaTau { gamma, tau } => write!(f, "exp_raw:gamma={gamma},tau={tau}")?,
            Family::ExpGammaTauStar { gamma, tau } => write!(f, "exp:gamma={gamma},tau={tau}")?,
            Family::TildeExpGammaTau { gamma, tau } => {
                write!(f, "tilde_exp:gamma={gamma},tau={tau}")?
            }
            Family::Power { p } => write!(f, "power:p={p}")?,
            Family::ExpAlphaStar { alpha } => write!(f, "exp_alpha:alpha={alpha}")?,
        }
        if self.scale != T::one() {
            let sep = if matches!(self.family, Family::ExpStar) { ':' } else { ',' };
            write!(f, "{sep}lambda={}", self.scale)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nfunc::Generator;
    use proptest::prelude::*;

    #[test]
    fn parses_documented_forms() {
        let cases = [
            "exp_star",
            "exp:gamma=0.5,tau=20",
            "tilde_exp:gamma=1,tau=15",
            "power:p=2",
            "exp_alpha:alpha=2",
            "exp_raw:gamma=0,tau=3",
        ];
        for c in cases {
            let f: NFunction<f64> = c.parse().unwrap();
            assert_eq!(f.to_string(), c);
        }
    }

    #[test]
    fn tau0_symbol() {
        let f: NFunction<f64> = "tilde_exp:gamma=0,tau=2tau0".parse().unwrap();
        let (_, tau) = f.gamma_tau().unwrap();
        assert!((tau - 2.0 * find_tau0::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn lambda_key_scales() {
        let f: NFunction<f64> = "power:p=2,lambda=2".parse().unwrap();
        assert!((f.eval(4.0).unwrap() - 4.0).abs() < 1e-14);
        let g: NFunction<f64> = "exp_star:lambda=3".parse().unwrap();
        assert_eq!(g.to_string(), "exp_star:lambda=3");
    }

    #[test]
    fn rejects_bad_descriptors() {
        for bad in [
            "expo",
            "exp:gamma=0.5",
            "exp:gamma=0.5,tau=20,zeta=1",
            "power:p=abc",
            "power:p=2,p=3",
            "power:p=0.5",
            "tilde_exp:gamma=2,tau=20",
            "power:p",
        ] {
            assert!(bad.parse::<NFunction<f64>>().is_err(), "{bad}");
        }
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(gamma in 0.0f64..=1.0, tau in 1.01f64..100.0, lambda in 0.1f64..10.0) {
            let f = NFunction::tilde_exp(gamma, tau).unwrap().scaled(lambda).unwrap();
            let back: NFunction<f64> = f.to_string().parse().unwrap();
            prop_assert_eq!(back, f);
        }
    }
}
