//! Exact beliefs over a finite state set and finite-support experiments.
//!
//! Every probability is an arbitrary-precision rational, so belief identity is
//! exact equality. Only entropy is computed in floating point; each term
//! `p log p` carries at most about one ulp of rounding, and entropy is never
//! used to decide whether two beliefs are the same.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};
use serde_json::Value as Json;

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Builds `num / den` in lowest terms. Panics if `den == 0`.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Canonical `"n/d"` text for a rational; zero is `"0/1"`.
pub fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parses `"n/d"` or a bare integer `"n"`.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (text, "1"),
    };
    let num: BigInt = num.parse().ok()?;
    let den: BigInt = den.parse().ok()?;
    if den.is_zero() {
        return None;
    }
    Some(Rational::new(num, den))
}

/// `serialize_with` helper writing a rational as `"n/d"`.
pub fn serialize_rational<S: serde::Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_rational(r))
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Best rational approximation of `x` with denominator `2^bits`.
pub fn dyadic_from_f64(x: f64, bits: u32) -> Rational {
    let scale = 2f64.powi(bits as i32);
    let num = (x * scale).round();
    Rational::new(BigInt::from(num as i128), BigInt::from(1u8) << bits as usize)
}

pub(crate) fn parse_rational_json(value: &Json, path: &str) -> Result<Rational> {
    let text = match value {
        Json::String(s) => s.clone(),
        Json::Number(n) if n.is_i64() => n.to_string(),
        other => other.to_string(),
    };
    parse_rational(&text).ok_or_else(|| Error::MalformedRational {
        path: path.to_string(),
        text,
    })
}

/// A probability vector over the states, stored exactly.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Belief(Vec<Rational>);

impl Belief {
    pub fn new(coords: Vec<Rational>) -> Result<Self> {
        Self::validated(coords, "belief")
    }

    fn validated(coords: Vec<Rational>, path: &str) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::DimensionMismatch {
                path: path.to_string(),
                expected: 1,
                found: 0,
            });
        }
        for (index, c) in coords.iter().enumerate() {
            if c.is_negative() {
                return Err(Error::NegativeCoordinate {
                    path: path.to_string(),
                    index,
                    value: c.clone(),
                });
            }
        }
        let sum: Rational = coords.iter().sum();
        if !sum.is_one() {
            return Err(Error::CoordinatesNotNormalized {
                path: path.to_string(),
                sum,
            });
        }
        Ok(Belief(coords))
    }

    /// Convenience constructor from `(num, den)` pairs.
    pub fn from_fractions(coords: &[(i64, i64)]) -> Result<Self> {
        Self::new(coords.iter().map(|&(n, d)| rat(n, d)).collect())
    }

    /// Binary belief represented by `t = p(state 0)`.
    pub fn binary(t: Rational) -> Result<Self> {
        let rest = Rational::one() - &t;
        Self::new(vec![t, rest])
    }

    pub fn point_mass(dim: usize, state: usize) -> Self {
        let mut coords = vec![Rational::zero(); dim];
        coords[state] = Rational::one();
        Belief(coords)
    }

    pub fn uniform(dim: usize) -> Self {
        Belief(vec![rat(1, dim as i64); dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[Rational] {
        &self.0
    }

    pub fn coord(&self, state: usize) -> &Rational {
        &self.0[state]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(rational_to_f64).collect()
    }

    pub fn is_point_mass(&self) -> bool {
        self.0.iter().any(|c| c.is_one())
    }

    /// Shannon entropy in nats, with `0 log 0 = 0`.
    pub fn entropy(&self) -> f64 {
        self.0
            .iter()
            .map(rational_to_f64)
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum::<f64>()
            .max(0.0)
    }

    /// Half the L1 distance, computed exactly.
    pub fn total_variation(&self, other: &Belief) -> Result<Rational> {
        self.check_dim(other.dim(), "total_variation")?;
        let l1: Rational = self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum();
        Ok(l1 / rat(2, 1))
    }

    pub(crate) fn check_dim(&self, expected: usize, path: &str) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                path: path.to_string(),
                expected,
                found: self.dim(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Json {
        Json::Array(self.0.iter().map(|c| Json::String(format_rational(c))).collect())
    }

    pub fn from_json(value: &Json, path: &str) -> Result<Self> {
        let items = value.as_array().ok_or_else(|| Error::InvalidDocument {
            path: path.to_string(),
            message: "belief must be an array of rationals".into(),
        })?;
        let coords = items
            .iter()
            .enumerate()
            .map(|(i, v)| parse_rational_json(v, &format!("{path}[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        Self::validated(coords, path)
    }
}

impl fmt::Debug for Belief {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Belief {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl Serialize for Belief {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.0.len()))?;
        for c in &self.0 {
            seq.serialize_element(&format_rational(c))?;
        }
        seq.end()
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Atom {
    pub weight: Rational,
    pub belief: Belief,
}

impl Serialize for Atom {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(2))?;
        map.serialize_entry("w", &format_rational(&self.weight))?;
        map.serialize_entry("p", &self.belief)?;
        map.end()
    }
}

/// A finite-support distribution over beliefs with distinct support points.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Experiment {
    atoms: Vec<Atom>,
}

impl Experiment {
    pub fn new(atoms: Vec<(Rational, Belief)>) -> Result<Self> {
        Self::validated(
            atoms
                .into_iter()
                .map(|(weight, belief)| Atom { weight, belief })
                .collect(),
            "experiment",
        )
    }

    fn validated(atoms: Vec<Atom>, path: &str) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyExperiment { path: path.to_string() });
        }
        let dim = atoms[0].belief.dim();
        for (i, atom) in atoms.iter().enumerate() {
            atom.belief.check_dim(dim, &format!("{path}.atoms[{i}].p"))?;
            if !atom.weight.is_positive() || atom.weight > Rational::one() {
                return Err(Error::NonPositiveWeight {
                    path: format!("{path}.atoms[{i}].w"),
                    weight: atom.weight.clone(),
                });
            }
        }
        let sum: Rational = atoms.iter().map(|a| &a.weight).sum();
        if !sum.is_one() {
            return Err(Error::WeightsNotNormalized {
                path: path.to_string(),
                sum,
            });
        }
        let mut seen: HashMap<&Belief, usize> = HashMap::new();
        for (i, atom) in atoms.iter().enumerate() {
            if let Some(&first) = seen.get(&atom.belief) {
                return Err(Error::DuplicateSupport {
                    path: path.to_string(),
                    first,
                    second: i,
                });
            }
            seen.insert(&atom.belief, i);
        }
        Ok(Experiment { atoms })
    }

    pub fn trivial(p: Belief) -> Self {
        Experiment {
            atoms: vec![Atom {
                weight: Rational::one(),
                belief: p,
            }],
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].belief.dim()
    }

    pub fn expectation(&self) -> Belief {
        let dim = self.dim();
        let mut coords = vec![Rational::zero(); dim];
        for atom in &self.atoms {
            for (acc, c) in coords.iter_mut().zip(atom.belief.coords()) {
                *acc += &atom.weight * c;
            }
        }
        Belief(coords)
    }

    pub fn support(&self) -> Vec<&Belief> {
        self.atoms.iter().map(|a| &a.belief).collect()
    }

    pub fn is_trivial(&self) -> bool {
        self.atoms.len() == 1
    }

    /// Probability this experiment assigns to posterior `p` (zero when absent).
    pub fn weight_of(&self, p: &Belief) -> Rational {
        self.atoms
            .iter()
            .find(|a| &a.belief == p)
            .map(|a| a.weight.clone())
            .unwrap_or_else(Rational::zero)
    }

    /// Expected entropy reduction `H(mean) - sum_j w_j H(p_j)`.
    pub fn entropy_gap(&self) -> f64 {
        if self.is_trivial() {
            return 0.0;
        }
        let after: f64 = self
            .atoms
            .iter()
            .map(|a| rational_to_f64(&a.weight) * a.belief.entropy())
            .sum();
        (self.expectation().entropy() - after).max(0.0)
    }

    /// Composes this experiment with follow-up experiments run at some of its
    /// posteriors, producing the equivalent one-shot experiment. Atoms landing
    /// on the same belief are merged.
    pub fn merge_spread(&self, followups: &BTreeMap<Belief, Experiment>) -> Result<Experiment> {
        let mut order: Vec<Belief> = Vec::new();
        let mut mass: HashMap<Belief, Rational> = HashMap::new();
        let mut push = |w: Rational, p: &Belief| {
            if let Some(acc) = mass.get_mut(p) {
                *acc += w;
            } else {
                order.push(p.clone());
                mass.insert(p.clone(), w);
            }
        };
        for atom in &self.atoms {
            match followups.get(&atom.belief) {
                None => push(atom.weight.clone(), &atom.belief),
                Some(next) => {
                    let mean = next.expectation();
                    if mean != atom.belief {
                        return Err(Error::NotBayesPlausible {
                            path: "merge_spread".into(),
                            expected: atom.belief.to_string(),
                            found: mean.to_string(),
                        });
                    }
                    for inner in &next.atoms {
                        push(&atom.weight * &inner.weight, &inner.belief);
                    }
                }
            }
        }
        let atoms = order
            .into_iter()
            .map(|p| Atom {
                weight: mass[&p].clone(),
                belief: p,
            })
            .collect();
        Ok(Experiment { atoms })
    }

    pub fn to_json(&self) -> Json {
        serde_json::to_value(self).expect("experiment serializes")
    }

    pub fn from_json(value: &Json, path: &str) -> Result<Self> {
        let atoms = value
            .get("atoms")
            .and_then(Json::as_array)
            .ok_or_else(|| Error::InvalidDocument {
                path: path.to_string(),
                message: "experiment must be an object with an \"atoms\" array".into(),
            })?;
        let atoms = atoms
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let apath = format!("{path}.atoms[{i}]");
                let w = a.get("w").ok_or_else(|| Error::InvalidDocument {
                    path: apath.clone(),
                    message: "missing \"w\"".into(),
                })?;
                let p = a.get("p").ok_or_else(|| Error::InvalidDocument {
                    path: apath.clone(),
                    message: "missing \"p\"".into(),
                })?;
                Ok(Atom {
                    weight: parse_rational_json(w, &format!("{apath}.w"))?,
                    belief: Belief::from_json(p, &format!("{apath}.p"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::validated(atoms, path)
    }
}

impl Serialize for Experiment {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(1))?;
        map.serialize_entry("atoms", &self.atoms)?;
        map.end()
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "({}, {})", a.weight, a.belief)?;
        }
        write!(f, "}}")
    }
}
