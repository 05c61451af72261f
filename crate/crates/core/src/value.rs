use std::cmp::Ordering;
use std::fmt;

use num_traits::Zero;
use serde::{Serialize, Serializer};

use crate::belief::{format_rational, rational_to_f64, Rational};

/// A sender value: exact when the whole computation stayed rational.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Exact(Rational),
    Approx(f64),
}

impl Value {
    pub fn zero_exact() -> Self {
        Value::Exact(Rational::zero())
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Value::Exact(r) => rational_to_f64(r),
            Value::Approx(x) => *x,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Value::Exact(_))
    }

    pub fn as_exact(&self) -> Option<&Rational> {
        match self {
            Value::Exact(r) => Some(r),
            Value::Approx(_) => None,
        }
    }

    /// `sum_j w_j x_j`; exact iff every term is exact. Terms are added in
    /// iteration order so float results do not depend on scheduling.
    pub fn weighted_sum<'a, I>(terms: I) -> Value
    where
        I: IntoIterator<Item = (&'a Rational, &'a Value)>,
    {
        let mut exact = Some(Rational::zero());
        let mut approx = 0.0f64;
        for (w, x) in terms {
            match (x, exact.as_mut()) {
                (Value::Exact(r), Some(acc)) => *acc += w * r,
                _ => exact = None,
            }
            approx += rational_to_f64(w) * x.to_f64();
        }
        match exact {
            Some(r) => Value::Exact(r),
            None => Value::Approx(approx),
        }
    }

    /// Total order: exact comparison when both sides are exact.
    pub fn compare(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Exact(a), Value::Exact(b)) => a.cmp(b),
            _ => self.to_f64().partial_cmp(&other.to_f64()).unwrap_or(Ordering::Equal),
        }
    }

    /// `self > other`, strictly when both are exact, beyond `eps` otherwise.
    pub fn exceeds(&self, other: &Value, eps: f64) -> bool {
        match (self, other) {
            (Value::Exact(a), Value::Exact(b)) => a > b,
            _ => self.to_f64() > other.to_f64() + eps,
        }
    }

    pub fn approx_eq(&self, other: &Value, eps: f64) -> bool {
        match (self, other) {
            (Value::Exact(a), Value::Exact(b)) => a == b,
            _ => (self.to_f64() - other.to_f64()).abs() <= eps,
        }
    }

    pub fn sub(&self, other: &Value) -> Value {
        match (self, other) {
            (Value::Exact(a), Value::Exact(b)) => Value::Exact(a - b),
            _ => Value::Approx(self.to_f64() - other.to_f64()),
        }
    }

    pub fn max(self, other: Value) -> Value {
        if other.compare(&self) == Ordering::Greater {
            other
        } else {
            self
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Exact(r) => write!(f, "{r}"),
            Value::Approx(x) => write!(f, "{x}"),
        }
    }
}

/// Exact values serialize as `"n/d"` strings, approximate ones as numbers.
impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Exact(r) => serializer.serialize_str(&format_rational(r)),
            Value::Approx(x) => serializer.serialize_f64(*x),
        }
    }
}
