//! Sender utility `v` as a function of the receiver's posterior.

use serde_json::{json, Value as Json};

use crate::belief::{format_rational, parse_rational_json, rat, rational_to_f64, Belief, Rational};
use crate::error::{Error, Result};
use crate::value::Value;

pub const DEFAULT_TIE_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum UtilitySpec {
    /// Receiver picks an action maximizing expected `receiver[state][action]`;
    /// ties go to the sender's favourite; the sender gets `sender[state][action]`.
    FiniteAction {
        actions: Vec<String>,
        receiver: Vec<Vec<f64>>,
        sender: Vec<Vec<f64>>,
    },
    /// `hi` on the listed beliefs, `lo` everywhere else.
    PointIndicator {
        points: Vec<Belief>,
        hi: Rational,
        lo: Rational,
    },
    Builtin {
        name: String,
    },
}

struct BuiltinUtility {
    name: &'static str,
    dim: usize,
    range: (f64, f64),
    eval: fn(&Belief) -> Rational,
    breakpoints: fn() -> Vec<Belief>,
}

fn two_abs_dist_half(p: &Belief) -> Rational {
    let d = p.coord(0) - rat(1, 2);
    let d = if d < rat(0, 1) { -d } else { d };
    d * rat(2, 1)
}

const BUILTINS: &[BuiltinUtility] = &[BuiltinUtility {
    name: "binary_two_abs_dist_half",
    dim: 2,
    range: (0.0, 1.0),
    eval: two_abs_dist_half,
    breakpoints: || vec![Belief::binary(rat(1, 2)).expect("valid")],
}];

fn builtin(name: &str) -> Result<&'static BuiltinUtility> {
    BUILTINS
        .iter()
        .find(|b| b.name == name)
        .ok_or_else(|| Error::UnknownBuiltin(name.to_string()))
}

pub fn builtin_names() -> Vec<&'static str> {
    BUILTINS.iter().map(|b| b.name).collect()
}

impl UtilitySpec {
    pub fn point_indicator(points: Vec<Belief>) -> Self {
        UtilitySpec::PointIndicator {
            points,
            hi: rat(1, 1),
            lo: rat(0, 1),
        }
    }

    pub(crate) fn validate(&self, dim: usize, path: &str) -> Result<()> {
        let invalid = |message: String| Error::InvalidDocument {
            path: path.to_string(),
            message,
        };
        match self {
            UtilitySpec::FiniteAction {
                actions,
                receiver,
                sender,
            } => {
                if actions.is_empty() {
                    return Err(invalid("finite_action needs at least one action".into()));
                }
                for (name, table) in [("receiver", receiver), ("sender", sender)] {
                    if table.len() != dim || table.iter().any(|row| row.len() != actions.len()) {
                        return Err(invalid(format!(
                            "{name} table must be {dim} states x {} actions",
                            actions.len()
                        )));
                    }
                    if table.iter().flatten().any(|x| !x.is_finite()) {
                        return Err(invalid(format!("{name} table has non-finite entries")));
                    }
                }
            }
            UtilitySpec::PointIndicator { points, hi, lo } => {
                if points.is_empty() {
                    return Err(invalid("point_indicator needs at least one point".into()));
                }
                if hi == lo {
                    return Err(invalid("point_indicator needs hi != lo".into()));
                }
                for (i, p) in points.iter().enumerate() {
                    p.check_dim(dim, &format!("{path}.points[{i}]"))?;
                }
            }
            UtilitySpec::Builtin { name } => {
                let b = builtin(name)?;
                if b.dim != dim {
                    return Err(invalid(format!("builtin {name} needs {} states", b.dim)));
                }
            }
        }
        Ok(())
    }

    /// `v(p)`. Exact for point indicators, floating point otherwise.
    pub fn eval(&self, p: &Belief, tie_eps: f64) -> Result<Value> {
        match self {
            UtilitySpec::FiniteAction { receiver, sender, .. } => {
                let probs = p.to_f64();
                let expect = |table: &Vec<Vec<f64>>, a: usize| -> f64 {
                    probs.iter().zip(table).map(|(q, row)| q * row[a]).sum()
                };
                let n_actions = receiver[0].len();
                let receiver_values: Vec<f64> = (0..n_actions).map(|a| expect(receiver, a)).collect();
                let best = receiver_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let v = (0..n_actions)
                    .filter(|&a| receiver_values[a] >= best - tie_eps)
                    .map(|a| expect(sender, a))
                    .fold(f64::NEG_INFINITY, f64::max);
                Ok(Value::Approx(v))
            }
            UtilitySpec::PointIndicator { points, hi, lo } => {
                Ok(Value::Exact(if points.contains(p) { hi.clone() } else { lo.clone() }))
            }
            UtilitySpec::Builtin { name } => {
                let b = builtin(name)?;
                Ok(Value::Approx(rational_to_f64(&(b.eval)(p))))
            }
        }
    }

    /// Whether the whole value pipeline can run in exact arithmetic.
    pub fn is_exact(&self) -> bool {
        matches!(self, UtilitySpec::PointIndicator { .. })
    }

    /// `(min v, max v)` over the whole simplex.
    pub fn range(&self) -> (f64, f64) {
        match self {
            UtilitySpec::FiniteAction { sender, .. } => {
                let all = sender.iter().flatten();
                let lo = all.clone().cloned().fold(f64::INFINITY, f64::min);
                let hi = all.cloned().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            UtilitySpec::PointIndicator { hi, lo, .. } => {
                let (a, b) = (rational_to_f64(lo), rational_to_f64(hi));
                (a.min(b), a.max(b))
            }
            UtilitySpec::Builtin { name } => builtin(name).map(|b| b.range).unwrap_or((0.0, 0.0)),
        }
    }

    /// Beliefs where `v` is known to jump or kink; used to seed closure grids.
    pub fn special_beliefs(&self, dim: usize) -> Vec<Belief> {
        match self {
            UtilitySpec::PointIndicator { points, .. } => points.clone(),
            UtilitySpec::Builtin { name } => builtin(name).map(|b| (b.breakpoints)()).unwrap_or_default(),
            UtilitySpec::FiniteAction { receiver, .. } if dim == 2 => {
                // Indifference points t where two actions tie for the receiver.
                let n = receiver[0].len();
                let mut out = Vec::new();
                for a in 0..n {
                    for b in (a + 1)..n {
                        let d0 = receiver[0][a] - receiver[0][b];
                        let d1 = receiver[1][a] - receiver[1][b];
                        if (d0 - d1).abs() < 1e-300 {
                            continue;
                        }
                        let t = d1 / (d1 - d0);
                        if t > 0.0 && t < 1.0 {
                            let t = crate::belief::dyadic_from_f64(t, 52);
                            if let Ok(p) = Belief::binary(t) {
                                out.push(p);
                            }
                        }
                    }
                }
                out
            }
            UtilitySpec::FiniteAction { .. } => Vec::new(),
        }
    }

    pub fn to_json(&self) -> Json {
        match self {
            UtilitySpec::FiniteAction {
                actions,
                receiver,
                sender,
            } => json!({"kind": "finite_action", "actions": actions, "receiver": receiver, "sender": sender}),
            UtilitySpec::PointIndicator { points, hi, lo } => json!({
                "kind": "point_indicator",
                "points": points.iter().map(Belief::to_json).collect::<Vec<_>>(),
                "hi": format_rational(hi),
                "lo": format_rational(lo),
            }),
            UtilitySpec::Builtin { name } => json!({"kind": "builtin", "name": name}),
        }
    }

    pub fn from_json(value: &Json, path: &str) -> Result<Self> {
        let invalid = |message: &str| Error::InvalidDocument {
            path: path.to_string(),
            message: message.to_string(),
        };
        let kind = value
            .get("kind")
            .and_then(Json::as_str)
            .ok_or_else(|| invalid("utility needs a string \"kind\""))?;
        match kind {
            "finite_action" => {
                let actions: Vec<String> = serde_json::from_value(value.get("actions").cloned().unwrap_or(Json::Null))
                    .map_err(|_| invalid("\"actions\" must be a list of labels"))?;
                let table = |key: &str| -> Result<Vec<Vec<f64>>> {
                    serde_json::from_value(value.get(key).cloned().unwrap_or(Json::Null))
                        .map_err(|_| invalid(&format!("\"{key}\" must be a numeric matrix")))
                };
                Ok(UtilitySpec::FiniteAction {
                    actions,
                    receiver: table("receiver")?,
                    sender: table("sender")?,
                })
            }
            "point_indicator" => {
                let points = value
                    .get("points")
                    .and_then(Json::as_array)
                    .ok_or_else(|| invalid("\"points\" must be a list of beliefs"))?
                    .iter()
                    .enumerate()
                    .map(|(i, p)| Belief::from_json(p, &format!("{path}.points[{i}]")))
                    .collect::<Result<Vec<_>>>()?;
                let hi = match value.get("hi") {
                    Some(v) => parse_rational_json(v, &format!("{path}.hi"))?,
                    None => rat(1, 1),
                };
                let lo = match value.get("lo") {
                    Some(v) => parse_rational_json(v, &format!("{path}.lo"))?,
                    None => rat(0, 1),
                };
                Ok(UtilitySpec::PointIndicator { points, hi, lo })
            }
            "builtin" => {
                let name = value
                    .get("name")
                    .and_then(Json::as_str)
                    .ok_or_else(|| invalid("builtin utility needs \"name\""))?;
                builtin(name)?;
                Ok(UtilitySpec::Builtin { name: name.to_string() })
            }
            other => Err(invalid(&format!("unknown utility kind {other:?}"))),
        }
    }
}
