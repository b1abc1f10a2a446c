//! Instance generators: bias scalars, bias vectors and vector distributions.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randomness::{Gaussian, ProductBernoulli, SharedRandomness, VectorSource};

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("expected a number, got `{s}`")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| Error::Parse(format!("expected a count, got `{s}`")))
}

/// Generator of a single bias or mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarGen {
    Fixed { value: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl ScalarGen {
    pub fn draw(&self, rand: &mut SharedRandomness) -> Result<f64> {
        match *self {
            ScalarGen::Fixed { value } => Ok(value),
            ScalarGen::Uniform { lo, hi } => rand.uniform(lo, hi),
        }
    }
}

/// `0.3`, `fixed:0.3` or `uniform:0.3:0.6`.
impl FromStr for ScalarGen {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [v] | ["fixed", v] => Ok(ScalarGen::Fixed {
                value: parse_f64(v)?,
            }),
            ["uniform", lo, hi] => Ok(ScalarGen::Uniform {
                lo: parse_f64(lo)?,
                hi: parse_f64(hi)?,
            }),
            _ => Err(Error::Parse(format!("unrecognized scalar generator `{s}`"))),
        }
    }
}

/// Generator of a length-N vector of biases or means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VectorGen {
    Fixed {
        values: Vec<f64>,
    },
    /// Independent uniform coordinates.
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// `count` coordinates at `top` in random positions, the rest at `rest`.
    Planted {
        top: f64,
        rest: f64,
        count: usize,
    },
}

impl VectorGen {
    pub fn generate(&self, n: usize, rand: &mut SharedRandomness) -> Result<Vec<f64>> {
        match self {
            VectorGen::Fixed { values } => {
                if values.len() != n {
                    return Err(Error::InvalidParameter(format!(
                        "expected {n} values, got {}",
                        values.len()
                    )));
                }
                Ok(values.clone())
            }
            VectorGen::Uniform { lo, hi } => (0..n).map(|_| rand.uniform(*lo, *hi)).collect(),
            VectorGen::Planted { top, rest, count } => {
                if *count > n {
                    return Err(Error::InvalidParameter(format!(
                        "cannot plant {count} of {n} coordinates"
                    )));
                }
                let mut order: Vec<usize> = (0..n).collect();
                for i in 0..*count {
                    let j = i + rand.index(n - i);
                    order.swap(i, j);
                }
                let mut v = vec![*rest; n];
                for &i in &order[..*count] {
                    v[i] = *top;
                }
                Ok(v)
            }
        }
    }

    /// Whitespace or comma separated values.
    pub fn from_text(text: &str) -> Result<Self> {
        let values = text
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(parse_f64)
            .collect::<Result<Vec<_>>>()?;
        Ok(VectorGen::Fixed { values })
    }
}

/// `uniform:lo:hi`, `planted:top:rest:count`, `fixed:v1,v2,...` or a path to a file of values.
impl FromStr for VectorGen {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["uniform", lo, hi] => Ok(VectorGen::Uniform {
                lo: parse_f64(lo)?,
                hi: parse_f64(hi)?,
            }),
            ["planted", top, rest, count] => Ok(VectorGen::Planted {
                top: parse_f64(top)?,
                rest: parse_f64(rest)?,
                count: parse_usize(count)?,
            }),
            ["fixed", values] => VectorGen::from_text(values),
            _ => {
                let path = std::path::Path::new(s);
                if path.is_file() {
                    VectorGen::from_text(&std::fs::read_to_string(path)?)
                } else {
                    Err(Error::Parse(format!("unrecognized vector generator `{s}`")))
                }
            }
        }
    }
}

/// Distribution over R^N whose mean is drawn from a [`VectorGen`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum VectorDist {
    /// Independent coins with the generated biases.
    Bernoulli { means: VectorGen },
    /// Identity-covariance Gaussian around the generated mean.
    Gaussian { means: VectorGen },
}

impl VectorDist {
    pub fn means(&self) -> &VectorGen {
        match self {
            VectorDist::Bernoulli { means } | VectorDist::Gaussian { means } => means,
        }
    }

    pub fn source(&self, means: &[f64], seed: u64) -> Result<Box<dyn VectorSource>> {
        Ok(match self {
            VectorDist::Bernoulli { .. } => Box::new(ProductBernoulli::new(means, seed)?),
            VectorDist::Gaussian { .. } => Box::new(Gaussian::new(means.to_vec(), seed)),
        })
    }
}

/// `bernoulli:<vector generator>` or `gaussian:<vector generator>`.
impl FromStr for VectorDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (family, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("unrecognized distribution `{s}`")))?;
        let means = rest.parse()?;
        match family {
            "bernoulli" => Ok(VectorDist::Bernoulli { means }),
            "gaussian" => Ok(VectorDist::Gaussian { means }),
            _ => Err(Error::Parse(format!(
                "unknown distribution family `{family}`"
            ))),
        }
    }
}
