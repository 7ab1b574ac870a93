//! Newline-delimited JSON envelopes exchanged with model backends.
//!
//! Floats are written with 17 significant digits so they survive a text
//! round trip bit for bit. NaN travels as the string `"NaN"`; infinities as
//! `"Infinity"` / `"-Infinity"`.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{Error, Result};

fn encode_f64(v: f64) -> Box<RawValue> {
    let text = if v.is_nan() {
        "\"NaN\"".to_string()
    } else if v == f64::INFINITY {
        "\"Infinity\"".to_string()
    } else if v == f64::NEG_INFINITY {
        "\"-Infinity\"".to_string()
    } else {
        format!("{v:.16e}")
    };
    RawValue::from_string(text).expect("valid json number")
}

#[derive(Deserialize)]
#[serde(untagged)]
enum WireNum {
    Num(f64),
    Text(String),
}

impl WireNum {
    fn value<E: serde::de::Error>(self) -> std::result::Result<f64, E> {
        match self {
            WireNum::Num(v) => Ok(v),
            WireNum::Text(s) => match s.as_str() {
                "NaN" => Ok(f64::NAN),
                "Infinity" => Ok(f64::INFINITY),
                "-Infinity" => Ok(f64::NEG_INFINITY),
                other => Err(E::custom(format!("expected a number, got string `{other}`"))),
            },
        }
    }
}

/// Serde adapters for wire floats.
pub mod wire {
    use super::*;

    pub mod scalar {
        use super::*;

        pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
            encode_f64(*v).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
            WireNum::deserialize(d)?.value()
        }
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
            s.collect_seq(v.iter().map(|x| encode_f64(*x)))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
            Vec::<WireNum>::deserialize(d)?.into_iter().map(WireNum::value).collect()
        }
    }

    pub mod matrix {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[Vec<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
            s.collect_seq(v.iter().map(|row| row.iter().map(|x| encode_f64(*x)).collect::<Vec<_>>()))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<f64>>, D::Error> {
            Vec::<Vec<WireNum>>::deserialize(d)?
                .into_iter()
                .map(|row| row.into_iter().map(WireNum::value).collect())
                .collect()
        }
    }

    pub mod opt_vec {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<Vec<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
            match v {
                Some(v) => s.collect_seq(v.iter().map(|x| encode_f64(*x))),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<f64>>, D::Error> {
            Option::<Vec<WireNum>>::deserialize(d)?
                .map(|v| v.into_iter().map(WireNum::value).collect())
                .transpose()
        }
    }

    pub mod opt_scalar {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
            match v {
                Some(v) => encode_f64(*v).serialize(s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
            Option::<WireNum>::deserialize(d)?.map(WireNum::value).transpose()
        }
    }

    pub mod quantile_map {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<BTreeMap<String, Vec<f64>>>, s: S) -> std::result::Result<S::Ok, S::Error> {
            match v {
                Some(m) => s.collect_map(m.iter().map(|(k, v)| (k, v.iter().map(|x| encode_f64(*x)).collect::<Vec<_>>()))),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<BTreeMap<String, Vec<f64>>>, D::Error> {
            Option::<BTreeMap<String, Vec<WireNum>>>::deserialize(d)?
                .map(|m| {
                    m.into_iter()
                        .map(|(k, v)| Ok((k, v.into_iter().map(WireNum::value).collect::<std::result::Result<Vec<_>, _>>()?)))
                        .collect()
                })
                .transpose()
        }
    }
}

/// Map key of a quantile level.
pub fn quantile_key(p: f64) -> String {
    format!("{p}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    FitPredict,
    Ping,
    Shutdown,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainBlock {
    #[serde(rename = "X", with = "wire::matrix")]
    pub x: Vec<Vec<f64>>,
    #[serde(with = "wire::vec")]
    pub y: Vec<f64>,
    pub column_names: Vec<String>,
    #[serde(default)]
    pub categorical_columns: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TestBlock {
    #[serde(rename = "X", with = "wire::matrix")]
    pub x: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RequestOptions {
    #[serde(default, with = "wire::vec")]
    pub quantiles: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "wire::opt_scalar")]
    pub time_budget_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub op: Op,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<TestBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<RequestOptions>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "wire::opt_vec")]
    pub mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "wire::quantile_map")]
    pub quantiles: Option<BTreeMap<String, Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pong: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ok: Option<bool>,
}

impl Request {
    pub fn ping(id: u64) -> Self {
        Request {
            id,
            op: Op::Ping,
            train: None,
            test: None,
            options: None,
        }
    }

    pub fn shutdown(id: u64) -> Self {
        Request {
            op: Op::Shutdown,
            ..Request::ping(id)
        }
    }

    pub fn fit_predict(id: u64, train: TrainBlock, test: TestBlock, options: RequestOptions) -> Self {
        Request {
            id,
            op: Op::FitPredict,
            train: Some(train),
            test: Some(test),
            options: Some(options),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.op != Op::FitPredict {
            return Ok(());
        }
        let (Some(train), Some(test)) = (&self.train, &self.test) else {
            return Err(Error::Protocol("fit_predict needs train and test blocks".into()));
        };
        let d = train.column_names.len();
        if train.x.len() != train.y.len() {
            return Err(Error::Protocol(format!("{} train rows but {} labels", train.x.len(), train.y.len())));
        }
        if train.x.iter().chain(&test.x).any(|r| r.len() != d) {
            return Err(Error::Protocol(format!("rows must have {d} columns")));
        }
        if let Some(c) = train.categorical_columns.iter().find(|c| !train.column_names.contains(c)) {
            return Err(Error::Protocol(format!("categorical column `{c}` not among columns")));
        }
        if let Some(o) = &self.options {
            if o.quantiles.iter().any(|p| !(*p > 0.0 && *p < 1.0)) || o.quantiles.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Protocol("quantiles must be strictly increasing in (0,1)".into()));
            }
        }
        Ok(())
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("request serialises");
        s.push('\n');
        s
    }
}

impl Response {
    pub fn error(id: u64, code: &str, message: impl Into<String>) -> Self {
        Response {
            id,
            error: Some(ErrorBody {
                code: code.to_string(),
                message: message.into(),
            }),
            ..Default::default()
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("response serialises");
        s.push('\n');
        s
    }

    pub fn from_line(line: &str) -> Result<Self> {
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Protocol(format!("malformed response: {e}")))
    }

    /// Checks a fit_predict response against its request.
    pub fn validate_for(&self, req: &Request) -> Result<()> {
        if self.id != req.id {
            return Err(Error::Protocol(format!("response id {} for request {}", self.id, req.id)));
        }
        match req.op {
            Op::Ping => {
                if self.pong != Some(true) {
                    return Err(Error::Protocol("ping without pong".into()));
                }
                return Ok(());
            }
            Op::Shutdown => return Ok(()),
            Op::FitPredict => {}
        }
        match (&self.mean, &self.error) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::Protocol("response needs exactly one of mean and error".into()))
            }
            (None, Some(_)) => return Ok(()),
            (Some(mean), None) => {
                let n = req.test.as_ref().map_or(0, |t| t.x.len());
                if mean.len() != n {
                    return Err(Error::Protocol(format!("{} means for {n} test rows", mean.len())));
                }
                if let Some(q) = &self.quantiles {
                    let mut levels: Vec<(f64, &Vec<f64>)> = Vec::new();
                    for (k, v) in q {
                        let p: f64 = k.parse().map_err(|_| Error::Protocol(format!("bad quantile key `{k}`")))?;
                        if v.len() != n {
                            return Err(Error::Protocol(format!("quantile {k} has {} values", v.len())));
                        }
                        levels.push((p, v));
                    }
                    levels.sort_by(|a, b| a.0.total_cmp(&b.0));
                    for w in levels.windows(2) {
                        if w[0].1.iter().zip(w[1].1).any(|(a, b)| a > b) {
                            return Err(Error::Protocol(format!("quantiles {} and {} cross", w[0].0, w[1].0)));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ping_is_compact() {
        let pong = Response {
            id: 7,
            pong: Some(true),
            ..Default::default()
        };
        assert_eq!(pong.to_line(), "{\"id\":7,\"pong\":true}\n");
        assert_eq!(Request::ping(3).to_line(), "{\"id\":3,\"op\":\"ping\"}\n");
    }

    #[test]
    fn nan_and_precision_survive() {
        let r = Response {
            id: 1,
            mean: Some(vec![f64::NAN, 0.1 + 0.2, -1e-300, 5.0]),
            ..Default::default()
        };
        let line = r.to_line();
        assert!(line.contains("\"NaN\""));
        let back = Response::from_line(&line).unwrap();
        let (a, b) = (r.mean.unwrap(), back.mean.unwrap());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
