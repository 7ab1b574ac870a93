//! Fit-predict wire protocol to external model backends.

mod mock;
mod process;
pub mod protocol;

use std::collections::BTreeMap;
use std::sync::{Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use mock::{empirical_quantile, handle_line, mock_fit_predict, serve_loop, MOCK_K};
pub use process::{LaunchSpec, ProcessBackend, DEFAULT_TIMEOUT_S};
pub use protocol::{quantile_key, ErrorBody, Op, Request, RequestOptions, Response, TestBlock, TrainBlock};

/// A fit-predict service. Calls on one handle are serialised by `&mut`.
pub trait Backend: Send {
    fn name(&self) -> &str;

    fn next_id(&mut self) -> u64;

    /// Sends all requests, then collects responses matched by id, returned
    /// in request order.
    fn call_many(&mut self, reqs: &[Request]) -> Result<Vec<Response>>;

    fn call(&mut self, req: &Request) -> Result<Response> {
        Ok(self.call_many(std::slice::from_ref(req))?.pop().expect("one response"))
    }

    fn ping(&mut self) -> Result<()> {
        let id = self.next_id();
        self.call(&Request::ping(id)).map(|_| ())
    }
}

/// In-process mock backend.
#[derive(Default)]
pub struct MockBackend {
    next_id: u64,
    pub calls: usize,
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn next_id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }

    fn call_many(&mut self, reqs: &[Request]) -> Result<Vec<Response>> {
        Ok(reqs
            .iter()
            .map(|r| {
                handle_line(&serde_json::to_string(r).expect("serialises"), &mut |req| {
                    self.calls += 1;
                    mock_fit_predict(req)
                })
                .0
            })
            .collect())
    }
}

/// Mean and optional quantile predictions of one fit_predict call.
#[derive(Clone, Debug, PartialEq)]
pub struct BackendPrediction {
    pub mean: Vec<f64>,
    /// (probability, per-row values), ascending in probability.
    pub quantiles: Vec<(f64, Vec<f64>)>,
}

/// Runs one fit_predict round trip and unwraps error responses.
pub fn fit_predict(backend: &mut dyn Backend, train: TrainBlock, test: TestBlock, options: RequestOptions) -> Result<BackendPrediction> {
    let id = backend.next_id();
    let req = Request::fit_predict(id, train, test, options);
    req.validate()?;
    let resp = backend.call(&req)?;
    into_prediction(resp)
}

pub fn into_prediction(resp: Response) -> Result<BackendPrediction> {
    if let Some(e) = resp.error {
        return Err(Error::Backend {
            code: e.code,
            message: e.message,
        });
    }
    let mean = resp.mean.ok_or_else(|| Error::Protocol("response without mean".into()))?;
    let mut quantiles: Vec<(f64, Vec<f64>)> = resp
        .quantiles
        .unwrap_or_default()
        .into_iter()
        .map(|(k, v)| Ok((k.parse::<f64>().map_err(|_| Error::Protocol(format!("bad quantile key `{k}`")))?, v)))
        .collect::<Result<_>>()?;
    quantiles.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(BackendPrediction { mean, quantiles })
}

/// Backend selection as written in a run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    Mock,
    Process(LaunchSpec),
}

type BackendFactory = fn(&BackendSpec) -> Result<Box<dyn Backend>>;

/// Name-keyed backend constructors.
pub struct BackendRegistry {
    factories: BTreeMap<&'static str, BackendFactory>,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        let mut r = BackendRegistry {
            factories: BTreeMap::new(),
        };
        r.register("mock", |_| Ok(Box::new(MockBackend::default())));
        r.register("process", |spec| match spec {
            BackendSpec::Process(l) => Ok(Box::new(ProcessBackend::new(l.clone()))),
            _ => Err(Error::Parameter("process backend needs a launch spec".into())),
        });
        r
    }
}

impl BackendRegistry {
    pub fn register(&mut self, name: &'static str, f: BackendFactory) {
        self.factories.insert(name, f);
    }

    pub fn build(&self, spec: &BackendSpec) -> Result<Box<dyn Backend>> {
        let name = match spec {
            BackendSpec::Mock => "mock",
            BackendSpec::Process(_) => "process",
        };
        let f = self.factories.get(name).ok_or_else(|| Error::Unknown {
            kind: "backend",
            name: name.to_string(),
        })?;
        f(spec)
    }
}

/// Fixed set of backend handles shared by concurrent folds.
pub struct BackendPool {
    slots: Vec<Mutex<Box<dyn Backend>>>,
}

impl BackendPool {
    pub fn new(spec: &BackendSpec, size: usize) -> Result<Self> {
        let reg = BackendRegistry::default();
        let slots = (0..size.max(1)).map(|_| reg.build(spec).map(Mutex::new)).collect::<Result<_>>()?;
        Ok(BackendPool { slots })
    }

    pub fn from_backends(backends: Vec<Box<dyn Backend>>) -> Self {
        BackendPool {
            slots: backends.into_iter().map(Mutex::new).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// A free handle if any, else waits on the one at `hint`.
    pub fn acquire(&self, hint: usize) -> MutexGuard<'_, Box<dyn Backend>> {
        for s in &self.slots {
            if let Ok(g) = s.try_lock() {
                return g;
            }
        }
        self.slots[hint % self.slots.len()].lock().unwrap_or_else(|p| p.into_inner())
    }
}
