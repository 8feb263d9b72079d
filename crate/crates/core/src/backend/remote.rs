use std::time::Duration;

use reqwest::blocking::Client;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::protocol::*;
use super::{Backend, Embedding, NliScores};
use crate::error::{Error, Result};

/// Client for a model server speaking the backend protocol.
///
/// Batched calls are split into requests of at most `batch_size` inputs and the responses
/// concatenated in input order.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    client: Client,
    endpoint: String,
    dim: usize,
    batch_size: usize,
}

impl RemoteBackend {
    pub fn new(endpoint: &str, dim: usize, batch_size: usize, timeout: Duration) -> Result<Self> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Backend(format!("cannot build HTTP client: {e}")))?;
        Ok(RemoteBackend {
            client,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            dim,
            batch_size: batch_size.max(1),
        })
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, req: &Req) -> Result<Resp> {
        let url = format!("{}{path}", self.endpoint);
        let resp = self
            .client
            .post(&url)
            .json(req)
            .send()
            .map_err(|e| Error::Backend(format!("POST {url}: {e}")))?;
        let status = resp.status();
        let body = resp
            .bytes()
            .map_err(|e| Error::Backend(format!("POST {url}: {e}")))?;
        if !status.is_success() {
            let msg = serde_json::from_slice::<ErrorResponse>(&body)
                .map(|e| e.error)
                .unwrap_or_else(|_| String::from_utf8_lossy(&body).into_owned());
            return Err(Error::Backend(format!("POST {url}: HTTP {status}: {msg}")));
        }
        serde_json::from_slice(&body)
            .map_err(|e| Error::Backend(format!("POST {url}: malformed response: {e}")))
    }

    fn batched<In, Out>(
        &self,
        inputs: &[In],
        mut call: impl FnMut(&[In]) -> Result<Vec<Out>>,
    ) -> Result<Vec<Out>> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(self.batch_size) {
            let got = call(chunk)?;
            if got.len() != chunk.len() {
                return Err(Error::Backend(format!(
                    "server returned {} results for {} inputs",
                    got.len(),
                    chunk.len()
                )));
            }
            out.extend(got);
        }
        Ok(out)
    }
}

impl Backend for RemoteBackend {
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        self.batched(texts, |chunk| {
            let resp: EmbedResponse = self.post(EMBED_PATH, &EmbedRequest { texts: chunk.to_vec() })?;
            if resp.dim != self.dim {
                return Err(Error::Backend(format!(
                    "server embedding dimension {} differs from configured {}",
                    resp.dim, self.dim
                )));
            }
            resp.vectors
                .into_iter()
                .map(|v| {
                    if v.len() != self.dim {
                        return Err(Error::Backend(format!("vector of length {}", v.len())));
                    }
                    Embedding::unit_or_normalize(v).map_err(|e| Error::Backend(e.to_string()))
                })
                .collect()
        })
    }

    fn nli(&self, pairs: &[(String, String)]) -> Result<Vec<NliScores>> {
        self.batched(pairs, |chunk| {
            let req = NliRequest {
                pairs: chunk
                    .iter()
                    .map(|(p, h)| NliPair { premise: p.clone(), hypothesis: h.clone() })
                    .collect(),
            };
            let resp: NliResponse = self.post(NLI_PATH, &req)?;
            for s in &resp.scores {
                s.validate().map_err(|e| Error::Backend(e.to_string()))?;
            }
            Ok(resp.scores)
        })
    }

    fn plausibility(&self, statements: &[String]) -> Result<Vec<f64>> {
        self.batched(statements, |chunk| {
            let req = PlausibilityRequest { statements: chunk.to_vec() };
            let resp: PlausibilityResponse = self.post(PLAUSIBILITY_PATH, &req)?;
            Ok(resp.scores)
        })
    }

    fn generate(&self, prompt: &str, max_length: usize) -> Result<String> {
        let req = GenerateRequest { prompt: prompt.to_string(), max_length };
        let resp: GenerateResponse = self.post(GENERATE_PATH, &req)?;
        Ok(resp.text)
    }

    fn fingerprint(&self) -> String {
        format!("remote:{}:dim={}", self.endpoint, self.dim)
    }
}
