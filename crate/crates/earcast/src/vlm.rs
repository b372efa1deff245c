//! Client for an external vision-language embedding service.
//!
//! Wire contract (any backend can implement it):
//!
//! ```text
//! POST /embed
//! request  {"prompt": str, "image_b64": str}      image is PNG, base64
//! response {"embedding": [f32; 4096], "model": str}
//! ```
//!
//! Transport failures (connection refused, resets, timeouts) are retried
//! with exponential backoff; contract violations (non-200 status, malformed
//! JSON, wrong embedding dimension) are not.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::embed::{DeviceEmbedding, EmbeddingSource, EMBEDDING_DIM};
use crate::error::EmbedError;
use crate::graph::FrcLineGraph;

/// Marker that shows where the rendered graph enters the prompt.
pub const IMAGE_PLACEHOLDER: &str = "<image>";

/// Marker replaced with the device name when the prompt is rendered.
pub const NAME_PLACEHOLDER: &str = "{name}";

/// Instruction text sent along with the line graph.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub text: String,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self, EmbedError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(EmbedError::BadPrompt("template is empty".into()));
        }
        if !text.contains(IMAGE_PLACEHOLDER) {
            return Err(EmbedError::BadPrompt(format!(
                "template must contain the image placeholder {IMAGE_PLACEHOLDER}"
            )));
        }
        Ok(Self { text })
    }

    /// The default analysis instruction.
    pub fn default_frc() -> Self {
        Self::new(format!(
            "{IMAGE_PLACEHOLDER}\nAnalyze this frequency response graph for device \
             {NAME_PLACEHOLDER}. The orange line is the Harman target. Describe bass, \
             midrange and treble deviations."
        ))
        .expect("default template is valid")
    }

    pub fn render(&self, device_name: &str) -> String {
        self.text.replace(NAME_PLACEHOLDER, device_name)
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    prompt: &'a str,
    image_b64: String,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f32>,
    #[allow(dead_code)]
    model: String,
}

/// HTTP client for the embedding service.
pub struct VlmClient {
    pub endpoint: String,
    pub max_retries: u32,
    pub backoff: Duration,
    agent: ureq::Agent,
}

impl VlmClient {
    /// `endpoint` is the full URL of the `/embed` route.
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self::with_retries(endpoint, 3, Duration::from_millis(250))
    }

    pub fn with_retries(
        endpoint: impl Into<String>,
        max_retries: u32,
        backoff: Duration,
    ) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            max_retries,
            backoff,
            agent,
        }
    }

    /// POST the rendered prompt and graph; wrap the response vector as a
    /// [`DeviceEmbedding`].
    pub fn extract_embedding(
        &self,
        graph: &FrcLineGraph,
        prompt: &PromptTemplate,
        device_name: &str,
        pool_index: u32,
    ) -> Result<DeviceEmbedding, EmbedError> {
        graph
            .validate()
            .map_err(|e| EmbedError::BadPrompt(format!("invalid graph: {e}")))?;
        let body = EmbedRequest {
            prompt: &prompt.render(device_name),
            image_b64: base64_encode(&graph.image_bytes),
        };

        let mut attempts = 0u32;
        let response_text = loop {
            attempts += 1;
            match self.post_once(&body) {
                Ok(text) => break text,
                Err(PostError::Contract(msg)) => {
                    return Err(EmbedError::Contract {
                        endpoint: self.endpoint.clone(),
                        msg,
                    })
                }
                Err(PostError::Transport(msg)) => {
                    if attempts > self.max_retries {
                        return Err(EmbedError::Transport {
                            endpoint: self.endpoint.clone(),
                            attempts,
                            msg,
                        });
                    }
                    std::thread::sleep(self.backoff * 2u32.pow(attempts - 1));
                }
            }
        };

        let parsed: EmbedResponse = serde_json::from_str(&response_text).map_err(|e| {
            EmbedError::Contract {
                endpoint: self.endpoint.clone(),
                msg: format!("response is not the expected JSON shape: {e}"),
            }
        })?;
        if parsed.embedding.len() != EMBEDDING_DIM {
            return Err(EmbedError::Contract {
                endpoint: self.endpoint.clone(),
                msg: format!(
                    "embedding has {} values, expected {EMBEDDING_DIM}",
                    parsed.embedding.len()
                ),
            });
        }
        let out = DeviceEmbedding {
            vector: parsed.embedding,
            device_name: device_name.to_string(),
            source: EmbeddingSource::VlmService,
            pool_index,
        };
        out.validate()?;
        Ok(out)
    }

    fn post_once(&self, body: &EmbedRequest) -> Result<String, PostError> {
        let result = self
            .agent
            .post(&self.endpoint)
            .send_json(body)
            .map_err(|e| match e {
                ureq::Error::StatusCode(code) => {
                    PostError::Contract(format!("service answered HTTP {code}, expected 200"))
                }
                other => PostError::Transport(other.to_string()),
            })?;
        result
            .into_body()
            .read_to_string()
            .map_err(|e| PostError::Transport(format!("reading body: {e}")))
    }
}

enum PostError {
    Transport(String),
    Contract(String),
}

fn base64_encode(data: &[u8]) -> String {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.encode(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_requires_image_placeholder() {
        assert!(PromptTemplate::new("describe the device {name}").is_err());
        assert!(PromptTemplate::new("").is_err());
        let p = PromptTemplate::default_frc();
        assert!(p.text.contains(IMAGE_PLACEHOLDER));
        let rendered = p.render("dev3");
        assert!(rendered.contains("dev3"));
        assert!(!rendered.contains(NAME_PLACEHOLDER));
    }

    #[test]
    fn base64_matches_known_vectors() {
        assert_eq!(base64_encode(b""), "");
        assert_eq!(base64_encode(b"f"), "Zg==");
        assert_eq!(base64_encode(b"fo"), "Zm8=");
        assert_eq!(base64_encode(b"foo"), "Zm9v");
        assert_eq!(base64_encode(b"foobar"), "Zm9vYmFy");
    }
}
