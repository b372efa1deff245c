//! Exercises the embedding-service wire contract against a scripted local
//! HTTP server: happy path, contract violations and transport retries.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use earcast::embed::EmbeddingSource;
use earcast::error::EmbedError;
use earcast::frc::FrequencyResponse;
use earcast::graph::{render_line_graph, GraphStyle};
use earcast::vlm::{PromptTemplate, VlmClient};

enum MockStep {
    /// Accept the connection and slam it shut: a transport failure.
    Drop,
    /// Read the request and answer with the given status and JSON body.
    Respond { status: u16, body: String },
}

struct Mock {
    url: String,
    requests: Arc<AtomicUsize>,
    captured: Arc<std::sync::Mutex<Vec<String>>>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl Mock {
    fn spawn(steps: Vec<MockStep>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let requests = Arc::new(AtomicUsize::new(0));
        let captured = Arc::new(std::sync::Mutex::new(Vec::new()));
        let (rq, cp) = (requests.clone(), captured.clone());
        let handle = std::thread::spawn(move || {
            for step in steps {
                let (mut stream, _) = match listener.accept() {
                    Ok(x) => x,
                    Err(_) => return,
                };
                rq.fetch_add(1, Ordering::SeqCst);
                match step {
                    MockStep::Drop => {
                        // read a little so the client gets past connect, then reset
                        let mut buf = [0u8; 256];
                        let _ = stream.read(&mut buf);
                        drop(stream);
                    }
                    MockStep::Respond { status, body } => {
                        let request = read_http_request(&mut stream);
                        cp.lock().unwrap().push(request);
                        let response = format!(
                            "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                            body.len()
                        );
                        let _ = stream.write_all(response.as_bytes());
                    }
                }
            }
        });
        Mock {
            url: format!("http://{addr}/embed"),
            requests,
            captured,
            handle: Some(handle),
        }
    }

    fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for Mock {
    fn drop(&mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn read_http_request(stream: &mut std::net::TcpStream) -> String {
    let mut data = Vec::new();
    let mut buf = [0u8; 4096];
    loop {
        let n = stream.read(&mut buf).unwrap_or(0);
        if n == 0 {
            break;
        }
        data.extend_from_slice(&buf[..n]);
        if let Some(header_end) = find_subslice(&data, b"\r\n\r\n") {
            let headers = String::from_utf8_lossy(&data[..header_end]).to_lowercase();
            let content_length = headers
                .lines()
                .find_map(|l| l.strip_prefix("content-length:"))
                .and_then(|v| v.trim().parse::<usize>().ok())
                .unwrap_or(0);
            let have = data.len() - header_end - 4;
            if have >= content_length {
                break;
            }
        }
    }
    String::from_utf8_lossy(&data).into_owned()
}

fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

fn tiny_graph() -> earcast::graph::FrcLineGraph {
    let fr = FrequencyResponse::constant(3.0, "dev0");
    let style = GraphStyle {
        width_px: 160,
        height_px: 100,
        ..GraphStyle::default()
    };
    render_line_graph(&[fr], None, &style).unwrap()
}

fn embedding_json(len: usize) -> String {
    // zeros apart from a single trailing one, so the all-zero check passes
    let mut vals = vec!["0.0"; len];
    if len > 0 {
        vals[len - 1] = "1.0";
    }
    format!(
        "{{\"embedding\":[{}],\"model\":\"mock-1\"}}",
        vals.join(",")
    )
}

fn client(url: &str) -> VlmClient {
    VlmClient::with_retries(url, 3, Duration::from_millis(2))
}

#[test]
fn echo_contract_round_trip() {
    let mock = Mock::spawn(vec![MockStep::Respond {
        status: 200,
        body: embedding_json(4096),
    }]);
    let graph = tiny_graph();
    let prompt = PromptTemplate::default_frc();
    let embedding = client(&mock.url)
        .extract_embedding(&graph, &prompt, "dev0", 7)
        .unwrap();
    assert_eq!(embedding.vector.len(), 4096);
    assert!(embedding.vector[..4095].iter().all(|&v| v == 0.0));
    assert_eq!(embedding.vector[4095], 1.0);
    assert_eq!(embedding.source, EmbeddingSource::VlmService);
    assert_eq!(embedding.pool_index, 7);
    assert_eq!(mock.request_count(), 1);

    // the request carried the rendered prompt and a decodable PNG
    let captured = mock.captured.lock().unwrap();
    let body_start = captured[0].find("\r\n\r\n").unwrap() + 4;
    let body: serde_json::Value = serde_json::from_str(&captured[0][body_start..]).unwrap();
    let prompt_text = body["prompt"].as_str().unwrap();
    assert!(prompt_text.contains("dev0"));
    assert!(prompt_text.contains("<image>"));
    let png_b64 = body["image_b64"].as_str().unwrap();
    // PNG magic bytes 0x89 'P' 'N' 'G' encode to "iVBORw" in base64
    assert!(png_b64.starts_with("iVBORw"), "not a base64 PNG: {}", &png_b64[..12]);
}

#[test]
fn wrong_dimension_is_contract_violation() {
    let mock = Mock::spawn(vec![MockStep::Respond {
        status: 200,
        body: embedding_json(4095),
    }]);
    let err = client(&mock.url)
        .extract_embedding(&tiny_graph(), &PromptTemplate::default_frc(), "dev0", 0)
        .unwrap_err();
    match err {
        EmbedError::Contract { msg, .. } => {
            assert!(msg.contains("4096"), "message must name the expected dim: {msg}");
            assert!(msg.contains("4095"), "message should name the actual dim: {msg}");
        }
        other => panic!("expected contract violation, got {other:?}"),
    }
    assert_eq!(mock.request_count(), 1, "contract violations must not be retried");
}

#[test]
fn transport_failures_retry_then_succeed() {
    let mock = Mock::spawn(vec![
        MockStep::Drop,
        MockStep::Drop,
        MockStep::Respond {
            status: 200,
            body: embedding_json(4096),
        },
    ]);
    let embedding = client(&mock.url)
        .extract_embedding(&tiny_graph(), &PromptTemplate::default_frc(), "dev1", 3)
        .unwrap();
    assert_eq!(embedding.vector.len(), 4096);
    assert_eq!(mock.request_count(), 3, "two failures + one success = 3 requests");
}

#[test]
fn non_200_status_is_contract_violation_without_retry() {
    let mock = Mock::spawn(vec![MockStep::Respond {
        status: 503,
        body: "{\"error\":\"overloaded\"}".into(),
    }]);
    let err = client(&mock.url)
        .extract_embedding(&tiny_graph(), &PromptTemplate::default_frc(), "dev0", 0)
        .unwrap_err();
    assert!(matches!(err, EmbedError::Contract { .. }), "got {err:?}");
    assert_eq!(mock.request_count(), 1);
}

#[test]
fn exhausted_retries_surface_transport_error() {
    let mock = Mock::spawn(vec![
        MockStep::Drop,
        MockStep::Drop,
        MockStep::Drop,
        MockStep::Drop,
    ]);
    let err = client(&mock.url)
        .extract_embedding(&tiny_graph(), &PromptTemplate::default_frc(), "dev0", 0)
        .unwrap_err();
    match err {
        EmbedError::Transport { attempts, .. } => assert_eq!(attempts, 4),
        other => panic!("expected transport error, got {other:?}"),
    }
    assert_eq!(mock.request_count(), 4);
}

#[test]
fn malformed_json_is_contract_violation() {
    let mock = Mock::spawn(vec![MockStep::Respond {
        status: 200,
        body: "{\"embedding\": \"not an array\"}".into(),
    }]);
    let err = client(&mock.url)
        .extract_embedding(&tiny_graph(), &PromptTemplate::default_frc(), "dev0", 0)
        .unwrap_err();
    assert!(matches!(err, EmbedError::Contract { .. }), "got {err:?}");
}
