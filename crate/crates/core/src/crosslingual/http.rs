//! Remote translation service adapter.
//!
//! Speaks the common self-hosted translation API shape: POST a JSON body
//! `{"q", "source", "target", "format"}` (plus `"api_key"` when
//! configured) and read `{"translatedText"}` back. HTTP status codes map
//! onto the typed failure taxonomy: 429 is a quota failure, 5xx and
//! network-level errors are transient, any other non-success is
//! permanent.

use std::time::Duration;

use crate::error::{Error, Result};

use super::{TranslationClient, TranslationFailure};

const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Blocking HTTP client for a translation endpoint.
pub struct HttpTranslationClient {
    endpoint: String,
    api_key: Option<String>,
    timeout: Duration,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpTranslationClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // The api_key is deliberately not printed.
        f.debug_struct("HttpTranslationClient")
            .field("endpoint", &self.endpoint)
            .field("timeout", &self.timeout)
            .finish()
    }
}

#[derive(serde::Serialize)]
struct TranslateRequest<'a> {
    q: &'a str,
    source: &'a str,
    target: &'a str,
    format: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    api_key: Option<&'a str>,
}

#[derive(serde::Deserialize)]
struct TranslateResponse {
    #[serde(rename = "translatedText")]
    translated_text: String,
}

impl HttpTranslationClient {
    pub fn new(endpoint: &str) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| Error::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(Self {
            endpoint: endpoint.to_string(),
            api_key: None,
            timeout: DEFAULT_TIMEOUT,
            client,
        })
    }

    pub fn with_api_key(mut self, api_key: &str) -> Self {
        self.api_key = Some(api_key.to_string());
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

impl TranslationClient for HttpTranslationClient {
    fn translate(
        &self,
        text: &str,
        source_language: &str,
        target_language: &str,
    ) -> std::result::Result<String, TranslationFailure> {
        let body = TranslateRequest {
            q: text,
            source: source_language,
            target: target_language,
            format: "text",
            api_key: self.api_key.as_deref(),
        };
        let response = self
            .client
            .post(&self.endpoint)
            .timeout(self.timeout)
            .json(&body)
            .send()
            .map_err(|e| TranslationFailure::Transient(format!("request failed: {e}")))?;
        let status = response.status();
        if status.as_u16() == 429 {
            return Err(TranslationFailure::Quota(format!(
                "endpoint returned {status}"
            )));
        }
        if status.is_server_error() {
            return Err(TranslationFailure::Transient(format!(
                "endpoint returned {status}"
            )));
        }
        if !status.is_success() {
            return Err(TranslationFailure::Permanent(format!(
                "endpoint returned {status}"
            )));
        }
        let parsed: TranslateResponse = response.json().map_err(|e| {
            TranslationFailure::Permanent(format!("malformed response body: {e}"))
        })?;
        Ok(parsed.translated_text)
    }

    fn identifier(&self) -> String {
        format!("http({})", self.endpoint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serves exactly one canned HTTP response on a fresh local port and
    /// hands back the raw request it received.
    fn serve_once(
        status_line: &'static str,
        body: &'static str,
        delay: Duration,
    ) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let endpoint = format!("http://{}/translate", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut request = String::new();
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(rest) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    content_length = rest.trim().parse().unwrap();
                }
                let done = line == "\r\n";
                request.push_str(&line);
                if done {
                    break;
                }
            }
            let mut body_bytes = vec![0u8; content_length];
            reader.read_exact(&mut body_bytes).unwrap();
            request.push_str(std::str::from_utf8(&body_bytes).unwrap());
            std::thread::sleep(delay);
            let response = format!(
                "HTTP/1.1 {status_line}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let mut stream = reader.into_inner();
            // The peer may have timed out and hung up already.
            let _ = stream.write_all(response.as_bytes());
            request
        });
        (endpoint, handle)
    }

    #[test]
    fn success_returns_translated_text_and_sends_expected_fields() {
        let (endpoint, server) = serve_once(
            "200 OK",
            r#"{"translatedText":"the cat sleeps"}"#,
            Duration::ZERO,
        );
        let client = HttpTranslationClient::new(&endpoint)
            .unwrap()
            .with_api_key("k-123");
        let out = client.translate("die kat slaap", "afr", "eng").unwrap();
        assert_eq!(out, "the cat sleeps");
        let request = server.join().unwrap();
        assert!(request.starts_with("POST /translate HTTP/1.1\r\n"));
        assert!(request.contains(r#""q":"die kat slaap""#));
        assert!(request.contains(r#""source":"afr""#));
        assert!(request.contains(r#""target":"eng""#));
        assert!(request.contains(r#""api_key":"k-123""#));
    }

    #[test]
    fn api_key_is_omitted_when_not_configured() {
        let (endpoint, server) =
            serve_once("200 OK", r#"{"translatedText":"hi"}"#, Duration::ZERO);
        let client = HttpTranslationClient::new(&endpoint).unwrap();
        client.translate("hallo", "deu", "eng").unwrap();
        let request = server.join().unwrap();
        assert!(!request.contains("api_key"));
    }

    #[test]
    fn status_429_is_a_quota_failure() {
        let (endpoint, server) = serve_once(
            "429 Too Many Requests",
            r#"{"error":"slow down"}"#,
            Duration::ZERO,
        );
        let client = HttpTranslationClient::new(&endpoint).unwrap();
        let err = client.translate("hola", "spa", "eng").unwrap_err();
        assert!(matches!(err, TranslationFailure::Quota(_)));
        server.join().unwrap();
    }

    #[test]
    fn server_errors_are_transient() {
        let (endpoint, server) = serve_once(
            "500 Internal Server Error",
            r#"{"error":"boom"}"#,
            Duration::ZERO,
        );
        let client = HttpTranslationClient::new(&endpoint).unwrap();
        let err = client.translate("hola", "spa", "eng").unwrap_err();
        assert!(matches!(err, TranslationFailure::Transient(_)));
        server.join().unwrap();
    }

    #[test]
    fn client_errors_are_permanent() {
        let (endpoint, server) = serve_once(
            "400 Bad Request",
            r#"{"error":"unsupported language"}"#,
            Duration::ZERO,
        );
        let client = HttpTranslationClient::new(&endpoint).unwrap();
        let err = client.translate("hola", "spa", "zzz").unwrap_err();
        assert!(matches!(err, TranslationFailure::Permanent(_)));
        server.join().unwrap();
    }

    #[test]
    fn malformed_success_body_is_permanent() {
        let (endpoint, server) = serve_once("200 OK", "not json at all", Duration::ZERO);
        let client = HttpTranslationClient::new(&endpoint).unwrap();
        let err = client.translate("hola", "spa", "eng").unwrap_err();
        assert!(matches!(err, TranslationFailure::Permanent(_)));
        server.join().unwrap();
    }

    #[test]
    fn timeouts_are_transient() {
        let (endpoint, server) = serve_once(
            "200 OK",
            r#"{"translatedText":"late"}"#,
            Duration::from_millis(400),
        );
        let client = HttpTranslationClient::new(&endpoint)
            .unwrap()
            .with_timeout(Duration::from_millis(50));
        let err = client.translate("hola", "spa", "eng").unwrap_err();
        assert!(matches!(err, TranslationFailure::Transient(_)));
        server.join().unwrap();
    }

    #[test]
    fn connection_refused_is_transient() {
        // Bind then drop to find a port with no listener.
        let port = {
            let listener = TcpListener::bind("127.0.0.1:0").unwrap();
            listener.local_addr().unwrap().port()
        };
        let client =
            HttpTranslationClient::new(&format!("http://127.0.0.1:{port}/translate")).unwrap();
        let err = client.translate("hola", "spa", "eng").unwrap_err();
        assert!(matches!(err, TranslationFailure::Transient(_)));
    }
}
