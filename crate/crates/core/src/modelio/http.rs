use std::time::Duration;

use ureq::Agent;

use super::ModelError;

pub(super) struct HttpBackend {
    agent: Agent,
    url: String,
}

impl HttpBackend {
    pub(super) fn new(base: &str, timeout: Duration) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let base = base.trim_end_matches('/');
        let url = if base.ends_with("/invoke") { base.to_string() } else { format!("{base}/invoke") };
        Self { agent, url }
    }

    pub(super) fn call(&self, body: String) -> Result<String, ModelError> {
        let mut response = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => ModelError::Timeout,
                other => ModelError::Transport(format!("{}: {other}", self.url)),
            })?;
        response.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => ModelError::Timeout,
            other => ModelError::Transport(format!("{}: {other}", self.url)),
        })
    }
}
