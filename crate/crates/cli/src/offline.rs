use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use capfuse_core::ingest::{ReplayError, SystemClock};
use capfuse_core::{replay_session, FusionConfig};

use crate::CliError;

pub fn replay(input: &Path, out: &Path, speed: f64, config: FusionConfig) -> Result<(), CliError> {
    let file = File::open(input).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", input.display())))?;
    let outcome = replay_session(BufReader::new(file), speed, SystemClock::new(), config, |_| {}).map_err(|e| match e {
        ReplayError::MalformedJson { .. } | ReplayError::BadSpeed(_) => {
            CliError::Usage(format!("{}: {e}", input.display()))
        }
        ReplayError::FileUnreadable(_) => CliError::Failed(format!("{}: {e}", input.display())),
    })?;
    fs::write(out, &outcome.transcript)
        .map_err(|e| CliError::Failed(format!("cannot write {}: {e}", out.display())))?;
    tracing::info!(
        segments = outcome.report.segments_final,
        transcript = %out.display(),
        "replay finished"
    );
    println!("{}", outcome.report.to_json_pretty());
    Ok(())
}

pub async fn fetch_metrics(host: &str, port: u16) -> Result<(), CliError> {
    let url = format!("http://{host}:{port}/metrics");
    let unreachable = |e: reqwest::Error| CliError::Unreachable(format!("{url}: {e}"));
    let response = reqwest::get(&url).await.map_err(unreachable)?;
    if !response.status().is_success() {
        return Err(CliError::Unreachable(format!("{url}: HTTP {}", response.status())));
    }
    let body = response.text().await.map_err(unreachable)?;
    let report: serde_json::Value =
        serde_json::from_str(&body).map_err(|e| CliError::Failed(format!("{url}: bad report: {e}")))?;
    println!("{}", serde_json::to_string_pretty(&report).expect("value serializes"));
    Ok(())
}
