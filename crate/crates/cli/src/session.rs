//! Session management against a running task service.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use perceptkit_client::Client;
use perceptkit_protocol::{CreateSession, ExportBundle, TaskSpec};

use crate::commands::emit;
use crate::SessionCommand;

/// Writes the bundle, the raw event log and the module-format log.
async fn write_bundle(client: &Client, id: &str, bundle: &ExportBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("export.json"), serde_json::to_string_pretty(bundle)? + "\n")?;
    fs::write(dir.join("events.ndjson"), client.events_ndjson(id).await?)?;
    let name = match bundle.session.task_kind.as_str() {
        "staircase" => "trials.ndjson",
        "hype_inf" => "judgments.ndjson",
        _ => "responses.ndjson",
    };
    fs::write(dir.join(name), &bundle.ndjson)?;
    tracing::info!(dir = %dir.display(), "wrote session export");
    Ok(())
}

pub async fn run(cmd: SessionCommand, client: &Client) -> Result<()> {
    match cmd {
        SessionCommand::Create { spec, participant } => {
            let text = fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let spec: TaskSpec = serde_json::from_str(&text).context("parsing task spec")?;
            let session = client
                .create_session(&CreateSession {
                    participant_id: participant,
                    spec,
                })
                .await?;
            emit(&session)
        }
        SessionCommand::List => emit(&client.list_sessions().await?),
        SessionCommand::Show { id } => emit(&client.get_task_spec(&id).await?),
        SessionCommand::Append { id, events } => {
            let text = fs::read_to_string(&events).with_context(|| format!("reading {}", events.display()))?;
            emit(&client.append_ndjson(&id, text).await?)
        }
        SessionCommand::Finalize { id, out_dir } => {
            let bundle = client.finalize(&id).await?;
            write_bundle(client, &id, &bundle, &out_dir).await?;
            emit(&bundle.session)
        }
        SessionCommand::Export { id, out_dir } => {
            let bundle = client.export(&id).await?;
            write_bundle(client, &id, &bundle, &out_dir).await?;
            emit(&bundle.session)
        }
    }
}
