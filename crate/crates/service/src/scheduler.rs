//! Single writer that generates an issue at every grid instant.

use std::sync::Arc;

use aurora_core::issue::grid_floor;
use chrono::Utc;
use tokio::task::JoinHandle;
use tracing::error;

use crate::issues::IssueStore;
use crate::state::AppState;

/// Generates the issue for the current slot, then one per slot until the
/// task is aborted.
pub fn spawn_scheduler(state: Arc<AppState>) -> JoinHandle<()> {
    tokio::spawn(async move {
        let period = state.issue_config.period_secs;
        let mut slot = grid_floor(Utc::now(), period);
        loop {
            let st = state.clone();
            match tokio::task::spawn_blocking(move || st.generate_issue(slot)).await {
                Ok(Ok(_)) => {}
                Ok(Err(e)) => error!(%slot, error = %e, "issue generation failed"),
                Err(e) => error!(%slot, error = %e, "issue generation panicked"),
            }
            slot = IssueStore::next_slot(slot.max(Utc::now()), period);
            let wait = (slot - Utc::now()).to_std().unwrap_or_default();
            tokio::time::sleep(wait).await;
        }
    })
}
