#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use legis::app::{App, AppConfig};
use legis::pipeline::{Engine, SharedProvider};
use legis_core::agent::ScriptedProvider;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn congress_dir(c: u32) -> PathBuf {
    fixtures().join(c.to_string())
}

/// Replay app over the given Congresses; state persists in `data` when given.
pub fn replay(congresses: &[u32], data: Option<&Path>) -> App {
    let config = AppConfig {
        data_dir: data.map(Path::to_path_buf),
        ..AppConfig::default()
    };
    let dirs: Vec<PathBuf> = congresses.iter().map(|c| congress_dir(*c)).collect();
    App::replay(config, &dirs).expect("fixtures load")
}

/// An engine over `app`'s stores driven by one scripted provider.
pub fn scripted_engine(app: &App, script: &str) -> Engine {
    let provider = ScriptedProvider::from_jsonl(script).expect("script parses");
    let mut e = Engine::new(
        app.registry.clone(),
        Arc::new(SharedProvider(Arc::new(provider))),
        app.trace.clone(),
        app.runs.clone(),
    );
    e.prompts = app.engine.prompts.clone();
    e
}

pub fn agent_script(c: u32) -> String {
    std::fs::read_to_string(congress_dir(c).join("agent.jsonl")).unwrap()
}
