use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::time::Instant;

/// Envelope written for every command: the command echo, a digest of the
/// inputs, the per-command payload, the artifact version, and wall-clock
/// timings. Identical inputs and seed produce an identical `results`
/// payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub inputs_digest: String,
    pub seed: u64,
    pub results: serde_json::Value,
    pub versions: Versions,
    pub timing: Timing,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versions {
    pub artifact: String,
}

impl Default for Versions {
    fn default() -> Self {
        Versions {
            artifact: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub load_ms: f64,
    pub compute_ms: f64,
    pub total_ms: f64,
}

/// SHA-256 over the config bytes followed by the data bytes.
pub fn inputs_digest(config: &[u8], data: Option<&[u8]>) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config);
    if let Some(d) = data {
        hasher.update(d);
    }
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Stopwatch splitting time into a load phase and a compute phase.
pub struct Phases {
    start: Instant,
    load_done: Option<Instant>,
}

impl Phases {
    pub fn start() -> Self {
        Phases {
            start: Instant::now(),
            load_done: None,
        }
    }

    pub fn mark_loaded(&mut self) {
        self.load_done = Some(Instant::now());
    }

    pub fn finish(&self) -> Timing {
        let end = Instant::now();
        let load_end = self.load_done.unwrap_or(end);
        Timing {
            load_ms: load_end.duration_since(self.start).as_secs_f64() * 1e3,
            compute_ms: end.duration_since(load_end).as_secs_f64() * 1e3,
            total_ms: end.duration_since(self.start).as_secs_f64() * 1e3,
        }
    }
}
