//! Campaign driver: configuration, the fuzz loop, corpus persistence, the
//! active-node metric, shrinking, sweeps and the external adapter client.

pub mod adapter;
mod active;
mod campaign;
mod config;
pub mod corpus;
mod shrink;
mod sweep;

pub use active::{count_active_nodes, runs_cleanly};
pub use adapter::{AdapterClient, AdapterError, AdapterReply, AdapterSpec, Capabilities};
pub use campaign::{run_campaign, run_campaign_with_targets, write_report, CampaignReport, PPoint, PlannedCase};
pub use config::{CampaignConfig, ConfigError, NodeNumRange};
pub use corpus::{load_case, CaseRecord, Corpus, CorpusError};
pub use shrink::{shrink, NotReproducible, Reproducer, ShrinkOutcome};
pub use sweep::{sweep, SweepGrid, SweepPoint, SweepReport};

/// Process exit codes of the command-line driver.
pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_BUGS: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        EXIT_CONFIG
    }
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seed for (`index`, `stream`) under `master`.
pub fn derive_seed(master: u64, index: u64, stream: u64) -> u64 {
    mix(mix(mix(master) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15)) ^ stream)
}
