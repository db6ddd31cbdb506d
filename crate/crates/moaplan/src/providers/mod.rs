//! Model providers: live HTTP, recorded-transcript replay, and a recorder
//! that wraps a live provider.

pub mod live;
pub mod record;
pub mod replay;
pub mod scripted;
pub mod transcript;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use moaplan_core::provider::{ChatProvider, EmbeddingProvider, VlmProvider};

pub use live::{LiveClient, LiveConfig};
pub use record::Recorder;
pub use replay::Replay;
pub use scripted::{ChatScript, ScriptedChat};
pub use transcript::{request_hash, Kind, TranscriptError, TranscriptRecord};

pub type SharedChat = Arc<dyn ChatProvider + Send + Sync>;
pub type SharedEmbed = Arc<dyn EmbeddingProvider + Send + Sync>;
pub type SharedVlm = Arc<dyn VlmProvider + Send + Sync>;

/// Value of `--provider`: `live`, `replay:<path>` or `record:<path>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    Live,
    Replay(PathBuf),
    Record(PathBuf),
}

impl FromStr for ProviderSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "live" => Ok(ProviderSpec::Live),
            Some(("replay", p)) if !p.is_empty() => Ok(ProviderSpec::Replay(p.into())),
            Some(("record", p)) if !p.is_empty() => Ok(ProviderSpec::Record(p.into())),
            _ => Err(format!("expected live, replay:<path> or record:<path>, got {s:?}")),
        }
    }
}

impl fmt::Display for ProviderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProviderSpec::Live => f.write_str("live"),
            ProviderSpec::Replay(p) => write!(f, "replay:{}", p.display()),
            ProviderSpec::Record(p) => write!(f, "record:{}", p.display()),
        }
    }
}

/// The three model services behind one `--provider` choice.
#[derive(Clone)]
pub struct ProviderSet {
    pub chat: SharedChat,
    pub embed: SharedEmbed,
    pub vlm: SharedVlm,
}

impl ProviderSet {
    fn from_one<P: ChatProvider + EmbeddingProvider + VlmProvider + Send + Sync + 'static>(p: P) -> Self {
        let p = Arc::new(p);
        ProviderSet {
            chat: p.clone(),
            embed: p.clone(),
            vlm: p,
        }
    }

    pub fn open(spec: &ProviderSpec) -> anyhow::Result<Self> {
        Ok(match spec {
            ProviderSpec::Live => Self::from_one(LiveClient::new(LiveConfig::from_env()?)),
            ProviderSpec::Replay(path) => Self::from_one(Replay::open(path)?),
            ProviderSpec::Record(path) => {
                Self::from_one(Recorder::open(LiveClient::new(LiveConfig::from_env()?), path)?)
            }
        })
    }
}
