//! Declarative trial configuration, as read from a flat TOML file or
//! assembled from command-line flags.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversary::{Adversary, AdversaryError, AdversaryKind, AdversarySpec};
use crate::ids::ProcessorId;
use crate::protocol::ProtocolKind;
use crate::sim::{max_crashes, RunLimits, TraceMode, WorldConfig};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: ProtocolKind,
    pub n: usize,
    /// Participants `0..k`; all `n` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Crash budget; `⌈n/2⌉ − 1` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(default = "fifo")]
    pub adversary: AdversaryKind,
    /// Strategy wrapped by the crasher and bubble adversaries.
    #[serde(default = "fifo")]
    pub base: AdversaryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crashes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bubble_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<usize>,
    #[serde(default = "one")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fairness_bound: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_events: Option<u64>,
    /// Leading trials re-run to check that equal seeds give equal traces.
    #[serde(default = "one")]
    pub replays: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
    /// Where failing traces are written; nothing is written when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_dir: Option<PathBuf>,
}

fn fifo() -> AdversaryKind {
    AdversaryKind::Fifo
}

fn one() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ConfigIssue {
    #[error("n must be at least 1")]
    NoProcessors,
    #[error("k={k} must be between 1 and n={n}")]
    Participants { k: usize, n: usize },
    #[error("t={t} exceeds ⌈n/2⌉−1 = {max}")]
    CrashBudget { t: usize, max: usize },
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("fairness bound must be at least 1")]
    ZeroBound,
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
}

impl ExperimentConfig {
    pub fn new(protocol: ProtocolKind, n: usize) -> Self {
        ExperimentConfig {
            protocol,
            n,
            k: None,
            t: None,
            adversary: AdversaryKind::Fifo,
            base: AdversaryKind::Fifo,
            crashes: None,
            horizon: None,
            bubble_size: None,
            threshold: None,
            trials: 1,
            seed: 0,
            fairness_bound: None,
            max_events: None,
            replays: 1,
            threads: None,
            csv: None,
            summary: None,
            failure_dir: None,
        }
    }

    pub fn k(&self) -> usize {
        self.k.unwrap_or(self.n)
    }

    pub fn t(&self) -> usize {
        self.t.unwrap_or_else(|| max_crashes(self.n))
    }

    pub fn participants(&self) -> Vec<ProcessorId> {
        (0..self.k()).map(ProcessorId::from).collect()
    }

    pub fn adversary_spec(&self) -> AdversarySpec {
        AdversarySpec {
            kind: self.adversary,
            base: self.base,
            crashes: self.crashes,
            horizon: self.horizon,
            bubble_size: self.bubble_size,
            threshold: self.threshold,
        }
    }

    pub fn build_adversary(&self, seed: u64) -> Result<Box<dyn Adversary + Send>, AdversaryError> {
        self.adversary_spec().build(self.n, self.t(), &self.participants(), seed)
    }

    /// The adversary's default limits, with the configured overrides. A
    /// bound without an event cap gets the cap `max(10⁷, 4B)`.
    pub fn limits(&self) -> RunLimits {
        let mut limits = match self.fairness_bound {
            Some(b) => RunLimits {
                fairness_bound: b,
                max_events: crate::sim::run::DEFAULT_MAX_EVENTS.max(4 * b),
            },
            None => self.adversary.default_limits(self.n),
        };
        if let Some(m) = self.max_events {
            limits.max_events = m;
        }
        limits
    }

    pub fn world_config(&self, seed: u64, mode: TraceMode) -> WorldConfig {
        WorldConfig::new(self.n, self.k(), self.t(), self.protocol, seed).with_trace(mode)
    }

    pub fn validate(&self) -> Result<(), ConfigIssue> {
        if self.n == 0 {
            return Err(ConfigIssue::NoProcessors);
        }
        if !(1..=self.n).contains(&self.k()) {
            return Err(ConfigIssue::Participants { k: self.k(), n: self.n });
        }
        if self.t() > max_crashes(self.n) {
            return Err(ConfigIssue::CrashBudget {
                t: self.t(),
                max: max_crashes(self.n),
            });
        }
        if self.trials == 0 {
            return Err(ConfigIssue::NoTrials);
        }
        if self.fairness_bound == Some(0) {
            return Err(ConfigIssue::ZeroBound);
        }
        self.build_adversary(0)?;
        Ok(())
    }

    /// SHA-256 over everything that affects results, with defaults
    /// resolved; output paths, thread count and the number of trials are
    /// left out, so sweeps of different length share a digest.
    pub fn digest(&self) -> String {
        let limits = self.limits();
        let canonical = serde_json::json!({
            "protocol": self.protocol,
            "n": self.n,
            "k": self.k(),
            "t": self.t(),
            "adversary": self.adversary,
            "base": self.base,
            "crashes": self.crashes,
            "horizon": self.horizon,
            "bubble_size": self.bubble_size,
            "threshold": self.threshold,
            "seed": self.seed,
            "fairness_bound": limits.fairness_bound,
            "max_events": limits.max_events,
        });
        let hash = Sha256::digest(canonical.to_string().as_bytes());
        hash[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let c = ExperimentConfig::new(ProtocolKind::Elect, 8);
        assert_eq!((c.k(), c.t()), (8, 3));
        assert_eq!(c.limits(), RunLimits::for_n(8));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut c = ExperimentConfig::new(ProtocolKind::Elect, 8);
        c.k = Some(9);
        assert!(matches!(c.validate(), Err(ConfigIssue::Participants { .. })));
        c.k = None;
        c.t = Some(4);
        assert!(matches!(c.validate(), Err(ConfigIssue::CrashBudget { .. })));
        c.t = None;
        c.trials = 0;
        assert_eq!(c.validate(), Err(ConfigIssue::NoTrials));
        c.trials = 1;
        c.adversary = AdversaryKind::Crasher;
        c.base = AdversaryKind::Bubble;
        assert!(matches!(c.validate(), Err(ConfigIssue::Adversary(_))));
    }

    #[test]
    fn digest_ignores_outputs_only() {
        let a = ExperimentConfig::new(ProtocolKind::Rename, 16);
        let mut b = a.clone();
        b.csv = Some("x.csv".into());
        b.trials = 50;
        assert_eq!(a.digest(), b.digest());
        b.seed = 1;
        assert_ne!(a.digest(), b.digest());
        let mut c = a.clone();
        c.t = Some(max_crashes(16));
        assert_eq!(a.digest(), c.digest());
    }

    #[test]
    fn parses_with_defaults() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"protocol": "sift-hetero", "n": 64, "adversary": "sequential", "seed": 3}"#).unwrap();
        assert_eq!(c.protocol, ProtocolKind::SiftHetero);
        assert_eq!(c.adversary, AdversaryKind::Sequential);
        assert_eq!((c.n, c.trials, c.seed, c.replays), (64, 1, 3, 1));
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"protocol": "elect", "n": 4, "bogus": 1}"#).is_err());
    }
}
