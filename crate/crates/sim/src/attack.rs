//! Attack injectors derived from legitimate traffic.
//!
//! Same-context replays resubmit a request after its legitimate execution.
//! Cross-context and redirect attacks use mandates harvested before the
//! agent presents them, so the attacker's use is the first use of the nonce.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use ztrv_core::{Timestamp, VerificationRequest};

use crate::workload::{LegitRequest, SCOPES};

/// Delay after issuance at which a harvested mandate is fired.
pub const HARVEST_DELAY: Duration = Duration::from_millis(1);
/// Delay after the legitimate submission at which replays arrive.
pub const REPLAY_DELAY: Duration = Duration::from_millis(1);

pub const DEFAULT_REPLAY_COUNT: usize = 100;
pub const DEFAULT_CONCURRENCY: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    SameContextReplay,
    CrossContextReplay,
    ContextRedirect,
}

impl AttackKind {
    pub const ALL: [AttackKind; 3] = [
        AttackKind::SameContextReplay,
        AttackKind::CrossContextReplay,
        AttackKind::ContextRedirect,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::SameContextReplay => "same-context-replay",
            AttackKind::CrossContextReplay => "cross-context-replay",
            AttackKind::ContextRedirect => "context-redirect",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown attack kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackScenario {
    pub kind: AttackKind,
    /// Number of attack requests to inject.
    pub replay_count: usize,
    /// Workers used to submit simultaneous requests.
    pub concurrency: usize,
    pub seed: u64,
}

impl AttackScenario {
    pub fn new(kind: AttackKind, seed: u64) -> Self {
        Self {
            kind,
            replay_count: DEFAULT_REPLAY_COUNT,
            concurrency: DEFAULT_CONCURRENCY,
            seed,
        }
    }
}

/// Who produced a submission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Origin {
    Legit,
    Attack(AttackKind),
}

/// One request arriving at the verifier at a given instant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Submission {
    pub at: Timestamp,
    pub origin: Origin,
    pub request: VerificationRequest,
}

impl From<&LegitRequest> for Submission {
    fn from(r: &LegitRequest) -> Self {
        Submission {
            at: r.submit_at,
            origin: Origin::Legit,
            request: r.request.clone(),
        }
    }
}

/// Derives attack submissions from `victims`.
///
/// - same-context replay: one victim, resubmitted byte-identically
///   `replay_count` times, all arriving together just after its legitimate
///   execution.
/// - cross-context replay: `replay_count` distinct victims, each fired once at
///   a different merchant before the agent presents it.
/// - context redirect: as above, at the original merchant with a different
///   operation scope.
///
/// Harvest attacks are capped at the number of victims available.
pub fn inject_attack(scenario: &AttackScenario, victims: &[LegitRequest]) -> Vec<Submission> {
    if victims.is_empty() || scenario.replay_count == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha20Rng::seed_from_u64(scenario.seed);
    let origin = Origin::Attack(scenario.kind);
    match scenario.kind {
        AttackKind::SameContextReplay => {
            let victim = &victims[rng.gen_range(0..victims.len())];
            let at = victim.submit_at.saturating_add(REPLAY_DELAY);
            (0..scenario.replay_count)
                .map(|_| Submission {
                    at,
                    origin,
                    request: victim.request.clone(),
                })
                .collect()
        }
        AttackKind::CrossContextReplay | AttackKind::ContextRedirect => {
            let n = scenario.replay_count.min(victims.len());
            let mut picked = index::sample(&mut rng, victims.len(), n).into_vec();
            picked.sort_unstable();
            picked
                .into_iter()
                .enumerate()
                .map(|(k, i)| {
                    let victim = &victims[i];
                    let mut request = victim.request.clone();
                    if scenario.kind == AttackKind::CrossContextReplay {
                        request.context.merchant_id = format!("merchant-shadow-{k:03}");
                    } else {
                        request.context.scope = redirected_scope(&request.context.scope).to_owned();
                    }
                    Submission {
                        at: victim.request.mandate.issued_at.saturating_add(HARVEST_DELAY),
                        origin,
                        request,
                    }
                })
                .collect()
        }
    }
}

fn redirected_scope(scope: &str) -> &'static str {
    let i = SCOPES.iter().position(|s| *s == scope).unwrap_or(0);
    SCOPES[(i + 1) % SCOPES.len()]
}
