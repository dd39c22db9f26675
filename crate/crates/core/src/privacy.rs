//! Synthetic-sample privacy accounting.
//!
//! A GAN trained on `n` samples that releases `s` generated samples is
//! (ε, δ)-differentially private with δ scaling as O(s/n). The scaling has no
//! published constants, so the report carries the ratio `s_i / n_i` as a
//! comparable surrogate and never claims concrete (ε, δ) values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RATIO_CEILING: f64 = 1.0;

pub const DISCLAIMER: &str = "delta_i scales as O(s_i / n_i); the ratio s_i / n_i is reported as a surrogate. \
No concrete (epsilon, delta) values are claimed: epsilon_i is unquantified and delta_i has no known constant.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientSampleStats {
    pub client_id: usize,
    /// Local training samples `n_i`.
    pub local_count: usize,
    /// Generated samples shared with the server `s_i`.
    pub shared_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientPrivacy {
    pub client_id: usize,
    pub local_count: usize,
    pub shared_count: usize,
    pub ratio: f64,
    pub violation: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub ceiling: f64,
    pub clients: Vec<ClientPrivacy>,
    pub epsilon: String,
    pub note: String,
}

impl PrivacyReport {
    pub fn any_violation(&self) -> bool {
        self.clients.iter().any(|c| c.violation)
    }

    pub fn max_ratio(&self) -> f64 {
        self.clients.iter().map(|c| c.ratio).fold(0.0, f64::max)
    }
}

pub fn privacy_report(stats: &[ClientSampleStats], ceiling: f64) -> Result<PrivacyReport> {
    if !(ceiling >= 0.0) {
        return Err(Error::Config(format!(
            "ratio ceiling must be non-negative, got {ceiling}"
        )));
    }
    let clients = stats
        .iter()
        .map(|s| {
            if s.local_count == 0 {
                return Err(Error::Config(format!(
                    "client {} has no local samples",
                    s.client_id
                )));
            }
            let ratio = s.shared_count as f64 / s.local_count as f64;
            Ok(ClientPrivacy {
                client_id: s.client_id,
                local_count: s.local_count,
                shared_count: s.shared_count,
                ratio,
                violation: ratio > ceiling,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PrivacyReport {
        ceiling,
        clients,
        epsilon: "unquantified".to_string(),
        note: DISCLAIMER.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn stats(n: usize, s: usize) -> ClientSampleStats {
        ClientSampleStats {
            client_id: 0,
            local_count: n,
            shared_count: s,
        }
    }

    #[test]
    fn same_size_synthesis_is_ratio_one() {
        let r = privacy_report(&[stats(120, 120), stats(7, 7)], DEFAULT_RATIO_CEILING).unwrap();
        assert!(r.clients.iter().all(|c| c.ratio == 1.0 && !c.violation));
    }

    #[test]
    fn nothing_shared_never_violates() {
        let r = privacy_report(&[stats(10, 0)], 0.0).unwrap();
        assert_eq!(r.clients[0].ratio, 0.0);
        assert!(!r.any_violation());
    }

    #[test]
    fn ratio_above_ceiling_is_flagged() {
        let r = privacy_report(&[stats(500, 250)], 0.4).unwrap();
        assert_eq!(r.clients[0].ratio, 0.5);
        assert!(r.clients[0].violation);
    }

    #[test]
    fn empty_client_is_a_configuration_error() {
        assert!(matches!(
            privacy_report(&[stats(0, 3)], 1.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn report_disclaims_concrete_values() {
        let r = privacy_report(&[stats(3, 3)], 1.0).unwrap();
        assert!(r.note.contains("No concrete (epsilon, delta)"));
        assert_eq!(r.epsilon, "unquantified");
    }

    proptest! {
        #[test]
        fn ratio_is_scale_covariant(n in 1usize..10_000, s in 0usize..10_000) {
            let a = privacy_report(&[stats(n, s)], 1.0).unwrap();
            let b = privacy_report(&[stats(2 * n, 2 * s)], 1.0).unwrap();
            prop_assert_eq!(a.clients[0].ratio, b.clients[0].ratio);
        }
    }
}
