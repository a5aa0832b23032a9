//! Service-time distribution of the preemptive server.
//!
//! A packet that has been in service for `k - 1` slots is delivered in the
//! current slot with probability `q_k = p_k / sum_{i >= k} p_i` (the hazard
//! rate). The support is bounded by `L`, so `q_L = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input tolerance on the pmf sum.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Raw input document: `{"p": [..]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PmfDocument {
    pub p: Vec<f64>,
}

/// Service-time pmf `p_1..p_L` with derived hazard rates `q_1..q_L`.
///
/// Immutable after construction. Vectors are stored 0-based: `p()[0]` is
/// `p_1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServiceDistribution {
    p: Vec<f64>,
    q: Vec<f64>,
    #[serde(rename = "L")]
    support: usize,
    mean_service: f64,
}

impl ServiceDistribution {
    pub fn new(p: &[f64]) -> Result<Self> {
        if p.is_empty() || p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::RejectsEmptyOrNegative(format!("{p:?}")));
        }
        if p[0] <= 0.0 {
            return Err(Error::RejectsZeroFirstSlot(p[0]));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::RejectsUnnormalized(total));
        }

        let support = p.iter().rposition(|x| *x > 0.0).map_or(0, |i| i + 1);
        let p: Vec<f64> = p[..support].iter().map(|x| x / total).collect();

        let mut q = vec![0.0; support];
        let mut tail = 0.0;
        for k in (0..support).rev() {
            tail += p[k];
            q[k] = if tail > 0.0 {
                (p[k] / tail).min(1.0)
            } else {
                0.0
            };
        }
        q[support - 1] = 1.0;

        let mean_service = p.iter().enumerate().map(|(i, x)| (i + 1) as f64 * x).sum();
        Ok(Self {
            p,
            q,
            support,
            mean_service,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PmfDocument = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("distribution JSON: {e}")))?;
        Self::new(&doc.p)
    }

    /// Degenerate one-slot service.
    pub fn deterministic_one_slot() -> Self {
        Self::new(&[1.0]).expect("valid pmf")
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// Hazard rates, 0-based (`q()[0]` is `q_1`).
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// Support bound `L`.
    pub fn support(&self) -> usize {
        self.support
    }

    pub fn mean_service(&self) -> f64 {
        self.mean_service
    }

    /// `q_k` for `1 <= k <= L`.
    pub fn hazard(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.support {
            return Err(Error::OutOfSupport { k, l: self.support });
        }
        Ok(self.q[k - 1])
    }

    /// Unchecked `q_k`; callers guarantee `1 <= k <= L`.
    pub(crate) fn q_at(&self, k: usize) -> f64 {
        self.q[k - 1]
    }

    /// True when the hazard is constant on `1..L-1`, i.e. the pmf is a
    /// geometric law truncated at `L`.
    pub fn is_geometric(&self, tol: f64) -> bool {
        let interior = &self.q[..self.support - 1];
        interior
            .first()
            .is_none_or(|q1| interior.iter().all(|q| (q - q1).abs() <= tol))
    }

    /// `q_1 <= q_2 <= ... <= q_{L-1}`.
    pub fn has_nondecreasing_hazard(&self) -> bool {
        self.q[..self.support - 1].windows(2).all(|w| w[0] <= w[1])
    }

    /// Rebuilds the pmf from the hazards: `p_k = q_k prod_{j<k} (1 - q_j)`.
    pub fn pmf_from_hazard(q: &[f64]) -> Vec<f64> {
        let mut survive = 1.0;
        q.iter()
            .map(|qk| {
                let pk = qk * survive;
                survive *= 1.0 - qk;
                pk
            })
            .collect()
    }
}
