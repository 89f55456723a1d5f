//! Versioned JSON report envelope.

use std::time::Instant;

use serde::Serialize;
use sha2::{Digest as _, Sha256};

use deficiency::bounds::{HardyCertificate, PartitionData, RelativeBound};
use deficiency::decouple::Verdict;
use deficiency::partition::{FamilyCheck, PartitionConstants, VerificationReport};
use deficiency::support::LawReport;
use deficiency::weyl::EndpointClass;
use deficiency::DefectRecord;

pub const SCHEMA: &str = "deficiency-report/1";

/// SHA-256 over the subcommand, every input file and the options that affect
/// the result. File paths are not hashed.
pub struct Digest {
    hasher: Sha256,
}

impl Digest {
    pub fn new(subcommand: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(subcommand.as_bytes());
        hasher.update([0]);
        Digest { hasher }
    }

    pub fn add_bytes(&mut self, b: &[u8]) {
        self.hasher.update((b.len() as u64).to_le_bytes());
        self.hasher.update(b);
    }

    pub fn add_option<T: Serialize>(&mut self, key: &str, value: &T) {
        let v = serde_json::to_string(value).expect("serializable option");
        self.add_bytes(format!("{key}={v}").as_bytes());
    }

    fn finish(self) -> String {
        format!("sha256:{:x}", self.hasher.finalize())
    }
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub elapsed_ms: f64,
}

#[derive(Debug, Serialize)]
pub struct RunReport<T> {
    pub schema: &'static str,
    pub tool_version: &'static str,
    pub subcommand: &'static str,
    pub input_digest: String,
    pub result: T,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl<T: Serialize> RunReport<T> {
    pub fn new(
        subcommand: &'static str,
        digest: Digest,
        result: T,
        warnings: Vec<String>,
        omit_timing: bool,
        start: Instant,
    ) -> Self {
        RunReport {
            schema: SCHEMA,
            tool_version: env!("CARGO_PKG_VERSION"),
            subcommand,
            input_digest: digest.finish(),
            result,
            warnings,
            timing: (!omit_timing).then(|| Timing {
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            }),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Serialize)]
pub struct CertifyResult {
    #[serde(flatten)]
    pub verdict: Verdict,
    pub total: Option<DefectRecord>,
}

#[derive(Debug, Serialize)]
pub struct ClassifyResult {
    pub q_eff: f64,
    pub spectral_parameter: &'static str,
    pub class: EndpointClass,
    pub closed_form: EndpointClass,
    pub nu_hat: f64,
    pub decay_exponent: f64,
    pub subdominant_exponent: Option<f64>,
    pub steps: usize,
}

#[derive(Debug, Serialize)]
pub struct CutoffSummary {
    pub label: String,
    pub role: &'static str,
    pub core_radius: f64,
    pub plateau_radius: f64,
    pub support_radius: f64,
    pub verification: VerificationReport,
}

#[derive(Debug, Serialize)]
pub struct PartitionResult {
    pub dimension: usize,
    pub epsilon: f64,
    pub members: usize,
    pub lattice_orbit: bool,
    pub cutoffs: Vec<CutoffSummary>,
    pub family: FamilyCheck,
    pub constants: PartitionConstants,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct CommutatorResult {
    pub e_tilde: f64,
    pub epsilon: f64,
    pub d: f64,
    pub e: f64,
}

#[derive(Debug, Serialize)]
pub struct BoundsResult {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hardy: Option<HardyCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local: Option<RelativeBound>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionData>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub global: Option<RelativeBound>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leading_below_one: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub commutator: Option<CommutatorResult>,
    /// `(ε²/(4+2ε), εe/(2+ε))`
    #[serde(skip_serializing_if = "Option::is_none")]
    pub commutator_gate: Option<(f64, f64)>,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct SupportResult {
    pub cells: usize,
    pub domain_cells: usize,
    pub support_f: usize,
    pub support_g: usize,
    pub laws: LawReport,
    pub pass: bool,
}
