//! File-level pipelines and the certificate document.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::certify::{
    certify_beta, certify_beta_exact, certify_max_attack, certify_max_attack_exact, CertMode, NoiseRow, RobustnessCertificate,
    TopKSpec,
};
use crate::concentration::{certify_beta_lower, certify_max_attack_lower, finite_sample_certificate};
use crate::error::{Error, Result};
use crate::order::{NormOrder, RenyiOrder};
use crate::rrsm::RrsmMap;
use crate::scoring::{build_scoring_vector, normalized_positive};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Serialized certificate. Field order is fixed, so identical inputs give
/// identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateDocument {
    pub schema_version: u32,
    pub mode: CertMode,
    pub d_prior: NormOrder,
    pub d_star: u32,
    pub sigma: f64,
    #[serde(rename = "T")]
    pub samples: Option<usize>,
    pub k: usize,
    pub beta: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub alpha_star: RenyiOrder,
    pub eps_robust: f64,
    pub eps_lower: Option<f64>,
    pub confidence: Option<f64>,
    pub dimension_penalty_applied: bool,
    pub map_digest: String,
    pub toolkit_version: String,
    pub n: usize,
    pub k0: usize,
    pub row: NoiseRow,
    pub alpha_at_grid_cap: bool,
    #[serde(rename = "L_gnd_row")]
    pub l_gnd_row: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub exact_minimum: bool,
}

impl CertificateDocument {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }
}

/// What to certify.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// Largest attack size for this `beta`.
    Beta(f64),
    /// Largest `beta` for this attack size.
    AttackSize(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyRequest {
    pub d_prior: NormOrder,
    pub sigma: f64,
    pub k: usize,
    pub target: Target,
    /// Sample count and confidence for a finite-sample bound.
    pub finite_sample: Option<(usize, f64)>,
    /// Scoring parameters the map was built with. They bound the range of
    /// each sample's coordinates; without them the range is taken as 1.
    pub k_star: Option<f64>,
    pub eta: Option<f64>,
    /// Certify against the exact smallest violating divergence instead of
    /// the pooled closed form. Not available with `finite_sample`.
    pub exact_minimum: bool,
}

impl CertifyRequest {
    pub fn new(d_prior: NormOrder, sigma: f64, k: usize, target: Target) -> Self {
        CertifyRequest {
            d_prior,
            sigma,
            k,
            target,
            finite_sample: None,
            k_star: None,
            eta: None,
            exact_minimum: false,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Certifies the map encoded in `bytes` (an RRSM file).
pub fn certify_bytes(bytes: &[u8], req: &CertifyRequest) -> Result<CertificateDocument> {
    let map = RrsmMap::from_bytes(bytes)?;
    let m = normalized_positive(&map.to_f64(), "smoothed map")?;
    let n = m.len();
    let digest = sha256_hex(bytes);

    let v_max = || -> Result<f64> {
        match req.eta {
            Some(eta) => {
                let k_star = req.k_star.unwrap_or((n as f64 / 4.0).max(1.0));
                Ok(build_scoring_vector(n, k_star, eta)?.max_weight())
            }
            None => Ok(1.0),
        }
    };

    if req.exact_minimum && req.finite_sample.is_some() {
        return Err(Error::Unsupported("the exact minimum has no finite-sample bound".into()));
    }
    let (cert, eps_lower): (RobustnessCertificate, Option<f64>) = match (req.target, req.finite_sample) {
        (Target::Beta(beta), None) if req.exact_minimum => {
            (certify_max_attack_exact(&m, TopKSpec::new(req.k, beta, n)?, req.sigma, req.d_prior)?, None)
        }
        (Target::AttackSize(l), None) if req.exact_minimum => {
            (certify_beta_exact(&m, req.k, l, req.sigma, req.d_prior)?, None)
        }
        (Target::Beta(beta), None) => (certify_max_attack(&m, TopKSpec::new(req.k, beta, n)?, req.sigma, req.d_prior)?, None),
        (Target::AttackSize(l), None) => (certify_beta(&m, req.k, l, req.sigma, req.d_prior)?, None),
        (Target::Beta(beta), Some((t, conf))) => {
            let spec = TopKSpec::new(req.k, beta, n)?;
            let (cert, bound) = certify_max_attack_lower(&m, spec, req.sigma, req.d_prior, t, conf, v_max()?)?;
            let plug = crate::certify::RankedMap::new(&m, spec)?.eps_robust(cert.alpha_star);
            (
                RobustnessCertificate {
                    eps_robust: plug,
                    ..cert
                },
                Some(bound.eps_lower),
            )
        }
        (Target::AttackSize(l), Some((t, conf))) => {
            let cert = certify_beta_lower(&m, req.k, l, req.sigma, req.d_prior, t, conf, v_max()?)?;
            let plug = match TopKSpec::new(req.k, cert.beta, n) {
                Ok(spec) => crate::certify::RankedMap::new(&m, spec)?.eps_robust(cert.alpha_star),
                Err(_) => 0.0,
            };
            let cert = RobustnessCertificate {
                eps_robust: plug,
                ..cert
            };
            // vacuous betas (no feasible spec, or beta = 0) carry no bound
            let lower = match TopKSpec::new(req.k, cert.beta, n) {
                Ok(spec) => Some(finite_sample_certificate(&m, spec, cert.alpha_star, t, conf, v_max()?)?.eps_lower),
                Err(_) => None,
            };
            (cert, lower)
        }
    };
    let doc = CertificateDocument {
        schema_version: SCHEMA_VERSION,
        mode: cert.mode,
        d_prior: cert.d_prior,
        d_star: cert.d_star,
        sigma: cert.sigma,
        samples: req.finite_sample.map(|(t, _)| t),
        k: cert.k,
        beta: cert.beta,
        l: cert.l,
        alpha_star: cert.alpha_star,
        eps_robust: cert.eps_robust,
        eps_lower,
        confidence: req.finite_sample.map(|(_, c)| c),
        dimension_penalty_applied: cert.dimension_penalty_applied,
        map_digest: digest,
        toolkit_version: TOOLKIT_VERSION.to_string(),
        n,
        k0: cert.k0,
        row: cert.row,
        alpha_at_grid_cap: cert.sup_at_cap,
        l_gnd_row: cert.alt_gnd_l,
        exact_minimum: req.exact_minimum,
    };
    for (name, v) in [("sigma", doc.sigma), ("beta", doc.beta), ("L", doc.l), ("eps_robust", doc.eps_robust)] {
        if !v.is_finite() {
            return Err(Error::Numeric {
                routine: "certificate",
                detail: format!("{name} is not finite"),
            });
        }
    }
    Ok(doc)
}

pub fn certify_file(path: &Path, req: &CertifyRequest) -> Result<CertificateDocument> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(crate::error::FormatError::Missing(path.to_path_buf()).into())
        }
        Err(e) => return Err(Error::io(format!("reading {}", path.display()), e)),
    };
    certify_bytes(&bytes, req)
}
