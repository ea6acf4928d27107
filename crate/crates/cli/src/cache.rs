//! On-disk cache of shooting results, keyed by a hash of the shooting
//! parameters.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use logsp::groundstate::{profile_from_bracket, shoot_q_with, RadialProfile, ShootingParams};

use crate::output::write_atomic;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Entry {
    dr: f64,
    r_max: f64,
    tol: f64,
    bracket: (f64, f64),
    q0: f64,
    rho_star: f64,
}

pub fn cache_key(params: &ShootingParams) -> String {
    let mut h = Sha256::new();
    h.update(params.dr.to_le_bytes());
    h.update(params.r_max.to_le_bytes());
    h.update(params.tol.to_le_bytes());
    hex::encode(&h.finalize()[..8])
}

pub fn cache_path(params: &ShootingParams, dir: &Path) -> PathBuf {
    dir.join(format!("groundstate-{}.json", cache_key(params)))
}

/// The ground state for `params`, from the cache when a matching entry
/// exists. A stale or unreadable entry is recomputed and overwritten.
pub fn cached_profile(params: &ShootingParams, dir: &Path) -> Result<RadialProfile, CliError> {
    let path = cache_path(params, dir);
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(entry) = serde_json::from_str::<Entry>(&text) {
            if (entry.dr, entry.r_max, entry.tol) == (params.dr, params.r_max, params.tol) {
                if let Ok(p) = profile_from_bracket(*params, entry.bracket) {
                    if p.rho_star() == entry.rho_star {
                        return Ok(p);
                    }
                }
            }
        }
    }
    let profile = shoot_q_with(*params)?;
    let entry = Entry {
        dr: params.dr,
        r_max: params.r_max,
        tol: params.tol,
        bracket: profile.bracket,
        q0: profile.q0,
        rho_star: profile.rho_star(),
    };
    std::fs::create_dir_all(dir)?;
    write_atomic(&path, serde_json::to_string_pretty(&entry)?.as_bytes())?;
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_depends_on_every_parameter() {
        let base = ShootingParams::default();
        let k = cache_key(&base);
        assert_eq!(k, cache_key(&base));
        assert_eq!(k.len(), 16);
        for p in [
            ShootingParams { dr: 5e-5, ..base },
            ShootingParams { r_max: 25.0, ..base },
            ShootingParams { tol: 1e-9, ..base },
        ] {
            assert_ne!(cache_key(&p), k);
        }
    }

    #[test]
    fn second_lookup_hits_the_cache() {
        let dir = tempfile::tempdir().unwrap();
        let params = ShootingParams::default();
        let a = cached_profile(&params, dir.path()).unwrap();
        let path = cache_path(&params, dir.path());
        assert!(path.exists());
        let b = cached_profile(&params, dir.path()).unwrap();
        assert_eq!(a.rho_star(), b.rho_star());
        std::fs::write(&path, "not json").unwrap();
        let c = cached_profile(&params, dir.path()).unwrap();
        assert_eq!(c.rho_star(), a.rho_star());
        assert!(std::fs::read_to_string(&path).unwrap().contains("rho_star"));
    }
}
