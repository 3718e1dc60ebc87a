//! Seedable Wiener increments at a reference step, with exact coarsening.
//!
//! Increment `i` of realization `m` under master seed `s` is a pure function of `(s, m, i)`:
//! a ChaCha20 generator keyed by `s`, on stream `m`, read at word position `2i`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// Identifies the generator and the normal transform; recorded in every report.
pub const GENERATOR_ID: &str = "chacha20(seed, stream=realization, word=2*increment)/inverse-normal-cdf";

/// Relative tolerance for divisibility of times by steps.
pub const DIVISIBILITY_TOL: f64 = 1e-9;

/// Number of steps of size `tau` covering `[0, t_final]`.
pub fn step_count(t_final: f64, tau: f64) -> Result<usize> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::invalid("T", format!("final time must be positive, got {t_final}")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid("tau", format!("time step must be positive, got {tau}")));
    }
    let n = (t_final / tau).round();
    if n < 1.0 || (n * tau - t_final).abs() > DIVISIBILITY_TOL * t_final {
        return Err(Error::invalid(
            "tau",
            format!("time step {tau} does not divide final time {t_final}"),
        ));
    }
    Ok(n as usize)
}

/// Integer ratio `coarse / fine`, or an error naming `field`.
pub fn step_ratio(coarse: f64, fine: f64, field: &str) -> Result<usize> {
    let r = (coarse / fine).round();
    if r < 1.0 || (r * fine - coarse).abs() > DIVISIBILITY_TOL * coarse {
        return Err(Error::invalid(
            field,
            format!("{coarse} is not an integer multiple of {fine}"),
        ));
    }
    Ok(r as usize)
}

/// Uniform on the open interval (0, 1) from the top 53 bits.
fn open_unit(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn standard_normal(x: u64) -> f64 {
    // Φ^{-1}(p) = -√2 erfc^{-1}(2p)
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * open_unit(x))
}

fn stream(master_seed: u64, realization: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(realization);
    rng
}

/// Standard normal sample `(s, m, i)`, computed without generating its predecessors.
pub fn standard_normal_at(master_seed: u64, realization: u64, index: u64) -> f64 {
    let mut rng = stream(master_seed, realization);
    rng.set_word_pos(2 * index as u128);
    standard_normal(rng.next_u64())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianPath {
    master_seed: u64,
    realization: u64,
    tau_ref: f64,
    t_final: f64,
    increments: Vec<f64>,
}

/// Path of realization 0 under `seed`.
pub fn generate_path(seed: u64, t_final: f64, tau_ref: f64) -> Result<BrownianPath> {
    generate_realization_path(seed, 0, t_final, tau_ref)
}

pub fn generate_realization_path(master_seed: u64, realization: u64, t_final: f64, tau_ref: f64) -> Result<BrownianPath> {
    let n = step_count(t_final, tau_ref)?;
    let scale = tau_ref.sqrt();
    let mut rng = stream(master_seed, realization);
    let increments = (0..n).map(|_| scale * standard_normal(rng.next_u64())).collect();
    Ok(BrownianPath {
        master_seed,
        realization,
        tau_ref,
        t_final,
        increments,
    })
}

impl BrownianPath {
    /// Path with given increments; used for deterministic runs and tests.
    pub fn from_increments(tau_ref: f64, increments: Vec<f64>) -> Result<Self> {
        if increments.is_empty() {
            return Err(Error::invalid("increments", "path needs at least one increment"));
        }
        if !(tau_ref > 0.0) {
            return Err(Error::invalid("tau_ref", "reference step must be positive"));
        }
        Ok(BrownianPath {
            master_seed: 0,
            realization: 0,
            tau_ref,
            t_final: tau_ref * increments.len() as f64,
            increments,
        })
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn realization(&self) -> u64 {
        self.realization
    }

    pub fn tau_ref(&self) -> f64 {
        self.tau_ref
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `W_T`, summed left to right.
    pub fn terminal_value(&self) -> f64 {
        self.increments.iter().sum()
    }

    /// Increments over steps of size `tau`; each is the left-to-right sum of the fine
    /// increments it spans.
    pub fn coarsen(&self, tau: f64) -> Result<Vec<f64>> {
        let ratio = step_ratio(tau, self.tau_ref, "tau")?;
        if self.increments.len() % ratio != 0 {
            return Err(Error::invalid(
                "tau",
                format!("time step {tau} does not divide final time {}", self.t_final),
            ));
        }
        Ok(self
            .increments
            .chunks_exact(ratio)
            .map(|c| c.iter().fold(0.0, |acc, v| acc + v))
            .collect())
    }
}

pub fn coarsen(path: &BrownianPath, tau: f64) -> Result<Vec<f64>> {
    path.coarsen(tau)
}
