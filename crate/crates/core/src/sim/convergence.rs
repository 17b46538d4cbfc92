use super::population::{replicate_population, PopulationConfig};
use crate::error::{Error, Result};
use crate::meanfield;
use crate::model::{MeanFieldState, SystemParams};

/// Finite-`N` bias of the stationary fractions at one population size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub n_devices: u32,
    pub m_channels: u32,
    pub replications: usize,
    pub estimate: MeanFieldState,
    pub stderr: [f64; 3],
    /// `|estimate - equilibrium|` per component (idle, wait, service).
    pub deviation: [f64; 3],
}

/// Simulate each population size and compare the time-averaged fractions
/// with the mean-field equilibrium. `M = N / gamma` must be an integer and
/// `config(N)` gives the observation window for size `N`. Size `i` uses
/// streams `i * 2^32 ..` of `seed`.
pub fn estimate_rate_of_convergence(
    params: &SystemParams,
    sizes: &[u32],
    replications: usize,
    config: impl Fn(u32) -> PopulationConfig,
    seed: u64,
) -> Result<Vec<ConvergenceRow>> {
    let eq = meanfield::equilibrium(params);
    sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let m = n as f64 / params.gamma;
            if m.fract() != 0.0 || m < 1.0 {
                return Err(Error::domain(format!("N = {n} is not a multiple of gamma = {}", params.gamma)));
            }
            let p = params.with_population(n, m as u32);
            let s = replicate_population(&p, &config(n), replications, seed, (i as u64) << 32)?;
            let est = s.stationary;
            Ok(ConvergenceRow {
                n_devices: n,
                m_channels: m as u32,
                replications,
                estimate: est,
                stderr: s.stationary_stderr,
                deviation: [
                    (est.x_idle - eq.x_idle).abs(),
                    (est.x_wait - eq.x_wait).abs(),
                    (est.x_service - eq.x_service).abs(),
                ],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Rate;

    #[test]
    fn small_sizes_are_already_close() {
        let p = SystemParams::new(0.8, 1.0, 2.0).with_w(Rate::Finite(2.0));
        let rows = estimate_rate_of_convergence(&p, &[10, 100], 4, |_| PopulationConfig::new(2000.0), 1).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert!(r.deviation.iter().all(|d| *d < 0.05), "{r:?}");
        }
    }

    #[test]
    fn incompatible_size_is_rejected() {
        let p = SystemParams::new(0.8, 1.0, 2.0).with_w(Rate::Finite(2.0));
        assert!(estimate_rate_of_convergence(&p, &[15], 1, |_| PopulationConfig::new(10.0), 1).is_err());
    }
}
