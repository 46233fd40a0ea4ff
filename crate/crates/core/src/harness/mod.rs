//! Experiment runner: configuration, dispatch to the study pipelines and
//! CSV output.

mod config;
mod experiments;
mod records;

pub use config::{
    parse_pairs, Algorithm, ChannelSource, ExperimentConfig, ExperimentKind, DESK_GRID_TONES, FULL_GRID_TONES,
};
pub use records::{parse_csv, to_csv, write_csv, MetricsRecord, CSV_HEADER};

use crate::error::{Error, Result};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "FEXT_WORKERS";

/// `100 * n_dea / n_ml` percent.
pub fn complexity_ratio(n_dea: u64, n_ml: u64) -> Result<f64> {
    if n_ml == 0 {
        return Err(Error::usage("ML evaluation count must be positive"));
    }
    Ok(100.0 * n_dea as f64 / n_ml as f64)
}

/// Worker count from [`WORKERS_ENV`]; `None` leaves the choice to rayon.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

/// Validates `cfg`, runs its study and returns the rows in deterministic
/// order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers_from_env()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let mut rows = pool.install(|| experiments::run(cfg))?;
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complexity_arithmetic() {
        assert!((complexity_ratio(3300, 65536).unwrap() - 5.035).abs() < 1e-3);
        assert_eq!(complexity_ratio(65536, 65536).unwrap(), 100.0);
        assert_eq!(complexity_ratio(0, 65536).unwrap(), 0.0);
        assert!(matches!(complexity_ratio(1, 0), Err(Error::Usage(_))));
    }
}
