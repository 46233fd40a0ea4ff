//! One CSV row per (metric, point).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "experiment,tone,snr_db,iteration,detector,metric,value,evals,seed";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub experiment: String,
    /// Empty for rows aggregated over tones.
    pub tone: Option<usize>,
    pub snr_db: f64,
    pub iteration: usize,
    pub detector: String,
    pub metric: String,
    pub value: f64,
    pub eval_count: u64,
    pub seed: u64,
}

impl MetricsRecord {
    /// Deterministic output order.
    pub fn sort_key(&self) -> impl Ord + '_ {
        (
            &self.experiment,
            ordered(self.snr_db),
            self.tone,
            self.seed,
            &self.detector,
            &self.metric,
            self.iteration,
        )
    }

    fn check_labels(&self) -> Result<()> {
        for s in [&self.experiment, &self.detector, &self.metric] {
            if s.is_empty() || s.contains([',', '\n', '\r', '"']) {
                return Err(Error::usage(format!("label `{s}` cannot be written as a CSV field")));
            }
        }
        Ok(())
    }
}

/// Total order on floats via their bit pattern.
fn ordered(x: f64) -> i64 {
    let b = x.to_bits() as i64;
    b ^ (((b >> 63) as u64) >> 1) as i64
}

/// Header plus rows. Floats use the shortest representation that parses
/// back to the same value.
pub fn to_csv(records: &[MetricsRecord]) -> Result<String> {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        r.check_labels()?;
        let tone = r.tone.map(|t| t.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.experiment, tone, r.snr_db, r.iteration, r.detector, r.metric, r.value, r.eval_count, r.seed
        );
    }
    Ok(out)
}

pub fn write_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    std::fs::write(path, to_csv(records)?)?;
    Ok(())
}

pub fn parse_csv(text: &str, path: &Path) -> Result<Vec<MetricsRecord>> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(perr(1, format!("expected header `{CSV_HEADER}`"))),
    }
    let mut out = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = raw.split(',').collect();
        if f.len() != 9 {
            return Err(perr(line, format!("expected 9 fields, found {}", f.len())));
        }
        let bad = |name: &str, v: &str| perr(line, format!("bad {name} `{v}`"));
        out.push(MetricsRecord {
            experiment: f[0].to_string(),
            tone: if f[1].is_empty() {
                None
            } else {
                Some(f[1].parse().map_err(|_| bad("tone", f[1]))?)
            },
            snr_db: f[2].parse().map_err(|_| bad("snr_db", f[2]))?,
            iteration: f[3].parse().map_err(|_| bad("iteration", f[3]))?,
            detector: f[4].to_string(),
            metric: f[5].to_string(),
            value: f[6].parse().map_err(|_| bad("value", f[6]))?,
            eval_count: f[7].parse().map_err(|_| bad("evals", f[7]))?,
            seed: f[8].parse().map_err(|_| bad("seed", f[8]))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn label() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9_/.-]{0,12}"
    }

    fn record() -> impl Strategy<Value = MetricsRecord> {
        (
            label(),
            proptest::option::of(0usize..5000),
            -50.0f64..80.0,
            0usize..200,
            label(),
            label(),
            prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), Just(0.0), 1e-300f64..1e-290],
            any::<u64>(),
            any::<u64>(),
        )
            .prop_map(|(experiment, tone, snr_db, iteration, detector, metric, value, eval_count, seed)| MetricsRecord {
                experiment,
                tone,
                snr_db,
                iteration,
                detector,
                metric,
                value,
                eval_count,
                seed,
            })
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_lossless(records in proptest::collection::vec(record(), 0..20)) {
            let text = to_csv(&records).unwrap();
            let back = parse_csv(&text, Path::new("r.csv")).unwrap();
            prop_assert_eq!(back, records);
        }
    }

    #[test]
    fn header_and_bad_rows() {
        let p = Path::new("r.csv");
        assert_eq!(to_csv(&[]).unwrap(), format!("{CSV_HEADER}\n"));
        assert!(parse_csv("tone,snr\n", p).is_err());
        let err = parse_csv(&format!("{CSV_HEADER}\nturbo,,x,0,dea,ber,0,0,1\n"), p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let bad = MetricsRecord {
            experiment: "a,b".into(),
            tone: None,
            snr_db: 0.0,
            iteration: 0,
            detector: "d".into(),
            metric: "m".into(),
            value: 0.0,
            eval_count: 0,
            seed: 0,
        };
        assert!(to_csv(&[bad]).is_err());
    }

    #[test]
    fn float_order_is_total() {
        let mut v = [3.0, -1.0, 0.0, -0.0, 10.5, -7.25];
        v.sort_by_key(|&x| ordered(x));
        assert_eq!(v, [-7.25, -1.0, -0.0, 0.0, 3.0, 10.5]);
    }
}
