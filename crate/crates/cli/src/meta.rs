//! Run metadata: the `run.json` echo every subcommand writes, with the
//! fully resolved configuration, a schema version, wall time, and an
//! ISO-8601 timestamp. `run.json` is the only output file allowed to
//! differ between byte-identical reruns.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

pub const RUN_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct RunMeta<T: Serialize> {
    pub schema_version: u32,
    pub command: String,
    pub resolved_config: T,
    pub warnings: Vec<String>,
    pub runtime_seconds: f64,
    pub timestamp: String,
}

pub fn write_run_json<T: Serialize>(
    out_dir: &Path,
    command: &str,
    resolved_config: &T,
    warnings: &[String],
    runtime_seconds: f64,
) -> anyhow::Result<()> {
    let meta = RunMeta {
        schema_version: RUN_SCHEMA_VERSION,
        command: command.to_string(),
        resolved_config,
        warnings: warnings.to_vec(),
        runtime_seconds,
        timestamp: iso8601_now(),
    };
    let text = serde_json::to_string_pretty(&meta)?;
    std::fs::write(out_dir.join("run.json"), text + "\n")?;
    Ok(())
}

/// UTC timestamp like `2026-01-31T12:34:56Z`.
pub fn iso8601_now() -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let days = secs / 86_400;
    let rem = secs % 86_400;
    let (y, m, d) = civil_from_days(days as i64);
    format!(
        "{y:04}-{m:02}-{d:02}T{:02}:{:02}:{:02}Z",
        rem / 3600,
        (rem % 3600) / 60,
        rem % 60
    )
}

/// Days-since-epoch to (year, month, day); Howard Hinnant's algorithm.
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = (z - era * 146_097) as u64;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe as i64 + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn civil_epoch_and_known_dates() {
        assert_eq!(civil_from_days(0), (1970, 1, 1));
        assert_eq!(civil_from_days(19_723), (2024, 1, 1)); // 2024-01-01
        assert_eq!(civil_from_days(11_016), (2000, 2, 29)); // leap day
    }

    #[test]
    fn timestamp_shape() {
        let ts = iso8601_now();
        assert_eq!(ts.len(), 20);
        assert!(ts.ends_with('Z'));
        assert_eq!(&ts[4..5], "-");
        assert_eq!(&ts[10..11], "T");
    }
}
