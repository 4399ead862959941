//! Long-format CSV: one metric value per line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::runner::{Rep, Row};

pub const HEADER: &str = "experiment_id,N,lambda,policy,topology,seed,rep,metric,value,stderr";

/// Shortest-round-trip for integers, otherwise 12 significant digits with
/// trailing zeros trimmed.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == x.trunc() && x.abs() < 1e15 {
        return format!("{}", x as i64);
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&exp) {
        let s = format!("{:.11e}", x);
        let (m, e) = s.split_once('e').unwrap();
        let m = m.trim_end_matches('0').trim_end_matches('.');
        return format!("{m}e{e}");
    }
    let decimals = (11 - exp).max(0) as usize;
    let s = format!("{:.*}", decimals, x);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub fn to_csv(cfg: &ExperimentConfig, rows: &[Row]) -> String {
    let policy = quote(&cfg.policy_label());
    let topology = quote(&cfg.topology_label());
    let id = quote(&cfg.experiment_id);
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for r in rows {
        let rep = match r.rep {
            Rep::Index(i) => i.to_string(),
            Rep::Mean => "mean".into(),
        };
        let stderr = r.stderr.map(fmt_num).unwrap_or_default();
        out.push_str(&format!(
            "{id},{},{},{policy},{topology},{},{rep},{},{},{stderr}\n",
            r.n,
            fmt_num(r.lambda),
            r.seed,
            quote(&r.metric),
            fmt_num(r.value)
        ));
    }
    out
}

/// Output path: `<dir>/<experiment_id>.csv` unless the config names a file.
pub fn output_path(cfg: &ExperimentConfig, dir: Option<&Path>) -> PathBuf {
    match (&cfg.output, dir) {
        (_, Some(d)) => d.join(format!("{}.csv", cfg.experiment_id)),
        (Some(o), None) => PathBuf::from(o),
        (None, None) => PathBuf::from(format!("{}.csv", cfg.experiment_id)),
    }
}

/// Writes to `<path>.partial` then renames, so a crash never leaves a
/// truncated CSV under the final name.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut partial = path.as_os_str().to_os_string();
    partial.push(".partial");
    let partial = PathBuf::from(partial);
    {
        let mut f = fs::File::create(&partial)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&partial, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_format_compactly() {
        assert_eq!(fmt_num(3.0), "3");
        assert_eq!(fmt_num(0.1), "0.1");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(1e-7), "1e-7");
        assert_eq!(fmt_num(-2.5), "-2.5");
        assert_eq!(fmt_num(f64::NAN), "nan");
        assert_eq!(fmt_num(1e20), "1e20");
    }

    #[test]
    fn fields_with_commas_are_quoted() {
        assert_eq!(quote("law[1,2]"), "\"law[1,2]\"");
        assert_eq!(quote("q1"), "q1");
    }

    #[test]
    fn atomic_write_leaves_no_partial() {
        let dir = std::env::temp_dir().join(format!("lbmesh-out-{}", std::process::id()));
        let p = dir.join("x.csv");
        write_atomic(&p, "a\n").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a\n");
        assert!(!dir.join("x.csv.partial").exists());
        fs::remove_dir_all(dir).unwrap();
    }
}
