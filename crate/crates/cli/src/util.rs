//! Suffixed-literal parsing for sizes, bandwidths, and element counts.

use anyhow::{bail, Result};

/// Parse a byte size: bare bytes, decimal suffixes `KB`/`MB`/`GB`/`TB`
/// (powers of 1000), or binary suffixes `KiB`/`MiB`/`GiB`/`TiB` (powers of
/// 1024). A trailing `/s` is accepted so bandwidths read naturally.
pub fn parse_size_bytes(s: &str) -> Result<f64> {
    let s = s.trim();
    let s = s.strip_suffix("/s").unwrap_or(s).trim();
    let split = s
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '_'))
        .unwrap_or(s.len());
    let (num, suffix) = s.split_at(split);
    let value: f64 = num.replace('_', "").parse().map_err(|_| {
        anyhow::anyhow!("`{s}`: expected a number with an optional KB/MB/GB/KiB/MiB/GiB suffix")
    })?;
    let scale = match suffix.trim() {
        "" | "B" | "b" => 1.0,
        "KB" | "kB" | "kb" => 1e3,
        "MB" | "mb" => 1e6,
        "GB" | "gb" => 1e9,
        "TB" | "tb" => 1e12,
        "KiB" | "kib" => 1024.0,
        "MiB" | "mib" => 1024.0 * 1024.0,
        "GiB" | "gib" => 1024.0 * 1024.0 * 1024.0,
        "TiB" | "tib" => 1024.0f64 * 1024.0 * 1024.0 * 1024.0,
        other => bail!("`{s}`: unknown size suffix `{other}`"),
    };
    let bytes = value * scale;
    if !(bytes >= 0.0 && bytes.is_finite()) {
        bail!("`{s}`: size out of range");
    }
    Ok(bytes)
}

/// Parse an element count: a plain integer (underscores allowed) or
/// scientific notation like `671e9`.
pub fn parse_count(s: &str) -> Result<u64> {
    let cleaned = s.trim().replace('_', "");
    if let Ok(n) = cleaned.parse::<u64>() {
        return Ok(n);
    }
    let as_float: f64 = cleaned
        .parse()
        .map_err(|_| anyhow::anyhow!("`{s}` is not a count"))?;
    if !(as_float.is_finite() && as_float >= 0.0 && as_float <= 2f64.powi(63)) {
        bail!("`{s}` is out of the countable range");
    }
    if as_float.fract() != 0.0 {
        bail!("`{s}` is not a whole number of elements");
    }
    Ok(as_float as u64)
}

/// Render a byte count with a decimal-unit suffix for human output.
pub fn format_bytes(bytes: f64) -> String {
    const UNITS: [(&str, f64); 4] = [("TB", 1e12), ("GB", 1e9), ("MB", 1e6), ("KB", 1e3)];
    for (name, scale) in UNITS {
        if bytes >= scale {
            return format!("{:.3} {name}", bytes / scale);
        }
    }
    format!("{bytes:.0} B")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(parse_size_bytes("80MB").unwrap(), 80e6);
        assert_eq!(parse_size_bytes("80MB/s").unwrap(), 80e6);
        assert_eq!(parse_size_bytes("1MiB").unwrap(), 1048576.0);
        assert_eq!(parse_size_bytes("22.7GB").unwrap(), 22.7e9);
        assert_eq!(parse_size_bytes("512").unwrap(), 512.0);
        assert_eq!(parse_size_bytes("1_000KB").unwrap(), 1e6);
        assert!(parse_size_bytes("12XB").is_err());
        assert!(parse_size_bytes("").is_err());
    }

    #[test]
    fn counts() {
        assert_eq!(parse_count("671000000000").unwrap(), 671_000_000_000);
        assert_eq!(parse_count("671e9").unwrap(), 671_000_000_000);
        assert_eq!(parse_count("2_000_000").unwrap(), 2_000_000);
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("abc").is_err());
    }

    #[test]
    fn byte_formatting() {
        assert_eq!(format_bytes(1342e9), "1.342 TB");
        assert_eq!(format_bytes(2e6), "2.000 MB");
        assert_eq!(format_bytes(17.0), "17 B");
    }
}
