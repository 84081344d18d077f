//! Small shared helpers: hashing, float formatting, atomic writes.

use std::io::Write;
use std::path::Path;

/// FNV-1a 64 bit hash. Used for config fingerprints embedded in run
/// records; stability across runs matters, cryptographic strength does not.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hex fingerprint of a canonical configuration string.
pub fn config_fingerprint(canonical: &str) -> String {
    format!("{:016x}", fnv1a64(canonical.as_bytes()))
}

/// Format a float with 17 significant digits, '.' decimal separator.
/// Round-trips every finite f64.
pub fn fmt_sig17(x: f64) -> String {
    if x == 0.0 {
        return "0.0".to_string();
    }
    format!("{:.16e}", x)
}

/// Write `contents` to `path` atomically: temp file in the same
/// directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        path.file_name().map(|s| s.to_string_lossy()).unwrap_or_default(),
        std::process::id()
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

/// Mean and standard error of a weighted merge of substream moments.
/// Each entry is (sum, sum of squares, count).
pub fn merge_moments(parts: &[(f64, f64, u64)]) -> (f64, f64, u64) {
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    let mut n = 0u64;
    for &(s, s2, c) in parts {
        sum += s;
        sumsq += s2;
        n += c;
    }
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = sum / n as f64;
    let var = ((sumsq - sum * sum / n as f64) / ((n as f64 - 1.0).max(1.0))).max(0.0);
    let stderr = (var / n as f64).sqrt();
    (mean, stderr, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_is_stable() {
        assert_eq!(config_fingerprint("a"), config_fingerprint("a"));
        assert_ne!(config_fingerprint("a"), config_fingerprint("b"));
    }

    #[test]
    fn sig17_round_trips() {
        for &x in &[1.0 / 3.0, 6.02e23, -1.25e-300, 0.1, 2.0_f64.powi(-52)] {
            let s = fmt_sig17(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, x, "{s}");
        }
    }

    #[test]
    fn moments_merge_matches_flat_computation() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64) * 0.01).collect();
        let flat: (f64, f64, u64) = {
            let s: f64 = xs.iter().sum();
            let s2: f64 = xs.iter().map(|x| x * x).sum();
            merge_moments(&[(s, s2, xs.len() as u64)])
        };
        let split: (f64, f64, u64) = {
            let (a, b) = xs.split_at(37);
            let part = |v: &[f64]| {
                (
                    v.iter().sum::<f64>(),
                    v.iter().map(|x| x * x).sum::<f64>(),
                    v.len() as u64,
                )
            };
            merge_moments(&[part(a), part(b)])
        };
        assert!((flat.0 - split.0).abs() < 1e-14);
        assert!((flat.1 - split.1).abs() < 1e-14);
        assert_eq!(flat.2, split.2);
    }
}
