//! Provenance stamps for output files.
//!
//! Every artifact the harness writes (metrics, evaluation tables, scenario
//! sets) starts with comment lines recording the command, seed, and content
//! hashes of its inputs, so any number in any file can be traced back to
//! exactly the bytes that produced it.

use sha2::{Digest, Sha256};

/// Content hash of a byte blob: SHA-256 over a `blob <len>\0` header plus
/// the payload (same framing scheme git uses), hex-encoded.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", bytes.len()).as_bytes());
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Renders `key=value` pairs as `#`-prefixed header lines. Keys and values
/// must not contain newlines; values with spaces are fine (the line format
/// is `# key=value` with everything after `=` belonging to the value).
pub fn manifest_header(command: &str, pairs: &[(&str, String)]) -> String {
    let mut out = String::new();
    out.push_str(&format!("# command={command}\n"));
    for (k, v) in pairs {
        debug_assert!(!k.contains('\n') && !v.contains('\n'));
        out.push_str(&format!("# {k}={v}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_matches_reference_vector() {
        // SHA-256("blob 0\0") — the hash of empty content under this framing.
        assert_eq!(
            content_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
        // Stable across calls, sensitive to every byte.
        assert_eq!(content_hash(b"abc"), content_hash(b"abc"));
        assert_ne!(content_hash(b"abc"), content_hash(b"abd"));
        assert_ne!(content_hash(b"abc"), content_hash(b"ab"));
    }

    #[test]
    fn header_lines_are_comments() {
        let h = manifest_header("eval", &[("seed", "7".into()), ("beta", "0.5".into())]);
        assert_eq!(h, "# command=eval\n# seed=7\n# beta=0.5\n");
        assert!(h.lines().all(|l| l.starts_with('#')));
    }
}
