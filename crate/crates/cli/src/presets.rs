//! Configurations shipped with the binary.

use anyhow::{anyhow, Result};

pub const PRESETS: [(&str, &str); 8] = [
    ("fig2a", include_str!("../presets/fig2a.toml")),
    ("fig2b", include_str!("../presets/fig2b.toml")),
    ("fig3a", include_str!("../presets/fig3a.toml")),
    ("fig3b", include_str!("../presets/fig3b.toml")),
    ("fig3d-desk", include_str!("../presets/fig3d-desk.toml")),
    ("fig3e-desk", include_str!("../presets/fig3e-desk.toml")),
    ("figS2", include_str!("../presets/figS2.toml")),
    ("figS5", include_str!("../presets/figS5.toml")),
];

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn get(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| anyhow!("unknown preset '{name}'; available: {}", names().join(", ")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config;

    #[test]
    fn every_preset_parses() {
        for (name, text) in PRESETS {
            let cfg = config::parse(text).unwrap_or_else(|e| panic!("{name}: {e:#}"));
            assert_eq!(cfg.meta.name, name);
            assert!(cfg.meta.desk_scale);
        }
    }

    #[test]
    fn unknown_preset_lists_the_known_ones() {
        let err = get("nope").unwrap_err().to_string();
        assert!(err.contains("fig2a"));
    }
}
