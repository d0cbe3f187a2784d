use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dataset::SensorTag;
use crate::error::{Error, Result};

/// One ingestion rule: a glob over paths relative to the dataset root, the
/// sensor tag to assign, and how to find the matching mask file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayoutRule {
    /// Glob pattern (`*`, `**`, `?`) matched against the relative image path.
    pub pattern: String,
    pub sensor: SensorTag,
    /// Appended to the image stem to form the mask stem, e.g. `_mask`.
    #[serde(default)]
    pub mask_suffix: String,
    /// Directory (relative to the image's directory) holding the masks.
    /// Empty means the image's own directory.
    #[serde(default)]
    pub mask_dir: String,
}

/// Declarative description of a dataset directory, loaded from TOML:
///
/// ```toml
/// [[rule]]
/// pattern = "ubiris/**"
/// sensor = "ubiris_v2"
/// mask_suffix = "_mask"
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayoutConfig {
    #[serde(rename = "rule")]
    pub rules: Vec<LayoutRule>,
}

impl LayoutConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: LayoutConfig =
            toml::from_str(text).map_err(|e| Error::Layout(e.to_string()))?;
        if cfg.rules.is_empty() {
            return Err(Error::Layout("layout has no rules".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// A single-rule layout: every image is tagged `sensor`, masks live next
    /// to the images with the given stem suffix.
    pub fn flat(sensor: SensorTag, mask_suffix: &str) -> Self {
        LayoutConfig {
            rules: vec![LayoutRule {
                pattern: "**".into(),
                sensor,
                mask_suffix: mask_suffix.into(),
                mask_dir: String::new(),
            }],
        }
    }

    /// First rule whose pattern matches the relative path.
    pub fn rule_for(&self, rel_path: &str) -> Option<&LayoutRule> {
        self.rules
            .iter()
            .find(|r| glob_match(&r.pattern, rel_path))
    }
}

/// Matches a glob against a `/`-separated relative path.
/// `*` and `?` do not cross `/`; `**` matches any number of components.
pub fn glob_match(pattern: &str, path: &str) -> bool {
    glob_regex(pattern).is_match(path)
}

fn glob_regex(pattern: &str) -> Regex {
    let mut re = String::from("^");
    let mut chars = pattern.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '*' => {
                if chars.peek() == Some(&'*') {
                    chars.next();
                    // swallow a following slash so `a/**/b` also matches `a/b`
                    if chars.peek() == Some(&'/') {
                        chars.next();
                        re.push_str("(?:[^/]*/)*");
                    } else {
                        re.push_str(".*");
                    }
                } else {
                    re.push_str("[^/]*");
                }
            }
            '?' => re.push_str("[^/]"),
            c => re.push_str(&regex::escape(&c.to_string())),
        }
    }
    re.push('$');
    Regex::new(&re).expect("generated glob regex")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glob_basics() {
        assert!(glob_match("**", "a/b/c.png"));
        assert!(glob_match("*.png", "c.png"));
        assert!(!glob_match("*.png", "a/c.png"));
        assert!(glob_match("ubiris/**", "ubiris/x/y.jpg"));
        assert!(!glob_match("ubiris/**", "miche/x.jpg"));
        assert!(glob_match("a/**/b.png", "a/b.png"));
        assert!(glob_match("a/**/b.png", "a/x/y/b.png"));
        assert!(glob_match("img_???.png", "img_042.png"));
    }

    #[test]
    fn parses_toml_layout() {
        let cfg = LayoutConfig::from_toml(
            r#"
            [[rule]]
            pattern = "ubiris/**"
            sensor = "ubiris_v2"
            mask_suffix = "_mask"

            [[rule]]
            pattern = "miche/gs4/**"
            sensor = "miche_gs4"
            mask_dir = "masks"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.rules.len(), 2);
        assert_eq!(
            cfg.rule_for("ubiris/session1/img.png").unwrap().sensor,
            SensorTag::UbirisV2
        );
        assert_eq!(
            cfg.rule_for("miche/gs4/img.png").unwrap().sensor,
            SensorTag::MicheGs4
        );
        assert!(cfg.rule_for("other/img.png").is_none());
    }
}
