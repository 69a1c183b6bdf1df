//! `key = value` files with `[section]` headers and `#` comments.

use crate::error::{FgcError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Section {
    /// Empty for entries before the first header.
    pub name: String,
    pub entries: Vec<(String, String)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub sections: Vec<Section>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections = vec![Section::default()];
        for (n, raw) in text.lines().enumerate() {
            let loc = format!("line {}", n + 1);
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| FgcError::parse(&loc, "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(FgcError::parse(&loc, "empty section name"));
                }
                sections.push(Section {
                    name: name.to_string(),
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| FgcError::parse(&loc, format!("expected `key = value`, got {line:?}")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(FgcError::parse(&loc, "empty key"));
            }
            sections
                .last_mut()
                .expect("never empty")
                .entries
                .push((key.to_string(), value.trim().to_string()));
        }
        Ok(Self { sections })
    }

    /// All entries of every section called `name`, in file order.
    pub fn section<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a (String, String)> {
        self.sections
            .iter()
            .filter(move |s| s.name == name)
            .flat_map(|s| s.entries.iter())
    }

    /// Last value of `key` in section `name`.
    pub fn get<'a>(&'a self, name: &'a str, key: &str) -> Option<&'a str> {
        self.section(name)
            .filter(|(k, _)| k == key)
            .last()
            .map(|(_, v)| v.as_str())
    }
}

/// Comma-separated list; blanks dropped.
pub fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_comments_and_repeats() {
        let cfg = ConfigFile::parse("top = 1\n# note\n[fit]\nxi = 0.1 # inline\n\n[fit]\nxi=0.2\n").unwrap();
        assert_eq!(cfg.get("", "top"), Some("1"));
        assert_eq!(cfg.get("fit", "xi"), Some("0.2"));
        assert_eq!(cfg.section("fit").count(), 2);
        assert_eq!(cfg.get("fit", "beta"), None);
    }

    #[test]
    fn malformed_lines_report_their_number() {
        let err = ConfigFile::parse("[a]\nnot a pair\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
        assert!(ConfigFile::parse("[open\n").is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(split_list("unified, corr,,knn "), vec!["unified", "corr", "knn"]);
    }
}
