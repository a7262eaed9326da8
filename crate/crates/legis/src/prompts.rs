//! Versioned prompt assets. Built-in copies are compiled in; a directory with
//! files of the same names overrides them without rebuilding.

use std::path::Path;

pub const PROMPT_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompts {
    pub version: String,
    pub system: String,
    pub step1: String,
    pub step1_retry: String,
    pub step3: String,
}

impl Default for Prompts {
    fn default() -> Self {
        Prompts {
            version: PROMPT_VERSION.into(),
            system: include_str!("../prompts/system.v1.txt").into(),
            step1: include_str!("../prompts/step1.v1.txt").into(),
            step1_retry: include_str!("../prompts/step1_retry.v1.txt").into(),
            step3: include_str!("../prompts/step3.v1.txt").into(),
        }
    }
}

impl Prompts {
    /// Built-ins, with any `<name>.<version>.txt` found in `dir` taking precedence.
    pub fn load_dir(dir: &Path, version: &str) -> std::io::Result<Self> {
        let mut p = Prompts {
            version: version.into(),
            ..Prompts::default()
        };
        for (name, slot) in [
            ("system", &mut p.system),
            ("step1", &mut p.step1),
            ("step1_retry", &mut p.step1_retry),
            ("step3", &mut p.step3),
        ] {
            let path = dir.join(format!("{name}.{version}.txt"));
            if path.exists() {
                *slot = std::fs::read_to_string(path)?;
            }
        }
        Ok(p)
    }
}

/// Replaces `{key}` placeholders. Unknown placeholders are left alone.
pub fn render(template: &str, vars: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

/// First and last calendar year of a Congress.
pub fn congress_years(congress: u32) -> (u32, u32) {
    let start = 1787 + 2 * congress;
    (start, start + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn years_and_rendering() {
        assert_eq!(congress_years(113), (2013, 2014));
        assert_eq!(congress_years(118), (2023, 2024));
        let p = Prompts::default();
        let s = render(&p.step1, &[("congress", "113".into()), ("start_year", "2013".into()), ("end_year", "2014".into())]);
        assert!(s.contains("113th Congress (2013-2014)"));
        assert!(!s.contains("{start_year}"));
    }

    #[test]
    fn directory_overrides() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("step3.v2.txt"), "check {bill_id}").unwrap();
        let p = Prompts::load_dir(dir.path(), "v2").unwrap();
        assert_eq!(p.step3, "check {bill_id}");
        assert_eq!(p.system, Prompts::default().system);
    }
}
