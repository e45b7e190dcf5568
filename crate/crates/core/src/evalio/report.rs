use std::fmt::Display;

use crate::error::{Error, Result};

/// Flat `name=value` metrics report, one entry per line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry; keys must not contain `=` or newlines.
    pub fn push(&mut self, key: &str, value: impl Display) -> &mut Self {
        debug_assert!(!key.contains(['=', '\n']));
        self.entries.push((key.to_owned(), value.to_string().replace('\n', " ")));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("report line {}: missing '='", i + 1)))?;
            entries.push((k.to_owned(), v.to_owned()));
        }
        Ok(Self { entries })
    }
}
