//! Layered key/value settings: values recorded in an upstream manifest, then the
//! config file (its header-less part, then the command's section), then flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use ini::Ini;

#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

pub type Flags = Vec<(&'static str, Option<String>)>;

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

/// Flag helper: `("key", Some(value.to_string()))`.
pub fn flag<T: Display>(key: &'static str, v: &Option<T>) -> (&'static str, Option<String>) {
    (key, v.as_ref().map(|x| x.to_string()))
}

impl Settings {
    /// Adds the header-less part and the `[section]` part of an INI-style file.
    /// Keys outside `known` are rejected so that typos do not pass silently.
    pub fn merge_file(&mut self, path: &Path, section: &str, known: &[&str]) -> Result<()> {
        let ini = Ini::load_from_file(path).with_context(|| format!("reading config file {}", path.display()))?;
        for (name, props) in ini.iter() {
            let applies = match name {
                None => true,
                Some(s) => s.trim() == section,
            };
            if !applies {
                continue;
            }
            for (k, v) in props.iter() {
                let key = normalize(k);
                if !known.contains(&key.as_str()) {
                    bail!("{}: unknown key `{k}` for `{section}`", path.display());
                }
                self.values.insert(key, v.trim().to_string());
            }
        }
        Ok(())
    }

    pub fn merge_flags(&mut self, flags: Flags) {
        for (k, v) in flags {
            if let Some(v) = v {
                self.values.insert(k.to_string(), v);
            }
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(normalize(key), value.into());
    }

    pub fn map(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(s) => s.parse().map(Some).map_err(|e| anyhow!("bad value `{s}` for `{key}`: {e}")),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.get(key)?.ok_or_else(|| anyhow!("missing required setting `{key}` (flag --{})", key.replace('_', "-")))
    }

    /// Comma-separated list; an empty value is an empty list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        let Some(s) = self.raw(key) else { return Ok(None) };
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| p.parse().map_err(|e| anyhow!("bad list item `{p}` for `{key}`: {e}")))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layering_and_lists() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.ini");
        std::fs::write(&path, "fc = 9\nnoise = 1e-3\n[solve]\nrho = 10\n[generate]\nfc = 4\n").unwrap();
        let mut s = Settings::default();
        s.set("fc", "2");
        s.merge_file(&path, "solve", &["fc", "noise", "rho"]).unwrap();
        assert_eq!(s.require::<usize>("fc").unwrap(), 9);
        assert_eq!(s.require::<f64>("rho").unwrap(), 10.0);
        s.merge_flags(vec![("rho", Some("0.5".into())), ("noise", None)]);
        assert_eq!(s.require::<f64>("rho").unwrap(), 0.5);
        assert_eq!(s.require::<f64>("noise").unwrap(), 1e-3);
        s.set("r", "1, 2,3");
        assert_eq!(s.list::<usize>("r").unwrap().unwrap(), vec![1, 2, 3]);
        s.set("r", "");
        assert!(s.list::<usize>("r").unwrap().unwrap().is_empty());
        assert!(s.require::<usize>("missing").is_err());
        let mut t = Settings::default();
        assert!(t.merge_file(&path, "solve", &["fc"]).is_err());
    }
}
