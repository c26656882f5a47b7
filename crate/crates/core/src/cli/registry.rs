//! Dataset registry: a TOML file listing CSV datasets and their pretrained
//! source checkpoints.
//!
//! ```toml
//! [[dataset]]
//! name = "heart"
//! csv = "data/heart.csv"
//! label_column = "target"
//! positive_label = "1"
//! checkpoint = "models/heart.json"   # optional
//! ```
//!
//! Relative paths resolve against the registry file's directory. An entry
//! without `checkpoint` uses `checkpoints/<name>.json` there.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_csv, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryEntry {
    pub name: String,
    pub csv: PathBuf,
    pub label_column: String,
    pub positive_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    #[serde(default)]
    dataset: Vec<RegistryEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    path: PathBuf,
    root: PathBuf,
    /// Raw file contents, kept for hashing.
    text: String,
    entries: Vec<RegistryEntry>,
}

impl Registry {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, path, &root)
    }

    pub fn parse(text: &str, path: &Path, root: &Path) -> Result<Self> {
        let file: RegistryFile =
            toml::from_str(text).map_err(|e| Error::Registry(format!("{}: {e}", path.display())))?;
        let mut seen = BTreeSet::new();
        for e in &file.dataset {
            if e.name.trim().is_empty() {
                return Err(Error::Registry(format!("{}: entry with an empty name", path.display())));
            }
            if !seen.insert(e.name.as_str()) {
                return Err(Error::Registry(format!(
                    "{}: dataset `{}` is listed more than once",
                    path.display(),
                    e.name
                )));
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            root: root.to_path_buf(),
            text: text.to_owned(),
            entries: file.dataset,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&RegistryEntry> {
        self.entries.iter().find(|e| e.name == name).ok_or_else(|| {
            Error::Registry(format!(
                "no dataset named `{name}` in {} (known: {})",
                self.path.display(),
                self.names().join(", ")
            ))
        })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn csv_path(&self, entry: &RegistryEntry) -> PathBuf {
        self.resolve(&entry.csv)
    }

    pub fn checkpoint_path(&self, entry: &RegistryEntry) -> PathBuf {
        match &entry.checkpoint {
            Some(p) => self.resolve(p),
            None => self.root.join("checkpoints").join(format!("{}.json", entry.name)),
        }
    }

    /// Loads the entry's CSV under the entry's name.
    pub fn load_dataset(&self, name: &str) -> Result<Dataset> {
        let e = self.get(name)?;
        Ok(load_csv(self.csv_path(e), &e.label_column, &e.positive_label)?.with_name(&e.name))
    }
}

/// Registry text for datasets stored next to it, one entry per name.
pub fn render_registry(entries: &[RegistryEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str("[[dataset]]\n");
        out.push_str(&format!("name = {:?}\n", e.name));
        out.push_str(&format!("csv = {:?}\n", e.csv.display().to_string()));
        out.push_str(&format!("label_column = {:?}\n", e.label_column));
        out.push_str(&format!("positive_label = {:?}\n", e.positive_label));
        if let Some(c) = &e.checkpoint {
            out.push_str(&format!("checkpoint = {:?}\n", c.display().to_string()));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Registry> {
        Registry::parse(text, Path::new("reg.toml"), Path::new("/data"))
    }

    const TWO: &str = r#"
[[dataset]]
name = "a"
csv = "a.csv"
label_column = "y"
positive_label = "yes"

[[dataset]]
name = "b"
csv = "/abs/b.csv"
label_column = "y"
positive_label = "1"
checkpoint = "m/b.json"
"#;

    #[test]
    fn paths_resolve_against_registry_dir() {
        let r = parse(TWO).unwrap();
        assert_eq!(r.names(), ["a", "b"]);
        let a = r.get("a").unwrap();
        assert_eq!(r.csv_path(a), Path::new("/data/a.csv"));
        assert_eq!(r.checkpoint_path(a), Path::new("/data/checkpoints/a.json"));
        let b = r.get("b").unwrap();
        assert_eq!(r.csv_path(b), Path::new("/abs/b.csv"));
        assert_eq!(r.checkpoint_path(b), Path::new("/data/m/b.json"));
    }

    #[test]
    fn duplicate_and_unknown_names_are_rejected() {
        let dup = format!("{TWO}\n[[dataset]]\nname = \"a\"\ncsv = \"x\"\nlabel_column = \"y\"\npositive_label = \"1\"\n");
        assert!(matches!(parse(&dup), Err(Error::Registry(m)) if m.contains("`a`")));
        let err = parse(TWO).unwrap().get("zzz").unwrap_err().to_string();
        assert!(err.contains("zzz"), "{err}");
        assert!(parse("[[dataset]]\nname = \"a\"\n").is_err());
        assert!(parse("[[dataset]]\nname=\"a\"\ncsv=\"a\"\nlabel_column=\"y\"\npositive_label=\"1\"\nextra=1\n").is_err());
    }

    #[test]
    fn render_round_trips() {
        let r = parse(TWO).unwrap();
        let again = parse(&render_registry(r.entries())).unwrap();
        assert_eq!(again.entries(), r.entries());
    }
}
