//! Name-keyed lookup tables for interchangeable strategies.

use indexmap::IndexMap;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("unknown {kind} {name:?} (available: {available})")]
pub struct UnknownName {
    pub kind: &'static str,
    pub name: String,
    pub available: String,
}

#[derive(Debug, Clone)]
pub struct Registry<T> {
    kind: &'static str,
    entries: IndexMap<String, T>,
}

impl<T> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: IndexMap::new(),
        }
    }

    /// Adds or replaces the entry under `name`.
    pub fn register(&mut self, name: impl Into<String>, entry: T) -> &mut Self {
        self.entries.insert(name.into(), entry);
        self
    }

    pub fn get(&self, name: &str) -> Result<&T, UnknownName> {
        self.entries.get(name).ok_or_else(|| UnknownName {
            kind: self.kind,
            name: name.to_string(),
            available: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_and_unknown() {
        let mut r = Registry::new("layout");
        r.register("a", 1).register("b", 2);
        assert_eq!(*r.get("b").unwrap(), 2);
        let err = r.get("c").unwrap_err();
        assert_eq!(err.to_string(), "unknown layout \"c\" (available: a, b)");
    }
}
