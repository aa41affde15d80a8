use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Named implementations of a strategy trait, looked up at runtime.
pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<String, Box<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Registers `item` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: &str, item: Box<T>) {
        self.entries.insert(name.to_string(), item);
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries.get(name).map(|b| b.as_ref()).ok_or_else(|| {
            Error::NotFound(format!(
                "{} {name:?} (known: {})",
                self.kind,
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greet {
        fn hello(&self) -> String;
    }

    struct En;
    impl Greet for En {
        fn hello(&self) -> String {
            "hello".into()
        }
    }

    #[test]
    fn lookup_by_name() {
        let mut reg: Registry<dyn Greet> = Registry::new("greeter");
        reg.register("en", Box::new(En));
        assert_eq!(reg.get("en").unwrap().hello(), "hello");
        assert_eq!(reg.names(), vec!["en"]);
        let err = reg.get("fr").err().unwrap().to_string();
        assert!(err.contains("greeter") && err.contains("en"), "{err}");
    }
}
