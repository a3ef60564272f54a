use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Something that can be looked up by a stable name.
pub trait Named {
    fn name(&self) -> &'static str;
}

/// Interchangeable strategies behind one trait, selected by name at runtime.
pub struct Registry<T: ?Sized + Named> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Arc<T>>,
    default: Option<&'static str>,
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self { kind, entries: BTreeMap::new(), default: None }
    }

    /// Adds a strategy; a later registration under the same name replaces it.
    pub fn register(&mut self, strategy: Arc<T>) -> &mut Self {
        self.entries.insert(strategy.name(), strategy);
        self
    }

    pub fn with(mut self, strategy: Arc<T>) -> Self {
        self.register(strategy);
        self
    }

    pub fn with_default(mut self, name: &'static str) -> Self {
        debug_assert!(self.entries.contains_key(name));
        self.default = Some(name);
        self
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        self.entries.get(name).cloned().ok_or_else(|| {
            Error::Parameter(format!(
                "unknown {} '{name}' (available: {})",
                self.kind,
                self.names().join(", ")
            ))
        })
    }

    /// The named strategy, or the default when `name` is `None`.
    pub fn resolve(&self, name: Option<&str>) -> Result<Arc<T>> {
        match name.or(self.default) {
            Some(n) => self.get(n),
            None => Err(Error::Parameter(format!("no default {} registered", self.kind))),
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn default_name(&self) -> Option<&'static str> {
        self.default
    }
}

impl<T: ?Sized + Named> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("kind", &self.kind)
            .field("entries", &self.names())
            .field("default", &self.default)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter: Named {
        fn greet(&self) -> String;
    }

    struct Hello;
    impl Named for Hello {
        fn name(&self) -> &'static str {
            "hello"
        }
    }
    impl Greeter for Hello {
        fn greet(&self) -> String {
            "hello".into()
        }
    }

    #[test]
    fn lookup_and_default() {
        let hello: Arc<dyn Greeter> = Arc::new(Hello);
        let r = Registry::new("greeter").with(hello).with_default("hello");
        assert_eq!(r.resolve(None).unwrap().greet(), "hello");
        assert_eq!(r.get("hello").unwrap().greet(), "hello");
        let Err(err) = r.get("bye") else { panic!("unexpected strategy") };
        assert!(err.to_string().contains("available: hello"));
    }
}
