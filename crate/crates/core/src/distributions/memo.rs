use std::collections::HashMap;
use std::hash::Hash;

/// Per-trace cache for a stochastic function: each argument is randomized at most once.
///
/// The table lives inside the model run, so replay-based branching rebuilds it
/// from the recorded choices and children start from the parent's contents.
#[derive(Clone, Debug)]
pub struct MemoTable<K, V> {
    entries: HashMap<K, V>,
}

impl<K: Eq + Hash, V: PartialEq> PartialEq for MemoTable<K, V> {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl<K, V> Default for MemoTable<K, V> {
    fn default() -> Self {
        Self { entries: HashMap::new() }
    }
}

impl<K: Eq + Hash, V: Clone> MemoTable<K, V> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the stored value for `key`, or runs `f` once and stores its result.
    pub fn invoke<E>(&mut self, key: K, f: impl FnOnce() -> Result<V, E>) -> Result<V, E> {
        if let Some(v) = self.entries.get(&key) {
            return Ok(v.clone());
        }
        let v = f()?;
        self.entries.insert(key, v.clone());
        Ok(v)
    }

    pub fn get(&self, key: &K) -> Option<&V> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
