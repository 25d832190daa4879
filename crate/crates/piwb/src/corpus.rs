//! Placeholder; filled in after the library compiles.
pub fn load_corpus() {}
