//! Placeholder; filled in after the corpus module.
