//! Names and name kinds.
//!
//! Every name carries the kind it was declared with. Alpha-conversion and
//! substitution preserve kinds: an output-controlled name may only ever be
//! replaced by another output-controlled name.

use std::fmt;
use std::sync::Arc;

/// The role a name plays with respect to the thread disciplines.
///
/// `Ref` names are input-controlled for sequentiality purposes, and `Cont`
/// names are output-controlled; `is_output_controlled` and
/// `is_input_controlled` encode that refinement.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum NameKind {
    /// Output-controlled: the output particle at this name carries the thread.
    OutCtl,
    /// Input-controlled: the input particle at this name carries the thread.
    InCtl,
    /// Continuation name: linear, receptive, output-controlled.
    Cont,
    /// Reference name: input-controlled, holds a single value.
    Ref,
    /// First-order data value from the configured finite domain.
    Val,
}

impl NameKind {
    pub fn is_output_controlled(self) -> bool {
        matches!(self, NameKind::OutCtl | NameKind::Cont)
    }

    pub fn is_input_controlled(self) -> bool {
        matches!(self, NameKind::InCtl | NameKind::Ref)
    }

    /// May the name appear as the subject of a prefix?
    pub fn is_channel(self) -> bool {
        !matches!(self, NameKind::Val)
    }

    /// Short sigil used when inventing machine names.
    pub fn sigil(self) -> char {
        match self {
            NameKind::OutCtl => 'o',
            NameKind::InCtl => 'i',
            NameKind::Cont => 'c',
            NameKind::Ref => 'r',
            NameKind::Val => 'v',
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            NameKind::OutCtl => "out",
            NameKind::InCtl => "in",
            NameKind::Cont => "cont",
            NameKind::Ref => "ref",
            NameKind::Val => "val",
        }
    }
}

impl fmt::Display for NameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// An identifier together with its declared kind.
///
/// Cloning is cheap (shared string). Ordering is by identifier first so
/// reports stay readable.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name {
    pub id: Arc<str>,
    pub kind: NameKind,
}

impl Name {
    pub fn new(id: &str, kind: NameKind) -> Self {
        Name { id: Arc::from(id), kind }
    }

    pub fn val(v: u32) -> Self {
        Name::new(&v.to_string(), NameKind::Val)
    }

    /// Numeric value of a `Val` name, if it is a literal.
    pub fn as_val(&self) -> Option<u32> {
        if self.kind == NameKind::Val {
            self.id.parse().ok()
        } else {
            None
        }
    }

    /// Machine-generated names start with `#`; the parser never produces them
    /// from ordinary source files, so they are always fresh w.r.t. user names.
    pub fn is_machine(&self) -> bool {
        self.id.starts_with('#')
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.id, self.kind)
    }
}

/// Deterministic supply of fresh names with a fixed kind, avoiding a given
/// set of identifiers. Produces `#<sigil><n>` identifiers.
pub fn fresh_name(kind: NameKind, avoid: &mut std::collections::BTreeSet<Arc<str>>) -> Name {
    let mut i = 0usize;
    loop {
        let id = format!("#{}{}", kind.sigil(), i);
        if !avoid.contains(id.as_str()) {
            let n = Name::new(&id, kind);
            avoid.insert(n.id.clone());
            return n;
        }
        i += 1;
    }
}
