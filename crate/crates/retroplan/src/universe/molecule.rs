//! Molecules are canonical strings over a small fixed alphabet.

use std::fmt;

/// A molecule. The canonical string *is* the identity: two molecules are the
/// same exactly when their strings are byte-equal. Size `n_s(m)` is the
/// character count.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Molecule {
    canon: String,
}

impl Molecule {
    pub fn new(canon: impl Into<String>) -> Self {
        Molecule { canon: canon.into() }
    }

    /// Canonical string form.
    pub fn canon(&self) -> &str {
        &self.canon
    }

    /// Molecular size `n_s(m)`; the alphabet is single-byte ASCII so bytes
    /// and characters coincide.
    pub fn size(&self) -> usize {
        self.canon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.canon.is_empty()
    }
}

impl fmt::Display for Molecule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canon)
    }
}

impl From<&str> for Molecule {
    fn from(s: &str) -> Self {
        Molecule::new(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_string_equality() {
        assert_eq!(Molecule::new("abc"), Molecule::from("abc"));
        assert_ne!(Molecule::new("abc"), Molecule::new("acb"));
        assert_eq!(Molecule::new("abcd").size(), 4);
    }
}
