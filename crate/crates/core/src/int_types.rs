//! Integer type layouts used for range reasoning.
//!
//! The default table assumes an LP64 target: `int` is 32 bits, `long` and
//! `long long` are 64 bits.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntLayout {
    pub bits: u32,
    pub signed: bool,
}

impl IntLayout {
    pub const fn new(bits: u32, signed: bool) -> Self {
        Self { bits, signed }
    }

    pub fn min(&self) -> i128 {
        if self.bits == 1 || !self.signed {
            0
        } else {
            -(1i128 << (self.bits - 1))
        }
    }

    pub fn max(&self) -> i128 {
        if self.bits == 1 {
            1
        } else if self.signed {
            (1i128 << (self.bits - 1)) - 1
        } else {
            (1i128 << self.bits) - 1
        }
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::new(self.min(), self.max())
    }

    pub fn contains(&self, value: i128) -> bool {
        self.min() <= value && value <= self.max()
    }

    /// e.g. "64-bit signed integer".
    pub fn describe(&self) -> String {
        if self.bits == 1 {
            return "boolean".to_string();
        }
        format!(
            "{}-bit {} integer",
            self.bits,
            if self.signed { "signed" } else { "unsigned" }
        )
    }
}

/// Closed integer interval `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bounds {
    pub min: i128,
    pub max: i128,
}

impl Bounds {
    pub fn new(min: i128, max: i128) -> Self {
        debug_assert!(min <= max);
        Self { min, max }
    }

    pub fn point(v: i128) -> Self {
        Self { min: v, max: v }
    }

    pub fn is_within(&self, outer: &Bounds) -> bool {
        outer.min <= self.min && self.max <= outer.max
    }

    pub fn union(&self, other: &Bounds) -> Bounds {
        Bounds::new(self.min.min(other.min), self.max.max(other.max))
    }
}

impl fmt::Display for Bounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.min, self.max)
    }
}

/// Name → layout lookup with C++ spelling normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeTable {
    entries: BTreeMap<String, IntLayout>,
}

impl Default for TypeTable {
    fn default() -> Self {
        Self::lp64()
    }
}

impl TypeTable {
    pub fn lp64() -> Self {
        let mut t = BTreeMap::new();
        let mut add = |names: &[&str], bits, signed| {
            for n in names {
                t.insert(n.to_string(), IntLayout::new(bits, signed));
            }
        };
        add(&["bool"], 1, false);
        add(&["char", "signed char", "int8_t"], 8, true);
        add(&["unsigned char", "uint8_t", "char8_t"], 8, false);
        add(&["short", "int16_t"], 16, true);
        add(&["unsigned short", "uint16_t", "char16_t"], 16, false);
        add(&["int", "int32_t", "wchar_t"], 32, true);
        add(&["unsigned int", "uint32_t", "char32_t"], 32, false);
        add(
            &["long", "long long", "int64_t", "ssize_t", "ptrdiff_t", "intptr_t", "intmax_t"],
            64,
            true,
        );
        add(
            &["unsigned long", "unsigned long long", "uint64_t", "size_t", "uintptr_t", "uintmax_t"],
            64,
            false,
        );
        Self { entries: t }
    }

    /// Overrides or adds one entry.
    pub fn insert(&mut self, name: &str, layout: IntLayout) {
        self.entries.insert(normalize_type_name(name), layout);
    }

    pub fn layout(&self, name: &str) -> Option<IntLayout> {
        self.entries.get(&normalize_type_name(name)).copied()
    }

    pub fn bounds(&self, name: &str) -> Option<Bounds> {
        self.layout(name).map(|l| l.bounds())
    }
}

/// Canonical spelling: drops cv-qualifiers, `std::`, the redundant `int` in
/// `long int`/`short int`, and `signed` where it is the default.
pub fn normalize_type_name(name: &str) -> String {
    let cleaned = name.replace("std::", "");
    let mut words: Vec<&str> = cleaned
        .split_whitespace()
        .filter(|w| !matches!(*w, "const" | "volatile" | "struct" | "enum"))
        .collect();
    let has = |w: &[&str], s: &str| w.contains(&s);
    if words.len() > 1 && (has(&words, "long") || has(&words, "short")) {
        words.retain(|w| *w != "int");
    }
    if has(&words, "unsigned") && words.len() == 1 {
        return "unsigned int".to_string();
    }
    if has(&words, "signed") {
        if words == ["signed"] {
            return "int".to_string();
        }
        if !has(&words, "char") {
            words.retain(|w| *w != "signed");
        }
    }
    // `long unsigned` style orderings.
    if has(&words, "unsigned") && words[0] != "unsigned" {
        words.retain(|w| *w != "unsigned");
        words.insert(0, "unsigned");
    }
    words.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp64_ranges() {
        let t = TypeTable::default();
        assert_eq!(t.bounds("int"), Some(Bounds::new(i32::MIN as i128, i32::MAX as i128)));
        assert_eq!(t.bounds("long long int").unwrap().max, i64::MAX as i128);
        assert_eq!(t.bounds("unsigned long").unwrap().max, u64::MAX as i128);
        assert_eq!(t.bounds("std::uint8_t"), Some(Bounds::new(0, 255)));
        assert_eq!(t.bounds("const short"), Some(Bounds::new(-32768, 32767)));
        assert_eq!(t.bounds("bool"), Some(Bounds::new(0, 1)));
        assert_eq!(t.layout("double"), None);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_type_name("unsigned"), "unsigned int");
        assert_eq!(normalize_type_name("signed int"), "int");
        assert_eq!(normalize_type_name("signed char"), "signed char");
        assert_eq!(normalize_type_name("long unsigned int"), "unsigned long");
        assert_eq!(normalize_type_name("short int"), "short");
    }

    #[test]
    fn describe_matches_prompt_style() {
        assert_eq!(IntLayout::new(64, true).describe(), "64-bit signed integer");
        assert_eq!(IntLayout::new(32, true).describe(), "32-bit signed integer");
    }
}
