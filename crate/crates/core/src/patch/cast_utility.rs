//! The checked-cast header and the include line that pulls it in.

use std::fs;
use std::io::Write;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use super::{split_lines, Hunk, PatchError};

pub const CAST_HEADER_NAME: &str = "safe_int_cast.h";

/// Comparisons go through tag dispatch so that mixed-signedness operands
/// never meet in a plain `<`.
pub const CAST_HEADER: &str = r#"#ifndef NARROWFIX_SAFE_INT_CAST_H
#define NARROWFIX_SAFE_INT_CAST_H

#include <limits>
#include <stdexcept>
#include <type_traits>

namespace safe_int_cast_detail {

template <typename A, typename B>
constexpr bool cmp_less(A a, B b, std::true_type /* same signedness */) {
    return a < b;
}

template <typename A, typename B>
constexpr bool cmp_less_mixed(A a, B b, std::true_type /* A signed */) {
    return a < 0 || static_cast<typename std::make_unsigned<A>::type>(a) < b;
}

template <typename A, typename B>
constexpr bool cmp_less_mixed(A a, B b, std::false_type /* B signed */) {
    return b >= 0 && a < static_cast<typename std::make_unsigned<B>::type>(b);
}

template <typename A, typename B>
constexpr bool cmp_less(A a, B b, std::false_type /* mixed */) {
    return cmp_less_mixed(a, b, std::integral_constant<bool, std::is_signed<A>::value>());
}

template <typename A, typename B>
constexpr bool cmp_less(A a, B b) {
    return cmp_less(a, b,
                    std::integral_constant<bool, std::is_signed<A>::value == std::is_signed<B>::value>());
}

}  // namespace safe_int_cast_detail

template <typename To, typename From>
To safe_int_cast(From value) {
    static_assert(std::is_integral<To>::value && std::is_integral<From>::value,
                  "safe_int_cast converts between integer types");
    if (safe_int_cast_detail::cmp_less(std::numeric_limits<To>::max(), value) ||
        safe_int_cast_detail::cmp_less(value, std::numeric_limits<To>::min())) {
        throw std::runtime_error("safe_int_cast: value out of range");
    }
    return static_cast<To>(value);
}

#endif
"#;

/// Writes the header into `dir` unless an identical copy is present.
/// The write goes through a temporary file and a rename.
pub fn ensure_cast_utility(dir: &Path) -> Result<PathBuf, PatchError> {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let target = dir.join(CAST_HEADER_NAME);
    if fs::read_to_string(&target).is_ok_and(|t| t == CAST_HEADER) {
        return Ok(target);
    }
    let tmp = dir.join(format!(
        ".{CAST_HEADER_NAME}.{}.{}.tmp",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let io = |e: std::io::Error| PatchError::Io(e.to_string());
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(CAST_HEADER.as_bytes()).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, &target).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io(e)
    })?;
    Ok(target)
}

/// Include spelling of `header` as seen from `file`.
pub fn include_path(file: &Path, header: &Path) -> String {
    let from: Vec<Component> = file.parent().map(|p| p.components().collect()).unwrap_or_default();
    let to: Vec<Component> = header.components().collect();
    let common = from.iter().zip(&to).take_while(|(a, b)| a == b).count();
    let mut parts: Vec<String> = vec!["..".to_string(); from.len() - common];
    parts.extend(to[common..].iter().map(|c| c.as_os_str().to_string_lossy().into_owned()));
    parts.join("/")
}

/// A pure-insertion hunk adding `#include "<spelling>"` after the last
/// leading `#include`, or `None` when the file already includes the header.
pub fn include_hunk(file_text: &str, spelling: &str) -> Option<Hunk> {
    let lines = split_lines(file_text);
    let name = Path::new(spelling).file_name()?.to_string_lossy().into_owned();
    let mut last_include = None;
    for (i, (l, _)) in lines.iter().enumerate() {
        let t = l.trim_start();
        if t.starts_with("#include") || t.starts_with("# include") {
            if t.contains(&name) {
                return None;
            }
            last_include = Some(i);
        }
    }
    let eol = lines.first().map(|l| l.1).filter(|e| !e.is_empty()).unwrap_or("\n").to_string();
    let line = format!("#include \"{spelling}\"");
    Some(match last_include {
        Some(i) if lines[i].1.is_empty() => Hunk {
            anchor_line: i as u32 + 1,
            removed: vec![lines[i].0.to_string()],
            added: vec![lines[i].0.to_string(), line],
            context_before: Vec::new(),
            removed_eol: vec![String::new()],
            added_eol: vec![eol, String::new()],
        },
        Some(i) => Hunk {
            anchor_line: i as u32 + 2,
            removed: Vec::new(),
            added: vec![line],
            context_before: vec![lines[i].0.to_string()],
            removed_eol: Vec::new(),
            added_eol: vec![eol],
        },
        None => Hunk {
            anchor_line: 1,
            removed: Vec::new(),
            added: vec![line],
            context_before: Vec::new(),
            removed_eol: Vec::new(),
            added_eol: vec![eol],
        },
    })
}
