//! Whitespace handling shared by the readers and the metrics.
//!
//! The metrics must split exactly like Python's `str.split()`, which also
//! treats the ASCII information separators U+001C..U+001F as whitespace.

pub(crate) fn is_py_whitespace(c: char) -> bool {
    c.is_whitespace() || ('\u{1c}'..='\u{1f}').contains(&c)
}

pub(crate) fn py_split(s: &str) -> impl Iterator<Item = &str> {
    s.split(is_py_whitespace).filter(|t| !t.is_empty())
}

pub(crate) fn py_rstrip(s: &str) -> &str {
    s.trim_end_matches(is_py_whitespace)
}

pub(crate) fn is_blank(s: &str) -> bool {
    s.chars().all(is_py_whitespace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separators_count_as_whitespace() {
        let toks: Vec<_> = py_split("a\u{1f}b\u{a0}c  d\n").collect();
        assert_eq!(toks, ["a", "b", "c", "d"]);
        assert_eq!(py_rstrip("x \u{1c}"), "x");
        assert!(is_blank(" \t"));
        assert!(!is_blank(" x"));
    }
}
