use std::sync::LazyLock;

use regex::Regex;

use crate::text::py_split;

struct Rule {
    re: Regex,
    rep: &'static str,
}

// Symbols and punctuation outside letters, digits, '.', ',', '-' and '\''.
static RULES: LazyLock<[Rule; 4]> = LazyLock::new(|| {
    let rule = |pat: &str, rep| Rule { re: Regex::new(pat).expect("static pattern"), rep };
    [
        rule(r"([\x7B-\x7E\x5B-\x60\x20-\x26\x28-\x2B\x3A-\x40/])", " ${1} "),
        rule(r"([^0-9])([.,])", "${1} ${2} "),
        rule(r"([.,])([^0-9])", " ${1} ${2}"),
        rule(r"([0-9])(-)", "${1} ${2} "),
    ]
});

/// Tokenizes with the mteval-v13a rules. Case is preserved.
///
/// ```
/// use dragoman::metrics::tokenize_13a;
/// assert_eq!(tokenize_13a("Hello, world!"), ["Hello", ",", "world", "!"]);
/// assert_eq!(tokenize_13a("3.5"), ["3.5"]);
/// ```
pub fn tokenize_13a(text: &str) -> Vec<String> {
    py_split(&normalize_13a(text)).map(str::to_owned).collect()
}

/// The 13a tokenized line with tokens joined by single spaces.
pub fn normalize_13a(text: &str) -> String {
    let mut line = text.replace("<skipped>", "").replace("-\n", "").replace('\n', " ");
    if line.contains('&') {
        line = line.replace("&quot;", "\"").replace("&amp;", "&").replace("&lt;", "<").replace("&gt;", ">");
    }
    let mut line = format!(" {line} ");
    for rule in RULES.iter() {
        line = rule.re.replace_all(&line, rule.rep).into_owned();
    }
    py_split(&line).collect::<Vec<_>>().join(" ")
}
