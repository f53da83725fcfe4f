//! Line-oriented grammar files:
//!
//! ```text
//! # comment
//! ROOT A 0.5
//! BIN  A B C 0.25
//! LEX  T word 1.0
//! ```
//!
//! The writer emits rules in sorted symbol order with 17 significant digits,
//! enough to round-trip every f64 exactly; zero-probability rules are
//! omitted.

use super::{GrammarError, Pcfg};
use crate::util::fmt_sig17;

pub fn write_grammar(g: &Pcfg) -> String {
    let mut out = String::new();
    for s in 0..g.n_symbols() {
        let p = g.root_prob(s);
        if p > 0.0 {
            out.push_str(&format!("ROOT {} {}\n", g.symbol_name(s), fmt_sig17(p)));
        }
    }
    for a in 0..g.n_nonterminals() {
        for b in 0..g.n_symbols() {
            for c in 0..g.n_symbols() {
                let p = g.binary_prob(a, b, c);
                if p > 0.0 {
                    out.push_str(&format!(
                        "BIN {} {} {} {}\n",
                        g.symbol_name(a),
                        g.symbol_name(b),
                        g.symbol_name(c),
                        fmt_sig17(p)
                    ));
                }
            }
        }
    }
    for t in g.n_nonterminals()..g.n_symbols() {
        for w in 0..g.n_terminals() {
            let p = g.lexical_prob(t, w);
            if p > 0.0 {
                out.push_str(&format!(
                    "LEX {} {} {}\n",
                    g.symbol_name(t),
                    g.terminals()[w],
                    fmt_sig17(p)
                ));
            }
        }
    }
    out
}

/// Parses and validates a grammar file. `#` starts a comment line; blank
/// lines are ignored.
pub fn read_grammar(text: &str) -> Result<Pcfg, GrammarError> {
    let mut root: Vec<(String, f64)> = Vec::new();
    let mut binary: Vec<(String, String, String, f64)> = Vec::new();
    let mut lexical: Vec<(String, String, f64)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = || GrammarError::ParseLine { line: lineno + 1, got: raw.to_string() };
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["ROOT", a, p] => {
                root.push(((*a).to_string(), p.parse().map_err(|_| parse_err())?));
            }
            ["BIN", a, b, c, p] => {
                binary.push((
                    (*a).to_string(),
                    (*b).to_string(),
                    (*c).to_string(),
                    p.parse().map_err(|_| parse_err())?,
                ));
            }
            ["LEX", t, w, p] => {
                lexical.push(((*t).to_string(), (*w).to_string(), p.parse().map_err(|_| parse_err())?));
            }
            _ => return Err(parse_err()),
        }
    }

    let root_ref: Vec<(&str, f64)> = root.iter().map(|(a, p)| (a.as_str(), *p)).collect();
    let bin_ref: Vec<(&str, &str, &str, f64)> =
        binary.iter().map(|(a, b, c, p)| (a.as_str(), b.as_str(), c.as_str(), *p)).collect();
    let lex_ref: Vec<(&str, &str, f64)> =
        lexical.iter().map(|(t, w, p)| (t.as_str(), w.as_str(), *p)).collect();
    let g = Pcfg::from_rules(&root_ref, &bin_ref, &lex_ref)?;
    g.validate()?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::random_pcfg;

    #[test]
    fn round_trips_random_grammar_exactly() {
        let g = random_pcfg(42, 2, 3, 4);
        let text = write_grammar(&g);
        let back = read_grammar(&text).unwrap();
        assert_eq!(g, back);
        // Writing again is a fixed point.
        assert_eq!(write_grammar(&back), text);
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let text = "# a grammar\n\nROOT T 1\nLEX T w 1\n";
        let g = read_grammar(text).unwrap();
        assert_eq!(g.n_preterminals(), 1);
        assert_eq!(g.n_terminals(), 1);
    }

    #[test]
    fn bad_lines_carry_line_numbers() {
        let err = read_grammar("ROOT T 1\nLEX T w one\n").unwrap_err();
        assert_eq!(err, GrammarError::ParseLine { line: 2, got: "LEX T w one".to_string() });
        let err = read_grammar("WHAT is this\n").unwrap_err();
        assert!(matches!(err, GrammarError::ParseLine { line: 1, .. }));
    }

    #[test]
    fn invalid_mass_rejected_on_read() {
        let err = read_grammar("ROOT T 1\nLEX T w 0.5\n").unwrap_err();
        assert!(matches!(err, GrammarError::Mass { .. }));
    }
}
