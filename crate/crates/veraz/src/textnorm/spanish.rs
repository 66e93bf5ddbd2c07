//! Light suffix-stripping stemmer for Spanish.
//!
//! A deliberately small, fully documented rule table rather than a full
//! Snowball implementation: plural, gerund, participle, and the most
//! common derivational suffixes. Rules are tried longest suffix first;
//! the first rule that matches and leaves a stem of at least
//! `MIN_STEM_CHARS` characters is applied, and at most one rule is
//! applied per token. Lengths are counted in characters, not bytes, so
//! accented stems are measured correctly.

const MIN_STEM_CHARS: usize = 3;

/// Suffix table, ordered longest first. Order within a length class is
/// irrelevant: two equal-length suffixes cannot both match one token.
/// Each entry is (suffix, replacement).
const RULES: &[(&str, &str)] = &[
    ("amientos", ""),
    ("imientos", ""),
    ("amiento", ""),
    ("imiento", ""),
    ("aciones", ""),
    ("uciones", ""),
    ("adoras", ""),
    ("adores", ""),
    ("ancias", ""),
    ("encias", ""),
    ("idades", ""),
    ("ación", ""),
    ("acion", ""),
    ("adora", ""),
    ("ancia", ""),
    ("antes", ""),
    ("encia", ""),
    ("ibles", ""),
    ("ables", ""),
    ("iendo", ""),
    ("ismos", ""),
    ("istas", ""),
    ("mente", ""),
    ("ución", ""),
    ("ucion", ""),
    ("yendo", ""),
    ("able", ""),
    ("ador", ""),
    ("adas", ""),
    ("ados", ""),
    ("ando", ""),
    ("ante", ""),
    ("ible", ""),
    ("idad", ""),
    ("idas", ""),
    ("idos", ""),
    ("ismo", ""),
    ("ista", ""),
    ("ivas", ""),
    ("ivos", ""),
    ("osas", ""),
    ("osos", ""),
    ("ada", ""),
    ("ado", ""),
    ("ida", ""),
    ("ido", ""),
    ("iva", ""),
    ("ivo", ""),
    ("osa", ""),
    ("oso", ""),
    ("ces", "z"),
    ("es", ""),
    ("s", ""),
];

/// Stem a lowercase Spanish token by the light rule table.
pub fn spanish_light_stem(token: &str) -> String {
    let token_chars = token.chars().count();
    for (suffix, repl) in RULES {
        if !token.ends_with(suffix) {
            continue;
        }
        let suffix_chars = suffix.chars().count();
        let stem_chars = token_chars - suffix_chars + repl.chars().count();
        if stem_chars < MIN_STEM_CHARS {
            continue;
        }
        let cut = token.len() - suffix.len();
        let mut out = String::with_capacity(cut + repl.len());
        out.push_str(&token[..cut]);
        out.push_str(repl);
        return out;
    }
    token.to_string()
}
