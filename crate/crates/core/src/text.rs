//! Text normalization shared by ingest, the matcher and the query engine.

use alloc::string::String;

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Lower-cases, strips diacritics and collapses runs of whitespace.
///
/// `"  Núria   PONS "` becomes `"nuria pons"`.
pub fn fold(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut pending_space = false;
    // NFD would turn `≠` into `=` plus a combining overlay.
    let s = s.replace('≠', "!=");
    for c in s.nfd().filter(|c| !is_combining_mark(*c)) {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.extend(c.to_lowercase());
    }
    out
}

/// Light English-style plural stripping applied to folded word tokens.
///
/// Both lexicon entries and utterances go through the same function, so the
/// stem only has to be consistent, not linguistically exact.
pub fn stem(word: &str) -> String {
    let n = word.chars().count();
    if !word.chars().all(|c| c.is_alphabetic() || c == '\'' || c == '_') {
        return String::from(word);
    }
    if let Some(base) = word.strip_suffix("'s") {
        return String::from(base);
    }
    if n > 4 {
        if let Some(base) = word.strip_suffix("ies") {
            let mut s = String::from(base);
            s.push('y');
            return s;
        }
        if word.ends_with("sses") {
            return String::from(&word[..word.len() - 2]);
        }
    }
    if n > 3
        && word.ends_with('s')
        && !word.ends_with("ss")
        && !word.ends_with("us")
        && !word.ends_with("is")
    {
        return String::from(&word[..word.len() - 1]);
    }
    String::from(word)
}

/// Folds then stems every whitespace-separated word.
pub fn fold_and_stem(s: &str) -> String {
    let folded = fold(s);
    let mut out = String::with_capacity(folded.len());
    for (i, w) in folded.split(' ').enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&stem(w));
    }
    out
}

/// Turns `political_party` into `political party`.
pub fn humanize(name: &str) -> String {
    let replaced: String = name
        .chars()
        .map(|c| if c == '_' || c == '-' { ' ' } else { c })
        .collect();
    fold(&replaced)
}

/// Lookup key for field, composite and group names: `Political_Party`,
/// `political party` and `political parties` share one key.
pub fn name_key(name: &str) -> String {
    fold_and_stem(&humanize(name))
}

/// Lower-case identifier form used in intent and entity names.
pub fn ident(name: &str) -> String {
    let mut out = String::new();
    for c in fold(name).chars() {
        if c.is_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}
