//! The single normal form shared by metadata entries and alt-texts.

use unicode_normalization::UnicodeNormalization;

/// NFKC, then Unicode default case folding, then NFKC again (folding can
/// leave a string outside NFKC). Whitespace runs collapse to one ASCII space
/// and the result is trimmed, so entries stay one-per-line serializable.
pub fn normalize(s: &str) -> String {
    let nfkc: String = s.nfkc().collect();
    let folded = caseless::default_case_fold_str(&nfkc);
    let renorm: String = folded.nfkc().collect();
    let mut out = String::with_capacity(renorm.len());
    for word in renorm.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_and_case_collapse() {
        assert_eq!(normalize("ＡＢＣ"), "abc");
        assert_eq!(normalize("Straße"), "strasse");
        assert_eq!(normalize("  Cat \t Food\n"), "cat food");
    }

    #[test]
    fn idempotent_on_mixed_scripts() {
        for s in [
            "Komm MIT uns",
            "東京タワー",
            "ﾃｽﾄ",
            "مرحبا بالعالم",
            "ǅemal 🐱",
        ] {
            let once = normalize(s);
            assert_eq!(normalize(&once), once);
        }
    }
}
