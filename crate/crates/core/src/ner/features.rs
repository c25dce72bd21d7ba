use crate::embedding::Token;

fn affixes(word: &str, n: usize) -> (String, String) {
    let chars: Vec<char> = word.chars().collect();
    let k = n.min(chars.len());
    (chars[..k].iter().collect(), chars[chars.len() - k..].iter().collect())
}

/// Attribute strings for every token position: bias, lowercased word,
/// neighbouring words (or `BOS`/`EOS`), digit/alpha flags, 1-3 character
/// prefixes and suffixes, and capitalization taken from the raw text.
pub fn extract_features(tokens: &[Token]) -> Vec<Vec<String>> {
    let n = tokens.len();
    (0..n)
        .map(|i| {
            let t = &tokens[i];
            let w = &t.surface;
            let mut f = vec!["bias".to_string(), format!("w={w}")];
            if i == 0 {
                f.push("BOS".into());
            } else {
                f.push(format!("w-1={}", tokens[i - 1].surface));
            }
            if i + 1 == n {
                f.push("EOS".into());
            } else {
                f.push(format!("w+1={}", tokens[i + 1].surface));
            }
            if w.chars().all(|c| c.is_ascii_digit()) {
                f.push("isdigit".into());
            }
            if w.chars().any(|c| c.is_ascii_digit()) {
                f.push("hasdigit".into());
            }
            if w.chars().all(char::is_alphabetic) {
                f.push("isalpha".into());
            }
            for k in 1..=3 {
                let (p, s) = affixes(w, k);
                f.push(format!("p{k}={p}"));
                f.push(format!("s{k}={s}"));
            }
            let mut chars = t.raw.chars();
            if chars.next().is_some_and(char::is_uppercase) {
                f.push("initcap".into());
            }
            if t.raw.chars().any(char::is_alphabetic) && t.raw.chars().all(|c| !c.is_lowercase()) {
                f.push("allcaps".into());
            }
            f
        })
        .collect()
}
