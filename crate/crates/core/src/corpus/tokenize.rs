const PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '"', '(', ')', '[', ']'];

/// Lowercases, splits on whitespace, and separates the characters
/// `.,!?;:"()[]` into standalone tokens. Apostrophes stay inside tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut current = String::new();
        for ch in chunk.chars() {
            if PUNCTUATION.contains(&ch) {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(ch.to_string());
            } else {
                current.extend(ch.to_lowercase());
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

pub fn is_punctuation(token: &str) -> bool {
    let mut chars = token.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if PUNCTUATION.contains(&c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn question_from_figure_example() {
        assert_eq!(
            tokenize("Where does Sam marry Rosie?"),
            ["where", "does", "sam", "marry", "rosie", "?"]
        );
    }

    #[test]
    fn empty_and_apostrophes() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \n\t").is_empty());
        assert_eq!(tokenize("don't Stop."), ["don't", "stop", "."]);
    }

    #[test]
    fn brackets_and_quotes_split() {
        assert_eq!(
            tokenize("(He said: \"Go!\")"),
            ["(", "he", "said", ":", "\"", "go", "!", "\"", ")"]
        );
    }

    #[test]
    fn punctuation_detection() {
        assert!(is_punctuation("."));
        assert!(!is_punctuation("a"));
        assert!(!is_punctuation(".."));
    }
}
