use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{tokenize, EmbeddingTable};
use crate::error::{Error, Result};

/// Rewrites a one- or two-token question pattern into replacement tokens.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstitutionRule {
    pub pattern: Vec<String>,
    pub replacement: Vec<String>,
}

impl std::fmt::Display for SubstitutionRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} -> {}", self.pattern.join(" "), self.replacement.join(" "))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RuleSet {
    pub rules: Vec<SubstitutionRule>,
    /// Rules dropped during validation, with the reason.
    pub dropped: Vec<(SubstitutionRule, String)>,
}

/// Parses `pattern tokens -> replacement tokens` lines; `#` starts a comment.
pub fn parse_rules(text: &str) -> Result<Vec<SubstitutionRule>> {
    let mut rules = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let loc = || format!("line {}", idx + 1);
        let (lhs, rhs) = line
            .split_once("->")
            .ok_or_else(|| Error::parse(loc(), format!("missing '->' in {raw:?}")))?;
        let pattern = tokenize(lhs);
        let replacement = tokenize(rhs);
        if pattern.is_empty() || pattern.len() > 2 {
            return Err(Error::parse(loc(), "pattern must have one or two tokens"));
        }
        if replacement.is_empty() {
            return Err(Error::parse(loc(), "replacement is empty"));
        }
        rules.push(SubstitutionRule { pattern, replacement });
    }
    Ok(rules)
}

/// Keeps only rules whose replacement tokens all have pretrained vectors.
pub fn validate_rules(rules: Vec<SubstitutionRule>, table: &EmbeddingTable) -> RuleSet {
    let mut set = RuleSet::default();
    for rule in rules {
        if let Some(oov) = rule.replacement.iter().find(|t| !table.contains(t)) {
            let reason = format!("replacement token {oov:?} has no embedding");
            log::warn!("dropping rule '{rule}': {reason}");
            set.dropped.push((rule, reason));
        } else {
            set.rules.push(rule);
        }
    }
    set
}

pub fn load_rules(path: &Path, table: &EmbeddingTable) -> Result<RuleSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(validate_rules(parse_rules(&text)?, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_rule_and_comments() {
        let rules = parse_rules("# header\nmarry -> wed  # trailing\n\n").unwrap();
        assert_eq!(
            rules,
            vec![SubstitutionRule {
                pattern: vec!["marry".into()],
                replacement: vec!["wed".into()],
            }]
        );
    }

    #[test]
    fn malformed_lines_are_errors() {
        assert!(parse_rules("marry wed").is_err());
        assert!(parse_rules(" -> wed").is_err());
        assert!(parse_rules("a b c -> d").is_err());
        assert!(parse_rules("a ->").is_err());
    }

    #[test]
    fn oov_replacement_dropped_with_named_reason() {
        let mut t = EmbeddingTable::new(1, 0);
        t.insert("wed", vec![0.0]).unwrap();
        let rules = parse_rules("marry -> wed\nfriend -> buddy\n").unwrap();
        let set = validate_rules(rules, &t);
        assert_eq!(set.rules.len(), 1);
        assert_eq!(set.dropped.len(), 1);
        assert_eq!(set.dropped[0].0.to_string(), "friend -> buddy");
        assert!(set.dropped[0].1.contains("buddy"));
    }
}
