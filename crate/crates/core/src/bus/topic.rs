use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::BusError;

fn valid_segments(s: &str) -> bool {
    !s.is_empty()
        && s.split('.')
            .all(|seg| !seg.is_empty() && seg.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_'))
}

/// Dot-separated topic name; segments match `[a-z0-9_]+`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Topic(Arc<str>);

impl Topic {
    pub fn new(name: &str) -> Result<Topic, BusError> {
        if valid_segments(name) {
            Ok(Topic(name.into()))
        } else {
            Err(BusError::InvalidTopic(name.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for Topic {
    type Err = BusError;
    fn from_str(s: &str) -> Result<Self, BusError> {
        Topic::new(s)
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An exact topic, `prefix.*` (any topic with at least one more segment
/// after `prefix`), or `*` (everything).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TopicPattern(Arc<str>);

impl TopicPattern {
    pub fn new(pattern: &str) -> Result<TopicPattern, BusError> {
        let ok = pattern == "*"
            || match pattern.strip_suffix(".*") {
                Some(prefix) => valid_segments(prefix),
                None => valid_segments(pattern),
            };
        if ok {
            Ok(TopicPattern(pattern.into()))
        } else {
            Err(BusError::InvalidPattern(pattern.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn matches(&self, topic: &Topic) -> bool {
        let p = &*self.0;
        let t = topic.as_str();
        if p == "*" {
            return true;
        }
        match p.strip_suffix('*') {
            Some(prefix) => t.len() > prefix.len() && t.starts_with(prefix),
            None => p == t,
        }
    }
}

impl FromStr for TopicPattern {
    type Err = BusError;
    fn from_str(s: &str) -> Result<Self, BusError> {
        TopicPattern::new(s)
    }
}

impl fmt::Display for TopicPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Topic {
        Topic::new(s).unwrap()
    }

    #[test]
    fn topic_grammar() {
        for ok in ["a", "workorder.completed", "adif.ready", "x_1.y2"] {
            assert!(Topic::new(ok).is_ok(), "{ok}");
        }
        for bad in ["", ".", "a.", ".a", "a..b", "A.b", "a-b", "a.*", "é"] {
            assert!(Topic::new(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn wildcard_semantics() {
        let p = TopicPattern::new("workorder.*").unwrap();
        assert!(p.matches(&t("workorder.completed")));
        assert!(p.matches(&t("workorder.assigned.dp")));
        assert!(!p.matches(&t("workorder")));
        assert!(!p.matches(&t("adif.ready")));
        assert!(!p.matches(&t("workorders.x")));
        assert!(TopicPattern::new("*").unwrap().matches(&t("adif.ready")));
        let exact = TopicPattern::new("adif.ready").unwrap();
        assert!(exact.matches(&t("adif.ready")) && !exact.matches(&t("adif.ready.x")));
        for bad in ["", "a*", "*.a", "a.*.b", "a.**", "a.b*"] {
            assert!(TopicPattern::new(bad).is_err(), "{bad}");
        }
    }
}
