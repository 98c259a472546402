//! Clause-chain search over error annotations, instance texts and run
//! languages.
//!
//! Clauses are combined strictly left to right with equal precedence:
//! `A OR B AND NOT C` means `((A ∪ B) \ C)`, never `A ∪ (B \ C)`.

mod like;
mod parse;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{ErrorAnnotation, Instance, LanguagePair};

pub use like::{like_match, LikePattern};
pub use parse::{parse_query, ParseError, ParseErrorKind};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Conjunction {
    #[default]
    #[serde(rename = "AND", alias = "and")]
    And,
    #[serde(rename = "OR", alias = "or")]
    Or,
    #[serde(rename = "AND_NOT", alias = "AND NOT", alias = "and_not", alias = "and not")]
    AndNot,
}

impl fmt::Display for Conjunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Conjunction::And => "AND",
            Conjunction::Or => "OR",
            Conjunction::AndNot => "AND NOT",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Field {
    #[serde(rename = "error.type")]
    ErrorType,
    #[serde(rename = "error.scale")]
    ErrorScale,
    #[serde(rename = "error.explanation")]
    ErrorExplanation,
    #[serde(rename = "text.source")]
    TextSource,
    #[serde(rename = "text.prediction")]
    TextPrediction,
    #[serde(rename = "text.reference")]
    TextReference,
    #[serde(rename = "lang.source")]
    LangSource,
    #[serde(rename = "lang.target")]
    LangTarget,
}

impl Field {
    pub const ALL: [Field; 8] = [
        Field::ErrorType,
        Field::ErrorScale,
        Field::ErrorExplanation,
        Field::TextSource,
        Field::TextPrediction,
        Field::TextReference,
        Field::LangSource,
        Field::LangTarget,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::ErrorType => "error.type",
            Field::ErrorScale => "error.scale",
            Field::ErrorExplanation => "error.explanation",
            Field::TextSource => "text.source",
            Field::TextPrediction => "text.prediction",
            Field::TextReference => "text.reference",
            Field::LangSource => "lang.source",
            Field::LangTarget => "lang.target",
        }
    }

    pub fn from_name(name: &str) -> Option<Field> {
        Field::ALL.into_iter().find(|f| f.name().eq_ignore_ascii_case(name))
    }

    pub fn is_error(self) -> bool {
        matches!(self, Field::ErrorType | Field::ErrorScale | Field::ErrorExplanation)
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchClause {
    /// Ignored on the first clause.
    #[serde(default)]
    pub conjunction: Conjunction,
    pub field: Field,
    pub pattern: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchQuery {
    #[serde(default)]
    pub clauses: Vec<SearchClause>,
}

impl SearchQuery {
    pub fn match_all() -> Self {
        SearchQuery::default()
    }
}

impl fmt::Display for SearchQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, clause) in self.clauses.iter().enumerate() {
            if i > 0 {
                write!(f, " {} ", clause.conjunction)?;
            }
            write!(f, "{} ~ '{}'", clause.field, clause.pattern.replace('\'', "''"))?;
        }
        Ok(())
    }
}

/// Everything a query can look at for one instance.
#[derive(Debug, Clone, Copy)]
pub struct SearchDoc<'a> {
    pub instance: &'a Instance,
    pub annotations: &'a [ErrorAnnotation],
    pub lang: &'a LanguagePair,
}

/// Outcome of matching a query over a list of documents.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchOutcome {
    /// Positions of matching documents, ascending.
    pub matched: Vec<usize>,
    /// Annotation ids on matching documents that satisfy a non-negated
    /// `error.*` clause.
    pub matched_error_ids: BTreeSet<String>,
}

struct CompiledClause {
    conjunction: Conjunction,
    field: Field,
    pattern: LikePattern,
}

impl CompiledClause {
    fn annotation_matches(&self, ann: &ErrorAnnotation) -> bool {
        match self.field {
            Field::ErrorType => self.pattern.matches(&ann.error_type),
            Field::ErrorScale => self.pattern.matches(ann.severity.as_str()),
            Field::ErrorExplanation => self.pattern.matches(&ann.explanation),
            _ => false,
        }
    }

    fn matches(&self, doc: &SearchDoc<'_>) -> bool {
        let text = |t: Option<&str>| t.is_some_and(|t| self.pattern.matches(t));
        match self.field {
            Field::ErrorType | Field::ErrorScale | Field::ErrorExplanation => {
                doc.annotations.iter().any(|a| self.annotation_matches(a))
            }
            Field::TextSource => text(doc.instance.source_text.as_deref()),
            Field::TextPrediction => text(Some(&doc.instance.prediction_text)),
            Field::TextReference => text(doc.instance.reference_text.as_deref()),
            Field::LangSource => self.pattern.matches(&doc.lang.source_lang),
            Field::LangTarget => self.pattern.matches(&doc.lang.target_lang),
        }
    }
}

/// Evaluates `query` over `docs`.
pub fn match_documents(query: &SearchQuery, docs: &[SearchDoc<'_>]) -> MatchOutcome {
    let clauses: Vec<CompiledClause> = query
        .clauses
        .iter()
        .map(|c| CompiledClause {
            conjunction: c.conjunction,
            field: c.field,
            pattern: LikePattern::new(&c.pattern),
        })
        .collect();

    let mut outcome = MatchOutcome::default();
    for (pos, doc) in docs.iter().enumerate() {
        let mut hit = true;
        for (i, clause) in clauses.iter().enumerate() {
            if i == 0 {
                hit = clause.matches(doc);
                continue;
            }
            hit = match clause.conjunction {
                Conjunction::And => hit && clause.matches(doc),
                Conjunction::Or => hit || clause.matches(doc),
                Conjunction::AndNot => hit && !clause.matches(doc),
            };
        }
        if !hit {
            continue;
        }
        outcome.matched.push(pos);
        let highlighting = clauses
            .iter()
            .enumerate()
            .filter(|(i, c)| c.field.is_error() && (*i == 0 || c.conjunction != Conjunction::AndNot));
        for (_, clause) in highlighting {
            for ann in doc.annotations.iter().filter(|a| clause.annotation_matches(a)) {
                outcome.matched_error_ids.insert(ann.id.clone());
            }
        }
    }
    outcome
}
