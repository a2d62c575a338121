//! Rule-based symbolization of spoken navigation guidance.
//!
//! A transcript goes through four stages:
//!
//! 1. [`tokenize`] lowercases and strips punctuation.
//! 2. [`Lang2Sym::detect_affect_spans`] marks hesitations (fillers),
//!    uncertainty (hedges) and speech repairs (cue words between two
//!    directional words) using fixed lexicons.
//! 3. [`Lang2Sym::apply_repairs`] deletes the directional clause a repair
//!    cue retracts.
//! 4. [`Lang2Sym::symbolize_traced`] turns the surviving words into
//!    `U/D/L/R` symbols and [`Lang2Sym::score_guidance`] discounts the
//!    symbols each affect span governs.
//!
//! Clauses are token runs separated by `and` / `then`. Repair and
//! uncertainty spans govern the clause that contains them; a hesitation
//! governs the clause of the first symbol produced after it.

mod corpus;
mod symbolize;

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::config::{AffectConfig, Config};
use crate::guidance::{DirectionalSymbol, ScoredGuidance};

pub use corpus::{
    evaluate_corpus, load_corpus, parse_corpus, CorpusDiff, CorpusEntry, CorpusError, CorpusReport,
};
pub use symbolize::TracedSymbol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AffectKind {
    Repair,
    Hesitation,
    Uncertainty,
}

/// A half-open token range `[token_start, token_end)` carrying one disfluency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AffectSpan {
    pub kind: AffectKind,
    pub token_start: usize,
    pub token_end: usize,
}

impl AffectSpan {
    pub fn new(kind: AffectKind, token_start: usize, token_end: usize) -> Self {
        assert!(token_start < token_end, "empty affect span");
        Self {
            kind,
            token_start,
            token_end,
        }
    }

    pub fn range(&self) -> Range<usize> {
        self.token_start..self.token_end
    }

    fn contains(&self, i: usize) -> bool {
        self.range().contains(&i)
    }
}

/// Tokens left after repairs, with the index each one had in the original stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Repaired {
    pub tokens: Vec<String>,
    pub origin: Vec<usize>,
    pub warnings: Vec<RepairWarning>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RepairWarning {
    /// The repair span had no directional clause before it and was ignored.
    NoPrecedingClause { span: AffectSpan },
}

/// Everything derived from one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedGuidance {
    pub tokens: Vec<String>,
    pub spans: Vec<AffectSpan>,
    pub repaired: Repaired,
    pub symbols: Vec<TracedSymbol>,
    pub guidance: ScoredGuidance,
}

impl ParsedGuidance {
    pub fn has_direction(&self) -> bool {
        !self.guidance.is_empty()
    }
}

/// Splits text into lowercase word tokens.
///
/// Characters other than letters and digits are dropped, except hyphens
/// that join two word characters (`no-no`).
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let chars: Vec<char> = raw.chars().flat_map(|c| c.to_lowercase()).collect();
            let mut token = String::with_capacity(chars.len());
            for (i, &c) in chars.iter().enumerate() {
                if c.is_alphanumeric() {
                    token.push(c);
                } else if c == '-' {
                    let before = token.chars().last().is_some_and(|p| p.is_alphanumeric());
                    let after = chars[i + 1..]
                        .iter()
                        .find(|c| c.is_alphanumeric() || **c == '-')
                        .is_some_and(|c| c.is_alphanumeric());
                    if before && after {
                        token.push('-');
                    }
                }
            }
            (!token.is_empty()).then_some(token)
        })
        .collect()
}

pub(crate) fn is_conjunction(token: &str) -> bool {
    matches!(token, "and" | "then")
}

fn phrase_lexicon(entries: &[String]) -> Vec<Vec<String>> {
    let mut phrases: Vec<Vec<String>> = entries
        .iter()
        .map(|e| tokenize(e))
        .filter(|p| !p.is_empty())
        .collect();
    // longest match first
    phrases.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    phrases.dedup();
    phrases
}

/// The guidance parser, configured with affect factors and lexicons.
#[derive(Debug, Clone)]
pub struct Lang2Sym {
    a_rep: f64,
    a_hes: f64,
    a_unc: f64,
    corridor_run: usize,
    l_max: usize,
    fillers: Vec<Vec<String>>,
    hedges: Vec<Vec<String>>,
    repair_cues: Vec<Vec<String>>,
}

impl Default for Lang2Sym {
    fn default() -> Self {
        Self::from_config(&Config::default())
    }
}

impl Lang2Sym {
    pub fn new(affect: &AffectConfig, l_max: usize) -> Self {
        Self {
            a_rep: affect.a_rep,
            a_hes: affect.a_hes,
            a_unc: affect.a_unc,
            corridor_run: affect.corridor_run,
            l_max,
            fillers: phrase_lexicon(&affect.fillers),
            hedges: phrase_lexicon(&affect.hedges),
            repair_cues: phrase_lexicon(&affect.repair_cues),
        }
    }

    pub fn from_config(config: &Config) -> Self {
        Self::new(&config.affect, config.env.l_max)
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn factor(&self, kind: AffectKind) -> f64 {
        match kind {
            AffectKind::Repair => self.a_rep,
            AffectKind::Hesitation => self.a_hes,
            AffectKind::Uncertainty => self.a_unc,
        }
    }

    /// Finds disfluency spans. Adjacent matches of one kind merge into a single span.
    pub fn detect_affect_spans(&self, tokens: &[String]) -> Vec<AffectSpan> {
        let directional: Vec<bool> = tokens
            .iter()
            .enumerate()
            .map(|(i, _)| symbolize::is_directional_word(tokens, i))
            .collect();
        let mut spans = Vec::new();
        for (kind, lexicon) in [
            (AffectKind::Hesitation, &self.fillers),
            (AffectKind::Uncertainty, &self.hedges),
            (AffectKind::Repair, &self.repair_cues),
        ] {
            let mut matches: Vec<Range<usize>> = Vec::new();
            let mut i = 0;
            while i < tokens.len() {
                match match_phrase(tokens, i, lexicon) {
                    Some(len) => {
                        let range = i..i + len;
                        let keep = kind != AffectKind::Repair
                            || (directional[..range.start].iter().any(|&d| d)
                                && directional[range.end..].iter().any(|&d| d));
                        if keep {
                            match matches.last_mut() {
                                Some(last) if last.end == range.start => last.end = range.end,
                                _ => matches.push(range.clone()),
                            }
                        }
                        i = range.end;
                    }
                    None => i += 1,
                }
            }
            spans.extend(
                matches
                    .into_iter()
                    .map(|r| AffectSpan::new(kind, r.start, r.end)),
            );
        }
        spans.sort_by_key(|s| (s.token_start, s.kind));
        spans
    }

    /// Deletes, for each repair span, the directional clause right before it.
    pub fn apply_repairs(&self, tokens: &[String], spans: &[AffectSpan]) -> Repaired {
        let mut deleted = vec![false; tokens.len()];
        let mut warnings = Vec::new();
        let boundary = |i: usize, deleted: &[bool]| {
            is_conjunction(&tokens[i])
                || deleted[i]
                || spans
                    .iter()
                    .any(|s| s.kind != AffectKind::Uncertainty && s.contains(i))
        };
        let mut repairs: Vec<&AffectSpan> = spans
            .iter()
            .filter(|s| s.kind == AffectKind::Repair)
            .collect();
        repairs.sort_by_key(|s| s.token_start);
        for span in repairs {
            let mut end = span.token_start.min(tokens.len());
            while end > 0 && boundary(end - 1, &deleted) {
                end -= 1;
            }
            let mut start = end;
            while start > 0 && !boundary(start - 1, &deleted) {
                start -= 1;
            }
            let has_direction = (start..end).any(|i| symbolize::is_directional_word(tokens, i));
            if start == end || !has_direction {
                warnings.push(RepairWarning::NoPrecedingClause { span: *span });
                continue;
            }
            deleted[start..end].iter_mut().for_each(|d| *d = true);
        }
        let (tokens, origin) = tokens
            .iter()
            .enumerate()
            .filter(|(i, _)| !deleted[*i])
            .map(|(i, t)| (t.clone(), i))
            .unzip();
        Repaired {
            tokens,
            origin,
            warnings,
        }
    }

    /// Symbols for the given tokens, truncated to `l_max`.
    pub fn symbolize(&self, tokens: &[String]) -> Vec<DirectionalSymbol> {
        self.symbolize_traced(tokens)
            .into_iter()
            .map(|t| t.symbol)
            .collect()
    }

    /// Symbols with the token positions that produced them.
    pub fn symbolize_traced(&self, tokens: &[String]) -> Vec<TracedSymbol> {
        let mut symbols = symbolize::symbolize(tokens, self.corridor_run);
        symbols.truncate(self.l_max);
        symbols
    }

    /// Scores symbols (positions in the same token space as `spans`).
    ///
    /// Each symbol starts at 1.0 and is multiplied by the factor of every
    /// span that governs its clause.
    pub fn score_guidance(&self, symbols: &[TracedSymbol], spans: &[AffectSpan]) -> ScoredGuidance {
        let mut confidences = vec![1.0; symbols.len()];
        for span in spans {
            if let Some(clause) = governed_clause(symbols, span) {
                for (c, s) in confidences.iter_mut().zip(symbols) {
                    if s.clause == clause {
                        *c *= self.factor(span.kind);
                    }
                }
            }
        }
        ScoredGuidance::new(symbols.iter().map(|s| s.symbol).collect(), confidences)
    }

    /// Runs the whole pipeline on one utterance.
    pub fn parse(&self, text: &str) -> ParsedGuidance {
        let tokens = tokenize(text);
        let spans = self.detect_affect_spans(&tokens);
        let repaired = self.apply_repairs(&tokens, &spans);
        let symbols: Vec<TracedSymbol> = self
            .symbolize_traced(&repaired.tokens)
            .into_iter()
            .map(|s| s.remap(&repaired.origin))
            .collect();
        let surviving: BTreeSet<usize> = repaired.origin.iter().copied().collect();
        let live_spans: Vec<AffectSpan> = spans
            .iter()
            .filter(|s| s.range().any(|i| surviving.contains(&i)))
            .copied()
            .collect();
        let guidance = self.score_guidance(&symbols, &live_spans);
        ParsedGuidance {
            tokens,
            spans,
            repaired,
            symbols,
            guidance,
        }
    }
}

fn match_phrase(tokens: &[String], at: usize, lexicon: &[Vec<String>]) -> Option<usize> {
    lexicon
        .iter()
        .find(|phrase| {
            tokens.len() - at >= phrase.len() && tokens[at..at + phrase.len()] == phrase[..]
        })
        .map(|p| p.len())
}

fn governed_clause(symbols: &[TracedSymbol], span: &AffectSpan) -> Option<Range<usize>> {
    let following = || {
        symbols
            .iter()
            .find(|s| s.anchor >= span.token_end)
            .map(|s| s.clause.clone())
    };
    match span.kind {
        AffectKind::Hesitation => following(),
        AffectKind::Repair | AffectKind::Uncertainty => symbols
            .iter()
            .find(|s| s.clause.contains(&span.token_start))
            .map(|s| s.clause.clone())
            .or_else(following),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use DirectionalSymbol::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            toks("Turn left and go straight"),
            ["turn", "left", "and", "go", "straight"]
        );
        assert!(toks("").is_empty());
        assert_eq!(
            toks("umm no-no take a right"),
            ["umm", "no-no", "take", "a", "right"]
        );
        assert_eq!(toks("  Left,  then RIGHT!  "), ["left", "then", "right"]);
        assert_eq!(toks("-left- no--no"), ["left", "no-no"]);
        assert!(toks(" ... ").is_empty());
    }

    #[test]
    fn spans_for_repair_example() {
        let p = Lang2Sym::default();
        let spans =
            p.detect_affect_spans(&toks("Take a right uhh I mean take a left and go straight"));
        assert_eq!(
            spans,
            vec![
                AffectSpan::new(AffectKind::Hesitation, 3, 4),
                AffectSpan::new(AffectKind::Repair, 4, 6)
            ]
        );
    }

    #[test]
    fn no_spans_for_fluent_guidance() {
        let p = Lang2Sym::default();
        assert!(p
            .detect_affect_spans(&toks("Go straight and take the second left"))
            .is_empty());
    }

    #[test]
    fn hedge_span() {
        let p = Lang2Sym::default();
        assert_eq!(
            p.detect_affect_spans(&toks("probably go left")),
            vec![AffectSpan::new(AffectKind::Uncertainty, 0, 1)]
        );
        assert_eq!(
            p.detect_affect_spans(&toks("go left I think")),
            vec![AffectSpan::new(AffectKind::Uncertainty, 2, 4)]
        );
    }

    #[test]
    fn repair_cue_needs_directions_on_both_sides() {
        let p = Lang2Sym::default();
        assert!(p.detect_affect_spans(&toks("no just go left")).is_empty());
        assert!(p.detect_affect_spans(&toks("go left no")).is_empty());
        assert_eq!(
            p.detect_affect_spans(&toks("go straight no no take a left")),
            vec![AffectSpan::new(AffectKind::Repair, 2, 4)]
        );
    }

    #[test]
    fn repair_example_reduces_to_left_straight() {
        let p = Lang2Sym::default();
        let parsed = p.parse("Take a right uhh I mean take a left and go straight");
        assert_eq!(parsed.guidance.symbols(), &[L, U]);
        assert!(parsed.repaired.warnings.is_empty());
    }

    #[test]
    fn double_no_repair() {
        let p = Lang2Sym::default();
        assert_eq!(
            p.parse("go straight no no take a left").guidance.symbols(),
            &[L]
        );
    }

    #[test]
    fn repairs_identity_without_repair_spans() {
        let p = Lang2Sym::default();
        let tokens = toks("umm go left and maybe right");
        let spans = p.detect_affect_spans(&tokens);
        let r = p.apply_repairs(&tokens, &spans);
        assert_eq!(r.tokens, tokens);
        assert_eq!(r.origin, (0..tokens.len()).collect::<Vec<_>>());
    }

    #[test]
    fn repair_without_clause_warns() {
        let p = Lang2Sym::default();
        let tokens = toks("sorry go left");
        let span = AffectSpan::new(AffectKind::Repair, 0, 1);
        let r = p.apply_repairs(&tokens, &[span]);
        assert_eq!(r.tokens, tokens);
        assert_eq!(r.warnings, vec![RepairWarning::NoPrecedingClause { span }]);
    }

    #[test]
    fn chained_repairs() {
        let p = Lang2Sym::default();
        assert_eq!(
            p.parse("left no right no straight").guidance.symbols(),
            &[U]
        );
    }

    #[test]
    fn disfluent_turn_scores_below_straight() {
        let p = Lang2Sym::default();
        let g = p
            .parse("Go straight at the intersection and take the next left, and umm no-no take a right")
            .guidance;
        assert_eq!(g.symbols(), &[U, R]);
        let c = g.confidences();
        assert!(c[0] > c[1], "{c:?}");
        assert_eq!(c[0], 1.0);
        assert_eq!(c[1], 0.5 * 0.75);
    }

    #[test]
    fn fluent_guidance_scores_one() {
        let p = Lang2Sym::default();
        let g = p.parse("go straight and take the second left").guidance;
        assert_eq!(g.confidences(), &[1.0, 1.0, 1.0]);
        assert_eq!(g.tau_h(), 1.0);
    }

    #[test]
    fn hesitation_governs_following_clause() {
        let p = Lang2Sym::default();
        let g = p.parse("Go straight and err take the second left").guidance;
        assert_eq!(g.symbols(), &[U, U, L]);
        assert_eq!(g.confidences(), &[1.0, 0.5, 0.5]);
        assert!((g.tau_h() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn uncertainty_governs_containing_clause() {
        let p = Lang2Sym::default();
        let g = p
            .parse("go straight and then I think take a right")
            .guidance;
        assert_eq!(g.symbols(), &[U, R]);
        assert_eq!(g.confidences(), &[1.0, 0.5]);
        let g = p.parse("probably go left").guidance;
        assert_eq!(g.confidences(), &[0.5]);
    }

    #[test]
    fn factors_stack_per_span() {
        let p = Lang2Sym::default();
        let g = p.parse("maybe umm go left").guidance;
        assert_eq!(g.confidences(), &[0.25]);
    }

    #[test]
    fn hedge_in_retracted_clause_is_dropped() {
        let p = Lang2Sym::default();
        let g = p.parse("I think go left no go right").guidance;
        assert_eq!(g.symbols(), &[R]);
        assert_eq!(g.confidences(), &[0.75]);
    }

    #[test]
    fn empty_symbols_give_zero_tau() {
        let p = Lang2Sym::default();
        let g = p.parse("hello there umm").guidance;
        assert!(g.is_empty());
        assert_eq!(g.tau_h(), 0.0);
        assert_eq!(p.parse("").guidance.tau_h(), 0.0);
    }

    #[test]
    fn length_capped() {
        let p = Lang2Sym::default();
        let g = p
            .parse("take the fifth left and then the third right")
            .guidance;
        assert_eq!(g.len(), 5);
    }
}
