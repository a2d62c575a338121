use std::ops::Range;

use crate::guidance::DirectionalSymbol;

use super::is_conjunction;

/// A symbol plus where it came from: `anchor` is the token that produced
/// it and `clause` the token range of its clause.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TracedSymbol {
    pub symbol: DirectionalSymbol,
    pub anchor: usize,
    pub clause: Range<usize>,
}

impl TracedSymbol {
    /// Maps positions through `origin` (repaired index -> original index).
    pub(crate) fn remap(self, origin: &[usize]) -> Self {
        Self {
            symbol: self.symbol,
            anchor: origin[self.anchor],
            clause: origin[self.clause.start]..origin[self.clause.end - 1] + 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Item {
    Straight(usize),
    Back(usize),
    Turn {
        symbol: DirectionalSymbol,
        at: usize,
        ordinal: usize,
    },
    Locative {
        symbol: DirectionalSymbol,
        at: usize,
    },
}

fn ordinal(token: &str) -> Option<usize> {
    Some(match token {
        "first" | "1st" | "next" => 1,
        "second" | "2nd" => 2,
        "third" | "3rd" => 3,
        "fourth" | "4th" => 4,
        "fifth" | "5th" => 5,
        _ => return None,
    })
}

fn prev(tokens: &[String], i: usize, back: usize) -> Option<&str> {
    i.checked_sub(back).map(|j| tokens[j].as_str())
}

fn turn_symbol(tokens: &[String], i: usize) -> Option<DirectionalSymbol> {
    match tokens[i].as_str() {
        "left" => Some(DirectionalSymbol::L),
        "right" => {
            let idiom_after = matches!(
                tokens.get(i + 1).map(String::as_str),
                Some("away" | "now" | "here" | "there" | "after" | "before" | "behind")
            );
            let idiom_before = matches!(prev(tokens, i, 1), Some("all" | "thats" | "yes"));
            (!idiom_after && !idiom_before).then_some(DirectionalSymbol::R)
        }
        _ => None,
    }
}

fn is_straight(token: &str) -> bool {
    matches!(token, "straight" | "forward" | "ahead")
}

fn is_back(tokens: &[String], i: usize) -> bool {
    match tokens[i].as_str() {
        "back" => prev(tokens, i, 1) != Some("come"),
        "around" => matches!(prev(tokens, i, 1), Some("turn" | "go" | "head" | "back")),
        _ => false,
    }
}

/// True when token `i` carries directional content in context.
pub(crate) fn is_directional_word(tokens: &[String], i: usize) -> bool {
    turn_symbol(tokens, i).is_some() || is_straight(&tokens[i]) || is_back(tokens, i)
}

fn corridor_end(tokens: &[String], i: usize) -> bool {
    if tokens[i] != "end" || tokens.get(i + 1).map(String::as_str) != Some("of") {
        return false;
    }
    let mut j = i + 2;
    if tokens.get(j).map(String::as_str) == Some("the") {
        j += 1;
    }
    matches!(
        tokens.get(j).map(String::as_str),
        Some("corridor" | "hall" | "hallway" | "corridors")
    )
}

/// "right at the second intersection"
fn trailing_ordinal(tokens: &[String], i: usize) -> Option<usize> {
    let word = |k: usize| tokens.get(i + k).map(String::as_str);
    if word(1) != Some("at") || word(2) != Some("the") {
        return None;
    }
    let n = word(3).and_then(ordinal)?;
    matches!(
        word(4),
        Some("intersection" | "corner" | "junction" | "crossing" | "turn" | "opening")
    )
    .then_some(n)
}

fn is_locative(tokens: &[String], i: usize) -> bool {
    matches!(prev(tokens, i, 1), Some("your" | "the")) && prev(tokens, i, 2) == Some("on")
}

fn clause_items(tokens: &[String], range: Range<usize>) -> (Vec<Item>, Option<usize>) {
    let mut items: Vec<Item> = Vec::new();
    let mut run = None;
    for i in range {
        if corridor_end(tokens, i) {
            run.get_or_insert(i);
            continue;
        }
        if let Some(symbol) = turn_symbol(tokens, i) {
            if is_locative(tokens, i) {
                items.push(Item::Locative { symbol, at: i });
            } else {
                let n = prev(tokens, i, 1)
                    .and_then(ordinal)
                    .or_else(|| trailing_ordinal(tokens, i))
                    .unwrap_or(1);
                items.push(Item::Turn {
                    symbol,
                    at: i,
                    ordinal: n,
                });
            }
        } else if is_straight(&tokens[i]) {
            // "straight ahead" is one command, "straight, straight" is two
            let same_phrase = matches!(items.last(), Some(Item::Straight(j)) if *j + 1 == i && tokens[*j] != tokens[i]);
            if !same_phrase {
                items.push(Item::Straight(i));
            }
        } else if is_back(tokens, i) && !matches!(items.last(), Some(Item::Back(_))) {
            items.push(Item::Back(i));
        }
    }
    (items, run)
}

/// Applies the symbolization rules:
///
/// * `left`/`right` -> `L`/`R`; `straight`/`forward`/`ahead` -> `U`;
///   `back`, `turn around` -> `D`; all in utterance order.
/// * An ordinal turn ("the second left") passes `n - 1` gateways first:
///   `U` repeated `n - 1` times, then the turn.
/// * "end of the corridor" emits `corridor_run` `U`s, replacing the
///   clause's own straight symbol, before the clause's turn.
/// * A locative ("on your right") yields one final symbol when nothing
///   directional follows it and its clause holds no turn.
pub(crate) fn symbolize(tokens: &[String], corridor_run: usize) -> Vec<TracedSymbol> {
    let mut clauses = Vec::new();
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        if is_conjunction(t) {
            if start < i {
                clauses.push(start..i);
            }
            start = i + 1;
        }
    }
    if start < tokens.len() {
        clauses.push(start..tokens.len());
    }

    let parsed: Vec<(Range<usize>, Vec<Item>, Option<usize>)> = clauses
        .into_iter()
        .map(|c| {
            let (items, run) = clause_items(tokens, c.clone());
            (c, items, run)
        })
        .collect();
    let last_command = parsed
        .iter()
        .flat_map(|(_, items, _)| items)
        .filter_map(|item| match item {
            Item::Straight(i) | Item::Back(i) | Item::Turn { at: i, .. } => Some(*i),
            Item::Locative { .. } => None,
        })
        .max();

    let mut out = Vec::new();
    for (clause, items, run) in parsed {
        let has_turn = items.iter().any(|i| matches!(i, Item::Turn { .. }));
        let push = |out: &mut Vec<TracedSymbol>, symbol, anchor| {
            out.push(TracedSymbol {
                symbol,
                anchor,
                clause: clause.clone(),
            })
        };
        let emit_run = |out: &mut Vec<TracedSymbol>, at: usize| {
            for _ in 0..corridor_run {
                push(out, DirectionalSymbol::U, at);
            }
        };
        let mut run_pending = run;
        for item in items {
            match item {
                Item::Straight(at) => match run_pending.take() {
                    Some(_) => emit_run(&mut out, at),
                    None => push(&mut out, DirectionalSymbol::U, at),
                },
                Item::Back(at) => push(&mut out, DirectionalSymbol::D, at),
                Item::Turn {
                    symbol,
                    at,
                    ordinal,
                } => {
                    if let Some(r) = run_pending.take() {
                        emit_run(&mut out, r);
                    }
                    for _ in 1..ordinal {
                        push(&mut out, DirectionalSymbol::U, at);
                    }
                    push(&mut out, symbol, at);
                }
                Item::Locative { symbol, at } => {
                    if has_turn || last_command.is_some_and(|c| c > at) {
                        continue;
                    }
                    if let Some(r) = run_pending.take() {
                        emit_run(&mut out, r);
                    }
                    push(&mut out, symbol, at);
                }
            }
        }
        if let Some(r) = run_pending {
            emit_run(&mut out, r);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang2sym::tokenize;
    use DirectionalSymbol::*;

    fn sym(text: &str) -> Vec<DirectionalSymbol> {
        symbolize(&tokenize(text), 2)
            .into_iter()
            .map(|t| t.symbol)
            .collect()
    }

    #[test]
    fn table_rows() {
        assert_eq!(sym("Go straight and take the second left"), [U, U, L]);
        assert_eq!(
            sym("Go forward till the end of the corridor and turn left"),
            [U, U, L]
        );
        assert_eq!(sym("Turn left and go straight"), [L, U]);
        assert_eq!(
            sym("Go straight and take a right towards the kitchen on your right"),
            [U, R]
        );
    }

    #[test]
    fn ordinals() {
        assert_eq!(sym("take the third right"), [U, U, R]);
        assert_eq!(sym("go straight and take the third right"), [U, U, U, R]);
        assert_eq!(sym("take the next left"), [L]);
        assert_eq!(sym("take the 2nd right"), [U, R]);
        assert_eq!(sym("turn right at the second intersection"), [U, R]);
        assert_eq!(sym("straight, straight, then left"), [U, U, L]);
        assert_eq!(sym("go straight ahead"), [U]);
    }

    #[test]
    fn corridor_run_without_straight_word() {
        assert_eq!(sym("at the end of the hallway turn right"), [U, U, R]);
        assert_eq!(sym("walk to the end of the corridor"), [U, U]);
        assert_eq!(
            symbolize(&tokenize("go to the end of the hall then left"), 3).len(),
            4
        );
    }

    #[test]
    fn locatives() {
        assert_eq!(sym("go straight and the office is on your left"), [U, L]);
        assert_eq!(sym("with the window on your left go straight"), [U]);
        assert_eq!(sym("turn right and it is on the right"), [R, R]);
    }

    #[test]
    fn reversal_and_idioms() {
        assert_eq!(sym("turn around and go straight ahead"), [D, U]);
        assert_eq!(sym("go back and turn right"), [D, R]);
        assert_eq!(sym("right away go left"), [L]);
        assert!(sym("hello there").is_empty());
    }

    #[test]
    fn traces_point_at_words() {
        let t = symbolize(&tokenize("go straight and take the second left"), 2);
        assert_eq!(t[0].anchor, 1);
        assert_eq!(t[0].clause, 0..2);
        assert_eq!(t[1].anchor, 6);
        assert_eq!(t[2].clause, 3..7);
    }
}
