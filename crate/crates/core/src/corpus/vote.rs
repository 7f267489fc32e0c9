use super::{Annotation, Polarity, Span};

/// Annotator id carried by aggregated annotations.
pub const MAJORITY_ANNOTATOR: &str = "majority";

#[derive(Clone, Copy, PartialEq, Eq)]
enum Vote {
    Outside,
    Opinion(Polarity),
}

fn vote_at(a: &Annotation, token: usize) -> (Vote, bool) {
    a.spans
        .iter()
        .find(|s| s.start <= token && token < s.end)
        .map_or((Vote::Outside, false), |s| (Vote::Opinion(s.polarity), s.start == token))
}

/// Token-level plurality vote over `{O, POS, NEG}`, merged back into spans.
///
/// Ties involving `O` resolve to `O`; a POS/NEG tie resolves to NEG.
/// Consecutive winners of one polarity form a single span unless a strict
/// majority of the annotators voting for that polarity start a new span at
/// the token, so identical inputs with abutting spans are reproduced.
pub fn majority_vote(annotations: &[Annotation], len: usize) -> Annotation {
    let mut spans: Vec<Span> = Vec::new();
    let mut open: Option<Span> = None;
    for t in 0..len {
        let votes: Vec<(Vote, bool)> = annotations.iter().map(|a| vote_at(a, t)).collect();
        let count = |v: Vote| votes.iter().filter(|(x, _)| *x == v).count();
        let (o, pos, neg) = (
            count(Vote::Outside),
            count(Vote::Opinion(Polarity::Pos)),
            count(Vote::Opinion(Polarity::Neg)),
        );
        let winner = if o >= pos && o >= neg {
            None
        } else if neg >= pos {
            Some(Polarity::Neg)
        } else {
            Some(Polarity::Pos)
        };
        match winner {
            None => {
                spans.extend(open.take());
            }
            Some(p) => {
                let voters: Vec<bool> = votes
                    .iter()
                    .filter(|(v, _)| *v == Vote::Opinion(p))
                    .map(|(_, begins)| *begins)
                    .collect();
                let begins = voters.iter().filter(|b| **b).count() * 2 > voters.len();
                match &mut open {
                    Some(s) if s.polarity == p && !begins => s.end = t + 1,
                    _ => {
                        spans.extend(open.take());
                        open = Some(Span::new(t, t + 1, p));
                    }
                }
            }
        }
    }
    spans.extend(open);
    Annotation::new(MAJORITY_ANNOTATOR, spans)
}
