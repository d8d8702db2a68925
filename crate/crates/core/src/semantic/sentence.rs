//! Triple serialization into token sequences and the masking procedure.

use rand::Rng;

use crate::error::{KirsError, Result};
use crate::kg_data::Triple;

use super::tokenizer::Vocab;

/// A serialized triple: `[CLS] head-tokens relation-tokens tail-tokens [SEP]`
/// with half-open spans over the three components and any masking applied.
#[derive(Clone, Debug, PartialEq)]
pub struct TripleSentence {
    pub token_ids: Vec<u32>,
    pub head_span: (usize, usize),
    pub relation_span: (usize, usize),
    pub tail_span: (usize, usize),
    pub mask_positions: Vec<usize>,
    /// Original token ids at the masked positions.
    pub mask_labels: Vec<u32>,
    /// Ids of the source triple, kept for plane lookup and export pooling.
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
}

impl TripleSentence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Positions eligible for masking: everything between the
    /// classification and separator tokens.
    pub fn interior(&self) -> std::ops::Range<usize> {
        1..self.token_ids.len() - 1
    }
}

/// Serialize a triple's names in head-relation-tail order. When the
/// sequence exceeds `max_len`, the head span is truncated first and the
/// tail span last; the relation span is never cut. Spans keep at least one
/// token each.
pub fn serialize_triple(
    triple: &Triple,
    names: (&str, &str, &str),
    vocab: &Vocab,
    max_len: usize,
) -> Result<TripleSentence> {
    let (head_name, relation_name, tail_name) = names;
    if head_name.trim().is_empty() || relation_name.trim().is_empty() || tail_name.trim().is_empty()
    {
        return Err(KirsError::contract(
            "triple names must be non-empty for serialization",
        ));
    }
    if max_len < 5 {
        return Err(KirsError::contract(
            "sequence budget must fit [CLS] + three spans + [SEP]",
        ));
    }
    let mut head = vocab.tokenize(head_name);
    let relation = vocab.tokenize(relation_name);
    let mut tail = vocab.tokenize(tail_name);
    if head.is_empty() || relation.is_empty() || tail.is_empty() {
        return Err(KirsError::contract(
            "every name must tokenize to at least one piece",
        ));
    }

    let budget = max_len - 2;
    let mut over = (head.len() + relation.len() + tail.len()).saturating_sub(budget);
    while over > 0 && head.len() > 1 {
        head.pop();
        over -= 1;
    }
    while over > 0 && tail.len() > 1 {
        tail.pop();
        over -= 1;
    }
    if over > 0 {
        return Err(KirsError::contract(format!(
            "relation span of {} tokens cannot fit the budget {max_len}",
            relation.len()
        )));
    }

    let mut token_ids = Vec::with_capacity(2 + head.len() + relation.len() + tail.len());
    token_ids.push(vocab.cls());
    let head_span = (token_ids.len(), token_ids.len() + head.len());
    token_ids.extend(&head);
    let relation_span = (token_ids.len(), token_ids.len() + relation.len());
    token_ids.extend(&relation);
    let tail_span = (token_ids.len(), token_ids.len() + tail.len());
    token_ids.extend(&tail);
    token_ids.push(vocab.sep());

    Ok(TripleSentence {
        token_ids,
        head_span,
        relation_span,
        tail_span,
        mask_positions: Vec::new(),
        mask_labels: Vec::new(),
        head: triple.head,
        relation: triple.relation,
        tail: triple.tail,
    })
}

/// Select each interior token independently with probability `rate`; of
/// the selected, 80% become `[MASK]`, 10% a random non-special token, 10%
/// stay unchanged. Labels are recorded for every selected position.
pub fn apply_masking<R: Rng>(
    sentence: &TripleSentence,
    rate: f64,
    vocab: &Vocab,
    rng: &mut R,
) -> Result<TripleSentence> {
    if !(0.0..1.0).contains(&rate) {
        return Err(KirsError::contract(format!(
            "mask rate must be in [0, 1), got {rate}"
        )));
    }
    let mut out = sentence.clone();
    out.mask_positions.clear();
    out.mask_labels.clear();
    let regular = vocab.regular_ids();
    for pos in sentence.interior() {
        if rng.gen::<f64>() >= rate {
            continue;
        }
        out.mask_positions.push(pos);
        out.mask_labels.push(sentence.token_ids[pos]);
        let u: f64 = rng.gen();
        if u < 0.8 {
            out.token_ids[pos] = vocab.mask();
        } else if u < 0.9 {
            out.token_ids[pos] = regular[rng.gen_range(0..regular.len())];
        }
        // else: keep the original token, label still recorded.
    }
    Ok(out)
}
