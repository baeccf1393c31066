use std::collections::HashMap;

use super::quadruple::TokenQuadruple;
use crate::error::{MpeError, Result};

/// Bijective token ↔ dense index map, indices assigned in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab::default();
        for t in tokens {
            let t = t.into();
            if v.index.contains_key(&t) {
                return Err(MpeError::Data(format!("duplicate vocabulary token '{t}'")));
            }
            v.insert(&t);
        }
        Ok(v)
    }

    pub fn insert(&mut self, token: &str) -> u32 {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), i);
        i
    }

    pub fn index_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        self.tokens.get(index as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// The four vocabularies. Current- and next-role locations are kept apart,
/// unless `shared_locations` is set, in which case both roles use one
/// vocabulary over the union of location tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    pub objects: Vocab,
    pub slots: Vocab,
    pub current: Vocab,
    pub next: Vocab,
    pub shared_locations: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexedQuadruple {
    pub object: u32,
    pub slot: u32,
    pub current: u32,
    pub next: u32,
}

/// A context resolved against a vocabulary; `None` marks an unseen token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodedContext {
    pub object: Option<u32>,
    pub slot: Option<u32>,
    pub current: Option<u32>,
}

impl Vocabulary {
    pub fn slot_token(slot: u32) -> String {
        slot.to_string()
    }

    pub fn encode_context(&self, object: &str, slot: u32, current: &str) -> EncodedContext {
        EncodedContext {
            object: self.objects.index_of(object),
            slot: self.slots.index_of(&Self::slot_token(slot)),
            current: self.current.index_of(current),
        }
    }

    /// Fully indexed form of a quadruple, or `None` if any token is unseen.
    pub fn encode(&self, q: &TokenQuadruple) -> Option<IndexedQuadruple> {
        let ctx = self.encode_context(&q.object, q.slot, &q.current);
        Some(IndexedQuadruple {
            object: ctx.object?,
            slot: ctx.slot?,
            current: ctx.current?,
            next: self.next.index_of(&q.next)?,
        })
    }
}

/// Current location → sorted, duplicate-free list of next locations seen
/// after it in training.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CandidateIndex {
    lists: Vec<Vec<u32>>,
}

impl CandidateIndex {
    pub fn from_lists(mut lists: Vec<Vec<u32>>) -> Self {
        for l in &mut lists {
            l.sort_unstable();
            l.dedup();
        }
        Self { lists }
    }

    pub fn build(n_current: usize, quads: &[IndexedQuadruple]) -> Self {
        let mut lists = vec![Vec::new(); n_current];
        for q in quads {
            lists[q.current as usize].push(q.next);
        }
        Self::from_lists(lists)
    }

    /// Candidates of a current location; empty for an index never seen as current.
    pub fn candidates(&self, current: u32) -> &[u32] {
        self.lists
            .get(current as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn lists(&self) -> &[Vec<u32>] {
        &self.lists
    }

    pub fn n_transitions(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }
}

/// Builds vocabularies and the candidate index from training quadruples and
/// re-expresses them in indices. Validation and test data must be encoded
/// with [`Vocabulary::encode_context`], which flags unseen tokens.
pub fn build_vocab_and_index(
    train: &[TokenQuadruple],
    shared_locations: bool,
) -> Result<(Vocabulary, CandidateIndex, Vec<IndexedQuadruple>)> {
    if train.is_empty() {
        return Err(MpeError::Data("empty training set".into()));
    }
    let mut vocab = Vocabulary {
        shared_locations,
        ..Default::default()
    };
    let mut indexed = Vec::with_capacity(train.len());
    for q in train {
        let object = vocab.objects.insert(&q.object);
        let slot = vocab.slots.insert(&Vocabulary::slot_token(q.slot));
        let (current, next) = if shared_locations {
            (vocab.next.insert(&q.current), vocab.next.insert(&q.next))
        } else {
            (vocab.current.insert(&q.current), vocab.next.insert(&q.next))
        };
        indexed.push(IndexedQuadruple {
            object,
            slot,
            current,
            next,
        });
    }
    if shared_locations {
        vocab.current = vocab.next.clone();
    }
    let index = CandidateIndex::build(vocab.current.len(), &indexed);
    Ok((vocab, index, indexed))
}
