use super::scene::{Color, Expression, Relation, Shape};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const NULL_TOKEN: &str = "<null>";
pub const SLOTS: usize = 5;

/// Closed token set: the null token, colours, shapes and relations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<&'static str>,
}

impl Default for Vocab {
    fn default() -> Self {
        let mut tokens = vec![NULL_TOKEN];
        tokens.extend(Color::ALL.iter().map(|c| c.name()));
        tokens.extend(Shape::ALL.iter().map(|s| s.name()));
        tokens.extend(Relation::ALL.iter().map(|r| r.name()));
        Vocab { tokens }
    }
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Result<usize> {
        self.tokens
            .iter()
            .position(|t| *t == token)
            .ok_or_else(|| Error::UnknownToken(token.to_string()))
    }

    pub fn token(&self, id: usize) -> Result<&'static str> {
        self.tokens.get(id).copied().ok_or(Error::Index {
            index: id,
            len: self.tokens.len(),
        })
    }

    /// Token ids in slot order: target colour, target shape, relation,
    /// referent colour, referent shape.
    pub fn encode_ids(&self, e: &Expression) -> Result<[usize; SLOTS]> {
        let words = slot_words(e);
        let mut ids = [0; SLOTS];
        for (id, w) in ids.iter_mut().zip(words) {
            *id = self.id(w)?;
        }
        Ok(ids)
    }
}

pub fn slot_words(e: &Expression) -> [&'static str; SLOTS] {
    let (rc, rs) = match e.referent {
        Some((c, s)) => (c.name(), s.name()),
        None => (NULL_TOKEN, NULL_TOKEN),
    };
    [e.target.0.name(), e.target.1.name(), e.relation.name(), rc, rs]
}

/// Parse the five slot words back into an expression.
pub fn parse_slots(words: &[&str]) -> Result<Expression> {
    let [tc, ts, rel, rc, rs] = words else {
        return Err(Error::Format(format!("expected {SLOTS} slot words, got {}", words.len())));
    };
    let referent = match (*rc, *rs) {
        (NULL_TOKEN, NULL_TOKEN) => None,
        (c, s) => Some((c.parse()?, s.parse()?)),
    };
    Expression::new((tc.parse()?, ts.parse()?), rel.parse()?, referent)
}

/// Concatenate one embedding row per slot from `table: [vocab, d_emb]`.
pub fn encode_expression<T: Scalar>(e: &Expression, vocab: &Vocab, table: &Tensor<T>) -> Result<Tensor<T>> {
    let [rows, d] = table.shape() else {
        return Err(Error::Dimension(format!("embedding table must be 2-D, got {:?}", table.shape())));
    };
    if *rows != vocab.len() {
        return Err(Error::Dimension(format!("table has {rows} rows for {} tokens", vocab.len())));
    }
    let mut out = Vec::with_capacity(SLOTS * d);
    for id in vocab.encode_ids(e)? {
        out.extend_from_slice(&table.data()[id * d..(id + 1) * d]);
    }
    Tensor::new(&[SLOTS * d], out)
}
