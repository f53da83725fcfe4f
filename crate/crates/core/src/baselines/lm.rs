//! Embedding-similarity chunker: cut when the cosine similarity of two
//! consecutive word vectors drops below a threshold.

use super::{masked_tagseq, BaselineError};
use crate::corpus::{OMask, Sentence, Tag, TagSeq};
use crate::embeddings::{cosine, Provider};

pub fn lm_chunk(
    provider: &Provider,
    sentence: &Sentence,
    tau: f64,
    o_mask: &OMask,
) -> Result<TagSeq, BaselineError> {
    let x = provider.embed(sentence)?;
    let mut tags = Vec::with_capacity(sentence.len());
    for i in 0..sentence.len() {
        let boundary = i == 0 || cosine(x.row(i - 1), x.row(i)) < tau;
        tags.push(if boundary { Tag::B } else { Tag::I });
    }
    Ok(masked_tagseq(tags, o_mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::write_embedding_text;
    use ndarray::array;

    fn sentence(words: &[&str]) -> Sentence {
        Sentence::from_words("0", words)
    }

    #[test]
    fn tau_below_minus_one_yields_single_chunk() {
        let p = Provider::Hashed { d: 8, seed: 1 };
        let s = sentence(&["a", "b", "c", "d"]);
        let tags = lm_chunk(&p, &s, -2.0, &OMask::new()).unwrap();
        assert_eq!(tags.tags(), &[Tag::B, Tag::I, Tag::I, Tag::I]);
    }

    #[test]
    fn tau_above_one_yields_singletons() {
        let p = Provider::Hashed { d: 8, seed: 1 };
        let s = sentence(&["a", "b", "c"]);
        let tags = lm_chunk(&p, &s, 2.0, &OMask::new()).unwrap();
        assert_eq!(tags.tags(), &[Tag::B, Tag::B, Tag::B]);
    }

    #[test]
    fn identical_neighbors_stay_joined_at_mid_tau() {
        let entries = vec![("0".to_string(), array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])];
        let p = Provider::from_embedding_text(&write_embedding_text(&entries), 2).unwrap();
        let s = sentence(&["x", "x", "y"]);
        let tags = lm_chunk(&p, &s, 0.5, &OMask::new()).unwrap();
        // cosine(x0,x1)=1 >= 0.5 so no cut; cosine(x1,x2)=0 < 0.5 cuts.
        assert_eq!(tags.tags(), &[Tag::B, Tag::I, Tag::B]);
    }
}
