//! Positional "zipping" of two rankings into one compound ranking.

use std::collections::HashSet;

use crate::error::{Error, Result};
pub use crate::ranking::{RankedDoc, Ranking, Source};

/// Interleaves `primary` and `secondary` position by position, starting with
/// `primary`. A document already emitted is skipped; the skip uses up that
/// list's turn at the current position. Stops once `k` documents are emitted
/// or both lists are exhausted, so an exhausted list lets the other fill the
/// remaining slots.
///
/// ```
/// use comprank::fusion::{zip_merge, Ranking, Source};
///
/// let a = Ranking::from_docs("q", ["a", "b", "c", "d"], Source::Cort);
/// let b = Ranking::from_docs("q", ["e", "c", "f", "a"], Source::Bm25);
/// let fused = zip_merge(&a, &b, 6).unwrap();
/// assert_eq!(fused.docs().collect::<Vec<_>>(), ["a", "e", "b", "c", "f", "d"]);
/// ```
///
/// Output scores are synthetic, `1 / position`, so the result can be
/// written as a run file.
pub fn zip_merge(primary: &Ranking, secondary: &Ranking, k: usize) -> Result<Ranking> {
    if k == 0 {
        return Err(Error::invalid("fused ranking size must be at least 1"));
    }
    let mut seen: HashSet<&str> = HashSet::with_capacity(k);
    let mut out = Ranking::new(primary.query.clone());
    let depth = primary.len().max(secondary.len());
    'zip: for pos in 0..depth {
        for list in [primary, secondary] {
            let Some(item) = list.items.get(pos) else {
                continue;
            };
            if !seen.insert(item.doc.as_str()) {
                continue;
            }
            out.items.push(RankedDoc {
                doc: item.doc.clone(),
                score: 1.0 / (out.items.len() + 1) as f64,
                source: Source::Fused,
            });
            if out.items.len() == k {
                break 'zip;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(docs: &[&str]) -> Ranking {
        Ranking::from_docs("q", docs.iter().copied(), Source::External)
    }

    fn ids(r: &Ranking) -> Vec<&str> {
        r.docs().collect()
    }

    #[test]
    fn worked_example() {
        let fused = zip_merge(&r(&["a", "b", "c", "d"]), &r(&["e", "c", "f", "a"]), 6).unwrap();
        assert_eq!(ids(&fused), ["a", "e", "b", "c", "f", "d"]);
        assert!(fused.is_score_sorted());
        assert!(fused.items.iter().all(|i| i.source == Source::Fused));
    }

    #[test]
    fn empty_secondary_truncates_primary() {
        let fused = zip_merge(&r(&["a", "b", "c"]), &r(&[]), 2).unwrap();
        assert_eq!(ids(&fused), ["a", "b"]);
    }

    #[test]
    fn identical_inputs() {
        let a = r(&["x", "y", "z", "w"]);
        assert_eq!(ids(&zip_merge(&a, &a, 3).unwrap()), ["x", "y", "z"]);
    }

    #[test]
    fn exhausted_list_lets_other_fill() {
        let fused = zip_merge(&r(&["a"]), &r(&["b", "c", "d"]), 10).unwrap();
        assert_eq!(ids(&fused), ["a", "b", "c", "d"]);
    }

    #[test]
    fn zero_k_rejected() {
        assert!(zip_merge(&r(&["a"]), &r(&["b"]), 0).is_err());
    }
}
