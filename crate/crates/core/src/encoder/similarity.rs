//! Angular similarity, the triplet margin hinge and the in-batch loss, with
//! analytic gradients with respect to the representations.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub(crate) fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

fn cosine(u: &[f64], v: &[f64]) -> Result<(f64, f64, f64)> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector("angular similarity of a zero vector".into()));
    }
    Ok(((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0), nu, nv))
}

/// `1 − arccos(cos(u, v)) / π`, in `[0, 1]`.
///
/// The angle is evaluated as `2·atan2(‖û − v̂‖, ‖û + v̂‖)`, which equals
/// `arccos` of the clamped cosine but stays exact at 0 and π where `arccos`
/// loses half of the available precision.
pub fn angular_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    let (_, nu, nv) = cosine(u, v)?;
    Ok(1.0 - angle(u, v, nu, nv) / PI)
}

fn angle(u: &[f64], v: &[f64], nu: f64, nv: f64) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a / nu, b / nv);
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

/// Similarity plus its gradients with respect to `u` and `v`.
///
/// At `|cos| = 1` the derivative of `arccos` is unbounded; the gradient is
/// reported as zero there.
pub(crate) fn angular_similarity_grad(u: &[f64], v: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (c, nu, nv) = cosine(u, v)?;
    let sim = 1.0 - angle(u, v, nu, nv) / PI;
    let s = 1.0 - c * c;
    if s <= f64::EPSILON {
        return Ok((sim, vec![0.0; u.len()], vec![0.0; v.len()]));
    }
    let dsim_dc = 1.0 / (PI * s.sqrt());
    let inv = 1.0 / (nu * nv);
    let gu = u
        .iter()
        .zip(v)
        .map(|(&a, &b)| dsim_dc * (b * inv - c * a / (nu * nu)))
        .collect();
    let gv = u
        .iter()
        .zip(v)
        .map(|(&a, &b)| dsim_dc * (a * inv - c * b / (nv * nv)))
        .collect();
    Ok((sim, gu, gv))
}

/// `max(0, sim(q, d⁻) − sim(q, d⁺) + ε)`.
pub fn triplet_loss(query: &[f64], positive: &[f64], negative: &[f64], margin: f64) -> Result<f64> {
    let pos = angular_similarity(query, positive)?;
    let neg = angular_similarity(query, negative)?;
    Ok((neg - pos + margin).max(0.0))
}

/// Projected representations of one training triple.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleReps {
    pub query: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

/// In-batch loss. For every query `i`, the hinge is summed against all `b`
/// negatives (its own included) and against the positives of every other
/// triple in the batch.
pub fn batch_loss(batch: &[TripleReps], margin: f64) -> Result<f64> {
    Ok(batch_loss_with_grads(batch, margin)?.0)
}

/// Gradients of [`batch_loss`] with respect to each representation.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RepGrads {
    pub query: Vec<Vec<f64>>,
    pub positive: Vec<Vec<f64>>,
    pub negative: Vec<Vec<f64>>,
}

pub(crate) fn batch_loss_with_grads(batch: &[TripleReps], margin: f64) -> Result<(f64, RepGrads)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let zeros = |f: fn(&TripleReps) -> &Vec<f64>| -> Vec<Vec<f64>> {
        batch.iter().map(|t| vec![0.0; f(t).len()]).collect()
    };
    let mut grads = RepGrads {
        query: zeros(|t| &t.query),
        positive: zeros(|t| &t.positive),
        negative: zeros(|t| &t.negative),
    };
    let mut loss = 0.0;
    for (i, triple) in batch.iter().enumerate() {
        let (pos_sim, gq_pos, gp_pos) = angular_similarity_grad(&triple.query, &triple.positive)?;
        let others = (0..batch.len())
            .map(|j| (false, j))
            .chain((0..batch.len()).filter(|&k| k != i).map(|k| (true, k)));
        for (is_positive, j) in others {
            let doc = if is_positive {
                &batch[j].positive
            } else {
                &batch[j].negative
            };
            let (neg_sim, gq_neg, gd_neg) = angular_similarity_grad(&triple.query, doc)?;
            let hinge = neg_sim - pos_sim + margin;
            if hinge <= 0.0 {
                continue;
            }
            loss += hinge;
            add(&mut grads.query[i], &gq_neg, 1.0);
            add(&mut grads.query[i], &gq_pos, -1.0);
            add(&mut grads.positive[i], &gp_pos, -1.0);
            let target = if is_positive {
                &mut grads.positive[j]
            } else {
                &mut grads.negative[j]
            };
            add(target, &gd_neg, 1.0);
        }
    }
    Ok((loss, grads))
}

fn add(acc: &mut [f64], g: &[f64], scale: f64) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += scale * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_identities() {
        let u = [1.0, 2.0, -0.5];
        assert!((angular_similarity(&u, &u).unwrap() - 1.0).abs() < 1e-9);
        assert!((angular_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap() - 0.5).abs() < 1e-12);
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        assert!(angular_similarity(&u, &neg).unwrap().abs() < 1e-9);
        assert!(angular_similarity(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(angular_similarity(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn triplet_hinge_examples() {
        // Vectors in the plane with chosen angles give exact similarities.
        let at = |sim: f64| {
            let theta = (1.0 - sim) * PI;
            [theta.cos(), theta.sin()]
        };
        let q = [1.0, 0.0];
        let l = triplet_loss(&q, &at(0.8), &at(0.75), 0.1).unwrap();
        assert!((l - 0.05).abs() < 1e-12);
        assert_eq!(triplet_loss(&q, &at(0.9), &at(0.7), 0.1).unwrap(), 0.0);
        let same = at(0.6);
        assert!((triplet_loss(&q, &same, &same, 0.1).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn batch_of_one_is_plain_triplet() {
        let t = TripleReps {
            query: vec![0.3, -0.2, 0.9],
            positive: vec![0.1, 0.5, 0.2],
            negative: vec![0.4, -0.1, 0.8],
        };
        let expected = triplet_loss(&t.query, &t.positive, &t.negative, 0.1).unwrap();
        assert_eq!(batch_loss(&[t], 0.1).unwrap(), expected);
    }

    #[test]
    fn equal_similarities_give_six_margins_for_two_triples() {
        let v = vec![0.6, 0.8];
        let t = TripleReps {
            query: v.clone(),
            positive: v.clone(),
            negative: v.clone(),
        };
        let l = batch_loss(&[t.clone(), t], 0.1).unwrap();
        assert!((l - 0.6).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_rejected() {
        assert!(batch_loss(&[], 0.1).is_err());
    }
}
